//! Cayley-Klein representation of a single-pass SU(2) gate.
//!
//! Every lossless single-qubit propagator is
//!
//! ```text
//!         |  a   -b* |
//!     U = |          |         |a|^2 + |b|^2 = 1
//!         |  b    a* |
//! ```
//!
//! Powers of U stay in the same family and have the closed form
//!
//! ```text
//!     a_N = cos(N theta) + i Im(a) r,    b_N = b r,
//!     r   = sin(N theta) / sin(theta),   theta = arccos(Re a)
//! ```
//!
//! where r is the Chebyshev polynomial U_{N-1}(cos theta). Near theta = 0 or
//! pi, sin(theta) must not be computed from Re a alone: 1 - a_r^2 cancels
//! catastrophically there. Unitarity gives it without cancellation,
//! sin^2(theta) = Im(a)^2 + |b|^2, and theta = atan2(sin, cos) stays accurate
//! over the whole range where arccos does not.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norm defect above which a gate is rejected as non-unitary.
pub const UNITARITY_TOL: f64 = 1e-9;

/// Defect below which compose() silently renormalizes its result.
const RENORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum Su2Error {
    #[error("matrix is not unitary: | |a|^2 + |b|^2 - 1 | = {defect:.3e}")]
    NonUnitary { defect: f64 },
    #[error("probability {p} outside [0, 1]")]
    InvalidProbability { p: f64 },
}

/// Rotation angle theta = arccos(Re a), in [0, pi].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theta(f64);

impl Theta {
    pub fn radians(self) -> f64 {
        self.0
    }
}

/// Sign-flip variants of a gate, closed under composition of flips.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateVariant {
    /// U itself.
    Original,
    /// Coupling sign flipped: (a, b) -> (a, -b).
    FlipOmega,
    /// Detuning sign flipped: (a, b) -> (a*, -b*).
    FlipDelta,
    /// Both signs flipped: (a, b) -> (a*, b*).
    FlipBoth,
}

/// Single-pass gate stored as its Cayley-Klein pair (a, b).
///
/// Serializes as the four real components; deserialization goes through
/// make_gate and therefore re-checks unitarity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GateFields", into = "GateFields")]
pub struct Su2Gate {
    a: Complex64,
    b: Complex64,
}

#[derive(Serialize, Deserialize)]
struct GateFields {
    re_a: f64,
    im_a: f64,
    re_b: f64,
    im_b: f64,
}

impl From<Su2Gate> for GateFields {
    fn from(g: Su2Gate) -> Self {
        GateFields {
            re_a: g.a.re,
            im_a: g.a.im,
            re_b: g.b.re,
            im_b: g.b.im,
        }
    }
}

impl TryFrom<GateFields> for Su2Gate {
    type Error = Su2Error;

    fn try_from(f: GateFields) -> Result<Self, Su2Error> {
        make_gate(
            Complex64::new(f.re_a, f.im_a),
            Complex64::new(f.re_b, f.im_b),
        )
    }
}

impl Su2Gate {
    /// The do-nothing gate, a = 1, b = 0.
    pub fn identity() -> Self {
        Su2Gate {
            a: Complex64::new(1.0, 0.0),
            b: Complex64::new(0.0, 0.0),
        }
    }

    pub fn a(&self) -> Complex64 {
        self.a
    }

    pub fn b(&self) -> Complex64 {
        self.b
    }

    /// Transition probability p = |b|^2.
    pub fn p(&self) -> f64 {
        self.b.norm_sqr()
    }

    /// Return probability q = |a|^2.
    pub fn q(&self) -> f64 {
        self.a.norm_sqr()
    }

    /// | |a|^2 + |b|^2 - 1 |, zero for an exactly unitary pair.
    pub fn norm_defect(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr() - 1.0).abs()
    }

    /// Full 2x2 matrix [[a, -b*], [b, a*]], row major.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [[self.a, -self.b.conj()], [self.b, self.a.conj()]]
    }
}

/// Builds a gate from its Cayley-Klein pair, rejecting norm defects above 1e-9.
pub fn make_gate(a: Complex64, b: Complex64) -> Result<Su2Gate, Su2Error> {
    let defect = (a.norm_sqr() + b.norm_sqr() - 1.0).abs();
    if defect > UNITARITY_TOL {
        return Err(Su2Error::NonUnitary { defect });
    }
    Ok(Su2Gate { a, b })
}

/// a = e^{i xi} sqrt(1-p), b = -e^{-i eta} sqrt(p).
pub fn from_probability_and_phases(p: f64, xi: f64, eta: f64) -> Result<Su2Gate, Su2Error> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Su2Error::InvalidProbability { p });
    }
    let a = Complex64::from_polar((1.0 - p).sqrt(), xi);
    let b = -Complex64::from_polar(p.sqrt(), -eta);
    Ok(Su2Gate { a, b })
}

/// Resonant pulse of temporal area A: a = cos(A/2), b = -i sin(A/2).
pub fn resonant_gate(area: f64) -> Su2Gate {
    let half = 0.5 * area;
    Su2Gate {
        a: Complex64::new(half.cos(), 0.0),
        b: Complex64::new(0.0, -half.sin()),
    }
}

/// Constant Rabi drive at coupling omega and detuning delta for time t.
///
/// With W = sqrt(omega^2 + delta^2):
/// a = cos(Wt/2) + i (delta/W) sin(Wt/2), b = -i (omega/W) sin(Wt/2).
/// Reduces to resonant_gate(omega t) at delta = 0 and to a pure phase gate
/// at omega = 0.
pub fn rabi_gate(omega: f64, delta: f64, t: f64) -> Su2Gate {
    let w = omega.hypot(delta);
    if w == 0.0 {
        return Su2Gate::identity();
    }
    let half = 0.5 * w * t;
    let (s, c) = half.sin_cos();
    Su2Gate {
        a: Complex64::new(c, delta / w * s),
        b: Complex64::new(0.0, -omega / w * s),
    }
}

/// Applies a sign-flip variant to the gate.
pub fn variant(g: Su2Gate, v: GateVariant) -> Su2Gate {
    match v {
        GateVariant::Original => g,
        GateVariant::FlipOmega => Su2Gate { a: g.a, b: -g.b },
        GateVariant::FlipDelta => Su2Gate {
            a: g.a.conj(),
            b: -g.b.conj(),
        },
        GateVariant::FlipBoth => Su2Gate {
            a: g.a.conj(),
            b: g.b.conj(),
        },
    }
}

/// Matrix product U2 U1: the gate g1 acts first.
///
/// The result is renormalized only if its norm defect is below 1e-12; larger
/// defects are kept so that downstream drift checks can see them.
pub fn compose(g2: Su2Gate, g1: Su2Gate) -> Su2Gate {
    let a = g2.a * g1.a - g2.b.conj() * g1.b;
    let b = g2.b * g1.a + g2.a.conj() * g1.b;
    let norm = a.norm_sqr() + b.norm_sqr();
    let defect = (norm - 1.0).abs();
    if defect > 0.0 && defect < RENORM_TOL {
        let scale = 1.0 / norm.sqrt();
        return Su2Gate {
            a: a * scale,
            b: b * scale,
        };
    }
    Su2Gate { a, b }
}

/// (cos(n theta), sin(n theta)/sin(theta)), the Chebyshev pair
/// (T_n(cos theta), U_{n-1}(cos theta)).
///
/// x = cos(theta) = Re a; s2 = sin^2(theta) supplied as Im(a)^2 + |b|^2, the
/// cancellation-free complement. s2 = 0 uses the exact theta -> 0 or pi
/// limits (1, n) and ((-1)^n, (-1)^(n-1) n).
pub(crate) fn cheb_pair(x: f64, s2: f64, n: u64) -> (f64, f64) {
    let s = s2.max(0.0).sqrt();
    let nf = n as f64;
    if s == 0.0 {
        if x >= 0.0 {
            return (1.0, nf);
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        return (sign, -sign * nf);
    }
    let theta = s.atan2(x);
    let nt = nf * theta;
    (nt.cos(), nt.sin() / s)
}

/// sin^2(theta) for a gate, from unitarity rather than from Re a.
pub(crate) fn sin2_theta(g: Su2Gate) -> f64 {
    g.a.im * g.a.im + g.b.norm_sqr()
}

/// N-th power of the gate by the Chebyshev closed form.
///
/// power(g, 1) returns g bit for bit; power(g, 0) is the identity. The
/// construction satisfies |a_N|^2 + |b_N|^2 = 1 up to rounding because
/// T_n^2 + (1 - x^2) U_{n-1}^2 = 1 identically.
pub fn power(g: Su2Gate, n: u64) -> Su2Gate {
    match n {
        0 => return Su2Gate::identity(),
        1 => return g,
        _ => {}
    }
    let (t, u) = cheb_pair(g.a.re, sin2_theta(g), n);
    Su2Gate {
        a: Complex64::new(t, g.a.im * u),
        b: g.b * u,
    }
}

/// theta = arccos(Re a), with the argument clamped to [-1, 1].
pub fn theta_of(g: Su2Gate) -> Theta {
    Theta(g.a.re.clamp(-1.0, 1.0).acos())
}

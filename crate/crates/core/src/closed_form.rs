//! Closed-form return and transition probabilities after N passes.
//!
//! Quantum repetition of a gate with theta = arccos(Re a) gives
//!
//! ```text
//!     P_N = p sin^2(N theta) / sin^2(theta),    Q_N = 1 - P_N
//! ```
//!
//! while an incoherent (classical) chain of the same single-pass p gives
//! Q_N = (1 + (1 - 2p)^N) / 2. The quantum form oscillates and amplifies
//! small errors as N^2; the classical form decays monotonically to 1/2.
//! Near the three reference points p = 1, 0, 1/2 the quantum result follows
//! simple leading-order branches, which is what the estimators invert.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::su2::{cheb_pair, sin2_theta, Su2Gate};

#[derive(Debug, Error, PartialEq)]
pub enum ClosedFormError {
    #[error("argument outside domain: {msg}")]
    Domain { msg: String },
}

fn domain_err<T>(msg: impl Into<String>) -> Result<T, ClosedFormError> {
    Err(ClosedFormError::Domain { msg: msg.into() })
}

/// Return/transition probabilities after n_passes applications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub q_return: f64,
    pub p_transfer: f64,
    pub n_passes: u64,
}

impl Populations {
    fn from_p(p: f64, n_passes: u64) -> Self {
        let p_transfer = p.clamp(0.0, 1.0);
        Populations {
            q_return: 1.0 - p_transfer,
            p_transfer,
            n_passes,
        }
    }
}

/// Leading-order regime of an asymptotic expansion around p = 1, 0 or 1/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchLabel {
    LargePEven,
    LargePOdd,
    SmallP,
    Half4k,
    Half4kPlus1,
    Half4kPlus2,
    Half4kPlus3,
}

/// One leading-order branch value together with its regime tag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticBranch {
    pub label: BranchLabel,
    /// Leading-order Q_N; a raw expansion value, accurate only while the
    /// correction term (N^4 eps^2 or N^3 eps^3 depending on branch) is small.
    pub value: f64,
    pub leading_order: &'static str,
}

/// Incoherent chain: Q_N = (1 + (1 - 2p)^N) / 2.
pub fn classical_populations(p: f64, n: u64) -> Result<Populations, ClosedFormError> {
    if !(0.0..=1.0).contains(&p) {
        return domain_err(format!("classical_populations: p = {p} outside [0, 1]"));
    }
    let n_i32 = i32::try_from(n).unwrap_or(i32::MAX);
    let q = 0.5 * (1.0 + (1.0 - 2.0 * p).powi(n_i32));
    Ok(Populations {
        q_return: q,
        p_transfer: 1.0 - q,
        n_passes: n,
    })
}

/// Coherent chain for an arbitrary gate: P_N = p sin^2(N theta) / sin^2(theta).
///
/// Shares the Chebyshev evaluation with su2::power, so the two routes agree
/// even at near-degenerate theta.
pub fn quantum_populations(g: Su2Gate, n: u64) -> Populations {
    let (_, u) = cheb_pair(g.a().re, sin2_theta(g), n);
    Populations::from_p(g.p() * u * u, n)
}

/// Real-a gate (Im a = 0, so theta = arccos(sqrt(1 - p))):
/// Q_N = cos^2(N arccos(sqrt(1 - p))), the Chebyshev form T_N(sqrt(q))^2.
pub fn chebyshev_populations_real_a(p: f64, n: u64) -> Result<Populations, ClosedFormError> {
    if !(0.0..=1.0).contains(&p) {
        return domain_err(format!("chebyshev_populations_real_a: p = {p} outside [0, 1]"));
    }
    let theta = (1.0 - p).sqrt().acos();
    let c = (n as f64 * theta).cos();
    let q = c * c;
    Ok(Populations {
        q_return: q,
        p_transfer: 1.0 - q,
        n_passes: n,
    })
}

/// Gate with real a and purely imaginary b, driven as m_pairs two-pass pairs:
/// the pair collapses to a real-a gate with cos(theta') = 1 - 2p, so
/// Q_{2M} = cos^2(M arccos(1 - 2p)). Equals the real-a form at N = 2M.
pub fn imaginary_b_populations(p: f64, m_pairs: u64) -> Result<Populations, ClosedFormError> {
    if !(0.0..=1.0).contains(&p) {
        return domain_err(format!("imaginary_b_populations: p = {p} outside [0, 1]"));
    }
    let c = (m_pairs as f64 * (1.0 - 2.0 * p).acos()).cos();
    let q = c * c;
    Ok(Populations {
        q_return: q,
        p_transfer: 1.0 - q,
        n_passes: 2 * m_pairs,
    })
}

/// Leading-order Q_N near the reference points.
///
/// p0 selects the expansion: 1.0 means p = 1 - eps, 0.0 means p = eps,
/// 0.5 means p = 1/2 - eps. Valid for |eps| <= 0.05 (and eps >= 0 at the
/// edge points, where p must stay inside [0, 1]).
pub fn asymptotic_populations(
    p0: f64,
    epsilon: f64,
    n: u64,
) -> Result<AsymptoticBranch, ClosedFormError> {
    if epsilon.abs() > 0.05 {
        return domain_err(format!(
            "asymptotic_populations: |eps| = {} exceeds 0.05",
            epsilon.abs()
        ));
    }
    let nf = n as f64;
    if p0 == 1.0 || p0 == 0.0 {
        if epsilon < 0.0 {
            return domain_err("asymptotic_populations: eps < 0 puts p outside [0, 1]");
        }
        let n2e = nf * nf * epsilon;
        return Ok(if p0 == 0.0 {
            AsymptoticBranch {
                label: BranchLabel::SmallP,
                value: 1.0 - n2e,
                leading_order: "1 - N^2 eps",
            }
        } else if n % 2 == 0 {
            AsymptoticBranch {
                label: BranchLabel::LargePEven,
                value: 1.0 - n2e,
                leading_order: "1 - N^2 eps",
            }
        } else {
            AsymptoticBranch {
                label: BranchLabel::LargePOdd,
                value: n2e,
                leading_order: "N^2 eps",
            }
        });
    }
    if p0 == 0.5 {
        let branch = match n % 4 {
            0 => AsymptoticBranch {
                label: BranchLabel::Half4k,
                value: 1.0 - nf * nf * epsilon * epsilon,
                leading_order: "1 - N^2 eps^2",
            },
            1 => AsymptoticBranch {
                label: BranchLabel::Half4kPlus1,
                value: 0.5 + nf * epsilon,
                leading_order: "1/2 + N eps",
            },
            2 => AsymptoticBranch {
                label: BranchLabel::Half4kPlus2,
                value: nf * nf * epsilon * epsilon,
                leading_order: "N^2 eps^2",
            },
            _ => AsymptoticBranch {
                label: BranchLabel::Half4kPlus3,
                value: 0.5 - nf * epsilon,
                leading_order: "1/2 - N eps",
            },
        };
        return Ok(branch);
    }
    domain_err(format!(
        "asymptotic_populations: p0 = {p0} is not one of 1, 0, 1/2"
    ))
}

/// Pass count floor(1 / sqrt(2 eps)) at which an error eps is amplified to a
/// transition probability of order one half. Domain (0, 0.5].
pub fn amplification_passes(epsilon: f64) -> Result<u64, ClosedFormError> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return domain_err(format!(
            "amplification_passes: eps = {epsilon} outside (0, 0.5]"
        ));
    }
    Ok((1.0 / (2.0 * epsilon).sqrt()).floor() as u64)
}

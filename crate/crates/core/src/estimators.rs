//! Recovery of single-pass gate errors from amplified multi-pass signals.
//!
//! All estimators take probabilities, not measurement records, so they can
//! be driven with exact closed-form inputs in tests and with shot estimates
//! from the CLI. The inversions implemented here:
//!
//! * real-a gates: Q_N = cos^2(N arccos sqrt(q)), solved over all candidate
//!   branches with a selection hint,
//! * general gates: the two-pass sum P^{++} + P^{-+} = 4 M^2 eps for p near
//!   one, and the ratio P_4M / P_2M = 2 (1 + cos(2M theta)) which isolates
//!   theta_+ and theta_- separately,
//! * phase gates: the pair sums and products of the small-p expansion, and
//!   the linearized peak formula for the phase error gamma.
//!
//! Every estimator reports a residual (how well the recovered parameters
//! reproduce their inputs through the exact forward formulas) and refuses
//! blind spots with typed errors instead of returning plausible numbers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sequences::{evaluate_fast, pair_sequence, PairKind};
use crate::su2::from_probability_and_phases;

/// Default residual ceiling above which ratio-protocol output is treated as
/// branch-aliased.
pub const RATIO_RESIDUAL_TOL: f64 = 1e-6;

/// Default angular tolerance for matching xi candidates against the
/// tan^2 xi = P^{-+}/P^{++} route.
pub const PHASE_XI_TOL: f64 = 1e-3;

/// Agreement tolerance for the second measurement in the two-point hint.
pub const TWO_POINT_TOL: f64 = 1e-9;

/// Denominator floor for the ratio protocol.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("second measurement consistent with {} candidate branches", candidates.len())]
    Ambiguous { candidates: Vec<f64> },
    #[error("no single-pass probability reproduces the measurements")]
    NoSolution,
    #[error("combined probability {sum:.4} exceeds the small-signal guard {limit}")]
    RegimeViolation { sum: f64, limit: f64 },
    #[error("denominator {which} = {value:.3e} below {DENOMINATOR_FLOOR:.0e}: protocol blind spot")]
    DegenerateDenominator { which: &'static str, value: f64 },
    #[error("inputs do not fit the principal branch (2M theta likely beyond pi); residual {residual:.3e}")]
    BranchAliasing { residual: f64 },
    #[error(
        "no xi candidate within {tol:.1e} of the tan-route value {xi_tan:.6} \
         (nearest {nearest:.6}, distance {distance:.3e})"
    )]
    Inconsistent {
        xi_tan: f64,
        nearest: f64,
        distance: f64,
        tol: f64,
    },
    #[error("argument outside domain: {msg}")]
    Domain { msg: String },
}

fn domain_err<T>(msg: impl Into<String>) -> Result<T, EstimatorError> {
    Err(EstimatorError::Domain { msg: msg.into() })
}

/// Which inversion produced an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RealA,
    SumLargeP,
    RatioGeneral,
    PhaseGateSum,
    PhaseGatePeak,
}

/// Recovered single-pass quantities with a residual diagnostic.
///
/// epsilon_hat is the small error in the convention of the method: 1 - p_hat
/// when the gate sits near p = 1, p_hat itself for phase gates, and
/// min(p_hat, 1 - p_hat) for the general ratio protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub method: Method,
    pub p_hat: f64,
    pub epsilon_hat: f64,
    pub xi_hat: Option<f64>,
    pub eta_hat: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub residual: f64,
}

/// Branch-selection hint for the real-a inversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hint {
    /// p is known to sit near 1: keep the largest candidate.
    NearOne,
    /// p is known small: keep the smallest candidate.
    NearZero,
    /// Disambiguate with the return probability measured after 2N passes.
    TwoPoint(f64),
}

fn check_probability(name: &str, value: f64) -> Result<(), EstimatorError> {
    if !(0.0..=1.0).contains(&value) || !value.is_finite() {
        return domain_err(format!("{name} = {value} outside [0, 1]"));
    }
    Ok(())
}

/// Exact forward transfer probability of m pairs of the given kind.
fn forward_pair(p: f64, xi: f64, eta: f64, kind: PairKind, m: u64) -> Result<f64, EstimatorError> {
    let g = from_probability_and_phases(p, xi, eta)
        .map_err(|e| EstimatorError::Domain { msg: e.to_string() })?;
    evaluate_fast(&pair_sequence(g, kind, m))
        .map(|r| r.p_transfer)
        .map_err(|e| EstimatorError::Domain { msg: e.to_string() })
}

/// Solves Q_N = cos^2(N arccos sqrt(q)) for the single-pass p = 1 - q.
///
/// q_n is the return probability after N passes of a real-a gate (for a
/// transfer probability pass 1 - P_N). The equation has up to N branches in
/// theta = arccos(sqrt(q)); the hint picks one. A TwoPoint hint filters the
/// branches by the measurement after 2N passes, but for exact data that
/// measurement is degenerate: cos(2N theta) = 2 Q_N - 1 for every branch,
/// so more than one survivor is the norm and is reported as Ambiguous.
pub fn invert_real_a(q_n: f64, n: u64, hint: Hint) -> Result<ErrorEstimate, EstimatorError> {
    check_probability("q_n", q_n)?;
    if n == 0 {
        return domain_err("n must be >= 1");
    }
    let nf = n as f64;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let x = q_n.sqrt().acos();

    // all theta in [0, pi/2] with N theta = j pi +- x
    let mut thetas: Vec<f64> = Vec::new();
    let mut j = 0u64;
    loop {
        let base = j as f64 * std::f64::consts::PI;
        let lo = (base - x) / nf;
        let hi = (base + x) / nf;
        if lo > half_pi + 1e-12 {
            break;
        }
        for t in [lo, hi] {
            if (-1e-12..=half_pi + 1e-12).contains(&t) {
                thetas.push(t.clamp(0.0, half_pi));
            }
        }
        j += 1;
    }
    thetas.sort_by(|l, r| l.partial_cmp(r).unwrap());
    thetas.dedup_by(|l, r| (*l - *r).abs() < 1e-12);
    if thetas.is_empty() {
        return Err(EstimatorError::NoSolution);
    }

    let theta = match hint {
        Hint::NearZero => thetas[0],
        Hint::NearOne => *thetas.last().unwrap(),
        Hint::TwoPoint(q_2n) => {
            check_probability("q_2n", q_2n)?;
            let survivors: Vec<f64> = thetas
                .iter()
                .copied()
                .filter(|t| {
                    let c = (2.0 * nf * t).cos();
                    (c * c - q_2n).abs() <= TWO_POINT_TOL
                })
                .collect();
            match survivors.len() {
                0 => return Err(EstimatorError::NoSolution),
                1 => survivors[0],
                _ => {
                    let candidates = survivors.iter().map(|t| t.sin().powi(2)).collect();
                    return Err(EstimatorError::Ambiguous { candidates });
                }
            }
        }
    };

    let p_hat = theta.sin().powi(2);
    let c = (nf * theta).cos();
    let residual = (c * c - q_n).abs();
    let epsilon_hat = match hint {
        Hint::NearOne => 1.0 - p_hat,
        _ => p_hat.min(1.0 - p_hat),
    };
    Ok(ErrorEstimate {
        method: Method::RealA,
        p_hat,
        epsilon_hat,
        xi_hat: None,
        eta_hat: None,
        gamma_hat: None,
        residual,
    })
}

/// Near-identity-fidelity gates (p = 1 - eps): eps = (P^{++} + P^{-+}) / (4 M^2).
///
/// The split of the sum, P^{++} : P^{-+} = cos^2 xi : sin^2 xi, also yields
/// xi_hat, which is what the residual recomputation runs on. Both pair
/// probabilities are independent of eta, so the forward check uses eta = 0.
/// Guarded to the small-signal regime p_pp + p_mp <= 0.5, where the O(M^4
/// eps^2) truncation bias stays below ten percent.
pub fn estimate_sum_large_p(
    p_pp: f64,
    p_mp: f64,
    m: u64,
) -> Result<ErrorEstimate, EstimatorError> {
    check_probability("p_pp", p_pp)?;
    check_probability("p_mp", p_mp)?;
    if m == 0 {
        return domain_err("m must be >= 1");
    }
    let sum = p_pp + p_mp;
    if sum > 0.5 {
        return Err(EstimatorError::RegimeViolation { sum, limit: 0.5 });
    }
    let m2 = (m * m) as f64;
    let epsilon_hat = sum / (4.0 * m2);
    let xi_hat = if sum == 0.0 {
        None
    } else {
        Some((p_mp / p_pp).sqrt().atan())
    };
    let p_hat = 1.0 - epsilon_hat;

    let residual = match xi_hat {
        None => 0.0,
        Some(xi) => {
            let fwd_pp = forward_pair(p_hat, xi, 0.0, PairKind::PlusPlus, m)?;
            let fwd_mp = forward_pair(p_hat, xi, 0.0, PairKind::MinusPlus, m)?;
            (fwd_pp - p_pp).abs().max((fwd_mp - p_mp).abs())
        }
    };
    Ok(ErrorEstimate {
        method: Method::SumLargeP,
        p_hat,
        epsilon_hat,
        xi_hat,
        eta_hat: None,
        gamma_hat: None,
        residual,
    })
}

/// General-gate ratio protocol on the principal branch.
///
/// R = P_4M / P_2M = 2 (1 + cos(2M theta)) for each pair chain, so
/// theta_+- = arccos(R/2 - 1)/(2M), and then p = (cos theta_- - cos theta_+)/2
/// and q cos(2 xi) = (cos theta_+ + cos theta_-)/2. Valid only while
/// 2M theta_+- <= pi; beyond that the arccos lands on the wrong branch, which
/// is detected by recomputing all four probabilities from the estimate and
/// reported as BranchAliasing (never silently corrected). residual_tol is the
/// ceiling for that check; RATIO_RESIDUAL_TOL suits exact inputs, noisy
/// inputs need a ceiling of a few times their standard error.
pub fn estimate_ratio_general(
    p_2m_pp: f64,
    p_4m_pp: f64,
    p_2m_mp: f64,
    p_4m_mp: f64,
    m: u64,
    residual_tol: f64,
) -> Result<ErrorEstimate, EstimatorError> {
    check_probability("p_2m_pp", p_2m_pp)?;
    check_probability("p_4m_pp", p_4m_pp)?;
    check_probability("p_2m_mp", p_2m_mp)?;
    check_probability("p_4m_mp", p_4m_mp)?;
    if m == 0 {
        return domain_err("m must be >= 1");
    }
    if p_2m_pp < DENOMINATOR_FLOOR {
        return Err(EstimatorError::DegenerateDenominator {
            which: "P_2M^{++}",
            value: p_2m_pp,
        });
    }
    if p_2m_mp < DENOMINATOR_FLOOR {
        return Err(EstimatorError::DegenerateDenominator {
            which: "P_2M^{-+}",
            value: p_2m_mp,
        });
    }

    let two_m = 2.0 * m as f64;
    let theta_of_ratio = |num: f64, den: f64| -> f64 {
        let c2m = (num / den / 2.0 - 1.0).clamp(-1.0, 1.0);
        c2m.acos() / two_m
    };
    let theta_plus = theta_of_ratio(p_4m_pp, p_2m_pp);
    let theta_minus = theta_of_ratio(p_4m_mp, p_2m_mp);

    let p_hat = (theta_minus.cos() - theta_plus.cos()) / 2.0;
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(EstimatorError::BranchAliasing {
            residual: p_hat.abs().max((p_hat - 1.0).abs()),
        });
    }
    let q_hat = 1.0 - p_hat;
    let cos_2xi = if q_hat < DENOMINATOR_FLOOR {
        1.0
    } else {
        ((theta_plus.cos() + theta_minus.cos()) / (2.0 * q_hat)).clamp(-1.0, 1.0)
    };
    let xi_hat = cos_2xi.acos() / 2.0;

    let fwd = |kind: PairKind, reps: u64| forward_pair(p_hat, xi_hat, 0.0, kind, reps);
    let residual = [
        (fwd(PairKind::PlusPlus, m)?, p_2m_pp),
        (fwd(PairKind::PlusPlus, 2 * m)?, p_4m_pp),
        (fwd(PairKind::MinusPlus, m)?, p_2m_mp),
        (fwd(PairKind::MinusPlus, 2 * m)?, p_4m_mp),
    ]
    .iter()
    .map(|(f, x)| (f - x).abs())
    .fold(0.0, f64::max);
    if residual > residual_tol {
        return Err(EstimatorError::BranchAliasing { residual });
    }

    Ok(ErrorEstimate {
        method: Method::RatioGeneral,
        p_hat,
        epsilon_hat: p_hat.min(1.0 - p_hat),
        xi_hat: Some(xi_hat),
        eta_hat: None,
        gamma_hat: None,
        residual,
    })
}

/// Phase gates (p itself small): eps = (P^{+-} + P^{--}) / (4 M^2) and
/// sin^2 eta = P^{+-} / (P^{+-} + P^{--}).
///
/// Both pair probabilities are independent of xi (the +- and -- products
/// depend on eta only), so the forward residual uses xi = 0. Same
/// small-signal guard as the large-p sum.
pub fn estimate_phase_gate_sum(
    p_pm: f64,
    p_mm: f64,
    m: u64,
) -> Result<ErrorEstimate, EstimatorError> {
    check_probability("p_pm", p_pm)?;
    check_probability("p_mm", p_mm)?;
    if m == 0 {
        return domain_err("m must be >= 1");
    }
    let sum = p_pm + p_mm;
    if sum > 0.5 {
        return Err(EstimatorError::RegimeViolation { sum, limit: 0.5 });
    }
    let m2 = (m * m) as f64;
    let epsilon_hat = sum / (4.0 * m2);
    let eta_hat = if sum == 0.0 {
        None
    } else {
        Some((p_pm / sum).sqrt().asin())
    };

    let residual = match eta_hat {
        None => 0.0,
        Some(eta) => {
            let fwd_pm = forward_pair(epsilon_hat, 0.0, eta, PairKind::PlusMinus, m)?;
            let fwd_mm = forward_pair(epsilon_hat, 0.0, eta, PairKind::MinusMinus, m)?;
            (fwd_pm - p_pm).abs().max((fwd_mm - p_mm).abs())
        }
    };
    Ok(ErrorEstimate {
        method: Method::PhaseGateSum,
        p_hat: epsilon_hat,
        epsilon_hat,
        xi_hat: None,
        eta_hat,
        gamma_hat: None,
        residual,
    })
}

/// Phase-gate xi from sin^2(2M xi) = (P^{++} P^{-+} / (P^{++} + P^{-+})) / eps.
///
/// The sin(2M xi) inversion aliases across j pi / (2M); the independent
/// relation tan^2 xi = P^{-+} / P^{++} selects among the aliases. Returns
/// every candidate within tol (radians) of the tan-route value, sorted by
/// that distance. tol defaults to PHASE_XI_TOL in the CLI; note the tan
/// route carries an O(M^2 eps) bias, so matching at small M can need a
/// looser tolerance than the default.
pub fn estimate_phase_xi(
    p_pp: f64,
    p_mp: f64,
    epsilon_hat: f64,
    m: u64,
    tol: f64,
) -> Result<Vec<f64>, EstimatorError> {
    check_probability("p_pp", p_pp)?;
    check_probability("p_mp", p_mp)?;
    if m == 0 {
        return domain_err("m must be >= 1");
    }
    if !(epsilon_hat > 0.0) {
        return domain_err(format!("epsilon_hat = {epsilon_hat} must be positive"));
    }
    let sum = p_pp + p_mp;
    if sum <= 1e-12 {
        return domain_err(format!("p_pp + p_mp = {sum:.3e} carries no signal"));
    }

    let xi_tan = (p_mp / p_pp).sqrt().atan();

    let v = ((p_pp * p_mp / sum) / epsilon_hat).clamp(0.0, 1.0);
    let y = v.sqrt().asin();
    let two_m = 2.0 * m as f64;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut candidates: Vec<f64> = Vec::new();
    let mut j = 0u64;
    loop {
        let base = j as f64 * std::f64::consts::PI;
        let lo = (base - y) / two_m;
        let hi = (base + y) / two_m;
        if lo > half_pi + 1e-12 {
            break;
        }
        for c in [lo, hi] {
            if (-1e-12..=half_pi + 1e-12).contains(&c) {
                candidates.push(c.clamp(0.0, half_pi));
            }
        }
        j += 1;
    }
    candidates.sort_by(|l, r| l.partial_cmp(r).unwrap());
    candidates.dedup_by(|l, r| (*l - *r).abs() < 1e-12);

    let mut survivors: Vec<f64> = candidates
        .iter()
        .copied()
        .filter(|c| (c - xi_tan).abs() <= tol)
        .collect();
    if survivors.is_empty() {
        let nearest = candidates
            .iter()
            .copied()
            .min_by(|l, r| {
                (l - xi_tan)
                    .abs()
                    .partial_cmp(&(r - xi_tan).abs())
                    .unwrap()
            })
            .unwrap();
        return Err(EstimatorError::Inconsistent {
            xi_tan,
            nearest,
            distance: (nearest - xi_tan).abs(),
            tol,
        });
    }
    survivors.sort_by(|l, r| {
        (l - xi_tan)
            .abs()
            .partial_cmp(&(r - xi_tan).abs())
            .unwrap()
    });
    Ok(survivors)
}

/// Phase error gamma from the k-th amplification peak of the block sequence.
///
/// Near the peak at xi = (2k+1) alpha, alpha = pi/(2 n_half), the transfer
/// probability is P_N ~ 4 M^2 p (1 - 2 gamma cot(alpha')) / sin^2(alpha')
/// with alpha' = (2k+1) alpha, inverted here as
/// gamma = [1 - P_N sin^2(alpha') / (4 M^2 p)] / (2 cot(alpha')).
/// The linearization holds only while M^2 (n^2 gamma^2 + p) is small;
/// outside that window the formula saturates and the result is meaningless.
pub fn estimate_phase_gamma_peak(
    p_n: f64,
    p_hat: f64,
    n_half: u64,
    m: u64,
    k: u64,
) -> Result<f64, EstimatorError> {
    check_probability("p_n", p_n)?;
    if !(p_hat > 0.0 && p_hat <= 1.0) {
        return domain_err(format!("p_hat = {p_hat} must be in (0, 1]"));
    }
    if n_half == 0 || m == 0 {
        return domain_err("n_half and m must be >= 1");
    }
    let alpha = std::f64::consts::FRAC_PI_2 / n_half as f64;
    let alpha_k = (2 * k + 1) as f64 * alpha;
    if alpha_k >= std::f64::consts::PI {
        return domain_err(format!(
            "peak index k = {k} puts (2k+1) alpha = {alpha_k:.4} beyond pi"
        ));
    }
    let cot = alpha_k.cos() / alpha_k.sin();
    if cot.abs() < 1e-12 {
        return domain_err(
            "cot((2k+1) alpha) = 0: the middle peak has no first-order gamma sensitivity",
        );
    }
    let m2 = (m * m) as f64;
    let s = alpha_k.sin();
    Ok((1.0 - p_n * s * s / (4.0 * m2 * p_hat)) / (2.0 * cot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::chebyshev_populations_real_a;
    use crate::sequences::phase_gate_block;
    use std::f64::consts::PI;

    fn pair_p(p: f64, xi: f64, eta: f64, kind: PairKind, m: u64) -> f64 {
        forward_pair(p, xi, eta, kind, m).unwrap()
    }

    #[test]
    fn real_a_near_one_round_trip() {
        let q10 = chebyshev_populations_real_a(0.999, 10).unwrap().q_return;
        let est = invert_real_a(q10, 10, Hint::NearOne).unwrap();
        assert!((est.p_hat - 0.999).abs() < 1e-12);
        assert!((est.epsilon_hat - 1e-3).abs() < 1e-12);
        assert!(est.residual < 1e-12);
        assert_eq!(est.method, Method::RealA);
    }

    #[test]
    fn real_a_near_zero_round_trip() {
        let q70 = chebyshev_populations_real_a(1e-4, 70).unwrap().q_return;
        let est = invert_real_a(q70, 70, Hint::NearZero).unwrap();
        assert!((est.p_hat - 1e-4).abs() < 1e-13);
        assert!((est.epsilon_hat - 1e-4).abs() < 1e-13);
    }

    #[test]
    fn real_a_trivial_branches() {
        // N = 1 inverts directly: p = 1 - Q_1
        let est = invert_real_a(0.7, 1, Hint::NearZero).unwrap();
        assert!((est.p_hat - 0.3).abs() < 1e-15);
        // Q_2 = 1 admits theta in {0, pi/2}; NearOne keeps the double pi pulse
        let est = invert_real_a(1.0, 2, Hint::NearOne).unwrap();
        assert!((est.p_hat - 1.0).abs() < 1e-15);
        let est = invert_real_a(1.0, 2, Hint::NearZero).unwrap();
        assert!(est.p_hat.abs() < 1e-15);
    }

    #[test]
    fn real_a_two_point_is_degenerate_at_2n() {
        // cos(2N theta) = 2 Q_N - 1 for every branch, so the 2N measurement
        // keeps them all and the inversion must report that honestly
        let q10 = chebyshev_populations_real_a(0.999, 10).unwrap().q_return;
        let q20 = chebyshev_populations_real_a(0.999, 20).unwrap().q_return;
        match invert_real_a(q10, 10, Hint::TwoPoint(q20)) {
            Err(EstimatorError::Ambiguous { candidates }) => {
                assert!(candidates.len() > 1);
                assert!(
                    candidates.iter().any(|p| (p - 0.999).abs() < 1e-9),
                    "true branch missing from {candidates:?}"
                );
            }
            other => panic!("expected Ambiguous, got {other:?}"),
        }
        // N = 1 has a single branch, so the same hint resolves
        let q1 = chebyshev_populations_real_a(0.3, 1).unwrap().q_return;
        let q2 = chebyshev_populations_real_a(0.3, 2).unwrap().q_return;
        let est = invert_real_a(q1, 1, Hint::TwoPoint(q2)).unwrap();
        assert!((est.p_hat - 0.3).abs() < 1e-12);
    }

    #[test]
    fn real_a_two_point_rejects_inconsistent_data() {
        let q10 = chebyshev_populations_real_a(0.999, 10).unwrap().q_return;
        assert_eq!(
            invert_real_a(q10, 10, Hint::TwoPoint(0.123)),
            Err(EstimatorError::NoSolution)
        );
    }

    #[test]
    fn real_a_domain_checks() {
        assert!(matches!(
            invert_real_a(1.2, 5, Hint::NearOne),
            Err(EstimatorError::Domain { .. })
        ));
        assert!(matches!(
            invert_real_a(0.5, 0, Hint::NearOne),
            Err(EstimatorError::Domain { .. })
        ));
    }

    #[test]
    fn sum_large_p_frozen_example() {
        // forward values for gate p = 1 - 1e-4, xi = 0.7, M = 10
        let p_pp = 2.32168871415298281e-2;
        let p_mp = 1.65082609420631674e-2;
        let est = estimate_sum_large_p(p_pp, p_mp, 10).unwrap();
        assert_eq!(est.epsilon_hat, (p_pp + p_mp) / 400.0);
        assert!((est.epsilon_hat / 1e-4 - 1.0).abs() < 0.01);
        assert!((est.xi_hat.unwrap() - 0.7).abs() < 5e-3);
        assert!((est.p_hat - (1.0 - est.epsilon_hat)).abs() < 1e-15);
        assert!(est.residual > 0.0 && est.residual < 5e-4);
    }

    #[test]
    fn sum_large_p_round_trips_from_exact_inputs() {
        let eps = 1e-5;
        let m = 30;
        let p_pp = pair_p(1.0 - eps, 0.7, 0.2, PairKind::PlusPlus, m);
        let p_mp = pair_p(1.0 - eps, 0.7, 0.2, PairKind::MinusPlus, m);
        let est = estimate_sum_large_p(p_pp, p_mp, m).unwrap();
        assert!((est.epsilon_hat / eps - 1.0).abs() < 0.05);
    }

    #[test]
    fn sum_large_p_real_a_reduction() {
        // xi = 0 sends P^{-+} to zero, leaving eps = P^{++} / (4 M^2)
        let eps = 1e-4;
        let m = 10;
        let p_pp = pair_p(1.0 - eps, 0.0, 0.0, PairKind::PlusPlus, m);
        let p_mp = pair_p(1.0 - eps, 0.0, 0.0, PairKind::MinusPlus, m);
        assert!(p_mp < 1e-30);
        let est = estimate_sum_large_p(p_pp, p_mp, m).unwrap();
        assert!((est.epsilon_hat - p_pp / 400.0).abs() < 1e-18);
        assert!((est.epsilon_hat / eps - 1.0).abs() < 0.05);
    }

    #[test]
    fn sum_large_p_guard() {
        match estimate_sum_large_p(0.4, 0.2, 5) {
            Err(EstimatorError::RegimeViolation { sum, limit }) => {
                assert!((sum - 0.6).abs() < 1e-15);
                assert_eq!(limit, 0.5);
            }
            other => panic!("expected RegimeViolation, got {other:?}"),
        }
    }

    #[test]
    fn ratio_general_round_trip() {
        // validity window checked: 2M theta_+- < pi for p=0.02, xi=0.1, M=3
        let (p, xi, m) = (0.02, 0.1, 3);
        let p_2m_pp = pair_p(p, xi, 0.0, PairKind::PlusPlus, m);
        let p_4m_pp = pair_p(p, xi, 0.0, PairKind::PlusPlus, 2 * m);
        let p_2m_mp = pair_p(p, xi, 0.0, PairKind::MinusPlus, m);
        let p_4m_mp = pair_p(p, xi, 0.0, PairKind::MinusPlus, 2 * m);
        let est =
            estimate_ratio_general(p_2m_pp, p_4m_pp, p_2m_mp, p_4m_mp, m, RATIO_RESIDUAL_TOL)
                .unwrap();
        assert!((est.p_hat - p).abs() < 1e-10, "p_hat = {}", est.p_hat);
        assert!((est.xi_hat.unwrap() - xi).abs() < 1e-9);
        assert!(est.residual < 1e-9);
        assert_eq!(est.epsilon_hat, est.p_hat);
    }

    #[test]
    fn ratio_general_reports_branch_aliasing() {
        // p=0.3, xi=0.9, M=3 has 2M theta_+ = 12.3 >> pi: wrong branch
        let (p, xi, m) = (0.3, 0.9, 3);
        let p_2m_pp = pair_p(p, xi, 0.0, PairKind::PlusPlus, m);
        let p_4m_pp = pair_p(p, xi, 0.0, PairKind::PlusPlus, 2 * m);
        let p_2m_mp = pair_p(p, xi, 0.0, PairKind::MinusPlus, m);
        let p_4m_mp = pair_p(p, xi, 0.0, PairKind::MinusPlus, 2 * m);
        match estimate_ratio_general(p_2m_pp, p_4m_pp, p_2m_mp, p_4m_mp, m, RATIO_RESIDUAL_TOL) {
            Err(EstimatorError::BranchAliasing { .. }) => {}
            other => panic!("expected BranchAliasing, got {other:?}"),
        }
    }

    #[test]
    fn ratio_general_blind_spots() {
        // real-a gate: P^{-+} vanishes identically
        match estimate_ratio_general(0.3, 0.5, 1e-15, 1e-15, 3, RATIO_RESIDUAL_TOL) {
            Err(EstimatorError::DegenerateDenominator { which, .. }) => {
                assert_eq!(which, "P_2M^{-+}")
            }
            other => panic!("expected DegenerateDenominator, got {other:?}"),
        }
        match estimate_ratio_general(0.0, 0.0, 0.2, 0.3, 3, RATIO_RESIDUAL_TOL) {
            Err(EstimatorError::DegenerateDenominator { which, .. }) => {
                assert_eq!(which, "P_2M^{++}")
            }
            other => panic!("expected DegenerateDenominator, got {other:?}"),
        }
    }

    #[test]
    fn phase_gate_sum_frozen_example() {
        // forward values for phase gate p = 1e-3, eta = 0.3, M = 10
        let p_pm = 3.44974754770436265e-2;
        let p_mm = 3.22807127306285635e-1;
        let est = estimate_phase_gate_sum(p_pm, p_mm, 10).unwrap();
        assert_eq!(est.epsilon_hat, (p_pm + p_mm) / 400.0);
        // M^2 eps = 0.1 here, so the truncation bias is visible but bounded
        assert!((est.epsilon_hat / 1e-3 - 1.0).abs() < 0.12);
        assert!((est.eta_hat.unwrap() - 0.3).abs() < 0.02);
        assert!(est.residual.is_finite());
    }

    #[test]
    fn phase_gate_sum_edges_and_guard() {
        let est = estimate_phase_gate_sum(0.0, 0.0, 4).unwrap();
        assert_eq!(est.epsilon_hat, 0.0);
        assert_eq!(est.eta_hat, None);
        assert_eq!(est.residual, 0.0);

        // eta = 0: all weight in P^{--}
        let p_pm = pair_p(1e-4, 0.3, 0.0, PairKind::PlusMinus, 5);
        let p_mm = pair_p(1e-4, 0.3, 0.0, PairKind::MinusMinus, 5);
        assert!(p_pm < 1e-30);
        let est = estimate_phase_gate_sum(p_pm, p_mm, 5).unwrap();
        assert!((est.epsilon_hat / 1e-4 - 1.0).abs() < 0.05);
        assert!(est.eta_hat.unwrap().abs() < 1e-12);

        assert!(matches!(
            estimate_phase_gate_sum(0.3, 0.3, 10),
            Err(EstimatorError::RegimeViolation { .. })
        ));
    }

    #[test]
    fn phase_xi_frozen_example_needs_loose_tolerance() {
        // phase gate p = 1e-3, xi = pi/8, M = 5
        let p_pp = 3.47627161726642890e-3;
        let p_mp = 5.83259463392267409e-4;
        let survivors = estimate_phase_xi(p_pp, p_mp, 1e-3, 5, 1e-2).unwrap();
        assert!((survivors[0] - 0.3926449567).abs() < 1e-9);
        assert!((survivors[0] - PI / 8.0).abs() < 1e-4);

        // the default tolerance rejects its own textbook case: the tan route
        // carries an O(M^2 eps) bias of 3.9e-3 here
        match estimate_phase_xi(p_pp, p_mp, 1e-3, 5, PHASE_XI_TOL) {
            Err(EstimatorError::Inconsistent { distance, .. }) => {
                assert!((distance - 3.879e-3).abs() < 1e-5);
            }
            other => panic!("expected Inconsistent, got {other:?}"),
        }
    }

    #[test]
    fn phase_xi_trivial_angles() {
        let m = 5;
        let p_pp = pair_p(1e-3, 0.0, 0.2, PairKind::PlusPlus, m);
        let p_mp = pair_p(1e-3, 0.0, 0.2, PairKind::MinusPlus, m);
        let survivors = estimate_phase_xi(p_pp, p_mp, 1e-3, m, PHASE_XI_TOL).unwrap();
        assert!(survivors[0].abs() < 1e-9);

        let p_pp = pair_p(1e-3, PI / 2.0, 0.2, PairKind::PlusPlus, m);
        let p_mp = pair_p(1e-3, PI / 2.0, 0.2, PairKind::MinusPlus, m);
        let survivors = estimate_phase_xi(p_pp, p_mp, 1e-3, m, PHASE_XI_TOL).unwrap();
        assert!((survivors[0] - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn phase_xi_domain_checks() {
        assert!(matches!(
            estimate_phase_xi(0.0, 0.0, 1e-3, 5, PHASE_XI_TOL),
            Err(EstimatorError::Domain { .. })
        ));
        assert!(matches!(
            estimate_phase_xi(0.1, 0.1, 0.0, 5, PHASE_XI_TOL),
            Err(EstimatorError::Domain { .. })
        ));
    }

    #[test]
    fn gamma_peak_algebraic_round_trip() {
        // P_N built from the linearized formula inverts exactly
        let (n, m, k, p) = (4u64, 3u64, 0u64, 1e-3);
        let alpha_k = PI / 8.0;
        let amp = 4.0 * (m * m) as f64 * p / alpha_k.sin().powi(2);
        for gamma in [-3e-3, 0.0, 2e-3] {
            let p_n = amp * (1.0 - 2.0 * gamma * alpha_k.cos() / alpha_k.sin());
            let got = estimate_phase_gamma_peak(p_n, p, n, m, k).unwrap();
            assert!((got - gamma).abs() < 1e-15, "gamma {gamma}: got {got}");
        }
    }

    #[test]
    fn gamma_peak_physical_round_trip() {
        // inside the linear window: M^2 (n^2 gamma^2 + p_n) << 1
        let (n, m, k) = (4u64, 1u64, 0u64);
        let (p, gamma) = (1e-6, 1e-2);
        let g = from_probability_and_phases(p, PI / 8.0 + gamma, 0.0).unwrap();
        let p_n = evaluate_fast(&phase_gate_block(g, n, m)).unwrap().p_transfer;
        let got = estimate_phase_gamma_peak(p_n, p, n, m, k).unwrap();
        assert!(
            (got / gamma - 1.0).abs() < 0.03,
            "relative error {:.4}",
            (got / gamma - 1.0).abs()
        );
    }

    #[test]
    fn gamma_peak_domain_checks() {
        // n=1, k=0 puts the peak at pi/2 where cot vanishes
        assert!(matches!(
            estimate_phase_gamma_peak(0.1, 1e-3, 1, 10, 0),
            Err(EstimatorError::Domain { .. })
        ));
        // middle peak of odd n likewise
        assert!(matches!(
            estimate_phase_gamma_peak(0.1, 1e-3, 3, 10, 1),
            Err(EstimatorError::Domain { .. })
        ));
        // peak index beyond pi
        assert!(matches!(
            estimate_phase_gamma_peak(0.1, 1e-3, 4, 10, 4),
            Err(EstimatorError::Domain { .. })
        ));
        assert!(matches!(
            estimate_phase_gamma_peak(0.1, 0.0, 4, 10, 0),
            Err(EstimatorError::Domain { .. })
        ));
    }

    #[test]
    fn estimates_serialize_with_method_tags() {
        let q10 = chebyshev_populations_real_a(0.999, 10).unwrap().q_return;
        let est = invert_real_a(q10, 10, Hint::NearOne).unwrap();
        let text = serde_json::to_string(&est).unwrap();
        assert!(text.contains("\"method\":\"real_a\""));
        assert!(text.contains("\"xi_hat\":null"));
        let back: ErrorEstimate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, est);
    }
}

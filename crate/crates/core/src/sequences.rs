//! Explicit multi-pass gate programs and their two evaluation routes.
//!
//! A program is a list of sign-flip variants of one base gate, repeated
//! whole some number of times. Two-pass pairs are the workhorse: with
//! U = (a, b) the four pair propagators are
//!
//! ```text
//!     ++ : (a^2 - |b|^2,  2 b Re a)
//!     -+ : (a^2 + |b|^2, -2i b Im a)
//!     +- : (|a|^2 + b^2,  2i a Im b)
//!     -- : (|a|^2 - b^2,  2 a Re b)
//! ```
//!
//! where the sign pair names the flipped parameter of the second pass.
//! evaluate() multiplies every pass out one by one and is the oracle;
//! evaluate_fast() composes one repetition block and raises it to the
//! repeat count with the Chebyshev closed form. The two must agree, and
//! tests hold them against each other.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closed_form::Populations;
use crate::su2::{compose, power, variant, GateVariant, Su2Gate};

/// Norm defect beyond which an evaluated product is reported as drifted.
pub const DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("accumulated norm defect {defect:.3e} exceeds {DRIFT_TOL:.0e}")]
    NumericalDrift { defect: f64 },
}

/// Which parameter sign the second pass of a pair flips.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    PlusPlus,
    MinusPlus,
    PlusMinus,
    MinusMinus,
}

impl PairKind {
    /// Variant applied on the second pass of the pair.
    pub fn second_variant(self) -> GateVariant {
        match self {
            PairKind::PlusPlus => GateVariant::Original,
            PairKind::MinusPlus => GateVariant::FlipOmega,
            PairKind::PlusMinus => GateVariant::FlipDelta,
            PairKind::MinusMinus => GateVariant::FlipBoth,
        }
    }
}

/// A base gate, a per-pass variant program, and a whole-program repeat count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSequence {
    pub base: Su2Gate,
    pub program: Vec<GateVariant>,
    #[serde(rename = "repeat")]
    pub repeat_whole: u64,
}

impl GateSequence {
    pub fn total_passes(&self) -> u64 {
        self.program.len() as u64 * self.repeat_whole
    }
}

/// The same gate n times: program [Original], repeated n times.
pub fn repeat_same(g: Su2Gate, n: u64) -> GateSequence {
    GateSequence {
        base: g,
        program: vec![GateVariant::Original],
        repeat_whole: n,
    }
}

/// m two-pass pairs: [Original, flip-of-kind], repeated m times (2m passes).
pub fn pair_sequence(g: Su2Gate, kind: PairKind, m: u64) -> GateSequence {
    GateSequence {
        base: g,
        program: vec![GateVariant::Original, kind.second_variant()],
        repeat_whole: m,
    }
}

/// Phase-gate amplification block: n passes of U then n passes of the
/// coupling-flipped gate, all repeated m times (2 n m passes).
pub fn phase_gate_block(g: Su2Gate, n: u64, m: u64) -> GateSequence {
    let mut program = vec![GateVariant::Original; n as usize];
    program.extend(std::iter::repeat(GateVariant::FlipOmega).take(n as usize));
    GateSequence {
        base: g,
        program,
        repeat_whole: m,
    }
}

/// Populations after a full sequence, with the final propagator when it was
/// built from an explicit matrix product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiPassResult {
    pub n_passes: u64,
    pub q_return: f64,
    pub p_transfer: f64,
    pub propagator: Option<Su2Gate>,
}

impl MultiPassResult {
    /// P is clamped to [0, 1] and Q is defined as 1 - P, so the pair always
    /// sums to one; any |a|^2 vs 1 - |b|^2 discrepancy stays in the
    /// propagator's norm defect where the drift check can see it.
    pub fn new(n_passes: u64, p_transfer: f64, propagator: Option<Su2Gate>) -> Self {
        let p = p_transfer.clamp(0.0, 1.0);
        MultiPassResult {
            n_passes,
            q_return: 1.0 - p,
            p_transfer: p,
            propagator,
        }
    }
}

impl From<Populations> for MultiPassResult {
    fn from(pops: Populations) -> Self {
        MultiPassResult::new(pops.n_passes, pops.p_transfer, None)
    }
}

fn finish(g: Su2Gate, n_passes: u64) -> Result<MultiPassResult, SequenceError> {
    let defect = g.norm_defect();
    if defect > DRIFT_TOL {
        return Err(SequenceError::NumericalDrift { defect });
    }
    Ok(MultiPassResult::new(n_passes, g.p(), Some(g)))
}

/// Brute-force route: multiplies out every pass in program order (first
/// listed acts first). Never renormalizes beyond what compose() allows, and
/// reports NumericalDrift instead of hiding an accumulated defect.
pub fn evaluate(seq: &GateSequence) -> Result<MultiPassResult, SequenceError> {
    let mut acc = Su2Gate::identity();
    for _ in 0..seq.repeat_whole {
        for &tag in &seq.program {
            acc = compose(variant(seq.base, tag), acc);
        }
    }
    finish(acc, seq.total_passes())
}

/// Fast route: composes one repetition block, then raises it to the repeat
/// count with the Chebyshev power. The power step is structurally
/// normalized, so drift can only enter through the block product itself.
pub fn evaluate_fast(seq: &GateSequence) -> Result<MultiPassResult, SequenceError> {
    let mut block = Su2Gate::identity();
    for &tag in &seq.program {
        block = compose(variant(seq.base, tag), block);
    }
    let defect = block.norm_defect();
    if defect > DRIFT_TOL {
        return Err(SequenceError::NumericalDrift { defect });
    }
    finish(power(block, seq.repeat_whole), seq.total_passes())
}

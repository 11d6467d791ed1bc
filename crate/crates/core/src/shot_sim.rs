//! Finite-shot measurement of a multi-pass result.
//!
//! Sampling is fully deterministic given a seed: the generator is ChaCha12
//! seeded with seed_from_u64, and the state-2 count is one binomial draw of
//! shots trials at p_transfer (rand_distr's Binomial, pinned at 0.5.1 so the
//! draw sequence is reproducible across builds). Independent tasks derive
//! their seeds with split_seed, a splitmix64 finalizer over
//! master ^ (stream + 1) * 0x9E3779B97F4A7C15, so streams never collide by
//! accident and records always carry the seed that produced them.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::sequences::MultiPassResult;

/// Counts from measuring one sequence a finite number of times.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// Deterministic tag of the measured result (pass count and p).
    pub sequence_id: String,
    pub shots: u64,
    /// Times the qubit came back in the start state.
    pub count_state1: u64,
    /// Times the qubit was found transferred.
    pub count_state2: u64,
    pub seed: u64,
}

/// Derives the RNG seed for an indexed substream of a master seed.
pub fn split_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ (stream.wrapping_add(1)).wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Draws count_state2 ~ Binomial(shots, p_transfer) at the given seed.
pub fn sample(result: &MultiPassResult, shots: u64, seed: u64) -> MeasurementRecord {
    let p = result.p_transfer;
    let count_state2 = if p <= 0.0 {
        0
    } else if p >= 1.0 {
        shots
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Binomial::new(shots, p)
            .expect("p_transfer is a probability by construction")
            .sample(&mut rng)
    };
    MeasurementRecord {
        sequence_id: format!("n{}_p{:.16e}", result.n_passes, result.p_transfer),
        shots,
        count_state1: shots - count_state2,
        count_state2,
        seed,
    }
}

/// (p_hat, stderr) for the transfer probability.
///
/// p_hat = count_state2 / shots with the binomial standard error; at the
/// boundary counts 0 and shots, where the plug-in stderr collapses to zero,
/// the rule of three 3/shots is reported instead.
pub fn estimate_probability(record: &MeasurementRecord) -> (f64, f64) {
    let shots = record.shots as f64;
    let p_hat = record.count_state2 as f64 / shots;
    let stderr = if record.count_state2 == 0 || record.count_state2 == record.shots {
        3.0 / shots
    } else {
        (p_hat * (1.0 - p_hat) / shots).sqrt()
    };
    (p_hat, stderr)
}

//! Multi-pass propagation of a single-qubit SU(2) gate.
//!
//! A lossless single-pass gate is the Cayley-Klein matrix
//!
//! ```text
//!         |  a   -b* |
//!     U = |          |         |a|^2 + |b|^2 = 1
//!         |  b    a* |
//! ```
//!
//! with transition probability p = |b|^2 and return probability q = |a|^2.
//! Repeating the gate N times amplifies small errors quadratically in N,
//! which is what makes tiny infidelities measurable: run the closed forms
//! in [`closed_form`], drive explicit gate programs through [`sequences`],
//! attach shot noise with [`shot_sim`], and invert the amplified signals
//! back to single-pass parameters with [`estimators`].

pub mod closed_form;
pub mod estimators;
pub mod sequences;
pub mod shot_sim;
pub mod su2;

pub use su2::{GateVariant, Su2Gate, Theta};

//! Anchored e-watermarking over a finite vocabulary.
//!
//! A generator that knows the target distribution `q` samples an outcome `v`
//! jointly with a seed `s ~ p0` from a coupling of `(q, p0)`. A detector that
//! only knows the anchor `p0` and a radius `delta` with `||q - p0||_1 <= delta`
//! scores each pair with an e-value and stops once the accumulated log-wealth
//! reaches `ln(1/alpha)`.
//!
//! - [`simplex`]: distributions, the l1 neighborhood, its extreme points.
//! - [`evalue`]: the optimal e-value, its null audit, the growth rate `J*`.
//! - [`coupling`]: optimal generator couplings and exact sampling.
//! - [`detection`]: the wealth process and a Bonferroni binomial baseline.
//! - [`oracles`]: brute-force path/cycle checks and a two-token grid solver.
//! - [`simulation`]: adversarial processes, stopping times, null calibration.

// Guards like `!(x > 0.0)` are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod detection;
pub mod error;
pub mod evalue;
pub mod matrix;
pub mod oracles;
pub mod parallel;
pub mod rng;
pub mod simplex;
pub mod simulation;
pub mod tol;

pub use coupling::{extreme_coupling, mixture_coupling, path_coupling, sample_pair, CouplingMatrix, PathSpec};
pub use detection::{batch_detect, BaselineState, Decision, DetectionReport, DetectorState, Status};
pub use error::{EwmError, Result};
pub use evalue::{jstar, kernel_of, null_worst_expectation, optimal_evalue, EValueTable};
pub use matrix::Square;
pub use parallel::Execution;
pub use simplex::{
    decompose_target, entropy, enumerate_extremes, l1_distance, make_distribution, noise_profile, ExtremePair,
    MixtureDecomposition, NeighborhoodSpec, VocabDistribution,
};
pub use simulation::{AdversaryPolicy, ExperimentConfig, Process};

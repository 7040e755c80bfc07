//! Numerical machinery for central limit theorems of Markov chains started at
//! a point.
//!
//! The crate works on finite state spaces, where every Markov-operator object
//! (`Qf`, resolvent partial sums, Cesàro tails, the supremum function `g_f`,
//! Poisson solutions, the martingale approximation and its variance) can be
//! computed exactly. Those exact values serve as oracles for the Monte Carlo
//! side: reproducible ensembles of trajectories started at a fixed state,
//! goodness-of-fit tests for the CLT and its functional form, and evaluators
//! for the sufficient conditions that guarantee them.
//!
//! Modules:
//!
//! * [`kernel`]: validated transition kernels and their stationary laws.
//! * [`operator`]: exact operator calculus and the martingale scheme.
//! * [`simulator`]: counter-seeded path and ensemble generation.
//! * [`diagnostics`]: condition evaluators, inequality checks, KS tests.
//! * [`counterexample`]: the rotation × Rademacher construction, truncated.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod counterexample;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod kernel;
pub mod operator;
pub mod rng;
pub mod series;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::{ErgodicityReport, MarkovKernel, TransitionTable};
pub use operator::{MartingaleScheme, Observable, VarianceReport};
pub use simulator::{EnsembleSummary, PathSample, SeedRecord};
pub use diagnostics::{ConditionId, ConditionReport, Verdict};
pub use counterexample::{ExampleParams, TruncatedExample};

//! Killed random walks on `Z^d` and their conditioned limits.
//!
//! The crate computes escape-before-death probabilities exactly on finite
//! exhaustions, estimates ratio limits and Doob-conditioned walks, reduces
//! the tree-indexed infinite snake to a killed random walk, and simulates
//! killed Brownian motion with its skew-product decomposition.

pub mod error;
pub mod exhaust;
pub mod green;
pub mod harmonic;
pub mod kbm;
pub mod killing;
pub mod lattice;
pub mod potential;
pub mod ratio;
pub mod rng;
pub mod snake;
pub mod solver;
pub mod stats;
pub mod trapping;
pub mod walks;

pub use error::{KrwError, Result};
pub use exhaust::{Exhaustion, HalfSpaceSign};
pub use green::{green_function, GreenEstimate};
pub use harmonic::{exit_measure, solve_escape, solve_escape_with, ExitMeasure, SurvivalSolution};
pub use kbm::{
    angular_concentration, annulus_survival, annulus_survival_chained, directional_escape,
    feynman_kac_pair, simulate_until, ContinuousKilling, KbmConfig, KbmOutcome, Side,
};
pub use killing::{in_escape_set, KillingField};
pub use lattice::{neighbors, Point};
pub use potential::{hitting_before_zero, hitting_from_origin, potential_kernel};
pub use ratio::{
    build_conditioned_kernel, counterexample_experiment, ratio_curve, sample_conditioned_path,
    ConditionedKernel, CounterexampleReport, RatioCurve,
};
pub use rng::RandomStream;
pub use snake::{
    build_k_table, estimate_k, index_walk, krw_escape_probability, sample_conditioned_snake,
    sample_gw_tree, sample_multitype_tree, snake_escape_probability, KHatEstimate, KTable,
    LabeledTree, OffspringLaw, TreeShape,
};
pub use solver::{GridDomain, Omega, SolveOptions, SolveStats};
pub use stats::Estimate;
pub use trapping::{trapping_classifier, Trapping};

//! Simulation and numerical verification toolkit for iterated perturbed
//! random walks on a general branching process tree.
//!
//! A perturbed random walk is the sequence `T_k = S_{k-1} + eta_k` where
//! `S` is a zero-delayed random walk with positive steps `xi` and `eta` is
//! a positive perturbation, possibly dependent on `xi`. Each individual of
//! a branching population reproduces according to an independent copy of
//! `T` shifted by its own birth time; `N_j(t)` counts generation-`j` births
//! up to time `t`.
//!
//! The crate has three legs:
//!
//! * exact event-driven simulation of the walk and the tree ([`branching`]),
//! * a deterministic grid engine for the renewal function, the mean
//!   functions `V_j = E N_j` and their convolution powers, second moments
//!   and variance curves ([`grid`]),
//! * samplers and exact covariances for the Gaussian limit processes
//!   (Brownian motion and its iterated integrals, [`gaussian`]),
//!
//! tied together by statistical estimators ([`stats`]) and per-theorem
//! pass/fail verification reports ([`verify`]).

pub mod branching;
pub mod gaussian;
pub mod grid;
pub(crate) mod numeric;
pub mod seeds;
pub mod stats;
pub mod step_models;
pub mod verify;

pub use branching::{GenerationCountPath, PerturbedWalkRealization, SimLimits};
pub use gaussian::GaussianPathSet;
pub use grid::{DriFunction, GridFunction, GridKind, GridMeasure, MassRule};
pub use seeds::{derive_seed, replicate_rng, SimRng};
pub use stats::EstimateCI;
pub use step_models::{JointStepModel, MomentSummary, StepLaw};
pub use verify::{CenteringKind, TheoremReport, Verdict};

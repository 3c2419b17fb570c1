//! Certification of strong global uniform exponential stability (S-GUES) for
//! switched impulsive systems with mode-constrained switching.
//!
//! A switched impulsive system flows between event times according to the
//! active mode's vector field and jumps at event times through a jump map.
//! Admissible mode transitions are restricted to the edges of a jump graph,
//! and the admissible signals are constrained by average dwell-time bounds on
//! switches and per-mode impulses plus activation-time bounds on groups of
//! modes. This crate synthesizes quadratic Lyapunov data for linear systems,
//! evaluates combined switching weights over the jump graph, assembles
//! `(K, lambda)` certificates for the strong bound
//! `|x(t)| <= K e^{-lambda (t - t0 + n(t, t0))} |x0|`,
//! and validates certificates empirically by simulating admissible hybrid
//! trajectories.
//!
//! Modules:
//! - [`model`]: system, signal and constraint data types plus the JSON
//!   document schema.
//! - [`lyapunov`]: Lyapunov/Stein solvers and per-mode rate extraction.
//! - [`jumpgraph`]: max-plus combined walk weights over the jump graph.
//! - [`certifier`]: certificate assembly, coefficient selection and sweeps.
//! - [`simulator`]: admissible signal generation, auditing, trajectory
//!   integration and empirical bound checks.
//! - [`cli`]: command implementations behind the `sgues` binary.

pub use nalgebra;

pub mod certifier;
pub mod cli;
pub mod jumpgraph;
pub mod lyapunov;
pub mod model;
pub mod report;
pub mod simulator;

pub use lyapunov::{LyapunovData, ModeClassification};
pub use model::{ConstraintProfile, HybridSignal, JumpGraph, SwitchedImpulsiveSystem};

//! Drift-plus-penalty ratio control for asynchronous renewal systems.
//!
//! A collection of `N` renewal systems shares `L` time-average constraints.
//! Each system picks an action at the start of each of its frames by
//! minimizing a ratio of expected frame totals, weighted by a vector of
//! virtual queues that track the accumulated constraint violation.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`model`]: renewal system models, performance triples and frame sampling.
//! - [`controller`]: virtual queues and the per-frame ratio subproblem solvers.
//! - [`sim`]: a slotted-time simulator with pluggable observers for diagnostics.
//! - [`lp`]: the optimal stationary benchmark as a linear program over hull weights.
//! - [`scheduling`]: the multi-server energy-aware scheduling instance.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod controller;
pub mod error;
pub mod lp;
pub mod model;
pub mod scheduling;
pub mod sim;
pub mod stats;

pub use controller::{
    assert_key_feature, queue_update, DEFAULT_BISECTION_TOL, solve_bisection, solve_enumerate, solve_hull_vertices,
    DinkelbachOutcome, SubproblemSolution, TradeoffParameter, VirtualQueueVector,
};
pub use error::Error;
pub use lp::{
    brute_force_oracle, extract_reference_point, solve_lp, stationary_policy_weights,
    ConstraintDirection, LpSolution, LpStatus, StationaryLp,
};
pub use model::{
    performance_vector, sample_frame, validate_model, ActionId, ActionSpec, AmountDist,
    FrameOutcome, FrameSpec, LengthDist, PerformanceTriple, PerformanceVector, PhaseSpec,
    RenewalSystemModel, SlotBounds, ValidationReport,
};
pub use scheduling::{
    build_instance, scheduling_objective, BuiltInstance, SchedulingInstance, ServerClassParams,
};
pub use sim::{
    run, run_stationary_sweep, ArrivalDist, ArrivalSpec, Decision, DriftDiagnostic, ExternalProcess,
    DriftSummary, KeyFeatureCheck, Observer, PolicySpec, RunConfig, RunMetrics, SamplePathCheck, SlotRecord,
    SolverKind, StationarySweep, DEFAULT_CAP_SIGMAS,
};

pub type Result<T, E = Error> = core::result::Result<T, E>;

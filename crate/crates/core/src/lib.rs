//! Discrete-time simulator and analysis toolkit for single-hop queueing
//! networks under Max-Weight and Max-Weight-α scheduling.
//!
//! Time is slotted. Each traffic flow owns a dedicated queue and receives
//! IID file arrivals (a file is the batch of packets landing in one slot).
//! A scheduler activates one feasible schedule per slot; every queue in the
//! active schedule transmits one packet, and arrivals are added at the end
//! of the slot:
//!
//! ```text
//! Q_f(t+1) = Q_f(t) + A_f(t) - S_f(t) * 1{Q_f(t) > 0}
//! ```
//!
//! The crate splits into:
//!
//! - [`model`]: flows, feasible-schedule sets, conflict structure, presets.
//! - [`arrivals`]: per-flow file-arrival processes with analytic moments,
//!   including zeta-distributed (heavy-tailed) file sizes.
//! - [`scheduling`]: Max-Weight, Max-Weight-α, and fixed-priority policies
//!   with uniform random tie-breaking.
//! - [`engine`]: slot-by-slot simulation, FCFS file-delay accounting,
//!   regeneration cycles, mergeable statistics, divergence diagnostics.
//! - [`analysis`]: traffic-intensity LP, covering number, fluid-model
//!   solver, delay-stability classification, and moment-bound calculators.

pub mod analysis;
pub mod arrivals;
pub mod engine;
pub mod model;
pub mod scheduling;

pub use analysis::{
    bernoulli_bound, classify_flows, compute_h, covering_number, fluid_solve, s_max,
    theorem3_bound, traffic_intensity, AnalysisError, BoundReport, FlowClass, FluidSolution,
    StabilityReport,
};
pub use arrivals::{zeta, ArrivalError, ArrivalSampler, ArrivalSpec, SizeDistribution};
pub use engine::{
    basta_distance, divergence_diagnostic, littles_law_residual, merge, run, Convergence,
    DivergenceDiagnostic, EngineError, FileRecord, RunConfig, SimState, SimStats,
};
pub use model::{preset, FlowId, ModelError, NetworkSpec, Schedule};
pub use scheduling::{decide, weight, PolicySpec, ScheduleDecision, SchedulingError};

//! Planning GPU rentals for a stream of parallelizable training jobs under a
//! time-average budget.
//!
//! * [`speedup`]: speedup functions and their axioms
//! * [`workload`]: job types, the workload document, traces
//! * [`optimizer`]: optimal fixed widths, a grid oracle, budget sweeps
//! * [`simulator`]: trace replay under fixed-width and baseline policies

pub mod optimizer;
pub mod simulator;
pub mod speedup;
pub mod workload;

pub use optimizer::{
    brute_force_allocation, budget_usage, inner_minimize, merge_segments, objective,
    pareto_frontier, solve_allocation, Allocation, FrontierPoint, SolveError, SolverConfig,
};
pub use simulator::{
    budget_timeseries, calibrate_to_budget, compare_policies, simulate, JobRecord, Policy,
    SimError, SimMetrics,
};
pub use speedup::{Axiom, SpeedupError, SpeedupFunction, ValidationReport};
pub use workload::{
    empirical_loads, generate_trace, generate_trace_with, read_trace, write_trace, ArrivalProcess,
    EmpiricalLoad, JobType, SizeDist, Trace, TraceError, TraceEvent, WorkloadError, WorkloadSpec,
};

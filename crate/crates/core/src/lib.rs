//! Energy-aware workload scheduling on a simulated cluster.
//!
//! Workloads are profiled into a four-dimensional utilization vector, a
//! regression tree learns their energy cost from past runs, and the
//! scheduler places each arrival on the admissible host with the lowest
//! predicted energy. A periodic consolidation pass drains lightly loaded
//! hosts and powers them down. The discrete-event simulator measures the
//! result against a round-robin baseline.

// `!(a < b)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod harness;
pub mod predictor;
pub mod profiling;
pub mod scenario;
pub mod scheduler;
pub mod sim;
pub mod workloads;

pub use energy::{host_power, EnergyCoefficients, EnergyLedger, HostId, HostState, PowerState};
pub use error::{Error, Result};
pub use harness::{compare, ComparisonReport};
pub use predictor::{rank_hosts, CostModel, EnergyPredictor, RegressionTree, TrainingRecord};
pub use profiling::{aggregate_profile, classify_workload, WorkloadClass, WorkloadProfile};
pub use scenario::Scenario;
pub use scheduler::{consolidation_pass, place_workload, SchedulerConfig};
pub use sim::{ClusterSpec, Policy, Simulation, SimulationResult};
pub use workloads::{generate, Arrival, ArrivalModel, WorkloadFamily};

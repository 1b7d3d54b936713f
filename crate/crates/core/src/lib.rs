//! Discrete-event simulation of AODV routing under single and cooperative
//! black-hole attacks, with a reliability-based path vetting defence and a
//! flag-based comparison scheme.

pub mod adversary;
pub mod aodv;
pub mod baseline;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod network;
pub mod node;
pub mod packet;
pub mod rel;
pub mod scenario;
pub mod sim;

pub use config::{ScenarioConfig, Scheme};
pub use error::{ConfigError, MetricError, SimError};
pub use experiment::{RunRecord, CSV_HEADER};
pub use network::{NetParams, Network};
pub use scenario::{run_scenario, RunOutcome};
pub use sim::{NodeId, SimTime};

use crate::sim::NodeId;
use crate::sim::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("event scheduled at {at} which is before the current time {now}")]
    EventInPast { at: SimTime, now: SimTime },
    #[error("node {from} cannot unicast to non-neighbour {to}")]
    Undeliverable { from: NodeId, to: NodeId },
    #[error("topology still disconnected after {0} attempts")]
    Disconnected(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("`{field}`: {reason}")]
    Invariant { field: &'static str, reason: String },
    #[error("cannot read config: {0}")]
    Io(String),
}

//! Discrete-event CAN-FD simulation of the key exchange.
//!
//! Time is kept in integer nanoseconds. Every node is a single processor that
//! handles one message at a time; a handler's outputs are released after the
//! cost of its logged cryptographic work. Outgoing messages are fragmented
//! into 64-byte frames and compete for the bus frame by frame.

mod cost;
mod engine;
mod frame;
mod scenario;

use thiserror::Error;

use crate::protocol::ProtocolError;

pub use cost::{AttrTable, CostModel, NodeClass, OpKind, UnitCosts, UNIT_BLOCK};
pub use engine::{
    BusMessage, CostMode, Injection, RunStatus, SimConfig, SimReport, Simulator, TraceEvent, TraceKind, ATTACKER_INDEX,
};
pub use frame::{
    fragment, frame_time, frame_time_ns, reassemble, BusConfig, CanFdFrame, FRAG_DATA_LEN, FRAG_HEADER_LEN, MAX_PAYLOAD,
};
pub use scenario::{AttackKind, CostSection, GroupSection, NodesSection, PolicySection, ScenarioConfig, SA_ID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("payload of {0} bytes exceeds the 64-byte CAN-FD maximum")]
    OversizePayload(usize),
    #[error("message of {0} bytes needs more than 65535 fragments")]
    MessageTooLong(usize),
    #[error("incomplete message: {have} of {total} fragments")]
    Incomplete { have: usize, total: usize },
    #[error("fragments from different messages")]
    MixedFragments,
    #[error("attribute count {count} outside table range [{lo}, {hi}]; enable extrapolation to allow it")]
    Extrapolation { count: usize, lo: usize, hi: usize },
    #[error("no cost entry for {op:?} on {class}")]
    NoCost { class: NodeClass, op: OpKind },
    #[error("configuration: {0}")]
    Config(String),
    #[error("simulation stalled with unfinished sessions: {}", .0.join(", "))]
    Stall(Vec<String>),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

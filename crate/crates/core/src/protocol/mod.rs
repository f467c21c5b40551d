//! The twelve-step key exchange between a sender ECU, the security agent (SA)
//! and one or more receiver ECUs.
//!
//! Sessions are plain state machines. They take decoded [`WireMessage`]s and
//! return an [`Output`] holding the messages to send, alert records, events and
//! a log of the cryptographic work performed (the simulator prices that log).
//!
//! Message flow for one sender `S` and receiver `R`:
//!
//! ```text
//!  S -> SA  Hello              SA -> S  Challenge
//!  S -> SA  CipherPublish      S  -> *  KeyDigest
//!  R -> SA  Request            SA -> R  RequestChallenge
//!  R -> SA  CredentialSubmit   SA -> R  PartialResult
//!  R -> S   ReceiverAck        S  -> *  GroupList
//! ```

mod agent;
mod alert;
mod harness;
mod node;
mod provision;
mod receiver;
mod sender;
pub mod wire;

use std::fmt;

use thiserror::Error;

use crate::eabehp::EabehpError;
use crate::group::GroupError;
use crate::DeviceId;

pub use agent::{SaView, SecurityAgent};
pub use alert::{Alert, AlertCode};
pub use harness::{Delivery, Deployment, LoopbackNetwork, NetworkOutcome, ReceiverSpec, SenderSpec};
pub use node::EcuNode;
pub use provision::{provision, EcuKeys, EcuSpec, ProvisionedVehicle, SaKeys};
pub use receiver::{ReceiverSession, ReceiverState};
pub use sender::{key_commitment, key_mask, recover_data_key, xor32, SenderSession, SenderState};
pub use wire::{Body, MsgType, WireError, WireMessage, WireSchema};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("duplicate device id {0}")]
    DuplicateId(DeviceId),
    #[error("no ECU specs given")]
    NoEcus,
    #[error("unknown device id {0}")]
    UnknownDevice(DeviceId),
    #[error("session already started")]
    AlreadyStarted,
    #[error("invalid deployment: {0}")]
    Deployment(String),
    #[error(transparent)]
    Scheme(#[from] EabehpError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Which state machine an alert or event belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SessionId {
    Sender(DeviceId),
    Receiver {
        id: DeviceId,
        sender: DeviceId,
    },
    SaSender(DeviceId),
    SaReceiver {
        id: DeviceId,
        sender: DeviceId,
    },
    /// Node-level failures that no session claims (undecodable bytes, unknown peers).
    Node(DeviceId),
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionId::Sender(s) => write!(f, "sender:{s}"),
            SessionId::Receiver { id, sender } => write!(f, "receiver:{id}/{sender}"),
            SessionId::SaSender(s) => write!(f, "sa:{s}"),
            SessionId::SaReceiver { id, sender } => write!(f, "sa:{id}/{sender}"),
            SessionId::Node(n) => write!(f, "node:{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dest {
    Unicast(DeviceId),
    Broadcast,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outbound {
    pub to: Dest,
    pub msg: WireMessage,
}

/// Unit of cryptographic work, sized so a cost table can price it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CryptoOp {
    /// Hash or MAC over this many input bytes.
    Hash(usize),
    Encrypt(usize),
    Decrypt(usize),
    /// Encrypt + Shuffle over `N` system attributes.
    EncryptShuffle(usize),
    /// TransformCiphertext over `N` system attributes.
    Transform(usize),
    /// Extract + ProxyDecrypt1 for a receiver holding this many attributes.
    ExtractPd1(usize),
    ProxyDecrypt2(usize),
    TransformUserKey(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    /// Sender published its ciphertext and key digest.
    Published {
        sender: DeviceId,
    },
    /// Receiver recovered and verified the data-sharing key.
    KeyAccepted {
        receiver: DeviceId,
        sender: DeviceId,
    },
    /// Sender stored a receiver id in its key table.
    AckRecorded {
        sender: DeviceId,
        receiver: DeviceId,
    },
    WindowClosed {
        sender: DeviceId,
        receivers: usize,
    },
    MutualAuthOk {
        receiver: DeviceId,
        sender: DeviceId,
    },
    /// Harmless irregularity that did not change any state.
    Note(String),
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Published { sender } => write!(f, "published sender={sender}"),
            Event::KeyAccepted { receiver, sender } => {
                write!(f, "key-accepted receiver={receiver} sender={sender}")
            }
            Event::AckRecorded { sender, receiver } => {
                write!(f, "ack-recorded sender={sender} receiver={receiver}")
            }
            Event::WindowClosed { sender, receivers } => {
                write!(f, "window-closed sender={sender} receivers={receivers}")
            }
            Event::MutualAuthOk { receiver, sender } => {
                write!(f, "mutual-auth-ok receiver={receiver} sender={sender}")
            }
            Event::Note(s) => write!(f, "note {s}"),
        }
    }
}

/// Everything a handler produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub messages: Vec<Outbound>,
    pub alerts: Vec<Alert>,
    pub events: Vec<Event>,
    pub ops: Vec<CryptoOp>,
}

impl Output {
    pub fn send(&mut self, to: DeviceId, msg: WireMessage) {
        self.messages.push(Outbound {
            to: Dest::Unicast(to),
            msg,
        });
    }

    pub fn broadcast(&mut self, msg: WireMessage) {
        self.messages.push(Outbound {
            to: Dest::Broadcast,
            msg,
        });
    }

    pub fn alert(&mut self, session: SessionId, step: u8, code: AlertCode) {
        self.alerts.push(Alert { session, step, code });
    }

    pub fn op(&mut self, op: CryptoOp) {
        self.ops.push(op);
    }

    pub fn event(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn extend(&mut self, other: Output) {
        self.messages.extend(other.messages);
        self.alerts.extend(other.alerts);
        self.events.extend(other.events);
        self.ops.extend(other.ops);
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty() && self.alerts.is_empty() && self.events.is_empty() && self.ops.is_empty()
    }
}

/// Bounded per-peer memory of nonces already seen.
#[derive(Clone, Debug, Default)]
pub(crate) struct NonceCache {
    peers: std::collections::BTreeMap<DeviceId, std::collections::VecDeque<wire::Nonce>>,
}

impl NonceCache {
    pub const DEPTH: usize = 64;

    /// Records `n`; false if it was already present.
    pub fn insert(&mut self, peer: DeviceId, n: &wire::Nonce) -> bool {
        let q = self.peers.entry(peer).or_default();
        if q.contains(n) {
            return false;
        }
        if q.len() == Self::DEPTH {
            q.pop_front();
        }
        q.push_back(*n);
        true
    }
}

/// Fresh 16-byte nonce.
pub(crate) fn fresh_nonce<R: rand::RngCore>(rng: &mut R) -> wire::Nonce {
    let mut n = [0u8; wire::NONCE_LEN];
    rng.fill_bytes(&mut n);
    n
}

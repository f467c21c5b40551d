//! EC-SVC: edge-assisted, attribute-based authenticated key exchange for
//! CAN-FD in-vehicle networks.
//!
//! * [`group`] – Schnorr-group arithmetic and message splitting.
//! * [`primitives`] – PRF, truncated MAC, block-cipher PRP, keyed shuffle.
//! * [`eabehp`] – the hidden-policy / hidden-credential ABE scheme.
//! * [`protocol`] – provisioning, the twelve-step key exchange state machines
//!   and the byte-exact wire codec.
//! * [`sim`] – deterministic discrete-event CAN-FD simulator with a
//!   table-driven compute-cost model.
//! * [`bench`] – scenario runner, parameter sweeps, attack harnesses and the
//!   worked demo used by the `ecsvc` binary.
//!
//! Arithmetic is not constant time; this is a simulation artifact.

use std::fmt;

pub mod bench;
pub mod eabehp;
pub mod group;
pub mod primitives;
pub mod protocol;
pub mod sim;

/// 16-bit device identifier carried in every wire header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub u16);

impl DeviceId {
    pub fn to_be_bytes(self) -> [u8; 2] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

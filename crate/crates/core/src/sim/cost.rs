//! Table-driven compute costs.
//!
//! Unit costs (SHA-256, AES-128 encrypt and decrypt) are per 48-byte input
//! block. Scheme costs are tabulated against an attribute count and linearly
//! interpolated between keys.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::protocol::CryptoOp;

use super::SimError;

/// Bytes of input priced as one SHA or AES call.
pub const UNIT_BLOCK: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeClass {
    #[serde(rename = "ecu")]
    Ecu,
    #[serde(rename = "600MHz")]
    Sa600,
    #[serde(rename = "1.4GHz")]
    Sa1400,
}

impl NodeClass {
    pub const ALL: [NodeClass; 3] = [NodeClass::Ecu, NodeClass::Sa600, NodeClass::Sa1400];

    pub fn label(self) -> &'static str {
        match self {
            NodeClass::Ecu => "ecu",
            NodeClass::Sa600 => "600MHz",
            NodeClass::Sa1400 => "1.4GHz",
        }
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NodeClass {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ecu" => Ok(NodeClass::Ecu),
            "600MHz" | "600mhz" | "sa600" => Ok(NodeClass::Sa600),
            "1.4GHz" | "1.4ghz" | "sa1400" => Ok(NodeClass::Sa1400),
            other => Err(SimError::Config(format!("unknown node class `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Sha,
    AesEnc,
    AesDec,
    EncryptShuffle,
    Transform,
    ExtractPd1,
}

impl OpKind {
    pub fn is_unit(self) -> bool {
        matches!(self, OpKind::Sha | OpKind::AesEnc | OpKind::AesDec)
    }
}

/// Per-call costs in microseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitCosts {
    pub sha_us: f64,
    pub aes_enc_us: f64,
    pub aes_dec_us: f64,
}

/// Milliseconds against sorted attribute-count keys.
#[derive(Clone, Debug, PartialEq)]
pub struct AttrTable {
    keys: Vec<usize>,
    values_ms: Vec<f64>,
}

impl AttrTable {
    pub fn new(keys: Vec<usize>, values_ms: Vec<f64>) -> Result<Self, SimError> {
        if keys.len() != values_ms.len() || keys.len() < 2 {
            return Err(SimError::Config("table needs matching keys and values".into()));
        }
        if keys.windows(2).any(|w| w[0] >= w[1]) || values_ms.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(SimError::Config("table keys must increase and costs be >= 0".into()));
        }
        Ok(AttrTable { keys, values_ms })
    }

    pub fn keys(&self) -> &[usize] {
        &self.keys
    }

    pub fn values_ms(&self) -> &[f64] {
        &self.values_ms
    }

    /// Exact at keys, linear between them, linear from the nearest edge
    /// segment outside the range when `extrapolate` is set.
    pub fn lookup_ms(&self, x: usize, extrapolate: bool) -> Result<f64, SimError> {
        if let Ok(i) = self.keys.binary_search(&x) {
            return Ok(self.values_ms[i]);
        }
        let (lo, hi) = (self.keys[0], *self.keys.last().expect("non-empty"));
        if (x < lo || x > hi) && !extrapolate {
            return Err(SimError::Extrapolation { count: x, lo, hi });
        }
        let seg = match self.keys.iter().position(|k| *k > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => self.keys.len() - 2,
        };
        let (x0, x1) = (self.keys[seg] as f64, self.keys[seg + 1] as f64);
        let (y0, y1) = (self.values_ms[seg], self.values_ms[seg + 1]);
        Ok((y0 + (y1 - y0) * (x as f64 - x0) / (x1 - x0)).max(0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    pub units: BTreeMap<NodeClass, UnitCosts>,
    pub tables: BTreeMap<(NodeClass, OpKind), AttrTable>,
    pub allow_extrapolation: bool,
}

const ATTR_KEYS: [usize; 8] = [4, 8, 12, 16, 20, 24, 28, 32];

impl CostModel {
    /// Measured costs of the reference hardware.
    pub fn reference() -> Self {
        let units = BTreeMap::from([
            (
                NodeClass::Ecu,
                UnitCosts {
                    sha_us: 130.8,
                    aes_enc_us: 149.5,
                    aes_dec_us: 198.9,
                },
            ),
            (
                NodeClass::Sa600,
                UnitCosts {
                    sha_us: 8.4,
                    aes_enc_us: 5.4,
                    aes_dec_us: 6.7,
                },
            ),
            (
                NodeClass::Sa1400,
                UnitCosts {
                    sha_us: 3.6,
                    aes_enc_us: 12.7,
                    aes_dec_us: 13.8,
                },
            ),
        ]);
        let t = |v: [f64; 8]| AttrTable::new(ATTR_KEYS.to_vec(), v.to_vec()).expect("static table");
        let tables = BTreeMap::from([
            (
                (NodeClass::Ecu, OpKind::EncryptShuffle),
                t([144.7, 241.1, 338.8, 436.9, 529.5, 635.5, 714.8, 817.9]),
            ),
            (
                (NodeClass::Sa600, OpKind::Transform),
                t([7.0, 13.0, 20.9, 27.8, 34.4, 41.8, 47.6, 54.8]),
            ),
            (
                (NodeClass::Sa1400, OpKind::Transform),
                t([3.0, 6.0, 9.0, 12.0, 14.5, 17.5, 21.2, 23.6]),
            ),
            (
                (NodeClass::Sa600, OpKind::ExtractPd1),
                t([1.92, 2.05, 2.25, 2.46, 2.65, 3.0, 3.24, 3.64]),
            ),
            (
                (NodeClass::Sa1400, OpKind::ExtractPd1),
                t([0.82, 0.89, 0.96, 1.08, 1.12, 1.25, 1.44, 1.56]),
            ),
        ]);
        CostModel {
            units,
            tables,
            allow_extrapolation: false,
        }
    }

    pub fn with_extrapolation(mut self, allow: bool) -> Self {
        self.allow_extrapolation = allow;
        self
    }

    /// Seconds for one invocation. Unit ops ignore `attr_count`.
    pub fn compute_cost(&self, class: NodeClass, op: OpKind, attr_count: usize) -> Result<f64, SimError> {
        if op.is_unit() {
            let u = self.units.get(&class).ok_or(SimError::NoCost { class, op })?;
            let us = match op {
                OpKind::Sha => u.sha_us,
                OpKind::AesEnc => u.aes_enc_us,
                _ => u.aes_dec_us,
            };
            return Ok(us / 1e6);
        }
        let table = self.tables.get(&(class, op)).ok_or(SimError::NoCost { class, op })?;
        Ok(table.lookup_ms(attr_count, self.allow_extrapolation)? / 1e3)
    }

    /// Seconds charged for one logged operation on a node of `class`.
    pub fn price(&self, class: NodeClass, op: &CryptoOp) -> Result<f64, SimError> {
        let blocks = |len: usize| len.div_ceil(UNIT_BLOCK).max(1) as f64;
        Ok(match *op {
            CryptoOp::Hash(len) => blocks(len) * self.compute_cost(class, OpKind::Sha, 0)?,
            CryptoOp::Encrypt(len) => blocks(len) * self.compute_cost(class, OpKind::AesEnc, 0)?,
            CryptoOp::Decrypt(len) => blocks(len) * self.compute_cost(class, OpKind::AesDec, 0)?,
            CryptoOp::EncryptShuffle(n) => self.compute_cost(class, OpKind::EncryptShuffle, n)?,
            CryptoOp::Transform(n) => self.compute_cost(class, OpKind::Transform, n)?,
            CryptoOp::ExtractPd1(k) => self.compute_cost(class, OpKind::ExtractPd1, k)?,
            CryptoOp::ProxyDecrypt2(_) | CryptoOp::TransformUserKey(_) => 0.0,
        })
    }

    /// Total whole nanoseconds for a handler's operation log.
    pub fn price_ns(&self, class: NodeClass, ops: &[CryptoOp]) -> Result<u64, SimError> {
        let mut s = 0.0;
        for op in ops {
            s += self.price(class, op)?;
        }
        Ok((s * 1e9).round() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups() {
        let m = CostModel::reference();
        assert_eq!(
            m.compute_cost(NodeClass::Ecu, OpKind::EncryptShuffle, 16).unwrap(),
            436.9 / 1e3
        );
        assert_eq!(
            m.compute_cost(NodeClass::Sa1400, OpKind::ExtractPd1, 32).unwrap(),
            1.56 / 1e3
        );
        assert_eq!(m.compute_cost(NodeClass::Ecu, OpKind::Sha, 999).unwrap(), 130.8 / 1e6);
        let mid = m.compute_cost(NodeClass::Sa1400, OpKind::Transform, 6).unwrap();
        assert!((mid - 4.5e-3).abs() < 1e-12);
        assert!(matches!(
            m.compute_cost(NodeClass::Ecu, OpKind::EncryptShuffle, 3),
            Err(SimError::Extrapolation {
                count: 3,
                lo: 4,
                hi: 32
            })
        ));
        assert!(matches!(
            m.compute_cost(NodeClass::Ecu, OpKind::Transform, 8),
            Err(SimError::NoCost { .. })
        ));
        let x = m.with_extrapolation(true);
        let v = x.compute_cost(NodeClass::Ecu, OpKind::EncryptShuffle, 3).unwrap();
        assert!((v - (144.7 - 96.4 / 4.0) / 1e3).abs() < 1e-12);
        assert!(x.compute_cost(NodeClass::Sa1400, OpKind::Transform, 1).unwrap() >= 0.0);
    }

    #[test]
    fn pricing_by_blocks() {
        let m = CostModel::reference();
        let one = m.price(NodeClass::Ecu, &CryptoOp::Hash(48)).unwrap();
        let two = m.price(NodeClass::Ecu, &CryptoOp::Hash(49)).unwrap();
        assert_eq!(one, 130.8 / 1e6);
        assert_eq!(two, 2.0 * (130.8 / 1e6));
        assert_eq!(m.price(NodeClass::Ecu, &CryptoOp::Hash(0)).unwrap(), one);
        assert_eq!(m.price(NodeClass::Ecu, &CryptoOp::ProxyDecrypt2(3)).unwrap(), 0.0);
        assert_eq!(
            m.price_ns(NodeClass::Sa1400, &[CryptoOp::Transform(32), CryptoOp::Hash(10)])
                .unwrap(),
            23_603_600
        );
    }

    #[test]
    fn bad_tables_rejected() {
        assert!(AttrTable::new(vec![4, 4], vec![1.0, 2.0]).is_err());
        assert!(AttrTable::new(vec![4, 8], vec![1.0, -2.0]).is_err());
        assert!(AttrTable::new(vec![4], vec![1.0]).is_err());
    }
}

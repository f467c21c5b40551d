//! Scenario files.
//!
//! ```toml
//! name = "baseline"
//! seed = 1
//!
//! [group]
//! preset = "sim512"
//!
//! [bus]
//! data_rate = 4e6
//!
//! [costs]
//! sa_clock = "1.4GHz"
//!
//! [nodes]
//! n_sys_att = 32
//! receivers_per_sender = 10
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::Num;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::eabehp::{Policy, Trit};
use crate::group::GroupParams;
use crate::protocol::{Deployment, ReceiverSpec, SenderSpec};
use crate::DeviceId;

use super::{BusConfig, CostMode, CostModel, NodeClass, SimConfig, SimError};

pub const SA_ID: DeviceId = DeviceId(0);
const RECEIVER_BASE: u16 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Replay,
    Tamper,
    CuriousSa,
}

impl AttackKind {
    pub fn label(self) -> &'static str {
        match self {
            AttackKind::Replay => "replay",
            AttackKind::Tamper => "tamper",
            AttackKind::CuriousSa => "curious-sa",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AttackKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replay" => Ok(AttackKind::Replay),
            "tamper" => Ok(AttackKind::Tamper),
            "curious-sa" => Ok(AttackKind::CuriousSa),
            other => Err(SimError::Config(format!("unknown attack kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSection {
    /// `tiny`, `sim512` or `default2048`.
    pub preset: Option<String>,
    /// Explicit parameters, hex.
    pub p: Option<String>,
    pub q: Option<String>,
    pub g: Option<String>,
}

impl GroupSection {
    pub fn params(&self) -> Result<GroupParams, SimError> {
        let bad = |e: crate::group::GroupError| SimError::Config(format!("group: {e}"));
        match (&self.preset, &self.p, &self.q, &self.g) {
            (Some(name), None, None, None) => GroupParams::named(name).map_err(bad),
            (None, Some(p), Some(q), Some(g)) => {
                let hex = |s: &str| {
                    BigUint::from_str_radix(s.trim_start_matches("0x"), 16)
                        .map_err(|e| SimError::Config(format!("group: bad hex: {e}")))
                };
                GroupParams::new(hex(p)?, hex(q)?, hex(g)?).map_err(bad)
            }
            (None, None, None, None) => GroupParams::named("sim512").map_err(bad),
            _ => Err(SimError::Config(
                "group: give either `preset` or all of `p`, `q`, `g`".into(),
            )),
        }
    }

    pub fn label(&self) -> String {
        self.preset.clone().unwrap_or_else(|| {
            if self.p.is_some() {
                "custom".into()
            } else {
                "sim512".into()
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub mode: CostMode,
    pub sa_clock: NodeClass,
    pub extrapolate: bool,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            mode: CostMode::Table,
            sa_clock: NodeClass::Sa1400,
            extrapolate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodesSection {
    pub n_sys_att: usize,
    pub senders: usize,
    pub receivers_per_sender: usize,
    /// Receivers common to consecutive senders.
    pub shared_receivers: usize,
    pub n_rx_att: usize,
    /// Receivers per sender holding an unrequired attribute.
    pub non_satisfying: usize,
    pub window_ms: f64,
    /// Close a sender's window as soon as every satisfying receiver acked.
    pub close_on_expected: bool,
}

impl Default for NodesSection {
    fn default() -> Self {
        NodesSection {
            n_sys_att: 32,
            senders: 1,
            receivers_per_sender: 10,
            shared_receivers: 0,
            n_rx_att: 8,
            non_satisfying: 0,
            window_ms: 50.0,
            close_on_expected: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub required: Vec<usize>,
    /// Defaults to `[n_sys_att]` when receivers hold fewer than `n_sys_att`
    /// attributes.
    pub unrequired: Option<Vec<usize>>,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            required: vec![1],
            unrequired: None,
        }
    }
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default = "one")]
    pub r_k: u64,
    #[serde(default)]
    pub attack: Option<AttackKind>,
    /// Receivers derive the time key themselves from the group key. The SA
    /// never holds the group key, so `false` is rejected.
    #[serde(default = "yes")]
    pub receiver_time_key: bool,
    #[serde(default)]
    pub group: GroupSection,
    #[serde(default)]
    pub bus: BusConfig,
    #[serde(default)]
    pub costs: CostSection,
    #[serde(default)]
    pub nodes: NodesSection,
    #[serde(default)]
    pub policy: PolicySection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "baseline".into(),
            seed: 1,
            r_k: 1,
            attack: None,
            receiver_time_key: true,
            group: GroupSection::default(),
            bus: BusConfig::default(),
            costs: CostSection::default(),
            nodes: NodesSection::default(),
            policy: PolicySection::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(s: &str) -> Result<Self, SimError> {
        toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Sets one sweepable parameter. `sa_clock` takes GHz (0.6 or 1.4).
    pub fn set_param(&mut self, param: &str, value: f64) -> Result<(), SimError> {
        let count = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(SimError::Config(format!("{param} must be a whole number, got {v}")))
            }
        };
        match param {
            "data_rate" => self.bus.data_rate = value,
            "arb_rate" => self.bus.arb_rate = value,
            "n_sys_att" => {
                let n = count(value)?;
                if self.policy.unrequired == Some(vec![self.nodes.n_sys_att]) {
                    self.policy.unrequired = None;
                }
                self.nodes.n_sys_att = n;
            }
            "n_rx_att" => self.nodes.n_rx_att = count(value)?,
            "n_rx_ecu" => self.nodes.receivers_per_sender = count(value)?,
            "n_tx_ecu" => self.nodes.senders = count(value)?,
            "sa_clock" => {
                self.costs.sa_clock = if (value - 0.6).abs() < 1e-9 {
                    NodeClass::Sa600
                } else if (value - 1.4).abs() < 1e-9 {
                    NodeClass::Sa1400
                } else {
                    return Err(SimError::Config(format!(
                        "sa_clock must be 0.6 or 1.4 GHz, got {value}"
                    )));
                }
            }
            other => return Err(SimError::Config(format!("unknown sweep parameter `{other}`"))),
        }
        Ok(())
    }

    pub fn policy(&self) -> Result<Policy, SimError> {
        let n = self.nodes.n_sys_att;
        let unrequired = self.unrequired();
        let mut trits = vec![Trit::Irrelevant; n];
        for (list, t) in [(&self.policy.required, Trit::Required), (&unrequired, Trit::Unrequired)] {
            for &i in list {
                if i == 0 || i > n {
                    return Err(SimError::Config(format!("policy attribute {i} outside 1..={n}")));
                }
                if trits[i - 1] != Trit::Irrelevant {
                    return Err(SimError::Config(format!("policy attribute {i} listed twice")));
                }
                trits[i - 1] = t;
            }
        }
        Policy::new(trits).map_err(|e| SimError::Config(format!("policy: {e}")))
    }

    fn unrequired(&self) -> Vec<usize> {
        match &self.policy.unrequired {
            Some(u) => u.clone(),
            None if self.nodes.n_rx_att < self.nodes.n_sys_att => vec![self.nodes.n_sys_att],
            None => Vec::new(),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig, SimError> {
        self.bus.validate()?;
        let w = self.nodes.window_ms;
        if !(w.is_finite() && w >= 0.0) {
            return Err(SimError::Config("window_ms must be >= 0".into()));
        }
        if !matches!(self.costs.sa_clock, NodeClass::Sa600 | NodeClass::Sa1400) {
            return Err(SimError::Config("sa_clock must be 600MHz or 1.4GHz".into()));
        }
        Ok(SimConfig {
            bus: self.bus,
            costs: CostModel::reference().with_extrapolation(self.costs.extrapolate),
            mode: self.costs.mode,
            sa_class: self.costs.sa_clock,
            window_ns: (w * 1e6).round() as u64,
        })
    }

    /// Builds the topology: senders `1..=S`, receivers from 101, SA at 0.
    /// Sender `j` serves a window of receivers overlapping the previous
    /// sender's by `shared_receivers`.
    pub fn deployment(&self) -> Result<Deployment, SimError> {
        if !self.receiver_time_key {
            return Err(SimError::Config(
                "receiver_time_key = false is unsupported: the SA has no group key".into(),
            ));
        }
        let nd = &self.nodes;
        let n = nd.n_sys_att;
        if n == 0 || nd.senders == 0 || nd.receivers_per_sender == 0 {
            return Err(SimError::Config(
                "n_sys_att, senders and receivers_per_sender must be >= 1".into(),
            ));
        }
        if nd.senders > 1 && nd.shared_receivers >= nd.receivers_per_sender {
            return Err(SimError::Config(
                "shared_receivers must be below receivers_per_sender".into(),
            ));
        }
        if nd.non_satisfying > nd.receivers_per_sender {
            return Err(SimError::Config("non_satisfying exceeds receivers_per_sender".into()));
        }
        if nd.n_rx_att == 0 || nd.n_rx_att > n {
            return Err(SimError::Config(format!("n_rx_att must be in 1..={n}")));
        }
        let policy = self.policy()?;
        let required: Vec<usize> = policy.required().collect();
        let unrequired: Vec<usize> = policy.unrequired().collect();
        if required.len() > nd.n_rx_att {
            return Err(SimError::Config("n_rx_att is smaller than the required set".into()));
        }
        let free: Vec<usize> = (1..=n)
            .filter(|i| !required.contains(i) && !unrequired.contains(i))
            .collect();
        let stride = if nd.senders > 1 {
            nd.receivers_per_sender - nd.shared_receivers
        } else {
            nd.receivers_per_sender
        };
        let total = stride * (nd.senders - 1) + nd.receivers_per_sender;
        if nd.senders + total > 250 {
            return Err(SimError::Config("topology exceeds 250 ECUs".into()));
        }

        let mut rng = ChaCha20Rng::seed_from_u64(self.seed ^ 0x7363_656e_6172_696f);
        let senders: Vec<SenderSpec> = (0..nd.senders)
            .map(|j| SenderSpec {
                id: DeviceId(j as u16 + 1),
                attrs: required.clone(),
                policy: policy.clone(),
                expected_receivers: None,
            })
            .collect();
        let mut receivers = Vec::with_capacity(total);
        for i in 0..total {
            let subs: Vec<DeviceId> = (0..nd.senders)
                .filter(|j| i >= j * stride && i < j * stride + nd.receivers_per_sender)
                .map(|j| senders[j].id)
                .collect();
            // The last `non_satisfying` receivers of each window hold an
            // unrequired attribute.
            let bad = (0..nd.senders).any(|j| {
                let end = j * stride + nd.receivers_per_sender;
                i < end && i >= end - nd.non_satisfying
            });
            let mut attrs = required.clone();
            if bad {
                let Some(u) = unrequired.first() else {
                    return Err(SimError::Config("non_satisfying needs an unrequired attribute".into()));
                };
                attrs.push(*u);
            }
            let want = nd.n_rx_att.saturating_sub(attrs.len());
            let mut pool = free.clone();
            if pool.len() < want {
                pool.extend(unrequired.iter().filter(|u| !attrs.contains(u)));
                if bad || pool.len() < want {
                    return Err(SimError::Config(format!(
                        "cannot give receivers {} attributes under this policy",
                        nd.n_rx_att
                    )));
                }
            }
            attrs.extend(pool.choose_multiple(&mut rng, want).copied());
            attrs.sort_unstable();
            receivers.push(ReceiverSpec {
                id: DeviceId(RECEIVER_BASE + i as u16 + 1),
                attrs,
                senders: subs,
            });
        }
        let mut dep = Deployment {
            params: self.group.params()?,
            n_attrs: n,
            sa_id: SA_ID,
            senders,
            receivers,
        };
        if nd.close_on_expected {
            let expected: Vec<usize> = dep
                .senders
                .iter()
                .map(|s| {
                    dep.receivers
                        .iter()
                        .filter(|r| r.senders.contains(&s.id))
                        .filter(|r| {
                            let a = crate::eabehp::AttributeSet::new(n, r.attrs.iter().copied()).expect("valid");
                            crate::eabehp::satisfies(&s.policy, &a)
                        })
                        .count()
                })
                .collect();
            for (s, e) in dep.senders.iter_mut().zip(expected) {
                s.expected_receivers = Some(e);
            }
        }
        dep.ecu_specs()?;
        Ok(dep)
    }
}

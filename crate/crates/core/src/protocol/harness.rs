use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::eabehp::{AttributeSet, Policy};
use crate::group::GroupParams;
use crate::DeviceId;

use super::wire::WireSchema;
use super::{
    provision, Alert, Dest, EcuNode, EcuSpec, Event, Output, ProtocolError, ProvisionedVehicle, SecurityAgent,
};

#[derive(Clone, Debug)]
pub struct SenderSpec {
    pub id: DeviceId,
    pub attrs: Vec<usize>,
    pub policy: Policy,
    /// Close the ack window once this many receivers acknowledged.
    pub expected_receivers: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ReceiverSpec {
    pub id: DeviceId,
    pub attrs: Vec<usize>,
    pub senders: Vec<DeviceId>,
}

/// Who is on the bus, what they hold and who listens to whom.
#[derive(Clone, Debug)]
pub struct Deployment {
    pub params: GroupParams,
    pub n_attrs: usize,
    pub sa_id: DeviceId,
    pub senders: Vec<SenderSpec>,
    pub receivers: Vec<ReceiverSpec>,
}

impl Deployment {
    pub fn schema(&self) -> WireSchema {
        WireSchema::new(&self.params, self.n_attrs)
    }

    /// Validates the topology and lists every ECU with its attributes.
    pub fn ecu_specs(&self) -> Result<Vec<EcuSpec>, ProtocolError> {
        let mut seen = BTreeSet::from([self.sa_id]);
        let mut specs = Vec::new();
        let ids = self
            .senders
            .iter()
            .map(|s| (s.id, &s.attrs))
            .chain(self.receivers.iter().map(|r| (r.id, &r.attrs)));
        for (id, attrs) in ids {
            if !seen.insert(id) {
                return Err(ProtocolError::DuplicateId(id));
            }
            let attrs = AttributeSet::new(self.n_attrs, attrs.iter().copied())?;
            specs.push(EcuSpec { id, attrs });
        }
        for s in &self.senders {
            if s.policy.len() != self.n_attrs {
                return Err(ProtocolError::Deployment(format!(
                    "policy of sender {} has {} trits, expected {}",
                    s.id,
                    s.policy.len(),
                    self.n_attrs
                )));
            }
        }
        let sender_ids: BTreeSet<DeviceId> = self.senders.iter().map(|s| s.id).collect();
        for r in &self.receivers {
            if let Some(bad) = r.senders.iter().find(|s| !sender_ids.contains(s)) {
                return Err(ProtocolError::UnknownDevice(*bad));
            }
        }
        Ok(specs)
    }

    /// Receivers listening to `sender`.
    pub fn subscribers(&self, sender: DeviceId) -> Vec<DeviceId> {
        self.receivers
            .iter()
            .filter(|r| r.senders.contains(&sender))
            .map(|r| r.id)
            .collect()
    }

    /// Provisions keys and builds the SA and ECU nodes, all seeded from `seed`.
    pub fn instantiate(
        &self,
        seed: u64,
    ) -> Result<(ProvisionedVehicle, SecurityAgent, BTreeMap<DeviceId, EcuNode>), ProtocolError> {
        let specs = self.ecu_specs()?;
        let mut master = ChaCha20Rng::seed_from_u64(seed);
        let mut fork = || ChaCha20Rng::from_rng(&mut master).expect("chacha seeding");
        let vehicle = provision(&self.params, self.n_attrs, &specs, &mut fork())?;
        let sa = SecurityAgent::new(self.sa_id, vehicle.sa.clone(), fork());
        let mut nodes = BTreeMap::new();
        for spec in &specs {
            let role = self
                .senders
                .iter()
                .find(|s| s.id == spec.id)
                .map(|s| (s.policy.clone(), s.expected_receivers));
            let subs = self
                .receivers
                .iter()
                .find(|r| r.id == spec.id)
                .map(|r| r.senders.clone())
                .unwrap_or_default();
            let keys = vehicle.ecus[&spec.id].clone();
            nodes.insert(spec.id, EcuNode::new(keys, self.sa_id, role, subs, fork()));
        }
        Ok((vehicle, sa, nodes))
    }
}

/// One message hop as seen by a wire observer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub from: DeviceId,
    pub to: DeviceId,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, Default)]
pub struct NetworkOutcome {
    /// Deliveries actually handed to recipients, in order.
    pub transcript: Vec<Delivery>,
    pub alerts: Vec<Alert>,
    pub events: Vec<Event>,
}

impl NetworkOutcome {
    /// `(receiver, sender)` pairs that finished with mutual authentication.
    pub fn mutual_auth_ok(&self) -> BTreeSet<(DeviceId, DeviceId)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::MutualAuthOk { receiver, sender } => Some((*receiver, *sender)),
                _ => None,
            })
            .collect()
    }

    pub fn fatal_alerts(&self) -> impl Iterator<Item = &Alert> {
        self.alerts.iter().filter(|a| a.code.is_fatal())
    }
}

/// Synchronous in-process network: FIFO delivery, no timing.
pub struct LoopbackNetwork {
    deployment: Deployment,
    vehicle: ProvisionedVehicle,
    sa: SecurityAgent,
    nodes: BTreeMap<DeviceId, EcuNode>,
}

impl LoopbackNetwork {
    pub fn new(deployment: &Deployment, seed: u64) -> Result<Self, ProtocolError> {
        let (vehicle, sa, nodes) = deployment.instantiate(seed)?;
        Ok(LoopbackNetwork {
            deployment: deployment.clone(),
            vehicle,
            sa,
            nodes,
        })
    }

    pub fn vehicle(&self) -> &ProvisionedVehicle {
        &self.vehicle
    }

    pub fn sa(&self) -> &SecurityAgent {
        &self.sa
    }

    pub fn node(&self, id: DeviceId) -> Option<&EcuNode> {
        self.nodes.get(&id)
    }

    pub fn run_epoch(&mut self, r_k: u64) -> Result<NetworkOutcome, ProtocolError> {
        self.run_epoch_with(r_k, |_, d| Some(d.clone()))
    }

    /// Runs one epoch, passing every hop through `tamper`, which may replace
    /// or drop it. The first argument is the hop's position in the schedule.
    pub fn run_epoch_with(
        &mut self,
        r_k: u64,
        mut tamper: impl FnMut(usize, &Delivery) -> Option<Delivery>,
    ) -> Result<NetworkOutcome, ProtocolError> {
        let mut result = NetworkOutcome::default();
        let mut queue = VecDeque::new();
        self.sa.begin_epoch();
        let ids: Vec<DeviceId> = self.nodes.keys().copied().collect();
        for id in &ids {
            let out = self.nodes.get_mut(id).expect("listed").start_epoch(r_k.to_be_bytes())?;
            self.route(*id, out, &mut queue, &mut result);
        }

        let mut slot = 0;
        loop {
            while let Some(d) = queue.pop_front() {
                let hop = tamper(slot, &d);
                slot += 1;
                let Some(hop) = hop else { continue };
                let out = if hop.to == self.sa.id() {
                    self.sa.handle_bytes(&hop.bytes)
                } else if let Some(node) = self.nodes.get_mut(&hop.to) {
                    node.handle_bytes(&hop.bytes)
                } else {
                    Output::default()
                };
                let at = hop.to;
                result.transcript.push(hop);
                self.route(at, out, &mut queue, &mut result);
            }
            for id in &ids {
                let out = self.nodes.get_mut(id).expect("listed").on_idle();
                self.route(*id, out, &mut queue, &mut result);
            }
            if queue.is_empty() {
                break;
            }
        }
        for id in &ids {
            let out = self.nodes.get_mut(id).expect("listed").on_timeout();
            self.route(*id, out, &mut queue, &mut result);
        }
        Ok(result)
    }

    fn route(&self, from: DeviceId, out: Output, queue: &mut VecDeque<Delivery>, result: &mut NetworkOutcome) {
        result.alerts.extend(out.alerts);
        result.events.extend(out.events);
        for m in out.messages {
            let bytes = m.msg.encode();
            match m.to {
                Dest::Unicast(to) => queue.push_back(Delivery { from, to, bytes }),
                Dest::Broadcast => {
                    for to in self.deployment.subscribers(from) {
                        queue.push_back(Delivery {
                            from,
                            to,
                            bytes: bytes.clone(),
                        });
                    }
                }
            }
        }
    }
}

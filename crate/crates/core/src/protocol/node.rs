use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::eabehp::Policy;
use crate::DeviceId;

use super::wire::{Body, Epoch, WireMessage, WireSchema};
use super::{AlertCode, EcuKeys, NonceCache, Output, ProtocolError, ReceiverSession, SenderSession, SessionId};

#[derive(Clone, Debug)]
struct SenderRole {
    policy: Policy,
    expected: Option<usize>,
}

/// One ECU: at most one sender session plus one receiver session per
/// subscribed sender. Routes incoming messages to the right session.
pub struct EcuNode {
    keys: EcuKeys,
    sa_id: DeviceId,
    schema: WireSchema,
    role: Option<SenderRole>,
    subscriptions: Vec<DeviceId>,
    rng: ChaCha20Rng,
    nonces: NonceCache,
    sender: Option<SenderSession>,
    receivers: BTreeMap<DeviceId, ReceiverSession>,
}

impl EcuNode {
    pub fn new(
        keys: EcuKeys,
        sa_id: DeviceId,
        sender_policy: Option<(Policy, Option<usize>)>,
        subscriptions: Vec<DeviceId>,
        rng: ChaCha20Rng,
    ) -> Self {
        let schema = WireSchema::new(keys.params(), keys.mpk.n());
        EcuNode {
            keys,
            sa_id,
            schema,
            role: sender_policy.map(|(policy, expected)| SenderRole { policy, expected }),
            subscriptions,
            rng,
            nonces: NonceCache::default(),
            sender: None,
            receivers: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> DeviceId {
        self.keys.id()
    }

    pub fn keys(&self) -> &EcuKeys {
        &self.keys
    }

    pub fn sender(&self) -> Option<&SenderSession> {
        self.sender.as_ref()
    }

    pub fn receivers(&self) -> impl Iterator<Item = &ReceiverSession> {
        self.receivers.values()
    }

    pub fn receiver(&self, sender: DeviceId) -> Option<&ReceiverSession> {
        self.receivers.get(&sender)
    }

    /// Fresh sessions for epoch `r_k`, then their opening messages.
    pub fn start_epoch(&mut self, r_k: Epoch) -> Result<Output, ProtocolError> {
        let mut out = Output::default();
        self.sender = self.role.clone().map(|role| {
            SenderSession::new(
                self.keys.clone(),
                self.sa_id,
                role.policy,
                r_k,
                role.expected,
                ChaCha20Rng::from_rng(&mut self.rng).expect("chacha seeding"),
            )
        });
        self.receivers = self
            .subscriptions
            .iter()
            .map(|s| {
                let rng = ChaCha20Rng::from_rng(&mut self.rng).expect("chacha seeding");
                (*s, ReceiverSession::new(self.keys.clone(), self.sa_id, *s, r_k, rng))
            })
            .collect();
        if let Some(s) = self.sender.as_mut() {
            out.extend(s.start()?);
        }
        for r in self.receivers.values_mut() {
            out.extend(r.start()?);
        }
        Ok(out)
    }

    pub fn is_finished(&self) -> bool {
        self.sender.as_ref().is_none_or(|s| s.is_finished()) && self.receivers.values().all(|r| r.is_finished())
    }

    pub fn handle_bytes(&mut self, bytes: &[u8]) -> Output {
        match WireMessage::decode(bytes, &self.schema) {
            Ok(msg) => self.handle(&msg),
            Err(_) => {
                let mut out = Output::default();
                out.alert(SessionId::Node(self.id()), 0, AlertCode::Decode);
                out
            }
        }
    }

    pub fn handle(&mut self, msg: &WireMessage) -> Output {
        let mut out = Output::default();
        let step = msg.msg_type().step();
        let node = SessionId::Node(self.id());
        match &msg.body {
            Body::Challenge { nonce2, .. } => match self.sender.as_mut() {
                Some(s) if msg.sender == self.sa_id && !self.nonces.insert(msg.sender, nonce2) => {
                    s.fail(&mut out, step, AlertCode::Replay)
                }
                Some(s) => out.extend(s.handle(msg)),
                None => out.alert(node, step, AlertCode::Unexpected),
            },
            Body::ReceiverAck { .. } => match self.sender.as_mut() {
                Some(s) => out.extend(s.handle(msg)),
                None => out.alert(node, step, AlertCode::Unexpected),
            },
            Body::RequestChallenge { target, nonce4, .. } => match self.receivers.get_mut(target) {
                Some(r) if msg.sender == self.sa_id && !self.nonces.insert(msg.sender, nonce4) => {
                    r.fail(&mut out, step, AlertCode::Replay)
                }
                Some(r) => out.extend(r.handle(msg)),
                None => out.alert(node, step, AlertCode::Unexpected),
            },
            Body::PartialResult { target, .. } => match self.receivers.get_mut(target) {
                Some(r) => out.extend(r.handle(msg)),
                None => out.alert(node, step, AlertCode::Unexpected),
            },
            Body::KeyDigest { .. } | Body::GroupList { .. } => {
                if msg.sender == self.sa_id || msg.sender == self.id() {
                    out.alert(node, step, AlertCode::Unexpected);
                } else if let Some(r) = self.receivers.get_mut(&msg.sender) {
                    out.extend(r.handle(msg));
                }
                // Otherwise a broadcast for some other group.
            }
            Body::Hello { .. } | Body::CipherPublish { .. } | Body::Request { .. } | Body::CredentialSubmit { .. } => {
                out.alert(node, step, AlertCode::Unexpected)
            }
        }
        out
    }

    /// Bus went quiet: close the sender's collection window.
    pub fn on_idle(&mut self) -> Output {
        self.sender.as_mut().map(|s| s.close_window()).unwrap_or_default()
    }

    /// Protocol timers expired: abort whatever is still waiting.
    pub fn on_timeout(&mut self) -> Output {
        let mut out = Output::default();
        if let Some(s) = self.sender.as_mut() {
            out.extend(s.timeout());
        }
        for r in self.receivers.values_mut() {
            out.extend(r.timeout());
        }
        out
    }
}

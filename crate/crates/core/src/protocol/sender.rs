use rand_chacha::ChaCha20Rng;

use crate::eabehp::{encrypt, shuffle, time_key_gen, Policy};
use crate::group::{GroupElement, GroupParams, Scalar};
use crate::primitives::{
    hash, hash16, mac16_parts, prp_decrypt, prp_encrypt, tags_equal, SymmetricKey, Tag, DIGEST_LEN,
};
use crate::DeviceId;

use super::wire::{nonce_plus_one, Body, Epoch, MsgType, Nonce, WireMessage, MASKED_KEY_LEN};
use super::{fresh_nonce, AlertCode, CryptoOp, EcuKeys, Event, Output, ProtocolError, SessionId};

/// Hash mask that hides the wrapped data key `K'` inside a KeyDigest. Only a
/// party holding both the decrypted message `M` and the time key can strip it.
pub fn key_mask(params: &GroupParams, m: &GroupElement, omega: &Scalar) -> [u8; MASKED_KEY_LEN] {
    *hash(&[&params.encode_element(m), &omega.to_bytes32()]).as_bytes()
}

pub fn xor32(a: &[u8; MASKED_KEY_LEN], b: &[u8; MASKED_KEY_LEN]) -> [u8; MASKED_KEY_LEN] {
    std::array::from_fn(|i| a[i] ^ b[i])
}

/// `sigma' = mac16(K_group, K)`.
pub fn key_commitment(k_group: &SymmetricKey, k: &SymmetricKey) -> Tag {
    mac16_parts(k_group, &[k.as_bytes()])
}

/// Receiver side of the key embedding: unmask, unwrap and check the commitment.
pub fn recover_data_key(
    k_group: &SymmetricKey,
    params: &GroupParams,
    m: &GroupElement,
    omega: &Scalar,
    masked: &[u8; MASKED_KEY_LEN],
    commitment: &Tag,
) -> Option<SymmetricKey> {
    let wrapped = xor32(masked, &key_mask(params, m, omega));
    let k = prp_decrypt(k_group, &wrapped).ok()?;
    let k = SymmetricKey::from_slice(&k).ok()?;
    tags_equal(&key_commitment(k_group, &k), commitment).then_some(k)
}

/// `CK = mac16(K_pair, ID || N+1 || N'+1)`.
pub(crate) fn channel_key(k_pair: &SymmetricKey, id: DeviceId, n: &Nonce, n_peer: &Nonce) -> SymmetricKey {
    SymmetricKey::new(mac16_parts(
        k_pair,
        &[&id.to_be_bytes(), &nonce_plus_one(n), &nonce_plus_one(n_peer)],
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SenderState {
    Fresh,
    AwaitChallenge,
    Collecting,
    Closed,
    Aborted,
}

pub struct SenderSession {
    keys: EcuKeys,
    sa_id: DeviceId,
    policy: Policy,
    r_k: Epoch,
    expected: Option<usize>,
    rng: ChaCha20Rng,
    state: SenderState,
    n1: Nonce,
    k: Option<SymmetricKey>,
    acked: Vec<DeviceId>,
}

impl SenderSession {
    pub fn new(
        keys: EcuKeys,
        sa_id: DeviceId,
        policy: Policy,
        r_k: Epoch,
        expected: Option<usize>,
        rng: ChaCha20Rng,
    ) -> Self {
        SenderSession {
            keys,
            sa_id,
            policy,
            r_k,
            expected,
            rng,
            state: SenderState::Fresh,
            n1: [0; 16],
            k: None,
            acked: Vec::new(),
        }
    }

    pub fn id(&self) -> DeviceId {
        self.keys.id()
    }

    pub fn state(&self) -> SenderState {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, SenderState::Closed | SenderState::Aborted)
    }

    pub fn key(&self) -> Option<&SymmetricKey> {
        self.k.as_ref()
    }

    /// Receiver ids in the key table, in arrival order.
    pub fn acknowledged(&self) -> &[DeviceId] {
        &self.acked
    }

    fn session(&self) -> SessionId {
        SessionId::Sender(self.id())
    }

    pub(crate) fn fail(&mut self, out: &mut Output, step: u8, code: AlertCode) {
        out.alert(self.session(), step, code);
        if code.is_fatal() {
            self.state = SenderState::Aborted;
        }
    }

    /// Step 1: Hello.
    pub fn start(&mut self) -> Result<Output, ProtocolError> {
        if self.state != SenderState::Fresh {
            return Err(ProtocolError::AlreadyStarted);
        }
        let mut out = Output::default();
        self.n1 = fresh_nonce(&mut self.rng);
        let id = self.id();
        let sigma1 = mac16_parts(self.keys.k_pair(), &[&id.to_be_bytes(), &self.n1, &self.r_k]);
        out.op(CryptoOp::Hash(2 + 16 + 8));
        out.send(
            self.sa_id,
            WireMessage::new(
                id,
                Body::Hello {
                    sigma1,
                    nonce1: self.n1,
                    r_k: self.r_k,
                },
            ),
        );
        self.state = SenderState::AwaitChallenge;
        Ok(out)
    }

    pub fn handle(&mut self, msg: &WireMessage) -> Output {
        let mut out = Output::default();
        if self.state == SenderState::Aborted {
            return out;
        }
        let step = msg.msg_type().step();
        match (&msg.body, self.state) {
            (Body::Challenge { sigma2, nonce2 }, SenderState::AwaitChallenge) => {
                if msg.sender != self.sa_id {
                    self.fail(&mut out, step, AlertCode::UnknownPeer);
                } else {
                    self.on_challenge(sigma2, nonce2, &mut out);
                }
            }
            (Body::ReceiverAck { sigma8, c3 }, SenderState::Collecting) => {
                self.on_ack(msg.sender, sigma8, c3, &mut out);
            }
            _ => self.fail(&mut out, step, AlertCode::Unexpected),
        }
        out
    }

    /// Step 3: verify the challenge, encrypt and publish.
    fn on_challenge(&mut self, sigma2: &Tag, n2: &Nonce, out: &mut Output) {
        let id = self.id();
        let k_pair = *self.keys.k_pair();
        let expect = mac16_parts(&k_pair, &[&id.to_be_bytes(), &nonce_plus_one(&self.n1), n2]);
        out.op(CryptoOp::Hash(2 + 32));
        if !tags_equal(&expect, sigma2) {
            return self.fail(out, MsgType::Challenge.step(), AlertCode::BadMac);
        }

        let gp = self.keys.params().clone();
        let n = self.keys.mpk.n();
        let omega = time_key_gen(&self.keys.k_group, &self.r_k, &gp);
        out.op(CryptoOp::Hash(8 + 16));

        let k = SymmetricKey::random(&mut self.rng);
        let wrapped: [u8; MASKED_KEY_LEN] = prp_encrypt(&self.keys.k_group, k.as_bytes())
            .try_into()
            .expect("one key wraps to two blocks");
        out.op(CryptoOp::Encrypt(16));

        let m = gp.random_element(&mut self.rng);
        let masked = xor32(&wrapped, &key_mask(&gp, &m, &omega));
        out.op(CryptoOp::Hash(gp.element_len() + DIGEST_LEN));

        let c = match encrypt(&self.keys.mpk, &self.policy, &omega, &m, &mut self.rng).and_then(|c| shuffle(&c, &omega))
        {
            Ok(c) => c,
            Err(_) => return self.fail(out, MsgType::Challenge.step(), AlertCode::BadRequest),
        };
        out.op(CryptoOp::EncryptShuffle(n));

        let ck = channel_key(&k_pair, id, &self.n1, n2);
        out.op(CryptoOp::Hash(2 + 32));
        let sc = c.encode(&gp);
        let sigma3 = mac16_parts(&ck, &[&sc]);
        out.op(CryptoOp::Hash(sc.len()));
        let sigma_k = key_commitment(&self.keys.k_group, &k);
        out.op(CryptoOp::Hash(16));

        out.send(self.sa_id, WireMessage::new(id, Body::CipherPublish { sc, sigma3 }));
        out.broadcast(WireMessage::new(
            id,
            Body::KeyDigest {
                sigma_k,
                masked_key: masked,
            },
        ));
        out.event(Event::Published { sender: id });
        self.k = Some(k);
        self.state = SenderState::Collecting;
    }

    /// Step 11: record an acknowledging receiver.
    fn on_ack(&mut self, from: DeviceId, sigma8: &Tag, c3: &[u8], out: &mut Output) {
        let step = MsgType::ReceiverAck.step();
        let k = self.k.expect("collecting implies a key");
        out.op(CryptoOp::Hash(16 + c3.len()));
        if !tags_equal(&hash16(&[k.as_bytes(), c3]), sigma8) {
            return self.fail(out, step, AlertCode::BadMac);
        }
        out.op(CryptoOp::Decrypt(c3.len()));
        let id = match prp_decrypt(&k, c3) {
            Ok(p) if p.len() == 2 => DeviceId(u16::from_be_bytes([p[0], p[1]])),
            Ok(_) => return self.fail(out, step, AlertCode::Decode),
            Err(_) => return self.fail(out, step, AlertCode::DecryptFailed),
        };
        if id != from {
            return self.fail(out, step, AlertCode::BadRequest);
        }
        if self.acked.contains(&id) {
            out.event(Event::Note(format!("duplicate ack from {id}")));
            return self.fail(out, step, AlertCode::DuplicateAck);
        }
        self.acked.push(id);
        out.event(Event::AckRecorded {
            sender: self.id(),
            receiver: id,
        });
        if self.expected.is_some_and(|e| self.acked.len() >= e) {
            out.extend(self.close_window());
        }
    }

    /// Step 11 end: broadcast the key table. No-op unless collecting.
    pub fn close_window(&mut self) -> Output {
        let mut out = Output::default();
        if self.state != SenderState::Collecting {
            return out;
        }
        let k = self.k.expect("collecting implies a key");
        let ids: Vec<u8> = self.acked.iter().flat_map(|id| id.to_be_bytes()).collect();
        let c4 = prp_encrypt(&k, &ids);
        out.op(CryptoOp::Encrypt(ids.len()));
        let sigma9 = hash16(&[k.as_bytes(), &c4]);
        out.op(CryptoOp::Hash(16 + c4.len()));
        out.broadcast(WireMessage::new(self.id(), Body::GroupList { sigma9, c4 }));
        out.event(Event::WindowClosed {
            sender: self.id(),
            receivers: self.acked.len(),
        });
        self.state = SenderState::Closed;
        out
    }

    /// Protocol timer expiry while still waiting for the SA.
    pub fn timeout(&mut self) -> Output {
        let mut out = Output::default();
        if self.state == SenderState::AwaitChallenge {
            self.fail(&mut out, MsgType::Challenge.step(), AlertCode::Timeout);
        }
        out
    }
}

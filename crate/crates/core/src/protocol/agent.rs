use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;

use crate::eabehp::{
    extract, proxy_decrypt1, transform_ciphertext, AttributeSet, PartialDecryption, Stage, StagedCiphertext,
};
use crate::group::Scalar;
use crate::primitives::{hash16, mac16_parts, prp_decrypt, prp_encrypt, tags_equal, SymmetricKey, Tag};
use crate::DeviceId;

use super::sender::channel_key;
use super::wire::{nonce_plus_one, Body, Epoch, MsgType, Nonce, WireMessage, WireSchema, REQ_INFO};
use super::{fresh_nonce, AlertCode, CryptoOp, NonceCache, Output, SaKeys, SessionId};

enum SenderSlot {
    AwaitPublish { n1: Nonce, n2: Nonce },
    Published(StagedCiphertext),
    Aborted,
}

enum ReceiverSlot {
    AwaitCredential {
        n3: Nonce,
        n4: Nonce,
    },
    /// Credential accepted; waiting for the sender's ciphertext.
    Pending {
        ck: SymmetricKey,
        i_hat: AttributeSet,
        ak: Scalar,
    },
    Served,
    Aborted,
}

/// Everything the SA has observed, kept for curious-SA analysis.
#[derive(Clone, Debug, Default)]
pub struct SaView {
    /// Raw bytes of every message handed to the SA.
    pub received: Vec<Vec<u8>>,
    /// Decrypted credentials: (receiver, sender, permuted indices, AK).
    pub credentials: Vec<(DeviceId, DeviceId, AttributeSet, Scalar)>,
    /// Derived channel keys.
    pub channel_keys: Vec<SymmetricKey>,
    /// Transformed ciphertexts and partial decryptions, encoded.
    pub derived: Vec<Vec<u8>>,
    /// Partial decryptions returned, by (receiver, sender). Same content as
    /// the matching `derived` entries.
    pub partials: Vec<(DeviceId, DeviceId, PartialDecryption)>,
}

impl SaView {
    /// The view plus the SA's long-term keys as one byte string.
    pub fn to_bytes(&self, keys: &SaKeys) -> Vec<u8> {
        let gp = keys.params();
        let mut out = keys.to_bytes();
        for m in &self.received {
            out.extend_from_slice(m);
        }
        for (r, s, i_hat, ak) in &self.credentials {
            out.extend_from_slice(&r.to_be_bytes());
            out.extend_from_slice(&s.to_be_bytes());
            out.extend_from_slice(&i_hat.to_bitmap());
            out.extend_from_slice(&gp.encode_scalar(ak));
            out.extend_from_slice(&ak.to_bytes32());
        }
        for k in &self.channel_keys {
            out.extend_from_slice(k.as_bytes());
        }
        for d in &self.derived {
            out.extend_from_slice(d);
        }
        out
    }

    /// Concatenated wire bytes only.
    pub fn wire_bytes(&self) -> Vec<u8> {
        self.received.concat()
    }
}

/// The honest-but-curious security agent.
pub struct SecurityAgent {
    id: DeviceId,
    keys: SaKeys,
    schema: WireSchema,
    rng: ChaCha20Rng,
    nonces: NonceCache,
    senders: BTreeMap<DeviceId, SenderSlot>,
    receivers: BTreeMap<(DeviceId, DeviceId), ReceiverSlot>,
    view: SaView,
}

impl SecurityAgent {
    pub fn new(id: DeviceId, keys: SaKeys, rng: ChaCha20Rng) -> Self {
        let schema = WireSchema::new(keys.params(), keys.n());
        SecurityAgent {
            id,
            keys,
            schema,
            rng,
            nonces: NonceCache::default(),
            senders: BTreeMap::new(),
            receivers: BTreeMap::new(),
            view: SaView::default(),
        }
    }

    pub fn id(&self) -> DeviceId {
        self.id
    }

    pub fn keys(&self) -> &SaKeys {
        &self.keys
    }

    pub fn view(&self) -> &SaView {
        &self.view
    }

    pub fn schema(&self) -> &WireSchema {
        &self.schema
    }

    /// Drops per-session tables for a new epoch; the nonce cache survives.
    pub fn begin_epoch(&mut self) {
        self.senders.clear();
        self.receivers.clear();
    }

    /// Receivers whose credential was accepted but not yet served.
    pub fn pending_receivers(&self) -> usize {
        self.receivers
            .values()
            .filter(|s| matches!(s, ReceiverSlot::Pending { .. }))
            .count()
    }

    pub fn handle_bytes(&mut self, bytes: &[u8]) -> Output {
        self.view.received.push(bytes.to_vec());
        match WireMessage::decode(bytes, &self.schema) {
            Ok(msg) => self.handle(&msg),
            Err(_) => {
                let mut out = Output::default();
                out.alert(SessionId::Node(self.id), 0, AlertCode::Decode);
                out
            }
        }
    }

    pub fn handle(&mut self, msg: &WireMessage) -> Output {
        let mut out = Output::default();
        let from = msg.sender;
        let step = msg.msg_type().step();
        if !self.keys.pairwise.contains_key(&from) {
            out.alert(SessionId::Node(self.id), step, AlertCode::UnknownPeer);
            return out;
        }
        match &msg.body {
            Body::Hello { sigma1, nonce1, r_k } => self.on_hello(from, sigma1, nonce1, r_k, &mut out),
            Body::CipherPublish { sc, sigma3 } => self.on_publish(from, sc, sigma3, &mut out),
            Body::Request {
                target,
                sigma4,
                nonce3,
                r_k,
                req_info,
            } => self.on_request(from, *target, sigma4, nonce3, r_k, *req_info, &mut out),
            Body::CredentialSubmit { target, c1, sigma6 } => self.on_credential(from, *target, c1, sigma6, &mut out),
            // Broadcasts meant for receivers.
            Body::KeyDigest { .. } | Body::GroupList { .. } => {}
            _ => out.alert(SessionId::Node(self.id), step, AlertCode::Unexpected),
        }
        out
    }

    fn abort_sender(&mut self, s: DeviceId, step: u8, code: AlertCode, out: &mut Output) {
        out.alert(SessionId::SaSender(s), step, code);
        self.senders.insert(s, SenderSlot::Aborted);
    }

    fn abort_receiver(&mut self, r: DeviceId, s: DeviceId, step: u8, code: AlertCode, out: &mut Output) {
        out.alert(SessionId::SaReceiver { id: r, sender: s }, step, code);
        self.receivers.insert((r, s), ReceiverSlot::Aborted);
    }

    /// Step 2.
    fn on_hello(&mut self, s: DeviceId, sigma1: &Tag, n1: &Nonce, r_k: &Epoch, out: &mut Output) {
        let step = MsgType::Hello.step();
        let kp = self.keys.pairwise[&s];
        out.op(CryptoOp::Hash(2 + 16 + 8));
        if !tags_equal(&mac16_parts(&kp, &[&s.to_be_bytes(), n1, r_k]), sigma1) {
            return self.abort_sender(s, step, AlertCode::BadMac, out);
        }
        if !self.nonces.insert(s, n1) {
            return self.abort_sender(s, step, AlertCode::Replay, out);
        }
        if self.senders.contains_key(&s) {
            return self.abort_sender(s, step, AlertCode::Unexpected, out);
        }
        let n2 = fresh_nonce(&mut self.rng);
        let sigma2 = mac16_parts(&kp, &[&s.to_be_bytes(), &nonce_plus_one(n1), &n2]);
        out.op(CryptoOp::Hash(2 + 32));
        out.send(s, WireMessage::new(self.id, Body::Challenge { sigma2, nonce2: n2 }));
        self.senders.insert(s, SenderSlot::AwaitPublish { n1: *n1, n2 });
    }

    /// Step 4.
    fn on_publish(&mut self, s: DeviceId, sc: &[u8], sigma3: &Tag, out: &mut Output) {
        let step = MsgType::CipherPublish.step();
        let (n1, n2) = match self.senders.get(&s) {
            Some(SenderSlot::AwaitPublish { n1, n2 }) => (*n1, *n2),
            Some(SenderSlot::Aborted) => return,
            Some(SenderSlot::Published(_)) => return self.abort_sender(s, step, AlertCode::Replay, out),
            None => return self.abort_sender(s, step, AlertCode::Unexpected, out),
        };
        let ck = channel_key(&self.keys.pairwise[&s], s, &n1, &n2);
        out.op(CryptoOp::Hash(2 + 32));
        self.view.channel_keys.push(ck);
        out.op(CryptoOp::Hash(sc.len()));
        if !tags_equal(&mac16_parts(&ck, &[sc]), sigma3) {
            return self.abort_sender(s, step, AlertCode::BadMac, out);
        }
        let gp = self.keys.params().clone();
        let n = self.keys.n();
        let transformed = match StagedCiphertext::decode(sc, &gp, n) {
            Ok(c) if c.stage == Stage::Shuffled => transform_ciphertext(&c, &self.keys.tk, &gp),
            _ => return self.abort_sender(s, step, AlertCode::Decode, out),
        };
        let Ok(transformed) = transformed else {
            return self.abort_sender(s, step, AlertCode::Decode, out);
        };
        out.op(CryptoOp::Transform(n));
        self.view.derived.push(transformed.encode(&gp));
        self.senders.insert(s, SenderSlot::Published(transformed));

        let waiting: Vec<DeviceId> = self
            .receivers
            .iter()
            .filter(|((_, t), slot)| *t == s && matches!(slot, ReceiverSlot::Pending { .. }))
            .map(|((r, _), _)| *r)
            .collect();
        for r in waiting {
            self.serve(r, s, out);
        }
    }

    /// Step 6.
    #[allow(clippy::too_many_arguments)]
    fn on_request(
        &mut self,
        r: DeviceId,
        target: DeviceId,
        sigma4: &Tag,
        n3: &Nonce,
        r_k: &Epoch,
        req_info: u8,
        out: &mut Output,
    ) {
        let step = MsgType::Request.step();
        let kp = self.keys.pairwise[&r];
        out.op(CryptoOp::Hash(2 + 16 + 8 + 1 + 2));
        let expect = mac16_parts(&kp, &[&r.to_be_bytes(), n3, r_k, &[req_info], &target.to_be_bytes()]);
        if !tags_equal(&expect, sigma4) {
            return self.abort_receiver(r, target, step, AlertCode::BadMac, out);
        }
        if !self.nonces.insert(r, n3) {
            return self.abort_receiver(r, target, step, AlertCode::Replay, out);
        }
        if req_info != REQ_INFO || !self.keys.pairwise.contains_key(&target) || target == r {
            return self.abort_receiver(r, target, step, AlertCode::BadRequest, out);
        }
        if self.receivers.contains_key(&(r, target)) {
            return self.abort_receiver(r, target, step, AlertCode::Unexpected, out);
        }
        let n4 = fresh_nonce(&mut self.rng);
        let sigma5 = mac16_parts(
            &kp,
            &[&r.to_be_bytes(), &nonce_plus_one(n3), &n4, &target.to_be_bytes()],
        );
        out.op(CryptoOp::Hash(2 + 32 + 2));
        out.send(
            r,
            WireMessage::new(
                self.id,
                Body::RequestChallenge {
                    target,
                    sigma5,
                    nonce4: n4,
                },
            ),
        );
        self.receivers
            .insert((r, target), ReceiverSlot::AwaitCredential { n3: *n3, n4 });
    }

    /// Step 8, first half: open the credential.
    fn on_credential(&mut self, r: DeviceId, s: DeviceId, c1: &[u8], sigma6: &Tag, out: &mut Output) {
        let step = MsgType::CredentialSubmit.step();
        let (n3, n4) = match self.receivers.get(&(r, s)) {
            Some(ReceiverSlot::AwaitCredential { n3, n4 }) => (*n3, *n4),
            Some(ReceiverSlot::Aborted) => return,
            Some(ReceiverSlot::Pending { .. } | ReceiverSlot::Served) => {
                return self.abort_receiver(r, s, step, AlertCode::Replay, out)
            }
            None => return self.abort_receiver(r, s, step, AlertCode::Unexpected, out),
        };
        let ck = channel_key(&self.keys.pairwise[&r], r, &n3, &n4);
        out.op(CryptoOp::Hash(2 + 32));
        self.view.channel_keys.push(ck);
        out.op(CryptoOp::Decrypt(c1.len()));
        let Ok(plain) = prp_decrypt(&ck, c1) else {
            return self.abort_receiver(r, s, step, AlertCode::DecryptFailed, out);
        };
        let gp = self.keys.params().clone();
        let n = self.keys.n();
        let bitmap_len = n.div_ceil(8);
        if plain.len() != bitmap_len + gp.scalar_len() {
            return self.abort_receiver(r, s, step, AlertCode::Decode, out);
        }
        let (bitmap, ak_bytes) = plain.split_at(bitmap_len);
        out.op(CryptoOp::Hash(c1.len() + ak_bytes.len()));
        if !tags_equal(&hash16(&[c1, ak_bytes]), sigma6) {
            return self.abort_receiver(r, s, step, AlertCode::BadMac, out);
        }
        let (Ok(i_hat), Ok(ak)) = (AttributeSet::from_bitmap(n, bitmap), gp.decode_scalar(ak_bytes)) else {
            return self.abort_receiver(r, s, step, AlertCode::Decode, out);
        };
        if i_hat.is_empty() || !self.keys.rk.contains_key(&r) {
            return self.abort_receiver(r, s, step, AlertCode::BadRequest, out);
        }
        self.view.credentials.push((r, s, i_hat.clone(), ak.clone()));
        self.receivers.insert((r, s), ReceiverSlot::Pending { ck, i_hat, ak });
        if matches!(self.senders.get(&s), Some(SenderSlot::Published(_))) {
            self.serve(r, s, out);
        }
    }

    /// Step 8, second half: extract, partially decrypt and return.
    fn serve(&mut self, r: DeviceId, s: DeviceId, out: &mut Output) {
        let Some(ReceiverSlot::Pending { ck, i_hat, ak }) = self.receivers.remove(&(r, s)) else {
            return;
        };
        let Some(SenderSlot::Published(transformed)) = self.senders.get(&s) else {
            self.receivers.insert((r, s), ReceiverSlot::Pending { ck, i_hat, ak });
            return;
        };
        let gp = self.keys.params().clone();
        let ec = match extract(transformed, &i_hat, &gp) {
            Ok(ec) => ec,
            Err(_) => return self.abort_receiver(r, s, MsgType::CredentialSubmit.step(), AlertCode::BadRequest, out),
        };
        let pd = proxy_decrypt1(&ec, &ak, &self.keys.rk[&r], &self.keys.tk, &gp);
        out.op(CryptoOp::ExtractPd1(i_hat.len()));
        let plain = pd.encode(&gp);
        let c2 = prp_encrypt(&ck, &plain);
        out.op(CryptoOp::Encrypt(plain.len()));
        let sigma7 = hash16(&[&c2, &plain[..gp.element_len()]]);
        out.op(CryptoOp::Hash(c2.len() + gp.element_len()));
        self.view.derived.push(plain);
        self.view.partials.push((r, s, pd));
        out.send(
            r,
            WireMessage::new(self.id, Body::PartialResult { target: s, c2, sigma7 }),
        );
        self.receivers.insert((r, s), ReceiverSlot::Served);
    }
}

use rand_chacha::ChaCha20Rng;

use crate::eabehp::{
    inverse_permute_attrs, proxy_decrypt2, time_key_gen, transform_user_key, AttributeSet, PartialDecryption,
};
use crate::group::{GroupElement, Scalar};
use crate::primitives::{hash16, mac16_parts, prp_decrypt, prp_encrypt, tags_equal, SymmetricKey, Tag, DIGEST_LEN};
use crate::DeviceId;

use super::sender::{channel_key, recover_data_key};
use super::wire::{nonce_plus_one, Body, Epoch, MsgType, Nonce, WireMessage, MASKED_KEY_LEN, REQ_INFO};
use super::{fresh_nonce, AlertCode, CryptoOp, EcuKeys, Event, Output, ProtocolError, SessionId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReceiverState {
    Fresh,
    AwaitChallenge,
    AwaitResult,
    /// Partial result decrypted; waiting for the sender's key digest.
    AwaitDigest,
    AwaitGroupList,
    Done,
    Aborted,
}

/// One receiver's session for one sender's key.
pub struct ReceiverSession {
    keys: EcuKeys,
    sa_id: DeviceId,
    sender_id: DeviceId,
    r_k: Epoch,
    rng: ChaCha20Rng,
    state: ReceiverState,
    omega: Scalar,
    ak: Scalar,
    n3: Nonce,
    ck: Option<SymmetricKey>,
    i_hat: Option<AttributeSet>,
    digest: Option<(Tag, [u8; MASKED_KEY_LEN])>,
    recovered: Option<GroupElement>,
    k: Option<SymmetricKey>,
}

impl ReceiverSession {
    pub fn new(keys: EcuKeys, sa_id: DeviceId, sender_id: DeviceId, r_k: Epoch, rng: ChaCha20Rng) -> Self {
        ReceiverSession {
            keys,
            sa_id,
            sender_id,
            r_k,
            rng,
            state: ReceiverState::Fresh,
            omega: Scalar::default(),
            ak: Scalar::default(),
            n3: [0; 16],
            ck: None,
            i_hat: None,
            digest: None,
            recovered: None,
            k: None,
        }
    }

    pub fn id(&self) -> DeviceId {
        self.keys.id()
    }

    pub fn sender_id(&self) -> DeviceId {
        self.sender_id
    }

    pub fn state(&self) -> ReceiverState {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, ReceiverState::Done | ReceiverState::Aborted)
    }

    /// Data-sharing key, once recovered and verified.
    pub fn key(&self) -> Option<&SymmetricKey> {
        self.k.as_ref()
    }

    /// Message recovered by the final decryption step.
    pub fn recovered_message(&self) -> Option<&GroupElement> {
        self.recovered.as_ref()
    }

    /// Permuted credential submitted to the SA.
    pub fn submitted_credential(&self) -> Option<&AttributeSet> {
        self.i_hat.as_ref()
    }

    fn session(&self) -> SessionId {
        SessionId::Receiver {
            id: self.id(),
            sender: self.sender_id,
        }
    }

    pub(crate) fn fail(&mut self, out: &mut Output, step: u8, code: AlertCode) {
        out.alert(self.session(), step, code);
        if code.is_fatal() {
            self.state = ReceiverState::Aborted;
        }
    }

    /// Step 5: derive the time key locally and request a key.
    pub fn start(&mut self) -> Result<Output, ProtocolError> {
        if self.state != ReceiverState::Fresh {
            return Err(ProtocolError::AlreadyStarted);
        }
        let mut out = Output::default();
        let gp = self.keys.params().clone();
        self.omega = time_key_gen(&self.keys.k_group, &self.r_k, &gp);
        out.op(CryptoOp::Hash(8 + 16));
        self.ak = transform_user_key(&self.omega, &self.keys.user, &gp);
        out.op(CryptoOp::TransformUserKey(self.keys.user.attr_set.len()));

        self.n3 = fresh_nonce(&mut self.rng);
        let id = self.id();
        let sigma4 = mac16_parts(
            self.keys.k_pair(),
            &[
                &id.to_be_bytes(),
                &self.n3,
                &self.r_k,
                &[REQ_INFO],
                &self.sender_id.to_be_bytes(),
            ],
        );
        out.op(CryptoOp::Hash(2 + 16 + 8 + 1 + 2));
        out.send(
            self.sa_id,
            WireMessage::new(
                id,
                Body::Request {
                    target: self.sender_id,
                    sigma4,
                    nonce3: self.n3,
                    r_k: self.r_k,
                    req_info: REQ_INFO,
                },
            ),
        );
        self.state = ReceiverState::AwaitChallenge;
        Ok(out)
    }

    pub fn handle(&mut self, msg: &WireMessage) -> Output {
        let mut out = Output::default();
        if self.state == ReceiverState::Aborted {
            return out;
        }
        let step = msg.msg_type().step();
        let from_sa = msg.sender == self.sa_id;
        let from_sender = msg.sender == self.sender_id;
        match (&msg.body, self.state) {
            (Body::RequestChallenge { sigma5, nonce4, .. }, ReceiverState::AwaitChallenge) if from_sa => {
                self.on_challenge(sigma5, nonce4, &mut out)
            }
            (Body::PartialResult { c2, sigma7, .. }, ReceiverState::AwaitResult) if from_sa => {
                self.on_partial(c2, sigma7, &mut out)
            }
            (Body::KeyDigest { sigma_k, masked_key }, s) if from_sender && s != ReceiverState::Fresh => {
                if self.digest.is_some() {
                    self.fail(&mut out, step, AlertCode::Replay);
                } else {
                    self.digest = Some((*sigma_k, *masked_key));
                    if s == ReceiverState::AwaitDigest {
                        self.finish_key(&mut out);
                    }
                }
            }
            (Body::GroupList { sigma9, c4 }, ReceiverState::AwaitGroupList) if from_sender => {
                self.on_group_list(sigma9, c4, &mut out)
            }
            _ if !from_sa && !from_sender => self.fail(&mut out, step, AlertCode::UnknownPeer),
            _ => self.fail(&mut out, step, AlertCode::Unexpected),
        }
        out
    }

    /// Step 7: answer the SA's challenge with the encrypted, permuted credential.
    fn on_challenge(&mut self, sigma5: &Tag, n4: &Nonce, out: &mut Output) {
        let id = self.id();
        let k_pair = *self.keys.k_pair();
        let expect = mac16_parts(
            &k_pair,
            &[
                &id.to_be_bytes(),
                &nonce_plus_one(&self.n3),
                n4,
                &self.sender_id.to_be_bytes(),
            ],
        );
        out.op(CryptoOp::Hash(2 + 32 + 2));
        if !tags_equal(&expect, sigma5) {
            return self.fail(out, MsgType::RequestChallenge.step(), AlertCode::BadMac);
        }
        let ck = channel_key(&k_pair, id, &self.n3, n4);
        out.op(CryptoOp::Hash(2 + 32));

        let gp = self.keys.params();
        let attrs = &self.keys.user.attr_set;
        let i_hat = inverse_permute_attrs(attrs, &self.omega, attrs.universe());
        let ak = gp.encode_scalar(&self.ak);
        let mut plain = i_hat.to_bitmap();
        plain.extend_from_slice(&ak);
        let c1 = prp_encrypt(&ck, &plain);
        out.op(CryptoOp::Encrypt(plain.len()));
        let sigma6 = hash16(&[&c1, &ak]);
        out.op(CryptoOp::Hash(c1.len() + ak.len()));

        out.send(
            self.sa_id,
            WireMessage::new(
                id,
                Body::CredentialSubmit {
                    target: self.sender_id,
                    c1,
                    sigma6,
                },
            ),
        );
        self.ck = Some(ck);
        self.i_hat = Some(i_hat);
        self.state = ReceiverState::AwaitResult;
    }

    /// Step 10, first half: finish decryption.
    fn on_partial(&mut self, c2: &[u8], sigma7: &Tag, out: &mut Output) {
        let step = MsgType::PartialResult.step();
        let gp = self.keys.params().clone();
        let n = self.keys.mpk.n();
        let ck = self.ck.expect("set in step 7");
        out.op(CryptoOp::Decrypt(c2.len()));
        let plain = match prp_decrypt(&ck, c2) {
            Ok(p) => p,
            Err(_) => return self.fail(out, step, AlertCode::DecryptFailed),
        };
        if plain.len() != PartialDecryption::encoded_len(&gp, n) {
            return self.fail(out, step, AlertCode::Decode);
        }
        let sc_dd = &plain[..gp.element_len()];
        out.op(CryptoOp::Hash(c2.len() + sc_dd.len()));
        if !tags_equal(&hash16(&[c2, sc_dd]), sigma7) {
            return self.fail(out, step, AlertCode::BadMac);
        }
        let pd = match PartialDecryption::decode(&plain, &gp, n) {
            Ok(pd) => pd,
            Err(_) => return self.fail(out, step, AlertCode::Decode),
        };
        let i_hat = self.i_hat.as_ref().expect("set in step 7");
        let m = match proxy_decrypt2(&pd, &self.keys.user.attr_set, i_hat, &gp) {
            Ok(m) => m,
            Err(_) => return self.fail(out, step, AlertCode::Decode),
        };
        out.op(CryptoOp::ProxyDecrypt2(i_hat.len()));
        self.recovered = Some(m);
        self.state = ReceiverState::AwaitDigest;
        if self.digest.is_some() {
            self.finish_key(out);
        }
    }

    /// Step 10, second half: unwrap `K`, check it and acknowledge.
    fn finish_key(&mut self, out: &mut Output) {
        let step = MsgType::KeyDigest.step();
        let gp = self.keys.params();
        let m = self.recovered.as_ref().expect("set before finishing");
        let (commitment, masked) = self.digest.as_ref().expect("set before finishing");
        out.op(CryptoOp::Hash(gp.element_len() + DIGEST_LEN));
        out.op(CryptoOp::Decrypt(MASKED_KEY_LEN));
        out.op(CryptoOp::Hash(16));
        let Some(k) = recover_data_key(&self.keys.k_group, gp, m, &self.omega, masked, commitment) else {
            return self.fail(out, step, AlertCode::WrongKey);
        };
        let id = self.id();
        let c3 = prp_encrypt(&k, &id.to_be_bytes());
        out.op(CryptoOp::Encrypt(2));
        let sigma8 = hash16(&[k.as_bytes(), &c3]);
        out.op(CryptoOp::Hash(16 + c3.len()));
        out.send(self.sender_id, WireMessage::new(id, Body::ReceiverAck { sigma8, c3 }));
        out.event(Event::KeyAccepted {
            receiver: id,
            sender: self.sender_id,
        });
        self.k = Some(k);
        self.state = ReceiverState::AwaitGroupList;
    }

    /// Step 12: confirm our id is in the sender's key table.
    fn on_group_list(&mut self, sigma9: &Tag, c4: &[u8], out: &mut Output) {
        let step = MsgType::GroupList.step();
        let k = self.k.expect("set in step 10");
        out.op(CryptoOp::Hash(16 + c4.len()));
        if !tags_equal(&hash16(&[k.as_bytes(), c4]), sigma9) {
            return self.fail(out, step, AlertCode::BadMac);
        }
        out.op(CryptoOp::Decrypt(c4.len()));
        let ids = match prp_decrypt(&k, c4) {
            Ok(p) if p.len() % 2 == 0 => p,
            Ok(_) => return self.fail(out, step, AlertCode::Decode),
            Err(_) => return self.fail(out, step, AlertCode::DecryptFailed),
        };
        let me = self.id().to_be_bytes();
        if ids.chunks(2).any(|c| c == me) {
            self.state = ReceiverState::Done;
            out.event(Event::MutualAuthOk {
                receiver: self.id(),
                sender: self.sender_id,
            });
        } else {
            self.fail(out, step, AlertCode::MutualAuthFailure);
        }
    }

    /// Protocol timer expiry: any unfinished session aborts.
    pub fn timeout(&mut self) -> Output {
        let mut out = Output::default();
        let step = match self.state {
            ReceiverState::AwaitChallenge => MsgType::RequestChallenge.step(),
            ReceiverState::AwaitResult => MsgType::PartialResult.step(),
            ReceiverState::AwaitDigest => MsgType::KeyDigest.step(),
            ReceiverState::AwaitGroupList => MsgType::GroupList.step(),
            _ => return out,
        };
        self.fail(&mut out, step, AlertCode::Timeout);
        out
    }
}

//! Byte-exact message codec.
//!
//! Every message is `type (1) || sender_id (2, big endian) || body`. Body
//! layouts, with `E` the element width, `S` the scalar width and `N` the number
//! of system attributes:
//!
//! | type | name             | body                                                     |
//! |------|------------------|----------------------------------------------------------|
//! | 0x01 | Hello            | sigma1 (16) nonce1 (16) r_k (8)                          |
//! | 0x02 | Challenge        | sigma2 (16) nonce2 (16)                                  |
//! | 0x03 | CipherPublish    | sC (1 + E(N+2)) sigma3 (16)                              |
//! | 0x04 | Request          | target (2) sigma4 (16) nonce3 (16) r_k (8) req_info (1)  |
//! | 0x05 | RequestChallenge | target (2) sigma5 (16) nonce4 (16)                       |
//! | 0x06 | CredentialSubmit | target (2) C1 (pad(ceil(N/8) + S)) sigma6 (16)           |
//! | 0x07 | PartialResult    | target (2) C2 (pad(E(N+1))) sigma7 (16)                  |
//! | 0x08 | KeyDigest        | sigma' (16) masked K' (32)                               |
//! | 0x09 | ReceiverAck      | sigma8 (16) C3 (16)                                      |
//! | 0x0A | GroupList        | sigma9 (16) C4 (16k, k >= 1)                             |
//!
//! `pad(x)` is the block-cipher ciphertext length of an `x`-byte plaintext.

use thiserror::Error;

use crate::eabehp::{PartialDecryption, StagedCiphertext};
use crate::group::GroupParams;
use crate::primitives::{padded_len, Tag, BLOCK_LEN, TAG_LEN};
use crate::DeviceId;

pub const NONCE_LEN: usize = 16;
pub const EPOCH_LEN: usize = 8;
pub const MASKED_KEY_LEN: usize = 32;
pub const HEADER_LEN: usize = 3;
/// Fixed `Req_info` byte of a key request.
pub const REQ_INFO: u8 = 0x4b;

pub type Nonce = [u8; NONCE_LEN];
pub type Epoch = [u8; EPOCH_LEN];

/// Big-endian `+1` over the whole nonce, wrapping on overflow.
pub fn nonce_plus_one(n: &Nonce) -> Nonce {
    let mut out = *n;
    for b in out.iter_mut().rev() {
        let (v, carry) = b.overflowing_add(1);
        *b = v;
        if !carry {
            break;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0x01,
    Challenge = 0x02,
    CipherPublish = 0x03,
    Request = 0x04,
    RequestChallenge = 0x05,
    CredentialSubmit = 0x06,
    PartialResult = 0x07,
    KeyDigest = 0x08,
    ReceiverAck = 0x09,
    GroupList = 0x0a,
}

impl MsgType {
    pub const ALL: [MsgType; 10] = [
        MsgType::Hello,
        MsgType::Challenge,
        MsgType::CipherPublish,
        MsgType::Request,
        MsgType::RequestChallenge,
        MsgType::CredentialSubmit,
        MsgType::PartialResult,
        MsgType::KeyDigest,
        MsgType::ReceiverAck,
        MsgType::GroupList,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Hello => "Hello",
            MsgType::Challenge => "Challenge",
            MsgType::CipherPublish => "CipherPublish",
            MsgType::Request => "Request",
            MsgType::RequestChallenge => "RequestChallenge",
            MsgType::CredentialSubmit => "CredentialSubmit",
            MsgType::PartialResult => "PartialResult",
            MsgType::KeyDigest => "KeyDigest",
            MsgType::ReceiverAck => "ReceiverAck",
            MsgType::GroupList => "GroupList",
        }
    }

    /// Protocol step at which the recipient processes this message.
    pub fn step(self) -> u8 {
        match self {
            MsgType::Hello => 2,
            MsgType::Challenge => 3,
            MsgType::CipherPublish => 4,
            MsgType::Request => 6,
            MsgType::RequestChallenge => 7,
            MsgType::CredentialSubmit => 8,
            MsgType::PartialResult => 10,
            MsgType::KeyDigest => 10,
            MsgType::ReceiverAck => 11,
            MsgType::GroupList => 12,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("message of {0} bytes is shorter than the 3-byte header")]
    Truncated(usize),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("{msg_type:?} body is {got} bytes, schema requires {expected}")]
    BodyLength {
        msg_type: MsgType,
        expected: usize,
        got: usize,
    },
}

/// Field widths that depend on the deployment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireSchema {
    pub element_len: usize,
    pub scalar_len: usize,
    pub n_attrs: usize,
}

impl WireSchema {
    pub fn new(params: &GroupParams, n_attrs: usize) -> Self {
        WireSchema {
            element_len: params.element_len(),
            scalar_len: params.scalar_len(),
            n_attrs,
        }
    }

    pub fn ciphertext_len(&self) -> usize {
        1 + self.element_len * (self.n_attrs + 2)
    }

    pub fn credential_plain_len(&self) -> usize {
        self.n_attrs.div_ceil(8) + self.scalar_len
    }

    pub fn c1_len(&self) -> usize {
        padded_len(self.credential_plain_len())
    }

    pub fn partial_plain_len(&self) -> usize {
        self.element_len * (self.n_attrs + 1)
    }

    pub fn c2_len(&self) -> usize {
        padded_len(self.partial_plain_len())
    }

    pub fn c3_len(&self) -> usize {
        padded_len(2)
    }

    /// Exact body length, or `None` for the variable-length group list.
    pub fn body_len(&self, t: MsgType) -> Option<usize> {
        Some(match t {
            MsgType::Hello => TAG_LEN + NONCE_LEN + EPOCH_LEN,
            MsgType::Challenge => TAG_LEN + NONCE_LEN,
            MsgType::CipherPublish => self.ciphertext_len() + TAG_LEN,
            MsgType::Request => 2 + TAG_LEN + NONCE_LEN + EPOCH_LEN + 1,
            MsgType::RequestChallenge => 2 + TAG_LEN + NONCE_LEN,
            MsgType::CredentialSubmit => 2 + self.c1_len() + TAG_LEN,
            MsgType::PartialResult => 2 + self.c2_len() + TAG_LEN,
            MsgType::KeyDigest => TAG_LEN + MASKED_KEY_LEN,
            MsgType::ReceiverAck => TAG_LEN + self.c3_len(),
            MsgType::GroupList => return None,
        })
    }
}

/// Consistency helpers tying the schema to the scheme's own encoders.
impl WireSchema {
    pub fn matches_ciphertext(&self, params: &GroupParams) -> bool {
        StagedCiphertext::encoded_len(params, self.n_attrs) == self.ciphertext_len()
            && PartialDecryption::encoded_len(params, self.n_attrs) == self.partial_plain_len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    Hello {
        sigma1: Tag,
        nonce1: Nonce,
        r_k: Epoch,
    },
    Challenge {
        sigma2: Tag,
        nonce2: Nonce,
    },
    CipherPublish {
        sc: Vec<u8>,
        sigma3: Tag,
    },
    Request {
        target: DeviceId,
        sigma4: Tag,
        nonce3: Nonce,
        r_k: Epoch,
        req_info: u8,
    },
    RequestChallenge {
        target: DeviceId,
        sigma5: Tag,
        nonce4: Nonce,
    },
    CredentialSubmit {
        target: DeviceId,
        c1: Vec<u8>,
        sigma6: Tag,
    },
    PartialResult {
        target: DeviceId,
        c2: Vec<u8>,
        sigma7: Tag,
    },
    KeyDigest {
        sigma_k: Tag,
        masked_key: [u8; MASKED_KEY_LEN],
    },
    ReceiverAck {
        sigma8: Tag,
        c3: Vec<u8>,
    },
    GroupList {
        sigma9: Tag,
        c4: Vec<u8>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub sender: DeviceId,
    pub body: Body,
}

impl WireMessage {
    pub fn new(sender: DeviceId, body: Body) -> Self {
        WireMessage { sender, body }
    }

    pub fn msg_type(&self) -> MsgType {
        match self.body {
            Body::Hello { .. } => MsgType::Hello,
            Body::Challenge { .. } => MsgType::Challenge,
            Body::CipherPublish { .. } => MsgType::CipherPublish,
            Body::Request { .. } => MsgType::Request,
            Body::RequestChallenge { .. } => MsgType::RequestChallenge,
            Body::CredentialSubmit { .. } => MsgType::CredentialSubmit,
            Body::PartialResult { .. } => MsgType::PartialResult,
            Body::KeyDigest { .. } => MsgType::KeyDigest,
            Body::ReceiverAck { .. } => MsgType::ReceiverAck,
            Body::GroupList { .. } => MsgType::GroupList,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.msg_type() as u8];
        out.extend_from_slice(&self.sender.to_be_bytes());
        match &self.body {
            Body::Hello { sigma1, nonce1, r_k } => {
                out.extend_from_slice(sigma1);
                out.extend_from_slice(nonce1);
                out.extend_from_slice(r_k);
            }
            Body::Challenge { sigma2, nonce2 } => {
                out.extend_from_slice(sigma2);
                out.extend_from_slice(nonce2);
            }
            Body::CipherPublish { sc, sigma3 } => {
                out.extend_from_slice(sc);
                out.extend_from_slice(sigma3);
            }
            Body::Request {
                target,
                sigma4,
                nonce3,
                r_k,
                req_info,
            } => {
                out.extend_from_slice(&target.to_be_bytes());
                out.extend_from_slice(sigma4);
                out.extend_from_slice(nonce3);
                out.extend_from_slice(r_k);
                out.push(*req_info);
            }
            Body::RequestChallenge { target, sigma5, nonce4 } => {
                out.extend_from_slice(&target.to_be_bytes());
                out.extend_from_slice(sigma5);
                out.extend_from_slice(nonce4);
            }
            Body::CredentialSubmit { target, c1, sigma6 } => {
                out.extend_from_slice(&target.to_be_bytes());
                out.extend_from_slice(c1);
                out.extend_from_slice(sigma6);
            }
            Body::PartialResult { target, c2, sigma7 } => {
                out.extend_from_slice(&target.to_be_bytes());
                out.extend_from_slice(c2);
                out.extend_from_slice(sigma7);
            }
            Body::KeyDigest { sigma_k, masked_key } => {
                out.extend_from_slice(sigma_k);
                out.extend_from_slice(masked_key);
            }
            Body::ReceiverAck { sigma8, c3 } => {
                out.extend_from_slice(sigma8);
                out.extend_from_slice(c3);
            }
            Body::GroupList { sigma9, c4 } => {
                out.extend_from_slice(sigma9);
                out.extend_from_slice(c4);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], schema: &WireSchema) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated(bytes.len()));
        }
        let msg_type = MsgType::from_u8(bytes[0]).ok_or(WireError::UnknownType(bytes[0]))?;
        let sender = DeviceId(u16::from_be_bytes([bytes[1], bytes[2]]));
        let body = &bytes[HEADER_LEN..];
        match schema.body_len(msg_type) {
            Some(expected) if body.len() != expected => {
                return Err(WireError::BodyLength {
                    msg_type,
                    expected,
                    got: body.len(),
                })
            }
            None if body.len() < TAG_LEN + BLOCK_LEN || !(body.len() - TAG_LEN).is_multiple_of(BLOCK_LEN) => {
                return Err(WireError::BodyLength {
                    msg_type,
                    expected: TAG_LEN + BLOCK_LEN * ((body.len().saturating_sub(TAG_LEN)) / BLOCK_LEN).max(1),
                    got: body.len(),
                })
            }
            _ => {}
        }

        let mut r = Reader(body);
        let body = match msg_type {
            MsgType::Hello => Body::Hello {
                sigma1: r.array(),
                nonce1: r.array(),
                r_k: r.array(),
            },
            MsgType::Challenge => Body::Challenge {
                sigma2: r.array(),
                nonce2: r.array(),
            },
            MsgType::CipherPublish => Body::CipherPublish {
                sc: r.vec(schema.ciphertext_len()),
                sigma3: r.array(),
            },
            MsgType::Request => Body::Request {
                target: r.id(),
                sigma4: r.array(),
                nonce3: r.array(),
                r_k: r.array(),
                req_info: r.array::<1>()[0],
            },
            MsgType::RequestChallenge => Body::RequestChallenge {
                target: r.id(),
                sigma5: r.array(),
                nonce4: r.array(),
            },
            MsgType::CredentialSubmit => Body::CredentialSubmit {
                target: r.id(),
                c1: r.vec(schema.c1_len()),
                sigma6: r.array(),
            },
            MsgType::PartialResult => Body::PartialResult {
                target: r.id(),
                c2: r.vec(schema.c2_len()),
                sigma7: r.array(),
            },
            MsgType::KeyDigest => Body::KeyDigest {
                sigma_k: r.array(),
                masked_key: r.array(),
            },
            MsgType::ReceiverAck => Body::ReceiverAck {
                sigma8: r.array(),
                c3: r.vec(schema.c3_len()),
            },
            MsgType::GroupList => {
                let sigma9 = r.array();
                let rest = r.0.len();
                Body::GroupList {
                    sigma9,
                    c4: r.vec(rest),
                }
            }
        };
        Ok(WireMessage { sender, body })
    }
}

/// Cursor over a body whose total length was already validated.
struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> &[u8] {
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        head
    }

    fn array<const K: usize>(&mut self) -> [u8; K] {
        self.take(K).try_into().expect("length checked by schema")
    }

    fn vec(&mut self, n: usize) -> Vec<u8> {
        self.take(n).to_vec()
    }

    fn id(&mut self) -> DeviceId {
        DeviceId(u16::from_be_bytes(self.array()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> WireSchema {
        WireSchema {
            element_len: 64,
            scalar_len: 32,
            n_attrs: 8,
        }
    }

    fn arb_bytes<const K: usize>() -> impl Strategy<Value = [u8; K]> {
        proptest::collection::vec(any::<u8>(), K).prop_map(|v| v.try_into().unwrap())
    }

    fn arb_message() -> impl Strategy<Value = WireMessage> {
        let s = schema();
        let id = any::<u16>().prop_map(DeviceId);
        fn blob(n: usize) -> proptest::collection::VecStrategy<proptest::num::u8::Any> {
            proptest::collection::vec(any::<u8>(), n)
        }
        let body =
            prop_oneof![
                (arb_bytes::<16>(), arb_bytes::<16>(), arb_bytes::<8>())
                    .prop_map(|(sigma1, nonce1, r_k)| Body::Hello { sigma1, nonce1, r_k }),
                (arb_bytes::<16>(), arb_bytes::<16>()).prop_map(|(sigma2, nonce2)| Body::Challenge { sigma2, nonce2 }),
                (blob(s.ciphertext_len()), arb_bytes::<16>())
                    .prop_map(|(sc, sigma3)| Body::CipherPublish { sc, sigma3 }),
                (
                    id.clone(),
                    arb_bytes::<16>(),
                    arb_bytes::<16>(),
                    arb_bytes::<8>(),
                    any::<u8>()
                )
                    .prop_map(|(target, sigma4, nonce3, r_k, req_info)| Body::Request {
                        target,
                        sigma4,
                        nonce3,
                        r_k,
                        req_info
                    }),
                (id.clone(), arb_bytes::<16>(), arb_bytes::<16>())
                    .prop_map(|(target, sigma5, nonce4)| Body::RequestChallenge { target, sigma5, nonce4 }),
                (id.clone(), blob(s.c1_len()), arb_bytes::<16>())
                    .prop_map(|(target, c1, sigma6)| Body::CredentialSubmit { target, c1, sigma6 }),
                (id.clone(), blob(s.c2_len()), arb_bytes::<16>())
                    .prop_map(|(target, c2, sigma7)| Body::PartialResult { target, c2, sigma7 }),
                (arb_bytes::<16>(), arb_bytes::<32>())
                    .prop_map(|(sigma_k, masked_key)| { Body::KeyDigest { sigma_k, masked_key } }),
                (arb_bytes::<16>(), blob(16)).prop_map(|(sigma8, c3)| Body::ReceiverAck { sigma8, c3 }),
                (arb_bytes::<16>(), 1usize..5)
                    .prop_flat_map(|(sigma9, k)| blob(16 * k).prop_map(move |c4| Body::GroupList { sigma9, c4 })),
            ];
        (id, body).prop_map(|(sender, body)| WireMessage { sender, body })
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(m in arb_message()) {
            let bytes = m.encode();
            prop_assert_eq!(bytes[0], m.msg_type() as u8);
            prop_assert_eq!(WireMessage::decode(&bytes, &schema()).unwrap(), m);
        }

        #[test]
        fn truncation_is_rejected(m in arb_message(), cut in 1usize..16) {
            let bytes = m.encode();
            let short = &bytes[..bytes.len().saturating_sub(cut)];
            prop_assert!(WireMessage::decode(short, &schema()).is_err());
        }
    }

    #[test]
    fn short_and_unknown_inputs() {
        assert_eq!(WireMessage::decode(&[1, 0], &schema()), Err(WireError::Truncated(2)));
        assert_eq!(
            WireMessage::decode(&[0xff, 0, 1, 2, 3], &schema()),
            Err(WireError::UnknownType(0xff))
        );
        assert!(matches!(
            WireMessage::decode(&[0x0a, 0, 1], &schema()),
            Err(WireError::BodyLength { .. })
        ));
    }

    #[test]
    fn nonce_increment_carries() {
        let mut n = [0u8; 16];
        n[15] = 0xff;
        n[14] = 0x01;
        let m = nonce_plus_one(&n);
        assert_eq!(m[15], 0);
        assert_eq!(m[14], 2);
        assert_eq!(nonce_plus_one(&[0xff; 16]), [0u8; 16]);
    }

    #[test]
    fn schema_agrees_with_scheme_encoders() {
        let gp = GroupParams::tiny();
        let s = WireSchema::new(&gp, 3);
        assert!(s.matches_ciphertext(&gp));
        assert_eq!(s.ciphertext_len(), 1 + 5);
        assert_eq!(s.c1_len(), 16);
        assert_eq!(s.body_len(MsgType::Request), Some(43));
    }
}

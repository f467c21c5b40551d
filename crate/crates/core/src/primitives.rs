//! Symmetric building blocks: keyed PRF, truncated MAC, block-cipher PRP,
//! keyed shuffle, and digest-to-scalar reduction.
//!
//! The PRF is HMAC-SHA-256. The PRP is AES-128 in CBC mode with an all-zero
//! IV and `0x80 00..` padding; it is deterministic on purpose (every payload in
//! the protocol is keyed by a fresh session key).

use std::fmt;

use aes::cipher::{block_padding::Iso7816, BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use hmac::{Hmac, Mac};
use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::group::{GroupParams, Scalar};

type HmacSha256 = Hmac<Sha256>;
type CbcEnc = cbc::Encryptor<aes::Aes128>;
type CbcDec = cbc::Decryptor<aes::Aes128>;

pub const KEY_LEN: usize = 16;
pub const DIGEST_LEN: usize = 32;
pub const TAG_LEN: usize = 16;
pub const BLOCK_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrimitiveError {
    #[error("ciphertext length {0} is not a positive multiple of 16")]
    Length(usize),
    #[error("invalid padding")]
    Padding,
    #[error("key must be {KEY_LEN} bytes, got {0}")]
    KeyLength(usize),
}

/// 128-bit key used for both PRF and PRP roles.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymmetricKey([u8; KEY_LEN]);

impl SymmetricKey {
    pub const fn new(bytes: [u8; KEY_LEN]) -> Self {
        SymmetricKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, PrimitiveError> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| PrimitiveError::KeyLength(bytes.len()))?;
        Ok(SymmetricKey(arr))
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        SymmetricKey(k)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymmetricKey({})", hex::encode(&self.0[..4]))
    }
}

/// 32-byte PRF / hash output.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub const fn new(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn truncate16(&self) -> Tag {
        let mut t = [0u8; TAG_LEN];
        t.copy_from_slice(&self.0[..TAG_LEN]);
        t
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", hex::encode(self.0))
    }
}

pub type Tag = [u8; TAG_LEN];

/// HMAC-SHA-256 over an arbitrary-length key. Exposed for known-answer tests.
pub fn hmac_sha256(key: &[u8], input: &[u8]) -> Digest {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(input);
    Digest(mac.finalize().into_bytes().into())
}

pub fn prf(key: &SymmetricKey, input: &[u8]) -> Digest {
    hmac_sha256(&key.0, input)
}

/// PRF over the concatenation of `parts`.
pub fn prf_parts(key: &SymmetricKey, parts: &[&[u8]]) -> Digest {
    let mut mac = HmacSha256::new_from_slice(&key.0).expect("HMAC accepts any key length");
    for p in parts {
        mac.update(p);
    }
    Digest(mac.finalize().into_bytes().into())
}

/// Unkeyed SHA-256 over the concatenation of `parts`.
pub fn hash(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// First 16 bytes of `prf(key, input)`.
pub fn mac16(key: &SymmetricKey, input: &[u8]) -> Tag {
    prf(key, input).truncate16()
}

pub fn mac16_parts(key: &SymmetricKey, parts: &[&[u8]]) -> Tag {
    prf_parts(key, parts).truncate16()
}

/// First 16 bytes of the unkeyed hash.
pub fn hash16(parts: &[&[u8]]) -> Tag {
    hash(parts).truncate16()
}

/// Tag comparison without early exit.
pub fn tags_equal(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn verify_mac16(key: &SymmetricKey, input: &[u8], tag: &[u8]) -> bool {
    tags_equal(&mac16(key, input), tag)
}

/// Ciphertext length for a plaintext of `len` bytes (always at least one pad byte).
pub const fn padded_len(len: usize) -> usize {
    (len / BLOCK_LEN + 1) * BLOCK_LEN
}

pub fn prp_encrypt(key: &SymmetricKey, plaintext: &[u8]) -> Vec<u8> {
    CbcEnc::new(&key.0.into(), &[0u8; BLOCK_LEN].into()).encrypt_padded_vec_mut::<Iso7816>(plaintext)
}

pub fn prp_decrypt(key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, PrimitiveError> {
    if ciphertext.is_empty() || !ciphertext.len().is_multiple_of(BLOCK_LEN) {
        return Err(PrimitiveError::Length(ciphertext.len()));
    }
    CbcDec::new(&key.0.into(), &[0u8; BLOCK_LEN].into())
        .decrypt_padded_vec_mut::<Iso7816>(ciphertext)
        .map_err(|_| PrimitiveError::Padding)
}

/// Bijection on `{1..N}` together with its inverse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        let v: Vec<usize> = (1..=n).collect();
        Permutation {
            forward: v.clone(),
            inverse: v,
        }
    }

    /// Builds a permutation from its 1-based forward image table.
    pub fn from_forward(forward: Vec<usize>) -> Option<Self> {
        let n = forward.len();
        let mut inverse = vec![0usize; n];
        for (i, &f) in forward.iter().enumerate() {
            if f == 0 || f > n || inverse[f - 1] != 0 {
                return None;
            }
            inverse[f - 1] = i + 1;
        }
        Some(Permutation { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// `SH(i)` for `i` in `1..=N`.
    pub fn forward(&self, i: usize) -> usize {
        self.forward[i - 1]
    }

    /// `SH^-1(i)` for `i` in `1..=N`.
    pub fn inverse(&self, i: usize) -> usize {
        self.inverse[i - 1]
    }

    pub fn forward_table(&self) -> &[usize] {
        &self.forward
    }
}

/// PRF-keyed byte stream for index sampling.
struct PrfStream {
    key: SymmetricKey,
    counter: u64,
    buf: [u8; DIGEST_LEN],
    pos: usize,
}

impl PrfStream {
    fn new(key: SymmetricKey) -> Self {
        PrfStream {
            key,
            counter: 0,
            buf: [0; DIGEST_LEN],
            pos: DIGEST_LEN,
        }
    }

    fn next_u64(&mut self) -> u64 {
        if self.pos + 8 > DIGEST_LEN {
            self.buf = *prf(&self.key, &self.counter.to_be_bytes()).as_bytes();
            self.counter += 1;
            self.pos = 0;
        }
        let v = u64::from_be_bytes(self.buf[self.pos..self.pos + 8].try_into().unwrap());
        self.pos += 8;
        v
    }

    /// Uniform in `[0, bound)` by rejection sampling.
    fn below(&mut self, bound: u64) -> u64 {
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }
}

/// Fisher-Yates shuffle of `{1..N}` driven by a PRF stream keyed from `omega`.
pub fn keyed_shuffle(omega: &Scalar, n: usize) -> Permutation {
    let seed = hash(&[b"ecsvc/shuffle", &omega.to_bytes32()]);
    let key = SymmetricKey::from_slice(&seed.as_bytes()[..KEY_LEN]).unwrap();
    let mut stream = PrfStream::new(key);
    let mut forward: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        let j = stream.below(i as u64 + 1) as usize;
        forward.swap(i, j);
    }
    Permutation::from_forward(forward).expect("Fisher-Yates yields a bijection")
}

/// Big-endian digest reduced modulo `q`.
pub fn scalar_from_digest(d: &Digest, params: &GroupParams) -> Scalar {
    params.scalar(BigUint::from_bytes_be(d.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn mac16_is_prefix_of_prf() {
        let k = SymmetricKey::new([9; 16]);
        let d = prf(&k, b"abc");
        assert_eq!(&mac16(&k, b"abc")[..], &d.as_bytes()[..16]);
        assert_eq!(prf(&k, b"abc"), d);
    }

    #[test]
    fn mac16_verification() {
        let k = SymmetricKey::new([1; 16]);
        let mut tag = mac16(&k, b"frame");
        assert!(verify_mac16(&k, b"frame", &tag));
        tag[3] ^= 0x10;
        assert!(!verify_mac16(&k, b"frame", &tag));
        assert!(!verify_mac16(&k, b"frame", &tag[..15]));
    }

    #[test]
    fn prp_padding_lengths() {
        let k = SymmetricKey::new([2; 16]);
        assert_eq!(prp_encrypt(&k, &[7]).len(), 16);
        assert_eq!(prp_encrypt(&k, &[0; 15]).len(), 16);
        assert_eq!(prp_encrypt(&k, &[0; 16]).len(), 32);
        assert_eq!(prp_encrypt(&k, &[0; 48]).len(), 64);
        assert_eq!(padded_len(48), 64);
        assert_eq!(padded_len(0), 16);
    }

    #[test]
    fn prp_rejects_bad_lengths_and_padding() {
        let k = SymmetricKey::new([3; 16]);
        assert_eq!(prp_decrypt(&k, &[]), Err(PrimitiveError::Length(0)));
        assert_eq!(prp_decrypt(&k, &[0; 17]), Err(PrimitiveError::Length(17)));
        // Random block under a wrong key almost never ends in 0x80 00..
        let c = prp_encrypt(&k, b"0123456789");
        let wrong = SymmetricKey::new([4; 16]);
        assert_eq!(prp_decrypt(&wrong, &c), Err(PrimitiveError::Padding));
    }

    #[test]
    fn prp_round_trip_on_48_byte_payloads() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = SymmetricKey::random(&mut rng);
            let mut m = [0u8; 48];
            rng.fill_bytes(&mut m);
            assert_eq!(prp_decrypt(&k, &prp_encrypt(&k, &m)).unwrap(), m);
        }
    }

    #[test]
    fn shuffle_basics() {
        let gp = GroupParams::tiny();
        assert_eq!(keyed_shuffle(&gp.scalar(5u32), 1), Permutation::identity(1));
        let w = gp.scalar(7u32);
        let a = keyed_shuffle(&w, 16);
        assert_eq!(a, keyed_shuffle(&w, 16));
        for i in 1..=16 {
            assert_eq!(a.forward(a.inverse(i)), i);
            assert_eq!(a.inverse(a.forward(i)), i);
        }
        assert_ne!(a, keyed_shuffle(&gp.scalar(8u32), 16));
    }

    #[test]
    fn shuffle_is_bijective_for_many_keys() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let gp = GroupParams::named("sim512").unwrap();
        for n in 1..=64 {
            for _ in 0..100 {
                let p = keyed_shuffle(&gp.random_scalar(&mut rng), n);
                let mut img = p.forward_table().to_vec();
                img.sort_unstable();
                assert_eq!(img, (1..=n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn from_forward_rejects_non_bijections() {
        assert!(Permutation::from_forward(vec![1, 1]).is_none());
        assert!(Permutation::from_forward(vec![0, 1]).is_none());
        assert!(Permutation::from_forward(vec![3, 1]).is_none());
        assert!(Permutation::from_forward(vec![2, 1]).is_some());
    }

    #[test]
    fn scalar_from_digest_reduces() {
        let gp = GroupParams::tiny();
        assert!(scalar_from_digest(&Digest::new([0; 32]), &gp).is_zero());
        let mut b = [0u8; 32];
        b[31] = 25;
        assert_eq!(scalar_from_digest(&Digest::new(b), &gp).to_u64(), Some(3));
        assert!(scalar_from_digest(&Digest::new([0xff; 32]), &gp).value() < gp.q());
    }
}

//! Prime-order subgroup arithmetic (Schnorr groups) and message splitting.
//!
//! All EABEHP algebra lives in the order-`q` subgroup of `Z_p^*`, where `p` and
//! `q` are primes with `q | p - 1` and `g` generates the subgroup. Messages are
//! subgroup elements, exponents are scalars in `Z_q`.
//!
//! **Not constant time.** Exponentiation and reduction are delegated to
//! `num-bigint`, whose running time depends on operand values. This crate is a
//! protocol and timing simulator; do not use it to protect real secrets.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::eabehp::{Policy, Trit};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("parameter generation failed: {0}")]
    GenerationFailed(String),
    #[error("invalid group parameters: {0}")]
    InvalidParams(String),
    #[error("unknown named group `{0}`")]
    UnknownGroup(String),
    #[error("malformed group parameter text: {0}")]
    Parse(String),
    #[error("encoded value has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("value is not a member of the order-q subgroup")]
    NotMember,
    #[error("scalar out of range")]
    ScalarRange,
    #[error("policy has no required attribute")]
    NoRequiredAttribute,
}

/// Element of the order-`q` subgroup, stored as its residue in `[1, p-1]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(BigUint);

/// Exponent in `Z_q`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Scalar(BigUint);

impl GroupElement {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn to_u64(&self) -> Option<u64> {
        u64::try_from(&self.0).ok()
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({:x})", self.0)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_u64(&self) -> Option<u64> {
        u64::try_from(&self.0).ok()
    }

    /// Fixed 32-byte big-endian encoding, independent of the group.
    ///
    /// Used where a scalar keys a PRF (the shuffle seed, the key mask) so the
    /// derived value does not depend on the wire width of `q`.
    pub fn to_bytes32(&self) -> [u8; 32] {
        let raw = self.0.to_bytes_be();
        let mut out = [0u8; 32];
        let n = raw.len().min(32);
        out[32 - n..].copy_from_slice(&raw[raw.len() - n..]);
        out
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({:x})", self.0)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Schnorr group description `(p, q, g)`.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    g: BigUint,
    element_len: usize,
    scalar_len: usize,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("p_bits", &self.p.bits())
            .field("q_bits", &self.q.bits())
            .finish()
    }
}

// Named groups produced by `generate_params` and frozen here so that callers do
// not pay for a prime search. Tests regenerate them from the recorded seeds.
const SIM512_SEED: &[u8] = b"ecsvc/sim512";
const SIM512_P: &str = include_str!("groups/sim512.p");
const SIM512_Q: &str = include_str!("groups/sim512.q");
const SIM512_G: &str = include_str!("groups/sim512.g");

const DEFAULT2048_SEED: &[u8] = b"ecsvc/default2048";
const DEFAULT2048_P: &str = include_str!("groups/default2048.p");
const DEFAULT2048_Q: &str = include_str!("groups/default2048.q");
const DEFAULT2048_G: &str = include_str!("groups/default2048.g");

/// Names accepted by [`GroupParams::named`].
pub const NAMED_GROUPS: &[&str] = &["tiny", "sim512", "default2048"];

/// Seed and sizes used to derive a named group, for regeneration checks.
pub fn named_group_recipe(name: &str) -> Option<(usize, usize, &'static [u8])> {
    match name {
        "sim512" => Some((512, 256, SIM512_SEED)),
        "default2048" => Some((2048, 256, DEFAULT2048_SEED)),
        _ => None,
    }
}

impl GroupParams {
    /// Builds parameters from raw integers and checks every group invariant.
    pub fn new(p: BigUint, q: BigUint, g: BigUint) -> Result<Self, GroupError> {
        let params = Self::new_unchecked(p, q, g);
        params.validate()?;
        Ok(params)
    }

    fn new_unchecked(p: BigUint, q: BigUint, g: BigUint) -> Self {
        let element_len = (p.bits() as usize).div_ceil(8);
        let scalar_len = (q.bits() as usize).div_ceil(8);
        GroupParams {
            p,
            q,
            g,
            element_len,
            scalar_len,
        }
    }

    /// `tiny` (p=23, q=11, g=4), `sim512` or `default2048`.
    pub fn named(name: &str) -> Result<Self, GroupError> {
        let hex = |s: &str| {
            BigUint::parse_bytes(s.trim().as_bytes(), 16)
                .ok_or_else(|| GroupError::Parse(format!("bad embedded constant for {name}")))
        };
        match name {
            "tiny" => Ok(Self::new_unchecked(23u32.into(), 11u32.into(), 4u32.into())),
            "sim512" => Ok(Self::new_unchecked(hex(SIM512_P)?, hex(SIM512_Q)?, hex(SIM512_G)?)),
            "default2048" => Ok(Self::new_unchecked(
                hex(DEFAULT2048_P)?,
                hex(DEFAULT2048_Q)?,
                hex(DEFAULT2048_G)?,
            )),
            other => Err(GroupError::UnknownGroup(other.to_string())),
        }
    }

    pub fn tiny() -> Self {
        Self::new_unchecked(23u32.into(), 11u32.into(), 4u32.into())
    }

    /// Deterministically searches for `(p, q, g)` with the requested sizes.
    ///
    /// `q` is a random `q_bits` prime; `p` is then drawn from the progression
    /// `1 (mod 2q)` until a `p_bits` prime is found.
    pub fn generate(p_bits: usize, q_bits: usize, seed: &[u8]) -> Result<Self, GroupError> {
        if q_bits >= p_bits {
            return Err(GroupError::GenerationFailed(format!(
                "q_bits ({q_bits}) must be smaller than p_bits ({p_bits})"
            )));
        }
        if p_bits < 512 {
            return Err(GroupError::GenerationFailed(format!(
                "p_bits ({p_bits}) below 512; use a named test group instead"
            )));
        }
        if q_bits < 16 {
            return Err(GroupError::GenerationFailed(format!("q_bits ({q_bits}) too small")));
        }

        let mut h = Sha256::new();
        h.update(b"ecsvc-group-generation");
        h.update((p_bits as u64).to_be_bytes());
        h.update((q_bits as u64).to_be_bytes());
        h.update(seed);
        let mut rng = ChaCha20Rng::from_seed(h.finalize().into());

        let q = search_prime(q_bits, 64 * q_bits, &mut rng, |c| {
            c.set_bit(q_bits as u64 - 1, true);
            c.set_bit(0, true);
        })
        .ok_or_else(|| GroupError::GenerationFailed("no prime q found".into()))?;

        let two_q = &q << 1u32;
        let lower = BigUint::one() << (p_bits as u64 - 1);
        let mut p = None;
        for _ in 0..(64 * p_bits) {
            let mut x = rng.gen_biguint(p_bits as u64);
            x.set_bit(p_bits as u64 - 1, true);
            let candidate = &x - (&x % &two_q) + 1u32;
            if candidate < lower || candidate.bits() as usize != p_bits {
                continue;
            }
            if is_probable_prime(&candidate, 32, &mut rng) {
                p = Some(candidate);
                break;
            }
        }
        let p = p.ok_or_else(|| GroupError::GenerationFailed("no prime p found".into()))?;

        let cofactor = (&p - 1u32) / &q;
        let mut h = BigUint::from(2u32);
        let g = loop {
            let g = h.modpow(&cofactor, &p);
            if !g.is_one() {
                break g;
            }
            h += 1u32;
        };
        Ok(Self::new_unchecked(p, q, g))
    }

    /// Checks `q | p-1`, `g != 1`, `g^q = 1` and probable primality of `p`, `q`.
    pub fn validate(&self) -> Result<(), GroupError> {
        let one = BigUint::one();
        if self.p <= BigUint::from(3u32) || self.q < BigUint::from(2u32) {
            return Err(GroupError::InvalidParams("p or q too small".into()));
        }
        if !(&self.p - &one).is_multiple_of(&self.q) {
            return Err(GroupError::InvalidParams("q does not divide p-1".into()));
        }
        if self.g <= one || self.g >= self.p {
            return Err(GroupError::InvalidParams("g out of range or identity".into()));
        }
        if !self.g.modpow(&self.q, &self.p).is_one() {
            return Err(GroupError::InvalidParams("g^q != 1 mod p".into()));
        }
        let mut rng = ChaCha20Rng::from_seed([7u8; 32]);
        if !is_probable_prime(&self.q, 32, &mut rng) {
            return Err(GroupError::InvalidParams("q is not prime".into()));
        }
        if !is_probable_prime(&self.p, 32, &mut rng) {
            return Err(GroupError::InvalidParams("p is not prime".into()));
        }
        Ok(())
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement(self.g.clone())
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(BigUint::one())
    }

    /// Width in bytes of an encoded group element.
    pub fn element_len(&self) -> usize {
        self.element_len
    }

    /// Width in bytes of an encoded scalar.
    pub fn scalar_len(&self) -> usize {
        self.scalar_len
    }

    pub fn is_member(&self, value: &BigUint) -> bool {
        !value.is_zero() && value < &self.p && value.modpow(&self.q, &self.p).is_one()
    }

    /// Wraps a residue after checking subgroup membership.
    pub fn element(&self, value: impl Into<BigUint>) -> Result<GroupElement, GroupError> {
        let value = value.into();
        if self.is_member(&value) {
            Ok(GroupElement(value))
        } else {
            Err(GroupError::NotMember)
        }
    }

    /// Reduces any integer into `Z_q`.
    pub fn scalar(&self, value: impl Into<BigUint>) -> Scalar {
        Scalar(value.into() % &self.q)
    }

    pub fn exp(&self, base: &GroupElement, e: &Scalar) -> GroupElement {
        GroupElement(base.0.modpow(&e.0, &self.p))
    }

    /// `g^e`.
    pub fn exp_g(&self, e: &Scalar) -> GroupElement {
        GroupElement(self.g.modpow(&e.0, &self.p))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.p)
    }

    /// `a^(q-1)`, the inverse of a subgroup member.
    pub fn inv(&self, a: &GroupElement) -> GroupElement {
        let e = &self.q - 1u32;
        GroupElement(a.0.modpow(&e, &self.p))
    }

    pub fn product<'a>(&self, items: impl IntoIterator<Item = &'a GroupElement>) -> GroupElement {
        items.into_iter().fold(self.identity(), |acc, x| self.mul(&acc, x))
    }

    pub fn add_scalars(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.q)
    }

    pub fn sub_scalars(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &self.q - &b.0) % &self.q)
    }

    pub fn mul_scalars(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.q)
    }

    pub fn sum_scalars<'a>(&self, items: impl IntoIterator<Item = &'a Scalar>) -> Scalar {
        items
            .into_iter()
            .fold(Scalar::default(), |acc, x| self.add_scalars(&acc, x))
    }

    /// `g^t` for uniform `t` in `[1, q-1]`.
    pub fn random_element<R: RngCore + CryptoRng>(&self, rng: &mut R) -> GroupElement {
        let t = self.random_nonzero_scalar(rng);
        self.exp_g(&t)
    }

    /// `g^t` for uniform `t` in `[0, q-1]`; may be the identity.
    pub fn uniform_element<R: RngCore + CryptoRng>(&self, rng: &mut R) -> GroupElement {
        let t = self.random_scalar(rng);
        self.exp_g(&t)
    }

    /// Uniform in `[0, q-1]`.
    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        Scalar(rng.gen_biguint_below(&self.q))
    }

    /// Uniform in `[1, q-1]`.
    pub fn random_nonzero_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        Scalar(rng.gen_biguint_range(&BigUint::one(), &self.q))
    }

    /// Splits `message` into per-attribute tuples under `policy`.
    ///
    /// Irrelevant positions get the identity, unrequired positions a fresh
    /// uniform element, and required positions uniform elements whose product
    /// is `message` (the last required slot absorbs the correction).
    pub fn split_message<R: RngCore + CryptoRng>(
        &self,
        message: &GroupElement,
        policy: &Policy,
        rng: &mut R,
    ) -> Result<Vec<GroupElement>, GroupError> {
        let last_required = policy
            .trits()
            .iter()
            .rposition(|t| *t == Trit::Required)
            .ok_or(GroupError::NoRequiredAttribute)?;
        let mut tuples = Vec::with_capacity(policy.len());
        let mut partial = self.identity();
        for (i, trit) in policy.trits().iter().enumerate() {
            let tuple = match trit {
                Trit::Irrelevant => self.identity(),
                Trit::Unrequired => self.uniform_element(rng),
                Trit::Required if i == last_required => self.mul(message, &self.inv(&partial)),
                Trit::Required => {
                    let share = self.uniform_element(rng);
                    partial = self.mul(&partial, &share);
                    share
                }
            };
            tuples.push(tuple);
        }
        Ok(tuples)
    }

    pub fn encode_element(&self, e: &GroupElement) -> Vec<u8> {
        left_pad(&e.0.to_bytes_be(), self.element_len)
    }

    pub fn write_element(&self, e: &GroupElement, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.encode_element(e));
    }

    /// Decodes a fixed-width element and checks subgroup membership.
    pub fn decode_element(&self, bytes: &[u8]) -> Result<GroupElement, GroupError> {
        if bytes.len() != self.element_len {
            return Err(GroupError::Length {
                expected: self.element_len,
                got: bytes.len(),
            });
        }
        self.element(BigUint::from_bytes_be(bytes))
    }

    pub fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        left_pad(&s.0.to_bytes_be(), self.scalar_len)
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        if bytes.len() != self.scalar_len {
            return Err(GroupError::Length {
                expected: self.scalar_len,
                got: bytes.len(),
            });
        }
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.q {
            return Err(GroupError::ScalarRange);
        }
        Ok(Scalar(v))
    }

    /// `p = <hex>` / `q = <hex>` / `g = <hex>` text block.
    pub fn to_text(&self) -> String {
        format!("p = {:x}\nq = {:x}\ng = {:x}\n", self.p, self.q, self.g)
    }

    /// Parses the text block written by [`GroupParams::to_text`] and validates it.
    pub fn from_text(text: &str) -> Result<Self, GroupError> {
        let (mut p, mut q, mut g) = (None, None, None);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| GroupError::Parse(format!("line {}: expected `key = hex`", lineno + 1)))?;
            let value = value.trim().trim_start_matches("0x");
            let parsed = BigUint::parse_bytes(value.as_bytes(), 16)
                .ok_or_else(|| GroupError::Parse(format!("line {}: bad hex", lineno + 1)))?;
            let slot = match key.trim() {
                "p" => &mut p,
                "q" => &mut q,
                "g" => &mut g,
                other => return Err(GroupError::Parse(format!("line {}: unknown key `{other}`", lineno + 1))),
            };
            if slot.replace(parsed).is_some() {
                return Err(GroupError::Parse(format!("line {}: duplicate key", lineno + 1)));
            }
        }
        match (p, q, g) {
            (Some(p), Some(q), Some(g)) => Self::new(p, q, g),
            _ => Err(GroupError::Parse("missing one of p, q, g".into())),
        }
    }
}

fn left_pad(raw: &[u8], width: usize) -> Vec<u8> {
    let mut out = vec![0u8; width.saturating_sub(raw.len())];
    out.extend_from_slice(raw);
    out
}

fn search_prime<R: Rng, F: Fn(&mut BigUint)>(bits: usize, attempts: usize, rng: &mut R, shape: F) -> Option<BigUint> {
    for _ in 0..attempts {
        let mut c = rng.gen_biguint(bits as u64);
        shape(&mut c);
        if is_probable_prime(&c, 32, rng) {
            return Some(c);
        }
    }
    None
}

const SMALL_PRIMES: &[u32] = &[
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239,
    241, 251,
];

/// Miller-Rabin with `rounds` random bases after trial division.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &sp in SMALL_PRIMES {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
            if x.is_one() {
                return false;
            }
        }
        return false;
    }
    true
}

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::primitives::{hash, keyed_shuffle, scalar_from_digest, Digest, SymmetricKey};
use crate::DeviceId;

use super::{AttributeSet, EabehpError, Policy};

/// Public part of the master key: the group and `PK_i = g^{a_i}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterPublicKey {
    pub params: GroupParams,
    pub pk_attrs: Vec<GroupElement>,
}

impl MasterPublicKey {
    /// Number of system attributes `N`.
    pub fn n(&self) -> usize {
        self.pk_attrs.len()
    }
}

/// Transformation key: `s_i = K_S - a_i` for every system attribute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformKey(pub Vec<Scalar>);

impl TransformKey {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `s_i`, 1-based.
    pub fn get(&self, i: usize) -> &Scalar {
        &self.0[i - 1]
    }
}

/// Everything the trust authority produces at setup.
#[derive(Clone, Debug)]
pub struct MasterKeyMaterial {
    pub mpk: MasterPublicKey,
    pub msk: Scalar,
    pub tk: TransformKey,
    pub k_group: SymmetricKey,
}

impl MasterKeyMaterial {
    pub fn params(&self) -> &GroupParams {
        &self.mpk.params
    }

    /// `g^{K_S} = PK_i * g^{s_i}` for every attribute.
    pub fn check_split(&self) -> bool {
        let gp = self.params();
        let target = gp.exp_g(&self.msk);
        self.mpk
            .pk_attrs
            .iter()
            .zip(&self.tk.0)
            .all(|(pk, s)| gp.mul(pk, &gp.exp_g(s)) == target)
    }
}

/// Per-device key material issued by the trust authority.
#[derive(Clone, Debug)]
pub struct UserKeyMaterial {
    pub id: DeviceId,
    pub attr_set: AttributeSet,
    /// `a_{j,i}` for each held attribute `i`.
    pub sk: BTreeMap<usize, Scalar>,
    /// `RK = sum (K_S - a_{j,i})`.
    pub rk: Scalar,
    /// Pairwise key shared with the security agent.
    pub k_pair: SymmetricKey,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Stage {
    Raw = 0,
    Shuffled = 1,
    Transformed = 2,
}

impl Stage {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(Stage::Raw),
            1 => Some(Stage::Shuffled),
            2 => Some(Stage::Transformed),
            _ => None,
        }
    }
}

/// `{A, <B_i>, D}` at one of its three stages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagedCiphertext {
    pub stage: Stage,
    pub a: GroupElement,
    pub b: Vec<GroupElement>,
    pub d: GroupElement,
}

impl StagedCiphertext {
    pub fn encoded_len(params: &GroupParams, n: usize) -> usize {
        1 + params.element_len() * (n + 2)
    }

    /// `stage || A || B_1..B_N || D`, fixed-width elements.
    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(params, self.b.len()));
        out.push(self.stage as u8);
        params.write_element(&self.a, &mut out);
        for b in &self.b {
            params.write_element(b, &mut out);
        }
        params.write_element(&self.d, &mut out);
        out
    }

    pub fn decode(bytes: &[u8], params: &GroupParams, n: usize) -> Result<Self, EabehpError> {
        if bytes.len() != Self::encoded_len(params, n) {
            return Err(EabehpError::Encoding(format!(
                "ciphertext length {} for N={n}",
                bytes.len()
            )));
        }
        let stage =
            Stage::from_u8(bytes[0]).ok_or_else(|| EabehpError::Encoding(format!("stage byte {}", bytes[0])))?;
        let mut elems = bytes[1..]
            .chunks(params.element_len())
            .map(|c| params.decode_element(c))
            .collect::<Result<Vec<_>, _>>()?;
        let d = elems.pop().expect("length checked");
        let a = elems.remove(0);
        Ok(StagedCiphertext { stage, a, b: elems, d })
    }
}

/// `sC'_r = {A, prod_{i in I^} B'_i, D}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractedCiphertext {
    pub a: GroupElement,
    pub b_prod: GroupElement,
    pub d: GroupElement,
}

/// Proxy output: blinded `sC''` plus decryption material `AM_i = A^{s_i}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialDecryption {
    pub sc_dd: GroupElement,
    pub am: Vec<GroupElement>,
}

impl PartialDecryption {
    pub fn encoded_len(params: &GroupParams, n: usize) -> usize {
        params.element_len() * (n + 1)
    }

    /// `sC'' || am_1..am_N`.
    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(params, self.am.len()));
        params.write_element(&self.sc_dd, &mut out);
        for e in &self.am {
            params.write_element(e, &mut out);
        }
        out
    }

    pub fn decode(bytes: &[u8], params: &GroupParams, n: usize) -> Result<Self, EabehpError> {
        if bytes.len() != Self::encoded_len(params, n) {
            return Err(EabehpError::Encoding(format!(
                "partial decryption length {} for N={n}",
                bytes.len()
            )));
        }
        let mut elems = bytes
            .chunks(params.element_len())
            .map(|c| params.decode_element(c))
            .collect::<Result<Vec<_>, _>>()?;
        let sc_dd = elems.remove(0);
        Ok(PartialDecryption { sc_dd, am: elems })
    }
}

/// Random `a_i`, `K_S`; `s_i = K_S - a_i`; fresh group key.
pub fn setup<R: RngCore + CryptoRng>(
    params: &GroupParams,
    n: usize,
    rng: &mut R,
) -> Result<MasterKeyMaterial, EabehpError> {
    if n == 0 {
        return Err(EabehpError::ZeroAttributes);
    }
    let msk = params.random_nonzero_scalar(rng);
    let mut pk_attrs = Vec::with_capacity(n);
    let mut tk = Vec::with_capacity(n);
    for _ in 0..n {
        let a = params.random_nonzero_scalar(rng);
        pk_attrs.push(params.exp_g(&a));
        tk.push(params.sub_scalars(&msk, &a));
    }
    Ok(MasterKeyMaterial {
        mpk: MasterPublicKey {
            params: params.clone(),
            pk_attrs,
        },
        msk,
        tk: TransformKey(tk),
        k_group: SymmetricKey::random(rng),
    })
}

/// Issues fresh per-user attribute secrets and the matching re-encryption key.
pub fn keygen<R: RngCore + CryptoRng>(
    mk: &MasterKeyMaterial,
    id: DeviceId,
    attr_set: &AttributeSet,
    rng: &mut R,
) -> Result<UserKeyMaterial, EabehpError> {
    if attr_set.is_empty() {
        return Err(EabehpError::EmptyAttributeSet);
    }
    let n = mk.mpk.n();
    if attr_set.universe() != n {
        return Err(EabehpError::UniverseMismatch {
            expected: n,
            got: attr_set.universe(),
        });
    }
    let gp = mk.params();
    let mut sk = BTreeMap::new();
    let mut rk = Scalar::default();
    for i in attr_set.iter() {
        let a = gp.random_nonzero_scalar(rng);
        rk = gp.add_scalars(&rk, &gp.sub_scalars(&mk.msk, &a));
        sk.insert(i, a);
    }
    Ok(UserKeyMaterial {
        id,
        attr_set: attr_set.clone(),
        sk,
        rk,
        k_pair: SymmetricKey::random(rng),
    })
}

/// `H(r_k || K_group)` before reduction.
pub fn time_key_digest(k_group: &SymmetricKey, r_k: &[u8]) -> Digest {
    hash(&[r_k, k_group.as_bytes()])
}

/// `omega_k = H(r_k || K_group) mod q`.
pub fn time_key_gen(k_group: &SymmetricKey, r_k: &[u8], params: &GroupParams) -> Scalar {
    scalar_from_digest(&time_key_digest(k_group, r_k), params)
}

/// `AK = sum a_{j,i} + omega`.
pub fn transform_user_key(omega: &Scalar, uk: &UserKeyMaterial, params: &GroupParams) -> Scalar {
    params.add_scalars(&params.sum_scalars(uk.sk.values()), omega)
}

/// Encrypts `message` under `policy` with fresh tuple shares and randomness.
pub fn encrypt<R: RngCore + CryptoRng>(
    mpk: &MasterPublicKey,
    policy: &Policy,
    omega: &Scalar,
    message: &GroupElement,
    rng: &mut R,
) -> Result<StagedCiphertext, EabehpError> {
    if policy.len() != mpk.n() {
        return Err(EabehpError::PolicyLength {
            expected: mpk.n(),
            got: policy.len(),
        });
    }
    let tuples = mpk.params.split_message(message, policy, rng)?;
    let r = mpk.params.random_scalar(rng);
    encrypt_tuples(mpk, &tuples, omega, &r)
}

/// Deterministic core of [`encrypt`]: `A = g^r`, `B_i = p_i PK_i^r`, `D = A^omega`.
pub fn encrypt_tuples(
    mpk: &MasterPublicKey,
    tuples: &[GroupElement],
    omega: &Scalar,
    r: &Scalar,
) -> Result<StagedCiphertext, EabehpError> {
    if tuples.len() != mpk.n() {
        return Err(EabehpError::PolicyLength {
            expected: mpk.n(),
            got: tuples.len(),
        });
    }
    let gp = &mpk.params;
    let a = gp.exp_g(r);
    let b = tuples
        .iter()
        .zip(&mpk.pk_attrs)
        .map(|(p, pk)| gp.mul(p, &gp.exp(pk, r)))
        .collect();
    let d = gp.exp(&a, omega);
    Ok(StagedCiphertext {
        stage: Stage::Raw,
        a,
        b,
        d,
    })
}

fn expect_stage(c: &StagedCiphertext, expected: Stage) -> Result<(), EabehpError> {
    if c.stage == expected {
        Ok(())
    } else {
        Err(EabehpError::Stage { expected, got: c.stage })
    }
}

/// `B^_i = B_{SH(i)}`.
pub fn shuffle(c: &StagedCiphertext, omega: &Scalar) -> Result<StagedCiphertext, EabehpError> {
    expect_stage(c, Stage::Raw)?;
    let perm = keyed_shuffle(omega, c.b.len());
    let b = (1..=c.b.len()).map(|i| c.b[perm.forward(i) - 1].clone()).collect();
    Ok(StagedCiphertext {
        stage: Stage::Shuffled,
        a: c.a.clone(),
        b,
        d: c.d.clone(),
    })
}

/// `B'_i = B^_i * A^{s_i}`.
pub fn transform_ciphertext(
    sc: &StagedCiphertext,
    tk: &TransformKey,
    params: &GroupParams,
) -> Result<StagedCiphertext, EabehpError> {
    expect_stage(sc, Stage::Shuffled)?;
    if tk.len() != sc.b.len() {
        return Err(EabehpError::SizeMismatch);
    }
    let b =
        sc.b.iter()
            .zip(&tk.0)
            .map(|(b, s)| params.mul(b, &params.exp(&sc.a, s)))
            .collect();
    Ok(StagedCiphertext {
        stage: Stage::Transformed,
        a: sc.a.clone(),
        b,
        d: sc.d.clone(),
    })
}

/// Multiplies the transformed tuples selected by the permuted index set.
pub fn extract(
    sc: &StagedCiphertext,
    i_hat: &AttributeSet,
    params: &GroupParams,
) -> Result<ExtractedCiphertext, EabehpError> {
    expect_stage(sc, Stage::Transformed)?;
    if i_hat.is_empty() {
        return Err(EabehpError::EmptyAttributeSet);
    }
    if i_hat.universe() != sc.b.len() {
        return Err(EabehpError::UniverseMismatch {
            expected: sc.b.len(),
            got: i_hat.universe(),
        });
    }
    Ok(ExtractedCiphertext {
        a: sc.a.clone(),
        b_prod: params.product(i_hat.iter().map(|i| &sc.b[i - 1])),
        d: sc.d.clone(),
    })
}

/// `sC'' = D * B' / A^{AK+RK}` and `AM_i = A^{s_i}` for every `i`.
pub fn proxy_decrypt1(
    ec: &ExtractedCiphertext,
    ak: &Scalar,
    rk: &Scalar,
    tk: &TransformKey,
    params: &GroupParams,
) -> PartialDecryption {
    let blind = params.exp(&ec.a, &params.add_scalars(ak, rk));
    let sc_dd = params.mul(&params.mul(&ec.d, &ec.b_prod), &params.inv(&blind));
    let am = tk.0.iter().map(|s| params.exp(&ec.a, s)).collect();
    PartialDecryption { sc_dd, am }
}

/// `M = sC'' * prod_{I_r} AM_i / prod_{I^_r} AM_i`.
pub fn proxy_decrypt2(
    pd: &PartialDecryption,
    i_r: &AttributeSet,
    i_hat: &AttributeSet,
    params: &GroupParams,
) -> Result<GroupElement, EabehpError> {
    if i_r.len() != i_hat.len() {
        return Err(EabehpError::SizeMismatch);
    }
    let n = pd.am.len();
    if i_r.universe() != n || i_hat.universe() != n {
        return Err(EabehpError::UniverseMismatch {
            expected: n,
            got: i_r.universe(),
        });
    }
    let num = params.product(i_r.iter().map(|i| &pd.am[i - 1]));
    let den = params.product(i_hat.iter().map(|i| &pd.am[i - 1]));
    Ok(params.mul(&params.mul(&pd.sc_dd, &num), &params.inv(&den)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eabehp::{inverse_permute_attrs, satisfies};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny_mpk(a: &[u64]) -> MasterPublicKey {
        let gp = GroupParams::tiny();
        let pk_attrs = a.iter().map(|x| gp.exp_g(&gp.scalar(*x))).collect();
        MasterPublicKey { params: gp, pk_attrs }
    }

    #[test]
    fn worked_encrypt_example() {
        // Independent oracle: plain u64 arithmetic mod 23.
        let pow = |b: u64, e: u64| (0..e).fold(1u64, |acc, _| acc * b % 23);
        let pk: Vec<u64> = [3, 5, 7].iter().map(|a| pow(4, *a)).collect();
        assert_eq!(pk, vec![18, 12, 8]);
        let tuples_u = [9u64, 1, 3];
        let expect_b: Vec<u64> = tuples_u.iter().zip(&pk).map(|(p, k)| p * pow(*k, 2) % 23).collect();
        assert_eq!(expect_b, vec![18, 6, 8]);
        assert_eq!(pow(pow(4, 2), 5), 6);

        let mpk = tiny_mpk(&[3, 5, 7]);
        let gp = &mpk.params;
        let tuples: Vec<_> = tuples_u.iter().map(|v| gp.element(*v).unwrap()).collect();
        let c = encrypt_tuples(&mpk, &tuples, &gp.scalar(5u32), &gp.scalar(2u32)).unwrap();
        assert_eq!(c.a.to_u64(), Some(16));
        assert_eq!(c.b.iter().map(|e| e.to_u64().unwrap()).collect::<Vec<_>>(), expect_b);
        assert_eq!(c.d.to_u64(), Some(6));
        assert_eq!(c.stage, Stage::Raw);
    }

    #[test]
    fn setup_split_invariant_and_errors() {
        let gp = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mk = setup(&gp, 3, &mut rng).unwrap();
        assert!(mk.check_split());
        assert!(matches!(setup(&gp, 0, &mut rng), Err(EabehpError::ZeroAttributes)));
        let big = GroupParams::named("sim512").unwrap();
        let a = setup(&big, 2, &mut rng).unwrap();
        let b = setup(&big, 2, &mut rng).unwrap();
        assert_ne!(a.msk, b.msk);
    }

    #[test]
    fn keygen_telescopes() {
        let gp = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mk = setup(&gp, 5, &mut rng).unwrap();
        let attrs = AttributeSet::new(5, [1, 3, 4]).unwrap();
        let uk = keygen(&mk, DeviceId(1), &attrs, &mut rng).unwrap();
        let lhs = gp.exp_g(&gp.add_scalars(&gp.sum_scalars(uk.sk.values()), &uk.rk));
        let rhs = gp.exp_g(&gp.mul_scalars(&gp.scalar(3u32), &mk.msk));
        assert_eq!(lhs, rhs);

        let big = GroupParams::named("sim512").unwrap();
        let mk = setup(&big, 5, &mut rng).unwrap();
        let u1 = keygen(&mk, DeviceId(1), &attrs, &mut rng).unwrap();
        let u2 = keygen(&mk, DeviceId(2), &attrs, &mut rng).unwrap();
        assert_ne!(u1.sk, u2.sk);

        let empty = AttributeSet::new(5, []).unwrap();
        assert!(matches!(
            keygen(&mk, DeviceId(3), &empty, &mut rng),
            Err(EabehpError::EmptyAttributeSet)
        ));
        assert!(AttributeSet::new(5, [6]).is_err());
    }

    #[test]
    fn transform_user_key_example() {
        let gp = GroupParams::tiny();
        let uk = UserKeyMaterial {
            id: DeviceId(1),
            attr_set: AttributeSet::new(3, [1, 3]).unwrap(),
            sk: [(1, gp.scalar(2u32)), (3, gp.scalar(4u32))].into_iter().collect(),
            rk: gp.scalar(0u32),
            k_pair: SymmetricKey::new([0; 16]),
        };
        assert!(transform_user_key(&gp.scalar(5u32), &uk, &gp).is_zero());
        assert_eq!(transform_user_key(&gp.scalar(0u32), &uk, &gp).to_u64(), Some(6));
    }

    #[test]
    fn time_key_is_deterministic_and_in_range() {
        let gp = GroupParams::tiny();
        let k = SymmetricKey::new([5; 16]);
        let a = time_key_gen(&k, b"epoch-1", &gp);
        assert_eq!(a, time_key_gen(&k, b"epoch-1", &gp));
        assert!(a.value() < gp.q());
    }

    #[test]
    fn time_key_collisions_match_birthday_rate() {
        // 10^4 distinct r_k mapped into q = 11 buckets: adjacent-pair collision
        // probability is 1/11 for a uniform map.
        let gp = GroupParams::tiny();
        let k = SymmetricKey::new([6; 16]);
        let draws: Vec<u64> = (0u64..10_000)
            .map(|r| time_key_gen(&k, &r.to_be_bytes(), &gp).to_u64().unwrap())
            .collect();
        let collisions = draws.windows(2).filter(|w| w[0] == w[1]).count() as f64;
        let n: f64 = 9_999.0;
        let p = 1.0 / 11.0;
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!((collisions - n * p).abs() < 4.0 * sigma, "{collisions}");
    }

    #[test]
    fn stage_order_is_enforced() {
        let gp = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mk = setup(&gp, 3, &mut rng).unwrap();
        let policy = Policy::parse("+0-").unwrap();
        let w = gp.scalar(3u32);
        let c = encrypt(&mk.mpk, &policy, &w, &gp.generator(), &mut rng).unwrap();
        assert!(matches!(
            transform_ciphertext(&c, &mk.tk, &gp),
            Err(EabehpError::Stage { .. })
        ));
        let sc = shuffle(&c, &w).unwrap();
        assert!(shuffle(&sc, &w).is_err());
        let all = AttributeSet::new(3, [1]).unwrap();
        assert!(extract(&sc, &all, &gp).is_err());
        let t = transform_ciphertext(&sc, &mk.tk, &gp).unwrap();
        assert!(extract(&t, &all, &gp).is_ok());
        assert!(extract(&t, &AttributeSet::new(3, []).unwrap(), &gp).is_err());
    }

    #[test]
    fn shuffle_preserves_multiset_and_inverts() {
        let gp = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mk = setup(&gp, 6, &mut rng).unwrap();
        let policy = Policy::parse("++0-0+").unwrap();
        let w = gp.scalar(7u32);
        let c = encrypt(&mk.mpk, &policy, &w, &gp.generator(), &mut rng).unwrap();
        let sc = shuffle(&c, &w).unwrap();
        let perm = keyed_shuffle(&w, 6);
        for i in 1..=6 {
            assert_eq!(sc.b[perm.inverse(i) - 1], c.b[i - 1]);
        }
        let mut x = c.b.clone();
        let mut y = sc.b.clone();
        x.sort();
        y.sort();
        assert_eq!(x, y);

        let mk1 = setup(&gp, 1, &mut rng).unwrap();
        let c1 = encrypt(&mk1.mpk, &Policy::parse("+").unwrap(), &w, &gp.generator(), &mut rng).unwrap();
        assert_eq!(shuffle(&c1, &w).unwrap().b, c1.b);
    }

    #[test]
    fn transform_with_zero_key_is_identity() {
        let gp = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mk = setup(&gp, 3, &mut rng).unwrap();
        let w = gp.scalar(2u32);
        let c = encrypt(&mk.mpk, &Policy::parse("+0-").unwrap(), &w, &gp.generator(), &mut rng).unwrap();
        let sc = shuffle(&c, &w).unwrap();
        let zero = TransformKey(vec![Scalar::default(); 3]);
        assert_eq!(transform_ciphertext(&sc, &zero, &gp).unwrap().b, sc.b);
    }

    #[test]
    fn tiny_pipeline_continuation_by_hand() {
        // Continue the worked example: s_i = K_S - a_i with K_S = 6, a = (3,5,7).
        let pow = |b: u64, e: u64| (0..e).fold(1u64, |acc, _| acc * b % 23);
        let inv = |x: u64| pow(x, 10);
        let mpk = tiny_mpk(&[3, 5, 7]);
        let gp = mpk.params.clone();
        let s = [3u64, 1, 10]; // (6-3, 6-5, 6-7 mod 11)
        let tk = TransformKey(s.iter().map(|v| gp.scalar(*v)).collect());
        let w = gp.scalar(5u32);
        let tuples: Vec<_> = [9u64, 1, 3].iter().map(|v| gp.element(*v).unwrap()).collect();
        let c = encrypt_tuples(&mpk, &tuples, &w, &gp.scalar(2u32)).unwrap();
        let perm = keyed_shuffle(&w, 3);
        let sc = shuffle(&c, &w).unwrap();
        let t = transform_ciphertext(&sc, &tk, &gp).unwrap();
        let raw_b = [18u64, 6, 8];
        for i in 1..=3 {
            let expect = raw_b[perm.forward(i) - 1] * pow(16, s[i - 1]) % 23;
            assert_eq!(t.b[i - 1].to_u64(), Some(expect));
        }

        // Receiver holds attribute 1 only; a_{r,1} = 2, RK = 6 - 2 = 4.
        let i_r = AttributeSet::new(3, [1]).unwrap();
        let i_hat = inverse_permute_attrs(&i_r, &w, 3);
        let j = i_hat.iter().next().unwrap();
        let ex = extract(&t, &i_hat, &gp).unwrap();
        assert_eq!(ex.b_prod, t.b[j - 1]);
        let ak = gp.scalar(2u32 + 5);
        let rk = gp.scalar(4u32);
        let pd = proxy_decrypt1(&ex, &ak, &rk, &tk, &gp);
        let bp = t.b[j - 1].to_u64().unwrap();
        let expect_dd = 6 * bp % 23 * inv(pow(16, (7 + 4) % 11)) % 23;
        assert_eq!(pd.sc_dd.to_u64(), Some(expect_dd));
        for (am, si) in pd.am.iter().zip(s) {
            assert_eq!(am.to_u64(), Some(pow(16, si)));
        }
        let m = proxy_decrypt2(&pd, &i_r, &i_hat, &gp).unwrap();
        assert_eq!(m.to_u64(), Some(9));
    }

    #[test]
    fn proxy_decrypt1_algebraic_identity() {
        // sC'' = prod_{i in I^} p_{SH(i)} * A^{sum (s_i - s_SH(i))}
        let gp = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for trial in 0..300 {
            let n = 1 + trial % 6;
            let mk = setup(&gp, n, &mut rng).unwrap();
            let mut trits: Vec<i8> = (0..n).map(|_| (rng.next_u32() % 3) as i8 - 1).collect();
            trits[trial % n] = 1;
            let policy = Policy::from_i8(&trits).unwrap();
            let k: Vec<usize> = (1..=n).filter(|_| rng.next_u32() % 2 == 0).collect();
            let i_r = if k.is_empty() {
                AttributeSet::new(n, [1]).unwrap()
            } else {
                AttributeSet::new(n, k).unwrap()
            };
            let uk = keygen(&mk, DeviceId(9), &i_r, &mut rng).unwrap();
            let w = gp.random_scalar(&mut rng);
            let m = gp.random_element(&mut rng);
            let tuples = gp.split_message(&m, &policy, &mut rng).unwrap();
            let r = gp.random_scalar(&mut rng);
            let c = encrypt_tuples(&mk.mpk, &tuples, &w, &r).unwrap();
            let t = transform_ciphertext(&shuffle(&c, &w).unwrap(), &mk.tk, &gp).unwrap();
            let i_hat = inverse_permute_attrs(&i_r, &w, n);
            let ak = transform_user_key(&w, &uk, &gp);
            let pd = proxy_decrypt1(&extract(&t, &i_hat, &gp).unwrap(), &ak, &uk.rk, &mk.tk, &gp);

            let perm = keyed_shuffle(&w, n);
            let p_prod = gp.product(i_hat.iter().map(|i| &tuples[perm.forward(i) - 1]));
            let expo = i_hat.iter().fold(Scalar::default(), |acc, i| {
                gp.add_scalars(&acc, &gp.sub_scalars(mk.tk.get(i), mk.tk.get(perm.forward(i))))
            });
            assert_eq!(pd.sc_dd, gp.mul(&p_prod, &gp.exp(&c.a, &expo)));
            for i in 1..=n {
                assert_eq!(pd.am[i - 1], gp.exp(&c.a, mk.tk.get(i)));
            }
            let out = proxy_decrypt2(&pd, &i_r, &i_hat, &gp).unwrap();
            if satisfies(&policy, &i_r) {
                assert_eq!(out, m);
            }
        }
    }

    #[test]
    fn proxy_decrypt2_rejects_size_mismatch() {
        let gp = GroupParams::tiny();
        let pd = PartialDecryption {
            sc_dd: gp.identity(),
            am: vec![gp.identity(); 3],
        };
        let a = AttributeSet::new(3, [1]).unwrap();
        let b = AttributeSet::new(3, [1, 2]).unwrap();
        assert!(matches!(
            proxy_decrypt2(&pd, &a, &b, &gp),
            Err(EabehpError::SizeMismatch)
        ));
    }

    #[test]
    fn ciphertext_codecs() {
        let gp = GroupParams::named("sim512").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mk = setup(&gp, 4, &mut rng).unwrap();
        let w = gp.random_scalar(&mut rng);
        let m = gp.random_element(&mut rng);
        let c = encrypt(&mk.mpk, &Policy::parse("+0-+").unwrap(), &w, &m, &mut rng).unwrap();
        let bytes = c.encode(&gp);
        assert_eq!(bytes.len(), 1 + 64 * 6);
        assert_eq!(StagedCiphertext::decode(&bytes, &gp, 4).unwrap(), c);
        assert!(StagedCiphertext::decode(&bytes, &gp, 3).is_err());
        let mut bad = bytes.clone();
        bad[0] = 9;
        assert!(StagedCiphertext::decode(&bad, &gp, 4).is_err());

        let pd = PartialDecryption {
            sc_dd: m.clone(),
            am: vec![m.clone(), gp.identity(), gp.generator(), m],
        };
        let enc = pd.encode(&gp);
        assert_eq!(PartialDecryption::decode(&enc, &gp, 4).unwrap(), pd);
    }
}

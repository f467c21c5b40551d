//! Hand-checkable walk through one encryption and one decryption in the
//! toy group `p = 23, q = 11, g = 4` with three attributes.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::eabehp::{
    encrypt_tuples, extract, inverse_permute_attrs, proxy_decrypt1, proxy_decrypt2, satisfies, shuffle,
    transform_ciphertext, transform_user_key, AttributeSet, MasterPublicKey, Policy, TransformKey, UserKeyMaterial,
};
use crate::group::{GroupElement, GroupParams, Scalar};
use crate::primitives::{keyed_shuffle, SymmetricKey};
use crate::DeviceId;

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn el(gp: &GroupParams, v: u64) -> GroupElement {
    gp.element(v).expect("subgroup member")
}

/// Fixed keys and randomness, every intermediate printed.
pub fn demo_text() -> String {
    let gp = GroupParams::tiny();
    let n = 3;
    let a: Vec<Scalar> = [3u64, 5, 7].iter().map(|v| gp.scalar(*v)).collect();
    let ks = gp.scalar(6u64);
    let mpk = MasterPublicKey {
        params: gp.clone(),
        pk_attrs: a.iter().map(|x| gp.exp_g(x)).collect(),
    };
    let tk = TransformKey(a.iter().map(|x| gp.sub_scalars(&ks, x)).collect());
    let policy = Policy::parse("+0-").expect("valid policy");
    let m = el(&gp, 9);
    let tuples = vec![m.clone(), gp.identity(), el(&gp, 3)];
    let omega = gp.scalar(5u64);
    let r = gp.scalar(2u64);

    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "group      p = {}, q = {}, g = {}", gp.p(), gp.q(), gp.generator());
    let _ = writeln!(w, "setup      a = ({}), K_S = {}", join(&a), ks);
    let _ = writeln!(w, "           PK = ({})", join(&mpk.pk_attrs));
    let _ = writeln!(w, "           s = ({})", join(&tk.0));
    let _ = writeln!(w, "policy     {policy}");
    let _ = writeln!(w, "message    M = {m}, tuples = ({})", join(&tuples));
    let _ = writeln!(w, "time key   omega = {omega}, r = {r}");

    let raw = encrypt_tuples(&mpk, &tuples, &omega, &r).expect("lengths match");
    let _ = writeln!(w, "encrypt    A = {}, B = ({}), D = {}", raw.a, join(&raw.b), raw.d);
    let perm = keyed_shuffle(&omega, n);
    let sh = shuffle(&raw, &omega).expect("raw stage");
    let _ = writeln!(
        w,
        "shuffle    SH = ({}), B^ = ({})",
        join(perm.forward_table()),
        join(&sh.b)
    );
    let tr = transform_ciphertext(&sh, &tk, &gp).expect("shuffled stage");
    let _ = writeln!(w, "transform  B' = ({})", join(&tr.b));

    let i_r = AttributeSet::new(n, [1]).expect("in range");
    let a_r1 = gp.scalar(2u64);
    let uk = UserKeyMaterial {
        id: DeviceId(101),
        attr_set: i_r.clone(),
        sk: BTreeMap::from([(1, a_r1.clone())]),
        rk: gp.sub_scalars(&ks, &a_r1),
        k_pair: SymmetricKey::new([0; 16]),
    };
    let ak = transform_user_key(&omega, &uk, &gp);
    let i_hat = inverse_permute_attrs(&i_r, &omega, n);
    let _ = writeln!(
        w,
        "receiver   I_r = {{{}}}, a_r1 = {}, RK = {}, AK = {}, satisfies = {}",
        join(&i_r.iter().collect::<Vec<_>>()),
        a_r1,
        uk.rk,
        ak,
        satisfies(&policy, &i_r)
    );
    let _ = writeln!(w, "           I^ = {{{}}}", join(&i_hat.iter().collect::<Vec<_>>()));
    let ec = extract(&tr, &i_hat, &gp).expect("transformed stage");
    let pd = proxy_decrypt1(&ec, &ak, &uk.rk, &tk, &gp);
    let _ = writeln!(
        w,
        "sa         B'_prod = {}, sC'' = {}, AM = ({})",
        ec.b_prod,
        pd.sc_dd,
        join(&pd.am)
    );
    let out = proxy_decrypt2(&pd, &i_r, &i_hat, &gp).expect("same size");
    let _ = writeln!(w, "decrypt    M = {out}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_values() {
        let t = demo_text();
        assert!(t.contains("PK = (18, 12, 8)"), "{t}");
        assert!(t.contains("s = (3, 1, 10)"));
        assert!(t.contains("A = 16, B = (18, 6, 8), D = 6"));
        assert!(t.contains("RK = 4, AK = 7"));
        assert!(t.trim_end().ends_with("decrypt    M = 9"));
    }
}

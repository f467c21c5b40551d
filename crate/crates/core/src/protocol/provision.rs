use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use crate::eabehp::{keygen, setup, AttributeSet, MasterKeyMaterial, MasterPublicKey, TransformKey, UserKeyMaterial};
use crate::group::{GroupParams, Scalar};
use crate::primitives::SymmetricKey;
use crate::DeviceId;

use super::ProtocolError;

#[derive(Clone, Debug)]
pub struct EcuSpec {
    pub id: DeviceId,
    pub attrs: AttributeSet,
}

/// Material held by one ECU.
#[derive(Clone, Debug)]
pub struct EcuKeys {
    pub user: UserKeyMaterial,
    pub k_group: SymmetricKey,
    pub mpk: MasterPublicKey,
}

impl EcuKeys {
    pub fn id(&self) -> DeviceId {
        self.user.id
    }

    pub fn params(&self) -> &GroupParams {
        &self.mpk.params
    }

    pub fn k_pair(&self) -> &SymmetricKey {
        &self.user.k_pair
    }
}

/// Material held by the security agent. It has no attribute secrets and no
/// group key by construction.
#[derive(Clone, Debug)]
pub struct SaKeys {
    pub mpk: MasterPublicKey,
    pub tk: TransformKey,
    pub rk: BTreeMap<DeviceId, Scalar>,
    pub pairwise: BTreeMap<DeviceId, SymmetricKey>,
}

impl SaKeys {
    pub fn params(&self) -> &GroupParams {
        &self.mpk.params
    }

    pub fn n(&self) -> usize {
        self.mpk.n()
    }

    /// Flat byte image of everything the SA stores.
    pub fn to_bytes(&self) -> Vec<u8> {
        let gp = self.params();
        let mut out = Vec::new();
        for pk in &self.mpk.pk_attrs {
            gp.write_element(pk, &mut out);
        }
        for s in &self.tk.0 {
            out.extend_from_slice(&gp.encode_scalar(s));
            out.extend_from_slice(&s.to_bytes32());
        }
        for (id, rk) in &self.rk {
            out.extend_from_slice(&id.to_be_bytes());
            out.extend_from_slice(&gp.encode_scalar(rk));
            out.extend_from_slice(&rk.to_bytes32());
        }
        for (id, k) in &self.pairwise {
            out.extend_from_slice(&id.to_be_bytes());
            out.extend_from_slice(k.as_bytes());
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct ProvisionedVehicle {
    pub master: MasterKeyMaterial,
    pub ecus: BTreeMap<DeviceId, EcuKeys>,
    pub sa: SaKeys,
    /// Devices that were handed `K_group`.
    pub group_key_holders: Vec<DeviceId>,
}

/// Trusted-authority provisioning: one setup, one keygen per ECU, then the
/// material is split between ECUs and the SA.
pub fn provision<R: RngCore + CryptoRng>(
    params: &GroupParams,
    n: usize,
    specs: &[EcuSpec],
    rng: &mut R,
) -> Result<ProvisionedVehicle, ProtocolError> {
    if specs.is_empty() {
        return Err(ProtocolError::NoEcus);
    }
    let master = setup(params, n, rng)?;
    let mut ecus = BTreeMap::new();
    let mut rk = BTreeMap::new();
    let mut pairwise = BTreeMap::new();
    for spec in specs {
        if ecus.contains_key(&spec.id) {
            return Err(ProtocolError::DuplicateId(spec.id));
        }
        let user = keygen(&master, spec.id, &spec.attrs, rng)?;
        rk.insert(spec.id, user.rk.clone());
        pairwise.insert(spec.id, user.k_pair);
        ecus.insert(
            spec.id,
            EcuKeys {
                user,
                k_group: master.k_group,
                mpk: master.mpk.clone(),
            },
        );
    }
    let sa = SaKeys {
        mpk: master.mpk.clone(),
        tk: master.tk.clone(),
        rk,
        pairwise,
    };
    Ok(ProvisionedVehicle {
        group_key_holders: ecus.keys().copied().collect(),
        master,
        ecus,
        sa,
    })
}

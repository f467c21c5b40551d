//! Active and passive attacks against the key exchange.
//!
//! * replay: an outsider records one epoch and re-injects every message in
//!   the next one;
//! * tamper: one bit of one message is flipped in flight;
//! * mutation trials: bit flips, cross-epoch replays and reordered hops on a
//!   one-to-one loopback network;
//! * curious SA: everything the SA saw is scanned for secrets, and on small
//!   groups every candidate time key is tried against the key digest.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::eabehp::{inverse_permute_attrs, proxy_decrypt2, time_key_digest, AttributeSet, PartialDecryption, Policy};
use crate::group::{GroupParams, Scalar};
use crate::primitives::{prp_encrypt, SymmetricKey, Tag};
use crate::protocol::{
    recover_data_key, Alert, Body, Delivery, Deployment, LoopbackNetwork, MsgType, ProtocolError, ReceiverSpec,
    SenderSpec, WireMessage,
};
use crate::sim::{AttackKind, Injection, RunStatus, ScenarioConfig, SimReport, Simulator};
use crate::DeviceId;

use super::{BenchError, ResultRow, RunOutput};

pub const DEFAULT_TRIALS: usize = 100;

/// Largest subgroup order for which every time key is tried.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mutation {
    BitFlip,
    /// The same-position hop from the previous epoch.
    Replay,
    /// A hop of another step to the same recipient, from earlier in this
    /// epoch or from the previous one.
    Reorder,
}

impl Mutation {
    pub const ALL: [Mutation; 3] = [Mutation::BitFlip, Mutation::Replay, Mutation::Reorder];
}

#[derive(Clone, Debug)]
pub struct MutationOutcome {
    pub kind: Mutation,
    pub slot: usize,
    pub fatal_alerts: Vec<Alert>,
    pub mutual_auth: usize,
}

impl MutationOutcome {
    pub fn rejected(&self) -> bool {
        !self.fatal_alerts.is_empty() && self.mutual_auth == 0
    }
}

/// One sender and one satisfying receiver over `n` attributes.
pub fn one_to_one(params: GroupParams, n: usize) -> Deployment {
    let trits: Vec<i8> = (1..=n)
        .map(|i| match i {
            1 => 1,
            i if i == n => -1,
            _ => 0,
        })
        .collect();
    Deployment {
        params,
        n_attrs: n,
        sa_id: DeviceId(0),
        senders: vec![SenderSpec {
            id: DeviceId(1),
            attrs: vec![1],
            policy: Policy::from_i8(&trits).expect("attribute 1 required"),
            expected_receivers: Some(1),
        }],
        receivers: vec![ReceiverSpec {
            id: DeviceId(101),
            attrs: vec![1],
            senders: vec![DeviceId(1)],
        }],
    }
}

fn msg_type(d: &Delivery) -> u8 {
    d.bytes.first().copied().unwrap_or(0)
}

fn flip(d: &Delivery, rng: &mut ChaCha20Rng) -> Delivery {
    let mut d = d.clone();
    let bit = rng.gen_range(0..d.bytes.len() * 8);
    d.bytes[bit / 8] ^= 1 << (bit % 8);
    d
}

/// Runs `trials` two-epoch sessions on `dep`: epoch 1 honest and recorded,
/// epoch 2 with one hop mutated. Trial `t` uses `kinds[t % kinds.len()]`.
pub fn mutation_trials(
    dep: &Deployment,
    kinds: &[Mutation],
    trials: usize,
    seed: u64,
) -> Result<Vec<MutationOutcome>, ProtocolError> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let kind = kinds[t % kinds.len()];
            let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(t as u64));
            let mut net = LoopbackNetwork::new(dep, seed.wrapping_add(t as u64))?;
            let old = net.run_epoch(1)?.transcript;
            let slot = rng.gen_range(0..old.len());
            let mut seen: Vec<Delivery> = Vec::new();
            let outcome = net.run_epoch_with(2, |i, d| {
                let out = if i != slot {
                    d.clone()
                } else {
                    match kind {
                        Mutation::BitFlip => flip(d, &mut rng),
                        Mutation::Replay => old
                            .iter()
                            .find(|o| o.to == d.to && msg_type(o) == msg_type(d) && o.bytes != d.bytes)
                            .cloned()
                            .unwrap_or_else(|| flip(d, &mut rng)),
                        Mutation::Reorder => {
                            let pool: Vec<&Delivery> = seen
                                .iter()
                                .chain(old.iter())
                                .filter(|o| o.to == d.to && msg_type(o) != msg_type(d))
                                .collect();
                            if pool.is_empty() {
                                flip(d, &mut rng)
                            } else {
                                pool[rng.gen_range(0..pool.len())].clone()
                            }
                        }
                    }
                };
                seen.push(d.clone());
                Some(out)
            })?;
            Ok(MutationOutcome {
                kind,
                slot,
                fatal_alerts: outcome.fatal_alerts().cloned().collect(),
                mutual_auth: outcome.mutual_auth_ok().len(),
            })
        })
        .collect()
}

/// Records epoch `r_k` and re-injects all of it at the start of `r_k + 1`.
/// Returns the second epoch's report and whether the replay was rejected.
pub fn replay_attack(cfg: &ScenarioConfig) -> Result<(SimReport, bool), BenchError> {
    let dep = cfg.deployment()?;
    let mut sim = Simulator::new(&dep, cfg.sim_config()?, cfg.seed)?;
    let first = sim.run_epoch(cfg.r_k)?;
    let inj: Vec<Injection> = first
        .bus_log
        .iter()
        .map(|m| Injection {
            at_ns: 0,
            to: m.to,
            bytes: m.bytes.clone(),
        })
        .collect();
    let second = sim.run_epoch_with(cfg.r_k + 1, &inj)?;
    let rejected = second.fatal_alerts().next().is_some() && second.status != RunStatus::Leak;
    Ok((second, rejected))
}

/// `trials` runs of `cfg`, each with one random bit of one random message
/// flipped. Returns `(message index, bit, report)` per trial.
pub fn tamper_attack(cfg: &ScenarioConfig, trials: usize) -> Result<Vec<(usize, usize, SimReport)>, BenchError> {
    let dep = cfg.deployment()?;
    let sim_cfg = cfg.sim_config()?;
    let honest = Simulator::new(&dep, sim_cfg.clone(), cfg.seed)?.run_epoch(cfg.r_k)?;
    let lens: Vec<usize> = honest.bus_log.iter().map(|m| m.bytes.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x7461_6d70);
    let picks: Vec<(usize, usize)> = (0..trials)
        .map(|_| {
            let k = rng.gen_range(0..lens.len());
            (k, rng.gen_range(0..lens[k] * 8))
        })
        .collect();
    picks
        .into_par_iter()
        .map(|(k, bit)| {
            let mut sim = Simulator::new(&dep, sim_cfg.clone(), cfg.seed)?;
            let mut f = |i: usize, b: &mut Vec<u8>| {
                if i == k {
                    b[bit / 8] ^= 1 << (bit % 8);
                }
            };
            Ok((k, bit, sim.run_epoch_tampered(cfg.r_k, &[], &mut f)?))
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct CuriousReport {
    /// Secrets found in the SA's view or on the bus.
    pub hits: Vec<String>,
    pub needles: usize,
    /// `(receiver, sender, time keys that open the key digest)`.
    pub oracle: Vec<(DeviceId, DeviceId, Vec<u64>)>,
    /// True time key per sender, when small enough to enumerate.
    pub true_omega: BTreeMap<DeviceId, u64>,
    /// The SA's view followed by the bus transcript.
    pub haystack: Vec<u8>,
}

impl CuriousReport {
    /// No secret found, and every enumerated pair has exactly the true key.
    pub fn clean(&self) -> bool {
        self.hits.is_empty()
            && self
                .oracle
                .iter()
                .all(|(_, s, c)| c.len() == 1 && Some(&c[0]) == self.true_omega.get(s))
    }
}

/// Time keys `w` in `0..q` under which the SA's partial decryption opens the
/// sender's key digest. Needs the group key, so only the analyst can run it.
pub fn omega_candidates(
    params: &GroupParams,
    pd: &PartialDecryption,
    i_r: &AttributeSet,
    k_group: &SymmetricKey,
    masked: &[u8; 32],
    commitment: &Tag,
) -> Vec<u64> {
    let q = params.q().to_u64_digits().first().copied().unwrap_or(0);
    let n = i_r.universe();
    (0..q)
        .filter(|w| {
            let omega = params.scalar(*w);
            let i_hat = inverse_permute_attrs(i_r, &omega, n);
            proxy_decrypt2(pd, i_r, &i_hat, params)
                .ok()
                .and_then(|m| recover_data_key(k_group, params, &m, &omega, masked, commitment))
                .is_some()
        })
        .collect()
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Scans the SA view and bus transcript of a finished epoch for data keys,
/// wrapped keys, the group key, time keys and user attribute secrets. Scalar
/// encodings are only searched when scalars are at least 16 bytes wide;
/// below that every short byte string occurs by chance.
pub fn curious_sa_scan(sim: &Simulator, report: &SimReport, r_k: u64) -> CuriousReport {
    let vehicle = sim.vehicle();
    let k_group = &vehicle.master.k_group;
    let gp = vehicle.master.params();
    let sa = sim.sa();
    let mut out = CuriousReport {
        haystack: sa.view().to_bytes(sa.keys()),
        ..Default::default()
    };
    for m in &report.bus_log {
        out.haystack.extend_from_slice(&m.bytes);
    }

    let r_k = r_k.to_be_bytes();
    let omega_digest = time_key_digest(k_group, &r_k);
    let omega = crate::primitives::scalar_from_digest(&omega_digest, gp);
    let wide = gp.scalar_len() >= 16;
    let mut needles: Vec<(String, Vec<u8>)> = vec![
        ("group key".into(), k_group.as_bytes().to_vec()),
        ("time key digest".into(), omega_digest.as_bytes().to_vec()),
    ];
    let scalar = |label: String, s: &Scalar, v: &mut Vec<(String, Vec<u8>)>| {
        v.push((format!("{label} (native)"), gp.encode_scalar(s)));
        v.push((format!("{label} (32-byte)"), s.to_bytes32().to_vec()));
    };
    if wide {
        scalar("time key".into(), &omega, &mut needles);
    }
    for (id, keys) in &vehicle.ecus {
        if let Some(k) = sim.node(*id).and_then(|n| n.sender()).and_then(|s| s.key()) {
            needles.push((format!("data key of {id}"), k.as_bytes().to_vec()));
            needles.push((format!("wrapped data key of {id}"), prp_encrypt(k_group, k.as_bytes())));
        }
        if wide {
            for (i, a) in &keys.user.sk {
                scalar(format!("attribute secret {i} of {id}"), a, &mut needles);
            }
            let sum = gp.sum_scalars(keys.user.sk.values());
            scalar(format!("attribute secret sum of {id}"), &sum, &mut needles);
        }
    }
    out.needles = needles.len();
    out.hits = needles
        .into_iter()
        .filter(|(_, n)| contains(&out.haystack, n))
        .map(|(l, _)| l)
        .collect();

    let q = gp.q().to_u64_digits().first().copied().unwrap_or(0);
    if gp.q().bits() <= 64 && q <= EXHAUSTIVE_LIMIT {
        let schema = sa.schema();
        let digests: BTreeMap<DeviceId, ([u8; 32], Tag)> = report
            .bus_log
            .iter()
            .filter(|m| m.bytes.first() == Some(&(MsgType::KeyDigest as u8)))
            .filter_map(|m| WireMessage::decode(&m.bytes, schema).ok())
            .filter_map(|m| match m.body {
                Body::KeyDigest { sigma_k, masked_key } => Some((m.sender, (masked_key, sigma_k))),
                _ => None,
            })
            .collect();
        for s in digests.keys() {
            out.true_omega.insert(*s, omega.to_u64().unwrap_or(0));
        }
        for (r, s, pd) in &sa.view().partials {
            let (Some((masked, commitment)), Some(rx)) = (digests.get(s), vehicle.ecus.get(r)) else {
                continue;
            };
            if !sim.satisfying_pairs().contains(&(*r, *s)) {
                continue;
            }
            let c = omega_candidates(gp, pd, &rx.user.attr_set, k_group, masked, commitment);
            out.oracle.push((*r, *s, c));
        }
    }
    out
}

/// Runs `kind` against `cfg` and summarises it as one row.
pub fn run_attack(kind: AttackKind, cfg: &ScenarioConfig, trials: usize) -> Result<RunOutput, BenchError> {
    let mut cfg = cfg.clone();
    cfg.attack = Some(kind);
    let base = ResultRow::for_config(&cfg);
    let (report, trials, rejected, ok_status) = match kind {
        AttackKind::Replay => {
            let (report, sim_rejected) = replay_attack(&cfg)?;
            let dep = one_to_one(cfg.group.params()?, cfg.nodes.n_sys_att);
            let outcomes =
                mutation_trials(&dep, &[Mutation::Replay], trials, cfg.seed).map_err(crate::sim::SimError::from)?;
            let rejected = outcomes.iter().filter(|o| o.rejected()).count() + sim_rejected as usize;
            (report, trials + 1, rejected, RunStatus::ReplayRejected)
        }
        AttackKind::Tamper => {
            let runs = tamper_attack(&cfg, trials)?;
            let rejected = runs
                .iter()
                .filter(|(_, _, r)| r.fatal_alerts().next().is_some() && r.status != RunStatus::Leak)
                .count();
            let report = runs
                .into_iter()
                .map(|(_, _, r)| r)
                .next()
                .map_or_else(|| honest_run(&cfg), Ok)?;
            (report, trials, rejected, RunStatus::TamperRejected)
        }
        AttackKind::CuriousSa => {
            let dep = cfg.deployment()?;
            let mut sim = Simulator::new(&dep, cfg.sim_config()?, cfg.seed)?;
            let report = sim.run_epoch(cfg.r_k)?;
            let scan = curious_sa_scan(&sim, &report, cfg.r_k);
            let clean = scan.clean() as usize;
            let mut out_row = base.clone().with_report(&report);
            out_row.trials = 1;
            out_row.rejected = clean;
            out_row.status = if clean == 1 {
                RunStatus::ScanClean
            } else {
                RunStatus::Leak
            }
            .to_string();
            return Ok(RunOutput {
                row: out_row,
                report: Some(report),
                scan: Some(scan),
            });
        }
    };
    let mut row = base.with_report(&report);
    row.trials = trials;
    row.rejected = rejected;
    row.status = if rejected == trials {
        ok_status
    } else {
        RunStatus::Undetected
    }
    .to_string();
    Ok(RunOutput {
        row,
        report: Some(report),
        scan: None,
    })
}

fn honest_run(cfg: &ScenarioConfig) -> Result<SimReport, BenchError> {
    let mut sim = Simulator::new(&cfg.deployment()?, cfg.sim_config()?, cfg.seed)?;
    Ok(sim.run_epoch(cfg.r_k)?)
}

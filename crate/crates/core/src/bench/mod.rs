//! Scenario runner, parameter sweeps, attack harnesses and the worked demo.
//!
//! Every command produces [`ResultRow`]s with one fixed column set.

pub mod attack;
mod demo;
mod sweep;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{RunStatus, ScenarioConfig, SimError, SimReport, Simulator};

pub use attack::{
    curious_sa_scan, mutation_trials, omega_candidates, replay_attack, tamper_attack, CuriousReport, Mutation,
    MutationOutcome,
};
pub use demo::demo_text;
pub use sweep::{run_sweep, SweepParam, SweepSpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// 2 for configuration problems, 4 for stalls, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Sim(SimError::Stall(_)) => 4,
            BenchError::Sim(SimError::Protocol(_)) => 3,
            BenchError::Sim(_) | BenchError::Io(_) | BenchError::Csv(_) => 2,
        }
    }
}

/// Process exit code for a finished run.
pub fn status_exit_code(s: RunStatus) -> i32 {
    match s {
        RunStatus::Ok | RunStatus::ReplayRejected | RunStatus::TamperRejected | RunStatus::ScanClean => 0,
        RunStatus::Stall => 4,
        RunStatus::Abort | RunStatus::Leak | RunStatus::Undetected => 3,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub name: String,
    pub seed: u64,
    pub group: String,
    pub data_rate: f64,
    pub arb_rate: f64,
    pub n_sys_att: usize,
    pub n_rx_att: usize,
    pub n_tx_ecu: usize,
    pub n_rx_ecu: usize,
    pub shared_receivers: usize,
    pub receivers: usize,
    pub sa_clock: String,
    pub cost_mode: String,
    pub window_ms: f64,
    pub attack: String,
    pub total_time_s: f64,
    pub crypto_s: f64,
    pub bus_s: f64,
    pub frames: usize,
    pub trials: usize,
    pub rejected: usize,
    pub status: String,
}

impl ResultRow {
    /// Parameters of `cfg`; timing columns zero and status `ok`.
    pub fn for_config(cfg: &ScenarioConfig) -> Self {
        let n = &cfg.nodes;
        let stride = if n.senders > 1 {
            n.receivers_per_sender.saturating_sub(n.shared_receivers)
        } else {
            n.receivers_per_sender
        };
        ResultRow {
            name: cfg.name.clone(),
            seed: cfg.seed,
            group: cfg.group.label(),
            data_rate: cfg.bus.data_rate,
            arb_rate: cfg.bus.arb_rate,
            n_sys_att: n.n_sys_att,
            n_rx_att: n.n_rx_att,
            n_tx_ecu: n.senders,
            n_rx_ecu: n.receivers_per_sender,
            shared_receivers: n.shared_receivers,
            receivers: stride * n.senders.saturating_sub(1) + n.receivers_per_sender,
            sa_clock: cfg.costs.sa_clock.to_string(),
            cost_mode: format!("{:?}", cfg.costs.mode).to_lowercase(),
            window_ms: n.window_ms,
            attack: cfg.attack.map_or("none".into(), |a| a.to_string()),
            total_time_s: 0.0,
            crypto_s: 0.0,
            bus_s: 0.0,
            frames: 0,
            trials: 0,
            rejected: 0,
            status: RunStatus::Ok.to_string(),
        }
    }

    pub fn with_report(mut self, r: &SimReport) -> Self {
        self.total_time_s = r.total_s();
        self.crypto_s = SimReport::seconds(r.crypto_ns);
        self.bus_s = SimReport::seconds(r.bus_ns);
        self.frames = r.frames;
        self.status = r.status.to_string();
        self
    }

    pub fn status(&self) -> Option<RunStatus> {
        serde_plain_status(&self.status)
    }
}

fn serde_plain_status(s: &str) -> Option<RunStatus> {
    RunStatus::ALL.into_iter().find(|x| x.label() == s)
}

pub fn write_rows<W: Write>(rows: &[ResultRow], w: W) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows(text: &str) -> Result<Vec<ResultRow>, BenchError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

/// One scenario run: the result row plus the simulator report when a
/// single simulation produced it.
#[derive(Debug)]
pub struct RunOutput {
    pub row: ResultRow,
    pub report: Option<SimReport>,
    /// Curious-SA findings, when that attack ran.
    pub scan: Option<CuriousReport>,
}

/// Runs one epoch of `cfg`, or the configured attack.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, BenchError> {
    if let Some(kind) = cfg.attack {
        return attack::run_attack(kind, cfg, attack::DEFAULT_TRIALS);
    }
    let dep = cfg.deployment()?;
    let mut sim = Simulator::new(&dep, cfg.sim_config()?, cfg.seed)?;
    let report = sim.run_epoch(cfg.r_k)?;
    Ok(RunOutput {
        row: ResultRow::for_config(cfg).with_report(&report),
        report: Some(report),
        scan: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_through_csv() {
        let row = ResultRow::for_config(&ScenarioConfig::default());
        let mut buf = Vec::new();
        write_rows(&[row.clone(), row.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("name,seed,group,data_rate,"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_rows(&text).unwrap(), vec![row.clone(), row]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(status_exit_code(RunStatus::Ok), 0);
        assert_eq!(status_exit_code(RunStatus::ReplayRejected), 0);
        assert_eq!(status_exit_code(RunStatus::Abort), 3);
        assert_eq!(status_exit_code(RunStatus::Stall), 4);
        assert_eq!(BenchError::Sim(SimError::Config("x".into())).exit_code(), 2);
        assert_eq!(BenchError::Sim(SimError::Stall(vec![])).exit_code(), 4);
    }

    #[test]
    fn row_counts_topology() {
        let mut c = ScenarioConfig::default();
        c.nodes.senders = 2;
        c.nodes.shared_receivers = 5;
        assert_eq!(ResultRow::for_config(&c).receivers, 15);
        assert_eq!(ResultRow::for_config(&c).status().unwrap(), RunStatus::Ok);
    }
}

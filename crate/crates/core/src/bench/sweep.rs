use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::{ScenarioConfig, SimError};

use super::{run_scenario, BenchError, ResultRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    DataRate,
    NSysAtt,
    NRxAtt,
    NRxEcu,
    NTxEcu,
    SaClock,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::DataRate => "data_rate",
            SweepParam::NSysAtt => "n_sys_att",
            SweepParam::NRxAtt => "n_rx_att",
            SweepParam::NRxEcu => "n_rx_ecu",
            SweepParam::NTxEcu => "n_tx_ecu",
            SweepParam::SaClock => "sa_clock",
        }
    }
}

/// One parameter swept over a value list around a fixed baseline.
///
/// ```toml
/// param = "data_rate"
/// values = [1e6, 2e6, 4e6, 8e6]
///
/// [baseline.nodes]
/// n_sys_att = 32
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    #[serde(default)]
    pub baseline: ScenarioConfig,
}

impl SweepSpec {
    pub fn from_toml(s: &str) -> Result<Self, SimError> {
        toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// One validated scenario per value, ascending.
    pub fn scenarios(&self) -> Result<Vec<ScenarioConfig>, SimError> {
        if self.values.is_empty() {
            return Err(SimError::Config("sweep needs at least one value".into()));
        }
        if self.baseline.attack.is_some() {
            return Err(SimError::Config("sweeps do not run attacks".into()));
        }
        let mut values = self.values.clone();
        values.sort_by(f64::total_cmp);
        values
            .into_iter()
            .map(|v| {
                let mut c = self.baseline.clone();
                c.set_param(self.param.key(), v)?;
                let counted = matches!(self.param, SweepParam::NSysAtt | SweepParam::NRxAtt);
                if counted && !c.costs.extrapolate && !(4.0..=32.0).contains(&v) {
                    return Err(SimError::Extrapolation {
                        count: v as usize,
                        lo: 4,
                        hi: 32,
                    });
                }
                c.deployment()?;
                c.sim_config()?;
                Ok(c)
            })
            .collect()
    }
}

/// Runs every point on up to `jobs` threads; rows come back in ascending
/// value order.
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<Vec<ResultRow>, BenchError> {
    let scenarios = spec.scenarios()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| SimError::Config(format!("thread pool: {e}")))?;
    pool.install(|| scenarios.par_iter().map(|c| run_scenario(c).map(|o| o.row)).collect())
}

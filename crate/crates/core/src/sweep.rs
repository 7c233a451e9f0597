//! Parameter sweeps: train one policy per (value, replication) cell and score
//! its greedy behaviour on a shared set of user placements.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Mount;
use crate::env::{Environment, Scheme};
use crate::error::{Error, Result};
use crate::ppo::{evaluate_policy, train, Agent, PpoConfig};
use crate::scenario::Scenario;

/// Schema tag written as the first line of every sweep CSV.
pub const SWEEP_SCHEMA: &str = "# slipt-sweep v1";

pub const SWEEP_HEADER: &str =
    "parameter,sweep_value,scheme,replication,seed,mean_rate,mean_ee,sat_rate,wall_time,status,config_hash,version";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Target dimming level.
    #[default]
    Dimming,
    /// Per-user minimum rate.
    Qos,
    /// Per-user minimum harvested power.
    HarMin,
    UserCount,
}

impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParameter::Dimming => "dimming",
            SweepParameter::Qos => "qos",
            SweepParameter::HarMin => "har-min",
            SweepParameter::UserCount => "user-count",
        })
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dimming" => Ok(Self::Dimming),
            "qos" => Ok(Self::Qos),
            "har-min" => Ok(Self::HarMin),
            "user-count" => Ok(Self::UserCount),
            other => Err(Error::InvalidConfig(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub scheme: Scheme,
    pub replications: usize,
    pub seed_base: u64,
    /// Size of the evaluation set of user placements shared by every cell.
    pub eval_placements: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            parameter: SweepParameter::Dimming,
            values: (1..=10).map(|i| i as f64 / 10.0).collect(),
            scheme: Scheme::Rsma,
            replications: 1,
            seed_base: 1,
            eval_placements: 100,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        if self.replications == 0 || self.eval_placements == 0 {
            return Err(Error::InvalidConfig("sweep needs replications >= 1 and eval_placements >= 1".into()));
        }
        if self.parameter == SweepParameter::UserCount
            && self.values.iter().any(|v| !(*v >= 1.0) || v.fract() != 0.0)
        {
            return Err(Error::InvalidConfig("user counts must be positive integers".into()));
        }
        Ok(())
    }

    /// The scenario with the swept parameter set to `value`.
    pub fn apply(&self, base: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = base.clone();
        match self.parameter {
            SweepParameter::Dimming => s.dimming.target_level = value,
            SweepParameter::Qos => s.thresholds.qos = value,
            SweepParameter::HarMin => s.thresholds.p_har_min = value,
            SweepParameter::UserCount => {
                s.users.count = value as usize;
                s.noise.per_user = None;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Fill the wall_time column; off by default so output is byte-stable.
    pub record_wall_time: bool,
    /// Load `cell-<i>.json` policies from here when present, save them otherwise.
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub replication: usize,
    pub seed: u64,
    pub mean_rate: f64,
    pub mean_ee: f64,
    pub sat_rate: f64,
    pub wall_time: Option<f64>,
    /// `ok`, or the error that stopped the cell.
    pub status: String,
    pub config_hash: String,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let wall = self.wall_time.map(|w| format!("{w:.3}")).unwrap_or_default();
        let status = self.status.replace([',', '\n'], ";");
        format!(
            "{},{},{},{},{},{},{},{},{wall},{status},{},{}",
            self.parameter,
            self.sweep_value,
            self.scheme,
            self.replication,
            self.seed,
            self.mean_rate,
            self.mean_ee,
            self.sat_rate,
            self.config_hash,
            crate::CODE_VERSION
        )
    }
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_SCHEMA}\n{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

/// Seed of replication `r`; every swept value reuses it so cells are paired.
pub fn cell_seed(spec: &SweepSpec, replication: usize) -> u64 {
    spec.seed_base.wrapping_add(replication as u64)
}

/// Placements drawn from the scenario's own seed, identical for every cell
/// with the same user count.
pub fn evaluation_set(scenario: &Scenario, count: usize) -> Vec<Vec<Mount>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    (0..count).map(|_| scenario.sample_users(&mut rng)).collect()
}

fn run_cell(
    spec: &SweepSpec,
    base: &Scenario,
    ppo: &PpoConfig,
    options: &SweepOptions,
    index: usize,
    value: f64,
    replication: usize,
) -> SweepRow {
    let seed = cell_seed(spec, replication);
    let started = Instant::now();
    let mut row = SweepRow {
        parameter: spec.parameter,
        sweep_value: value,
        scheme: spec.scheme,
        replication,
        seed,
        mean_rate: f64::NAN,
        mean_ee: f64::NAN,
        sat_rate: f64::NAN,
        wall_time: None,
        status: "ok".into(),
        config_hash: String::new(),
    };
    let outcome = (|| -> Result<()> {
        let scenario = spec.apply(base, value)?;
        row.config_hash = scenario.config_hash();
        let mut env = Environment::new(&scenario, spec.scheme, seed)?;
        let path = options.checkpoint_dir.as_ref().map(|d| d.join(format!("cell-{index}.json")));
        let agent = match &path {
            Some(p) if p.exists() => Agent::load(p)?,
            _ => {
                let (agent, _) = train(&mut env, ppo, seed ^ 0x5eed_0fa9e7)?;
                if let Some(p) = &path {
                    agent.save(p)?;
                }
                agent
            }
        };
        let summary = evaluate_policy(&agent, &mut env, &evaluation_set(&scenario, spec.eval_placements))?;
        row.mean_rate = summary.mean_rate;
        row.mean_ee = summary.mean_ee;
        row.sat_rate = summary.sat_rate;
        Ok(())
    })();
    if let Err(e) = outcome {
        row.status = format!("error: {e}");
    }
    if options.record_wall_time {
        row.wall_time = Some(started.elapsed().as_secs_f64());
    }
    row
}

/// Run every cell in parallel; rows come back in (value, replication) order.
pub fn run_sweep(spec: &SweepSpec, scenario: &Scenario, ppo: &PpoConfig, options: &SweepOptions) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    ppo.validate()?;
    if let Some(d) = &options.checkpoint_dir {
        std::fs::create_dir_all(d)?;
    }
    let cells: Vec<(usize, f64, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.replications).map(move |r| (v, r)))
        .enumerate()
        .map(|(i, (v, r))| (i, v, r))
        .collect();
    Ok(cells.par_iter().map(|&(i, v, r)| run_cell(spec, scenario, ppo, options, i, v, r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tiny_scenario;

    fn quick() -> (SweepSpec, Scenario, PpoConfig) {
        let mut s = tiny_scenario();
        s.environment.episode_len = 4;
        let spec = SweepSpec { values: vec![0.2, 0.4], replications: 2, eval_placements: 2, ..SweepSpec::default() };
        (spec, s, PpoConfig { episodes: 2, hidden_width: 8, ..PpoConfig::default() })
    }

    #[test]
    fn row_accounting_and_order() {
        let (spec, s, ppo) = quick();
        let rows = run_sweep(&spec, &s, &ppo, &SweepOptions::default()).unwrap();
        assert_eq!(rows.len(), 4);
        let keys: Vec<(f64, usize)> = rows.iter().map(|r| (r.sweep_value, r.replication)).collect();
        assert_eq!(keys, vec![(0.2, 0), (0.2, 1), (0.4, 0), (0.4, 1)]);
        assert!(rows.iter().all(|r| r.status == "ok" && r.wall_time.is_none()));
        assert_eq!(rows[0].seed, rows[2].seed);
    }

    #[test]
    fn identical_runs_identical_bytes() {
        let (spec, s, ppo) = quick();
        let a = rows_to_csv(&run_sweep(&spec, &s, &ppo, &SweepOptions::default()).unwrap());
        let b = rows_to_csv(&run_sweep(&spec, &s, &ppo, &SweepOptions::default()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_recorded_per_cell() {
        let (mut spec, s, ppo) = quick();
        spec.parameter = SweepParameter::Qos;
        spec.values = vec![0.1, f64::NAN];
        spec.replications = 1;
        let rows = run_sweep(&spec, &s, &ppo, &SweepOptions::default()).unwrap();
        assert_eq!(rows[0].status, "ok");
        assert!(rows[1].status.starts_with("error"));
    }

    #[test]
    fn apply_sets_parameter() {
        let s = tiny_scenario();
        let spec = SweepSpec { parameter: SweepParameter::HarMin, ..SweepSpec::default() };
        assert_eq!(spec.apply(&s, 1e-9).unwrap().thresholds.p_har_min, 1e-9);
        let spec = SweepSpec { parameter: SweepParameter::UserCount, values: vec![3.0], ..SweepSpec::default() };
        assert_eq!(spec.apply(&s, 3.0).unwrap().n_users(), 3);
        assert!(SweepSpec { values: vec![], ..SweepSpec::default() }.validate().is_err());
    }
}

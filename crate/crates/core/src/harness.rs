// Copyright 2026 The iobalance Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Multi-trial cluster experiment: random workloads are placed by the
//! baseline scheduler, measured, rebalanced and measured again.
//!
//! Every trial draws from its own RNG stream derived from the experiment
//! seed and the trial index, and every host oracle from one derived from
//! the trial and host indices, so trials are independent of each other and
//! of how many threads run them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balancer::{self, place_all};
use crate::domain::{AccessPattern, HostProfile, HostState, LatencySample, Workload};
use crate::error::{Error, Result};
use crate::ground_truth::{self, GroundTruth, OracleConfig};
use crate::modeler::{run_modeler, ModelSet};

/// Write ratios drawn for evaluation workloads, in %.
pub const EVAL_W_VECTOR: [u8; 5] = [5, 30, 50, 70, 95];
/// Block sizes drawn for evaluation workloads, in KB.
pub const EVAL_S_VECTOR: [u32; 7] = [4, 8, 16, 32, 64, 128, 256];
/// Volume sizes drawn for evaluation workloads, in GB.
pub const EVAL_C_VECTOR: [u64; 4] = [30, 60, 90, 120];

/// Extra draws allowed when a trial's workloads do not fit the cluster.
pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSpec {
    pub name: String,
    /// Model set key.
    pub profile: String,
    /// Oracle key: an entry of `oracles`, else a builtin profile name.
    pub oracle: String,
    /// GB
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hosts: Vec<HostSpec>,
    /// Inclusive [min, max] workload count per trial.
    pub workload_count_range: [usize; 2],
    pub w_vector: Vec<u8>,
    pub s_vector: Vec<u32>,
    pub c_vector: Vec<u64>,
    pub trials: usize,
    pub rng_seed: u64,
    /// Custom oracle configurations, looked up before the builtins.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub oracles: BTreeMap<String, OracleConfig>,
}

impl ExperimentConfig {
    /// Three `ssd1` hosts (480 GB) and two `ssd2` hosts (400 GB) running
    /// 10 to 16 random workloads, 50 trials.
    pub fn reference(rng_seed: u64) -> Self {
        let host = |name: &str, key: &str, capacity| HostSpec {
            name: name.into(),
            profile: key.into(),
            oracle: key.into(),
            capacity,
        };
        ExperimentConfig {
            hosts: vec![
                host("ssd1-a", "ssd1", 480),
                host("ssd1-b", "ssd1", 480),
                host("ssd1-c", "ssd1", 480),
                host("ssd2-a", "ssd2", 400),
                host("ssd2-b", "ssd2", 400),
            ],
            workload_count_range: [10, 16],
            w_vector: EVAL_W_VECTOR.to_vec(),
            s_vector: EVAL_S_VECTOR.to_vec(),
            c_vector: EVAL_C_VECTOR.to_vec(),
            trials: 50,
            rng_seed,
            oracles: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hosts.is_empty() {
            return bad("experiment has no hosts".into());
        }
        let [lo, hi] = self.workload_count_range;
        if lo > hi {
            return bad(format!("workload count range [{lo}, {hi}] is empty"));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.w_vector.is_empty() || self.s_vector.is_empty() || self.c_vector.is_empty() {
            return bad("test vectors must be non-empty".into());
        }
        for &w in &self.w_vector {
            AccessPattern::random(w, 4)?;
        }
        if self.s_vector.contains(&0) || self.c_vector.contains(&0) {
            return bad("block and volume sizes must be positive".into());
        }
        let mut names: Vec<&str> = self.hosts.iter().map(|h| h.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|p| p[0] == p[1]) {
            return bad("host names must be unique".into());
        }
        for h in &self.hosts {
            self.oracle(&h.oracle)?.validate()?;
            HostProfile::new(&h.name, h.capacity, &h.oracle, &h.profile)?;
        }
        Ok(())
    }

    pub fn oracle(&self, key: &str) -> Result<OracleConfig> {
        match self.oracles.get(key) {
            Some(c) => Ok(c.clone()),
            None => ground_truth::builtin(key),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::parse("experiment config", &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn empty_cluster(&self) -> Vec<HostState> {
        self.hosts
            .iter()
            .map(|h| {
                let profile = HostProfile {
                    name: h.name.clone(),
                    total_capacity: h.capacity,
                    ground_truth_key: h.oracle.clone(),
                    model_set_key: h.profile.clone(),
                };
                HostState::new(profile)
            })
            .collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of an independent substream identified by `path` under `seed`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

const STREAM_TRIAL: u64 = 1;
const STREAM_ORACLE: u64 = 2;
const STREAM_MODELER: u64 = 3;

/// Fits one model set per distinct host profile, using the oracle of the
/// first host carrying that profile.
pub fn build_model_sets(config: &ExperimentConfig) -> Result<BTreeMap<String, ModelSet>> {
    let mut out = BTreeMap::new();
    for (i, h) in config.hosts.iter().enumerate() {
        if out.contains_key(&h.profile) {
            continue;
        }
        let oracle = config
            .oracle(&h.oracle)?
            .with_seed(derive_seed(config.rng_seed, &[STREAM_MODELER, i as u64]));
        let profile = HostProfile::new(&h.name, h.capacity, &h.oracle, &h.profile)?;
        out.insert(h.profile.clone(), run_modeler(&profile, &oracle)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostMeasurement {
    pub host: String,
    pub workloads: usize,
    /// None for an idle host.
    pub sample: Option<LatencySample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Set when no draw fit the cluster; such a trial has no measurements.
    pub aborted: bool,
    pub draws: usize,
    pub workload_count: usize,
    pub total_volume: u64,
    pub baseline: Vec<HostMeasurement>,
    pub balanced: Vec<HostMeasurement>,
    pub moves: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub completed_trials: usize,
    pub aborted_trials: usize,
    pub variance_reduction_avg: f64,
    pub max_avg_before: f64,
    pub max_avg_after: f64,
    pub variance_reduction_p99_read: f64,
    pub variance_reduction_p99_write: f64,
    pub slo_avg_before: f64,
    pub slo_avg_after: f64,
    pub slo_read_before: f64,
    pub slo_read_after: f64,
    pub slo_write_before: f64,
    pub slo_write_after: f64,
}

impl Aggregate {
    /// Fractional reduction of the pooled maximum average latency.
    pub fn max_avg_reduction(&self) -> f64 {
        reduction(self.max_avg_before, self.max_avg_after)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rng_seed: u64,
    pub per_trial: Vec<TrialRecord>,
    pub aggregate: Aggregate,
}

/// 99th percentile by nearest rank: the ⌈0.99·N⌉-th smallest value.
pub fn supported_slo(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyCollection("supported SLO"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (99 * sorted.len()).div_ceil(100);
    Ok(sorted[rank - 1])
}

/// Population variance; 0 for an empty population.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// 1 − after/before, with 0 when `before` is 0.
fn reduction(before: f64, after: f64) -> f64 {
    if before == 0.0 {
        0.0
    } else {
        1.0 - after / before
    }
}

fn draw_workloads<R: Rng>(rng: &mut R, config: &ExperimentConfig) -> Result<Vec<Workload>> {
    let [lo, hi] = config.workload_count_range;
    let count = rng.random_range(lo..=hi);
    (0..count)
        .map(|i| {
            let w = config.w_vector[rng.random_range(0..config.w_vector.len())];
            let s = config.s_vector[rng.random_range(0..config.s_vector.len())];
            let c = config.c_vector[rng.random_range(0..config.c_vector.len())];
            Workload::new(format!("w{:03}", i + 1), AccessPattern::random(w, s)?, c)
        })
        .collect()
}

fn measure_cluster(cluster: &[HostState], oracles: &mut [GroundTruth]) -> Result<Vec<HostMeasurement>> {
    cluster
        .iter()
        .zip(oracles.iter_mut())
        .map(|(h, o)| {
            let sample = if h.workloads().is_empty() {
                None
            } else {
                Some(o.measure(h.workloads())?)
            };
            Ok(HostMeasurement {
                host: h.name().to_string(),
                workloads: h.workloads().len(),
                sample,
            })
        })
        .collect()
}

/// Runs one trial.
pub fn run_trial(
    config: &ExperimentConfig,
    model_sets: &BTreeMap<String, ModelSet>,
    trial: usize,
) -> Result<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, &[STREAM_TRIAL, trial as u64]));
    let mut placed = None;
    let mut draws = 0;
    while draws <= MAX_REDRAWS {
        draws += 1;
        let workloads = draw_workloads(&mut rng, config)?;
        let mut cluster = config.empty_cluster();
        match place_all(&mut cluster, workloads) {
            Ok(()) => {
                placed = Some(cluster);
                break;
            }
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let Some(mut cluster) = placed else {
        return Ok(TrialRecord {
            trial,
            aborted: true,
            draws,
            workload_count: 0,
            total_volume: 0,
            baseline: Vec::new(),
            balanced: Vec::new(),
            moves: 0,
        });
    };

    let mut oracles = config
        .hosts
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let seed = derive_seed(config.rng_seed, &[STREAM_ORACLE, trial as u64, i as u64]);
            GroundTruth::new(config.oracle(&h.oracle)?.with_seed(seed))
        })
        .collect::<Result<Vec<_>>>()?;

    let workload_count = cluster.iter().map(|h| h.workloads().len()).sum();
    let total_volume = cluster.iter().map(HostState::used_capacity).sum();
    let baseline = measure_cluster(&cluster, &mut oracles)?;
    let plan = balancer::load_balance(&cluster, model_sets)?;
    balancer::apply_plan(&mut cluster, &plan)?;
    let balanced = measure_cluster(&cluster, &mut oracles)?;

    Ok(TrialRecord {
        trial,
        aborted: false,
        draws,
        workload_count,
        total_volume,
        baseline,
        balanced,
        moves: plan.moves.len(),
    })
}

fn pooled<'a>(
    trials: &'a [TrialRecord],
    phase: impl Fn(&'a TrialRecord) -> &'a [HostMeasurement],
) -> Vec<LatencySample> {
    trials
        .iter()
        .filter(|t| !t.aborted)
        .flat_map(|t| phase(t).iter().filter_map(|m| m.sample))
        .collect()
}

pub fn aggregate(trials: &[TrialRecord]) -> Result<Aggregate> {
    let before = pooled(trials, |t| &t.baseline);
    let after = pooled(trials, |t| &t.balanced);
    let aborted_trials = trials.iter().filter(|t| t.aborted).count();
    let mut agg = Aggregate {
        completed_trials: trials.len() - aborted_trials,
        aborted_trials,
        ..Aggregate::default()
    };
    if before.is_empty() || after.is_empty() {
        return Ok(agg);
    }
    let field = |s: &[LatencySample], f: fn(&LatencySample) -> f64| -> Vec<f64> {
        s.iter().map(f).collect()
    };
    let (avg_b, avg_a) = (field(&before, |s| s.average), field(&after, |s| s.average));
    let (rd_b, rd_a) = (field(&before, |s| s.p99_read), field(&after, |s| s.p99_read));
    let (wr_b, wr_a) = (field(&before, |s| s.p99_write), field(&after, |s| s.p99_write));
    let var_red = |b: &[f64], a: &[f64]| reduction(population_variance(b), population_variance(a));
    let max = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max);

    agg.variance_reduction_avg = var_red(&avg_b, &avg_a);
    agg.variance_reduction_p99_read = var_red(&rd_b, &rd_a);
    agg.variance_reduction_p99_write = var_red(&wr_b, &wr_a);
    agg.max_avg_before = max(&avg_b);
    agg.max_avg_after = max(&avg_a);
    agg.slo_avg_before = supported_slo(&avg_b)?;
    agg.slo_avg_after = supported_slo(&avg_a)?;
    agg.slo_read_before = supported_slo(&rd_b)?;
    agg.slo_read_after = supported_slo(&rd_a)?;
    agg.slo_write_before = supported_slo(&wr_b)?;
    agg.slo_write_after = supported_slo(&wr_a)?;
    Ok(agg)
}

/// Runs every trial on the calling thread.
pub fn run_experiment(
    config: &ExperimentConfig,
    model_sets: &BTreeMap<String, ModelSet>,
) -> Result<ExperimentReport> {
    run_experiment_jobs(config, model_sets, 1)
}

/// Runs trials on up to `jobs` threads. The report does not depend on `jobs`.
pub fn run_experiment_jobs(
    config: &ExperimentConfig,
    model_sets: &BTreeMap<String, ModelSet>,
    jobs: usize,
) -> Result<ExperimentReport> {
    config.validate()?;
    for h in &config.hosts {
        if !model_sets.contains_key(&h.profile) {
            return Err(Error::Config(format!(
                "no model set {:?} for host {}",
                h.profile, h.name
            )));
        }
    }
    let per_trial = if jobs <= 1 {
        (0..config.trials)
            .map(|t| run_trial(config, model_sets, t))
            .collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|t| run_trial(config, model_sets, t))
                .collect::<Result<Vec<_>>>()
        })?
    };
    let aggregate = aggregate(&per_trial)?;
    Ok(ExperimentReport {
        rng_seed: config.rng_seed,
        per_trial,
        aggregate,
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// One row per trial × host × phase. Idle hosts have empty latency
    /// cells; aborted trials have no rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial", "host", "phase", "avg_us", "p99_read_us", "p99_write_us"])
            .expect("in-memory write");
        for t in self.per_trial.iter().filter(|t| !t.aborted) {
            for (phase, rows) in [("baseline", &t.baseline), ("balanced", &t.balanced)] {
                for m in rows {
                    let cells = match m.sample {
                        Some(s) => [
                            format!("{:.3}", s.average),
                            format!("{:.3}", s.p99_read),
                            format!("{:.3}", s.p99_write),
                        ],
                        None => Default::default(),
                    };
                    w.write_record([
                        t.trial.to_string().as_str(),
                        &m.host,
                        phase,
                        &cells[0],
                        &cells[1],
                        &cells[2],
                    ])
                    .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

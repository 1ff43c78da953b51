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

//! Batch command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 model fit
//! failure, 4 infeasible placement, 5 I/O failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::balancer::{self, BalanceOptions, CurrentHostScoring};
use crate::domain::{AccessPattern, HostProfile, Workload};
use crate::error::{Error, Result};
use crate::ground_truth::{self, OracleConfig};
use crate::harness::{self, ExperimentConfig};
use crate::modeler::{self, ModelSet};

#[derive(Debug, Parser)]
#[command(name = "iobalance", version, about = "SSD consolidation models and latency-driven volume balancing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the six consolidation models of a host type against an oracle.
    Model {
        /// Model set key written into the file.
        #[arg(long)]
        profile: String,
        /// `builtin:<name>` or the path of an oracle config file.
        #[arg(long)]
        oracle: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the oracle noise sigma, in µs.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Predict the average latency of a set of concurrent workloads.
    Predict {
        #[arg(long)]
        models: PathBuf,
        /// Comma-separated `W:S` pairs, e.g. `50:4,25:128`.
        #[arg(long)]
        workloads: String,
    },
    /// Plan migrations for a cluster state file.
    Balance {
        #[arg(long)]
        cluster: PathBuf,
        /// Model files, one per model set key used by the cluster.
        #[arg(long = "models", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Score the current host as residents plus the workload.
        #[arg(long)]
        include_self: bool,
    },
    /// Run the baseline-vs-balanced cluster experiment.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pre-built model files; without them models are fitted from the
        /// configured oracles.
        #[arg(long = "models")]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
}

/// Parses `args` (program name first) and runs the command, writing the
/// human-readable report to `out` and errors to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return CommandOutcome {
                exit_code: code,
                artifacts: Vec::new(),
            };
        }
    };
    let mut artifacts = Vec::new();
    match execute(cli.command, out, &mut artifacts) {
        Ok(()) => CommandOutcome {
            exit_code: 0,
            artifacts,
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            CommandOutcome {
                exit_code: e.exit_code(),
                artifacts,
            }
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    match command {
        Command::Model {
            profile,
            oracle,
            seed,
            out: path,
            noise,
        } => cmd_model(&profile, &oracle, seed, noise, &path, out, artifacts),
        Command::Predict { models, workloads } => cmd_predict(&models, &workloads, out),
        Command::Balance {
            cluster,
            models,
            out: path,
            include_self,
        } => {
            let options = BalanceOptions {
                current_host: if include_self {
                    CurrentHostScoring::IncludeSelf
                } else {
                    CurrentHostScoring::ExcludeSelf
                },
            };
            cmd_balance(&cluster, &models, &path, options, out, artifacts)
        }
        Command::Experiment {
            config,
            out: dir,
            models,
            jobs,
        } => cmd_experiment(&config, &dir, &models, jobs, out, artifacts),
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_file(path: &Path, text: &str, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    artifacts.push(path.to_path_buf());
    Ok(())
}

/// Resolves `builtin:<name>` or reads an oracle config file.
pub fn resolve_oracle(reference: &str) -> Result<OracleConfig> {
    if let Some(name) = reference.strip_prefix("builtin:") {
        return ground_truth::builtin(name);
    }
    let text = fs::read_to_string(reference).map_err(|e| Error::io(reference, e))?;
    let cfg: OracleConfig =
        serde_json::from_str(&text).map_err(|e| Error::parse("oracle config", &e))?;
    cfg.validate()?;
    Ok(cfg)
}

fn print_models(set: &ModelSet, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "profile {}", set.profile_name)?;
    writeln!(
        out,
        "{:<6} {:>12} {:>10} {:>10} {:>8} {:>6}",
        "model", "intercept", "w_coef", "s_coef", "adj_r2", "n_obs"
    )?;
    for m in set.models() {
        writeln!(
            out,
            "{:<6} {:>12.3} {:>10.3} {:>10.3} {:>8.4} {:>6}",
            m.slot.to_string(),
            m.intercept,
            m.w_coef,
            m.s_coef,
            m.adjusted_r_squared,
            m.n_observations
        )?;
    }
    Ok(())
}

pub fn cmd_model(
    profile: &str,
    oracle: &str,
    seed: u64,
    noise: Option<f64>,
    path: &Path,
    out: &mut dyn Write,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let mut cfg = resolve_oracle(oracle)?.with_seed(seed);
    if let Some(sigma) = noise {
        cfg = cfg.with_noise(sigma);
    }
    let host = HostProfile::new(profile, 1, oracle, profile)?;
    let set = modeler::run_modeler(&host, &cfg)?;
    write_file(path, &set.to_json(), artifacts)?;
    print_models(&set, out).map_err(stdout_err)
}

/// Parses `W:S[,W:S...]`.
pub fn parse_workload_list(spec: &str) -> Result<Vec<Workload>> {
    let items: Vec<&str> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(Error::InvalidValue("workload list is empty".into()));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let (w, s) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidValue(format!("{item:?} is not W:S")))?;
            let w: u8 = w
                .trim()
                .parse()
                .map_err(|_| Error::InvalidValue(format!("bad write ratio in {item:?}")))?;
            let s: u32 = s
                .trim()
                .parse()
                .map_err(|_| Error::InvalidValue(format!("bad block size in {item:?}")))?;
            Workload::new(format!("w{:03}", i + 1), AccessPattern::random(w, s)?, 1)
        })
        .collect()
}

pub fn cmd_predict(models: &Path, workloads: &str, out: &mut dyn Write) -> Result<()> {
    let set = modeler::load_model_set(models)?;
    let wls = parse_workload_list(workloads)?;
    let p = set.predict_detailed(&wls)?;
    writeln!(
        out,
        "model={} workloads={} predicted_avg_us={:.3}",
        p.slot,
        wls.len(),
        p.latency
    )
    .map_err(stdout_err)
}

fn load_model_files(paths: &[PathBuf]) -> Result<BTreeMap<String, ModelSet>> {
    let mut sets = BTreeMap::new();
    for p in paths {
        let set = modeler::load_model_set(p)?;
        if sets.contains_key(&set.profile_name) {
            return Err(Error::Config(format!(
                "model set {:?} given twice",
                set.profile_name
            )));
        }
        sets.insert(set.profile_name.clone(), set);
    }
    Ok(sets)
}

pub fn cmd_balance(
    cluster: &Path,
    models: &[PathBuf],
    path: &Path,
    options: BalanceOptions,
    out: &mut dyn Write,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let hosts = balancer::load_cluster(cluster)?;
    let sets = load_model_files(models)?;
    let outcome = balancer::load_balance_with(&hosts, &sets, options)?;
    let plan = outcome.plan;
    write_file(path, &plan.to_json(), artifacts)?;
    (|| -> std::io::Result<()> {
        writeln!(out, "moves {}", plan.moves.len())?;
        for m in &plan.moves {
            writeln!(out, "  {} {} -> {}", m.workload_id, m.from_host, m.to_host)?;
        }
        writeln!(out, "{:<16} {:>14}", "host", "predicted_us")?;
        for (host, lat) in &plan.predicted_host_latencies {
            writeln!(out, "{host:<16} {lat:>14.3}")?;
        }
        Ok(())
    })()
    .map_err(stdout_err)
}

fn print_aggregate(agg: &harness::Aggregate, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "trials completed {} aborted {}",
        agg.completed_trials, agg.aborted_trials
    )?;
    writeln!(out, "{:<24} {:>14} {:>14}", "metric", "baseline", "balanced")?;
    let rows = [
        ("max_avg_us", agg.max_avg_before, agg.max_avg_after),
        ("slo_avg_us", agg.slo_avg_before, agg.slo_avg_after),
        ("slo_p99_read_us", agg.slo_read_before, agg.slo_read_after),
        ("slo_p99_write_us", agg.slo_write_before, agg.slo_write_after),
    ];
    for (name, b, a) in rows {
        writeln!(out, "{name:<24} {b:>14.3} {a:>14.3}")?;
    }
    writeln!(out, "{:<24} {:>14.3}", "variance_reduction_avg", agg.variance_reduction_avg)?;
    writeln!(
        out,
        "{:<24} {:>14.3}",
        "variance_reduction_read", agg.variance_reduction_p99_read
    )?;
    writeln!(
        out,
        "{:<24} {:>14.3}",
        "variance_reduction_write", agg.variance_reduction_p99_write
    )?;
    writeln!(out, "{:<24} {:>14.3}", "max_avg_reduction", agg.max_avg_reduction())
}

pub fn cmd_experiment(
    config: &Path,
    dir: &Path,
    models: &[PathBuf],
    jobs: usize,
    out: &mut dyn Write,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sets = if models.is_empty() {
        let sets = harness::build_model_sets(&cfg)?;
        for (key, set) in &sets {
            write_file(&dir.join(format!("models-{key}.json")), &set.to_json(), artifacts)?;
        }
        sets
    } else {
        load_model_files(models)?
    };
    let report = harness::run_experiment_jobs(&cfg, &sets, jobs)?;
    write_file(&dir.join("report.json"), &report.to_json(), artifacts)?;
    write_file(&dir.join("report.csv"), &report.to_csv(), artifacts)?;
    print_aggregate(&report.aggregate, out).map_err(stdout_err)
}

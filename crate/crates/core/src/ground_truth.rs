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

//! Synthetic latency oracle standing in for a measured SSD host.
//!
//! Average latency follows the sum-form consolidation model for the
//! resident workload count, plus Gaussian noise. The p99 read and write
//! latencies are multiples of the average with a little uniform jitter;
//! they are invented plumbing, only ever compared between schedulers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{LatencySample, ModelSlot, PatternSums, Workload};
use crate::error::{Error, Result};

/// Default additive noise on the average latency, in µs.
pub const DEFAULT_NOISE_SIGMA: f64 = 50.0;
pub const DEFAULT_TAIL_READ_FACTOR: f64 = 2.5;
pub const DEFAULT_TAIL_WRITE_FACTOR: f64 = 4.0;
/// Upper bound of the uniform jitter applied to both tail multipliers.
pub const TAIL_JITTER: f64 = 0.1;

/// Generating coefficients of one sum-form model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumForm {
    /// µs
    pub intercept: f64,
    /// µs per percentage point of Σ W
    pub w_coef: f64,
    /// µs per KB of Σ S
    pub s_coef: f64,
}

impl SumForm {
    pub const fn new(intercept: f64, w_coef: f64, s_coef: f64) -> Self {
        SumForm {
            intercept,
            w_coef,
            s_coef,
        }
    }

    pub fn eval(&self, sums: PatternSums) -> f64 {
        self.intercept + self.w_coef * sums.write_ratio as f64 + self.s_coef * sums.block_size as f64
    }
}

/// Optional non-linearity: once Σ S passes `threshold_kb`, the average is
/// scaled by `1 + per_workload · n`. Off unless configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Saturation {
    pub threshold_kb: u64,
    pub per_workload: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub per_count_models: BTreeMap<ModelSlot, SumForm>,
    pub noise_sigma: f64,
    pub tail_read_factor: f64,
    pub tail_write_factor: f64,
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<Saturation>,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_count_models.is_empty() {
            return Err(Error::Config("oracle has no per-count models".into()));
        }
        for (slot, m) in &self.per_count_models {
            if m.s_coef.is_nan() || m.s_coef <= 0.0 {
                return Err(Error::Config(format!(
                    "oracle model {slot}: block-size coefficient must be positive"
                )));
            }
            if !(m.intercept.is_finite() && m.w_coef.is_finite() && m.s_coef.is_finite()) {
                return Err(Error::Config(format!("oracle model {slot}: non-finite coefficient")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise sigma must be finite and non-negative".into()));
        }
        if !(self.tail_read_factor >= 1.0 && self.tail_write_factor >= 1.0) {
            return Err(Error::Config("tail factors must be at least 1".into()));
        }
        Ok(())
    }

    /// The generating model for `count` resident workloads. Counts above
    /// five, and counts without their own entry, fall back to the extended
    /// entry.
    pub fn model_for(&self, count: usize) -> Result<&SumForm> {
        let slot = ModelSlot::for_count(count)?;
        self.per_count_models
            .get(&slot)
            .or_else(|| self.per_count_models.get(&ModelSlot::Extended))
            .ok_or_else(|| {
                Error::Config(format!("oracle has no model for {count} workloads and no 5plus entry"))
            })
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Table of consolidation coefficients measured on the two reference
/// devices; terms that were not significant are 0.
const SSD1_MODELS: [SumForm; 6] = [
    SumForm::new(113.44, 0.0, 22.135),
    SumForm::new(0.0, 0.0, 24.497),
    SumForm::new(0.0, 0.0, 24.714),
    SumForm::new(81.969, 0.0, 23.587),
    SumForm::new(0.0, 0.578, 23.919),
    SumForm::new(0.0, 0.646, 23.913),
];

const SSD2_MODELS: [SumForm; 6] = [
    SumForm::new(216.51, -1.19, 19.628),
    SumForm::new(42.669, 0.0, 20.691),
    SumForm::new(-86.634, 0.533, 21.339),
    SumForm::new(-188.26, 0.907, 21.729),
    SumForm::new(-133.83, 0.519, 21.906),
    SumForm::new(-137.81, 0.597, 21.821),
];

fn reference_config(models: [SumForm; 6]) -> OracleConfig {
    OracleConfig {
        per_count_models: ModelSlot::all().into_iter().zip(models).collect(),
        noise_sigma: DEFAULT_NOISE_SIGMA,
        tail_read_factor: DEFAULT_TAIL_READ_FACTOR,
        tail_write_factor: DEFAULT_TAIL_WRITE_FACTOR,
        rng_seed: 0,
        saturation: None,
    }
}

/// Oracles seeded from the two reference devices, keyed `ssd1` and `ssd2`.
pub fn builtin_profiles() -> BTreeMap<String, OracleConfig> {
    BTreeMap::from([
        ("ssd1".to_string(), reference_config(SSD1_MODELS)),
        ("ssd2".to_string(), reference_config(SSD2_MODELS)),
    ])
}

/// Looks up `name` among [`builtin_profiles`].
pub fn builtin(name: &str) -> Result<OracleConfig> {
    builtin_profiles()
        .remove(name)
        .ok_or_else(|| Error::Config(format!("unknown builtin oracle {name:?}")))
}

/// A stateful oracle instance: one configuration plus its own RNG stream.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    config: OracleConfig,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl GroundTruth {
    pub fn new(config: OracleConfig) -> Result<Self> {
        config.validate()?;
        let noise = if config.noise_sigma > 0.0 {
            Some(Normal::new(0.0, config.noise_sigma).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(GroundTruth { config, noise, rng })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// Noise-free average latency for a workload set.
    pub fn expected_average(&self, workloads: &[Workload]) -> Result<f64> {
        if workloads.is_empty() {
            return Err(Error::EmptyCollection("latency measurement"));
        }
        let sums = PatternSums::of_workloads(workloads);
        let mut avg = self.config.model_for(sums.count)?.eval(sums);
        if let Some(sat) = self.config.saturation {
            if sums.block_size > sat.threshold_kb {
                avg *= 1.0 + sat.per_workload * sums.count as f64;
            }
        }
        Ok(avg)
    }

    /// One measurement of a host running `workloads` concurrently.
    pub fn measure(&mut self, workloads: &[Workload]) -> Result<LatencySample> {
        let expected = self.expected_average(workloads)?;
        let eps = match &self.noise {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        };
        let average = (expected + eps).max(0.0);
        let u_read: f64 = self.rng.random_range(0.0..TAIL_JITTER);
        let u_write: f64 = self.rng.random_range(0.0..TAIL_JITTER);
        Ok(LatencySample {
            average,
            p99_read: average * self.config.tail_read_factor * (1.0 + u_read),
            p99_write: average * self.config.tail_write_factor * (1.0 + u_write),
        })
    }
}

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

//! Builds the six consolidation models of a host type.
//!
//! For each workload count n in 1..=5 the modeler enumerates every multiset
//! of n access patterns over the (W, S) grid, measures each one against the
//! oracle and fits `L = β0 + β1·ΣW + β2·ΣS` with backward elimination of
//! insignificant terms. The extended model, used above five workloads, is
//! fitted on the union of all five measurement sets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AccessPattern, HostProfile, LatencySample, ModelSlot, PatternSums, Workload};
use crate::error::{Error, Result};
use crate::ground_truth::{GroundTruth, OracleConfig};
use crate::regression::{
    eliminate_insignificant, fit_ols, DesignSpec, EliminationOptions, FitDiagnostics, Term,
    DEFAULT_ALPHA,
};

/// Reduced write-ratio vector used to build models, in %.
pub const MODELER_W_VECTOR: [u8; 3] = [25, 50, 75];
/// Reduced block-size vector used to build models, in KB.
pub const MODELER_S_VECTOR: [u32; 4] = [4, 8, 32, 128];
/// Full device-characterization write-ratio vector, 0..=100 step 10.
pub const FULL_W_VECTOR: [u8; 11] = [0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100];
/// Full device-characterization block-size vector.
pub const FULL_S_VECTOR: [u32; 6] = [4, 8, 16, 32, 128, 256];

const W_TERM: Term = Term::Linear(0);
const S_TERM: Term = Term::Linear(1);

/// A multiset of concurrent access patterns, kept sorted so equal
/// multisets compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TestCase {
    patterns: Vec<AccessPattern>,
}

impl TestCase {
    pub fn new(mut patterns: Vec<AccessPattern>) -> Self {
        patterns.sort();
        TestCase { patterns }
    }

    pub fn patterns(&self) -> &[AccessPattern] {
        &self.patterns
    }

    pub fn sums(&self) -> PatternSums {
        PatternSums::of(&self.patterns)
    }

    /// Anonymous workloads carrying this case's patterns.
    pub fn workloads(&self) -> Vec<Workload> {
        self.patterns
            .iter()
            .enumerate()
            .map(|(i, p)| Workload {
                id: format!("t{i}"),
                pattern: *p,
                volume_size: 1,
            })
            .collect()
    }
}

/// A test case with its measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredCase {
    pub case: TestCase,
    pub measured: LatencySample,
}

/// C(g + n − 1, n): the number of size-n multisets over g items.
pub fn multiset_count(grid: usize, n: usize) -> u128 {
    if grid == 0 {
        return u128::from(n == 0);
    }
    // running value is C(grid + i, i + 1) after step i
    (0..n as u128).fold(1u128, |acc, i| acc * (grid as u128 + i) / (i + 1))
}

/// Every single-workload pattern on the (W, S) grid, randomness 100%.
pub fn pattern_grid(w_vector: &[u8], s_vector: &[u32]) -> Result<Vec<AccessPattern>> {
    if w_vector.is_empty() || s_vector.is_empty() {
        return Err(Error::InvalidValue("test vectors must be non-empty".into()));
    }
    let mut grid = Vec::with_capacity(w_vector.len() * s_vector.len());
    for &w in w_vector {
        for &s in s_vector {
            grid.push(AccessPattern::random(w, s)?);
        }
    }
    grid.sort();
    grid.dedup();
    Ok(grid)
}

/// All distinct size-n multisets over the pattern grid.
pub fn generate_test_set(n: usize, w_vector: &[u8], s_vector: &[u32]) -> Result<Vec<TestCase>> {
    if n < 1 {
        return Err(Error::InvalidValue("test sets need at least one workload".into()));
    }
    let grid = pattern_grid(w_vector, s_vector)?;
    Ok(grid
        .into_iter()
        .combinations_with_replacement(n)
        .map(TestCase::new)
        .collect())
}

/// Size of the ordered (Cartesian) test set before deduplication.
pub fn ordered_test_set_size(n: usize, w_vector: &[u8], s_vector: &[u32]) -> u128 {
    ((w_vector.len() * s_vector.len()) as u128).pow(n as u32)
}

/// One fitted sum-form model.
///
/// Terms eliminated as insignificant have a coefficient of exactly 0.
/// `diagnostics` is only present on models fitted in this process; the
/// model file keeps the audit fields `adj_r2` and `n_obs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidationModel {
    pub slot: ModelSlot,
    pub intercept: f64,
    pub w_coef: f64,
    pub s_coef: f64,
    pub adjusted_r_squared: f64,
    pub n_observations: usize,
    pub diagnostics: Option<FitDiagnostics>,
}

impl ConsolidationModel {
    /// A model built directly from coefficients.
    pub fn from_coefficients(slot: ModelSlot, intercept: f64, w_coef: f64, s_coef: f64) -> Self {
        ConsolidationModel {
            slot,
            intercept,
            w_coef,
            s_coef,
            adjusted_r_squared: f64::NAN,
            n_observations: 0,
            diagnostics: None,
        }
    }

    fn from_fit(slot: ModelSlot, fit: FitDiagnostics) -> Self {
        ConsolidationModel {
            slot,
            intercept: fit.coefficient(Term::Intercept),
            w_coef: fit.coefficient(W_TERM),
            s_coef: fit.coefficient(S_TERM),
            adjusted_r_squared: fit.adjusted_r_squared,
            n_observations: fit.n_observations,
            diagnostics: Some(fit),
        }
    }

    /// Predicted average latency in µs, never negative.
    pub fn predict(&self, sums: PatternSums) -> f64 {
        let raw = self.intercept
            + self.w_coef * sums.write_ratio as f64
            + self.s_coef * sums.block_size as f64;
        raw.max(0.0)
    }
}

/// How a model set was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub w_vector: Vec<u8>,
    pub s_vector: Vec<u32>,
    pub oracle_seed: u64,
}

/// Five basic models (one per workload count 1..=5) plus the extended model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub profile_name: String,
    pub basic: [ConsolidationModel; 5],
    pub extended: ConsolidationModel,
    pub created_from: Provenance,
}

/// A prediction along with the model that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub slot: ModelSlot,
    pub latency: f64,
}

impl ModelSet {
    pub fn model(&self, slot: ModelSlot) -> &ConsolidationModel {
        match slot {
            ModelSlot::Basic(n) => &self.basic[usize::from(n) - 1],
            ModelSlot::Extended => &self.extended,
        }
    }

    pub fn models(&self) -> impl Iterator<Item = &ConsolidationModel> {
        self.basic.iter().chain(std::iter::once(&self.extended))
    }

    pub fn predict_sums(&self, sums: PatternSums) -> Result<Prediction> {
        let slot = ModelSlot::for_count(sums.count)?;
        Ok(Prediction {
            slot,
            latency: self.model(slot).predict(sums),
        })
    }

    pub fn predict_detailed(&self, workloads: &[Workload]) -> Result<Prediction> {
        if workloads.is_empty() {
            return Err(Error::EmptyCollection("latency prediction"));
        }
        self.predict_sums(PatternSums::of_workloads(workloads))
    }

    /// Copy without in-memory fit diagnostics, i.e. what a model file holds.
    pub fn without_diagnostics(&self) -> ModelSet {
        let mut m = self.clone();
        for model in m.basic.iter_mut().chain(std::iter::once(&mut m.extended)) {
            model.diagnostics = None;
        }
        m
    }
}

/// Predicted average latency of a host running `workloads` concurrently.
pub fn predict(model_set: &ModelSet, workloads: &[Workload]) -> Result<f64> {
    model_set.predict_detailed(workloads).map(|p| p.latency)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelerOptions {
    pub w_vector: Vec<u8>,
    pub s_vector: Vec<u32>,
    pub alpha: f64,
}

impl Default for ModelerOptions {
    fn default() -> Self {
        ModelerOptions {
            w_vector: MODELER_W_VECTOR.to_vec(),
            s_vector: MODELER_S_VECTOR.to_vec(),
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Measures every case of a test set, in order, on one oracle instance.
pub fn measure_test_set(oracle: &mut GroundTruth, cases: Vec<TestCase>) -> Result<Vec<MeasuredCase>> {
    cases
        .into_iter()
        .map(|case| {
            let measured = oracle.measure(&case.workloads())?;
            Ok(MeasuredCase { case, measured })
        })
        .collect()
}

/// Fits the sum-form model, dropping insignificant terms (intercept included).
pub fn fit_consolidation_model(
    slot: ModelSlot,
    cases: &[MeasuredCase],
    alpha: f64,
) -> Result<ConsolidationModel> {
    let wrap = |e: Error| Error::ModelFit {
        slot: slot.to_string(),
        source: Box::new(e),
    };
    let rows: Vec<Vec<f64>> = cases
        .iter()
        .map(|c| {
            let s = c.case.sums();
            vec![s.write_ratio as f64, s.block_size as f64]
        })
        .collect();
    let response: Vec<f64> = cases.iter().map(|c| c.measured.average).collect();
    let design = DesignSpec::linear(2);
    let fit = fit_ols(&design, &rows, &response).map_err(wrap)?;
    let options = EliminationOptions {
        alpha,
        allow_intercept: true,
    };
    let reduced = eliminate_insignificant(fit, design, &rows, &response, options).map_err(wrap)?;
    Ok(ConsolidationModel::from_fit(slot, reduced.fit))
}

/// Runs the five test sets against the oracle and fits all six models.
pub fn run_modeler(profile: &HostProfile, oracle: &OracleConfig) -> Result<ModelSet> {
    run_modeler_with(profile, oracle, &ModelerOptions::default())
}

pub fn run_modeler_with(
    profile: &HostProfile,
    oracle: &OracleConfig,
    options: &ModelerOptions,
) -> Result<ModelSet> {
    let mut truth = GroundTruth::new(oracle.clone())?;
    let mut basic = Vec::with_capacity(ModelSlot::MAX_BASIC);
    let mut all_cases = Vec::new();
    for n in 1..=ModelSlot::MAX_BASIC {
        let slot = ModelSlot::Basic(n as u8);
        let cases = generate_test_set(n, &options.w_vector, &options.s_vector)?;
        let measured = measure_test_set(&mut truth, cases)?;
        basic.push(fit_consolidation_model(slot, &measured, options.alpha)?);
        all_cases.extend(measured);
    }
    let extended = fit_consolidation_model(ModelSlot::Extended, &all_cases, options.alpha)?;
    Ok(ModelSet {
        profile_name: profile.model_set_key.clone(),
        basic: basic.try_into().expect("five basic models"),
        extended,
        created_from: Provenance {
            w_vector: options.w_vector.clone(),
            s_vector: options.s_vector.clone(),
            oracle_seed: oracle.rng_seed,
        },
    })
}

/// Draws `count` workloads with patterns picked uniformly from the vectors.
pub fn random_workloads<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    w_vector: &[u8],
    s_vector: &[u32],
) -> Result<Vec<Workload>> {
    (0..count)
        .map(|i| {
            let w = w_vector[rng.random_range(0..w_vector.len())];
            let s = s_vector[rng.random_range(0..s_vector.len())];
            Workload::new(format!("w{:03}", i + 1), AccessPattern::random(w, s)?, 1)
        })
        .collect()
}

/// Mean of |predicted − measured| / measured over the given workload sets.
/// Measurements of exactly zero are skipped.
pub fn mean_relative_error(
    model_set: &ModelSet,
    oracle: &mut GroundTruth,
    cases: &[Vec<Workload>],
) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for wls in cases {
        let measured = oracle.measure(wls)?.average;
        if measured == 0.0 {
            continue;
        }
        total += (predict(model_set, wls)? - measured).abs() / measured;
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptyCollection("mean relative error"));
    }
    Ok(total / used as f64)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    intercept: f64,
    w_coef: f64,
    s_coef: f64,
    adj_r2: f64,
    n_obs: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    profile: String,
    models: BTreeMap<String, ModelRecord>,
    provenance: Provenance,
}

impl ModelSet {
    pub fn to_json(&self) -> String {
        let models = self
            .models()
            .map(|m| {
                (
                    m.slot.to_string(),
                    ModelRecord {
                        intercept: m.intercept,
                        w_coef: m.w_coef,
                        s_coef: m.s_coef,
                        adj_r2: m.adjusted_r_squared,
                        n_obs: m.n_observations,
                    },
                )
            })
            .collect();
        let file = ModelFile {
            profile: self.profile_name.clone(),
            models,
            provenance: self.created_from.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model file serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<ModelSet> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::parse("model file", &e))?;
        let mut models = file.models;
        let mut take = |slot: ModelSlot| -> Result<ConsolidationModel> {
            let rec = models.remove(&slot.to_string()).ok_or_else(|| Error::Validation {
                what: "model file",
                message: format!("missing model entry {slot:?}", slot = slot.to_string()),
            })?;
            Ok(ConsolidationModel {
                slot,
                intercept: rec.intercept,
                w_coef: rec.w_coef,
                s_coef: rec.s_coef,
                adjusted_r_squared: rec.adj_r2,
                n_observations: rec.n_obs,
                diagnostics: None,
            })
        };
        let mut basic = Vec::with_capacity(5);
        for n in 1..=5u8 {
            basic.push(take(ModelSlot::Basic(n))?);
        }
        let extended = take(ModelSlot::Extended)?;
        if let Some(extra) = models.keys().next() {
            return Err(Error::Validation {
                what: "model file",
                message: format!("unknown model entry {extra:?}"),
            });
        }
        Ok(ModelSet {
            profile_name: file.profile,
            basic: basic.try_into().expect("five basic models"),
            extended,
            created_from: file.provenance,
        })
    }
}

pub fn save_model_set(model_set: &ModelSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_set.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model_set(path: impl AsRef<Path>) -> Result<ModelSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelSet::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_truth::{builtin, SumForm};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeSet;

    fn profile(key: &str) -> HostProfile {
        HostProfile::new(format!("{key}-a"), 480, key, key).unwrap()
    }

    fn wl(w: u8, s: u32) -> Workload {
        Workload::new("w", AccessPattern::random(w, s).unwrap(), 30).unwrap()
    }

    fn table_model_set(models: [(f64, f64, f64); 6]) -> ModelSet {
        let all = ModelSlot::all();
        let mk = |i: usize| {
            let (a, b, c) = models[i];
            ConsolidationModel::from_coefficients(all[i], a, b, c)
        };
        ModelSet {
            profile_name: "t".into(),
            basic: [mk(0), mk(1), mk(2), mk(3), mk(4)],
            extended: mk(5),
            created_from: Provenance {
                w_vector: MODELER_W_VECTOR.to_vec(),
                s_vector: MODELER_S_VECTOR.to_vec(),
                oracle_seed: 0,
            },
        }
    }

    /// Ordered tuples over the grid, deduplicated as multisets.
    fn brute_force_multisets(g: usize, n: usize) -> usize {
        let mut seen = BTreeSet::new();
        let total = g.pow(n as u32);
        for mut code in 0..total {
            let mut tuple: Vec<usize> = (0..n)
                .map(|_| {
                    let d = code % g;
                    code /= g;
                    d
                })
                .collect();
            tuple.sort();
            seen.insert(tuple);
        }
        seen.len()
    }

    #[test]
    fn default_test_set_sizes() {
        let one = generate_test_set(1, &MODELER_W_VECTOR, &MODELER_S_VECTOR).unwrap();
        assert_eq!(one.len(), 12);
        let two = generate_test_set(2, &MODELER_W_VECTOR, &MODELER_S_VECTOR).unwrap();
        assert_eq!(two.len(), 78);
        assert_eq!(brute_force_multisets(12, 2), 78);
        let unique: BTreeSet<_> = two.iter().cloned().collect();
        assert_eq!(unique.len(), two.len());
    }

    #[test]
    fn full_vector_two_workload_set() {
        assert_eq!(ordered_test_set_size(2, &FULL_W_VECTOR, &FULL_S_VECTOR), 4356);
        let set = generate_test_set(2, &FULL_W_VECTOR, &FULL_S_VECTOR).unwrap();
        assert_eq!(set.len(), 2211);
        assert_eq!(multiset_count(66, 2), 2211);
        assert_eq!(brute_force_multisets(66, 2), 2211);
    }

    #[test]
    fn multiset_count_values() {
        assert_eq!(multiset_count(12, 1), 12);
        assert_eq!(multiset_count(12, 2), 78);
        assert_eq!(multiset_count(12, 5), 4368);
        assert_eq!(multiset_count(1, 4), 1);
        assert_eq!(multiset_count(66, 4), 864_501);
    }

    #[test]
    fn zero_workloads_rejected() {
        assert!(generate_test_set(0, &MODELER_W_VECTOR, &MODELER_S_VECTOR).is_err());
        assert!(generate_test_set(1, &[], &MODELER_S_VECTOR).is_err());
    }

    #[test]
    fn swapped_pair_is_one_case() {
        let a = AccessPattern::random(25, 8).unwrap();
        let b = AccessPattern::random(50, 128).unwrap();
        assert_eq!(TestCase::new(vec![a, b]), TestCase::new(vec![b, a]));
    }

    #[test]
    fn closed_loop_ssd2() {
        let oracle = builtin("ssd2").unwrap().with_noise(0.0);
        let set = run_modeler(&profile("ssd2"), &oracle).unwrap();
        assert_eq!(set.models().count(), 6);
        for n in 1..=5usize {
            let want = oracle.per_count_models[&ModelSlot::Basic(n as u8)];
            let got = set.model(ModelSlot::Basic(n as u8));
            for (g, w) in [
                (got.intercept, want.intercept),
                (got.w_coef, want.w_coef),
                (got.s_coef, want.s_coef),
            ] {
                if w == 0.0 {
                    assert_eq!(g, 0.0, "n={n}");
                } else {
                    assert!(((g - w) / w).abs() <= 1e-6, "n={n}: {g} vs {w}");
                }
            }
        }
        assert_eq!(set.model(ModelSlot::Basic(5)).n_observations, 4368);
        assert_eq!(
            set.extended.n_observations,
            (1..=5).map(|n| multiset_count(12, n) as usize).sum::<usize>()
        );
    }

    #[test]
    fn degenerate_vectors_name_the_model() {
        let oracle = builtin("ssd1").unwrap().with_noise(0.0);
        let opts = ModelerOptions {
            w_vector: vec![50],
            s_vector: vec![8],
            alpha: 0.05,
        };
        let err = run_modeler_with(&profile("ssd1"), &oracle, &opts).unwrap_err();
        match err {
            Error::ModelFit { slot, .. } => assert_eq!(slot, "1"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn predict_with_two_workload_model() {
        let set = table_model_set([
            (0.0, 0.0, 1.0),
            (-583.36, -4.02, 23.21),
            (0.0, 0.0, 1.0),
            (0.0, 0.0, 1.0),
            (0.0, 0.0, 1.0),
            (0.0, 0.0, 1.0),
        ]);
        let got = predict(&set, &[wl(50, 128), wl(50, 128)]).unwrap();
        assert_abs_diff_eq!(got, 4956.40, epsilon = 1e-9);
    }

    #[test]
    fn zero_model_predicts_zero() {
        let set = table_model_set([(0.0, 0.0, 0.0); 6]);
        assert_eq!(predict(&set, &[wl(95, 256), wl(5, 4)]).unwrap(), 0.0);
    }

    #[test]
    fn routing_above_five() {
        let set = table_model_set([
            (1.0, 0.0, 0.0),
            (2.0, 0.0, 0.0),
            (3.0, 0.0, 0.0),
            (4.0, 0.0, 0.0),
            (5.0, 0.0, 0.0),
            (99.0, 0.0, 0.0),
        ]);
        let seven: Vec<_> = (0..7).map(|_| wl(5, 4)).collect();
        let p = set.predict_detailed(&seven).unwrap();
        assert_eq!(p.slot, ModelSlot::Extended);
        assert_eq!(p.latency, 99.0);
        assert_eq!(set.predict_detailed(&seven[..5]).unwrap().slot, ModelSlot::Basic(5));
        assert!(predict(&set, &[]).is_err());
    }

    #[test]
    fn negative_prediction_clamped() {
        let set = table_model_set([(-583.36, -4.02, 23.21); 6]);
        assert_eq!(predict(&set, &[wl(95, 4)]).unwrap(), 0.0);
    }

    #[test]
    fn file_round_trip() {
        let oracle = builtin("ssd1").unwrap().with_seed(9);
        let set = run_modeler(&profile("ssd1"), &oracle).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model_set(&set, &path).unwrap();
        let back = load_model_set(&path).unwrap();
        assert_eq!(back, set.without_diagnostics());
    }

    const SSD1_FILE: &str = r#"{
  "profile": "ssd1",
  "models": {
    "1": {"intercept": 113.44, "w_coef": 0, "s_coef": 22.135, "adj_r2": 0.994, "n_obs": 12},
    "2": {"intercept": 0, "w_coef": 0, "s_coef": 24.497, "adj_r2": 0.988, "n_obs": 78},
    "3": {"intercept": 0, "w_coef": 0, "s_coef": 24.714, "adj_r2": 0.981, "n_obs": 364},
    "4": {"intercept": 81.969, "w_coef": 0, "s_coef": 23.587, "adj_r2": 0.977, "n_obs": 1365},
    "5": {"intercept": 0, "w_coef": 0.578, "s_coef": 23.919, "adj_r2": 0.98, "n_obs": 4368},
    "5plus": {"intercept": 0, "w_coef": 0.646, "s_coef": 23.913, "adj_r2": 0.981, "n_obs": 6187}
  },
  "provenance": {"w_vector": [25, 50, 75], "s_vector": [4, 8, 32, 128], "oracle_seed": 0}
}"#;

    #[test]
    fn hand_written_file_predicts() {
        let set = ModelSet::from_json(SSD1_FILE).unwrap();
        assert_abs_diff_eq!(
            predict(&set, &[wl(50, 4), wl(50, 4)]).unwrap(),
            195.976,
            epsilon = 1e-9
        );
        let six: Vec<_> = (0..6).map(|_| wl(50, 32)).collect();
        assert_abs_diff_eq!(
            predict(&set, &six).unwrap(),
            0.646 * 300.0 + 23.913 * 192.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn missing_extended_entry() {
        let text = SSD1_FILE.replace(
            r#",
    "5plus": {"intercept": 0, "w_coef": 0.646, "s_coef": 23.913, "adj_r2": 0.981, "n_obs": 6187}"#,
            "",
        );
        assert!(!text.contains("5plus"));
        match ModelSet::from_json(&text) {
            Err(Error::Validation { message, .. }) => assert!(message.contains("5plus")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = SSD1_FILE.replace("\"profile\"", "\"colour\": 1, \"profile\"");
        assert!(matches!(ModelSet::from_json(&text), Err(Error::Parse { .. })));
        let text = SSD1_FILE.replace("\"5plus\"", "\"6\"");
        assert!(ModelSet::from_json(&text).is_err());
        let text = SSD1_FILE.replace("\"n_obs\": 12}", "\"n_obs\": 12, \"beta\": 3}");
        assert!(matches!(ModelSet::from_json(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_file_reports_location() {
        match ModelSet::from_json("{\n  \"profile\": \"x\",\n  \"models\": [,\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_term_usually_eliminated_when_absent() {
        let mut base = builtin("ssd1").unwrap();
        base.per_count_models = ModelSlot::all()
            .into_iter()
            .map(|s| (s, SumForm::new(100.0, 0.0, 23.0)))
            .collect();
        let mut eliminated = 0;
        let runs = 100;
        for seed in 0..runs {
            let cfg = base.clone().with_seed(seed);
            let set = run_modeler(&profile("x"), &cfg).unwrap();
            if set.model(ModelSlot::Basic(2)).w_coef == 0.0 {
                eliminated += 1;
            }
        }
        assert!(eliminated >= 90, "eliminated in {eliminated} of {runs}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn dedup_size_matches_formula_and_brute_force(n in 1usize..=4, g in 1usize..=12) {
                let w: Vec<u8> = (0..g as u8).collect();
                let set = generate_test_set(n, &w, &[4]).unwrap();
                prop_assert_eq!(set.len() as u128, multiset_count(g, n));
                prop_assert_eq!(set.len(), brute_force_multisets(g, n));
            }

            #[test]
            fn predict_ignores_order(pats in prop::collection::vec((0u8..=100, 1u32..=256), 1..9)) {
                let set = table_model_set([
                    (113.44, 0.0, 22.135), (0.0, 0.0, 24.497), (0.0, 0.0, 24.714),
                    (81.969, 0.0, 23.587), (0.0, 0.578, 23.919), (0.0, 0.646, 23.913),
                ]);
                let wls: Vec<_> = pats.iter().map(|&(w, s)| wl(w, s)).collect();
                let mut rev = wls.clone();
                rev.reverse();
                prop_assert_eq!(predict(&set, &wls).unwrap(), predict(&set, &rev).unwrap());
            }
        }
    }
}

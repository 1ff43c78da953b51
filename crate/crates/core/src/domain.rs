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

//! Workload and host types shared by the oracle, the modeler, the balancer
//! and the simulator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Queue depth of the measurement apparatus the latency models describe.
/// Recorded for documentation only; nothing in the models depends on it.
pub const APPARATUS_IODEPTH: u32 = 8;

/// I/O signature of a workload.
///
/// Percentages are whole numbers. Pure sequential access (`randomness == 0`)
/// has a latency profile the consolidation models do not cover and is
/// rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawPattern")]
pub struct AccessPattern {
    write_ratio: u8,
    randomness: u8,
    block_size: u32,
}

impl AccessPattern {
    pub fn new(write_ratio: u8, randomness: u8, block_size: u32) -> Result<Self> {
        if write_ratio > 100 {
            return Err(Error::InvalidValue(format!(
                "write ratio {write_ratio}% is outside [0, 100]"
            )));
        }
        if randomness == 0 || randomness > 100 {
            return Err(Error::InvalidValue(format!(
                "randomness {randomness}% is outside (0, 100]"
            )));
        }
        if block_size == 0 {
            return Err(Error::InvalidValue("block size must be at least 1 KB".into()));
        }
        Ok(AccessPattern {
            write_ratio,
            randomness,
            block_size,
        })
    }

    /// Fully random pattern, the configuration every consolidation test uses.
    pub fn random(write_ratio: u8, block_size: u32) -> Result<Self> {
        Self::new(write_ratio, 100, block_size)
    }

    /// Percentage of write requests.
    pub fn write_ratio(&self) -> u8 {
        self.write_ratio
    }

    /// Percentage of random-access requests.
    pub fn randomness(&self) -> u8 {
        self.randomness
    }

    /// Request size in KB.
    pub fn block_size(&self) -> u32 {
        self.block_size
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPattern {
    write_ratio: u8,
    #[serde(default = "full_randomness")]
    randomness: u8,
    block_size: u32,
}

fn full_randomness() -> u8 {
    100
}

impl TryFrom<RawPattern> for AccessPattern {
    type Error = Error;

    fn try_from(raw: RawPattern) -> Result<Self> {
        AccessPattern::new(raw.write_ratio, raw.randomness, raw.block_size)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    id: String,
    write_ratio: u8,
    #[serde(default = "full_randomness")]
    randomness: u8,
    block_size: u32,
    volume_size: u64,
}

impl TryFrom<RawWorkload> for Workload {
    type Error = Error;

    fn try_from(raw: RawWorkload) -> Result<Self> {
        let pattern = AccessPattern::new(raw.write_ratio, raw.randomness, raw.block_size)?;
        Workload::new(raw.id, pattern, raw.volume_size)
    }
}

/// A block volume with its access pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawWorkload")]
pub struct Workload {
    pub id: String,
    #[serde(flatten)]
    pub pattern: AccessPattern,
    /// Volume size in GB.
    pub volume_size: u64,
}

impl Workload {
    pub fn new(id: impl Into<String>, pattern: AccessPattern, volume_size: u64) -> Result<Self> {
        if volume_size == 0 {
            return Err(Error::InvalidValue("volume size must be positive".into()));
        }
        Ok(Workload {
            id: id.into(),
            pattern,
            volume_size,
        })
    }

    pub fn write_ratio(&self) -> u8 {
        self.pattern.write_ratio
    }

    pub fn block_size(&self) -> u32 {
        self.pattern.block_size
    }
}

/// Static description of a storage host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostProfile {
    /// Host identifier, unique within a cluster.
    pub name: String,
    /// Usable capacity in GB.
    pub total_capacity: u64,
    /// Selects the ground-truth oracle configuration.
    pub ground_truth_key: String,
    /// Selects the fitted model set used for predictions.
    pub model_set_key: String,
}

impl HostProfile {
    pub fn new(
        name: impl Into<String>,
        total_capacity: u64,
        ground_truth_key: impl Into<String>,
        model_set_key: impl Into<String>,
    ) -> Result<Self> {
        if total_capacity == 0 {
            return Err(Error::InvalidValue("host capacity must be positive".into()));
        }
        Ok(HostProfile {
            name: name.into(),
            total_capacity,
            ground_truth_key: ground_truth_key.into(),
            model_set_key: model_set_key.into(),
        })
    }
}

/// A host together with the workloads currently resident on it.
///
/// The resident volumes never exceed the host capacity; [`HostState::place`]
/// is the only way in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostState {
    profile: HostProfile,
    workloads: Vec<Workload>,
    used: u64,
}

impl HostState {
    pub fn new(profile: HostProfile) -> Self {
        HostState {
            profile,
            workloads: Vec::new(),
            used: 0,
        }
    }

    pub fn with_workloads(profile: HostProfile, workloads: Vec<Workload>) -> Result<Self> {
        let mut host = HostState::new(profile);
        for w in workloads {
            host.place(w)?;
        }
        Ok(host)
    }

    pub fn profile(&self) -> &HostProfile {
        &self.profile
    }

    pub fn name(&self) -> &str {
        &self.profile.name
    }

    pub fn workloads(&self) -> &[Workload] {
        &self.workloads
    }

    pub fn used_capacity(&self) -> u64 {
        self.used
    }

    pub fn free_capacity(&self) -> u64 {
        self.profile.total_capacity - self.used
    }

    pub fn fits(&self, workload: &Workload) -> bool {
        workload.volume_size <= self.free_capacity()
    }

    /// Adds a workload, refusing anything that would overcommit the host.
    pub fn place(&mut self, workload: Workload) -> Result<()> {
        if !self.fits(&workload) {
            return Err(Error::Infeasible(format!(
                "workload {} ({} GB) does not fit on host {} ({} GB free)",
                workload.id,
                workload.volume_size,
                self.profile.name,
                self.free_capacity()
            )));
        }
        self.used += workload.volume_size;
        self.workloads.push(workload);
        Ok(())
    }

    /// Removes a resident workload by id.
    pub fn evict(&mut self, id: &str) -> Option<Workload> {
        let idx = self.workloads.iter().position(|w| w.id == id)?;
        let w = self.workloads.remove(idx);
        self.used -= w.volume_size;
        Some(w)
    }
}

/// One latency measurement of a host, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencySample {
    pub average: f64,
    pub p99_read: f64,
    pub p99_write: f64,
}

/// Which of the per-workload-count models applies.
///
/// `Basic(n)` covers exactly `n` concurrent workloads for `n` in 1..=5;
/// `Extended` covers every count above five.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelSlot {
    Basic(u8),
    Extended,
}

impl ModelSlot {
    pub const MAX_BASIC: usize = 5;

    /// The five basic slots followed by the extended one.
    pub fn all() -> [ModelSlot; 6] {
        [
            ModelSlot::Basic(1),
            ModelSlot::Basic(2),
            ModelSlot::Basic(3),
            ModelSlot::Basic(4),
            ModelSlot::Basic(5),
            ModelSlot::Extended,
        ]
    }

    /// Routing rule from a concurrent workload count to a model.
    pub fn for_count(count: usize) -> Result<Self> {
        match count {
            0 => Err(Error::EmptyCollection("model selection")),
            1..=5 => Ok(ModelSlot::Basic(count as u8)),
            _ => Ok(ModelSlot::Extended),
        }
    }
}

impl fmt::Display for ModelSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSlot::Basic(n) => write!(f, "{n}"),
            ModelSlot::Extended => f.write_str("5plus"),
        }
    }
}

impl FromStr for ModelSlot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "2" | "3" | "4" | "5" => Ok(ModelSlot::Basic(s.parse().unwrap())),
            "5plus" | "5+" => Ok(ModelSlot::Extended),
            other => Err(Error::InvalidValue(format!("unknown model slot {other:?}"))),
        }
    }
}

impl Serialize for ModelSlot {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSlot {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Σ W over a workload collection, in percentage points.
pub fn write_ratio_sum(workloads: &[Workload]) -> Result<u32> {
    if workloads.is_empty() {
        return Err(Error::EmptyCollection("write ratio sum"));
    }
    Ok(workloads.iter().map(|w| u32::from(w.write_ratio())).sum())
}

/// Σ S over a workload collection, in KB.
pub fn block_size_sum(workloads: &[Workload]) -> Result<u64> {
    if workloads.is_empty() {
        return Err(Error::EmptyCollection("block size sum"));
    }
    Ok(workloads.iter().map(|w| u64::from(w.block_size())).sum())
}

/// The aggregate a consolidation model consumes: count, Σ W and Σ S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PatternSums {
    pub count: usize,
    pub write_ratio: u64,
    pub block_size: u64,
}

impl PatternSums {
    pub fn of<'a>(patterns: impl IntoIterator<Item = &'a AccessPattern>) -> Self {
        patterns.into_iter().fold(PatternSums::default(), |acc, p| acc.with(p))
    }

    pub fn of_workloads(workloads: &[Workload]) -> Self {
        Self::of(workloads.iter().map(|w| &w.pattern))
    }

    /// The sums after one more workload joins.
    pub fn with(self, p: &AccessPattern) -> Self {
        PatternSums {
            count: self.count + 1,
            write_ratio: self.write_ratio + u64::from(p.write_ratio),
            block_size: self.block_size + u64::from(p.block_size),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wl(id: &str, w: u8, s: u32) -> Workload {
        Workload::new(id, AccessPattern::random(w, s).unwrap(), 30).unwrap()
    }

    #[test]
    fn pattern_bounds() {
        assert!(AccessPattern::new(0, 100, 4).is_ok());
        assert!(AccessPattern::new(100, 1, 1).is_ok());
        assert!(AccessPattern::new(101, 100, 4).is_err());
        assert!(AccessPattern::new(50, 0, 4).is_err());
        assert!(AccessPattern::new(50, 101, 4).is_err());
        assert!(AccessPattern::new(50, 100, 0).is_err());
    }

    #[test]
    fn sequential_pattern_rejected_on_deserialize() {
        let err = serde_json::from_str::<AccessPattern>(
            r#"{"write_ratio": 50, "randomness": 0, "block_size": 4}"#,
        );
        assert!(err.is_err());
        let ok: AccessPattern =
            serde_json::from_str(r#"{"write_ratio": 50, "block_size": 4}"#).unwrap();
        assert_eq!(ok.randomness(), 100);
    }

    #[test]
    fn sums() {
        assert_eq!(write_ratio_sum(&[wl("a", 25, 4)]).unwrap(), 25);
        let three = [wl("a", 25, 8), wl("b", 50, 32), wl("c", 75, 128)];
        assert_eq!(write_ratio_sum(&three).unwrap(), 150);
        assert_eq!(block_size_sum(&three).unwrap(), 168);
        let four: Vec<_> = (0..4).map(|i| wl(&i.to_string(), 50, 4)).collect();
        assert_eq!(write_ratio_sum(&four).unwrap(), 200);
        assert_eq!(block_size_sum(&[wl("a", 0, 4)]).unwrap(), 4);
        assert_eq!(block_size_sum(&[wl("a", 0, 4), wl("b", 0, 128)]).unwrap(), 132);
    }

    #[test]
    fn empty_sums_are_errors() {
        assert!(matches!(write_ratio_sum(&[]), Err(Error::EmptyCollection(_))));
        assert!(matches!(block_size_sum(&[]), Err(Error::EmptyCollection(_))));
    }

    #[test]
    fn host_capacity_is_enforced() {
        let profile = HostProfile::new("h", 100, "ssd1", "ssd1").unwrap();
        let mut host = HostState::new(profile);
        host.place(Workload::new("a", AccessPattern::random(5, 4).unwrap(), 60).unwrap())
            .unwrap();
        assert_eq!(host.free_capacity(), 40);
        let big = Workload::new("b", AccessPattern::random(5, 4).unwrap(), 41).unwrap();
        assert!(matches!(host.place(big), Err(Error::Infeasible(_))));
        assert_eq!(host.free_capacity(), 40);
        assert_eq!(host.evict("a").unwrap().id, "a");
        assert_eq!(host.free_capacity(), 100);
        assert!(host.evict("a").is_none());
    }

    #[test]
    fn slot_routing_and_names() {
        assert_eq!(ModelSlot::for_count(1).unwrap(), ModelSlot::Basic(1));
        assert_eq!(ModelSlot::for_count(5).unwrap(), ModelSlot::Basic(5));
        assert_eq!(ModelSlot::for_count(6).unwrap(), ModelSlot::Extended);
        assert!(ModelSlot::for_count(0).is_err());
        for slot in ModelSlot::all() {
            assert_eq!(slot.to_string().parse::<ModelSlot>().unwrap(), slot);
        }
        assert_eq!("5+".parse::<ModelSlot>().unwrap(), ModelSlot::Extended);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sums_ignore_order(
                pats in prop::collection::vec((0u8..=100, 1u32..=256), 1..12),
                seed in any::<u64>(),
            ) {
                let wls: Vec<_> = pats.iter().enumerate()
                    .map(|(i, &(w, s))| wl(&i.to_string(), w, s)).collect();
                let mut shuffled = wls.clone();
                // deterministic rotation + reversal stands in for a shuffle
                let k = (seed as usize) % shuffled.len();
                shuffled.rotate_left(k);
                if seed & 1 == 1 { shuffled.reverse(); }
                prop_assert_eq!(write_ratio_sum(&wls).unwrap(), write_ratio_sum(&shuffled).unwrap());
                prop_assert_eq!(block_size_sum(&wls).unwrap(), block_size_sum(&shuffled).unwrap());
            }

            #[test]
            fn free_capacity_never_negative(ops in prop::collection::vec((any::<bool>(), 1u64..200), 1..40)) {
                let mut host = HostState::new(HostProfile::new("h", 500, "g", "m").unwrap());
                for (i, (add, size)) in ops.into_iter().enumerate() {
                    if add {
                        let w = Workload::new(format!("w{i}"), AccessPattern::random(5, 4).unwrap(), size).unwrap();
                        let _ = host.place(w);
                    } else if let Some(id) = host.workloads().first().map(|w| w.id.clone()) {
                        host.evict(&id);
                    }
                    let resident: u64 = host.workloads().iter().map(|w| w.volume_size).sum();
                    prop_assert!(resident <= 500);
                    prop_assert_eq!(host.free_capacity(), 500 - resident);
                }
            }
        }
    }
}

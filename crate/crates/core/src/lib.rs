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

//! Latency-model-driven load balancing for SSD block storage clusters.
//!
//! The pieces, bottom up:
//!
//! - [`domain`]: access patterns, workloads, hosts and latency samples.
//! - [`regression`]: least squares with p-values and backward elimination.
//! - [`ground_truth`]: a seeded synthetic latency oracle standing in for a
//!   measured SSD.
//! - [`modeler`]: builds the per-count consolidation models of a host type
//!   and persists them as JSON.
//! - [`balancer`]: the block-size-decreasing, best-predicted-latency
//!   migration planner and the capacity-weighted baseline scheduler.
//! - [`harness`]: the multi-trial cluster experiment and its reports.
//! - [`cli`]: the batch command-line front end.

pub mod balancer;
pub mod cli;
pub mod domain;
pub mod error;
pub mod ground_truth;
pub mod harness;
pub mod modeler;
pub mod regression;

pub use error::{Error, Result};

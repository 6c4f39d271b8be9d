// SPDX-License-Identifier: Apache-2.0

//! Scoring and summary metrics over run outputs.

mod granularity;
mod partition;
mod report;
mod score;

pub use granularity::{spatial_accuracy, AttackVector};
pub use partition::{signature_partition, Channel, SignaturePartition};
pub use report::{band, bit_string, AttackReport, Band};
pub use score::{bit_error_rate, confusion, slowdown, Confusion};

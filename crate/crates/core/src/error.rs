// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::addr::{PhysAddr, VirtPage};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("virtual page {0:#x} is not mapped")]
    UnmappedPage(VirtPage),

    #[error("physical address {0} is outside the modeled DRAM range")]
    AddressOutOfRange(PhysAddr),

    #[error("victim program is empty")]
    EmptyVictim,

    #[error("key must be between 1 and 512 bits, got {0}")]
    BadKeyLength(usize),

    #[error("no address pair found: {0}")]
    NotFound(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("length mismatch: recovered {recovered} vs truth {truth}")]
    LengthMismatch { recovered: usize, truth: usize },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("bad parameter: {0}")]
    BadParam(String),

    #[error("out of physical frames: {0}")]
    OutOfFrames(String),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

// SPDX-License-Identifier: Apache-2.0

//! Discrete-event simulator for page-table, TLB, cache and DRAM side
//! channels against SGX enclaves.

pub mod addr;
pub mod analysis;
pub mod attacks;
pub mod cache;
pub mod config;
pub mod dram;
pub mod engine;
pub mod error;
pub mod rng;
pub mod scenarios;
pub mod tlb;
pub mod translation;
pub mod victims;

pub use error::{Result, SimError};

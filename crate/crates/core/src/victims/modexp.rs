// SPDX-License-Identifier: Apache-2.0

//! Left-to-right square-and-multiply exponentiation.

use crate::addr::VirtAddr;
use crate::error::{Result, SimError};
use crate::victims::{Mark, Secret, Step, Truth, VictimLayout, VictimProgram};

pub const SQUARE: &str = "square";
pub const MULTIPLY: &str = "multiply";
pub const REDUCE: &str = "reduce";

/// Each phase fetches its code line this many times, `PHASE_COST` apart.
const PHASE_FETCHES: usize = 4;
const REDUCE_FETCHES: usize = 3;
const PHASE_COST: u64 = 500;

pub fn default_layout() -> VictimLayout {
    let mut l = VictimLayout::new(0x600, 1);
    l.symbols.insert(SQUARE.into(), VirtAddr(0x600_000));
    l.symbols.insert(MULTIPLY.into(), VirtAddr(0x600_400));
    l.symbols.insert(REDUCE.into(), VirtAddr(0x600_800));
    l
}

pub fn modexp(key_bits: &[bool], layout: &VictimLayout) -> Result<VictimProgram> {
    if key_bits.is_empty() {
        return Err(SimError::BadKeyLength(0));
    }
    let (sq, mul, red) = (layout.symbol(SQUARE)?, layout.symbol(MULTIPLY)?, layout.symbol(REDUCE)?);
    let phase = |steps: &mut Vec<Step>, va, n| {
        for _ in 0..n {
            steps.push(Step::fetch(PHASE_COST, va));
        }
    };
    let mut steps = Vec::new();
    for (j, &bit) in key_bits.iter().enumerate() {
        let first = steps.len();
        phase(&mut steps, sq, PHASE_FETCHES);
        phase(&mut steps, red, REDUCE_FETCHES);
        if bit {
            phase(&mut steps, mul, PHASE_FETCHES);
            phase(&mut steps, red, REDUCE_FETCHES);
        }
        steps[first].mark = Some(Mark::Begin(j as u32));
        steps.last_mut().expect("bit emitted steps").mark = Some(Mark::End(j as u32));
    }
    Ok(VictimProgram {
        name: "modexp".into(),
        layout: layout.clone(),
        steps,
        secret: Secret::new(Truth::Bits(key_bits.to_vec())),
    })
}

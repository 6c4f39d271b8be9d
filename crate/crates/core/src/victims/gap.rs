// SPDX-License-Identifier: Apache-2.0

//! Integer addition that takes a separate code path when both operands
//! are small immediates.

use rand::Rng;

use crate::addr::VirtAddr;
use crate::error::{Result, SimError};
use crate::rng::stream_rng;
use crate::victims::{Mark, Secret, Step, Truth, VictimLayout, VictimProgram};

pub const ENTRY: &str = "sumint";
pub const SMALL_BRANCH: &str = "small_branch";
pub const LARGE_BRANCH: &str = "large_branch";
/// Operands below this bound are stored as immediates.
pub const SMALL_LIMIT: u64 = 1 << 29;
/// Default driver period: 5us at 3.4 cycles/ns.
pub const INVOCATION_PERIOD: u64 = 17_000;

const ENTRY_COST: u64 = 200;
const CHECK_COST: u64 = 60;
const BRANCH_COST: u64 = 40;

pub fn default_layout() -> VictimLayout {
    let mut l = VictimLayout::new(0x500, 3);
    l.symbols.insert(ENTRY.into(), VirtAddr(0x500_000));
    // line 8 of its page
    l.symbols.insert(SMALL_BRANCH.into(), VirtAddr(0x501_200));
    l.symbols.insert(LARGE_BRANCH.into(), VirtAddr(0x502_000));
    l
}

pub fn is_small(x: u64) -> bool {
    x < SMALL_LIMIT
}

/// Steps of one `SumInt(a, b)` call padded to `period` nominal cycles.
pub fn gap_sumint(a: u64, b: u64, layout: &VictimLayout, period: u64) -> Result<Vec<Step>> {
    let entry = layout.symbol(ENTRY)?;
    let branch = if is_small(a) && is_small(b) { layout.symbol(SMALL_BRANCH)? } else { layout.symbol(LARGE_BRANCH)? };
    let busy = ENTRY_COST + CHECK_COST + BRANCH_COST;
    if period < busy {
        return Err(SimError::BadParam(format!("period {period} shorter than one call")));
    }
    Ok(vec![
        Step::fetch(ENTRY_COST, entry),
        Step::fetch(CHECK_COST, VirtAddr(entry.0 + 0x40)),
        Step::fetch(BRANCH_COST, branch),
        Step::compute(period - busy),
    ])
}

/// `invocations` calls with operands small with probability `p_small`
/// each.
pub fn gap_session(
    invocations: usize,
    p_small: f64,
    layout: &VictimLayout,
    period: u64,
    seed: u64,
) -> Result<VictimProgram> {
    if invocations == 0 {
        return Err(SimError::EmptyVictim);
    }
    let mut rng = stream_rng(seed, crate::rng::streams::VICTIM_GEN + 30);
    let operand = |rng: &mut crate::rng::SimRng| {
        if rng.random_bool(p_small) {
            rng.random_range(0..SMALL_LIMIT)
        } else {
            rng.random_range(SMALL_LIMIT..u64::MAX >> 2)
        }
    };
    let mut steps = Vec::with_capacity(invocations * 4);
    let mut taken = Vec::with_capacity(invocations);
    for i in 0..invocations {
        let (a, b) = (operand(&mut rng), operand(&mut rng));
        taken.push(is_small(a) && is_small(b));
        let mut s = gap_sumint(a, b, layout, period)?;
        s[0].mark = Some(Mark::Begin(i as u32));
        s[3].mark = Some(Mark::End(i as u32));
        steps.extend(s);
    }
    Ok(VictimProgram { name: "gap".into(), layout: layout.clone(), steps, secret: Secret::new(Truth::Branches(taken)) })
}

// SPDX-License-Identifier: Apache-2.0

//! Binary search over a sorted table of 16384 integers on 16 pages.

use crate::addr::{VirtAddr, VirtPage};
use crate::error::{Result, SimError};
use crate::victims::{Mark, Secret, Step, Truth, VictimLayout, VictimProgram};

pub const ENTRIES: u32 = 16384;
pub const PER_PAGE: u32 = 1024;
pub const PAGES: u64 = (ENTRIES / PER_PAGE) as u64;
pub const TABLE: &str = "table";
const PROBE_COST: u64 = 150;

/// Table pages start at a multiple of 16 so page i falls in dTLB set i.
pub fn default_layout() -> VictimLayout {
    let base = 0x400;
    let mut l = VictimLayout::new(base, PAGES);
    l.symbols.insert(TABLE.into(), VirtAddr::from_page(base, 0));
    l.groups.insert(TABLE.into(), (base..base + PAGES).collect());
    l
}

/// Indices probed while searching `key` in `table[i] = i`.
pub fn probe_indices(key: u32) -> Vec<u32> {
    let (mut lo, mut hi) = (0i64, ENTRIES as i64 - 1);
    let mut out = Vec::new();
    while lo <= hi {
        let mid = (lo + hi) / 2;
        out.push(mid as u32);
        match (mid as u32).cmp(&key) {
            std::cmp::Ordering::Equal => break,
            std::cmp::Ordering::Less => lo = mid + 1,
            std::cmp::Ordering::Greater => hi = mid - 1,
        }
    }
    out
}

/// Table page (0..16) of each probe.
pub fn page_sequence(key: u32) -> Vec<u32> {
    probe_indices(key).into_iter().map(|i| i / PER_PAGE).collect()
}

pub fn binary_search(key: u32, layout: &VictimLayout) -> Result<Vec<Step>> {
    if key >= ENTRIES {
        return Err(SimError::BadParam(format!("key {key} outside table")));
    }
    let base = layout.symbol(TABLE)?;
    Ok(probe_indices(key).into_iter().map(|i| Step::read(PROBE_COST, VirtAddr(base.0 + 4 * i as u64))).collect())
}

/// Searches for each key in turn, each followed by `gap` idle cycles.
pub fn binsearch_session(keys: &[u32], layout: &VictimLayout, gap: u64) -> Result<VictimProgram> {
    if keys.is_empty() {
        return Err(SimError::EmptyVictim);
    }
    let mut steps = Vec::new();
    for (i, &k) in keys.iter().enumerate() {
        let mut s = binary_search(k, layout)?;
        s[0].mark = Some(Mark::Begin(i as u32));
        s.last_mut().expect("search probes at least once").mark = Some(Mark::End(i as u32));
        steps.extend(s);
        steps.push(Step::compute(gap));
    }
    Ok(VictimProgram {
        name: "binsearch".into(),
        layout: layout.clone(),
        steps,
        secret: Secret::new(Truth::Keys(keys.to_vec())),
    })
}

pub fn table_pages(layout: &VictimLayout) -> Result<Vec<VirtPage>> {
    layout.group(TABLE).map(<[_]>::to_vec)
}

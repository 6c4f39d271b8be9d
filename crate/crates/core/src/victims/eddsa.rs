// SPDX-License-Identifier: Apache-2.0

//! Double-and-add scalar multiplication over four monitored code pages.
//!
//! Per key bit the monitored-page visits are
//!
//! | bit | pattern                                        | visits |
//! |-----|------------------------------------------------|--------|
//! | 0   | MUL, (DUP, HLP) x 23, TB                       | 48     |
//! | 1   | MUL, (DUP, HLP) x 23, TB, (ADD, HLP) x 20, ADD | 89     |
//!
//! DUP and ADD share one page. An unmonitored trigger page is fetched
//! between DUP/ADD and HLP, 22 times in the doubling and 20 times in the
//! addition.

use rand::Rng;

use crate::addr::{VirtAddr, VirtPage};
use crate::error::{Result, SimError};
use crate::rng::SimRng;
use crate::victims::{Mark, Secret, Step, Truth, VictimLayout, VictimProgram};

pub const VISITS_ZERO: usize = 48;
pub const VISITS_ONE: usize = 89;
pub const MAX_BITS: usize = 512;
/// Trigger-page fetches per 0 bit and per 1 bit.
pub const TRIGGERS_ZERO: usize = 22;
pub const TRIGGERS_ONE: usize = 42;

pub const TRIGGER: &str = "trigger";
pub const MUL_POINT: &str = "mul_point";
pub const DUP_POINT: &str = "dup_point";
pub const ADD_POINTS: &str = "add_points";
pub const HELPERS: &str = "helpers";
pub const TEST_BIT: &str = "test_bit";
pub const MONITORED: &str = "monitored";

const DUP_PAIRS: usize = 23;
const DUP_TRIGGERS: usize = 22;
const ADD_PAIRS: usize = 20;

/// Compute cycles charged before each visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EddsaCosts {
    pub mul: u64,
    pub dup: u64,
    pub dup_helper: u64,
    pub trigger: u64,
    pub test_bit: u64,
    pub add: u64,
    pub add_helper: u64,
    pub add_tail: u64,
}

impl Default for EddsaCosts {
    fn default() -> Self {
        EddsaCosts {
            mul: 300,
            dup: 400,
            dup_helper: 380,
            trigger: 40,
            test_bit: 120,
            add: 180,
            add_helper: 170,
            add_tail: 150,
        }
    }
}

/// Trigger page at 0xF0000, then MUL, DUP/ADD, HLP and TB pages.
pub fn default_layout() -> VictimLayout {
    let mut l = VictimLayout::new(0xF0, 5);
    for (name, va) in [
        (TRIGGER, 0xF0300),
        (MUL_POINT, 0xF1040),
        (DUP_POINT, 0xF2080),
        (ADD_POINTS, 0xF2900),
        (HELPERS, 0xF3100),
        (TEST_BIT, 0xF4200),
    ] {
        l.symbols.insert(name.into(), VirtAddr(va));
    }
    l.groups.insert(MONITORED.into(), vec![0xF1, 0xF2, 0xF3, 0xF4]);
    l
}

pub fn random_key(rng: &mut SimRng, bits: usize) -> Vec<bool> {
    (0..bits).map(|_| rng.random()).collect()
}

pub fn eddsa_scalar_mul(key_bits: &[bool], layout: &VictimLayout) -> Result<VictimProgram> {
    eddsa_with_costs(key_bits, layout, EddsaCosts::default())
}

pub fn eddsa_with_costs(key_bits: &[bool], layout: &VictimLayout, c: EddsaCosts) -> Result<VictimProgram> {
    if key_bits.is_empty() || key_bits.len() > MAX_BITS {
        return Err(SimError::BadKeyLength(key_bits.len()));
    }
    let sym = |n| layout.symbol(n);
    let (trig, mul, dup, add, hlp, tb) =
        (sym(TRIGGER)?, sym(MUL_POINT)?, sym(DUP_POINT)?, sym(ADD_POINTS)?, sym(HELPERS)?, sym(TEST_BIT)?);
    let mut steps = Vec::with_capacity(key_bits.len() * 140);
    for (j, &bit) in key_bits.iter().enumerate() {
        let j = j as u32;
        steps.push(Step::fetch(c.mul, mul).marked(Mark::Begin(j)));
        for i in 0..DUP_PAIRS {
            steps.push(Step::fetch(c.dup, dup));
            if i < DUP_TRIGGERS {
                steps.push(Step::fetch(c.trigger, trig));
            }
            steps.push(Step::fetch(c.dup_helper, hlp));
        }
        steps.push(Step::fetch(c.test_bit, tb));
        if bit {
            for _ in 0..ADD_PAIRS {
                steps.push(Step::fetch(c.add, add));
                steps.push(Step::fetch(c.trigger, trig));
                steps.push(Step::fetch(c.add_helper, hlp));
            }
            steps.push(Step::fetch(c.add_tail, add));
        }
        steps.last_mut().expect("bit emitted steps").mark = Some(Mark::End(j));
    }
    Ok(VictimProgram {
        name: "eddsa".into(),
        layout: layout.clone(),
        steps,
        secret: Secret::new(Truth::Bits(key_bits.to_vec())),
    })
}

/// Monitored-page visits per bit: consecutive accesses to the same
/// monitored page count once, unmonitored pages are transparent.
pub fn visits_per_bit(p: &VictimProgram, monitored: &[VirtPage]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = None;
    for s in &p.steps {
        if let Some(Mark::Begin(_)) = s.mark {
            out.push(0);
        }
        if let crate::victims::Op::Access { va, .. } = s.op {
            let pg = va.page();
            if monitored.contains(&pg) && last != Some(pg) {
                *out.last_mut().expect("begin mark precedes accesses") += 1;
                last = Some(pg);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn visits(bits: &[bool]) -> Vec<usize> {
        let l = default_layout();
        let p = eddsa_scalar_mul(bits, &l).unwrap();
        visits_per_bit(&p, l.group(MONITORED).unwrap())
    }

    #[test]
    fn visit_counts() {
        assert_eq!(visits(&[false]), [VISITS_ZERO]);
        assert_eq!(visits(&[true]), [VISITS_ONE]);
        assert_eq!(visits(&[true, false, true]), [89, 48, 89]);
    }

    #[test]
    fn nominal_compute_near_anchors() {
        let l = default_layout();
        let z = eddsa_scalar_mul(&[false], &l).unwrap().nominal_compute();
        let o = eddsa_scalar_mul(&[true], &l).unwrap().nominal_compute();
        // access latencies add a few hundred cycles on top
        assert!((19_000..19_700).contains(&z), "{z}");
        assert!((27_000..27_900).contains(&o), "{o}");
    }

    #[test]
    fn key_length_checked() {
        let l = default_layout();
        assert_eq!(eddsa_scalar_mul(&[], &l).unwrap_err(), SimError::BadKeyLength(0));
        assert!(eddsa_scalar_mul(&[true; 513], &l).is_err());
        assert!(eddsa_scalar_mul(&[true; 512], &l).is_ok());
    }

    #[test]
    fn trigger_counts() {
        let l = default_layout();
        let trig = l.page(TRIGGER).unwrap();
        let count = |b| eddsa_scalar_mul(&[b], &l).unwrap().page_trace().iter().filter(|&&p| p == trig).count();
        assert_eq!(count(false), 22);
        assert_eq!(count(true), 42);
    }
}

// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;

use sgxsim_core::addr::{VirtAddr, VirtPage};
use sgxsim_core::attacks::page_fault::PageFaultAttack;
use sgxsim_core::attacks::{AttackStrategy, Observation};
use sgxsim_core::config::SimConfig;
use sgxsim_core::engine::{run_once, run_scenario};
use sgxsim_core::translation::Trap;
use sgxsim_core::victims::{trace_victim, Step, VictimLayout, VictimProgram};

const BASE: VirtPage = 0x400;
const PAGES: u64 = 8;

fn victim(ops: &[(u8, u8, u16)]) -> VictimProgram {
    let steps = ops
        .iter()
        .map(|&(op, page, off)| {
            let va = VirtAddr::from_page(BASE + (page as u64 % PAGES), off as u64 & 0xfc0);
            match op % 4 {
                0 => Step::fetch(20, va),
                1 => Step::read(30, va),
                2 => Step::write(40, va),
                _ => Step::compute(100),
            }
        })
        .collect();
    trace_victim("trace", VictimLayout::new(BASE, PAGES), steps)
}

fn ops() -> impl Strategy<Value = Vec<(u8, u8, u16)>> {
    prop::collection::vec((any::<u8>(), any::<u8>(), any::<u16>()), 1..60)
}

fn folded(trace: &[VirtPage]) -> Vec<VirtPage> {
    let mut out: Vec<VirtPage> = Vec::new();
    for &p in trace {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cycles_split_into_compute_latency_and_aex(ops in ops(), seed in 0u64..1000) {
        let v = victim(&ops);
        let pf: Vec<Box<dyn AttackStrategy>> = vec![Box::new(PageFaultAttack::new(BASE..BASE + PAGES, Trap::ClearPresent))];
        let r = run_scenario(&SimConfig::default(), &v, pf, seed).unwrap();
        prop_assert_eq!(r.attacked_cycles, r.accounting.total());
        prop_assert_eq!(r.baseline_cycles, r.baseline_accounting.total());
        prop_assert!(r.attacked_cycles >= r.baseline_cycles || r.aex_count == 0);
    }

    #[test]
    fn same_seed_same_run(ops in ops(), seed in 0u64..1000) {
        let v = victim(&ops);
        let a = run_once(&SimConfig::default(), &v, Vec::new(), seed).unwrap();
        let b = run_once(&SimConfig::default(), &v, Vec::new(), seed).unwrap();
        prop_assert_eq!(a.cycles, b.cycles);
        prop_assert_eq!(serde_json::to_string(&a.log).unwrap(), serde_json::to_string(&b.log).unwrap());
    }

    /// With every page trapped and one page re-armed per fault, each change
    /// of page in the trace faults exactly once.
    #[test]
    fn page_faults_follow_folded_trace(ops in ops(), trap in prop::sample::select(vec![Trap::ClearPresent, Trap::SetReserved])) {
        let v = victim(&ops);
        let pf: Vec<Box<dyn AttackStrategy>> = vec![Box::new(PageFaultAttack::new(BASE..BASE + PAGES, trap))];
        let out = run_once(&SimConfig::noiseless(), &v, pf, 1).unwrap();
        let Observation::Faults(f) = &out.observations[0].1 else { panic!("no faults") };
        let seen: Vec<VirtPage> = f.iter().map(|x| x.1).collect();
        prop_assert_eq!(seen, folded(&v.page_trace()));
        prop_assert_eq!(out.aex.page_fault, f.len() as u64);
    }
}

#[test]
fn nx_trap_faults_only_on_fetch_pages() {
    let v = victim(&[(1, 0, 0), (2, 1, 0), (0, 2, 0), (1, 2, 64), (0, 3, 0)]);
    let pf: Vec<Box<dyn AttackStrategy>> = vec![Box::new(PageFaultAttack::new(BASE..BASE + PAGES, Trap::SetNx))];
    let out = run_once(&SimConfig::noiseless(), &v, pf, 1).unwrap();
    let Observation::Faults(f) = &out.observations[0].1 else { panic!("no faults") };
    let seen: Vec<VirtPage> = f.iter().map(|x| x.1).collect();
    assert_eq!(seen, vec![BASE + 2, BASE + 3]);
}

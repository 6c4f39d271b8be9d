// SPDX-License-Identifier: Apache-2.0

//! The twelve acceptance criteria, each under its runtime budget. One
//! PASS/FAIL line per criterion goes straight to stderr so it shows even
//! when the harness captures output.

use std::collections::HashMap;
use std::io::Write;
use std::time::{Duration, Instant};

use sgxsim_core::addr::{AccessKind, PhysAddr, VirtAddr, VirtPage, LINE_SIZE, PAGE_SHIFT};
use sgxsim_core::analysis::{signature_partition, spatial_accuracy, AttackVector, Channel};
use sgxsim_core::cache::llc_set_of;
use sgxsim_core::config::SimConfig;
use sgxsim_core::dram::{dram_map, prm_row_range};
use sgxsim_core::rng::stream_rng;
use sgxsim_core::scenarios::{ScenarioInput, ScenarioRegistry, ScenarioReport};
use sgxsim_core::tlb::{FlushScope, TlbState};
use sgxsim_core::translation::{translate, AddressSpace, FaultKind, FlagSel, Trap};
use sgxsim_core::victims::hunspell::DictionaryLayout;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run(name: &str, cfg: SimConfig, seed: u64) -> Result<ScenarioReport, String> {
    ScenarioRegistry::default().run(name, &ScenarioInput::new(cfg, seed)).map_err(|e| format!("{name}: {e}"))
}

fn detail(r: &ScenarioReport, key: &str) -> f64 {
    r.detail_f64(key).unwrap_or(f64::NAN)
}

fn row_ranges() -> Outcome {
    let want = [(0x1100, 0x113F), (0x1100, 0x117F), (0x1000, 0x10FF)];
    let cases = [(0x8800_0000u64, 32u64 << 20), (0x8800_0000, 64 << 20), (0x8000_0000, 128 << 20)];
    for ((base, size), w) in cases.into_iter().zip(want) {
        let got = prm_row_range(base, size, 19);
        ensure(got == w, format!("{size:#x}@{base:#x}: {got:x?} != {w:x?}"))?;
    }
    Ok("3/3 rows exact".into())
}

fn granularity() -> Outcome {
    let c = SimConfig::testbed();
    let got: Vec<u64> = AttackVector::ALL.iter().map(|&v| spatial_accuracy(v, &c)).collect();
    let want = [2 << 20, 128 << 10, 16 << 10, 4096, 4096, 4096, 1024, 64];
    ensure(got == want, format!("{got:?}"))?;
    Ok("2MB 128KB 16KB 4KB 4KB 4KB 1KB 64B".into())
}

fn eddsa_triple() -> Outcome {
    let mut aex = Vec::new();
    for name in ["eddsa-pf", "eddsa-bspm", "eddsa-tspm"] {
        let r = run(name, SimConfig::noiseless(), 2024)?;
        ensure(r.report.bit_error_rate == Some(0.0), format!("{name} ber {:?}", r.report.bit_error_rate))?;
        ensure(
            detail(&r, "recovered_bits") == 512.0,
            format!("{name} recovered {} bits", detail(&r, "recovered_bits")),
        )?;
        aex.push(r.report.aex_count);
    }
    let (pf, bs, ts) = (aex[0], aex[1], aex[2]);
    ensure(pf > bs && bs > ts, format!("order {pf} > {bs} > {ts} violated"))?;
    ensure(pf as f64 / ts as f64 >= 20.0, format!("PF/T-SPM = {:.1}", pf as f64 / ts as f64))?;
    ensure(ts <= 3 * 512, format!("T-SPM {ts} AEX > 3 per bit"))?;
    Ok(format!("0 bit errors x3; AEX {pf} > {bs} > {ts}; ratio {:.1}", pf as f64 / ts as f64))
}

/// Every line of the bank holding the PRM base maps to a distinct
/// (slice, set, row) key; offsets inside a line never change it.
fn colocation_64b() -> Outcome {
    let cfg = SimConfig::default();
    let target = dram_map(PhysAddr(cfg.prm.base), &cfg.dram).map_err(|e| e.to_string())?;
    let total = cfg.dram.geometry.total_bytes();
    let mut keys: Vec<u64> = Vec::new();
    let mut line = 0u64;
    while line < total {
        let c = dram_map(PhysAddr(line), &cfg.dram).map_err(|e| e.to_string())?;
        if c.same_bank(&target) {
            let (slice, set) = llc_set_of(PhysAddr(line), &cfg.cache);
            let inner = PhysAddr(line + (line >> 6) % LINE_SIZE);
            let ci = dram_map(inner, &cfg.dram).map_err(|e| e.to_string())?;
            ensure(
                ci == c && llc_set_of(inner, &cfg.cache) == (slice, set),
                format!("offset changes key at {line:#x}"),
            )?;
            keys.push(((c.row as u64) << 24) | ((slice as u64) << 16) | set as u64);
        }
        line += LINE_SIZE;
    }
    let n = keys.len();
    keys.sort_unstable();
    keys.dedup();
    ensure(keys.len() == n, format!("{} colliding lines", n - keys.len()))?;
    Ok(format!("{n} lines in bank, all keys distinct"))
}

fn gap_cache_dram() -> Outcome {
    let r = run("gap-cachedram", SimConfig::default(), 4806)?;
    let (det, fpr, inv) = (detail(&r, "detection_rate"), detail(&r, "false_positive_rate"), detail(&r, "invocations"));
    ensure(inv >= 1e4, format!("{inv} invocations"))?;
    ensure(det >= 0.10, format!("detection {det:.3}"))?;
    ensure(fpr < 0.01, format!("false positives {fpr:.4}"))?;
    ensure(r.report.slowdown <= 1.05, format!("slowdown {:.4}", r.report.slowdown))?;
    Ok(format!(
        "detection {:.1}%, FP {:.2}%, slowdown {:.2}%",
        det * 100.0,
        fpr * 100.0,
        (r.report.slowdown - 1.0) * 100.0
    ))
}

fn drama_bimodal() -> Outcome {
    let r = run("drama-hist", SimConfig::default(), 52)?;
    let (n, acc) = (detail(&r, "probes"), detail(&r, "accuracy"));
    ensure(n >= 1e5, format!("{n} probes"))?;
    ensure(acc >= 0.99, format!("accuracy {acc:.4}"))?;
    Ok(format!(
        "modes {} / {}, threshold {}, accuracy {:.2}%",
        detail(&r, "hit_mode"),
        detail(&r, "conflict_mode"),
        detail(&r, "threshold"),
        acc * 100.0
    ))
}

fn prime_probe() -> Outcome {
    let noisy = run("elgamal-pp", SimConfig::default(), 403)?;
    let clean = run("elgamal-pp", SimConfig::noiseless(), 403)?;
    let (b1, b0) = (noisy.report.bit_error_rate.unwrap_or(1.0), clean.report.bit_error_rate.unwrap_or(1.0));
    ensure(detail(&noisy, "key_bits") == 403.0, "key is not 403 bits")?;
    ensure(b1 <= 0.05, format!("noisy BER {b1:.4}"))?;
    ensure(b0 == 0.0, format!("noiseless BER {b0:.4}"))?;
    Ok(format!("BER {:.2}% default, {:.2}% noiseless", b1 * 100.0, b0 * 100.0))
}

fn ht_spm() -> Outcome {
    let r = run("hunspell-htspm", SimConfig::default(), 88)?;
    let exact = detail(&r, "exact_page_sets");
    ensure(detail(&r, "queries") == 100.0, "not 100 words")?;
    ensure(exact >= 80.0, format!("{exact} exact page sets"))?;
    ensure(r.report.aex_count == 0, format!("{} attack AEX", r.report.aex_count))?;
    Ok(format!("{exact}/100 exact page sets, 0 attack AEX"))
}

/// Partition counts from raw lookup addresses, independent of the
/// library's signature code.
fn oracle(d: &DictionaryLayout) -> (usize, usize, bool) {
    let pf_sig = |w: usize| {
        let mut v: Vec<VirtPage> = Vec::new();
        for a in d.lookup_addrs(w) {
            if v.last() != Some(&(a.0 >> PAGE_SHIFT)) {
                v.push(a.0 >> PAGE_SHIFT);
            }
        }
        v
    };
    let bs_sig = |w: usize| {
        let mut v: Vec<VirtPage> = d.lookup_addrs(w).iter().map(|a| a.0 >> PAGE_SHIFT).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut pf: HashMap<Vec<VirtPage>, (usize, Vec<VirtPage>)> = HashMap::new();
    let mut bs: HashMap<Vec<VirtPage>, usize> = HashMap::new();
    let mut refines = true;
    for w in 0..d.words.len() {
        let b = bs_sig(w);
        *bs.entry(b.clone()).or_default() += 1;
        let e = pf.entry(pf_sig(w)).or_insert((0, b.clone()));
        e.0 += 1;
        refines &= e.1 == b;
    }
    let uniq_pf = pf.values().filter(|e| e.0 == 1).count();
    let uniq_bs = bs.values().filter(|&&n| n == 1).count();
    (uniq_pf, uniq_bs, refines)
}

fn partitions() -> Outcome {
    let mut strictly = 0;
    for seed in 0..100u64 {
        let words = 200 + (seed as usize * 37) % 400;
        let pages = 6 + seed % 10;
        let buckets = 8 << (seed % 4);
        let d = DictionaryLayout::generate(words, pages, buckets as u32, 0x900, seed).map_err(|e| e.to_string())?;
        let pf = signature_partition(&d, Channel::PageFaultSequence);
        let bs = signature_partition(&d, Channel::BspmPageSets);
        let (opf, obs, orefines) = oracle(&d);
        ensure(
            pf.unique_count() == opf && bs.unique_count() == obs,
            format!("seed {seed}: counts disagree with oracle"),
        )?;
        ensure(orefines && pf.refines(&bs), format!("seed {seed}: page-fault partition does not refine B-SPM"))?;
        ensure(pf.unique_count() >= bs.unique_count(), format!("seed {seed}: fewer unique page-fault groups"))?;
        strictly += (pf.unique_count() > bs.unique_count()) as u32;
    }
    Ok(format!("100 layouts refine; page faults strictly finer in {strictly}"))
}

fn bloom() -> Outcome {
    let r = run("bloom-tspm", SimConfig::default(), 8864)?;
    let keys = ["member_coverage", "member_precision", "nonmember_coverage", "nonmember_precision"];
    let v: Vec<f64> = keys.iter().map(|k| detail(&r, k)).collect();
    for (k, x) in keys.iter().zip(&v) {
        ensure(*x >= 0.85, format!("{k} {x:.4}"))?;
    }
    Ok(format!(
        "members {:.1}%/{:.1}%, non-members {:.1}%/{:.1}%",
        v[0] * 100.0,
        v[1] * 100.0,
        v[2] * 100.0,
        v[3] * 100.0
    ))
}

fn flag_semantics() -> Outcome {
    let cfg = SimConfig::default();
    let base: VirtPage = 0x100;
    let mut space = AddressSpace::new(1, Some((base, 64)), cfg.prm);
    for i in 0..64 {
        space.map(base + i, (cfg.prm.base >> PAGE_SHIFT) + i).map_err(|e| e.to_string())?;
    }
    let mut tlb = TlbState::new(&cfg.tlb, stream_rng(0, 0));
    let kinds = [AccessKind::CodeFetch, AccessKind::DataRead, AccessKind::DataWrite];
    let mut checks = 0;
    for p in base..base + 64 {
        let va = VirtAddr(p << PAGE_SHIFT | 0x80);
        for k in kinds {
            for k2 in kinds {
                tlb.flush(FlushScope::All);
                space.read_and_reset_flags(&[p], FlagSel::Both).map_err(|e| e.to_string())?;
                let t = translate(&mut space, va, k, &mut tlb, &cfg.tlb).map_err(|e| e.to_string())?;
                let pte = *space.pte(p).map_err(|e| e.to_string())?;
                ensure(t.walked && pte.accessed, format!("page {p:#x} {k:?}: first access after flush left A clear"))?;
                ensure(pte.dirty == k.is_write(), format!("page {p:#x} {k:?}: dirty {}", pte.dirty))?;
                space.read_and_reset_flags(&[p], FlagSel::Both).map_err(|e| e.to_string())?;
                let t2 = translate(&mut space, va, k2, &mut tlb, &cfg.tlb).map_err(|e| e.to_string())?;
                let pte = *space.pte(p).map_err(|e| e.to_string())?;
                ensure(!t2.walked && !pte.accessed && !pte.dirty, format!("page {p:#x} {k2:?}: TLB hit set a flag"))?;
                checks += 3;
            }
            space.set_pte_trap(p, Trap::SetNx).map_err(|e| e.to_string())?;
            tlb.flush(FlushScope::All);
            let t = translate(&mut space, va, k, &mut tlb, &cfg.tlb).map_err(|e| e.to_string())?;
            let want = if k.is_code() { Some(FaultKind::NoExecute) } else { None };
            ensure(t.fault == want, format!("page {p:#x} {k:?} under NX: {:?}", t.fault))?;
            space.clear_pte_trap(p, Trap::SetNx).map_err(|e| e.to_string())?;
            checks += 1;
        }
    }
    Ok(format!("{checks} checks over 64 pages"))
}

fn determinism() -> Outcome {
    let reg = ScenarioRegistry::default();
    let names: Vec<&str> = reg.names().collect();
    for name in &names {
        let a = run(name, SimConfig::default(), 7)?;
        let b = run(name, SimConfig::default(), 7)?;
        ensure(a.to_json() == b.to_json(), format!("{name} JSON differs"))?;
        ensure(a.to_csv().ok() == b.to_csv().ok(), format!("{name} CSV differs"))?;
    }
    Ok(format!("{} scenarios byte-identical", names.len()))
}

#[test]
fn acceptance_criteria() {
    let ms = Duration::from_millis;
    let criteria: [Criterion; 12] = [
        (1, "row-range table", ms(1), row_ranges),
        (2, "granularity table", ms(1), granularity),
        (3, "EdDSA triple attack", ms(10_000), eddsa_triple),
        (4, "64B co-location", ms(30_000), colocation_64b),
        (5, "cache-DRAM Gap", ms(60_000), gap_cache_dram),
        (6, "DRAMA bimodality", ms(10_000), drama_bimodal),
        (7, "Prime+Probe key recovery", ms(10_000), prime_probe),
        (8, "HT-SPM Hunspell", ms(30_000), ht_spm),
        (9, "partition refinement", ms(60_000), partitions),
        (10, "Bloom T-SPM", ms(30_000), bloom),
        (11, "flag semantics", ms(1_000), flag_semantics),
        (12, "determinism", Duration::MAX, determinism),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (id, name, budget, check) in criteria {
        let t = Instant::now();
        let outcome = check();
        let took = t.elapsed();
        let (ok, msg) = match outcome {
            Ok(m) if took <= budget => (true, m),
            Ok(m) => (false, format!("{m}; over budget {budget:?}")),
            Err(m) => (false, m),
        };
        let _ = writeln!(err, "[{}] {id:>2} {name}: {msg} ({took:.2?})", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

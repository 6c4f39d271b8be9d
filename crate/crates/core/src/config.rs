// SPDX-License-Identifier: Apache-2.0

//! Machine model configuration.
//!
//! Defaults reproduce the Skylake i7-6700 testbed (4 cores, 8MB LLC, two
//! channels of DDR4). Every latency is a free parameter; the attacks and the
//! acceptance checks only rely on orderings between them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SimError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub sets: u32,
    pub ways: u32,
}

impl Geometry {
    pub const fn new(sets: u32, ways: u32) -> Self {
        Geometry { sets, ways }
    }

    pub fn entries(&self) -> u64 {
        self.sets as u64 * self.ways as u64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Replacement {
    #[default]
    Lru,
    Random,
}

/// How the TLBs of one physical core are shared between its two
/// hyperthreads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TlbSharing {
    /// Both logical cores compete for the same entries.
    #[default]
    Shared,
    /// Each logical core owns a private copy of every level.
    PerLogicalCore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TlbConfig {
    pub itlb: Geometry,
    pub dtlb: Geometry,
    pub stlb: Geometry,
    pub sharing: TlbSharing,
    pub replacement: Replacement,
    /// Extra cycles for an L1 TLB miss that hits the second-level TLB.
    pub stlb_hit_latency: u64,
    /// Cycles for a full page-table walk.
    pub walk_latency: u64,
}

impl Default for TlbConfig {
    fn default() -> Self {
        TlbConfig {
            itlb: Geometry::new(8, 8),
            dtlb: Geometry::new(16, 4),
            stlb: Geometry::new(128, 12),
            sharing: TlbSharing::Shared,
            replacement: Replacement::Lru,
            stlb_hit_latency: 7,
            walk_latency: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheLevelConfig {
    pub sets: u32,
    pub ways: u32,
    pub latency: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceHash {
    /// One LLC slice; slice id is always 0.
    #[default]
    Single,
    /// Slice id is the parity of address bits under two fixed masks
    /// (four slices). Only the slice changes; set bits are untouched.
    Xor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub l1i: CacheLevelConfig,
    pub l1d: CacheLevelConfig,
    pub l2: CacheLevelConfig,
    pub l3: CacheLevelConfig,
    pub llc_slices: u32,
    pub slice_hash: SliceHash,
    pub inclusive: bool,
    pub prefetch_next_line: bool,
    pub replacement: Replacement,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            l1i: CacheLevelConfig { sets: 64, ways: 8, latency: 4 },
            l1d: CacheLevelConfig { sets: 64, ways: 8, latency: 4 },
            l2: CacheLevelConfig { sets: 1024, ways: 4, latency: 12 },
            l3: CacheLevelConfig { sets: 8192, ways: 16, latency: 40 },
            llc_slices: 1,
            slice_hash: SliceHash::Single,
            inclusive: true,
            prefetch_next_line: false,
            replacement: Replacement::Lru,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DramGeometry {
    pub channels: u32,
    pub dimms: u32,
    pub ranks: u32,
    pub banks: u32,
    pub rows: u32,
    pub row_size: u64,
}

impl Default for DramGeometry {
    fn default() -> Self {
        DramGeometry { channels: 2, dimms: 1, ranks: 2, banks: 16, rows: 1 << 15, row_size: 8192 }
    }
}

impl DramGeometry {
    pub fn total_banks(&self) -> u64 {
        self.channels as u64 * self.dimms as u64 * self.ranks as u64 * self.banks as u64
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_banks() * self.rows as u64 * self.row_size
    }
}

/// Physical address to DRAM coordinate functions. Each coordinate bit is
/// the parity of `pa & mask` for one mask in the corresponding list, least
/// significant bit first; the row is `pa >> row_shift`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DramMapping {
    pub channel: Vec<u64>,
    pub dimm: Vec<u64>,
    pub rank: Vec<u64>,
    pub bank: Vec<u64>,
    pub row_shift: u32,
}

impl Default for DramMapping {
    /// Channel on bit 6, rank on bit 18, bank on bits 14..=17 with bank bit
    /// 0 folded with address bit 7. The fold puts every 4KB page on four
    /// distinct (bank, row) cells, 1KB each.
    fn default() -> Self {
        DramMapping {
            channel: vec![1 << 6],
            dimm: vec![],
            rank: vec![1 << 18],
            bank: vec![(1 << 14) | (1 << 7), 1 << 15, 1 << 16, 1 << 17],
            row_shift: 19,
        }
    }
}

impl DramMapping {
    /// The plain bit-slice variant without the bit-7 fold (two cells per page).
    pub fn linear() -> Self {
        DramMapping { bank: vec![1 << 14, 1 << 15, 1 << 16, 1 << 17], ..DramMapping::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DramConfig {
    pub geometry: DramGeometry,
    pub mapping: DramMapping,
    pub latency_hit: u64,
    pub latency_conflict: u64,
}

impl Default for DramConfig {
    fn default() -> Self {
        DramConfig {
            geometry: DramGeometry::default(),
            mapping: DramMapping::default(),
            latency_hit: 160,
            latency_conflict: 300,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrmConfig {
    pub base: u64,
    pub size: u64,
}

impl Default for PrmConfig {
    fn default() -> Self {
        PrmConfig { base: 0x8000_0000, size: 128 << 20 }
    }
}

impl PrmConfig {
    pub fn contains(&self, pa: u64) -> bool {
        pa >= self.base && pa < self.base + self.size
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub page_fault_aex: u64,
    pub shootdown_aex: u64,
    pub other_aex: u64,
    pub cycles_per_ns: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig { page_fault_aex: 15_000, shootdown_aex: 8_000, other_aex: 8_000, cycles_per_ns: 3.4 }
    }
}

impl CostConfig {
    pub fn ns_to_cycles(&self, ns: f64) -> u64 {
        (ns * self.cycles_per_ns).round() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation of DRAM access latency, cycles.
    pub dram_sigma: f64,
    /// Relative standard deviation applied to victim compute steps.
    pub compute_jitter: f64,
    /// Standard deviation of a smuggled-clock read, cycles.
    pub clock_sigma: f64,
    /// Probability that a smuggled-clock read returns the previous value.
    pub clock_stale_prob: f64,
    /// Unrelated LLC/DRAM traffic from other cores, lines per 1000 cycles.
    pub background_rate: f64,
    /// Unrelated interrupts hitting the victim core, per million cycles.
    pub interrupt_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            dram_sigma: 8.0,
            compute_jitter: 0.01,
            clock_sigma: 8.0,
            clock_stale_prob: 0.001,
            background_rate: 64.0,
            interrupt_rate: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig {
            dram_sigma: 0.0,
            compute_jitter: 0.0,
            clock_sigma: 0.0,
            clock_stale_prob: 0.0,
            background_rate: 0.0,
            interrupt_rate: 0.0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        *self == NoiseConfig::none()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogLevel {
    /// Every victim and attacker memory access as well.
    Full,
    /// AEX, faults, trap changes and attacker DRAM probes only.
    #[default]
    Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub cores: u32,
    pub hyperthreading: bool,
    /// `true`: an AEX flushes only the enclave's PCID. `false`: every entry.
    pub pcid_selective_flush: bool,
    pub tlb: TlbConfig,
    pub cache: CacheConfig,
    pub dram: DramConfig,
    pub prm: PrmConfig,
    pub costs: CostConfig,
    pub noise: NoiseConfig,
    pub log: LogLevel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cores: 4,
            hyperthreading: true,
            pcid_selective_flush: true,
            tlb: TlbConfig::default(),
            cache: CacheConfig::default(),
            dram: DramConfig::default(),
            prm: PrmConfig::default(),
            costs: CostConfig::default(),
            noise: NoiseConfig::default(),
            log: LogLevel::Summary,
        }
    }
}

fn check_pow2(what: &str, v: u64) -> Result<()> {
    if v == 0 || !v.is_power_of_two() {
        return Err(SimError::InvalidConfig(format!("{what} must be a nonzero power of two, got {v}")));
    }
    Ok(())
}

impl SimConfig {
    /// The i7-6700 testbed: the defaults.
    pub fn testbed() -> Self {
        SimConfig::default()
    }

    pub fn noiseless() -> Self {
        SimConfig { noise: NoiseConfig::none(), ..SimConfig::default() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "testbed" => Ok(SimConfig::testbed()),
            "noiseless" => Ok(SimConfig::noiseless()),
            _ => Err(SimError::Unknown { kind: "preset", name: name.to_string() }),
        }
    }

    pub fn phys_bytes(&self) -> u64 {
        self.dram.geometry.total_bytes()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cores == 0 {
            return Err(SimError::InvalidConfig("cores must be at least 1".into()));
        }
        for (name, g) in [("itlb", self.tlb.itlb), ("dtlb", self.tlb.dtlb), ("stlb", self.tlb.stlb)] {
            check_pow2(&format!("tlb.{name}.sets"), g.sets as u64)?;
            if g.ways == 0 {
                return Err(SimError::InvalidConfig(format!("tlb.{name}.ways must be nonzero")));
            }
        }
        let c = &self.cache;
        for (name, l) in [("l1i", c.l1i), ("l1d", c.l1d), ("l2", c.l2), ("l3", c.l3)] {
            check_pow2(&format!("cache.{name}.sets"), l.sets as u64)?;
            if l.ways == 0 {
                return Err(SimError::InvalidConfig(format!("cache.{name}.ways must be nonzero")));
            }
        }
        check_pow2("cache.llc_slices", c.llc_slices as u64)?;
        if c.slice_hash == SliceHash::Single && c.llc_slices != 1 {
            return Err(SimError::InvalidConfig("single slice hash requires llc_slices = 1".into()));
        }
        if c.slice_hash == SliceHash::Xor && c.llc_slices != 4 {
            return Err(SimError::InvalidConfig("xor slice hash models exactly 4 slices".into()));
        }
        let g = &self.dram.geometry;
        for (name, v) in [
            ("channels", g.channels as u64),
            ("dimms", g.dimms as u64),
            ("ranks", g.ranks as u64),
            ("banks", g.banks as u64),
            ("rows", g.rows as u64),
            ("row_size", g.row_size),
        ] {
            check_pow2(&format!("dram.geometry.{name}"), v)?;
        }
        let m = &self.dram.mapping;
        for (name, masks, count) in [
            ("channel", &m.channel, g.channels),
            ("dimm", &m.dimm, g.dimms),
            ("rank", &m.rank, g.ranks),
            ("bank", &m.bank, g.banks),
        ] {
            if 1u64 << masks.len() != count as u64 {
                return Err(SimError::InvalidConfig(format!(
                    "dram.mapping.{name} has {} functions but geometry needs {count} values",
                    masks.len()
                )));
            }
        }
        if (1u64 << m.row_shift) != g.total_banks() * g.row_size {
            return Err(SimError::InvalidConfig(format!(
                "dram.mapping.row_shift {} does not match {} banks of {}B rows",
                m.row_shift,
                g.total_banks(),
                g.row_size
            )));
        }
        if self.dram.latency_hit >= self.dram.latency_conflict {
            return Err(SimError::InvalidConfig("dram latency_hit must be below latency_conflict".into()));
        }
        let prm = &self.prm;
        if prm.size == 0
            || !prm.base.is_multiple_of(crate::addr::PAGE_SIZE)
            || !prm.size.is_multiple_of(crate::addr::PAGE_SIZE)
        {
            return Err(SimError::InvalidConfig("PRM must be nonempty and page aligned".into()));
        }
        if prm.base.checked_add(prm.size).is_none_or(|end| end > self.phys_bytes()) {
            return Err(SimError::InvalidConfig(format!(
                "PRM {:#x}+{:#x} lies outside physical memory of {:#x} bytes",
                prm.base,
                prm.size,
                self.phys_bytes()
            )));
        }
        if self.costs.cycles_per_ns <= 0.0 {
            return Err(SimError::InvalidConfig("cycles_per_ns must be positive".into()));
        }
        let n = &self.noise;
        if !(0.0..=1.0).contains(&n.clock_stale_prob) {
            return Err(SimError::InvalidConfig("clock_stale_prob must be within [0, 1]".into()));
        }
        if n.dram_sigma < 0.0
            || n.compute_jitter < 0.0
            || n.clock_sigma < 0.0
            || n.background_rate < 0.0
            || n.interrupt_rate < 0.0
        {
            return Err(SimError::InvalidConfig("noise parameters must be non-negative".into()));
        }
        Ok(())
    }

    /// Short stable digest of the full configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hex::encode(&hash[..8])
    }
}

/// Machine overrides and scenario parameters read from one file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    /// Preset named in the file, if any.
    pub preset: Option<String>,
    /// Machine overrides as a JSON object, applied over a base config.
    pub overrides: serde_json::Value,
    /// Contents of the `scenario` table; `null` when absent.
    pub scenario: serde_json::Value,
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

impl ConfigFile {
    /// Parses TOML, or JSON when the text starts with `{`. The file must
    /// carry `schema_version` equal to [`SCHEMA_VERSION`].
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?
        } else {
            let t: toml::Table = toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
            serde_json::to_value(t).map_err(|e| SimError::InvalidConfig(e.to_string()))?
        };
        let serde_json::Value::Object(mut map) = value else {
            return Err(SimError::InvalidConfig("configuration must be a table".into()));
        };
        match map.remove("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(SimError::InvalidConfig(format!(
                    "schema_version {v} unsupported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(SimError::InvalidConfig("missing integer schema_version".into())),
        }
        let preset = match map.remove("preset") {
            None => None,
            Some(serde_json::Value::String(s)) => Some(s),
            Some(_) => return Err(SimError::InvalidConfig("preset must be a string".into())),
        };
        let scenario = map.remove("scenario").unwrap_or(serde_json::Value::Null);
        Ok(ConfigFile { preset, overrides: serde_json::Value::Object(map), scenario })
    }

    /// `base` with this file's overrides applied, validated.
    pub fn apply(&self, base: &SimConfig) -> Result<SimConfig> {
        let mut v = serde_json::to_value(base).expect("config serializes");
        merge(&mut v, self.overrides.clone());
        let cfg: SimConfig = serde_json::from_value(v).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn testbed_matches_table_geometry() {
        let c = SimConfig::testbed();
        assert_eq!(c.tlb.itlb.entries(), 64);
        assert_eq!(c.tlb.dtlb.entries(), 64);
        assert_eq!(c.tlb.stlb.entries(), 1536);
        assert_eq!(c.cache.l3.sets as u64 * c.cache.l3.ways as u64 * 64, 8 << 20);
        assert_eq!(c.cache.l1d.sets as u64 * c.cache.l1d.ways as u64 * 64, 32 << 10);
        assert_eq!(c.cache.l2.sets as u64 * c.cache.l2.ways as u64 * 64, 256 << 10);
        assert_eq!(c.phys_bytes(), 16 << 30);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_non_power_of_two_sets() {
        let mut c = SimConfig::default();
        c.cache.l3.sets = 8000;
        assert!(matches!(c.validate(), Err(SimError::InvalidConfig(_))));
        let mut c = SimConfig::default();
        c.tlb.dtlb.sets = 12;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_prm_outside_memory() {
        let mut c = SimConfig::default();
        c.prm.base = 16 << 30;
        assert!(c.validate().is_err());
        c.prm = PrmConfig { base: 0x8000_0000, size: 0 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = SimConfig::default();
        assert_eq!(a.digest(), SimConfig::default().digest());
        assert_ne!(a.digest(), SimConfig::noiseless().digest());
    }

    #[test]
    fn toml_partial_override() {
        let c: SimConfig = toml::from_str("[costs]\npage_fault_aex = 20000\n").unwrap();
        assert_eq!(c.costs.page_fault_aex, 20_000);
        assert_eq!(c.costs.shootdown_aex, 8_000);
    }

    #[test]
    fn config_file_layers_over_preset() {
        let f = ConfigFile::parse(
            "schema_version = 1\npreset = \"noiseless\"\n[noise]\ndram_sigma = 3.0\n[scenario]\nbits = 64\n",
        )
        .unwrap();
        assert_eq!(f.preset.as_deref(), Some("noiseless"));
        assert_eq!(f.scenario["bits"], 64);
        let c = f.apply(&SimConfig::noiseless()).unwrap();
        assert_eq!(c.noise.dram_sigma, 3.0);
        assert_eq!(c.noise.compute_jitter, 0.0);
    }

    #[test]
    fn config_file_json_and_errors() {
        let f = ConfigFile::parse(r#"{"schema_version": 1, "cores": 8}"#).unwrap();
        assert_eq!(f.apply(&SimConfig::default()).unwrap().cores, 8);
        assert!(ConfigFile::parse("cores = 8\n").is_err());
        assert!(ConfigFile::parse("schema_version = 2\n").is_err());
        let typo = ConfigFile::parse("schema_version = 1\ncoers = 8\n").unwrap();
        assert!(typo.apply(&SimConfig::default()).is_err());
    }
}

// SPDX-License-Identifier: Apache-2.0

//! DRAM address mapping and per-bank row buffers.

use serde::{Deserialize, Serialize};

use crate::addr::{PhysAddr, PhysFrame, LINE_SIZE, PAGE_SHIFT, PAGE_SIZE};
use crate::config::{DramConfig, DramMapping};
use crate::error::{Result, SimError};
use crate::rng::{jittered, SimRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DramCoord {
    pub channel: u32,
    pub dimm: u32,
    pub rank: u32,
    pub bank: u32,
    pub row: u32,
}

impl DramCoord {
    /// Flat bank id over (channel, dimm, rank, bank).
    pub fn bank_id(&self, cfg: &DramConfig) -> usize {
        let g = &cfg.geometry;
        (((self.channel * g.dimms + self.dimm) * g.ranks + self.rank) * g.banks + self.bank) as usize
    }

    /// True if both coordinates name the same bank.
    pub fn same_bank(&self, other: &DramCoord) -> bool {
        (self.channel, self.dimm, self.rank, self.bank) == (other.channel, other.dimm, other.rank, other.bank)
    }
}

fn parity_bits(pa: u64, masks: &[u64]) -> u32 {
    masks.iter().enumerate().map(|(i, &m)| ((pa & m).count_ones() & 1) << i).sum()
}

pub fn dram_map(pa: PhysAddr, cfg: &DramConfig) -> Result<DramCoord> {
    if pa.0 >= cfg.geometry.total_bytes() {
        return Err(SimError::AddressOutOfRange(pa));
    }
    Ok(map_unchecked(pa.0, &cfg.mapping))
}

fn map_unchecked(pa: u64, m: &DramMapping) -> DramCoord {
    DramCoord {
        channel: parity_bits(pa, &m.channel),
        dimm: parity_bits(pa, &m.dimm),
        rank: parity_bits(pa, &m.rank),
        bank: parity_bits(pa, &m.bank),
        row: (pa >> m.row_shift) as u32,
    }
}

/// First and last DRAM row touched by a PRM of the given extent.
pub fn prm_row_range(prm_base: u64, prm_size: u64, row_shift: u32) -> (u64, u64) {
    assert!(prm_size > 0, "PRM size must be positive");
    (prm_base >> row_shift, (prm_base + prm_size - 1) >> row_shift)
}

/// Number of distinct (bank, row) cells one page spans.
pub fn cells_per_page(frame: PhysFrame, cfg: &DramConfig) -> usize {
    let base = frame << PAGE_SHIFT;
    let mut cells: Vec<DramCoord> =
        (0..PAGE_SIZE / LINE_SIZE).map(|k| map_unchecked(base + k * LINE_SIZE, &cfg.mapping)).collect();
    cells.sort();
    cells.dedup();
    cells.len()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowOutcome {
    Hit,
    Conflict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DramOutcome {
    pub coord: DramCoord,
    pub row: RowOutcome,
    pub latency: u64,
}

/// Open-row state of every bank.
#[derive(Clone, Debug)]
pub struct DramState {
    cfg: DramConfig,
    open: Vec<Option<u32>>,
}

impl DramState {
    pub fn new(cfg: &DramConfig) -> Self {
        DramState { cfg: cfg.clone(), open: vec![None; cfg.geometry.total_banks() as usize] }
    }

    pub fn open_row(&self, coord: &DramCoord) -> Option<u32> {
        self.open[coord.bank_id(&self.cfg)]
    }

    /// Row-buffer hit if the bank already holds the row; otherwise a
    /// conflict that opens it. Latency is the configured base plus
    /// Gaussian noise.
    pub fn access(&mut self, pa: PhysAddr, rng: &mut SimRng, sigma: f64) -> Result<DramOutcome> {
        let coord = dram_map(pa, &self.cfg)?;
        let slot = &mut self.open[coord.bank_id(&self.cfg)];
        let row = if *slot == Some(coord.row) { RowOutcome::Hit } else { RowOutcome::Conflict };
        *slot = Some(coord.row);
        let base = match row {
            RowOutcome::Hit => self.cfg.latency_hit,
            RowOutcome::Conflict => self.cfg.latency_conflict,
        };
        Ok(DramOutcome { coord, row, latency: jittered(rng, base, sigma) })
    }
}

/// Picks, from the attacker's frames, a line `p` sharing the target's bank
/// and row (but not its 64B chunk) and a line `p_prime` in the same bank on
/// another row.
pub fn find_row_pair(
    target: PhysAddr,
    attacker_frames: &[PhysFrame],
    cfg: &DramConfig,
) -> Result<(PhysAddr, PhysAddr)> {
    let t = dram_map(target, cfg)?;
    let mut p = None;
    let mut p_prime = None;
    'outer: for &f in attacker_frames {
        for k in 0..PAGE_SIZE / LINE_SIZE {
            let a = PhysAddr((f << PAGE_SHIFT) + k * LINE_SIZE);
            if a.line() == target.line() {
                continue;
            }
            let c = dram_map(a, cfg)?;
            if !c.same_bank(&t) {
                continue;
            }
            if c.row == t.row {
                p.get_or_insert(a);
            } else {
                p_prime.get_or_insert(a);
            }
            if p.is_some() && p_prime.is_some() {
                break 'outer;
            }
        }
    }
    match (p, p_prime) {
        (Some(p), Some(q)) => Ok((p, q)),
        (None, _) => Err(SimError::NotFound(format!("no attacker line shares bank and row with {target}"))),
        (_, None) => Err(SimError::NotFound(format!("no attacker line in {target}'s bank on another row"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn cfg() -> DramConfig {
        DramConfig::default()
    }

    #[test]
    fn row_examples() {
        assert_eq!(dram_map(PhysAddr(0x8000_0000), &cfg()).unwrap().row, 0x1000);
        assert_eq!(dram_map(PhysAddr(0x87FF_FFFF), &cfg()).unwrap().row, 0x10FF);
        assert_eq!(dram_map(PhysAddr(0), &cfg()).unwrap().row, 0);
        assert!(matches!(dram_map(PhysAddr(16 << 30), &cfg()), Err(SimError::AddressOutOfRange(_))));
    }

    #[test]
    fn prm_rows_match_table() {
        assert_eq!(prm_row_range(0x8800_0000, 32 << 20, 19), (0x1100, 0x113F));
        assert_eq!(prm_row_range(0x8800_0000, 64 << 20, 19), (0x1100, 0x117F));
        assert_eq!(prm_row_range(0x8000_0000, 128 << 20, 19), (0x1000, 0x10FF));
    }

    #[test]
    fn default_page_spans_four_cells() {
        for f in [0u64, 1, 0x80000, 0x12345, 0x3ffff] {
            assert_eq!(cells_per_page(f, &cfg()), 4);
        }
        let linear = DramConfig { mapping: DramMapping::linear(), ..cfg() };
        assert_eq!(cells_per_page(7, &linear), 2);
    }

    #[test]
    fn open_row_policy() {
        let mut d = DramState::new(&cfg());
        let mut rng = stream_rng(0, 0);
        let a = PhysAddr(0x8000_0000);
        assert_eq!(d.access(a, &mut rng, 0.0).unwrap().row, RowOutcome::Conflict);
        let hit = d.access(PhysAddr(a.0 + 0x100), &mut rng, 0.0).unwrap();
        assert_eq!(hit.row, RowOutcome::Hit);
        assert_eq!(hit.latency, 160);
        let other = PhysAddr(a.0 + (1 << 19));
        let c = d.access(other, &mut rng, 0.0).unwrap();
        assert_eq!((c.row, c.latency), (RowOutcome::Conflict, 300));
        assert_eq!(d.open_row(&c.coord), Some(0x1001));
    }

    #[test]
    fn row_pair_found_and_verified() {
        let c = cfg();
        let target = PhysAddr(0x8000_0000 + 3 * PAGE_SIZE + 0x140);
        let t = dram_map(target, &c).unwrap();
        // Every other frame in the target's 512KB stripe plus one stripe up.
        let stripe = 0x8000_0000u64 >> PAGE_SHIFT;
        let frames: Vec<u64> =
            (0..128).map(|i| stripe + i).filter(|&f| f != stripe + 3).chain([stripe + 128 + 3]).collect();
        let (p, q) = find_row_pair(target, &frames, &c).unwrap();
        let (pc, qc) = (dram_map(p, &c).unwrap(), dram_map(q, &c).unwrap());
        assert!(pc.same_bank(&t) && pc.row == t.row && p.line() != target.line());
        assert!(qc.same_bank(&t) && qc.row != t.row);
    }

    #[test]
    fn row_pair_not_found_in_other_banks() {
        let c = cfg();
        let target = PhysAddr(0x8000_0000);
        let t = dram_map(target, &c).unwrap();
        // Frames whose bank bits 15..17 differ from the target's.
        let frames: Vec<u64> = (0..64u64).map(|i| (0x8000_0000u64 >> PAGE_SHIFT) + (1 << 3) + i * 128).collect();
        for &f in &frames {
            assert!(!dram_map(PhysAddr(f << PAGE_SHIFT), &c).unwrap().same_bank(&t));
        }
        assert!(matches!(find_row_pair(target, &frames, &c), Err(SimError::NotFound(_))));
    }
}

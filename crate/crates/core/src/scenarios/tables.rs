// SPDX-License-Identifier: Apache-2.0

use super::{Scenario, ScenarioInput, ScenarioReport, Table};
use crate::analysis::{spatial_accuracy, AttackReport, AttackVector};
use crate::dram::prm_row_range;
use crate::error::Result;

fn human_bytes(b: u64) -> String {
    match b {
        b if b >= 1 << 20 && b % (1 << 20) == 0 => format!("{}MB", b >> 20),
        b if b >= 1 << 10 && b % (1 << 10) == 0 => format!("{}KB", b >> 10),
        b => format!("{b}B"),
    }
}

pub struct GranularityTable;

impl Scenario for GranularityTable {
    fn name(&self) -> &'static str {
        "granularity-table"
    }

    fn description(&self) -> &'static str {
        "Spatial accuracy of every attack vector under the configured machine"
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let rows = AttackVector::ALL
            .iter()
            .map(|&v| {
                let b = spatial_accuracy(v, &input.config);
                vec![v.name().to_string(), b.to_string(), human_bytes(b)]
            })
            .collect();
        let finest = AttackVector::ALL.iter().map(|&v| spatial_accuracy(v, &input.config)).min().unwrap_or(0);
        let mut rep = input.report(self.name(), AttackReport::new(0, 1.0, finest));
        rep.table = Some(Table { columns: vec!["vector".into(), "bytes".into(), "accuracy".into()], rows });
        Ok(rep)
    }
}

/// PRM placements of the reference table: (base, size).
pub const PRM_CASES: [(u64, u64); 3] = [(0x8800_0000, 32 << 20), (0x8800_0000, 64 << 20), (0x8000_0000, 128 << 20)];

pub struct RowRangeTable;

impl Scenario for RowRangeTable {
    fn name(&self) -> &'static str {
        "rowrange-table"
    }

    fn description(&self) -> &'static str {
        "DRAM rows spanned by the PRM for three PRM sizes"
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let shift = input.config.dram.mapping.row_shift;
        let rows = PRM_CASES
            .iter()
            .map(|&(base, size)| {
                let (lo, hi) = prm_row_range(base, size, shift);
                vec![human_bytes(size), format!("{base:#x}"), format!("{lo:#x}"), format!("{hi:#x}")]
            })
            .collect();
        let mut rep = input.report(self.name(), AttackReport::new(0, 1.0, input.config.dram.geometry.row_size));
        rep.table = Some(Table {
            columns: vec!["prm_size".into(), "prm_base".into(), "first_row".into(), "last_row".into()],
            rows,
        });
        Ok(rep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_render() {
        assert_eq!(human_bytes(2 << 20), "2MB");
        assert_eq!(human_bytes(16 << 10), "16KB");
        assert_eq!(human_bytes(64), "64B");
    }
}

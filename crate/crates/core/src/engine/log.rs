// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::addr::{AccessKind, PhysAddr, VirtAddr, VirtPage};
use crate::cache::HitLevel;
use crate::dram::RowOutcome;
use crate::engine::{ActorId, Cycle};
use crate::tlb::TlbHit;
use crate::translation::{AexReason, FaultKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    VictimAccess {
        va: VirtAddr,
        access: AccessKind,
        latency: u64,
        tlb: TlbHit,
        walked: bool,
        accessed_set: bool,
        cache: HitLevel,
        row: Option<RowOutcome>,
    },
    VictimFlush {
        va: VirtAddr,
    },
    AttackerAccess {
        va: VirtAddr,
        latency: u64,
        tlb: TlbHit,
        cache: HitLevel,
    },
    /// Ground truth of an attacker access that reached DRAM. Scoring only.
    AttackerDram {
        pa: PhysAddr,
        row: RowOutcome,
    },
    PageFault {
        page: VirtPage,
        fault: FaultKind,
    },
    Aex {
        reason: AexReason,
        cost: u64,
    },
    TrapSet {
        page: VirtPage,
    },
    TrapCleared {
        page: VirtPage,
    },
    /// The OS restored a page no handler untrapped.
    TrapRestored {
        page: VirtPage,
    },
    FlagsRead {
        pages: u32,
        set: u32,
    },
    VictimExit,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::VictimAccess { .. } => "victim-access",
            EventKind::VictimFlush { .. } => "victim-flush",
            EventKind::AttackerAccess { .. } => "attacker-access",
            EventKind::AttackerDram { .. } => "attacker-dram",
            EventKind::PageFault { .. } => "page-fault",
            EventKind::Aex { .. } => "aex",
            EventKind::TrapSet { .. } => "trap-set",
            EventKind::TrapCleared { .. } => "trap-cleared",
            EventKind::TrapRestored { .. } => "trap-restored",
            EventKind::FlagsRead { .. } => "flags-read",
            EventKind::VictimExit => "victim-exit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub cycle: Cycle,
    pub actor: ActorId,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Append-only record of a run, ordered by (cycle, actor).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, cycle: Cycle, actor: ActorId, kind: EventKind) {
        self.events.push(Event { cycle, actor, kind });
    }

    /// Restores (cycle, actor) order for callbacks that logged out of turn.
    /// The sort is stable, so same-key events keep their append order.
    pub(crate) fn finalize(&mut self) {
        self.events.sort_by_key(|e| (e.cycle, e.actor));
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<String, u64> {
        let mut m = BTreeMap::new();
        for e in &self.events {
            *m.entry(e.kind.label().to_string()).or_insert(0) += 1;
        }
        m
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.events {
            h.update(serde_json::to_vec(e).expect("event serializes"));
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..16])
    }

    pub fn is_ordered(&self) -> bool {
        self.events.windows(2).all(|w| (w[0].cycle, w[0].actor) <= (w[1].cycle, w[1].actor))
    }
}

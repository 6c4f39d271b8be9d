// SPDX-License-Identifier: Apache-2.0

//! Multi-checkpoint victim: a secret class picks one timing profile over
//! five alpha/beta page pairs, in the shape of a glyph loader.

use rand::Rng;

use crate::addr::VirtAddr;
use crate::error::{Result, SimError};
use crate::rng::stream_rng;
use crate::victims::{Mark, Secret, Step, Truth, VictimLayout, VictimProgram};

pub const PAIRS: usize = 5;
pub const TRIGGER: &str = "trigger";

/// Per-class compute between alpha_j and beta_j.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Profiles {
    pub table: Vec<[u64; PAIRS]>,
}

impl Profiles {
    /// `classes` synthetic profiles; each feature takes one of eight
    /// levels so that single features collide and only the vector
    /// separates classes.
    pub fn synthetic(classes: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, crate::rng::streams::VICTIM_GEN + 40);
        let table = (0..classes).map(|_| std::array::from_fn(|_| 1000 + 400 * rng.random_range(0..8u64))).collect();
        Profiles { table }
    }

    pub fn classes(&self) -> usize {
        self.table.len()
    }
}

pub fn alpha(j: usize) -> String {
    format!("alpha{j}")
}

pub fn beta(j: usize) -> String {
    format!("beta{j}")
}

pub fn default_layout() -> VictimLayout {
    let base = 0x700;
    let mut l = VictimLayout::new(base, 1 + 2 * PAIRS as u64);
    l.symbols.insert(TRIGGER.into(), VirtAddr::from_page(base, 0));
    for j in 0..PAIRS {
        l.symbols.insert(alpha(j), VirtAddr::from_page(base + 1 + 2 * j as u64, 0x100));
        l.symbols.insert(beta(j), VirtAddr::from_page(base + 2 + 2 * j as u64, 0x100));
    }
    l
}

pub fn glyph_session(
    classes: &[usize],
    profiles: &Profiles,
    layout: &VictimLayout,
    gap: (u64, u64),
    seed: u64,
) -> Result<VictimProgram> {
    if classes.is_empty() {
        return Err(SimError::EmptyVictim);
    }
    let mut rng = stream_rng(seed, crate::rng::streams::VICTIM_GEN + 41);
    let trig = layout.symbol(TRIGGER)?;
    let mut steps = Vec::new();
    for (i, &c) in classes.iter().enumerate() {
        let prof = profiles.table.get(c).ok_or_else(|| SimError::BadParam(format!("class {c} has no profile")))?;
        steps.push(Step::compute(rng.random_range(gap.0..=gap.1)));
        steps.push(Step::fetch(50, trig).marked(Mark::Begin(i as u32)));
        for (j, &d) in prof.iter().enumerate() {
            steps.push(Step::fetch(100, layout.symbol(&alpha(j))?));
            steps.push(Step::fetch(d, layout.symbol(&beta(j))?));
        }
        steps.last_mut().expect("glyph has pairs").mark = Some(Mark::End(i as u32));
    }
    Ok(VictimProgram {
        name: "freetype".into(),
        layout: layout.clone(),
        steps,
        secret: Secret::new(Truth::Classes(classes.to_vec())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_distinct_vectors() {
        let p = Profiles::synthetic(27, 5);
        let mut v = p.table.clone();
        v.sort();
        v.dedup();
        assert_eq!(v.len(), 27);
    }

    #[test]
    fn session_marks_each_glyph() {
        let p = Profiles::synthetic(3, 1);
        let s = glyph_session(&[0, 2, 1], &p, &default_layout(), (100, 200), 1).unwrap();
        assert_eq!(s.steps.iter().filter(|s| matches!(s.mark, Some(Mark::Begin(_)))).count(), 3);
    }
}

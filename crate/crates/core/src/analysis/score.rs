// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

fn check_len(recovered: usize, truth: usize) -> Result<()> {
    if recovered != truth {
        return Err(SimError::LengthMismatch { recovered, truth });
    }
    Ok(())
}

/// Hamming distance over length.
pub fn bit_error_rate(recovered: &[bool], truth: &[bool]) -> Result<f64> {
    check_len(recovered.len(), truth.len())?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let wrong = recovered.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / truth.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn coverage(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn false_positive_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.tp + self.fp + self.fn_ + self.tn)
    }

    /// The same counts with positive and negative swapped.
    pub fn inverted(&self) -> Confusion {
        Confusion { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

pub fn confusion(predicted: &[bool], truth: &[bool]) -> Result<Confusion> {
    check_len(predicted.len(), truth.len())?;
    let mut c = Confusion::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn slowdown(attacked_cycles: u64, baseline_cycles: u64) -> f64 {
    if baseline_cycles == 0 {
        return 1.0;
    }
    attacked_cycles as f64 / baseline_cycles as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ber_examples() {
        let t = vec![true; 403];
        assert_eq!(bit_error_rate(&t, &t).unwrap(), 0.0);
        let mut r = t.clone();
        r[17] = false;
        assert!((bit_error_rate(&r, &t).unwrap() - 0.002481).abs() < 1e-6);
        assert!(matches!(bit_error_rate(&r[1..], &t), Err(SimError::LengthMismatch { recovered: 402, truth: 403 })));
    }

    #[test]
    fn confusion_rates() {
        let c = confusion(&[true, true, false, false, true], &[true, false, true, false, true]).unwrap();
        assert_eq!(c, Confusion { tp: 2, fp: 1, fn_: 1, tn: 1 });
        assert!((c.coverage() - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.precision() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.inverted().coverage(), 0.5);
        assert_eq!(Confusion::default().precision(), 0.0);
    }

    #[test]
    fn slowdown_ratio() {
        assert_eq!(slowdown(102, 100), 1.02);
        assert_eq!(slowdown(5, 0), 1.0);
    }
}

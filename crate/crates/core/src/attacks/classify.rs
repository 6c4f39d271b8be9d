// SPDX-License-Identifier: Apache-2.0

//! Small classifiers for timing observations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Midpoint between the means of two calibration samples.
pub fn midpoint_threshold(low: &[f64], high: &[f64]) -> Result<f64> {
    match (mean(low), mean(high)) {
        (Some(a), Some(b)) => Ok((a + b) / 2.0),
        _ => Err(SimError::BadParam("empty calibration sample".into())),
    }
}

/// Class whose centroid is nearest in Euclidean distance. Ties go to the
/// smaller label.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NearestCentroid {
    centroids: BTreeMap<u32, Vec<f64>>,
}

impl NearestCentroid {
    /// Fits one centroid per label. All feature vectors must share a length.
    pub fn fit(samples: &[(u32, Vec<f64>)]) -> Result<Self> {
        let dim = samples.first().map(|s| s.1.len()).ok_or_else(|| SimError::BadParam("no training samples".into()))?;
        let mut acc: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
        for (label, x) in samples {
            if x.len() != dim {
                return Err(SimError::LengthMismatch { recovered: x.len(), truth: dim });
            }
            let e = acc.entry(*label).or_insert_with(|| (vec![0.0; dim], 0));
            e.0.iter_mut().zip(x).for_each(|(a, v)| *a += v);
            e.1 += 1;
        }
        let centroids = acc.into_iter().map(|(l, (s, n))| (l, s.into_iter().map(|v| v / n as f64).collect())).collect();
        Ok(NearestCentroid { centroids })
    }

    pub fn centroid(&self, label: u32) -> Option<&[f64]> {
        self.centroids.get(&label).map(|v| v.as_slice())
    }

    pub fn predict(&self, x: &[f64]) -> Option<u32> {
        let dist = |c: &[f64]| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut best: Option<(u32, f64)> = None;
        for (&l, c) in &self.centroids {
            let d = dist(c);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((l, d));
            }
        }
        best.map(|b| b.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint() {
        assert_eq!(midpoint_threshold(&[1.0, 3.0], &[10.0]).unwrap(), 6.0);
        assert!(midpoint_threshold(&[], &[1.0]).is_err());
    }

    #[test]
    fn centroid_classifies_clusters() {
        let s = vec![(0, vec![0.0, 0.0]), (0, vec![2.0, 0.0]), (1, vec![10.0, 10.0]), (1, vec![12.0, 10.0])];
        let nc = NearestCentroid::fit(&s).unwrap();
        assert_eq!(nc.centroid(0).unwrap(), &[1.0, 0.0]);
        assert_eq!(nc.predict(&[3.0, 1.0]), Some(0));
        assert_eq!(nc.predict(&[9.0, 9.0]), Some(1));
        assert_eq!(nc.predict(&[6.0, 5.0]), Some(0));
    }

    #[test]
    fn ragged_features_rejected() {
        let s = vec![(0, vec![0.0]), (1, vec![1.0, 2.0])];
        assert!(matches!(NearestCentroid::fit(&s), Err(SimError::LengthMismatch { .. })));
    }
}

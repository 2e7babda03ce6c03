//! Grayscale image construction from numeric feature vectors.
//!
//! Per-feature min/max come from the training partition only; applying the
//! normalization to held-out records never touches held-out statistics.

use super::{MalwareImage, MalwareRecord};
use crate::error::{Error, Result};

/// Per-feature min/max over a record set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Compute per-feature min/max. Call with `train_known` records only.
pub fn compute_stats(records: &[MalwareRecord]) -> Result<FeatureStats> {
    let first = records
        .first()
        .ok_or_else(|| Error::Input("cannot compute feature stats of an empty set".into()))?;
    let dim = first.numeric.len();
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for r in records {
        if r.numeric.len() != dim {
            return Err(Error::Schema(format!(
                "ragged numeric length {} vs {}",
                r.numeric.len(),
                dim
            )));
        }
        for (j, &v) in r.numeric.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(FeatureStats { min, max })
}

/// Min-max normalize to [0,1] (degenerate feature → 0.5), truncate or
/// zero-pad to h·w, reshape row-major. Out-of-range held-out values clamp
/// so the pixel invariant holds for any input.
pub fn make_image(numeric: &[f64], h: usize, w: usize, stats: &FeatureStats) -> Result<MalwareImage> {
    if h * w == 0 {
        return Err(Error::Config(format!("image size {h}x{w} has zero area")));
    }
    let mut pixels = vec![0.0; h * w];
    let n = numeric.len().min(h * w);
    for j in 0..n {
        let (lo, hi) = (stats.min[j], stats.max[j]);
        pixels[j] = if hi > lo {
            ((numeric[j] - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.5
        };
    }
    Ok(MalwareImage { h, w, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FamilyLabel;

    fn rec(numeric: Vec<f64>) -> MalwareRecord {
        MalwareRecord {
            family: FamilyLabel {
                id: 0,
                name: "a".into(),
            },
            numeric,
            tokens: vec![],
        }
    }

    #[test]
    fn degenerate_feature_maps_to_half() {
        let train = vec![rec(vec![0.0, 2.0]), rec(vec![4.0, 2.0])];
        let stats = compute_stats(&train).unwrap();
        let img = make_image(&[0.0, 2.0], 1, 2, &stats).unwrap();
        assert_eq!(img.pixels, vec![0.0, 0.5]);
    }

    #[test]
    fn row_major_reshape() {
        let train = vec![rec(vec![0.0, 0.0, 0.0, 0.0]), rec(vec![1.0, 1.0, 1.0, 1.0])];
        let stats = compute_stats(&train).unwrap();
        let img = make_image(&[0.0, 1.0, 1.0, 0.0], 2, 2, &stats).unwrap();
        // row 0 = [0,1], row 1 = [1,0]
        assert_eq!(img.pixels, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!((img.h, img.w), (2, 2));
    }

    #[test]
    fn short_vector_pads_with_zero() {
        let dim = 600;
        let lo = rec(vec![0.0; dim]);
        let hi = rec(vec![1.0; dim]);
        let stats = compute_stats(&[lo, hi]).unwrap();
        let img = make_image(&vec![1.0; dim], 25, 25, &stats).unwrap();
        assert!(img.pixels[..600].iter().all(|&p| p == 1.0));
        assert!(img.pixels[600..].iter().all(|&p| p == 0.0));
        assert_eq!(img.pixels.len(), 625);
    }

    #[test]
    fn long_vector_truncates() {
        let train = vec![rec(vec![0.0; 10]), rec(vec![1.0; 10])];
        let stats = compute_stats(&train).unwrap();
        let img = make_image(&vec![1.0; 10], 2, 2, &stats).unwrap();
        assert_eq!(img.pixels, vec![1.0; 4]);
    }

    #[test]
    fn zero_area_rejected() {
        let train = vec![rec(vec![0.0]), rec(vec![1.0])];
        let stats = compute_stats(&train).unwrap();
        assert!(matches!(
            make_image(&[0.5], 0, 3, &stats),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn out_of_range_test_values_stay_in_unit_interval() {
        let train = vec![rec(vec![0.0]), rec(vec![1.0])];
        let stats = compute_stats(&train).unwrap();
        let img = make_image(&[5.0], 1, 1, &stats).unwrap();
        assert_eq!(img.pixels[0], 1.0);
        let img = make_image(&[-5.0], 1, 1, &stats).unwrap();
        assert_eq!(img.pixels[0], 0.0);
    }
}

//! Soft assignment of fixations to duration-clustered channels.

use crate::error::{Error, Result};
use crate::gaze::density::{build_weighted_density_map, duration_weights, DensityMap};
use crate::gaze::fixation::Fixation;
use crate::gaze::kmeans::BinCentroids;

/// Similarity bandwidth in normalized-duration units.
pub const SOFT_BIN_SIGMA: f64 = 0.025;

/// Contribution of a fixation with features `d` to each bin: normalized
/// Gaussian similarities, summing to one.
pub fn bin_contributions<const D: usize>(d: &[f64; D], centroids: &BinCentroids<D>) -> Vec<f64> {
    let inv_two_var = 1.0 / (2.0 * SOFT_BIN_SIGMA * SOFT_BIN_SIGMA);
    let exponents: Vec<f64> = centroids
        .as_slice()
        .iter()
        .map(|c| {
            let dist2: f64 = c.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum();
            -dist2 * inv_two_var
        })
        .collect();
    // shift by the largest exponent so far-away fixations do not underflow to 0/0
    let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sims: Vec<f64> = exponents.iter().map(|e| (e - top).exp()).collect();
    let total: f64 = sims.iter().sum();
    sims.into_iter().map(|s| s / total).collect()
}

/// One density map per centroid, from 1-D (normalized duration) bins.
pub fn soft_bin_maps(
    fixations: &[Fixation],
    centroids: &BinCentroids<1>,
    width: usize,
    height: usize,
) -> Result<Vec<DensityMap>> {
    soft_bin_maps_with(fixations, centroids, width, height, |f| {
        Ok([f.duration.ok_or_else(missing_duration)?])
    })
}

/// Two-dimensional variant binning on (normalized duration, normalized onset).
pub fn soft_bin_maps_2d(
    fixations: &[Fixation],
    centroids: &BinCentroids<2>,
    width: usize,
    height: usize,
) -> Result<Vec<DensityMap>> {
    soft_bin_maps_with(fixations, centroids, width, height, |f| {
        Ok([
            f.duration.ok_or_else(missing_duration)?,
            f.onset
                .ok_or_else(|| Error::invalid("2-D soft binning needs fixation onsets"))?,
        ])
    })
}

fn missing_duration() -> Error {
    Error::invalid("soft binning needs fixation durations")
}

fn soft_bin_maps_with<const D: usize>(
    fixations: &[Fixation],
    centroids: &BinCentroids<D>,
    width: usize,
    height: usize,
    features: impl Fn(&Fixation) -> Result<[f64; D]>,
) -> Result<Vec<DensityMap>> {
    let base = duration_weights(fixations);
    let contributions = fixations
        .iter()
        .map(|f| Ok(bin_contributions(&features(f)?, centroids)))
        .collect::<Result<Vec<_>>>()?;
    (0..centroids.len())
        .map(|j| {
            let weights: Vec<f64> = base.iter().zip(&contributions).map(|(w, a)| w * a[j]).collect();
            build_weighted_density_map(fixations, &weights, width, height)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::density::build_density_map;

    fn fixations() -> Vec<Fixation> {
        vec![
            Fixation::new(10.0, 12.0, 0.05, "a", 0),
            Fixation::new(30.0, 20.0, 0.2, "a", 1),
            Fixation::new(22.0, 5.0, 0.11, "b", 0),
        ]
    }

    #[test]
    fn one_bin_reproduces_density_map() {
        let c = BinCentroids::new(vec![[0.1]]).unwrap();
        let maps = soft_bin_maps(&fixations(), &c, 40, 30).unwrap();
        assert_eq!(maps.len(), 1);
        assert_eq!(maps[0], build_density_map(&fixations(), 40, 30).unwrap());
    }

    #[test]
    fn contributions_sum_to_one() {
        let c = BinCentroids::new(vec![[0.05], [0.1], [0.3], [0.9]]).unwrap();
        for d in [0.0, 0.07, 0.2, 0.5, 3.0, 100.0] {
            let a = bin_contributions(&[d], &c);
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_centroid_takes_all_weight() {
        let c = BinCentroids::new(vec![[0.2], [0.2 + 10.0 * SOFT_BIN_SIGMA]]).unwrap();
        let a = bin_contributions(&[0.2], &c);
        assert!((a[0] - 1.0).abs() < 1e-9);
        assert!(a[1] < 1e-9);
    }

    #[test]
    fn channels_are_independently_normalized() {
        let c = BinCentroids::new(vec![[0.05], [0.2], [5.0]]).unwrap();
        let maps = soft_bin_maps(&fixations(), &c, 40, 30).unwrap();
        assert_eq!(maps.len(), 3);
        assert_eq!(maps[0].max(), 1.0);
        assert_eq!(maps[1].max(), 1.0);
        // the far bin receives only vanishing weight yet still normalizes to 1
        assert!(maps[2].max() == 1.0 || maps[2].max() == 0.0);
    }

    #[test]
    fn two_dimensional_bins() {
        let fx: Vec<Fixation> = fixations()
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.with_onset(i as f64 * 0.3))
            .collect();
        let c = BinCentroids::new(vec![[0.05, 0.0], [0.2, 0.3]]).unwrap();
        let maps = soft_bin_maps_2d(&fx, &c, 40, 30).unwrap();
        assert_eq!(maps.len(), 2);
        assert!(soft_bin_maps_2d(&fixations(), &c, 40, 30).is_err());
    }
}

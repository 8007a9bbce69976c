//! Lloyd's k-means with k-means++ seeding, for choosing soft-bin centres.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;

/// Sorted, distinct bin centres in a `D`-dimensional feature space
/// (lexicographic order when `D > 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCentroids<const D: usize = 1> {
    #[serde(with = "centroid_serde")]
    centroids: Vec<[f64; D]>,
}

impl<const D: usize> BinCentroids<D> {
    pub fn new(mut centroids: Vec<[f64; D]>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::invalid("at least one centroid required"));
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("centroids must be finite"));
        }
        centroids.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if centroids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("centroids must be distinct"));
        }
        Ok(BinCentroids { centroids })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn as_slice(&self) -> &[[f64; D]] {
        &self.centroids
    }
}

impl BinCentroids<1> {
    pub fn values(&self) -> Vec<f64> {
        self.centroids.iter().map(|c| c[0]).collect()
    }
}

mod centroid_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(v: &[[f64; D]], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|c| c.to_vec()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(d: De) -> Result<Vec<[f64; D]>, De::Error> {
        let raw = Vec::<Vec<f64>>::deserialize(d)?;
        raw.into_iter()
            .map(|c| {
                <[f64; D]>::try_from(c.as_slice())
                    .map_err(|_| serde::de::Error::custom(format!("centroid must have {D} coordinates")))
            })
            .collect()
    }
}

/// Clustering result with the within-cluster SSE after every update step.
#[derive(Debug, Clone)]
pub struct KMeansRun<const D: usize> {
    pub centroids: BinCentroids<D>,
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

/// 1-D clustering of `values` into `k` sorted centroids.
pub fn kmeans_centroids(values: &[f64], k: usize, seed: u64) -> Result<BinCentroids<1>> {
    let points: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
    Ok(kmeans(&points, k, seed)?.centroids)
}

pub fn kmeans<const D: usize>(points: &[[f64; D]], k: usize, seed: u64) -> Result<KMeansRun<D>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if points.is_empty() {
        return Err(Error::invalid("k-means needs at least one value"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("k-means input must be finite"));
    }
    let distinct = count_distinct(points);
    if k > distinct {
        return Err(Error::invalid(format!("k = {k} exceeds {distinct} distinct values")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];
    let mut sse_history = Vec::new();
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        for (p, a) in points.iter().zip(assignment.iter_mut()) {
            let best = nearest(p, &centroids);
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        // means accumulated as offsets from each cluster's first member, so
        // identical members reproduce their value exactly
        let mut anchors: Vec<Option<[f64; D]>> = vec![None; k];
        let mut sums = vec![[0.0f64; D]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            let anchor = *anchors[a].get_or_insert(*p);
            counts[a] += 1;
            for d in 0..D {
                sums[a][d] += p[d] - anchor[d];
            }
        }
        for j in 0..k {
            if let Some(anchor) = anchors[j] {
                for d in 0..D {
                    centroids[j][d] = anchor[d] + sums[j][d] / counts[j] as f64;
                }
            }
        }
        sse_history.push(
            points
                .iter()
                .zip(&assignment)
                .map(|(p, &a)| dist2(p, &centroids[a]))
                .sum(),
        );
    }
    Ok(KMeansRun {
        centroids: BinCentroids::new(centroids)?,
        sse_history,
        iterations,
    })
}

fn count_distinct<const D: usize>(points: &[[f64; D]]) -> usize {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    sorted.dedup();
    sorted.len()
}

#[inline]
fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lower index.
fn nearest<const D: usize>(p: &[f64; D], centroids: &[[f64; D]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn plus_plus_init<const D: usize>(points: &[[f64; D]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; D]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        // k <= distinct values guarantees some point with d2 > 0
        let chosen = points[pick.expect("a point away from all chosen centroids")];
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(dist2(p, &chosen));
        }
        centroids.push(chosen);
    }
    centroids
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// k-means centroids used to turn feature rows into symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqCodebook {
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    pub seed: u64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = dist2(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding. An emptied cluster is re-seeded
/// with the row farthest from its centroid.
pub fn fit_codebook(rows: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<VqCodebook> {
    if k == 0 {
        return Err(Error::Config("codebook size must be at least 1".into()));
    }
    if rows.len() < k {
        return Err(Error::Empty(format!("{} rows cannot seed {k} centroids", rows.len())));
    }
    let dim = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: r.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![rows[rng.random_range(0..rows.len())].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| dist2(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = rows.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..rows.len())
        };
        centroids.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(dist2(r, &centroids[centroids.len() - 1]));
        }
    }

    let mut assign = vec![usize::MAX; rows.len()];
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let (c, _) = nearest(&centroids, r);
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, r) in rows.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                let far = (0..rows.len())
                    .max_by(|&a, &b| {
                        dist2(&rows[a], &centroids[assign[a]])
                            .total_cmp(&dist2(&rows[b], &centroids[assign[b]]))
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                centroids[c] = rows[far].clone();
                assign[far] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = rows.iter().map(|r| nearest(&centroids, r).1).sum();
    Ok(VqCodebook {
        centroids,
        inertia,
        iterations,
        seed,
    })
}

impl VqCodebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    /// Index of the nearest centroid; ties to the lowest index.
    pub fn symbol(&self, x: &[f64]) -> usize {
        nearest(&self.centroids, x).0
    }

    pub fn quantize(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        if let Some(r) = rows.iter().find(|r| r.len() != self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: r.len(),
            });
        }
        Ok(rows.iter().map(|r| self.symbol(r)).collect())
    }
}

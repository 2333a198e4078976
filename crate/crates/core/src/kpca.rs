//! Kernel PCA on a dense, double-centred Gram matrix.
//!
//! With the linear kernel the projections coincide with ordinary
//! covariance PCA up to the sign of each component.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(-gamma * |x - y|^2)`
    Gaussian { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Gaussian { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Components {
    Fixed(usize),
    /// Smallest count whose spectral energy fraction reaches the value.
    Retain(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpcaConfig {
    pub kernel: KernelKind,
    /// Gaussian width; the median heuristic is used when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    pub components: Components,
}

impl Default for KpcaConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Gaussian,
            gamma: None,
            components: Components::Fixed(6),
        }
    }
}

/// `1 / (2 m^2)` with `m` the median pairwise Euclidean distance.
pub fn median_heuristic_gamma(rows: &[Vec<f64>]) -> Result<f64> {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            d.push(rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return Err(Error::Empty("need at least two rows for the kernel width".into()));
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let n = d.len();
    let med = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    if med <= 0.0 {
        return Err(Error::Config("median pairwise distance is zero; set gamma explicitly".into()));
    }
    Ok(1.0 / (2.0 * med * med))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpcaModel {
    pub schema_version: u32,
    pub kernel: Kernel,
    pub train: Vec<Vec<f64>>,
    /// Every eigenvalue of the centred Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Projection coefficients: eigenvector `k` divided by `sqrt(lambda_k)`.
    pub coefficients: Vec<Vec<f64>>,
    pub d: usize,
    pub retained_energy: f64,
    /// Column means of the uncentred Gram matrix, and its grand mean.
    pub gram_col_means: Vec<f64>,
    pub gram_mean: f64,
}

fn positive_tolerance(eigs: &[f64]) -> f64 {
    let top = eigs.first().copied().unwrap_or(0.0).max(0.0);
    (top * 1e-10).max(1e-12)
}

impl KpcaModel {
    pub fn fit(train: &[Vec<f64>], cfg: &KpcaConfig) -> Result<Self> {
        let n = train.len();
        if n < 2 {
            return Err(Error::Empty("kernel PCA needs at least two training rows".into()));
        }
        let dim = train[0].len();
        if let Some(r) = train.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        let kernel = match cfg.kernel {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Gaussian => {
                let gamma = match cfg.gamma {
                    Some(g) => g,
                    None => median_heuristic_gamma(train)?,
                };
                if !(gamma > 0.0) {
                    return Err(Error::Config("gaussian kernel width must be positive".into()));
                }
                Kernel::Gaussian { gamma }
            }
        };

        let gram = DMatrix::from_fn(n, n, |i, j| kernel.eval(&train[i], &train[j]));
        let col_means: Vec<f64> = (0..n).map(|j| gram.column(j).sum() / n as f64).collect();
        let grand = col_means.iter().sum::<f64>() / n as f64;
        let centred = DMatrix::from_fn(n, n, |i, j| gram[(i, j)] - col_means[i] - col_means[j] + grand);
        // exact symmetry for the solver
        let centred = (&centred + centred.transpose()) * 0.5;

        let eig = SymmetricEigen::new(centred);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let tol = positive_tolerance(&eigenvalues);
        let positive = eigenvalues.iter().take_while(|&&l| l > tol).count();
        let total: f64 = eigenvalues.iter().filter(|&&l| l > 0.0).sum();

        let d = match cfg.components {
            Components::Fixed(d) => {
                if d == 0 {
                    return Err(Error::Config("component count must be at least 1".into()));
                }
                d
            }
            Components::Retain(frac) => {
                if !(frac > 0.0 && frac <= 1.0) {
                    return Err(Error::Config("retained fraction must lie in (0, 1]".into()));
                }
                let mut acc = 0.0;
                let mut d = positive;
                for (k, l) in eigenvalues.iter().take(positive).enumerate() {
                    acc += l;
                    if acc / total >= frac - 1e-12 {
                        d = k + 1;
                        break;
                    }
                }
                d.max(1)
            }
        };
        if d > positive {
            return Err(Error::TooManyComponents {
                requested: d,
                available: positive,
            });
        }

        let mut coefficients = Vec::with_capacity(d);
        for &k in order.iter().take(d) {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // sign: largest-magnitude loading positive (first such index on ties)
            let mut lead = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[lead].abs() {
                    lead = i;
                }
            }
            let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
            let scale = sign / eig.eigenvalues[k].sqrt();
            v.iter_mut().for_each(|x| *x *= scale);
            coefficients.push(v);
        }
        let retained_energy = eigenvalues.iter().take(d).sum::<f64>() / total;

        Ok(Self {
            schema_version: crate::SCHEMA_VERSION,
            kernel,
            train: train.to_vec(),
            eigenvalues,
            coefficients,
            d,
            retained_energy,
            gram_col_means: col_means,
            gram_mean: grand,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.train[0].len()
    }

    pub fn positive_eigenvalues(&self) -> usize {
        let tol = positive_tolerance(&self.eigenvalues);
        self.eigenvalues.iter().take_while(|&&l| l > tol).count()
    }

    /// Centred kernel row of `x` against the training set.
    fn centred_row(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self.train.iter().map(|t| self.kernel.eval(x, t)).collect();
        let row_mean = k.iter().sum::<f64>() / k.len() as f64;
        k.iter()
            .zip(&self.gram_col_means)
            .map(|(v, c)| v - row_mean - c + self.gram_mean)
            .collect()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let kc = self.centred_row(x);
        Ok(self
            .coefficients
            .iter()
            .map(|a| a.iter().zip(&kc).map(|(p, q)| p * q).sum())
            .collect())
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.project(r)).collect()
    }

    /// Projections of the training rows straight from the eigenvectors.
    pub fn fitted_projections(&self) -> Vec<Vec<f64>> {
        let n = self.train.len();
        (0..n)
            .map(|i| {
                self.coefficients
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a[i] * self.eigenvalues[k])
                    .collect()
            })
            .collect()
    }
}

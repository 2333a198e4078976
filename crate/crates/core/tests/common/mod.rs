//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numerical code.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Random fully connected model parameters `(pi, A, B)`.
pub fn random_params(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let pi = random_stochastic(rng, n);
    let a = (0..n).map(|_| random_stochastic(rng, n)).collect();
    let b = (0..n).map(|_| random_stochastic(rng, m)).collect();
    (pi, a, b)
}

/// Probability of `o` summed over every hidden path.
pub fn brute_likelihood(pi: &[f64], a: &[Vec<f64>], b: &[Vec<f64>], o: &[usize]) -> f64 {
    let n = pi.len();
    let t = o.len();
    let mut total = 0.0;
    for path in all_paths(n, t) {
        total += path_prob(pi, a, b, o, &path);
    }
    total
}

/// Most probable hidden path. Paths whose log-probability is within `tie`
/// of the maximum count as tied and the lexicographically first one wins.
pub fn brute_viterbi(pi: &[f64], a: &[Vec<f64>], b: &[Vec<f64>], o: &[usize], tie: f64) -> (Vec<usize>, f64) {
    let paths = all_paths(pi.len(), o.len());
    let logp: Vec<f64> = paths.iter().map(|path| path_prob(pi, a, b, o, path).ln()).collect();
    let best = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let k = (0..paths.len()).find(|&k| logp[k] >= best - tie).unwrap();
    (paths[k].clone(), best.exp())
}

fn path_prob(pi: &[f64], a: &[Vec<f64>], b: &[Vec<f64>], o: &[usize], path: &[usize]) -> f64 {
    let mut p = pi[path[0]] * b[path[0]][o[0]];
    for k in 1..o.len() {
        p *= a[path[k - 1]][path[k]] * b[path[k]][o[k]];
    }
    p
}

/// Every sequence in `0..n` of length `t`, lexicographic order.
pub fn all_paths(n: usize, t: usize) -> Vec<Vec<usize>> {
    let total = n.pow(t as u32);
    (0..total)
        .map(|mut code| {
            let mut path = vec![0; t];
            for k in (0..t).rev() {
                path[k] = code % n;
                code /= n;
            }
            path
        })
        .collect()
}

/// Direct evaluation of the ten phase statistics.
pub fn oracle_time_features(p: &[f64]) -> [f64; 10] {
    let n = p.len();
    if n == 0 {
        return [0.0; 10];
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = sorted[0];
    let hi = sorted[n - 1];
    let mut sum = 0.0;
    let mut sq = 0.0;
    for &x in p {
        sum += x;
        sq += x * x;
    }
    let mean = sum / n as f64;
    let rms = (sq / n as f64).sqrt();
    let mut var = 0.0;
    for &x in p {
        var += (x - mean) * (x - mean);
    }
    var /= n as f64;
    let mut sum_diff = 0.0;
    for k in 1..n {
        sum_diff += p[k] - p[k - 1];
    }
    let guard = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    [
        p[n - 1] - p[0],
        hi - lo,
        mean,
        rms,
        var,
        sum_diff,
        guard(var, (hi - lo) * (hi - lo)),
        guard(hi, rms),
        guard(rms, mean),
        guard(hi, mean),
    ]
}

/// Direct evaluation of the eight segment statistics.
pub fn oracle_value_features(t: &[f64], p: &[f64], res: f64) -> [f64; 8] {
    let n = p.len();
    if n == 0 {
        return [0.0; 8];
    }
    let med = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        }
    };
    let tmax = t.iter().cloned().fold(f64::MIN, f64::max);
    let pmax = p.iter().cloned().fold(f64::MIN, f64::max);
    let pmin = p.iter().cloned().fold(f64::MAX, f64::min);
    // mode: count bin centres, smallest centre among the most frequent
    let bins: Vec<i64> = p.iter().map(|x| (x / res).round() as i64).collect();
    let mut best_bin = i64::MAX;
    let mut best_count = 0;
    for &b in &bins {
        let c = bins.iter().filter(|&&x| x == b).count();
        if c > best_count || (c == best_count && b < best_bin) {
            best_bin = b;
            best_count = c;
        }
    }
    [
        tmax,
        p.iter().sum::<f64>() / n as f64,
        n as f64,
        pmax - pmin,
        med(p),
        pmax,
        med(t),
        best_bin as f64 * res,
    ]
}

/// Index of the half-open interval of `cuts` holding `x`.
pub fn interval(cuts: &[f64], x: f64) -> usize {
    cuts.iter().filter(|&&c| x >= c).count()
}

/// Principal scores of `x` from the eigenvectors of its sample covariance,
/// computed by a cyclic Jacobi rotation so no library solver is shared.
pub fn covariance_pca(x: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let m = x[0].len();
    let mean: Vec<f64> = (0..m).map(|k| x.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
    let xc: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect();
    let mut c = vec![vec![0.0; m]; m];
    for r in &xc {
        for i in 0..m {
            for j in 0..m {
                c[i][j] += r[i] * r[j] / n as f64;
            }
        }
    }
    let (vals, vecs) = jacobi_eigen(c);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    xc.iter()
        .map(|r| {
            order[..d]
                .iter()
                .map(|&k| (0..m).map(|i| r[i] * vecs[i][k]).sum())
                .collect()
        })
        .collect()
}

/// Eigen-decomposition of a symmetric matrix; eigenvectors are columns.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Largest absolute difference between two score matrices after flipping
/// each column of `b` to agree in sign with `a`.
pub fn max_dev_up_to_sign(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d = a[0].len();
    let mut worst: f64 = 0.0;
    for k in 0..d {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x[k] * y[k]).sum();
        let s = if dot < 0.0 { -1.0 } else { 1.0 };
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x[k] - s * y[k]).abs());
        }
    }
    worst
}

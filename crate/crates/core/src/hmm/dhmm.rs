use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete HMM `(pi, A, B)` with a transition mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dhmm {
    pub pi: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// `mask[i][j]` is false where the transition `i -> j` is forbidden.
    pub mask: Vec<Vec<bool>>,
}

/// Log-probability gap below which two Viterbi paths count as tied.
pub const VITERBI_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub tol: f64,
    /// Lower bound on every emission probability.
    pub emission_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            emission_floor: 1e-8,
        }
    }
}

/// Total log-likelihood before training and after each iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    pub initial: f64,
    pub curve: Vec<f64>,
    pub converged: bool,
}

impl EmTrace {
    pub fn iterations(&self) -> usize {
        self.curve.len()
    }

    /// Relative gain of each iteration over the previous value.
    pub fn relative_gains(&self) -> Vec<f64> {
        let mut prev = self.initial;
        self.curve
            .iter()
            .map(|&l| {
                let g = (l - prev) / prev.abs();
                prev = l;
                g
            })
            .collect()
    }
}

/// Projects a nonnegative weight vector onto the probability simplex with
/// every entry at least `floor`, maximizing `sum w_k ln p_k`. Entries whose
/// proportional share would fall below the floor are pinned to it.
pub fn floor_row(w: &[f64], floor: f64) -> Vec<f64> {
    let m = w.len();
    let mut pinned = vec![false; m];
    loop {
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let budget = 1.0 - floor * n_pinned as f64;
        let free: f64 = (0..m).filter(|&k| !pinned[k]).map(|k| w[k]).sum();
        let n_free = m - n_pinned;
        if free <= 0.0 {
            let share = budget / n_free as f64;
            return (0..m).map(|k| if pinned[k] { floor } else { share }).collect();
        }
        let lambda = budget / free;
        let mut changed = false;
        for k in 0..m {
            if !pinned[k] && lambda * w[k] < floor {
                pinned[k] = true;
                changed = true;
            }
        }
        if !changed {
            return (0..m).map(|k| if pinned[k] { floor } else { lambda * w[k] }).collect();
        }
    }
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
}

struct Stats {
    loglik: f64,
    pi: Vec<f64>,
    a_num: Vec<Vec<f64>>,
    a_den: Vec<f64>,
    b_num: Vec<Vec<f64>>,
    b_den: Vec<f64>,
    used: usize,
}

impl Dhmm {
    pub fn new(pi: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, mask: Vec<Vec<bool>>) -> Result<Self> {
        let m = Self { pi, a, b, mask };
        m.validate(1e-9)?;
        Ok(m)
    }

    /// Model whose mask allows every transition.
    pub fn unmasked(pi: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let n = pi.len();
        Self::new(pi, a, b, vec![vec![true; n]; n])
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.n_states();
        if n == 0 {
            return Err(Error::InvalidModel("model has no states".into()));
        }
        let m = self.n_symbols();
        if m == 0 {
            return Err(Error::InvalidModel("model has no symbols".into()));
        }
        let shape_ok = self.a.len() == n
            && self.b.len() == n
            && self.mask.len() == n
            && self.a.iter().all(|r| r.len() == n)
            && self.mask.iter().all(|r| r.len() == n)
            && self.b.iter().all(|r| r.len() == m);
        if !shape_ok {
            return Err(Error::InvalidModel("inconsistent pi/A/B/mask shapes".into()));
        }
        let stochastic = |r: &[f64]| r.iter().all(|&x| (0.0..=1.0).contains(&x)) && (r.iter().sum::<f64>() - 1.0).abs() <= tol;
        if !stochastic(&self.pi) {
            return Err(Error::InvalidModel("pi is not a distribution".into()));
        }
        for i in 0..n {
            if !stochastic(&self.a[i]) {
                return Err(Error::InvalidModel(format!("row {i} of A is not a distribution")));
            }
            if !stochastic(&self.b[i]) {
                return Err(Error::InvalidModel(format!("row {i} of B is not a distribution")));
            }
            for j in 0..n {
                if !self.mask[i][j] && self.a[i][j] != 0.0 {
                    return Err(Error::InvalidModel(format!("A[{i}][{j}] is nonzero but forbidden")));
                }
            }
        }
        Ok(())
    }

    fn check_symbols(&self, o: &[usize]) -> Result<()> {
        let m = self.n_symbols();
        match o.iter().find(|&&s| s >= m) {
            Some(&s) => Err(Error::SymbolOutOfRange { symbol: s, alphabet: m }),
            None => Ok(()),
        }
    }

    /// Normalized forward variables and per-step scale factors. Stops early
    /// (returning what it has) if the sequence is impossible.
    fn forward_scaled(&self, o: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.n_states();
        let mut alpha = Vec::with_capacity(o.len());
        let mut scales = Vec::with_capacity(o.len());
        let mut cur: Vec<f64> = (0..n).map(|i| self.pi[i] * self.b[i][o[0]]).collect();
        for t in 0..o.len() {
            if t > 0 {
                let prev: &Vec<f64> = &alpha[t - 1];
                cur = (0..n)
                    .map(|j| (0..n).map(|i| prev[i] * self.a[i][j]).sum::<f64>() * self.b[j][o[t]])
                    .collect();
            }
            let c: f64 = cur.iter().sum();
            scales.push(c);
            if c <= 0.0 {
                break;
            }
            alpha.push(cur.iter().map(|x| x / c).collect());
        }
        (alpha, scales)
    }

    /// `ln P(O | model)` by the scaled forward recursion; `-inf` if impossible.
    pub fn log_likelihood(&self, o: &[usize]) -> Result<f64> {
        if o.is_empty() {
            return Err(Error::Empty("observation sequence is empty".into()));
        }
        self.check_symbols(o)?;
        let (_, scales) = self.forward_scaled(o);
        Ok(scales.iter().map(|c| c.ln()).sum())
    }

    /// The same quantity through the scaled backward recursion.
    pub fn backward_log_likelihood(&self, o: &[usize]) -> Result<f64> {
        if o.is_empty() {
            return Err(Error::Empty("observation sequence is empty".into()));
        }
        self.check_symbols(o)?;
        let n = self.n_states();
        let mut beta = vec![1.0; n];
        let mut log_scale = 0.0;
        for t in (0..o.len() - 1).rev() {
            let next: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| self.a[i][j] * self.b[j][o[t + 1]] * beta[j]).sum())
                .collect();
            let d: f64 = next.iter().sum();
            if d <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            log_scale += d.ln();
            beta = next.into_iter().map(|x| x / d).collect();
        }
        let p: f64 = (0..n).map(|i| self.pi[i] * self.b[i][o[0]] * beta[i]).sum();
        Ok(p.ln() + log_scale)
    }

    /// Most probable state path and its log-probability. Among paths whose
    /// log-probabilities agree within `VITERBI_TIE_TOL` the lexicographically
    /// smallest is returned.
    pub fn viterbi(&self, o: &[usize]) -> Result<(Vec<usize>, f64)> {
        if o.is_empty() {
            return Err(Error::Empty("observation sequence is empty".into()));
        }
        self.check_symbols(o)?;
        let n = self.n_states();
        let len = o.len();
        let la: Vec<Vec<f64>> = self.a.iter().map(|r| r.iter().map(|x| x.ln()).collect()).collect();
        let lb = |j: usize, t: usize| self.b[j][o[t]].ln();
        // best log-probability of the suffix after time t, given state i at t
        let mut suffix = vec![vec![0.0; n]; len];
        for t in (0..len - 1).rev() {
            for i in 0..n {
                suffix[t][i] = (0..n)
                    .map(|j| la[i][j] + lb(j, t + 1) + suffix[t + 1][j])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        // Walk forward taking the first state that still allows a path within
        // VITERBI_TIE_TOL of the optimum, so paths that tie up to rounding
        // resolve to the lexicographically smallest one.
        let scores0: Vec<f64> = (0..n).map(|i| self.pi[i].ln() + lb(i, 0) + suffix[0][i]).collect();
        let total = scores0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = |scores: &[f64]| {
            if total == f64::NEG_INFINITY {
                return 0;
            }
            scores.iter().position(|&s| s >= total - VITERBI_TIE_TOL).unwrap_or(0)
        };
        let s0 = first(&scores0);
        let mut prefix = self.pi[s0].ln() + lb(s0, 0);
        let mut path = vec![s0];
        for t in 1..len {
            let prev = path[t - 1];
            let step: Vec<f64> = (0..n).map(|j| la[prev][j] + lb(j, t)).collect();
            let scores: Vec<f64> = (0..n).map(|j| prefix + step[j] + suffix[t][j]).collect();
            let s = first(&scores);
            prefix += step[s];
            path.push(s);
        }
        Ok((path, total))
    }

    fn accumulate(&self, seqs: &[Vec<usize>]) -> Stats {
        let n = self.n_states();
        let m = self.n_symbols();
        let mut st = Stats {
            loglik: 0.0,
            pi: vec![0.0; n],
            a_num: vec![vec![0.0; n]; n],
            a_den: vec![0.0; n],
            b_num: vec![vec![0.0; m]; n],
            b_den: vec![0.0; n],
            used: 0,
        };
        for o in seqs.iter().filter(|o| !o.is_empty()) {
            let (alpha, scales) = self.forward_scaled(o);
            let ll: f64 = scales.iter().map(|c| c.ln()).sum();
            st.loglik += ll;
            if !ll.is_finite() {
                continue;
            }
            st.used += 1;
            let len = o.len();
            let mut beta = vec![vec![1.0; n]; len];
            for t in (0..len - 1).rev() {
                for i in 0..n {
                    beta[t][i] = (0..n)
                        .map(|j| self.a[i][j] * self.b[j][o[t + 1]] * beta[t + 1][j])
                        .sum::<f64>()
                        / scales[t + 1];
                }
            }
            for t in 0..len {
                for i in 0..n {
                    let g = alpha[t][i] * beta[t][i];
                    if t == 0 {
                        st.pi[i] += g;
                    }
                    st.b_num[i][o[t]] += g;
                    st.b_den[i] += g;
                    if t + 1 < len {
                        st.a_den[i] += g;
                        for j in 0..n {
                            st.a_num[i][j] +=
                                alpha[t][i] * self.a[i][j] * self.b[j][o[t + 1]] * beta[t + 1][j] / scales[t + 1];
                        }
                    }
                }
            }
        }
        st
    }

    fn reestimate(&self, st: &Stats, floor: f64) -> Self {
        let mut next = self.clone();
        if st.used > 0 {
            next.pi = st.pi.clone();
            normalize(&mut next.pi);
        }
        for i in 0..self.n_states() {
            if st.a_den[i] > 0.0 {
                next.a[i] = st.a_num[i].clone();
                normalize(&mut next.a[i]);
            }
            if st.b_den[i] > 0.0 {
                next.b[i] = floor_row(&st.b_num[i], floor);
            }
        }
        next
    }

    /// Copy with every emission row projected onto the floored simplex.
    pub fn with_emission_floor(&self, floor: f64) -> Self {
        let mut m = self.clone();
        for row in &mut m.b {
            if row.iter().any(|&x| x < floor) {
                *row = floor_row(row, floor);
            }
        }
        m
    }

    /// Multi-sequence Baum-Welch. Rows without expected counts keep their
    /// previous values; forbidden transitions stay exactly zero.
    pub fn baum_welch(&self, seqs: &[Vec<usize>], opts: &EmOptions) -> Result<(Self, EmTrace)> {
        self.validate(1e-9)?;
        if seqs.iter().all(|o| o.is_empty()) {
            return Err(Error::Empty("no observations to train on".into()));
        }
        for o in seqs {
            self.check_symbols(o)?;
        }
        if !(opts.emission_floor >= 0.0 && opts.emission_floor * self.n_symbols() as f64 <= 1.0) {
            return Err(Error::Config("emission floor is incompatible with the alphabet size".into()));
        }
        let mut model = self.with_emission_floor(opts.emission_floor);
        let mut stats = model.accumulate(seqs);
        let initial = stats.loglik;
        let mut curve = Vec::new();
        let mut converged = false;
        let mut prev = initial;
        for _ in 0..opts.max_iter {
            if stats.used == 0 {
                break;
            }
            model = model.reestimate(&stats, opts.emission_floor);
            stats = model.accumulate(seqs);
            curve.push(stats.loglik);
            let gain = (stats.loglik - prev) / prev.abs();
            prev = stats.loglik;
            if !(gain >= opts.tol) {
                converged = true;
                break;
            }
        }
        Ok((
            model,
            EmTrace {
                initial,
                curve,
                converged,
            },
        ))
    }
}

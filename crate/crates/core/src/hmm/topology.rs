use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dhmm::{floor_row, Dhmm};
use crate::error::{Error, Result};

/// Allowed-transition patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    /// Normal (state 0), `g` degradation states, absorbing fault (`g + 1`).
    /// Normal and degradations communicate freely, only degradations reach
    /// the fault.
    Hybrid { g: usize },
    Ergodic { n: usize },
    /// Self-loops and single forward steps.
    LeftRight { n: usize },
}

impl Topology {
    pub fn n_states(&self) -> usize {
        match *self {
            Topology::Hybrid { g } => g + 2,
            Topology::Ergodic { n } | Topology::LeftRight { n } => n,
        }
    }

    pub fn mask(&self) -> Vec<Vec<bool>> {
        let n = self.n_states();
        let mut mask = vec![vec![false; n]; n];
        for (i, row) in mask.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = match *self {
                    Topology::Hybrid { g } => {
                        let fault = g + 1;
                        if i == fault {
                            j == fault
                        } else if i == 0 {
                            j != fault
                        } else {
                            true
                        }
                    }
                    Topology::Ergodic { .. } => true,
                    Topology::LeftRight { .. } => j == i || j == i + 1,
                };
            }
        }
        mask
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Topology::Hybrid { g } if g == 0 => Err(Error::Config("hybrid topology needs at least one degradation state".into())),
            Topology::Ergodic { n } | Topology::LeftRight { n } if n == 0 => Err(Error::Config("topology needs at least one state".into())),
            _ => Ok(()),
        }
    }
}

/// Random stochastic `A` on the mask, random `B` above `floor`, and the
/// given initial distribution.
pub fn build_model(topology: &Topology, m: usize, pi: Vec<f64>, floor: f64, seed: u64) -> Result<Dhmm> {
    topology.validate()?;
    if m == 0 {
        return Err(Error::Config("alphabet must have at least one symbol".into()));
    }
    let n = topology.n_states();
    let mask = topology.mask();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = mask
        .iter()
        .map(|row| {
            let w: Vec<f64> = row.iter().map(|&ok| if ok { 0.05 + rng.random::<f64>() } else { 0.0 }).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let b = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..m).map(|_| 0.05 + rng.random::<f64>()).collect();
            floor_row(&w, floor)
        })
        .collect();
    Dhmm::new(pi, a, b, mask)
}

/// Hybrid model for `g` degradation states starting in the normal state.
pub fn build_hybrid(g: usize, m: usize, seed: u64) -> Result<Dhmm> {
    let mut pi = vec![0.0; g + 2];
    pi[0] = 1.0;
    build_model(&Topology::Hybrid { g }, m, pi, 1e-8, seed)
}

/// State distribution after `t` transitions, `pi A^t`.
pub fn propagate(model: &Dhmm, t: usize) -> Vec<f64> {
    let n = model.n_states();
    let mut p = model.pi.clone();
    for _ in 0..t {
        p = (0..n).map(|j| (0..n).map(|i| p[i] * model.a[i][j]).sum()).collect();
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hybrid_zero_pattern() {
        let m = build_hybrid(3, 4, 9).unwrap();
        assert_eq!(m.n_states(), 5);
        assert_eq!(m.a[0][4], 0.0);
        assert_eq!(m.a[4], vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        for i in 0..4 {
            for j in 0..4 {
                assert!(m.a[i][j] > 0.0);
            }
        }
        for row in &m.a {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smallest_hybrid_is_a_three_state_chain() {
        let mask = Topology::Hybrid { g: 1 }.mask();
        assert_eq!(
            mask,
            vec![vec![true, true, false], vec![true, true, true], vec![false, false, true]]
        );
    }

    #[test]
    fn propagation_identities() {
        let mut m = build_hybrid(2, 3, 1).unwrap();
        assert_eq!(propagate(&m, 0), m.pi);
        m.a = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        assert_eq!(propagate(&m, 17), m.pi);
    }

    #[test]
    fn left_right_mask() {
        let mask = Topology::LeftRight { n: 3 }.mask();
        assert!(mask[0][1] && !mask[0][2] && !mask[2][1] && mask[2][2]);
    }
}

use serde::{Deserialize, Serialize};

use super::dhmm::{Dhmm, EmOptions, EmTrace};
use super::topology::{build_hybrid, Topology};
use super::vq::VqCodebook;
use crate::derive_seed;
use crate::error::{Error, Result};

/// Index windows of length `len` over `n` items, starting every `stride`
/// items and wrapping around the end, so every item starts one window when
/// `stride == 1`.
pub fn windows(n: usize, len: usize, stride: usize) -> Vec<Vec<usize>> {
    if n == 0 || len == 0 || stride == 0 {
        return Vec::new();
    }
    (0..n)
        .step_by(stride)
        .map(|s| (0..len).map(|i| (s + i) % n).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateModel {
    pub label: String,
    pub model: Dhmm,
    pub trace: EmTrace,
}

/// One trained model per health state, ordered from least to most severe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub name: String,
    /// Fault that the degradation states of this ensemble evolve toward.
    pub fault: String,
    pub topology: Topology,
    pub models: Vec<StateModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    pub label: String,
    pub index: usize,
    pub log_likelihoods: Vec<f64>,
}

impl Ensemble {
    /// Trains one hybrid model per `(label, sequences)` entry. Entries are
    /// ordered by severity: normal first, then degradations, then the fault.
    pub fn train(
        name: &str,
        fault: &str,
        states: &[(String, Vec<Vec<usize>>)],
        g: usize,
        m: usize,
        em: &EmOptions,
        seed: u64,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty(format!("ensemble `{name}` has no health states")));
        }
        let mut models = Vec::with_capacity(states.len());
        for (s, (label, seqs)) in states.iter().enumerate() {
            if models.iter().any(|sm: &StateModel| &sm.label == label) {
                return Err(Error::Config(format!("duplicate health-state label `{label}`")));
            }
            if seqs.iter().all(|o| o.is_empty()) {
                return Err(Error::Empty(format!("health state `{label}` has no training sequences")));
            }
            let init = build_hybrid(g, m, derive_seed(seed, s as u64))?;
            let (model, trace) = init.baum_welch(seqs, em)?;
            log::debug!(
                "{name}/{label}: {} EM iterations, log-likelihood {:.3} -> {:.3}",
                trace.iterations(),
                trace.initial,
                trace.curve.last().copied().unwrap_or(trace.initial)
            );
            models.push(StateModel {
                label: label.clone(),
                model,
                trace,
            });
        }
        Ok(Self {
            name: name.to_string(),
            fault: fault.to_string(),
            topology: Topology::Hybrid { g },
            models,
        })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.label.as_str()).collect()
    }

    /// Maximum-likelihood label; ties go to the less severe state.
    pub fn recognize(&self, o: &[usize]) -> Result<Recognition> {
        let lls = self
            .models
            .iter()
            .map(|m| m.model.log_likelihood(o))
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (k, &l) in lls.iter().enumerate() {
            if l > lls[best] {
                best = k;
            }
        }
        Ok(Recognition {
            label: self.models[best].label.clone(),
            index: best,
            log_likelihoods: lls,
        })
    }
}

/// Ensembles sharing one codebook, plus the windowing used to build sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBundle {
    pub schema_version: u32,
    pub codebook: VqCodebook,
    pub window: usize,
    pub ensembles: Vec<Ensemble>,
}

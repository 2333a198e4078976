//! Discrete hidden Markov models with a hybrid normal/degradation/fault
//! topology, k-means vector quantization and per-state model ensembles.

mod dhmm;
mod ensemble;
mod topology;
mod vq;

pub use dhmm::{floor_row, Dhmm, EmOptions, EmTrace, VITERBI_TIE_TOL};
pub use ensemble::{windows, Ensemble, EnsembleBundle, Recognition, StateModel};
pub use topology::{build_hybrid, build_model, propagate, Topology};
pub use vq::{fit_codebook, VqCodebook};

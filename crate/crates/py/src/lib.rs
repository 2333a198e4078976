//! Python bindings: feature extraction, synthetic traces, discrete HMM
//! scoring, the offline run and online assessment.

use std::path::PathBuf;

use pdakit_core::features::{assemble, registry, FeatureOptions};
use pdakit_core::hmm::{Dhmm, EnsembleBundle};
use pdakit_core::io;
use pdakit_core::pipeline::{self, assess_signals, learn, synthetic_corpora, write_artifacts, CorpusPlan, PipelineConfig, ReductionModel};
use pdakit_core::signal::{PhaseConfig, PowerSignal, SegmentConfig};
use pdakit_core::synth::{generate, SynthLibrary, SynthStateSpec};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(pdakit, PdakitError, PyException);

/// `(id, t, p)` of one operation.
type Trace = (String, Vec<f64>, Vec<f64>);

fn err(e: pdakit_core::Error) -> PyErr {
    match e {
        pdakit_core::Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PdakitError::new_err(e.to_string()),
    }
}

fn configs(phases: Option<Vec<f64>>, segments: Option<Vec<f64>>) -> PyResult<(PhaseConfig, SegmentConfig)> {
    let pc = match phases {
        Some(b) => PhaseConfig::new(b).map_err(err)?,
        None => PhaseConfig::default(),
    };
    let sc = match segments {
        Some(b) => SegmentConfig::new(b).map_err(err)?,
        None => SegmentConfig::default(),
    };
    Ok((pc, sc))
}

/// Feature names in column order.
#[pyfunction]
#[pyo3(signature = (phases=None, segments=None))]
fn feature_symbols(phases: Option<Vec<f64>>, segments: Option<Vec<f64>>) -> PyResult<Vec<String>> {
    let (pc, sc) = configs(phases, segments)?;
    Ok(registry(pc.count(), sc.count()))
}

/// Feature vector of one trace given its time stamps (s) and power (kW).
#[pyfunction]
#[pyo3(signature = (t, p, phases=None, segments=None))]
fn extract_features(t: Vec<f64>, p: Vec<f64>, phases: Option<Vec<f64>>, segments: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let (pc, sc) = configs(phases, segments)?;
    let sig = PowerSignal::new("trace", t, p).map_err(err)?;
    Ok(assemble(&sig, &pc, &sc, &FeatureOptions::default()).map_err(err)?.values)
}

fn find_spec(lib: &SynthLibrary, state: &str) -> PyResult<SynthStateSpec> {
    if lib.normal.name == state {
        return Ok(lib.normal.clone());
    }
    let ladders = lib.ladder_specs().map_err(err)?;
    lib.faults
        .iter()
        .chain(ladders.iter().flatten())
        .find(|s| s.name == state)
        .cloned()
        .ok_or_else(|| PyValueError::new_err(format!("unknown state {state}")))
}

/// Synthetic traces of one built-in state (for example "NS", "FS2" or
/// "FS2_L3"), or of a state spec given as JSON. Returns `(id, t, p)` tuples.
#[pyfunction]
#[pyo3(signature = (state="NS", n=10, seed=0, spec_json=None))]
fn simulate(state: &str, n: usize, seed: u64, spec_json: Option<&str>) -> PyResult<Vec<Trace>> {
    let spec = match spec_json {
        Some(text) => serde_json::from_str::<SynthStateSpec>(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => find_spec(&SynthLibrary::default(), state)?,
    };
    let label = spec.name.clone();
    Ok(generate(&spec, n, seed, &label)
        .map_err(err)?
        .into_iter()
        .map(|s| (s.sample_id, s.t, s.p))
        .collect())
}

fn model(pi: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<Dhmm> {
    Dhmm::unmasked(pi, a, b).map_err(err)
}

/// Log-likelihood of a symbol sequence under a discrete HMM.
#[pyfunction]
fn log_likelihood(pi: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, obs: Vec<usize>) -> PyResult<f64> {
    model(pi, a, b)?.log_likelihood(&obs).map_err(err)
}

/// Most probable state path and its log-probability.
#[pyfunction]
fn viterbi(pi: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, obs: Vec<usize>) -> PyResult<(Vec<usize>, f64)> {
    model(pi, a, b)?.viterbi(&obs).map_err(err)
}

/// Offline run on the built-in synthetic corpus; artifacts go to `out_dir`.
/// Returns the state groups as `(fault, members)` pairs, mildest first.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=7))]
fn learn_synthetic(py: Python<'_>, out_dir: PathBuf, seed: u64) -> PyResult<Vec<(String, Vec<String>)>> {
    py.detach(|| {
        let cfg = PipelineConfig {
            seed,
            ..PipelineConfig::default()
        };
        let corpora = synthetic_corpora(&SynthLibrary::default(), &CorpusPlan::default(), seed)?;
        let out = learn(&cfg, &corpora)?;
        write_artifacts(&out_dir, &out)?;
        Ok(out.validation.report.groups.iter().map(|g| (g.fault.clone(), g.members.clone())).collect())
    })
    .map_err(err)
}

/// Classification of one window of operations.
#[pyclass(get_all, frozen)]
struct Verdict {
    window: usize,
    first_sample: String,
    last_sample: String,
    ensemble: String,
    label: String,
    predicted_fault: Option<String>,
    log_likelihoods: Vec<(String, f64)>,
}

#[pymethods]
impl Verdict {
    fn __repr__(&self) -> String {
        format!(
            "Verdict(window={}, ensemble={}, label={}, predicted_fault={:?})",
            self.window, self.ensemble, self.label, self.predicted_fault
        )
    }
}

/// Online assessor loaded from a run directory.
#[pyclass(frozen)]
struct Assessor {
    bundle: EnsembleBundle,
    reduction: ReductionModel,
}

#[pymethods]
impl Assessor {
    #[new]
    fn new(run_dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            bundle: io::load_json(&run_dir.join(pipeline::paths::ENSEMBLE)).map_err(err)?,
            reduction: io::load_json(&run_dir.join(pipeline::paths::KPCA)).map_err(err)?,
        })
    }

    #[getter]
    fn window(&self) -> usize {
        self.bundle.window
    }

    /// Classifies consecutive operations given as `(id, t, p)` tuples.
    fn assess(&self, py: Python<'_>, operations: Vec<Trace>) -> PyResult<Vec<Verdict>> {
        let signals = operations
            .into_iter()
            .map(|(id, t, p)| PowerSignal::new(id, t, p))
            .collect::<pdakit_core::Result<Vec<_>>>()
            .map_err(err)?;
        let verdicts = py.detach(|| assess_signals(&self.bundle, &self.reduction, &signals)).map_err(err)?;
        Ok(verdicts
            .into_iter()
            .map(|v| Verdict {
                window: v.window,
                first_sample: v.first_sample,
                last_sample: v.last_sample,
                ensemble: v.ensemble,
                label: v.label,
                predicted_fault: v.predicted_fault,
                log_likelihoods: v.log_likelihoods,
            })
            .collect())
    }
}

#[pymodule]
fn pdakit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PdakitError", m.py().get_type::<PdakitError>())?;
    m.add_function(wrap_pyfunction!(feature_symbols, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(viterbi, m)?)?;
    m.add_function(wrap_pyfunction!(learn_synthetic, m)?)?;
    m.add_class::<Verdict>()?;
    m.add_class::<Assessor>()?;
    Ok(())
}

//! Offline learning and online assessment.
//!
//! Learning runs feature extraction, selection, reduction, multi-grid SOM
//! clustering, latent-state mining, validity checks against fault profiles
//! and finally one hybrid DHMM ensemble per relevant state group. Every
//! intermediate result is kept in [`LearnOutput`] and can be written to disk
//! with [`write_artifacts`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assess::{determine_groups, hi_profiles, match_normal, AssessThresholds, GroupReport, HiScale, ProfileSet, StateKind};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureOptions, MinMaxScaler};
use crate::hmm::{fit_codebook, windows, EmOptions, Ensemble, EnsembleBundle};
use crate::io;
use crate::kpca::{KpcaConfig, KpcaModel};
use crate::select::{build_hi_set, select_features, HiSet, LabeledFaultSet, SelectOptions, Selection};
use crate::signal::{PhaseConfig, PowerSignal, SegmentConfig};
use crate::som::{cluster_sequences, mine_latent_states, CandidateStateSet, ClusterSequenceSet, MiningConfig, SomConfig, SomModel};
use crate::synth::{generate, SynthLibrary};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSettings {
    pub phases: PhaseConfig,
    pub segments: SegmentConfig,
    pub options: FeatureOptions,
}

impl FeatureSettings {
    pub fn extract(&self, signals: &[PowerSignal]) -> Result<FeatureMatrix> {
        FeatureMatrix::extract(signals, &self.phases, &self.segments, &self.options)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomSettings {
    pub sn: usize,
    pub train: SomConfig,
}

impl Default for SomSettings {
    fn default() -> Self {
        Self {
            sn: 4,
            train: SomConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmSettings {
    /// Codebook size (alphabet of every model).
    pub k: usize,
    pub kmeans_max_iter: usize,
    /// Operations per observation sequence.
    pub window: usize,
    pub stride: usize,
    pub test_stride: usize,
    /// Share of each state's samples used for training.
    pub train_fraction: f64,
    pub em: EmOptions,
}

impl Default for HmmSettings {
    fn default() -> Self {
        Self {
            k: 10,
            kmeans_max_iter: 300,
            window: 20,
            stride: 5,
            test_stride: 1,
            train_fraction: 0.75,
            em: EmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub normal_label: String,
    /// Leading samples per class forming the standard set used for
    /// selection and for fitting the reduction.
    pub standard_per_class: usize,
    pub features: FeatureSettings,
    pub selection: SelectOptions,
    pub kpca: KpcaConfig,
    pub som: SomSettings,
    pub mining: MiningConfig,
    pub assess: AssessThresholds,
    pub hmm: HmmSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            seed: 7,
            normal_label: "NS".into(),
            standard_per_class: 20,
            features: FeatureSettings::default(),
            selection: SelectOptions::default(),
            kpca: KpcaConfig::default(),
            som: SomSettings::default(),
            mining: MiningConfig::default(),
            assess: AssessThresholds::default(),
            hmm: HmmSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = io::load_json(path).map_err(|e| match e {
            Error::Json { path, source } => Error::Config(format!("{}: {source}", path.display())),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.features.phases.validate()?;
        self.features.segments.validate()?;
        if !(self.features.options.mode_resolution_kw > 0.0) {
            return bad("mode resolution must be positive");
        }
        if !(self.selection.threshold_ratio > 0.0 && self.selection.threshold_ratio <= 1.0) {
            return bad("selection threshold ratio must lie in (0, 1]");
        }
        if !(self.selection.redundancy_cutoff > 0.0 && self.selection.redundancy_cutoff <= 1.0) {
            return bad("redundancy cutoff must lie in (0, 1]");
        }
        if self.standard_per_class == 0 {
            return bad("standard set needs at least one sample per class");
        }
        if self.som.sn == 0 || self.som.train.iterations == 0 || self.som.train.epochs == 0 {
            return bad("SOM grid, iterations and epochs must be positive");
        }
        if !(self.som.train.initial_learning_rate > 0.0 && self.som.train.initial_learning_rate < 1.0) {
            return bad("SOM learning rate must lie in (0, 1)");
        }
        if !(0.0..=100.0).contains(&self.mining.merge_percentile) {
            return bad("merge percentile must lie in [0, 100]");
        }
        let a = &self.assess;
        if !(a.tau >= 0.0 && a.delta > 0.0 && a.theta > 0.0 && a.theta <= 1.0 && a.epsilon >= 0.0) {
            return bad("assessment thresholds out of range");
        }
        let h = &self.hmm;
        if h.k == 0 || h.window == 0 || h.stride == 0 || h.test_stride == 0 || h.em.max_iter == 0 {
            return bad("k, window, strides and EM iterations must be positive");
        }
        if !(h.train_fraction > 0.0 && h.train_fraction < 1.0) {
            return bad("train fraction must lie in (0, 1)");
        }
        if !(h.em.tol >= 0.0) || !(h.em.emission_floor >= 0.0 && h.em.emission_floor * h.k as f64 <= 1.0) {
            return bad("EM tolerance or emission floor out of range");
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        io::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Input corpora: normal operations, unlabeled non-fault operations to mine,
/// and labeled fault archetypes.
#[derive(Debug, Clone, Default)]
pub struct Corpora {
    pub normal: Vec<PowerSignal>,
    pub nonfault: Vec<PowerSignal>,
    pub faults: Vec<PowerSignal>,
}

/// Sample counts for [`synthetic_corpora`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusPlan {
    pub normal: usize,
    pub per_fault: usize,
    /// Normal operations mixed into the non-fault corpus.
    pub nonfault_normal: usize,
    pub per_ladder_step: usize,
}

impl Default for CorpusPlan {
    fn default() -> Self {
        Self {
            normal: 100,
            per_fault: 30,
            nonfault_normal: 150,
            per_ladder_step: 100,
        }
    }
}

/// Generates all three corpora from a state library. Non-fault samples carry
/// their true state (`NS` or `<fault>_L<k>`) as label for later scoring.
pub fn synthetic_corpora(lib: &SynthLibrary, plan: &CorpusPlan, seed: u64) -> Result<Corpora> {
    let normal = generate(&lib.normal, plan.normal, derive_seed(seed, 1), &lib.normal.name)?;
    let mut faults = Vec::new();
    for (k, f) in lib.faults.iter().enumerate() {
        faults.extend(generate(f, plan.per_fault, derive_seed(seed, 10 + k as u64), &f.name)?);
    }
    let mut nonfault = generate(&lib.normal, plan.nonfault_normal, derive_seed(seed, 2), &lib.normal.name)?;
    for (l, steps) in lib.ladder_specs()?.iter().enumerate() {
        for (k, spec) in steps.iter().enumerate() {
            let stream = 100 + 10 * l as u64 + k as u64;
            nonfault.extend(generate(spec, plan.per_ladder_step, derive_seed(seed, stream), &spec.name)?);
        }
    }
    for s in &mut nonfault {
        s.sample_id = format!("nf_{}", s.sample_id);
    }
    Ok(Corpora {
        normal,
        nonfault,
        faults,
    })
}

/// First `per_class` rows of each label, in order of appearance.
pub fn standard_subset(m: &FeatureMatrix, per_class: usize) -> FeatureMatrix {
    let mut seen: BTreeMap<Option<String>, usize> = BTreeMap::new();
    let rows: Vec<usize> = (0..m.n_rows())
        .filter(|&i| {
            let c = seen.entry(m.labels[i].clone()).or_insert(0);
            *c += 1;
            *c <= per_class
        })
        .collect();
    m.subset(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub schema_version: u32,
    pub selection: Selection,
    pub hi: HiSet,
}

/// Selection on the standard set; the health-index set uses every sample.
pub fn select_stage(faults: &FeatureMatrix, normal: &FeatureMatrix, cfg: &PipelineConfig) -> Result<SelectionArtifact> {
    let std_faults = LabeledFaultSet::from_labels(standard_subset(faults, cfg.standard_per_class))?;
    let std_normal = standard_subset(normal, cfg.standard_per_class);
    let selection = select_features(&std_faults, &std_normal, &cfg.selection)?;
    let all_faults = LabeledFaultSet::from_labels(faults.clone())?;
    let hi = build_hi_set(&all_faults, normal, &cfg.normal_label)?;
    Ok(SelectionArtifact {
        schema_version: crate::SCHEMA_VERSION,
        selection,
        hi,
    })
}

/// Where named columns sit in `m`: the given positions when the names agree
/// there, otherwise found by name.
fn locate_columns(dims: &[usize], symbols: &[String], m: &FeatureMatrix) -> Result<Vec<usize>> {
    if dims.iter().zip(symbols).all(|(&d, s)| m.symbols.get(d) == Some(s)) {
        return Ok(dims.to_vec());
    }
    symbols
        .iter()
        .map(|s| m.symbols.iter().position(|x| x == s).ok_or_else(|| Error::MissingFeature(s.clone())))
        .collect()
}

/// Selected columns, min-max scaling and kernel PCA, applied in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionModel {
    pub schema_version: u32,
    pub dims: Vec<usize>,
    pub symbols: Vec<String>,
    pub scaler: MinMaxScaler,
    pub kpca: KpcaModel,
    pub features: FeatureSettings,
}

impl ReductionModel {
    pub fn fit(reference: &FeatureMatrix, selection: &Selection, kpca: &KpcaConfig, features: &FeatureSettings) -> Result<Self> {
        let sel = reference.select_columns(&locate_columns(&selection.dims, &selection.symbols, reference)?)?;
        let scaler = MinMaxScaler::fit(&sel)?;
        let (scaled, _) = scaler.transform(&sel)?;
        let kpca = KpcaModel::fit(&scaled.rows, kpca)?;
        Ok(Self {
            schema_version: crate::SCHEMA_VERSION,
            dims: selection.dims.clone(),
            symbols: selection.symbols.clone(),
            scaler,
            kpca,
            features: features.clone(),
        })
    }

    pub fn reduce(&self, m: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        let sel = m.select_columns(&locate_columns(&self.dims, &self.symbols, m)?)?;
        let (scaled, _) = self.scaler.transform(&sel)?;
        self.kpca.transform(&scaled.rows)
    }

    pub fn reduce_signals(&self, signals: &[PowerSignal]) -> Result<Vec<Vec<f64>>> {
        self.reduce(&self.features.extract(signals)?)
    }

    pub fn output_symbols(&self) -> Vec<String> {
        (1..=self.kpca.d).map(|k| format!("pc{k}")).collect()
    }
}

/// Mines latent states from the reduced non-fault rows, dropping states whose
/// health-index profile matches normal operation.
#[allow(clippy::too_many_arguments)]
pub fn mine_stage(
    seqs: &ClusterSequenceSet,
    models: &[SomModel],
    nonfault: &FeatureMatrix,
    faults: &FeatureMatrix,
    normal: &FeatureMatrix,
    hi: &HiSet,
    cfg: &PipelineConfig,
) -> Result<CandidateStateSet> {
    let scale = HiScale::fit(&[nonfault, faults, normal], hi)?;
    let all: Vec<usize> = (0..normal.n_rows()).collect();
    let normal_p = scale.profile(normal, &all, &cfg.normal_label, StateKind::Normal)?;
    let eps = cfg.assess.epsilon;
    let mut is_normal = |rows: &[usize]| -> Result<bool> {
        let p = scale.profile(nonfault, rows, "candidate", StateKind::Latent)?;
        Ok(match_normal(&p, &normal_p, eps))
    };
    mine_latent_states(seqs, models, &cfg.mining, &mut is_normal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationArtifact {
    pub schema_version: u32,
    pub profiles: ProfileSet,
    pub report: GroupReport,
}

/// Profiles on the union of candidate, fault and normal sets, then fault
/// assignment and severity ranking.
pub fn validate_stage(
    nonfault: &FeatureMatrix,
    candidates: &CandidateStateSet,
    faults: &FeatureMatrix,
    normal: &FeatureMatrix,
    hi: &HiSet,
    cfg: &PipelineConfig,
) -> Result<ValidationArtifact> {
    let mut rows = Vec::with_capacity(candidates.total());
    let mut states = Vec::with_capacity(candidates.states.len());
    for s in &candidates.states {
        let start = rows.len();
        rows.extend(&s.members);
        states.push((s.id.clone(), (start..rows.len()).collect::<Vec<_>>()));
    }
    let candidate = nonfault.subset(&rows);
    let fault_set = LabeledFaultSet::from_labels(faults.clone())?;
    let profiles = hi_profiles(&candidate, &states, &fault_set, normal, &cfg.normal_label, hi)?;
    let report = determine_groups(&profiles, &cfg.assess)?;
    Ok(ValidationArtifact {
        schema_version: crate::SCHEMA_VERSION,
        profiles,
        report,
    })
}

/// Sample ids used for training and testing one health state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Reduced rows and sample ids of one health state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateData {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEvaluation {
    pub ensemble: String,
    pub labels: Vec<String>,
    /// `confusion[true][predicted]` over held-out windows.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub bundle: EnsembleBundle,
    pub evaluation: Vec<EnsembleEvaluation>,
    pub splits: BTreeMap<String, StateSplit>,
}

fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * (1.0 - train_fraction)).floor() as usize;
    let test = idx.split_off(n - n_test);
    (idx, test)
}

/// Splits every state, fits one shared codebook on all training rows,
/// trains an ensemble per group (`[normal, members..., fault]`) and scores it
/// on the held-out windows.
pub fn model_stage(groups: &GroupReport, data: &BTreeMap<String, StateData>, cfg: &PipelineConfig) -> Result<ModelArtifact> {
    if groups.groups.is_empty() {
        return Err(Error::Empty("no relevant state group to model".into()));
    }
    let h = &cfg.hmm;
    let mut used: Vec<&str> = vec![cfg.normal_label.as_str()];
    for g in &groups.groups {
        used.extend(g.members.iter().map(String::as_str));
        used.push(&g.fault);
    }
    used.sort_unstable();
    used.dedup();

    let mut splits = BTreeMap::new();
    let mut train_rows: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    let mut test_rows: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for (s, &label) in used.iter().enumerate() {
        let d = data
            .get(label)
            .ok_or_else(|| Error::Empty(format!("no data for health state `{label}`")))?;
        let (tr, te) = split_indices(d.rows.len(), h.train_fraction, derive_seed(cfg.seed, 500 + s as u64));
        if tr.is_empty() || te.is_empty() {
            return Err(Error::Empty(format!(
                "health state `{label}` has {} samples, too few to split",
                d.rows.len()
            )));
        }
        splits.insert(
            label.to_string(),
            StateSplit {
                train: tr.iter().map(|&i| d.ids[i].clone()).collect(),
                test: te.iter().map(|&i| d.ids[i].clone()).collect(),
            },
        );
        train_rows.insert(label, tr.iter().map(|&i| d.rows[i].clone()).collect());
        test_rows.insert(label, te.iter().map(|&i| d.rows[i].clone()).collect());
    }

    let pooled: Vec<Vec<f64>> = train_rows.values().flatten().cloned().collect();
    let codebook = fit_codebook(&pooled, h.k, h.kmeans_max_iter, derive_seed(cfg.seed, 600))?;
    let to_seqs = |rows: &[Vec<f64>], stride: usize| -> Result<Vec<Vec<usize>>> {
        let sym = codebook.quantize(rows)?;
        Ok(windows(sym.len(), h.window, stride)
            .into_iter()
            .map(|w| w.into_iter().map(|i| sym[i]).collect())
            .collect())
    };

    let mut ensembles = Vec::new();
    let mut evaluation = Vec::new();
    for (gi, g) in groups.groups.iter().enumerate() {
        let name = format!("G{}", gi + 1);
        let mut labels = vec![cfg.normal_label.clone()];
        labels.extend(g.members.iter().cloned());
        labels.push(g.fault.clone());
        let states = labels
            .iter()
            .map(|l| Ok((l.clone(), to_seqs(&train_rows[l.as_str()], h.stride)?)))
            .collect::<Result<Vec<_>>>()?;
        let ens = Ensemble::train(
            &name,
            &g.fault,
            &states,
            g.members.len(),
            h.k,
            &h.em,
            derive_seed(cfg.seed, 700 + gi as u64),
        )?;
        let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
        for (t, l) in labels.iter().enumerate() {
            for o in to_seqs(&test_rows[l.as_str()], h.test_stride)? {
                confusion[t][ens.recognize(&o)?.index] += 1;
            }
        }
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..labels.len()).map(|i| confusion[i][i]).sum();
        evaluation.push(EnsembleEvaluation {
            ensemble: name,
            labels,
            confusion,
            accuracy: correct as f64 / total as f64,
        });
        ensembles.push(ens);
    }
    Ok(ModelArtifact {
        bundle: EnsembleBundle {
            schema_version: crate::SCHEMA_VERSION,
            codebook,
            window: h.window,
            ensembles,
        },
        evaluation,
        splits,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSets {
    pub normal: FeatureMatrix,
    pub nonfault: FeatureMatrix,
    pub faults: FeatureMatrix,
}

/// Everything produced by [`learn`].
#[derive(Debug, Clone)]
pub struct LearnOutput {
    pub config: PipelineConfig,
    pub input_hashes: BTreeMap<String, String>,
    pub features: FeatureSets,
    pub selection: SelectionArtifact,
    pub reduction: ReductionModel,
    pub reduced_nonfault: Vec<Vec<f64>>,
    pub sequences: ClusterSequenceSet,
    pub soms: Vec<SomModel>,
    pub candidates: CandidateStateSet,
    pub validation: ValidationArtifact,
    pub model: ModelArtifact,
    pub timings_ms: BTreeMap<String, u128>,
}

fn corpus_hash(signals: &[PowerSignal]) -> String {
    io::sha256_hex(serde_json::to_string(signals).expect("signals serialize").as_bytes())
}

/// Runs the offline path. Failures are wrapped with the name of the stage.
pub fn learn(cfg: &PipelineConfig, corpora: &Corpora) -> Result<LearnOutput> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, u128>| {
        timings.insert(name.to_string(), clock.elapsed().as_millis());
        clock = Instant::now();
    };

    let features = (|| -> Result<FeatureSets> {
        if corpora.normal.is_empty() || corpora.faults.is_empty() {
            return Err(Error::Empty("normal and fault corpora must be nonempty".into()));
        }
        if corpora.faults.iter().any(|s| s.label.is_none()) {
            return Err(Error::Empty("every fault sample needs a label".into()));
        }
        Ok(FeatureSets {
            normal: cfg.features.extract(&corpora.normal)?,
            nonfault: cfg.features.extract(&corpora.nonfault)?,
            faults: cfg.features.extract(&corpora.faults)?,
        })
    })()
    .map_err(|e| e.in_stage("features"))?;
    lap("features", &mut timings);

    let selection = select_stage(&features.faults, &features.normal, cfg).map_err(|e| e.in_stage("select"))?;
    let reduction = (|| {
        let reference = FeatureMatrix::concat(&[
            &standard_subset(&features.faults, cfg.standard_per_class),
            &standard_subset(&features.normal, cfg.standard_per_class),
        ])?;
        ReductionModel::fit(&reference, &selection.selection, &cfg.kpca, &cfg.features)
    })()
    .map_err(|e| e.in_stage("reduce"))?;
    lap("select_reduce", &mut timings);

    let (reduced_nonfault, sequences, soms) = (|| {
        if features.nonfault.is_empty() {
            return Err(Error::Empty("non-fault corpus is empty".into()));
        }
        let reduced = reduction.reduce(&features.nonfault)?;
        let (seqs, soms) = cluster_sequences(&reduced, cfg.som.sn, &cfg.som.train, derive_seed(cfg.seed, 300))?;
        Ok((reduced, seqs, soms))
    })()
    .map_err(|e| e.in_stage("cluster"))?;
    lap("cluster", &mut timings);

    let candidates = mine_stage(
        &sequences,
        &soms,
        &features.nonfault,
        &features.faults,
        &features.normal,
        &selection.hi,
        cfg,
    )
    .map_err(|e| e.in_stage("mine"))?;
    let validation = validate_stage(
        &features.nonfault,
        &candidates,
        &features.faults,
        &features.normal,
        &selection.hi,
        cfg,
    )
    .and_then(|v| {
        if v.report.groups.is_empty() {
            Err(Error::Empty("no latent state was assigned to a fault".into()))
        } else {
            Ok(v)
        }
    })
    .map_err(|e| e.in_stage("validate"))?;
    lap("mine_validate", &mut timings);

    let model = (|| {
        let mut data = BTreeMap::new();
        data.insert(
            cfg.normal_label.clone(),
            StateData {
                ids: features.normal.sample_ids.clone(),
                rows: reduction.reduce(&features.normal)?,
            },
        );
        for s in &candidates.states {
            data.insert(
                s.id.clone(),
                StateData {
                    ids: s.members.iter().map(|&i| features.nonfault.sample_ids[i].clone()).collect(),
                    rows: s.members.iter().map(|&i| reduced_nonfault[i].clone()).collect(),
                },
            );
        }
        let fault_rows = reduction.reduce(&features.faults)?;
        for f in features.faults.distinct_labels() {
            let idx = features.faults.rows_with_label(&f);
            data.insert(
                f,
                StateData {
                    ids: idx.iter().map(|&i| features.faults.sample_ids[i].clone()).collect(),
                    rows: idx.iter().map(|&i| fault_rows[i].clone()).collect(),
                },
            );
        }
        model_stage(&validation.report, &data, cfg)
    })()
    .map_err(|e| e.in_stage("model"))?;
    lap("model", &mut timings);

    let input_hashes = BTreeMap::from([
        ("normal".to_string(), corpus_hash(&corpora.normal)),
        ("nonfault".to_string(), corpus_hash(&corpora.nonfault)),
        ("faults".to_string(), corpus_hash(&corpora.faults)),
    ]);
    Ok(LearnOutput {
        config: cfg.clone(),
        input_hashes,
        features,
        selection,
        reduction,
        reduced_nonfault,
        sequences,
        soms,
        candidates,
        validation,
        model,
        timings_ms: timings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    /// Relative artifact path to sha256.
    pub artifacts: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u128>,
}

/// File names inside a run directory.
pub mod paths {
    pub const CONFIG: &str = "config.json";
    pub const FEATURES_NORMAL: &str = "features/normal.csv";
    pub const FEATURES_NONFAULT: &str = "features/nonfault.csv";
    pub const FEATURES_FAULTS: &str = "features/faults.csv";
    pub const SELECTION: &str = "selection.json";
    pub const KPCA: &str = "kpca.json";
    pub const REDUCED_NONFAULT: &str = "reduced/nonfault.csv";
    pub const SEQUENCES: &str = "states/sequences.csv";
    pub const STATES: &str = "states/states.json";
    pub const GROUPS: &str = "groups.json";
    pub const ENSEMBLE: &str = "ensemble.json";
    pub const EVALUATION: &str = "evaluation.json";
    pub const SPLITS: &str = "splits.json";
    pub const REPORT_DIR: &str = "report";
    pub const MANIFEST: &str = "manifest.json";

    pub fn som(sn: usize) -> String {
        format!("states/som_{sn}x{sn}.json")
    }
}

pub fn write_sequences(path: &Path, seqs: &ClusterSequenceSet, ids: &[String]) -> Result<()> {
    let g = seqs.grids;
    let header = ["sample_id".to_string(), format!("grid{}", g[0]), format!("grid{}", g[1]), format!("grid{}", g[2])];
    let rows: Vec<Vec<String>> = seqs
        .labels
        .iter()
        .zip(ids)
        .map(|(l, id)| vec![id.clone(), l[0].to_string(), l[1].to_string(), l[2].to_string()])
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_records(path, &header, &rows)
}

/// Mined states with sample ids, as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatesArtifact {
    pub schema_version: u32,
    pub sample_ids: Vec<String>,
    pub candidates: CandidateStateSet,
}

/// Writes every artifact of a learning run plus the report bundle and
/// returns the manifest (also written to `manifest.json`).
pub fn write_artifacts(dir: &Path, out: &LearnOutput) -> Result<RunManifest> {
    let cfg = &out.config;
    let f = &cfg.features;
    let fcfg = Some((&f.phases, &f.segments, &f.options));
    let mut written: Vec<String> = Vec::new();
    let mut put = |rel: &str| written.push(rel.to_string());

    io::save_json(&dir.join(paths::CONFIG), cfg)?;
    put(paths::CONFIG);
    io::write_features(&dir.join(paths::FEATURES_NORMAL), &out.features.normal, fcfg)?;
    io::write_features(&dir.join(paths::FEATURES_NONFAULT), &out.features.nonfault, fcfg)?;
    io::write_features(&dir.join(paths::FEATURES_FAULTS), &out.features.faults, fcfg)?;
    for p in [paths::FEATURES_NORMAL, paths::FEATURES_NONFAULT, paths::FEATURES_FAULTS] {
        put(p);
        put(&p.replace(".csv", ".json"));
    }
    io::save_json(&dir.join(paths::SELECTION), &out.selection)?;
    put(paths::SELECTION);
    io::save_json(&dir.join(paths::KPCA), &out.reduction)?;
    put(paths::KPCA);
    let mut reduced = out.features.nonfault.clone();
    reduced.symbols = out.reduction.output_symbols();
    reduced.rows = out.reduced_nonfault.clone();
    reduced.flags = vec![Vec::new(); reduced.rows.len()];
    io::write_features(&dir.join(paths::REDUCED_NONFAULT), &reduced, None)?;
    put(paths::REDUCED_NONFAULT);
    put(&paths::REDUCED_NONFAULT.replace(".csv", ".json"));
    for som in &out.soms {
        io::save_json(&dir.join(paths::som(som.sn)), som)?;
        put(&paths::som(som.sn));
    }
    write_sequences(&dir.join(paths::SEQUENCES), &out.sequences, &out.features.nonfault.sample_ids)?;
    put(paths::SEQUENCES);
    io::save_json(
        &dir.join(paths::STATES),
        &StatesArtifact {
            schema_version: crate::SCHEMA_VERSION,
            sample_ids: out.features.nonfault.sample_ids.clone(),
            candidates: out.candidates.clone(),
        },
    )?;
    put(paths::STATES);
    io::save_json(&dir.join(paths::GROUPS), &out.validation)?;
    put(paths::GROUPS);
    io::save_json(&dir.join(paths::ENSEMBLE), &out.model.bundle)?;
    put(paths::ENSEMBLE);
    io::save_json(&dir.join(paths::EVALUATION), &out.model.evaluation)?;
    put(paths::EVALUATION);
    io::save_json(&dir.join(paths::SPLITS), &out.model.splits)?;
    put(paths::SPLITS);

    let report_files = report(dir, &dir.join(paths::REPORT_DIR))?;
    for p in report_files {
        if let Ok(rel) = p.strip_prefix(dir) {
            put(&rel.to_string_lossy());
        }
    }

    let mut artifacts = BTreeMap::new();
    for rel in written {
        let hash = io::sha256_file(&dir.join(&rel))?;
        artifacts.insert(rel, hash);
    }
    let manifest = RunManifest {
        schema_version: crate::SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        inputs: out.input_hashes.clone(),
        artifacts,
        timings_ms: out.timings_ms.clone(),
    };
    io::save_json(&dir.join(paths::MANIFEST), &manifest)?;
    Ok(manifest)
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Plot-data CSVs rebuilt from the JSON artifacts of a run directory:
/// SOM hit grids and U-matrices, health-index profiles, EM curves and
/// confusion matrices. Returns the written paths.
pub fn report(run: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let states: StatesArtifact = io::load_json(&run.join(paths::STATES))?;
    let mut sides: Vec<usize> = Vec::new();
    for entry in std::fs::read_dir(run.join("states")).map_err(|source| Error::Io {
        path: run.join("states"),
        source,
    })? {
        let name = entry.map_err(|source| Error::Io {
            path: run.join("states"),
            source,
        })?;
        let name = name.file_name().to_string_lossy().into_owned();
        if let Some(rest) = name.strip_prefix("som_").and_then(|r| r.strip_suffix(".json")) {
            if let Some(sn) = rest.split('x').next().and_then(|s| s.parse().ok()) {
                sides.push(sn);
            }
        }
    }
    sides.sort_unstable();
    for sn in sides {
        let som: SomModel = io::load_json(&run.join(paths::som(sn)))?;
        let p = out.join(format!("hits_{sn}x{sn}.csv"));
        let rows: Vec<Vec<String>> = som
            .hits
            .iter()
            .enumerate()
            .map(|(j, h)| vec![j.to_string(), (j / sn).to_string(), (j % sn).to_string(), h.to_string()])
            .collect();
        io::write_records(&p, &["neuron", "row", "col", "hits"], &rows)?;
        files.push(p);
        let p = out.join(format!("u_matrix_{sn}x{sn}.csv"));
        let rows: Vec<Vec<String>> = som
            .u_matrix()
            .into_iter()
            .map(|(i, j, d)| vec![i.to_string(), j.to_string(), fmt(d)])
            .collect();
        io::write_records(&p, &["neuron_a", "neuron_b", "distance"], &rows)?;
        files.push(p);
    }

    let p = out.join("states.csv");
    let mut rows = Vec::new();
    for (kind, list) in [("latent", &states.candidates.states), ("normal", &states.candidates.removed_normal)] {
        for s in list {
            for &i in &s.members {
                rows.push(vec![s.id.clone(), kind.to_string(), states.sample_ids[i].clone()]);
            }
        }
    }
    io::write_records(&p, &["state", "kind", "sample_id"], &rows)?;
    files.push(p);

    let v: ValidationArtifact = io::load_json(&run.join(paths::GROUPS))?;
    let p = out.join("hi_profiles.csv");
    let mut header = vec!["state".to_string(), "kind".to_string()];
    header.extend(v.profiles.hi.symbols.iter().cloned());
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let all = std::iter::once(&v.profiles.normal)
        .chain(&v.profiles.latent)
        .chain(&v.profiles.faults);
    let rows: Vec<Vec<String>> = all
        .map(|pr| {
            let kind = serde_json::to_value(pr.kind).ok().and_then(|k| k.as_str().map(String::from)).unwrap_or_default();
            let mut r = vec![pr.id.clone(), kind];
            r.extend(pr.values.iter().map(|&x| fmt(x)));
            r
        })
        .collect();
    io::write_records(&p, &header_ref, &rows)?;
    files.push(p);

    let p = out.join("groups.csv");
    let mut rows = Vec::new();
    for g in &v.report.groups {
        for (rank, (m, s)) in g.members.iter().zip(&g.scores).enumerate() {
            rows.push(vec![g.fault.clone(), (rank + 1).to_string(), m.clone(), fmt(*s)]);
        }
    }
    io::write_records(&p, &["fault", "rank", "state", "score"], &rows)?;
    files.push(p);

    let bundle: EnsembleBundle = io::load_json(&run.join(paths::ENSEMBLE))?;
    for e in &bundle.ensembles {
        for m in &e.models {
            let p = out.join(format!("curves/{}_{}.csv", e.name, m.label));
            let rows: Vec<Vec<String>> = m
                .trace
                .curve
                .iter()
                .enumerate()
                .map(|(i, l)| vec![(i + 1).to_string(), fmt(*l)])
                .collect();
            io::write_records(&p, &["iteration", "log_likelihood"], &rows)?;
            files.push(p);
        }
    }
    let evaluation: Vec<EnsembleEvaluation> = io::load_json(&run.join(paths::EVALUATION))?;
    for ev in &evaluation {
        let p = out.join(format!("confusion_{}.csv", ev.ensemble));
        let mut header = vec!["true".to_string()];
        header.extend(ev.labels.iter().cloned());
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = ev
            .labels
            .iter()
            .zip(&ev.confusion)
            .map(|(l, r)| std::iter::once(l.clone()).chain(r.iter().map(|c| c.to_string())).collect())
            .collect();
        io::write_records(&p, &header_ref, &rows)?;
        files.push(p);
    }
    Ok(files)
}

/// Assessment of one window of consecutive operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub window: usize,
    pub first_sample: String,
    pub last_sample: String,
    pub ensemble: String,
    pub label: String,
    /// Fault the recognized state evolves toward; `None` for normal.
    pub predicted_fault: Option<String>,
    /// `(ensemble:label, log-likelihood)` for every model.
    pub log_likelihoods: Vec<(String, f64)>,
}

/// Online path: windows of `bundle.window` consecutive operations (stride 1,
/// a single shorter window when fewer operations are available) are reduced,
/// quantized and scored against every model; the overall maximum wins, ties
/// going to earlier ensembles and less severe states.
pub fn assess_signals(bundle: &EnsembleBundle, reduction: &ReductionModel, signals: &[PowerSignal]) -> Result<Vec<Verdict>> {
    if signals.is_empty() {
        return Err(Error::Empty("no operations to assess".into()));
    }
    if bundle.ensembles.is_empty() {
        return Err(Error::InvalidModel("ensemble bundle is empty".into()));
    }
    let reduced = reduction.reduce_signals(signals)?;
    let symbols = bundle.codebook.quantize(&reduced)?;
    let n = signals.len();
    let len = bundle.window.min(n);
    let mut verdicts = Vec::new();
    for (w, start) in (0..=n - len).enumerate() {
        let o = &symbols[start..start + len];
        let mut best: Option<(f64, usize, usize)> = None;
        let mut lls = Vec::new();
        for (ei, e) in bundle.ensembles.iter().enumerate() {
            let r = e.recognize(o)?;
            for (mi, &l) in r.log_likelihoods.iter().enumerate() {
                lls.push((format!("{}:{}", e.name, e.models[mi].label), l));
                if best.is_none_or(|(b, _, _)| l > b) {
                    best = Some((l, ei, mi));
                }
            }
        }
        let (_, ei, mi) = best.expect("at least one model");
        let e = &bundle.ensembles[ei];
        verdicts.push(Verdict {
            window: w,
            first_sample: signals[start].sample_id.clone(),
            last_sample: signals[start + len - 1].sample_id.clone(),
            ensemble: e.name.clone(),
            label: e.models[mi].label.clone(),
            predicted_fault: (mi > 0).then(|| e.fault.clone()),
            log_likelihoods: lls,
        });
    }
    Ok(verdicts)
}

pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    let mut header = vec!["window", "first_sample", "last_sample", "ensemble", "label", "predicted_fault"];
    let names: Vec<String> = verdicts
        .first()
        .map(|v| v.log_likelihoods.iter().map(|(n, _)| format!("ll_{n}")).collect())
        .unwrap_or_default();
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = verdicts
        .iter()
        .map(|v| {
            let mut r = vec![
                v.window.to_string(),
                v.first_sample.clone(),
                v.last_sample.clone(),
                v.ensemble.clone(),
                v.label.clone(),
                v.predicted_fault.clone().unwrap_or_default(),
            ];
            r.extend(v.log_likelihoods.iter().map(|(_, l)| fmt(*l)));
            r
        })
        .collect();
    io::write_records(path, &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.hmm.k, 10);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.hmm.train_fraction = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn split_is_three_to_one() {
        let (tr, te) = split_indices(100, 0.75, 1);
        assert_eq!((tr.len(), te.len()), (75, 25));
        let (tr, te) = split_indices(30, 0.75, 1);
        assert_eq!((tr.len(), te.len()), (23, 7));
        let mut all: Vec<usize> = tr.into_iter().chain(te).collect();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn standard_subset_takes_leading_rows_per_label() {
        let mut m = FeatureMatrix::empty(vec!["a".into()]);
        for (i, l) in ["A", "B", "A", "A", "B"].iter().enumerate() {
            m.push(format!("{i}"), Some(l.to_string()), vec![i as f64], vec![]).unwrap();
        }
        let s = standard_subset(&m, 2);
        assert_eq!(s.sample_ids, vec!["0", "1", "2", "4"]);
    }

    #[test]
    fn empty_nonfault_fails_in_clustering() {
        let lib = SynthLibrary::default();
        let plan = CorpusPlan {
            normal: 20,
            per_fault: 6,
            nonfault_normal: 0,
            per_ladder_step: 0,
        };
        let mut c = synthetic_corpora(&lib, &plan, 1).unwrap();
        c.nonfault.clear();
        let mut cfg = PipelineConfig::default();
        cfg.standard_per_class = 5;
        match learn(&cfg, &c) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "cluster"),
            other => panic!("unexpected {other:?}"),
        }
    }
}

//! `pdakit`: command-line front end. Every stage reads the persisted outputs
//! of earlier stages, so the offline path can be run one step at a time or
//! in one go with `learn`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pdakit_core::assess::{HiScale, StateKind};
use pdakit_core::features::FeatureMatrix;
use pdakit_core::hmm::EnsembleBundle;
use pdakit_core::io::{self, LoadedCorpus};
use pdakit_core::kpca::{Components, KernelKind};
use pdakit_core::pipeline::{
    self, assess_signals, learn, mine_stage, model_stage, report, select_stage, standard_subset, synthetic_corpora,
    validate_stage, write_artifacts, write_sequences, write_verdicts, Corpora, CorpusPlan, PipelineConfig, ReductionModel,
    SelectionArtifact, StateData, StatesArtifact, ValidationArtifact,
};
use pdakit_core::select::{FisherTable, Selection};
use pdakit_core::signal::{PhaseConfig, PowerSignal, SegmentConfig};
use pdakit_core::som::{cluster_sequences, mine_latent_states, SomModel};
use pdakit_core::synth::{generate, SynthLibrary, SynthStateSpec};
use pdakit_core::{derive_seed, Error, Result};

#[derive(Parser)]
#[command(name = "pdakit", version, about = "Degradation-state mining and HMM assessment from operation power traces")]
struct Cli {
    /// Pipeline configuration (JSON); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic operation traces.
    Simulate(SimulateArgs),
    /// Compute the feature matrix of a corpus.
    Extract(ExtractArgs),
    /// Fisher selection and the health-index set.
    Select(SelectArgs),
    /// Fit or apply the scaling and kernel PCA reduction.
    Reduce(ReduceArgs),
    /// Train the three SOMs and mine latent states.
    Cluster(ClusterArgs),
    /// Assign latent states to faults and rank them.
    Validate(ValidateArgs),
    /// Train one HMM ensemble per relevant state group.
    TrainHmm(TrainHmmArgs),
    /// Classify windows of new operations.
    Assess(AssessArgs),
    /// Plot-data CSVs from a run directory.
    Report(ReportArgs),
    /// Run every offline stage and persist all artifacts.
    Learn(LearnArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// One state spec (JSON); without it the full synthetic corpus is written.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Traces to generate from `--spec`.
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Label for traces from `--spec` (defaults to the state name).
    #[arg(long)]
    label: Option<String>,
    /// State library (JSON) for the full corpus.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Sample counts (JSON) for the full corpus.
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Phase boundaries in seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    phases: Option<Vec<f64>>,
    /// Segment boundaries in kW, comma separated.
    #[arg(long, value_delimiter = ',')]
    segments: Option<Vec<f64>>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    faults: PathBuf,
    #[arg(long)]
    normal: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
    Linear,
}

#[derive(Args)]
struct ReduceArgs {
    /// Feature matrix to reduce.
    #[arg(long = "in")]
    input: PathBuf,
    /// Reduction model. A new one is fitted and written when `--selection`,
    /// `--kernel`, `--gamma` or `--d` is given or the file does not exist;
    /// otherwise it is read and applied.
    #[arg(long)]
    model: PathBuf,
    /// Selection artifact; without it every input column is used.
    #[arg(long)]
    selection: Option<PathBuf>,
    /// Fault features whose standard set is part of the fitting reference.
    #[arg(long)]
    faults: Option<PathBuf>,
    /// Normal features whose standard set is part of the fitting reference.
    #[arg(long)]
    normal: Option<PathBuf>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Reduced non-fault rows.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    sn: Option<usize>,
    /// Raw non-fault features; with the next three, normal-like states are removed.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    faults: Option<PathBuf>,
    #[arg(long)]
    normal: Option<PathBuf>,
    #[arg(long)]
    selection: Option<PathBuf>,
    /// Reduction model kept with the states for `train-hmm`; defaults to
    /// `kpca.json` next to the input when present.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Directory written by `cluster`.
    #[arg(long)]
    states: PathBuf,
    #[arg(long)]
    faults: PathBuf,
    #[arg(long)]
    normal: PathBuf,
    /// Selection artifact holding the health-index set.
    #[arg(long)]
    his: PathBuf,
    /// Raw non-fault features; defaults to the copy kept by `cluster`.
    #[arg(long)]
    nonfault: Option<PathBuf>,
}

#[derive(Args)]
struct TrainHmmArgs {
    #[arg(long)]
    states: PathBuf,
    #[arg(long)]
    groups: PathBuf,
    /// Reduction model for the normal and fault rows; defaults to the copy
    /// kept by `cluster`.
    #[arg(long)]
    kpca: Option<PathBuf>,
    /// Normal features; defaults to the copy kept by `cluster`.
    #[arg(long)]
    normal: Option<PathBuf>,
    /// Fault features; defaults to the copy kept by `cluster`.
    #[arg(long)]
    faults: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
struct AssessArgs {
    #[arg(long)]
    ensemble: PathBuf,
    #[arg(long)]
    kpca: PathBuf,
    /// Directory of signal CSVs, a corpus manifest, or `-` for rows of
    /// `sample_id,t,power_kw` on stdin with each operation's rows contiguous.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory written by `learn`.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    /// Normal corpus (directory or manifest).
    #[arg(long, required_unless_present = "synthetic")]
    normal: Option<PathBuf>,
    /// Non-fault corpus to mine.
    #[arg(long, required_unless_present = "synthetic")]
    nonfault: Option<PathBuf>,
    /// Labeled fault corpus.
    #[arg(long, required_unless_present = "synthetic")]
    faults: Option<PathBuf>,
    /// Use the built-in synthetic corpus instead of files.
    #[arg(long, conflicts_with_all = ["normal", "nonfault", "faults"])]
    synthetic: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Stage { source, .. } => match exit_code(source) {
            2 => 2,
            _ => 4,
        },
        e if e.is_data_error() => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PDAKIT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.clone();
    let need_out = || out.clone().ok_or_else(|| Error::Config("--out is required for this command".into()));
    match cli.command {
        Command::Simulate(a) => simulate(&cfg, &a, &need_out()?),
        Command::Extract(a) => extract(&mut cfg, &a, &need_out()?),
        Command::Select(a) => select(&cfg, &a, &need_out()?),
        Command::Reduce(a) => reduce(&mut cfg, &a, &need_out()?),
        Command::Cluster(a) => cluster(&mut cfg, &a, &need_out()?),
        Command::Validate(a) => validate(&cfg, &a, &need_out()?),
        Command::TrainHmm(a) => train_hmm(&mut cfg, &a, &need_out()?),
        Command::Assess(a) => assess(&a, &need_out()?),
        Command::Report(a) => {
            let dest = out.unwrap_or_else(|| a.run.join(pipeline::paths::REPORT_DIR));
            let files = report(&a.run, &dest)?;
            println!("wrote {} plot-data files to {}", files.len(), dest.display());
            Ok(())
        }
        Command::Learn(a) => learn_cmd(&cfg, &a, &need_out()?),
    }
}

fn load_signals(path: &Path) -> Result<LoadedCorpus> {
    let loaded = if path.is_dir() {
        let manifest = path.join("manifest.json");
        if manifest.exists() {
            io::load_corpus(&manifest)?
        } else {
            io::load_signal_dir(path)?
        }
    } else {
        io::load_corpus(path)?
    };
    for (p, why) in &loaded.skipped {
        log::warn!("skipped {}: {why}", p.display());
    }
    Ok(loaded)
}

fn simulate(cfg: &PipelineConfig, a: &SimulateArgs, out: &Path) -> Result<()> {
    if let Some(spec_path) = &a.spec {
        let spec: SynthStateSpec = io::load_json(spec_path)?;
        spec.validate()?;
        let label = a.label.clone().unwrap_or_else(|| spec.name.clone());
        let signals = generate(&spec, a.n, cfg.seed, &label)?;
        let manifest = io::write_corpus(out, &signals)?;
        println!("wrote {} traces, manifest {}", signals.len(), manifest.display());
        return Ok(());
    }
    let lib: SynthLibrary = match &a.library {
        Some(p) => io::load_json(p)?,
        None => SynthLibrary::default(),
    };
    let plan: CorpusPlan = match &a.plan {
        Some(p) => io::load_json(p)?,
        None => CorpusPlan::default(),
    };
    let c = synthetic_corpora(&lib, &plan, cfg.seed)?;
    for (name, signals) in [("normal", &c.normal), ("nonfault", &c.nonfault), ("faults", &c.faults)] {
        let manifest = io::write_corpus(&out.join(name), signals)?;
        println!("{name}: {} traces, manifest {}", signals.len(), manifest.display());
    }
    Ok(())
}

fn extract(cfg: &mut PipelineConfig, a: &ExtractArgs, out: &Path) -> Result<()> {
    if let Some(b) = &a.phases {
        cfg.features.phases = PhaseConfig::new(b.clone())?;
    }
    if let Some(b) = &a.segments {
        cfg.features.segments = SegmentConfig::new(b.clone())?;
    }
    let loaded = load_signals(&a.manifest)?;
    if loaded.signals.is_empty() {
        return Err(Error::Empty(format!("no readable traces in {}", a.manifest.display())));
    }
    let m = cfg.features.extract(&loaded.signals)?;
    let f = &cfg.features;
    io::write_features(out, &m, Some((&f.phases, &f.segments, &f.options)))?;
    println!("{} traces x {} features -> {} ({} skipped)", m.n_rows(), m.n_cols(), out.display(), loaded.skipped.len());
    Ok(())
}

fn select(cfg: &PipelineConfig, a: &SelectArgs, out: &Path) -> Result<()> {
    let faults = io::read_features(&a.faults)?;
    let normal = io::read_features(&a.normal)?;
    let art = select_stage(&faults, &normal, cfg)?;
    io::save_json(out, &art)?;
    println!("selected {:?}; health indices {:?}", art.selection.symbols, art.hi.symbols);
    Ok(())
}

fn reduce(cfg: &mut PipelineConfig, a: &ReduceArgs, out: &Path) -> Result<()> {
    if let Some(k) = a.kernel {
        cfg.kpca.kernel = match k {
            KernelArg::Gaussian => KernelKind::Gaussian,
            KernelArg::Linear => KernelKind::Linear,
        };
    }
    if a.gamma.is_some() {
        cfg.kpca.gamma = a.gamma;
    }
    if let Some(d) = a.d {
        cfg.kpca.components = Components::Fixed(d);
    }
    let input = io::read_features(&a.input)?;
    let fit = a.selection.is_some() || a.kernel.is_some() || a.gamma.is_some() || a.d.is_some() || !a.model.exists();
    let model = if fit {
        let selection = match &a.selection {
            Some(p) => io::load_json::<SelectionArtifact>(p)?.selection,
            None => all_columns(&input),
        };
        let reference = match (&a.faults, &a.normal) {
            (Some(f), Some(n)) => FeatureMatrix::concat(&[
                &standard_subset(&io::read_features(f)?, cfg.standard_per_class),
                &standard_subset(&io::read_features(n)?, cfg.standard_per_class),
            ])?,
            (None, None) => input.clone(),
            _ => return Err(Error::Config("--faults and --normal go together".into())),
        };
        let model = ReductionModel::fit(&reference, &selection, &cfg.kpca, &cfg.features)?;
        io::save_json(&a.model, &model)?;
        println!(
            "fitted {} -> {} dims, retained energy {:.4}, model {}",
            model.dims.len(),
            model.kpca.d,
            model.kpca.retained_energy,
            a.model.display()
        );
        model
    } else {
        io::load_json(&a.model)?
    };
    let mut reduced = input.clone();
    reduced.symbols = model.output_symbols();
    reduced.rows = model.reduce(&input)?;
    reduced.flags = vec![Vec::new(); reduced.rows.len()];
    io::write_features(out, &reduced, None)?;
    println!("{} rows reduced -> {}", reduced.n_rows(), out.display());
    Ok(())
}

/// Selection keeping every column of `m` as it is.
fn all_columns(m: &FeatureMatrix) -> Selection {
    Selection {
        dims: (0..m.n_cols()).collect(),
        symbols: m.symbols.clone(),
        per_class: Vec::new(),
        table: FisherTable {
            class_names: Vec::new(),
            scores: Vec::new(),
            class_means: Vec::new(),
            normal_mean: Vec::new(),
        },
    }
}

const STATE_REDUCED: &str = "reduced.csv";
const STATE_FEATURES: &str = "features.csv";
const STATE_FAULTS: &str = "faults.csv";
const STATE_NORMAL: &str = "normal.csv";
const STATE_MODEL: &str = "kpca.json";

fn cluster(cfg: &mut PipelineConfig, a: &ClusterArgs, out: &Path) -> Result<()> {
    if let Some(sn) = a.sn {
        cfg.som.sn = sn;
    }
    cfg.validate()?;
    let reduced = io::read_features(&a.input)?;
    let (seqs, soms) = cluster_sequences(&reduced.rows, cfg.som.sn, &cfg.som.train, derive_seed(cfg.seed, 300))?;
    let candidates = match (&a.features, &a.faults, &a.normal, &a.selection) {
        (Some(f), Some(fa), Some(n), Some(s)) => {
            let nonfault = io::read_features(f)?;
            if nonfault.sample_ids != reduced.sample_ids {
                return Err(Error::Format {
                    path: f.clone(),
                    reason: "sample ids differ from the reduced rows".into(),
                });
            }
            let sel: SelectionArtifact = io::load_json(s)?;
            let cands = mine_stage(&seqs, &soms, &nonfault, &io::read_features(fa)?, &io::read_features(n)?, &sel.hi, cfg)?;
            let fcfg = &cfg.features;
            let settings = Some((&fcfg.phases, &fcfg.segments, &fcfg.options));
            io::write_features(&out.join(STATE_FEATURES), &nonfault, settings)?;
            io::write_features(&out.join(STATE_FAULTS), &io::read_features(fa)?, settings)?;
            io::write_features(&out.join(STATE_NORMAL), &io::read_features(n)?, settings)?;
            cands
        }
        (None, None, None, None) => {
            log::warn!("no feature inputs given; normal-like states are kept");
            mine_latent_states(&seqs, &soms, &cfg.mining, &mut |_| Ok(false))?
        }
        _ => return Err(Error::Config("--features, --faults, --normal and --selection go together".into())),
    };
    write_states_dir(out, &reduced, &seqs, &soms, &candidates)?;
    let sibling = a.input.with_file_name(STATE_MODEL);
    match a.model.clone().or_else(|| sibling.exists().then_some(sibling)) {
        Some(m) => {
            let model: ReductionModel = io::load_json(&m)?;
            io::save_json(&out.join(STATE_MODEL), &model)?;
        }
        None => log::info!("no reduction model kept with the states"),
    }
    println!(
        "{} latent states, {} removed as normal, survivors {:?} -> {}",
        candidates.states.len(),
        candidates.removed_normal.len(),
        candidates.survivors,
        out.display()
    );
    Ok(())
}

fn write_states_dir(
    out: &Path,
    reduced: &FeatureMatrix,
    seqs: &pdakit_core::som::ClusterSequenceSet,
    soms: &[SomModel],
    candidates: &pdakit_core::som::CandidateStateSet,
) -> Result<()> {
    io::write_features(&out.join(STATE_REDUCED), reduced, None)?;
    for som in soms {
        io::save_json(&out.join(format!("som_{0}x{0}.json", som.sn)), som)?;
        let rows: Vec<Vec<String>> = som
            .u_matrix()
            .into_iter()
            .map(|(i, j, d)| vec![i.to_string(), j.to_string(), d.to_string()])
            .collect();
        io::write_records(&out.join(format!("u_matrix_{0}x{0}.csv", som.sn)), &["neuron_a", "neuron_b", "distance"], &rows)?;
    }
    write_sequences(&out.join("sequences.csv"), seqs, &reduced.sample_ids)?;
    let art = StatesArtifact {
        schema_version: pdakit_core::SCHEMA_VERSION,
        sample_ids: reduced.sample_ids.clone(),
        candidates: candidates.clone(),
    };
    io::save_json(&out.join("states.json"), &art)?;
    let mut rows = Vec::new();
    for (kind, list) in [("latent", &candidates.states), ("normal", &candidates.removed_normal), ("small", &candidates.discarded_small)] {
        for s in list {
            for &i in &s.members {
                rows.push(vec![s.id.clone(), kind.to_string(), reduced.sample_ids[i].clone()]);
            }
        }
    }
    io::write_records(&out.join("states.csv"), &["state", "kind", "sample_id"], &rows)
}

fn validate(cfg: &PipelineConfig, a: &ValidateArgs, out: &Path) -> Result<()> {
    let states: StatesArtifact = io::load_json(&a.states.join("states.json"))?;
    let nonfault_path = a.nonfault.clone().unwrap_or_else(|| a.states.join(STATE_FEATURES));
    let nonfault = io::read_features(&nonfault_path)?;
    if nonfault.sample_ids != states.sample_ids {
        return Err(Error::Format {
            path: nonfault_path,
            reason: "sample ids differ from the mined states".into(),
        });
    }
    let faults = io::read_features(&a.faults)?;
    let normal = io::read_features(&a.normal)?;
    let sel: SelectionArtifact = io::load_json(&a.his)?;
    let v = validate_stage(&nonfault, &states.candidates, &faults, &normal, &sel.hi, cfg)?;
    io::save_json(out, &v)?;
    write_hi_csv(&out.with_extension("hi.csv"), &v)?;
    write_hi_distributions(&out.with_extension("hi_samples.csv"), &v, &nonfault, &states, &faults, &normal)?;
    for g in &v.report.groups {
        println!("{}: {:?}", g.fault, g.members);
    }
    println!("invalid states: {:?}", v.report.invalid());
    Ok(())
}

fn write_hi_csv(path: &Path, v: &ValidationArtifact) -> Result<()> {
    let p = &v.profiles;
    let mut header = vec!["state".to_string(), "kind".to_string()];
    header.extend(p.hi.symbols.iter().cloned());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = std::iter::once(&p.normal)
        .chain(&p.latent)
        .chain(&p.faults)
        .map(|pr| {
            let kind = match pr.kind {
                StateKind::Normal => "normal",
                StateKind::Latent => "latent",
                StateKind::Fault => "fault",
            };
            let mut r = vec![pr.id.clone(), kind.to_string()];
            r.extend(pr.values.iter().map(|x| x.to_string()));
            r
        })
        .collect();
    io::write_records(path, &header, &rows)
}

/// Per-sample scaled health indices, the data behind distribution plots.
fn write_hi_distributions(
    path: &Path,
    v: &ValidationArtifact,
    nonfault: &FeatureMatrix,
    states: &StatesArtifact,
    faults: &FeatureMatrix,
    normal: &FeatureMatrix,
) -> Result<()> {
    let scale: &HiScale = &v.profiles.scale;
    let mut header = vec!["state".to_string(), "sample_id".to_string()];
    header.extend(v.profiles.hi.symbols.iter().cloned());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    let mut push = |state: &str, m: &FeatureMatrix, i: usize| {
        let raw: Vec<f64> = scale.idx.iter().map(|&d| m.rows[i][d]).collect();
        let mut r = vec![state.to_string(), m.sample_ids[i].clone()];
        r.extend(scale.scaler.scale_row(&raw).iter().map(|x| x.to_string()));
        rows.push(r);
    };
    for i in 0..normal.n_rows() {
        push(&v.profiles.normal.id, normal, i);
    }
    for s in &states.candidates.states {
        for &i in &s.members {
            push(&s.id, nonfault, i);
        }
    }
    for i in 0..faults.n_rows() {
        let label = faults.labels[i].clone().unwrap_or_default();
        push(&label, faults, i);
    }
    io::write_records(path, &header, &rows)
}

fn train_hmm(cfg: &mut PipelineConfig, a: &TrainHmmArgs, out: &Path) -> Result<()> {
    if let Some(k) = a.k {
        cfg.hmm.k = k;
    }
    if let Some(w) = a.window {
        cfg.hmm.window = w;
    }
    cfg.validate()?;
    let states: StatesArtifact = io::load_json(&a.states.join("states.json"))?;
    let reduced = io::read_features(&a.states.join(STATE_REDUCED))?;
    let v: ValidationArtifact = io::load_json(&a.groups)?;
    let or_kept = |p: &Option<PathBuf>, name: &str| p.clone().unwrap_or_else(|| a.states.join(name));
    let model: ReductionModel = io::load_json(&or_kept(&a.kpca, STATE_MODEL))?;
    let normal = io::read_features(&or_kept(&a.normal, STATE_NORMAL))?;
    let faults = io::read_features(&or_kept(&a.faults, STATE_FAULTS))?;

    let mut data = BTreeMap::new();
    data.insert(
        cfg.normal_label.clone(),
        StateData {
            ids: normal.sample_ids.clone(),
            rows: model.reduce(&normal)?,
        },
    );
    for s in &states.candidates.states {
        data.insert(
            s.id.clone(),
            StateData {
                ids: s.members.iter().map(|&i| reduced.sample_ids[i].clone()).collect(),
                rows: s.members.iter().map(|&i| reduced.rows[i].clone()).collect(),
            },
        );
    }
    let fault_rows = model.reduce(&faults)?;
    for f in faults.distinct_labels() {
        let idx = faults.rows_with_label(&f);
        data.insert(
            f,
            StateData {
                ids: idx.iter().map(|&i| faults.sample_ids[i].clone()).collect(),
                rows: idx.iter().map(|&i| fault_rows[i].clone()).collect(),
            },
        );
    }
    let art = model_stage(&v.report, &data, cfg)?;
    io::save_json(out, &art.bundle)?;
    let dir = out.parent().unwrap_or(Path::new(""));
    io::save_json(&dir.join(pipeline::paths::EVALUATION), &art.evaluation)?;
    io::save_json(&dir.join(pipeline::paths::SPLITS), &art.splits)?;
    for e in &art.evaluation {
        println!("{}: held-out accuracy {:.4} over {:?}", e.ensemble, e.accuracy, e.labels);
    }
    Ok(())
}

fn assess(a: &AssessArgs, out: &Path) -> Result<()> {
    let bundle: EnsembleBundle = io::load_json(&a.ensemble)?;
    let model: ReductionModel = io::load_json(&a.kpca)?;
    let loaded = if a.input.as_os_str() == "-" {
        read_stream(std::io::stdin().lock())?
    } else {
        load_signals(&a.input)?
    };
    if loaded.signals.is_empty() {
        return Err(Error::Empty(format!(
            "no readable operations in {} ({} skipped)",
            a.input.display(),
            loaded.skipped.len()
        )));
    }
    let verdicts = assess_signals(&bundle, &model, &loaded.signals)?;
    write_verdicts(out, &verdicts)?;
    println!(
        "{} windows from {} operations ({} files skipped) -> {}",
        verdicts.len(),
        loaded.signals.len(),
        loaded.skipped.len(),
        out.display()
    );
    Ok(())
}

/// Long-format operations from a reader. An operation with an unparsable row
/// or an invalid trace is skipped, the rest are kept in input order.
fn read_stream(reader: impl std::io::Read) -> Result<LoadedCorpus> {
    let stdin = PathBuf::from("-");
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format {
        path: stdin.clone(),
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != ["sample_id", "t", "power_kw"] {
        return Err(Error::Format {
            path: stdin,
            reason: format!("expected header sample_id,t,power_kw, got {}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    // id, t, p and the first problem found
    type Pending = (String, Vec<f64>, Vec<f64>, Option<String>);
    let mut ops: Vec<Pending> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let line = line + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                if let Some(op) = ops.last_mut() {
                    op.3.get_or_insert(format!("line {line}: {e}"));
                }
                continue;
            }
        };
        let id = rec.get(0).unwrap_or("").to_string();
        if ops.last().is_none_or(|op| op.0 != id) {
            ops.push((id, Vec::new(), Vec::new(), None));
        }
        let op = ops.last_mut().expect("pushed above");
        let num = |k: usize| rec.get(k).and_then(|v| v.trim().parse::<f64>().ok());
        match (rec.len(), num(1), num(2)) {
            (3, Some(t), Some(p)) => {
                op.1.push(t);
                op.2.push(p);
            }
            _ => {
                op.3.get_or_insert(format!("line {line}: malformed row"));
            }
        }
    }
    let mut out = LoadedCorpus {
        signals: Vec::new(),
        skipped: Vec::new(),
    };
    for (id, t, p, problem) in ops {
        let sig = match problem {
            Some(why) => Err(why),
            None => PowerSignal::new(id.clone(), t, p).map_err(|e| e.to_string()),
        };
        match sig {
            Ok(s) => out.signals.push(s),
            Err(why) => {
                log::warn!("skipped operation {id}: {why}");
                out.skipped.push((PathBuf::from(id), why));
            }
        }
    }
    Ok(out)
}

fn learn_cmd(cfg: &PipelineConfig, a: &LearnArgs, out: &Path) -> Result<()> {
    let corpora = if a.synthetic {
        synthetic_corpora(&SynthLibrary::default(), &CorpusPlan::default(), cfg.seed)?
    } else {
        let get = |p: &Option<PathBuf>| -> Result<Vec<_>> {
            let p = p.as_ref().expect("required by the argument parser");
            Ok(load_signals(p)?.signals)
        };
        Corpora {
            normal: get(&a.normal)?,
            nonfault: get(&a.nonfault)?,
            faults: get(&a.faults)?,
        }
    };
    let result = learn(cfg, &corpora)?;
    let manifest = write_artifacts(out, &result)?;
    for g in &result.validation.report.groups {
        println!("group {}: {:?}", g.fault, g.members);
    }
    for e in &result.model.evaluation {
        println!("{}: held-out accuracy {:.4}", e.ensemble, e.accuracy);
    }
    println!("{} artifacts in {}", manifest.artifacts.len(), out.display());
    Ok(())
}

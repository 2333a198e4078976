//! Runs the offline stages on the synthetic library and prints a
//! state-by-state summary against the planted ground truth.
//!
//! `cargo run --release -p pdakit-core --example synthetic_run -- [seed]`

use std::collections::BTreeMap;

use pdakit_core::features::FeatureMatrix;
use pdakit_core::pipeline::{
    mine_stage, select_stage, standard_subset, synthetic_corpora, validate_stage, CorpusPlan, PipelineConfig, ReductionModel,
};
use pdakit_core::som::cluster_sequences;
use pdakit_core::synth::SynthLibrary;
use pdakit_core::derive_seed;

fn main() -> pdakit_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let corpora = synthetic_corpora(&SynthLibrary::default(), &CorpusPlan::default(), seed)?;
    let cfg = PipelineConfig { seed, ..Default::default() };
    let f = &cfg.features;
    let (normal, nonfault, faults) = (f.extract(&corpora.normal)?, f.extract(&corpora.nonfault)?, f.extract(&corpora.faults)?);
    let sel = select_stage(&faults, &normal, &cfg)?;
    let sym = &normal.symbols;
    println!("selected {:?}", sel.selection.symbols);
    for c in &sel.selection.per_class {
        let names = |v: &[usize]| v.iter().map(|&d| sym[d].clone()).collect::<Vec<_>>();
        println!("  {} above={:?} kept={:?}", c.class_name, names(&c.above_threshold), names(&c.retained));
    }
    println!("health indices {:?}", sel.hi.symbols);
    for (s, p) in sel.hi.symbols.iter().zip(&sel.hi.provenance) {
        println!("  {s}: {p:?}");
    }
    let reference = FeatureMatrix::concat(&[&standard_subset(&faults, 20), &standard_subset(&normal, 20)])?;
    let red = ReductionModel::fit(&reference, &sel.selection, &cfg.kpca, &cfg.features)?;
    println!("kpca energy {:.5}", red.kpca.retained_energy);
    let reduced = red.reduce(&nonfault)?;
    let (seqs, soms) = cluster_sequences(&reduced, cfg.som.sn, &cfg.som.train, derive_seed(seed, 300))?;
    let cands = mine_stage(&seqs, &soms, &nonfault, &faults, &normal, &sel.hi, &cfg)?;
    println!("survivors {:?}", cands.survivors);
    let truth = |i: usize| nonfault.labels[i].clone().unwrap_or_default();
    for (kind, list) in [("latent", &cands.states), ("normal", &cands.removed_normal)] {
        for s in list {
            let mut comp: BTreeMap<String, usize> = BTreeMap::new();
            for &i in &s.members {
                *comp.entry(truth(i)).or_default() += 1;
            }
            println!("{kind} {} {:?} {:?}", s.id, s.sequence, comp);
        }
    }
    let v = validate_stage(&nonfault, &cands, &faults, &normal, &sel.hi, &cfg)?;
    println!("normal {:?}", v.profiles.normal.values.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    for p in v.profiles.faults.iter().chain(&v.profiles.latent) {
        println!("  {} {:?}", p.id, p.values.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
    for a in &v.report.assignments {
        println!("assign {} -> {:?} {:?}", a.state, a.fault, a.candidates.iter().map(|c| (c.fault.clone(), (c.agreement * 100.0).round(), c.dims.len())).collect::<Vec<_>>());
    }
    for g in &v.report.groups {
        println!("group {} {:?} {:?}", g.fault, g.members, g.scores);
    }
    let out = pdakit_core::pipeline::learn(&cfg, &corpora)?;
    for e in &out.model.evaluation {
        println!("{} acc={:.4} {:?}", e.ensemble, e.accuracy, e.confusion);
    }
    for e in &out.model.bundle.ensembles {
        for m in &e.models {
            let first = m.trace.relative_gains().iter().position(|&g| g < 1e-4).map(|p| p + 1);
            println!("  {}:{} iters={} first<1e-4 at {:?}", e.name, m.label, m.trace.iterations(), first);
        }
    }
    Ok(())
}

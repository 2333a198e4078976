use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

fn pdakit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdakit")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pdakit(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    pdakit(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stage_chain_matches_learn_and_assesses() {
    let w = tempfile::tempdir().unwrap();
    let c = w.path().join("corpus");
    let s = w.path().join("steps");
    let run = w.path().join("run");
    ok(&["--seed", "7", "simulate", "--out", p(&c)]);
    for k in ["normal", "nonfault", "faults"] {
        ok(&["extract", "--manifest", p(&c.join(k).join("manifest.json")), "--out", p(&s.join(format!("{k}.csv")))]);
    }
    let f = |n: &str| s.join(n);
    ok(&["select", "--faults", p(&f("faults.csv")), "--normal", p(&f("normal.csv")), "--out", p(&f("selection.json"))]);
    ok(&[
        "reduce", "--in", p(&f("nonfault.csv")), "--selection", p(&f("selection.json")), "--faults", p(&f("faults.csv")),
        "--normal", p(&f("normal.csv")), "--model", p(&f("kpca.json")), "--out", p(&f("reduced.csv")),
    ]);
    ok(&[
        "--seed", "7", "cluster", "--in", p(&f("reduced.csv")), "--features", p(&f("nonfault.csv")), "--faults",
        p(&f("faults.csv")), "--normal", p(&f("normal.csv")), "--selection", p(&f("selection.json")), "--out", p(&f("states")),
    ]);
    ok(&[
        "validate", "--states", p(&f("states")), "--faults", p(&f("faults.csv")), "--normal", p(&f("normal.csv")), "--his",
        p(&f("selection.json")), "--out", p(&f("groups.json")),
    ]);
    // the model and the normal and fault features were kept with the states
    ok(&[
        "--seed", "7", "train-hmm", "--states", p(&f("states")), "--groups", p(&f("groups.json")), "--k", "10", "--window",
        "20", "--out", p(&f("ensemble.json")),
    ]);

    let nd = c.join("normal");
    let fd = c.join("faults");
    let nf = c.join("nonfault");
    ok(&["--seed", "7", "learn", "--normal", p(&nd), "--nonfault", p(&nf), "--faults", p(&fd), "--out", p(&run)]);
    for name in ["kpca.json", "ensemble.json", "selection.json"] {
        let a = std::fs::read(f(name)).unwrap();
        let b = std::fs::read(run.join(name)).unwrap();
        assert!(a == b, "{name} differs between the stage chain and learn");
    }

    // 100 normal operations in windows of 20
    ok(&["assess", "--ensemble", p(&f("ensemble.json")), "--kpca", p(&f("kpca.json")), "--input", p(&nd), "--out", p(&f("v.csv"))]);
    let text = std::fs::read_to_string(f("v.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let labels: Vec<String> = rdr.records().map(|r| r.unwrap()[4].to_string()).collect();
    assert_eq!(labels.len(), 81);
    assert!(labels.iter().all(|l| l == "NS"));

    let rep = ok(&["report", "--run", p(&run)]);
    assert!(rep.contains("plot-data files"));
    assert!(run.join("report").join("hi_profiles.csv").exists());
}

#[test]
fn minimal_reduce_and_cluster_forms() {
    let w = tempfile::tempdir().unwrap();
    let c = w.path().join("c");
    ok(&["--seed", "7", "simulate", "--out", p(&c)]);
    let feats = w.path().join("nonfault.csv");
    let (model, reduced, states) = (w.path().join("m.json"), w.path().join("r.csv"), w.path().join("states"));
    ok(&["extract", "--manifest", p(&c.join("nonfault")), "--phases", "1,4,5", "--segments", "0.3,0.7", "--out", p(&feats)]);
    let fitted = ok(&["reduce", "--in", p(&feats), "--kernel", "gaussian", "--d", "6", "--model", p(&model), "--out", p(&reduced)]);
    assert!(fitted.contains("64 -> 6 dims"), "{fitted}");
    // applying the stored model reproduces the fitted projection
    let again = w.path().join("r2.csv");
    ok(&["reduce", "--in", p(&feats), "--model", p(&model), "--out", p(&again)]);
    assert_eq!(std::fs::read(&reduced).unwrap(), std::fs::read(&again).unwrap());
    ok(&["cluster", "--in", p(&reduced), "--sn", "4", "--seed", "7", "--out", p(&states)]);
    for name in ["som_4x4.json", "som_5x5.json", "som_6x6.json", "u_matrix_4x4.csv", "states.json", "states.csv", "sequences.csv"] {
        assert!(states.join(name).exists(), "{name}");
    }
}

#[test]
fn truncated_files_are_skipped_and_empty_inputs_fail() {
    let w = tempfile::tempdir().unwrap();
    let run = w.path().join("run");
    ok(&["--seed", "7", "learn", "--synthetic", "--out", p(&run)]);
    let ops = w.path().join("ops");
    ok(&["--seed", "3", "simulate", "--out", p(&ops), "--n", "4", "--spec", p(&write_spec(w.path()))]);
    let bad = ops.join("zz_truncated.csv");
    std::fs::write(&bad, "t,power_kw\n0.0,0.1\n0.01,").unwrap();
    std::fs::remove_file(ops.join("manifest.json")).unwrap();
    let args = |input: &Path, out: &Path| {
        vec![
            "assess".to_string(), "--ensemble".into(), p(&run.join("ensemble.json")).into(), "--kpca".into(),
            p(&run.join("kpca.json")).into(), "--input".into(), p(input).into(), "--out".into(), p(out).into(),
        ]
    };
    let a = args(&ops, &w.path().join("v.csv"));
    let out = pdakit(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 files skipped"));
    // four operations form one window
    let text = std::fs::read_to_string(w.path().join("v.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);

    // the same operations streamed on stdin, plus one with a broken row
    let mut stream = String::from("sample_id,t,power_kw\n");
    for k in 0..4 {
        let sig = pdakit_core::io::read_signal_csv(&ops.join(format!("NS_{k:04}.csv")), "x").unwrap();
        for (t, p) in sig.t.iter().zip(&sig.p) {
            stream.push_str(&format!("op{k},{t},{p}\n"));
        }
    }
    stream.push_str("broken,0.0,0.1\nbroken,0.01\n");
    let a = args(Path::new("-"), &w.path().join("v_stream.csv"));
    let mut child = Command::new(env!("CARGO_BIN_EXE_pdakit"))
        .args(&a)
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stream.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("4 operations (1 files skipped)"));
    let streamed = std::fs::read_to_string(w.path().join("v_stream.csv")).unwrap();
    // identical verdicts apart from the sample ids
    let cols = |s: &str| -> Vec<String> { s.lines().map(|l| l.split(',').skip(3).collect::<Vec<_>>().join(",")).collect() };
    assert_eq!(cols(&streamed), cols(&text));

    let only_bad = w.path().join("bad");
    std::fs::create_dir(&only_bad).unwrap();
    std::fs::copy(&bad, only_bad.join("a.csv")).unwrap();
    let a = args(&only_bad, &w.path().join("v2.csv"));
    assert_eq!(pdakit(&a.iter().map(String::as_str).collect::<Vec<_>>()).status.code(), Some(3));
}

fn write_spec(dir: &Path) -> std::path::PathBuf {
    let lib = pdakit_core::synth::SynthLibrary::default();
    let path = dir.join("spec.json");
    pdakit_core::io::save_json(&path, &lib.normal).unwrap();
    path
}

#[test]
fn exit_codes_follow_the_error_class() {
    let w = tempfile::tempdir().unwrap();
    // argument errors and bad configuration are configuration errors
    assert_eq!(code(&["learn", "--bogus"]), 2);
    let cfg = w.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"hmm": {"k": 0}}"#).unwrap();
    assert_eq!(code(&["--config", p(&cfg), "learn", "--synthetic", "--out", p(&w.path().join("r"))]), 2);
    std::fs::write(&cfg, "{not json").unwrap();
    assert_eq!(code(&["--config", p(&cfg), "learn", "--synthetic", "--out", p(&w.path().join("r"))]), 2);
    // a missing input file is a data error
    assert_eq!(code(&["select", "--faults", "/nonexistent/f.csv", "--normal", "/nonexistent/n.csv", "--out", "x.json"]), 3);
    // a stage that fails on empty input
    let empty = w.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let c = w.path().join("c");
    ok(&["--seed", "7", "simulate", "--out", p(&c)]);
    let (nd, fd, r) = (c.join("normal"), c.join("faults"), w.path().join("r"));
    let args = ["learn", "--normal", p(&nd), "--nonfault", p(&empty), "--faults", p(&fd), "--out", p(&r)];
    assert_eq!(code(&args), 4);
}

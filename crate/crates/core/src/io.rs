//! Persistence: signal CSVs, corpus manifests, feature matrices with JSON
//! sidecars, JSON artifacts and content hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureFlag, FeatureMatrix, FeatureOptions};
use crate::signal::{PhaseConfig, PowerSignal, SegmentConfig};

pub const SIGNAL_HEADER: [&str; 2] = ["t", "power_kw"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    Ok(())
}

pub fn read_signal_csv(path: &Path, sample_id: &str) -> Result<PowerSignal> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != SIGNAL_HEADER {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected header `t,power_kw`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                reason: format!("row {}: unreadable value", line + 2),
            })
        };
        t.push(parse(0)?);
        p.push(parse(1)?);
    }
    PowerSignal::new(sample_id, t, p)
}

pub fn write_signal_csv(path: &Path, sig: &PowerSignal) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(SIGNAL_HEADER).map_err(csv_err(path))?;
    for (t, p) in sig.t.iter().zip(&sig.p) {
        w.write_record([t.to_string(), p.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub entries: Vec<ManifestEntry>,
}

/// Signals read from a manifest, and the entries that could not be read.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub signals: Vec<PowerSignal>,
    pub skipped: Vec<(PathBuf, String)>,
}

fn sample_id_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Reads every entry; unreadable or invalid files are skipped and reported.
pub fn load_corpus(manifest_path: &Path) -> Result<LoadedCorpus> {
    let manifest: CorpusManifest = load_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let mut out = LoadedCorpus {
        signals: Vec::new(),
        skipped: Vec::new(),
    };
    for e in &manifest.entries {
        let path = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
        match read_signal_csv(&path, &sample_id_of(&path)) {
            Ok(sig) => out.signals.push(match &e.label {
                Some(l) => sig.with_label(l.clone()),
                None => sig,
            }),
            Err(err) => {
                log::warn!("skipping {}: {err}", path.display());
                out.skipped.push((path, err.to_string()));
            }
        }
    }
    Ok(out)
}

/// Reads every `*.csv` in a directory in file-name order, skipping bad files.
pub fn load_signal_dir(dir: &Path) -> Result<LoadedCorpus> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut out = LoadedCorpus {
        signals: Vec::new(),
        skipped: Vec::new(),
    };
    for path in paths {
        match read_signal_csv(&path, &sample_id_of(&path)) {
            Ok(sig) => out.signals.push(sig),
            Err(err) => {
                log::warn!("skipping {}: {err}", path.display());
                out.skipped.push((path, err.to_string()));
            }
        }
    }
    Ok(out)
}

/// Writes each signal as `<dir>/<sample_id>.csv` plus `<dir>/manifest.json`.
pub fn write_corpus(dir: &Path, signals: &[PowerSignal]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(signals.len());
    for s in signals {
        let name = PathBuf::from(format!("{}.csv", s.sample_id));
        write_signal_csv(&dir.join(&name), s)?;
        entries.push(ManifestEntry {
            path: name,
            label: s.label.clone(),
        });
    }
    let path = dir.join("manifest.json");
    save_json(
        &path,
        &CorpusManifest {
            schema_version: crate::SCHEMA_VERSION,
            entries,
        },
    )?;
    Ok(path)
}

/// Metadata stored next to a feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub schema_version: u32,
    pub sample_ids: Vec<String>,
    pub labels: Vec<Option<String>>,
    pub flags: Vec<Vec<FeatureFlag>>,
    #[serde(default)]
    pub phases: Option<PhaseConfig>,
    #[serde(default)]
    pub segments: Option<SegmentConfig>,
    #[serde(default)]
    pub options: Option<FeatureOptions>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Feature CSV (header of symbols) and its `.json` sidecar.
pub fn write_features(
    path: &Path,
    m: &FeatureMatrix,
    config: Option<(&PhaseConfig, &SegmentConfig, &FeatureOptions)>,
) -> Result<()> {
    write_table(path, &m.symbols, &m.rows)?;
    let sidecar = FeatureSidecar {
        schema_version: crate::SCHEMA_VERSION,
        sample_ids: m.sample_ids.clone(),
        labels: m.labels.clone(),
        flags: m.flags.clone(),
        phases: config.map(|c| c.0.clone()),
        segments: config.map(|c| c.1.clone()),
        options: config.map(|c| c.2.clone()),
    };
    save_json(&sidecar_path(path), &sidecar)
}

/// Reads a feature CSV; the sidecar is used when present.
pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let (symbols, rows) = read_table(path)?;
    let n = rows.len();
    let side = sidecar_path(path);
    let mut m = FeatureMatrix::from_rows(symbols, rows)?;
    if side.exists() {
        let s: FeatureSidecar = load_json(&side)?;
        if s.sample_ids.len() != n || s.labels.len() != n || s.flags.len() != n {
            return Err(Error::Format {
                path: side,
                reason: format!("sidecar describes {} rows, table has {n}", s.sample_ids.len()),
            });
        }
        m.sample_ids = s.sample_ids;
        m.labels = s.labels;
        m.flags = s.flags;
    }
    Ok(m)
}

/// Numeric CSV with a header row.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = rdr.headers().map_err(csv_err(path))?.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("row {}: {e}", line + 2),
            })?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// CSV of string cells.
pub fn write_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

//! Time-domain (per phase) and value-domain (per segment) statistics of a
//! power trace, the feature matrix that stacks them, and min-max scaling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{split_phases, split_segments, Part, PhaseConfig, PowerSignal, SegmentConfig};

pub const TIME_FEATURES: usize = 10;
pub const VALUE_FEATURES: usize = 8;

/// Denominator used by the per-phase kurtosis entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KurtosisMode {
    /// Variance over the squared max-difference of the phase.
    #[default]
    VarianceOverRange,
    /// Fourth central moment over squared variance.
    FourthMoment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    #[serde(default)]
    pub kurtosis: KurtosisMode,
    /// Bin width used to take the mode of continuous power values.
    #[serde(default = "default_mode_resolution")]
    pub mode_resolution_kw: f64,
}

fn default_mode_resolution() -> f64 {
    0.01
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            kurtosis: KurtosisMode::default(),
            mode_resolution_kw: default_mode_resolution(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    /// The phase or segment had no points; the value is 0.
    EmptyPart,
    /// A ratio had a zero denominator; the value is 0.
    ZeroDenominator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlag {
    pub column: usize,
    pub kind: FlagKind,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Most frequent bin of `v` at width `res`; ties go to the lowest bin.
fn binned_mode(v: &[f64], res: f64) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &x in v {
        *counts.entry((x / res).round() as i64).or_default() += 1;
    }
    let mut best = (i64::MIN, 0usize);
    for (&bin, &c) in &counts {
        if c > best.1 {
            best = (bin, c);
        }
    }
    best.0 as f64 * res
}

/// Ten phase statistics in order: out-to-in, max difference, mean, RMS,
/// variance, sum of difference, kurtosis, crest, form and impulse factors.
/// Returned flags use local indices 0..10.
pub fn time_features(p: &[f64], opts: &FeatureOptions) -> ([f64; TIME_FEATURES], Vec<FeatureFlag>) {
    if p.is_empty() {
        let flags = (0..TIME_FEATURES)
            .map(|column| FeatureFlag {
                column,
                kind: FlagKind::EmptyPart,
            })
            .collect();
        return ([0.0; TIME_FEATURES], flags);
    }
    let mut flags = Vec::new();
    let mut ratio = |num: f64, den: f64, column: usize| {
        if den == 0.0 {
            flags.push(FeatureFlag {
                column,
                kind: FlagKind::ZeroDenominator,
            });
            0.0
        } else {
            num / den
        }
    };

    let n = p.len() as f64;
    let out_to_in = p[p.len() - 1] - p[0];
    let peak = max_of(p);
    let max_diff = peak - min_of(p);
    let m = mean(p);
    let rms = (p.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let var = p.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let sum_diff: f64 = p.windows(2).map(|w| w[1] - w[0]).sum();
    let kurt = match opts.kurtosis {
        KurtosisMode::VarianceOverRange => ratio(var, max_diff * max_diff, 6),
        KurtosisMode::FourthMoment => {
            let m4 = p.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
            ratio(m4, var * var, 6)
        }
    };
    let crest = ratio(peak, rms, 7);
    let form = ratio(rms, m, 8);
    let impulse = ratio(peak, m, 9);
    (
        [out_to_in, max_diff, m, rms, var, sum_diff, kurt, crest, form, impulse],
        flags,
    )
}

/// Eight segment statistics in order: latest timestamp, mean power, point
/// count, power range, median power, max power, median timestamp, binned mode.
pub fn value_features(part: &Part, opts: &FeatureOptions) -> ([f64; VALUE_FEATURES], Vec<FeatureFlag>) {
    if part.is_empty() {
        let flags = (0..VALUE_FEATURES)
            .map(|column| FeatureFlag {
                column,
                kind: FlagKind::EmptyPart,
            })
            .collect();
        return ([0.0; VALUE_FEATURES], flags);
    }
    let p = &part.p;
    let t = &part.t;
    (
        [
            max_of(t),
            mean(p),
            p.len() as f64,
            max_of(p) - min_of(p),
            median(p),
            max_of(p),
            median(t),
            binned_mode(p, opts.mode_resolution_kw),
        ],
        Vec::new(),
    )
}

/// Column symbols: `t_<phase>_<k>` for every phase, then `v_<segment>_<k>`.
pub fn registry(phases: usize, segments: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(TIME_FEATURES * phases + VALUE_FEATURES * segments);
    for i in 1..=phases {
        for m in 1..=TIME_FEATURES {
            out.push(format!("t_{i}_{m}"));
        }
    }
    for j in 1..=segments {
        for n in 1..=VALUE_FEATURES {
            out.push(format!("v_{j}_{n}"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub flags: Vec<FeatureFlag>,
}

/// Builds the full feature vector of one trace: every phase block, then every
/// segment block.
pub fn assemble(sig: &PowerSignal, pc: &PhaseConfig, sc: &SegmentConfig, opts: &FeatureOptions) -> Result<FeatureVector> {
    sig.validate()?;
    let mut values = Vec::with_capacity(TIME_FEATURES * pc.count() + VALUE_FEATURES * sc.count());
    let mut flags = Vec::new();
    for part in split_phases(sig, pc).parts {
        let (v, f) = time_features(&part.p, opts);
        let base = values.len();
        flags.extend(f.into_iter().map(|fl| FeatureFlag {
            column: base + fl.column,
            ..fl
        }));
        values.extend_from_slice(&v);
    }
    for part in split_segments(sig, sc).parts {
        let (v, f) = value_features(&part, opts);
        let base = values.len();
        flags.extend(f.into_iter().map(|fl| FeatureFlag {
            column: base + fl.column,
            ..fl
        }));
        values.extend_from_slice(&v);
    }
    Ok(FeatureVector { values, flags })
}

/// N samples by D columns sharing one symbol registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub symbols: Vec<String>,
    pub sample_ids: Vec<String>,
    pub labels: Vec<Option<String>>,
    pub rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub flags: Vec<Vec<FeatureFlag>>,
}

impl FeatureMatrix {
    pub fn empty(symbols: Vec<String>) -> Self {
        Self {
            symbols,
            sample_ids: Vec::new(),
            labels: Vec::new(),
            rows: Vec::new(),
            flags: Vec::new(),
        }
    }

    /// Plain numeric matrix with generated ids and no labels.
    pub fn from_rows(symbols: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::empty(symbols);
        for (i, r) in rows.into_iter().enumerate() {
            m.push(format!("row{i}"), None, r, Vec::new())?;
        }
        Ok(m)
    }

    pub fn push(&mut self, id: String, label: Option<String>, values: Vec<f64>, flags: Vec<FeatureFlag>) -> Result<()> {
        if values.len() != self.symbols.len() {
            return Err(Error::DimensionMismatch {
                expected: self.symbols.len(),
                got: values.len(),
            });
        }
        self.sample_ids.push(id);
        self.labels.push(label);
        self.rows.push(values);
        self.flags.push(flags);
        Ok(())
    }

    /// Extracts every signal with the same configuration.
    pub fn extract(signals: &[PowerSignal], pc: &PhaseConfig, sc: &SegmentConfig, opts: &FeatureOptions) -> Result<Self> {
        let mut m = Self::empty(registry(pc.count(), sc.count()));
        for sig in signals {
            let fv = assemble(sig, pc, sc, opts)?;
            m.push(sig.sample_id.clone(), sig.label.clone(), fv.values, fv.flags)?;
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[d]).collect()
    }

    pub fn select_columns(&self, dims: &[usize]) -> Result<Self> {
        if let Some(&bad) = dims.iter().find(|&&d| d >= self.n_cols()) {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                got: bad + 1,
            });
        }
        let remap: BTreeMap<usize, usize> = dims.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        Ok(Self {
            symbols: dims.iter().map(|&d| self.symbols[d].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
            labels: self.labels.clone(),
            rows: self.rows.iter().map(|r| dims.iter().map(|&d| r[d]).collect()).collect(),
            flags: self
                .flags
                .iter()
                .map(|fs| {
                    fs.iter()
                        .filter_map(|f| remap.get(&f.column).map(|&c| FeatureFlag { column: c, ..*f }))
                        .collect()
                })
                .collect(),
        })
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            symbols: self.symbols.clone(),
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i].clone()).collect(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
            flags: rows
                .iter()
                .map(|&i| self.flags.get(i).cloned().unwrap_or_default())
                .collect(),
        }
    }

    /// Row-wise concatenation; all parts must share the registry.
    pub fn concat(parts: &[&FeatureMatrix]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Empty("no matrices to concatenate".into()))?;
        let mut out = Self::empty(first.symbols.clone());
        for m in parts {
            if m.symbols != first.symbols {
                return Err(Error::DimensionMismatch {
                    expected: first.n_cols(),
                    got: m.n_cols(),
                });
            }
            out.sample_ids.extend(m.sample_ids.iter().cloned());
            out.labels.extend(m.labels.iter().cloned());
            out.rows.extend(m.rows.iter().cloned());
            out.flags
                .extend((0..m.n_rows()).map(|i| m.flags.get(i).cloned().unwrap_or_default()));
        }
        Ok(out)
    }

    /// Distinct labels in first-appearance order.
    pub fn distinct_labels(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for l in self.labels.iter().flatten() {
            if !seen.contains(l) {
                seen.push(l.clone());
            }
        }
        seen
    }

    /// Row indices carrying `label`.
    pub fn rows_with_label(&self, label: &str) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.as_deref() == Some(label))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-dimension min-max statistics of a reference matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    /// Dimensions with max == min in the reference; mapped to 0.
    pub degenerate: Vec<usize>,
    /// Number of values outside [0, 1] (left unclipped).
    pub out_of_range: usize,
}

impl MinMaxScaler {
    pub fn fit(reference: &FeatureMatrix) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::Empty("normalization reference has no rows".into()));
        }
        let d = reference.n_cols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in &reference.rows {
            for k in 0..d {
                min[k] = min[k].min(r[k]);
                max[k] = max[k].max(r[k]);
            }
        }
        Ok(Self { min, max })
    }

    pub fn degenerate(&self) -> Vec<usize> {
        (0..self.min.len()).filter(|&k| self.max[k] == self.min[k]).collect()
    }

    pub fn scale_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(k, &z)| {
                let span = self.max[k] - self.min[k];
                if span == 0.0 {
                    0.0
                } else {
                    (z - self.min[k]) / span
                }
            })
            .collect()
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<(FeatureMatrix, NormalizationReport)> {
        if m.n_cols() != self.min.len() {
            return Err(Error::DimensionMismatch {
                expected: self.min.len(),
                got: m.n_cols(),
            });
        }
        let mut out = m.clone();
        let mut report = NormalizationReport {
            degenerate: self.degenerate(),
            out_of_range: 0,
        };
        for r in &mut out.rows {
            *r = self.scale_row(r);
            report.out_of_range += r.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        }
        Ok((out, report))
    }
}

/// Scales `m` with the min/max of `reference`.
pub fn minmax_normalize(m: &FeatureMatrix, reference: &FeatureMatrix) -> Result<(FeatureMatrix, NormalizationReport)> {
    MinMaxScaler::fit(reference)?.transform(m)
}

//! Two-class Fisher scoring, within-class correlation redundancy, the
//! three-step feature selection and the multi health-index set.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Fault samples grouped into classes.
#[derive(Debug, Clone)]
pub struct LabeledFaultSet {
    pub matrix: FeatureMatrix,
    pub class_of_row: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledFaultSet {
    /// Groups rows by their label, classes in first-appearance order.
    pub fn from_labels(matrix: FeatureMatrix) -> Result<Self> {
        let class_names = matrix.distinct_labels();
        let class_of_row = matrix
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let l = l.as_ref().ok_or_else(|| {
                    Error::Empty(format!("fault sample `{}` has no class label", matrix.sample_ids[i]))
                })?;
                Ok(class_names.iter().position(|c| c == l).unwrap())
            })
            .collect::<Result<Vec<_>>>()?;
        let set = Self {
            matrix,
            class_of_row,
            class_names,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_of_row.len() != self.matrix.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.n_rows(),
                got: self.class_of_row.len(),
            });
        }
        for c in 0..self.class_names.len() {
            if !self.class_of_row.contains(&c) {
                return Err(Error::Empty(format!("fault class `{}` has no samples", self.class_names[c])));
            }
        }
        if self.class_of_row.iter().any(|&c| c >= self.class_names.len()) {
            return Err(Error::Config("row assigned to an unknown fault class".into()));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_rows(&self, class: usize) -> Vec<usize> {
        (0..self.class_of_row.len()).filter(|&i| self.class_of_row[i] == class).collect()
    }

    pub fn class_matrix(&self, class: usize) -> FeatureMatrix {
        self.matrix.subset(&self.class_rows(class))
    }
}

mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Score {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Score>> = v
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&x| if x.is_infinite() { Score::Text("inf".into()) } else { Score::Num(x) })
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let rows: Vec<Vec<Score>> = Vec::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|s| match s {
                        Score::Num(x) => x,
                        Score::Text(_) => f64::INFINITY,
                    })
                    .collect()
            })
            .collect())
    }

    pub mod scalar {
        use super::Score;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
            if x.is_infinite() { Score::Text("inf".into()) } else { Score::Num(*x) }.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(match Score::deserialize(d)? {
                Score::Num(x) => x,
                Score::Text(_) => f64::INFINITY,
            })
        }
    }
}

/// Fisher criterion per fault class and dimension against the normal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherTable {
    pub class_names: Vec<String>,
    #[serde(with = "inf_as_string")]
    pub scores: Vec<Vec<f64>>,
    pub class_means: Vec<Vec<f64>>,
    pub normal_mean: Vec<f64>,
}

fn column_mean(rows: &[&[f64]], d: usize) -> f64 {
    rows.iter().map(|r| r[d]).sum::<f64>() / rows.len() as f64
}

fn scatter(rows: &[&[f64]], d: usize, mean: f64) -> f64 {
    rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / rows.len() as f64
}

/// Between-class over within-class scatter per dimension. `second` plays the
/// comparison (normal) role. Zero within-class scatter gives `+inf` when the
/// means differ and 0 when they coincide.
pub fn two_class_scores(first: &[&[f64]], second: &[&[f64]], dims: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut scores = Vec::with_capacity(dims);
    let mut m1 = Vec::with_capacity(dims);
    let mut m2 = Vec::with_capacity(dims);
    for d in 0..dims {
        let y = column_mean(first, d);
        let z = column_mean(second, d);
        let between = (y - z).powi(2);
        let within = scatter(first, d, y) + scatter(second, d, z);
        let f = if within > 0.0 {
            between / within
        } else if between > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        scores.push(f);
        m1.push(y);
        m2.push(z);
    }
    (scores, m1, m2)
}

fn row_refs<'a>(m: &'a FeatureMatrix, rows: &[usize]) -> Vec<&'a [f64]> {
    rows.iter().map(|&i| m.rows[i].as_slice()).collect()
}

pub fn fisher_scores(faults: &LabeledFaultSet, normal: &FeatureMatrix) -> Result<FisherTable> {
    faults.validate()?;
    if normal.is_empty() {
        return Err(Error::Empty("normal set has no rows".into()));
    }
    if normal.n_cols() != faults.matrix.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: faults.matrix.n_cols(),
            got: normal.n_cols(),
        });
    }
    let dims = normal.n_cols();
    let normal_rows: Vec<usize> = (0..normal.n_rows()).collect();
    let normal_refs = row_refs(normal, &normal_rows);
    let mut table = FisherTable {
        class_names: faults.class_names.clone(),
        scores: Vec::new(),
        class_means: Vec::new(),
        normal_mean: Vec::new(),
    };
    for c in 0..faults.n_classes() {
        let rows = faults.class_rows(c);
        let (s, y, z) = two_class_scores(&row_refs(&faults.matrix, &rows), &normal_refs, dims);
        table.scores.push(s);
        table.class_means.push(y);
        table.normal_mean = z;
    }
    Ok(table)
}

/// Pearson coefficient about the column means. `None` when either column has
/// zero spread.
pub fn pearson(fp: &[f64], fq: &[f64]) -> Option<f64> {
    let n = fp.len().min(fq.len());
    if n < 2 {
        return None;
    }
    let mp = fp[..n].iter().sum::<f64>() / n as f64;
    let mq = fq[..n].iter().sum::<f64>() / n as f64;
    let (mut spq, mut spp, mut sqq) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let a = fp[k] - mp;
        let b = fq[k] - mq;
        spq += a * b;
        spp += a * a;
        sqq += b * b;
    }
    if spp == 0.0 || sqq == 0.0 {
        return None;
    }
    Some((spq / (spp.sqrt() * sqq.sqrt())).clamp(-1.0, 1.0))
}

/// Descending score order with ties to the lower index.
fn by_score_desc(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

fn argmax(scores: &[f64]) -> Option<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(by_score_desc(scores));
    idx.first().copied().filter(|&i| scores[i] > 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    /// Fraction of the per-class maximum score a dimension must reach.
    pub threshold_ratio: f64,
    /// Absolute correlation above which the weaker dimension of a pair is dropped.
    pub redundancy_cutoff: f64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            threshold_ratio: 0.5,
            redundancy_cutoff: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyDrop {
    pub dropped: usize,
    pub kept: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSelection {
    pub class_name: String,
    #[serde(with = "inf_as_string::scalar")]
    pub threshold: f64,
    pub above_threshold: Vec<usize>,
    pub dropped: Vec<RedundancyDrop>,
    pub retained: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub dims: Vec<usize>,
    pub symbols: Vec<String>,
    pub per_class: Vec<ClassSelection>,
    pub table: FisherTable,
}

/// Per class: keep dimensions scoring at least `ratio * max`, then drop the
/// weaker member of every pair correlated above the cutoff within the class.
/// The result is the union over classes in registry order.
pub fn select_features(faults: &LabeledFaultSet, normal: &FeatureMatrix, opts: &SelectOptions) -> Result<Selection> {
    let table = fisher_scores(faults, normal)?;
    let dims = normal.n_cols();
    let mut union = vec![false; dims];
    let mut per_class = Vec::new();
    for (c, scores) in table.scores.iter().enumerate() {
        let max = scores.iter().copied().fold(0.0, f64::max);
        let threshold = max * opts.threshold_ratio;
        let mut above: Vec<usize> = if max > 0.0 {
            (0..dims).filter(|&d| scores[d] >= threshold).collect()
        } else {
            Vec::new()
        };
        above.sort_by(by_score_desc(scores));

        let class = faults.class_matrix(c);
        let cols: Vec<Vec<f64>> = above.iter().map(|&d| class.column(d)).collect();
        let mut dropped_flag = vec![false; above.len()];
        let mut dropped = Vec::new();
        for i in 0..above.len() {
            for j in (i + 1)..above.len() {
                // `above` is sorted, so `j` is the weaker (or tied, higher-index) member
                if let Some(rho) = pearson(&cols[i], &cols[j]) {
                    if rho.abs() > opts.redundancy_cutoff && !dropped_flag[j] {
                        dropped_flag[j] = true;
                        dropped.push(RedundancyDrop {
                            dropped: above[j],
                            kept: above[i],
                            rho,
                        });
                    }
                }
            }
        }
        let mut retained: Vec<usize> = above
            .iter()
            .zip(&dropped_flag)
            .filter(|(_, &d)| !d)
            .map(|(&k, _)| k)
            .collect();
        retained.sort_unstable();
        for &d in &retained {
            union[d] = true;
        }
        let mut above_sorted = above.clone();
        above_sorted.sort_unstable();
        per_class.push(ClassSelection {
            class_name: table.class_names[c].clone(),
            threshold,
            above_threshold: above_sorted,
            dropped,
            retained,
        });
    }
    let dims_sel: Vec<usize> = (0..dims).filter(|&d| union[d]).collect();
    if dims_sel.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(Selection {
        symbols: dims_sel.iter().map(|&d| normal.symbols[d].clone()).collect(),
        dims: dims_sel,
        per_class,
        table,
    })
}

/// Health-index dimensions with the state pairs that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiSet {
    pub idx: Vec<usize>,
    pub symbols: Vec<String>,
    /// For each index, the `a|b` pairs whose most discriminative dimension it is.
    pub provenance: Vec<Vec<String>>,
}

impl HiSet {
    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }
}

/// Collects the top-Fisher dimension of every fault pair (the second fault
/// taking the comparison role) and of every fault against normal.
pub fn build_hi_set(faults: &LabeledFaultSet, normal: &FeatureMatrix, normal_name: &str) -> Result<HiSet> {
    if faults.n_classes() < 2 {
        return Err(Error::Config("health-index set needs at least two fault classes".into()));
    }
    let table = fisher_scores(faults, normal)?;
    let dims = normal.n_cols();
    let mut picks: Vec<(usize, String)> = Vec::new();
    let class_rows: Vec<Vec<usize>> = (0..faults.n_classes()).map(|c| faults.class_rows(c)).collect();
    for a in 0..faults.n_classes() {
        for b in (a + 1)..faults.n_classes() {
            let (scores, _, _) = two_class_scores(
                &row_refs(&faults.matrix, &class_rows[a]),
                &row_refs(&faults.matrix, &class_rows[b]),
                dims,
            );
            if let Some(d) = argmax(&scores) {
                picks.push((d, format!("{}|{}", faults.class_names[a], faults.class_names[b])));
            }
        }
    }
    for (c, scores) in table.scores.iter().enumerate() {
        if let Some(d) = argmax(scores) {
            picks.push((d, format!("{}|{}", faults.class_names[c], normal_name)));
        }
    }
    let mut idx: Vec<usize> = picks.iter().map(|(d, _)| *d).collect();
    idx.sort_unstable();
    idx.dedup();
    if idx.is_empty() {
        return Err(Error::EmptySelection);
    }
    let provenance = idx
        .iter()
        .map(|&d| picks.iter().filter(|(p, _)| *p == d).map(|(_, s)| s.clone()).collect())
        .collect();
    Ok(HiSet {
        symbols: idx.iter().map(|&d| normal.symbols[d].clone()).collect(),
        idx,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>, labels: &[&str]) -> FeatureMatrix {
        let d = rows[0].len();
        let mut m = FeatureMatrix::empty((0..d).map(|k| format!("f{k}")).collect());
        for (i, r) in rows.into_iter().enumerate() {
            let label = labels.get(i).map(|s| s.to_string());
            m.push(format!("r{i}"), label, r, vec![]).unwrap();
        }
        m
    }

    #[test]
    fn identical_columns_score_zero() {
        let f = LabeledFaultSet::from_labels(matrix(vec![vec![1.0], vec![2.0]], &["A", "A"])).unwrap();
        let n = matrix(vec![vec![1.0], vec![2.0]], &[]);
        let t = fisher_scores(&f, &n).unwrap();
        assert_eq!(t.scores[0][0], 0.0);
    }

    #[test]
    fn hand_evaluated_score() {
        let f = LabeledFaultSet::from_labels(matrix(vec![vec![0.9], vec![1.1]], &["A", "A"])).unwrap();
        let n = matrix(vec![vec![-0.1], vec![0.1]], &[]);
        let t = fisher_scores(&f, &n).unwrap();
        assert!((t.scores[0][0] - 50.0).abs() < 1e-9);
        assert!((t.class_means[0][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_scatter_sentinels() {
        let f = LabeledFaultSet::from_labels(matrix(vec![vec![1.0, 0.0], vec![1.0, 0.0]], &["A", "A"])).unwrap();
        let n = matrix(vec![vec![0.0, 0.0], vec![0.0, 0.0]], &[]);
        let t = fisher_scores(&f, &n).unwrap();
        assert_eq!(t.scores[0], vec![f64::INFINITY, 0.0]);
    }

    #[test]
    fn infinite_scores_survive_json() {
        let t = FisherTable {
            class_names: vec!["A".into()],
            scores: vec![vec![f64::INFINITY, 2.5]],
            class_means: vec![vec![1.0, 1.0]],
            normal_mean: vec![0.0, 0.0],
        };
        let text = serde_json::to_string(&t).unwrap();
        assert!(text.contains("\"inf\""));
        let back: FisherTable = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn pearson_basic_cases() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, -1.0, 0.0], &[1.0, 1.0, -2.0]).unwrap().abs() < 1e-12);
        assert_eq!(pearson(&x, &[3.0; 4]), None);
    }

    #[test]
    fn half_max_rule_and_redundancy_trace() {
        // one class; dim scores [10, 6, 4, 1] realised via mean shifts over unit scatter
        // dims 0 and 1 perfectly correlated inside the fault class
        let fault_rows = vec![
            vec![10f64.sqrt() + 1.0, 6f64.sqrt() + 1.0, 4f64.sqrt() + 1.0, 1.0 + 1.0],
            vec![10f64.sqrt() - 1.0, 6f64.sqrt() - 1.0, 4f64.sqrt() - 1.0, 1.0 - 1.0],
        ];
        let normal_rows = vec![vec![0.0; 4], vec![0.0; 4]];
        // normal scatter is zero; fault scatter is 1 per dimension => F = mean^2
        let f = LabeledFaultSet::from_labels(matrix(fault_rows, &["A", "A"])).unwrap();
        let n = matrix(normal_rows, &[]);
        let t = fisher_scores(&f, &n).unwrap();
        for (got, want) in t.scores[0].iter().zip([10.0, 6.0, 4.0, 1.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        let sel = select_features(&f, &n, &SelectOptions::default()).unwrap();
        assert_eq!(sel.per_class[0].above_threshold, vec![0, 1]);
        assert_eq!(sel.dims, vec![0]);
        assert_eq!(sel.per_class[0].dropped[0].dropped, 1);
    }

    #[test]
    fn duplicate_top_columns_keep_lower_index() {
        let fault_rows = vec![vec![3.0, 3.0, 0.0], vec![5.0, 5.0, 0.1]];
        let f = LabeledFaultSet::from_labels(matrix(fault_rows, &["A", "A"])).unwrap();
        let n = matrix(vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 0.1]], &[]);
        let sel = select_features(&f, &n, &SelectOptions::default()).unwrap();
        assert_eq!(sel.dims, vec![0]);
    }

    #[test]
    fn all_zero_scores_is_an_error() {
        let f = LabeledFaultSet::from_labels(matrix(vec![vec![1.0], vec![2.0]], &["A", "A"])).unwrap();
        let n = matrix(vec![vec![1.0], vec![2.0]], &[]);
        assert!(matches!(select_features(&f, &n, &SelectOptions::default()), Err(Error::EmptySelection)));
    }

    #[test]
    fn hi_set_counts_pairs_and_normal_comparisons() {
        // A differs from normal in dim 0, B in dim 1; A vs B argmax is dim 0 or 1
        let rows = vec![
            vec![5.0, 0.0, 0.0],
            vec![5.2, 0.1, 0.1],
            vec![0.0, 3.0, 0.0],
            vec![0.1, 3.1, 0.1],
        ];
        let f = LabeledFaultSet::from_labels(matrix(rows, &["A", "A", "B", "B"])).unwrap();
        let n = matrix(vec![vec![0.0, 0.0, 0.0], vec![0.1, 0.1, 0.1]], &[]);
        let hi = build_hi_set(&f, &n, "NS").unwrap();
        assert!(hi.len() <= 3);
        assert_eq!(hi.idx, vec![0, 1]);
        assert!(hi.provenance[0].contains(&"A|NS".to_string()));
        assert!(hi.provenance[1].contains(&"B|NS".to_string()));
    }

    #[test]
    fn hi_set_needs_two_classes() {
        let f = LabeledFaultSet::from_labels(matrix(vec![vec![1.0], vec![2.0]], &["A", "A"])).unwrap();
        let n = matrix(vec![vec![0.0], vec![0.5]], &[]);
        assert!(build_hi_set(&f, &n, "NS").is_err());
    }

    #[test]
    fn unlabeled_fault_rows_rejected() {
        assert!(LabeledFaultSet::from_labels(matrix(vec![vec![1.0], vec![2.0]], &["A"])).is_err());
    }
}

//! Health-index profiles and the rules that turn latent states into valid,
//! severity-ordered groups evolving toward a fault.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, MinMaxScaler};
use crate::select::{HiSet, LabeledFaultSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Normal,
    Latent,
    Fault,
}

/// Mean normalized value of each health-index dimension over one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthIndexProfile {
    pub id: String,
    pub kind: StateKind,
    pub values: Vec<f64>,
    pub n_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssessThresholds {
    /// Slack around the normal..fault interval.
    pub tau: f64,
    /// Minimum |fault - normal| for a dimension to count as discriminative.
    pub delta: f64,
    /// Fraction of discriminative dimensions that must agree.
    pub theta: f64,
    /// Largest deviation still treated as normal.
    pub epsilon: f64,
}

impl Default for AssessThresholds {
    fn default() -> Self {
        Self {
            tau: 0.05,
            delta: 0.1,
            theta: 0.7,
            epsilon: 0.05,
        }
    }
}

/// Min-max scaling of the health-index dimensions, fitted on a union of sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiScale {
    pub idx: Vec<usize>,
    pub scaler: MinMaxScaler,
}

impl HiScale {
    pub fn fit(parts: &[&FeatureMatrix], hi: &HiSet) -> Result<Self> {
        let union = FeatureMatrix::concat(parts)?;
        if let Some(&d) = hi.idx.iter().find(|&&d| d >= union.n_cols()) {
            return Err(Error::DimensionMismatch {
                expected: union.n_cols(),
                got: d + 1,
            });
        }
        let scaler = MinMaxScaler::fit(&union.select_columns(&hi.idx)?)?;
        Ok(Self {
            idx: hi.idx.clone(),
            scaler,
        })
    }

    /// Profile of `rows` of `m`.
    pub fn profile(&self, m: &FeatureMatrix, rows: &[usize], id: &str, kind: StateKind) -> Result<HealthIndexProfile> {
        if rows.is_empty() {
            return Err(Error::Empty(format!("state `{id}` has no rows")));
        }
        let mut acc = vec![0.0; self.idx.len()];
        for &r in rows {
            let raw: Vec<f64> = self.idx.iter().map(|&d| m.rows[r][d]).collect();
            for (a, v) in acc.iter_mut().zip(self.scaler.scale_row(&raw)) {
                *a += v;
            }
        }
        let n = rows.len() as f64;
        Ok(HealthIndexProfile {
            id: id.to_string(),
            kind,
            values: acc.into_iter().map(|a| a / n).collect(),
            n_rows: rows.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub hi: HiSet,
    pub scale: HiScale,
    pub normal: HealthIndexProfile,
    pub faults: Vec<HealthIndexProfile>,
    pub latent: Vec<HealthIndexProfile>,
}

impl ProfileSet {
    pub fn fault(&self, id: &str) -> Option<&HealthIndexProfile> {
        self.faults.iter().find(|p| p.id == id)
    }

    pub fn latent(&self, id: &str) -> Option<&HealthIndexProfile> {
        self.latent.iter().find(|p| p.id == id)
    }
}

/// Profiles of every latent state (`states` lists rows of `candidate`), every
/// fault class and the normal set, on a scale fitted to their union.
pub fn hi_profiles(
    candidate: &FeatureMatrix,
    states: &[(String, Vec<usize>)],
    faults: &LabeledFaultSet,
    normal: &FeatureMatrix,
    normal_name: &str,
    hi: &HiSet,
) -> Result<ProfileSet> {
    let scale = HiScale::fit(&[candidate, &faults.matrix, normal], hi)?;
    let all_normal: Vec<usize> = (0..normal.n_rows()).collect();
    let normal_p = scale.profile(normal, &all_normal, normal_name, StateKind::Normal)?;
    let fault_p = (0..faults.n_classes())
        .map(|c| scale.profile(&faults.matrix, &faults.class_rows(c), &faults.class_names[c], StateKind::Fault))
        .collect::<Result<Vec<_>>>()?;
    let latent = states
        .iter()
        .map(|(id, rows)| scale.profile(candidate, rows, id, StateKind::Latent))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProfileSet {
        hi: hi.clone(),
        scale,
        normal: normal_p,
        faults: fault_p,
        latent,
    })
}

/// Dimensions on which `fault` departs from `normal` by at least `delta`.
pub fn discriminative_dims(normal: &HealthIndexProfile, fault: &HealthIndexProfile, delta: f64) -> Vec<usize> {
    (0..normal.values.len())
        .filter(|&k| (fault.values[k] - normal.values[k]).abs() >= delta)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultCompatibility {
    pub fault: String,
    pub dims: Vec<usize>,
    /// Share of `dims` moving toward the fault and inside the slack interval.
    pub agreement: f64,
    pub compatible: bool,
    /// Mean of |m - m_f| / |m_f - m_N| over `dims`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub state: String,
    /// `None` marks an invalid state.
    pub fault: Option<String>,
    pub candidates: Vec<FaultCompatibility>,
    pub diagnostic: Option<String>,
}

pub fn assign_fault(
    latent: &HealthIndexProfile,
    normal: &HealthIndexProfile,
    faults: &[HealthIndexProfile],
    th: &AssessThresholds,
) -> Result<Assignment> {
    if faults.is_empty() {
        return Err(Error::Empty("no fault profiles to compare against".into()));
    }
    let mut candidates = Vec::with_capacity(faults.len());
    for f in faults {
        let dims = discriminative_dims(normal, f, th.delta);
        let mut agree = 0usize;
        let mut dist = 0.0;
        for &k in &dims {
            let (m, n, v) = (latent.values[k], normal.values[k], f.values[k]);
            let toward = (m - n) * (v - n) > 0.0;
            let inside = m >= n.min(v) - th.tau && m <= n.max(v) + th.tau;
            if toward && inside {
                agree += 1;
            }
            dist += (m - v).abs() / (v - n).abs();
        }
        let (agreement, distance) = if dims.is_empty() {
            (0.0, f64::INFINITY)
        } else {
            (agree as f64 / dims.len() as f64, dist / dims.len() as f64)
        };
        candidates.push(FaultCompatibility {
            fault: f.id.clone(),
            compatible: !dims.is_empty() && agreement >= th.theta,
            dims,
            agreement,
            distance,
        });
    }
    let best = candidates
        .iter()
        .filter(|c| c.compatible)
        .min_by(|a, b| a.distance.total_cmp(&b.distance));
    let diagnostic = if candidates.iter().all(|c| c.dims.is_empty()) {
        Some("no fault differs from normal by delta on any health index".to_string())
    } else if best.is_none() {
        Some("not compatible with any fault".to_string())
    } else {
        None
    };
    Ok(Assignment {
        state: latent.id.clone(),
        fault: best.map(|c| c.fault.clone()),
        candidates,
        diagnostic,
    })
}

/// Mean progress from normal toward the fault, clipped to [0, 1] per dimension.
pub fn deterioration_score(m: &HealthIndexProfile, normal: &HealthIndexProfile, fault: &HealthIndexProfile, dims: &[usize]) -> f64 {
    if dims.is_empty() {
        return 0.0;
    }
    dims.iter()
        .map(|&k| ((m.values[k] - normal.values[k]) / (fault.values[k] - normal.values[k])).clamp(0.0, 1.0))
        .sum::<f64>()
        / dims.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevantStateGroup {
    pub fault: String,
    /// Mild to severe.
    pub members: Vec<String>,
    pub scores: Vec<f64>,
}

pub fn rank_group(
    members: &[&HealthIndexProfile],
    normal: &HealthIndexProfile,
    fault: &HealthIndexProfile,
    delta: f64,
) -> Result<RelevantStateGroup> {
    let dims = discriminative_dims(normal, fault, delta);
    if dims.is_empty() {
        return Err(Error::InvalidModel(format!(
            "fault `{}` matches normal on every health index",
            fault.id
        )));
    }
    let mut scored: Vec<(f64, &str)> = members
        .iter()
        .map(|m| (deterioration_score(m, normal, fault, &dims), m.id.as_str()))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| natural_cmp(a.1, b.1)));
    Ok(RelevantStateGroup {
        fault: fault.id.clone(),
        members: scored.iter().map(|s| s.1.to_string()).collect(),
        scores: scored.iter().map(|s| s.0).collect(),
    })
}

/// Orders `S2` before `S10`.
fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    let split = |s: &str| {
        let pos = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
        (s[..pos].to_string(), s[pos..].parse::<u64>().ok())
    };
    split(a).cmp(&split(b)).then_with(|| a.cmp(b))
}

/// True when no health index deviates from normal by more than `epsilon`.
pub fn match_normal(profile: &HealthIndexProfile, normal: &HealthIndexProfile, epsilon: f64) -> bool {
    profile
        .values
        .iter()
        .zip(&normal.values)
        .all(|(a, b)| (a - b).abs() <= epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub thresholds: AssessThresholds,
    pub assignments: Vec<Assignment>,
    /// One group per fault that received at least one state, by fault id.
    pub groups: Vec<RelevantStateGroup>,
}

impl GroupReport {
    pub fn invalid(&self) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|a| a.fault.is_none())
            .map(|a| a.state.as_str())
            .collect()
    }
}

/// Assigns every latent state and ranks the states of each fault.
pub fn determine_groups(profiles: &ProfileSet, th: &AssessThresholds) -> Result<GroupReport> {
    let mut assignments = Vec::with_capacity(profiles.latent.len());
    let mut by_fault: BTreeMap<String, Vec<&HealthIndexProfile>> = BTreeMap::new();
    for l in &profiles.latent {
        let a = assign_fault(l, &profiles.normal, &profiles.faults, th)?;
        if let Some(f) = &a.fault {
            by_fault.entry(f.clone()).or_default().push(l);
        }
        assignments.push(a);
    }
    let mut groups = Vec::with_capacity(by_fault.len());
    for (f, members) in by_fault {
        let fault = profiles.fault(&f).expect("assigned fault has a profile");
        groups.push(rank_group(&members, &profiles.normal, fault, th.delta)?);
    }
    Ok(GroupReport {
        thresholds: *th,
        assignments,
        groups,
    })
}

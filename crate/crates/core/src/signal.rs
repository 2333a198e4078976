//! Power-signal records and their time-domain (phase) and value-domain
//! (segment) partitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default acquisition rate of the power collector.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 25.0;

/// One machine operation: a sampled power trace in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSignal {
    pub sample_id: String,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PowerSignal {
    pub fn new(sample_id: impl Into<String>, t: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let sig = Self {
            sample_id: sample_id.into(),
            t,
            p,
            label: None,
        };
        sig.validate()?;
        Ok(sig)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidSignal {
            id: self.sample_id.clone(),
            reason,
        };
        if self.t.len() != self.p.len() {
            return Err(fail(format!(
                "{} timestamps for {} power values",
                self.t.len(),
                self.p.len()
            )));
        }
        if self.p.len() < 2 {
            return Err(fail("fewer than two samples".into()));
        }
        if let Some(i) = self.t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(fail(format!("timestamps not strictly increasing at index {}", i + 1)));
        }
        if let Some(i) = self.t.iter().chain(&self.p).position(|v| !v.is_finite()) {
            return Err(fail(format!("non-finite value at position {i}")));
        }
        Ok(())
    }
}

/// Ordered cut-points splitting a real axis into `len + 1` half-open bins.
fn validate_cuts(what: &str, cuts: &[f64]) -> Result<()> {
    if cuts.iter().any(|c| !c.is_finite() || *c <= 0.0) {
        return Err(Error::Config(format!("{what} boundaries must be finite and positive")));
    }
    if cuts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("{what} boundaries must be strictly increasing")));
    }
    Ok(())
}

/// Bin index of `x` for half-open intervals `[cut[i-1], cut[i])`, the last
/// bin unbounded above.
fn bin_of(cuts: &[f64], x: f64) -> usize {
    cuts.partition_point(|&c| c <= x)
}

/// Time cut-points (seconds) defining the operation phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub boundaries: Vec<f64>,
}

impl PhaseConfig {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        validate_cuts("phase", &boundaries)?;
        Ok(Self { boundaries })
    }

    pub fn count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        validate_cuts("phase", &self.boundaries)
    }
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            boundaries: vec![1.0, 4.0, 5.0],
        }
    }
}

/// Power cut-points (kW) defining the value-domain segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub boundaries: Vec<f64>,
}

impl SegmentConfig {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        validate_cuts("segment", &boundaries)?;
        Ok(Self { boundaries })
    }

    pub fn count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        validate_cuts("segment", &self.boundaries)
    }
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            boundaries: vec![0.3, 0.7],
        }
    }
}

/// The `(t, p)` points falling in one phase or segment, in signal order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Part {
    pub t: Vec<f64>,
    pub p: Vec<f64>,
}

impl Part {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    fn push(&mut self, t: f64, p: f64) {
        self.t.push(t);
        self.p.push(p);
    }
}

/// A partition of one signal's points. Empty parts are kept in place.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub parts: Vec<Part>,
}

impl Partition {
    /// Indices (0-based) of parts that received no points.
    pub fn empty_parts(&self) -> Vec<usize> {
        self.parts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.parts.iter().map(Part::len).collect()
    }
}

fn partition_by(sig: &PowerSignal, cuts: &[f64], key: impl Fn(f64, f64) -> f64) -> Partition {
    let mut parts = vec![Part::default(); cuts.len() + 1];
    for (&t, &p) in sig.t.iter().zip(&sig.p) {
        parts[bin_of(cuts, key(t, p))].push(t, p);
    }
    Partition { parts }
}

/// Assigns every point to the phase whose time interval contains it.
pub fn split_phases(sig: &PowerSignal, cfg: &PhaseConfig) -> Partition {
    partition_by(sig, &cfg.boundaries, |t, _| t)
}

/// Projects the curve onto the value axis and groups points by power band.
pub fn split_segments(sig: &PowerSignal, cfg: &SegmentConfig) -> Partition {
    partition_by(sig, &cfg.boundaries, |_, p| p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(t: &[f64], p: &[f64]) -> PowerSignal {
        PowerSignal::new("s", t.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn phase_sizes_by_interval_membership() {
        let s = sig(&[0.0, 0.5, 2.0, 4.5, 6.0], &[1.0; 5]);
        let parts = split_phases(&s, &PhaseConfig::default());
        assert_eq!(parts.sizes(), vec![2, 1, 1, 1]);
        assert!(parts.empty_parts().is_empty());
    }

    #[test]
    fn short_signal_leaves_trailing_phases_empty() {
        let t: Vec<f64> = (0..=95).map(|i| i as f64 / 25.0).collect();
        assert!((t.last().unwrap() - 3.8).abs() < 1e-12);
        let s = sig(&t, &vec![0.5; t.len()]);
        let parts = split_phases(&s, &PhaseConfig::default());
        assert_eq!(parts.empty_parts(), vec![2, 3]);
    }

    #[test]
    fn full_length_trace_phase_counts() {
        // 165 points at 25 Hz: counts from direct enumeration of [0,1), [1,4), [4,5), [5,inf)
        let t: Vec<f64> = (0..165).map(|i| i as f64 / 25.0).collect();
        let expected = [
            t.iter().filter(|&&x| x < 1.0).count(),
            t.iter().filter(|&&x| (1.0..4.0).contains(&x)).count(),
            t.iter().filter(|&&x| (4.0..5.0).contains(&x)).count(),
            t.iter().filter(|&&x| x >= 5.0).count(),
        ];
        assert_eq!(expected, [25, 75, 25, 40]);
        let s = sig(&t, &vec![0.5; 165]);
        assert_eq!(split_phases(&s, &PhaseConfig::default()).sizes(), expected.to_vec());
    }

    #[test]
    fn one_point_per_segment() {
        let s = sig(&[0.0, 1.0, 2.0], &[0.1, 0.5, 0.9]);
        let parts = split_segments(&s, &SegmentConfig::default());
        assert_eq!(parts.sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn zero_signal_lands_in_first_segment() {
        let s = sig(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]);
        let parts = split_segments(&s, &SegmentConfig::default());
        assert_eq!(parts.sizes(), vec![4, 0, 0]);
        assert_eq!(parts.empty_parts(), vec![1, 2]);
    }

    #[test]
    fn boundary_value_goes_to_upper_bin() {
        let s = sig(&[0.0, 1.0], &[0.3, 0.7]);
        assert_eq!(split_segments(&s, &SegmentConfig::default()).sizes(), vec![0, 1, 1]);
    }

    #[test]
    fn rejects_bad_signals() {
        assert!(PowerSignal::new("a", vec![0.0], vec![1.0]).is_err());
        assert!(PowerSignal::new("a", vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(PowerSignal::new("a", vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(PowerSignal::new("a", vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn rejects_bad_cuts() {
        assert!(PhaseConfig::new(vec![1.0, 1.0]).is_err());
        assert!(PhaseConfig::new(vec![-1.0]).is_err());
        assert!(SegmentConfig::new(vec![0.7, 0.3]).is_err());
        assert_eq!(PhaseConfig::new(vec![]).unwrap().count(), 1);
    }
}

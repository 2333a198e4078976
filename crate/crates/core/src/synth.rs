//! Parametric generator of point-machine-like power traces.
//!
//! A trace has four generator phases: a start-up peak decaying onto the
//! working plateau, the plateau itself (with an oscillating fluctuation), a locking
//! transient, and a low tail. Fault archetypes and degradation ladders are
//! obtained by moving these knobs away from the normal state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::signal::{PowerSignal, DEFAULT_SAMPLE_RATE_HZ};

/// Frequency of the plateau fluctuation.
pub const FLUCTUATION_HZ: f64 = 2.0;

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}

fn default_decay() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthStateSpec {
    pub name: String,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    /// Power at t = 0, decaying exponentially onto the plateau.
    pub base_peak_kw: f64,
    #[serde(default = "default_decay")]
    pub peak_decay_s: f64,
    pub phase2_level_kw: f64,
    pub phase2_jitter_kw: f64,
    pub phase3_level_kw: f64,
    pub phase3_jitter_kw: f64,
    pub phase4_level_kw: f64,
    pub phase_durations_s: [f64; 4],
    /// Power is exactly zero from this instant on.
    #[serde(default)]
    pub dropout_after_s: Option<f64>,
    pub noise_sigma_kw: f64,
    /// Relative per-trace scatter applied to every level.
    #[serde(default)]
    pub level_spread: f64,
    /// Keep negative values produced by sensor noise instead of clamping at 0.
    #[serde(default)]
    pub allow_negative: bool,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SynthStateSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth spec `{}`: {m}", self.name)));
        if !(self.sample_rate_hz > 0.0) {
            return bad("sample rate must be positive");
        }
        if self.phase_durations_s.iter().any(|d| !(*d > 0.0)) {
            return bad("phase durations must be positive");
        }
        if !(self.peak_decay_s > 0.0) {
            return bad("peak decay must be positive");
        }
        let sigmas = [
            self.phase2_jitter_kw,
            self.phase3_jitter_kw,
            self.noise_sigma_kw,
            self.level_spread,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return bad("jitter, noise and spread must be non-negative");
        }
        let levels = [
            self.base_peak_kw,
            self.phase2_level_kw,
            self.phase3_level_kw,
            self.phase4_level_kw,
        ];
        if levels.iter().any(|l| !l.is_finite()) {
            return bad("levels must be finite");
        }
        if let Some(d) = self.dropout_after_s {
            if !(d >= 0.0) {
                return bad("dropout time must be non-negative");
            }
        }
        if self.total_duration() * self.sample_rate_hz < 2.0 {
            return bad("trace would have fewer than two samples");
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.phase_durations_s.iter().sum()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..self.clone()
        }
    }

    pub fn with_name(&self, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..self.clone()
        }
    }

    /// Linear interpolation of every numeric knob between `self` (at 0) and
    /// `target` (at 1). Dropout is a terminal event and only appears when both
    /// ends have it, or at `frac >= 1`. The seed of `self` is kept.
    pub fn interpolate(&self, target: &SynthStateSpec, frac: f64) -> SynthStateSpec {
        let lerp = |a: f64, b: f64| if frac <= 0.0 { a } else if frac >= 1.0 { b } else { a + (b - a) * frac };
        let mut durations = [0.0; 4];
        for (i, d) in durations.iter_mut().enumerate() {
            *d = lerp(self.phase_durations_s[i], target.phase_durations_s[i]);
        }
        let dropout_after_s = match (self.dropout_after_s, target.dropout_after_s) {
            _ if frac <= 0.0 => self.dropout_after_s,
            _ if frac >= 1.0 => target.dropout_after_s,
            (Some(a), Some(b)) => Some(lerp(a, b)),
            _ => None,
        };
        SynthStateSpec {
            name: format!("{}->{}@{:.2}", self.name, target.name, frac),
            sample_rate_hz: lerp(self.sample_rate_hz, target.sample_rate_hz),
            base_peak_kw: lerp(self.base_peak_kw, target.base_peak_kw),
            peak_decay_s: lerp(self.peak_decay_s, target.peak_decay_s),
            phase2_level_kw: lerp(self.phase2_level_kw, target.phase2_level_kw),
            phase2_jitter_kw: lerp(self.phase2_jitter_kw, target.phase2_jitter_kw),
            phase3_level_kw: lerp(self.phase3_level_kw, target.phase3_level_kw),
            phase3_jitter_kw: lerp(self.phase3_jitter_kw, target.phase3_jitter_kw),
            phase4_level_kw: lerp(self.phase4_level_kw, target.phase4_level_kw),
            phase_durations_s: durations,
            dropout_after_s,
            noise_sigma_kw: lerp(self.noise_sigma_kw, target.noise_sigma_kw),
            level_spread: lerp(self.level_spread, target.level_spread),
            allow_negative: self.allow_negative,
            rng_seed: self.rng_seed,
        }
    }
}

/// Renders one trace from `spec`. Identical specs give identical traces.
pub fn synth_signal(spec: &SynthStateSpec) -> Result<PowerSignal> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    let mut gauss = move || -> f64 { rng.sample(StandardNormal) };

    let scale = 1.0 + spec.level_spread * gauss();
    let peak = spec.base_peak_kw * scale;
    let l2 = spec.phase2_level_kw * scale;
    let l3 = spec.phase3_level_kw * scale;
    let l4 = spec.phase4_level_kw * scale;

    // Plateau fluctuation: a sinusoid with RMS equal to the jitter knob and a
    // random phase, so its sample variance barely depends on the draw.
    let wobble = |ti: f64, rms: f64| {
        rms * std::f64::consts::SQRT_2 * (std::f64::consts::TAU * FLUCTUATION_HZ * ti + phi).sin()
    };

    let d = spec.phase_durations_s;
    let (c1, c2, c3) = (d[0], d[0] + d[1], d[0] + d[1] + d[2]);
    let n = (spec.total_duration() * spec.sample_rate_hz).round() as usize;

    let mut t = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for i in 0..n {
        let ti = i as f64 / spec.sample_rate_hz;
        let base = if ti < c1 {
            l2 + (peak - l2) * (-ti / spec.peak_decay_s).exp()
        } else if ti < c2 {
            l2 + wobble(ti, spec.phase2_jitter_kw)
        } else if ti < c3 {
            l3 + wobble(ti, spec.phase3_jitter_kw)
        } else {
            l4
        };
        let noisy = base + spec.noise_sigma_kw * gauss();
        let mut value = match spec.dropout_after_s {
            Some(drop) if ti >= drop => 0.0,
            _ => noisy,
        };
        if !spec.allow_negative && value < 0.0 {
            value = 0.0;
        }
        t.push(ti);
        p.push(value);
    }
    PowerSignal::new(format!("{}_{:016x}", spec.name, spec.rng_seed), t, p)
}

/// `n` traces of one state, sample `i` seeded from `(seed, i)`.
pub fn generate(spec: &SynthStateSpec, n: usize, seed: u64, label: &str) -> Result<Vec<PowerSignal>> {
    (0..n)
        .map(|i| {
            let mut sig = synth_signal(&spec.with_seed(derive_seed(seed, i as u64)))?;
            sig.sample_id = format!("{label}_{i:04}");
            Ok(sig.with_label(label))
        })
        .collect()
}

/// Normal operation, six fault archetypes and two degradation ladders.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthLibrary {
    pub normal: SynthStateSpec,
    pub faults: Vec<SynthStateSpec>,
    pub ladders: Vec<Ladder>,
}

/// Degradation steps interpolated from normal toward one fault.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ladder {
    pub fault: String,
    pub fractions: Vec<f64>,
}

impl SynthLibrary {
    pub fn fault(&self, name: &str) -> Option<&SynthStateSpec> {
        self.faults.iter().find(|f| f.name == name)
    }

    /// The specs of each ladder step, named `<fault>_L<k>` (k = 1 mildest).
    pub fn ladder_specs(&self) -> Result<Vec<Vec<SynthStateSpec>>> {
        self.ladders
            .iter()
            .map(|ladder| {
                let fault = self.fault(&ladder.fault).ok_or_else(|| {
                    Error::Config(format!("ladder toward unknown fault `{}`", ladder.fault))
                })?;
                Ok(ladder
                    .fractions
                    .iter()
                    .enumerate()
                    .map(|(k, &f)| {
                        self.normal
                            .interpolate(fault, f)
                            .with_name(format!("{}_L{}", ladder.fault, k + 1))
                    })
                    .collect())
            })
            .collect()
    }
}

impl Default for SynthLibrary {
    fn default() -> Self {
        let normal = SynthStateSpec {
            name: "NS".into(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            base_peak_kw: 2.0,
            peak_decay_s: 0.15,
            phase2_level_kw: 0.5,
            phase2_jitter_kw: 0.01,
            phase3_level_kw: 0.45,
            phase3_jitter_kw: 0.01,
            phase4_level_kw: 0.15,
            phase_durations_s: [1.0, 3.0, 1.0, 1.6],
            dropout_after_s: None,
            noise_sigma_kw: 0.01,
            level_spread: 0.02,
            allow_negative: false,
            rng_seed: 0,
        };
        let fs1 = SynthStateSpec {
            name: "FS1".into(),
            base_peak_kw: 7.0,
            phase2_level_kw: 0.6,
            phase3_level_kw: 0.55,
            phase4_level_kw: 0.2,
            ..normal.clone()
        };
        let fs2 = SynthStateSpec {
            name: "FS2".into(),
            phase2_jitter_kw: 0.05,
            ..normal.clone()
        };
        let fs3 = SynthStateSpec {
            name: "FS3".into(),
            phase2_level_kw: 0.9,
            phase2_jitter_kw: 0.01,
            phase_durations_s: [1.0, 6.2, 0.2, 0.6],
            dropout_after_s: Some(7.2),
            ..normal.clone()
        };
        let fs4 = SynthStateSpec {
            name: "FS4".into(),
            phase3_level_kw: 0.62,
            phase3_jitter_kw: 0.01,
            ..normal.clone()
        };
        let fs5 = SynthStateSpec {
            name: "FS5".into(),
            phase4_level_kw: 0.32,
            ..normal.clone()
        };
        let fs6 = SynthStateSpec {
            name: "FS6".into(),
            dropout_after_s: Some(5.8),
            ..normal.clone()
        };
        Self {
            normal,
            faults: vec![fs1, fs2, fs3, fs4, fs5, fs6],
            ladders: vec![
                Ladder {
                    fault: "FS2".into(),
                    fractions: vec![0.3, 0.55, 0.8],
                },
                Ladder {
                    fault: "FS4".into(),
                    fractions: vec![0.35, 0.7],
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(spec: &SynthStateSpec) -> SynthStateSpec {
        SynthStateSpec {
            phase2_jitter_kw: 0.0,
            phase3_jitter_kw: 0.0,
            noise_sigma_kw: 0.0,
            level_spread: 0.0,
            ..spec.clone()
        }
    }

    #[test]
    fn noiseless_curve_hits_spec_levels() {
        let lib = SynthLibrary::default();
        let spec = quiet(&lib.normal);
        let sig = synth_signal(&spec).unwrap();
        assert_eq!(sig.len(), 165);
        assert_eq!(sig.p[0], spec.base_peak_kw);
        for (&t, &p) in sig.t.iter().zip(&sig.p) {
            if (1.0..4.0).contains(&t) {
                assert_eq!(p, spec.phase2_level_kw);
            } else if (4.0..5.0).contains(&t) {
                assert_eq!(p, spec.phase3_level_kw);
            } else if t >= 5.0 {
                assert_eq!(p, spec.phase4_level_kw);
            } else {
                let expect = 0.5 + 1.5 * (-t / 0.15f64).exp();
                assert!((p - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let spec = SynthLibrary::default().fault("FS2").unwrap().with_seed(99);
        assert_eq!(synth_signal(&spec).unwrap(), synth_signal(&spec).unwrap());
        let other = synth_signal(&spec.with_seed(100)).unwrap();
        assert_ne!(synth_signal(&spec).unwrap().p, other.p);
    }

    #[test]
    fn ladder_endpoints_match_their_specs() {
        let lib = SynthLibrary::default();
        for fault in &lib.faults {
            let at0 = lib.normal.interpolate(fault, 0.0).with_name("NS");
            assert_eq!(synth_signal(&at0).unwrap().p, synth_signal(&lib.normal).unwrap().p);
            let at1 = lib.normal.interpolate(fault, 1.0);
            let fault_same_seed = fault.with_seed(lib.normal.rng_seed);
            assert_eq!(synth_signal(&at1).unwrap().p, synth_signal(&fault_same_seed).unwrap().p);
        }
    }

    #[test]
    fn dropout_forces_exact_zero() {
        let lib = SynthLibrary::default();
        let sig = synth_signal(lib.fault("FS6").unwrap()).unwrap();
        assert!(sig.t.iter().zip(&sig.p).filter(|(t, _)| **t >= 5.8).all(|(_, p)| *p == 0.0));
    }

    #[test]
    fn noise_clamped_unless_allowed() {
        let spec = SynthStateSpec {
            phase4_level_kw: 0.0,
            noise_sigma_kw: 0.2,
            ..SynthLibrary::default().normal
        };
        assert!(synth_signal(&spec).unwrap().p.iter().all(|&p| p >= 0.0));
        let loose = SynthStateSpec {
            allow_negative: true,
            ..spec
        };
        assert!(synth_signal(&loose).unwrap().p.iter().any(|&p| p < 0.0));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = SynthLibrary::default().normal;
        spec.phase_durations_s[2] = 0.0;
        assert!(synth_signal(&spec).is_err());
        let mut spec = SynthLibrary::default().normal;
        spec.noise_sigma_kw = -1.0;
        assert!(synth_signal(&spec).is_err());
    }

    #[test]
    fn fs2_ladder_variance_grows_with_fraction() {
        let lib = SynthLibrary::default();
        let fs2 = lib.fault("FS2").unwrap();
        let phase2_var = |spec: &SynthStateSpec| -> f64 {
            let seeds = 60;
            let mut acc = 0.0;
            for s in 0..seeds {
                let sig = synth_signal(&spec.with_seed(s)).unwrap();
                let v: Vec<f64> = sig
                    .t
                    .iter()
                    .zip(&sig.p)
                    .filter(|(t, _)| (1.0..4.0).contains(*t))
                    .map(|(_, p)| *p)
                    .collect();
                let m = v.iter().sum::<f64>() / v.len() as f64;
                acc += v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
            }
            acc / seeds as f64
        };
        let vars: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&f| phase2_var(&lib.normal.interpolate(fs2, f)))
            .collect();
        assert!(vars.windows(2).all(|w| w[1] >= w[0]), "{vars:?}");
    }
}

//! Synthetic stand-ins for machine-sound features.
//!
//! [`synth_bundle`] produces 640-dimensional stacked-frame vectors around a
//! fixed template, with a band-limited offset marking anomalies.
//! [`synth_config_family`] produces low-dimensional feature bundles for a
//! family of configurations whose proxy metric and feature quality follow a
//! chosen regime, then evaluates them with the standard protocol.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::INPUT_DIM;
use crate::correlation::{AsdValues, ConfigRecord, ProxyMetric};
use crate::dataio::{DatasetBundle, FeatureSet, Label, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::protocol::{evaluate_bundle, EvalResult, EvalSettings};

const MEL_BINS: usize = 128;

/// Additive offset over a contiguous range of feature dimensions.
///
/// Features live in a log-magnitude space, so the offset is a level change
/// in that space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPerturbation {
    pub band_start: usize,
    pub band_width: usize,
    pub magnitude_db: f64,
}

impl BandPerturbation {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.band_start..self.band_start + self.band_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub machine: String,
    pub template: Vec<f64>,
    pub noise_scale: f64,
    pub anomaly: BandPerturbation,
    pub sections: Vec<u16>,
    /// Amplitude of the per-section template shift.
    pub section_shift: f64,
    pub train_per_section: usize,
    pub test_normal_per_section: usize,
    pub test_anomaly_per_section: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let noise_scale = 0.1;
        Self {
            machine: "toy".into(),
            template: default_template(INPUT_DIM),
            noise_scale,
            anomaly: BandPerturbation {
                band_start: 256,
                band_width: 64,
                magnitude_db: 6.0 * noise_scale,
            },
            sections: vec![0, 1, 2],
            section_shift: 0.05,
            train_per_section: 1000,
            test_normal_per_section: 100,
            test_anomaly_per_section: 100,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn dims(&self) -> usize {
        self.template.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.template.is_empty() || self.template.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("template must be non-empty and finite".into()));
        }
        if self.anomaly.band_width == 0 || self.anomaly.range().end > self.dims() {
            return Err(Error::Config(format!(
                "anomaly band {:?} outside [0, {})",
                self.anomaly.range(),
                self.dims()
            )));
        }
        if !self.anomaly.magnitude_db.is_finite() {
            return Err(Error::Config("anomaly magnitude must be finite".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) || !self.section_shift.is_finite() {
            return Err(Error::Config("noise scale and section shift must be finite, noise ≥ 0".into()));
        }
        let mut s = self.sections.clone();
        s.sort_unstable();
        s.dedup();
        if s.is_empty() || s.len() != self.sections.len() {
            return Err(Error::Config("sections must be non-empty and distinct".into()));
        }
        if self.train_per_section == 0 || self.test_normal_per_section == 0 || self.test_anomaly_per_section == 0 {
            return Err(Error::Config("every section needs train, normal and anomaly rows".into()));
        }
        Ok(())
    }

    /// The template shifted for one section.
    pub fn section_mean(&self, section: u16) -> Vec<f64> {
        let s = f64::from(section);
        self.template
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let bin = (j % MEL_BINS) as f64 / MEL_BINS as f64;
                t + self.section_shift * (std::f64::consts::TAU * bin * (1.0 + s) + s).sin()
            })
            .collect()
    }
}

/// A smooth log-mel-like pattern repeated over stacked frames, roughly unit scale.
pub fn default_template(dims: usize) -> Vec<f64> {
    (0..dims)
        .map(|j| {
            let bin = (j % MEL_BINS) as f64;
            let frame = (j / MEL_BINS) as f64;
            1.0 + 0.5 * (-bin / 40.0).exp() + 0.2 * (std::f64::consts::TAU * bin / 16.0).sin() + 0.02 * frame
        })
        .collect()
}

fn section_rng(seed: u64, section: u16, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(section) << 8) | stream);
    rng
}

fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, mean: &[f64], scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * mean.len());
    for _ in 0..rows {
        for &m in mean {
            let z: f64 = rng.sample(StandardNormal);
            out.push(m + scale * z);
        }
    }
    out
}

/// Generates one machine's bundle. Labels are carried by the test sets.
pub fn synth_bundle(spec: &SynthSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let d = spec.dims();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &s in &spec.sections {
        let mean = spec.section_mean(s);
        let mut rng = section_rng(spec.seed, s, 0);
        let tr = gaussian_rows(&mut rng, spec.train_per_section, &mean, spec.noise_scale);
        let normal = gaussian_rows(&mut rng, spec.test_normal_per_section, &mean, spec.noise_scale);
        let mut anomaly = gaussian_rows(&mut rng, spec.test_anomaly_per_section, &mean, spec.noise_scale);
        for row in anomaly.chunks_exact_mut(d) {
            for v in &mut row[spec.anomaly.range()] {
                *v += spec.anomaly.magnitude_db;
            }
        }
        let m = |rows, data| Matrix::from_vec(rows, d, data);
        train.push(FeatureSet::uniform(&spec.machine, s, Split::Train, Label::Normal, m(spec.train_per_section, tr)?)?);
        test.push(FeatureSet::uniform(&spec.machine, s, Split::Test, Label::Normal, m(spec.test_normal_per_section, normal)?)?);
        test.push(FeatureSet::uniform(&spec.machine, s, Split::Test, Label::Anomaly, m(spec.test_anomaly_per_section, anomaly)?)?);
    }
    DatasetBundle::new(&spec.machine, train, test)
}

// ── Configuration families ────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Proxy and class separation both rise with quality.
    Aligned,
    /// Proxy pinned near its ceiling.
    Saturated,
    /// Proxy improves while features lose all anomaly information.
    Collapsed,
    /// Quality tightens the normal distribution relative to anomalies
    /// without making them linearly separable.
    Partial,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Aligned, Regime::Saturated, Regime::Collapsed, Regime::Partial];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Aligned => "aligned",
            Regime::Saturated => "saturated",
            Regime::Collapsed => "collapsed",
            Regime::Partial => "partial",
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown regime {s:?}")))
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SynthFamily {
    pub regime: Regime,
    pub records: Vec<ConfigRecord>,
    pub bundles: Vec<DatasetBundle>,
    pub results: Vec<EvalResult>,
}

const FAMILY_DIMS: usize = 8;
const FAMILY_SECTIONS: [u16; 2] = [0, 1];

struct FamilyShape {
    train: usize,
    test: usize,
    metric: ProxyMetric,
}

fn shape(regime: Regime) -> FamilyShape {
    match regime {
        Regime::Aligned | Regime::Saturated => FamilyShape {
            train: 500,
            test: 500,
            metric: if regime == Regime::Aligned { ProxyMetric::SiSdri } else { ProxyMetric::F1 },
        },
        // near-chance differences need large samples to resolve
        Regime::Collapsed => FamilyShape {
            train: 500,
            test: 1000,
            metric: ProxyMetric::Alignment,
        },
        Regime::Partial => FamilyShape {
            train: 500,
            test: 500,
            metric: ProxyMetric::Mae,
        },
    }
}

/// Proxy value at quality `q ∈ [0, 1]`, before jitter.
fn proxy_value(regime: Regime, q: f64) -> f64 {
    match regime {
        Regime::Aligned => 2.0 + 2.0 * q,
        Regime::Saturated => 98.0,
        Regime::Collapsed => 1.2 - 0.8 * q,
        Regime::Partial => 4.6 - 0.5 * q,
    }
}

/// Base draws shared by every configuration of a family, so configurations
/// differ only through the quality-dependent transform.
struct FamilyDraws {
    section_means: Vec<Vec<f64>>,
    train: Vec<Vec<f64>>,
    normal: Vec<Vec<f64>>,
    anomaly: Vec<Vec<f64>>,
}

fn family_draws(s: &FamilyShape, seed: u64) -> FamilyDraws {
    let zero = vec![0.0; FAMILY_DIMS];
    let mut d = FamilyDraws {
        section_means: Vec::new(),
        train: Vec::new(),
        normal: Vec::new(),
        anomaly: Vec::new(),
    };
    for &sec in &FAMILY_SECTIONS {
        let mut rng = section_rng(seed, sec, 1);
        d.section_means
            .push((0..FAMILY_DIMS).map(|j| if j == usize::from(sec) { 0.5 } else { 0.0 }).collect());
        d.train.push(gaussian_rows(&mut rng, s.train, &zero, 1.0));
        d.normal.push(gaussian_rows(&mut rng, s.test, &zero, 1.0));
        d.anomaly.push(gaussian_rows(&mut rng, s.test, &zero, 1.0));
    }
    d
}

fn family_bundle(regime: Regime, q: f64, draws: &FamilyDraws, s: &FamilyShape, config_id: &str) -> Result<DatasetBundle> {
    let dir = 1.0 / (FAMILY_DIMS as f64).sqrt();
    // (mean shift along the diagonal, anomaly spread, global scale)
    let (shift, spread, scale) = match regime {
        Regime::Aligned | Regime::Saturated => (0.4 + 1.2 * q, 1.0, 1.0),
        Regime::Collapsed => (0.03 * (1.0 - q), 1.0 + 0.02 * (1.0 - q), 1.0 - 0.9 * q),
        Regime::Partial => (0.0, 1.0 + q, 1.0),
    };
    let machine = format!("synth-{config_id}");
    let build = |base: &[f64], mean: &[f64], shift: f64, spread: f64| -> Vec<f64> {
        base.chunks_exact(FAMILY_DIMS)
            .flat_map(|row| {
                row.iter()
                    .zip(mean)
                    .map(move |(z, m)| scale * (m + spread * z + shift * dir))
            })
            .collect()
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &sec) in FAMILY_SECTIONS.iter().enumerate() {
        let mean = &draws.section_means[i];
        let m = |rows, data| Matrix::from_vec(rows, FAMILY_DIMS, data);
        train.push(FeatureSet::uniform(
            &machine,
            sec,
            Split::Train,
            Label::Normal,
            m(s.train, build(&draws.train[i], mean, 0.0, 1.0))?,
        )?);
        test.push(FeatureSet::uniform(
            &machine,
            sec,
            Split::Test,
            Label::Normal,
            m(s.test, build(&draws.normal[i], mean, 0.0, 1.0))?,
        )?);
        test.push(FeatureSet::uniform(
            &machine,
            sec,
            Split::Test,
            Label::Anomaly,
            m(s.test, build(&draws.anomaly[i], mean, shift, spread))?,
        )?);
    }
    DatasetBundle::new(machine, train, test)
}

/// Builds `n_configs` configurations spanning quality 0 → 1, evaluates each
/// with the standard protocol, and returns the family's records.
pub fn synth_config_family(regime: Regime, n_configs: usize, seed: u64) -> Result<SynthFamily> {
    if n_configs < 3 {
        return Err(Error::Config(format!("a family needs at least 3 configurations, got {n_configs}")));
    }
    let s = shape(regime);
    let draws = family_draws(&s, seed);
    let mut rng = section_rng(seed, 0, 2);
    let step = 1.0 / (n_configs - 1) as f64;
    let configs: Vec<(String, f64, f64)> = (0..n_configs)
        .map(|i| {
            let q = i as f64 * step;
            let proxy = match regime {
                // values stay inside a 0.5% band
                Regime::Saturated => proxy_value(regime, q) + rng.gen_range(0.0..0.4),
                _ => {
                    // jitter below a fifth of the spacing keeps the order
                    let spacing = (proxy_value(regime, step) - proxy_value(regime, 0.0)).abs();
                    proxy_value(regime, q) + rng.gen_range(-0.2..0.2) * spacing
                }
            };
            (format!("{}-{i:02}", regime.name()), q, proxy)
        })
        .collect();

    let bundles = configs
        .iter()
        .map(|(id, q, _)| family_bundle(regime, *q, &draws, &s, id))
        .collect::<Result<Vec<_>>>()?;
    let results = configs
        .par_iter()
        .zip(&bundles)
        .map(|((id, _, _), b)| {
            let settings = EvalSettings {
                config_id: id.clone(),
                seed,
                ..Default::default()
            };
            evaluate_bundle(b, &settings)
        })
        .collect::<Result<Vec<_>>>()?;

    let records = configs
        .iter()
        .zip(&results)
        .map(|((id, _, proxy), r)| ConfigRecord {
            family: format!("synthetic-{}", regime.name()),
            config_id: id.clone(),
            proxy_metric: s.metric,
            direction: s.metric.default_direction(),
            proxy_value: *proxy,
            asd: AsdValues {
                in_lp: r.in_domain_lp_auc.expect("LP evaluated"),
                out_lp: r.out_domain_lp_auc.expect("LP evaluated"),
                md: r.md_auc.expect("MD evaluated"),
            },
        })
        .collect();
    Ok(SynthFamily {
        regime,
        records,
        bundles,
        results,
    })
}

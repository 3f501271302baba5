//! Detection and proxy-task metrics.
//!
//! AUC is computed from midranks with integer arithmetic on doubled rank
//! sums, so it agrees exactly with a pairwise count. The remaining metrics
//! are the proxy measures: reconstruction MAE, macro-F1, SI-SDR and its
//! improvement, and hypersphere alignment/uniformity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{norm2, Matrix};

// ── AUC ───────────────────────────────────────────────────────────────

/// Midranks (1-based) of `values`, doubled so that ties stay integral.
pub(crate) fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank ((i+1) + j) / 2
        let doubled = (i + 1 + j) as u64;
        for &k in &order[i..j] {
            ranks[k] = doubled;
        }
        i = j;
    }
    ranks
}

/// Probability that an anomaly outscores a normal sample, ties counting one half.
pub fn auc(scores_normal: &[f64], scores_anomaly: &[f64]) -> Result<f64> {
    let n0 = scores_normal.len();
    let n1 = scores_anomaly.len();
    if n0 == 0 || n1 == 0 {
        return Err(Error::Metric("AUC needs at least one score per class".into()));
    }
    if scores_normal.iter().chain(scores_anomaly).any(|v| !v.is_finite()) {
        return Err(Error::Metric("AUC scores must be finite".into()));
    }
    let mut all = Vec::with_capacity(n0 + n1);
    all.extend_from_slice(scores_anomaly);
    all.extend_from_slice(scores_normal);
    let ranks = doubled_midranks(&all);
    let doubled_rank_sum: u64 = ranks[..n1].iter().sum();
    // 2U = 2R₁ − n₁(n₁+1)
    let doubled_u = doubled_rank_sum - (n1 as u64) * (n1 as u64 + 1);
    Ok(doubled_u as f64 / (2 * n0 as u64 * n1 as u64) as f64)
}

/// AUC over a pooled score vector with boolean anomaly labels.
pub fn auc_labeled(scores: &[f64], is_anomaly: &[bool]) -> Result<f64> {
    if scores.len() != is_anomaly.len() {
        return Err(Error::Metric(format!(
            "{} scores for {} labels",
            scores.len(),
            is_anomaly.len()
        )));
    }
    let (mut normal, mut anomaly) = (Vec::new(), Vec::new());
    for (s, a) in scores.iter().zip(is_anomaly) {
        if *a {
            anomaly.push(*s);
        } else {
            normal.push(*s);
        }
    }
    auc(&normal, &anomaly)
}

// ── Reconstruction ────────────────────────────────────────────────────

/// Mean absolute difference over all time-frequency bins.
pub fn recon_mae(m_in: &Matrix, m_out: &Matrix) -> Result<f64> {
    if m_in.rows() != m_out.rows() || m_in.cols() != m_out.cols() {
        return Err(Error::Metric(format!(
            "shape mismatch {}x{} vs {}x{}",
            m_in.rows(),
            m_in.cols(),
            m_out.rows(),
            m_out.cols()
        )));
    }
    let n = m_in.as_slice().len();
    if n == 0 {
        return Err(Error::Metric("empty spectrogram".into()));
    }
    if !m_in.is_finite() || !m_out.is_finite() {
        return Err(Error::Metric("non-finite spectrogram bin".into()));
    }
    let total: f64 = m_in
        .as_slice()
        .iter()
        .zip(m_out.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / n as f64)
}

// ── Classification ────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub per_class: Vec<f64>,
    /// Classes with neither predictions nor instances; scored 0.
    pub empty_classes: Vec<usize>,
}

pub fn macro_f1(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<F1Report> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Metric(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if classes == 0 {
        return Err(Error::Metric("class count must be positive".into()));
    }
    let mut tp = vec![0u64; classes];
    let mut fp = vec![0u64; classes];
    let mut fn_ = vec![0u64; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= classes || p >= classes {
            return Err(Error::Metric(format!("label {} outside 0..{classes}", t.max(p))));
        }
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut empty_classes = Vec::new();
    for c in 0..classes {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom == 0 {
            empty_classes.push(c);
            per_class.push(0.0);
        } else {
            // 2PR/(P+R) written over counts
            per_class.push((2 * tp[c]) as f64 / denom as f64);
        }
    }
    let macro_f1 = per_class.iter().sum::<f64>() / classes as f64;
    Ok(F1Report {
        macro_f1,
        per_class,
        empty_classes,
    })
}

// ── Separation ────────────────────────────────────────────────────────

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Scale-invariant SDR in dB. Returns `+∞` when the residual after optimal
/// scaling vanishes (≤ 1e-30 of the scaled target's energy).
pub fn si_sdr(target: &[f64], estimate: &[f64]) -> Result<f64> {
    if target.is_empty() || target.len() != estimate.len() {
        return Err(Error::Metric(format!(
            "target and estimate lengths differ or are empty ({} vs {})",
            target.len(),
            estimate.len()
        )));
    }
    if target.iter().chain(estimate).any(|v| !v.is_finite()) {
        return Err(Error::Metric("non-finite sample".into()));
    }
    let t_energy = energy(target);
    if t_energy == 0.0 {
        return Err(Error::Metric("target has zero energy".into()));
    }
    if energy(estimate) == 0.0 {
        return Err(Error::Metric("estimate has zero energy".into()));
    }
    let a: f64 = target.iter().zip(estimate).map(|(t, e)| t * e).sum::<f64>() / t_energy;
    let signal = a * a * t_energy;
    let residual: f64 = target
        .iter()
        .zip(estimate)
        .map(|(t, e)| {
            let r = a * t - e;
            r * r
        })
        .sum();
    if residual <= 1e-30 * signal {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / residual).log10())
}

/// SI-SDR of the estimate minus SI-SDR of the unprocessed mixture.
pub fn si_sdr_improvement(target: &[f64], estimate: &[f64], mixture: &[f64]) -> Result<f64> {
    if estimate == mixture {
        si_sdr(target, mixture)?;
        return Ok(0.0);
    }
    let est = si_sdr(target, estimate)?;
    let mix = si_sdr(target, mixture)?;
    if est.is_infinite() && est == mix {
        // both perfect, nothing gained
        return Ok(0.0);
    }
    Ok(est - mix)
}

/// Aggregate of SI-SDR values that keeps perfect reconstructions separate
/// instead of letting them swamp the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SdrSummary {
    /// Mean over finite values; `None` when every value was infinite.
    pub mean_finite: Option<f64>,
    pub n_finite: usize,
    pub n_infinite: usize,
}

pub fn summarize_sdr(values: &[f64]) -> SdrSummary {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    SdrSummary {
        mean_finite: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        n_finite: finite.len(),
        n_infinite: values.len() - finite.len(),
    }
}

/// One separation result at a given input SNR.
#[derive(Debug, Clone, Copy)]
pub struct SdriCase<'a> {
    pub snr_db: f64,
    pub target: &'a [f64],
    pub estimate: &'a [f64],
    pub mixture: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdriReport {
    /// `(snr_db, si_sdri)` in input order.
    pub per_condition: Vec<(f64, f64)>,
    pub summary: SdrSummary,
}

/// SI-SDRi for each condition and their mean.
pub fn si_sdri_by_condition(cases: &[SdriCase<'_>]) -> Result<SdriReport> {
    if cases.is_empty() {
        return Err(Error::Metric("no SNR conditions".into()));
    }
    let per_condition = cases
        .iter()
        .map(|c| {
            let v = si_sdr_improvement(c.target, c.estimate, c.mixture)
                .map_err(|e| e.context(format!("condition {} dB", c.snr_db)))?;
            Ok((c.snr_db, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = per_condition.iter().map(|p| p.1).collect();
    Ok(SdriReport {
        summary: summarize_sdr(&values),
        per_condition,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub samples: Vec<f64>,
    /// Gain applied to the (shifted) noise.
    pub noise_gain: f64,
    /// Circular offset applied to the noise before mixing.
    pub noise_offset: usize,
}

/// Adds `noise`, circularly shifted by a seed-dependent offset and scaled so
/// the target-to-noise power ratio equals `snr_db`.
pub fn mix_at_snr(target: &[f64], noise: &[f64], snr_db: f64, seed: u64) -> Result<Mixture> {
    if target.is_empty() || target.len() != noise.len() {
        return Err(Error::Metric("target and noise must be non-empty and equally long".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Metric("SNR must be finite".into()));
    }
    let pt = energy(target);
    let pn = energy(noise);
    if pt == 0.0 {
        return Err(Error::Metric("target has zero energy".into()));
    }
    if pn == 0.0 {
        return Err(Error::Metric("noise has zero energy".into()));
    }
    let n = noise.len();
    let offset = ChaCha8Rng::seed_from_u64(seed).gen_range(0..n);
    let gain = (pt / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = target
        .iter()
        .enumerate()
        .map(|(i, t)| t + gain * noise[(i + offset) % n])
        .collect();
    Ok(Mixture {
        samples,
        noise_gain: gain,
        noise_offset: offset,
    })
}

/// Power ratio in dB between two equally long signals.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (energy(signal) / energy(noise)).log10()
}

// ── Hypersphere metrics ───────────────────────────────────────────────

fn normalized_rows(m: &Matrix) -> Result<Vec<Vec<f64>>> {
    m.iter_rows()
        .enumerate()
        .map(|(i, r)| {
            let n = norm2(r);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Metric(format!("row {i} cannot be L2-normalized")));
            }
            Ok(r.iter().map(|v| v / n).collect())
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean of `‖f(x) − f(y)‖₂^α` over positive pairs (row i of each view).
pub fn alignment(view1: &Matrix, view2: &Matrix, alpha: f64) -> Result<f64> {
    if view1.rows() != view2.rows() || view1.cols() != view2.cols() {
        return Err(Error::Metric("views must have equal shapes".into()));
    }
    if view1.rows() == 0 {
        return Err(Error::Metric("no positive pairs".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Metric(format!("alpha must be positive, got {alpha}")));
    }
    let a = normalized_rows(view1)?;
    let b = normalized_rows(view2)?;
    let total: f64 = a.iter().zip(&b).map(|(x, y)| sq_dist(x, y).sqrt().powf(alpha)).sum();
    Ok(total / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairSet {
    /// Ordered pairs with `i ≠ j`.
    #[default]
    Distinct,
    /// All `n²` ordered pairs, self-pairs included.
    All,
}

/// `log E[exp(−t ‖f(x) − f(y)‖²)]` over the chosen pair set.
pub fn uniformity(features: &Matrix, t: f64, pairs: PairSet) -> Result<f64> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::Metric("uniformity needs at least 2 rows".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Metric(format!("t must be positive, got {t}")));
    }
    let f = normalized_rows(features)?;
    // log-sum-exp over the unordered pairs; the ordered set doubles each term
    let mut exponents = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            exponents.push(-t * sq_dist(&f[i], &f[j]));
        }
    }
    let (count, self_pairs) = match pairs {
        PairSet::Distinct => ((n * (n - 1)) as f64, 0.0),
        PairSet::All => ((n * n) as f64, n as f64),
    };
    let mut max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if self_pairs > 0.0 {
        max = max.max(0.0);
    }
    let mut sum = 2.0 * exponents.iter().map(|e| (e - max).exp()).sum::<f64>();
    sum += self_pairs * (-max).exp();
    Ok((max + sum.ln() - count.ln()).min(0.0))
}

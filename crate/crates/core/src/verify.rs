//! Three-stage alignment verification for a proxy-task family.
//!
//! 1. Proxy health: is the proxy metric saturated, failed, or informative?
//! 2. Representation suitability: does each scoring backend beat chance by a
//!    margin on the family's best configuration?
//! 3. Alignment: does improving the proxy track improving ASD performance,
//!    with statistical significance?
//!
//! Stage 3 only runs when stage 1 reports a healthy proxy.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::correlation::{
    correlate_family, AsdMetric, AsdValues, ConfigRecord, CorrelationResult, Direction, PermutationOptions, ProxyMetric,
};
use crate::error::{Error, Result};
use crate::protocol::EvalResult;

const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    /// Fraction of a bounded metric's range above which it counts as saturated.
    pub saturation_ceiling: f64,
    /// Relative span `(max − min) / mean|v|` below which proxy values are saturated.
    pub saturation_span: f64,
    /// Chance or failure levels keyed by metric name (`"auc"`, `"si_sdri"`, ...).
    pub failure_floor: BTreeMap<String, f64>,
    pub stage2_margin: f64,
    pub stage3_rho_min: f64,
    pub stage3_alpha: f64,
    pub asd_metric: AsdMetric,
    #[serde(skip)]
    pub permutation: PermutationOptions,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            saturation_ceiling: 0.97,
            saturation_span: 0.02,
            failure_floor: BTreeMap::from([("auc".to_string(), 0.5), ("si_sdri".to_string(), 0.0)]),
            stage2_margin: 0.05,
            stage3_rho_min: 0.8,
            stage3_alpha: 0.05,
            asd_metric: AsdMetric::Md,
            permutation: PermutationOptions::default(),
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.saturation_ceiling) || !(self.saturation_span >= 0.0) {
            return Err(Error::Config("saturation thresholds out of range".into()));
        }
        if !(self.stage3_alpha > 0.0 && self.stage3_alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.stage3_alpha)));
        }
        if !unit(self.stage3_rho_min) || !(self.stage2_margin >= 0.0) {
            return Err(Error::Config("stage 2/3 thresholds out of range".into()));
        }
        if self.failure_floor.values().any(|v| !v.is_finite()) {
            return Err(Error::Config("failure floors must be finite".into()));
        }
        Ok(())
    }

    pub fn chance_auc(&self) -> f64 {
        self.failure_floor.get("auc").copied().unwrap_or(0.5)
    }
}

// ── Stage 1 ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyHealth {
    Healthy,
    Saturated,
    Failed,
}

pub fn stage1_health(records: &[ConfigRecord], cfg: &VerifyConfig) -> ProxyHealth {
    let Some(first) = records.first() else {
        return ProxyHealth::Saturated;
    };
    let metric = first.proxy_metric;
    let direction = first.direction;
    let values: Vec<f64> = records.iter().map(|r| r.proxy_value).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);

    if let Some(&floor) = cfg.failure_floor.get(metric.name()) {
        let failed = match direction {
            Direction::High => max <= floor,
            Direction::Low => min >= floor,
        };
        if failed {
            return ProxyHealth::Failed;
        }
    }
    if max == min {
        return ProxyHealth::Saturated;
    }
    let scale = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    if (max - min) / scale < cfg.saturation_span {
        return ProxyHealth::Saturated;
    }
    if let (Some(bound), Direction::High) = (metric.upper_bound(), direction) {
        if min / bound >= cfg.saturation_ceiling {
            return ProxyHealth::Saturated;
        }
    }
    ProxyHealth::Healthy
}

// ── Stage 2 ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suitability {
    Suitable,
    Unsuitable,
    NotEvaluated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresentationCheck {
    pub lp: Suitability,
    pub md: Suitability,
    /// The AUCs the decision was based on.
    pub lp_auc: Option<f64>,
    pub md_auc: Option<f64>,
    pub threshold: f64,
}

fn suitability(auc: Option<f64>, threshold: f64) -> Suitability {
    match auc {
        None => Suitability::NotEvaluated,
        Some(a) if a >= threshold - THRESHOLD_SLACK => Suitability::Suitable,
        Some(_) => Suitability::Unsuitable,
    }
}

/// LP suitability uses the in-domain AUC when present, else the out-domain one.
pub fn stage2_representation(result: &EvalResult, cfg: &VerifyConfig) -> RepresentationCheck {
    let threshold = cfg.chance_auc() + cfg.stage2_margin;
    let lp_auc = result.in_domain_lp_auc.or(result.out_domain_lp_auc);
    RepresentationCheck {
        lp: suitability(lp_auc, threshold),
        md: suitability(result.md_auc, threshold),
        lp_auc,
        md_auc: result.md_auc,
        threshold,
    }
}

/// Stage 2 over a family: each backend is judged on its best configuration.
pub fn stage2_family(results: &[EvalResult], cfg: &VerifyConfig) -> RepresentationCheck {
    let best = |f: fn(&EvalResult) -> Option<f64>| results.iter().filter_map(f).reduce(f64::max);
    let summary = EvalResult {
        config_id: "best".into(),
        machine: "ALL".into(),
        in_domain_lp_auc: best(|r| r.in_domain_lp_auc.or(r.out_domain_lp_auc)),
        out_domain_lp_auc: None,
        md_auc: best(|r| r.md_auc),
        per_fold: Vec::new(),
    };
    stage2_representation(&summary, cfg)
}

// ── Stage 3 ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentStatus {
    Aligned,
    Misaligned,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentCheck {
    pub metric: AsdMetric,
    pub status: AlignmentStatus,
    /// ρ with the proxy direction applied: positive means improving proxy
    /// tracks improving ASD.
    pub adjusted_rho: Option<f64>,
    pub correlation: Option<CorrelationResult>,
    pub reason: String,
}

/// Classifies a correlation, in order:
/// aligned (adjusted ρ ≥ ρ_min, p < α); misaligned (adjusted ρ ≤ 0);
/// inconclusive (|ρ| ≥ ρ_min, p ≥ α); misaligned (p ≥ α);
/// otherwise inconclusive (significant but weak).
pub fn classify_alignment(adjusted_rho: f64, p: f64, cfg: &VerifyConfig) -> (AlignmentStatus, String) {
    let rho_min = cfg.stage3_rho_min;
    let alpha = cfg.stage3_alpha;
    if adjusted_rho >= rho_min - THRESHOLD_SLACK && p < alpha {
        (AlignmentStatus::Aligned, format!("ρ = {adjusted_rho:.3} ≥ {rho_min} with p = {p:.4} < {alpha}"))
    } else if adjusted_rho <= 0.0 {
        (AlignmentStatus::Misaligned, format!("improving proxy does not improve ASD (ρ = {adjusted_rho:.3})"))
    } else if adjusted_rho.abs() >= rho_min - THRESHOLD_SLACK {
        (AlignmentStatus::Inconclusive, format!("strong ρ = {adjusted_rho:.3} but p = {p:.4} ≥ {alpha}; too few configurations"))
    } else if p >= alpha {
        (AlignmentStatus::Misaligned, format!("no significant correlation (ρ = {adjusted_rho:.3}, p = {p:.4})"))
    } else {
        (AlignmentStatus::Inconclusive, format!("significant but weak correlation (ρ = {adjusted_rho:.3} < {rho_min})"))
    }
}

pub fn stage3_alignment(records: &[ConfigRecord], metric: AsdMetric, cfg: &VerifyConfig) -> AlignmentCheck {
    let direction = records.first().map_or(Direction::High, |r| r.direction);
    match correlate_family(records, metric, &cfg.permutation) {
        Ok(corr) => {
            let adjusted = corr.rho * direction.sign();
            let (status, reason) = classify_alignment(adjusted, corr.p_two_sided, cfg);
            AlignmentCheck {
                metric,
                status,
                adjusted_rho: Some(adjusted),
                correlation: Some(corr),
                reason,
            }
        }
        Err(e) => AlignmentCheck {
            metric,
            status: AlignmentStatus::Inconclusive,
            adjusted_rho: None,
            correlation: None,
            reason: e.to_string(),
        },
    }
}

// ── Composition ───────────────────────────────────────────────────────

/// Which failure or success pattern the family matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Saturation,
    TrainingFailure,
    Collapse,
    Partial,
    Aligned,
    Misaligned,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentVerdict {
    pub family: String,
    pub proxy_metric: ProxyMetric,
    pub direction: Direction,
    pub n_configs: usize,
    pub stage1: ProxyHealth,
    pub stage2: RepresentationCheck,
    pub stage3: AlignmentCheck,
    /// Stage 3 evaluated against every ASD metric (empty unless stage 1 is healthy).
    pub stage3_all: Vec<AlignmentCheck>,
    pub regime: Regime,
    pub narrative: String,
    pub config: VerifyConfig,
}

impl AlignmentVerdict {
    /// Process exit code: 0 aligned, 3 saturated, 4 misaligned or failed,
    /// 5 inconclusive.
    pub fn exit_code(&self) -> i32 {
        match (self.stage1, self.stage3.status) {
            (ProxyHealth::Saturated, _) => 3,
            (ProxyHealth::Failed, _) => 4,
            (_, AlignmentStatus::Aligned) => 0,
            (_, AlignmentStatus::Misaligned) => 4,
            (_, AlignmentStatus::Inconclusive) => 5,
        }
    }
}

pub fn eval_result_from_record(r: &ConfigRecord) -> EvalResult {
    let AsdValues { in_lp, out_lp, md } = r.asd;
    EvalResult {
        config_id: r.config_id.clone(),
        machine: "ALL".into(),
        in_domain_lp_auc: Some(in_lp),
        out_domain_lp_auc: Some(out_lp),
        md_auc: Some(md),
        per_fold: Vec::new(),
    }
}

/// Runs all three stages. When `eval_results` is empty, the ASD values in the
/// records stand in for them.
pub fn run_protocol(records: &[ConfigRecord], eval_results: &[EvalResult], cfg: &VerifyConfig) -> Result<AlignmentVerdict> {
    cfg.validate()?;
    let first = records
        .first()
        .ok_or_else(|| Error::Protocol("no configurations to verify".into()))?;
    if let Some(r) = records
        .iter()
        .find(|r| r.family != first.family || r.proxy_metric != first.proxy_metric || r.direction != first.direction)
    {
        return Err(Error::Protocol(format!(
            "record {:?} does not belong to family {:?} ({}, {})",
            r.config_id,
            first.family,
            first.proxy_metric.name(),
            first.direction
        )));
    }
    if records.len() < 3 {
        return Err(Error::Protocol(format!("need at least 3 configurations, got {}", records.len())));
    }

    let stage1 = stage1_health(records, cfg);
    let derived: Vec<EvalResult>;
    let results = if eval_results.is_empty() {
        derived = records.iter().map(eval_result_from_record).collect();
        &derived[..]
    } else {
        eval_results
    };
    let stage2 = stage2_family(results, cfg);

    let (stage3, stage3_all) = if stage1 == ProxyHealth::Healthy {
        let all: Vec<AlignmentCheck> = AsdMetric::ALL.iter().map(|&m| stage3_alignment(records, m, cfg)).collect();
        let primary = all.iter().find(|c| c.metric == cfg.asd_metric).cloned().expect("all metrics evaluated");
        (primary, all)
    } else {
        let reason = format!("proxy metric is {stage1:?}; correlation not meaningful").to_lowercase();
        (
            AlignmentCheck {
                metric: cfg.asd_metric,
                status: AlignmentStatus::Inconclusive,
                adjusted_rho: None,
                correlation: None,
                reason,
            },
            Vec::new(),
        )
    };

    let regime = classify_regime(stage1, &stage2, &stage3, &stage3_all, cfg);
    let narrative = narrate(&first.family, stage1, &stage2, &stage3, regime);
    Ok(AlignmentVerdict {
        family: first.family.clone(),
        proxy_metric: first.proxy_metric,
        direction: first.direction,
        n_configs: records.len(),
        stage1,
        stage2,
        stage3,
        stage3_all,
        regime,
        narrative,
        config: cfg.clone(),
    })
}

fn classify_regime(
    stage1: ProxyHealth,
    stage2: &RepresentationCheck,
    stage3: &AlignmentCheck,
    all: &[AlignmentCheck],
    cfg: &VerifyConfig,
) -> Regime {
    match stage1 {
        ProxyHealth::Saturated => return Regime::Saturation,
        ProxyHealth::Failed => return Regime::TrainingFailure,
        ProxyHealth::Healthy => {}
    }
    let unusable = |s: Suitability| s != Suitability::Suitable;
    if stage3.status != AlignmentStatus::Aligned && unusable(stage2.lp) && unusable(stage2.md) {
        return Regime::Collapse;
    }
    let positive = |c: &AlignmentCheck| {
        matches!((c.adjusted_rho, &c.correlation), (Some(r), Some(corr)) if r > 0.0 && corr.p_two_sided < cfg.stage3_alpha)
    };
    let lagging = all.iter().any(|c| c.status == AlignmentStatus::Misaligned) || unusable(stage2.lp) || unusable(stage2.md);
    if all.iter().any(positive) && lagging {
        return Regime::Partial;
    }
    if stage3.status == AlignmentStatus::Aligned {
        Regime::Aligned
    } else {
        Regime::Misaligned
    }
}

fn narrate(family: &str, stage1: ProxyHealth, stage2: &RepresentationCheck, stage3: &AlignmentCheck, regime: Regime) -> String {
    let head = match regime {
        Regime::Saturation => "proxy metric is saturated; it cannot discriminate between configurations",
        Regime::TrainingFailure => "proxy metric indicates training failure",
        Regime::Collapse => "representations score near chance on every backend (collapse)",
        Regime::Partial => "proxy tracks ASD on some metrics or backends but not all (partial alignment)",
        Regime::Aligned => "proxy improvements track ASD improvements",
        Regime::Misaligned => "proxy improvements do not track ASD performance",
    };
    let fmt_auc = |a: Option<f64>| a.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    format!(
        "{family}: {head}. stage 1 {stage1:?}; stage 2 LP {:?} (best AUC {}), MD {:?} (best AUC {}); stage 3 on {}: {:?} ({}).",
        stage2.lp,
        fmt_auc(stage2.lp_auc),
        stage2.md,
        fmt_auc(stage2.md_auc),
        stage3.metric,
        stage3.status,
        stage3.reason
    )
}

impl fmt::Display for AlignmentVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "== alignment verdict: {} ==", self.family)?;
        writeln!(f, "proxy metric : {} ({})", self.proxy_metric.name(), self.direction)?;
        writeln!(f, "configs      : {}", self.n_configs)?;
        writeln!(f, "stage 1      : {:?}", self.stage1)?;
        writeln!(f, "stage 2      : LP {:?}, MD {:?} (threshold {:.3})", self.stage2.lp, self.stage2.md, self.stage2.threshold)?;
        match &self.stage3.correlation {
            Some(c) => writeln!(
                f,
                "stage 3      : {:?} on {} (rho {:+.3}, p {:.4})",
                self.stage3.status, self.stage3.metric, c.rho, c.p_two_sided
            )?,
            None => writeln!(f, "stage 3      : {:?} ({})", self.stage3.status, self.stage3.reason)?,
        }
        writeln!(f, "regime       : {:?}", self.regime)?;
        write!(f, "{}", self.narrative)
    }
}

//! Evaluation scenarios over a dataset bundle.
//!
//! * in-domain LP: the test rows of every (section, label) group are shuffled
//!   and split half/half into probe-training and evaluation rows; one AUC is
//!   computed over the pooled evaluation rows.
//! * out-domain LP: leave-one-section-out. Each fold trains the probe on the
//!   other sections and evaluates on the held-out one; the headline value is
//!   the mean of the per-fold AUCs.
//! * MD: global statistics from all normal training rows, one AUC over all
//!   test rows.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetBundle, Label, TestTable};
use crate::error::{Error, Result};
use crate::metrics::auc_labeled;
use crate::scoring::{fit_lp, fit_md, score_lp, score_md, LpHyper, Regularization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    InDomainLp,
    OutDomainLp,
    Md,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    /// Row ids into the bundle's [`TestTable`], ascending.
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
    /// The evaluated section for out-domain folds.
    pub held_out_section: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub scenario: Scenario,
    pub folds: Vec<Fold>,
    pub seed: u64,
}

impl SplitPlan {
    /// Checks that no fold evaluates a row it was trained on.
    pub fn check_no_leakage(&self) -> Result<()> {
        for (i, f) in self.folds.iter().enumerate() {
            let train: BTreeSet<usize> = f.train.iter().copied().collect();
            if let Some(r) = f.eval.iter().find(|r| train.contains(r)) {
                return Err(Error::Protocol(format!("fold {i}: row {r} in both train and eval")));
            }
        }
        Ok(())
    }
}

fn group_rows(table: &TestTable) -> BTreeMap<(u16, Label), Vec<usize>> {
    let mut groups: BTreeMap<(u16, Label), Vec<usize>> = BTreeMap::new();
    for (i, (s, l)) in table.sections.iter().zip(&table.labels).enumerate() {
        groups.entry((*s, *l)).or_default().push(i);
    }
    groups
}

pub fn make_split(table: &TestTable, scenario: Scenario, seed: u64) -> Result<SplitPlan> {
    let groups = group_rows(table);
    let sections: BTreeSet<u16> = table.sections.iter().copied().collect();
    if scenario != Scenario::Md {
        for s in &sections {
            for l in [Label::Normal, Label::Anomaly] {
                if !groups.contains_key(&(*s, l)) {
                    return Err(Error::Protocol(format!(
                        "section {s} lacks {l:?} rows required for probing"
                    )));
                }
            }
        }
    }
    let n = table.labels.len();
    let folds = match scenario {
        Scenario::InDomainLp => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut train = Vec::new();
            let mut eval = Vec::new();
            for rows in groups.values() {
                if rows.len() < 2 {
                    return Err(Error::Protocol("in-domain split needs at least 2 rows per group".into()));
                }
                let mut rows = rows.clone();
                rows.shuffle(&mut rng);
                let half = rows.len() / 2;
                train.extend_from_slice(&rows[..half]);
                eval.extend_from_slice(&rows[half..]);
            }
            train.sort_unstable();
            eval.sort_unstable();
            vec![Fold {
                train,
                eval,
                held_out_section: None,
            }]
        }
        Scenario::OutDomainLp => {
            if sections.len() < 2 {
                return Err(Error::Protocol(format!(
                    "leave-one-section-out needs at least 2 sections, found {}",
                    sections.len()
                )));
            }
            sections
                .iter()
                .map(|&held| {
                    let (eval, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| table.sections[i] == held);
                    Fold {
                        train,
                        eval,
                        held_out_section: Some(held),
                    }
                })
                .collect()
        }
        Scenario::Md => vec![Fold {
            train: Vec::new(),
            eval: (0..n).collect(),
            held_out_section: None,
        }],
    };
    let plan = SplitPlan { scenario, folds, seed };
    plan.check_no_leakage()?;
    Ok(plan)
}

/// Outcome of one LP scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpEvaluation {
    pub scenario: Scenario,
    pub auc: f64,
    pub per_fold: Vec<f64>,
}

pub fn evaluate_lp(bundle: &DatasetBundle, plan: &SplitPlan, hyper: &LpHyper) -> Result<LpEvaluation> {
    if plan.scenario == Scenario::Md {
        return Err(Error::Protocol("evaluate_lp called with an MD plan".into()));
    }
    let table = bundle.test_table()?;
    let is_anomaly: Vec<bool> = table.labels.iter().map(|l| *l == Label::Anomaly).collect();
    let mut per_fold = Vec::with_capacity(plan.folds.len());
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    for (i, fold) in plan.folds.iter().enumerate() {
        let ctx = |e: Error| e.context(format!("{}: fold {i}", bundle.machine));
        let x = table.features.select_rows(&fold.train);
        let y: Vec<usize> = fold.train.iter().map(|&r| table.labels[r].class_id()).collect();
        let model = fit_lp(&x, &y, hyper).map_err(ctx)?;
        let scores = score_lp(&model, &table.features.select_rows(&fold.eval)).map_err(ctx)?;
        let labels: Vec<bool> = fold.eval.iter().map(|&r| is_anomaly[r]).collect();
        per_fold.push(auc_labeled(&scores.scores, &labels).map_err(ctx)?);
        pooled_scores.extend(scores.scores);
        pooled_labels.extend(labels);
    }
    let auc = match plan.scenario {
        Scenario::InDomainLp => auc_labeled(&pooled_scores, &pooled_labels)?,
        _ => per_fold.iter().sum::<f64>() / per_fold.len() as f64,
    };
    Ok(LpEvaluation {
        scenario: plan.scenario,
        auc,
        per_fold,
    })
}

pub fn evaluate_md(bundle: &DatasetBundle, reg: Regularization) -> Result<f64> {
    let ctx = |e: Error| e.context(format!("{}: mahalanobis", bundle.machine));
    let normals = bundle.train_normals().map_err(ctx)?;
    let model = fit_md(&normals, reg).map_err(ctx)?;
    let table = bundle.test_table().map_err(ctx)?;
    let scores = score_md(&model, &table.features).map_err(ctx)?;
    let labels: Vec<bool> = table.labels.iter().map(|l| *l == Label::Anomaly).collect();
    auc_labeled(&scores.scores, &labels).map_err(ctx)
}

/// One row of a results table. AUCs are fractions in `[0, 1]`; a column is
/// `None` when its backend was not run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub config_id: String,
    pub machine: String,
    pub in_domain_lp_auc: Option<f64>,
    pub out_domain_lp_auc: Option<f64>,
    pub md_auc: Option<f64>,
    /// Out-domain fold AUCs in section order.
    pub per_fold: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendSelection {
    Lp,
    Md,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub config_id: String,
    pub hyper: LpHyper,
    pub reg: Regularization,
    pub seed: u64,
    /// LP scenarios to run; ignored when `backend` is `Md`.
    pub lp_scenarios: Vec<Scenario>,
    pub backend: BackendSelection,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            config_id: "default".into(),
            hyper: LpHyper::default(),
            reg: Regularization::Auto,
            seed: 0,
            lp_scenarios: vec![Scenario::InDomainLp, Scenario::OutDomainLp],
            backend: BackendSelection::Both,
        }
    }
}

/// Runs every selected scenario on one machine.
pub fn evaluate_bundle(bundle: &DatasetBundle, settings: &EvalSettings) -> Result<EvalResult> {
    let mut result = EvalResult {
        config_id: settings.config_id.clone(),
        machine: bundle.machine.clone(),
        in_domain_lp_auc: None,
        out_domain_lp_auc: None,
        md_auc: None,
        per_fold: Vec::new(),
    };
    if settings.backend != BackendSelection::Md {
        let table = bundle.test_table()?;
        for &scenario in &settings.lp_scenarios {
            let plan = make_split(&table, scenario, settings.seed).map_err(|e| e.context(bundle.machine.clone()))?;
            let eval = evaluate_lp(bundle, &plan, &settings.hyper)?;
            match scenario {
                Scenario::InDomainLp => result.in_domain_lp_auc = Some(eval.auc),
                Scenario::OutDomainLp => {
                    result.out_domain_lp_auc = Some(eval.auc);
                    result.per_fold = eval.per_fold;
                }
                Scenario::Md => {}
            }
        }
    }
    if settings.backend != BackendSelection::Lp {
        result.md_auc = Some(evaluate_md(bundle, settings.reg)?);
    }
    Ok(result)
}

/// Evaluates machines in parallel; results keep the input order.
pub fn evaluate_machines(bundles: &[DatasetBundle], settings: &EvalSettings) -> Result<Vec<EvalResult>> {
    bundles.par_iter().map(|b| evaluate_bundle(b, settings)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Arithmetic,
    Harmonic,
}

fn aggregate_column(values: &[Option<f64>], mode: Aggregation, name: &str) -> Result<Option<f64>> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Ok(None);
    }
    if present.len() != values.len() {
        return Err(Error::Protocol(format!("column {name} missing for some machines")));
    }
    let n = present.len() as f64;
    Ok(Some(match mode {
        Aggregation::Arithmetic => present.iter().sum::<f64>() / n,
        Aggregation::Harmonic => {
            if present.iter().any(|v| *v <= 0.0) {
                return Err(Error::Protocol(format!("harmonic mean of {name} needs positive values")));
            }
            n / present.iter().map(|v| 1.0 / v).sum::<f64>()
        }
    }))
}

/// Column-wise mean over machines. A single result is returned unchanged.
pub fn aggregate_machines(results: &[EvalResult], mode: Aggregation) -> Result<EvalResult> {
    let first = results
        .first()
        .ok_or_else(|| Error::Protocol("nothing to aggregate".into()))?;
    if let Some(other) = results.iter().find(|r| r.config_id != first.config_id) {
        return Err(Error::Protocol(format!(
            "mixed configurations {:?} and {:?}",
            first.config_id, other.config_id
        )));
    }
    if results.len() == 1 {
        return Ok(first.clone());
    }
    let col = |f: fn(&EvalResult) -> Option<f64>| results.iter().map(f).collect::<Vec<_>>();
    Ok(EvalResult {
        config_id: first.config_id.clone(),
        machine: "ALL".into(),
        in_domain_lp_auc: aggregate_column(&col(|r| r.in_domain_lp_auc), mode, "in_lp")?,
        out_domain_lp_auc: aggregate_column(&col(|r| r.out_domain_lp_auc), mode, "out_lp")?,
        md_auc: aggregate_column(&col(|r| r.md_auc), mode, "md")?,
        per_fold: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn table(sections: &[u16], normal: usize, anomaly: usize) -> TestTable {
        let mut labels = Vec::new();
        let mut secs = Vec::new();
        for &s in sections {
            for (l, n) in [(Label::Normal, normal), (Label::Anomaly, anomaly)] {
                labels.extend(std::iter::repeat(l).take(n));
                secs.extend(std::iter::repeat(s).take(n));
            }
        }
        TestTable {
            features: Matrix::zeros(labels.len(), 1),
            labels,
            sections: secs,
        }
    }

    #[test]
    fn in_domain_counts() {
        let t = table(&[0, 1, 2], 100, 100);
        let plan = make_split(&t, Scenario::InDomainLp, 7).unwrap();
        assert_eq!(plan.folds.len(), 1);
        let f = &plan.folds[0];
        assert_eq!((f.train.len(), f.eval.len()), (300, 300));
        for s in 0..3u16 {
            for l in [Label::Normal, Label::Anomaly] {
                let k = f.train.iter().filter(|&&r| t.sections[r] == s && t.labels[r] == l).count();
                assert_eq!(k, 50);
            }
        }
    }

    #[test]
    fn out_domain_counts() {
        let t = table(&[0, 1, 2], 100, 100);
        let plan = make_split(&t, Scenario::OutDomainLp, 0).unwrap();
        assert_eq!(plan.folds.len(), 3);
        for f in &plan.folds {
            assert_eq!((f.train.len(), f.eval.len()), (400, 200));
        }
        let t = table(&[0, 1], 4, 4);
        let plan = make_split(&t, Scenario::OutDomainLp, 0).unwrap();
        assert_eq!(plan.folds.len(), 2);
        for f in &plan.folds {
            assert_eq!((f.train.len(), f.eval.len()), (8, 8));
        }
    }

    #[test]
    fn single_section_out_domain_rejected() {
        let t = table(&[3], 5, 5);
        assert!(matches!(make_split(&t, Scenario::OutDomainLp, 0), Err(Error::Protocol(_))));
    }

    #[test]
    fn missing_label_rejected_for_probing() {
        let t = table(&[0, 1], 5, 0);
        assert!(make_split(&t, Scenario::InDomainLp, 0).is_err());
        assert!(make_split(&t, Scenario::Md, 0).is_ok());
    }

    fn result(id: &str, auc: f64) -> EvalResult {
        EvalResult {
            config_id: id.into(),
            machine: "m".into(),
            in_domain_lp_auc: Some(auc),
            out_domain_lp_auc: Some(auc),
            md_auc: Some(auc),
            per_fold: vec![auc],
        }
    }

    #[test]
    fn aggregation_modes() {
        let one = result("c", 0.6);
        assert_eq!(aggregate_machines(std::slice::from_ref(&one), Aggregation::Harmonic).unwrap(), one);
        let two = [result("c", 0.6), result("c", 0.8)];
        let a = aggregate_machines(&two, Aggregation::Arithmetic).unwrap();
        assert!((a.md_auc.unwrap() - 0.7).abs() < 1e-15);
        let h = aggregate_machines(&two, Aggregation::Harmonic).unwrap();
        assert!((h.md_auc.unwrap() - 2.0 / (1.0 / 0.6 + 1.0 / 0.8)).abs() < 1e-15);
        assert!((h.md_auc.unwrap() - 0.685714).abs() < 1e-6);
        assert!(aggregate_machines(&[result("a", 0.5), result("b", 0.5)], Aggregation::Arithmetic).is_err());
        assert!(aggregate_machines(&[], Aggregation::Arithmetic).is_err());
    }
}

//! Command-line front end.
//!
//! Every command writes only inside `--out` and prints one
//! `SUMMARY key=value ...` line on stdout. Exit codes: 0 success (or an
//! aligned verdict), 2 error, and for `verify` 3 saturated, 4 misaligned,
//! 5 inconclusive.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::correlation::{AsdMetric, AsdValues, ConfigRecord, Direction, PermutationOptions, ProxyMetric};
use crate::dataio::{encode_bundles, load_manifest, read_feature_file, DatasetBundle, FeatureFormat};
use crate::matrix::Matrix;
use crate::metrics::{self, PairSet, SdriCase};
use crate::error::{Error, Result};
use crate::protocol::{aggregate_machines, evaluate_machines, Aggregation, BackendSelection, EvalResult, EvalSettings, Scenario};
use crate::report;
use crate::scoring::LpHyper;
use crate::toyae::{self, AEConfig, AdamWConfig, BandPerturbation, FamilyRegime, StepLr, SynthSpec};
use crate::verify::{run_protocol, VerifyConfig};

pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "proxyprobe", version, about = "Proxy-task alignment checks for anomalous sound detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a feature manifest with the linear probe and Mahalanobis detector.
    Evaluate(EvaluateArgs),
    /// Spearman correlation between proxy values and ASD AUCs per family.
    Correlate(CorrelateArgs),
    /// Three-stage alignment verification of one family.
    Verify(VerifyArgs),
    /// Scatter data and SVG plots of proxy performance against AUC.
    Report(ReportArgs),
    /// Train the reconstruction autoencoder and extract error features.
    TrainAe(TrainAeArgs),
    /// Generate synthetic feature bundles or configuration families.
    Synth(SynthArgs),
    /// Compute one detection or proxy metric from feature or signal files.
    Metric(MetricArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendFlag {
    Lp,
    Md,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioFlag {
    In,
    Out,
    Md,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateFlag {
    Arith,
    Harm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricFlag {
    InLp,
    OutLp,
    Md,
}

impl From<MetricFlag> for AsdMetric {
    fn from(m: MetricFlag) -> Self {
        match m {
            MetricFlag::InLp => AsdMetric::InLp,
            MetricFlag::OutLp => AsdMetric::OutLp,
            MetricFlag::Md => AsdMetric::Md,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionFlag {
    High,
    Low,
}

impl From<DirectionFlag> for Direction {
    fn from(d: DirectionFlag) -> Self {
        match d {
            DirectionFlag::High => Direction::High,
            DirectionFlag::Low => Direction::Low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeFlag {
    Aligned,
    Saturated,
    Collapsed,
    Partial,
}

impl From<RegimeFlag> for FamilyRegime {
    fn from(r: RegimeFlag) -> Self {
        match r {
            RegimeFlag::Aligned => FamilyRegime::Aligned,
            RegimeFlag::Saturated => FamilyRegime::Saturated,
            RegimeFlag::Collapsed => FamilyRegime::Collapsed,
            RegimeFlag::Partial => FamilyRegime::Partial,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory; created if absent.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub backend: BackendFlag,
    /// Restrict to one scenario; `md` implies the Mahalanobis backend only.
    #[arg(long, value_enum, conflicts_with = "backend")]
    pub scenario: Option<ScenarioFlag>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "arith")]
    pub aggregate: AggregateFlag,
    #[arg(long, default_value = "default")]
    pub config_id: String,
    #[arg(long, default_value_t = 500)]
    pub lp_epochs: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct PermutationArgs {
    /// Largest n for full enumeration (at most 12); larger families use Monte Carlo.
    #[arg(long, default_value_t = 10, value_parser = parse_exact_limit)]
    pub exact_limit: usize,
    #[arg(long, default_value_t = 1_000_000, value_parser = parse_positive)]
    pub mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_exact_limit(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v > 12 {
        return Err("must be at most 12".into());
    }
    Ok(v)
}

fn parse_positive(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v == 0 {
        return Err("must be positive".into());
    }
    Ok(v)
}

impl PermutationArgs {
    fn options(&self) -> PermutationOptions {
        PermutationOptions {
            exact_limit: self.exact_limit,
            mc_draws: self.mc_draws,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// ASD metric; all three when omitted.
    #[arg(long, value_enum)]
    pub metric: Option<MetricFlag>,
    /// Override the direction column for every record.
    #[arg(long, value_enum)]
    pub direction: Option<DirectionFlag>,
    #[command(flatten)]
    pub permutation: PermutationArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Evaluation CSV for stage 2; the records' AUCs are used when omitted.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Family to verify when the records hold several.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, value_enum, default_value = "md")]
    pub metric: MetricFlag,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionFlag>,
    #[arg(long, default_value_t = 0.97)]
    pub saturation_ceiling: f64,
    #[arg(long, default_value_t = 0.02)]
    pub saturation_span: f64,
    #[arg(long, default_value_t = 0.05)]
    pub stage2_margin: f64,
    #[arg(long, default_value_t = 0.8)]
    pub rho_min: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub permutation: PermutationArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// ASD metric to plot; one plot per metric when omitted.
    #[arg(long, value_enum)]
    pub metric: Option<MetricFlag>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionFlag>,
    #[command(flatten)]
    pub permutation: PermutationArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct TrainAeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub latent: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    /// Train the 3 × 3 grid of latent {4,8,16} × hidden {64,128,256}.
    #[arg(long, conflicts_with_all = ["latent", "hidden"])]
    pub grid: bool,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 80)]
    pub step_period: usize,
    #[arg(long, default_value_t = 0.1)]
    pub step_gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also score the error features and write records/eval CSVs.
    #[arg(long)]
    pub evaluate: bool,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generate an evaluated configuration family instead of a feature bundle.
    #[arg(long, value_enum)]
    pub regime: Option<RegimeFlag>,
    #[arg(long, default_value_t = 8, requires = "regime")]
    pub n_configs: usize,
    /// Comma-separated machine names.
    #[arg(long, default_value = "toy", value_delimiter = ',', conflicts_with = "regime")]
    pub machines: Vec<String>,
    #[arg(long, default_value = "0,1,2", value_delimiter = ',', conflicts_with = "regime")]
    pub sections: Vec<u16>,
    #[arg(long, default_value_t = 1000, conflicts_with = "regime")]
    pub train: usize,
    #[arg(long, default_value_t = 100, conflicts_with = "regime")]
    pub test_normal: usize,
    #[arg(long, default_value_t = 100, conflicts_with = "regime")]
    pub test_anomaly: usize,
    #[arg(long, default_value_t = 0.1, conflicts_with = "regime")]
    pub noise_scale: f64,
    /// Band offset in units of the noise scale.
    #[arg(long, default_value_t = 6.0, conflicts_with = "regime")]
    pub magnitude_sigma: f64,
    #[arg(long, default_value_t = 256, conflicts_with = "regime")]
    pub band_start: usize,
    #[arg(long, default_value_t = 64, conflicts_with = "regime")]
    pub band_width: usize,
    #[arg(long, default_value_t = 0.05, conflicts_with = "regime")]
    pub section_shift: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

/// Input files are feature files: `.csv` (no header) or binary. Score,
/// label and signal files may be a single row or a single column.
#[derive(Debug, Args)]
pub struct MetricArgs {
    #[command(subcommand)]
    pub kind: MetricKind,
    /// Output directory; created if absent. Required; may follow the metric name.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum MetricKind {
    /// ROC-AUC from one score file per class.
    Auc {
        #[arg(long)]
        normal: PathBuf,
        #[arg(long)]
        anomaly: PathBuf,
    },
    /// Mean absolute error between a spectrogram and its reconstruction.
    Mae {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reconstruction: PathBuf,
    },
    /// Macro-F1 from true and predicted class ids.
    F1 {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_parser = parse_positive)]
        classes: usize,
    },
    /// SI-SDR per row; SI-SDRi per row and their mean when a mixture is given.
    SiSdr {
        /// One signal per row.
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        mixture: Option<PathBuf>,
        /// Input SNR of each row, in dB, labelling the per-condition values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "mixture")]
        snr: Vec<f64>,
    },
    /// Hypersphere alignment of positive pairs (row i of each view).
    Alignment {
        #[arg(long)]
        view1: PathBuf,
        #[arg(long)]
        view2: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
    },
    /// Hypersphere uniformity of the rows of a feature file.
    Uniformity {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        t: f64,
        /// Include each row paired with itself.
        #[arg(long)]
        all_pairs: bool,
    },
}

/// Parses `args` and runs the command, returning the process exit code.
/// Errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Correlate(a) => cmd_correlate(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Report(a) => cmd_report(&a),
        Command::TrainAe(a) => cmd_train_ae(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Metric(a) => cmd_metric(&a),
    }
}

/// Files are only written after every computation succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl AsRef<Path>, content: impl Into<Vec<u8>>) {
        self.files.push((name.as_ref().to_path_buf(), content.into()));
    }

    fn commit(self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for (name, content) in self.files {
            let path = self.dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn summary(command: &str, fields: &[(&str, String)]) {
    let mut line = format!("SUMMARY command={command}");
    for (k, v) in fields {
        line.push_str(&format!(" {k}={v}"));
    }
    println!("{line}");
}

fn evaluate_all(bundles: &[DatasetBundle], settings: &EvalSettings, mode: Aggregation) -> Result<(Vec<EvalResult>, EvalResult)> {
    let per_machine = evaluate_machines(bundles, settings)?;
    let mut all = aggregate_machines(&per_machine, mode)?;
    all.machine = "ALL".into();
    all.per_fold.clear();
    Ok((per_machine, all))
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<i32> {
    let bundles = load_manifest(&a.manifest)?;
    let (backend, lp_scenarios) = match a.scenario {
        None => (
            match a.backend {
                BackendFlag::Lp => BackendSelection::Lp,
                BackendFlag::Md => BackendSelection::Md,
                BackendFlag::Both => BackendSelection::Both,
            },
            vec![Scenario::InDomainLp, Scenario::OutDomainLp],
        ),
        Some(ScenarioFlag::In) => (BackendSelection::Lp, vec![Scenario::InDomainLp]),
        Some(ScenarioFlag::Out) => (BackendSelection::Lp, vec![Scenario::OutDomainLp]),
        Some(ScenarioFlag::Md) => (BackendSelection::Md, vec![]),
    };
    let settings = EvalSettings {
        config_id: a.config_id.clone(),
        hyper: LpHyper {
            epochs: a.lp_epochs,
            ..Default::default()
        },
        seed: a.seed,
        lp_scenarios,
        backend,
        ..Default::default()
    };
    let mode = match a.aggregate {
        AggregateFlag::Arith => Aggregation::Arithmetic,
        AggregateFlag::Harm => Aggregation::Harmonic,
    };
    let (per_machine, all) = evaluate_all(&bundles, &settings, mode)?;
    let mut rows = per_machine.clone();
    rows.push(all.clone());
    let mut out = Outputs::new(&a.out.out);
    out.add("eval.csv", report::eval_csv(&rows));
    out.add("folds.csv", report::folds_csv(&per_machine));
    out.commit()?;
    let fmt = |v: Option<f64>| v.map_or("na".into(), |x| format!("{x:.6}"));
    summary(
        "evaluate",
        &[
            ("machines", per_machine.len().to_string()),
            ("in_lp", fmt(all.in_domain_lp_auc)),
            ("out_lp", fmt(all.out_domain_lp_auc)),
            ("md", fmt(all.md_auc)),
            ("out", a.out.out.display().to_string()),
        ],
    );
    Ok(0)
}

fn load_records(path: &Path, direction: Option<DirectionFlag>) -> Result<Vec<ConfigRecord>> {
    let mut records = report::read_records(path)?;
    if let Some(d) = direction {
        for r in &mut records {
            r.direction = d.into();
        }
    }
    Ok(records)
}

fn selected_metrics(m: Option<MetricFlag>) -> Vec<AsdMetric> {
    m.map_or_else(|| AsdMetric::ALL.to_vec(), |m| vec![m.into()])
}

fn cmd_correlate(a: &CorrelateArgs) -> Result<i32> {
    let records = load_records(&a.records, a.direction)?;
    let rows = report::correlate_records(&records, &selected_metrics(a.metric), &a.permutation.options())?;
    let mut out = Outputs::new(&a.out.out);
    out.add("correlation.csv", report::correlation_csv(&rows));
    out.add("correlation_table.csv", report::correlation_wide_csv(&rows));
    out.commit()?;
    let saturated = rows.iter().filter(|r| r.result().is_none()).count();
    let significant = rows
        .iter()
        .filter_map(|r| r.result())
        .filter(|c| c.p_two_sided < 0.05)
        .count();
    summary(
        "correlate",
        &[
            ("cells", rows.len().to_string()),
            ("significant", significant.to_string()),
            ("saturated", saturated.to_string()),
            ("out", a.out.out.display().to_string()),
        ],
    );
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let records = load_records(&a.records, a.direction)?;
    let mut families = report::group_families(&records);
    let records = match &a.family {
        Some(f) => families
            .remove(f)
            .ok_or_else(|| Error::Protocol(format!("family {f:?} not found in records")))?,
        None if families.len() == 1 => families.into_values().next().expect("one family"),
        None => {
            let names: Vec<_> = families.keys().cloned().collect();
            return Err(Error::Protocol(format!("records hold several families {names:?}; pick one with --family")));
        }
    };
    let eval = match &a.eval {
        Some(p) => {
            let rows = report::read_eval(p)?;
            let all: Vec<EvalResult> = rows.iter().filter(|r| r.machine == "ALL").cloned().collect();
            if all.is_empty() {
                rows
            } else {
                all
            }
        }
        None => Vec::new(),
    };
    let cfg = VerifyConfig {
        saturation_ceiling: a.saturation_ceiling,
        saturation_span: a.saturation_span,
        stage2_margin: a.stage2_margin,
        stage3_rho_min: a.rho_min,
        stage3_alpha: a.alpha,
        asd_metric: a.metric.into(),
        permutation: a.permutation.options(),
        ..Default::default()
    };
    let verdict = run_protocol(&records, &eval, &cfg)?;
    let json = serde_json::to_string_pretty(&verdict).expect("verdict serializes");
    let mut out = Outputs::new(&a.out.out);
    out.add("verdict.json", format!("{json}\n"));
    out.add("verdict.txt", format!("{verdict}\n"));
    out.commit()?;
    println!("{verdict}");
    let code = verdict.exit_code();
    summary(
        "verify",
        &[
            ("family", verdict.family.clone()),
            ("stage1", format!("{:?}", verdict.stage1).to_lowercase()),
            ("stage3", format!("{:?}", verdict.stage3.status).to_lowercase()),
            ("regime", format!("{:?}", verdict.regime).to_lowercase()),
            ("exit", code.to_string()),
        ],
    );
    Ok(code)
}

fn cmd_report(a: &ReportArgs) -> Result<i32> {
    let records = load_records(&a.records, a.direction)?;
    let metrics = selected_metrics(a.metric);
    let rows = report::correlate_records(&records, &metrics, &a.permutation.options())?;
    let mut out = Outputs::new(&a.out.out);
    let mut trends = 0;
    for &m in &metrics {
        let series = report::scatter_series(&records, &rows, m)?;
        trends += series.iter().filter(|s| s.trend.is_some()).count();
        out.add(format!("scatter_{}.csv", m.name()), report::scatter_csv(&series));
        out.add(
            format!("scatter_{}.svg", m.name()),
            report::scatter_svg(&series, &format!("Proxy performance vs {}", m.name())),
        );
    }
    out.commit()?;
    summary(
        "report",
        &[
            ("plots", metrics.len().to_string()),
            ("families", report::group_families(&records).len().to_string()),
            ("trend_lines", trends.to_string()),
            ("out", a.out.out.display().to_string()),
        ],
    );
    Ok(0)
}

fn cmd_train_ae(a: &TrainAeArgs) -> Result<i32> {
    let bundles = load_manifest(&a.manifest)?;
    let base = AEConfig {
        input_dim: bundles[0].n_dims(),
        latent_dim: a.latent,
        hidden_dim: a.hidden,
        epochs: a.epochs,
        batch_size: a.batch_size,
        optimizer: AdamWConfig {
            lr: a.lr,
            weight_decay: a.weight_decay,
            ..Default::default()
        },
        step_lr: StepLr {
            period: a.step_period,
            gamma: a.step_gamma,
        },
        seed: a.seed,
    };
    let configs = if a.grid { AEConfig::grid(&base) } else { vec![base] };
    for c in &configs {
        c.validate()?;
    }

    let mut out = Outputs::new(&a.out.out);
    let mut summary_rows = csv::Writer::from_writer(Vec::new());
    summary_rows
        .write_record(["config_id", "machine", "latent", "hidden", "best_epoch", "initial_loss", "best_loss", "test_normal_mae"])
        .expect("in-memory write");
    let mut records = Vec::new();
    let mut eval_rows = Vec::new();
    for cfg in &configs {
        let config_id = format!("ae_l{}_h{}", cfg.latent_dim, cfg.hidden_dim);
        let mut curve = csv::Writer::from_writer(Vec::new());
        curve.write_record(["machine", "epoch", "loss"]).expect("in-memory write");
        let mut feature_bundles = Vec::new();
        let mut maes = Vec::new();
        for bundle in &bundles {
            let train = bundle.train_normals()?;
            let trained = toyae::train_ae(cfg, &train).map_err(|e| e.context(format!("{config_id}, machine {}", bundle.machine)))?;
            curve
                .write_record([bundle.machine.clone(), "0".into(), format!("{:.8}", trained.initial_loss)])
                .expect("in-memory write");
            for (i, l) in trained.loss_curve.iter().enumerate() {
                curve
                    .write_record([bundle.machine.clone(), (i + 1).to_string(), format!("{l:.8}")])
                    .expect("in-memory write");
            }
            let mae = toyae::test_normal_mae(bundle, &trained.model)?;
            maes.push(mae);
            summary_rows
                .write_record([
                    config_id.clone(),
                    bundle.machine.clone(),
                    cfg.latent_dim.to_string(),
                    cfg.hidden_dim.to_string(),
                    trained.best_epoch.to_string(),
                    format!("{:.8}", trained.initial_loss),
                    format!("{:.8}", trained.best_loss()),
                    format!("{mae:.8}"),
                ])
                .expect("in-memory write");
            feature_bundles.push(toyae::error_feature_bundle(bundle, &trained.model)?);
        }
        let (manifest, files) = encode_bundles(&feature_bundles)?;
        for (rel, bytes) in files {
            out.add(Path::new(&config_id).join(rel), bytes);
        }
        out.add(Path::new(&config_id).join("manifest.json"), manifest.to_json());
        out.add(Path::new(&config_id).join("loss_curve.csv"), curve.into_inner().expect("in-memory writer"));

        if a.evaluate {
            let settings = EvalSettings {
                config_id: config_id.clone(),
                seed: a.seed,
                ..Default::default()
            };
            let (per_machine, all) = evaluate_all(&feature_bundles, &settings, Aggregation::Arithmetic)?;
            records.push(ConfigRecord {
                family: "autoencoder".into(),
                config_id: config_id.clone(),
                proxy_metric: ProxyMetric::Mae,
                direction: Direction::Low,
                proxy_value: maes.iter().sum::<f64>() / maes.len() as f64,
                asd: AsdValues {
                    in_lp: all.in_domain_lp_auc.unwrap_or(f64::NAN),
                    out_lp: all.out_domain_lp_auc.unwrap_or(f64::NAN),
                    md: all.md_auc.unwrap_or(f64::NAN),
                },
            });
            eval_rows.extend(per_machine);
            eval_rows.push(all);
        }
    }
    out.add("train_summary.csv", summary_rows.into_inner().expect("in-memory writer"));
    if a.evaluate {
        out.add("records.csv", report::records_csv(&records));
        out.add("eval.csv", report::eval_csv(&eval_rows));
    }
    out.commit()?;
    summary(
        "train-ae",
        &[
            ("configs", configs.len().to_string()),
            ("machines", bundles.len().to_string()),
            ("evaluated", a.evaluate.to_string()),
            ("out", a.out.out.display().to_string()),
        ],
    );
    Ok(0)
}

fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let mut out = Outputs::new(&a.out.out);
    if let Some(regime) = a.regime {
        let family = toyae::synth_config_family(regime.into(), a.n_configs, a.seed)?;
        out.add("records.csv", report::records_csv(&family.records));
        out.add("eval.csv", report::eval_csv(&family.results));
        out.commit()?;
        summary(
            "synth",
            &[
                ("regime", family.regime.to_string()),
                ("configs", family.records.len().to_string()),
                ("out", a.out.out.display().to_string()),
            ],
        );
        return Ok(0);
    }
    let bundles = a
        .machines
        .iter()
        .enumerate()
        .map(|(i, machine)| {
            let spec = SynthSpec {
                machine: machine.clone(),
                noise_scale: a.noise_scale,
                anomaly: BandPerturbation {
                    band_start: a.band_start,
                    band_width: a.band_width,
                    magnitude_db: a.magnitude_sigma * a.noise_scale,
                },
                sections: a.sections.clone(),
                section_shift: a.section_shift,
                train_per_section: a.train,
                test_normal_per_section: a.test_normal,
                test_anomaly_per_section: a.test_anomaly,
                seed: a.seed.wrapping_add(i as u64),
                ..Default::default()
            };
            toyae::synth_bundle(&spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let (manifest, files) = encode_bundles(&bundles)?;
    for (rel, bytes) in files {
        out.add(rel, bytes);
    }
    out.add("manifest.json", manifest.to_json());
    out.commit()?;
    summary(
        "synth",
        &[
            ("machines", bundles.len().to_string()),
            ("files", manifest.entries.len().to_string()),
            ("out", a.out.out.display().to_string()),
        ],
    );
    Ok(0)
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => FeatureFormat::Csv { header: false },
        _ => FeatureFormat::Binary,
    };
    read_feature_file(path, format)
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.rows() != 1 && m.cols() != 1 {
        return Err(Error::Data(format!(
            "{}: expected a single row or column, got {}x{}",
            path.display(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(m.as_slice().to_vec())
}

fn read_class_ids(path: &Path) -> Result<Vec<usize>> {
    read_vector(path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Data(format!("{}: entry {} ({v}) is not a class id", path.display(), i + 1)))
            }
        })
        .collect()
}

fn cmd_metric(a: &MetricArgs) -> Result<i32> {
    let dir = a.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))?;
    // (metric, condition, value)
    let mut rows: Vec<(String, String, f64)> = Vec::new();
    let mut push = |metric: &str, condition: String, value: f64| rows.push((metric.to_string(), condition, value));
    let name = match &a.kind {
        MetricKind::Auc { normal, anomaly } => {
            push("auc", String::new(), metrics::auc(&read_vector(normal)?, &read_vector(anomaly)?)?);
            "auc"
        }
        MetricKind::Mae { input, reconstruction } => {
            push("mae", String::new(), metrics::recon_mae(&read_matrix(input)?, &read_matrix(reconstruction)?)?);
            "mae"
        }
        MetricKind::F1 { truth, pred, classes } => {
            let r = metrics::macro_f1(&read_class_ids(truth)?, &read_class_ids(pred)?, *classes)?;
            push("macro_f1", String::new(), r.macro_f1);
            for (c, v) in r.per_class.iter().enumerate() {
                let note = if r.empty_classes.contains(&c) { " (empty)" } else { "" };
                push("f1", format!("class {c}{note}"), *v);
            }
            "f1"
        }
        MetricKind::SiSdr { target, estimate, mixture, snr } => {
            let t = read_matrix(target)?;
            let e = read_matrix(estimate)?;
            if (t.rows(), t.cols()) != (e.rows(), e.cols()) {
                return Err(Error::Data("target and estimate shapes differ".into()));
            }
            match mixture {
                None => {
                    let values: Vec<f64> = (0..t.rows())
                        .map(|i| metrics::si_sdr(t.row(i), e.row(i)).map_err(|err| err.context(format!("row {}", i + 1))))
                        .collect::<Result<_>>()?;
                    for (i, v) in values.iter().enumerate() {
                        push("si_sdr", format!("row {}", i + 1), *v);
                    }
                    if let Some(mean) = metrics::summarize_sdr(&values).mean_finite {
                        push("si_sdr", "mean".into(), mean);
                    }
                    "si_sdr"
                }
                Some(mix) => {
                    let m = read_matrix(mix)?;
                    if (m.rows(), m.cols()) != (t.rows(), t.cols()) {
                        return Err(Error::Data("mixture shape differs from target".into()));
                    }
                    if !snr.is_empty() && snr.len() != t.rows() {
                        return Err(Error::Data(format!("{} SNR labels for {} rows", snr.len(), t.rows())));
                    }
                    let cases: Vec<SdriCase<'_>> = (0..t.rows())
                        .map(|i| SdriCase {
                            snr_db: snr.get(i).copied().unwrap_or(f64::NAN),
                            target: t.row(i),
                            estimate: e.row(i),
                            mixture: m.row(i),
                        })
                        .collect();
                    let r = metrics::si_sdri_by_condition(&cases)?;
                    for (i, (db, v)) in r.per_condition.iter().enumerate() {
                        let label = if snr.is_empty() { format!("row {}", i + 1) } else { format!("{db} dB") };
                        push("si_sdri", label, *v);
                    }
                    if let Some(mean) = r.summary.mean_finite {
                        push("si_sdri", "mean".into(), mean);
                    }
                    "si_sdri"
                }
            }
        }
        MetricKind::Alignment { view1, view2, alpha } => {
            push("alignment", String::new(), metrics::alignment(&read_matrix(view1)?, &read_matrix(view2)?, *alpha)?);
            "alignment"
        }
        MetricKind::Uniformity { features, t, all_pairs } => {
            let pairs = if *all_pairs { PairSet::All } else { PairSet::Distinct };
            push("uniformity", String::new(), metrics::uniformity(&read_matrix(features)?, *t, pairs)?);
            "uniformity"
        }
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "condition", "value"]).expect("in-memory write");
    for (metric, condition, value) in &rows {
        w.write_record([metric.as_str(), condition.as_str(), &value.to_string()])
            .expect("in-memory write");
    }
    let mut out = Outputs::new(dir);
    out.add("metric.csv", w.into_inner().expect("in-memory writer"));
    out.commit()?;
    // the overall value: the unlabelled row or the mean, else the first row
    let headline = rows.iter().find(|r| r.1.is_empty() || r.1 == "mean").unwrap_or(&rows[0]);
    summary(
        "metric",
        &[
            ("metric", name.to_string()),
            ("value", headline.2.to_string()),
            ("rows", rows.len().to_string()),
            ("out", dir.display().to_string()),
        ],
    );
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn scenario_conflicts_with_backend() {
        let r = Cli::try_parse_from(["proxyprobe", "evaluate", "--manifest", "m", "--backend", "lp", "--scenario", "md", "--out", "o"]);
        assert!(r.is_err());
    }

    #[test]
    fn missing_out_rejected() {
        assert!(Cli::try_parse_from(["proxyprobe", "correlate", "--records", "r.csv"]).is_err());
    }
}

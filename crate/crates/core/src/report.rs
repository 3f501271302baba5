//! CSV layouts and scatter plots.
//!
//! Records CSV (one row per configuration; AUC columns in percent):
//!
//! ```text
//! family,config_id,proxy_metric,direction,proxy_value,in_lp,out_lp,md
//! ```
//!
//! Evaluation CSV (AUC as fractions, empty cell when not evaluated):
//!
//! ```text
//! config_id,machine,in_lp,out_lp,md
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correlation::{
    correlate_family, significance_stars, AsdMetric, AsdValues, ConfigRecord, CorrelationResult, Direction, PermutationOptions,
    ProxyMetric,
};
use crate::error::{Error, Result};
use crate::protocol::EvalResult;

pub const RECORDS_HEADER: [&str; 8] = ["family", "config_id", "proxy_metric", "direction", "proxy_value", "in_lp", "out_lp", "md"];
pub const EVAL_HEADER: [&str; 5] = ["config_id", "machine", "in_lp", "out_lp", "md"];
pub const FOLDS_HEADER: [&str; 4] = ["config_id", "machine", "fold", "auc"];
pub const CORRELATION_HEADER: [&str; 11] = [
    "family",
    "proxy_metric",
    "direction",
    "asd_metric",
    "n",
    "rho",
    "p_value",
    "method",
    "stars",
    "ties",
    "status",
];
pub const SCATTER_HEADER: [&str; 6] = ["family", "config_id", "asd_metric", "proxy_value", "proxy_normalized", "auc"];

fn csv_error(source: &str, e: csv::Error) -> Error {
    let location = e
        .position()
        .map(|p| format!(" at line {}", p.line()))
        .unwrap_or_default();
    Error::Format(format!("{source}{location}: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("CSV is UTF-8")
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

// ── Records ───────────────────────────────────────────────────────────

#[derive(Debug, Deserialize)]
struct RecordRow {
    family: String,
    config_id: String,
    proxy_metric: String,
    #[serde(default)]
    direction: String,
    proxy_value: f64,
    in_lp: f64,
    out_lp: f64,
    md: f64,
}

/// Parses a records CSV. An empty `direction` cell takes the metric's default.
pub fn parse_records(text: &str, source: &str) -> Result<Vec<ConfigRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    for col in RECORDS_HEADER {
        if col != "direction" && !header.iter().any(|h| h == col) {
            return Err(Error::Format(format!("{source}: missing column {col:?}")));
        }
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<RecordRow>() {
        let row = row.map_err(|e| csv_error(source, e))?;
        let line = out.len() + 2;
        let at = |e: Error| Error::Format(format!("{source} at line {line}: {e}"));
        let proxy_metric: ProxyMetric = row.proxy_metric.parse().map_err(at)?;
        let direction = if row.direction.is_empty() {
            proxy_metric.default_direction()
        } else {
            row.direction.parse().map_err(at)?
        };
        let values = [row.proxy_value, row.in_lp, row.out_lp, row.md];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("{source} at line {line}: non-finite value")));
        }
        for auc in [row.in_lp, row.out_lp, row.md] {
            if !(0.0..=100.0).contains(&auc) {
                return Err(Error::Format(format!("{source} at line {line}: AUC {auc} outside 0–100 percent")));
            }
        }
        out.push(ConfigRecord {
            family: row.family,
            config_id: row.config_id,
            proxy_metric,
            direction,
            proxy_value: row.proxy_value,
            asd: AsdValues {
                in_lp: row.in_lp / 100.0,
                out_lp: row.out_lp / 100.0,
                md: row.md / 100.0,
            },
        });
    }
    Ok(out)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ConfigRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, &path.display().to_string())
}

pub fn records_csv(records: &[ConfigRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORDS_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.family.clone(),
            r.config_id.clone(),
            r.proxy_metric.name().to_string(),
            r.direction.to_string(),
            fmt_value(r.proxy_value),
            fmt_value(r.asd.in_lp * 100.0),
            fmt_value(r.asd.out_lp * 100.0),
            fmt_value(r.asd.md * 100.0),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

// ── Evaluation results ────────────────────────────────────────────────

fn fmt_auc(v: Option<f64>) -> String {
    v.map(|a| format!("{a:.6}")).unwrap_or_default()
}

pub fn eval_csv(results: &[EvalResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVAL_HEADER).expect("in-memory write");
    for r in results {
        w.write_record([
            r.config_id.clone(),
            r.machine.clone(),
            fmt_auc(r.in_domain_lp_auc),
            fmt_auc(r.out_domain_lp_auc),
            fmt_auc(r.md_auc),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Per-fold out-domain AUCs; folds are numbered in held-out section order.
pub fn folds_csv(results: &[EvalResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FOLDS_HEADER).expect("in-memory write");
    for r in results {
        for (i, auc) in r.per_fold.iter().enumerate() {
            w.write_record([r.config_id.clone(), r.machine.clone(), i.to_string(), format!("{auc:.6}")])
                .expect("in-memory write");
        }
    }
    finish(w)
}

#[derive(Debug, Deserialize)]
struct EvalRow {
    config_id: String,
    machine: String,
    in_lp: Option<f64>,
    out_lp: Option<f64>,
    md: Option<f64>,
}

pub fn parse_eval(text: &str, source: &str) -> Result<Vec<EvalResult>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.deserialize::<EvalRow>() {
        let row = row.map_err(|e| csv_error(source, e))?;
        for auc in [row.in_lp, row.out_lp, row.md].into_iter().flatten() {
            if !(0.0..=1.0).contains(&auc) {
                return Err(Error::Format(format!(
                    "{source} at line {}: AUC {auc} outside [0, 1]",
                    out.len() + 2
                )));
            }
        }
        out.push(EvalResult {
            config_id: row.config_id,
            machine: row.machine,
            in_domain_lp_auc: row.in_lp,
            out_domain_lp_auc: row.out_lp,
            md_auc: row.md,
            per_fold: Vec::new(),
        });
    }
    Ok(out)
}

pub fn read_eval(path: impl AsRef<Path>) -> Result<Vec<EvalResult>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_eval(&text, &path.display().to_string())
}

// ── Correlation tables ────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorrelationOutcome {
    Computed(CorrelationResult),
    /// One of the two columns is constant.
    Saturated { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub family: String,
    pub proxy_metric: ProxyMetric,
    pub direction: Direction,
    pub asd_metric: AsdMetric,
    pub n: usize,
    pub outcome: CorrelationOutcome,
}

impl CorrelationRow {
    pub fn result(&self) -> Option<&CorrelationResult> {
        match &self.outcome {
            CorrelationOutcome::Computed(c) => Some(c),
            CorrelationOutcome::Saturated { .. } => None,
        }
    }

    /// Table cell text: ρ to two decimals followed by significance stars.
    pub fn cell(&self) -> String {
        match self.result() {
            Some(c) => format!("{:.2}{}", c.rho, significance_stars(c.p_two_sided)),
            None => "saturated".into(),
        }
    }
}

/// Groups records by family (sorted by family name, then config id, so row
/// order in the input never matters).
pub fn group_families(records: &[ConfigRecord]) -> BTreeMap<String, Vec<ConfigRecord>> {
    let mut families: BTreeMap<String, Vec<ConfigRecord>> = BTreeMap::new();
    for r in records {
        families.entry(r.family.clone()).or_default().push(r.clone());
    }
    for recs in families.values_mut() {
        recs.sort_by(|a, b| a.config_id.cmp(&b.config_id));
    }
    families
}

/// Correlates every family against every requested ASD metric.
pub fn correlate_records(records: &[ConfigRecord], metrics: &[AsdMetric], opts: &PermutationOptions) -> Result<Vec<CorrelationRow>> {
    if records.is_empty() {
        return Err(Error::Correlation("no records".into()));
    }
    let mut rows = Vec::new();
    for (family, recs) in group_families(records) {
        let first = &recs[0];
        if let Some(r) = recs.iter().find(|r| r.proxy_metric != first.proxy_metric || r.direction != first.direction) {
            return Err(Error::Correlation(format!(
                "family {family:?} mixes proxy metrics or directions (config {:?})",
                r.config_id
            )));
        }
        if recs.len() < 3 {
            return Err(Error::Correlation(format!("family {family:?}: need n ≥ 3, got {}", recs.len())));
        }
        for &metric in metrics {
            let outcome = match correlate_family(&recs, metric, opts) {
                Ok(c) => CorrelationOutcome::Computed(c),
                Err(Error::Correlation(msg)) if msg.starts_with("saturated") => CorrelationOutcome::Saturated { reason: msg },
                Err(e) => return Err(e.context(format!("family {family}, metric {metric}"))),
            };
            rows.push(CorrelationRow {
                family: family.clone(),
                proxy_metric: first.proxy_metric,
                direction: first.direction,
                asd_metric: metric,
                n: recs.len(),
                outcome,
            });
        }
    }
    Ok(rows)
}

pub fn correlation_csv(rows: &[CorrelationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CORRELATION_HEADER).expect("in-memory write");
    for r in rows {
        let (rho, p, method, stars, ties, status) = match &r.outcome {
            CorrelationOutcome::Computed(c) => (
                format!("{:.6}", c.rho),
                format!("{:.6e}", c.p_two_sided),
                match c.method {
                    crate::correlation::PValueMethod::Exact => "exact",
                    crate::correlation::PValueMethod::MonteCarlo => "monte_carlo",
                }
                .to_string(),
                significance_stars(c.p_two_sided).to_string(),
                c.ties_present.to_string(),
                "ok".to_string(),
            ),
            CorrelationOutcome::Saturated { .. } => Default::default(),
        };
        let status = if status.is_empty() { "saturated".to_string() } else { status };
        w.write_record([
            r.family.clone(),
            r.proxy_metric.name().to_string(),
            r.direction.to_string(),
            r.asd_metric.name().to_string(),
            r.n.to_string(),
            rho,
            p,
            method,
            stars,
            ties,
            status,
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// One row per family, one `ρ + stars` cell per ASD metric.
pub fn correlation_wide_csv(rows: &[CorrelationRow]) -> String {
    let mut metrics: Vec<AsdMetric> = Vec::new();
    let mut table: BTreeMap<&str, BTreeMap<&'static str, String>> = BTreeMap::new();
    for r in rows {
        if !metrics.contains(&r.asd_metric) {
            metrics.push(r.asd_metric);
        }
        table.entry(&r.family).or_default().insert(r.asd_metric.name(), r.cell());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["family".to_string()];
    header.extend(metrics.iter().map(|m| m.name().to_string()));
    w.write_record(&header).expect("in-memory write");
    for (family, cells) in &table {
        let mut rec = vec![family.to_string()];
        rec.extend(metrics.iter().map(|m| cells.get(m.name()).cloned().unwrap_or_default()));
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

// ── Scatter plots ─────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub config_id: String,
    pub proxy_value: f64,
    /// Min-max normalized proxy value, flipped for lower-is-better metrics
    /// so that larger is always better.
    pub proxy_normalized: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterSeries {
    pub family: String,
    pub asd_metric: AsdMetric,
    pub points: Vec<ScatterPoint>,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    /// Least-squares line `y = slope·x + intercept` in (AUC, normalized
    /// proxy) coordinates, present only when p < 0.05.
    pub trend: Option<(f64, f64)>,
}

pub fn normalize_proxy(values: &[f64], direction: Direction) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let span = max - min;
    values
        .iter()
        .map(|&v| {
            if span <= 0.0 {
                0.5
            } else {
                match direction {
                    Direction::High => (v - min) / span,
                    Direction::Low => (max - v) / span,
                }
            }
        })
        .collect()
}

fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Builds one series per family for `metric`, using `correlations` to decide
/// which families get a trend line.
pub fn scatter_series(records: &[ConfigRecord], correlations: &[CorrelationRow], metric: AsdMetric) -> Result<Vec<ScatterSeries>> {
    if records.is_empty() {
        return Err(Error::Data("no records to plot".into()));
    }
    let mut out = Vec::new();
    for (family, recs) in group_families(records) {
        let values: Vec<f64> = recs.iter().map(|r| r.proxy_value).collect();
        let norm = normalize_proxy(&values, recs[0].direction);
        let points: Vec<ScatterPoint> = recs
            .iter()
            .zip(norm)
            .map(|(r, y)| ScatterPoint {
                config_id: r.config_id.clone(),
                proxy_value: r.proxy_value,
                proxy_normalized: y,
                auc: r.asd.get(metric),
            })
            .collect();
        let corr = correlations
            .iter()
            .find(|c| c.family == family && c.asd_metric == metric)
            .and_then(|c| c.result());
        let significant = corr.is_some_and(|c| c.p_two_sided < 0.05);
        let trend = if significant {
            let xs: Vec<f64> = points.iter().map(|p| p.auc).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.proxy_normalized).collect();
            least_squares(&xs, &ys)
        } else {
            None
        };
        out.push(ScatterSeries {
            family,
            asd_metric: metric,
            points,
            rho: corr.map(|c| c.rho),
            p_value: corr.map(|c| c.p_two_sided),
            trend,
        });
    }
    Ok(out)
}

pub fn scatter_csv(series: &[ScatterSeries]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCATTER_HEADER).expect("in-memory write");
    for s in series {
        for p in &s.points {
            w.write_record([
                s.family.clone(),
                p.config_id.clone(),
                s.asd_metric.name().to_string(),
                fmt_value(p.proxy_value),
                format!("{:.6}", p.proxy_normalized),
                format!("{:.6}", p.auc),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Renders a scatter of ASD AUC (x) against normalized proxy value (y) as
/// SVG 1.1, one colour per family, dashed trend lines where significant.
pub fn scatter_svg(series: &[ScatterSeries], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 180.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 60.0;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;

    let aucs = series.iter().flat_map(|s| s.points.iter().map(|p| p.auc));
    let (mut x_min, mut x_max) = aucs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !x_min.is_finite() {
        (x_min, x_max) = (0.0, 1.0);
    }
    let pad = ((x_max - x_min) * 0.05).max(0.005);
    x_min -= pad;
    x_max += pad;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| TOP + (1.0 - (y + 0.05) / 1.1) * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * f64::from(i) / 4.0;
        let fy = f64::from(i) / 4.0;
        let (px, py) = (sx(fx), sy(fy));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="#888" stroke-width="1"/>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.3}</text>"#,
            TOP + plot_h + 18.0,
            fx
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{LEFT}" y2="{py:.1}" stroke="#888" stroke-width="1"/>"##,
            LEFT - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{fy:.2}</text>"#,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let metric = series.first().map_or("AUC", |s| s.asd_metric.name());
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">ASD AUC ({metric})</text>"#,
        LEFT + plot_w / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">Normalized proxy performance</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<g class="series" id="series-{i}">"#);
        if let Some((slope, intercept)) = ser.trend {
            let lo = ser.points.iter().map(|p| p.auc).fold(f64::INFINITY, f64::min);
            let hi = ser.points.iter().map(|p| p.auc).fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(
                s,
                r#"<line class="trend" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
                sx(lo),
                sy(slope * lo + intercept),
                sx(hi),
                sy(slope * hi + intercept)
            );
        }
        for p in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="4" fill="{color}"><title>{}</title></circle>"#,
                sx(p.auc),
                sy(p.proxy_normalized),
                xml_escape(&p.config_id)
            );
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let label = match (ser.rho, ser.p_value) {
            (Some(r), Some(p)) => format!("{} (ρ={r:.2}{})", ser.family, significance_stars(p)),
            _ => ser.family.clone(),
        };
        let _ = writeln!(s, r#"<circle class="legend" cx="{lx:.1}" cy="{ly:.1}" r="4" fill="{color}"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 10.0,
            ly + 4.0,
            xml_escape(&label)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "family,config_id,proxy_metric,direction,proxy_value,in_lp,out_lp,md\n\
        sep,a,si_sdri,high,2.0,60,55,50\n\
        sep,b,si_sdri,,3.0,70,65,60\n\
        sep,c,si_sdri,high,4.0,80,75,70\n";

    #[test]
    fn records_round_trip() {
        let recs = parse_records(SAMPLE, "sample").unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[1].direction, Direction::High);
        assert!((recs[2].asd.md - 0.70).abs() < 1e-15);
        let again = parse_records(&records_csv(&recs), "again").unwrap();
        for (a, b) in recs.iter().zip(&again) {
            assert_eq!(a.proxy_value, b.proxy_value);
            assert!((a.asd.md - b.asd.md).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_csv_names_line() {
        let bad = "family,config_id,proxy_metric,direction,proxy_value,in_lp,out_lp,md\nsep,a,si_sdri,high,2.0,60\n";
        let msg = parse_records(bad, "bad.csv").unwrap_err().to_string();
        assert!(msg.contains("bad.csv") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn percent_range_enforced() {
        let bad = SAMPLE.replace("80,75,70", "0.8,0.75,170");
        assert!(parse_records(&bad, "x").is_err());
    }

    #[test]
    fn normalization_flips_lower_is_better() {
        assert_eq!(normalize_proxy(&[1.0, 2.0, 3.0], Direction::High), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_proxy(&[1.0, 2.0, 3.0], Direction::Low), vec![1.0, 0.5, 0.0]);
        assert_eq!(normalize_proxy(&[2.0, 2.0], Direction::High), vec![0.5, 0.5]);
    }

    #[test]
    fn eval_round_trip_keeps_missing_cells() {
        let r = EvalResult {
            config_id: "c".into(),
            machine: "fan".into(),
            in_domain_lp_auc: Some(0.75),
            out_domain_lp_auc: None,
            md_auc: Some(0.5),
            per_fold: vec![],
        };
        let back = parse_eval(&eval_csv(std::slice::from_ref(&r)), "e").unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn constant_column_is_reported_saturated() {
        let text = SAMPLE.replace("60,55,50", "60,55,70").replace("70,65,60", "70,65,70");
        let recs = parse_records(&text, "x").unwrap();
        let rows = correlate_records(&recs, &[AsdMetric::Md], &PermutationOptions::default()).unwrap();
        assert!(matches!(rows[0].outcome, CorrelationOutcome::Saturated { .. }));
        assert!(correlation_csv(&rows).contains("saturated"));
    }

    #[test]
    fn escaping() {
        assert_eq!(xml_escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }
}

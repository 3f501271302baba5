//! Spearman rank correlation between a proxy metric and an ASD metric across
//! a family of configurations, with exact permutation p-values.
//!
//! Ranks are midranks, and ρ is the Pearson correlation of the rank vectors,
//! so tied proxy values are handled without the `1 − 6Σd²/…` shortcut.
//! The exact test enumerates all `n!` arrangements of the y-ranks and counts
//! those with `|ρ| ≥ |ρ_obs| − 1e-12`. Above `exact_limit` a seeded Monte
//! Carlo estimate is used instead.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::doubled_midranks;

pub const RHO_TOLERANCE: f64 = 1e-12;

// ── Records ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[serde(alias = "higher_is_better")]
    High,
    #[serde(alias = "lower_is_better")]
    Low,
}

impl Direction {
    /// `+1` when larger proxy values are better, `−1` otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Direction::High => 1.0,
            Direction::Low => -1.0,
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" | "higher_is_better" | "up" => Ok(Direction::High),
            "low" | "lower_is_better" | "down" => Ok(Direction::Low),
            other => Err(Error::Format(format!("unknown direction {other:?}"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::High => "high",
            Direction::Low => "low",
        })
    }
}

/// Proxy metric of a configuration family. Bounded metrics (`f1`, `map`)
/// are recorded in percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyMetric {
    Mae,
    F1,
    SiSdri,
    Alignment,
    Uniformity,
    Map,
    Custom,
}

impl ProxyMetric {
    pub const ALL: [ProxyMetric; 7] = [
        ProxyMetric::Mae,
        ProxyMetric::F1,
        ProxyMetric::SiSdri,
        ProxyMetric::Alignment,
        ProxyMetric::Uniformity,
        ProxyMetric::Map,
        ProxyMetric::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProxyMetric::Mae => "mae",
            ProxyMetric::F1 => "f1",
            ProxyMetric::SiSdri => "si_sdri",
            ProxyMetric::Alignment => "alignment",
            ProxyMetric::Uniformity => "uniformity",
            ProxyMetric::Map => "map",
            ProxyMetric::Custom => "custom",
        }
    }

    pub fn default_direction(self) -> Direction {
        match self {
            ProxyMetric::Mae | ProxyMetric::Alignment | ProxyMetric::Uniformity => Direction::Low,
            _ => Direction::High,
        }
    }

    /// Upper bound of a bounded higher-is-better metric, in recorded units.
    pub fn upper_bound(self) -> Option<f64> {
        match self {
            ProxyMetric::F1 | ProxyMetric::Map => Some(100.0),
            _ => None,
        }
    }
}

impl FromStr for ProxyMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        ProxyMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown proxy metric {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsdMetric {
    InLp,
    OutLp,
    Md,
}

impl AsdMetric {
    pub const ALL: [AsdMetric; 3] = [AsdMetric::InLp, AsdMetric::OutLp, AsdMetric::Md];

    pub fn name(self) -> &'static str {
        match self {
            AsdMetric::InLp => "in_lp",
            AsdMetric::OutLp => "out_lp",
            AsdMetric::Md => "md",
        }
    }
}

impl FromStr for AsdMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        AsdMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown ASD metric {s:?}")))
    }
}

impl fmt::Display for AsdMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// ASD metric values of one configuration, as AUC fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsdValues {
    pub in_lp: f64,
    pub out_lp: f64,
    pub md: f64,
}

impl AsdValues {
    pub fn get(&self, metric: AsdMetric) -> f64 {
        match metric {
            AsdMetric::InLp => self.in_lp,
            AsdMetric::OutLp => self.out_lp,
            AsdMetric::Md => self.md,
        }
    }
}

/// One proxy-task configuration with its proxy and ASD values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub family: String,
    pub config_id: String,
    pub proxy_metric: ProxyMetric,
    pub direction: Direction,
    pub proxy_value: f64,
    pub asd: AsdValues,
}

// ── Spearman ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_two_sided: f64,
    pub n: usize,
    pub method: PValueMethod,
    pub ties_present: bool,
    /// Standard error of a Monte Carlo p-value.
    pub p_std_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationOptions {
    pub exact_limit: usize,
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self {
            exact_limit: 10,
            mc_draws: 1_000_000,
            seed: 0,
        }
    }
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Correlation(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Correlation(format!("need n ≥ 3, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Correlation("non-finite value".into()));
    }
    Ok(())
}

/// Doubled midrank vectors centred at zero (entries `2r − (n+1)`), with their
/// sums of squares.
struct CenteredRanks {
    x: Vec<i64>,
    y: Vec<i64>,
    sxx: i64,
    syy: i64,
}

impl CenteredRanks {
    fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len() as i64;
        let center = |v: &[f64]| -> Vec<i64> { doubled_midranks(v).into_iter().map(|r| r as i64 - (n + 1)).collect() };
        let x = center(x);
        let y = center(y);
        let sxx: i64 = x.iter().map(|v| v * v).sum();
        let syy: i64 = y.iter().map(|v| v * v).sum();
        if sxx == 0 || syy == 0 {
            return Err(Error::Correlation("saturated: correlation undefined for a constant vector".into()));
        }
        Ok(Self { x, y, sxx, syy })
    }

    fn denom(&self) -> f64 {
        ((self.sxx as f64) * (self.syy as f64)).sqrt()
    }
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let r = CenteredRanks::new(x, y)?;
    let num: i64 = r.x.iter().zip(&r.y).map(|(a, b)| a * b).sum();
    Ok((num as f64 / r.denom()).clamp(-1.0, 1.0))
}

fn has_ties(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

/// Two-sided permutation p-value for `rho_obs`.
pub fn exact_p(x: &[f64], y: &[f64], rho_obs: f64, opts: &PermutationOptions) -> Result<CorrelationResult> {
    check_inputs(x, y)?;
    let ranks = CenteredRanks::new(x, y)?;
    let n = x.len();
    let threshold = rho_obs.abs() - RHO_TOLERANCE;
    let denom = ranks.denom();
    let extreme = |num: i64| (num as f64 / denom).abs() >= threshold;

    let (p, method, se) = if n <= opts.exact_limit {
        let (hits, total) = enumerate_permutations(&ranks.x, &ranks.y, extreme);
        (hits as f64 / total as f64, PValueMethod::Exact, None)
    } else {
        if opts.mc_draws == 0 {
            return Err(Error::Correlation("Monte Carlo needs at least one draw".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut perm = ranks.y.clone();
        let mut hits = 0u64;
        for _ in 0..opts.mc_draws {
            perm.shuffle(&mut rng);
            let num: i64 = ranks.x.iter().zip(&perm).map(|(a, b)| a * b).sum();
            if extreme(num) {
                hits += 1;
            }
        }
        let draws = opts.mc_draws as f64;
        let p = (hits as f64 + 1.0) / (draws + 1.0);
        let se = (p * (1.0 - p) / draws).sqrt();
        (p, PValueMethod::MonteCarlo, Some(se))
    };
    Ok(CorrelationResult {
        rho: rho_obs,
        p_two_sided: p,
        n,
        method,
        ties_present: has_ties(x) || has_ties(y),
        p_std_error: se,
    })
}

/// Heap's algorithm over `y`, tracking `Σ x_i y_π(i)` with one update per swap.
fn enumerate_permutations(x: &[i64], y: &[i64], mut extreme: impl FnMut(i64) -> bool) -> (u64, u64) {
    let n = y.len();
    let mut perm = y.to_vec();
    let mut num: i64 = x.iter().zip(&perm).map(|(a, b)| a * b).sum();
    let mut hits = u64::from(extreme(num));
    let mut total = 1u64;
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            num += (x[i] - x[j]) * (perm[j] - perm[i]);
            perm.swap(i, j);
            total += 1;
            if extreme(num) {
                hits += 1;
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    (hits, total)
}

/// Spearman ρ and its permutation p-value in one call.
pub fn spearman_test(x: &[f64], y: &[f64], opts: &PermutationOptions) -> Result<CorrelationResult> {
    let rho = spearman_rho(x, y)?;
    exact_p(x, y, rho, opts)
}

/// Correlates the proxy values of a family with one ASD metric. The sign is
/// reported raw; direction is applied by the verification stage.
pub fn correlate_family(records: &[ConfigRecord], metric: AsdMetric, opts: &PermutationOptions) -> Result<CorrelationResult> {
    if records.len() < 3 {
        return Err(Error::Correlation(format!("need n ≥ 3 configurations, got {}", records.len())));
    }
    let x: Vec<f64> = records.iter().map(|r| r.proxy_value).collect();
    let y: Vec<f64> = records.iter().map(|r| r.asd.get(metric)).collect();
    spearman_test(&x, &y, opts)
}

/// Significance marker: `*` p<0.05, `**` p<0.01, `***` p<0.001.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

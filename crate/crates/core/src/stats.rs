//! Evaluation statistics: Mann-Whitney U, coefficient of variation, win
//! rate, slowdown aggregates, head-to-head histograms and size slices.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{lower_median, write_json};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("mean is zero")]
    ZeroMean,
    #[error("program sets differ")]
    DomainMismatch,
    #[error("nonpositive baseline for {0}")]
    NonpositiveBaseline(String),
    #[error("nonpositive cost for {0}")]
    NonpositiveValue(String),
    #[error("program {0} has fewer than two techniques")]
    TooFewTechniques(String),
}

/// Both samples at most this size use the exact null distribution.
pub const EXACT_CUTOFF: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `xs` tends to be larger than `ys`.
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactEnumeration,
    NormalApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    /// U of `xs`: the number of (x, y) pairs with x > y, ties counting 1/2.
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub alternative: Alternative,
}

/// Midranks (1-based) of `values`, plus the tie group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Null distribution of the doubled rank sum of `m` draws from `doubled`.
/// `counts[s]` is the number of size-`m` subsets with doubled sum `s`.
fn rank_sum_distribution(doubled: &[u64], m: usize) -> Vec<u128> {
    let max_sum: u64 = doubled.iter().sum();
    let width = max_sum as usize + 1;
    let mut dp = vec![vec![0u128; width]; m + 1];
    dp[0][0] = 1;
    for &r in doubled {
        let r = r as usize;
        for k in (1..=m).rev() {
            for s in (r..width).rev() {
                let add = dp[k - 1][s - r];
                if add != 0 {
                    dp[k][s] += add;
                }
            }
        }
    }
    dp.swap_remove(m)
}

/// Exact null distribution when both samples have at most
/// [`EXACT_CUTOFF`] values, normal approximation otherwise.
pub fn mann_whitney_u(
    xs: &[f64],
    ys: &[f64],
    alternative: Alternative,
) -> Result<StatTestResult, StatsError> {
    let method = if xs.len() <= EXACT_CUTOFF && ys.len() <= EXACT_CUTOFF {
        Method::ExactEnumeration
    } else {
        Method::NormalApproximation
    };
    mann_whitney_u_with(xs, ys, alternative, method)
}

pub fn mann_whitney_u_with(
    xs: &[f64],
    ys: &[f64],
    alternative: Alternative,
    method: Method,
) -> Result<StatTestResult, StatsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (m, n) = (xs.len(), ys.len());
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..m].iter().sum();
    let u = r1 - (m * (m + 1)) as f64 / 2.0;
    let mn = (m * n) as f64;

    if method == Method::ExactEnumeration {
        // Midranks are multiples of 1/2, so doubled ranks are integers.
        let doubled: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
        let observed: u64 = doubled[..m].iter().sum();
        let dist = rank_sum_distribution(&doubled, m);
        let total: u128 = dist.iter().sum();
        let upper: u128 = dist[observed as usize..].iter().sum();
        let lower: u128 = dist[..=observed as usize].iter().sum();
        let p = match alternative {
            Alternative::Greater => upper as f64 / total as f64,
            Alternative::TwoSided => (2.0 * upper.min(lower) as f64 / total as f64).min(1.0),
        };
        return Ok(StatTestResult {
            u_statistic: u,
            p_value: p,
            method: Method::ExactEnumeration,
            alternative,
        });
    }

    let big_n = (m + n) as f64;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / (big_n * (big_n - 1.0));
    let sigma = (mn / 12.0 * ((big_n + 1.0) - tie_term)).sqrt();
    let mu = mn / 2.0;
    let p = if sigma == 0.0 {
        1.0
    } else {
        match alternative {
            Alternative::Greater => {
                let z = (u - mu - 0.5) / sigma;
                0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
            }
            Alternative::TwoSided => {
                let z = ((u - mu).abs() - 0.5).max(0.0) / sigma;
                libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
            }
        }
    };
    Ok(StatTestResult {
        u_statistic: u,
        p_value: p.clamp(0.0, 1.0),
        method: Method::NormalApproximation,
        alternative,
    })
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(StatsError::ZeroMean);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// program id -> technique -> mean cost
pub type PerProgram = BTreeMap<String, BTreeMap<String, f64>>;

/// Fraction of programs on which each technique is strictly the most
/// expensive. Tied maxima credit nobody.
pub fn win_rate(per_program: &PerProgram) -> Result<BTreeMap<String, f64>, StatsError> {
    let mut wins: BTreeMap<String, usize> = BTreeMap::new();
    for (pid, costs) in per_program {
        if costs.len() < 2 {
            return Err(StatsError::TooFewTechniques(pid.clone()));
        }
        for t in costs.keys() {
            wins.entry(t.clone()).or_default();
        }
        let max = costs.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let top: Vec<&String> = costs.iter().filter(|(_, &c)| c == max).map(|(t, _)| t).collect();
        if let [winner] = top.as_slice() {
            *wins.get_mut(*winner).unwrap() += 1;
        }
    }
    let programs = per_program.len().max(1) as f64;
    Ok(wins
        .into_iter()
        .map(|(t, w)| (t, w as f64 / programs))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slowdown {
    pub per_program: BTreeMap<String, f64>,
    /// Mean of per-program ratios (not the ratio of means).
    pub mean: f64,
    pub median: f64,
}

pub fn slowdown_over_baseline(
    costs: &BTreeMap<String, f64>,
    baseline: &BTreeMap<String, f64>,
) -> Result<Slowdown, StatsError> {
    if !costs.keys().eq(baseline.keys()) {
        return Err(StatsError::DomainMismatch);
    }
    if costs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut per_program = BTreeMap::new();
    for (pid, &c) in costs {
        let b = baseline[pid];
        if b <= 0.0 {
            return Err(StatsError::NonpositiveBaseline(pid.clone()));
        }
        per_program.insert(pid.clone(), c / b);
    }
    let ratios: Vec<f64> = per_program.values().copied().collect();
    Ok(Slowdown {
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        median: lower_median(&ratios).expect("non-empty"),
        per_program,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    /// Lower bound of the ratio band in percent, e.g. 200 for [200%, 210%).
    pub lower_pct: u64,
    pub count_a: usize,
    pub count_b: usize,
    /// Programs with exactly equal costs; only the 100% band has any.
    pub ties: usize,
}

/// Buckets each program by max/min cost ratio in `bucket_width_pct` bands
/// and counts which side was more expensive.
pub fn head_to_head_histogram(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
    bucket_width_pct: u64,
) -> Result<Vec<HistogramBucket>, StatsError> {
    if !a.keys().eq(b.keys()) {
        return Err(StatsError::DomainMismatch);
    }
    let width = bucket_width_pct.max(1);
    let mut buckets: BTreeMap<u64, HistogramBucket> = BTreeMap::new();
    for (pid, &ca) in a {
        let cb = b[pid];
        if ca <= 0.0 || cb <= 0.0 {
            return Err(StatsError::NonpositiveValue(pid.clone()));
        }
        let pct = ca.max(cb) / ca.min(cb) * 100.0;
        // Absorb rounding so exact multiples land in their own band.
        let lower = ((pct + 1e-9) / width as f64).floor() as u64 * width;
        let bucket = buckets.entry(lower).or_insert(HistogramBucket {
            lower_pct: lower,
            count_a: 0,
            count_b: 0,
            ties: 0,
        });
        match ca.total_cmp(&cb) {
            std::cmp::Ordering::Greater => bucket.count_a += 1,
            std::cmp::Ordering::Less => bucket.count_b += 1,
            std::cmp::Ordering::Equal => bucket.ties += 1,
        }
    }
    Ok(buckets.into_values().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueSlowdown {
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub per_program: PerProgram,
    pub win_rate: BTreeMap<String, f64>,
    pub slowdown: BTreeMap<String, TechniqueSlowdown>,
    /// Head-to-head between the two named techniques, if requested.
    pub histogram: Option<(String, String, Vec<HistogramBucket>)>,
}

fn column(per_program: &PerProgram, technique: &str) -> BTreeMap<String, f64> {
    per_program
        .iter()
        .filter_map(|(p, c)| c.get(technique).map(|&v| (p.clone(), v)))
        .collect()
}

impl ComparisonReport {
    /// Slowdowns are per technique over `baseline`, restricted to programs
    /// where the technique has a cost.
    pub fn build(
        per_program: &PerProgram,
        baseline: &BTreeMap<String, f64>,
        head_to_head: Option<(&str, &str)>,
        bucket_width_pct: u64,
    ) -> Result<Self, StatsError> {
        let techniques: BTreeSet<&String> = per_program.values().flat_map(|c| c.keys()).collect();
        let mut slowdown = BTreeMap::new();
        for t in techniques {
            let costs = column(per_program, t);
            let base: BTreeMap<String, f64> = costs
                .keys()
                .map(|p| baseline.get(p).map(|&b| (p.clone(), b)).ok_or(StatsError::DomainMismatch))
                .collect::<Result<_, _>>()?;
            let s = slowdown_over_baseline(&costs, &base)?;
            slowdown.insert(
                t.clone(),
                TechniqueSlowdown {
                    mean: s.mean,
                    median: s.median,
                },
            );
        }
        let histogram = match head_to_head {
            Some((a, b)) => {
                let ca = column(per_program, a);
                let cb = column(per_program, b);
                Some((a.to_string(), b.to_string(), head_to_head_histogram(&ca, &cb, bucket_width_pct)?))
            }
            None => None,
        };
        Ok(ComparisonReport {
            per_program: per_program.clone(),
            win_rate: win_rate(per_program)?,
            slowdown,
            histogram,
        })
    }

    pub fn technique_means(&self, technique: &str) -> (f64, f64) {
        let vals: Vec<f64> = column(&self.per_program, technique).into_values().collect();
        if vals.is_empty() {
            return (0.0, 0.0);
        }
        (
            vals.iter().sum::<f64>() / vals.len() as f64,
            lower_median(&vals).unwrap_or(0.0),
        )
    }
}

pub const DEFAULT_SIZE_THRESHOLDS: [u64; 4] = [1 << 10, 10 << 10, 100 << 10, 1 << 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSlice {
    pub threshold_bytes: u64,
    pub programs: Vec<String>,
    /// `None` when no program qualifies.
    pub report: Option<ComparisonReport>,
}

/// Recomputes the comparison over programs whose largest benchmark input
/// is at most each threshold.
pub fn size_slice(
    per_program: &PerProgram,
    baseline: &BTreeMap<String, f64>,
    max_input_size: &BTreeMap<String, u64>,
    thresholds: &[u64],
    head_to_head: Option<(&str, &str)>,
    bucket_width_pct: u64,
) -> Result<Vec<SizeSlice>, StatsError> {
    thresholds
        .iter()
        .map(|&t| {
            let kept: PerProgram = per_program
                .iter()
                .filter(|(p, _)| max_input_size.get(*p).is_some_and(|&s| s <= t))
                .map(|(p, c)| (p.clone(), c.clone()))
                .collect();
            let programs = kept.keys().cloned().collect();
            let report = if kept.is_empty() {
                None
            } else {
                Some(ComparisonReport::build(&kept, baseline, head_to_head, bucket_width_pct)?)
            };
            Ok(SizeSlice {
                threshold_bytes: t,
                programs,
                report,
            })
        })
        .collect()
}

/// Plain-text table: technique, average and median cost, win rate,
/// average and median slowdown.
pub fn summary_table(report: &ComparisonReport) -> String {
    let mut out = format!(
        "{:<24} {:>16} {:>16} {:>9} {:>12} {:>12}\n",
        "technique", "avg_cost", "median_cost", "win_rate", "avg_slowdown", "med_slowdown"
    );
    for (t, s) in &report.slowdown {
        let (avg, med) = report.technique_means(t);
        let win = report.win_rate.get(t).copied().unwrap_or(0.0);
        out.push_str(&format!(
            "{:<24} {:>16.1} {:>16.1} {:>8.1}% {:>11.2}x {:>11.2}x\n",
            t,
            avg,
            med,
            win * 100.0,
            s.mean,
            s.median
        ));
    }
    out
}

/// Writes `report.json`, `report.csv` and `summary.txt` into `dir`.
pub fn write_report(
    dir: &Path,
    report: &ComparisonReport,
    baseline: &BTreeMap<String, f64>,
    slices: &[SizeSlice],
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(
        &dir.join("report.json"),
        &serde_json::json!({ "report": report, "baseline": baseline, "size_slices": slices }),
    )?;
    let mut csv = csv::Writer::from_path(dir.join("report.csv"))?;
    csv.write_record(["program_id", "technique", "mean_cost", "ratio_vs_baseline"])?;
    for (pid, costs) in &report.per_program {
        for (t, c) in costs {
            let ratio = baseline
                .get(pid)
                .filter(|&&b| b > 0.0)
                .map(|b| format!("{}", c / b))
                .unwrap_or_default();
            csv.write_record([pid.as_str(), t.as_str(), &c.to_string(), &ratio])?;
        }
    }
    csv.flush()?;
    fs::write(dir.join("summary.txt"), summary_table(report))
}

//! Two-sided Wilcoxon signed-rank test over paired metric values, and the
//! published link-prediction tables shipped as fixtures.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;

/// Largest number of non-zero differences tested with the exact null distribution.
pub const EXACT_MAX_N: usize = 20;
/// Magnitudes closer than this are treated as tied, and differences smaller
/// than this as zero, so that decimal inputs like `0.499 - 0.467` and
/// `0.513 - 0.481` compare equal.
pub const TIE_TOLERANCE: f64 = 1e-9;

pub const METRICS: [&str; 4] = ["MRR", "Hits@1", "Hits@3", "Hits@10"];

/// Embedded copy of `fixtures/link_prediction_tables.csv`.
pub const LINK_PREDICTION_TABLES: &str = include_str!("../fixtures/link_prediction_tables.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub label: String,
    pub before: f64,
    pub after: f64,
}

impl PairedSample {
    pub fn new(label: impl Into<String>, before: f64, after: f64) -> Self {
        PairedSample {
            label: label.into(),
            before,
            after,
        }
    }

    pub fn difference(&self) -> f64 {
        self.after - self.before
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ZeroPolicy {
    /// Drop zero differences before ranking.
    #[default]
    Discard,
    /// Rank zero differences, then drop them from both rank sums.
    Pratt,
}

impl std::str::FromStr for ZeroPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "discard" => Ok(ZeroPolicy::Discard),
            "pratt" => Ok(ZeroPolicy::Pratt),
            other => Err(format!("unknown zero policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactEnumeration,
    NormalApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Non-zero differences entering the rank sums.
    pub n_used: usize,
    pub n_zero: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(w_plus, w_minus)`.
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub zero_policy: ZeroPolicy,
}

/// Average ranks (1-based) of `values`, grouping values within [`TIE_TOLERANCE`].
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] - values[order[start]] <= TIE_TOLERANCE {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Number of sign assignments whose positive rank sum is at most `bound`,
/// for integer (doubled) ranks.
fn count_at_most(doubled: &[usize], bound: usize) -> u64 {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts[..=bound.min(total)].iter().sum()
}

/// Exact null distribution for up to [`EXACT_MAX_N`] non-zero differences,
/// normal approximation (tie and continuity corrected) beyond.
pub fn wilcoxon_signed_rank(samples: &[PairedSample], zero_policy: ZeroPolicy) -> Result<TestResult> {
    wilcoxon_signed_rank_with(samples, zero_policy, None)
}

/// As [`wilcoxon_signed_rank`], optionally forcing the p-value method.
pub fn wilcoxon_signed_rank_with(samples: &[PairedSample], zero_policy: ZeroPolicy, method: Option<Method>) -> Result<TestResult> {
    for s in samples {
        if !s.before.is_finite() || !s.after.is_finite() {
            return Err(Error::InvalidConfig(format!("non-finite sample {:?}", s.label)));
        }
    }
    let diffs: Vec<f64> = samples.iter().map(PairedSample::difference).collect();
    let is_zero = |d: f64| d.abs() <= TIE_TOLERANCE;
    let n_zero = diffs.iter().filter(|&&d| is_zero(d)).count();
    if n_zero == diffs.len() {
        return Err(Error::DegenerateSample);
    }

    let ranked: Vec<f64> = match zero_policy {
        ZeroPolicy::Discard => diffs.iter().copied().filter(|&d| !is_zero(d)).collect(),
        ZeroPolicy::Pratt => diffs.clone(),
    };
    let ranks = average_ranks(&ranked.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let used: Vec<(f64, f64)> = ranked.iter().zip(&ranks).filter(|(d, _)| !is_zero(**d)).map(|(&d, &r)| (d, r)).collect();

    // `+ 0.0` turns the empty sum (-0.0) into 0.0
    let w_plus = used.iter().filter(|(d, _)| *d > 0.0).map(|(_, r)| r).sum::<f64>() + 0.0;
    let w_minus = used.iter().filter(|(d, _)| *d < 0.0).map(|(_, r)| r).sum::<f64>() + 0.0;
    let statistic = w_plus.min(w_minus);
    let n_used = used.len();

    let method = method.unwrap_or(if n_used <= EXACT_MAX_N { Method::ExactEnumeration } else { Method::NormalApproximation });
    let p_value = if method == Method::ExactEnumeration {
        // average ranks are multiples of 1/2
        let doubled: Vec<usize> = used.iter().map(|(_, r)| (2.0 * r).round() as usize).collect();
        let bound = (2.0 * statistic).round() as usize;
        let count = count_at_most(&doubled, bound);
        let p = 2.0 * count as f64 / 2f64.powi(n_used as i32);
        p.min(1.0)
    } else {
        let mean: f64 = used.iter().map(|(_, r)| r).sum::<f64>() / 2.0;
        let sd = (used.iter().map(|(_, r)| r * r).sum::<f64>() / 4.0).sqrt();
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / sd;
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.sf(z)).min(1.0)
    };

    Ok(TestResult {
        n_used,
        n_zero,
        w_plus,
        w_minus,
        statistic,
        p_value,
        method,
        zero_policy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub label: String,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
    pub abs_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub n: usize,
    pub mean_abs_delta: f64,
    /// Population standard deviation of the absolute deltas.
    pub sd_abs_delta: f64,
    /// Mean absolute delta per metric name (label suffix after the last `/`).
    pub per_metric_mean_abs_delta: BTreeMap<String, f64>,
    /// Population standard deviation of the per-metric means.
    pub sd_of_metric_means: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn delta_rows(samples: &[PairedSample]) -> Vec<DeltaRow> {
    samples
        .iter()
        .map(|s| DeltaRow {
            label: s.label.clone(),
            before: s.before,
            after: s.after,
            delta: s.difference(),
            abs_delta: s.difference().abs(),
        })
        .collect()
}

pub fn delta_summary(samples: &[PairedSample]) -> Result<DeltaSummary> {
    if samples.is_empty() {
        return Err(Error::DegenerateSample);
    }
    let abs: Vec<f64> = samples.iter().map(|s| s.difference().abs()).collect();
    let (mean_abs_delta, sd_abs_delta) = mean_sd(&abs);
    let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (s, a) in samples.iter().zip(&abs) {
        let metric = s.label.rsplit('/').next().unwrap_or(&s.label);
        by_metric.entry(metric.to_owned()).or_default().push(*a);
    }
    let per_metric_mean_abs_delta: BTreeMap<String, f64> = by_metric.into_iter().map(|(k, v)| (k, mean_sd(&v).0)).collect();
    let means: Vec<f64> = per_metric_mean_abs_delta.values().copied().collect();
    Ok(DeltaSummary {
        n: samples.len(),
        mean_abs_delta,
        sd_abs_delta,
        per_metric_mean_abs_delta,
        sd_of_metric_means: mean_sd(&means).1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub test: TestResult,
    pub deltas: Vec<DeltaRow>,
    pub summary: DeltaSummary,
}

impl Comparison {
    pub fn from_samples(samples: &[PairedSample], zero_policy: ZeroPolicy) -> Result<Self> {
        Ok(Comparison {
            test: wilcoxon_signed_rank(samples, zero_policy)?,
            deltas: delta_rows(samples),
            summary: delta_summary(samples)?,
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::from("| Label | Before | After | Delta |\n|---|---:|---:|---:|\n");
        for row in &self.deltas {
            md.push_str(&format!("| {} | {:.4} | {:.4} | {:+.4} |\n", row.label, row.before, row.after, row.delta));
        }
        let t = &self.test;
        md.push_str(&format!(
            "\nWilcoxon signed-rank ({:?}, zeros {:?}): n = {}, W+ = {}, W- = {}, p = {:.3e}\n",
            t.method, t.zero_policy, t.n_used, t.w_plus, t.w_minus, t.p_value
        ));
        md.push_str(&format!(
            "Mean absolute delta {:.4} (SD {:.4}; SD of per-metric means {:.4})\n",
            self.summary.mean_abs_delta, self.summary.sd_abs_delta, self.summary.sd_of_metric_means
        ));
        md
    }
}

fn report_label(report: &MetricsReport) -> String {
    report.model.clone().unwrap_or_else(|| "-".to_owned())
}

/// Pairs reports by model name and metric.
pub fn paired_samples(before: &[MetricsReport], after: &[MetricsReport]) -> Result<Vec<PairedSample>> {
    let index = |reports: &[MetricsReport]| -> BTreeMap<String, f64> {
        reports
            .iter()
            .flat_map(|r| METRICS.iter().map(move |m| (format!("{}/{m}", report_label(r)), r.metric(m).unwrap_or(f64::NAN))))
            .collect()
    };
    let a = index(before);
    let b = index(after);
    let ka: BTreeSet<&String> = a.keys().collect();
    let kb: BTreeSet<&String> = b.keys().collect();
    if ka != kb {
        return Err(Error::LabelMismatch {
            missing_in_first: kb.difference(&ka).map(|s| s.to_string()).collect(),
            missing_in_second: ka.difference(&kb).map(|s| s.to_string()).collect(),
        });
    }
    Ok(a.iter().map(|(label, &v)| PairedSample::new(label.clone(), v, b[label])).collect())
}

pub fn compare_reports(before: &[MetricsReport], after: &[MetricsReport], zero_policy: ZeroPolicy) -> Result<Comparison> {
    Comparison::from_samples(&paired_samples(before, after)?, zero_policy)
}

/// One row of the published tables: a metric on a benchmark and its corrected version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub dataset: String,
    pub model: String,
    pub metric: String,
    pub original: f64,
    pub corrected: f64,
}

pub fn read_fixture_rows<R: Read>(reader: R) -> Result<Vec<FixtureRow>> {
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: FixtureRow = row?;
        if !row.original.is_finite() || !row.corrected.is_finite() {
            return Err(Error::Fixture(format!("non-finite value for {}/{}/{}", row.dataset, row.model, row.metric)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn fixture_rows() -> Vec<FixtureRow> {
    read_fixture_rows(LINK_PREDICTION_TABLES.as_bytes()).expect("embedded fixture parses")
}

fn normalize(name: &str) -> String {
    name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

/// Dataset names present in `rows`, in first-appearance order.
pub fn fixture_datasets(rows: &[FixtureRow]) -> Vec<String> {
    let mut seen = Vec::new();
    for r in rows {
        if !seen.contains(&r.dataset) {
            seen.push(r.dataset.clone());
        }
    }
    seen
}

/// Paired samples for one dataset (matched ignoring case and punctuation),
/// leaving out the models in `exclude_models`.
pub fn fixture_samples(rows: &[FixtureRow], dataset: &str, exclude_models: &[&str]) -> Result<Vec<PairedSample>> {
    let want = normalize(dataset);
    let excluded: Vec<String> = exclude_models.iter().map(|m| normalize(m)).collect();
    let samples: Vec<PairedSample> = rows
        .iter()
        .filter(|r| normalize(&r.dataset) == want && !excluded.contains(&normalize(&r.model)))
        .map(|r| PairedSample::new(format!("{}/{}", r.model, r.metric), r.original, r.corrected))
        .collect();
    if samples.is_empty() {
        return Err(Error::Fixture(format!("no fixture rows for dataset {dataset:?}")));
    }
    Ok(samples)
}

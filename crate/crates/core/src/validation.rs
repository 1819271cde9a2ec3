//! Representativeness checks for an undersampled majority subset:
//! feature-wise mean/std comparison and per-feature two-sample KS tests.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Significance level used when counting flagged features.
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Largest `n1 · n2` for which the exact p-value is available.
pub const EXACT_KS_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStatsRow {
    pub feature: String,
    pub original_mean: f64,
    pub subset_mean: f64,
    pub original_std: f64,
    pub subset_std: f64,
    pub mean_gap: f64,
    pub std_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStatsReport {
    /// Always `"population"`: standard deviations divide by `n`.
    pub std_kind: String,
    pub rows: Vec<FeatureStatsRow>,
}

impl FeatureStatsReport {
    /// Aligned text table, one line per feature.
    pub fn to_text(&self) -> String {
        let header = [
            "Feature",
            "Original Mean",
            "Subset Mean",
            "Original Std",
            "Subset Std",
            "Mean Gap",
            "Std Gap",
        ];
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.feature.clone(),
                    format!("{:.4}", r.original_mean),
                    format!("{:.4}", r.subset_mean),
                    format!("{:.4}", r.original_std),
                    format!("{:.4}", r.subset_std),
                    format!("{:.4}", r.mean_gap),
                    format!("{:.4}", r.std_gap),
                ]
            })
            .collect();
        render_table(&header, &body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsMethod {
    #[default]
    Asymptotic,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub method: KsMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureKs {
    pub feature: String,
    #[serde(flatten)]
    pub result: KsTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub feature_stats: FeatureStatsReport,
    pub ks: Vec<FeatureKs>,
    pub alpha: f64,
    /// Features with `p < alpha`.
    pub flagged: usize,
    pub n_features: usize,
}

impl ValidationReport {
    pub fn to_text(&self) -> String {
        let mut out = self.feature_stats.to_text();
        out.push('\n');
        let body: Vec<Vec<String>> = self
            .ks
            .iter()
            .map(|k| {
                vec![
                    k.feature.clone(),
                    format!("{:.4}", k.result.statistic),
                    format!("{:.4}", k.result.p_value),
                    if k.result.p_value < self.alpha {
                        "yes"
                    } else {
                        "no"
                    }
                    .to_string(),
                ]
            })
            .collect();
        out.push_str(&render_table(
            &["Feature", "KS Statistic", "p-value", "Flagged"],
            &body,
        ));
        let _ = writeln!(
            out,
            "\n{} of {} features flagged at alpha = {}",
            self.flagged, self.n_features, self.alpha
        );
        out
    }
}

fn render_table(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                if c == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, &mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &mut rule.iter().map(String::as_str));
    for row in body {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out
}

fn check_schema(original: &LabeledDataset, subset: &LabeledDataset) -> Result<()> {
    if original.feature_names() != subset.feature_names() {
        return Err(Error::data(format!(
            "feature schema mismatch: {:?} vs {:?}",
            original.feature_names(),
            subset.feature_names()
        )));
    }
    if original.n_rows() == 0 || subset.n_rows() == 0 {
        return Err(Error::data("validation needs nonempty datasets"));
    }
    Ok(())
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn feature_stats(
    original: &LabeledDataset,
    subset: &LabeledDataset,
) -> Result<FeatureStatsReport> {
    check_schema(original, subset)?;
    let rows = original
        .feature_names()
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let (om, os) = mean_std(&original.features().column(f));
            let (sm, ss) = mean_std(&subset.features().column(f));
            FeatureStatsRow {
                feature: name.clone(),
                original_mean: om,
                subset_mean: sm,
                original_std: os,
                subset_std: ss,
                mean_gap: (om - sm).abs(),
                std_gap: (os - ss).abs(),
            }
        })
        .collect();
    Ok(FeatureStatsReport {
        std_kind: "population".to_string(),
        rows,
    })
}

fn sorted_sample(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::data("KS test needs nonempty samples"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::data("KS test sample contains NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Merged sweep over both sorted samples. Returns `D` as the largest
/// `|i/n1 − j/n2|` and the same gap as the integer `|i·n2 − j·n1|`.
fn ks_sweep(a: &[f64], b: &[f64]) -> (f64, u128) {
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    let mut numerator = 0u128;
    while i < n1 && j < n2 {
        let t = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n1 && a[i] <= t {
            i += 1;
        }
        while j < n2 && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
        numerator = numerator.max((i as u128 * n2 as u128).abs_diff(j as u128 * n1 as u128));
    }
    (d, numerator)
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)`,
/// stopping once a term drops below 1e-10.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=1_000_000u64 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-10 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test with the asymptotic p-value
/// `Q(D · (√n_e + 0.12 + 0.11/√n_e))`, `n_e = n1·n2/(n1+n2)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTestResult> {
    ks_two_sample_with(a, b, KsMethod::Asymptotic)
}

pub fn ks_two_sample_with(a: &[f64], b: &[f64], method: KsMethod) -> Result<KsTestResult> {
    let a = sorted_sample(a)?;
    let b = sorted_sample(b)?;
    let (n1, n2) = (a.len(), b.len());
    let (statistic, numerator) = ks_sweep(&a, &b);
    let p_value = match method {
        KsMethod::Asymptotic => {
            let ne = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
            let root = ne.sqrt();
            kolmogorov_q(statistic * (root + 0.12 + 0.11 / root))
        }
        KsMethod::Exact => {
            if n1.saturating_mul(n2) > EXACT_KS_LIMIT {
                return Err(Error::config(format!(
                    "exact KS p-value needs n1·n2 ≤ {EXACT_KS_LIMIT}, got {n1}·{n2}"
                )));
            }
            exact_p_value(n1, n2, numerator)
        }
    };
    Ok(KsTestResult {
        statistic,
        p_value,
        n1,
        n2,
        method,
    })
}

/// `P(D ≥ d)` for continuous data: one minus the fraction of monotone
/// lattice paths from (0,0) to (n1,n2) with `|i·n2 − j·n1| < numerator`
/// everywhere.
fn exact_p_value(n1: usize, n2: usize, numerator: u128) -> f64 {
    if numerator == 0 {
        return 1.0;
    }
    let inside =
        |i: usize, j: usize| (i as u128 * n2 as u128).abs_diff(j as u128 * n1 as u128) < numerator;
    // counts are scaled per row to avoid overflow; the final ratio is exact
    // up to rounding
    let mut row = vec![0.0f64; n2 + 1];
    let mut log_scale = 0.0f64;
    for j in 0..=n2 {
        row[j] = if inside(0, j) && (j == 0 || row[j - 1] > 0.0) {
            1.0
        } else {
            0.0
        };
    }
    for i in 1..=n1 {
        row[0] = if inside(i, 0) { row[0] } else { 0.0 };
        for j in 1..=n2 {
            row[j] = if inside(i, j) {
                row[j] + row[j - 1]
            } else {
                0.0
            };
        }
        let peak = row.iter().cloned().fold(0.0, f64::max);
        if peak > 1e100 {
            row.iter_mut().for_each(|v| *v /= peak);
            log_scale += peak.ln();
        }
    }
    let log_paths = if row[n2] > 0.0 {
        row[n2].ln() + log_scale
    } else {
        return 1.0;
    };
    let p_inside = (log_paths - ln_binomial(n1 + n2, n1)).exp();
    (1.0 - p_inside).clamp(0.0, 1.0)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k)
        .map(|t| ((n - t) as f64).ln() - ((t + 1) as f64).ln())
        .sum()
}

/// Feature statistics plus a KS test per feature; counts features with
/// `p < alpha`.
pub fn validate_subset(
    original: &LabeledDataset,
    subset: &LabeledDataset,
) -> Result<ValidationReport> {
    validate_subset_with(original, subset, DEFAULT_ALPHA)
}

pub fn validate_subset_with(
    original: &LabeledDataset,
    subset: &LabeledDataset,
    alpha: f64,
) -> Result<ValidationReport> {
    let feature_stats = feature_stats(original, subset)?;
    let ks = original
        .feature_names()
        .par_iter()
        .enumerate()
        .map(|(f, name)| {
            let result =
                ks_two_sample(&original.features().column(f), &subset.features().column(f))?;
            Ok(FeatureKs {
                feature: name.clone(),
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged = ks.iter().filter(|k| k.result.p_value < alpha).count();
    Ok(ValidationReport {
        n_features: ks.len(),
        feature_stats,
        ks,
        alpha,
        flagged,
    })
}

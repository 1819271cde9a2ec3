//! Logistic-regression benchmark: train on undersampled data, report
//! imbalance-aware metrics, and compare sampling methods across seeds.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_by_class, train_test_split, LabeledDataset};
use crate::error::{Error, Result};
use crate::pipeline::{
    prepare_mi, undersample, undersample_mi_prepared, Method, MethodConfigs, MiPrepared,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Coefficient `λ` of the `λ/2 · |w|²` penalty; the bias is not penalized.
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-3,
        }
    }
}

/// Binary logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Training-set feature means used for standardization.
    pub means: Vec<f64>,
    /// Training-set population standard deviations (1 for constant features).
    pub scales: Vec<f64>,
    pub config: LogisticConfig,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    fn score(&self, row: &[f64]) -> f64 {
        let mut z = self.bias;
        for ((x, m), (s, w)) in row
            .iter()
            .zip(&self.means)
            .zip(self.scales.iter().zip(&self.weights))
        {
            z += w * (x - m) / s;
        }
        z
    }

    /// Probability of class 1.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.score(row))
    }

    /// Class 1 when the probability is at least 0.5.
    pub fn predict(&self, row: &[f64]) -> usize {
        usize::from(self.predict_proba(row) >= 0.5)
    }
}

/// Full-batch gradient descent on the L2-regularized mean log loss from
/// zero weights. Deterministic.
pub fn train_logistic(train: &LabeledDataset, config: &LogisticConfig) -> Result<LogisticModel> {
    Ok(train_logistic_traced(train, config)?.0)
}

/// Like [`train_logistic`], also returning the regularized loss before each
/// epoch and after the last one.
pub fn train_logistic_traced(
    train: &LabeledDataset,
    config: &LogisticConfig,
) -> Result<(LogisticModel, Vec<f64>)> {
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::config("learning_rate must be positive"));
    }
    if !(config.l2.is_finite() && config.l2 >= 0.0) {
        return Err(Error::config("l2 must be nonnegative"));
    }
    if train.labels().iter().any(|&y| y > 1) {
        return Err(Error::data("logistic regression needs labels 0 and 1"));
    }
    if train.class_counts().len() < 2 {
        return Err(Error::data("training set holds a single class"));
    }
    let (n, d) = (train.n_rows(), train.n_features());
    let mut means = vec![0.0; d];
    let mut scales = vec![0.0; d];
    for f in 0..d {
        let (m, s) = crate::validation::mean_std(&train.features().column(f));
        means[f] = m;
        scales[f] = if s > 0.0 { s } else { 1.0 };
    }
    let z: Vec<f64> = train
        .features()
        .iter_rows()
        .flat_map(|row| {
            row.iter()
                .zip(&means)
                .zip(&scales)
                .map(|((x, m), s)| (x - m) / s)
                .collect::<Vec<_>>()
        })
        .collect();
    let y: Vec<f64> = train.labels().iter().map(|&l| l as f64).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let loss = |w: &[f64], b: f64| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let s = b + w
                .iter()
                .zip(&z[i * d..(i + 1) * d])
                .map(|(a, c)| a * c)
                .sum::<f64>();
            // log(1 + e^s) − y·s, written to avoid overflow
            total += s.max(0.0) + (-s.abs()).exp().ln_1p() - y[i] * s;
        }
        total / n as f64 + 0.5 * config.l2 * w.iter().map(|v| v * v).sum::<f64>()
    };

    let mut trace = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        trace.push(loss(&w, b));
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for i in 0..n {
            let row = &z[i * d..(i + 1) * d];
            let s = b + w.iter().zip(row).map(|(a, c)| a * c).sum::<f64>();
            let err = sigmoid(s) - y[i];
            for (g, x) in gw.iter_mut().zip(row) {
                *g += err * x;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= config.learning_rate * (g / n as f64 + config.l2 * *wi);
        }
        b -= config.learning_rate * gb / n as f64;
    }
    trace.push(loss(&w, b));

    let model = LogisticModel {
        weights: w,
        bias: b,
        means,
        scales,
        config: *config,
    };
    if !(model.bias.is_finite() && model.weights.iter().all(|v| v.is_finite())) {
        return Err(Error::data("logistic regression diverged"));
    }
    Ok((model, trace))
}

/// Metrics for a binary classifier. `confusion[t][p]` counts rows of true
/// class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: [[u64; 2]; 2],
    pub balanced_accuracy: f64,
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub f1: [f64; 2],
    pub n_test: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassificationReport {
    /// Undefined precision or recall (zero denominator) is reported as 0.
    pub fn from_confusion(confusion: [[u64; 2]; 2]) -> Self {
        let mut precision = [0.0; 2];
        let mut recall = [0.0; 2];
        let mut f1 = [0.0; 2];
        for c in 0..2 {
            let tp = confusion[c][c];
            recall[c] = ratio(tp, confusion[c][0] + confusion[c][1]);
            precision[c] = ratio(tp, confusion[0][c] + confusion[1][c]);
            let sum = precision[c] + recall[c];
            f1[c] = if sum > 0.0 {
                2.0 * precision[c] * recall[c] / sum
            } else {
                0.0
            };
        }
        Self {
            confusion,
            balanced_accuracy: 0.5 * (recall[0] + recall[1]),
            precision,
            recall,
            f1,
            n_test: confusion.iter().flatten().sum(),
        }
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut confusion = [[0u64; 2]; 2];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t > 1 || p > 1 {
                return Err(Error::data("metrics need labels 0 and 1"));
            }
            confusion[t][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }
}

pub fn evaluate(model: &LogisticModel, test: &LabeledDataset) -> Result<ClassificationReport> {
    if test.n_rows() == 0 {
        return Err(Error::data("empty test set"));
    }
    if test.n_features() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            actual: test.n_features(),
        });
    }
    let predicted: Vec<usize> = test
        .features()
        .iter_rows()
        .map(|r| model.predict(r))
        .collect();
    ClassificationReport::from_predictions(test.labels(), &predicted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub methods: MethodConfigs,
    pub logistic: LogisticConfig,
    pub test_fraction: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: MethodConfigs::default(),
            logistic: LogisticConfig::default(),
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: Method,
    pub seed: u64,
    pub balanced_accuracy: f64,
    pub f1: [f64; 2],
    pub precision: [f64; 2],
    pub recall: [f64; 2],
}

/// Mean and sample standard deviation (0 for a single seed) per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub mean_balanced_accuracy: f64,
    pub std_balanced_accuracy: f64,
    pub mean_f1: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    /// Sorted by method, then seed.
    pub rows: Vec<BenchmarkRow>,
    pub summary: Vec<MethodSummary>,
}

impl BenchmarkTable {
    pub fn from_rows(mut rows: Vec<BenchmarkRow>) -> Self {
        rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.seed.cmp(&b.seed)));
        let mut summary = Vec::new();
        for chunk in rows.chunk_by(|a, b| a.method == b.method) {
            let k = chunk.len() as f64;
            let mean = chunk.iter().map(|r| r.balanced_accuracy).sum::<f64>() / k;
            let std = if chunk.len() > 1 {
                (chunk
                    .iter()
                    .map(|r| (r.balanced_accuracy - mean).powi(2))
                    .sum::<f64>()
                    / (k - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            let mean_f1 = [0, 1].map(|c| chunk.iter().map(|r| r.f1[c]).sum::<f64>() / k);
            summary.push(MethodSummary {
                method: chunk[0].method,
                runs: chunk.len(),
                mean_balanced_accuracy: mean,
                std_balanced_accuracy: std,
                mean_f1,
            });
        }
        Self { rows, summary }
    }

    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// One row per (method, seed) followed by one aggregate row per method
    /// (seed column `mean`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method",
            "seed",
            "balanced_accuracy",
            "f1_0",
            "f1_1",
            "precision_0",
            "precision_1",
            "recall_0",
            "recall_1",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.to_string(),
                r.seed.to_string(),
                r.balanced_accuracy.to_string(),
                r.f1[0].to_string(),
                r.f1[1].to_string(),
                r.precision[0].to_string(),
                r.precision[1].to_string(),
                r.recall[0].to_string(),
                r.recall[1].to_string(),
            ])?;
        }
        for s in &self.summary {
            w.write_record([
                s.method.to_string(),
                "mean".to_string(),
                s.mean_balanced_accuracy.to_string(),
                s.mean_f1[0].to_string(),
                s.mean_f1[1].to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Methods as columns, seeds as rows, aggregates at the bottom.
    pub fn to_text(&self) -> String {
        let methods: Vec<Method> = self.summary.iter().map(|s| s.method).collect();
        let mut seeds: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let mut out = String::new();
        let _ = write!(out, "{:<10}", "Seed");
        for m in &methods {
            let _ = write!(out, "  {:>16}", m.as_str());
        }
        out.push('\n');
        for seed in seeds {
            let _ = write!(out, "{seed:<10}");
            for m in &methods {
                match self.rows.iter().find(|r| r.method == *m && r.seed == seed) {
                    Some(r) => {
                        let _ = write!(out, "  {:>16.4}", r.balanced_accuracy);
                    }
                    None => {
                        let _ = write!(out, "  {:>16}", "-");
                    }
                }
            }
            out.push('\n');
        }
        for (label, pick) in [("Mean", 0usize), ("Std", 1)] {
            let _ = write!(out, "{label:<10}");
            for s in &self.summary {
                let v = if pick == 0 {
                    s.mean_balanced_accuracy
                } else {
                    s.std_balanced_accuracy
                };
                let _ = write!(out, "  {v:>16.4}");
            }
            out.push('\n');
        }
        out.push_str("(balanced accuracy, logistic regression)\n");
        out
    }
}

/// One benchmark cell: undersample, stratified split, train, evaluate.
pub fn run_cell(
    data: &LabeledDataset,
    method: Method,
    seed: u64,
    config: &BenchmarkConfig,
    prepared_mi: Option<&MiPrepared>,
) -> Result<BenchmarkRow> {
    let outcome = match (method, prepared_mi) {
        (Method::Mi, Some(p)) => undersample_mi_prepared(data, p, &config.methods.mi, seed)?,
        _ => undersample(data, method, &config.methods, seed)?,
    };
    score_balanced(&outcome.dataset, method, seed, config)
}

/// Split, train and evaluate on an already balanced dataset.
pub fn score_balanced(
    balanced: &LabeledDataset,
    method: Method,
    seed: u64,
    config: &BenchmarkConfig,
) -> Result<BenchmarkRow> {
    let (train, test) = train_test_split(
        balanced,
        config.test_fraction,
        rng::derive_seed(seed, 0x7e57),
    )?;
    let model = train_logistic(&train, &config.logistic)?;
    let report = evaluate(&model, &test)?;
    Ok(BenchmarkRow {
        method,
        seed,
        balanced_accuracy: report.balanced_accuracy,
        f1: report.f1,
        precision: report.precision,
        recall: report.recall,
    })
}

/// Runs every (method, seed) cell. Duplicate methods or seeds are ignored.
/// The MI dissimilarity matrix does not depend on the seed, so it is built
/// once and shared.
pub fn run_benchmark(
    data: &LabeledDataset,
    methods: &[Method],
    seeds: &[u64],
    config: &BenchmarkConfig,
) -> Result<BenchmarkTable> {
    let mut methods = methods.to_vec();
    methods.sort_unstable();
    methods.dedup();
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::config(
            "benchmark needs at least one method and one seed",
        ));
    }
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(Error::config(format!(
            "test_fraction must lie in (0, 1), got {}",
            config.test_fraction
        )));
    }
    let prepared = if methods.contains(&Method::Mi) {
        let (majority, _) = split_by_class(data)?;
        Some(prepare_mi(&majority, &config.methods.mi)?)
    } else {
        None
    };
    let cells: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(m, s)| run_cell(data, m, s, config, prepared.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkTable::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::synth::{gen_synth, SynthConfig};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(seed: u64, n: usize, gap: f64) -> LabeledDataset {
        let mut r = rng::seeded(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let shift = if label == 0 { -gap } else { gap };
            rows.push([
                shift + r.sample::<f64, _>(StandardNormal),
                r.sample::<f64, _>(StandardNormal) * 3.0,
            ]);
            labels.push(label);
        }
        LabeledDataset::new(
            Matrix::from_rows(&rows).unwrap(),
            labels,
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn separable_blobs_train_perfectly() {
        let data = blobs(1, 200, 6.0);
        let model = train_logistic(&data, &LogisticConfig::default()).unwrap();
        let report = evaluate(&model, &data).unwrap();
        assert_eq!(report.balanced_accuracy, 1.0);
        assert_eq!(report.f1, [1.0, 1.0]);
    }

    #[test]
    fn no_signal_gives_zero_weights() {
        let rows = vec![[1.0, 2.0]; 10];
        let labels = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let data = LabeledDataset::new(
            Matrix::from_rows(&rows).unwrap(),
            labels,
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let model = train_logistic(&data, &LogisticConfig::default()).unwrap();
        assert!(model.weights.iter().all(|w| w.abs() < 1e-12));
        assert!(model.bias < 0.0);
        assert!(data.features().iter_rows().all(|r| model.predict(r) == 0));
    }

    #[test]
    fn single_class_rejected() {
        let data = LabeledDataset::new(
            Matrix::from_rows(&[[1.0], [2.0]]).unwrap(),
            vec![0, 0],
            vec!["a".into()],
        )
        .unwrap();
        assert!(train_logistic(&data, &LogisticConfig::default()).is_err());
    }

    #[test]
    fn loss_decreases_every_epoch() {
        for seed in 0..20 {
            let data = blobs(seed, 60, 0.5 + seed as f64 * 0.1);
            let (_, trace) = train_logistic_traced(&data, &LogisticConfig::default()).unwrap();
            assert_eq!(trace.len(), 501);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0], "seed {seed}: {} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn metrics_by_hand() {
        let r = ClassificationReport::from_confusion([[1, 1], [1, 1]]);
        assert_eq!(r.balanced_accuracy, 0.5);
        assert_eq!(r.precision, [0.5, 0.5]);
        let r = ClassificationReport::from_confusion([[8, 2], [1, 9]]);
        assert!((r.balanced_accuracy - 0.85).abs() < 1e-15);
        assert!((r.precision[1] - 9.0 / 11.0).abs() < 1e-15);
        assert!((r.recall[1] - 0.9).abs() < 1e-15);
        let p = 9.0 / 11.0;
        assert!((r.f1[1] - 2.0 * p * 0.9 / (p + 0.9)).abs() < 1e-15);
        assert_eq!(r.n_test, 20);
    }

    #[test]
    fn constant_classifier_is_half() {
        for (a, b) in [(3, 7), (1, 1), (10, 2)] {
            let r = ClassificationReport::from_confusion([[a, 0], [b, 0]]);
            assert_eq!(r.balanced_accuracy, 0.5);
            assert_eq!(r.f1[1], 0.0);
        }
    }

    #[test]
    fn relabeling_swaps_metrics() {
        let r = ClassificationReport::from_confusion([[8, 2], [1, 9]]);
        let s = ClassificationReport::from_confusion([[9, 1], [2, 8]]);
        assert_eq!(r.balanced_accuracy, s.balanced_accuracy);
        assert_eq!(r.f1, [s.f1[1], s.f1[0]]);
        assert_eq!(r.precision, [s.precision[1], s.precision[0]]);
    }

    #[test]
    fn permuting_test_rows_keeps_report() {
        let data = blobs(3, 80, 1.0);
        let model = train_logistic(&data, &LogisticConfig::default()).unwrap();
        let shuffled = data.shuffled(9);
        assert_eq!(
            evaluate(&model, &data).unwrap(),
            evaluate(&model, &shuffled).unwrap()
        );
    }

    #[test]
    fn benchmark_shape_and_determinism() {
        let data = gen_synth(&SynthConfig {
            n: 300,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let config = BenchmarkConfig::default();
        let single = run_benchmark(&data, &[Method::Random], &[7], &config).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert_eq!(single.summary.len(), 1);
        assert_eq!(single.summary[0].std_balanced_accuracy, 0.0);

        let seeds = [3, 1, 2, 1];
        let a = run_benchmark(&data, &[Method::Random, Method::Random], &seeds, &config).unwrap();
        assert_eq!(a.rows.len(), 3);
        assert_eq!(
            a.rows.iter().map(|r| r.seed).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        let b = run_benchmark(&data, &[Method::Random], &seeds, &config).unwrap();
        assert_eq!(a, b);

        let mut csv_out = Vec::new();
        a.write_csv(&mut csv_out).unwrap();
        assert_eq!(
            String::from_utf8(csv_out).unwrap().lines().count(),
            1 + 3 + 1
        );
        assert!(a.to_text().contains("random"));
    }

    #[test]
    fn benchmark_needs_methods_and_seeds() {
        let data = blobs(0, 40, 1.0);
        assert!(run_benchmark(&data, &[], &[1], &BenchmarkConfig::default()).is_err());
        assert!(run_benchmark(&data, &[Method::Random], &[], &BenchmarkConfig::default()).is_err());
    }
}

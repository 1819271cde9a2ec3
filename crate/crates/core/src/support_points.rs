//! Support points: a small point set that minimizes the empirical energy
//! distance to the majority class, snapped back onto real rows.
//!
//! For `X = {x_1..x_N}` and `Z = {z_1..z_m}` the empirical energy distance is
//!
//! ```text
//! E(X, Z) = 2/(N m) ΣΣ |x_i - z_j| - 1/N² ΣΣ |x_i - x_i'| - 1/m² ΣΣ |z_j - z_j'|
//! ```
//!
//! with Euclidean norms and every sum running over all index pairs. Its
//! gradient with respect to `z_j` is
//!
//! ```text
//! 2/(N m) Σ_i (z_j - x_i)/|z_j - x_i| - 2/m² Σ_{j'≠j} (z_j - z_j')/|z_j - z_j'|
//! ```
//!
//! Large inputs go through two stages: mini-batch k-means picks a
//! proportional subset of `subset_target` rows, and the optimizer runs on
//! that subset. No stage materializes an `N × N` structure.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_by_class, LabeledDataset};
use crate::error::{Error, Result};
use crate::matrix::{euclidean, squared_distance, Matrix};
use crate::rng;
use crate::stratification::{
    minibatch_kmeans_fit, proportional_allocation, stratified_srs, KMeansInit,
};

/// Rows per parallel work item when reducing distance sums.
const ROW_CHUNK: usize = 16;
/// Step halvings tried when a step would raise the energy.
const MAX_BACKTRACKS: usize = 10;
/// Rows sampled to estimate the default learning rate.
const ETA_PROBE_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearestMode {
    /// Greedy matching in ascending distance order; every support point
    /// gets a distinct row.
    #[default]
    GreedyUnique,
    /// Each support point takes its own nearest row; rows may repeat.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupportPointConfig {
    /// Number of support points; `None` means the minority class size.
    pub m: Option<usize>,
    /// Learning rate; `None` means 0.1 × the median pairwise distance of a
    /// 256-row probe sample.
    pub eta: Option<f64>,
    pub max_iter: usize,
    /// Early stop on relative energy change below this value.
    pub tol: f64,
    /// Pairs closer than this contribute a zero gradient term.
    pub epsilon: f64,
    pub subset_target: usize,
    pub stage1_clusters: usize,
    pub stage1_batch: usize,
    pub stage1_max_iter: usize,
    pub nearest: NearestMode,
}

impl Default for SupportPointConfig {
    fn default() -> Self {
        Self {
            m: None,
            eta: None,
            max_iter: 2000,
            tol: 1e-6,
            epsilon: 1e-10,
            subset_target: 5000,
            stage1_clusters: 50,
            stage1_batch: 1024,
            stage1_max_iter: 100,
            nearest: NearestMode::GreedyUnique,
        }
    }
}

impl SupportPointConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(eta) = self.eta {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::config(format!("eta must be positive, got {eta}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::config(format!(
                "tol must be nonnegative, got {}",
                self.tol
            )));
        }
        if let Some(m) = self.m {
            if m == 0 {
                return Err(Error::config("m must be at least 1"));
            }
            if m > self.subset_target {
                return Err(Error::config(format!(
                    "m = {m} exceeds subset_target = {}",
                    self.subset_target
                )));
            }
        }
        if self.stage1_clusters == 0 || self.stage1_batch == 0 || self.stage1_max_iter == 0 {
            return Err(Error::config(
                "stage-1 clustering parameters must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPointSet {
    pub points: Matrix,
    /// Energy before the first step, then after every iteration.
    pub energy_trace: Vec<f64>,
    /// Rows of the majority class the points were mapped onto; empty until
    /// [`map_to_nearest`] has run.
    pub nearest_indices: Vec<usize>,
    pub final_energy: f64,
    /// Learning rate actually used.
    pub eta: f64,
}

impl SupportPointSet {
    pub fn iterations(&self) -> usize {
        self.energy_trace.len().saturating_sub(1)
    }

    /// `iteration,energy` rows.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["iteration", "energy"])?;
        for (i, e) in self.energy_trace.iter().enumerate() {
            writer.write_record([i.to_string(), e.to_string()])?;
        }
        writer.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_points_csv<W: Write>(&self, out: W, feature_names: &[String]) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(feature_names)?;
        for row in self.points.iter_rows() {
            writer.write_record(row.iter().map(|v| v.to_string()))?;
        }
        writer.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn check_dims(x: &Matrix, z: &Matrix) -> Result<()> {
    if x.rows() == 0 || z.rows() == 0 {
        return Err(Error::data("energy distance needs nonempty point sets"));
    }
    if x.cols() != z.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            actual: z.cols(),
        });
    }
    Ok(())
}

/// `Σ_i Σ_j |a_i - b_j|`, summed row by row in index order so the result is
/// independent of how the work is scheduled.
fn distance_sum(a: &Matrix, b: &Matrix) -> f64 {
    let partials: Vec<f64> = (0..a.rows())
        .into_par_iter()
        .with_min_len(ROW_CHUNK)
        .map(|i| {
            let ai = a.row(i);
            let mut s = 0.0;
            for bj in b.iter_rows() {
                s += euclidean(ai, bj);
            }
            s
        })
        .collect();
    partials.iter().sum()
}

struct Coefficients {
    cross: f64,
    within_x: f64,
    within_z: f64,
}

impl Coefficients {
    fn new(n: usize, m: usize) -> Self {
        let (n, m) = (n as f64, m as f64);
        Self {
            cross: 2.0 / (n * m),
            within_x: 1.0 / (n * n),
            within_z: 1.0 / (m * m),
        }
    }
}

/// Empirical energy distance between the rows of `x` and `z`.
pub fn energy_distance(x: &Matrix, z: &Matrix) -> Result<f64> {
    check_dims(x, z)?;
    EnergyTarget::new(x)?.energy(z)
}

/// Energy distance to a fixed `X` with the `X`–`X` term computed once.
#[derive(Debug, Clone)]
pub struct EnergyTarget<'a> {
    x: &'a Matrix,
    within_x: f64,
}

impl<'a> EnergyTarget<'a> {
    pub fn new(x: &'a Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::data("energy distance needs nonempty point sets"));
        }
        let within_x = Coefficients::new(x.rows(), x.rows()).within_x * distance_sum(x, x);
        Ok(Self { x, within_x })
    }

    /// Same value as [`energy_distance`]`(x, z)`.
    pub fn energy(&self, z: &Matrix) -> Result<f64> {
        check_dims(self.x, z)?;
        let c = Coefficients::new(self.x.rows(), z.rows());
        Ok(c.cross * distance_sum(self.x, z) - self.within_x - c.within_z * distance_sum(z, z))
    }
}

/// Energy and gradient at `z`, sharing the distance evaluations.
struct Evaluation {
    energy: f64,
    gradient: Matrix,
}

/// Evaluates energy and gradient. `within_x` is the precomputed
/// `1/N² ΣΣ |x_i - x_i'|`. Each support point is handled by one task and
/// the per-point sums are reduced in index order.
fn evaluate(x: &Matrix, z: &Matrix, within_x: f64, epsilon: f64) -> Evaluation {
    let (n, m, d) = (x.rows(), z.rows(), x.cols());
    let c = Coefficients::new(n, m);
    let repulse = 2.0 / (m as f64 * m as f64);

    let per_point: Vec<(f64, f64, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|j| {
            let zj = z.row(j);
            let mut attract = vec![0.0; d];
            let mut cross = 0.0;
            for xi in x.iter_rows() {
                let dist = euclidean(zj, xi);
                cross += dist;
                if dist >= epsilon {
                    let inv = 1.0 / dist;
                    for ((a, zt), xt) in attract.iter_mut().zip(zj).zip(xi) {
                        *a += (zt - xt) * inv;
                    }
                }
            }
            let mut spread = vec![0.0; d];
            let mut within = 0.0;
            for (jp, zp) in z.iter_rows().enumerate() {
                let dist = euclidean(zj, zp);
                within += dist;
                if jp != j && dist >= epsilon {
                    let inv = 1.0 / dist;
                    for ((s, zt), pt) in spread.iter_mut().zip(zj).zip(zp) {
                        *s += (zt - pt) * inv;
                    }
                }
            }
            let grad = attract
                .iter()
                .zip(&spread)
                .map(|(a, s)| c.cross * a - repulse * s)
                .collect();
            (cross, within, grad)
        })
        .collect();

    let mut sxz = 0.0;
    let mut szz = 0.0;
    let mut gradient = Matrix::zeros(m, d);
    for (j, (cross, within, grad)) in per_point.into_iter().enumerate() {
        sxz += cross;
        szz += within;
        gradient.row_mut(j).copy_from_slice(&grad);
    }
    Evaluation {
        energy: c.cross * sxz - within_x - c.within_z * szz,
        gradient,
    }
}

/// Gradient of [`energy_distance`] with respect to every row of `z`. Pairs
/// closer than `epsilon` contribute zero (the minimum-norm subgradient).
pub fn energy_gradient(x: &Matrix, z: &Matrix, epsilon: f64) -> Result<Matrix> {
    check_dims(x, z)?;
    Ok(evaluate(x, z, 0.0, epsilon).gradient)
}

/// Default learning rate: 0.1 × the median pairwise distance among up to
/// 256 seeded probe rows (1.0 when that median is zero).
pub fn default_eta(x: &Matrix, seed: u64) -> f64 {
    let n = x.rows();
    let probe: Vec<usize> = if n <= ETA_PROBE_ROWS {
        (0..n).collect()
    } else {
        let mut idx = index::sample(&mut rng::seeded(seed), n, ETA_PROBE_ROWS).into_vec();
        idx.sort_unstable();
        idx
    };
    let mut dists = Vec::with_capacity(probe.len() * probe.len().saturating_sub(1) / 2);
    for (a, &i) in probe.iter().enumerate() {
        for &j in &probe[a + 1..] {
            dists.push(euclidean(x.row(i), x.row(j)));
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median > 0.0 {
        0.1 * median
    } else {
        1.0
    }
}

/// Runs gradient descent from a random subset of `m = config.m` distinct
/// rows of `x`; see [`optimize_from`].
pub fn optimize_support_points(
    x: &Matrix,
    config: &SupportPointConfig,
    seed: u64,
) -> Result<SupportPointSet> {
    config.validate()?;
    let m = config
        .m
        .ok_or_else(|| Error::config("support point count m is not set"))?;
    if m > x.rows() {
        return Err(Error::config(format!(
            "m = {m} exceeds the {} rows available",
            x.rows()
        )));
    }
    let mut init = index::sample(&mut rng::seeded(seed), x.rows(), m).into_vec();
    // sorted so that m = N starts from X itself, row for row
    init.sort_unstable();
    let eta = match config.eta {
        Some(eta) => eta,
        None => default_eta(x, rng::derive_seed(seed, 1)),
    };
    optimize_from(x, x.select_rows(&init), eta, config)
}

/// Gradient descent `z_j ← z_j − step · ∂E/∂z_j` from `initial`.
///
/// Each iteration tries `step = eta` and halves it up to ten times until
/// the energy does not increase; if every try fails the points stay put
/// and the run ends. The run also ends at `max_iter`, when the energy hits
/// zero, or when `|ΔE| / max(E, 1e-12) < tol`.
pub fn optimize_from(
    x: &Matrix,
    initial: Matrix,
    eta: f64,
    config: &SupportPointConfig,
) -> Result<SupportPointSet> {
    check_dims(x, &initial)?;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::config(format!("eta must be positive, got {eta}")));
    }
    let within_x = EnergyTarget::new(x)?.within_x;
    let mut z = initial;
    let mut current = evaluate(x, &z, within_x, config.epsilon);
    let mut trace = vec![current.energy];

    for _ in 0..config.max_iter {
        if current.energy <= 0.0 {
            break;
        }
        let mut step = eta;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let mut candidate = z.clone();
            for (c, g) in candidate
                .as_mut_slice()
                .iter_mut()
                .zip(current.gradient.as_slice())
            {
                *c -= step * g;
            }
            let next = evaluate(x, &candidate, within_x, config.epsilon);
            if next.energy <= current.energy {
                accepted = Some((candidate, next));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            trace.push(current.energy);
            break;
        };
        let change = (current.energy - next.energy).abs() / next.energy.max(1e-12);
        z = candidate;
        current = next;
        trace.push(current.energy);
        if change < config.tol {
            break;
        }
    }

    Ok(SupportPointSet {
        points: z,
        final_energy: current.energy,
        energy_trace: trace,
        nearest_indices: Vec::new(),
        eta,
    })
}

/// Stage-1 reduction: mini-batch k-means into `stage1_clusters` groups, a
/// proportional largest-remainder quota per group, and seeded SRS inside
/// each group. Returns `subset_target` ascending row indices.
pub fn cluster_subsample(
    majority: &LabeledDataset,
    stage1_clusters: usize,
    subset_target: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let defaults = SupportPointConfig::default();
    cluster_subsample_with(
        majority.features(),
        stage1_clusters,
        subset_target,
        defaults.stage1_batch,
        defaults.stage1_max_iter,
        seed,
    )
}

pub fn cluster_subsample_with(
    points: &Matrix,
    stage1_clusters: usize,
    subset_target: usize,
    batch: usize,
    max_iter: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = points.rows();
    if subset_target > n {
        return Err(Error::data(format!(
            "subset_target {subset_target} exceeds the {n} majority rows"
        )));
    }
    if stage1_clusters > n {
        return Err(Error::config(format!(
            "{stage1_clusters} clusters requested for {n} rows"
        )));
    }
    if subset_target == n {
        return Ok((0..n).collect());
    }
    let fit = minibatch_kmeans_fit(
        points,
        stage1_clusters,
        batch.min(n),
        rng::derive_seed(seed, 1),
        max_iter,
        KMeansInit::PlusPlus,
    )?;
    let assignment = fit.assignment;
    let plan = proportional_allocation(&assignment.sizes(), subset_target)?;
    let mut idx = stratified_srs(&assignment, &plan, subset_target, rng::derive_seed(seed, 2))?;
    idx.sort_unstable();
    Ok(idx)
}

/// Maps each support point onto a majority row.
///
/// In greedy-unique mode all (point, row) pairs are visited in ascending
/// distance order (ties to the lower row index, then the lower point index)
/// and each point takes the first row nobody has taken yet. A point's match
/// is always among its `m` nearest rows, so only those candidates are kept.
pub fn map_to_nearest(points: &Matrix, majority: &Matrix, mode: NearestMode) -> Result<Vec<usize>> {
    let (m, n) = (points.rows(), majority.rows());
    if points.cols() != majority.cols() {
        return Err(Error::DimensionMismatch {
            expected: majority.cols(),
            actual: points.cols(),
        });
    }
    if m > n {
        return Err(Error::data(format!(
            "{m} support points cannot map onto {n} distinct rows"
        )));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let keep = match mode {
        NearestMode::GreedyUnique => m,
        NearestMode::Plain => 1,
    };
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let candidates: Vec<Vec<(f64, usize)>> = (0..m)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |all: &mut Vec<(f64, usize)>, j| {
                let zj = points.row(j);
                all.clear();
                all.extend(
                    majority
                        .iter_rows()
                        .enumerate()
                        .map(|(i, x)| (squared_distance(zj, x), i)),
                );
                if keep < all.len() {
                    all.select_nth_unstable_by(keep - 1, by_key);
                }
                // copy out only the kept prefix so the scratch buffer is reused
                let mut kept = all[..keep].to_vec();
                kept.sort_by(by_key);
                kept
            },
        )
        .collect();

    if mode == NearestMode::Plain {
        return Ok(candidates.iter().map(|c| c[0].1).collect());
    }

    let mut pairs: Vec<(f64, usize, usize)> = candidates
        .iter()
        .enumerate()
        .flat_map(|(j, c)| c.iter().map(move |&(d, i)| (d, i, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut taken = std::collections::HashSet::with_capacity(m);
    let mut result = vec![usize::MAX; m];
    let mut assigned = 0;
    for (_, row, j) in pairs {
        if result[j] == usize::MAX && taken.insert(row) {
            result[j] = row;
            assigned += 1;
            if assigned == m {
                break;
            }
        }
    }
    debug_assert_eq!(assigned, m);
    Ok(result)
}

/// Everything produced by [`undersample_support_points`].
#[derive(Debug, Clone)]
pub struct SupportPointOutcome {
    /// Balanced, shuffled dataset.
    pub dataset: LabeledDataset,
    pub support: SupportPointSet,
    /// Majority rows used as the optimization target (all rows when stage 1
    /// was skipped).
    pub subset_indices: Vec<usize>,
    pub majority_size: usize,
    pub minority_size: usize,
}

/// Full support-points undersampling of a binary dataset: optional stage-1
/// subsample, optimization, nearest-row mapping, merge with every minority
/// row, and a seeded shuffle.
pub fn undersample_support_points(
    data: &LabeledDataset,
    config: &SupportPointConfig,
    seed: u64,
) -> Result<SupportPointOutcome> {
    config.validate()?;
    let (majority, minority) = split_by_class(data)?;
    let m = config.m.unwrap_or(minority.n_rows());
    if m < minority.n_rows() || m > majority.n_rows() {
        return Err(Error::config(format!(
            "m = {m} must lie between the minority ({}) and majority ({}) sizes",
            minority.n_rows(),
            majority.n_rows()
        )));
    }

    let subset_indices = if majority.n_rows() > config.subset_target {
        cluster_subsample_with(
            majority.features(),
            config.stage1_clusters,
            config.subset_target,
            config.stage1_batch,
            config.stage1_max_iter,
            rng::derive_seed(seed, 10),
        )?
    } else {
        (0..majority.n_rows()).collect()
    };
    if m > subset_indices.len() {
        return Err(Error::config(format!(
            "m = {m} exceeds the stage-1 subset of {} rows",
            subset_indices.len()
        )));
    }
    let reduced = majority.features().select_rows(&subset_indices);
    let resolved = SupportPointConfig {
        m: Some(m),
        ..config.clone()
    };
    let mut support = optimize_support_points(&reduced, &resolved, rng::derive_seed(seed, 11))?;
    support.nearest_indices = map_to_nearest(&support.points, majority.features(), config.nearest)?;

    let kept = majority.select(&support.nearest_indices);
    let dataset = kept.concat(&minority)?.shuffled(rng::derive_seed(seed, 12));
    Ok(SupportPointOutcome {
        dataset,
        support,
        subset_indices,
        majority_size: majority.n_rows(),
        minority_size: minority.n_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Matrix {
        Matrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn identical_sets_have_zero_energy() {
        let x = Matrix::from_rows(&[[0.3, 1.0], [2.0, -1.0], [5.5, 0.1]]).unwrap();
        assert_eq!(energy_distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn hand_values_1d() {
        // X = {0, 2}, Z = {1}: 2/(2*1) * (1 + 1) - 4/4 - 0 = 1
        assert_eq!(
            energy_distance(&column(&[0.0, 2.0]), &column(&[1.0])).unwrap(),
            1.0
        );
        // X = {0}, Z = {5}: 2 * 5 = 10
        assert_eq!(
            energy_distance(&column(&[0.0]), &column(&[5.0])).unwrap(),
            10.0
        );
    }

    #[test]
    fn dimension_mismatch() {
        let x = Matrix::zeros(2, 2);
        let z = Matrix::zeros(1, 3);
        assert!(energy_distance(&x, &z).is_err());
        assert!(energy_gradient(&x, &z, 1e-10).is_err());
    }

    #[test]
    fn gradient_hand_value_1d() {
        // (2/2) * [(0.5+1)/1.5 + (0.5-1)/0.5] = 1 * (1 - 1) = 0
        let g = energy_gradient(&column(&[-1.0, 1.0]), &column(&[0.5]), 1e-10).unwrap();
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn coincident_point_contributes_zero() {
        let g = energy_gradient(&column(&[0.0, 2.0]), &column(&[0.0, 0.0]), 1e-10).unwrap();
        assert!(g.as_slice().iter().all(|v| v.is_finite()));
        // attraction only from x = 2: (2/(2*2)) * (0-2)/2 = -0.5
        assert_eq!(g.get(0, 0), -0.5);
    }

    #[test]
    fn full_sample_starts_at_zero() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 3.0], [2.0, 1.0], [4.0, 4.0]]).unwrap();
        let config = SupportPointConfig {
            m: Some(4),
            ..SupportPointConfig::default()
        };
        let set = optimize_support_points(&x, &config, 3).unwrap();
        assert_eq!(set.energy_trace, vec![0.0]);
        assert_eq!(set.iterations(), 0);
        assert_eq!(set.points, x);
    }

    #[test]
    fn m_above_rows_rejected() {
        let x = Matrix::zeros(3, 2);
        let config = SupportPointConfig {
            m: Some(4),
            ..SupportPointConfig::default()
        };
        assert!(optimize_support_points(&x, &config, 0).is_err());
    }

    #[test]
    fn trace_is_monotone_and_improves() {
        let rows: Vec<[f64; 2]> = (0..60)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin() * 3.0, (t * 0.11).cos() * 2.0 + t * 0.01]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let config = SupportPointConfig {
            m: Some(8),
            max_iter: 200,
            ..SupportPointConfig::default()
        };
        let set = optimize_support_points(&x, &config, 1).unwrap();
        for w in set.energy_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(set.final_energy < set.energy_trace[0]);
        assert_eq!(set.final_energy, *set.energy_trace.last().unwrap());
    }

    #[test]
    fn nearest_identity_mapping() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [10.0], [3.0]]).unwrap();
        let z = x.select_rows(&[3, 0]);
        assert_eq!(
            map_to_nearest(&z, &x, NearestMode::GreedyUnique).unwrap(),
            vec![3, 0]
        );
    }

    #[test]
    fn nearest_collision_resolved_greedily() {
        // X = {0, 1, 10}, Z = {0.4, 0.6}. Pair distances: (0.4,0)=0.4,
        // (0.6,1)=0.4, (0.4,1)=0.6, (0.6,0)=0.6. The tie at 0.4 goes to the
        // lower row, so z=0.4 takes row 0 and z=0.6 takes row 1.
        let x = column(&[0.0, 1.0, 10.0]);
        let z = column(&[0.4, 0.6]);
        let greedy = map_to_nearest(&z, &x, NearestMode::GreedyUnique).unwrap();
        assert_eq!(greedy, vec![0, 1]);
        // Brute force over every injective assignment: the greedy result is optimal here.
        let cost = |a: &[usize]| -> f64 {
            a.iter()
                .enumerate()
                .map(|(j, &i)| (z.get(j, 0) - x.get(i, 0)).abs())
                .sum()
        };
        let mut best = f64::INFINITY;
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    best = best.min(cost(&[a, b]));
                }
            }
        }
        assert!((cost(&greedy) - best).abs() < 1e-12);

        // Both points nearest to row 1: the closer one wins it, the other falls back.
        let z = column(&[0.9, 1.2]);
        assert_eq!(
            map_to_nearest(&z, &x, NearestMode::GreedyUnique).unwrap(),
            vec![1, 0]
        );
        assert_eq!(
            map_to_nearest(&z, &x, NearestMode::Plain).unwrap(),
            vec![1, 1]
        );
    }

    #[test]
    fn single_point_takes_global_nearest() {
        let x = column(&[5.0, -2.0, 7.5, 3.0]);
        assert_eq!(
            map_to_nearest(&column(&[3.4]), &x, NearestMode::GreedyUnique).unwrap(),
            vec![3]
        );
    }

    #[test]
    fn too_many_points_rejected() {
        let x = column(&[0.0]);
        assert!(map_to_nearest(&column(&[0.0, 1.0]), &x, NearestMode::GreedyUnique).is_err());
    }

    #[test]
    fn default_eta_scales_with_data() {
        let x = column(&[0.0, 1.0, 2.0]);
        // distances {1, 2, 1} → median 1
        assert!((default_eta(&x, 0) - 0.1).abs() < 1e-15);
        let scaled = column(&[0.0, 100.0, 200.0]);
        assert!((default_eta(&scaled, 0) - 10.0).abs() < 1e-12);
        assert_eq!(default_eta(&column(&[4.0, 4.0]), 0), 1.0);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SupportPointConfig {
                eta: Some(0.0),
                ..Default::default()
            },
            SupportPointConfig {
                epsilon: 0.0,
                ..Default::default()
            },
            SupportPointConfig {
                m: Some(6000),
                ..Default::default()
            },
            SupportPointConfig {
                m: Some(0),
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        assert!(SupportPointConfig::default().validate().is_ok());
    }
}

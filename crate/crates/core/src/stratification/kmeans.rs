//! Lloyd and mini-batch k-means with seeded k-means++ initialization.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::rng::{self, SeededRng};

/// Cluster labels for each point plus the within-cluster sum of squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub wcss: f64,
}

impl StrataAssignment {
    /// Builds an assignment from arbitrary labels, compacting the used ids
    /// to `0..k` while keeping their relative order.
    pub fn from_labels(labels: &[usize]) -> StrataAssignment {
        let max = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut remap = vec![usize::MAX; max];
        let mut k = 0;
        let mut sorted: Vec<usize> = labels.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for id in sorted {
            remap[id] = k;
            k += 1;
        }
        StrataAssignment {
            labels: labels.iter().map(|&l| remap[l]).collect(),
            k,
            wcss: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Point indices of each stratum, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    #[default]
    PlusPlus,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub k: usize,
    pub max_iter: usize,
    pub init: KMeansInit,
}

/// Full result of a k-means run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: StrataAssignment,
    pub centroids: Matrix,
    /// WCSS after every assignment step, starting with the initial one.
    pub wcss_trace: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd k-means with k-means++ seeding.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<StrataAssignment> {
    let options = KMeansOptions {
        k,
        max_iter,
        init: KMeansInit::PlusPlus,
    };
    Ok(kmeans_fit(points, &options, seed)?.assignment)
}

fn validate(points: &Matrix, k: usize, max_iter: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if k > points.rows() {
        return Err(Error::config(format!(
            "k = {k} exceeds the number of points ({})",
            points.rows()
        )));
    }
    if max_iter == 0 {
        return Err(Error::config("max_iter must be at least 1"));
    }
    Ok(())
}

pub fn kmeans_fit(points: &Matrix, options: &KMeansOptions, seed: u64) -> Result<KMeansFit> {
    validate(points, options.k, options.max_iter)?;
    let mut rng = rng::seeded(seed);
    let mut centroids = initial_centroids(points, options.k, options.init, &mut rng);
    let k = options.k;

    let (mut labels, mut dists) = assign(points, &centroids);
    let mut wcss_trace = vec![dists.iter().sum::<f64>()];
    let mut reseeded = vec![false; k];
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        let counts = update_means(points, &labels, &mut centroids);
        reseed_empty(points, &counts, &dists, &mut centroids, &mut reseeded);
        let (next_labels, next_dists) = assign(points, &centroids);
        wcss_trace.push(next_dists.iter().sum());
        let converged = next_labels == labels;
        labels = next_labels;
        dists = next_dists;
        if converged {
            break;
        }
    }

    let (assignment, centroids) = finalize(points, &labels);
    Ok(KMeansFit {
        assignment,
        centroids,
        wcss_trace,
        iterations,
    })
}

/// Mini-batch k-means: each iteration draws a seeded uniform batch and
/// moves every batch point's centroid toward it with step `1 / count`.
/// Final labels come from one full nearest-centroid pass.
pub fn minibatch_kmeans(
    points: &Matrix,
    k: usize,
    batch: usize,
    seed: u64,
    max_iter: usize,
) -> Result<StrataAssignment> {
    Ok(minibatch_kmeans_fit(points, k, batch, seed, max_iter, KMeansInit::PlusPlus)?.assignment)
}

pub fn minibatch_kmeans_fit(
    points: &Matrix,
    k: usize,
    batch: usize,
    seed: u64,
    max_iter: usize,
    init: KMeansInit,
) -> Result<KMeansFit> {
    validate(points, k, max_iter)?;
    let n = points.rows();
    if batch == 0 || batch > n {
        return Err(Error::config(format!(
            "batch size must lie in 1..={n}, got {batch}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut centroids = initial_centroids(points, k, init, &mut rng);
    let mut counts = vec![0usize; k];
    let dim = points.cols();

    for _ in 0..max_iter {
        let sample = index::sample(&mut rng, n, batch).into_vec();
        let nearest: Vec<usize> = sample
            .iter()
            .map(|&i| nearest_centroid(points.row(i), &centroids).0)
            .collect();
        for (&i, &c) in sample.iter().zip(&nearest) {
            counts[c] += 1;
            let step = 1.0 / counts[c] as f64;
            let x = points.row(i);
            let centroid = centroids.row_mut(c);
            for t in 0..dim {
                centroid[t] += step * (x[t] - centroid[t]);
            }
        }
    }

    let (mut labels, dists) = assign(points, &centroids);
    let mut wcss_trace = vec![dists.iter().sum::<f64>()];
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    if sizes.contains(&0) {
        let mut reseeded = vec![false; k];
        reseed_empty(points, &sizes, &dists, &mut centroids, &mut reseeded);
        let (l, d) = assign(points, &centroids);
        labels = l;
        wcss_trace.push(d.iter().sum());
    }

    let (assignment, centroids) = finalize(points, &labels);
    Ok(KMeansFit {
        assignment,
        centroids,
        wcss_trace,
        iterations: max_iter,
    })
}

fn initial_centroids(points: &Matrix, k: usize, init: KMeansInit, rng: &mut SeededRng) -> Matrix {
    let n = points.rows();
    let chosen: Vec<usize> = match init {
        KMeansInit::Uniform => {
            let mut idx = index::sample(rng, n, k).into_vec();
            idx.sort_unstable();
            idx
        }
        KMeansInit::PlusPlus => {
            let mut chosen = Vec::with_capacity(k);
            let mut taken = vec![false; n];
            let first = rng.random_range(0..n);
            chosen.push(first);
            taken[first] = true;
            let mut d2: Vec<f64> = points
                .iter_rows()
                .map(|r| squared_distance(r, points.row(first)))
                .collect();
            while chosen.len() < k {
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let target = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = None;
                    for (i, &w) in d2.iter().enumerate() {
                        acc += w;
                        if w > 0.0 && acc > target {
                            pick = Some(i);
                            break;
                        }
                    }
                    // rounding can leave target just past the last positive weight
                    pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
                } else {
                    // every point coincides with a chosen center
                    let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
                    free[rng.random_range(0..free.len())]
                };
                chosen.push(next);
                taken[next] = true;
                let c = points.row(next);
                for (i, r) in points.iter_rows().enumerate() {
                    let d = squared_distance(r, c);
                    if d < d2[i] {
                        d2[i] = d;
                    }
                }
            }
            chosen
        }
    };
    points.select_rows(&chosen)
}

#[inline]
fn nearest_centroid(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter_rows().enumerate() {
        let d = squared_distance(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Nearest centroid and squared distance for every point.
fn assign(points: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    let pairs: Vec<(usize, f64)> = (0..points.rows())
        .into_par_iter()
        .with_min_len(256)
        .map(|i| nearest_centroid(points.row(i), centroids))
        .collect();
    pairs.into_iter().unzip()
}

/// Moves centroids to the means of their members; returns member counts.
/// Empty clusters keep their previous centroid.
fn update_means(points: &Matrix, labels: &[usize], centroids: &mut Matrix) -> Vec<usize> {
    let k = centroids.rows();
    let dim = points.cols();
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
    counts
}

/// Moves each empty, not yet re-seeded cluster onto the point farthest
/// from its current centroid. Each cluster is re-seeded at most once.
fn reseed_empty(
    points: &Matrix,
    counts: &[usize],
    dists: &[f64],
    centroids: &mut Matrix,
    reseeded: &mut [bool],
) {
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
    let mut next = order.into_iter().filter(|&i| dists[i] > 0.0);
    for c in 0..counts.len() {
        if counts[c] == 0 && !reseeded[c] {
            reseeded[c] = true;
            if let Some(i) = next.next() {
                centroids.row_mut(c).copy_from_slice(points.row(i));
            }
        }
    }
}

/// Drops empty clusters, compacts ids, and recomputes means and WCSS.
fn finalize(points: &Matrix, labels: &[usize]) -> (StrataAssignment, Matrix) {
    let mut assignment = StrataAssignment::from_labels(labels);
    let mut centroids = Matrix::zeros(assignment.k, points.cols());
    update_means(points, &assignment.labels, &mut centroids);
    assignment.wcss = assignment
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(points.row(i), centroids.row(l)))
        .sum();
    (assignment, centroids)
}

/// Total sum of squared deviations from the column means.
pub fn total_sum_of_squares(points: &Matrix) -> f64 {
    let n = points.rows() as f64;
    (0..points.cols())
        .map(|j| {
            let col = points.column(j);
            let mean = col.iter().sum::<f64>() / n;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowReport {
    pub candidate_ks: Vec<usize>,
    pub wcss_curve: Vec<f64>,
    pub chosen_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElbowOptions {
    pub k_min: usize,
    pub k_max: usize,
    /// Seeded k-means runs per candidate k; the lowest WCSS is kept.
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for ElbowOptions {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 10,
            restarts: 3,
            max_iter: 100,
        }
    }
}

/// Picks the candidate with the largest discrete second difference
/// `w[k-1] - 2 w[k] + w[k+1]` over interior candidates; ties go to the
/// smaller k.
pub fn elbow_from_curve(candidate_ks: &[usize], wcss: &[f64]) -> Result<usize> {
    if candidate_ks.len() != wcss.len() {
        return Err(Error::DimensionMismatch {
            expected: candidate_ks.len(),
            actual: wcss.len(),
        });
    }
    if candidate_ks.len() < 3 {
        return Err(Error::config(
            "the elbow rule needs at least 3 candidate k values",
        ));
    }
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..wcss.len() - 1 {
        let curvature = wcss[i - 1] - 2.0 * wcss[i] + wcss[i + 1];
        if curvature > best.1 {
            best = (i, curvature);
        }
    }
    Ok(candidate_ks[best.0])
}

pub fn elbow_select(points: &Matrix, options: &ElbowOptions, seed: u64) -> Result<ElbowReport> {
    if options.k_min == 0 || options.k_min >= options.k_max {
        return Err(Error::config(format!(
            "elbow range {}..={} is invalid",
            options.k_min, options.k_max
        )));
    }
    if options.k_max - options.k_min < 2 {
        return Err(Error::config(
            "the elbow rule needs at least 3 candidate k values",
        ));
    }
    if options.k_max > points.rows() {
        return Err(Error::config(format!(
            "k_max = {} exceeds the number of points ({})",
            options.k_max,
            points.rows()
        )));
    }
    let candidate_ks: Vec<usize> = (options.k_min..=options.k_max).collect();
    let restarts = options.restarts.max(1);
    let mut wcss_curve = Vec::with_capacity(candidate_ks.len());
    for &k in &candidate_ks {
        let mut best = f64::INFINITY;
        for r in 0..restarts {
            let run_seed = rng::derive_seed(seed, (k * restarts + r) as u64);
            let opts = KMeansOptions {
                k,
                max_iter: options.max_iter,
                init: KMeansInit::PlusPlus,
            };
            best = best.min(kmeans_fit(points, &opts, run_seed)?.assignment.wcss);
        }
        wcss_curve.push(best);
    }
    let chosen_k = elbow_from_curve(&candidate_ks, &wcss_curve)?;
    Ok(ElbowReport {
        candidate_ks,
        wcss_curve,
        chosen_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = rng::seeded(seed);
        let noise = Normal::new(0.0, spread).unwrap();
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                rows.push([
                    center[0] + noise.sample(&mut rng),
                    center[1] + noise.sample(&mut rng),
                ]);
                truth.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), truth)
    }

    /// Brute-force oracle: label every point by its nearest true center.
    fn nearest_center_labels(points: &Matrix, centers: &[[f64; 2]]) -> Vec<usize> {
        points
            .iter_rows()
            .map(|r| {
                (0..centers.len())
                    .min_by(|&a, &b| {
                        squared_distance(r, &centers[a])
                            .total_cmp(&squared_distance(r, &centers[b]))
                    })
                    .unwrap()
            })
            .collect()
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        let mut map = std::collections::HashMap::new();
        a.iter()
            .zip(b)
            .all(|(x, y)| *map.entry(*x).or_insert(*y) == *y)
            && a.iter().collect::<std::collections::HashSet<_>>().len()
                == b.iter().collect::<std::collections::HashSet<_>>().len()
    }

    #[test]
    fn single_cluster_wcss_is_total_ss() {
        let (points, _) = blobs(&[[0.0, 0.0]], 40, 1.0, 3);
        let a = kmeans(&points, 1, 0, 10).unwrap();
        assert!(a.labels.iter().all(|&l| l == 0));
        let tss = total_sum_of_squares(&points);
        assert!((a.wcss - tss).abs() <= 1e-9 * tss);
    }

    #[test]
    fn k_equals_n_has_zero_wcss() {
        let (points, _) = blobs(&[[0.0, 0.0]], 12, 1.0, 4);
        let a = kmeans(&points, 12, 9, 50).unwrap();
        assert_eq!(a.k, 12);
        assert_eq!(a.wcss, 0.0);
    }

    #[test]
    fn k_above_n_rejected() {
        let (points, _) = blobs(&[[0.0, 0.0]], 3, 1.0, 4);
        assert!(kmeans(&points, 4, 0, 10).is_err());
        assert!(minibatch_kmeans(&points, 4, 2, 0, 10).is_err());
        assert!(minibatch_kmeans(&points, 2, 4, 0, 10).is_err());
    }

    #[test]
    fn separated_blobs_recovered() {
        let centers = [[0.0, 0.0], [50.0, 50.0]];
        for seed in 0..10 {
            let (points, truth) = blobs(&centers, 30, 1.0, seed);
            let oracle = nearest_center_labels(&points, &centers);
            assert_eq!(oracle, truth);
            let a = kmeans(&points, 2, seed, 100).unwrap();
            assert!(same_partition(&a.labels, &oracle), "seed {seed}");
            let b = minibatch_kmeans(&points, 2, 32, seed, 50).unwrap();
            assert!(same_partition(&b.labels, &oracle), "seed {seed}");
        }
    }

    #[test]
    fn wcss_non_increasing_per_iteration() {
        let centers = [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0]];
        for seed in 0..20 {
            let (points, _) = blobs(&centers, 25, 1.2, seed);
            for init in [KMeansInit::PlusPlus, KMeansInit::Uniform] {
                let opts = KMeansOptions {
                    k: 5,
                    max_iter: 100,
                    init,
                };
                let fit = kmeans_fit(&points, &opts, seed).unwrap();
                for w in fit.wcss_trace.windows(2) {
                    assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", fit.wcss_trace);
                }
                assert!(fit.assignment.wcss <= *fit.wcss_trace.last().unwrap() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (points, _) = blobs(&[[0.0, 0.0], [4.0, 1.0]], 50, 1.5, 8);
        assert_eq!(
            kmeans(&points, 3, 5, 100).unwrap(),
            kmeans(&points, 3, 5, 100).unwrap()
        );
        assert_eq!(
            minibatch_kmeans(&points, 3, 16, 5, 20).unwrap(),
            minibatch_kmeans(&points, 3, 16, 5, 20).unwrap()
        );
    }

    #[test]
    fn duplicate_points_drop_clusters() {
        let points = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        let a = kmeans(&points, 3, 0, 10).unwrap();
        assert_eq!(a.k, 2);
        assert_eq!(a.sizes().iter().sum::<usize>(), 4);
        assert!(a.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn full_batch_minibatch_matches_lloyd_fixed_point() {
        let centers = [[0.0, 0.0], [30.0, 0.0], [0.0, 30.0]];
        let (points, _) = blobs(&centers, 20, 1.0, 11);
        let n = points.rows();
        let mb = minibatch_kmeans(&points, 3, n, 2, 30).unwrap();
        let lloyd = kmeans(&points, 3, 2, 100).unwrap();
        assert!(same_partition(&mb.labels, &lloyd.labels));
        assert!((mb.wcss - lloyd.wcss).abs() <= 1e-9 * lloyd.wcss);
    }

    #[test]
    fn elbow_linear_curve_ties_to_smallest_interior() {
        let ks = [2, 3, 4, 5];
        assert_eq!(elbow_from_curve(&ks, &[10.0, 8.0, 6.0, 4.0]).unwrap(), 3);
        assert!(elbow_from_curve(&[2, 3], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn elbow_range_validation() {
        let (points, _) = blobs(&[[0.0, 0.0]], 20, 1.0, 1);
        let narrow = ElbowOptions {
            k_min: 2,
            k_max: 3,
            ..ElbowOptions::default()
        };
        assert!(elbow_select(&points, &narrow, 0).is_err());
    }

    #[test]
    fn elbow_on_single_blob_follows_the_rule() {
        let (points, _) = blobs(&[[0.0, 0.0]], 200, 1.0, 21);
        let options = ElbowOptions {
            k_min: 2,
            k_max: 6,
            restarts: 2,
            max_iter: 100,
        };
        let report = elbow_select(&points, &options, 4).unwrap();
        // Hand application of the rule to the reported curve.
        let w = &report.wcss_curve;
        let curv: Vec<f64> = (1..w.len() - 1)
            .map(|i| w[i - 1] - 2.0 * w[i] + w[i + 1])
            .collect();
        let mut best = 0;
        for i in 1..curv.len() {
            if curv[i] > curv[best] {
                best = i;
            }
        }
        assert_eq!(report.chosen_k, report.candidate_ks[best + 1]);
        assert!(report.candidate_ks.contains(&report.chosen_k));
    }

    #[test]
    fn elbow_finds_four_blobs() {
        // square layout: every merge of neighbours costs the same
        let centers = [[0.0, 0.0], [20.0, 0.0], [0.0, 20.0], [20.0, 20.0]];
        let (points, _) = blobs(&centers, 40, 1.0, 5);
        let options = ElbowOptions {
            k_min: 2,
            k_max: 8,
            ..ElbowOptions::default()
        };
        assert_eq!(elbow_select(&points, &options, 1).unwrap().chosen_k, 4);
    }
}

//! Seeded synthetic data: imbalanced two-class Gaussian mixtures and
//! equidistant cluster layouts for clustering checks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::stratification::largest_remainder;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    /// Fraction of rows in the majority class, in (0.5, 1).
    pub imbalance: f64,
    /// Mixture components per class.
    pub clusters: usize,
    /// Expected distance between majority component centers, in units of
    /// the within-component standard deviation.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 10,
            imbalance: 0.9,
            clusters: 4,
            separation: 3.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.clusters == 0 {
            return Err(Error::config("d and clusters must be positive"));
        }
        if !(self.imbalance > 0.5 && self.imbalance < 1.0) {
            return Err(Error::config(format!(
                "imbalance must lie in (0.5, 1), got {}",
                self.imbalance
            )));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::config("separation must be a nonnegative number"));
        }
        let (major, minor) = self.class_sizes();
        if minor < 2 || major < 2 {
            return Err(Error::config(format!(
                "n = {} gives class sizes {major}/{minor}; both need at least 2 rows",
                self.n
            )));
        }
        Ok(())
    }

    pub fn class_sizes(&self) -> (usize, usize) {
        let major = (self.n as f64 * self.imbalance).round() as usize;
        let major = major.min(self.n);
        (major, self.n - major)
    }
}

fn random_direction(r: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Two-class Gaussian mixture with overlapping components.
///
/// Majority centers have i.i.d. `N(0, separation² / (2d))` coordinates, so
/// two centers lie `separation` apart on average. Majority components get
/// geometric weights `1, 1/2, 1/4, ...`. Each minority component sits
/// `separation / 2` from a majority center in a random direction, with
/// equal weights. Every component has unit variance per coordinate. Class 0
/// is the majority; rows are shuffled.
pub fn gen_synth(config: &SynthConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let mut r = rng::seeded(config.seed);
    let (d, g) = (config.d, config.clusters);
    let spread = Normal::new(0.0, config.separation / (2.0 * d as f64).sqrt())
        .map_err(|e| Error::config(e.to_string()))?;
    let major_centers: Vec<Vec<f64>> = (0..g)
        .map(|_| (0..d).map(|_| spread.sample(&mut r)).collect())
        .collect();
    let minor_centers: Vec<Vec<f64>> = major_centers
        .iter()
        .map(|c| {
            let dir = random_direction(&mut r, d);
            c.iter()
                .zip(dir)
                .map(|(x, u)| x + 0.5 * config.separation * u)
                .collect()
        })
        .collect();

    let (n_major, n_minor) = config.class_sizes();
    let geometric: Vec<f64> = (0..g).map(|c| 0.5f64.powi(c as i32)).collect();
    let major_counts = largest_remainder(&geometric, n_major);
    let minor_counts = largest_remainder(&vec![1.0; g], n_minor);

    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(config.n);
    for (label, centers, counts) in [
        (0, &major_centers, &major_counts),
        (1, &minor_centers, &minor_counts),
    ] {
        for (center, &count) in centers.iter().zip(counts) {
            for _ in 0..count {
                let x = center
                    .iter()
                    .map(|c| c + r.sample::<f64, _>(StandardNormal))
                    .collect();
                rows.push((x, label));
            }
        }
    }
    rows.shuffle(&mut r);

    let mut data = Vec::with_capacity(config.n * d);
    let mut labels = Vec::with_capacity(config.n);
    for (x, label) in rows {
        data.extend(x);
        labels.push(label);
    }
    let names = (0..d).map(|i| format!("x{i}")).collect();
    LabeledDataset::new(Matrix::new(config.n, d, data)?, labels, names)
}

/// `g` unit-variance Gaussian clusters of `per` points each in `d`
/// dimensions, every pair of centers exactly `separation` apart. Needs
/// `d ≥ g`: center `c` is `separation / √2 · e_c`. Returns the points and
/// the true cluster of each.
pub fn equidistant_clusters(
    g: usize,
    per: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<(Matrix, Vec<usize>)> {
    if g == 0 || per == 0 {
        return Err(Error::config("g and per must be positive"));
    }
    if d < g {
        return Err(Error::config(format!(
            "{g} equidistant centers need d ≥ {g}, got {d}"
        )));
    }
    let mut r = rng::seeded(seed);
    let scale = separation / std::f64::consts::SQRT_2;
    let mut data = Vec::with_capacity(g * per * d);
    let mut truth = Vec::with_capacity(g * per);
    for c in 0..g {
        for _ in 0..per {
            for t in 0..d {
                let center = if t == c { scale } else { 0.0 };
                data.push(center + r.sample::<f64, _>(StandardNormal));
            }
            truth.push(c);
        }
    }
    Ok((Matrix::new(g * per, d, data)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::euclidean;

    #[test]
    fn class_sizes_follow_imbalance() {
        let data = gen_synth(&SynthConfig::default()).unwrap();
        assert_eq!(data.n_rows(), 2000);
        assert_eq!(data.n_features(), 10);
        assert_eq!(data.class_counts()[&0], 1800);
        assert_eq!(data.class_counts()[&1], 200);
    }

    #[test]
    fn deterministic_per_seed() {
        let c = SynthConfig {
            n: 200,
            ..Default::default()
        };
        assert_eq!(gen_synth(&c).unwrap(), gen_synth(&c).unwrap());
        let other = SynthConfig { seed: 1, ..c };
        assert_ne!(gen_synth(&c).unwrap(), gen_synth(&other).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        for c in [
            SynthConfig {
                imbalance: 0.5,
                ..Default::default()
            },
            SynthConfig {
                n: 10,
                imbalance: 0.95,
                ..Default::default()
            },
            SynthConfig {
                d: 0,
                ..Default::default()
            },
            SynthConfig {
                separation: f64::NAN,
                ..Default::default()
            },
        ] {
            assert!(gen_synth(&c).is_err(), "{c:?}");
        }
    }

    #[test]
    fn equidistant_centers() {
        let (points, truth) = equidistant_clusters(4, 500, 6, 10.0, 3).unwrap();
        assert_eq!(points.rows(), 2000);
        let mean = |c: usize| -> Vec<f64> {
            let rows: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == c).collect();
            (0..6)
                .map(|t| rows.iter().map(|&i| points.get(i, t)).sum::<f64>() / rows.len() as f64)
                .collect()
        };
        for a in 0..4 {
            for b in (a + 1)..4 {
                assert!((euclidean(&mean(a), &mean(b)) - 10.0).abs() < 0.3);
            }
        }
        assert!(equidistant_clusters(5, 10, 4, 10.0, 0).is_err());
    }
}

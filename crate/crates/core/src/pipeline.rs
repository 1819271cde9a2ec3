//! End-to-end undersampling of a binary dataset: the random baseline, MI
//! stratified sampling, and support points. Every path keeps all minority
//! rows, reduces the majority to the minority size (or `m` support points),
//! merges, and shuffles with the run seed.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_by_class, LabeledDataset};
use crate::error::{Error, Result};
use crate::mutual_information::{
    default_bins, make_binning, mi_matrix, mi_to_dissimilarity, BinningSpec, BinningStrategy,
    DissimilarityMatrix, MiMatrixOptions, DEFAULT_MEMORY_BUDGET,
};
use crate::rng;
use crate::stratification::{
    allocate, elbow_select, kmeans_fit, stratified_srs_rounds, stratum_stats, AllocationPlan,
    AllocationStrategy, ElbowOptions, ElbowReport, KMeansInit, KMeansOptions, StrataAssignment,
};
use crate::support_points::{undersample_support_points, SupportPointConfig, SupportPointSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Mi,
    SupportPoints,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Random, Method::Mi, Method::SupportPoints];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Mi => "mi",
            Method::SupportPoints => "support_points",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Method::Random),
            "mi" => Ok(Method::Mi),
            "support_points" | "support-points" => Ok(Method::SupportPoints),
            other => Err(Error::config(format!(
                "unknown method {other:?}; expected random, mi or support_points"
            ))),
        }
    }
}

/// Stratum costs for optimal allocation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    /// `c_h = N_h`: larger strata cost more per draw.
    #[default]
    StratumSize,
    Uniform,
    /// One cost per stratum; the length must equal the chosen k.
    Custom(Vec<f64>),
}

impl CostModel {
    pub fn costs(&self, sizes: &[usize]) -> Result<Vec<f64>> {
        match self {
            CostModel::StratumSize => Ok(sizes.iter().map(|&s| s as f64).collect()),
            CostModel::Uniform => Ok(vec![1.0; sizes.len()]),
            CostModel::Custom(c) if c.len() == sizes.len() => Ok(c.clone()),
            CostModel::Custom(c) => Err(Error::config(format!(
                "{} custom costs given for {} strata",
                c.len(),
                sizes.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiConfig {
    /// `None` means `max(2, floor(sqrt(d)))`.
    pub n_bins: Option<usize>,
    pub binning: BinningStrategy,
    pub k_min: usize,
    pub k_max: usize,
    /// k-means runs per candidate k during elbow selection. The rows being
    /// clustered are n-dimensional, so each run costs O(n² k) per iteration.
    pub elbow_restarts: usize,
    pub kmeans_max_iter: usize,
    pub allocation: AllocationStrategy,
    pub cost_model: CostModel,
    /// Largest pairwise matrix, in bytes, the MI path may allocate.
    pub memory_budget: usize,
}

impl Default for MiConfig {
    fn default() -> Self {
        Self {
            n_bins: None,
            binning: BinningStrategy::Quantile,
            k_min: 2,
            k_max: 10,
            elbow_restarts: 1,
            kmeans_max_iter: 100,
            allocation: AllocationStrategy::Neyman,
            cost_model: CostModel::StratumSize,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

impl MiConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.n_bins {
            if b < 2 {
                return Err(Error::config(format!("n_bins must be at least 2, got {b}")));
            }
        }
        if self.k_min == 0 || self.k_max < self.k_min + 2 {
            return Err(Error::config(format!(
                "k range {}..={} needs at least 3 candidates",
                self.k_min, self.k_max
            )));
        }
        if self.kmeans_max_iter == 0 {
            return Err(Error::config("kmeans_max_iter must be positive"));
        }
        Ok(())
    }
}

/// Seed-independent part of the MI path: binning and the dissimilarity
/// matrix over majority rows.
#[derive(Debug, Clone)]
pub struct MiPrepared {
    pub binning: BinningSpec,
    pub dissimilarity: DissimilarityMatrix,
    pub pairs_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub binning: BinningSpec,
    pub pairs_evaluated: usize,
    /// `None` when every dissimilarity is zero and one stratum is used.
    pub elbow: Option<ElbowReport>,
    pub strata_sizes: Vec<usize>,
    pub plan: AllocationPlan,
    /// Quotas drawn per round; more than one entry means refill happened.
    pub round_quotas: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPointReport {
    pub config: SupportPointConfig,
    pub m: usize,
    pub eta: f64,
    pub iterations: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Size of the set the optimizer saw (below the majority size when the
    /// cluster-based subsample ran).
    pub optimized_rows: usize,
    pub nearest_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodReport {
    Random,
    Mi(MiReport),
    SupportPoints(SupportPointReport),
}

#[derive(Debug, Clone)]
pub struct UndersampleOutcome {
    /// Balanced, shuffled dataset.
    pub dataset: LabeledDataset,
    /// Kept majority rows, as indices into the majority partition.
    pub majority_indices: Vec<usize>,
    pub majority_size: usize,
    pub minority_size: usize,
    pub report: MethodReport,
    /// Optimized points and energy trace; support-points runs only.
    pub support: Option<SupportPointSet>,
}

/// Method-specific settings for one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfigs {
    pub mi: MiConfig,
    pub support_points: SupportPointConfig,
}

pub fn undersample(
    data: &LabeledDataset,
    method: Method,
    configs: &MethodConfigs,
    seed: u64,
) -> Result<UndersampleOutcome> {
    match method {
        Method::Random => undersample_random(data, seed),
        Method::Mi => undersample_mi(data, &configs.mi, seed),
        Method::SupportPoints => undersample_sp(data, &configs.support_points, seed),
    }
}

fn merge(
    majority: &LabeledDataset,
    minority: &LabeledDataset,
    kept: &[usize],
    seed: u64,
) -> Result<LabeledDataset> {
    Ok(majority
        .select(kept)
        .concat(minority)?
        .shuffled(rng::derive_seed(seed, 0x5348_5546)))
}

/// Seeded SRS of the majority down to the minority size.
pub fn undersample_random(data: &LabeledDataset, seed: u64) -> Result<UndersampleOutcome> {
    let (majority, minority) = split_by_class(data)?;
    let mut kept =
        index::sample(&mut rng::seeded(seed), majority.n_rows(), minority.n_rows()).into_vec();
    kept.sort_unstable();
    Ok(UndersampleOutcome {
        dataset: merge(&majority, &minority, &kept, seed)?,
        majority_indices: kept,
        majority_size: majority.n_rows(),
        minority_size: minority.n_rows(),
        report: MethodReport::Random,
        support: None,
    })
}

/// Binning over the majority rows and the max-minus-MI dissimilarity.
pub fn prepare_mi(majority: &LabeledDataset, config: &MiConfig) -> Result<MiPrepared> {
    config.validate()?;
    let n_bins = config
        .n_bins
        .unwrap_or_else(|| default_bins(majority.n_features()));
    let binning = make_binning(majority, n_bins, config.binning)?;
    let mi = mi_matrix(
        majority,
        &binning,
        MiMatrixOptions {
            parallel: true,
            memory_budget: config.memory_budget,
        },
    )?;
    let dissimilarity = mi_to_dissimilarity(&mi)?;
    Ok(MiPrepared {
        binning,
        pairs_evaluated: mi.pairs_evaluated(),
        dissimilarity,
    })
}

/// MI stratified undersampling: dissimilarity rows → elbow → k-means
/// strata → allocation → stratified SRS to the minority size.
pub fn undersample_mi(
    data: &LabeledDataset,
    config: &MiConfig,
    seed: u64,
) -> Result<UndersampleOutcome> {
    let (majority, _) = split_by_class(data)?;
    let prepared = prepare_mi(&majority, config)?;
    undersample_mi_prepared(data, &prepared, config, seed)
}

pub fn undersample_mi_prepared(
    data: &LabeledDataset,
    prepared: &MiPrepared,
    config: &MiConfig,
    seed: u64,
) -> Result<UndersampleOutcome> {
    config.validate()?;
    let (majority, minority) = split_by_class(data)?;
    if prepared.dissimilarity.n() != majority.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: majority.n_rows(),
            actual: prepared.dissimilarity.n(),
        });
    }
    let points = prepared.dissimilarity.values();
    let degenerate = points.as_slice().iter().all(|&v| v == 0.0);
    let k_max = config.k_max.min(majority.n_rows());
    let (elbow, assignment) = if degenerate || k_max < config.k_min + 2 {
        (
            None,
            StrataAssignment::from_labels(&vec![0; majority.n_rows()]),
        )
    } else {
        let elbow = elbow_select(
            points,
            &ElbowOptions {
                k_min: config.k_min,
                k_max,
                restarts: config.elbow_restarts,
                max_iter: config.kmeans_max_iter,
            },
            rng::derive_seed(seed, 1),
        )?;
        let fit = kmeans_fit(
            points,
            &KMeansOptions {
                k: elbow.chosen_k,
                max_iter: config.kmeans_max_iter,
                init: KMeansInit::PlusPlus,
            },
            rng::derive_seed(seed, 2),
        )?;
        (Some(elbow), fit.assignment)
    };

    let (sizes, stds) = stratum_stats(majority.features(), &assignment)?;
    let costs = config.cost_model.costs(&sizes)?;
    let target = minority.n_rows();
    let plan = allocate(config.allocation, &sizes, &stds, &costs, target)?;
    let sample = stratified_srs_rounds(&assignment, &plan, target, rng::derive_seed(seed, 3))?;
    let mut kept = sample.indices;
    kept.sort_unstable();

    Ok(UndersampleOutcome {
        dataset: merge(&majority, &minority, &kept, seed)?,
        majority_indices: kept,
        majority_size: majority.n_rows(),
        minority_size: minority.n_rows(),
        report: MethodReport::Mi(MiReport {
            binning: prepared.binning.clone(),
            pairs_evaluated: prepared.pairs_evaluated,
            elbow,
            strata_sizes: sizes,
            plan,
            round_quotas: sample.round_quotas,
        }),
        support: None,
    })
}

/// Support-points undersampling wrapped into the common outcome type.
pub fn undersample_sp(
    data: &LabeledDataset,
    config: &SupportPointConfig,
    seed: u64,
) -> Result<UndersampleOutcome> {
    let out = undersample_support_points(data, config, seed)?;
    let support = out.support;
    let report = SupportPointReport {
        config: config.clone(),
        m: support.points.rows(),
        eta: support.eta,
        iterations: support.iterations(),
        initial_energy: support.energy_trace[0],
        final_energy: support.final_energy,
        optimized_rows: out.subset_indices.len(),
        nearest_indices: support.nearest_indices.clone(),
    };
    let mut kept = support.nearest_indices.clone();
    kept.sort_unstable();
    Ok(UndersampleOutcome {
        dataset: out.dataset,
        majority_indices: kept,
        majority_size: out.majority_size,
        minority_size: out.minority_size,
        report: MethodReport::SupportPoints(report),
        support: Some(support),
    })
}

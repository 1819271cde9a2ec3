//! Strata construction and stratified sampling: k-means clustering with an
//! elbow-selected k, quota allocation, and stratified SRS with refill.

mod allocation;
mod kmeans;
mod sampling;

pub use allocation::{
    allocate, capped_allocation, largest_remainder, neyman_allocation, optimal_allocation,
    proportional_allocation, AllocationPlan, AllocationStrategy,
};
pub use kmeans::{
    elbow_from_curve, elbow_select, kmeans, kmeans_fit, minibatch_kmeans, minibatch_kmeans_fit,
    total_sum_of_squares, ElbowOptions, ElbowReport, KMeansFit, KMeansInit, KMeansOptions,
    StrataAssignment,
};
pub use sampling::{stratified_srs, stratified_srs_rounds, stratum_stats, StratifiedSample};

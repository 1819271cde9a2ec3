//! Per-stratum statistics and stratified simple random sampling with refill.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::allocation::{allocate, AllocationPlan};
use super::kmeans::StrataAssignment;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Stratum sizes `N_h` and pooled spreads `sigma_h`.
///
/// `sigma_h` is the square root of the mean, over features, of the
/// within-stratum population variance. Singleton strata get 0.
pub fn stratum_stats(
    features: &Matrix,
    assignment: &StrataAssignment,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if assignment.len() != features.rows() {
        return Err(Error::DimensionMismatch {
            expected: features.rows(),
            actual: assignment.len(),
        });
    }
    let d = features.cols();
    let members = assignment.members();
    let mut sizes = Vec::with_capacity(members.len());
    let mut stds = Vec::with_capacity(members.len());
    for rows in &members {
        sizes.push(rows.len());
        if rows.len() < 2 || d == 0 {
            stds.push(0.0);
            continue;
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, x) in mean.iter_mut().zip(features.row(r)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((v, x), m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let pooled = var.iter().map(|v| v / n).sum::<f64>() / d as f64;
        stds.push(pooled.sqrt());
    }
    Ok((sizes, stds))
}

/// Result of [`stratified_srs_rounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSample {
    /// Selected point indices, unique, in draw order.
    pub indices: Vec<usize>,
    /// Quotas used in each round; round 0 is the supplied plan.
    pub round_quotas: Vec<Vec<usize>>,
}

/// Draws exactly `target` distinct indices; see [`stratified_srs_rounds`].
pub fn stratified_srs(
    assignment: &StrataAssignment,
    plan: &AllocationPlan,
    target: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    Ok(stratified_srs_rounds(assignment, plan, target, seed)?.indices)
}

/// Stratified SRS without replacement.
///
/// The first round draws `min(n_h, remaining_h)` from every stratum. While
/// fewer than `target` points have been drawn, the plan's strategy is
/// re-applied to the strata that still hold points, for the shortfall, and
/// another round is drawn. Each refill round draws at least one point.
pub fn stratified_srs_rounds(
    assignment: &StrataAssignment,
    plan: &AllocationPlan,
    target: usize,
    seed: u64,
) -> Result<StratifiedSample> {
    let population = assignment.len();
    if target > population {
        return Err(Error::data(format!(
            "target {target} exceeds the {population} points available"
        )));
    }
    let mut pools = assignment.members();
    if plan.quotas.len() != pools.len() {
        return Err(Error::DimensionMismatch {
            expected: pools.len(),
            actual: plan.quotas.len(),
        });
    }
    let sizes: Vec<usize> = pools.iter().map(Vec::len).collect();
    if plan.stratum_sizes != sizes {
        return Err(Error::data("allocation plan does not match the strata"));
    }
    let planned: usize = plan.quotas.iter().sum();
    if planned > target {
        return Err(Error::data(format!(
            "plan allocates {planned} points but the target is {target}"
        )));
    }

    let mut rng = rng::seeded(seed);
    let mut indices = Vec::with_capacity(target);
    let mut quotas = plan.quotas.clone();
    let mut round_quotas = Vec::new();
    loop {
        round_quotas.push(quotas.clone());
        for (pool, &quota) in pools.iter_mut().zip(&quotas) {
            let take = quota.min(pool.len());
            if take == 0 {
                continue;
            }
            let mut picked = vec![false; pool.len()];
            for pos in index::sample(&mut rng, pool.len(), take) {
                picked[pos] = true;
                indices.push(pool[pos]);
            }
            let mut it = picked.iter();
            pool.retain(|_| !*it.next().unwrap());
        }
        let shortfall = target - indices.len();
        if shortfall == 0 {
            break;
        }
        // Re-plan over the strata that still hold points.
        let open: Vec<usize> = (0..pools.len()).filter(|&h| !pools[h].is_empty()).collect();
        let open_sizes: Vec<usize> = open.iter().map(|&h| pools[h].len()).collect();
        let open_stds: Vec<f64> = open.iter().map(|&h| plan.stratum_stds[h]).collect();
        let open_costs: Vec<f64> = open.iter().map(|&h| plan.stratum_costs[h]).collect();
        let refill = allocate(
            plan.strategy,
            &open_sizes,
            &open_stds,
            &open_costs,
            shortfall,
        )?;
        quotas = vec![0; pools.len()];
        for (&h, &q) in open.iter().zip(&refill.quotas) {
            quotas[h] = q;
        }
    }
    Ok(StratifiedSample {
        indices,
        round_quotas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stratification::allocation::{neyman_allocation, proportional_allocation};
    use std::collections::HashSet;

    fn strata(sizes: &[usize]) -> StrataAssignment {
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(h, &s)| std::iter::repeat(h).take(s))
            .collect();
        StrataAssignment::from_labels(&labels)
    }

    #[test]
    fn identical_rows_have_zero_spread() {
        let features = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        let (n, s) = stratum_stats(&features, &strata(&[3])).unwrap();
        assert_eq!(n, vec![3]);
        assert_eq!(s, vec![0.0]);
    }

    #[test]
    fn pooled_spread_by_hand() {
        // per-feature population variance (1, 1) → sigma = 1
        let features = Matrix::from_rows(&[[0.0, 0.0], [2.0, 2.0], [7.0, 7.0]]).unwrap();
        let (n, s) = stratum_stats(&features, &strata(&[2, 1])).unwrap();
        assert_eq!(n, vec![2, 1]);
        assert_eq!(s, vec![1.0, 0.0]);
    }

    #[test]
    fn single_stratum_is_global_pooled_std() {
        let features =
            Matrix::from_rows(&[[0.0, 10.0], [1.0, 30.0], [5.0, 20.0], [2.0, 0.0]]).unwrap();
        let (_, s) = stratum_stats(&features, &strata(&[4])).unwrap();
        let var = |col: Vec<f64>| {
            let m = col.iter().sum::<f64>() / 4.0;
            col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4.0
        };
        let expected = ((var(features.column(0)) + var(features.column(1))) / 2.0).sqrt();
        assert!((s[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn full_target_takes_everything() {
        let a = strata(&[4, 6, 3]);
        let plan = proportional_allocation(&[4, 6, 3], 13).unwrap();
        let mut idx = stratified_srs(&a, &plan, 13, 0).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..13).collect::<Vec<_>>());
    }

    #[test]
    fn refill_after_exhaustion() {
        // Simulated by hand: a 35-point first round exhausts the three
        // 5-point strata; the 46-point shortfall can only come from the
        // 85-point stratum.
        let a = strata(&[5, 5, 5, 85]);
        let mut plan = proportional_allocation(&[5, 5, 5, 85], 35).unwrap();
        plan.quotas = vec![5, 5, 5, 20];
        let sample = stratified_srs_rounds(&a, &plan, 81, 3).unwrap();
        assert_eq!(sample.indices.len(), 81);
        assert_eq!(
            sample.round_quotas,
            vec![vec![5, 5, 5, 20], vec![0, 0, 0, 46]]
        );
        let unique: HashSet<_> = sample.indices.iter().collect();
        assert_eq!(unique.len(), 81);
        assert!((0..15).all(|i| unique.contains(&i)));
    }

    #[test]
    fn deterministic() {
        let a = strata(&[5, 5, 5, 85]);
        let plan = neyman_allocation(&[5, 5, 5, 85], &[1.0, 2.0, 0.5, 1.0], 81).unwrap();
        assert_eq!(
            stratified_srs(&a, &plan, 81, 9).unwrap(),
            stratified_srs(&a, &plan, 81, 9).unwrap()
        );
        assert_ne!(
            stratified_srs(&a, &plan, 81, 9).unwrap(),
            stratified_srs(&a, &plan, 81, 10).unwrap()
        );
    }

    #[test]
    fn target_above_population_rejected() {
        let a = strata(&[2, 2]);
        let plan = proportional_allocation(&[2, 2], 4).unwrap();
        assert!(stratified_srs(&a, &plan, 5, 0).is_err());
    }

    #[test]
    fn mismatched_plan_rejected() {
        let a = strata(&[2, 2]);
        let plan = proportional_allocation(&[3, 1], 2).unwrap();
        assert!(stratified_srs(&a, &plan, 2, 0).is_err());
    }
}

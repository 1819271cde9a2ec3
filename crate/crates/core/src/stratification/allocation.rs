//! Stratum quota allocation: proportional, Neyman, and cost-weighted
//! optimal allocation, integerized by largest remainder with per-stratum
//! capacity caps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationStrategy {
    Neyman,
    Optimal,
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub stratum_sizes: Vec<usize>,
    pub stratum_stds: Vec<f64>,
    pub stratum_costs: Vec<f64>,
    pub quotas: Vec<usize>,
    pub total: usize,
    pub strategy: AllocationStrategy,
}

/// Splits `n` units proportionally to `weights` with the largest-remainder
/// rule: floor every share, then hand the leftover units to the largest
/// fractional parts (ties to the lower index). Weights must not all be zero.
pub fn largest_remainder(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0);
    let raw: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut quotas: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    // rounding in `raw` can overshoot by a unit; take it back from the smallest fractions
    for &i in order.iter().rev() {
        if assigned <= n {
            break;
        }
        if quotas[i] > 0 {
            quotas[i] -= 1;
            assigned -= 1;
        }
    }
    for &i in order.iter().cycle() {
        if assigned >= n {
            break;
        }
        if weights[i] > 0.0 {
            quotas[i] += 1;
            assigned += 1;
        }
    }
    quotas
}

/// Largest-remainder allocation of `n` with `quota_h <= caps_h`. Strata
/// that would overflow are pinned at their cap and the excess is
/// re-allocated by the same rule over the rest. When the remaining strata
/// all have zero weight, they share the excess in proportion to capacity.
pub fn capped_allocation(weights: &[f64], caps: &[usize], n: usize) -> Result<Vec<usize>> {
    if weights.len() != caps.len() {
        return Err(Error::DimensionMismatch {
            expected: caps.len(),
            actual: weights.len(),
        });
    }
    let capacity: usize = caps.iter().sum();
    if n > capacity {
        return Err(Error::data(format!(
            "cannot allocate {n} units over strata holding {capacity}"
        )));
    }
    let h = weights.len();
    let mut quotas = vec![0usize; h];
    let mut pinned = vec![false; h];
    let mut remaining = n;
    while remaining > 0 {
        let active: Vec<usize> = (0..h).filter(|&i| !pinned[i] && caps[i] > 0).collect();
        let mut w: Vec<f64> = active.iter().map(|&i| weights[i]).collect();
        if w.iter().sum::<f64>() <= 0.0 {
            w = active.iter().map(|&i| caps[i] as f64).collect();
        }
        let shares = largest_remainder(&w, remaining);
        let overflow: Vec<usize> = active
            .iter()
            .zip(&shares)
            .filter(|(&i, &s)| s > caps[i])
            .map(|(&i, _)| i)
            .collect();
        if overflow.is_empty() {
            for (&i, &s) in active.iter().zip(&shares) {
                quotas[i] = s;
            }
            break;
        }
        for i in overflow {
            pinned[i] = true;
            quotas[i] = caps[i];
            remaining -= caps[i];
        }
    }
    Ok(quotas)
}

fn check_inputs(sizes: &[usize], stds: &[f64], n: usize) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::data("allocation needs at least one stratum"));
    }
    if sizes.len() != stds.len() {
        return Err(Error::DimensionMismatch {
            expected: sizes.len(),
            actual: stds.len(),
        });
    }
    if let Some(h) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::data(format!("stratum {h} is empty")));
    }
    if let Some(h) = stds.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::data(format!(
            "stratum {h} has invalid spread {}",
            stds[h]
        )));
    }
    let capacity: usize = sizes.iter().sum();
    if n > capacity {
        return Err(Error::data(format!(
            "sample size {n} exceeds the population of {capacity}"
        )));
    }
    Ok(())
}

pub fn proportional_allocation(sizes: &[usize], n: usize) -> Result<AllocationPlan> {
    let stds = vec![0.0; sizes.len()];
    check_inputs(sizes, &stds, n)?;
    let weights: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    Ok(AllocationPlan {
        stratum_sizes: sizes.to_vec(),
        stratum_costs: vec![1.0; sizes.len()],
        quotas: capped_allocation(&weights, sizes, n)?,
        stratum_stds: stds,
        total: n,
        strategy: AllocationStrategy::Proportional,
    })
}

/// Quotas proportional to `N_h * sigma_h`; proportional to `N_h` when every
/// spread is zero.
pub fn neyman_allocation(sizes: &[usize], stds: &[f64], n: usize) -> Result<AllocationPlan> {
    check_inputs(sizes, stds, n)?;
    let weights: Vec<f64> = sizes
        .iter()
        .zip(stds)
        .map(|(&s, &sd)| s as f64 * sd)
        .collect();
    Ok(AllocationPlan {
        stratum_sizes: sizes.to_vec(),
        stratum_stds: stds.to_vec(),
        stratum_costs: vec![1.0; sizes.len()],
        quotas: capped_allocation(&weights, sizes, n)?,
        total: n,
        strategy: AllocationStrategy::Neyman,
    })
}

/// Quotas proportional to `N_h * sigma_h / sqrt(c_h)`.
pub fn optimal_allocation(
    sizes: &[usize],
    stds: &[f64],
    costs: &[f64],
    n: usize,
) -> Result<AllocationPlan> {
    check_inputs(sizes, stds, n)?;
    if costs.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: sizes.len(),
            actual: costs.len(),
        });
    }
    if let Some(h) = costs.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::config(format!(
            "stratum {h} has nonpositive cost {}",
            costs[h]
        )));
    }
    // A common cost cancels out of the normalized weights; leaving it out
    // keeps the quotas bit-identical to Neyman allocation.
    let uniform = costs.iter().all(|&c| c == costs[0]);
    let weights: Vec<f64> = sizes
        .iter()
        .zip(stds)
        .zip(costs)
        .map(|((&s, &sd), &c)| {
            let w = s as f64 * sd;
            if uniform {
                w
            } else {
                w / c.sqrt()
            }
        })
        .collect();
    Ok(AllocationPlan {
        stratum_sizes: sizes.to_vec(),
        stratum_stds: stds.to_vec(),
        stratum_costs: costs.to_vec(),
        quotas: capped_allocation(&weights, sizes, n)?,
        total: n,
        strategy: AllocationStrategy::Optimal,
    })
}

/// Dispatches on `strategy`. `costs` is only read for optimal allocation.
pub fn allocate(
    strategy: AllocationStrategy,
    sizes: &[usize],
    stds: &[f64],
    costs: &[f64],
    n: usize,
) -> Result<AllocationPlan> {
    match strategy {
        AllocationStrategy::Neyman => neyman_allocation(sizes, stds, n),
        AllocationStrategy::Optimal => optimal_allocation(sizes, stds, costs, n),
        AllocationStrategy::Proportional => proportional_allocation(sizes, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_strata_split_evenly() {
        let plan = neyman_allocation(&[20, 20], &[1.5, 1.5], 10).unwrap();
        assert_eq!(plan.quotas, vec![5, 5]);
    }

    #[test]
    fn neyman_hand_example() {
        // weights (100*2, 50*1) = (200, 50); raw (24, 6)
        let plan = neyman_allocation(&[100, 50], &[2.0, 1.0], 30).unwrap();
        assert_eq!(plan.quotas, vec![24, 6]);
        assert_eq!(plan.total, 30);
    }

    #[test]
    fn zero_spread_falls_back_to_proportional() {
        let plan = neyman_allocation(&[30, 10], &[0.0, 0.0], 4).unwrap();
        assert_eq!(plan.quotas, vec![3, 1]);
    }

    #[test]
    fn optimal_hand_example() {
        // weights (100/sqrt(100), 50/sqrt(50)) = (10, 7.071); raw (8.787, 6.213) → (9, 6)
        let plan = optimal_allocation(&[100, 50], &[1.0, 1.0], &[100.0, 50.0], 15).unwrap();
        assert_eq!(plan.quotas, vec![9, 6]);
    }

    #[test]
    fn optimal_with_uniform_costs_is_neyman() {
        let ney = neyman_allocation(&[17, 40, 9], &[0.3, 1.1, 2.5], 20).unwrap();
        let opt = optimal_allocation(&[17, 40, 9], &[0.3, 1.1, 2.5], &[4.0, 4.0, 4.0], 20).unwrap();
        assert_eq!(ney.quotas, opt.quotas);
    }

    #[test]
    fn single_stratum_takes_everything() {
        let plan = optimal_allocation(&[12], &[0.4], &[12.0], 7).unwrap();
        assert_eq!(plan.quotas, vec![7]);
    }

    #[test]
    fn errors() {
        assert!(neyman_allocation(&[3, 2], &[1.0, 1.0], 6).is_err());
        assert!(neyman_allocation(&[3, 0], &[1.0, 1.0], 1).is_err());
        assert!(optimal_allocation(&[3, 2], &[1.0, 1.0], &[1.0, 0.0], 2).is_err());
        assert!(optimal_allocation(&[3, 2], &[1.0, 1.0], &[1.0], 2).is_err());
    }

    #[test]
    fn cap_redistributes_overflow() {
        // stratum 0 wants 9 of 10 but only holds 3
        let plan = neyman_allocation(&[3, 30], &[100.0, 1.0], 10).unwrap();
        assert_eq!(plan.quotas, vec![3, 7]);
    }

    #[test]
    fn zero_weight_strata_absorb_excess_by_size() {
        let q = capped_allocation(&[1.0, 0.0, 0.0], &[2, 6, 2], 6).unwrap();
        assert_eq!(q, vec![2, 3, 1]);
    }

    fn instance() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, usize)> {
        prop::collection::vec((1usize..60, 0.0f64..5.0), 1..8).prop_flat_map(|strata| {
            let sizes: Vec<usize> = strata.iter().map(|s| s.0).collect();
            let stds: Vec<f64> = strata.iter().map(|s| s.1).collect();
            let cap: usize = sizes.iter().sum();
            (Just(sizes), Just(stds), 0..=cap)
        })
    }

    proptest! {
        #[test]
        fn quotas_sum_and_respect_caps((sizes, stds, n) in instance(), cost in 0.1f64..10.0) {
            let costs: Vec<f64> = sizes.iter().map(|&s| s as f64 * cost).collect();
            for plan in [
                neyman_allocation(&sizes, &stds, n).unwrap(),
                optimal_allocation(&sizes, &stds, &costs, n).unwrap(),
                proportional_allocation(&sizes, n).unwrap(),
            ] {
                prop_assert_eq!(plan.quotas.iter().sum::<usize>(), n);
                for (q, s) in plan.quotas.iter().zip(&sizes) {
                    prop_assert!(q <= s);
                }
            }
        }

        #[test]
        fn neyman_scale_invariant((sizes, stds, n) in instance(), scale in 0.01f64..100.0) {
            let scaled: Vec<f64> = stds.iter().map(|s| s * scale).collect();
            prop_assert_eq!(
                neyman_allocation(&sizes, &stds, n).unwrap().quotas,
                neyman_allocation(&sizes, &scaled, n).unwrap().quotas
            );
        }
    }
}

use std::time::{Duration, Instant};

use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use rebalance::matrix::Matrix;
use rebalance::rng;
use rebalance::support_points::{energy_distance, optimize_from, SupportPointConfig};

fn gaussian(n: usize, d: usize, seed: u64) -> Matrix {
    let mut r = rng::seeded(seed);
    let data = (0..n * d)
        .map(|_| r.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::new(n, d, data).unwrap()
}

fn shifted(m: &Matrix, offset: &[f64]) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        for (v, o) in out.row_mut(i).iter_mut().zip(offset) {
            *v += o;
        }
    }
    out
}

#[test]
fn optimizer_commutes_with_translation() {
    let x = gaussian(300, 3, 1);
    let z0 = x.select_rows(&(0..30).map(|i| i * 10).collect::<Vec<_>>());
    let config = SupportPointConfig {
        m: Some(30),
        max_iter: 50,
        tol: 0.0,
        ..Default::default()
    };
    let offset = [2.5, -1.25, 0.75];
    let base = optimize_from(&x, z0.clone(), 0.2, &config).unwrap();
    let moved = optimize_from(&shifted(&x, &offset), shifted(&z0, &offset), 0.2, &config).unwrap();
    assert_eq!(base.iterations(), moved.iterations());
    let expected = shifted(&base.points, &offset);
    for (a, b) in moved.points.as_slice().iter().zip(expected.as_slice()) {
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
    for (a, b) in base.energy_trace.iter().zip(&moved.energy_trace) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }
}

/// Wall time per iteration, excluding the one-off O(N²) setup: the
/// difference between an 11-iteration and a 1-iteration run.
fn per_iteration(n: usize, m: usize) -> Duration {
    let x = gaussian(n, 10, 7);
    let z0 = x.select_rows(&(0..m).collect::<Vec<_>>());
    let timed = |iters: usize| {
        let config = SupportPointConfig {
            m: Some(m),
            max_iter: iters,
            tol: 0.0,
            ..Default::default()
        };
        (0..3)
            .map(|_| {
                let start = Instant::now();
                let set = optimize_from(&x, z0.clone(), 0.05, &config).unwrap();
                assert_eq!(set.iterations(), iters);
                start.elapsed()
            })
            .min()
            .unwrap()
    };
    timed(11).saturating_sub(timed(1)) / 10
}

#[test]
fn iteration_cost_scales_linearly_in_target_size() {
    let small = per_iteration(2000, 100);
    let large = per_iteration(4000, 100);
    let ratio = large.as_secs_f64() / small.as_secs_f64();
    assert!(
        ratio <= 3.0,
        "doubling N gave ratio {ratio:.2} ({small:?} -> {large:?})"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn energy_is_translation_invariant_and_scale_homogeneous(
        seed in any::<u64>(),
        n in 2usize..20,
        m in 1usize..8,
        shift in -50.0f64..50.0,
        scale in 0.1f64..10.0,
    ) {
        let x = gaussian(n, 3, seed);
        let z = gaussian(m, 3, seed ^ 1);
        let e = energy_distance(&x, &z).unwrap();
        prop_assert!(e >= -1e-12);
        let offset = [shift, -shift, 0.5 * shift];
        let moved = energy_distance(&shifted(&x, &offset), &shifted(&z, &offset)).unwrap();
        prop_assert!((moved - e).abs() <= 1e-9 * (1.0 + shift.abs()));
        let mul = |a: &Matrix| {
            Matrix::new(a.rows(), a.cols(), a.as_slice().iter().map(|v| v * scale).collect()).unwrap()
        };
        let scaled = energy_distance(&mul(&x), &mul(&z)).unwrap();
        prop_assert!((scaled - scale * e).abs() <= 1e-9 * scale.max(1.0) * (1.0 + e));
    }
}

mod common;

use common::{random_params, random_sample, rel_close, rng};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use sparse_mix::model::{
    component_log_density, kullback_penalty, penalized_objective, q_function, responsibilities,
    self_regression_log_likelihood, spherical_log_density,
};
use sparse_mix::{MixtureParams, SampleSet};

/// Posterior memberships from plain densities, no log-domain tricks.
fn naive_responsibilities(params: &MixtureParams, sample: &SampleSet) -> Array2<f64> {
    let (n, k, d) = (sample.n(), params.k(), sample.d() as f64);
    let mut out = Array2::zeros((n, k));
    for i in 0..n {
        let y = sample.point(i);
        let mut dens = vec![0.0; k];
        for c in 0..k {
            let mean = sample.design().dot(&params.beta(c));
            let v = params.variances()[c];
            let sq: f64 = y.iter().zip(mean.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            dens[c] = params.weights()[c] * (-sq / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).powf(d / 2.0);
        }
        let total: f64 = dens.iter().sum();
        for c in 0..k {
            out[[i, c]] = dens[c] / total;
        }
    }
    out
}

fn naive_log_likelihood(params: &MixtureParams, sample: &SampleSet) -> f64 {
    let d = sample.d() as f64;
    (0..sample.n())
        .map(|i| {
            let y = sample.point(i);
            (0..params.k())
                .map(|c| {
                    let mean = sample.design().dot(&params.beta(c));
                    let v = params.variances()[c];
                    let sq: f64 = y.iter().zip(mean.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                    params.weights()[c] * (-sq / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).powf(d / 2.0)
                })
                .sum::<f64>()
                .ln()
        })
        .sum()
}

fn setup(seed: u64, n: usize, d: usize, k: usize) -> (SampleSet, MixtureParams, MixtureParams) {
    let mut r = rng(seed);
    let s = random_sample(&mut r, n, d);
    let a = random_params(&mut r, k, n, 0.5);
    let b = random_params(&mut r, k, n, 0.5);
    (s, a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn q_plus_kullback_is_likelihood(seed in 0u64..1_000_000, n in 3usize..12, d in 1usize..5, k in 1usize..4) {
        let (s, theta, theta_bar) = setup(seed, n, d, k);
        let tau_bar = responsibilities(&theta_bar, &s);
        let lhs = q_function(&theta, &tau_bar, &s) + kullback_penalty(&theta, &theta_bar, &s);
        let rhs = self_regression_log_likelihood(&theta, &s);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn kullback_penalty_is_nonnegative_and_zero_on_diagonal(seed in 0u64..1_000_000, k in 1usize..4) {
        let (s, theta, theta_bar) = setup(seed, 8, 3, k);
        prop_assert!(kullback_penalty(&theta, &theta_bar, &s) >= 0.0);
        prop_assert!(kullback_penalty(&theta, &theta, &s).abs() <= 1e-10);
    }

    #[test]
    fn responsibilities_match_naive_formula(seed in 0u64..1_000_000, n in 2usize..10, d in 1usize..4, k in 1usize..4) {
        let (s, theta, _) = setup(seed, n, d, k);
        let fast = responsibilities(&theta, &s);
        let slow = naive_responsibilities(&theta, &s);
        for (a, b) in fast.matrix().iter().zip(slow.iter()) {
            if b.is_finite() {
                prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
            }
        }
        let ll = self_regression_log_likelihood(&theta, &s);
        let naive = naive_log_likelihood(&theta, &s);
        if naive.is_finite() {
            prop_assert!(rel_close(ll, naive, 1e-10));
        }
    }

    #[test]
    fn likelihood_ignores_component_order(seed in 0u64..1_000_000, k in 2usize..5) {
        let (s, theta, _) = setup(seed, 9, 2, k);
        let perm: Vec<usize> = (0..k).rev().collect();
        let shuffled = theta.permuted(&perm);
        prop_assert!(rel_close(self_regression_log_likelihood(&theta, &s), self_regression_log_likelihood(&shuffled, &s), 1e-12));
        let t0 = responsibilities(&theta, &s);
        let t1 = responsibilities(&shuffled, &s);
        for i in 0..s.n() {
            for j in 0..k {
                prop_assert!((t1.matrix()[[i, j]] - t0.matrix()[[i, perm[j]]]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn basis_coefficients_select_observations(seed in 0u64..1_000_000, n in 2usize..10, d in 1usize..5) {
        let mut r = rng(seed);
        let s = random_sample(&mut r, n, d);
        for j in 0..n {
            let mut e = Array1::zeros(n);
            e[j] = 1.0;
            let mean = s.combine(e.view());
            for (a, b) in mean.iter().zip(s.point(j).iter()) {
                prop_assert_eq!(a, b);
            }
            for i in 0..n {
                let direct = spherical_log_density(s.point(i), s.point(j), 2.5);
                prop_assert!(rel_close(component_log_density(s.point(i), e.view(), 2.5, &s).unwrap(), direct, 1e-14));
            }
        }
    }

    #[test]
    fn penalty_is_linear_in_lambda(seed in 0u64..1_000_000, lambda in 0.0f64..10.0) {
        let (s, theta, _) = setup(seed, 7, 2, 3);
        let l1: f64 = theta.l1_norms().sum();
        let expect = self_regression_log_likelihood(&theta, &s) - lambda * l1;
        prop_assert!(rel_close(penalized_objective(&theta, &s, lambda), expect, 1e-13));
    }

    #[test]
    fn centering_is_exact_enough(seed in 0u64..1_000_000, shift in -1e4f64..1e4) {
        let mut r = rng(seed);
        let base = common::gaussian_matrix(&mut r, 8, 3, 1.0);
        let s = SampleSet::new(&base + shift).unwrap();
        for col in s.points().columns() {
            prop_assert!(col.sum().abs() <= 1e-9 * (1.0 + shift.abs()));
        }
        let back = s.uncenter(s.point(0));
        for (a, b) in back.iter().zip(base.row(0).iter()) {
            prop_assert!((a - (b + shift)).abs() <= 1e-9 * (1.0 + shift.abs()));
        }
    }
}

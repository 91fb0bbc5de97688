use cqr_core::model::mean_pinball_loss;
use cqr_core::optimizer::{
    default_rate_grid, log_grid, sgd_train, sgd_train_observed, successive_halving_tune_with, tuning_split, Schedule,
    SgdConfig,
};
use cqr_core::seed;
use cqr_core::synth::{local_strong_convexity, oracle_theta, sample, SyntheticSpec};
use proptest::prelude::*;

fn spec() -> SyntheticSpec {
    SyntheticSpec::from_seed(41)
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[test]
fn tuner_is_close_to_exhaustive_search() {
    let spec = spec();
    let held = sample(&spec, 20_000, 900).unwrap();
    for schedule in [Schedule::InverseTime(1.0), Schedule::Constant(1.0)] {
        for (i, gamma) in [0.05, 0.5, 0.9].into_iter().enumerate() {
            let data = sample(&spec, 2000, 100 + i as u64).unwrap();
            let template = SgdConfig { schedule, seed: 5, ..Default::default() };
            // Exhaustive search trains every arm on the tuner's full fit split
            // and scores it on a large fresh sample.
            let (fit, _) = tuning_split(&data, 77).unwrap();
            let loss_at = |rate: f64| {
                let cfg = SgdConfig { schedule: schedule.with_rate(rate), ..template.clone() };
                mean_pinball_loss(&sgd_train(&fit, gamma, &cfg).unwrap().model(gamma).unwrap(), &held).unwrap()
            };
            let grid = log_grid(1e-5, 1.0, 9);
            let best = grid.iter().map(|&r| loss_at(r)).fold(f64::INFINITY, f64::min);
            let chosen = successive_halving_tune_with(&data, gamma, &grid, 64, 77, &template).unwrap();
            let got = loss_at(chosen);
            assert!(got <= 1.05 * best, "{schedule:?} gamma {gamma}: rate {chosen} loss {got} vs best {best}");
        }
    }
}

#[test]
fn tuned_sgd_error_decreases_with_n() {
    let spec = spec();
    let gamma = 0.975;
    let target = oracle_theta(&spec, gamma).unwrap();
    let mut errs = Vec::new();
    for n in [200usize, 2000, 20_000] {
        let mut total = 0.0;
        for s in 0..20u64 {
            let data = sample(&spec, n, seed::derive(3, &[n as u64, s])).unwrap();
            let template = SgdConfig { seed: s, ..Default::default() };
            let rate = successive_halving_tune_with(&data, gamma, &default_rate_grid(), 64, s, &template).unwrap();
            let cfg = SgdConfig { schedule: template.schedule.with_rate(rate), ..template };
            total += sq_err(&sgd_train(&data, gamma, &cfg).unwrap().final_theta, &target).sqrt();
        }
        errs.push(total / 20.0);
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

fn theory_config(spec: &SyntheticSpec, gamma: f64, seed: u64) -> SgdConfig {
    let mu = local_strong_convexity(spec, gamma).unwrap();
    let radius = (spec.theta0[0].powi(2) + spec.theta0[1].powi(2)).sqrt();
    SgdConfig {
        schedule: Schedule::InverseTime(1.0 / mu),
        batch_size: 1,
        epochs: 1,
        projection_radius: Some(radius),
        seed,
    }
}

#[test]
fn doubling_n_never_hurts_much() {
    let spec = spec();
    let gamma = 0.9;
    let target = oracle_theta(&spec, gamma).unwrap();
    let mean_err = |n: usize| {
        (0..20u64)
            .map(|s| {
                let data = sample(&spec, n, seed::derive(8, &[n as u64, s])).unwrap();
                sq_err(&sgd_train(&data, gamma, &theory_config(&spec, gamma, s)).unwrap().final_theta, &target)
            })
            .sum::<f64>()
            / 20.0
    };
    let sizes = [250usize, 500, 1000, 2000, 4000, 8000, 16_000];
    let errs: Vec<f64> = sizes.iter().map(|&n| mean_err(n)).collect();
    for (w, n) in errs.windows(2).zip(&sizes) {
        assert!(w[1] <= 1.1 * w[0], "n = {n} -> {}: {} vs {}", 2 * n, w[0], w[1]);
    }
}

#[test]
fn training_is_bit_reproducible() {
    let spec = spec();
    let data = sample(&spec, 3000, 1).unwrap();
    let cfg = SgdConfig { schedule: Schedule::Constant(0.05), batch_size: 7, epochs: 3, seed: 9, ..Default::default() };
    let a = sgd_train(&data, 0.3, &cfg).unwrap();
    let b = sgd_train(&data, 0.3, &cfg).unwrap();
    assert_eq!(a, b);
    let c = sgd_train(&data, 0.3, &SgdConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.final_theta, c.final_theta);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_iterate_stays_in_the_ball(
        seed in 0u64..1000,
        rate in 0.01f64..5.0,
        radius in 0.1f64..3.0,
        batch in 1usize..80,
        gamma in 0.01f64..0.99,
    ) {
        let data = sample(&spec(), 300, seed).unwrap();
        let cfg = SgdConfig {
            schedule: Schedule::InverseTime(rate),
            batch_size: batch,
            epochs: 2,
            projection_radius: Some(radius),
            seed,
        };
        let mut worst = 0.0f64;
        sgd_train_observed(&data, gamma, &cfg, |_, theta| {
            worst = worst.max(theta.iter().map(|t| t * t).sum::<f64>().sqrt());
        })
        .unwrap();
        prop_assert!(worst <= radius * (1.0 + 1e-12));
    }
}

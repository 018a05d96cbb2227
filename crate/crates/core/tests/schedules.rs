mod common;

use common::*;
use gmd_core::analysis::{
    containment_check, contraction_check, estimate_rate, first_gradient_increase, first_increase,
    mean_curve, radius_for_trace, Coefficient, RATE_FLOOR,
};
use gmd_core::harness::generate_regression;
use gmd_core::mirrors::{AdagradState, LinearMirror};
use gmd_core::optimizer::{
    capped_fixed_eta, check_adagrad_frozen, check_monotone_gradient_condition,
};
use gmd_core::problems::{
    mse_problem, per_sample_smoothness, pl_smooth_constants, smoothness_heuristic,
};
use gmd_core::tensor::min_norm_interpolant;
use gmd_core::{rng, run, Dataset, Mat, Mirror, PLConstants, Problem, RunConfig, Schedule};

fn planted(rows: &[Vec<f64>], w_true: &[f64]) -> Dataset {
    let x = Mat::from_rows(rows).unwrap();
    let y = x.matvec(w_true);
    Dataset::new(x, y, true).unwrap()
}

fn diag_mirror(entries: &[f64]) -> Mirror {
    Mirror::Linear(LinearMirror::diag(entries).unwrap())
}

#[test]
fn inverse_smoothness_step_reaches_tiny_loss() {
    let data = generate_regression(50, 10, 3, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let w0 = rng::normal_vec(&mut rng::seeded(1), 10);
    let f0 = p.value(&w0).unwrap();
    let cfg = RunConfig::new(w0, 5000).with_stop_loss(1e-12 * f0);
    let tr = run(&p, Mirror::Identity, &Schedule::fixed(1.0 / c.l), &cfg).unwrap();
    assert!(tr.final_loss() <= 1e-12 * f0, "final {}", tr.final_loss());
    assert!(tr.losses().windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn adaptive_schedule_contracts_under_diagonal_mirror() {
    let data = planted(
        &[vec![1.0, 0.3], vec![0.4, 1.0], vec![0.7, -0.5]],
        &[1.0, -2.0],
    );
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let w0 = vec![0.5, 0.5];
    let f0 = p.value(&w0).unwrap();
    let cfg = RunConfig::new(w0, 2000).with_stop_loss(1e-14 * f0);
    let tr = run(&p, diag_mirror(&[1.0, 3.0]), &Schedule::capped(c.l), &cfg).unwrap();
    let steps = contraction_check(&tr, Coefficient::Taylor, c, 1e-10 * f0);
    assert!(!steps.is_empty());
    assert!(
        steps.iter().all(|s| s.ok),
        "{:?}",
        steps.iter().find(|s| !s.ok)
    );
    assert!(tr.final_loss() <= 1e-10 * f0);
}

#[test]
fn stochastic_schedule_mean_loss_is_monotone() {
    let data = generate_regression(50, 10, 5, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let l = per_sample_smoothness(&data);
    let p = mse_problem(data);
    let w0 = rng::normal_vec(&mut rng::seeded(9), 10);
    let schedule = Schedule::stochastic_capped(l, c.mu);
    let traces: Vec<_> = (0..20)
        .map(|seed| {
            let cfg = RunConfig::new(w0.clone(), 3000).stochastic(seed);
            run(&p, Mirror::Identity, &schedule, &cfg).unwrap()
        })
        .collect();
    let mean = mean_curve(&traces);
    let floor = RATE_FLOOR * mean[0];
    let above: Vec<f64> = mean.iter().copied().take_while(|&m| m > floor).collect();
    assert_eq!(first_increase(&above, 0.0), None);
    assert!(mean.last().unwrap() < &mean[0]);
}

#[test]
fn fixed_adagrad_step_decreases_loss_when_admissible() {
    let data = planted(&[vec![1.0, 0.0], vec![0.0, 2.0]], &[1.0, 0.5]);
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let w0 = vec![0.0, 0.0];
    let (f0, g0) = p.value_and_grad(&w0).unwrap();
    let state = AdagradState::new(2, 100.0)
        .unwrap()
        .accumulate(&g0)
        .unwrap();
    assert!(check_adagrad_frozen(&state, c.l, c.mu, f0));
    let mirror = Mirror::Adagrad(AdagradState::new(2, 100.0).unwrap());
    let cfg = RunConfig::new(w0, 3000).with_stop_loss(1e-14 * f0);
    let tr = run(&p, mirror, &Schedule::adagrad_frozen(c.l, c.mu), &cfg).unwrap();
    let losses = tr.losses();
    assert!(losses.windows(2).all(|w| w[1] < w[0]));
    assert!(tr.final_loss() <= 1e-12 * f0);
    let etas = tr.etas();
    assert!(etas.iter().all(|&e| e == etas[0]));
}

#[test]
fn inadmissible_fixed_adagrad_step_is_rejected() {
    let data = planted(&[vec![1.0, 0.0], vec![0.0, 2.0]], &[1.0, 0.5]);
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let mirror = Mirror::Adagrad(AdagradState::new(2, 1e-12).unwrap());
    let cfg = RunConfig::new(vec![0.0, 0.0], 10);
    assert!(run(&p, mirror, &Schedule::adagrad_frozen(c.l, c.mu), &cfg).is_err());
}

#[test]
fn well_conditioned_fixed_step_shrinks_gradients() {
    let data = planted(&[vec![1.0, 0.0], vec![0.0, 1.05]], &[2.0, -1.0]);
    let c = pl_smooth_constants(&data).unwrap();
    let mirror = Mirror::Identity;
    let b = mirror.bounds();
    assert!(check_monotone_gradient_condition(
        c.mu, c.l, b.alpha_l, b.alpha_u
    ));
    let eta = capped_fixed_eta(b, c.l, 1.0).unwrap();
    let p = mse_problem(data);
    let tr = run(
        &p,
        mirror,
        &Schedule::fixed(eta),
        &RunConfig::new(vec![0.0, 0.0], 200),
    )
    .unwrap();
    assert_eq!(first_gradient_increase(&tr, 0.0), None);
}

#[test]
fn smoothness_heuristic_stays_below_l() {
    let data = generate_regression(30, 6, 2, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let w0 = rng::normal_vec(&mut rng::seeded(3), 6);
    let cfg = RunConfig::new(w0, 100).recording();
    let tr = run(&p, Mirror::Identity, &Schedule::fixed(1.0 / c.l), &cfg).unwrap();
    for w in tr.iterates.as_ref().unwrap() {
        let h = smoothness_heuristic(&p, w).unwrap();
        assert!(h <= c.l, "{h} > {}", c.l);
    }
}

fn radius_contains(mirror: Mirror, seed: u64) {
    let data = generate_regression(20, 8, seed, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let w0 = rng::normal_vec(&mut rng::seeded(seed), 8);
    let eta = mirror.bounds().alpha_l / c.l;
    let cfg = RunConfig::new(w0, 3000).recording();
    let tr = run(&p, mirror, &Schedule::fixed(eta), &cfg).unwrap();
    let r = radius_for_trace(&tr, c);
    let rep = containment_check(&tr, r).unwrap();
    assert!(rep.contained, "{rep:?}");
    assert!(rep.max_dual_displacement > 0.0);
}

#[test]
fn radius_bounds_dual_displacement() {
    radius_contains(Mirror::Identity, 1);
    radius_contains(diag_mirror(&[1.0, 1.5, 2.0, 2.5, 3.0, 1.2, 1.8, 2.2]), 2);
}

#[test]
fn adagrad_mirror_drift_is_positive_and_covered() {
    let data = generate_regression(20, 8, 4, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let w0 = rng::normal_vec(&mut rng::seeded(4), 8);
    let mirror = Mirror::Adagrad(AdagradState::new(8, 1e-12).unwrap());
    let cfg = RunConfig::new(w0, 500).recording();
    let tr = run(&p, mirror, &Schedule::adagrad_adaptive(c.l), &cfg).unwrap();
    let r = radius_for_trace(&tr, c);
    let rep = containment_check(&tr, r).unwrap();
    assert!(rep.delta > 0.0);
    assert!(rep.contained, "{rep:?}");
}

#[test]
fn gradient_descent_converges_to_min_norm_interpolant() {
    let data = generate_regression(10, 30, 6, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data.clone());
    let w0 = rng::normal_vec(&mut rng::seeded(6), 30);
    let cfg = RunConfig::new(w0.clone(), 20000).with_stop_loss(0.0);
    let tr = run(&p, Mirror::Identity, &Schedule::fixed(1.0 / c.l), &cfg).unwrap();
    let w_star = min_norm_interpolant(&data.x, &data.y, &w0).unwrap();
    let oracle: Vec<f64> = {
        let xw0 = data.x.matvec(&w0);
        let r: Vec<f64> = data.y.iter().zip(&xw0).map(|(a, b)| a - b).collect();
        let step = pinv_wide(&to_rows(&data.x), &r);
        w0.iter().zip(&step).map(|(a, b)| a + b).collect()
    };
    for ((a, b), o) in tr.final_w.iter().zip(&w_star).zip(&oracle) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        assert!((b - o).abs() <= 1e-9);
    }
}

#[test]
fn fitted_rate_is_no_slower_than_predicted() {
    let data = generate_regression(40, 8, 7, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let w0 = rng::normal_vec(&mut rng::seeded(7), 8);
    let cfg = RunConfig::new(w0, 400);
    let tr = run(&p, Mirror::Identity, &Schedule::fixed(1.0 / c.l), &cfg).unwrap();
    let est = estimate_rate(&tr, c.condition_number()).unwrap();
    assert!(est.slope <= est.predicted_slope + 1e-6, "{est:?}");
    assert!(est.r_squared > 0.9);
}

#[test]
fn contraction_holds_for_identity_and_linear_mirrors() {
    let data = generate_regression(30, 5, 8, 0.0).unwrap();
    let c: PLConstants = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let w0 = rng::normal_vec(&mut rng::seeded(8), 5);
    let f0 = p.value(&w0).unwrap();
    for mirror in [Mirror::Identity, diag_mirror(&[1.0, 1.5, 2.0, 2.5, 3.0])] {
        let cfg = RunConfig::new(w0.clone(), 1000);
        let tr = run(&p, mirror, &Schedule::alpha_l(c.l), &cfg).unwrap();
        let steps = contraction_check(&tr, Coefficient::Kappa, c, 1e-10 * f0);
        assert!(steps.iter().all(|s| s.ok));
    }
}

mod common;

use common::*;
use gmd_core::harness::generate_regression;
use gmd_core::mirrors::{bregman, AdagradState, LinearMirror, TanhMirror};
use gmd_core::optimizer::gmd_step;
use gmd_core::problems::{mlp_problem, mse_problem, pl_smooth_constants, MlpParams};
use gmd_core::tensor::{extreme_eigenvalues, min_norm_interpolant, RANK_TOL};
use gmd_core::{rng, run, Activation, Dataset, Mat, Mirror, Problem, RunConfig, Schedule};

#[test]
fn extreme_eigenvalues_match_jacobi_on_random_grams() {
    for k in 0..100u64 {
        let n = 1 + (k as usize % 8);
        let cols = 1 + (k as usize * 7 % 9);
        let a = random_mat(1000 + k, n, cols);
        let g = a.gram_rows();
        let e = extreme_eigenvalues(&g, RANK_TOL).unwrap();
        let (max, min) = jacobi_extremes(&to_rows(&g), RANK_TOL);
        assert!(
            rel_close(e.lambda_max, max, 1e-8),
            "k={k}: {} vs {max}",
            e.lambda_max
        );
        assert!(
            rel_close(e.lambda_min_nonzero, min, 1e-8),
            "k={k}: {} vs {min}",
            e.lambda_min_nonzero
        );
    }
}

#[test]
fn seeded_5x5_gram_matches_jacobi() {
    let a = random_mat(5, 5, 5);
    let g = a.gram_rows();
    let e = extreme_eigenvalues(&g, RANK_TOL).unwrap();
    let (max, min) = jacobi_extremes(&to_rows(&g), RANK_TOL);
    assert!(rel_close(e.lambda_max, max, 1e-8));
    assert!(rel_close(e.lambda_min_nonzero, min, 1e-8));
}

#[test]
fn regression_constants_match_jacobi() {
    let data = generate_regression(20, 5, 3, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let (max, min) = jacobi_extremes(&to_rows(&data.x.gram_rows()), RANK_TOL);
    assert!(rel_close(c.l, max, 1e-8));
    assert!(rel_close(c.mu, min, 1e-8));
}

#[test]
fn wide_design_has_full_row_rank() {
    let data = generate_regression(50, 200, 0, 0.0).unwrap();
    let e = extreme_eigenvalues(&data.x.gram_rows(), RANK_TOL).unwrap();
    assert_eq!(e.rank_estimate, 50);
    assert!(e.lambda_min_nonzero > 0.0);
    let ev = jacobi_eigenvalues(&to_rows(&data.x.gram_rows()));
    assert!(rel_close(e.lambda_min_nonzero, ev[0], 1e-8));
}

#[test]
fn min_norm_interpolant_matches_pinv_and_grid_search() {
    let x = Mat::from_rows(&[vec![1.0, 1.0]]).unwrap();
    let w = min_norm_interpolant(&x, &[2.0], &[0.0, 0.0]).unwrap();
    let p = pinv_wide(&to_rows(&x), &[2.0]);
    assert!((w[0] - p[0]).abs() < 1e-12 && (w[1] - p[1]).abs() < 1e-12);
    // solutions are (s, 2 − s); scan s for the smallest norm
    let best = (0..=4000)
        .map(|k| -1.0 + 4.0 * k as f64 / 4000.0)
        .min_by(|a, b| {
            let na = a * a + (2.0 - a) * (2.0 - a);
            let nb = b * b + (2.0 - b) * (2.0 - b);
            na.partial_cmp(&nb).unwrap()
        })
        .unwrap();
    assert!((w[0] - best).abs() <= 1e-3 && (w[1] - (2.0 - best)).abs() <= 1e-3);
    assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
}

#[test]
fn min_norm_interpolant_matches_pinv_on_random_wide_system() {
    let x = random_mat(17, 4, 9);
    let w0: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
    let y = vec![1.0, -2.0, 0.5, 3.0];
    let w = min_norm_interpolant(&x, &y, &w0).unwrap();
    let xw0 = x.matvec(&w0);
    let r: Vec<f64> = y.iter().zip(&xw0).map(|(a, b)| a - b).collect();
    let c = pinv_wide(&to_rows(&x), &r);
    for j in 0..9 {
        assert!((w[j] - (w0[j] + c[j])).abs() < 1e-10);
    }
}

fn assert_grad_close(analytic: &[f64], numeric: &[f64], rel: f64) {
    let scale = numeric
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1e-8);
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert!(
            (a - n).abs() <= rel * scale.max(a.abs()),
            "coordinate {i}: analytic {a} vs numeric {n}"
        );
    }
}

#[test]
fn mse_gradient_matches_central_differences() {
    let data = generate_regression(12, 6, 8, 0.3).unwrap();
    let p = mse_problem(data);
    let w = rng::normal_vec(&mut rng::seeded(4), 6);
    let num = central_diff(|v| p.value(v).unwrap(), &w, 1e-6);
    assert_grad_close(&p.grad(&w).unwrap(), &num, 1e-5);
    for i in [0, 5, 11] {
        let num = central_diff(|v| p.sample_value(i, v).unwrap(), &w, 1e-6);
        assert_grad_close(&p.sample_grad(i, &w).unwrap(), &num, 1e-5);
    }
}

fn mlp_point_away_from_kinks(p: &gmd_core::MlpProblem, data: &Dataset, seed: u64) -> Vec<f64> {
    let dim = p.dim();
    let (h, d) = (p.hidden(), data.d());
    for attempt in 0..1000 {
        let w = rng::uniform_vec(&mut rng::seeded(seed + attempt), dim, -1.0, 1.0);
        let params = MlpParams::unflatten(&w, h, d).unwrap();
        let clear = (0..data.n()).all(|i| {
            params
                .hidden
                .matvec(data.x.row(i))
                .iter()
                .all(|z| z.abs() > 1e-3)
        });
        if clear {
            return w;
        }
    }
    panic!("no kink-free point found");
}

#[test]
fn mlp_gradients_match_central_differences() {
    let data = generate_regression(8, 4, 2, 0.1).unwrap();
    for act in [Activation::LeakyRelu, Activation::XPlusSin] {
        let p = mlp_problem(data.clone(), 5, act, 0).unwrap();
        let w = mlp_point_away_from_kinks(&p, &data, 100);
        let num = central_diff(|v| p.value(v).unwrap(), &w, 1e-6);
        assert_grad_close(&p.grad(&w).unwrap(), &num, 1e-5);
        let num = central_diff(|v| p.sample_value(3, v).unwrap(), &w, 1e-6);
        assert_grad_close(&p.sample_grad(3, &w).unwrap(), &num, 1e-5);
    }
}

#[test]
fn identity_gmd_is_bitwise_gradient_descent() {
    let data = generate_regression(30, 8, 1, 0.0).unwrap();
    let p = mse_problem(data.clone());
    let w0 = rng::normal_vec(&mut rng::seeded(2), 8);
    let eta = 0.5 / pl_smooth_constants(&data).unwrap().l;
    let cfg = RunConfig::new(w0.clone(), 60)
        .with_stop_loss(0.0)
        .recording();
    let tr = run(&p, Mirror::Identity, &Schedule::fixed(eta), &cfg).unwrap();
    let oracle = gd_loop(&to_rows(&data.x), &data.y, &w0, eta, 60);
    let iterates = tr.iterates.as_ref().unwrap();
    assert_eq!(iterates.len(), oracle.len());
    for (a, b) in iterates.iter().zip(&oracle) {
        assert_eq!(a, b);
    }
}

#[test]
fn tanh_inverse_matches_bisection() {
    let m = TanhMirror::new(0.5).unwrap();
    let mut r = rng::seeded(11);
    for z in rng::uniform_vec(&mut r, 1000, -10.0, 10.0) {
        let x = m.scalar_inverse(z, 0).unwrap();
        let oracle = bisect(|v| v + 0.5 * v.tanh() - z, z - 0.5, z + 0.5);
        assert!((x - oracle).abs() <= 1e-10, "z={z}: {x} vs {oracle}");
        assert!((m.scalar(x) - z).abs() <= 1e-10);
    }
}

#[test]
fn tanh_bregman_matches_line_integral() {
    let mirror = Mirror::Tanh(TanhMirror::new(0.5).unwrap());
    let mut r = rng::seeded(21);
    for _ in 0..20 {
        let x = rng::uniform_vec(&mut r, 4, -3.0, 3.0);
        let y = rng::uniform_vec(&mut r, 4, -3.0, 3.0);
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let gy = mirror.forward(&y);
        let integrand = |s: f64| {
            let p: Vec<f64> = y.iter().zip(&dx).map(|(a, b)| a + s * b).collect();
            let gp = mirror.forward(&p);
            gp.iter()
                .zip(&gy)
                .zip(&dx)
                .map(|((a, b), c)| (a - b) * c)
                .sum::<f64>()
        };
        let quad = simpson(integrand, 0.0, 1.0, 2000);
        let d = bregman(&mirror, &x, &y).unwrap();
        assert!(
            (d - quad).abs() <= 1e-6 * (1.0 + quad.abs()),
            "{d} vs {quad}"
        );
    }
}

#[test]
fn adagrad_accumulator_matches_scalar_loop() {
    let grads = vec![
        vec![1.0, -2.0, 0.5],
        vec![0.0, 3.0, -1.5],
        vec![2.5, 0.1, 0.0],
    ];
    let mut s = AdagradState::new(3, 0.0).unwrap();
    for g in &grads {
        s = s.accumulate(g).unwrap();
    }
    assert_eq!(s.accumulator(), accumulate_squares(&grads, 3).as_slice());
}

#[test]
fn linear_step_matches_direct_solve() {
    let g = vec![
        vec![2.0, 0.5, 0.0],
        vec![0.5, 3.0, 0.2],
        vec![0.0, 0.2, 1.5],
    ];
    let mirror = Mirror::Linear(LinearMirror::new(Mat::from_rows(&g).unwrap()).unwrap());
    let w = [1.0, -1.0, 0.5];
    let grad = [0.3, 0.7, -0.2];
    let eta = 0.4;
    let next = gmd_step(&w, &mirror, &grad, eta).unwrap();
    let inv = invert(&g);
    for i in 0..3 {
        let step: f64 = (0..3).map(|j| inv[i][j] * grad[j]).sum();
        assert!((next[i] - (w[i] - eta * step)).abs() <= 1e-10);
    }
}

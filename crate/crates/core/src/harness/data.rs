use super::config::{Design, InitKind, InitSpec};
use crate::error::Result;
use crate::problems::Dataset;
use crate::rng;
use crate::tensor::{self, Mat};

/// `X` i.i.d. N(0,1), planted `w†` i.i.d. N(0,1), `y = X·w† + noise·u` with `u ~ U(−1, 1)`.
pub fn generate_regression(n: usize, d: usize, seed: u64, noise: f64) -> Result<Dataset> {
    generate_regression_with(n, d, seed, noise, Design::Gaussian, 1.0)
}

/// Like [`generate_regression`], with a choice of design and planted-weight scale.
///
/// The stream is consumed in a fixed order: `X` row-major, then `w†`, then `u`.
pub fn generate_regression_with(
    n: usize,
    d: usize,
    seed: u64,
    noise: f64,
    design: Design,
    target_scale: f64,
) -> Result<Dataset> {
    let mut r = rng::seeded(seed);
    let mut x = Mat::new(n, d, rng::normal_vec(&mut r, n * d))?;
    if design == Design::Orthogonal {
        x = orthogonal_columns(&x);
    }
    let w_true: Vec<f64> = rng::normal_vec(&mut r, d)
        .into_iter()
        .map(|v| target_scale * v)
        .collect();
    let mut y = x.matvec(&w_true);
    if noise > 0.0 {
        let u = rng::uniform_vec(&mut r, n, -1.0, 1.0);
        tensor::axpy(&mut y, noise, &u);
    }
    Dataset::new(x, y, noise == 0.0)
}

/// Modified Gram-Schmidt on the columns, each rescaled to norm `√n`, so `XᵀX = n·I`.
fn orthogonal_columns(x: &Mat) -> Mat {
    let (n, d) = (x.rows(), x.cols());
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..n).map(|i| x[(i, j)]).collect())
        .collect();
    for j in 0..d {
        for k in 0..j {
            let (head, tail) = cols.split_at_mut(j);
            let c = tensor::dot(&head[k], &tail[0]);
            tensor::axpy(&mut tail[0], -c, &head[k]);
        }
        let nrm = tensor::norm(&cols[j]);
        cols[j].iter_mut().for_each(|v| *v /= nrm);
    }
    let s = (n as f64).sqrt();
    let mut out = Mat::zeros(n, d);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            out[(i, j)] = s * c[i];
        }
    }
    out
}

/// Starting point for the run with seed `run_seed`.
pub fn initial_point(spec: &InitSpec, d: usize, run_seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(rng::derive(spec.seed, run_seed));
    match spec.kind {
        InitKind::Zero => vec![0.0; d],
        InitKind::Gaussian => rng::normal_vec(&mut r, d)
            .into_iter()
            .map(|v| spec.scale * v)
            .collect(),
        InitKind::Uniform => rng::uniform_vec(&mut r, d, -spec.scale, spec.scale),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let a = generate_regression(12, 4, 3, 0.0).unwrap();
        let b = generate_regression(12, 4, 3, 0.0).unwrap();
        assert_eq!(a, b);
        assert!(a.noiseless);
        assert_ne!(a, generate_regression(12, 4, 4, 0.0).unwrap());
    }

    #[test]
    fn noise_flag_follows_amplitude() {
        assert!(!generate_regression(5, 3, 0, 0.1).unwrap().noiseless);
    }

    #[test]
    fn orthogonal_design_has_scaled_identity_gram() {
        let data = generate_regression_with(30, 4, 1, 0.0, Design::Orthogonal, 1.0).unwrap();
        let g = data.x.gram_cols();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 30.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_init() {
        let spec = InitSpec {
            kind: InitKind::Zero,
            scale: 1.0,
            seed: 0,
        };
        assert_eq!(initial_point(&spec, 3, 7), vec![0.0; 3]);
    }
}

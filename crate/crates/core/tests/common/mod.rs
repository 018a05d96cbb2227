//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numerical kernels; each oracle is a
//! short textbook algorithm written against plain `Vec<Vec<f64>>`.

#![allow(dead_code)]

use gmd_core::rng;
use gmd_core::Mat;

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn random_mat(seed: u64, rows: usize, cols: usize) -> Mat {
    let mut r = rng::seeded(seed);
    Mat::new(rows, cols, rng::normal_vec(&mut r, rows * cols)).unwrap()
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// `(λ_max, smallest eigenvalue above tol·λ_max)` from the Jacobi spectrum.
pub fn jacobi_extremes(a: &[Vec<f64>], tol: f64) -> (f64, f64) {
    let ev = jacobi_eigenvalues(a);
    let max = *ev.last().unwrap();
    let min = ev.iter().copied().find(|&e| e > tol * max).unwrap();
    (max, min)
}

/// Central differences `(f(w + h·eᵢ) − f(w − h·eᵢ)) / 2h`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, w: &[f64], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|i| {
            let mut a = w.to_vec();
            let mut b = w.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Root of an increasing function on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Composite Simpson rule with `2k` panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, k: usize) -> f64 {
    let n = 2 * k;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + h * i as f64;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

fn matvec_rows(x: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum())
        .collect()
}

/// Plain gradient descent on `½‖Xw − y‖²` with step `eta`; returns every iterate.
pub fn gd_loop(x: &[Vec<f64>], y: &[f64], w0: &[f64], eta: f64, steps: usize) -> Vec<Vec<f64>> {
    let d = w0.len();
    let mut w = w0.to_vec();
    let mut out = vec![w.clone()];
    for _ in 0..steps {
        let xw = matvec_rows(x, &w);
        let r: Vec<f64> = xw.iter().zip(y).map(|(a, b)| a - b).collect();
        let mut g = vec![0.0; d];
        for (row, ri) in x.iter().zip(&r) {
            for j in 0..d {
                g[j] += ri * row[j];
            }
        }
        for j in 0..d {
            w[j] -= eta * g[j];
        }
        out.push(w.clone());
    }
    out
}

/// Gauss-Jordan inverse of a small nonsingular matrix.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())
            .unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        for v in m[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let src = m[c].clone();
                for (v, s) in m[r].iter_mut().zip(&src) {
                    *v -= f * s;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Dense pseudoinverse solution `Xᵀ(XXᵀ)⁻¹r` for full-row-rank `X`.
pub fn pinv_wide(x: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let n = x.len();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let inv = invert(&gram);
    let lam = matvec_rows(&inv, r);
    let d = x[0].len();
    (0..d)
        .map(|j| (0..n).map(|i| x[i][j] * lam[i]).sum())
        .collect()
}

/// Coordinate-wise sum of squares of the given gradients.
pub fn accumulate_squares(grads: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut g = vec![0.0; d];
    for grad in grads {
        for i in 0..d {
            g[i] += grad[i] * grad[i];
        }
    }
    g
}

use std::fmt;
use std::str::FromStr;

use super::{check_sample, Dataset, Problem};
use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::tensor::{check_len, dot, Mat};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    LeakyRelu,
    XPlusSin,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z >= 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::XPlusSin => z + z.sin(),
        }
    }

    /// Derivative; the leaky ReLU uses the positive-side slope at 0.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::XPlusSin => 1.0 + z.cos(),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::LeakyRelu => "leaky-relu",
            Activation::XPlusSin => "x-plus-sin",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaky-relu" => Ok(Activation::LeakyRelu),
            "x-plus-sin" => Ok(Activation::XPlusSin),
            other => Err(Error::UnknownActivation(other.to_string())),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Weights of a bias-free network `x ↦ vᵀ·act(W·x)`.
///
/// Flattened layout: `W` row-major (`hidden × d`), followed by `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub hidden: Mat,
    pub output: Vec<f64>,
}

impl MlpParams {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.hidden.as_slice().to_vec();
        out.extend_from_slice(&self.output);
        out
    }

    pub fn unflatten(flat: &[f64], hidden: usize, d: usize) -> Result<Self> {
        check_len(hidden * d + hidden, flat)?;
        let (w, v) = flat.split_at(hidden * d);
        Ok(MlpParams {
            hidden: Mat::new(hidden, d, w.to_vec())?,
            output: v.to_vec(),
        })
    }
}

/// Squared loss `½·Σᵢ(net(xᵢ) − yᵢ)²` of a one-hidden-layer network.
#[derive(Clone, Debug)]
pub struct MlpProblem {
    data: Dataset,
    hidden: usize,
    activation: Activation,
    init_seed: u64,
}

pub fn mlp_problem(
    data: Dataset,
    hidden: usize,
    activation: Activation,
    init_seed: u64,
) -> Result<MlpProblem> {
    if hidden == 0 {
        return Err(Error::InvalidParameter(
            "hidden width must be at least 1".into(),
        ));
    }
    Ok(MlpProblem {
        data,
        hidden,
        activation,
        init_seed,
    })
}

impl MlpProblem {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Uniform `±1/√fan_in` initialization drawn from the init seed.
    pub fn initial_params(&self) -> Vec<f64> {
        let d = self.data.d();
        let mut r = rng::seeded(self.init_seed);
        let a = 1.0 / (d as f64).sqrt();
        let mut flat = rng::uniform_vec(&mut r, self.hidden * d, -a, a);
        let b = 1.0 / (self.hidden as f64).sqrt();
        flat.extend(rng::uniform_vec(&mut r, self.hidden, -b, b));
        flat
    }

    pub fn output(&self, w: &[f64], x: &[f64]) -> Result<f64> {
        check_len(self.dim(), w)?;
        Ok(self.forward(w, x).0)
    }

    fn forward(&self, w: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.data.d();
        let (wh, v) = w.split_at(self.hidden * d);
        let pre: Vec<f64> = wh.chunks_exact(d).map(|row| dot(row, x)).collect();
        let out = pre
            .iter()
            .zip(v)
            .map(|(&z, &vk)| vk * self.activation.apply(z))
            .sum();
        (out, pre)
    }

    fn residual(&self, w: &[f64], i: usize) -> f64 {
        self.forward(w, self.data.x.row(i)).0 - self.data.y[i]
    }

    /// Gradient of `scale·½(net(xᵢ) − yᵢ)²`, accumulated into `g`.
    fn add_sample_grad(&self, w: &[f64], i: usize, scale: f64, g: &mut [f64]) {
        let d = self.data.d();
        let x = self.data.x.row(i);
        let (out, pre) = self.forward(w, x);
        let r = scale * (out - self.data.y[i]);
        let v = &w[self.hidden * d..];
        let (gw, gv) = g.split_at_mut(self.hidden * d);
        for (k, &z) in pre.iter().enumerate() {
            gv[k] += r * self.activation.apply(z);
            let c = r * v[k] * self.activation.derivative(z);
            for (gj, xj) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                *gj += c * xj;
            }
        }
    }
}

impl Problem for MlpProblem {
    fn dim(&self) -> usize {
        self.hidden * self.data.d() + self.hidden
    }

    fn n_samples(&self) -> usize {
        self.data.n()
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        check_len(self.dim(), w)?;
        let n = self.data.n();
        let exec = par::for_work(n * self.dim());
        let r = par::map_indices(n, exec, |i| self.residual(w, i));
        Ok(0.5 * dot(&r, &r))
    }

    fn grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), w)?;
        let n = self.data.n();
        let dim = self.dim();
        let exec = par::for_work(n * dim);
        let parts = par::map_indices(n, exec, |i| {
            let mut g = vec![0.0; dim];
            self.add_sample_grad(w, i, 1.0, &mut g);
            g
        });
        // summed in sample order so both execution modes agree bitwise
        let mut g = vec![0.0; dim];
        for p in &parts {
            for (a, b) in g.iter_mut().zip(p) {
                *a += b;
            }
        }
        Ok(g)
    }

    fn sample_value(&self, i: usize, w: &[f64]) -> Result<f64> {
        check_sample(i, self.data.n())?;
        check_len(self.dim(), w)?;
        let r = self.residual(w, i);
        Ok(0.5 * self.data.n() as f64 * r * r)
    }

    fn sample_grad(&self, i: usize, w: &[f64]) -> Result<Vec<f64>> {
        check_sample(i, self.data.n())?;
        check_len(self.dim(), w)?;
        let mut g = vec![0.0; self.dim()];
        self.add_sample_grad(w, i, self.data.n() as f64, &mut g);
        Ok(g)
    }
}

use super::{check_sample, Dataset, Problem};
use crate::error::Result;
use crate::tensor::{self, check_len, dot, AffineProjector};

/// `f(w) = ½‖Xw − y‖²`, `fᵢ(w) = (n/2)(xᵢ·w − yᵢ)²`.
#[derive(Clone, Debug)]
pub struct MseProblem {
    data: Dataset,
    optimum: f64,
}

/// Noisy data gets its least-squares optimum as `f*`; noiseless data has `f* = 0`.
pub fn mse_problem(data: Dataset) -> MseProblem {
    let optimum = if data.noiseless {
        0.0
    } else {
        least_squares_optimum(&data)
    };
    MseProblem { data, optimum }
}

fn least_squares_optimum(data: &Dataset) -> f64 {
    match AffineProjector::new(&data.x) {
        Ok(p) => {
            let w = p.pinv_apply(&data.y);
            let r = tensor::sub(&data.x.matvec(&w), &data.y);
            0.5 * dot(&r, &r)
        }
        Err(_) => 0.5 * dot(&data.y, &data.y),
    }
}

impl MseProblem {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn residual(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.data.d(), w)?;
        let mut r = self.data.x.matvec(w);
        tensor::axpy(&mut r, -1.0, &self.data.y);
        Ok(r)
    }
}

impl Problem for MseProblem {
    fn dim(&self) -> usize {
        self.data.d()
    }

    fn n_samples(&self) -> usize {
        self.data.n()
    }

    fn optimum_value(&self) -> f64 {
        self.optimum
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        let r = self.residual(w)?;
        Ok(0.5 * dot(&r, &r))
    }

    fn grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        let r = self.residual(w)?;
        Ok(self.data.x.tr_matvec(&r))
    }

    fn value_and_grad(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = self.residual(w)?;
        Ok((0.5 * dot(&r, &r), self.data.x.tr_matvec(&r)))
    }

    fn sample_value(&self, i: usize, w: &[f64]) -> Result<f64> {
        check_sample(i, self.data.n())?;
        check_len(self.data.d(), w)?;
        let ri = dot(self.data.x.row(i), w) - self.data.y[i];
        Ok(0.5 * self.data.n() as f64 * ri * ri)
    }

    fn sample_grad(&self, i: usize, w: &[f64]) -> Result<Vec<f64>> {
        check_sample(i, self.data.n())?;
        check_len(self.data.d(), w)?;
        let xi = self.data.x.row(i);
        let scale = self.data.n() as f64 * (dot(xi, w) - self.data.y[i]);
        Ok(xi.iter().map(|v| scale * v).collect())
    }
}

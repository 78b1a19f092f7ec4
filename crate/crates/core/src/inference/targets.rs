//! Simple analytic targets for exercising the sampler.

use super::posterior::LogDensity;

/// Independent normals with the given means and standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], sd: vec![1.0; dim] }
    }
}

impl LogDensity for DiagonalGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for i in 0..theta.len() {
            let z = (theta[i] - self.mean[i]) / self.sd[i];
            lp -= 0.5 * z * z;
            grad[i] = -z / self.sd[i];
        }
        lp
    }
}

/// Bivariate normal with unit variances and correlation `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelatedPair {
    pub rho: f64,
}

impl LogDensity for CorrelatedPair {
    fn dim(&self) -> usize {
        2
    }

    fn log_density_grad(&self, t: &[f64], grad: &mut [f64]) -> f64 {
        let c = 1.0 / (1.0 - self.rho * self.rho);
        grad[0] = -c * (t[0] - self.rho * t[1]);
        grad[1] = -c * (t[1] - self.rho * t[0]);
        -0.5 * c * (t[0] * t[0] - 2.0 * self.rho * t[0] * t[1] + t[1] * t[1])
    }
}

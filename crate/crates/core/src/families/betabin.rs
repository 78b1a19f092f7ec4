//! Beta-binomial with location `pi` and overdispersion `phi`.
//!
//! The daily use probability is `Beta(pi / phi, (1 - pi) / phi)` and the count
//! is binomial given that probability; the mixing distribution is integrated
//! out analytically.

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution};

use super::{check_positive, check_prob, check_support, IntervalLength};
use crate::error::Result;
use crate::math::ln_choose;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBinParams {
    pub pi: f64,
    pub phi: f64,
}

impl BetaBinParams {
    pub fn new(pi: f64, phi: f64) -> Result<Self> {
        check_prob("pi", pi)?;
        check_positive("phi", phi)?;
        Ok(Self { pi, phi })
    }

    /// Shape parameters of the Beta mixing distribution.
    pub fn shapes(&self) -> (f64, f64) {
        (self.pi / self.phi, (1.0 - self.pi) / self.phi)
    }
}

pub fn log_pmf(params: &BetaBinParams, d: u32, n: IntervalLength) -> Result<f64> {
    let p = BetaBinParams::new(params.pi, params.phi)?;
    check_support(d, n)?;
    Ok(log_pmf_unchecked(&p, d, n.get()))
}

/// `log C(n, d) + log B(d + a, n - d + b) - log B(a, b)` with the Beta-function
/// ratio expanded into rising factorials, which stays accurate as `phi -> 0`.
pub(crate) fn log_pmf_unchecked(p: &BetaBinParams, d: u32, n: u32) -> f64 {
    let (a, b) = p.shapes();
    ln_choose(n, d) + log_beta_ratio(a, b, d, n).0
}

/// Returns `(log B(d + a, n - d + b) - log B(a, b), d/da, d/db)`.
#[inline]
fn log_beta_ratio(a: f64, b: f64, d: u32, n: u32) -> (f64, f64, f64) {
    let (va, da) = ln_rising(a, d);
    let (vb, db) = ln_rising(b, n - d);
    let (vab, dab) = ln_rising(a + b, n);
    (va + vb - vab, da - dab, db - dab)
}

/// `ln(x (x + 1) ... (x + m - 1))` and its derivative in `x`. Factors are
/// multiplied in blocks so only a few logarithms are taken per call.
#[inline]
fn ln_rising(x: f64, m: u32) -> (f64, f64) {
    let mut value = 0.0f64;
    let mut prod = 1.0f64;
    let mut deriv = 0.0;
    for k in 0..m {
        let t = x + k as f64;
        if prod > 1e150 || t > 1e100 {
            value += prod.ln();
            prod = 1.0;
        }
        prod *= t;
        deriv += 1.0 / t;
    }
    (value + prod.ln(), deriv)
}

pub fn sample<R: Rng + ?Sized>(params: &BetaBinParams, n: IntervalLength, rng: &mut R) -> u32 {
    let (a, b) = params.shapes();
    let p = Beta::new(a, b).expect("valid beta").sample(rng);
    Binomial::new(n.get() as u64, p.clamp(0.0, 1.0))
        .expect("valid binomial")
        .sample(rng) as u32
}

/// Log-likelihood and derivatives with respect to `(logit pi, log phi)`.
#[inline]
pub(crate) fn loglik_grad(d: u32, n: u32, pi_logit: f64, log_phi: f64, ln_choose_nd: f64) -> (f64, [f64; 2]) {
    let pi = crate::math::sigmoid(pi_logit);
    let inv_phi = (-log_phi).exp();
    let a = pi * inv_phi;
    let b = (1.0 - pi) * inv_phi;
    let (v, da, db) = log_beta_ratio(a, b, d, n);
    let dpi = pi * (1.0 - pi) * inv_phi;
    (ln_choose_nd + v, [(da - db) * dpi, -(da * a + db * b)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::binomial;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn n(k: u32) -> IntervalLength {
        IntervalLength::new(k).unwrap()
    }

    #[test]
    fn uniform_mixing_gives_discrete_uniform() {
        let p = BetaBinParams::new(0.5, 0.5).unwrap();
        for d in 0..=28 {
            assert!((log_pmf(&p, d, n(28)).unwrap() - (1.0f64 / 29.0).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn binomial_limit() {
        for &pi in &[0.05, 0.3, 0.5, 0.82] {
            let p = BetaBinParams::new(pi, 1e-8).unwrap();
            let q = binomial::BinomialParams::new(pi).unwrap();
            for d in 0..=28 {
                let a = log_pmf(&p, d, n(28)).unwrap().exp();
                let b = binomial::log_pmf(&q, d, n(28)).unwrap().exp();
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn monte_carlo_mixture_oracle() {
        // pi = 0.3, phi = 0.4 -> Beta(0.75, 1.75) mixing distribution.
        let p = BetaBinParams::new(0.3, 0.4).unwrap();
        let (a, b) = p.shapes();
        assert!((a - 0.75).abs() < 1e-12 && (b - 1.75).abs() < 1e-12);
        let beta = Beta::new(a, b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000_000usize;
        let mut counts = [0usize; 11];
        for _ in 0..draws {
            let pr = beta.sample(&mut rng);
            let d = Binomial::new(10, pr).unwrap().sample(&mut rng) as usize;
            counts[d] += 1;
        }
        for d in 0..=10u32 {
            let exact = log_pmf(&p, d, n(10)).unwrap().exp();
            let freq = counts[d as usize] as f64 / draws as f64;
            let se = (exact * (1.0 - exact) / draws as f64).sqrt();
            assert!((freq - exact).abs() < 3.0 * se, "d={d}: {freq} vs {exact}");
        }
    }

    #[test]
    fn kernel_finite_differences() {
        let h = 1e-6;
        for d in [0u32, 3, 14, 28] {
            for &(x, y) in &[(0.2, -1.0), (-1.5, 0.7), (2.2, -3.0)] {
                let f = |x: f64, y: f64| loglik_grad(d, 28, x, y, 0.0).0;
                let (_, g) = loglik_grad(d, 28, x, y, 0.0);
                let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
                let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
                assert!((g[0] - fx).abs() < 1e-6 * g[0].abs().max(1.0));
                assert!((g[1] - fy).abs() < 1e-6 * g[1].abs().max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn normalizes(pi in 0.001f64..0.999, log_phi in -8.0f64..5.0, k in 1u32..40) {
            let p = BetaBinParams::new(pi, log_phi.exp()).unwrap();
            let total: f64 = (0..=k).map(|d| log_pmf(&p, d, n(k)).unwrap().exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::{check_prob, check_support, IntervalLength};
use crate::error::Result;
use crate::math::{ln_choose, log_sigmoid, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialParams {
    /// Probability of use on any single day.
    pub pi: f64,
}

impl BinomialParams {
    pub fn new(pi: f64) -> Result<Self> {
        check_prob("pi", pi)?;
        Ok(Self { pi })
    }
}

pub fn log_pmf(params: &BinomialParams, d: u32, n: IntervalLength) -> Result<f64> {
    check_prob("pi", params.pi)?;
    check_support(d, n)?;
    Ok(log_pmf_unchecked(params.pi, d, n.get()))
}

pub(crate) fn log_pmf_unchecked(pi: f64, d: u32, n: u32) -> f64 {
    ln_choose(n, d) + d as f64 * pi.ln() + (n - d) as f64 * (-pi).ln_1p()
}

pub fn sample<R: Rng + ?Sized>(params: &BinomialParams, n: IntervalLength, rng: &mut R) -> u32 {
    Binomial::new(n.get() as u64, params.pi)
        .expect("valid binomial")
        .sample(rng) as u32
}

/// Log-likelihood and derivative with respect to `logit pi`.
/// `ln_choose_nd` is the precomputed binomial coefficient term.
#[inline]
pub(crate) fn loglik_grad(d: u32, n: u32, pi_logit: f64, ln_choose_nd: f64) -> (f64, f64) {
    let df = d as f64;
    let value = ln_choose_nd + df * log_sigmoid(pi_logit) + (n - d) as f64 * log_sigmoid(-pi_logit);
    (value, df - n as f64 * sigmoid(pi_logit))
}

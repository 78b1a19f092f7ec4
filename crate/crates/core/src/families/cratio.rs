//! Many-levelled continuation-ratio (sequential logit) family.
//!
//! A count `d` arises from a sequence of binary decisions: starting at zero,
//! the process passes from `r - 1` to at least `r` days with probability
//! `logistic(eta - theta_r)` and stops otherwise. One threshold exists per
//! possible progression, so the support is `0..=N` with `N` thresholds.

use rand::Rng;

use super::{check_support, IntervalLength};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct CRatioParams {
    /// Shared linear predictor on the log-odds scale.
    pub eta: f64,
    /// `theta_1..theta_N`; no ordering constraint is required.
    pub thresholds: Vec<f64>,
}

impl CRatioParams {
    pub fn new(eta: f64, thresholds: Vec<f64>) -> Result<Self> {
        if !eta.is_finite() {
            return Err(Error::Domain(format!("eta must be finite, got {eta}")));
        }
        if thresholds.is_empty() {
            return Err(Error::Domain("at least one threshold is required".into()));
        }
        if let Some(t) = thresholds.iter().find(|t| !t.is_finite()) {
            return Err(Error::Domain(format!("thresholds must be finite, got {t}")));
        }
        Ok(Self { eta, thresholds })
    }

    pub fn n_days(&self) -> IntervalLength {
        IntervalLength::new(self.thresholds.len() as u32).expect("non-empty thresholds")
    }

    fn validate_for(&self, n: IntervalLength) -> Result<()> {
        if self.thresholds.len() != n.as_usize() {
            return Err(Error::Domain(format!(
                "expected {n} thresholds, got {}",
                self.thresholds.len()
            )));
        }
        if !self.eta.is_finite() || self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("non-finite continuation-ratio parameter".into()));
        }
        Ok(())
    }
}

pub fn log_pmf(params: &CRatioParams, d: u32, n: IntervalLength) -> Result<f64> {
    params.validate_for(n)?;
    check_support(d, n)?;
    Ok(log_pmf_unchecked(params.eta, &params.thresholds, d as usize))
}

pub(crate) fn log_pmf_unchecked(eta: f64, thresholds: &[f64], d: usize) -> f64 {
    let passed: f64 = thresholds[..d].iter().map(|t| log_sigmoid(eta - t)).sum();
    match thresholds.get(d) {
        Some(t) => passed + log_sigmoid(t - eta),
        None => passed,
    }
}

/// Log-probabilities of every count `0..=N` in a single pass.
pub fn log_pmf_table(params: &CRatioParams) -> Vec<f64> {
    let n = params.thresholds.len();
    let mut out = Vec::with_capacity(n + 1);
    let mut passed = 0.0;
    for t in &params.thresholds {
        out.push(passed + log_sigmoid(t - params.eta));
        passed += log_sigmoid(params.eta - t);
    }
    out.push(passed);
    out
}

/// Simulates the sequential pass/stop process.
pub fn sample<R: Rng + ?Sized>(params: &CRatioParams, rng: &mut R) -> u32 {
    let mut d = 0;
    for t in &params.thresholds {
        if rng.random::<f64>() < sigmoid(params.eta - t) {
            d += 1;
        } else {
            break;
        }
    }
    d
}

/// Log-likelihood of one count with its derivatives.
///
/// Returns `(value, d value / d eta)` and adds `d value / d theta_r` into
/// `grad_thresholds`. `exp_thresholds[r]` must hold `exp(theta_r)`; when
/// `|eta|` or any threshold is too large for that representation, pass `None`
/// to use the log-sigmoid path.
#[inline]
pub(crate) fn loglik_grad(
    eta: f64,
    thresholds: &[f64],
    exp_thresholds: Option<&[f64]>,
    d: usize,
    grad_thresholds: &mut [f64],
) -> (f64, f64) {
    let n = thresholds.len();
    let last = (d + 1).min(n);
    let mut value;
    let mut d_eta = 0.0;
    match exp_thresholds {
        Some(et) if eta.abs() < 300.0 => {
            // u_r = exp(theta_r - eta); log-sigmoid(eta - theta_r) = -log(1 + u_r).
            let e = (-eta).exp();
            let mut prod = 1.0;
            let mut log_acc = 0.0;
            for r in 0..last {
                let u = et[r] * e;
                let one_u = 1.0 + u;
                prod *= one_u;
                let t = u / one_u;
                d_eta += t;
                grad_thresholds[r] -= t;
                if prod > 1e280 {
                    log_acc += prod.ln();
                    prod = 1.0;
                }
            }
            value = -(log_acc + prod.ln());
        }
        _ => {
            value = 0.0;
            for r in 0..last {
                let x = eta - thresholds[r];
                value += log_sigmoid(x);
                let t = sigmoid(-x);
                d_eta += t;
                grad_thresholds[r] -= t;
            }
        }
    }
    if d < n {
        // The stop term is log-sigmoid(theta - eta) = (theta - eta) + log-sigmoid(eta - theta).
        value += thresholds[d] - eta;
        d_eta -= 1.0;
        grad_thresholds[d] += 1.0;
    }
    (value, d_eta)
}

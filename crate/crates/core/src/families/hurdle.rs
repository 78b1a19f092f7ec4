//! Hurdle negative binomial: a point mass at zero with probability `psi`
//! and a zero-truncated negative binomial (mean `mu`, dispersion `alpha`,
//! variance `mu + alpha * mu^2` before truncation) for positive counts.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

use super::{check_positive, check_prob, HURDLE_MAX_TERMS, HURDLE_TAIL_MASS};
use crate::error::Result;
use crate::math::{ln_factorial, log1m_exp};

/// Counts above this use log-gamma differences instead of the exact sum.
const DIRECT_SUM_LIMIT: u32 = 2_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurdleNBParams {
    pub psi: f64,
    pub mu: f64,
    pub alpha: f64,
}

impl HurdleNBParams {
    pub fn new(psi: f64, mu: f64, alpha: f64) -> Result<Self> {
        check_prob("psi", psi)?;
        check_positive("mu", mu)?;
        check_positive("alpha", alpha)?;
        Ok(Self { psi, mu, alpha })
    }

    /// `log NB(0; mu, alpha) = -(1/alpha) log(1 + alpha mu)`.
    pub fn log_nb_zero(&self) -> f64 {
        -(self.alpha * self.mu).ln_1p() / self.alpha
    }
}

/// Untruncated negative binomial log-pmf.
pub fn log_nb(d: u32, mu: f64, alpha: f64) -> f64 {
    let l = (alpha * mu).ln_1p();
    let r = 1.0 / alpha;
    let rising = if d <= DIRECT_SUM_LIMIT {
        // sum_{k<d} log(r + k) + d log(alpha) = sum_{k<d} log1p(k alpha)
        (0..d).map(|k| (k as f64 * alpha).ln_1p()).sum::<f64>()
    } else {
        ln_gamma(d as f64 + r) - ln_gamma(r) + d as f64 * alpha.ln()
    };
    d as f64 * mu.ln() + rising - ln_factorial(d as u64) - (r + d as f64) * l
}

pub fn log_pmf(params: &HurdleNBParams, d: u32) -> Result<f64> {
    let p = HurdleNBParams::new(params.psi, params.mu, params.alpha)?;
    Ok(log_pmf_unchecked(&p, d))
}

pub(crate) fn log_pmf_unchecked(p: &HurdleNBParams, d: u32) -> f64 {
    if d == 0 {
        p.psi.ln()
    } else {
        (-p.psi).ln_1p() + log_nb(d, p.mu, p.alpha) - log1m_exp(p.log_nb_zero())
    }
}

/// Probabilities from zero until the remaining tail mass drops below
/// [`HURDLE_TAIL_MASS`], capped at [`HURDLE_MAX_TERMS`] entries.
pub fn pmf_table(p: &HurdleNBParams) -> Vec<f64> {
    let mut out = vec![p.psi];
    let mut cum = p.psi;
    // Recurrence NB(d+1) = NB(d) (d + r) / (d + 1) * q in log space.
    let q_ln = (p.alpha * p.mu).ln() - (p.alpha * p.mu).ln_1p();
    let r = 1.0 / p.alpha;
    let scale = (-p.psi).ln_1p() - log1m_exp(p.log_nb_zero());
    let mut log_nb_d = log_nb(1, p.mu, p.alpha);
    let mut d = 1usize;
    while d < HURDLE_MAX_TERMS {
        let pr = (scale + log_nb_d).exp();
        out.push(pr);
        cum += pr;
        // Past the mode the tail is bounded by the remaining mass.
        if 1.0 - cum < HURDLE_TAIL_MASS && d as f64 >= p.mu {
            break;
        }
        log_nb_d += ((d as f64 + r) / (d as f64 + 1.0)).ln() + q_ln;
        d += 1;
    }
    out
}

pub fn sample<R: Rng + ?Sized>(p: &HurdleNBParams, rng: &mut R) -> u32 {
    if rng.random::<f64>() < p.psi {
        return 0;
    }
    let nb0 = p.log_nb_zero().exp();
    if nb0 < 0.5 {
        let gamma = Gamma::new(1.0 / p.alpha, p.alpha * p.mu).expect("valid gamma");
        loop {
            let lambda = gamma.sample(rng);
            if lambda <= 0.0 {
                continue;
            }
            let d = match Poisson::new(lambda) {
                Ok(pois) => pois.sample(rng),
                Err(_) => continue,
            };
            if d >= 1.0 {
                return d.min(u32::MAX as f64) as u32;
            }
        }
    }
    // Mostly-zero negative binomial: invert the truncated cdf directly.
    let u = rng.random::<f64>();
    let q_ln = (p.alpha * p.mu).ln() - (p.alpha * p.mu).ln_1p();
    let r = 1.0 / p.alpha;
    let norm = log1m_exp(p.log_nb_zero());
    let mut log_pr = log_nb(1, p.mu, p.alpha) - norm;
    let mut cum = 0.0;
    let mut d = 1u32;
    loop {
        cum += log_pr.exp();
        if u <= cum || d as usize >= HURDLE_MAX_TERMS {
            return d;
        }
        log_pr += ((d as f64 + r) / (d as f64 + 1.0)).ln() + q_ln;
        d += 1;
    }
}

/// Log-likelihood and its derivatives with respect to
/// `(logit psi, log mu, log alpha)` for a single count.
#[cfg(test)]
pub(crate) fn loglik_grad(d: u32, psi_logit: f64, mu: f64, alpha: f64) -> (f64, [f64; 3]) {
    loglik_grad_cached(d, psi_logit, mu, alpha, None)
}

/// Cumulative `sum_{k<d} log1p(k alpha)` and `sum_{k<d} k alpha / (1 + k alpha)`
/// for a fixed `alpha`, shared across observations.
#[derive(Debug, Clone)]
pub(crate) struct RisingTable {
    value: Vec<f64>,
    grad: Vec<f64>,
}

impl RisingTable {
    pub(crate) fn new(alpha: f64, max_d: u32) -> Self {
        let mut value = Vec::with_capacity(max_d as usize + 1);
        let mut grad = Vec::with_capacity(max_d as usize + 1);
        let (mut v, mut g) = (0.0, 0.0);
        for k in 0..=max_d {
            value.push(v);
            grad.push(g);
            let ka = k as f64 * alpha;
            v += ka.ln_1p();
            g += ka / (1.0 + ka);
        }
        Self { value, grad }
    }
}

#[inline]
pub(crate) fn loglik_grad_cached(
    d: u32,
    psi_logit: f64,
    mu: f64,
    alpha: f64,
    table: Option<&RisingTable>,
) -> (f64, [f64; 3]) {
    let psi = crate::math::sigmoid(psi_logit);
    if d == 0 {
        return (crate::math::log_sigmoid(psi_logit), [1.0 - psi, 0.0, 0.0]);
    }
    let am = alpha * mu;
    let l = am.ln_1p();
    let df = d as f64;
    let (rising, rising_grad) = match table {
        Some(t) if (d as usize) < t.value.len() => (t.value[d as usize], t.grad[d as usize]),
        _ => {
            let mut rising = 0.0;
            let mut rising_grad = 0.0;
            for k in 0..d {
                let ka = k as f64 * alpha;
                rising += ka.ln_1p();
                rising_grad += ka / (1.0 + ka);
            }
            (rising, rising_grad)
        }
    };
    let nb = df * mu.ln() + rising - ln_factorial(d as u64) - (1.0 / alpha + df) * l;
    let z = -l / alpha;
    let trunc = log1m_exp(z);
    let value = crate::math::log_sigmoid(-psi_logit) + nb - trunc;

    let d_nb_mu = (df - mu) / (1.0 + am);
    let d_nb_alpha = rising_grad + l / alpha - (1.0 + alpha * df) * mu / (1.0 + am);
    let dz_mu = -mu / (1.0 + am);
    let dz_alpha = l / alpha - mu / (1.0 + am);
    // d trunc / dz = -1 / expm1(-z)
    let dt_dz = -1.0 / (-z).exp_m1();
    (
        value,
        [-psi, d_nb_mu - dt_dz * dz_mu, d_nb_alpha - dt_dz * dz_alpha],
    )
}

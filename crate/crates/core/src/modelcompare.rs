//! Pointwise log-likelihoods, Pareto-smoothed importance sampling
//! leave-one-out cross-validation, and model comparison tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::convergence::ess_raw;
use crate::error::{Error, Result};
use crate::inference::{ModelData, Posterior, PosteriorDraws};
use crate::math::{log_sum_exp, sample_variance};
use crate::regression::ModelSpec;

/// `n_draws x n_obs` log-likelihood matrix (row-major) with the chain of
/// each draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseLogLik {
    pub n_draws: usize,
    pub n_obs: usize,
    pub values: Vec<f64>,
    pub chain_id: Vec<usize>,
}

impl PointwiseLogLik {
    pub fn new(n_draws: usize, n_obs: usize, values: Vec<f64>, chain_id: Vec<usize>) -> Result<Self> {
        if values.len() != n_draws * n_obs || chain_id.len() != n_draws {
            return Err(Error::Dimension(format!(
                "{} values and {} chain ids for {n_draws} draws x {n_obs} observations",
                values.len(),
                chain_id.len()
            )));
        }
        Ok(Self { n_draws, n_obs, values, chain_id })
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n_draws).map(|s| self.values[s * self.n_obs + i]).collect()
    }

    /// Total log-likelihood of each draw.
    pub fn row_sums(&self) -> Vec<f64> {
        self.values.chunks_exact(self.n_obs.max(1)).map(|r| r.iter().sum()).collect()
    }
}

pub fn pointwise_loglik(draws: &PosteriorDraws, model: &ModelSpec, data: &ModelData) -> Result<PointwiseLogLik> {
    let post = Posterior::new(model, data)?;
    let n_obs = data.n_rows();
    let mut values = vec![0.0; draws.n_draws() * n_obs];
    if n_obs > 0 {
        values
            .par_chunks_mut(n_obs)
            .enumerate()
            .for_each(|(s, row)| post.pointwise_loglik(draws.draw(s), row));
    }
    if let Some(p) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite log-likelihood for row {} at draw {}",
            p % n_obs.max(1),
            p / n_obs.max(1)
        )));
    }
    PointwiseLogLik::new(draws.n_draws(), n_obs, values, draws.chain_id.clone())
}

/// Generalized Pareto fit `(k, sigma)` to positive exceedances, by the
/// profile-likelihood Bayesian estimator with a weakly informative prior
/// pulling `k` toward 0.5. `x` must be sorted ascending.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt() as usize;
    let xstar = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let x_max = x[n - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let l_theta: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let k = x.iter().map(|&xi| (-t * xi).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((-t / k).ln() - k - 1.0)
        })
        .collect();
    let lse = log_sum_exp(&l_theta);
    let theta_hat: f64 = theta.iter().zip(&l_theta).map(|(t, l)| t * (l - lse).exp()).sum();
    let k = x.iter().map(|&xi| (-theta_hat * xi).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let nf = n as f64;
    let k = k * nf / (nf + 10.0) + 10.0 * 0.5 / (nf + 10.0);
    (if k.is_nan() { f64::INFINITY } else { k }, sigma)
}

/// Generalized Pareto quantile function.
pub fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * ((-k * (-p).ln_1p()).exp_m1()) / k
    }
}

/// Pareto-smoothed, truncated, normalized log weights and the tail shape
/// estimate (`None` when the tail is degenerate and cannot be fitted).
pub fn psis_smooth(log_ratios: &[f64], r_eff: f64) -> (Vec<f64>, Option<f64>) {
    let s = log_ratios.len();
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|x| x - max).collect();
    let tail_len = (0.2 * s as f64).min(3.0 * (s as f64 / r_eff).sqrt()).ceil() as usize;
    let mut k = None;
    if tail_len >= 5 && tail_len < s {
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
        let tail = &order[s - tail_len..];
        let cutoff = lw[order[s - tail_len - 1]];
        let max_tail = lw[tail[tail_len - 1]];
        if (max_tail - cutoff).abs() > f64::EPSILON / 100.0 {
            let exp_cutoff = cutoff.exp();
            let x: Vec<f64> = tail.iter().map(|&i| lw[i].exp() - exp_cutoff).collect();
            let (kh, sigma) = gpd_fit(&x);
            if kh.is_finite() {
                for (j, &i) in tail.iter().enumerate() {
                    let p = (j as f64 + 0.5) / tail_len as f64;
                    lw[i] = (gpd_quantile(p, kh, sigma) + exp_cutoff).ln();
                }
            }
            k = Some(kh);
        }
    } else if tail_len < 5 {
        log::warn!("only {s} draws; the Pareto tail cannot be fitted");
    }
    // Truncate at the largest raw weight, then normalize.
    for w in lw.iter_mut() {
        if *w > 0.0 {
            *w = 0.0;
        }
    }
    let norm = log_sum_exp(&lw);
    lw.iter_mut().for_each(|w| *w -= norm);
    (lw, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParetoFlag {
    Good,
    Ok,
    Bad,
    /// The importance ratios are (numerically) constant.
    Degenerate,
}

impl ParetoFlag {
    pub fn of(k: Option<f64>) -> Self {
        match k {
            None => ParetoFlag::Degenerate,
            Some(k) if k < 0.5 => ParetoFlag::Good,
            Some(k) if k < 0.7 => ParetoFlag::Ok,
            Some(_) => ParetoFlag::Bad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub elpd_loo: f64,
    pub se_elpd_loo: f64,
    pub p_loo: f64,
    pub se_p_loo: f64,
    pub looic: f64,
    pub se_looic: f64,
    pub pointwise_elpd: Vec<f64>,
    pub pointwise_p_loo: Vec<f64>,
    pub pareto_k: Vec<Option<f64>>,
    pub r_eff: Vec<f64>,
    /// Fingerprint of the data the fit used, when known.
    pub fingerprint: Option<String>,
}

impl LooResult {
    pub fn n_obs(&self) -> usize {
        self.pointwise_elpd.len()
    }

    pub fn flags(&self) -> Vec<ParetoFlag> {
        self.pareto_k.iter().map(|k| ParetoFlag::of(*k)).collect()
    }
}

fn se_of_sum(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    (v.len() as f64 * sample_variance(v)).sqrt()
}

/// Relative efficiency of `exp(ll)` per observation, from the chain
/// structure of the draws.
fn relative_efficiency(col: &[f64], chain_id: &[usize]) -> f64 {
    let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_chains = chain_id.iter().copied().max().map_or(0, |m| m + 1);
    let mut chains: Vec<Vec<f64>> = vec![Vec::new(); n_chains];
    for (v, &c) in col.iter().zip(chain_id) {
        chains[c].push((v - max).exp());
    }
    chains.retain(|c| !c.is_empty());
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    if len < 4 {
        return 1.0;
    }
    chains.iter_mut().for_each(|c| c.truncate(len));
    match ess_raw(&chains) {
        Some(e) if e.is_finite() && e > 0.0 => e / (len * chains.len()) as f64,
        _ => 1.0,
    }
}

pub fn psis_loo(ll: &PointwiseLogLik) -> Result<LooResult> {
    let (s, n) = (ll.n_draws, ll.n_obs);
    if s == 0 || n == 0 {
        return Err(Error::Data("PSIS-LOO needs at least one draw and one observation".into()));
    }
    if s < 100 {
        log::warn!("PSIS-LOO with only {s} draws is unreliable");
    }
    let per_obs: Vec<(f64, f64, Option<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let col = ll.column(i);
            let r_eff = relative_efficiency(&col, &ll.chain_id);
            let neg: Vec<f64> = col.iter().map(|v| -v).collect();
            let (lw, k) = psis_smooth(&neg, r_eff);
            let elpd = if k.is_none() {
                // Degenerate ratios: plain average.
                log_sum_exp(&col) - (s as f64).ln()
            } else {
                log_sum_exp(&lw.iter().zip(&col).map(|(w, l)| w + l).collect::<Vec<_>>())
            };
            let lpd = log_sum_exp(&col) - (s as f64).ln();
            (elpd, lpd - elpd, k, r_eff)
        })
        .collect();
    let pointwise_elpd: Vec<f64> = per_obs.iter().map(|t| t.0).collect();
    let pointwise_p_loo: Vec<f64> = per_obs.iter().map(|t| t.1).collect();
    let elpd_loo: f64 = pointwise_elpd.iter().sum();
    let se_elpd_loo = se_of_sum(&pointwise_elpd);
    Ok(LooResult {
        elpd_loo,
        se_elpd_loo,
        p_loo: pointwise_p_loo.iter().sum(),
        se_p_loo: se_of_sum(&pointwise_p_loo),
        looic: -2.0 * elpd_loo,
        se_looic: 2.0 * se_elpd_loo,
        pareto_k: per_obs.iter().map(|t| t.2).collect(),
        r_eff: per_obs.iter().map(|t| t.3).collect(),
        pointwise_elpd,
        pointwise_p_loo,
        fingerprint: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub p_loo: f64,
    pub se_p_loo: f64,
    pub looic: f64,
    pub se_looic: f64,
    /// `elpd_loo - elpd_loo(best)`; zero for the best model.
    pub elpd_diff: f64,
    /// Standard error of the paired pointwise differences.
    pub se_diff: f64,
}

/// Models sorted by ascending LOO-IC (ties by name).
pub fn compare(results: &[(String, LooResult)]) -> Result<Vec<CompareRow>> {
    let Some((_, first)) = results.first() else {
        return Err(Error::Comparison("no models to compare".into()));
    };
    for (name, r) in results {
        if r.n_obs() != first.n_obs() {
            return Err(Error::Comparison(format!(
                "`{name}` has {} observations, expected {}",
                r.n_obs(),
                first.n_obs()
            )));
        }
        if r.fingerprint != first.fingerprint {
            return Err(Error::Comparison(format!("`{name}` was fitted to different data")));
        }
    }
    let mut order: Vec<&(String, LooResult)> = results.iter().collect();
    order.sort_by(|a, b| a.1.looic.total_cmp(&b.1.looic).then_with(|| a.0.cmp(&b.0)));
    let best = &order[0].1;
    Ok(order
        .iter()
        .map(|(name, r)| {
            let diff: Vec<f64> = r.pointwise_elpd.iter().zip(&best.pointwise_elpd).map(|(a, b)| a - b).collect();
            CompareRow {
                model: name.clone(),
                p_loo: r.p_loo,
                se_p_loo: r.se_p_loo,
                looic: r.looic,
                se_looic: r.se_looic,
                elpd_diff: diff.iter().sum(),
                se_diff: se_of_sum(&diff),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gpd_fit_recovers_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (k, sigma) = (0.4, 1.0);
        let mut x: Vec<f64> = (0..10_000)
            .map(|_| {
                let u: f64 = rng.random();
                gpd_quantile(u, k, sigma)
            })
            .collect();
        x.sort_by(f64::total_cmp);
        let (kh, sh) = gpd_fit(&x);
        assert!((kh - k).abs() < 0.1, "{kh}");
        assert!((sh - sigma).abs() < 0.1, "{sh}");
    }

    #[test]
    fn gpd_quantile_edges() {
        assert_eq!(gpd_quantile(0.0, 0.3, 2.0), 0.0);
        let p: f64 = 0.7;
        assert!((gpd_quantile(p, 0.0, 2.0) - (-2.0 * (1.0 - p).ln())).abs() < 1e-12);
    }

    #[test]
    fn constant_likelihood_is_degenerate() {
        let (s, n) = (400, 3);
        let values: Vec<f64> = (0..s).flat_map(|_| [-1.0, -2.5, -0.3]).collect();
        let ll = PointwiseLogLik::new(s, n, values, (0..s).map(|i| i / 100).collect()).unwrap();
        let r = psis_loo(&ll).unwrap();
        for (e, v) in r.pointwise_elpd.iter().zip([-1.0, -2.5, -0.3]) {
            assert!((e - v).abs() < 1e-12);
        }
        assert!(r.p_loo.abs() < 1e-12);
        assert!(r.flags().iter().all(|f| *f == ParetoFlag::Degenerate));
        assert_eq!(r.looic, -2.0 * r.elpd_loo);
    }

    #[test]
    fn pareto_k_invariant_to_shifting_one_observation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (s, n) = (1000, 2);
        let values: Vec<f64> = (0..s * n).map(|_| -rng.random::<f64>() * 3.0).collect();
        let shifted: Vec<f64> = values.iter().enumerate().map(|(i, v)| if i % n == 0 { v + 7.0 } else { *v }).collect();
        let chain_id: Vec<usize> = (0..s).map(|i| i / 250).collect();
        let a = psis_loo(&PointwiseLogLik::new(s, n, values, chain_id.clone()).unwrap()).unwrap();
        let b = psis_loo(&PointwiseLogLik::new(s, n, shifted, chain_id).unwrap()).unwrap();
        assert!((a.pareto_k[0].unwrap() - b.pareto_k[0].unwrap()).abs() < 1e-9);
    }

    fn loo(elpd: Vec<f64>, fp: &str) -> LooResult {
        let e: f64 = elpd.iter().sum();
        LooResult {
            elpd_loo: e,
            se_elpd_loo: se_of_sum(&elpd),
            p_loo: 1.0,
            se_p_loo: 0.1,
            looic: -2.0 * e,
            se_looic: 2.0 * se_of_sum(&elpd),
            pareto_k: vec![Some(0.1); elpd.len()],
            r_eff: vec![1.0; elpd.len()],
            pointwise_p_loo: vec![0.0; elpd.len()],
            pointwise_elpd: elpd,
            fingerprint: Some(fp.into()),
        }
    }

    #[test]
    fn compare_sorts_and_is_order_invariant() {
        let a = ("a".to_string(), loo(vec![-1.0, -2.0, -1.5], "x"));
        let b = ("b".to_string(), loo(vec![-0.5, -2.0, -1.0], "x"));
        let t1 = compare(&[a.clone(), b.clone()]).unwrap();
        let t2 = compare(&[b.clone(), a.clone()]).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1[0].model, "b");
        assert_eq!(t1[0].elpd_diff, 0.0);
        assert!((t1[1].elpd_diff + 1.0).abs() < 1e-12);
        let dup = compare(&[a.clone(), ("a2".to_string(), a.1.clone())]).unwrap();
        assert_eq!(dup[1].elpd_diff, 0.0);
        assert_eq!(dup[1].se_diff, 0.0);
        assert_eq!(compare(&[a.clone()]).unwrap().len(), 1);
        let other = ("c".to_string(), loo(vec![-1.0, -2.0, -1.5], "y"));
        assert!(matches!(compare(&[a, other]), Err(Error::Comparison(_))));
    }
}

//! Rank-normalized split R-hat and effective sample sizes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::inference::PosteriorDraws;
use crate::math::{quantile_sorted, sorted_copy};

/// Convergence summary for every coordinate of a draw matrix. `None`
/// marks an undefined value (constant draws).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatReport {
    pub names: Vec<String>,
    pub rhat: Vec<Option<f64>>,
    pub ess_bulk: Vec<Option<f64>>,
    pub ess_tail: Vec<Option<f64>>,
}

impl RhatReport {
    /// Largest defined R-hat.
    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat.iter().flatten().copied().reduce(f64::max)
    }
}

pub fn rhat_report(draws: &PosteriorDraws, names: &[String]) -> Result<RhatReport> {
    if names.len() != draws.dim {
        return Err(Error::Dimension(format!("{} names for {} parameters", names.len(), draws.dim)));
    }
    let mut report = RhatReport { names: names.to_vec(), rhat: Vec::new(), ess_bulk: Vec::new(), ess_tail: Vec::new() };
    for j in 0..draws.dim {
        let chains = draws.chains(j);
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        report.rhat.push(rank_rhat(&refs)?);
        report.ess_bulk.push(ess_bulk(&refs)?);
        report.ess_tail.push(ess_tail(&refs)?);
    }
    Ok(report)
}

fn check_shape(chains: &[&[f64]]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::Domain(format!("R-hat needs at least 2 chains, got {}", chains.len())));
    }
    let n = chains[0].len();
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Domain("R-hat needs equal-length chains of at least 4 draws".into()));
    }
    Ok(n)
}

fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let half = chains[0].len() / 2;
    let n = chains[0].len();
    chains.iter().flat_map(|c| [c[..half].to_vec(), c[n - half..].to_vec()]).collect()
}

/// Replaces every draw by `Phi^-1((rank - 3/8) / (S + 1/4))`, with average
/// ranks for ties, over the pooled draws.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rank_normalize_tol(chains, 0.0)
}

/// As [`rank_normalize`], treating sorted neighbours closer than `tol` as
/// ties.
fn rank_normalize_tol(chains: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = pooled.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && pooled[order[j + 1]] - pooled[order[j]] <= tol {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let mut out = Vec::with_capacity(chains.len());
    let mut k = 0;
    for c in chains {
        out.push(
            (0..c.len())
                .map(|_| {
                    let z = normal.inverse_cdf((ranks[k] - 0.375) / (s as f64 + 0.25));
                    k += 1;
                    z
                })
                .collect(),
        );
    }
    out
}

/// Classic potential scale reduction on (already split) chains.
fn classic_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / chains.len() as f64;
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let b_over_n = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (means.len() as f64 - 1.0);
    if !(w > 1e-300) {
        return None;
    }
    Some((((n - 1.0) / n * w + b_over_n) / w).sqrt())
}

fn is_constant(chains: &[&[f64]]) -> bool {
    let first = chains[0][0];
    chains.iter().all(|c| c.iter().all(|&x| x == first))
}

/// Maximum of the bulk (rank-normalized) and tail (folded, rank-normalized)
/// split R-hat. `None` when the draws are constant.
pub fn rank_rhat(chains: &[&[f64]]) -> Result<Option<f64>> {
    check_shape(chains)?;
    if chains.iter().flat_map(|c| c.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Domain("R-hat requires finite draws".into()));
    }
    if is_constant(chains) {
        return Ok(None);
    }
    let s = split(chains);
    let bulk = classic_rhat(&rank_normalize(&s));
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let med = quantile_sorted(&sorted_copy(&all), 0.5);
    let folded: Vec<Vec<f64>> = s.iter().map(|c| c.iter().map(|x| (x - med).abs()).collect()).collect();
    // Draws equidistant from the median are exact ties that rounding in
    // `x - med` may split; merge anything within a few ulps of the scale.
    let scale = all.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tail = classic_rhat(&rank_normalize_tol(&folded, 16.0 * f64::EPSILON * scale));
    Ok(match (bulk, tail) {
        (Some(b), Some(t)) => Some(b.max(t)),
        (b, t) => b.or(t),
    })
}

/// Effective sample size from Geyer's initial monotone sequence of
/// multi-chain autocorrelations.
pub(crate) fn ess_raw(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains[0].len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let acov = |t: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| (0..n - t).map(|i| (c[i] - mu) * (c[i + t] - mu)).sum::<f64>() / nf)
            .sum::<f64>()
            / m as f64
    };
    let acov0 = acov(0);
    let mean_var = acov0 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let g = means.iter().sum::<f64>() / m as f64;
        var_plus += means.iter().map(|x| (x - g) * (x - g)).sum::<f64>() / (m as f64 - 1.0);
    }
    if !(var_plus > 1e-300) {
        return None;
    }
    let rho = |t: usize| 1.0 - (mean_var - acov(t)) / var_plus;
    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho(1);
    rho_hat[1] = rho_odd;
    let mut t = 1;
    while t + 5 < n && (rho_even + rho_odd) > 0.0 {
        rho_even = rho(t + 1);
        rho_odd = rho(t + 2);
        if rho_even + rho_odd >= 0.0 {
            rho_hat[t + 1] = rho_even;
            rho_hat[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 && max_t + 1 < n {
        rho_hat[max_t + 1] = rho_even;
    }
    let mut t = 1;
    while t + 3 <= max_t {
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t] {
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
            rho_hat[t + 2] = rho_hat[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tail = if max_t + 1 < n { rho_hat[max_t + 1] } else { 0.0 };
    let tau = (-1.0 + 2.0 * rho_hat[..=max_t.min(n - 1)].iter().sum::<f64>() + tail).max(1.0 / total.log10());
    Some(total / tau)
}

/// Bulk effective sample size on rank-normalized split chains.
pub fn ess_bulk(chains: &[&[f64]]) -> Result<Option<f64>> {
    check_shape(chains)?;
    if is_constant(chains) {
        return Ok(None);
    }
    Ok(ess_raw(&rank_normalize(&split(chains))))
}

/// Tail effective sample size: the smaller ESS of the 5% and 95% quantile
/// indicators.
pub fn ess_tail(chains: &[&[f64]]) -> Result<Option<f64>> {
    check_shape(chains)?;
    if is_constant(chains) {
        return Ok(None);
    }
    let s = split(chains);
    let all = sorted_copy(&s.iter().flatten().copied().collect::<Vec<_>>());
    let mut out: Option<f64> = None;
    for q in [0.05, 0.95] {
        let cut = quantile_sorted(&all, q);
        let ind: Vec<Vec<f64>> = s.iter().map(|c| c.iter().map(|&x| (x <= cut) as u8 as f64).collect()).collect();
        if let Some(e) = ess_raw(&ind) {
            out = Some(out.map_or(e, |o: f64| o.min(e)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chains(m: usize, n: usize, seed: u64, shift: &[f64]) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|c| (0..n).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) + shift.get(c).copied().unwrap_or(0.0)).collect())
            .collect()
    }

    fn refs(c: &[Vec<f64>]) -> Vec<&[f64]> {
        c.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn iid_chains_have_rhat_near_one() {
        let c = normal_chains(4, 900, 1, &[]);
        let r = rank_rhat(&refs(&c)).unwrap().unwrap();
        assert!(r < 1.01, "{r}");
        let e = ess_bulk(&refs(&c)).unwrap().unwrap();
        assert!(e > 2500.0 && e < 5000.0, "{e}");
        assert!(ess_tail(&refs(&c)).unwrap().unwrap() > 1500.0);
    }

    #[test]
    fn shifted_chain_inflates_rhat() {
        let c = normal_chains(4, 900, 2, &[0.0, 0.0, 0.0, 5.0]);
        assert!(rank_rhat(&refs(&c)).unwrap().unwrap() > 1.5);
    }

    #[test]
    fn autocorrelated_chain_has_low_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..1000)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = 0.95 * x + e;
                        x
                    })
                    .collect()
            })
            .collect();
        // AR(1) with phi = 0.95: ESS ~ S (1 - phi) / (1 + phi) ~ 103.
        let e = ess_bulk(&refs(&c)).unwrap().unwrap();
        assert!(e > 50.0 && e < 200.0, "{e}");
    }

    #[test]
    fn constant_draws_are_undefined() {
        let c = vec![vec![1.0; 10]; 3];
        assert_eq!(rank_rhat(&refs(&c)).unwrap(), None);
        assert_eq!(ess_bulk(&refs(&c)).unwrap(), None);
    }

    #[test]
    fn too_few_chains_or_draws_is_an_error() {
        assert!(rank_rhat(&[&[1.0, 2.0, 3.0, 4.0][..]]).is_err());
        assert!(rank_rhat(&[&[1.0, 2.0][..], &[1.0, 2.0][..]]).is_err());
    }

    proptest! {
        #[test]
        fn invariant_to_chain_order_and_affine_maps(seed in 0u64..200, a in 0.1f64..10.0, b in -10.0f64..10.0) {
            let c = normal_chains(4, 50, seed, &[0.0, 0.3, 0.0, -0.2]);
            let r = rank_rhat(&refs(&c)).unwrap().unwrap();
            let mut rev = c.clone();
            rev.reverse();
            let r2 = rank_rhat(&refs(&rev)).unwrap().unwrap();
            prop_assert!((r - r2).abs() < 1e-12);
            let t: Vec<Vec<f64>> = c.iter().map(|ch| ch.iter().map(|x| a * x + b).collect()).collect();
            let r3 = rank_rhat(&refs(&t)).unwrap().unwrap();
            prop_assert!((r - r3).abs() < 1e-9, "{r} {r3}");
        }
    }
}

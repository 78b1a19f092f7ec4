//! Posterior predictive replicates and the checks built on them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::IntervalLength;
use crate::inference::{constrain, row_family_params, ModelData, PosteriorDraws};
use crate::math::{quantile_sorted, sample_variance, sorted_copy};
use crate::regression::ModelSpec;

/// Replicated responses, one vector per selected posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDrawSet {
    /// Index of the generating draw in the merged draw matrix.
    pub draw_index: Vec<usize>,
    pub replicates: Vec<Vec<u32>>,
}

/// Indices of `k` draws spread evenly over `n` merged draws (and so evenly
/// over chains).
pub fn even_draw_indices(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| i * n / k).collect()
}

pub fn posterior_predict<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    model: &ModelSpec,
    data: &ModelData,
    n_pp_draws: usize,
    rng: &mut R,
) -> Result<PredictiveDrawSet> {
    if n_pp_draws > draws.n_draws() {
        return Err(Error::Config(format!(
            "{n_pp_draws} predictive draws requested but only {} posterior draws retained",
            draws.n_draws()
        )));
    }
    let idx = even_draw_indices(draws.n_draws(), n_pp_draws);
    let mut replicates = Vec::with_capacity(idx.len());
    for &s in &idx {
        let params = constrain(model, draws.draw(s))?;
        let rows = row_family_params(model, &data.design, &params)?;
        replicates.push(rows.iter().map(|fp| fp.sample(model.n_days, rng)).collect());
    }
    Ok(PredictiveDrawSet { draw_index: idx, replicates })
}

/// Groups rows by label in first-appearance order.
fn group_rows(labels: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match out.iter_mut().find(|(g, _)| g == l) {
            Some((_, rows)) => rows.push(i),
            None => out.push((l.clone(), vec![i])),
        }
    }
    out
}

/// Empirical CDF evaluated at `0..=N` and at an overflow point `> N`
/// (always 1).
pub fn ecdf(values: impl IntoIterator<Item = u32>, n: IntervalLength) -> Vec<f64> {
    let n = n.as_usize();
    let mut counts = vec![0usize; n + 2];
    let mut total = 0usize;
    for v in values {
        counts[(v as usize).min(n + 1)] += 1;
        total += 1;
    }
    let mut acc = 0usize;
    counts
        .iter()
        .map(|c| {
            acc += c;
            if total == 0 {
                0.0
            } else {
                acc as f64 / total as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfCheck {
    /// `None` for the pooled check.
    pub group: Option<String>,
    /// Evaluation points `0..=N` plus the overflow point.
    pub observed: Vec<f64>,
    pub replicates: Vec<Vec<f64>>,
}

/// Pooled ECDF check, or one per group when `groups` is given. Empty
/// groups are omitted.
pub fn ecdf_check(
    observed: &[u32],
    pp: &PredictiveDrawSet,
    n: IntervalLength,
    groups: Option<&[String]>,
) -> Result<Vec<EcdfCheck>> {
    if observed.is_empty() {
        return Err(Error::Data("ECDF check needs at least one observation".into()));
    }
    check_lengths(observed, pp)?;
    let parts = match groups {
        None => vec![(None, (0..observed.len()).collect::<Vec<_>>())],
        Some(g) => {
            if g.len() != observed.len() {
                return Err(Error::Dimension("one group label per observation required".into()));
            }
            group_rows(g).into_iter().map(|(l, r)| (Some(l), r)).collect()
        }
    };
    Ok(parts
        .into_iter()
        .filter(|(g, rows)| {
            if rows.is_empty() {
                log::warn!("group {g:?} is empty and is omitted");
            }
            !rows.is_empty()
        })
        .map(|(group, rows)| EcdfCheck {
            group,
            observed: ecdf(rows.iter().map(|&i| observed[i]), n),
            replicates: pp.replicates.iter().map(|r| ecdf(rows.iter().map(|&i| r[i]), n)).collect(),
        })
        .collect())
}

fn check_lengths(observed: &[u32], pp: &PredictiveDrawSet) -> Result<()> {
    if pp.replicates.iter().any(|r| r.len() != observed.len()) {
        return Err(Error::Dimension("replicates and observations differ in length".into()));
    }
    Ok(())
}

/// Hanging rootogram over counts `0..=N` plus an overflow bucket `> N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootogramCheck {
    /// Square root of the observed frequency of each count.
    pub observed_sqrt: Vec<f64>,
    /// Posterior predictive median of the square-root frequency.
    pub predicted_sqrt: Vec<f64>,
    /// `predicted_sqrt - observed_sqrt`: where the hanging bar ends
    /// relative to zero.
    pub residual: Vec<f64>,
}

fn frequencies(values: &[u32], n: usize) -> Vec<f64> {
    let mut f = vec![0.0; n + 2];
    for &v in values {
        f[(v as usize).min(n + 1)] += 1.0;
    }
    f
}

pub fn rootogram_check(observed: &[u32], pp: &PredictiveDrawSet, n: IntervalLength) -> Result<RootogramCheck> {
    if observed.is_empty() || pp.replicates.is_empty() {
        return Err(Error::Data("rootogram needs observations and at least one replicate".into()));
    }
    check_lengths(observed, pp)?;
    let n = n.as_usize();
    let observed_sqrt: Vec<f64> = frequencies(observed, n).into_iter().map(f64::sqrt).collect();
    let reps: Vec<Vec<f64>> = pp.replicates.iter().map(|r| frequencies(r, n)).collect();
    let predicted_sqrt: Vec<f64> = (0..n + 2)
        .map(|c| quantile_sorted(&sorted_copy(&reps.iter().map(|f| f[c].sqrt()).collect::<Vec<_>>()), 0.5))
        .collect();
    let residual = predicted_sqrt.iter().zip(&observed_sqrt).map(|(p, o)| p - o).collect();
    Ok(RootogramCheck { observed_sqrt, predicted_sqrt, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdCheck {
    pub group: String,
    pub observed_sd: f64,
    pub replicate_sd: Vec<f64>,
}

impl SdCheck {
    /// Whether the observed SD lies inside the central `level` interval of
    /// the replicate SDs.
    pub fn covers(&self, level: f64) -> bool {
        let s = sorted_copy(&self.replicate_sd);
        let lo = quantile_sorted(&s, (1.0 - level) / 2.0);
        let hi = quantile_sorted(&s, (1.0 + level) / 2.0);
        lo <= self.observed_sd && self.observed_sd <= hi
    }
}

fn sd(values: impl Iterator<Item = u32>) -> f64 {
    let v: Vec<f64> = values.map(f64::from).collect();
    sample_variance(&v).sqrt()
}

/// Group-wise standard deviations; groups with fewer than two rows are
/// excluded.
pub fn sd_check(observed: &[u32], pp: &PredictiveDrawSet, groups: &[String]) -> Result<Vec<SdCheck>> {
    check_lengths(observed, pp)?;
    if groups.len() != observed.len() {
        return Err(Error::Dimension("one group label per observation required".into()));
    }
    Ok(group_rows(groups)
        .into_iter()
        .filter(|(g, rows)| {
            if rows.len() < 2 {
                log::warn!("group `{g}` has fewer than two observations and is excluded");
            }
            rows.len() >= 2
        })
        .map(|(group, rows)| SdCheck {
            group,
            observed_sd: sd(rows.iter().map(|&i| observed[i])),
            replicate_sd: pp.replicates.iter().map(|r| sd(rows.iter().map(|&i| r[i]))).collect(),
        })
        .collect())
}

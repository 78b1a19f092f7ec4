//! Predictive numeric summaries and odds-ratio reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{moments, pmf_quantile};
use crate::inference::{constrain, row_family_params, ModelData, PosteriorDraws};
use crate::math::{quantile_sorted, sorted_copy};
use crate::regression::{DistParam, ModelSpec};

/// Posterior predictive summary of one observation, mixing the exact
/// per-draw distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub variance: f64,
    /// `(probability, quantile)` pairs of the predictive mixture, using the
    /// smallest count whose cumulative probability reaches the level.
    pub quantiles: Vec<(f64, u32)>,
}

/// Exact predictive means, variances and quantiles for every observation,
/// averaged over `draw_indices` (all draws when `None`).
pub fn numeric_summaries(
    draws: &PosteriorDraws,
    model: &ModelSpec,
    data: &ModelData,
    probs: &[f64],
    draw_indices: Option<&[usize]>,
) -> Result<Vec<PredictiveSummary>> {
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::Config(format!("quantile level {p} outside (0, 1]")));
    }
    let all: Vec<usize>;
    let idx = match draw_indices {
        Some(i) => i,
        None => {
            all = (0..draws.n_draws()).collect();
            &all
        }
    };
    if idx.is_empty() {
        return Err(Error::Config("numeric summaries need at least one draw".into()));
    }
    let n_obs = data.n_rows();
    let mut mix: Vec<Vec<f64>> = vec![Vec::new(); n_obs];
    let mut mean_acc = vec![0.0; n_obs];
    let mut second_acc = vec![0.0; n_obs];
    for &s in idx {
        let params = constrain(model, draws.draw(s))?;
        let rows = row_family_params(model, &data.design, &params)?;
        for (i, fp) in rows.iter().enumerate() {
            let pmf = fp.pmf_table(model.n_days);
            let (m, v) = moments(&pmf);
            mean_acc[i] += m;
            second_acc[i] += v + m * m;
            if mix[i].len() < pmf.len() {
                mix[i].resize(pmf.len(), 0.0);
            }
            for (a, p) in mix[i].iter_mut().zip(&pmf) {
                *a += p;
            }
        }
    }
    let k = idx.len() as f64;
    Ok((0..n_obs)
        .map(|i| {
            let mean = mean_acc[i] / k;
            let pmf: Vec<f64> = mix[i].iter().map(|p| p / k).collect();
            PredictiveSummary {
                mean,
                // Law of total variance over the mixture.
                variance: (second_acc[i] / k - mean * mean).max(0.0),
                quantiles: probs.iter().map(|&q| (q, pmf_quantile(&pmf, q))).collect(),
            }
        })
        .collect())
}

/// Names `param.column` of every regression coefficient.
pub fn coefficient_names(model: &ModelSpec) -> Vec<String> {
    model
        .predictors
        .iter()
        .flat_map(|p| p.columns.iter().map(move |&c| format!("{}.{}", p.param, model.column_names[c])))
        .collect()
}

/// Resolves `param.column`, or a bare column name used by exactly one
/// predictor, to `(predictor, coefficient)` indices.
pub fn resolve_coefficient(model: &ModelSpec, name: &str) -> Result<(usize, usize)> {
    let mut hits = Vec::new();
    for (m, p) in model.predictors.iter().enumerate() {
        for (j, &c) in p.columns.iter().enumerate() {
            let col = &model.column_names[c];
            if name == format!("{}.{col}", p.param) || name == col {
                hits.push((m, j));
            }
        }
    }
    match hits.as_slice() {
        [one] => Ok(*one),
        [] => Err(Error::Unknown {
            kind: "coefficient",
            name: name.to_string(),
            available: coefficient_names(model).join(", "),
        }),
        _ => Err(Error::Config(format!(
            "coefficient `{name}` is ambiguous; qualify it as one of: {}",
            hits.iter()
                .map(|&(m, j)| format!(
                    "{}.{}",
                    model.predictors[m].param,
                    model.column_names[model.predictors[m].columns[j]]
                ))
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

/// Draws of one regression coefficient on the linear-predictor scale.
pub fn coefficient_draws(draws: &PosteriorDraws, model: &ModelSpec, name: &str) -> Result<Vec<f64>> {
    let (m, j) = resolve_coefficient(model, name)?;
    let b = &model.layout.predictors[m];
    let (zo, lo) = (b.beta_raw.offset + j, b.log_lambda.offset + j);
    let to = b.log_tau.expect("a predictor with coefficients has a global scale");
    Ok((0..draws.n_draws())
        .map(|s| {
            let d = draws.draw(s);
            d[zo] * (d[lo] + d[to]).exp()
        })
        .collect())
}

/// Draws of the person-level standard deviation of one predictor.
pub fn random_sd_draws(draws: &PosteriorDraws, model: &ModelSpec, param: DistParam) -> Result<Vec<f64>> {
    let m = model.predictor_index(param).ok_or_else(|| Error::Unknown {
        kind: "predictor",
        name: param.to_string(),
        available: model.predictors.iter().map(|p| p.param.name()).collect::<Vec<_>>().join(", "),
    })?;
    let slot = model
        .random_slot(m)
        .ok_or_else(|| Error::Config(format!("`{param}` has no random intercept")))?;
    let r = model.layout.random.as_ref().expect("random block present");
    let o = r.log_sigma.offset + slot;
    Ok((0..draws.n_draws()).map(|s| draws.draw(s)[o].exp()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioSummary {
    pub name: String,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
}

impl OddsRatioSummary {
    pub fn from_log_draws(name: &str, beta: &[f64]) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Data(format!("no draws for `{name}`")));
        }
        let s = sorted_copy(&beta.iter().map(|b| b.exp()).collect::<Vec<_>>());
        let q = |p| quantile_sorted(&s, p);
        Ok(Self { name: name.to_string(), median: q(0.5), q05: q(0.05), q25: q(0.25), q75: q(0.75), q95: q(0.95) })
    }

    /// `median (q05, q95)` to two decimals.
    pub fn format(&self) -> String {
        format!("{:.2} ({:.2}, {:.2})", self.median, self.q05, self.q95)
    }

    pub fn covers(&self, value: f64) -> bool {
        self.q05 <= value && value <= self.q95
    }
}

pub fn odds_ratio_summary(draws: &PosteriorDraws, model: &ModelSpec, names: &[String]) -> Result<Vec<OddsRatioSummary>> {
    names
        .iter()
        .map(|n| OddsRatioSummary::from_log_draws(n, &coefficient_draws(draws, model, n)?))
        .collect()
}

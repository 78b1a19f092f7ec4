//! Positions of every parameter block inside the unconstrained vector.

use serde::{Deserialize, Serialize};

use crate::families::{Family, IntervalLength};
use crate::regression::{DistParam, LinearPredictorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRange {
    pub offset: usize,
    pub len: usize,
}

impl BlockRange {
    #[inline]
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Blocks belonging to one regressed distributional parameter.
///
/// Coefficients are non-centered: `beta_j = z_j * lambda_j * tau`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorBlocks {
    pub param: DistParam,
    pub intercept: Option<usize>,
    pub beta_raw: BlockRange,
    pub log_lambda: BlockRange,
    /// Present only when the predictor has at least one coefficient.
    pub log_tau: Option<usize>,
}

/// Non-centered person effects: `b_i = diag(sigma) L z_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomBlocks {
    pub k: usize,
    /// Row-major `n_persons x k`.
    pub z: BlockRange,
    pub log_sigma: BlockRange,
    /// Unconstrained canonical partial correlations, `k (k - 1) / 2` entries.
    pub corr: BlockRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub dim: usize,
    pub predictors: Vec<PredictorBlocks>,
    pub thresholds: Option<BlockRange>,
    /// Unregressed distributional parameters and their (single) offset.
    /// Positive scalars are stored as logs, `psi` as a logit.
    pub scalars: Vec<(DistParam, usize)>,
    pub random: Option<RandomBlocks>,
    pub names: Vec<String>,
}

impl ParameterLayout {
    pub fn new(
        family: Family,
        n_days: IntervalLength,
        predictors: &[LinearPredictorSpec],
        fixed: &[DistParam],
        n_persons: usize,
        column_names: &[String],
    ) -> Self {
        let mut names: Vec<String> = Vec::new();
        let take = |names: &mut Vec<String>, new: Vec<String>| -> BlockRange {
            let r = BlockRange { offset: names.len(), len: new.len() };
            names.extend(new);
            r
        };

        let mut blocks = Vec::new();
        for spec in predictors {
            let p = spec.param.name();
            let intercept = (family != Family::CRatio).then(|| take(&mut names, vec![format!("{p}.Intercept")]).offset);
            let cols: Vec<&String> = spec.columns.iter().map(|&c| &column_names[c]).collect();
            let beta_raw = take(&mut names, cols.iter().map(|c| format!("{p}.z[{c}]")).collect());
            let log_lambda = take(&mut names, cols.iter().map(|c| format!("{p}.log_lambda[{c}]")).collect());
            let log_tau = (!cols.is_empty()).then(|| take(&mut names, vec![format!("{p}.log_tau")]).offset);
            blocks.push(PredictorBlocks { param: spec.param, intercept, beta_raw, log_lambda, log_tau });
        }

        let thresholds = (family == Family::CRatio)
            .then(|| take(&mut names, (1..=n_days.get()).map(|r| format!("theta[{r}]")).collect()));

        let scalars = fixed
            .iter()
            .map(|&p| {
                let name = if p == DistParam::Psi { "logit_psi".to_string() } else { format!("log_{}", p.name()) };
                (p, take(&mut names, vec![name]).offset)
            })
            .collect();

        let re_params: Vec<&str> =
            predictors.iter().filter(|s| s.random_intercept).map(|s| s.param.name()).collect();
        let k = re_params.len();
        let random = (k > 0).then(|| {
            let z = take(
                &mut names,
                (0..n_persons)
                    .flat_map(|i| re_params.iter().map(move |p| format!("re.z[{i},{p}]")))
                    .collect(),
            );
            let log_sigma = take(&mut names, re_params.iter().map(|p| format!("re.log_sigma[{p}]")).collect());
            let corr = take(
                &mut names,
                (1..k)
                    .flat_map(|i| (0..i).map(move |j| (i, j)))
                    .map(|(i, j)| format!("re.corr_raw[{},{}]", re_params[i], re_params[j]))
                    .collect(),
            );
            RandomBlocks { k, z, log_sigma, corr }
        });

        Self { dim: names.len(), predictors: blocks, thresholds, scalars, random, names }
    }

    /// Named contiguous blocks `(name, offset, len)` in vector order.
    pub fn blocks(&self) -> Vec<(String, BlockRange)> {
        let mut out = Vec::new();
        for b in &self.predictors {
            let p = b.param.name();
            if let Some(o) = b.intercept {
                out.push((format!("{p}.Intercept"), BlockRange { offset: o, len: 1 }));
            }
            if b.beta_raw.len > 0 {
                out.push((format!("{p}.z"), b.beta_raw));
                out.push((format!("{p}.log_lambda"), b.log_lambda));
            }
            if let Some(o) = b.log_tau {
                out.push((format!("{p}.log_tau"), BlockRange { offset: o, len: 1 }));
            }
        }
        if let Some(t) = self.thresholds {
            out.push(("theta".into(), t));
        }
        for (_, o) in &self.scalars {
            out.push((self.names[*o].clone(), BlockRange { offset: *o, len: 1 }));
        }
        if let Some(r) = &self.random {
            out.push(("re.z".into(), r.z));
            out.push(("re.log_sigma".into(), r.log_sigma));
            if r.corr.len > 0 {
                out.push(("re.corr_raw".into(), r.corr));
            }
        }
        out
    }
}

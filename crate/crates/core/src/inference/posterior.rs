//! Log posterior over the unconstrained parameter vector, with its analytic
//! gradient and the pointwise log-likelihood.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::families::{
    betabin, binomial, cratio, hurdle, BetaBinParams, BinomialParams, CRatioParams, Family, FamilyParams,
    HurdleNBParams,
};
use crate::math::{ln_choose, log_sigmoid, sigmoid, LN_2PI};
use crate::priors::{
    corr_cholesky_from_unconstrained, half_cauchy_log_density_grad, lkj_cholesky_unnormalized,
    lkj_log_normalizer, HorseshoeState,
};
use crate::regression::{
    apply_link, apply_link_inverse, build_design, linear_predictor, CoefficientVector, DesignMatrix, DistParam, Link,
    ModelSpec, ObservationRecord, RandomEffectsBlock, Schema,
};

/// A differentiable log density on `R^dim`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density. A
    /// non-finite return value marks `theta` as rejected; `grad` is then
    /// unspecified.
    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;
}

/// Observed counts aligned with the rows of a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelData {
    pub design: DesignMatrix,
    pub days: Vec<u32>,
    pub waves: Vec<String>,
}

impl ModelData {
    pub fn new(design: DesignMatrix, days: Vec<u32>, waves: Vec<String>) -> Result<Self> {
        if days.len() != design.n_rows || waves.len() != design.n_rows {
            return Err(Error::Dimension(format!(
                "{} rows in design, {} counts, {} wave labels",
                design.n_rows,
                days.len(),
                waves.len()
            )));
        }
        Ok(Self { design, days, waves })
    }

    pub fn from_records(records: &[ObservationRecord], schema: &Schema) -> Result<Self> {
        let design = build_design(records, schema)?;
        Self::new(
            design,
            records.iter().map(|r| r.days).collect(),
            records.iter().map(|r| r.wave.clone()).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.days.len()
    }

    /// Every count must lie in `0..=n_days`.
    pub fn check_support(&self, n_days: u32) -> Result<()> {
        if let Some((i, d)) = self.days.iter().enumerate().find(|(_, &d)| d > n_days) {
            return Err(Error::Data(format!("row {i}: count {d} exceeds the interval length {n_days}")));
        }
        Ok(())
    }

    /// Distinct wave labels in first-appearance order.
    pub fn wave_levels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for w in &self.waves {
            if !out.contains(w) {
                out.push(w.clone());
            }
        }
        out
    }

    /// SHA-256 over the design, person grouping and counts. Two fits can be
    /// compared only when their fingerprints match.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.design.n_rows as u64).to_le_bytes());
        for c in &self.design.column_names {
            h.update(c.as_bytes());
            h.update([0]);
        }
        for v in &self.design.values {
            h.update(v.to_le_bytes());
        }
        for p in &self.design.person_index {
            h.update((*p as u64).to_le_bytes());
        }
        for d in &self.days {
            h.update(d.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Predictor(usize),
    Scalar(usize),
}

/// Sparse view of one predictor's columns: per row, the nonzero
/// `(coefficient index, value)` pairs.
#[derive(Debug, Clone)]
struct SparseColumns {
    row_start: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

/// Posterior density of a [`ModelSpec`] given [`ModelData`].
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    model: &'a ModelSpec,
    data: &'a ModelData,
    sparse: Vec<SparseColumns>,
    slots: Vec<Option<usize>>,
    sources: Vec<Source>,
    ln_choose: Vec<f64>,
    max_days: u32,
}

impl<'a> Posterior<'a> {
    pub fn new(model: &'a ModelSpec, data: &'a ModelData) -> Result<Self> {
        if data.design.column_names != model.column_names || data.design.n_persons() != model.n_persons {
            return Err(Error::Dimension("data do not match the model's design".into()));
        }
        data.check_support(model.n_days.get())?;
        let sparse = model
            .predictors
            .iter()
            .map(|spec| {
                let mut row_start = Vec::with_capacity(data.n_rows() + 1);
                let mut entries = Vec::new();
                for i in 0..data.n_rows() {
                    row_start.push(entries.len());
                    let x = data.design.row(i);
                    for (j, &c) in spec.columns.iter().enumerate() {
                        if x[c] != 0.0 {
                            entries.push((j, x[c]));
                        }
                    }
                }
                row_start.push(entries.len());
                SparseColumns { row_start, entries }
            })
            .collect();
        let sources = DistParam::of_family(model.family)
            .iter()
            .map(|p| match model.predictor_index(*p) {
                Some(m) => Source::Predictor(m),
                None => {
                    let (_, off) = model.layout.scalars.iter().find(|(q, _)| q == p).expect("scalar in layout");
                    Source::Scalar(*off)
                }
            })
            .collect();
        let n = model.n_days.get();
        let ln_choose = data.days.iter().map(|&d| ln_choose(n, d)).collect();
        Ok(Self {
            model,
            data,
            sparse,
            slots: (0..model.predictors.len()).map(|m| model.random_slot(m)).collect(),
            sources,
            ln_choose,
            max_days: data.days.iter().copied().max().unwrap_or(0),
        })
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn data(&self) -> &ModelData {
        self.data
    }

    /// Log-likelihood of every observation at `theta`.
    pub fn pointwise_loglik(&self, theta: &[f64], out: &mut [f64]) {
        let mut scratch = vec![0.0; self.model.dim()];
        self.evaluate(theta, &mut scratch, Some(out), false);
    }

    /// Log posterior (value only).
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.model.dim()];
        self.evaluate(theta, &mut scratch, None, true)
    }

    fn evaluate(&self, theta: &[f64], grad: &mut [f64], mut pointwise: Option<&mut [f64]>, with_prior: bool) -> f64 {
        let model = self.model;
        let lay = &model.layout;
        let data = self.data;
        let n = model.n_days.get();
        grad.iter_mut().for_each(|g| *g = 0.0);

        // Coefficients.
        let mut taus = Vec::with_capacity(lay.predictors.len());
        let mut betas: Vec<Vec<f64>> = Vec::with_capacity(lay.predictors.len());
        let mut intercepts = Vec::with_capacity(lay.predictors.len());
        for b in &lay.predictors {
            let tau = b.log_tau.map_or(1.0, |o| theta[o].exp());
            let beta = (0..b.beta_raw.len)
                .map(|j| theta[b.beta_raw.offset + j] * theta[b.log_lambda.offset + j].exp() * tau)
                .collect();
            taus.push(tau);
            betas.push(beta);
            intercepts.push(b.intercept.map_or(0.0, |o| theta[o]));
        }

        // Thresholds.
        let thresholds: &[f64] = lay.thresholds.map_or(&[], |t| &theta[t.range()]);
        let exp_thresholds: Option<Vec<f64>> =
            (thresholds.iter().all(|t| t.abs() < 300.0)).then(|| thresholds.iter().map(|t| t.exp()).collect());

        // Person effects b_i = diag(sigma) L z_i.
        let (k, sigma, chol, b) = match &lay.random {
            Some(r) => {
                let k = r.k;
                let sigma: Vec<f64> = theta[r.log_sigma.range()].iter().map(|s| s.exp()).collect();
                let (l, _) = corr_cholesky_from_unconstrained(&theta[r.corr.range()], k);
                let z = &theta[r.z.range()];
                let mut b = vec![0.0; z.len()];
                for (zi, bi) in z.chunks_exact(k).zip(b.chunks_exact_mut(k)) {
                    for s in 0..k {
                        let mut acc = 0.0;
                        for t in 0..=s {
                            acc += l[s * k + t] * zi[t];
                        }
                        bi[s] = sigma[s] * acc;
                    }
                }
                (k, sigma, l, b)
            }
            None => (0, Vec::new(), Vec::new(), Vec::new()),
        };

        let rising = match (model.family, self.sources.get(2)) {
            (Family::HurdleNegBinomial, Some(Source::Scalar(o))) => {
                Some(hurdle::RisingTable::new(theta[*o].exp(), self.max_days))
            }
            _ => None,
        };

        // Likelihood.
        let mut g_beta: Vec<Vec<f64>> = betas.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut g_int = vec![0.0; betas.len()];
        let mut g_b = vec![0.0; b.len()];
        let mut g_thr = vec![0.0; thresholds.len()];
        let mut loglik = 0.0;
        let mut vals = [0.0f64; 3];
        let mut gq = [0.0f64; 3];
        for row in 0..data.n_rows() {
            let person = data.design.person_index[row];
            for (q, src) in self.sources.iter().enumerate() {
                vals[q] = match *src {
                    Source::Scalar(o) => theta[o],
                    Source::Predictor(m) => {
                        let sp = &self.sparse[m];
                        let mut e = intercepts[m];
                        for &(j, x) in &sp.entries[sp.row_start[row]..sp.row_start[row + 1]] {
                            e += x * betas[m][j];
                        }
                        if let Some(s) = self.slots[m] {
                            e += b[person * k + s];
                        }
                        e
                    }
                };
            }
            let d = data.days[row];
            let v = match model.family {
                Family::CRatio => {
                    let (v, de) =
                        cratio::loglik_grad(vals[0], thresholds, exp_thresholds.as_deref(), d as usize, &mut g_thr);
                    gq[0] = de;
                    v
                }
                Family::Binomial => {
                    let (v, dp) = binomial::loglik_grad(d, n, vals[0], self.ln_choose[row]);
                    gq[0] = dp;
                    v
                }
                Family::BetaBinomial => {
                    let (v, g) = betabin::loglik_grad(d, n, vals[0], vals[1], self.ln_choose[row]);
                    gq[..2].copy_from_slice(&g);
                    v
                }
                Family::HurdleNegBinomial => {
                    let (v, g) =
                        hurdle::loglik_grad_cached(d, vals[0], vals[1].exp(), vals[2].exp(), rising.as_ref());
                    gq = g;
                    v
                }
            };
            loglik += v;
            if let Some(pw) = pointwise.as_deref_mut() {
                pw[row] = v;
            }
            for (q, src) in self.sources.iter().enumerate() {
                let g = gq[q];
                match *src {
                    Source::Scalar(o) => grad[o] += g,
                    Source::Predictor(m) => {
                        g_int[m] += g;
                        let sp = &self.sparse[m];
                        for &(j, x) in &sp.entries[sp.row_start[row]..sp.row_start[row + 1]] {
                            g_beta[m][j] += x * g;
                        }
                        if let Some(s) = self.slots[m] {
                            g_b[person * k + s] += g;
                        }
                    }
                }
            }
        }
        if !with_prior {
            return loglik;
        }

        let priors = &model.priors;
        let mut lp = loglik;

        for (m, blk) in lay.predictors.iter().enumerate() {
            if let Some(o) = blk.intercept {
                let (v, dv) = priors.intercept.log_density_grad(theta[o]);
                lp += v;
                grad[o] += g_int[m] + dv;
            }
            let tau = taus[m];
            let mut g_log_tau = 0.0;
            for j in 0..blk.beta_raw.len {
                let zo = blk.beta_raw.offset + j;
                let lo = blk.log_lambda.offset + j;
                let z = theta[zo];
                let lam = theta[lo].exp();
                let gb = g_beta[m][j];
                let bj = betas[m][j];
                lp += -0.5 * z * z - 0.5 * LN_2PI;
                grad[zo] += gb * lam * tau - z;
                let (hc, dhc) = half_cauchy_log_density_grad(lam, 1.0);
                lp += hc + theta[lo];
                grad[lo] += gb * bj + dhc * lam + 1.0;
                g_log_tau += gb * bj;
            }
            if let Some(o) = blk.log_tau {
                let (hc, dhc) = half_cauchy_log_density_grad(tau, priors.horseshoe_global_scale);
                lp += hc + theta[o];
                grad[o] += g_log_tau + dhc * tau + 1.0;
            }
        }

        if let Some(t) = lay.thresholds {
            for (r, &th) in thresholds.iter().enumerate() {
                let (v, dv) = priors.threshold.log_density_grad(th);
                lp += v;
                grad[t.offset + r] += g_thr[r] + dv;
            }
        }

        for &(p, o) in &lay.scalars {
            let y = theta[o];
            match p.natural_link() {
                Link::Logit => {
                    // Uniform on (0, 1), pulled back through the logistic map.
                    lp += log_sigmoid(y) + log_sigmoid(-y);
                    grad[o] += 1.0 - 2.0 * sigmoid(y);
                }
                _ => {
                    let x = y.exp();
                    let (v, dv) = priors.aux(p).half_log_density_grad(x);
                    lp += v + y;
                    grad[o] += dv * x + 1.0;
                }
            }
        }

        if let Some(r) = &lay.random {
            let z = &theta[r.z.range()];
            let mut g_l = vec![0.0; k * k];
            let mut g_log_sigma = vec![0.0; k];
            for (i, zi) in z.chunks_exact(k).enumerate() {
                let gbi = &g_b[i * k..(i + 1) * k];
                let bi = &b[i * k..(i + 1) * k];
                for t in 0..k {
                    let mut gz = -zi[t];
                    for s in t..k {
                        gz += gbi[s] * sigma[s] * chol[s * k + t];
                        g_l[s * k + t] += gbi[s] * sigma[s] * zi[t];
                    }
                    grad[r.z.offset + i * k + t] += gz;
                    lp += -0.5 * zi[t] * zi[t];
                }
                for s in 0..k {
                    g_log_sigma[s] += gbi[s] * bi[s];
                }
            }
            lp -= 0.5 * LN_2PI * z.len() as f64;
            for s in 0..k {
                let (v, dv) = priors.sd.half_log_density_grad(sigma[s]);
                lp += v + theta[r.log_sigma.offset + s];
                grad[r.log_sigma.offset + s] += g_log_sigma[s] + dv * sigma[s] + 1.0;
            }
            if r.corr.len > 0 {
                let y = &theta[r.corr.range()];
                let (l, log_jac) = corr_cholesky_from_unconstrained(y, k);
                lp += log_jac + lkj_cholesky_unnormalized(&l, k, priors.lkj_eta) - lkj_log_normalizer(k, priors.lkj_eta);
                for c in 0..y.len() {
                    let yd: Vec<Dual> = y.iter().enumerate().map(|(i, &v)| Dual::new(v, (i == c) as u8 as f64)).collect();
                    let (ld, jd) = corr_cholesky_from_unconstrained(&yd, k);
                    let mut acc = jd + lkj_cholesky_unnormalized(&ld, k, priors.lkj_eta);
                    for (gl, lv) in g_l.iter().zip(&ld) {
                        acc += Dual::new(*gl, 0.0) * *lv;
                    }
                    grad[r.corr.offset + c] += acc.du;
                }
            }
        }

        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return f64::NEG_INFINITY;
        }
        lp
    }
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(theta, grad, None, true)
    }
}

/// Natural-scale parameter values implied by one unconstrained vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedParams {
    /// One entry per regressed parameter, in model order.
    pub coefficients: Vec<(DistParam, CoefficientVector)>,
    pub horseshoe: Vec<Option<HorseshoeState>>,
    pub thresholds: Vec<f64>,
    /// Unregressed parameters on their natural scale.
    pub scalars: Vec<(DistParam, f64)>,
    pub random: RandomEffectsBlock,
}

pub fn constrain(model: &ModelSpec, theta: &[f64]) -> Result<ConstrainedParams> {
    let lay = &model.layout;
    if theta.len() != lay.dim {
        return Err(Error::Dimension(format!("expected {} parameters, got {}", lay.dim, theta.len())));
    }
    let mut coefficients = Vec::new();
    let mut horseshoe = Vec::new();
    for (spec, b) in model.predictors.iter().zip(&lay.predictors) {
        let tau = b.log_tau.map_or(1.0, |o| theta[o].exp());
        let lambda: Vec<f64> = theta[b.log_lambda.range()].iter().map(|x| x.exp()).collect();
        let beta = theta[b.beta_raw.range()].iter().zip(&lambda).map(|(z, l)| z * l * tau).collect();
        coefficients.push((spec.param, CoefficientVector { intercept: b.intercept.map_or(0.0, |o| theta[o]), beta }));
        horseshoe.push(b.log_tau.map(|_| HorseshoeState { lambda, tau }));
    }
    let thresholds = lay.thresholds.map_or(Vec::new(), |t| theta[t.range()].to_vec());
    let scalars = lay
        .scalars
        .iter()
        .map(|&(p, o)| (p, apply_link_inverse(theta[o], p.natural_link())))
        .collect();
    let random = match &lay.random {
        Some(r) => {
            let k = r.k;
            let sigma: Vec<f64> = theta[r.log_sigma.range()].iter().map(|s| s.exp()).collect();
            let (corr_chol, _) = corr_cholesky_from_unconstrained(&theta[r.corr.range()], k);
            let z = &theta[r.z.range()];
            let mut b = vec![0.0; z.len()];
            for (zi, bi) in z.chunks_exact(k).zip(b.chunks_exact_mut(k)) {
                for s in 0..k {
                    bi[s] = sigma[s] * (0..=s).map(|t| corr_chol[s * k + t] * zi[t]).sum::<f64>();
                }
            }
            RandomEffectsBlock { k, b, sigma, corr_chol }
        }
        None => RandomEffectsBlock::zeros(model.n_persons, 0),
    };
    Ok(ConstrainedParams { coefficients, horseshoe, thresholds, scalars, random })
}

/// Per-row distributions implied by natural-scale parameters.
pub fn row_family_params(model: &ModelSpec, design: &DesignMatrix, params: &ConstrainedParams) -> Result<Vec<FamilyParams>> {
    let n_rows = design.n_rows;
    let order = DistParam::of_family(model.family);
    // Values on the linear-predictor scale.
    let mut lin: Vec<Vec<f64>> = Vec::with_capacity(order.len());
    for p in order {
        let col = match model.predictor_index(*p) {
            Some(m) => {
                let spec = &model.predictors[m];
                let (_, coef) = &params.coefficients[m];
                let re = model.random_slot(m).map(|s| (&params.random, s));
                linear_predictor(design, coef, re, spec)?
            }
            None => {
                let (_, v) = params
                    .scalars
                    .iter()
                    .find(|(q, _)| q == p)
                    .ok_or_else(|| Error::Config(format!("no value for `{p}`")))?;
                vec![apply_link(*v, p.natural_link()); n_rows]
            }
        };
        lin.push(col);
    }
    (0..n_rows)
        .map(|i| {
            Ok(match model.family {
                Family::CRatio => FamilyParams::CRatio(CRatioParams::new(lin[0][i], params.thresholds.clone())?),
                Family::Binomial => FamilyParams::Binomial(BinomialParams::new(sigmoid(lin[0][i]))?),
                Family::BetaBinomial => {
                    FamilyParams::BetaBinomial(BetaBinParams::new(sigmoid(lin[0][i]), lin[1][i].exp())?)
                }
                Family::HurdleNegBinomial => FamilyParams::HurdleNB(HurdleNBParams::new(
                    sigmoid(lin[0][i]),
                    lin[1][i].exp(),
                    lin[2][i].exp(),
                )?),
            })
        })
        .collect()
}

//! Covariates to distributional parameters: reference-cell design matrices,
//! link functions, linear predictors with a person-level random intercept,
//! and validated model assembly.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{Family, IntervalLength};
use crate::inference::layout::ParameterLayout;
use crate::math::{logit, sigmoid};
use crate::priors::PriorConfig;

/// One survey response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub person_id: String,
    /// Grouping level used for by-wave checks (usually also a covariate).
    pub wave: String,
    pub covariates: BTreeMap<String, String>,
    pub days: u32,
}

/// A categorical covariate with its levels in column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateDecl {
    pub name: String,
    pub levels: Vec<String>,
    /// Defaults to the first declared level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// Raw value -> declared level, applied before level lookup.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recode: BTreeMap<String, String>,
}

impl CovariateDecl {
    pub fn new(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
            reference: None,
            recode: BTreeMap::new(),
        }
    }

    pub fn with_reference(mut self, reference: &str) -> Self {
        self.reference = Some(reference.to_string());
        self
    }

    pub fn reference_level(&self) -> &str {
        self.reference.as_deref().unwrap_or(&self.levels[0])
    }

    /// Canonical level for a raw value, after recoding.
    pub fn resolve<'a>(&'a self, raw: &'a str) -> Option<&'a str> {
        let v = self.recode.get(raw).map(String::as_str).unwrap_or(raw);
        self.levels.iter().find(|l| l.as_str() == v).map(String::as_str)
    }

    /// Design columns contributed by this covariate, `name:level`.
    pub fn column_names(&self) -> Vec<String> {
        let reference = self.reference_level();
        self.levels
            .iter()
            .filter(|l| l.as_str() != reference)
            .map(|l| format!("{}:{}", self.name, l))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Schema(format!("covariate `{}` declares no levels", self.name)));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.levels {
            if !seen.insert(l) {
                return Err(Error::Schema(format!("covariate `{}` repeats level `{l}`", self.name)));
            }
        }
        if let Some(r) = &self.reference {
            if !self.levels.contains(r) {
                return Err(Error::Schema(format!(
                    "reference level `{r}` of `{}` is not a declared level",
                    self.name
                )));
            }
        }
        for (from, to) in &self.recode {
            if !self.levels.contains(to) {
                return Err(Error::Schema(format!(
                    "recode `{from}` -> `{to}` of `{}` targets an undeclared level",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub covariates: Vec<CovariateDecl>,
}

impl Schema {
    pub fn new(covariates: Vec<CovariateDecl>) -> Self {
        Self { covariates }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::HashSet::new();
        for c in &self.covariates {
            if !names.insert(&c.name) {
                return Err(Error::Schema(format!("covariate `{}` declared twice", c.name)));
            }
            c.validate()?;
        }
        Ok(())
    }

    pub fn column_names(&self) -> Vec<String> {
        self.covariates.iter().flat_map(|c| c.column_names()).collect()
    }

    fn is_complete(&self, r: &ObservationRecord) -> bool {
        self.covariates.iter().all(|c| {
            r.covariates
                .get(&c.name)
                .is_some_and(|v| !is_missing(v))
        })
    }
}

fn is_missing(v: &str) -> bool {
    let v = v.trim();
    v.is_empty() || v.eq_ignore_ascii_case("na") || v.eq_ignore_ascii_case("nan")
}

/// Drops records missing any declared covariate; returns the kept records
/// and the number dropped.
pub fn drop_incomplete(records: Vec<ObservationRecord>, schema: &Schema) -> (Vec<ObservationRecord>, usize) {
    let before = records.len();
    let kept: Vec<_> = records.into_iter().filter(|r| schema.is_complete(r)).collect();
    let dropped = before - kept.len();
    if dropped > 0 {
        log::warn!("dropped {dropped} of {before} records with missing covariates");
    }
    (kept, dropped)
}

/// Sorts records by person id, then wave, then covariate values, then count.
/// Building a design from canonically sorted records is independent of the
/// original input order.
pub fn canonical_sort(records: &mut [ObservationRecord]) {
    records.sort_by(|a, b| {
        (&a.person_id, &a.wave, &a.covariates, a.days).cmp(&(&b.person_id, &b.wave, &b.covariates, b.days))
    });
}

/// Dense reference-cell design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub n_rows: usize,
    pub column_names: Vec<String>,
    /// Row-major `n_rows x n_cols`.
    pub values: Vec<f64>,
    pub person_index: Vec<usize>,
    /// Person ids in first-appearance order; `person_ids[person_index[row]]`.
    pub person_ids: Vec<String>,
}

impl DesignMatrix {
    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_persons(&self) -> usize {
        self.person_ids.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
}

pub fn build_design(records: &[ObservationRecord], schema: &Schema) -> Result<DesignMatrix> {
    schema.validate()?;
    let incomplete = records.iter().filter(|r| !schema.is_complete(r)).count();
    if incomplete > 0 {
        return Err(Error::Schema(format!(
            "{incomplete} record(s) are missing declared covariates"
        )));
    }
    let column_names = schema.column_names();
    let p = column_names.len();
    let mut values = vec![0.0; records.len() * p];
    let mut person_lookup: HashMap<&str, usize> = HashMap::new();
    let mut person_ids = Vec::new();
    let mut person_index = Vec::with_capacity(records.len());

    for (i, rec) in records.iter().enumerate() {
        let row = &mut values[i * p..(i + 1) * p];
        let mut offset = 0;
        for c in &schema.covariates {
            let raw = &rec.covariates[&c.name];
            let level = c.resolve(raw.trim()).ok_or_else(|| {
                Error::Schema(format!(
                    "record {i} (person `{}`): unknown level `{raw}` for covariate `{}`",
                    rec.person_id, c.name
                ))
            })?;
            let reference = c.reference_level();
            let mut col = offset;
            for l in &c.levels {
                if l == reference {
                    continue;
                }
                if l == level {
                    row[col] = 1.0;
                }
                col += 1;
            }
            offset += c.levels.len() - 1;
        }
        let next = person_ids.len();
        let idx = *person_lookup.entry(rec.person_id.as_str()).or_insert_with(|| {
            person_ids.push(rec.person_id.clone());
            next
        });
        person_index.push(idx);
    }

    Ok(DesignMatrix { n_rows: records.len(), column_names, values, person_index, person_ids })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Log,
    Identity,
}

pub fn apply_link_inverse(eta: f64, link: Link) -> f64 {
    match link {
        Link::Logit => sigmoid(eta),
        Link::Log => eta.exp(),
        Link::Identity => eta,
    }
}

pub fn apply_link(x: f64, link: Link) -> f64 {
    match link {
        Link::Logit => logit(x),
        Link::Log => x.ln(),
        Link::Identity => x,
    }
}

/// Distributional parameters that can be regressed on covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistParam {
    /// Continuation-ratio progression predictor.
    Eta,
    /// Daily use probability (binomial, beta-binomial).
    Pi,
    /// Beta-binomial overdispersion.
    Phi,
    /// Hurdle probability of a structural zero.
    Psi,
    /// Untruncated negative binomial mean.
    Mu,
    /// Negative binomial dispersion.
    Alpha,
}

impl DistParam {
    pub fn natural_link(self) -> Link {
        match self {
            DistParam::Eta | DistParam::Pi | DistParam::Psi => Link::Logit,
            DistParam::Phi | DistParam::Mu | DistParam::Alpha => Link::Log,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistParam::Eta => "eta",
            DistParam::Pi => "pi",
            DistParam::Phi => "phi",
            DistParam::Psi => "psi",
            DistParam::Mu => "mu",
            DistParam::Alpha => "alpha",
        }
    }

    /// Parameters of a family in canonical order.
    pub fn of_family(family: Family) -> &'static [DistParam] {
        match family {
            Family::CRatio => &[DistParam::Eta],
            Family::Binomial => &[DistParam::Pi],
            Family::BetaBinomial => &[DistParam::Pi, DistParam::Phi],
            Family::HurdleNegBinomial => &[DistParam::Psi, DistParam::Mu, DistParam::Alpha],
        }
    }

    /// Sets of parameters that may be regressed for a family.
    pub fn regressable_sets(family: Family) -> &'static [&'static [DistParam]] {
        match family {
            Family::CRatio => &[&[DistParam::Eta]],
            Family::Binomial => &[&[DistParam::Pi]],
            Family::BetaBinomial => &[&[DistParam::Pi], &[DistParam::Pi, DistParam::Phi]],
            Family::HurdleNegBinomial => &[
                &[DistParam::Mu],
                &[DistParam::Psi, DistParam::Mu],
                &[DistParam::Psi, DistParam::Mu, DistParam::Alpha],
            ],
        }
    }
}

impl std::fmt::Display for DistParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearPredictorSpec {
    pub param: DistParam,
    pub link: Link,
    /// Indices into the design columns.
    pub columns: Vec<usize>,
    pub random_intercept: bool,
}

impl LinearPredictorSpec {
    /// All design columns, natural link, with a random intercept.
    pub fn full(param: DistParam, design: &DesignMatrix) -> Self {
        Self {
            param,
            link: param.natural_link(),
            columns: (0..design.n_cols()).collect(),
            random_intercept: true,
        }
    }
}

/// Fixed-effect part of one linear predictor, aligned with `spec.columns`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub intercept: f64,
    pub beta: Vec<f64>,
}

/// Person effects `b` (row-major `n_persons x k`) with their scales and
/// correlation Cholesky factor (row-major `k x k`).
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffectsBlock {
    pub k: usize,
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    pub corr_chol: Vec<f64>,
}

impl RandomEffectsBlock {
    pub fn zeros(n_persons: usize, k: usize) -> Self {
        let mut corr_chol = vec![0.0; k * k];
        for i in 0..k {
            corr_chol[i * k + i] = 1.0;
        }
        Self { k, b: vec![0.0; n_persons * k], sigma: vec![1.0; k], corr_chol }
    }

    #[inline]
    pub fn effect(&self, person: usize, slot: usize) -> f64 {
        self.b[person * self.k + slot]
    }
}

/// `eta_row = intercept + x_row . beta + b[person(row), slot]`.
pub fn linear_predictor(
    design: &DesignMatrix,
    coef: &CoefficientVector,
    re: Option<(&RandomEffectsBlock, usize)>,
    spec: &LinearPredictorSpec,
) -> Result<Vec<f64>> {
    if coef.beta.len() != spec.columns.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} columns",
            coef.beta.len(),
            spec.columns.len()
        )));
    }
    if let Some(&c) = spec.columns.iter().find(|&&c| c >= design.n_cols()) {
        return Err(Error::Dimension(format!("column {c} outside design with {} columns", design.n_cols())));
    }
    if let Some((block, slot)) = re {
        if slot >= block.k || block.b.len() != design.n_persons() * block.k {
            return Err(Error::Dimension("random-effects block does not match design".into()));
        }
    }
    Ok((0..design.n_rows)
        .map(|i| {
            let x = design.row(i);
            let fixed: f64 = spec.columns.iter().zip(&coef.beta).map(|(&c, b)| x[c] * b).sum();
            let random = match (re, spec.random_intercept) {
                (Some((block, slot)), true) => block.effect(design.person_index[i], slot),
                _ => 0.0,
            };
            coef.intercept + fixed + random
        })
        .collect())
}

/// A validated model: family, regressed and fixed distributional
/// parameters, priors and the unconstrained parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub n_days: IntervalLength,
    pub predictors: Vec<LinearPredictorSpec>,
    /// Distributional parameters shared by all observations.
    pub fixed: Vec<DistParam>,
    pub column_names: Vec<String>,
    pub n_persons: usize,
    pub priors: PriorConfig,
    pub layout: ParameterLayout,
}

impl ModelSpec {
    /// Number of predictors carrying a random intercept.
    pub fn n_random(&self) -> usize {
        self.predictors.iter().filter(|p| p.random_intercept).count()
    }

    /// Column of the random-effects block used by predictor `m`.
    pub fn random_slot(&self, m: usize) -> Option<usize> {
        if !self.predictors[m].random_intercept {
            return None;
        }
        Some(self.predictors[..m].iter().filter(|p| p.random_intercept).count())
    }

    /// Whether predictor `m` has its own intercept (all but continuation-ratio).
    pub fn has_intercept(&self) -> bool {
        self.family != Family::CRatio
    }

    pub fn predictor_index(&self, param: DistParam) -> Option<usize> {
        self.predictors.iter().position(|p| p.param == param)
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }
}

pub fn assemble_model(
    family: Family,
    specs: Vec<LinearPredictorSpec>,
    design: &DesignMatrix,
    n_days: IntervalLength,
    priors: PriorConfig,
) -> Result<ModelSpec> {
    priors.validate()?;
    let mut specs = specs;
    let order = DistParam::of_family(family);
    for s in &specs {
        if !order.contains(&s.param) {
            return Err(Error::Config(format!("{family} has no distributional parameter `{}`", s.param)));
        }
        if s.link != s.param.natural_link() {
            return Err(Error::Config(format!(
                "`{}` requires the {:?} link, got {:?}",
                s.param,
                s.param.natural_link(),
                s.link
            )));
        }
        if let Some(&c) = s.columns.iter().find(|&&c| c >= design.n_cols()) {
            return Err(Error::Config(format!("predictor `{}` references missing column {c}", s.param)));
        }
        let mut cols = s.columns.clone();
        cols.sort_unstable();
        cols.dedup();
        if cols.len() != s.columns.len() {
            return Err(Error::Config(format!("predictor `{}` repeats a column", s.param)));
        }
    }
    specs.sort_by_key(|s| order.iter().position(|p| *p == s.param));
    let params: Vec<DistParam> = specs.iter().map(|s| s.param).collect();
    if params.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("a distributional parameter is regressed twice".into()));
    }
    if !DistParam::regressable_sets(family).iter().any(|set| *set == params.as_slice()) {
        let allowed: Vec<String> = DistParam::regressable_sets(family)
            .iter()
            .map(|set| format!("{{{}}}", set.iter().map(|p| p.name()).collect::<Vec<_>>().join(", ")))
            .collect();
        return Err(Error::Config(format!(
            "{family} cannot regress {{{}}}; supported: {}",
            params.iter().map(|p| p.name()).collect::<Vec<_>>().join(", "),
            allowed.join(" or ")
        )));
    }
    let fixed: Vec<DistParam> = order.iter().copied().filter(|p| !params.contains(p)).collect();
    let layout = ParameterLayout::new(family, n_days, &specs, &fixed, design.n_persons(), &design.column_names);
    Ok(ModelSpec {
        family,
        n_days,
        predictors: specs,
        fixed,
        column_names: design.column_names.clone(),
        n_persons: design.n_persons(),
        priors,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(person: &str, wave: &str, covs: &[(&str, &str)], days: u32) -> ObservationRecord {
        ObservationRecord {
            person_id: person.into(),
            wave: wave.into(),
            covariates: covs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            days,
        }
    }

    #[test]
    fn binary_covariate_and_person_index() {
        let schema = Schema::new(vec![CovariateDecl::new("iso", &["no", "yes"])]);
        let recs = vec![
            rec("A", "1", &[("iso", "yes")], 3),
            rec("B", "1", &[("iso", "no")], 0),
            rec("A", "2", &[("iso", "no")], 5),
        ];
        let d = build_design(&recs, &schema).unwrap();
        assert_eq!(d.n_rows, 3);
        assert_eq!(d.column_names, vec!["iso:yes"]);
        assert_eq!(d.values, vec![1.0, 0.0, 0.0]);
        assert_eq!(d.person_index, vec![0, 1, 0]);
        assert_eq!(d.n_persons(), 2);
    }

    #[test]
    fn wave_and_gender_columns() {
        let wave = CovariateDecl::new("wave", &["1", "2", "3", "4"]);
        assert_eq!(wave.column_names(), vec!["wave:2", "wave:3", "wave:4"]);
        let gender = CovariateDecl::new("gender", &["male", "female", "non-binary"]);
        assert_eq!(gender.column_names().len(), 2);
        let other_ref = CovariateDecl::new("gender", &["male", "female", "non-binary"]).with_reference("female");
        assert_eq!(other_ref.column_names(), vec!["gender:male", "gender:non-binary"]);
    }

    #[test]
    fn recode_and_unknown_level() {
        let mut state = CovariateDecl::new("state", &["NSW", "VIC", "SA"]);
        state.recode.insert("TAS".into(), "VIC".into());
        let schema = Schema::new(vec![state]);
        let ok = build_design(&[rec("A", "1", &[("state", "TAS")], 1)], &schema).unwrap();
        assert_eq!(ok.values, vec![1.0, 0.0]);
        let err = build_design(&[rec("A", "1", &[("state", "WA")], 1)], &schema).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("record 0") && msg.contains("state") && msg.contains("WA"), "{msg}");
    }

    #[test]
    fn missing_covariates_are_counted_and_dropped() {
        let schema = Schema::new(vec![CovariateDecl::new("iso", &["no", "yes"])]);
        let recs = vec![
            rec("A", "1", &[("iso", "yes")], 3),
            rec("B", "1", &[], 0),
            rec("C", "1", &[("iso", "NA")], 0),
        ];
        let err = build_design(&recs, &schema).unwrap_err();
        assert!(err.to_string().contains("2 record(s)"));
        let (kept, dropped) = drop_incomplete(recs, &schema);
        assert_eq!((kept.len(), dropped), (1, 2));
    }

    #[test]
    fn linear_predictor_examples() {
        let schema = Schema::new(vec![CovariateDecl::new("x", &["a", "b"])]);
        let recs = vec![rec("P", "1", &[("x", "b")], 0), rec("Q", "1", &[("x", "a")], 0)];
        let d = build_design(&recs, &schema).unwrap();
        let spec = LinearPredictorSpec::full(DistParam::Eta, &d);
        let zero = CoefficientVector { intercept: 0.0, beta: vec![0.0] };
        let re = RandomEffectsBlock::zeros(2, 1);
        assert_eq!(linear_predictor(&d, &zero, Some((&re, 0)), &spec).unwrap(), vec![0.0, 0.0]);
        let mut re = RandomEffectsBlock::zeros(2, 1);
        re.b[0] = -0.5;
        let coef = CoefficientVector { intercept: 0.0, beta: vec![1.5] };
        let eta = linear_predictor(&d, &coef, Some((&re, 0)), &spec).unwrap();
        assert_eq!(eta[0], 1.0);
        let bad = CoefficientVector { intercept: 0.0, beta: vec![1.0, 2.0] };
        assert!(linear_predictor(&d, &bad, None, &spec).is_err());
    }

    #[test]
    fn link_inverse_values() {
        assert_eq!(apply_link_inverse(0.0, Link::Logit), 0.5);
        assert_eq!(apply_link_inverse(0.0, Link::Log), 1.0);
        assert_eq!(apply_link_inverse(3.5, Link::Identity), 3.5);
        assert!(apply_link_inverse(-40.0, Link::Logit) > 0.0);
    }

    fn tiny_design() -> DesignMatrix {
        let schema = Schema::new(vec![CovariateDecl::new("x", &["a", "b"])]);
        build_design(&[rec("P", "1", &[("x", "b")], 0)], &schema).unwrap()
    }

    #[test]
    fn assemble_examples() {
        let d = tiny_design();
        let n = IntervalLength::new(28).unwrap();
        let m = assemble_model(
            Family::CRatio,
            vec![LinearPredictorSpec::full(DistParam::Eta, &d)],
            &d,
            n,
            PriorConfig::default(),
        )
        .unwrap();
        assert_eq!(m.n_random(), 1);

        let m = assemble_model(
            Family::HurdleNegBinomial,
            vec![LinearPredictorSpec::full(DistParam::Mu, &d), LinearPredictorSpec::full(DistParam::Psi, &d)],
            &d,
            n,
            PriorConfig::default(),
        )
        .unwrap();
        assert_eq!(m.n_random(), 2);
        assert_eq!(m.predictors[0].param, DistParam::Psi);
        assert_eq!(m.fixed, vec![DistParam::Alpha]);

        let m = assemble_model(
            Family::BetaBinomial,
            vec![LinearPredictorSpec::full(DistParam::Pi, &d)],
            &d,
            n,
            PriorConfig::default(),
        )
        .unwrap();
        assert_eq!(m.n_random(), 1);
        assert_eq!(m.fixed, vec![DistParam::Phi]);
    }

    #[test]
    fn assemble_rejects_unsupported_sets() {
        let d = tiny_design();
        let n = IntervalLength::new(28).unwrap();
        let bad = |family, params: &[DistParam]| {
            assemble_model(
                family,
                params.iter().map(|p| LinearPredictorSpec::full(*p, &d)).collect(),
                &d,
                n,
                PriorConfig::default(),
            )
            .is_err()
        };
        assert!(bad(Family::HurdleNegBinomial, &[DistParam::Psi]));
        assert!(bad(Family::HurdleNegBinomial, &[DistParam::Mu, DistParam::Alpha]));
        assert!(bad(Family::BetaBinomial, &[DistParam::Phi]));
        assert!(bad(Family::CRatio, &[DistParam::Pi]));
        assert!(bad(Family::Binomial, &[]));
        let mut wrong_link = LinearPredictorSpec::full(DistParam::Pi, &d);
        wrong_link.link = Link::Log;
        assert!(assemble_model(Family::Binomial, vec![wrong_link], &d, n, PriorConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn link_round_trip(eta in -30.0f64..30.0) {
            for link in [Link::Logit, Link::Log, Link::Identity] {
                // The logistic saturates in f64 beyond about 15.
                if link == Link::Logit && eta.abs() > 15.0 {
                    continue;
                }
                let back = apply_link(apply_link_inverse(eta, link), link);
                prop_assert!((back - eta).abs() < 1e-10 * eta.abs().max(1.0), "{link:?} {eta} {back}");
            }
        }

        #[test]
        fn predictor_linearity(
            b1 in proptest::collection::vec(-3.0f64..3.0, 3),
            b2 in proptest::collection::vec(-3.0f64..3.0, 3),
            levels in proptest::collection::vec(0usize..4, 1..20),
        ) {
            let schema = Schema::new(vec![CovariateDecl::new("w", &["1", "2", "3", "4"])]);
            let lv = ["1", "2", "3", "4"];
            let recs: Vec<_> = levels.iter().enumerate()
                .map(|(i, &l)| rec(&format!("p{}", i % 3), "1", &[("w", lv[l])], 0)).collect();
            let d = build_design(&recs, &schema).unwrap();
            let spec = LinearPredictorSpec::full(DistParam::Eta, &d);
            let eval = |b: Vec<f64>| linear_predictor(&d, &CoefficientVector { intercept: 0.0, beta: b }, None, &spec).unwrap();
            let sum: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a + b).collect();
            let (e1, e2, e12) = (eval(b1.clone()), eval(b2.clone()), eval(sum));
            for i in 0..e1.len() {
                prop_assert!((e12[i] - e1[i] - e2[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn design_is_order_independent_after_canonical_sort(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let schema = Schema::new(vec![
                CovariateDecl::new("w", &["1", "2"]),
                CovariateDecl::new("g", &["m", "f", "x"]),
            ]);
            let mut recs = Vec::new();
            for p in 0..6 {
                for w in ["1", "2"] {
                    recs.push(rec(&format!("p{p}"), w, &[("w", w), ("g", ["m", "f", "x"][p % 3])], p as u32));
                }
            }
            let mut a = recs.clone();
            canonical_sort(&mut a);
            let mut b = recs;
            b.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            canonical_sort(&mut b);
            prop_assert_eq!(build_design(&a, &schema).unwrap(), build_design(&b, &schema).unwrap());
        }
    }
}

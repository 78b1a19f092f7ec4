//! Synthetic longitudinal days-of-use panels built from weekly drinking
//! patterns, plus row-wise sampling from a fitted-model parameterization.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{row_family_params, ConstrainedParams};
use crate::regression::{CovariateDecl, DesignMatrix, ModelSpec, ObservationRecord, Schema};

/// Abstain, then one to seven days a week.
pub const N_PATTERNS: usize = 8;

/// A categorical covariate with sampling probabilities and effects on the
/// pattern-selection score (the first level is the reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCovariate {
    pub name: String,
    pub levels: Vec<String>,
    pub probs: Vec<f64>,
    pub effects: Vec<f64>,
    /// Redrawn every wave rather than fixed per person.
    #[serde(default)]
    pub time_varying: bool,
}

impl SimCovariate {
    pub fn new(name: &str, levels: &[&str], probs: &[f64], effects: &[f64]) -> Self {
        Self {
            name: name.into(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
            probs: probs.to_vec(),
            effects: effects.to_vec(),
            time_varying: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_persons: usize,
    pub n_waves: usize,
    pub n_days: u32,
    /// Score shift of each wave; the first is the reference and should be 0.
    pub wave_effects: Vec<f64>,
    pub covariates: Vec<SimCovariate>,
    /// Standard deviation of the person-level score shift.
    pub person_sd: f64,
    /// Probabilities of abstaining and of `k = 1..=7` days a week.
    pub pattern_mixture: Vec<f64>,
    /// Probability that a non-zero count is moved one day up or down.
    pub jitter: f64,
    /// Probability that a row is dropped (uniform attrition).
    pub dropout: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_persons: 500,
            n_waves: 4,
            n_days: 28,
            wave_effects: vec![0.0, 0.1, -0.1, 0.0],
            covariates: vec![
                SimCovariate::new("isolation", &["no", "yes"], &[0.7, 0.3], &[0.0, 0.3]),
                SimCovariate::new("gender", &["male", "female", "non-binary"], &[0.45, 0.5, 0.05], &[0.0, -0.3, 0.0]),
            ],
            person_sd: 0.8,
            pattern_mixture: vec![0.17, 0.25, 0.20, 0.13, 0.08, 0.06, 0.05, 0.06],
            jitter: 0.3,
            dropout: 0.0,
            seed: 1,
        }
    }
}

fn check_probs(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{what} must be non-negative and sum to 1")));
    }
    Ok(())
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_waves == 0 || self.n_persons == 0 {
            return Err(Error::Config("n_persons and n_waves must be at least 1".into()));
        }
        if self.n_days < 28 {
            return Err(Error::Config("weekly patterns need an interval of at least 28 days".into()));
        }
        if self.wave_effects.len() != self.n_waves {
            return Err(Error::Config(format!(
                "{} wave effects for {} waves",
                self.wave_effects.len(),
                self.n_waves
            )));
        }
        if self.pattern_mixture.len() != N_PATTERNS {
            return Err(Error::Config(format!("pattern_mixture needs {N_PATTERNS} probabilities")));
        }
        check_probs("pattern_mixture", &self.pattern_mixture)?;
        for c in &self.covariates {
            if c.levels.is_empty() || c.probs.len() != c.levels.len() || c.effects.len() != c.levels.len() {
                return Err(Error::Config(format!("covariate `{}` needs one probability and effect per level", c.name)));
            }
            check_probs(&format!("probabilities of `{}`", c.name), &c.probs)?;
            if c.name == "wave" {
                return Err(Error::Config("`wave` is generated automatically".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.jitter) || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("jitter must lie in [0, 1] and dropout in [0, 1)".into()));
        }
        if !(self.person_sd >= 0.0) {
            return Err(Error::Config("person_sd must be non-negative".into()));
        }
        Ok(())
    }

    /// Schema of the generated records: `wave` first, then the covariates.
    pub fn schema(&self) -> Schema {
        let waves: Vec<String> = (1..=self.n_waves).map(|w| w.to_string()).collect();
        let mut covs = vec![CovariateDecl {
            name: "wave".into(),
            levels: waves,
            reference: None,
            recode: Default::default(),
        }];
        covs.extend(self.covariates.iter().map(|c| CovariateDecl {
            name: c.name.clone(),
            levels: c.levels.clone(),
            reference: None,
            recode: Default::default(),
        }));
        Schema::new(covs)
    }
}

/// Latent quantities behind a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub person_effects: Vec<f64>,
    /// Selected pattern per retained row (0 = abstain, k = days per week).
    pub patterns: Vec<usize>,
    /// Pattern-selection score per retained row.
    pub scores: Vec<f64>,
}

pub fn simulate_panel(config: &SimConfig) -> Result<(Vec<ObservationRecord>, SimTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let level_dists: Vec<WeightedIndex<f64>> = config
        .covariates
        .iter()
        .map(|c| WeightedIndex::new(&c.probs).map_err(|e| Error::Config(format!("`{}`: {e}", c.name))))
        .collect::<Result<_>>()?;
    let m = &config.pattern_mixture;
    let mut records = Vec::new();
    let mut truth = SimTruth { person_effects: Vec::new(), patterns: Vec::new(), scores: Vec::new() };
    let width = config.n_persons.to_string().len();
    for p in 0..config.n_persons {
        let z: f64 = rng.sample(StandardNormal);
        let b = config.person_sd * z;
        truth.person_effects.push(b);
        let mut fixed: Vec<usize> = level_dists.iter().map(|d| d.sample(&mut rng)).collect();
        for w in 0..config.n_waves {
            for (i, (c, d)) in config.covariates.iter().zip(&level_dists).enumerate() {
                if c.time_varying && w > 0 {
                    fixed[i] = d.sample(&mut rng);
                }
            }
            let score = b
                + config.wave_effects[w]
                + config.covariates.iter().zip(&fixed).map(|(c, &l)| c.effects[l]).sum::<f64>();
            let pattern = if rng.random::<f64>() < m[0] {
                0
            } else {
                let weights: Vec<f64> = (1..N_PATTERNS).map(|k| m[k] * (score * k as f64 / 3.0).exp()).collect();
                match WeightedIndex::new(&weights) {
                    Ok(d) => d.sample(&mut rng) + 1,
                    Err(_) => 1 + (0..N_PATTERNS - 1).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap_or(0),
                }
            };
            let mut days = 4 * pattern as i64;
            if pattern > 0 && rng.random::<f64>() < config.jitter {
                days += if rng.random::<bool>() { 1 } else { -1 };
            }
            let days = days.clamp(0, config.n_days as i64) as u32;
            if config.dropout > 0.0 && rng.random::<f64>() < config.dropout {
                continue;
            }
            let mut covariates: std::collections::BTreeMap<String, String> =
                config.covariates.iter().zip(&fixed).map(|(c, &l)| (c.name.clone(), c.levels[l].clone())).collect();
            covariates.insert("wave".into(), (w + 1).to_string());
            records.push(ObservationRecord {
                person_id: format!("P{p:0width$}"),
                wave: (w + 1).to_string(),
                covariates,
                days,
            });
            truth.patterns.push(pattern);
            truth.scores.push(score);
        }
    }
    Ok((records, truth))
}

/// Draws one response per design row from the model's family at the given
/// natural-scale parameters.
pub fn simulate_from_model<R: Rng + ?Sized>(
    model: &ModelSpec,
    truth: &ConstrainedParams,
    design: &DesignMatrix,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let rows = row_family_params(model, design, truth)?;
    Ok(rows.iter().map(|fp| fp.sample(model.n_days, rng)).collect())
}

//! Declarative TOML run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cratio::families::{Family, IntervalLength};
use cratio::priors::PriorConfig;
use cratio::regression::{assemble_model, CovariateDecl, DesignMatrix, DistParam, Link, LinearPredictorSpec, ModelSpec, Schema};
use cratio::simulate::SimConfig;
use cratio::SamplerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Column layout of the input CSV and the covariate declarations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    /// Column holding the days-of-use count.
    #[serde(default = "default_response")]
    pub response: String,
    /// Interval length `N`; counts must lie in `0..=N`.
    pub n_days: u32,
    #[serde(default = "default_person_id")]
    pub person_id: String,
    /// Column grouping rows for by-wave checks.
    #[serde(default = "default_wave")]
    pub wave: String,
    #[serde(default)]
    pub covariates: Vec<CovariateDecl>,
}

fn default_response() -> String {
    "days".into()
}

fn default_person_id() -> String {
    "person_id".into()
}

fn default_wave() -> String {
    "wave".into()
}

impl SchemaConfig {
    pub fn schema(&self) -> Schema {
        Schema::new(self.covariates.clone())
    }

    pub fn n_days(&self) -> CliResult<IntervalLength> {
        IntervalLength::new(self.n_days).map_err(|e| CliError::Config(format!("schema.n_days: {e}")))
    }

    fn validate(&self) -> CliResult<()> {
        self.n_days()?;
        let reserved = [&self.response, &self.person_id];
        if let Some(c) = self.covariates.iter().find(|c| reserved.contains(&&c.name)) {
            return Err(CliError::Config(format!("schema.covariates: `{}` is the response or person-id column", c.name)));
        }
        if self.response == self.person_id {
            return Err(CliError::Config("schema: response and person_id name the same column".into()));
        }
        self.schema().validate().map_err(|e| CliError::Config(format!("schema.covariates: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    /// Label used in comparison tables; defaults to the family label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Regressed distributional parameters; the others are single scalars.
    /// Defaults to the family's location parameter.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regress: Vec<DistParam>,
    /// Optional link per regressed parameter; must equal the natural link.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub links: BTreeMap<DistParam, Link>,
    /// Covariates entering every linear predictor; defaults to all declared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
    #[serde(default = "yes")]
    pub random_intercepts: bool,
}

fn yes() -> bool {
    true
}

impl ModelConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.family.label().to_string())
    }

    fn regressed(&self) -> Vec<DistParam> {
        if self.regress.is_empty() {
            DistParam::regressable_sets(self.family)[0].to_vec()
        } else {
            self.regress.clone()
        }
    }

    /// Builds the model for a design produced from `schema`.
    pub fn build(&self, schema: &SchemaConfig, design: &DesignMatrix, priors: &PriorConfig) -> CliResult<ModelSpec> {
        let regressed = self.regressed();
        for p in self.links.keys() {
            if !regressed.contains(p) {
                return Err(CliError::Config(format!("model.links: `{p}` is not regressed")));
            }
        }
        let columns: Vec<usize> = match &self.covariates {
            None => (0..design.n_cols()).collect(),
            Some(names) => {
                let mut cols = Vec::new();
                for name in names {
                    let decl = schema.covariates.iter().find(|c| &c.name == name).ok_or_else(|| {
                        CliError::Config(format!("model.covariates: `{name}` is not declared in schema.covariates"))
                    })?;
                    for col in decl.column_names() {
                        cols.push(design.column_index(&col).expect("declared covariate has design columns"));
                    }
                }
                cols
            }
        };
        let specs = regressed
            .iter()
            .map(|&param| LinearPredictorSpec {
                param,
                link: self.links.get(&param).copied().unwrap_or(param.natural_link()),
                columns: columns.clone(),
                random_intercept: self.random_intercepts,
            })
            .collect();
        assemble_model(self.family, specs, design, schema.n_days()?, priors.clone())
            .map_err(|e| CliError::Config(format!("model: {e}")))
    }
}

/// Posterior predictive checks to emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub ecdf: bool,
    pub rootogram: bool,
    pub sd: bool,
    pub by_wave: bool,
    /// Predictive replicates for the ECDF and rootogram, taken at evenly
    /// spaced draws.
    pub n_draws: usize,
    /// Predictive replicates for the SD check.
    pub sd_draws: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { ecdf: true, rootogram: true, sd: true, by_wave: true, n_draws: 25, sd_draws: 320 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    /// Coefficients to report as odds ratios; empty means all.
    pub coefficients: Vec<String>,
    /// Also write exact per-row predictive means, variances and quantiles.
    pub predictive: bool,
    pub probs: Vec<f64>,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self { coefficients: Vec::new(), predictive: false, probs: vec![0.05, 0.5, 0.95] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input CSV, relative to the configuration file.
    pub input: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Overrides `sampler.seed` and seeds predictive replicates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub schema: SchemaConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub checks: CheckConfig,
    #[serde(default)]
    pub summarize: SummarizeConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(seed) = config.seed {
            config.sampler.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    /// Reads a configuration and resolves relative paths against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if config.input.is_relative() {
            config.input = base.join(&config.input);
        }
        if let Some(out) = &config.output {
            if out.is_relative() {
                config.output = Some(base.join(out));
            }
        }
        Ok(config)
    }

    pub fn seed(&self) -> u64 {
        self.sampler.seed
    }

    pub fn validate(&self) -> CliResult<()> {
        self.schema.validate()?;
        self.priors.validate().map_err(|e| CliError::Config(format!("priors: {e}")))?;
        self.sampler.validate().map_err(|e| CliError::Config(format!("sampler: {e}")))?;
        if self.checks.n_draws == 0 || self.checks.sd_draws == 0 {
            return Err(CliError::Config("checks.n_draws and checks.sd_draws must be at least 1".into()));
        }
        if let Some(p) = self.summarize.probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(CliError::Config(format!("summarize.probs: level {p} outside (0, 1]")));
        }
        if let Some(names) = &self.model.covariates {
            if let Some(n) = names.iter().find(|n| !self.schema.covariates.iter().any(|c| &c.name == *n)) {
                return Err(CliError::Config(format!("model.covariates: `{n}` is not declared in schema.covariates")));
            }
        }
        Ok(())
    }
}

/// Simulation configuration file: the simulator settings plus an optional
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub simulation: SimConfig,
}

impl SimFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut file: SimFile =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        file.simulation.validate().map_err(|e| CliError::Config(format!("simulation: {e}")))?;
        if let Some(out) = &file.output {
            if out.is_relative() {
                file.output = Some(path.parent().unwrap_or(Path::new("")).join(out));
            }
        }
        Ok(file)
    }
}

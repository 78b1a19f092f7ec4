//! Posterior sampling: parameter layout, log posterior, and the sampler.

pub mod layout;
pub mod posterior;
pub mod sampler;
pub mod targets;

pub use layout::{BlockRange, ParameterLayout, PredictorBlocks, RandomBlocks};
pub use posterior::{constrain, row_family_params, ConstrainedParams, LogDensity, ModelData, Posterior};
pub use sampler::{chain_rng, run_chains, ChainStats, Engine, PosteriorDraws, SamplerConfig};

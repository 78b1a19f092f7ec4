pub mod diagnostics;
pub mod dual;
pub mod error;
pub mod families;
pub mod inference;
pub mod math;
pub mod modelcompare;
pub mod priors;
pub mod regression;
pub mod simulate;

pub use error::{Error, Result};
pub use families::{Family, FamilyParams, IntervalLength};
pub use inference::{LogDensity, ModelData, Posterior, PosteriorDraws, SamplerConfig};
pub use regression::{DistParam, LinearPredictorSpec, ModelSpec, ObservationRecord, Schema};

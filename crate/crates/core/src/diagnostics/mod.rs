//! Convergence diagnostics, posterior predictive checks and numeric
//! summaries.

pub mod checks;
pub mod convergence;
pub mod summaries;

pub use checks::{
    ecdf, ecdf_check, even_draw_indices, posterior_predict, rootogram_check, sd_check, EcdfCheck, PredictiveDrawSet,
    RootogramCheck, SdCheck,
};
pub use convergence::{ess_bulk, ess_tail, rank_normalize, rank_rhat, rhat_report, RhatReport};
pub use summaries::{
    coefficient_draws, coefficient_names, numeric_summaries, odds_ratio_summary, random_sd_draws, resolve_coefficient,
    OddsRatioSummary, PredictiveSummary,
};

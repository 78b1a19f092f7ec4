//! Response families for bounded days-of-use counts.
//!
//! Every family evaluates its probability mass function in log space. The
//! continuation-ratio, binomial and beta-binomial families are supported on
//! `0..=N`; the hurdle negative binomial is unbounded above and is truncated
//! numerically wherever a finite table is required.

pub mod betabin;
pub mod binomial;
pub mod cratio;
pub mod hurdle;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use betabin::BetaBinParams;
pub use binomial::BinomialParams;
pub use cratio::CRatioParams;
pub use hurdle::HurdleNBParams;

/// Tail mass below which the hurdle negative binomial support is truncated.
pub const HURDLE_TAIL_MASS: f64 = 1e-12;
/// Hard cap on the number of hurdle support points visited.
pub const HURDLE_MAX_TERMS: usize = 1_000_000;

/// The bound `N` on the count support (days in the recall interval).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct IntervalLength(u32);

impl IntervalLength {
    pub fn new(n_days: u32) -> Result<Self> {
        if n_days == 0 {
            return Err(Error::Domain("interval length must be at least one day".into()));
        }
        Ok(Self(n_days))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn as_usize(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u32> for IntervalLength {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        Self::new(v)
    }
}

impl From<IntervalLength> for u32 {
    fn from(n: IntervalLength) -> u32 {
        n.0
    }
}

impl std::fmt::Display for IntervalLength {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The four response families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[serde(alias = "c-ratio", alias = "cratio")]
    CRatio,
    #[serde(alias = "hurdle_nb", alias = "hurdle-nb")]
    HurdleNegBinomial,
    Binomial,
    #[serde(alias = "beta_bin", alias = "beta-binomial")]
    BetaBinomial,
}

impl Family {
    /// Whether every draw lies in `0..=N`.
    pub fn is_bounded(self) -> bool {
        !matches!(self, Family::HurdleNegBinomial)
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::CRatio => "C-Ratio",
            Family::HurdleNegBinomial => "Hurdle-NB",
            Family::Binomial => "Binomial",
            Family::BetaBinomial => "Beta-Bin",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Fully specified distribution for one observation.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyParams {
    CRatio(CRatioParams),
    HurdleNB(HurdleNBParams),
    Binomial(BinomialParams),
    BetaBinomial(BetaBinParams),
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::CRatio(_) => Family::CRatio,
            FamilyParams::HurdleNB(_) => Family::HurdleNegBinomial,
            FamilyParams::Binomial(_) => Family::Binomial,
            FamilyParams::BetaBinomial(_) => Family::BetaBinomial,
        }
    }

    pub fn log_pmf(&self, d: u32, n: IntervalLength) -> Result<f64> {
        match self {
            FamilyParams::CRatio(p) => cratio::log_pmf(p, d, n),
            FamilyParams::HurdleNB(p) => hurdle::log_pmf(p, d),
            FamilyParams::Binomial(p) => binomial::log_pmf(p, d, n),
            FamilyParams::BetaBinomial(p) => betabin::log_pmf(p, d, n),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: IntervalLength, rng: &mut R) -> u32 {
        match self {
            FamilyParams::CRatio(p) => cratio::sample(p, rng),
            FamilyParams::HurdleNB(p) => hurdle::sample(p, rng),
            FamilyParams::Binomial(p) => binomial::sample(p, n, rng),
            FamilyParams::BetaBinomial(p) => betabin::sample(p, n, rng),
        }
    }

    /// Probabilities of `0, 1, ...` up to the (possibly truncated) support end.
    pub fn pmf_table(&self, n: IntervalLength) -> Vec<f64> {
        match self {
            FamilyParams::CRatio(p) => cratio::log_pmf_table(p).into_iter().map(f64::exp).collect(),
            FamilyParams::HurdleNB(p) => hurdle::pmf_table(p),
            FamilyParams::Binomial(p) => (0..=n.get())
                .map(|d| binomial::log_pmf_unchecked(p.pi, d, n.get()).exp())
                .collect(),
            FamilyParams::BetaBinomial(p) => (0..=n.get())
                .map(|d| betabin::log_pmf_unchecked(p, d, n.get()).exp())
                .collect(),
        }
    }

    /// Exact mean and variance by direct summation over the support.
    pub fn mean_var(&self, n: IntervalLength) -> (f64, f64) {
        moments(&self.pmf_table(n))
    }
}

/// Mean and variance of a pmf given as a table over `0, 1, ...`.
pub fn moments(pmf: &[f64]) -> (f64, f64) {
    let mean: f64 = pmf.iter().enumerate().map(|(d, p)| d as f64 * p).sum();
    let var: f64 = pmf
        .iter()
        .enumerate()
        .map(|(d, p)| {
            let c = d as f64 - mean;
            c * c * p
        })
        .sum();
    (mean, var)
}

/// Smallest count whose cumulative probability reaches `q`.
pub fn pmf_quantile(pmf: &[f64], q: f64) -> u32 {
    let mut cum = 0.0;
    for (d, p) in pmf.iter().enumerate() {
        cum += p;
        // Tolerate rounding in the cumulative sum at the upper end.
        if cum >= q - 1e-12 {
            return d as u32;
        }
    }
    pmf.len().saturating_sub(1) as u32
}

pub(crate) fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("{name} must lie in (0, 1), got {p}")));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("{name} must be positive and finite, got {x}")));
    }
    Ok(())
}

pub(crate) fn check_support(d: u32, n: IntervalLength) -> Result<()> {
    if d > n.get() {
        return Err(Error::Domain(format!("count {d} outside support 0..={n}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_length_rejects_zero() {
        assert!(IntervalLength::new(0).is_err());
        assert_eq!(IntervalLength::new(28).unwrap().get(), 28);
    }

    #[test]
    fn binomial_moments() {
        let n = IntervalLength::new(28).unwrap();
        let (m, v) = FamilyParams::Binomial(BinomialParams::new(0.5).unwrap()).mean_var(n);
        assert!((m - 14.0).abs() < 1e-12);
        assert!((v - 7.0).abs() < 1e-10);
    }

    #[test]
    fn uniform_beta_binomial_moments() {
        // Discrete uniform on 0..=28: mean 14, variance (29^2 - 1) / 12 = 70.
        let n = IntervalLength::new(28).unwrap();
        let (m, v) = FamilyParams::BetaBinomial(BetaBinParams::new(0.5, 0.5).unwrap()).mean_var(n);
        let oracle_mean = (0..=28).map(f64::from).sum::<f64>() / 29.0;
        let oracle_var = (0..=28).map(|d| (f64::from(d) - oracle_mean).powi(2)).sum::<f64>() / 29.0;
        assert!((oracle_var - 70.0).abs() < 1e-12);
        assert!((m - oracle_mean).abs() < 1e-10);
        assert!((v - oracle_var).abs() < 1e-9);
    }

    #[test]
    fn point_mass_cratio_moments() {
        let n = IntervalLength::new(28).unwrap();
        let p = CRatioParams::new(0.0, vec![100.0; 28]).unwrap();
        let (m, v) = FamilyParams::CRatio(p).mean_var(n);
        assert!(m.abs() < 1e-30 && v.abs() < 1e-30);
    }

    #[test]
    fn overdispersion_beta_binomial_vs_binomial() {
        let n = IntervalLength::new(28).unwrap();
        for &pi in &[0.1, 0.37, 0.5, 0.9] {
            let (_, vb) = FamilyParams::Binomial(BinomialParams::new(pi).unwrap()).mean_var(n);
            for &phi in &[1e-4, 0.01, 0.3, 2.0, 50.0] {
                let (_, vbb) =
                    FamilyParams::BetaBinomial(BetaBinParams::new(pi, phi).unwrap()).mean_var(n);
                assert!(vbb > vb, "pi={pi} phi={phi}: {vbb} <= {vb}");
            }
        }
    }

    #[test]
    fn quantile_rule_is_lower() {
        let pmf = [0.25, 0.25, 0.5];
        assert_eq!(pmf_quantile(&pmf, 0.25), 0);
        assert_eq!(pmf_quantile(&pmf, 0.26), 1);
        assert_eq!(pmf_quantile(&pmf, 0.5), 1);
        assert_eq!(pmf_quantile(&pmf, 1.0), 2);
    }

    #[test]
    fn family_serde_names() {
        let f: Family = serde_json::from_str("\"c-ratio\"").unwrap();
        assert_eq!(f, Family::CRatio);
        let f: Family = serde_json::from_str("\"hurdle_neg_binomial\"").unwrap();
        assert_eq!(f, Family::HurdleNegBinomial);
    }
}

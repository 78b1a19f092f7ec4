//! Prior log-densities: horseshoe shrinkage on fixed effects, Student-t on
//! thresholds, intercepts and scales, and LKJ on random-effect correlations.
//! All densities are normalized.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::dual::Real;
use crate::error::{Error, Result};
use crate::math::LN_2PI;
use crate::regression::DistParam;

const LN_PI: f64 = 1.144_729_885_849_400_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentT {
    pub df: f64,
    #[serde(default)]
    pub loc: f64,
    pub scale: f64,
}

impl StudentT {
    pub const fn new(df: f64, loc: f64, scale: f64) -> Self {
        Self { df, loc, scale }
    }

    /// Student-t with three degrees of freedom, location 0 and scale 2.5.
    pub const fn weakly_informative() -> Self {
        Self::new(3.0, 0.0, 2.5)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.df > 0.0 && self.scale > 0.0 && self.loc.is_finite()) {
            return Err(Error::Config(format!("invalid Student-t prior for {what}: {self:?}")));
        }
        Ok(())
    }

    fn log_norm(&self) -> f64 {
        let v = self.df;
        ln_gamma((v + 1.0) / 2.0) - ln_gamma(v / 2.0) - 0.5 * (v * std::f64::consts::PI).ln() - self.scale.ln()
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.log_density_grad(x).0
    }

    /// Log-density and its derivative in `x`.
    #[inline]
    pub fn log_density_grad(&self, x: f64) -> (f64, f64) {
        let v = self.df;
        let z = (x - self.loc) / self.scale;
        let q = 1.0 + z * z / v;
        let value = self.log_norm() - (v + 1.0) / 2.0 * q.ln();
        let grad = -(v + 1.0) * z / (v * q * self.scale);
        (value, grad)
    }

    /// Density folded at `loc` (`x >= loc`); `-inf` below.
    pub fn half_log_density(&self, x: f64) -> f64 {
        self.half_log_density_grad(x).0
    }

    #[inline]
    pub fn half_log_density_grad(&self, x: f64) -> (f64, f64) {
        if x < self.loc {
            return (f64::NEG_INFINITY, 0.0);
        }
        let (v, g) = self.log_density_grad(x);
        (v + std::f64::consts::LN_2, g)
    }
}

pub fn student_t_log_density(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    StudentT::new(df, loc, scale).log_density(x)
}

#[inline]
pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Half-Cauchy(0, scale) log-density and derivative for `x >= 0`.
#[inline]
pub fn half_cauchy_log_density_grad(x: f64, scale: f64) -> (f64, f64) {
    if x < 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    let z = x / scale;
    let value = std::f64::consts::LN_2 - LN_PI - scale.ln() - (z * z).ln_1p();
    (value, -2.0 * z / (scale * (1.0 + z * z)))
}

pub fn half_cauchy_log_density(x: f64, scale: f64) -> f64 {
    half_cauchy_log_density_grad(x, scale).0
}

/// Local and global horseshoe scales on the natural (positive) scale.
#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeState {
    pub lambda: Vec<f64>,
    pub tau: f64,
}

/// Gradient of [`horseshoe_log_density`].
#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeGradient {
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub tau: f64,
}

/// `sum_j [Normal(beta_j | 0, lambda_j tau) + half-Cauchy(lambda_j | 0, 1)]
///  + half-Cauchy(tau | 0, global_scale)`, with its gradient.
pub fn horseshoe_log_density(
    beta: &[f64],
    hs: &HorseshoeState,
    global_scale: f64,
) -> Result<(f64, HorseshoeGradient)> {
    if beta.len() != hs.lambda.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients but {} local scales",
            beta.len(),
            hs.lambda.len()
        )));
    }
    if !(hs.tau > 0.0) || hs.lambda.iter().any(|l| !(*l > 0.0)) || !(global_scale > 0.0) {
        return Err(Error::Domain("horseshoe scales must be positive".into()));
    }
    let (mut value, dtau0) = half_cauchy_log_density_grad(hs.tau, global_scale);
    let mut grad = HorseshoeGradient {
        beta: vec![0.0; beta.len()],
        lambda: vec![0.0; beta.len()],
        tau: dtau0,
    };
    for (j, (&b, &l)) in beta.iter().zip(&hs.lambda).enumerate() {
        let s = l * hs.tau;
        value += normal_log_density(b, 0.0, s);
        let (hc, dhc) = half_cauchy_log_density_grad(l, 1.0);
        value += hc;
        grad.beta[j] = -b / (s * s);
        // d/ds [-ln s - b^2 / (2 s^2)] = -1/s + b^2/s^3
        let ds = -1.0 / s + b * b / (s * s * s);
        grad.lambda[j] = ds * hs.tau + dhc;
        grad.tau += ds * l;
    }
    Ok((value, grad))
}

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Continuation-ratio thresholds.
    pub threshold: StudentT,
    /// Intercepts of non-ordinal predictors.
    pub intercept: StudentT,
    /// Half Student-t on random-effect standard deviations.
    pub sd: StudentT,
    /// LKJ shape for random-effect correlation matrices.
    pub lkj_eta: f64,
    /// Scale of the half-Cauchy prior on the horseshoe global scale.
    pub horseshoe_global_scale: f64,
    /// Half Student-t priors for unregressed positive scalars (`alpha`, `phi`).
    #[serde(skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub aux_scalar: std::collections::BTreeMap<DistParam, StudentT>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            threshold: StudentT::weakly_informative(),
            intercept: StudentT::weakly_informative(),
            sd: StudentT::weakly_informative(),
            lkj_eta: 1.0,
            horseshoe_global_scale: 1.0,
            aux_scalar: std::collections::BTreeMap::new(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        self.threshold.validate("thresholds")?;
        self.intercept.validate("intercepts")?;
        self.sd.validate("standard deviations")?;
        for (p, t) in &self.aux_scalar {
            t.validate(p.name())?;
        }
        if !(self.lkj_eta > 0.0) {
            return Err(Error::Config(format!("lkj_eta must be positive, got {}", self.lkj_eta)));
        }
        if !(self.horseshoe_global_scale > 0.0) {
            return Err(Error::Config("horseshoe_global_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn aux(&self, p: DistParam) -> StudentT {
        self.aux_scalar.get(&p).copied().unwrap_or(StudentT::weakly_informative())
    }
}

/// Log normalizing constant of the LKJ density `det(R)^(eta - 1)` over
/// `k x k` correlation matrices.
pub fn lkj_log_normalizer(k: usize, eta: f64) -> f64 {
    (1..k)
        .map(|i| {
            let m = (k - i) as f64;
            let a = eta + (m - 1.0) / 2.0;
            (2.0 * eta - 2.0 + m) * m * std::f64::consts::LN_2 + m * ln_beta(a, a)
        })
        .sum()
}

/// LKJ log-density of a correlation Cholesky factor (row-major `k x k`),
/// expressed as a density over the strictly-lower entries of the factor.
pub fn lkj_log_density(corr_chol: &[f64], eta: f64, k: usize) -> Result<f64> {
    validate_corr_cholesky(corr_chol, k)?;
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("LKJ shape must be positive, got {eta}")));
    }
    Ok(lkj_cholesky_unnormalized(corr_chol, k, eta) - lkj_log_normalizer(k, eta))
}

pub(crate) fn lkj_cholesky_unnormalized<T: Real>(l: &[T], k: usize, eta: f64) -> T {
    let mut acc = T::from_f64(0.0);
    for i in 1..k {
        let w = (k - i - 1) as f64 + 2.0 * eta - 2.0;
        if w != 0.0 {
            acc += T::from_f64(w) * l[i * k + i].ln();
        }
    }
    acc
}

pub fn validate_corr_cholesky(l: &[f64], k: usize) -> Result<()> {
    if l.len() != k * k {
        return Err(Error::Dimension(format!("expected {} entries, got {}", k * k, l.len())));
    }
    for i in 0..k {
        let row = &l[i * k..(i + 1) * k];
        if row[i + 1..].iter().any(|&x| x != 0.0) {
            return Err(Error::Domain("Cholesky factor must be lower triangular".into()));
        }
        if !(row[i] > 0.0) {
            return Err(Error::Domain("Cholesky factor needs a positive diagonal".into()));
        }
        let norm: f64 = row.iter().map(|x| x * x).sum();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!("row {i} of correlation factor has norm^2 {norm}")));
        }
    }
    Ok(())
}

/// Maps `k(k-1)/2` unconstrained reals to a correlation Cholesky factor via
/// tanh-transformed canonical partial correlations. Returns the row-major
/// factor and the log absolute Jacobian determinant.
pub fn corr_cholesky_from_unconstrained<T: Real>(y: &[T], k: usize) -> (Vec<T>, T) {
    assert_eq!(y.len(), k * (k - 1) / 2);
    let zero = T::from_f64(0.0);
    let one = T::from_f64(1.0);
    let mut l = vec![zero; k * k];
    let mut log_jac = zero;
    if k == 0 {
        return (l, log_jac);
    }
    l[0] = one;
    let mut idx = 0;
    for i in 1..k {
        let z = y[idx].tanh();
        idx += 1;
        log_jac += (one - z * z).ln();
        l[i * k] = z;
        let mut sum_sq = z * z;
        for j in 1..i {
            let z = y[idx].tanh();
            idx += 1;
            log_jac += (one - z * z).ln();
            let rest = one - sum_sq;
            log_jac += T::from_f64(0.5) * rest.ln();
            let v = z * rest.sqrt();
            l[i * k + j] = v;
            sum_sq += v * v;
        }
        l[i * k + i] = (one - sum_sq).sqrt();
    }
    (l, log_jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::Dual;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn student_t_mode() {
        let expected = (ln_gamma(2.0) - ln_gamma(1.5) - (3.0 * std::f64::consts::PI).sqrt().ln() - 2.5f64.ln())
            .exp()
            .ln();
        assert!((student_t_log_density(0.0, 3.0, 0.0, 2.5) - expected).abs() < 1e-14);
    }

    #[test]
    fn student_t_symmetry_and_integral() {
        let t = StudentT::weakly_informative();
        for x in [0.1, 1.0, 7.5, 40.0] {
            assert_eq!(t.log_density(x), t.log_density(-x));
        }
        // Substitute x = tan(u) on (-pi/2, pi/2) and apply composite Simpson.
        let n = 200_000;
        let a = -std::f64::consts::FRAC_PI_2;
        let h = std::f64::consts::PI / n as f64;
        let f = |u: f64| {
            let c = u.cos();
            if c.abs() < 1e-300 {
                return 0.0;
            }
            t.log_density(u.tan()).exp() / (c * c)
        };
        let mut s = f(a) + f(-a);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = s * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-8, "{integral}");
    }

    #[test]
    fn half_cauchy_at_one() {
        assert!((half_cauchy_log_density(1.0, 1.0) - (1.0 / std::f64::consts::PI).ln()).abs() < 1e-15);
        assert_eq!(half_cauchy_log_density(-0.1, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn horseshoe_zero_coefficients() {
        let hs = HorseshoeState { lambda: vec![1.0; 3], tau: 1.0 };
        let (v, _) = horseshoe_log_density(&[0.0; 3], &hs, 1.0).unwrap();
        let expected = 3.0 * (-0.5 * LN_2PI) + 4.0 * (1.0 / std::f64::consts::PI).ln();
        assert!((v - expected).abs() < 1e-13);
        assert!(horseshoe_log_density(&[0.0; 2], &hs, 1.0).is_err());
        let bad = HorseshoeState { lambda: vec![1.0, -1.0, 1.0], tau: 1.0 };
        assert!(horseshoe_log_density(&[0.0; 3], &bad, 1.0).is_err());
    }

    #[test]
    fn horseshoe_matches_independent_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let p = rng.random_range(1..6);
            let lambda: Vec<f64> = (0..p).map(|_| rng.random_range(0.05..5.0)).collect();
            let tau = rng.random_range(0.01..3.0);
            // Keep beta within a few scales so the linear-space oracle does not underflow.
            let beta: Vec<f64> = lambda.iter().map(|l| l * tau * rng.random_range(-4.0..4.0)).collect();
            let g = rng.random_range(0.1..2.0);
            let (v, _) = horseshoe_log_density(&beta, &HorseshoeState { lambda: lambda.clone(), tau }, g).unwrap();
            // Densities multiplied in linear space, logged once.
            let mut dens = 2.0 / (std::f64::consts::PI * g * (1.0 + (tau / g).powi(2)));
            for j in 0..p {
                let s = lambda[j] * tau;
                dens *= (-beta[j] * beta[j] / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
                dens *= 2.0 / (std::f64::consts::PI * (1.0 + lambda[j] * lambda[j]));
            }
            assert!((v - dens.ln()).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn horseshoe_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let h = 1e-5;
        for _ in 0..100 {
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lambda: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..3.0)).collect();
            let tau = rng.random_range(0.2..2.0);
            let f = |b: &[f64], l: &[f64], t: f64| {
                horseshoe_log_density(b, &HorseshoeState { lambda: l.to_vec(), tau: t }, 1.0).unwrap().0
            };
            let (_, g) = horseshoe_log_density(&beta, &HorseshoeState { lambda: lambda.clone(), tau }, 1.0).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0) < 1e-6;
            for j in 0..3 {
                let mut bp = beta.clone();
                let mut bm = beta.clone();
                bp[j] += h;
                bm[j] -= h;
                assert!(close(g.beta[j], (f(&bp, &lambda, tau) - f(&bm, &lambda, tau)) / (2.0 * h)));
                let mut lp = lambda.clone();
                let mut lm = lambda.clone();
                lp[j] += h;
                lm[j] -= h;
                assert!(close(g.lambda[j], (f(&beta, &lp, tau) - f(&beta, &lm, tau)) / (2.0 * h)));
            }
            assert!(close(g.tau, (f(&beta, &lambda, tau + h) - f(&beta, &lambda, tau - h)) / (2.0 * h)));
        }
    }

    #[test]
    fn horseshoe_shrinkage_ordering() {
        // The pull of the Normal term toward zero weakens as lambda grows.
        let tau = 0.7;
        for &b in &[-1.3, 0.4, 2.0] {
            let mut last = f64::INFINITY;
            for &l in &[0.1, 0.5, 1.0, 2.0, 10.0] {
                let hs = HorseshoeState { lambda: vec![l], tau };
                let (_, g) = horseshoe_log_density(&[b], &hs, 1.0).unwrap();
                assert!(g.beta[0].abs() < last);
                assert_eq!(g.beta[0].signum(), -b.signum());
                last = g.beta[0].abs();
            }
        }
    }

    #[test]
    fn student_t_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = StudentT::new(3.0, 0.3, 2.5);
        for _ in 0..100 {
            let x = rng.random_range(-20.0..20.0);
            let h = 1e-5;
            let fd = (t.log_density(x + h) - t.log_density(x - h)) / (2.0 * h);
            let (_, g) = t.log_density_grad(x);
            assert!((g - fd).abs() / g.abs().max(1.0) < 1e-6);
            let (_, gc) = half_cauchy_log_density_grad(x.abs(), 1.3);
            let fdc = (half_cauchy_log_density(x.abs() + h, 1.3) - half_cauchy_log_density(x.abs() - h, 1.3))
                / (2.0 * h);
            if x.abs() > h {
                assert!((gc - fdc).abs() / gc.abs().max(1.0) < 1e-6);
            }
        }
    }

    fn chol2(rho: f64) -> Vec<f64> {
        vec![1.0, 0.0, rho, (1.0 - rho * rho).sqrt()]
    }

    #[test]
    fn lkj_k2_uniform() {
        for rho in [-0.5, 0.0, 0.5] {
            let v = lkj_log_density(&chol2(rho), 1.0, 2).unwrap();
            assert!((v - 0.5f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn lkj_k1_is_zero() {
        assert_eq!(lkj_log_density(&[1.0], 1.0, 1).unwrap(), 0.0);
        assert_eq!(lkj_log_density(&[1.0], 3.0, 1).unwrap(), 0.0);
    }

    #[test]
    fn lkj_rejects_invalid_factor() {
        assert!(lkj_log_density(&[1.0, 0.0, 0.9, 0.9], 1.0, 2).is_err());
        assert!(lkj_log_density(&[1.0, 0.1, 0.0, 1.0], 1.0, 2).is_err());
        assert!(lkj_log_density(&chol2(0.3), 0.0, 2).is_err());
    }

    #[test]
    fn lkj_k3_normalizes_by_monte_carlo() {
        // Free coordinates: l21 in (-1, 1) and (l31, l32) in the unit disk.
        let eta = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 2_000_000;
        let volume = 2.0 * std::f64::consts::PI;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let l21: f64 = rng.random_range(-1.0..1.0);
            let (l31, l32) = loop {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                if a * a + b * b < 1.0 {
                    break (a, b);
                }
            };
            let l = [
                1.0, 0.0, 0.0,
                l21, (1.0 - l21 * l21).sqrt(), 0.0,
                l31, l32, (1.0 - l31 * l31 - l32 * l32).sqrt(),
            ];
            let w = lkj_log_density(&l, eta, 3).unwrap().exp() * volume;
            sum += w;
            sum_sq += w * w;
        }
        let mean = sum / draws as f64;
        let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn normalizer_k3_eta1_is_volume() {
        // Volume of the 3x3 correlation elliptope is pi^2 / 2.
        let v = lkj_log_normalizer(3, 1.0);
        assert!((v - (std::f64::consts::PI.powi(2) / 2.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn cpc_transform_is_valid_and_jacobian_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 1..=4usize {
            let m = k * (k - 1) / 2;
            for _ in 0..20 {
                let y: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
                let (l, lj) = corr_cholesky_from_unconstrained(&y, k);
                validate_corr_cholesky(&l, k).unwrap();
                // Jacobian of y -> strictly-lower entries of L (triangular in this ordering).
                let h = 1e-6;
                let lower: Vec<(usize, usize)> =
                    (1..k).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
                let mut jac = vec![vec![0.0; m]; m];
                for c in 0..m {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[c] += h;
                    ym[c] -= h;
                    let (lp, _) = corr_cholesky_from_unconstrained(&yp, k);
                    let (lm, _) = corr_cholesky_from_unconstrained(&ym, k);
                    for (r, &(i, j)) in lower.iter().enumerate() {
                        jac[r][c] = (lp[i * k + j] - lm[i * k + j]) / (2.0 * h);
                    }
                }
                let det = determinant(jac);
                assert!((det.abs().ln() - lj).abs() < 1e-6, "k={k}");
                // Dual-number evaluation agrees with f64.
                if m > 0 {
                    let yd: Vec<Dual> = y.iter().map(|&v| Dual::new(v, 0.0)).collect();
                    let (ld, ljd) = corr_cholesky_from_unconstrained(&yd, k);
                    assert_eq!(ljd.re, lj);
                    assert_eq!(ld.iter().map(|d| d.re).collect::<Vec<_>>(), l);
                }
            }
        }
    }

    fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
        let n = a.len();
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            if a[p][c] == 0.0 {
                return 0.0;
            }
            if p != c {
                a.swap(p, c);
                det = -det;
            }
            det *= a[c][c];
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for cc in c..n {
                    a[r][cc] -= f * a[c][cc];
                }
            }
        }
        det
    }
}

use cratio::families::{Family, IntervalLength};
use cratio::inference::{constrain, row_family_params, LogDensity, ModelData, Posterior};
use cratio::math::LN_2PI;
use cratio::priors::{
    corr_cholesky_from_unconstrained, horseshoe_log_density, lkj_log_density, PriorConfig, StudentT,
};
use cratio::regression::{assemble_model, CovariateDecl, DistParam, LinearPredictorSpec, ModelSpec, ObservationRecord, Schema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn records(n_persons: usize, seed: u64, max_days: u32) -> Vec<ObservationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for p in 0..n_persons {
        for w in ["1", "2"] {
            let covs = [
                ("wave".to_string(), w.to_string()),
                ("iso".to_string(), ["no", "yes"][rng.random_range(0..2)].to_string()),
                ("gender".to_string(), ["m", "f", "x"][rng.random_range(0..3)].to_string()),
            ];
            out.push(ObservationRecord {
                person_id: format!("p{p:03}"),
                wave: w.into(),
                covariates: covs.into_iter().collect(),
                days: rng.random_range(0..=max_days),
            });
        }
    }
    out
}

fn schema() -> Schema {
    Schema::new(vec![
        CovariateDecl::new("wave", &["1", "2"]),
        CovariateDecl::new("iso", &["no", "yes"]),
        CovariateDecl::new("gender", &["m", "f", "x"]),
    ])
}

fn model(family: Family, params: &[DistParam], data: &ModelData, n: u32) -> ModelSpec {
    let specs = params.iter().map(|p| LinearPredictorSpec::full(*p, &data.design)).collect();
    assemble_model(family, specs, &data.design, IntervalLength::new(n).unwrap(), PriorConfig::default()).unwrap()
}

fn random_theta(dim: usize, seed: u64, radius: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-radius..radius)).collect()
}

/// Largest gradient error relative to `max(|analytic|, 1)` over all coordinates.
fn gradient_error(post: &Posterior, theta: &[f64]) -> (f64, usize) {
    let dim = post.dim();
    let mut g = vec![0.0; dim];
    let f0 = post.log_density_grad(theta, &mut g);
    assert!(f0.is_finite());
    let h = 1e-5;
    let mut worst = (0.0, 0);
    let mut tp = theta.to_vec();
    for j in 0..dim {
        tp[j] = theta[j] + h;
        let fp = post.log_density(&tp);
        tp[j] = theta[j] - h;
        let fm = post.log_density(&tp);
        tp[j] = theta[j];
        let rel = (g[j] - (fp - fm) / (2.0 * h)).abs() / g[j].abs().max(1.0);
        if rel > worst.0 {
            worst = (rel, j);
        }
    }
    worst
}

fn check_family(family: Family, params: &[DistParam], n: u32, n_points: u64, seed: u64) {
    let data = ModelData::from_records(&records(6, seed, n), &schema()).unwrap();
    let m = model(family, params, &data, n);
    let post = Posterior::new(&m, &data).unwrap();
    for p in 0..n_points {
        let theta = random_theta(m.dim(), 1000 * seed + p, 1.0);
        let (err, j) = gradient_error(&post, &theta);
        assert!(err < 1e-6, "{family} {params:?} point {p} coordinate {}: relative error {err}", m.layout.names[j]);
    }
}

#[test]
fn gradients_match_finite_differences_with_full_prior_stack() {
    // Every family with every parameter regressed: horseshoe slopes, Student-t
    // intercepts and thresholds, and an LKJ prior wherever there are at least
    // two correlated random intercepts.
    check_family(Family::CRatio, &[DistParam::Eta], 6, 200, 1);
    check_family(Family::Binomial, &[DistParam::Pi], 28, 200, 2);
    check_family(Family::BetaBinomial, &[DistParam::Pi, DistParam::Phi], 28, 200, 3);
    check_family(Family::HurdleNegBinomial, &[DistParam::Psi, DistParam::Mu, DistParam::Alpha], 28, 200, 4);
}

#[test]
fn gradients_match_finite_differences_for_partial_regressions() {
    check_family(Family::CRatio, &[DistParam::Eta], 28, 20, 5);
    check_family(Family::BetaBinomial, &[DistParam::Pi], 28, 20, 6);
    check_family(Family::HurdleNegBinomial, &[DistParam::Mu], 28, 20, 7);
    check_family(Family::HurdleNegBinomial, &[DistParam::Psi, DistParam::Mu], 28, 20, 8);
}

#[test]
fn pointwise_loglik_matches_family_pmfs() {
    for (family, params) in [
        (Family::CRatio, vec![DistParam::Eta]),
        (Family::BetaBinomial, vec![DistParam::Pi, DistParam::Phi]),
        (Family::HurdleNegBinomial, vec![DistParam::Psi, DistParam::Mu]),
        (Family::Binomial, vec![DistParam::Pi]),
    ] {
        let data = ModelData::from_records(&records(5, 7, 28), &schema()).unwrap();
        let m = model(family, &params, &data, 28);
        let post = Posterior::new(&m, &data).unwrap();
        let theta = random_theta(m.dim(), 3, 1.0);
        let mut pw = vec![0.0; data.n_rows()];
        post.pointwise_loglik(&theta, &mut pw);
        let c = constrain(&m, &theta).unwrap();
        let rows = row_family_params(&m, &data.design, &c).unwrap();
        let n = IntervalLength::new(28).unwrap();
        for (i, fp) in rows.iter().enumerate() {
            let expected = fp.log_pmf(data.days[i], n).unwrap();
            assert!((pw[i] - expected).abs() < 1e-9 * expected.abs().max(1.0), "{family} row {i}: {} vs {expected}", pw[i]);
        }
    }
}

#[test]
fn zero_data_posterior_is_the_prior() {
    let schema = schema();
    let full = records(4, 1, 28);
    let data_full = ModelData::from_records(&full, &schema).unwrap();
    let m = model(Family::HurdleNegBinomial, &[DistParam::Psi, DistParam::Mu], &data_full, 28);
    // Same design and persons, but no rows contribute likelihood.
    let mut empty = data_full.clone();
    empty.design.n_rows = 0;
    empty.design.values.clear();
    empty.design.person_index.clear();
    empty.days.clear();
    empty.waves.clear();
    let post = Posterior::new(&m, &empty).unwrap();
    let theta = random_theta(m.dim(), 11, 1.0);
    let value = post.log_density(&theta);

    // Term-by-term prior from the priors module.
    let c = constrain(&m, &theta).unwrap();
    let lay = &m.layout;
    let t = StudentT::weakly_informative();
    let mut expected = 0.0;
    for (b, ((_, coef), hs)) in lay.predictors.iter().zip(c.coefficients.iter().zip(&c.horseshoe)) {
        expected += t.log_density(coef.intercept);
        let hs = hs.as_ref().unwrap();
        let (v, _) = horseshoe_log_density(&coef.beta, hs, 1.0).unwrap();
        expected += v;
        // Change of variables: beta = z * lambda * tau, and log-scale lambda, tau.
        for l in &hs.lambda {
            expected += (l * hs.tau).ln() + l.ln();
        }
        expected += hs.tau.ln();
        assert_eq!(b.beta_raw.len, coef.beta.len());
    }
    for &(p, o) in &lay.scalars {
        assert_eq!(p, DistParam::Alpha);
        let a = theta[o].exp();
        expected += t.half_log_density(a) + theta[o];
    }
    let r = lay.random.as_ref().unwrap();
    let k = r.k;
    // b = diag(sigma) L z: density of b plus the Jacobian of (z -> b) equals the density of z.
    for z in &theta[r.z.range()] {
        expected += -0.5 * z * z - 0.5 * LN_2PI;
    }
    for s in &c.random.sigma {
        expected += t.half_log_density(*s) + s.ln();
    }
    let (l, log_jac) = corr_cholesky_from_unconstrained(&theta[r.corr.range()], k);
    expected += lkj_log_density(&l, 1.0, k).unwrap() + log_jac;
    assert!((value - expected).abs() < 1e-9 * expected.abs(), "{value} vs {expected}");
}

#[test]
fn rejects_out_of_support_counts() {
    let mut recs = records(3, 2, 28);
    recs[0].days = 29;
    let data = ModelData::from_records(&recs, &schema()).unwrap();
    let spec = vec![LinearPredictorSpec::full(DistParam::Pi, &data.design)];
    let m = assemble_model(Family::Binomial, spec, &data.design, IntervalLength::new(28).unwrap(), PriorConfig::default())
        .unwrap();
    let err = Posterior::new(&m, &data).unwrap_err();
    assert!(err.to_string().contains("29"));
}

#[test]
fn non_finite_points_are_rejected() {
    let data = ModelData::from_records(&records(3, 4, 28), &schema()).unwrap();
    let m = model(Family::HurdleNegBinomial, &[DistParam::Mu], &data, 28);
    let post = Posterior::new(&m, &data).unwrap();
    let mut theta = vec![0.0; m.dim()];
    let (_, o) = m.layout.scalars[1];
    theta[o] = 800.0;
    let mut g = vec![0.0; m.dim()];
    assert!(!post.log_density_grad(&theta, &mut g).is_finite());
}

#[test]
fn fingerprint_tracks_counts() {
    let recs = records(3, 5, 28);
    let a = ModelData::from_records(&recs, &schema()).unwrap();
    let mut recs2 = recs.clone();
    recs2[1].days = (recs2[1].days + 1) % 29;
    let b = ModelData::from_records(&recs2, &schema()).unwrap();
    assert_eq!(a.fingerprint(), ModelData::from_records(&recs, &schema()).unwrap().fingerprint());
    assert_ne!(a.fingerprint(), b.fingerprint());
    assert_eq!(a.fingerprint().len(), 64);
}

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use cratio::diagnostics::rank_rhat;
use cratio::families::{Family, FamilyParams, IntervalLength};
use cratio::families::cratio::CRatioParams;
use cratio::inference::{LogDensity, ModelData, Posterior};
use cratio::modelcompare::{psis_loo, PointwiseLogLik};
use cratio::priors::PriorConfig;
use cratio::regression::{assemble_model, DistParam, LinearPredictorSpec};
use cratio::simulate::{simulate_panel, SimConfig};

fn pmf(c: &mut Criterion) {
    let n = IntervalLength::new(28).unwrap();
    let thresholds: Vec<f64> = (0..28).map(|r| -1.0 + 0.1 * r as f64).collect();
    let cr = FamilyParams::CRatio(CRatioParams::new(0.3, thresholds).unwrap());
    c.bench_function("c_ratio_pmf_table_28", |b| b.iter(|| black_box(&cr).pmf_table(n)));
}

fn posterior_gradient(c: &mut Criterion) {
    let sim = SimConfig::default();
    let (records, _) = simulate_panel(&sim).unwrap();
    let data = ModelData::from_records(&records, &sim.schema()).unwrap();
    let mut group = c.benchmark_group("log_density_grad_2000_rows");
    for (family, params) in [
        (Family::CRatio, vec![DistParam::Eta]),
        (Family::BetaBinomial, vec![DistParam::Pi, DistParam::Phi]),
        (Family::HurdleNegBinomial, vec![DistParam::Psi, DistParam::Mu]),
        (Family::Binomial, vec![DistParam::Pi]),
    ] {
        let specs = params.iter().map(|p| LinearPredictorSpec::full(*p, &data.design)).collect();
        let model = assemble_model(family, specs, &data.design, IntervalLength::new(28).unwrap(), PriorConfig::default()).unwrap();
        let post = Posterior::new(&model, &data).unwrap();
        let theta = vec![0.1; post.dim()];
        let mut grad = vec![0.0; post.dim()];
        group.bench_function(family.label(), |b| b.iter(|| post.log_density_grad(black_box(&theta), &mut grad)));
    }
    group.finish();
}

fn diagnostics(c: &mut Criterion) {
    let chains: Vec<Vec<f64>> = (0..4).map(|k| (0..900).map(|i| ((i * 7919 + k * 104729) % 1000) as f64).collect()).collect();
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    c.bench_function("rank_rhat_4x900", |b| b.iter(|| rank_rhat(black_box(&refs))));

    let (s, n) = (3600, 200);
    let values = (0..s * n).map(|i| -1.0 - ((i * 2654435761usize) % 1000) as f64 / 500.0).collect();
    let ll = PointwiseLogLik::new(s, n, values, (0..s).map(|d| d / 900).collect()).unwrap();
    c.bench_function("psis_loo_3600x200", |b| b.iter(|| psis_loo(black_box(&ll))));
}

criterion_group!(benches, pmf, posterior_gradient, diagnostics);
criterion_main!(benches);

//! The five workflow verbs. Each reads its inputs, writes its artifacts
//! atomically and returns a short report for stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cratio::diagnostics::{
    coefficient_names, ecdf_check, numeric_summaries, odds_ratio_summary, posterior_predict, rhat_report, rootogram_check,
    sd_check, EcdfCheck, PredictiveDrawSet, RhatReport, RootogramCheck, SdCheck,
};
use cratio::families::Family;
use cratio::inference::{run_chains, ChainStats, Posterior};
use cratio::modelcompare::{compare, pointwise_loglik, psis_loo, LooResult, ParetoFlag};
use cratio::regression::{canonical_sort, drop_incomplete, ModelSpec, ObservationRecord};
use cratio::simulate::simulate_panel;
use cratio::{ModelData, PosteriorDraws, SamplerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, SchemaConfig, SimFile};
use crate::error::{CliError, CliResult};
use crate::io;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";
pub const DATA: &str = "data.csv";
pub const DRAWS_BIN: &str = "draws.bin";
pub const DRAWS_CSV: &str = "draws.csv";
pub const RHAT: &str = "rhat.csv";
pub const FIT_LOG: &str = "fit.log";

/// Streams of the predictive-replicate generators; chains use streams
/// `0..n_chains`.
const CHECK_STREAM: u64 = 1 << 32;
const SD_STREAM: u64 = CHECK_STREAM + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsEntry {
    pub binary: String,
    pub csv: String,
    pub sha256: String,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub dim: usize,
}

/// Everything needed to interpret a fit directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub format: String,
    pub label: String,
    pub family: Family,
    pub n_days: u32,
    pub n_rows: usize,
    pub n_persons: usize,
    pub n_dropped: usize,
    /// Hash of the ordered (person, wave, response) triples; fits with the
    /// same value can be compared.
    pub response_fingerprint: String,
    pub draws: DrawsEntry,
    pub parameters: Vec<String>,
    pub blocks: Vec<BlockEntry>,
    pub model: ModelSpec,
    pub sampler: SamplerConfig,
    pub chains: Vec<ChainStats>,
    pub max_rhat: Option<f64>,
}

pub const FORMAT: &str = "cratio-fit/1";

fn response_fingerprint(records: &[ObservationRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        for part in [r.person_id.as_bytes(), r.wave.as_bytes()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        h.update(r.days.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Records ready for modelling: complete and canonically ordered.
pub fn prepare_records(records: Vec<ObservationRecord>, schema: &SchemaConfig) -> CliResult<(Vec<ObservationRecord>, usize)> {
    let (mut kept, dropped) = drop_incomplete(records, &schema.schema());
    if kept.is_empty() {
        return Err(CliError::Data("no complete records to fit".into()));
    }
    canonical_sort(&mut kept);
    Ok((kept, dropped))
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    io::write_atomic(&dir.join(name), &io::csv_bytes(&header, rows)?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Overrides applied on top of a configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) -> CliResult<()> {
        if let Some(s) = self.seed {
            config.sampler.seed = s;
            config.seed = Some(s);
        }
        if let Some(c) = self.chains {
            config.sampler.n_chains = c;
        }
        if let Some(o) = &self.output {
            config.output = Some(o.clone());
        }
        config.validate()
    }
}

fn output_dir(explicit: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    explicit
        .clone()
        .ok_or_else(|| CliError::Config(format!("no output directory for {what}; set `output` or pass --output")))
}

fn rhat_or_skip(draws: &PosteriorDraws, names: &[String]) -> CliResult<RhatReport> {
    if draws.n_chains >= 2 && draws.draws_per_chain >= 4 {
        return Ok(rhat_report(draws, names)?);
    }
    log::warn!("R-hat needs at least two chains of four draws; the report is left empty");
    let none = vec![None; names.len()];
    Ok(RhatReport { names: names.to_vec(), rhat: none.clone(), ess_bulk: none.clone(), ess_tail: none })
}

fn fit_log(manifest: &FitManifest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model: {} ({})", manifest.label, manifest.family);
    let _ = writeln!(s, "rows: {} persons: {} dropped: {}", manifest.n_rows, manifest.n_persons, manifest.n_dropped);
    let _ = writeln!(
        s,
        "draws: {} chains x {} retained, {} parameters",
        manifest.draws.n_chains, manifest.draws.draws_per_chain, manifest.draws.dim
    );
    for (c, st) in manifest.chains.iter().enumerate() {
        let _ = writeln!(
            s,
            "chain {c}: step_size={:.6} mean_accept={:.4} mean_tree_depth={:.3} divergences={} warmup_divergences={} max_depth_hits={} gradients={}",
            st.step_size, st.mean_accept, st.mean_tree_depth, st.divergences, st.warmup_divergences, st.max_tree_depth_hits, st.n_gradients
        );
    }
    let _ = writeln!(s, "max_rhat: {}", manifest.max_rhat.map_or("undefined".into(), |r| format!("{r:.4}")));
    s
}

/// Fits the configured model and writes draws, manifest, convergence report
/// and sampler log.
pub fn cmd_fit(config_path: &Path, overrides: &Overrides) -> CliResult<String> {
    let mut config = RunConfig::load(config_path)?;
    overrides.apply(&mut config)?;
    let out = output_dir(&config.output, "fit")?;
    let raw = io::read_panel(&config.input, &config.schema)?;
    let (records, n_dropped) = prepare_records(raw, &config.schema)?;
    let data = ModelData::from_records(&records, &config.schema.schema())?;
    let model = config.model.build(&config.schema, &data.design, &config.priors)?;
    let post = Posterior::new(&model, &data)?;

    let start = Instant::now();
    let draws = run_chains(&post, &config.sampler)?;
    eprintln!("sampling took {:.1} s", start.elapsed().as_secs_f64());
    if draws.values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Sampler("non-finite draws".into()));
    }
    let names = &model.layout.names;
    let report = rhat_or_skip(&draws, names)?;

    let bin = io::draws_to_bytes(&draws);
    let manifest = FitManifest {
        format: FORMAT.into(),
        label: config.model.label(),
        family: model.family,
        n_days: model.n_days.get(),
        n_rows: data.n_rows(),
        n_persons: data.design.n_persons(),
        n_dropped,
        response_fingerprint: response_fingerprint(&records),
        draws: DrawsEntry {
            binary: DRAWS_BIN.into(),
            csv: DRAWS_CSV.into(),
            sha256: io::sha256_hex(&bin),
            n_chains: draws.n_chains,
            draws_per_chain: draws.draws_per_chain,
            dim: draws.dim,
        },
        parameters: names.clone(),
        blocks: model
            .layout
            .blocks()
            .into_iter()
            .map(|(name, b)| BlockEntry { name, offset: b.offset, len: b.len })
            .collect(),
        model: model.clone(),
        sampler: config.sampler.clone(),
        chains: draws.stats.clone(),
        max_rhat: report.max_rhat(),
    };

    // The stored configuration points at the stored data.
    let mut stored = config.clone();
    stored.input = PathBuf::from(DATA);
    stored.output = None;
    let stored_text = toml::to_string(&stored).map_err(|e| CliError::Internal(format!("cannot encode configuration: {e}")))?;

    io::write_atomic(&out.join(DATA), &io::panel_bytes(&records, &config.schema)?)?;
    io::write_atomic(&out.join(CONFIG), stored_text.as_bytes())?;
    io::write_atomic(&out.join(DRAWS_BIN), &bin)?;
    io::write_atomic(&out.join(DRAWS_CSV), &io::draws_csv_bytes(&draws, names)?)?;
    let rows = (0..names.len())
        .map(|j| vec![names[j].clone(), opt(report.rhat[j]), opt(report.ess_bulk[j]), opt(report.ess_tail[j])])
        .collect();
    write_csv(&out, RHAT, &["parameter", "rhat", "ess_bulk", "ess_tail"], rows)?;
    io::write_atomic(&out.join(FIT_LOG), fit_log(&manifest).as_bytes())?;
    io::write_json(&out.join(MANIFEST), &manifest)?;

    let divergences: usize = draws.stats.iter().map(|s| s.divergences).sum();
    if let Some(r) = report.max_rhat().filter(|r| *r > 1.01) {
        log::warn!("max R-hat {r:.3} exceeds 1.01");
    }
    Ok(format!(
        "{}: {} draws ({} chains), max R-hat {}, {} divergences -> {}\n",
        manifest.label,
        draws.n_draws(),
        draws.n_chains,
        manifest.max_rhat.map_or("undefined".into(), |r| format!("{r:.3}")),
        divergences,
        out.display()
    ))
}

/// A fit directory loaded back into memory.
pub struct Fit {
    pub dir: PathBuf,
    pub manifest: FitManifest,
    pub config: RunConfig,
    pub records: Vec<ObservationRecord>,
    pub data: ModelData,
    pub model: ModelSpec,
    pub draws: PosteriorDraws,
}

impl Fit {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let manifest: FitManifest = io::read_json(&dir.join(MANIFEST))?;
        if manifest.format != FORMAT {
            return Err(CliError::Data(format!("{}: unsupported format `{}`", dir.display(), manifest.format)));
        }
        let config_path = dir.join(CONFIG);
        if !config_path.exists() {
            return Err(CliError::read(&config_path, "file not found"));
        }
        let config = RunConfig::load(&config_path)?;
        let raw = io::read_panel(&config.input, &config.schema)?;
        let (records, _) = prepare_records(raw, &config.schema)?;
        if response_fingerprint(&records) != manifest.response_fingerprint {
            return Err(CliError::Data(format!("{}: stored data do not match the manifest", dir.display())));
        }
        let data = ModelData::from_records(&records, &config.schema.schema())?;
        let model = config.model.build(&config.schema, &data.design, &config.priors)?;
        if model != manifest.model {
            return Err(CliError::Data(format!("{}: stored configuration does not match the manifest", dir.display())));
        }
        let bin_path = dir.join(&manifest.draws.binary);
        let bytes = fs::read(&bin_path).map_err(|e| CliError::read(&bin_path, e))?;
        if io::sha256_hex(&bytes) != manifest.draws.sha256 {
            return Err(CliError::Data(format!("{}: checksum mismatch", bin_path.display())));
        }
        let mut draws = io::draws_from_bytes(&bytes).map_err(|e| CliError::read(&bin_path, e))?;
        if draws.dim != model.dim() {
            return Err(CliError::Data(format!("{}: {} parameters, model has {}", bin_path.display(), draws.dim, model.dim())));
        }
        draws.stats = manifest.chains.clone();
        Ok(Self { dir: dir.to_path_buf(), manifest, config, records, data, model, draws })
    }

    fn apply_config(&mut self, path: Option<&Path>) -> CliResult<()> {
        if let Some(p) = path {
            let c = RunConfig::load(p)?;
            self.config.checks = c.checks;
            self.config.summarize = c.summarize;
            self.config.sampler.seed = c.sampler.seed;
        }
        Ok(())
    }
}

fn ecdf_rows(checks: &[EcdfCheck], pp: &PredictiveDrawSet, n_days: u32, with_group: bool) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for c in checks {
        for (j, rep) in c.replicates.iter().enumerate() {
            for count in 0..=n_days as usize {
                let mut row = Vec::with_capacity(5);
                if with_group {
                    row.push(c.group.clone().unwrap_or_default());
                }
                row.extend([
                    count.to_string(),
                    c.observed[count].to_string(),
                    pp.draw_index[j].to_string(),
                    rep[count].to_string(),
                ]);
                rows.push(row);
            }
        }
    }
    rows
}

/// Counts `0..=N`, plus the overflow bucket (labelled `N+1`) for unbounded families.
fn rootogram_rows(r: &RootogramCheck, n_days: u32, family: Family, group: Option<&str>) -> Vec<Vec<String>> {
    let last = if family.is_bounded() { n_days as usize } else { n_days as usize + 1 };
    (0..=last)
        .map(|c| {
            let mut row = Vec::with_capacity(5);
            if let Some(g) = group {
                row.push(g.to_string());
            }
            row.extend([
                c.to_string(),
                r.observed_sqrt[c].to_string(),
                r.predicted_sqrt[c].to_string(),
                r.residual[c].to_string(),
            ]);
            row
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdSummary {
    pub group: String,
    pub observed_sd: f64,
    pub replicate_mean_sd: f64,
    pub covered_90: bool,
}

/// Headline numbers of a check run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub label: String,
    pub n_replicates: usize,
    pub draw_index: Vec<usize>,
    /// Median over replicates of the largest absolute ECDF difference on `0..=N`.
    pub ecdf_median_max_abs_diff: Option<f64>,
    /// Rootogram residuals at counts `0..=N`.
    pub rootogram_residual: Option<Vec<f64>>,
    pub sd: Vec<SdSummary>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Predictive replicates at evenly spaced draws, capped at the number of
/// retained draws.
fn replicates(fit: &Fit, wanted: usize, stream: u64) -> CliResult<PredictiveDrawSet> {
    let available = fit.draws.n_draws();
    if wanted > available {
        log::warn!("{wanted} predictive replicates requested but only {available} draws retained; using {available}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fit.config.seed());
    rng.set_stream(stream);
    Ok(posterior_predict(&fit.draws, &fit.model, &fit.data, wanted.min(available), &mut rng)?)
}

/// Posterior predictive checks for a fit: ECDF, rootogram and SD tables,
/// pooled and by wave.
pub fn cmd_check(fit_dir: &Path, config: Option<&Path>, overrides: &Overrides) -> CliResult<String> {
    let mut fit = Fit::load(fit_dir)?;
    fit.apply_config(config)?;
    if let Some(s) = overrides.seed {
        fit.config.sampler.seed = s;
    }
    let out = overrides.output.clone().unwrap_or_else(|| fit_dir.join("checks"));
    let checks = &fit.config.checks;
    let n = fit.model.n_days;
    let pp = replicates(&fit, checks.n_draws, CHECK_STREAM)?;
    let observed = &fit.data.days;
    let waves = &fit.data.waves;
    let mut summary = CheckSummary {
        label: fit.manifest.label.clone(),
        n_replicates: pp.replicates.len(),
        draw_index: pp.draw_index.clone(),
        ecdf_median_max_abs_diff: None,
        rootogram_residual: None,
        sd: Vec::new(),
    };

    if checks.ecdf {
        let pooled = ecdf_check(observed, &pp, n, None)?;
        let p = &pooled[0];
        let n1 = n.as_usize() + 1;
        summary.ecdf_median_max_abs_diff = Some(median(
            p.replicates
                .iter()
                .map(|r| r[..n1].iter().zip(&p.observed[..n1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .collect(),
        ));
        let header = ["count", "observed_cdf", "draw_id", "replicate_cdf"];
        write_csv(&out, "ecdf.csv", &header, ecdf_rows(&pooled, &pp, n.get(), false))?;
        if checks.by_wave {
            let by = ecdf_check(observed, &pp, n, Some(waves))?;
            let header = ["wave", "count", "observed_cdf", "draw_id", "replicate_cdf"];
            write_csv(&out, "ecdf_by_wave.csv", &header, ecdf_rows(&by, &pp, n.get(), true))?;
        }
    }
    if checks.rootogram {
        let r = rootogram_check(observed, &pp, n)?;
        summary.rootogram_residual = Some(r.residual[..=n.as_usize()].to_vec());
        let header = ["count", "observed_sqrt", "predicted_sqrt", "residual"];
        write_csv(&out, "rootogram.csv", &header, rootogram_rows(&r, n.get(), fit.model.family, None))?;
        if checks.by_wave {
            let mut rows = Vec::new();
            for w in fit.data.wave_levels() {
                let idx: Vec<usize> = (0..observed.len()).filter(|&i| waves[i] == w).collect();
                let obs: Vec<u32> = idx.iter().map(|&i| observed[i]).collect();
                let sub = PredictiveDrawSet {
                    draw_index: pp.draw_index.clone(),
                    replicates: pp.replicates.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
                };
                rows.extend(rootogram_rows(&rootogram_check(&obs, &sub, n)?, n.get(), fit.model.family, Some(&w)));
            }
            let header = ["wave", "count", "observed_sqrt", "predicted_sqrt", "residual"];
            write_csv(&out, "rootogram_by_wave.csv", &header, rows)?;
        }
    }
    if checks.sd {
        let pp = replicates(&fit, checks.sd_draws, SD_STREAM)?;
        let mut all: Vec<SdCheck> = sd_check(observed, &pp, &vec!["all".to_string(); observed.len()])?;
        if checks.by_wave {
            all.extend(sd_check(observed, &pp, waves)?);
        }
        let mut rows = Vec::new();
        for c in &all {
            for (j, s) in c.replicate_sd.iter().enumerate() {
                rows.push(vec![c.group.clone(), c.observed_sd.to_string(), pp.draw_index[j].to_string(), s.to_string()]);
            }
            summary.sd.push(SdSummary {
                group: c.group.clone(),
                observed_sd: c.observed_sd,
                replicate_mean_sd: c.replicate_sd.iter().sum::<f64>() / c.replicate_sd.len() as f64,
                covered_90: c.covers(0.9),
            });
        }
        write_csv(&out, "sd_check.csv", &["group", "observed_sd", "draw_id", "replicate_sd"], rows)?;
    }
    io::write_json(&out.join("check_summary.json"), &summary)?;

    let mut report = format!("{}: {} predictive replicates -> {}\n", summary.label, summary.n_replicates, out.display());
    if let Some(d) = summary.ecdf_median_max_abs_diff {
        let _ = writeln!(report, "  ECDF median max |diff|: {d:.4}");
    }
    for s in &summary.sd {
        let _ = writeln!(
            report,
            "  SD {}: observed {:.3}, replicate mean {:.3}{}",
            s.group,
            s.observed_sd,
            s.replicate_mean_sd,
            if s.covered_90 { "" } else { " (outside 90% interval)" }
        );
    }
    Ok(report)
}

/// LOO for one loaded fit, tagged with its response fingerprint.
pub fn fit_loo(fit: &Fit) -> CliResult<LooResult> {
    let ll = pointwise_loglik(&fit.draws, &fit.model, &fit.data)?;
    let mut loo = psis_loo(&ll)?;
    loo.fingerprint = Some(fit.manifest.response_fingerprint.clone());
    Ok(loo)
}

/// `value (se)` with the value rounded to an integer, as in published LOO tables.
fn est_se(value: f64, se: f64) -> String {
    format!("{value:.0} ({se:.1})")
}

/// PSIS-LOO comparison of fits on identical data, sorted by LOO-IC.
pub fn cmd_compare(fit_dirs: &[PathBuf], output: &Path) -> CliResult<String> {
    if fit_dirs.is_empty() {
        return Err(CliError::Config("compare needs at least one fit directory".into()));
    }
    let mut results = Vec::new();
    for dir in fit_dirs {
        let fit = Fit::load(dir)?;
        let loo = fit_loo(&fit)?;
        let bad = loo.flags().iter().filter(|f| matches!(f, ParetoFlag::Bad)).count();
        if bad > 0 {
            log::warn!("{}: {bad} observations with Pareto k >= 0.7", fit.manifest.label);
        }
        results.push((fit.manifest.label.clone(), loo));
    }
    let table = compare(&results)?;

    let rows = table
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.p_loo.to_string(),
                r.se_p_loo.to_string(),
                r.looic.to_string(),
                r.se_looic.to_string(),
                r.elpd_diff.to_string(),
                r.se_diff.to_string(),
            ]
        })
        .collect();
    write_csv(output, "compare.csv", &["model", "p_loo", "se_p_loo", "looic", "se_looic", "elpd_diff", "se_diff"], rows)?;

    let mut pointwise = Vec::new();
    for (label, loo) in &results {
        for i in 0..loo.n_obs() {
            pointwise.push(vec![
                label.clone(),
                i.to_string(),
                loo.pointwise_elpd[i].to_string(),
                loo.pointwise_p_loo[i].to_string(),
                opt(loo.pareto_k[i]),
                format!("{:?}", ParetoFlag::of(loo.pareto_k[i])).to_lowercase(),
            ]);
        }
    }
    write_csv(output, "pointwise.csv", &["model", "row", "elpd_loo", "p_loo", "pareto_k", "flag"], pointwise)?;

    let width = table.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut text = format!("{:<width$}  {:>16}  {:>18}  {:>18}\n", "Model", "P-LOO (SE)", "LOO-IC (SE)", "ELPD diff (SE)");
    for r in &table {
        let _ = writeln!(
            text,
            "{:<width$}  {:>16}  {:>18}  {:>18}",
            r.model,
            est_se(r.p_loo, r.se_p_loo),
            est_se(r.looic, r.se_looic),
            est_se(r.elpd_diff, r.se_diff)
        );
    }
    io::write_atomic(&output.join("compare.txt"), text.as_bytes())?;
    Ok(text)
}

/// Odds-ratio report for named coefficients (all when none are named),
/// optionally with exact per-row predictive summaries.
pub fn cmd_summarize(fit_dir: &Path, names: &[String], config: Option<&Path>, output: Option<&Path>) -> CliResult<String> {
    let mut fit = Fit::load(fit_dir)?;
    fit.apply_config(config)?;
    let out = output.map_or_else(|| fit_dir.join("summary"), Path::to_path_buf);
    let names: Vec<String> = if !names.is_empty() {
        names.to_vec()
    } else if !fit.config.summarize.coefficients.is_empty() {
        fit.config.summarize.coefficients.clone()
    } else {
        coefficient_names(&fit.model)
    };
    let summaries = odds_ratio_summary(&fit.draws, &fit.model, &names)?;
    let rows = summaries
        .iter()
        .map(|s| {
            vec![
                s.name.clone(),
                s.median.to_string(),
                s.q05.to_string(),
                s.q25.to_string(),
                s.q75.to_string(),
                s.q95.to_string(),
            ]
        })
        .collect();
    write_csv(&out, "odds_ratios.csv", &["coefficient", "median", "q05", "q25", "q75", "q95"], rows)?;

    let width = summaries.iter().map(|s| s.name.len()).max().unwrap_or(11).max(11);
    let mut text = format!("{:<width$}  {:>22}  {:>14}\n", "Coefficient", "Odds ratio (90% CI)", "50% CI");
    for s in &summaries {
        let _ = writeln!(text, "{:<width$}  {:>22}  {:>14}", s.name, s.format(), format!("({:.2}, {:.2})", s.q25, s.q75));
    }
    io::write_atomic(&out.join("odds_ratios.txt"), text.as_bytes())?;

    if fit.config.summarize.predictive {
        let probs = &fit.config.summarize.probs;
        let pred = numeric_summaries(&fit.draws, &fit.model, &fit.data, probs, None)?;
        let mut header: Vec<String> = ["row", "person_id", "wave", "observed", "mean", "variance"].map(String::from).to_vec();
        header.extend(probs.iter().map(|p| format!("q{p}")));
        let rows = pred.iter().enumerate().map(|(i, s)| {
            let r = &fit.records[i];
            let mut row = vec![i.to_string(), r.person_id.clone(), r.wave.clone(), r.days.to_string(), s.mean.to_string(), s.variance.to_string()];
            row.extend(s.quantiles.iter().map(|(_, q)| q.to_string()));
            row
        });
        io::write_atomic(&out.join("predictive.csv"), &io::csv_bytes(&header, rows)?)?;
    }
    Ok(text)
}

/// Simulates a weekly-pattern panel and writes it in the ingestion layout.
pub fn cmd_simulate(config_path: &Path, overrides: &Overrides) -> CliResult<String> {
    let mut file = SimFile::load(config_path)?;
    if let Some(s) = overrides.seed {
        file.simulation.seed = s;
    }
    let out = overrides.output.clone().or(file.output.clone());
    let out = output_dir(&out, "simulate")?;
    let sim = &file.simulation;
    let (records, truth) = simulate_panel(sim)?;
    let schema = SchemaConfig {
        response: "days".into(),
        n_days: sim.n_days,
        person_id: "person_id".into(),
        wave: "wave".into(),
        covariates: sim.schema().covariates,
    };
    io::write_atomic(&out.join("panel.csv"), &io::panel_bytes(&records, &schema)?)?;
    let schema_text = toml::to_string(&schema).map_err(|e| CliError::Internal(format!("cannot encode schema: {e}")))?;
    io::write_atomic(&out.join("schema.toml"), schema_text.as_bytes())?;
    io::write_json(&out.join("truth.json"), &truth)?;
    let zeros = records.iter().filter(|r| r.days == 0).count();
    Ok(format!(
        "{} rows ({} persons x {} waves, {} zeros) -> {}\n",
        records.len(),
        sim.n_persons,
        sim.n_waves,
        zeros,
        out.display()
    ))
}

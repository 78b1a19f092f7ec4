//! No-U-turn Hamiltonian Monte Carlo with a diagonal metric, step-size
//! dual averaging and windowed metric adaptation, run over parallel chains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::posterior::LogDensity;
use crate::error::{Error, Result};

/// Trajectories whose energy error exceeds this are divergent.
const MAX_DELTA_H: f64 = 1000.0;
const INIT_ATTEMPTS: usize = 100;
/// Relative step-size jitter of the static engine.
const STATIC_JITTER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Engine {
    Nuts,
    /// Fixed-length HMC, kept as a fallback.
    Static { n_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Iterations per chain including warm-up.
    pub n_iterations: usize,
    pub n_warmup: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    /// Initial values are drawn from `Uniform(-init_radius, init_radius)`.
    pub init_radius: f64,
    pub engine: Engine,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iterations: 5000,
            n_warmup: 500,
            thin: 5,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 1,
            init_radius: 2.0,
            engine: Engine::Nuts,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1".into());
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if self.n_warmup >= self.n_iterations {
            return bad(format!(
                "n_warmup ({}) must be smaller than n_iterations ({})",
                self.n_warmup, self.n_iterations
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad(format!("target_accept must lie in (0, 1), got {}", self.target_accept));
        }
        if self.max_tree_depth == 0 || self.max_tree_depth > 30 {
            return bad("max_tree_depth must lie in 1..=30".into());
        }
        if !(self.init_radius > 0.0) {
            return bad("init_radius must be positive".into());
        }
        if let Engine::Static { n_steps: 0 } = self.engine {
            return bad("static HMC needs at least one leapfrog step".into());
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.n_iterations - self.n_warmup) / self.thin
    }
}

/// Per-chain sampler summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    /// Post-warm-up divergent transitions (all iterations, not only retained ones).
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub mean_accept: f64,
    pub mean_tree_depth: f64,
    pub max_tree_depth_hits: usize,
    pub n_gradients: u64,
}

/// Retained draws of all chains, merged in chain order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub dim: usize,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    /// Row-major `(n_chains * draws_per_chain) x dim`.
    pub values: Vec<f64>,
    pub chain_id: Vec<usize>,
    pub stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.chain_id.len()
    }

    #[inline]
    pub fn draw(&self, s: usize) -> &[f64] {
        &self.values[s * self.dim..(s + 1) * self.dim]
    }

    /// All draws of coordinate `j`, chains concatenated.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|s| self.values[s * self.dim + j]).collect()
    }

    /// Draws of coordinate `j` split by chain.
    pub fn chains(&self, j: usize) -> Vec<Vec<f64>> {
        let per = self.draws_per_chain;
        let col = self.column(j);
        col.chunks(per.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn total_divergences(&self) -> usize {
        self.stats.iter().map(|s| s.divergences).sum()
    }
}

/// Runs all chains in parallel and merges them in chain order. Results do
/// not depend on the number of worker threads.
pub fn run_chains<T: LogDensity>(target: &T, config: &SamplerConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let results: Vec<Result<(Vec<f64>, ChainStats)>> =
        (0..config.n_chains).into_par_iter().map(|c| run_chain(target, config, c)).collect();
    let dim = target.dim();
    let per = config.draws_per_chain();
    let mut values = Vec::with_capacity(config.n_chains * per * dim);
    let mut chain_id = Vec::with_capacity(config.n_chains * per);
    let mut stats = Vec::with_capacity(config.n_chains);
    for (c, r) in results.into_iter().enumerate() {
        let (v, s) = r?;
        values.extend_from_slice(&v);
        chain_id.extend(std::iter::repeat_n(c, per));
        stats.push(s);
    }
    Ok(PosteriorDraws { dim, n_chains: config.n_chains, draws_per_chain: per, values, chain_id, stats })
}

/// Deterministic generator for chain `chain` under `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

#[derive(Debug, Clone)]
struct PhasePoint {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Hamiltonian<'a, T: LogDensity> {
    target: &'a T,
    inv_metric: Vec<f64>,
    n_grad: u64,
}

impl<T: LogDensity> Hamiltonian<'_, T> {
    fn update(&mut self, z: &mut PhasePoint) {
        self.n_grad += 1;
        z.logp = self.target.log_density_grad(&z.q, &mut z.grad);
        if !z.logp.is_finite() {
            z.logp = f64::NEG_INFINITY;
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn energy(&self, z: &PhasePoint) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn dtau_dp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum<R: Rng>(&self, z: &mut PhasePoint, rng: &mut R) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let u: f64 = rng.sample(StandardNormal);
            *p = u / m.sqrt();
        }
    }

    fn leapfrog(&mut self, z: &mut PhasePoint, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        self.update(z);
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }
}

/// Step-size dual averaging.
#[derive(Debug, Clone)]
struct DualAveraging {
    mu: f64,
    s_bar: f64,
    x_bar: f64,
    counter: f64,
    delta: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, delta: f64) -> Self {
        Self { mu: (10.0 * eps).ln(), s_bar: 0.0, x_bar: 0.0, counter: 0.0, delta }
    }

    fn learn(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept.min(1.0);
        let w = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - w) * self.s_bar + w * (self.delta - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let xw = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - xw) * self.x_bar + xw * x;
        x.exp()
    }

    fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Slow-window schedule for metric adaptation: an initial fast buffer, a
/// doubling series of variance windows, and a terminal fast buffer.
#[derive(Debug, Clone)]
struct WindowSchedule {
    init_buffer: usize,
    term_buffer: usize,
    base_window: usize,
    n_warmup: usize,
    window_end: usize,
    window_size: usize,
}

impl WindowSchedule {
    fn new(n_warmup: usize) -> Self {
        let (mut init, mut term, mut base) = (75, 50, 25);
        if n_warmup < 20 {
            return Self { init_buffer: n_warmup, term_buffer: 0, base_window: 0, n_warmup, window_end: 0, window_size: 0 };
        }
        if init + term + base > n_warmup {
            init = (0.15 * n_warmup as f64) as usize;
            term = (0.1 * n_warmup as f64) as usize;
            base = n_warmup - init - term;
        }
        let mut s = Self { init_buffer: init, term_buffer: term, base_window: base, n_warmup, window_end: 0, window_size: base };
        s.window_end = init + base;
        if s.window_end + 2 * base > n_warmup - term {
            s.window_end = n_warmup - term;
        }
        s
    }

    fn in_slow_phase(&self, it: usize) -> bool {
        self.base_window > 0 && it >= self.init_buffer && it < self.n_warmup - self.term_buffer
    }

    fn is_window_end(&self, it: usize) -> bool {
        self.base_window > 0 && it + 1 == self.window_end && it < self.n_warmup - self.term_buffer
    }

    fn advance(&mut self) {
        let limit = self.n_warmup - self.term_buffer;
        if self.window_end == limit {
            return;
        }
        self.window_size *= 2;
        let next = self.window_end + self.window_size;
        self.window_end = if next + 2 * self.window_size > limit { limit } else { next };
    }
}

/// Welford accumulator for the diagonal metric.
#[derive(Debug, Clone)]
struct VarianceEstimator {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    fn new(dim: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn add(&mut self, q: &[f64]) {
        self.n += 1.0;
        for ((m, s), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
            let d = x - *m;
            *m += d / self.n;
            *s += d * (x - *m);
        }
    }

    /// Sample variances shrunk toward `1e-3`.
    fn regularized(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|m2| {
                let var = if n > 1.0 { m2 / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

struct Transition {
    accept_stat: f64,
    divergent: bool,
    depth: usize,
}

struct Sampler<'a, T: LogDensity> {
    ham: Hamiltonian<'a, T>,
    rng: ChaCha8Rng,
    eps: f64,
    max_depth: usize,
    engine: Engine,
    z: PhasePoint,
}

/// A finished subtree: its endpoint momenta, summed momentum, multinomial
/// weight and proposal.
struct Subtree {
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    rho: Vec<f64>,
    log_sum_weight: f64,
    propose: PhasePoint,
}

#[derive(Default)]
struct TreeCounters {
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

impl<T: LogDensity> Sampler<'_, T> {
    fn transition(&mut self) -> Transition {
        match self.engine {
            Engine::Nuts => self.nuts_transition(),
            Engine::Static { n_steps } => self.static_transition(n_steps),
        }
    }

    fn static_transition(&mut self, n_steps: usize) -> Transition {
        let mut z = self.z.clone();
        self.ham.sample_momentum(&mut z, &mut self.rng);
        let h0 = self.ham.energy(&z);
        // Jitter the step so fixed-length trajectories cannot lock onto a period.
        let eps = self.eps * (1.0 + STATIC_JITTER * (2.0 * self.rng.random::<f64>() - 1.0));
        for _ in 0..n_steps {
            self.ham.leapfrog(&mut z, eps);
        }
        let h = self.ham.energy(&z);
        let divergent = !(h - h0 <= MAX_DELTA_H);
        let accept = if h.is_finite() { (h0 - h).exp().min(1.0) } else { 0.0 };
        if self.rng.random::<f64>() < accept {
            self.z = z;
        }
        Transition { accept_stat: accept, divergent, depth: 0 }
    }

    fn nuts_transition(&mut self) -> Transition {
        let mut z0 = self.z.clone();
        self.ham.sample_momentum(&mut z0, &mut self.rng);
        let h0 = self.ham.energy(&z0);

        let mut z_fwd = z0.clone();
        let mut z_bck = z0.clone();
        let mut z_sample = z0.clone();
        let mut p_sharp_fwd = self.ham.dtau_dp(&z0.p);
        let mut p_sharp_bck = p_sharp_fwd.clone();
        let mut p_fwd = z0.p.clone();
        let mut p_bck = z0.p.clone();
        let mut rho = z0.p.clone();
        let mut log_sum_weight = 0.0;
        let mut depth = 0;
        let mut c = TreeCounters::default();

        while depth < self.max_depth {
            let forward = self.rng.random::<f64>() > 0.5;
            let (start, sign) = if forward { (&mut z_fwd, 1.0) } else { (&mut z_bck, -1.0) };
            let mut z = start.clone();
            let sub = self.build_tree(depth, &mut z, h0, sign, &mut c);
            *start = z;
            let Some(sub) = sub else { break };
            depth += 1;

            if sub.log_sum_weight > log_sum_weight {
                z_sample = sub.propose.clone();
            } else {
                let accept_prob = (sub.log_sum_weight - log_sum_weight).exp();
                if self.rng.random::<f64>() < accept_prob {
                    z_sample = sub.propose.clone();
                }
            }
            log_sum_weight = log_sum_exp(log_sum_weight, sub.log_sum_weight);

            let rho_old = rho.clone();
            for (r, s) in rho.iter_mut().zip(&sub.rho) {
                *r += s;
            }
            // `old_end` is the end of the old trajectory adjacent to the new subtree.
            let (old_far_sharp, old_end_sharp, old_end_p) =
                if forward { (&p_sharp_bck, &p_sharp_fwd, &p_fwd) } else { (&p_sharp_fwd, &p_sharp_bck, &p_bck) };
            let mut persist = compute_criterion(old_far_sharp, &sub.p_sharp_end, &rho);
            let ext: Vec<f64> = rho_old.iter().zip(&sub.p_beg).map(|(a, b)| a + b).collect();
            persist &= compute_criterion(old_far_sharp, &sub.p_sharp_beg, &ext);
            let ext: Vec<f64> = sub.rho.iter().zip(old_end_p).map(|(a, b)| a + b).collect();
            persist &= compute_criterion(old_end_sharp, &sub.p_sharp_end, &ext);

            if forward {
                p_sharp_fwd = sub.p_sharp_end;
                p_fwd = sub.p_end;
            } else {
                p_sharp_bck = sub.p_sharp_end;
                p_bck = sub.p_end;
            }
            if !persist {
                break;
            }
        }

        self.z = z_sample;
        let accept = if c.n_leapfrog > 0 { c.sum_metro / c.n_leapfrog as f64 } else { 0.0 };
        Transition { accept_stat: accept, divergent: c.divergent, depth }
    }

    /// Builds a subtree of `2^depth` leapfrog steps starting from `z`, which
    /// is advanced to the subtree's far end. `None` signals a divergence or
    /// an internal U-turn.
    fn build_tree(&mut self, depth: usize, z: &mut PhasePoint, h0: f64, sign: f64, c: &mut TreeCounters) -> Option<Subtree> {
        if depth == 0 {
            self.ham.leapfrog(z, sign * self.eps);
            c.n_leapfrog += 1;
            let h = self.ham.energy(z);
            if !(h - h0 <= MAX_DELTA_H) {
                c.divergent = true;
            }
            c.sum_metro += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            if c.divergent {
                return None;
            }
            let p_sharp = self.ham.dtau_dp(&z.p);
            return Some(Subtree {
                p_sharp_beg: p_sharp.clone(),
                p_sharp_end: p_sharp,
                p_beg: z.p.clone(),
                p_end: z.p.clone(),
                rho: z.p.clone(),
                log_sum_weight: h0 - h,
                propose: z.clone(),
            });
        }

        let init = self.build_tree(depth - 1, z, h0, sign, c)?;
        let fin = self.build_tree(depth - 1, z, h0, sign, c)?;

        let log_sum_weight = log_sum_exp(init.log_sum_weight, fin.log_sum_weight);
        let take_final = if fin.log_sum_weight > log_sum_weight {
            true
        } else {
            self.rng.random::<f64>() < (fin.log_sum_weight - log_sum_weight).exp()
        };
        let rho: Vec<f64> = init.rho.iter().zip(&fin.rho).map(|(a, b)| a + b).collect();

        let mut persist = compute_criterion(&init.p_sharp_beg, &fin.p_sharp_end, &rho);
        let ext: Vec<f64> = init.rho.iter().zip(&fin.p_beg).map(|(a, b)| a + b).collect();
        persist &= compute_criterion(&init.p_sharp_beg, &fin.p_sharp_beg, &ext);
        let ext: Vec<f64> = fin.rho.iter().zip(&init.p_end).map(|(a, b)| a + b).collect();
        persist &= compute_criterion(&init.p_sharp_end, &fin.p_sharp_end, &ext);
        if !persist {
            return None;
        }
        Some(Subtree {
            p_sharp_beg: init.p_sharp_beg,
            p_sharp_end: fin.p_sharp_end,
            p_beg: init.p_beg,
            p_end: fin.p_end,
            rho,
            log_sum_weight,
            propose: if take_final { fin.propose } else { init.propose },
        })
    }

    /// Heuristic that doubles or halves the step size until a single
    /// leapfrog step crosses an acceptance probability of 0.8.
    fn init_step_size(&mut self) -> Result<()> {
        let z0 = self.z.clone();
        let mut z = z0.clone();
        self.ham.sample_momentum(&mut z, &mut self.rng);
        let h0 = self.ham.energy(&z);
        self.ham.leapfrog(&mut z, self.eps);
        let h = self.ham.energy(&z);
        let delta_h = h0 - h;
        let direction = if delta_h > 0.8f64.ln() { 1 } else { -1 };
        loop {
            let mut z = z0.clone();
            self.ham.sample_momentum(&mut z, &mut self.rng);
            let h0 = self.ham.energy(&z);
            self.ham.leapfrog(&mut z, self.eps);
            let h = self.ham.energy(&z);
            let delta_h = h0 - h;
            if direction == 1 && !(delta_h > 0.8f64.ln()) {
                break;
            } else if direction == -1 && !(delta_h < 0.8f64.ln()) {
                break;
            } else {
                self.eps = if direction == 1 { 2.0 * self.eps } else { 0.5 * self.eps };
            }
            if self.eps > 1e7 {
                return Err(Error::Sampler("step size diverged during initialization; the posterior may be improper".into()));
            }
            if self.eps == 0.0 {
                return Err(Error::Sampler("step size collapsed to zero during initialization".into()));
            }
        }
        Ok(())
    }
}

fn compute_criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    crate::math::log_sum_exp2(a, b)
}

fn initialize<T: LogDensity, R: Rng>(target: &T, radius: f64, rng: &mut R) -> Result<PhasePoint> {
    let dim = target.dim();
    let mut grad = vec![0.0; dim];
    for _ in 0..INIT_ATTEMPTS {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..radius)).collect();
        let logp = target.log_density_grad(&q, &mut grad);
        if logp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(PhasePoint { q, p: vec![0.0; dim], grad, logp });
        }
    }
    Err(Error::Initialization(format!(
        "no finite log density after {INIT_ATTEMPTS} random starts in (-{radius}, {radius})"
    )))
}

fn run_chain<T: LogDensity>(target: &T, config: &SamplerConfig, chain: usize) -> Result<(Vec<f64>, ChainStats)> {
    let mut rng = chain_rng(config.seed, chain);
    let z = initialize(target, config.init_radius, &mut rng)?;
    let dim = target.dim();
    let mut s = Sampler {
        ham: Hamiltonian { target, inv_metric: vec![1.0; dim], n_grad: 0 },
        rng,
        eps: 1.0,
        max_depth: config.max_tree_depth,
        engine: config.engine,
        z,
    };
    s.init_step_size()?;
    let mut da = DualAveraging::new(s.eps, config.target_accept);
    let mut windows = WindowSchedule::new(config.n_warmup);
    let mut var = VarianceEstimator::new(dim);

    let per = config.draws_per_chain();
    let mut out = Vec::with_capacity(per * dim);
    let mut warmup_div = 0;
    let mut divergences = 0;
    let (mut acc_sum, mut depth_sum, mut depth_hits) = (0.0, 0.0, 0);

    for it in 0..config.n_iterations {
        let t = s.transition();
        if it < config.n_warmup {
            warmup_div += t.divergent as usize;
            s.eps = da.learn(t.accept_stat);
            if windows.in_slow_phase(it) {
                var.add(&s.z.q);
            }
            if windows.is_window_end(it) {
                s.ham.inv_metric = var.regularized();
                var = VarianceEstimator::new(dim);
                windows.advance();
                s.init_step_size()?;
                da = DualAveraging::new(s.eps, config.target_accept);
            }
            if it + 1 == config.n_warmup {
                s.eps = da.final_step();
                if warmup_div == config.n_warmup {
                    return Err(Error::Sampler(format!(
                        "chain {chain}: every warm-up transition diverged (final step size {:.3e})",
                        s.eps
                    )));
                }
            }
            continue;
        }
        divergences += t.divergent as usize;
        acc_sum += t.accept_stat;
        depth_sum += t.depth as f64;
        depth_hits += (t.depth >= config.max_tree_depth) as usize;
        let k = it - config.n_warmup;
        if (k + 1) % config.thin == 0 && out.len() < per * dim {
            out.extend_from_slice(&s.z.q);
        }
    }
    let n_post = (config.n_iterations - config.n_warmup) as f64;
    if divergences > 0 {
        log::warn!("chain {chain}: {divergences} divergent transitions after warm-up");
    }
    Ok((
        out,
        ChainStats {
            step_size: s.eps,
            inv_metric: s.ham.inv_metric.clone(),
            divergences,
            warmup_divergences: warmup_div,
            mean_accept: acc_sum / n_post,
            mean_tree_depth: depth_sum / n_post,
            max_tree_depth_hits: depth_hits,
            n_gradients: s.ham.n_grad,
        },
    ))
}

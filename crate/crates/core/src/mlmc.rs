//! Standard and multilevel Monte Carlo estimation of `E[Q]`.
//!
//! Level `l` lives on the uniform mesh with `n_l = n0 2^l`. A level-`l`
//! sample draws one field on mesh `l`, restricts it to mesh `l-1`, and returns
//! `Y_l = Q_l - Q_{l-1}` (`Y_0 = Q_0`). Samples are keyed by
//! `(master seed, level, index)` and reduced in index order, so results do not
//! depend on the number of workers.

use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::mesh::Mesh;
use crate::mfem::{MixedFem, ProblemData};
use crate::qoi::QoiKind;
use crate::randfield::{restrict_to_coarse, FieldModel, PreparedSampler, SeedId};

/// Running sums for one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelStats {
    pub level: usize,
    pub h: f64,
    pub n: u64,
    pub sum_y: f64,
    pub sum_y2: f64,
    pub sum_q: f64,
    pub sum_q2: f64,
    pub cost_units: f64,
    pub cost_seconds: f64,
}

/// Result of one (coupled) sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleOutcome {
    pub y: f64,
    /// The fine-level quantity `Q_l`.
    pub q: f64,
    pub cost_units: f64,
    pub cost_seconds: f64,
}

fn unbiased_variance(n: u64, sum: f64, sum2: f64) -> f64 {
    if n < 2 {
        return f64::NAN;
    }
    let nf = n as f64;
    ((sum2 - sum * sum / nf) / (nf - 1.0)).max(0.0)
}

impl LevelStats {
    pub fn new(level: usize, h: f64) -> Self {
        LevelStats { level, h, n: 0, sum_y: 0.0, sum_y2: 0.0, sum_q: 0.0, sum_q2: 0.0, cost_units: 0.0, cost_seconds: 0.0 }
    }

    pub fn push(&mut self, s: &SampleOutcome) {
        self.n += 1;
        self.sum_y += s.y;
        self.sum_y2 += s.y * s.y;
        self.sum_q += s.q;
        self.sum_q2 += s.q * s.q;
        self.cost_units += s.cost_units;
        self.cost_seconds += s.cost_seconds;
    }

    /// Combines statistics from disjoint sample ranges.
    pub fn merge(&mut self, other: &LevelStats) {
        self.n += other.n;
        self.sum_y += other.sum_y;
        self.sum_y2 += other.sum_y2;
        self.sum_q += other.sum_q;
        self.sum_q2 += other.sum_q2;
        self.cost_units += other.cost_units;
        self.cost_seconds += other.cost_seconds;
    }

    pub fn mean_y(&self) -> f64 {
        self.sum_y / self.n as f64
    }

    pub fn var_y(&self) -> f64 {
        unbiased_variance(self.n, self.sum_y, self.sum_y2)
    }

    pub fn mean_q(&self) -> f64 {
        self.sum_q / self.n as f64
    }

    pub fn var_q(&self) -> f64 {
        unbiased_variance(self.n, self.sum_q, self.sum_q2)
    }

    pub fn cost_per_sample(&self) -> f64 {
        self.cost_units / self.n as f64
    }

    pub fn rate_row(&self) -> RateRow {
        RateRow { level: self.level, mean_y: self.mean_y(), var_y: self.var_y(), cost: self.cost_per_sample() }
    }
}

/// A source of level samples.
pub trait LevelSampler: Sync {
    /// Highest level this sampler can produce.
    fn max_level(&self) -> usize;
    fn h(&self, level: usize) -> f64;
    fn sample(&self, level: usize, seed: SeedId) -> Result<SampleOutcome>;
}

/// Runs `f`, retrying once with a fresh attempt counter. A second failure is
/// returned with the seed of the failing attempt attached.
pub fn with_retry<T>(seed: SeedId, f: impl Fn(SeedId) -> Result<T>) -> Result<T> {
    f(seed).or_else(|_| {
        let again = seed.retry();
        f(again).map_err(|e| Error::Sample { seed: again, source: Box::new(e) })
    })
}

/// Draws samples `range` on `level` and reduces them in index order.
pub fn sample_level(
    sampler: &dyn LevelSampler,
    level: usize,
    range: std::ops::Range<u64>,
    master: u64,
    exec: Execution,
) -> Result<LevelStats> {
    let outcomes = try_map_indexed(exec, range, |i| {
        with_retry(SeedId::new(master, level as u32, i), |s| sampler.sample(level, s))
    })?;
    let mut stats = LevelStats::new(level, sampler.h(level));
    for s in &outcomes {
        stats.push(s);
    }
    Ok(stats)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    pub cost: f64,
}

impl McEstimate {
    pub fn standard_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }
}

/// Plain Monte Carlo with `n` samples of `f(seed) -> (Q, cost)`, seeds
/// `(master, level, 0..n)`.
pub fn mc_estimate<F>(f: F, n: u64, master: u64, level: u32, exec: Execution) -> Result<McEstimate>
where
    F: Fn(SeedId) -> Result<(f64, f64)> + Sync + Send,
{
    if n < 2 {
        return Err(Error::invalid(format!("Monte Carlo needs N >= 2, got {n}")));
    }
    let draws = try_map_indexed(exec, 0..n, |i| with_retry(SeedId::new(master, level, i), &f))?;
    let mut stats = LevelStats::new(level as usize, f64::NAN);
    for (q, cost) in draws {
        stats.push(&SampleOutcome { y: q, q, cost_units: cost, cost_seconds: 0.0 });
    }
    Ok(McEstimate { n, mean: stats.mean_y(), variance: stats.var_y(), cost: stats.cost_units })
}

/// `N_l = ceil(2 eps^{-2} sqrt(s2_l h_l) sum_k sqrt(s2_k / h_k))`, at least 1.
///
/// For this allocation `sum_l s2_l / N_l <= eps^2 / 2`.
pub fn optimal_allocation(variances: &[f64], h: &[f64], eps: f64) -> Result<Vec<u64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be > 0, got {eps}")));
    }
    if variances.len() != h.len() {
        return Err(Error::invalid("one variance per mesh size required"));
    }
    if let Some(v) = variances.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("level variances must be >= 0, got {v}")));
    }
    let total: f64 = variances.iter().zip(h).map(|(v, h)| (v / h).sqrt()).sum();
    Ok(variances
        .iter()
        .zip(h)
        .map(|(v, h)| ((2.0 / (eps * eps) * (v * h).sqrt() * total).ceil() as u64).max(1))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub level: usize,
    pub mean_y: f64,
    pub var_y: f64,
    pub cost: f64,
}

/// Fitted `alpha`, `beta`, `gamma` with `|E Y_l| ~ 2^{-alpha l}`,
/// `V Y_l ~ 2^{-beta l}`, `C_l ~ 2^{gamma l}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn lsq_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Rates from levels `l >= 1`; needs at least two of them.
pub fn fit_rates(rows: &[RateRow]) -> Result<Rates> {
    let used: Vec<&RateRow> = rows.iter().filter(|r| r.level >= 1).collect();
    if used.len() < 2 {
        return Err(Error::invalid(format!("rate fit needs at least two levels >= 1, got {}", used.len())));
    }
    let l: Vec<f64> = used.iter().map(|r| r.level as f64).collect();
    let fit = |f: &dyn Fn(&RateRow) -> f64| lsq_slope(&l, &used.iter().map(|r| f(r).log2()).collect::<Vec<_>>());
    Ok(Rates {
        alpha: -fit(&|r| r.mean_y.abs()),
        beta: -fit(&|r| r.var_y),
        gamma: fit(&|r| r.cost),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmcConfig {
    pub eps: f64,
    pub pilot: u64,
    pub seed: u64,
    /// Use exactly levels `0..=L` and skip the bias test.
    pub fixed_levels: Option<usize>,
    /// Highest level the adaptive run may add.
    pub max_level: usize,
    pub exec: Execution,
}

impl MlmcConfig {
    pub fn new(eps: f64, seed: u64) -> Self {
        MlmcConfig { eps, pilot: 50, seed, fixed_levels: None, max_level: 4, exec: Execution::Parallel }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.pilot < 10 {
            return Err(Error::invalid(format!("pilot must be >= 10, got {}", self.pilot)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlmcResult {
    pub eps: f64,
    pub estimate: f64,
    pub sampling_error: f64,
    pub levels: Vec<LevelStats>,
    /// Fitted rates when at least two correction levels exist.
    pub rates: Option<Rates>,
    /// False when the bias test still failed at the level cap.
    pub bias_converged: bool,
}

impl MlmcResult {
    fn from_levels(eps: f64, levels: Vec<LevelStats>, bias_converged: bool) -> Self {
        let estimate = levels.iter().map(|s| s.mean_y()).sum();
        let sampling_error = levels.iter().map(|s| s.var_y() / s.n as f64).sum::<f64>().sqrt();
        let rows: Vec<RateRow> = levels.iter().map(|s| s.rate_row()).collect();
        MlmcResult { eps, estimate, sampling_error, rates: fit_rates(&rows).ok(), levels, bias_converged }
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn total_cost_units(&self) -> f64 {
        self.levels.iter().map(|s| s.cost_units).sum()
    }

    pub fn total_cost_seconds(&self) -> f64 {
        self.levels.iter().map(|s| s.cost_seconds).sum()
    }

    /// `level,h,N,mean_Y,var_Y,mean_Q,var_Q,cost_units,cost_seconds`.
    pub fn write_levels_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "level,h,N,mean_Y,var_Y,mean_Q,var_Q,cost_units,cost_seconds")?;
        for s in &self.levels {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                s.level,
                s.h,
                s.n,
                s.mean_y(),
                s.var_y(),
                s.mean_q(),
                s.var_q(),
                s.cost_units,
                s.cost_seconds
            )?;
        }
        Ok(())
    }

    /// `qoi,eps,estimate,sampling_error,L,alpha_hat,beta_hat,gamma_hat`.
    pub fn write_summary_csv<W: Write>(&self, qoi: &str, mut w: W) -> std::io::Result<()> {
        writeln!(w, "qoi,eps,estimate,sampling_error,L,alpha_hat,beta_hat,gamma_hat")?;
        let r = self.rates.unwrap_or(Rates { alpha: f64::NAN, beta: f64::NAN, gamma: f64::NAN });
        writeln!(
            w,
            "{qoi},{},{},{},{},{},{},{}",
            self.eps,
            self.estimate,
            self.sampling_error,
            self.finest_level(),
            r.alpha,
            r.beta,
            r.gamma
        )
    }
}

/// Tops up every level to its optimal sample count, repeating with refreshed
/// variance estimates until the allocation is stable.
fn top_up(sampler: &dyn LevelSampler, levels: &mut [LevelStats], cfg: &MlmcConfig) -> Result<()> {
    for _ in 0..10 {
        let vars: Vec<f64> = levels.iter().map(|s| s.var_y()).collect();
        let h: Vec<f64> = levels.iter().map(|s| s.h).collect();
        let target = optimal_allocation(&vars, &h, cfg.eps)?;
        let mut changed = false;
        for (s, &n) in levels.iter_mut().zip(&target) {
            if n > s.n {
                let extra = sample_level(sampler, s.level, s.n..n, cfg.seed, cfg.exec)?;
                s.merge(&extra);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(())
}

/// Adaptive MLMC: pilot, optimal allocation for a sampling variance of
/// `eps^2 / 2`, and new levels while `|mean Y_L| / (2^alpha - 1) > eps / sqrt 2`.
pub fn mlmc_run(sampler: &dyn LevelSampler, cfg: &MlmcConfig) -> Result<MlmcResult> {
    cfg.validate()?;
    let cap = cfg.fixed_levels.unwrap_or(cfg.max_level).min(sampler.max_level());
    if let Some(l) = cfg.fixed_levels {
        if l > sampler.max_level() {
            return Err(Error::invalid(format!("requested {l} levels but the hierarchy stops at {}", sampler.max_level())));
        }
    }
    let start = cfg.fixed_levels.unwrap_or(1).min(cap);
    let mut levels = Vec::new();
    for l in 0..=start {
        levels.push(sample_level(sampler, l, 0..cfg.pilot, cfg.seed, cfg.exec)?);
    }
    loop {
        top_up(sampler, &mut levels, cfg)?;
        if cfg.fixed_levels.is_some() {
            return Ok(MlmcResult::from_levels(cfg.eps, levels, true));
        }
        let rows: Vec<RateRow> = levels.iter().map(|s| s.rate_row()).collect();
        let alpha = fit_rates(&rows).map(|r| r.alpha).unwrap_or(f64::NAN);
        let alpha = if alpha.is_finite() { alpha.max(0.5) } else { 0.5 };
        let last = levels.last().expect("at least one level");
        let bias = if last.level == 0 { f64::INFINITY } else { last.mean_y().abs() / (2f64.powf(alpha) - 1.0) };
        if bias <= cfg.eps / 2f64.sqrt() {
            return Ok(MlmcResult::from_levels(cfg.eps, levels, true));
        }
        if levels.len() > cap {
            return Ok(MlmcResult::from_levels(cfg.eps, levels, false));
        }
        let l = levels.len();
        levels.push(sample_level(sampler, l, 0..cfg.pilot, cfg.seed, cfg.exec)?);
    }
}

/// Per-level state of a [`FlowHierarchy`], built on first use.
#[derive(Debug)]
struct LevelData {
    mesh: Arc<Mesh>,
    fem: MixedFem,
    sampler: PreparedSampler,
}

/// Flow-cell solves on the hierarchy `n_l = n0 2^l`, `l = 0..=max_level`.
#[derive(Debug)]
pub struct FlowHierarchy {
    n0: usize,
    field: FieldModel,
    qoi: QoiKind,
    data: ProblemData,
    /// Record wall-clock cost. Off by default so outputs are reproducible.
    timings: bool,
    levels: Vec<OnceLock<LevelData>>,
}

impl FlowHierarchy {
    pub fn new(n0: usize, max_level: usize, field: FieldModel, qoi: QoiKind) -> Result<Self> {
        if n0 == 0 {
            return Err(Error::invalid("n0 must be >= 1"));
        }
        if max_level > 12 {
            return Err(Error::invalid(format!("max_level must be <= 12, got {max_level}")));
        }
        Ok(FlowHierarchy {
            n0,
            field,
            qoi,
            data: ProblemData::flow_cell(),
            timings: false,
            levels: (0..=max_level).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn with_timings(mut self, on: bool) -> Self {
        self.timings = on;
        self
    }

    pub fn with_problem(mut self, data: ProblemData) -> Self {
        self.data = data;
        self
    }

    pub fn n(&self, level: usize) -> usize {
        self.n0 << level
    }

    pub fn qoi(&self) -> QoiKind {
        self.qoi
    }

    fn level(&self, l: usize) -> Result<&LevelData> {
        let slot = self
            .levels
            .get(l)
            .ok_or_else(|| Error::invalid(format!("level {l} beyond the hierarchy")))?;
        if let Some(d) = slot.get() {
            return Ok(d);
        }
        let mesh = Arc::new(Mesh::uniform(self.n(l))?);
        let sampler = self.field.prepare(&mesh)?;
        let fem = MixedFem::from_arc(mesh.clone());
        // A concurrent initializer may win; both values are identical.
        let _ = slot.set(LevelData { mesh, fem, sampler });
        Ok(slot.get().expect("initialized above"))
    }

    pub fn mesh(&self, l: usize) -> Result<Arc<Mesh>> {
        Ok(self.level(l)?.mesh.clone())
    }

    fn solve_q(&self, d: &LevelData, field: &crate::randfield::FieldRealization) -> Result<f64> {
        let sol = d.fem.solve(field, &self.data)?;
        self.qoi.evaluate(&d.mesh, &sol)
    }

    /// `Q_l(omega)` alone, at the machine-independent cost of one level.
    pub fn single_sample(&self, l: usize, seed: SeedId) -> Result<(f64, f64)> {
        let d = self.level(l)?;
        let field = d.sampler.sample(&d.mesh, seed)?;
        let q = self.solve_q(d, &field)?;
        Ok((q, (d.mesh.num_elements() + d.mesh.num_vertices()) as f64))
    }

    /// `(Y_l, Q_l, cost)` with one field shared by both levels.
    pub fn coupled_sample(&self, l: usize, seed: SeedId) -> Result<SampleOutcome> {
        let start = self.timings.then(Instant::now);
        let fine = self.level(l)?;
        let field = fine.sampler.sample(&fine.mesh, seed)?;
        let q = self.solve_q(fine, &field)?;
        let mut units = (fine.mesh.num_elements() + fine.mesh.num_vertices()) as f64;
        let y = if l == 0 {
            q
        } else {
            let coarse = self.level(l - 1)?;
            let restricted = restrict_to_coarse(&field, &fine.mesh, &coarse.mesh)?;
            units += coarse.mesh.num_elements() as f64;
            q - self.solve_q(coarse, &restricted)?
        };
        let cost_seconds = start.map_or(0.0, |s| s.elapsed().as_secs_f64());
        Ok(SampleOutcome { y, q, cost_units: units, cost_seconds })
    }
}

impl LevelSampler for FlowHierarchy {
    fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    fn h(&self, level: usize) -> f64 {
        1.0 / self.n(level) as f64
    }

    fn sample(&self, level: usize, seed: SeedId) -> Result<SampleOutcome> {
        self.coupled_sample(level, seed)
    }
}

/// Standard Monte Carlo on one level of a hierarchy, exposed as a one-level
/// sampler so that it runs through the same pilot and allocation logic.
#[derive(Debug)]
pub struct SingleLevel<'a> {
    pub hierarchy: &'a FlowHierarchy,
    pub level: usize,
}

impl LevelSampler for SingleLevel<'_> {
    fn max_level(&self) -> usize {
        0
    }

    fn h(&self, _level: usize) -> f64 {
        self.hierarchy.h(self.level)
    }

    fn sample(&self, _level: usize, seed: SeedId) -> Result<SampleOutcome> {
        // Seeds carry the hierarchy level so level-0 runs coincide with MLMC.
        let seed = SeedId { level: self.level as u32, ..seed };
        let start = self.hierarchy.timings.then(Instant::now);
        let (q, units) = self.hierarchy.single_sample(self.level, seed)?;
        let cost_seconds = start.map_or(0.0, |s| s.elapsed().as_secs_f64());
        Ok(SampleOutcome { y: q, q, cost_units: units, cost_seconds })
    }
}

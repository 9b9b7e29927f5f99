//! Convergence, moment-decay and cost experiments on the flow cell.
//!
//! Every experiment samples one field per sample index on the finest mesh it
//! needs and restricts it to the coarser meshes, so all levels of a sample see
//! the same realization. Reports are written as CSV with a `# key=value`
//! header block.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::mesh::Mesh;
use crate::mfem::{eval_recovered, eval_velocity, MixedFem, MixedSolution, ProblemData};
use crate::mlmc::{lsq_slope, mlmc_run, with_retry, FlowHierarchy, MlmcConfig, SingleLevel};
use crate::qoi::{effective_permeability, QoiKind};
use crate::randfield::{restrict_to_coarse, FieldModel, Purpose, SeedId};

/// Default number of bootstrap resamples for slope intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Clone, Debug)]
pub struct ConvergenceConfig {
    pub field: FieldModel,
    pub n0: usize,
    /// Test meshes are `n0 2^l` for `l = 0..=levels`.
    pub levels: usize,
    pub n_ref: usize,
    pub samples: u64,
    pub seed: u64,
    /// Quantities for the moment-decay experiment.
    pub qois: Vec<QoiKind>,
    pub bootstrap: usize,
    /// Drop level 0 from slope fits; defaults to `levels >= 3`.
    pub exclude_coarsest: Option<bool>,
    pub exec: Execution,
    pub timings: bool,
}

impl ConvergenceConfig {
    pub fn new(field: FieldModel, seed: u64) -> Self {
        ConvergenceConfig {
            field,
            n0: 4,
            levels: 3,
            n_ref: 64,
            samples: 200,
            seed,
            qois: vec![QoiKind::KEff],
            bootstrap: BOOTSTRAP_RESAMPLES,
            exclude_coarsest: None,
            exec: Execution::Parallel,
            timings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(Error::invalid("n0 must be >= 1"));
        }
        let finest = self.n0 << self.levels;
        if self.n_ref <= finest || !self.n_ref.is_multiple_of(finest) {
            return Err(Error::invalid(format!(
                "n_ref must be a strict multiple of the finest test mesh n = {finest}, got {}",
                self.n_ref
            )));
        }
        if self.samples < 2 {
            return Err(Error::invalid(format!("samples must be >= 2, got {}", self.samples)));
        }
        Ok(())
    }

    pub fn test_sizes(&self) -> Vec<usize> {
        (0..=self.levels).map(|l| self.n0 << l).collect()
    }

    fn first_fit_level(&self) -> usize {
        usize::from(self.exclude_coarsest.unwrap_or(self.levels >= 3))
    }

    fn header(&self) -> Vec<(String, String)> {
        vec![
            ("field".into(), self.field.describe()),
            ("n0".into(), self.n0.to_string()),
            ("levels".into(), self.levels.to_string()),
            ("n_ref".into(), self.n_ref.to_string()),
            ("samples".into(), self.samples.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("bootstrap".into(), self.bootstrap.to_string()),
            ("fit_from_level".into(), self.first_fit_level().to_string()),
        ]
    }
}

/// One measured quantity against mesh level.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub levels: Vec<usize>,
    pub h: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// Least-squares rate `value ~ h^slope` with a bootstrap interval.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub series: String,
    /// `None` when some value is (numerically) zero.
    pub slope: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub levels_used: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub name: String,
    pub seed: u64,
    pub header: Vec<(String, String)>,
    pub series: Vec<Series>,
    pub fits: Vec<SlopeFit>,
    pub wall_seconds: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

impl RateReport {
    pub fn fit(&self, series: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.series == series)
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn file_name(&self) -> String {
        format!("experiment_{}_{}.csv", self.name, self.seed)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# experiment={}", self.name)?;
        for (k, v) in &self.header {
            writeln!(w, "# {k}={v}")?;
        }
        if let Some(s) = self.wall_seconds {
            writeln!(w, "# wall_seconds={s}")?;
        }
        for f in &self.fits {
            let levels: Vec<String> = f.levels_used.iter().map(|l| l.to_string()).collect();
            writeln!(
                w,
                "# fit series={} slope={} ci_low={} ci_high={} levels={}",
                f.series,
                fmt_opt(f.slope),
                fmt_opt(f.ci.map(|c| c.0)),
                fmt_opt(f.ci.map(|c| c.1)),
                levels.join(";")
            )?;
        }
        writeln!(w, "series,level,h,value,std_error")?;
        for s in &self.series {
            for k in 0..s.levels.len() {
                writeln!(w, "{},{},{},{},{}", s.name, s.levels[k], s.h[k], s.values[k], s.std_errors[k])?;
            }
        }
        Ok(())
    }

    /// Writes `experiment_{name}_{seed}.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(&path, buf)?;
        Ok(path)
    }
}

/// Slope of `log2 value` against `log2 h`, or `None` if any value is below
/// `1e-12` (errors that vanish up to round-off have no rate).
fn slope_of(h: &[f64], values: &[f64]) -> Option<f64> {
    if values.iter().any(|v| !(v.abs() > 1e-12) || !v.is_finite()) {
        return None;
    }
    let x: Vec<f64> = h.iter().map(|v| v.log2()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.abs().log2()).collect();
    Some(lsq_slope(&x, &y))
}

fn percentile_interval(mut v: Vec<f64>) -> Option<(f64, f64)> {
    v.retain(|x| x.is_finite());
    if v.len() < 2 {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let at = |p: f64| v[((p * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    Some((at(0.025), at(0.975)))
}

/// Statistic of one series computed from per-sample rows.
type Statistic<'a> = dyn Fn(&[usize]) -> Vec<f64> + 'a;

/// Builds a series and its slope fit; bootstrap resamples sample indices with
/// the dedicated bootstrap stream of `(seed, b)`.
fn fit_series(
    name: &str,
    levels: &[usize],
    h: &[f64],
    samples: usize,
    stat: &Statistic<'_>,
    cfg: &ConvergenceConfig,
) -> (Series, SlopeFit) {
    use rand::Rng;
    let all: Vec<usize> = (0..samples).collect();
    let values = stat(&all);
    let first = cfg.first_fit_level();
    let used: Vec<usize> = (0..levels.len()).filter(|&k| levels[k] >= first).collect();
    let pick = |v: &[f64]| used.iter().map(|&k| v[k]).collect::<Vec<_>>();
    let used_h = pick(h);
    let slope = if used.len() >= 2 { slope_of(&used_h, &pick(&values)) } else { None };

    let mut boot_values = vec![Vec::with_capacity(cfg.bootstrap); levels.len()];
    let mut boot_slopes = Vec::with_capacity(cfg.bootstrap);
    for b in 0..cfg.bootstrap {
        let mut rng = SeedId::new(cfg.seed, 0, b as u64).rng(Purpose::Bootstrap);
        let idx: Vec<usize> = (0..samples).map(|_| rng.random_range(0..samples)).collect();
        let v = stat(&idx);
        for (k, x) in v.iter().enumerate() {
            boot_values[k].push(*x);
        }
        if slope.is_some() {
            if let Some(s) = slope_of(&used_h, &pick(&v)) {
                boot_slopes.push(s);
            }
        }
    }
    let std_errors = boot_values
        .iter()
        .map(|v| {
            if v.len() < 2 {
                return f64::NAN;
            }
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        })
        .collect();
    let ci = if slope.is_some() { percentile_interval(boot_slopes) } else { None };
    (
        Series { name: name.to_string(), levels: levels.to_vec(), h: h.to_vec(), values, std_errors },
        SlopeFit { series: name.to_string(), slope, ci, levels_used: used.iter().map(|&k| levels[k]).collect() },
    )
}

/// `||q_c - q_f||`, `||u_c - u_f||` and `||u~_c - u~_f||` in `L^2(D)`, with
/// the coarse solution represented exactly on the nested fine mesh.
pub fn embedded_errors(
    coarse: &Mesh,
    coarse_sol: &MixedSolution,
    fine: &Mesh,
    fine_sol: &MixedSolution,
    parent: &[usize],
) -> [f64; 3] {
    let mut eq = 0.0;
    let mut eu = 0.0;
    let mut er = 0.0;
    for tf in 0..fine.num_elements() {
        let tc = parent[tf];
        let area = fine.area(tf);
        let edges = fine.element_edges(tf);
        for (k, &e) in edges.iter().enumerate() {
            // Edge-midpoint rule: exact for the quadratic integrands below.
            let m = fine.edge_midpoint(e);
            let qc = eval_velocity(coarse, tc, &coarse_sol.edge_flux, m);
            let qf = eval_velocity(fine, tf, &fine_sol.edge_flux, m);
            eq += area / 3.0 * ((qc[0] - qf[0]).powi(2) + (qc[1] - qf[1]).powi(2));
            let rc = eval_recovered(coarse, tc, &coarse_sol.recovered_pressure[tc], m);
            er += area / 3.0 * (rc - fine_sol.recovered_pressure[tf][k]).powi(2);
        }
        eu += area * (coarse_sol.pressure[tc] - fine_sol.pressure[tf]).powi(2);
    }
    [eq.sqrt(), eu.sqrt(), er.sqrt()]
}

struct Level {
    mesh: Arc<Mesh>,
    fem: MixedFem,
}

impl Level {
    fn new(n: usize) -> Result<Self> {
        let mesh = Arc::new(Mesh::uniform(n)?);
        Ok(Level { fem: MixedFem::from_arc(mesh.clone()), mesh })
    }
}

const FE_SERIES: [&str; 4] = ["velocity_l2", "pressure_l2", "recovered_pressure_l2", "k_eff"];

/// RMS (over samples) errors of the test-level solutions against the
/// reference solution.
pub fn run_fe_convergence(cfg: &ConvergenceConfig) -> Result<RateReport> {
    cfg.validate()?;
    let clock = Instant::now();
    let data = ProblemData::flow_cell();
    let reference = Level::new(cfg.n_ref)?;
    let sampler = cfg.field.prepare(&reference.mesh)?;
    let sizes = cfg.test_sizes();
    let tests: Vec<Level> = sizes.iter().map(|&n| Level::new(n)).collect::<Result<_>>()?;
    let parents: Vec<Vec<usize>> = tests.iter().map(|l| l.mesh.parent_map(&reference.mesh)).collect::<Result<_>>()?;

    // rows[s][level] = [e_q, e_u, e_rec, e_k]
    let rows: Vec<Vec<[f64; 4]>> = try_map_indexed(cfg.exec, 0..cfg.samples, |s| {
        with_retry(SeedId::new(cfg.seed, 0, s), |seed| {
            let field = sampler.sample(&reference.mesh, seed)?;
            let fine = reference.fem.solve(&field, &data)?;
            let k_ref = effective_permeability(&reference.mesh, &fine);
            tests
                .iter()
                .zip(&parents)
                .map(|(lvl, parent)| {
                    let coarse_field = restrict_to_coarse(&field, &reference.mesh, &lvl.mesh)?;
                    let sol = lvl.fem.solve(&coarse_field, &data)?;
                    let [eq, eu, er] = embedded_errors(&lvl.mesh, &sol, &reference.mesh, &fine, parent);
                    let ek = (effective_permeability(&lvl.mesh, &sol) - k_ref).abs();
                    Ok([eq, eu, er, ek])
                })
                .collect()
        })
    })?;

    let levels: Vec<usize> = (0..=cfg.levels).collect();
    let h: Vec<f64> = sizes.iter().map(|&n| 1.0 / n as f64).collect();
    let mut series = Vec::new();
    let mut fits = Vec::new();
    for (j, name) in FE_SERIES.iter().enumerate() {
        let stat = |idx: &[usize]| -> Vec<f64> {
            (0..levels.len())
                .map(|k| (idx.iter().map(|&s| rows[s][k][j].powi(2)).sum::<f64>() / idx.len() as f64).sqrt())
                .collect()
        };
        let (s, f) = fit_series(name, &levels, &h, rows.len(), &stat, cfg);
        series.push(s);
        fits.push(f);
    }
    Ok(RateReport {
        name: "fe_convergence".into(),
        seed: cfg.seed,
        header: cfg.header(),
        series,
        fits,
        wall_seconds: cfg.timings.then(|| clock.elapsed().as_secs_f64()),
    })
}

/// `|E[Q_h - Q_ref]|` for every test level and `V[Q_h - Q_2h]` for levels
/// `l >= 1`, for each configured quantity.
pub fn run_moment_decay(cfg: &ConvergenceConfig) -> Result<RateReport> {
    cfg.validate()?;
    if cfg.qois.is_empty() {
        return Err(Error::invalid("moment decay needs at least one quantity of interest"));
    }
    let clock = Instant::now();
    let data = ProblemData::flow_cell();
    let reference = Level::new(cfg.n_ref)?;
    let sampler = cfg.field.prepare(&reference.mesh)?;
    let sizes = cfg.test_sizes();
    let tests: Vec<Level> = sizes.iter().map(|&n| Level::new(n)).collect::<Result<_>>()?;

    // rows[s][qoi] = (Q_ref, [Q_l for each level])
    let rows: Vec<Vec<(f64, Vec<f64>)>> = try_map_indexed(cfg.exec, 0..cfg.samples, |s| {
        with_retry(SeedId::new(cfg.seed, 0, s), |seed| {
            let field = sampler.sample(&reference.mesh, seed)?;
            let fine = reference.fem.solve(&field, &data)?;
            let sols: Vec<MixedSolution> = tests
                .iter()
                .map(|lvl| lvl.fem.solve(&restrict_to_coarse(&field, &reference.mesh, &lvl.mesh)?, &data))
                .collect::<Result<_>>()?;
            cfg.qois
                .iter()
                .map(|q| {
                    let q_ref = q.evaluate(&reference.mesh, &fine)?;
                    let q_l = tests.iter().zip(&sols).map(|(l, s)| q.evaluate(&l.mesh, s)).collect::<Result<_>>()?;
                    Ok((q_ref, q_l))
                })
                .collect()
        })
    })?;

    let levels: Vec<usize> = (0..=cfg.levels).collect();
    let h: Vec<f64> = sizes.iter().map(|&n| 1.0 / n as f64).collect();
    let mut series = Vec::new();
    let mut fits = Vec::new();
    for (j, q) in cfg.qois.iter().enumerate() {
        let mean_stat = |idx: &[usize]| -> Vec<f64> {
            (0..levels.len())
                .map(|k| (idx.iter().map(|&s| rows[s][j].1[k] - rows[s][j].0).sum::<f64>() / idx.len() as f64).abs())
                .collect()
        };
        let (s, f) = fit_series(&format!("mean_{}", q.name()), &levels, &h, rows.len(), &mean_stat, cfg);
        series.push(s);
        fits.push(f);

        let var_stat = |idx: &[usize]| -> Vec<f64> {
            (1..levels.len())
                .map(|k| {
                    let d: Vec<f64> = idx.iter().map(|&s| rows[s][j].1[k] - rows[s][j].1[k - 1]).collect();
                    let m = d.iter().sum::<f64>() / d.len() as f64;
                    d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (d.len() - 1) as f64
                })
                .collect()
        };
        let (s, f) = fit_series(&format!("var_{}", q.name()), &levels[1..], &h[1..], rows.len(), &var_stat, cfg);
        series.push(s);
        fits.push(f);
    }
    let mut header = cfg.header();
    header.push(("qois".into(), cfg.qois.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(";")));
    Ok(RateReport {
        name: "moment_decay".into(),
        seed: cfg.seed,
        header,
        series,
        fits,
        wall_seconds: cfg.timings.then(|| clock.elapsed().as_secs_f64()),
    })
}

#[derive(Clone, Debug)]
pub struct CostConfig {
    pub field: FieldModel,
    pub qoi: QoiKind,
    pub eps: f64,
    pub n0: usize,
    /// Finest MLMC level for each row; standard MC runs on that level alone.
    pub finest_levels: Vec<usize>,
    pub pilot: u64,
    pub seed: u64,
    /// Seed for the standard MC runs; `None` reuses `seed`.
    pub mc_seed: Option<u64>,
    pub exec: Execution,
    pub timings: bool,
}

impl CostConfig {
    pub fn new(field: FieldModel, qoi: QoiKind, eps: f64, seed: u64) -> Self {
        CostConfig {
            field,
            qoi,
            eps,
            n0: 4,
            finest_levels: vec![0, 1, 2, 3, 4],
            pilot: 50,
            seed,
            mc_seed: None,
            exec: Execution::Parallel,
            timings: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub finest_level: usize,
    pub n: usize,
    pub mc_samples: u64,
    pub mc_cost_units: f64,
    pub mlmc_cost_units: f64,
    pub mc_estimate: f64,
    pub mc_error: f64,
    pub mlmc_estimate: f64,
    pub mlmc_error: f64,
    pub mlmc_samples: Vec<u64>,
    pub mc_seconds: f64,
    pub mlmc_seconds: f64,
}

impl CostRow {
    pub fn ratio(&self) -> f64 {
        self.mlmc_cost_units / self.mc_cost_units
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub seed: u64,
    pub header: Vec<(String, String)>,
    pub rows: Vec<CostRow>,
}

impl CostReport {
    pub fn file_name(&self) -> String {
        format!("experiment_cost_compare_{}.csv", self.seed)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# experiment=cost_compare")?;
        for (k, v) in &self.header {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(
            w,
            "finest_level,n,h,mc_N,mlmc_N,mc_cost_units,mlmc_cost_units,cost_ratio,mc_estimate,mc_error,mlmc_estimate,mlmc_error,mc_seconds,mlmc_seconds"
        )?;
        for r in &self.rows {
            let ns: Vec<String> = r.mlmc_samples.iter().map(|n| n.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.finest_level,
                r.n,
                1.0 / r.n as f64,
                r.mc_samples,
                ns.join(";"),
                r.mc_cost_units,
                r.mlmc_cost_units,
                r.ratio(),
                r.mc_estimate,
                r.mc_error,
                r.mlmc_estimate,
                r.mlmc_error,
                r.mc_seconds,
                r.mlmc_seconds
            )?;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(&path, buf)?;
        Ok(path)
    }
}

/// Machine-independent cost of MLMC on levels `0..=L` versus standard MC on
/// level `L`, both tuned to a sampling variance of `eps^2 / 2`.
pub fn run_cost_comparison(cfg: &CostConfig) -> Result<CostReport> {
    if cfg.finest_levels.is_empty() {
        return Err(Error::invalid("cost comparison needs at least one finest level"));
    }
    let top = *cfg.finest_levels.iter().max().expect("non-empty");
    let hierarchy = FlowHierarchy::new(cfg.n0, top, cfg.field.clone(), cfg.qoi)?.with_timings(cfg.timings);
    let mut rows = Vec::new();
    for &l in &cfg.finest_levels {
        let mut ml_cfg = MlmcConfig::new(cfg.eps, cfg.seed);
        ml_cfg.pilot = cfg.pilot;
        ml_cfg.fixed_levels = Some(l);
        ml_cfg.exec = cfg.exec;
        let ml = mlmc_run(&hierarchy, &ml_cfg)?;
        let mut mc_cfg = ml_cfg;
        mc_cfg.seed = cfg.mc_seed.unwrap_or(cfg.seed);
        mc_cfg.fixed_levels = Some(0);
        let mc = mlmc_run(&SingleLevel { hierarchy: &hierarchy, level: l }, &mc_cfg)?;
        rows.push(CostRow {
            finest_level: l,
            n: hierarchy.n(l),
            mc_samples: mc.levels[0].n,
            mc_cost_units: mc.total_cost_units(),
            mlmc_cost_units: ml.total_cost_units(),
            mc_estimate: mc.estimate,
            mc_error: mc.sampling_error,
            mlmc_estimate: ml.estimate,
            mlmc_error: ml.sampling_error,
            mlmc_samples: ml.levels.iter().map(|s| s.n).collect(),
            mc_seconds: mc.total_cost_seconds(),
            mlmc_seconds: ml.total_cost_seconds(),
        });
    }
    let header = vec![
        ("field".into(), cfg.field.describe()),
        ("qoi".into(), cfg.qoi.to_string()),
        ("eps".into(), cfg.eps.to_string()),
        ("n0".into(), cfg.n0.to_string()),
        ("pilot".into(), cfg.pilot.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("mc_seed".into(), cfg.mc_seed.unwrap_or(cfg.seed).to_string()),
    ];
    Ok(CostReport { seed: cfg.seed, header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randfield::CovarianceSpec;

    fn small(field: FieldModel) -> ConvergenceConfig {
        let mut cfg = ConvergenceConfig::new(field, 3);
        cfg.n0 = 2;
        cfg.levels = 2;
        cfg.n_ref = 16;
        cfg.samples = 8;
        cfg.bootstrap = 20;
        cfg
    }

    #[test]
    fn unit_field_errors() {
        let cfg = small(FieldModel::Constant(1.0));
        let report = run_fe_convergence(&cfg).unwrap();
        for name in ["velocity_l2", "recovered_pressure_l2", "k_eff"] {
            let s = report.series(name).unwrap();
            assert!(s.values.iter().all(|v| *v < 1e-9), "{name}: {:?}", s.values);
            assert!(report.fit(name).unwrap().slope.is_none());
        }
        // Piecewise-constant pressures at different resolutions never agree:
        // both equal 1 - x at the element centroids.
        let fine = Mesh::uniform(cfg.n_ref).unwrap();
        let p = report.series("pressure_l2").unwrap();
        for (k, n) in cfg.test_sizes().into_iter().enumerate() {
            let coarse = Mesh::uniform(n).unwrap();
            let parent = coarse.parent_map(&fine).unwrap();
            let exact = (0..fine.num_elements())
                .map(|t| fine.area(t) * (coarse.centroid(parent[t])[0] - fine.centroid(t)[0]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((p.values[k] - exact).abs() < 1e-10);
        }
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("slope=undefined"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(FieldModel::Constant(1.0));
        cfg.n_ref = 8;
        assert!(cfg.validate().is_err());
        cfg.n_ref = 20;
        assert!(cfg.validate().is_err());
        cfg.n_ref = 32;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn reports_are_reproducible() {
        let spec = CovarianceSpec::exponential(1.0, 0.3).unwrap();
        let mut cfg = small(FieldModel::Circulant(spec));
        cfg.qois = vec![QoiKind::KEff, QoiKind::VelocityL2];
        let a = run_moment_decay(&cfg).unwrap();
        cfg.exec = Execution::Sequential;
        let b = run_moment_decay(&cfg).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.series.len(), 4);
        assert_eq!(a.series("var_k_eff").unwrap().levels, vec![1, 2]);
    }
}

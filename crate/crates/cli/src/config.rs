//! Run configuration: an INI file with one section per module, overridden by
//! `section.key=value` pairs from the command line.
//!
//! ```ini
//! [run]
//! seed = 7
//! workers = auto
//!
//! [field]
//! sampler = circulant
//! kind = exponential
//! lambda = 0.1
//!
//! [mlmc]
//! eps = 0.01
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use darcy_uq::qoi::QoiKind;
use darcy_uq::randfield::{default_grid, kle_build, CovarianceSpec, FieldModel};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "DARCY_UQ_OUT";
pub const DEFAULT_OUTPUT: &str = "darcy-uq-out";

/// Accepted `(section, key)` pairs.
const KEYS: &[(&str, &[&str])] = &[
    ("run", &["seed", "sample", "output", "workers"]),
    ("field", &["sampler", "kind", "sigma2", "lambda", "nu", "modes", "grid", "value"]),
    ("mesh", &["n", "n0", "levels", "n_ref"]),
    ("qoi", &["kind", "x0"]),
    ("mlmc", &["eps", "pilot", "max_level", "levels", "samples"]),
    ("harness", &["samples", "bootstrap", "exclude_coarsest", "qois", "finest_levels", "mc_seed", "timings"]),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigError {
    Read { path: PathBuf, message: String },
    Syntax(String),
    UnknownSection(String),
    UnknownKey(String),
    Invalid { key: String, constraint: String, value: String },
    Inconsistent(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read { path, message } => write!(f, "cannot read config {}: {message}", path.display()),
            ConfigError::Syntax(m) => write!(f, "config syntax error: {m}"),
            ConfigError::UnknownSection(s) => write!(f, "unknown config section [{s}]"),
            ConfigError::UnknownKey(k) => write!(f, "unknown config key '{k}'"),
            ConfigError::Invalid { key, constraint, value } => {
                write!(f, "invalid value for '{key}': must be {constraint}, got '{value}'")
            }
            ConfigError::Inconsistent(m) => write!(f, "inconsistent config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Unparsed `section.key -> value` entries, later sources overriding earlier ones.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn from_ini_str(text: &str) -> Result<Self, ConfigError> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut raw = RawConfig::default();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::UnknownKey(format!("{key} (outside any section)")));
                }
                continue;
            };
            if !KEYS.iter().any(|(s, _)| *s == section) {
                return Err(ConfigError::UnknownSection(section.to_string()));
            }
            for (key, value) in props.iter() {
                raw.set(&format!("{section}.{key}"), value)?;
            }
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_ini_str(&text)
    }

    /// Sets `section.key`, rejecting names outside the schema.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let (section, name) = key.split_once('.').ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let known = KEYS.iter().any(|(s, keys)| *s == section && keys.contains(&name));
        if !known {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.entries.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Parses a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax(format!("override '{assignment}' is not of the form section.key=value")))?;
        self.set(key.trim(), value)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

fn invalid(key: &str, constraint: &str, value: &str) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), constraint: constraint.to_string(), value: value.to_string() }
}

fn parse_with<T>(raw: &RawConfig, key: &str, default: T, constraint: &str, ok: impl Fn(&T) -> bool) -> Result<T, ConfigError>
where
    T: FromStr,
{
    match raw.get(key) {
        None => Ok(default),
        Some(v) => match v.parse::<T>() {
            Ok(x) if ok(&x) => Ok(x),
            _ => Err(invalid(key, constraint, v)),
        },
    }
}

fn positive(raw: &RawConfig, key: &str, default: f64) -> Result<f64, ConfigError> {
    parse_with(raw, key, default, "a finite number > 0", |x: &f64| *x > 0.0 && x.is_finite())
}

fn at_least(raw: &RawConfig, key: &str, default: usize, min: usize) -> Result<usize, ConfigError> {
    parse_with(raw, key, default, &format!("an integer >= {min}"), |x: &usize| *x >= min)
}

fn list<T: FromStr>(raw: &RawConfig, key: &str, constraint: &str) -> Result<Option<Vec<T>>, ConfigError> {
    let Some(v) = raw.get(key) else { return Ok(None) };
    v.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| invalid(key, constraint, v)))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    Circulant,
    Kle,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    pub sampler: SamplerKind,
    pub spec: CovarianceSpec,
    /// Retained KLE modes.
    pub modes: usize,
    /// Nyström grid per side; `None` picks a default from the covariance.
    pub grid: Option<usize>,
    /// Coefficient of the constant sampler.
    pub value: f64,
}

impl FieldConfig {
    /// Builds the sampler model; the KLE eigen-solve happens here.
    pub fn model(&self) -> darcy_uq::Result<FieldModel> {
        Ok(match self.sampler {
            SamplerKind::Circulant => FieldModel::Circulant(self.spec),
            SamplerKind::Constant => FieldModel::Constant(self.value),
            SamplerKind::Kle => {
                let grid = self.grid.unwrap_or_else(|| default_grid(&self.spec));
                FieldModel::Kle(Arc::new(kle_build(&self.spec, self.modes, grid)?))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshConfig {
    /// Mesh for single-sample commands and standard MC.
    pub n: usize,
    /// Coarsest mesh of hierarchies.
    pub n0: usize,
    /// Number of refinements of the convergence harness.
    pub levels: usize,
    pub n_ref: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmcSettings {
    pub eps: f64,
    pub pilot: u64,
    pub max_level: usize,
    pub fixed_levels: Option<usize>,
    /// Sample count of the `mc` command.
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarnessSettings {
    pub samples: u64,
    pub bootstrap: usize,
    pub exclude_coarsest: Option<bool>,
    pub qois: Vec<QoiKind>,
    pub finest_levels: Vec<usize>,
    pub mc_seed: Option<u64>,
    pub timings: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Sample index of single-sample commands.
    pub sample: u64,
    pub output: PathBuf,
    /// `None` uses every available core.
    pub workers: Option<usize>,
    pub field: FieldConfig,
    pub mesh: MeshConfig,
    pub qoi: QoiKind,
    pub mlmc: MlmcSettings,
    pub harness: HarnessSettings,
}

fn parse_qoi(raw: &RawConfig) -> Result<QoiKind, ConfigError> {
    let kind = raw.get("qoi.kind").unwrap_or("k_eff");
    let qoi =
        QoiKind::from_str(kind).map_err(|_| invalid("qoi.kind", "a known quantity of interest or travel_time(x,y)", kind))?;
    match (qoi, raw.get("qoi.x0")) {
        (QoiKind::TravelTime { .. }, Some(x0)) => {
            let parsed = QoiKind::from_str(&format!("travel_time({x0})"))
                .map_err(|_| invalid("qoi.x0", "a point 'x,y' in [0,1]^2", x0))?;
            Ok(parsed)
        }
        (_, Some(_)) => Err(ConfigError::Inconsistent("qoi.x0 is only used with qoi.kind = travel_time".into())),
        (q, None) => Ok(q),
    }
}

impl RunConfig {
    /// Validates and fills defaults. `env_output` is the value of
    /// [`OUTPUT_ENV`], if set.
    pub fn from_raw(raw: &RawConfig, env_output: Option<&str>) -> Result<Self, ConfigError> {
        let seed = parse_with(raw, "run.seed", 1u64, "a non-negative integer", |_| true)?;
        let sample = parse_with(raw, "run.sample", 0u64, "a non-negative integer", |_| true)?;
        let output = raw
            .get("run.output")
            .or(env_output)
            .filter(|s| !s.is_empty())
            .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT), PathBuf::from);
        let workers = match raw.get("run.workers") {
            None | Some("auto") => None,
            Some(v) => match v.parse::<usize>() {
                Ok(w) if w >= 1 => Some(w),
                _ => return Err(invalid("run.workers", "'auto' or an integer >= 1", v)),
            },
        };

        let sampler = match raw.get("field.sampler").unwrap_or("circulant") {
            "circulant" => SamplerKind::Circulant,
            "kle" => SamplerKind::Kle,
            "constant" => SamplerKind::Constant,
            other => return Err(invalid("field.sampler", "one of circulant, kle, constant", other)),
        };
        let sigma2 = positive(raw, "field.sigma2", 1.0)?;
        let lambda = positive(raw, "field.lambda", 1.0)?;
        let spec = match raw.get("field.kind").unwrap_or("exponential") {
            "exponential" => {
                if raw.get("field.nu").is_some() {
                    return Err(ConfigError::Inconsistent("field.nu is given but field.kind = exponential".into()));
                }
                CovarianceSpec::exponential(sigma2, lambda)
            }
            "matern" => CovarianceSpec::matern(sigma2, lambda, positive(raw, "field.nu", 2.0)?),
            other => return Err(invalid("field.kind", "one of exponential, matern", other)),
        }
        .map_err(|e| ConfigError::Inconsistent(e.to_string()))?;
        let modes = at_least(raw, "field.modes", 13, 1)?;
        let grid = match raw.get("field.grid") {
            None | Some("auto") => None,
            Some(v) => match v.parse::<usize>() {
                Ok(g) if g >= 1 => Some(g),
                _ => return Err(invalid("field.grid", "'auto' or an integer >= 1", v)),
            },
        };
        if let Some(g) = grid {
            if modes > g * g {
                return Err(ConfigError::Inconsistent(format!("field.modes = {modes} exceeds field.grid^2 = {}", g * g)));
            }
        }
        let value = positive(raw, "field.value", 1.0)?;
        let field = FieldConfig { sampler, spec, modes, grid, value };

        let mesh = MeshConfig {
            n: at_least(raw, "mesh.n", 16, 1)?,
            n0: at_least(raw, "mesh.n0", 4, 1)?,
            levels: parse_with(raw, "mesh.levels", 3usize, "an integer in 0..=10", |l| *l <= 10)?,
            n_ref: at_least(raw, "mesh.n_ref", 64, 2)?,
        };
        let finest = mesh.n0 << mesh.levels;
        if mesh.n_ref <= finest || !mesh.n_ref.is_multiple_of(finest) {
            return Err(ConfigError::Inconsistent(format!(
                "mesh.n_ref = {} must be a strict multiple of the finest test mesh n0 * 2^levels = {finest}",
                mesh.n_ref
            )));
        }

        let qoi = parse_qoi(raw)?;

        let max_level = parse_with(raw, "mlmc.max_level", 4usize, "an integer in 0..=12", |l| *l <= 12)?;
        let fixed_levels = match raw.get("mlmc.levels") {
            None | Some("auto") => None,
            Some(v) => match v.parse::<usize>() {
                Ok(l) if l <= max_level => Some(l),
                _ => return Err(invalid("mlmc.levels", "'auto' or an integer <= mlmc.max_level", v)),
            },
        };
        let mlmc = MlmcSettings {
            eps: positive(raw, "mlmc.eps", 0.01)?,
            pilot: parse_with(raw, "mlmc.pilot", 50u64, "an integer >= 10", |p| *p >= 10)?,
            max_level,
            fixed_levels,
            samples: parse_with(raw, "mlmc.samples", 200u64, "an integer >= 2", |n| *n >= 2)?,
        };

        let exclude_coarsest = match raw.get("harness.exclude_coarsest") {
            None | Some("auto") => None,
            Some("true") => Some(true),
            Some("false") => Some(false),
            Some(v) => return Err(invalid("harness.exclude_coarsest", "one of auto, true, false", v)),
        };
        let qois = list::<QoiKind>(raw, "harness.qois", "a comma-separated list of quantities of interest")?
            .unwrap_or_else(|| vec![QoiKind::KEff]);
        if qois.is_empty() {
            return Err(invalid("harness.qois", "non-empty", ""));
        }
        let finest_levels = list::<usize>(raw, "harness.finest_levels", "a comma-separated list of levels")?
            .unwrap_or_else(|| (0..=max_level).collect());
        if let Some(l) = finest_levels.iter().find(|l| **l > max_level) {
            return Err(ConfigError::Inconsistent(format!("harness.finest_levels contains {l} > mlmc.max_level")));
        }
        let mc_seed = match raw.get("harness.mc_seed") {
            None => None,
            Some(v) => Some(v.parse::<u64>().map_err(|_| invalid("harness.mc_seed", "a non-negative integer", v))?),
        };
        let harness = HarnessSettings {
            samples: parse_with(raw, "harness.samples", 200u64, "an integer >= 2", |n| *n >= 2)?,
            bootstrap: parse_with(raw, "harness.bootstrap", 200usize, "an integer >= 0", |_| true)?,
            exclude_coarsest,
            qois,
            finest_levels,
            mc_seed,
            timings: parse_with(raw, "harness.timings", false, "true or false", |_| true)?,
        };

        Ok(RunConfig { seed, sample, output, workers, field, mesh, qoi, mlmc, harness })
    }
}

//! `key = value` run configuration.
//!
//! One file drives every CLI stage. Blank lines and `#` comments are ignored;
//! unknown or repeated keys, missing required keys and out-of-range values are
//! rejected with the offending line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::closure::SelectionScheme;
use crate::error::{Result, RomError};
use crate::fom::{FomConfig, InitialCondition};
use crate::grid::Grid1D;
use crate::harness::ExperimentPlan;
use crate::io::read_text;
use crate::par::Parallelism;
use crate::rom::ModelKind;

const REQUIRED: &[&str] = &[
    "n_points",
    "length",
    "viscosity",
    "dt",
    "t_end",
    "initial_condition",
    "snapshot_start",
    "snapshot_stop",
    "output_dir",
];

const OPTIONAL: &[&str] = &[
    "ic_amplitude",
    "ic_wavenumber",
    "ic_offset",
    "snapshot_stride",
    "r_max",
    "r_values",
    "m_offsets",
    "tol_grid",
    "epsilon_grid",
    "schemes",
    "horizon_multiplier",
    "stability_multiplier",
    "threads",
    "parallel",
    "seed",
    "r",
    "m",
    "tol",
    "epsilon",
    "selection",
    "model",
    "simulate_multiplier",
];

/// Parameters of the single-configuration `train` / `simulate` stages.
#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub r: usize,
    pub m: usize,
    pub tol: f64,
    pub epsilon: f64,
    pub selection: SelectionScheme,
    pub model: ModelKind,
    pub simulate_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plan: ExperimentPlan,
    pub stage: StageConfig,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn fom(&self) -> &FomConfig {
        &self.plan.fom
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| RomError::Format {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let key = key.trim();
            if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if let Some((first, _)) = entries.get(key) {
                return Err(err(format!("key `{key}` repeated (first set on line {first})")));
            }
            entries.insert(key.to_string(), (line_no, value.trim().to_string()));
        }
        let missing: Vec<&str> = REQUIRED
            .iter()
            .copied()
            .filter(|k| !entries.contains_key(*k))
            .collect();
        if !missing.is_empty() {
            return Err(RomError::Format {
                path: path.to_path_buf(),
                line: 0,
                message: format!("missing required keys: {}", missing.join(", ")),
            });
        }
        Values { path, entries }.build()
    }
}

struct Values<'a> {
    path: &'a Path,
    entries: BTreeMap<String, (usize, String)>,
}

impl Values<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> RomError {
        RomError::Format {
            path: self.path.to_path_buf(),
            line: self.entries.get(key).map_or(0, |e| e.0),
            message: format!("{key}: {}", message.into()),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.1.as_str())
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| self.err(key, format!("cannot parse `{v}`"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|item| {
                    let item = item.trim();
                    item.parse()
                        .map_err(|_| self.err(key, format!("cannot parse list item `{item}`")))
                })
                .collect(),
        }
    }

    fn check(&self, key: &str, ok: bool, what: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(self.err(key, what.to_string()))
        }
    }

    fn build(self) -> Result<RunConfig> {
        let defaults = ExperimentPlan::desk_default();

        let n_points: usize = self.get("n_points", 0)?;
        let length: f64 = self.get("length", 0.0)?;
        self.check("n_points", n_points >= 8, "must be at least 8")?;
        self.check("length", length.is_finite() && length > 0.0, "must be positive")?;
        let grid = Grid1D::new(n_points, length).map_err(|e| self.err("n_points", e.to_string()))?;

        let viscosity: f64 = self.get("viscosity", 0.0)?;
        self.check(
            "viscosity",
            viscosity.is_finite() && viscosity > 0.0,
            "must be positive",
        )?;
        let dt: f64 = self.get("dt", 0.0)?;
        self.check("dt", dt.is_finite() && dt > 0.0, "must be positive")?;
        let t_end: f64 = self.get("t_end", 0.0)?;
        self.check("t_end", t_end.is_finite() && t_end > 0.0, "must be positive")?;

        let initial_condition = match self.raw("initial_condition").unwrap_or("") {
            "zero" => InitialCondition::Zero,
            "sine" => InitialCondition::Sine {
                amplitude: self.get("ic_amplitude", 1.0)?,
                wavenumber: self.get("ic_wavenumber", 1)?,
                offset: self.get("ic_offset", 0.0)?,
            },
            other => {
                return Err(self.err(
                    "initial_condition",
                    format!("expected `sine` or `zero`, found `{other}`"),
                ))
            }
        };
        let start: f64 = self.get("snapshot_start", 0.0)?;
        let stop: f64 = self.get("snapshot_stop", 0.0)?;
        let stride: usize = self.get("snapshot_stride", 1)?;
        self.check("snapshot_stride", stride >= 1, "must be at least 1")?;
        let fom = FomConfig {
            grid,
            viscosity,
            dt,
            t_end,
            initial_condition,
            snapshot_window: (start, stop),
            snapshot_stride: stride,
        };
        fom.validate()
            .map_err(|e| self.err("snapshot_start", e.to_string()))?;

        let parallel: bool = self.get("parallel", true)?;
        let plan = ExperimentPlan {
            fom,
            r_max: self.get("r_max", defaults.r_max)?,
            r_values: self.list("r_values", defaults.r_values.clone())?,
            m_offsets: self.list("m_offsets", defaults.m_offsets.clone())?,
            tol_grid: self.list("tol_grid", defaults.tol_grid.clone())?,
            epsilon_grid: self.list("epsilon_grid", defaults.epsilon_grid.clone())?,
            schemes: self.list("schemes", defaults.schemes.clone())?,
            horizon_multiplier: self.get("horizon_multiplier", defaults.horizon_multiplier)?,
            stability_multiplier: self.get("stability_multiplier", defaults.stability_multiplier)?,
            threads: self.get("threads", defaults.threads)?,
            seed: self.get("seed", defaults.seed)?,
            parallelism: if parallel {
                Parallelism::Parallel
            } else {
                Parallelism::Sequential
            },
        };
        plan.validate().map_err(|e| self.err("r_max", e.to_string()))?;

        let r: usize = self.get("r", 4)?;
        let m: usize = self.get("m", r + 3)?;
        let tol: f64 = self.get("tol", 1e-1)?;
        let epsilon: f64 = self.get("epsilon", 3e-2)?;
        let model_raw = self.raw("model").unwrap_or("cddf");
        let model = ModelKind::parse(model_raw)
            .ok_or_else(|| self.err("model", format!("unknown model kind `{model_raw}`")))?;
        let stage = StageConfig {
            r,
            m,
            tol,
            epsilon,
            selection: self.get("selection", SelectionScheme::Full)?,
            model,
            simulate_multiplier: self.get("simulate_multiplier", 1.0)?,
        };
        self.check("r", r >= 1 && r <= plan.r_max, "must lie in 1..=r_max")?;
        self.check("m", m >= r && m <= plan.r_max, "must lie in r..=r_max")?;
        self.check("tol", (0.0..1.0).contains(&tol), "must lie in [0, 1)")?;
        self.check("epsilon", epsilon.is_finite() && epsilon >= 0.0, "must be >= 0")?;
        self.check(
            "simulate_multiplier",
            stage.simulate_multiplier.is_finite() && stage.simulate_multiplier > 0.0,
            "must be positive",
        )?;

        let output_dir = PathBuf::from(self.raw("output_dir").unwrap_or(""));
        self.check(
            "output_dir",
            !output_dir.as_os_str().is_empty(),
            "must not be empty",
        )?;
        Ok(RunConfig {
            plan,
            stage,
            output_dir,
        })
    }
}

/// Configuration text equivalent to the built-in desk defaults.
pub fn default_config_text(output_dir: &str) -> String {
    format!(
        "\
# full-order model
n_points = 256
length = 1.0
viscosity = 1e-3
dt = 0.002
t_end = 4.0
initial_condition = sine
ic_amplitude = 0.25
ic_wavenumber = 1
ic_offset = 1.0
snapshot_start = 1.0
snapshot_stop = 2.0
snapshot_stride = 1

# sweep
r_max = 20
r_values = 2, 4, 6
m_offsets = 1, 3
tol_grid = 1e-1, 3e-2, 1.2e-2, 7e-3, 3e-3, 1e-3, 1e-4
epsilon_grid = 0, 7.1e-10, 1e-4, 1e-3, 8.5e-3, 3e-2, 1e-1, 3e-1
schemes = full, equally_spaced:10, first_fraction:0.5
horizon_multiplier = 3
stability_multiplier = 10
seed = 20231015

# single-configuration stages
r = 4
m = 7
tol = 1e-1
epsilon = 3e-2
selection = full
model = cddf
simulate_multiplier = 3

output_dir = {output_dir}
"
    )
}

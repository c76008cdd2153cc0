//! Experiment orchestration: grid sweeps over `(r, m, tol, epsilon,
//! selection)` for the four model kinds, scored against the projected
//! full-order coefficients.
//!
//! The full-order model is run once over the whole scoring horizon; the
//! training window is its leading slice. Every configuration yields one record
//! per model kind. G-ROM and ideal results depend only on `(r, m)` and DDF
//! results not on `epsilon`, so those are computed once and shared between
//! the records that carry them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::closure::{
    build_regression_with, compute_tau_commutator, select_samples, RegressionData, SelectionScheme, TauSeries,
};
use crate::error::{config, Result};
use crate::fom::{run_fom, FomConfig, InitialCondition, SnapshotSet};
use crate::galerkin::{assemble_galerkin_with, QuadraticModel};
use crate::linalg::Tsvd;
use crate::par::{map_range, with_pool, Parallelism};
use crate::pod::{build_pod_with, project_series_with, CoefficientSeries, PodBasis};
use crate::regression::{
    constraint_report, solve_unconstrained_with, ClosureOperators, ConstrainedProblem, TruncatedProblem,
};
use crate::rom::{compare_until, integrate, IdealTauTable, ModelKind, RomTrajectory, TimeSpan};

/// Number of random unit vectors used for the energy-inequality checks.
pub const CONSTRAINT_PROBES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    /// The snapshot window of `fom` is the training window.
    pub fom: FomConfig,
    pub r_max: usize,
    pub r_values: Vec<usize>,
    /// `m = r + offset`.
    pub m_offsets: Vec<usize>,
    pub tol_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub schemes: Vec<SelectionScheme>,
    /// Scoring horizon as a multiple of the training window.
    pub horizon_multiplier: f64,
    /// Winners of the trained kinds are re-integrated this far (0 = skip).
    pub stability_multiplier: f64,
    /// Worker threads for the sweep (0 = one per core).
    pub threads: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl ExperimentPlan {
    pub fn desk_default() -> Self {
        Self {
            fom: FomConfig::desk_default(),
            r_max: 20,
            r_values: vec![2, 4, 6],
            m_offsets: vec![1, 3],
            tol_grid: vec![1e-1, 3e-2, 1.2e-2, 7e-3, 3e-3, 1e-3, 1e-4],
            epsilon_grid: vec![0.0, 7.1e-10, 1e-4, 1e-3, 8.5e-3, 3e-2, 1e-1, 3e-1],
            schemes: vec![
                SelectionScheme::Full,
                SelectionScheme::EquallySpaced(10),
                SelectionScheme::FirstFraction(0.5),
            ],
            horizon_multiplier: 3.0,
            stability_multiplier: 10.0,
            threads: 0,
            seed: 20_231_015,
            parallelism: Parallelism::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fom.validate()?;
        let grids = [
            ("r_values", self.r_values.is_empty()),
            ("m_offsets", self.m_offsets.is_empty()),
            ("tol_grid", self.tol_grid.is_empty()),
            ("epsilon_grid", self.epsilon_grid.is_empty()),
            ("schemes", self.schemes.is_empty()),
        ];
        if let Some((name, _)) = grids.iter().find(|g| g.1) {
            return Err(config(format!("{name} must not be empty")));
        }
        if self.r_max == 0 {
            return Err(config("r_max must be positive"));
        }
        for &r in &self.r_values {
            for &off in &self.m_offsets {
                if r == 0 || r + off > self.r_max {
                    return Err(config(format!(
                        "r = {r} with m offset {off} exceeds r_max = {}",
                        self.r_max
                    )));
                }
            }
        }
        if let Some(t) = self.tol_grid.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return Err(config(format!("tol {t} outside [0, 1)")));
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(config(format!("epsilon {e} must be finite and >= 0")));
        }
        if !(self.horizon_multiplier.is_finite() && self.horizon_multiplier >= 1.0) {
            return Err(config(format!(
                "horizon_multiplier must be >= 1, got {}",
                self.horizon_multiplier
            )));
        }
        if !(self.stability_multiplier.is_finite() && self.stability_multiplier >= 0.0) {
            return Err(config("stability_multiplier must be >= 0"));
        }
        for s in &self.schemes {
            let m = self.training_samples();
            select_samples(m, *s)?;
        }
        Ok(())
    }

    /// Number of snapshots in the training window.
    pub fn training_samples(&self) -> usize {
        let (t0, t1) = self.fom.snapshot_window;
        ((t1 - t0) / self.fom.dt_snap()).round() as usize + 1
    }

    pub fn configurations(&self, schemes: &[SelectionScheme]) -> Vec<Configuration> {
        let mut out = Vec::new();
        for &r in &self.r_values {
            for &off in &self.m_offsets {
                for &scheme in schemes {
                    for &tol in &self.tol_grid {
                        for &epsilon in &self.epsilon_grid {
                            out.push(Configuration {
                                r,
                                m: r + off,
                                tol,
                                epsilon,
                                scheme,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Configuration {
    pub r: usize,
    pub m: usize,
    pub tol: f64,
    pub epsilon: f64,
    pub scheme: SelectionScheme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub config: Configuration,
    pub kind: ModelKind,
    /// Training objective; NaN for kinds without a fit.
    pub residual: f64,
    pub kept_rank: usize,
    /// Relative L2 energy error over the scoring horizon.
    pub energy_error: f64,
    /// Same, restricted to the training window.
    pub train_energy_error: f64,
    pub coeff_error: f64,
    pub max_energy_error: f64,
    pub blowup: Option<usize>,
    /// Largest constraint violation (CDDF only, NaN otherwise).
    pub constraint_violation: f64,
    pub error: Option<String>,
    pub wall_time: f64,
}

impl Record {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &Record) -> bool {
        let bits = |a: f64, b: f64| a.to_bits() == b.to_bits();
        self.config == other.config
            && self.kind == other.kind
            && bits(self.residual, other.residual)
            && self.kept_rank == other.kept_rank
            && bits(self.energy_error, other.energy_error)
            && bits(self.train_energy_error, other.train_energy_error)
            && bits(self.coeff_error, other.coeff_error)
            && bits(self.max_energy_error, other.max_energy_error)
            && self.blowup == other.blowup
            && bits(self.constraint_violation, other.constraint_violation)
            && self.error == other.error
    }
}

/// Long-horizon re-run of a winning configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCheck {
    pub config: Configuration,
    pub kind: ModelKind,
    pub multiplier: f64,
    pub steps: usize,
    pub blowup: Option<usize>,
    pub final_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub mode: &'static str,
    pub seed: u64,
    pub records: Vec<Record>,
    pub stability: Vec<StabilityCheck>,
    pub wall_time: f64,
}

pub const CSV_HEADER: &str = "r,m,tol,epsilon,scheme,model_kind,training_residual,kept_rank,\
energy_error,train_energy_error,coeff_error,max_energy_error,blowup,constraint_violation,wall_time,error";

impl ExperimentReport {
    /// Winner for `(r, scheme, kind)`: smallest energy error, then smaller
    /// kept rank, then smaller epsilon. Failed records never win.
    pub fn winner(&self, r: usize, scheme: SelectionScheme, kind: ModelKind) -> Option<&Record> {
        self.records
            .iter()
            .filter(|x| x.config.r == r && x.config.scheme == scheme && x.kind == kind)
            .filter(|x| x.error.is_none() && x.energy_error.is_finite())
            .min_by(|a, b| {
                a.energy_error
                    .total_cmp(&b.energy_error)
                    .then(a.kept_rank.cmp(&b.kept_rank))
                    .then(a.config.epsilon.total_cmp(&b.config.epsilon))
            })
    }

    /// All winners keyed by `(r, scheme text, kind)`.
    pub fn winners(&self) -> Vec<&Record> {
        let mut keys: BTreeMap<(usize, String, ModelKind), SelectionScheme> = BTreeMap::new();
        for x in &self.records {
            keys.insert((x.config.r, x.config.scheme.to_string(), x.kind), x.config.scheme);
        }
        keys.iter()
            .filter_map(|((r, _, kind), scheme)| self.winner(*r, *scheme, *kind))
            .collect()
    }

    /// Record with exactly this configuration and kind.
    pub fn find(&self, config: &Configuration, kind: ModelKind) -> Option<&Record> {
        self.records
            .iter()
            .find(|x| x.kind == kind && x.config == *config)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for x in &self.records {
            let c = &x.config;
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{},{},{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e},{},{:.3e},{:.6},{}",
                c.r,
                c.m,
                c.tol,
                c.epsilon,
                c.scheme,
                x.kind,
                x.residual,
                x.kept_rank,
                x.energy_error,
                x.train_energy_error,
                x.coeff_error,
                x.max_energy_error,
                x.blowup.map_or(-1, |s| s as i64),
                x.constraint_violation,
                x.wall_time,
                x.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let failed = self.records.iter().filter(|x| x.error.is_some()).count();
        let _ = writeln!(out, "mode: {}", self.mode);
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "records: {} ({failed} failed)", self.records.len());
        let _ = writeln!(out, "wall time: {:.2} s", self.wall_time);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:>3} {:>4} {:<20} {:<6} {:>9} {:>9} {:>12} {:>12} {:>12} {:>6}",
            "r", "m", "scheme", "kind", "tol", "epsilon", "energy_err", "train_err", "coeff_err", "blowup"
        );
        for x in self.winners() {
            let _ = writeln!(
                out,
                "{:>3} {:>4} {:<20} {:<6} {:>9.2e} {:>9.2e} {:>12.4e} {:>12.4e} {:>12.4e} {:>6}",
                x.config.r,
                x.config.m,
                x.config.scheme.to_string(),
                x.kind.as_str(),
                x.config.tol,
                x.config.epsilon,
                x.energy_error,
                x.train_energy_error,
                x.coeff_error,
                x.blowup.map_or("-".to_string(), |s| s.to_string()),
            );
        }
        if !self.stability.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "long-horizon re-runs of winners:");
            for s in &self.stability {
                let _ = writeln!(
                    out,
                    "  r={} m={} {} {}: {}x window, {} steps, {}",
                    s.config.r,
                    s.config.m,
                    s.config.scheme,
                    s.kind,
                    s.multiplier,
                    s.steps,
                    match s.blowup {
                        Some(k) => format!("blow-up at step {k}"),
                        None => format!("stable, final energy {:.4e}", s.final_energy),
                    }
                );
            }
        }
        out
    }
}

/// FOM data, basis and time grid shared by every configuration of a sweep.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub training: SnapshotSet,
    /// Snapshots from the training start to the end of the scoring horizon.
    pub horizon: SnapshotSet,
    pub basis: PodBasis,
    pub viscosity: f64,
    pub dt: f64,
    pub parallelism: Parallelism,
}

impl PreparedRun {
    /// Runs the FOM over `horizon_multiplier` training windows and builds the
    /// POD basis from the training window.
    pub fn prepare(fom: &FomConfig, r_max: usize, horizon_multiplier: f64, par: Parallelism) -> Result<Self> {
        fom.validate()?;
        let (t0, t1) = fom.snapshot_window;
        let dt_snap = fom.dt_snap();
        let train_intervals = ((t1 - t0) / dt_snap).round() as usize;
        let horizon_intervals = (train_intervals as f64 * horizon_multiplier).ceil() as usize;
        let mut long = fom.clone();
        let t_stop = t0 + horizon_intervals as f64 * dt_snap;
        long.snapshot_window = (t0, t_stop);
        long.t_end = long.t_end.max(t_stop);
        info!(
            "running FOM: N = {}, nu = {}, window [{t0}, {t_stop}]",
            fom.grid.n_points(),
            fom.viscosity
        );
        let horizon = run_fom(&long)?;
        let training = horizon.slice(0, train_intervals + 1)?;
        Self::from_snapshots(training, horizon, r_max, fom.viscosity, par)
    }

    pub fn from_snapshots(
        training: SnapshotSet,
        horizon: SnapshotSet,
        r_max: usize,
        viscosity: f64,
        par: Parallelism,
    ) -> Result<Self> {
        let basis = build_pod_with(&training, r_max, par)?;
        let dt = training.dt_snap;
        Ok(Self {
            training,
            horizon,
            basis,
            viscosity,
            dt,
            parallelism: par,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.training.t0()
    }

    pub fn training_length(&self) -> f64 {
        self.training.times[self.training.len() - 1] - self.training.t0()
    }

    pub fn t_train_end(&self) -> f64 {
        self.t_start() + self.training_length()
    }

    pub fn t_horizon_end(&self) -> f64 {
        *self.horizon.times.last().expect("non-empty horizon")
    }

    /// Integration span of `multiplier` training windows.
    pub fn span(&self, multiplier: f64) -> TimeSpan {
        let steps = (self.training_length() * multiplier / self.dt).round();
        TimeSpan {
            t_start: self.t_start(),
            t_end: self.t_start() + steps * self.dt,
            dt: self.dt,
        }
    }

    pub fn model(&self, r: usize) -> Result<QuadraticModel> {
        assemble_galerkin_with(&self.basis, r, self.viscosity, self.parallelism)
    }

    pub fn training_series(&self, r: usize) -> Result<CoefficientSeries> {
        project_series_with(&self.basis, &self.training, r, self.parallelism)
    }

    /// Projected FOM coefficients over the whole horizon.
    pub fn reference(&self, r: usize) -> Result<CoefficientSeries> {
        project_series_with(&self.basis, &self.horizon, r, self.parallelism)
    }

    pub fn tau(&self, r: usize, m: usize) -> Result<TauSeries> {
        let model_m = self.model(m)?;
        let model_r = model_m.leading(r)?;
        let series_m = self.training_series(m)?;
        let series_r = series_m.truncated(r)?;
        compute_tau_commutator(&series_m, &series_r, &model_m, &model_r)
    }
}

/// Componentwise constraint violations and the two energy inequalities on
/// `CONSTRAINT_PROBES` seeded random unit vectors. Returns the largest
/// violation (0 when everything holds exactly).
pub fn constraint_violation(ops: &ClosureOperators, seed: u64) -> f64 {
    let rep = constraint_report(&ops.a_tilde, &ops.b_tilde, ops.epsilon);
    let mut worst = [
        rep.diagonal_excess.max(0.0),
        rep.skew,
        rep.b_diagonal,
        rep.b_pair,
        rep.b_triple,
        rep.b_symmetry,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    for a in random_unit_vectors(ops.r(), CONSTRAINT_PROBES, seed) {
        let av = DVector::from_column_slice(&a);
        let quad_a = av.dot(&(&ops.a_tilde * &av));
        worst = worst.max(quad_a + ops.epsilon);
        let cubic = av.dot(&DVector::from_vec(ops.b_tilde.contract(&a)));
        worst = worst.max(cubic.abs());
    }
    worst
}

/// `count` unit vectors in `R^r`, deterministic in `seed`.
pub fn random_unit_vectors(r: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-3 {
                break v.iter().map(|x| x / n).collect();
            }
        })
        .collect()
}

/// Scores for one trajectory.
#[derive(Debug, Clone, Copy)]
struct Score {
    energy: f64,
    train_energy: f64,
    coeff: f64,
    max_energy: f64,
    blowup: Option<usize>,
}

/// Everything needed for one `(r, m)` level.
struct Level {
    r: usize,
    m: usize,
    model: QuadraticModel,
    series: CoefficientSeries,
    tau: TauSeries,
    reference: CoefficientSeries,
}

/// Outcome of one fitted or fixed model, shared between records.
#[derive(Debug, Clone)]
struct Outcome {
    residual: f64,
    kept_rank: usize,
    score: Option<Score>,
    constraint_violation: f64,
    error: Option<String>,
    wall_time: f64,
}

impl Outcome {
    fn failed(err: String, wall_time: f64) -> Self {
        Self {
            residual: f64::NAN,
            kept_rank: 0,
            score: None,
            constraint_violation: f64::NAN,
            error: Some(err),
            wall_time,
        }
    }

    fn record(&self, config: Configuration, kind: ModelKind) -> Record {
        let s = self.score;
        let pick = |f: fn(&Score) -> f64| s.as_ref().map_or(f64::NAN, f);
        Record {
            config,
            kind,
            residual: self.residual,
            kept_rank: self.kept_rank,
            energy_error: pick(|s| s.energy),
            train_energy_error: pick(|s| s.train_energy),
            coeff_error: pick(|s| s.coeff),
            max_energy_error: pick(|s| s.max_energy),
            blowup: s.and_then(|s| s.blowup),
            constraint_violation: self.constraint_violation,
            error: self.error.clone(),
            wall_time: self.wall_time,
        }
    }
}

fn score(run: &PreparedRun, traj: &RomTrajectory, reference: &CoefficientSeries) -> Result<Score> {
    let full = compare_until(traj, reference, Some(run.t_horizon_end()))?;
    let train = compare_until(traj, reference, Some(run.t_train_end()))?;
    Ok(Score {
        energy: full.energy_error,
        train_energy: train.energy_error,
        coeff: full.coeff_error,
        max_energy: full.max_energy_error,
        blowup: traj.blowup,
    })
}

fn simulate(
    run: &PreparedRun,
    level: &Level,
    closure: Option<&ClosureOperators>,
    ideal: Option<&IdealTauTable>,
    multiplier: f64,
) -> Result<RomTrajectory> {
    let a0 = level.series.column(0);
    integrate(&level.model, closure, ideal, &a0, None, run.span(multiplier))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn fixed_outcome(run: &PreparedRun, level: &Level, ideal: bool, horizon: f64) -> Outcome {
    let (res, secs) = timed(|| -> Result<Score> {
        let table = if ideal {
            Some(IdealTauTable::from_tau(&level.tau)?)
        } else {
            None
        };
        let traj = simulate(run, level, None, table.as_ref(), horizon)?;
        score(run, &traj, &level.reference)
    });
    match res {
        Ok(s) => Outcome {
            residual: f64::NAN,
            kept_rank: 0,
            score: Some(s),
            constraint_violation: f64::NAN,
            error: None,
            wall_time: secs,
        },
        Err(e) => Outcome::failed(e.to_string(), secs),
    }
}

fn fitted_outcome(
    run: &PreparedRun,
    level: &Level,
    fit: Result<ClosureOperators>,
    fit_secs: f64,
    horizon: f64,
    seed: u64,
) -> Outcome {
    let ops = match fit {
        Ok(ops) => ops,
        Err(e) => return Outcome::failed(e.to_string(), fit_secs),
    };
    let (res, secs) = timed(|| {
        simulate(run, level, Some(&ops), None, horizon).and_then(|t| score(run, &t, &level.reference))
    });
    let violation = if ops.constrained {
        constraint_violation(&ops, seed)
    } else {
        f64::NAN
    };
    match res {
        Ok(s) => Outcome {
            residual: ops.residual,
            kept_rank: ops.kept_rank,
            score: Some(s),
            constraint_violation: violation,
            error: None,
            wall_time: fit_secs + secs,
        },
        Err(e) => Outcome::failed(e.to_string(), fit_secs + secs),
    }
}

/// Regression data and its factorizations for one `(r, m, scheme)`.
struct Fit {
    data: RegressionData,
    tsvd: Tsvd,
    constrained: Result<ConstrainedProblem>,
}

fn sweep(plan: &ExperimentPlan, schemes: &[SelectionScheme], mode: &'static str) -> Result<ExperimentReport> {
    plan.validate()?;
    let start = Instant::now();
    let par = plan.parallelism;
    let run = PreparedRun::prepare(&plan.fom, plan.r_max, plan.horizon_multiplier, par)?;
    let horizon = plan.horizon_multiplier;
    let seed = plan.seed;

    with_pool(plan.threads, || -> Result<ExperimentReport> {
        let mut levels: Vec<std::result::Result<Level, String>> = Vec::new();
        for &r in &plan.r_values {
            for &off in &plan.m_offsets {
                let m = r + off;
                let level = (|| -> Result<Level> {
                    let model_m = run.model(m)?;
                    let series_m = run.training_series(m)?;
                    let series = series_m.truncated(r)?;
                    let model = model_m.leading(r)?;
                    let tau = compute_tau_commutator(&series_m, &series, &model_m, &model)?;
                    Ok(Level {
                        r,
                        m,
                        model,
                        series,
                        tau,
                        reference: run.reference(r)?,
                    })
                })();
                levels.push(level.map_err(|e| e.to_string()));
            }
        }
        let n_off = plan.m_offsets.len();

        // G-ROM and ideal per level.
        let fixed: Vec<(Outcome, Outcome)> = map_range(par, levels.len(), |k| match &levels[k] {
            Ok(level) => (
                fixed_outcome(&run, level, false, horizon),
                fixed_outcome(&run, level, true, horizon),
            ),
            Err(e) => (Outcome::failed(e.clone(), 0.0), Outcome::failed(e.clone(), 0.0)),
        });

        // Regression systems per (level, scheme).
        let n_s = schemes.len();
        let fits: Vec<std::result::Result<Fit, String>> = map_range(par, levels.len() * n_s, |k| {
            let level = levels[k / n_s].as_ref().map_err(|e| e.clone())?;
            (|| -> Result<Fit> {
                let sel = select_samples(level.tau.len(), schemes[k % n_s])?;
                let data = build_regression_with(&level.series, &level.tau, &sel, Parallelism::Sequential)?;
                let tsvd = Tsvd::new(&data.design)?;
                let constrained = ConstrainedProblem::new(&data);
                Ok(Fit {
                    data,
                    tsvd,
                    constrained,
                })
            })()
            .map_err(|e| e.to_string())
        });

        // DDF per (level, scheme, tol).
        let n_t = plan.tol_grid.len();
        let ddf: Vec<Outcome> = map_range(par, fits.len() * n_t, |k| {
            let (f, t) = (k / n_t, k % n_t);
            let level = match &levels[f / n_s] {
                Ok(l) => l,
                Err(e) => return Outcome::failed(e.clone(), 0.0),
            };
            match &fits[f] {
                Ok(fit) => {
                    let (ops, secs) = timed(|| {
                        solve_unconstrained_with(&fit.data, &fit.tsvd, plan.tol_grid[t]).map(|x| x.0)
                    });
                    fitted_outcome(&run, level, ops, secs, horizon, seed)
                }
                Err(e) => Outcome::failed(e.clone(), 0.0),
            }
        });

        // CDDF: bounded block deflated once per (level, scheme, tol), then
        // solved per epsilon.
        let truncated: Vec<(std::result::Result<TruncatedProblem<'_>, String>, f64)> =
            map_range(par, fits.len() * n_t, |k| {
                let (f, t) = (k / n_t, k % n_t);
                let (res, secs) = timed(|| match &fits[f] {
                    Ok(fit) => match &fit.constrained {
                        Ok(p) => p.truncate(&fit.data, plan.tol_grid[t]).map_err(|e| e.to_string()),
                        Err(e) => Err(e.to_string()),
                    },
                    Err(e) => Err(e.clone()),
                });
                (res, secs)
            });
        let n_e = plan.epsilon_grid.len();
        let cddf: Vec<Outcome> = map_range(par, fits.len() * n_t * n_e, |k| {
            let (ft, e) = (k / n_e, k % n_e);
            let f = ft / n_t;
            let level = match &levels[f / n_s] {
                Ok(l) => l,
                Err(err) => return Outcome::failed(err.clone(), 0.0),
            };
            let (fit, (trunc, trunc_secs)) = match (&fits[f], &truncated[ft]) {
                (Ok(fit), t) => (fit, t),
                (Err(err), _) => return Outcome::failed(err.clone(), 0.0),
            };
            let (ops, secs) = timed(|| match trunc {
                Ok(p) => p.solve(&fit.data, plan.epsilon_grid[e]).map(|s| s.operators),
                Err(err) => Err(crate::RomError::Solver(err.clone())),
            });
            fitted_outcome(&run, level, ops, secs + trunc_secs / n_e as f64, horizon, seed)
        });

        let mut records = Vec::new();
        for (ri, &r) in plan.r_values.iter().enumerate() {
            for (oi, &off) in plan.m_offsets.iter().enumerate() {
                let lvl = ri * n_off + oi;
                for (si, &scheme) in schemes.iter().enumerate() {
                    let f = lvl * n_s + si;
                    for (ti, &tol) in plan.tol_grid.iter().enumerate() {
                        for (ei, &epsilon) in plan.epsilon_grid.iter().enumerate() {
                            let config = Configuration {
                                r,
                                m: r + off,
                                tol,
                                epsilon,
                                scheme,
                            };
                            records.push(fixed[lvl].0.record(config, ModelKind::Grom));
                            records.push(ddf[f * n_t + ti].record(config, ModelKind::Ddf));
                            records.push(cddf[(f * n_t + ti) * n_e + ei].record(config, ModelKind::Cddf));
                            records.push(fixed[lvl].1.record(config, ModelKind::Ideal));
                        }
                    }
                }
            }
        }

        let mut report = ExperimentReport {
            mode,
            seed,
            records,
            stability: Vec::new(),
            wall_time: 0.0,
        };
        if plan.stability_multiplier > 0.0 {
            report.stability = stability_checks(&run, plan, &report, schemes, |r, m| {
                levels.iter().flatten().find(|l| l.r == r && l.m == m)
            });
        }
        report.wall_time = start.elapsed().as_secs_f64();
        info!(
            "{mode} sweep: {} records in {:.2} s",
            report.records.len(),
            report.wall_time
        );
        Ok(report)
    })
}

fn stability_checks<'a>(
    run: &PreparedRun,
    plan: &ExperimentPlan,
    report: &ExperimentReport,
    schemes: &[SelectionScheme],
    level: impl Fn(usize, usize) -> Option<&'a Level>,
) -> Vec<StabilityCheck> {
    let mut out = Vec::new();
    for &r in &plan.r_values {
        for &scheme in schemes {
            for kind in [ModelKind::Ddf, ModelKind::Cddf] {
                let Some(w) = report.winner(r, scheme, kind) else {
                    continue;
                };
                let c = w.config;
                let Some(lvl) = level(c.r, c.m) else { continue };
                let traj = (|| -> Result<RomTrajectory> {
                    let ops = train_closure(lvl, c, kind)?;
                    simulate(run, lvl, Some(&ops), None, plan.stability_multiplier)
                })();
                match traj {
                    Ok(t) => out.push(StabilityCheck {
                        config: c,
                        kind,
                        multiplier: plan.stability_multiplier,
                        steps: t.len() - 1,
                        blowup: t.blowup,
                        final_energy: *t.energy.last().unwrap_or(&f64::NAN),
                    }),
                    Err(e) => debug!("stability re-run failed for {kind} r={r}: {e}"),
                }
            }
        }
    }
    out
}

fn train_closure(level: &Level, c: Configuration, kind: ModelKind) -> Result<ClosureOperators> {
    let sel = select_samples(level.tau.len(), c.scheme)?;
    let data = build_regression_with(&level.series, &level.tau, &sel, Parallelism::Sequential)?;
    match kind {
        ModelKind::Cddf => Ok(ConstrainedProblem::new(&data)?
            .solve(&data, c.tol, c.epsilon)?
            .operators),
        _ => Ok(solve_unconstrained_with(&data, &Tsvd::new(&data.design)?, c.tol)?.0),
    }
}

/// Reproductive regime: closures trained on every training snapshot.
pub fn run_reproductive(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    sweep(plan, &[SelectionScheme::Full], "reproductive")
}

/// Predictive regime: closures trained on the plan's sample selections,
/// scored on the full horizon.
pub fn run_predictive(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    if plan.schemes.iter().all(|s| *s == SelectionScheme::Full) {
        return Err(config(
            "predictive run needs at least one scheme other than `full`",
        ));
    }
    sweep(plan, &plan.schemes, "predictive")
}

/// Trains one configuration's closure outside a sweep, e.g. to re-run a
/// winner.
pub fn train_configuration(
    run: &PreparedRun,
    c: Configuration,
    kind: ModelKind,
) -> Result<(
    QuadraticModel,
    CoefficientSeries,
    Option<ClosureOperators>,
    TauSeries,
)> {
    let model_m = run.model(c.m)?;
    let series_m = run.training_series(c.m)?;
    let series = series_m.truncated(c.r)?;
    let model = model_m.leading(c.r)?;
    let tau = compute_tau_commutator(&series_m, &series, &model_m, &model)?;
    let level = Level {
        r: c.r,
        m: c.m,
        model,
        series,
        tau,
        reference: run.reference(c.r)?,
    };
    let ops = match kind {
        ModelKind::Ddf | ModelKind::Cddf => Some(train_closure(&level, c, kind)?),
        _ => None,
    };
    Ok((level.model, level.series, ops, level.tau))
}

/// Small plan for smoke tests: coarse grid, short window.
pub fn smoke_plan() -> ExperimentPlan {
    let mut fom = FomConfig::desk_default();
    fom.grid = crate::grid::Grid1D::new(64, 1.0).expect("valid grid");
    fom.viscosity = 1e-2;
    fom.dt = 0.005;
    fom.snapshot_window = (0.0, 0.5);
    fom.t_end = 0.5;
    fom.initial_condition = InitialCondition::Sine {
        amplitude: 0.25,
        wavenumber: 1,
        offset: 1.0,
    };
    ExperimentPlan {
        fom,
        r_max: 6,
        r_values: vec![2],
        m_offsets: vec![1, 3],
        tol_grid: vec![1e-2, 1e-4],
        epsilon_grid: vec![0.0, 1e-3],
        schemes: vec![SelectionScheme::Full, SelectionScheme::EquallySpaced(4)],
        horizon_multiplier: 1.5,
        stability_multiplier: 0.0,
        threads: 2,
        seed: 7,
        parallelism: Parallelism::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_cardinality_and_determinism() {
        let mut plan = smoke_plan();
        plan.tol_grid = vec![1e-2];
        plan.epsilon_grid = vec![1e-3];
        plan.m_offsets = vec![1];
        plan.horizon_multiplier = 1.0;
        let a = run_reproductive(&plan).unwrap();
        assert_eq!(a.records.len(), 4);
        let kinds: Vec<ModelKind> = a.records.iter().map(|x| x.kind).collect();
        assert_eq!(kinds, ModelKind::ALL.to_vec());
        let b = run_reproductive(&plan).unwrap();
        assert!(a.records.iter().zip(&b.records).all(|(x, y)| x.same_outcome(y)));
    }

    #[test]
    fn invalid_plans_rejected() {
        let mut plan = smoke_plan();
        plan.r_values = vec![5];
        assert!(plan.validate().is_err());
        let mut plan = smoke_plan();
        plan.tol_grid.clear();
        assert!(plan.validate().is_err());
        let mut plan = smoke_plan();
        plan.schemes = vec![SelectionScheme::Full];
        assert!(run_predictive(&plan).is_err());
    }

    #[test]
    fn unit_vectors_are_seeded() {
        let a = random_unit_vectors(4, 10, 3);
        assert_eq!(a, random_unit_vectors(4, 10, 3));
        for v in &a {
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-14);
        }
    }
}

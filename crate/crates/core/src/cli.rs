//! The four pipeline stages behind the `romkit` binary. Each reads the run
//! configuration, consumes the artifacts of earlier stages from the output
//! directory and writes its own.

use std::path::{Path, PathBuf};

use log::info;

use crate::closure::{build_regression, compute_tau_commutator, select_samples, SelectionScheme};
use crate::config::RunConfig;
use crate::error::{config, Result, RomError};
use crate::fom::run_fom;
use crate::galerkin::assemble_galerkin_with;
use crate::harness::{run_predictive, run_reproductive};
use crate::io;
use crate::linalg::Tsvd;
use crate::pod::{build_pod_with, project_series};
use crate::regression::{solve_unconstrained_with, ConstrainedProblem};
use crate::rom::{compare, integrate, IdealTauTable, ModelKind, TimeSpan};

pub const SNAPSHOTS_FILE: &str = "snapshots.txt";
pub const POD_FILE: &str = "pod.txt";
pub const OPERATORS_FILE: &str = "operators.txt";
pub const TAU_FILE: &str = "tau.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_SUMMARY: &str = "summary.txt";

pub fn closure_file(kind: ModelKind) -> String {
    format!("closure_{kind}.txt")
}

pub fn trajectory_file(kind: ModelKind) -> String {
    format!("trajectory_{kind}.txt")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Train,
    Simulate,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Train => "train",
            Stage::Simulate => "simulate",
            Stage::Report => "report",
        }
    }
}

/// What a stage produced, for the final status line.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub files: Vec<PathBuf>,
    /// Extra `key=value` pairs for the status line.
    pub details: Vec<(String, String)>,
}

impl StageOutcome {
    fn new(stage: Stage) -> Self {
        Self {
            stage,
            files: Vec::new(),
            details: Vec::new(),
        }
    }

    fn detail(&mut self, key: &str, value: impl ToString) {
        self.details.push((key.to_string(), value.to_string()));
    }

    pub fn status_line(&self) -> String {
        let mut s = format!(
            "status=ok stage={} files={}",
            self.stage.as_str(),
            self.files.len()
        );
        for (k, v) in &self.details {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }
}

/// Process exit code for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &RomError) -> i32 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

pub fn failure_line(stage: Stage, err: &RomError) -> String {
    let kind = if err.is_numerical() {
        "numerical"
    } else {
        "validation"
    };
    let msg = err.to_string().replace('\n', " ");
    format!(
        "status=error stage={} kind={kind} message=\"{msg}\"",
        stage.as_str()
    )
}

pub fn run_stage(stage: Stage, cfg: &RunConfig) -> Result<StageOutcome> {
    match stage {
        Stage::Generate => generate(cfg),
        Stage::Train => train(cfg),
        Stage::Simulate => simulate(cfg),
        Stage::Report => report(cfg),
    }
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn record(o: &mut StageOutcome, path: PathBuf) {
    info!("wrote {}", path.display());
    o.files.push(path);
}

pub fn generate(cfg: &RunConfig) -> Result<StageOutcome> {
    let snaps = run_fom(cfg.fom())?;
    let mut o = StageOutcome::new(Stage::Generate);
    let path = out(cfg, SNAPSHOTS_FILE);
    io::write_snapshots(&path, &snaps)?;
    o.detail("snapshots", snaps.len());
    record(&mut o, path);
    Ok(o)
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(config(format!(
            "missing upstream file {} (run the earlier stage first)",
            path.display()
        )))
    }
}

pub fn train(cfg: &RunConfig) -> Result<StageOutcome> {
    let st = &cfg.stage;
    let snap_path = out(cfg, SNAPSHOTS_FILE);
    require(&snap_path)?;
    let snaps = io::read_snapshots(&snap_path)?;
    let par = cfg.plan.parallelism;
    let basis = build_pod_with(&snaps, cfg.plan.r_max, par)?;
    let model_m = assemble_galerkin_with(&basis, st.m, cfg.fom().viscosity, par)?;
    let model = model_m.leading(st.r)?;
    let series_m = project_series(&basis, &snaps, st.m)?;
    let series = series_m.truncated(st.r)?;
    let tau = compute_tau_commutator(&series_m, &series, &model_m, &model)?;
    let sel = select_samples(tau.len(), st.selection)?;
    let data = build_regression(&series, &tau, &sel)?;
    let (ddf, _) = solve_unconstrained_with(&data, &Tsvd::new(&data.design)?, st.tol)?;
    let cddf = ConstrainedProblem::new(&data)?.solve(&data, st.tol, st.epsilon)?;

    let mut o = StageOutcome::new(Stage::Train);
    let p = out(cfg, POD_FILE);
    io::write_pod(&p, &basis)?;
    record(&mut o, p);
    let p = out(cfg, OPERATORS_FILE);
    io::write_operators(&p, &model)?;
    record(&mut o, p);
    let p = out(cfg, TAU_FILE);
    io::write_tau(&p, &tau)?;
    record(&mut o, p);
    let p = out(cfg, &closure_file(ModelKind::Ddf));
    io::write_closure(&p, &ddf)?;
    record(&mut o, p);
    let p = out(cfg, &closure_file(ModelKind::Cddf));
    io::write_closure(&p, &cddf.operators)?;
    record(&mut o, p);
    o.detail("r", st.r);
    o.detail("m", st.m);
    o.detail("ddf_residual", format!("{:.6e}", ddf.residual));
    o.detail("cddf_residual", format!("{:.6e}", cddf.operators.residual));
    Ok(o)
}

pub fn simulate(cfg: &RunConfig) -> Result<StageOutcome> {
    let st = &cfg.stage;
    let paths = [SNAPSHOTS_FILE, POD_FILE, OPERATORS_FILE].map(|n| out(cfg, n));
    for p in &paths {
        require(p)?;
    }
    let snaps = io::read_snapshots(&paths[0])?;
    let basis = io::read_pod(&paths[1])?;
    let model = io::read_operators(&paths[2])?;
    let r = model.r();
    let (closure, ideal) = match st.model {
        ModelKind::Ddf | ModelKind::Cddf => {
            let p = out(cfg, &closure_file(st.model));
            require(&p)?;
            (Some(io::read_closure(&p)?), None)
        }
        ModelKind::Ideal => {
            let p = out(cfg, TAU_FILE);
            require(&p)?;
            (None, Some(IdealTauTable::from_tau(&io::read_tau(&p)?)?))
        }
        ModelKind::Grom => (None, None),
    };
    let reference = project_series(&basis, &snaps, r)?;
    let a0 = reference.column(0);
    let len = snaps.times[snaps.len() - 1] - snaps.t0();
    let steps = (len * st.simulate_multiplier / snaps.dt_snap).round();
    let span = TimeSpan {
        t_start: snaps.t0(),
        t_end: snaps.t0() + steps * snaps.dt_snap,
        dt: snaps.dt_snap,
    };
    let traj = integrate(&model, closure.as_ref(), ideal.as_ref(), &a0, None, span)?;
    let cmp = compare(&traj, &reference)?;

    let mut o = StageOutcome::new(Stage::Simulate);
    let p = out(cfg, &trajectory_file(st.model));
    io::write_trajectory(&p, &traj)?;
    record(&mut o, p);
    o.detail("model", st.model);
    o.detail("steps", traj.len() - 1);
    o.detail("train_energy_error", format!("{:.6e}", cmp.energy_error));
    o.detail("train_coeff_error", format!("{:.6e}", cmp.coeff_error));
    // Trajectory is written first so a diverged run can still be inspected.
    traj.into_result()?;
    Ok(o)
}

pub fn report(cfg: &RunConfig) -> Result<StageOutcome> {
    let plan = &cfg.plan;
    let rep = if plan.schemes.iter().any(|s| *s != SelectionScheme::Full) {
        run_predictive(plan)?
    } else {
        run_reproductive(plan)?
    };
    let mut o = StageOutcome::new(Stage::Report);
    let p = out(cfg, REPORT_CSV);
    io::write_atomic(&p, &rep.to_csv())?;
    record(&mut o, p);
    let p = out(cfg, REPORT_SUMMARY);
    io::write_atomic(&p, &rep.summary())?;
    record(&mut o, p);
    o.detail("records", rep.records.len());
    o.detail("failed", rep.records.iter().filter(|x| x.error.is_some()).count());
    o.detail("seed", rep.seed);
    Ok(o)
}

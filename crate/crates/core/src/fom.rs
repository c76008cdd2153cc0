//! Full-order model: 1D periodic viscous Burgers equation
//! `u_t = nu u_xx - u u_x`, central differences in space, linearized BDF2 in
//! time with a backward-Euler first step.
//!
//! The convection term uses the skew-symmetric form `(u Du + D(u^2)) / 3`, so
//! it exchanges no discrete energy; with the frozen extrapolated advecting
//! field each step is a single cyclic tridiagonal solve.

use log::warn;
use nalgebra::DMatrix;

use crate::error::{config, Result, RomError};
use crate::grid::Grid1D;
use crate::linalg::solve_cyclic_tridiagonal;

/// Named initial profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// `offset + amplitude * sin(2 pi k x / L)`
    Sine {
        amplitude: f64,
        wavenumber: u32,
        offset: f64,
    },
}

impl InitialCondition {
    pub fn sample(&self, grid: &Grid1D) -> Vec<f64> {
        match *self {
            InitialCondition::Zero => vec![0.0; grid.n_points()],
            InitialCondition::Sine {
                amplitude,
                wavenumber,
                offset,
            } => {
                let k = 2.0 * std::f64::consts::PI * wavenumber as f64 / grid.length();
                grid.coordinates()
                    .iter()
                    .map(|x| offset + amplitude * (k * x).sin())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FomConfig {
    pub grid: Grid1D,
    pub viscosity: f64,
    pub dt: f64,
    pub t_end: f64,
    pub initial_condition: InitialCondition,
    /// `[t_start, t_stop]`, both on the time-step lattice.
    pub snapshot_window: (f64, f64),
    pub snapshot_stride: usize,
}

/// Relative tolerance used when mapping times onto the step lattice.
const LATTICE_TOL: f64 = 1e-9;

fn steps_for(t: f64, dt: f64, what: &str) -> Result<usize> {
    let n = (t / dt).round();
    if (n * dt - t).abs() > LATTICE_TOL * dt.max(t.abs()) {
        return Err(config(format!(
            "{what} = {t} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

impl FomConfig {
    /// Desk-scale default: N = 256, L = 1, nu = 1e-3, dt = 0.002. The initial
    /// profile `1 + sin(2 pi x) / 4` travels around the domain once per time
    /// unit and steepens into a shock near `t = 0.64`; the snapshot window is
    /// the first full transit period after that, `[1, 2]`.
    pub fn desk_default() -> Self {
        Self {
            grid: Grid1D::new(256, 1.0).expect("valid default grid"),
            viscosity: 1e-3,
            dt: 0.002,
            t_end: 4.0,
            initial_condition: InitialCondition::Sine {
                amplitude: 0.25,
                wavenumber: 1,
                offset: 1.0,
            },
            snapshot_window: (1.0, 2.0),
            snapshot_stride: 1,
        }
    }

    pub fn dt_snap(&self) -> f64 {
        self.dt * self.snapshot_stride as f64
    }

    /// Checks the configuration invariants and returns the step indices
    /// `(n_start, n_stop)` of the snapshot window.
    pub fn validate(&self) -> Result<(usize, usize)> {
        if !(self.viscosity.is_finite() && self.viscosity > 0.0) {
            return Err(config(format!(
                "viscosity must be positive, got {}",
                self.viscosity
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.snapshot_stride == 0 {
            return Err(config("snapshot_stride must be positive"));
        }
        let (t0, t1) = self.snapshot_window;
        if !(t0.is_finite() && t1.is_finite()) || t0 < 0.0 || t0 >= t1 {
            return Err(config(format!("empty snapshot window [{t0}, {t1}]")));
        }
        if t1 > self.t_end * (1.0 + LATTICE_TOL) {
            return Err(config(format!(
                "snapshot window end {t1} exceeds t_end {}",
                self.t_end
            )));
        }
        let n0 = steps_for(t0, self.dt, "snapshot start")?;
        let n1 = steps_for(t1, self.dt, "snapshot stop")?;
        if (n1 - n0) % self.snapshot_stride != 0 {
            return Err(config(format!(
                "snapshot window length {} is not a multiple of the sampling interval {}",
                t1 - t0,
                self.dt_snap()
            )));
        }
        if let InitialCondition::Sine {
            amplitude, offset, ..
        } = self.initial_condition
        {
            if !(amplitude.is_finite() && offset.is_finite()) {
                return Err(config("initial condition parameters must be finite"));
            }
        }
        Ok((n0, n1))
    }
}

/// Velocity snapshots, one column per sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub grid: Grid1D,
    pub times: Vec<f64>,
    /// `N x M`
    pub data: DMatrix<f64>,
    pub dt_snap: f64,
}

impl SnapshotSet {
    pub fn new(grid: Grid1D, t0: f64, dt_snap: f64, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != grid.n_points() {
            return Err(RomError::Dimension(format!(
                "snapshot rows {} != grid points {}",
                data.nrows(),
                grid.n_points()
            )));
        }
        if data.ncols() == 0 {
            return Err(config("snapshot set is empty"));
        }
        if !(dt_snap.is_finite() && dt_snap > 0.0) {
            return Err(config(format!("dt_snap must be positive, got {dt_snap}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(RomError::Solver(
                "snapshot data contains non-finite entries".into(),
            ));
        }
        let times = (0..data.ncols()).map(|j| t0 + j as f64 * dt_snap).collect();
        Ok(Self {
            grid,
            times,
            data,
            dt_snap,
        })
    }

    pub fn n_points(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn snapshot(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }

    /// Columns `first..first + count` as a new set.
    pub fn slice(&self, first: usize, count: usize) -> Result<Self> {
        if count == 0 || first + count > self.len() {
            return Err(config(format!(
                "slice {first}..{} outside 0..{}",
                first + count,
                self.len()
            )));
        }
        let data = self.data.columns(first, count).into_owned();
        Self::new(self.grid.clone(), self.times[first], self.dt_snap, data)
    }
}

/// Discrete kinetic energy `1/2 sum_k w_k u_k^2`.
pub fn kinetic_energy(u: &[f64], grid: &Grid1D) -> Result<f64> {
    grid.check_len(u, "velocity sample")?;
    Ok(0.5 * grid.inner(u, u))
}

/// Right-hand side of the semi-discrete system, `nu D2 u - N(u)`.
pub fn burgers_rhs(grid: &Grid1D, viscosity: f64, u: &[f64]) -> Vec<f64> {
    let lap = grid.laplacian(u);
    let conv = grid.convection(u);
    lap.iter().zip(&conv).map(|(l, c)| viscosity * l - c).collect()
}

/// One linearized implicit step: solves
/// `alpha v - nu D2 v + N_e(v) = rhs` for `v`.
fn implicit_solve(grid: &Grid1D, viscosity: f64, alpha: f64, e: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = grid.n_points();
    let dx = grid.dx();
    let visc = viscosity / (dx * dx);
    let s = 1.0 / (6.0 * dx);
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for k in 0..n {
        let kp = (k + 1) % n;
        let km = (k + n - 1) % n;
        diag[k] = alpha + 2.0 * visc;
        upper[k] = -visc + s * (e[k] + e[kp]);
        lower[k] = -visc - s * (e[k] + e[km]);
    }
    solve_cyclic_tridiagonal(&lower, &diag, &upper, rhs)
}

/// Integrates the full-order model and returns the snapshots in the
/// configured window.
pub fn run_fom(cfg: &FomConfig) -> Result<SnapshotSet> {
    let (n_start, n_stop) = cfg.validate()?;
    let grid = &cfg.grid;
    if cfg.dt > grid.dx() {
        warn!(
            "dt = {} exceeds dx = {}; the implicit scheme stays stable but accuracy may suffer",
            cfg.dt,
            grid.dx()
        );
    }
    let n = grid.n_points();
    let stride = cfg.snapshot_stride;
    let m = (n_stop - n_start) / stride + 1;
    let mut data = DMatrix::<f64>::zeros(n, m);
    let mut store = |step: usize, u: &[f64]| {
        if step >= n_start && step <= n_stop && (step - n_start).is_multiple_of(stride) {
            let j = (step - n_start) / stride;
            data.column_mut(j).copy_from_slice(u);
        }
    };

    let mut prev: Vec<f64> = Vec::new();
    let mut cur = cfg.initial_condition.sample(grid);
    store(0, &cur);
    for step in 1..=n_stop {
        let next = if step == 1 {
            let rhs: Vec<f64> = cur.iter().map(|u| u / cfg.dt).collect();
            implicit_solve(grid, cfg.viscosity, 1.0 / cfg.dt, &cur, &rhs)
        } else {
            let e: Vec<f64> = cur.iter().zip(&prev).map(|(c, p)| 2.0 * c - p).collect();
            let rhs: Vec<f64> = cur
                .iter()
                .zip(&prev)
                .map(|(c, p)| (4.0 * c - p) / (2.0 * cfg.dt))
                .collect();
            implicit_solve(grid, cfg.viscosity, 1.5 / cfg.dt, &e, &rhs)
        };
        let next = match next {
            Some(v) if v.iter().all(|x| x.is_finite()) => v,
            Some(_) => {
                return Err(RomError::BlowUp {
                    step,
                    reason: "non-finite full-order state".into(),
                })
            }
            None => {
                return Err(RomError::BlowUp {
                    step,
                    reason: "singular full-order step matrix".into(),
                })
            }
        };
        prev = std::mem::replace(&mut cur, next);
        store(step, &cur);
    }
    SnapshotSet::new(grid.clone(), n_start as f64 * cfg.dt, cfg.dt_snap(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(ic: InitialCondition) -> FomConfig {
        FomConfig {
            grid: Grid1D::new(64, 1.0).unwrap(),
            viscosity: 1e-2,
            dt: 0.002,
            t_end: 0.1,
            initial_condition: ic,
            snapshot_window: (0.0, 0.1),
            snapshot_stride: 1,
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let s = run_fom(&small(InitialCondition::Zero)).unwrap();
        assert!(s.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn snapshot_count_follows_window() {
        let mut cfg = small(InitialCondition::Zero);
        cfg.snapshot_window = (0.02, 0.08);
        let s = run_fom(&cfg).unwrap();
        assert_eq!(s.len(), 31);
        cfg.snapshot_stride = 3;
        let s = run_fom(&cfg).unwrap();
        assert_eq!(s.len(), 11);
        assert!((s.dt_snap - 0.006).abs() < 1e-15);
    }

    #[test]
    fn config_errors() {
        let mut cfg = small(InitialCondition::Zero);
        cfg.snapshot_window = (0.05, 0.05);
        assert!(matches!(run_fom(&cfg), Err(RomError::Config(_))));
        cfg.snapshot_window = (0.0, 0.2);
        assert!(matches!(run_fom(&cfg), Err(RomError::Config(_))));
        cfg.snapshot_window = (0.001, 0.05);
        assert!(matches!(run_fom(&cfg), Err(RomError::Config(_))));
        cfg.snapshot_window = (0.0, 0.05);
        cfg.snapshot_stride = 2;
        assert!(matches!(run_fom(&cfg), Err(RomError::Config(_))));
    }

    #[test]
    fn energy_examples() {
        let g = Grid1D::new(256, 1.0).unwrap();
        assert_eq!(kinetic_energy(&vec![0.0; 256], &g).unwrap(), 0.0);
        assert!((kinetic_energy(&vec![1.0; 256], &g).unwrap() - 0.5).abs() < 1e-14);
        let u = InitialCondition::Sine {
            amplitude: 1.0,
            wavenumber: 1,
            offset: 0.0,
        }
        .sample(&g);
        assert!((kinetic_energy(&u, &g).unwrap() - 0.25).abs() <= 1e-10);
        assert!(kinetic_energy(&u[..10], &g).is_err());
    }

    #[test]
    fn deterministic() {
        let cfg = small(InitialCondition::Sine {
            amplitude: 1.0,
            wavenumber: 1,
            offset: 0.2,
        });
        let a = run_fom(&cfg).unwrap();
        let b = run_fom(&cfg).unwrap();
        assert_eq!(a.data, b.data);
    }
}

//! Time integration of the reduced models with linearized BDF2 and the
//! evaluation diagnostics used to score them.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::closure::TauSeries;
use crate::error::{config, dim, Result, RomError};
use crate::galerkin::QuadraticModel;
use crate::pod::CoefficientSeries;
use crate::regression::ClosureOperators;

/// Coefficient norm, relative to `max(1, |a0|)`, treated as a blow-up.
pub const BLOWUP_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Grom,
    Ddf,
    Cddf,
    Ideal,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Grom, ModelKind::Ddf, ModelKind::Cddf, ModelKind::Ideal];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Grom => "grom",
            ModelKind::Ddf => "ddf",
            ModelKind::Cddf => "cddf",
            ModelKind::Ideal => "ideal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory {
    pub times: Vec<f64>,
    /// `r x K`
    pub coeffs: DMatrix<f64>,
    pub model_kind: ModelKind,
    pub dt: f64,
    pub energy: Vec<f64>,
    /// First step whose state could not be computed, if any.
    pub blowup: Option<usize>,
}

impl RomTrajectory {
    pub fn r(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn len(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.ncols() == 0
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&f64::NAN)
    }
}

/// Tabulated closure term, linearly interpolated in time.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealTauTable {
    times: Vec<f64>,
    values: DMatrix<f64>,
}

impl IdealTauTable {
    pub fn new(times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if times.len() != values.ncols() || times.is_empty() {
            return Err(dim("ideal tau table times and values disagree"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config("ideal tau table times must be strictly increasing"));
        }
        Ok(Self { times, values })
    }

    pub fn from_tau(tau: &TauSeries) -> Result<Self> {
        Self::new(tau.times.clone(), tau.values.clone())
    }

    pub fn r(&self) -> usize {
        self.values.nrows()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty table")
    }

    /// Value at `t`, or `None` outside the tabulated range.
    pub fn at(&self, t: f64) -> Option<DVector<f64>> {
        let n = self.times.len();
        let span = (self.times[n - 1] - self.times[0]).abs().max(1.0);
        let slack = 1e-9 * span;
        if t < self.times[0] - slack || t > self.times[n - 1] + slack {
            return None;
        }
        if n == 1 {
            return Some(self.values.column(0).into_owned());
        }
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Some(self.values.column(k) * (1.0 - w) + self.values.column(k + 1) * w)
    }
}

/// Time span `[t_start, t_end]` stepped by `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpan {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl TimeSpan {
    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt + 1e-9).floor() as usize
    }
}

/// Integrates `a' = C + (A + A~) a + a^T (B + B~) a [+ tau(t)]`.
///
/// Step 1 is linearized backward Euler with the advecting coefficients frozen
/// at `a0`; later steps are BDF2 with the extrapolant `2 a^n - a^{n-1}`. Each
/// step is one `r x r` linear solve. With `a1_hint` the first step is taken
/// from the hint instead. An ideal run stops at the end of its table.
pub fn integrate(
    model: &QuadraticModel,
    closure: Option<&ClosureOperators>,
    ideal: Option<&IdealTauTable>,
    a0: &[f64],
    a1_hint: Option<&[f64]>,
    span: TimeSpan,
) -> Result<RomTrajectory> {
    let r = model.r();
    if !(span.dt.is_finite() && span.dt > 0.0) {
        return Err(config(format!("dt must be positive, got {}", span.dt)));
    }
    if !(span.t_end >= span.t_start) {
        return Err(config("integration end precedes start"));
    }
    if closure.is_some() && ideal.is_some() {
        return Err(config(
            "closure operators and an ideal tau table are mutually exclusive",
        ));
    }
    if a0.len() != r || a1_hint.is_some_and(|h| h.len() != r) {
        return Err(dim(format!("initial state must have r = {r} entries")));
    }
    if let Some(c) = closure {
        if c.r() != r || c.b_tilde.dim() != r {
            return Err(dim(format!("closure has r = {}, model has r = {r}", c.r())));
        }
    }
    if let Some(t) = ideal {
        if t.r() != r {
            return Err(dim(format!("ideal table has r = {}, model has r = {r}", t.r())));
        }
    }

    let (lin, quad, kind) = match closure {
        Some(c) => (
            &model.a + &c.a_tilde,
            model.b.add(&c.b_tilde),
            if c.constrained {
                ModelKind::Cddf
            } else {
                ModelKind::Ddf
            },
        ),
        None => (
            model.a.clone(),
            model.b.clone(),
            if ideal.is_some() {
                ModelKind::Ideal
            } else {
                ModelKind::Grom
            },
        ),
    };

    let steps = span.steps();
    let limit = BLOWUP_NORM * DVector::from_column_slice(a0).norm().max(1.0);
    let mut states: Vec<DVector<f64>> = vec![DVector::from_column_slice(a0)];
    let mut blowup = None;
    let eye = DMatrix::<f64>::identity(r, r);

    for step in 1..=steps {
        let t_next = span.t_start + step as f64 * span.dt;
        let forcing = match ideal {
            Some(table) => match table.at(t_next) {
                Some(v) => Some(v),
                None => break,
            },
            None => None,
        };
        let next = if let (1, Some(hint)) = (step, a1_hint) {
            Some(DVector::from_column_slice(hint))
        } else {
            let cur = &states[step - 1];
            let (alpha, extrap, mut rhs) = if step == 1 {
                (1.0 / span.dt, cur.clone(), cur / span.dt)
            } else {
                let prev = &states[step - 2];
                (
                    1.5 / span.dt,
                    cur * 2.0 - prev,
                    (cur * 4.0 - prev) / (2.0 * span.dt),
                )
            };
            rhs += &model.c;
            if let Some(f) = &forcing {
                rhs += f;
            }
            let q = quad.linearized(extrap.as_slice());
            let m = &eye * alpha - &lin - q;
            m.lu().solve(&rhs)
        };
        match next {
            Some(v) if v.iter().all(|x| x.is_finite()) && v.norm() <= limit => states.push(v),
            _ => {
                blowup = Some(step);
                break;
            }
        }
    }

    let k = states.len();
    let coeffs = DMatrix::from_fn(r, k, |i, j| states[j][i]);
    let times: Vec<f64> = (0..k).map(|j| span.t_start + j as f64 * span.dt).collect();
    let energy = (0..k).map(|j| 0.5 * states[j].norm_squared()).collect();
    Ok(RomTrajectory {
        times,
        coeffs,
        model_kind: kind,
        dt: span.dt,
        energy,
        blowup,
    })
}

/// Fluctuation energy `1/2 sum_i a_i(t)^2` per step.
pub fn energy_series(traj: &RomTrajectory) -> Vec<f64> {
    traj.coeffs
        .column_iter()
        .map(|c| 0.5 * c.norm_squared())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// Relative L2-in-time coefficient error.
    pub coeff_error: f64,
    /// Relative L2-in-time energy error.
    pub energy_error: f64,
    /// `max |E - E_ref| / max E_ref`.
    pub max_energy_error: f64,
    pub blowup: bool,
    /// Set when the reference vanishes and absolute errors are reported.
    pub absolute: bool,
    /// Number of trajectory samples inside the reference window.
    pub samples: usize,
}

/// Linear interpolation of a coefficient series (leading `r` rows) at `t`.
fn interp_series(reference: &CoefficientSeries, r: usize, t: f64) -> Option<DVector<f64>> {
    let times = &reference.times;
    let n = times.len();
    let span = (times[n - 1] - times[0]).abs().max(1.0);
    let slack = 1e-9 * span;
    if t < times[0] - slack || t > times[n - 1] + slack {
        return None;
    }
    if n == 1 {
        return Some(reference.coeffs.column(0).rows(0, r).into_owned());
    }
    let k = match times.partition_point(|&s| s <= t) {
        0 => 0,
        p => (p - 1).min(n - 2),
    };
    let w = ((t - times[k]) / (times[k + 1] - times[k])).clamp(0.0, 1.0);
    Some(reference.coeffs.column(k).rows(0, r) * (1.0 - w) + reference.coeffs.column(k + 1).rows(0, r) * w)
}

/// Scores a trajectory against reference coefficients over the overlap of
/// the two windows, optionally limited to `t <= until`.
pub fn compare_until(
    traj: &RomTrajectory,
    reference: &CoefficientSeries,
    until: Option<f64>,
) -> Result<Comparison> {
    let r = traj.r();
    if reference.r() < r {
        return Err(dim(format!(
            "reference has {} rows, trajectory has {r}",
            reference.r()
        )));
    }
    if reference.is_empty() {
        return Err(config("empty reference series"));
    }
    let limit = until.unwrap_or(f64::INFINITY);
    let (mut num_c, mut den_c, mut num_e, mut den_e) = (0.0, 0.0, 0.0, 0.0);
    let (mut max_diff, mut max_ref): (f64, f64) = (0.0, 0.0);
    let mut samples = 0;
    for (j, &t) in traj.times.iter().enumerate() {
        if t > limit + 1e-9 * limit.abs().max(1.0) {
            break;
        }
        let Some(refv) = interp_series(reference, r, t) else {
            continue;
        };
        let a = traj.coeffs.column(j);
        let e = 0.5 * a.norm_squared();
        let e_ref = 0.5 * refv.norm_squared();
        num_c += (a - &refv).norm_squared();
        den_c += refv.norm_squared();
        num_e += (e - e_ref) * (e - e_ref);
        den_e += e_ref * e_ref;
        max_diff = max_diff.max((e - e_ref).abs());
        max_ref = max_ref.max(e_ref.abs());
        samples += 1;
    }
    if samples == 0 {
        return Err(config("trajectory and reference windows do not overlap"));
    }
    let absolute = den_c == 0.0 || den_e == 0.0 || max_ref == 0.0;
    let ratio = |num: f64, den: f64| if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    let blowup = traj.blowup.is_some();
    let pick = |v: f64| if blowup { f64::INFINITY } else { v };
    Ok(Comparison {
        coeff_error: pick(ratio(num_c, den_c)),
        energy_error: pick(ratio(num_e, den_e)),
        max_energy_error: pick(if max_ref > 0.0 {
            max_diff / max_ref
        } else {
            max_diff
        }),
        blowup,
        absolute,
        samples,
    })
}

pub fn compare(traj: &RomTrajectory, reference: &CoefficientSeries) -> Result<Comparison> {
    compare_until(traj, reference, None)
}

impl RomTrajectory {
    /// Converts a flagged trajectory into a blow-up error.
    pub fn into_result(self) -> Result<RomTrajectory> {
        match self.blowup {
            Some(step) => Err(RomError::BlowUp {
                step,
                reason: format!("{} trajectory diverged", self.model_kind),
            }),
            None => Ok(self),
        }
    }
}

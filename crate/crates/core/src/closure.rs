//! Closure targets and regression data.
//!
//! The exact closure term is the ROM-projected commutator of the convective
//! nonlinearity between an `m`-mode reconstruction and the `r`-mode one,
//! `tau_i = -<N(u_m) - N(u_r), phi_i>`, `i <= r`. Its least-squares fit by
//! `A~ a + a^T B~ a` needs a design matrix whose rows are (sample, component)
//! pairs; this module builds it and the sample subsets used for
//! cross-validation.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{config, dim, Result, RomError};
use crate::galerkin::{QuadraticModel, Tensor3};
use crate::par::{for_each_chunk, Parallelism};
use crate::pod::CoefficientSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauMethod {
    Commutator { m: usize },
    Residual,
}

impl fmt::Display for TauMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauMethod::Commutator { .. } => write!(f, "commutator"),
            TauMethod::Residual => write!(f, "residual"),
        }
    }
}

/// Closure target samples, `r x M_used`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauSeries {
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
    pub method: TauMethod,
}

impl TauSeries {
    pub fn r(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    /// `m` for commutator targets, 0 for residual targets.
    pub fn m(&self) -> usize {
        match self.method {
            TauMethod::Commutator { m } => m,
            TauMethod::Residual => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.ncols() {
            return Err(dim("tau times and values disagree"));
        }
        if let TauMethod::Commutator { m } = self.method {
            if m < self.r() {
                return Err(config(format!("commutator m = {m} below r = {}", self.r())));
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(RomError::Solver("non-finite closure targets".into()));
        }
        Ok(())
    }
}

fn same_times(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
}

/// Commutator closure target from the `m`-mode and `r`-mode coefficient
/// series and Galerkin models.
///
/// Computes the full `C + A a + a^T B a` difference for the convective parts
/// (the constant convective term cancels between the two levels because both
/// share `phi_1..phi_r`). Viscous coupling to modes `r+1..m` is not part of
/// the commutator.
pub fn compute_tau_commutator(
    series_m: &CoefficientSeries,
    series_r: &CoefficientSeries,
    model_m: &QuadraticModel,
    model_r: &QuadraticModel,
) -> Result<TauSeries> {
    let (m, r) = (series_m.r(), series_r.r());
    if m < r {
        return Err(config(format!("commutator needs m >= r, got m = {m}, r = {r}")));
    }
    if model_m.r() != m || model_r.r() != r {
        return Err(dim(format!(
            "model dimensions ({}, {}) do not match series ({m}, {r})",
            model_m.r(),
            model_r.r()
        )));
    }
    if !same_times(&series_m.times, &series_r.times) {
        return Err(dim("coefficient series use different time grids"));
    }
    let k = series_r.len();
    let mut values = DMatrix::zeros(r, k);
    for j in 0..k {
        let am = series_m.column(j);
        let ar = series_r.column(j);
        let full = model_m.convective(&am);
        let trunc = model_r.convective(&ar);
        for i in 0..r {
            values[(i, j)] = full[i] - trunc[i];
        }
    }
    let tau = TauSeries {
        times: series_r.times.clone(),
        values,
        method: TauMethod::Commutator { m },
    };
    tau.validate()?;
    Ok(tau)
}

/// Residual closure target `a'(t_j) - rhs(a(t_j))`, with second-order finite
/// differences in time (one-sided at the ends).
pub fn compute_tau_residual(series: &CoefficientSeries, model: &QuadraticModel) -> Result<TauSeries> {
    let k = series.len();
    if k < 3 {
        return Err(config(format!(
            "residual closure needs at least 3 samples, got {k}"
        )));
    }
    if model.r() != series.r() {
        return Err(dim("model and series dimensions differ"));
    }
    let h = series.times[1] - series.times[0];
    if !(h > 0.0) {
        return Err(config("series times must increase"));
    }
    let r = series.r();
    let a = &series.coeffs;
    let mut values = DMatrix::zeros(r, k);
    for j in 0..k {
        let f = model.rhs(&series.column(j))?;
        for i in 0..r {
            let d = if j == 0 {
                (-3.0 * a[(i, 0)] + 4.0 * a[(i, 1)] - a[(i, 2)]) / (2.0 * h)
            } else if j == k - 1 {
                (3.0 * a[(i, j)] - 4.0 * a[(i, j - 1)] + a[(i, j - 2)]) / (2.0 * h)
            } else {
                (a[(i, j + 1)] - a[(i, j - 1)]) / (2.0 * h)
            };
            values[(i, j)] = d - f[i];
        }
    }
    let tau = TauSeries {
        times: series.times.clone(),
        values,
        method: TauMethod::Residual,
    };
    tau.validate()?;
    Ok(tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionScheme {
    Full,
    /// Every `l`-th sample starting from the first.
    EquallySpaced(usize),
    /// Contiguous prefix holding `ceil(f M)` samples.
    FirstFraction(f64),
}

impl fmt::Display for SelectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionScheme::Full => write!(f, "full"),
            SelectionScheme::EquallySpaced(l) => write!(f, "equally_spaced:{l}"),
            SelectionScheme::FirstFraction(x) => write!(f, "first_fraction:{x}"),
        }
    }
}

impl std::str::FromStr for SelectionScheme {
    type Err = RomError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || config(format!("unknown selection scheme `{s}`"));
        if s == "full" {
            return Ok(SelectionScheme::Full);
        }
        let (name, arg) = s.split_once(':').ok_or_else(bad)?;
        match name {
            "equally_spaced" => arg.parse().map(SelectionScheme::EquallySpaced).map_err(|_| bad()),
            "first_fraction" => arg.parse().map(SelectionScheme::FirstFraction).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// Zero-based sample indices into a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSelection {
    pub indices: Vec<usize>,
    pub scheme: SelectionScheme,
}

pub fn select_samples(m: usize, scheme: SelectionScheme) -> Result<SampleSelection> {
    if m == 0 {
        return Err(config("cannot select from zero samples"));
    }
    let indices: Vec<usize> = match scheme {
        SelectionScheme::Full => (0..m).collect(),
        SelectionScheme::EquallySpaced(l) => {
            if l == 0 {
                return Err(config("equally_spaced stride must be >= 1"));
            }
            (0..m).step_by(l).collect()
        }
        SelectionScheme::FirstFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(config(format!("first_fraction must lie in (0, 1], got {f}")));
            }
            let count = ((f * m as f64) - 1e-9).ceil().max(1.0) as usize;
            (0..count.min(m)).collect()
        }
    };
    Ok(SampleSelection { indices, scheme })
}

/// Column layout of the regression unknowns. Component `i` owns the block
/// `i * p .. (i + 1) * p` with `p = r + r (r + 1) / 2`: first the `r` entries
/// `A~_{i m}`, then `B~_{i m n}` for `m <= n` in lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMap {
    pub r: usize,
}

impl FeatureMap {
    pub fn per_component(&self) -> usize {
        self.r + self.r * (self.r + 1) / 2
    }

    pub fn n_unknowns(&self) -> usize {
        self.r * self.per_component()
    }

    pub fn linear(&self, i: usize, m: usize) -> usize {
        i * self.per_component() + m
    }

    /// Slot of the symmetric pair `{m, n}`.
    pub fn quadratic(&self, i: usize, m: usize, n: usize) -> usize {
        let (m, n) = if m <= n { (m, n) } else { (n, m) };
        // pairs (m', n') with m' < m come first
        let before = m * self.r - m * m.saturating_sub(1) / 2;
        i * self.per_component() + self.r + before + (n - m)
    }

    /// Feature values for one sample `a`, in local (per-component) order.
    pub fn features(&self, a: &[f64]) -> Vec<f64> {
        let r = self.r;
        let mut out = Vec::with_capacity(self.per_component());
        out.extend_from_slice(a);
        for m in 0..r {
            for n in m..r {
                let v = a[m] * a[n];
                out.push(if m == n { v } else { 2.0 * v });
            }
        }
        out
    }

    /// Splits a solution vector into `(A~, B~)` with `B~` symmetric in its
    /// last two indices.
    pub fn unpack(&self, x: &DVector<f64>) -> (DMatrix<f64>, Tensor3) {
        let r = self.r;
        let a = DMatrix::from_fn(r, r, |i, m| x[self.linear(i, m)]);
        let b = Tensor3::from_fn(r, |i, m, n| x[self.quadratic(i, m, n)]);
        (a, b)
    }

    /// Inverse of [`unpack`](Self::unpack); uses the `m <= n` half of `b`.
    pub fn pack(&self, a: &DMatrix<f64>, b: &Tensor3) -> DVector<f64> {
        let r = self.r;
        let mut x = DVector::zeros(self.n_unknowns());
        for i in 0..r {
            for m in 0..r {
                x[self.linear(i, m)] = a[(i, m)];
                for n in m..r {
                    x[self.quadratic(i, m, n)] = b.get(i, m, n);
                }
            }
        }
        x
    }
}

/// Stacked least-squares system for the closure ansatz.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub map: FeatureMap,
    /// `(M_used r) x (r p)`, row `j r + i` is sample `j`, component `i`.
    pub design: DMatrix<f64>,
    pub target: DVector<f64>,
    /// Selected coefficient samples, `r x M_used`.
    pub samples: DMatrix<f64>,
    /// Selected closure targets, `r x M_used`.
    pub tau: DMatrix<f64>,
    pub times: Vec<f64>,
}

impl RegressionData {
    pub fn r(&self) -> usize {
        self.map.r
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }
}

pub fn build_regression(
    series: &CoefficientSeries,
    tau: &TauSeries,
    selection: &SampleSelection,
) -> Result<RegressionData> {
    build_regression_with(series, tau, selection, Parallelism::default())
}

pub fn build_regression_with(
    series: &CoefficientSeries,
    tau: &TauSeries,
    selection: &SampleSelection,
    par: Parallelism,
) -> Result<RegressionData> {
    if selection.indices.is_empty() {
        return Err(config("empty sample selection"));
    }
    if series.r() != tau.r() {
        return Err(dim(format!("series r = {} but tau r = {}", series.r(), tau.r())));
    }
    if !same_times(&series.times, &tau.times) {
        return Err(dim("coefficient series and tau use different time grids"));
    }
    if let Some(&bad) = selection.indices.iter().find(|&&j| j >= series.len()) {
        return Err(config(format!(
            "selected index {bad} outside 0..{}",
            series.len()
        )));
    }
    let r = series.r();
    let map = FeatureMap { r };
    let p = map.per_component();
    let cols = map.n_unknowns();
    let k = selection.indices.len();
    let samples = DMatrix::from_fn(r, k, |i, j| series.coeffs[(i, selection.indices[j])]);
    let tau_sel = DMatrix::from_fn(r, k, |i, j| tau.values[(i, selection.indices[j])]);

    let mut rows = vec![0.0; k * r * cols];
    for_each_chunk(par, &mut rows, r * cols, |j, chunk| {
        let a: Vec<f64> = samples.column(j).iter().copied().collect();
        let feat = map.features(&a);
        for i in 0..r {
            let row = &mut chunk[i * cols..(i + 1) * cols];
            row[i * p..(i + 1) * p].copy_from_slice(&feat);
        }
    });
    let design = DMatrix::from_row_slice(k * r, cols, &rows);
    let target = DVector::from_fn(k * r, |row, _| tau_sel[(row % r, row / r)]);
    Ok(RegressionData {
        map,
        design,
        target,
        samples,
        tau: tau_sel,
        times: selection.indices.iter().map(|&j| series.times[j]).collect(),
    })
}

/// Closure ansatz `A~ a + a^T B~ a`.
pub fn ansatz(a_tilde: &DMatrix<f64>, b_tilde: &Tensor3, a: &[f64]) -> Vec<f64> {
    let av = DVector::from_column_slice(a);
    let lin = a_tilde * av;
    lin.iter().zip(b_tilde.contract(a)).map(|(l, q)| l + q).collect()
}

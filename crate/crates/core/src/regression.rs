//! Least-squares calibration of the closure operators `(A~, B~)`.
//!
//! The unconstrained fit is a truncated-SVD minimum-norm solve of the stacked
//! design. The constrained fit keeps `A~` dissipative and `B~` energy
//! conserving through the sufficient componentwise conditions
//!
//! * `A~_ii <= -eps`, `A~_ij = -A~_ji` (i != j)
//! * `B~_iii = 0`, `B~_iij + B~_iji + B~_jii = 0`, and the six-term cyclic sum
//!   over distinct `i, j, k` vanishes.
//!
//! Equalities are eliminated by an explicit null-space parameterization on
//! the symmetric representative of `B~`, so they hold by construction. The
//! remaining bounds on the diagonal of `A~` are handled by a non-negative
//! least-squares active-set solve after the free directions have been
//! eliminated through their truncated pseudo-inverse.

use nalgebra::{DMatrix, DVector};

use crate::closure::{ansatz, FeatureMap, RegressionData};
use crate::error::{config, dim, Result};
use crate::galerkin::Tensor3;
use crate::linalg::{nnls, Tsvd};

/// Largest dimension accepted by the constrained solver; bounds the
/// active-set enumeration at `2^r` patterns.
pub const MAX_CONSTRAINED_R: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureOperators {
    pub a_tilde: DMatrix<f64>,
    /// Symmetric in its last two indices.
    pub b_tilde: Tensor3,
    pub constrained: bool,
    pub epsilon: f64,
    pub tol: f64,
    /// Training objective at the solution.
    pub residual: f64,
    pub kept_rank: usize,
}

impl ClosureOperators {
    pub fn r(&self) -> usize {
        self.a_tilde.nrows()
    }

    pub fn zeros(r: usize) -> Self {
        Self {
            a_tilde: DMatrix::zeros(r, r),
            b_tilde: Tensor3::zeros(r),
            constrained: false,
            epsilon: 0.0,
            tol: 0.0,
            residual: 0.0,
            kept_rank: 0,
        }
    }

    pub fn evaluate(&self, a: &[f64]) -> Vec<f64> {
        ansatz(&self.a_tilde, &self.b_tilde, a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsvdReport {
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub kept_rank: usize,
    pub condition_before: f64,
    pub condition_after: f64,
}

impl TsvdReport {
    fn from_tsvd(t: &Tsvd, tol: f64) -> Self {
        let (before, after) = t.condition(tol);
        Self {
            singular_values: t.singular_values().to_vec(),
            threshold: t.threshold(tol),
            kept_rank: t.kept_rank(tol),
            condition_before: before,
            condition_after: after,
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(0.0..1.0).contains(&tol) {
        return Err(config(format!("TSVD tolerance must lie in [0, 1), got {tol}")));
    }
    Ok(())
}

fn check_data(data: &RegressionData) -> Result<()> {
    if data.design.nrows() == 0 || data.n_samples() == 0 {
        return Err(config("empty regression data"));
    }
    Ok(())
}

/// Exact training objective `sum_j |tau(t_j) - A~ a_j - a_j^T B~ a_j|^2`,
/// evaluated from the operators directly (not through the design matrix).
pub fn objective(data: &RegressionData, ops: &ClosureOperators) -> Result<f64> {
    if ops.r() != data.r() || ops.b_tilde.dim() != data.r() {
        return Err(dim(format!(
            "operators have r = {}, data has r = {}",
            ops.r(),
            data.r()
        )));
    }
    let mut total = 0.0;
    for j in 0..data.n_samples() {
        let a: Vec<f64> = data.samples.column(j).iter().copied().collect();
        let pred = ops.evaluate(&a);
        for (i, p) in pred.iter().enumerate() {
            let e = data.tau[(i, j)] - p;
            total += e * e;
        }
    }
    Ok(total)
}

/// Truncated-SVD least squares without constraints.
pub fn solve_unconstrained(data: &RegressionData, tol: f64) -> Result<(ClosureOperators, TsvdReport)> {
    check_tol(tol)?;
    check_data(data)?;
    let tsvd = Tsvd::new(&data.design)?;
    solve_unconstrained_with(data, &tsvd, tol)
}

/// Same as [`solve_unconstrained`] with a precomputed SVD of `data.design`,
/// for tolerance sweeps.
pub fn solve_unconstrained_with(
    data: &RegressionData,
    tsvd: &Tsvd,
    tol: f64,
) -> Result<(ClosureOperators, TsvdReport)> {
    check_tol(tol)?;
    let x = tsvd.solve(&data.target, tol);
    let (a_tilde, b_tilde) = data.map.unpack(&x);
    let report = TsvdReport::from_tsvd(tsvd, tol);
    let mut ops = ClosureOperators {
        a_tilde,
        b_tilde,
        constrained: false,
        epsilon: 0.0,
        tol,
        residual: 0.0,
        kept_rank: report.kept_rank,
    };
    ops.residual = objective(data, &ops)?;
    Ok((ops, report))
}

/// Null-space parameterization of the constrained unknowns.
///
/// Reduced coordinates are ordered as: the `r` diagonal entries of `A~`, the
/// strict upper triangle of `A~` (`A~_ji = -A~_ij`), then the free
/// coordinates of `B~`:
///
/// * for each ordered pair `i != j`, `x = B~_{i,(i,j)}` with
///   `B~_{j,(i,i)} = -2 x`;
/// * for each triple `i < j < k`, two coordinates `p = B~_{i,(j,k)}`,
///   `q = B~_{j,(i,k)}` with `B~_{k,(i,j)} = -p - q`.
///
/// `B~_{i,(i,i)}` is fixed at zero.
#[derive(Debug, Clone)]
pub struct ConstraintBasis {
    pub map: FeatureMap,
    /// `n_unknowns x n_reduced`
    pub transform: DMatrix<f64>,
}

impl ConstraintBasis {
    pub fn new(r: usize) -> Self {
        let map = FeatureMap { r };
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        for i in 0..r {
            cols.push(vec![(map.linear(i, i), 1.0)]);
        }
        for i in 0..r {
            for j in i + 1..r {
                cols.push(vec![(map.linear(i, j), 1.0), (map.linear(j, i), -1.0)]);
            }
        }
        for i in 0..r {
            for j in 0..r {
                if i != j {
                    cols.push(vec![
                        (map.quadratic(i, i, j), 1.0),
                        (map.quadratic(j, i, i), -2.0),
                    ]);
                }
            }
        }
        for i in 0..r {
            for j in i + 1..r {
                for k in j + 1..r {
                    let last = map.quadratic(k, i, j);
                    cols.push(vec![(map.quadratic(i, j, k), 1.0), (last, -1.0)]);
                    cols.push(vec![(map.quadratic(j, i, k), 1.0), (last, -1.0)]);
                }
            }
        }
        let mut transform = DMatrix::zeros(map.n_unknowns(), cols.len());
        for (c, entries) in cols.iter().enumerate() {
            for &(row, v) in entries {
                transform[(row, c)] = v;
            }
        }
        Self { map, transform }
    }

    pub fn r(&self) -> usize {
        self.map.r
    }

    pub fn n_reduced(&self) -> usize {
        self.transform.ncols()
    }

    /// Number of bound-constrained coordinates (the diagonal of `A~`).
    pub fn n_bounded(&self) -> usize {
        self.map.r
    }
}

/// The box-constrained problem left after eliminating the free directions:
/// `min |M d - b|^2` subject to `d_i <= upper`.
#[derive(Debug, Clone)]
pub struct BoxProblem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub upper: f64,
}

impl BoxProblem {
    pub fn value(&self, d: &DVector<f64>) -> f64 {
        (&self.matrix * d - &self.rhs).norm_squared()
    }

    /// Gradient `2 M^T (M d - b)`.
    pub fn gradient(&self, d: &DVector<f64>) -> DVector<f64> {
        self.matrix.transpose() * (&self.matrix * d - &self.rhs) * 2.0
    }

    /// Active-set solve through the substitution `d = upper - x`, `x >= 0`.
    pub fn solve(&self) -> Result<DVector<f64>> {
        let n = self.matrix.ncols();
        let ones = DVector::from_element(n, 1.0);
        // M d - b = -(M x - (M upper 1 - b))
        let c = &self.matrix * ones * self.upper - &self.rhs;
        let max_iter = (1usize << n.min(MAX_CONSTRAINED_R)) + 3 * n;
        let sol = nnls(&self.matrix, &c, max_iter)?;
        Ok(DVector::from_fn(n, |i, _| self.upper - sol.x[i]))
    }

    /// KKT violations at `d`: largest |gradient| over inactive coordinates and
    /// largest negative multiplier over active ones.
    pub fn kkt(&self, d: &DVector<f64>) -> KktReport {
        let g = self.gradient(d);
        let mut stationarity: f64 = 0.0;
        let mut dual: f64 = 0.0;
        let slack = 1e-12 * self.upper.abs().max(1.0);
        for i in 0..d.len() {
            if d[i] >= self.upper - slack {
                // multiplier = -g_i must be >= 0
                dual = dual.max(g[i]);
            } else {
                stationarity = stationarity.max(g[i].abs());
            }
        }
        KktReport {
            stationarity,
            dual_infeasibility: dual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub dual_infeasibility: f64,
}

/// Everything the constrained solve produced.
#[derive(Debug, Clone)]
pub struct ConstrainedSolution {
    pub operators: ClosureOperators,
    pub report: TsvdReport,
    pub kkt: KktReport,
    pub box_problem: BoxProblem,
    pub diagonal: DVector<f64>,
}

/// Constrained least-squares problem in reduced coordinates, with the SVD of
/// the free block precomputed so that `(tol, epsilon)` sweeps reuse it.
#[derive(Debug, Clone)]
pub struct ConstrainedProblem {
    basis: ConstraintBasis,
    bounded: DMatrix<f64>,
    free: Option<Tsvd>,
    free_cols: usize,
}

impl ConstrainedProblem {
    pub fn new(data: &RegressionData) -> Result<Self> {
        check_data(data)?;
        let r = data.r();
        if r > MAX_CONSTRAINED_R {
            return Err(config(format!(
                "constrained solver supports r <= {MAX_CONSTRAINED_R}, got {r}"
            )));
        }
        let basis = ConstraintBasis::new(r);
        let z = &data.design * &basis.transform;
        let nb = basis.n_bounded();
        let bounded = z.columns(0, nb).into_owned();
        let free_cols = z.ncols() - nb;
        let free = if free_cols > 0 {
            Some(Tsvd::new(&z.columns(nb, free_cols).into_owned())?)
        } else {
            None
        };
        Ok(Self {
            basis,
            bounded,
            free,
            free_cols,
        })
    }

    pub fn basis(&self) -> &ConstraintBasis {
        &self.basis
    }

    /// `v` minus its projection onto the kept free directions.
    fn deflate(&self, v: &DVector<f64>, tol: f64) -> DVector<f64> {
        match &self.free {
            Some(t) => v - t.project_range(v, tol),
            None => v.clone(),
        }
    }

    pub fn solve(&self, data: &RegressionData, tol: f64, epsilon: f64) -> Result<ConstrainedSolution> {
        self.truncate(data, tol)?.solve(data, epsilon)
    }

    /// Deflates the bounded block for one tolerance; the result can then be
    /// solved for any number of `epsilon` values.
    pub fn truncate(&self, data: &RegressionData, tol: f64) -> Result<TruncatedProblem<'_>> {
        check_tol(tol)?;
        if data.r() != self.basis.r() || data.target.len() != self.bounded.nrows() {
            return Err(dim("regression data does not match the prepared problem"));
        }
        let mut matrix = self.bounded.clone();
        for c in 0..matrix.ncols() {
            let col = self.deflate(&self.bounded.column(c).into_owned(), tol);
            matrix.set_column(c, &col);
        }
        let report = match &self.free {
            Some(t) => TsvdReport::from_tsvd(t, tol),
            None => TsvdReport {
                singular_values: Vec::new(),
                threshold: 0.0,
                kept_rank: 0,
                condition_before: 1.0,
                condition_after: 1.0,
            },
        };
        Ok(TruncatedProblem {
            problem: self,
            tol,
            matrix,
            rhs: self.deflate(&data.target, tol),
            report,
        })
    }
}

/// A [`ConstrainedProblem`] at a fixed TSVD tolerance.
#[derive(Debug, Clone)]
pub struct TruncatedProblem<'a> {
    problem: &'a ConstrainedProblem,
    tol: f64,
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
    report: TsvdReport,
}

impl TruncatedProblem<'_> {
    pub fn solve(&self, data: &RegressionData, epsilon: f64) -> Result<ConstrainedSolution> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(config(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let p = self.problem;
        let r = p.basis.r();
        if data.r() != r || data.target.len() != self.rhs.len() {
            return Err(dim("regression data does not match the prepared problem"));
        }
        let box_problem = BoxProblem {
            matrix: self.matrix.clone(),
            rhs: self.rhs.clone(),
            upper: -epsilon,
        };
        let diagonal = box_problem.solve()?;
        let kkt = box_problem.kkt(&diagonal);

        let y = &data.target;
        let free = match &p.free {
            Some(t) => t.solve(&(y - &p.bounded * &diagonal), self.tol),
            None => DVector::zeros(0),
        };
        let mut reduced = DVector::zeros(p.basis.n_reduced());
        reduced.rows_mut(0, r).copy_from(&diagonal);
        reduced.rows_mut(r, p.free_cols).copy_from(&free);
        let full = &p.basis.transform * reduced;
        let (a_tilde, b_tilde) = data.map.unpack(&full);

        let mut ops = ClosureOperators {
            a_tilde,
            b_tilde,
            constrained: true,
            epsilon,
            tol: self.tol,
            residual: 0.0,
            kept_rank: self.report.kept_rank + r,
        };
        ops.residual = objective(data, &ops)?;
        Ok(ConstrainedSolution {
            operators: ops,
            report: self.report.clone(),
            kkt,
            box_problem,
            diagonal,
        })
    }
}

/// Constrained least squares with TSVD on the free (equality-eliminated)
/// directions and an active-set solve for the diagonal bounds.
pub fn solve_constrained(
    data: &RegressionData,
    tol: f64,
    epsilon: f64,
) -> Result<(ClosureOperators, TsvdReport)> {
    solve_constrained_detailed(data, tol, epsilon).map(|s| (s.operators, s.report))
}

pub fn solve_constrained_detailed(
    data: &RegressionData,
    tol: f64,
    epsilon: f64,
) -> Result<ConstrainedSolution> {
    check_tol(tol)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(config(format!("epsilon must be >= 0, got {epsilon}")));
    }
    ConstrainedProblem::new(data)?.solve(data, tol, epsilon)
}

/// Largest violation of each componentwise constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    /// `max_i (A~_ii + eps)`, positive when the bound is violated.
    pub diagonal_excess: f64,
    pub skew: f64,
    pub b_diagonal: f64,
    pub b_pair: f64,
    pub b_triple: f64,
    pub b_symmetry: f64,
}

impl ConstraintReport {
    /// True when all equalities hold to `tol` and the bound to `tol`.
    pub fn satisfied(&self, tol: f64) -> bool {
        self.diagonal_excess <= tol
            && self.skew <= tol
            && self.b_diagonal <= tol
            && self.b_pair <= tol
            && self.b_triple <= tol
    }
}

/// Checks the componentwise conditions on the full tensor.
pub fn constraint_report(a_tilde: &DMatrix<f64>, b: &Tensor3, epsilon: f64) -> ConstraintReport {
    let r = a_tilde.nrows();
    let mut rep = ConstraintReport {
        diagonal_excess: f64::NEG_INFINITY,
        skew: 0.0,
        b_diagonal: 0.0,
        b_pair: 0.0,
        b_triple: 0.0,
        b_symmetry: 0.0,
    };
    for i in 0..r {
        rep.diagonal_excess = rep.diagonal_excess.max(a_tilde[(i, i)] + epsilon);
        rep.b_diagonal = rep.b_diagonal.max(b.get(i, i, i).abs());
        for j in 0..r {
            for k in 0..r {
                rep.b_symmetry = rep.b_symmetry.max((b.get(i, j, k) - b.get(i, k, j)).abs());
            }
            if i == j {
                continue;
            }
            rep.skew = rep.skew.max((a_tilde[(i, j)] + a_tilde[(j, i)]).abs());
            let pair = b.get(i, i, j) + b.get(i, j, i) + b.get(j, i, i);
            rep.b_pair = rep.b_pair.max(pair.abs());
            for k in 0..r {
                if k == i || k == j {
                    continue;
                }
                let s = b.get(i, j, k)
                    + b.get(i, k, j)
                    + b.get(j, i, k)
                    + b.get(j, k, i)
                    + b.get(k, i, j)
                    + b.get(k, j, i);
                rep.b_triple = rep.b_triple.max(s.abs());
            }
        }
    }
    rep
}

//! Small dense linear-algebra kernels: cyclic tridiagonal solves for the
//! full-order stepper, truncated SVD least squares, and a non-negative least
//! squares active-set solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};

/// Pivot magnitude below which the Thomas sweep gives up and the caller
/// should fall back to a pivoted dense solve.
const PIVOT_FLOOR: f64 = 1e-300;

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta.abs() < PIVOT_FLOOR {
        return None;
    }
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for k in 1..n {
        beta = diag[k] - lower[k] * c[k - 1];
        if beta.abs() < PIVOT_FLOOR || !beta.is_finite() {
            return None;
        }
        c[k] = upper[k] / beta;
        d[k] = (rhs[k] - lower[k] * d[k - 1]) / beta;
    }
    for k in (0..n - 1).rev() {
        d[k] -= c[k] * d[k + 1];
    }
    Some(d)
}

/// Solves the periodic tridiagonal system
/// `lower[k] x[k-1] + diag[k] x[k] + upper[k] x[k+1] = rhs[k]` (indices mod n)
/// with the Sherman-Morrison correction. Falls back to pivoted LU when the
/// unpivoted sweep meets a vanishing pivot; returns `None` only if the matrix
/// is singular.
pub fn solve_cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    assert!(n >= 3 && lower.len() == n && upper.len() == n && rhs.len() == n);
    let beta = lower[0];
    let alpha = upper[n - 1];
    let gamma = -diag[0];
    let fast = (|| {
        if gamma == 0.0 {
            return None;
        }
        let mut bb = diag.to_vec();
        bb[0] = diag[0] - gamma;
        bb[n - 1] = diag[n - 1] - alpha * beta / gamma;
        let x = thomas(lower, &bb, upper, rhs)?;
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        let z = thomas(lower, &bb, upper, &u)?;
        let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
        if denom.abs() < PIVOT_FLOOR {
            return None;
        }
        let fact = (x[0] + beta * x[n - 1] / gamma) / denom;
        let out: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    })();
    if fast.is_some() {
        return fast;
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        m[(k, k)] += diag[k];
        m[(k, (k + n - 1) % n)] += lower[k];
        m[(k, (k + 1) % n)] += upper[k];
    }
    m.lu()
        .solve(&DVector::from_column_slice(rhs))
        .map(|v| v.as_slice().to_vec())
}

/// Thin SVD with singular values sorted in non-increasing order, used for
/// truncated (TSVD) minimum-norm least squares.
#[derive(Debug, Clone)]
pub struct Tsvd {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
    rank_floor: f64,
}

impl Tsvd {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows == 0 || cols == 0 {
            return Err(RomError::Dimension("empty matrix".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(RomError::Solver(
                "non-finite entries in least squares matrix".into(),
            ));
        }
        let svd = a.clone().svd(true, true);
        let u = svd
            .u
            .ok_or_else(|| RomError::Solver("SVD did not return U".into()))?;
        let vt = svd
            .v_t
            .ok_or_else(|| RomError::Solver("SVD did not return V".into()))?;
        let k = svd.singular_values.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let u = DMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]);
        let v = DMatrix::from_fn(cols, k, |r, c| vt[(order[c], r)]);
        let smax = sigma.first().copied().unwrap_or(0.0);
        let rank_floor = f64::EPSILON * rows.max(cols) as f64 * smax;
        Ok(Self {
            u,
            sigma,
            v,
            rank_floor,
        })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// Absolute cut-off for relative threshold `tol`. Values at or below the
    /// round-off floor are always discarded, so `tol = 0` still drops exact
    /// null directions.
    pub fn threshold(&self, tol: f64) -> f64 {
        (tol * self.sigma_max()).max(self.rank_floor)
    }

    pub fn kept_rank(&self, tol: f64) -> usize {
        let thr = self.threshold(tol);
        self.sigma.iter().take_while(|&&s| s > thr && s > 0.0).count()
    }

    /// Minimum-norm solution of `min |A x - y|` over the kept singular
    /// directions.
    pub fn solve(&self, y: &DVector<f64>, tol: f64) -> DVector<f64> {
        let k = self.kept_rank(tol);
        let mut x = DVector::zeros(self.v.nrows());
        for c in 0..k {
            let coef = self.u.column(c).dot(y) / self.sigma[c];
            x.axpy(coef, &self.v.column(c), 1.0);
        }
        x
    }

    /// `U_k U_k^T y`, projection onto the kept left singular subspace.
    pub fn project_range(&self, y: &DVector<f64>, tol: f64) -> DVector<f64> {
        let k = self.kept_rank(tol);
        let mut out = DVector::zeros(self.u.nrows());
        for c in 0..k {
            let coef = self.u.column(c).dot(y);
            out.axpy(coef, &self.u.column(c), 1.0);
        }
        out
    }

    pub fn condition(&self, tol: f64) -> (f64, f64) {
        let smax = self.sigma_max();
        let smin_all = self.sigma.last().copied().unwrap_or(0.0);
        let k = self.kept_rank(tol);
        let before = if smin_all > 0.0 {
            smax / smin_all
        } else {
            f64::INFINITY
        };
        let after = if k > 0 {
            smax / self.sigma[k - 1]
        } else {
            f64::INFINITY
        };
        (before, after)
    }
}

/// Minimum-norm least squares via SVD at round-off truncation.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(Tsvd::new(a)?.solve(b, 0.0))
}

/// Outcome of [`nnls`].
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
}

/// Lawson-Hanson active-set solver for `min |A x - b|^2` subject to `x >= 0`.
///
/// Inner subproblems are solved in minimum-norm form, so rank-deficient
/// passive sets are handled. The outer loop is bounded by `max_iter`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> Result<NnlsSolution> {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.norm().max(f64::MIN_POSITIVE) * b.norm().max(1.0);
    let grad_tol = 1e-13 * scale;
    let mut iterations = 0;

    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut z = DVector::zeros(n);
        if idx.is_empty() {
            return Ok(z);
        }
        let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
        let zs = lstsq(&sub, b)?;
        for (c, &j) in idx.iter().enumerate() {
            z[j] = zs[c];
        }
        Ok(z)
    };

    loop {
        // w = A^T (b - A x): negative gradient / 2
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > grad_tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        iterations += 1;
        if iterations > max_iter {
            return Err(RomError::Solver(format!(
                "active-set solver exceeded {max_iter} iterations"
            )));
        }
        passive[j] = true;
        loop {
            let z = solve_passive(&passive)?;
            let infeasible: Vec<usize> = (0..n).filter(|&k| passive[k] && z[k] <= 0.0).collect();
            if infeasible.is_empty() {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &k in &infeasible {
                let denom = x[k] - z[k];
                if denom > 0.0 {
                    alpha = alpha.min(x[k] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x = &x + (&z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= 1e-15 * x.amax().max(1.0) {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok(NnlsSolution { x, iterations })
}

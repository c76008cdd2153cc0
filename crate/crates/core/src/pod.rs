//! Centered proper orthogonal decomposition by the method of snapshots, and
//! the ROM projection filter onto the leading modes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{config, dim, Result, RomError};
use crate::fom::SnapshotSet;
use crate::grid::Grid1D;
use crate::par::{map_range, Parallelism};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_CLAMP: f64 = 1e-14;

/// Mean mode plus weighted-orthonormal fluctuation modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub grid: Grid1D,
    pub mean_mode: Vec<f64>,
    /// `N x r_max`, columns are the modes.
    pub modes: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl PodBasis {
    pub fn r_max(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n_points(&self) -> usize {
        self.modes.nrows()
    }

    pub fn mode(&self, i: usize) -> &[f64] {
        let n = self.n_points();
        &self.modes.as_slice()[i * n..(i + 1) * n]
    }

    fn check_r(&self, r: usize) -> Result<()> {
        if r == 0 || r > self.r_max() {
            return Err(config(format!("truncation r = {r} outside 1..={}", self.r_max())));
        }
        Ok(())
    }

    /// Coefficients `a_i = <u - mean, phi_i>_w`, `i < r`.
    pub fn project(&self, u: &[f64], r: usize) -> Result<Vec<f64>> {
        self.check_r(r)?;
        self.grid.check_len(u, "velocity sample")?;
        let fluct: Vec<f64> = u.iter().zip(&self.mean_mode).map(|(a, b)| a - b).collect();
        Ok((0..r).map(|i| self.grid.inner(&fluct, self.mode(i))).collect())
    }

    /// Field `mean + sum_i a_i phi_i`.
    pub fn reconstruct(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.check_r(a.len())?;
        Ok(self.reconstruct_fluctuation(a, true))
    }

    pub(crate) fn reconstruct_fluctuation(&self, a: &[f64], with_mean: bool) -> Vec<f64> {
        let mut out = if with_mean {
            self.mean_mode.clone()
        } else {
            vec![0.0; self.n_points()]
        };
        for (i, &ai) in a.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.mode(i)) {
                *o += ai * p;
            }
        }
        out
    }

    /// Copy truncated to the first `r` modes.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        self.check_r(r)?;
        Ok(Self {
            grid: self.grid.clone(),
            mean_mode: self.mean_mode.clone(),
            modes: self.modes.columns(0, r).into_owned(),
            eigenvalues: self.eigenvalues[..r].to_vec(),
        })
    }
}

/// Time series of ROM coefficients, `r x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSeries {
    pub times: Vec<f64>,
    pub coeffs: DMatrix<f64>,
}

impl CoefficientSeries {
    pub fn new(times: Vec<f64>, coeffs: DMatrix<f64>) -> Result<Self> {
        if times.len() != coeffs.ncols() {
            return Err(dim(format!(
                "{} times for {} coefficient columns",
                times.len(),
                coeffs.ncols()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(RomError::Solver("non-finite coefficients".into()));
        }
        Ok(Self { times, coeffs })
    }

    pub fn r(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn len(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.ncols() == 0
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.coeffs.column(j).iter().copied().collect()
    }

    /// Leading `r` rows.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r == 0 || r > self.r() {
            return Err(config(format!("cannot truncate {} rows to {r}", self.r())));
        }
        Ok(Self {
            times: self.times.clone(),
            coeffs: self.coeffs.rows(0, r).into_owned(),
        })
    }

    /// Columns `first..first + count`.
    pub fn slice(&self, first: usize, count: usize) -> Result<Self> {
        if count == 0 || first + count > self.len() {
            return Err(config(format!("slice {first}..{} outside series", first + count)));
        }
        Ok(Self {
            times: self.times[first..first + count].to_vec(),
            coeffs: self.coeffs.columns(first, count).into_owned(),
        })
    }
}

/// Builds the centered POD basis with `r_max` modes.
pub fn build_pod(snaps: &SnapshotSet, r_max: usize) -> Result<PodBasis> {
    build_pod_with(snaps, r_max, Parallelism::default())
}

pub fn build_pod_with(snaps: &SnapshotSet, r_max: usize, par: Parallelism) -> Result<PodBasis> {
    let n = snaps.n_points();
    let m = snaps.len();
    if m < 2 {
        return Err(config(format!("POD needs at least 2 snapshots, got {m}")));
    }
    if r_max == 0 || r_max > n.min(m) {
        return Err(config(format!("r_max = {r_max} outside 1..={}", n.min(m))));
    }
    let grid = &snaps.grid;
    let mean_mode: Vec<f64> = (0..n)
        .map(|k| snaps.data.row(k).iter().sum::<f64>() / m as f64)
        .collect();
    let mut fluct = snaps.data.clone();
    for mut col in fluct.column_iter_mut() {
        for (v, mu) in col.iter_mut().zip(&mean_mode) {
            *v -= mu;
        }
    }
    let data_scale = snaps.data.amax();
    if fluct.amax() <= 64.0 * f64::EPSILON * data_scale.max(f64::MIN_POSITIVE) {
        return Err(RomError::ZeroFluctuation);
    }

    let cols: Vec<&[f64]> = (0..m).map(|j| &fluct.as_slice()[j * n..(j + 1) * n]).collect();
    let rows = map_range(par, m, |i| {
        (0..m)
            .map(|j| grid.inner(cols[i], cols[j]) / m as f64)
            .collect::<Vec<f64>>()
    });
    let gram = DMatrix::from_fn(m, m, |i, j| 0.5 * (rows[i][j] + rows[j][i]));

    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lambda1 = eig.eigenvalues[order[0]];
    if lambda1 <= 0.0 {
        return Err(RomError::ZeroFluctuation);
    }
    let rank = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > EIGEN_CLAMP * lambda1)
        .count();
    if r_max > rank {
        return Err(RomError::Rank {
            requested: r_max,
            achievable: rank,
        });
    }

    let mut modes = DMatrix::<f64>::zeros(n, r_max);
    let mut eigenvalues = Vec::with_capacity(r_max);
    for (c, &idx) in order.iter().take(r_max).enumerate() {
        let lam = eig.eigenvalues[idx];
        let v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let phi = &fluct * v / (m as f64 * lam).sqrt();
        modes.set_column(c, &phi);
        eigenvalues.push(lam);
    }
    reorthonormalize(grid, &mut modes);
    for mut col in modes.column_iter_mut() {
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(PodBasis {
        grid: grid.clone(),
        mean_mode,
        modes,
        eigenvalues,
    })
}

/// Two passes of weighted modified Gram-Schmidt. The modes are already
/// orthonormal up to round-off amplified by `lambda_1 / lambda_i`; this
/// removes that drift for the trailing modes.
fn reorthonormalize(grid: &Grid1D, modes: &mut DMatrix<f64>) {
    let n = modes.nrows();
    let r = modes.ncols();
    for _ in 0..2 {
        for i in 0..r {
            for j in 0..i {
                let (left, right) = modes.as_mut_slice().split_at_mut(i * n);
                let pj = &left[j * n..(j + 1) * n];
                let pi = &mut right[..n];
                let c = grid.inner(pi, pj);
                for (a, b) in pi.iter_mut().zip(pj) {
                    *a -= c * b;
                }
            }
            let pi = &mut modes.as_mut_slice()[i * n..(i + 1) * n];
            let norm = grid.inner(pi, pi).sqrt();
            for a in pi.iter_mut() {
                *a /= norm;
            }
        }
    }
}

/// Projects every snapshot onto the first `r` modes.
pub fn project_series(basis: &PodBasis, snaps: &SnapshotSet, r: usize) -> Result<CoefficientSeries> {
    project_series_with(basis, snaps, r, Parallelism::default())
}

pub fn project_series_with(
    basis: &PodBasis,
    snaps: &SnapshotSet,
    r: usize,
    par: Parallelism,
) -> Result<CoefficientSeries> {
    basis.check_r(r)?;
    if snaps.n_points() != basis.n_points() {
        return Err(dim(format!(
            "snapshots have {} points, basis has {}",
            snaps.n_points(),
            basis.n_points()
        )));
    }
    let m = snaps.len();
    let n = snaps.n_points();
    let cols = map_range(par, m, |j| {
        basis
            .project(&snaps.data.as_slice()[j * n..(j + 1) * n], r)
            .expect("dimensions checked above")
    });
    let coeffs = DMatrix::from_fn(r, m, |i, j| cols[j][i]);
    CoefficientSeries::new(snaps.times.clone(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid1D {
        Grid1D::new(16, 1.0).unwrap()
    }

    fn set(cols: &[Vec<f64>]) -> SnapshotSet {
        let n = cols[0].len();
        let data = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        SnapshotSet::new(Grid1D::new(n, 1.0).unwrap(), 0.0, 0.1, data).unwrap()
    }

    #[test]
    fn identical_snapshots_have_no_fluctuation() {
        let u: Vec<f64> = (0..16).map(|k| 0.1 * k as f64 + 0.3).collect();
        let s = set(&[u.clone(), u.clone(), u]);
        assert!(matches!(build_pod(&s, 1), Err(RomError::ZeroFluctuation)));
    }

    #[test]
    fn orthogonal_fluctuations_diagonalize() {
        let g = grid();
        let x = g.coordinates();
        let mean: Vec<f64> = x.iter().map(|x| 1.0 + x).collect();
        let p: Vec<f64> = x
            .iter()
            .map(|x| 2.0 * (2.0 * std::f64::consts::PI * x).sin())
            .collect();
        let q: Vec<f64> = x
            .iter()
            .map(|x| 0.5 * (4.0 * std::f64::consts::PI * x).cos())
            .collect();
        let add = |s: f64, v: &[f64]| -> Vec<f64> { mean.iter().zip(v).map(|(m, v)| m + s * v).collect() };
        let s = set(&[add(1.0, &p), add(-1.0, &p), add(1.0, &q), add(-1.0, &q)]);
        let b = build_pod(&s, 2).unwrap();
        let np = g.inner(&p, &p);
        let nq = g.inner(&q, &q);
        assert!((b.eigenvalues[0] - np / 2.0).abs() < 1e-12);
        assert!((b.eigenvalues[1] - nq / 2.0).abs() < 1e-12);
        for k in 0..16 {
            assert!((b.mode(0)[k].abs() - p[k].abs() / np.sqrt()).abs() < 1e-12);
            assert!((b.mean_mode[k] - mean[k]).abs() < 1e-14);
        }
        // rank of the centered data is 2
        assert!(matches!(
            build_pod(&s, 3),
            Err(RomError::Rank { achievable: 2, .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let g = grid();
        let x = g.coordinates();
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|j| {
                let t = j as f64 * 0.3;
                x.iter()
                    .map(|x| {
                        let w = 2.0 * std::f64::consts::PI * x;
                        t.sin() * w.sin() + t.cos() * (2.0 * w).cos() + 0.2 * t * (3.0 * w).sin()
                    })
                    .collect()
            })
            .collect();
        let b = build_pod(&set(&cols), 3).unwrap();
        assert!(b
            .project(&b.mean_mode, 3)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-14));
        let u: Vec<f64> = b
            .mean_mode
            .iter()
            .zip(b.mode(1))
            .map(|(m, p)| m + 3.0 * p)
            .collect();
        let a = b.project(&u, 3).unwrap();
        assert!(a[0].abs() < 1e-12 && (a[1] - 3.0).abs() < 1e-12 && a[2].abs() < 1e-12);
        assert!(b.project(&u[..4], 2).is_err());
        assert!(b.project(&u, 4).is_err());
        // sign convention
        for i in 0..3 {
            let m = b.mode(i);
            let k = (0..16)
                .max_by(|&a, &c| m[a].abs().total_cmp(&m[c].abs()))
                .unwrap();
            assert!(m[k] > 0.0);
        }
    }
}

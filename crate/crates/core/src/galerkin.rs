//! Galerkin ROM operators `a' = C + A a + a^T B a` assembled with the
//! skew-symmetric trilinear form.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim, Result};
use crate::grid::Grid1D;
use crate::par::{map_range, Parallelism};
use crate::pod::PodBasis;

/// Dense `r x r x r` tensor, index `(i, m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    r: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(r: usize) -> Self {
        Self {
            r,
            data: vec![0.0; r * r * r],
        }
    }

    pub fn from_fn(r: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(r);
        for i in 0..r {
            for m in 0..r {
                for n in 0..r {
                    t.data[(i * r + m) * r + n] = f(i, m, n);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn get(&self, i: usize, m: usize, n: usize) -> f64 {
        self.data[(i * self.r + m) * self.r + n]
    }

    #[inline]
    pub fn set(&mut self, i: usize, m: usize, n: usize, v: f64) {
        self.data[(i * self.r + m) * self.r + n] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `(a^T B a)_i = sum_{m,n} B_imn a_m a_n`.
    pub fn contract(&self, a: &[f64]) -> Vec<f64> {
        let r = self.r;
        (0..r)
            .map(|i| {
                let block = &self.data[i * r * r..(i + 1) * r * r];
                let mut s = 0.0;
                for m in 0..r {
                    let row = &block[m * r..(m + 1) * r];
                    let inner: f64 = row.iter().zip(a).map(|(b, an)| b * an).sum();
                    s += a[m] * inner;
                }
                s
            })
            .collect()
    }

    /// Matrix `Q_in = sum_m B_imn e_m`, so that `Q a` is the quadratic term
    /// with advecting coefficients frozen at `e`.
    pub fn linearized(&self, e: &[f64]) -> DMatrix<f64> {
        let r = self.r;
        DMatrix::from_fn(r, r, |i, n| (0..r).map(|m| self.get(i, m, n) * e[m]).sum())
    }

    /// Leading `r' x r' x r'` block.
    pub fn leading(&self, rp: usize) -> Self {
        Self::from_fn(rp, |i, m, n| self.get(i, m, n))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            r: self.r,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn amax(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Galerkin,
    GalerkinPlusClosure,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Galerkin => "galerkin",
            Provenance::GalerkinPlusClosure => "galerkin_plus_closure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "galerkin" => Some(Provenance::Galerkin),
            "galerkin_plus_closure" => Some(Provenance::GalerkinPlusClosure),
            _ => None,
        }
    }
}

/// `a' = C + A a + a^T B a` with `A = A_visc + A_mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub a_visc: DMatrix<f64>,
    pub a_mean: DMatrix<f64>,
    pub b: Tensor3,
    pub viscosity: f64,
    pub provenance: Provenance,
}

impl QuadraticModel {
    pub fn r(&self) -> usize {
        self.c.len()
    }

    /// Model with only the listed pieces, used in tests and by the ROM
    /// integrator for closures.
    pub fn from_parts(c: DVector<f64>, a: DMatrix<f64>, b: Tensor3) -> Self {
        let r = c.len();
        Self {
            c,
            a_visc: a.clone(),
            a,
            a_mean: DMatrix::zeros(r, r),
            b,
            viscosity: 0.0,
            provenance: Provenance::Galerkin,
        }
    }

    /// Right-hand side `C + A a + a^T B a`.
    pub fn rhs(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.r() {
            return Err(dim(format!(
                "state has {} entries, model has r = {}",
                a.len(),
                self.r()
            )));
        }
        let av = DVector::from_column_slice(a);
        let lin = &self.c + &self.a * &av;
        let quad = self.b.contract(a);
        Ok(lin.iter().zip(&quad).map(|(l, q)| l + q).collect())
    }

    /// Convective contribution beyond the constant term:
    /// `A_mean a + a^T B a`.
    pub fn convective(&self, a: &[f64]) -> Vec<f64> {
        let av = DVector::from_column_slice(a);
        let lin = &self.a_mean * av;
        lin.iter().zip(self.b.contract(a)).map(|(l, q)| l + q).collect()
    }

    /// Leading `r' x r'` truncation.
    pub fn leading(&self, rp: usize) -> Result<Self> {
        if rp == 0 || rp > self.r() {
            return Err(dim(format!("cannot truncate r = {} model to {rp}", self.r())));
        }
        Ok(Self {
            c: self.c.rows(0, rp).into_owned(),
            a: self.a.view((0, 0), (rp, rp)).into_owned(),
            a_visc: self.a_visc.view((0, 0), (rp, rp)).into_owned(),
            a_mean: self.a_mean.view((0, 0), (rp, rp)).into_owned(),
            b: self.b.leading(rp),
            viscosity: self.viscosity,
            provenance: self.provenance,
        })
    }
}

/// Skew-symmetric trilinear form `b(u, v, w) = (<u Dv, w> - <u Dw, v>) / 3`
/// evaluated from precomputed derivatives. `b(u, u, w) = <N(u), w>` for the
/// full-order convection operator.
fn trilinear(grid: &Grid1D, u: &[f64], v: &[f64], dv: &[f64], w: &[f64], dw: &[f64]) -> f64 {
    (grid.inner3(u, dv, w) - grid.inner3(u, dw, v)) / 3.0
}

/// Public form of the trilinear operator (derivatives computed here).
pub fn skew_trilinear(grid: &Grid1D, u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    trilinear(grid, u, v, &grid.central_diff(v), w, &grid.central_diff(w))
}

pub fn assemble_galerkin(basis: &PodBasis, r: usize, viscosity: f64) -> Result<QuadraticModel> {
    assemble_galerkin_with(basis, r, viscosity, Parallelism::default())
}

pub fn assemble_galerkin_with(
    basis: &PodBasis,
    r: usize,
    viscosity: f64,
    par: Parallelism,
) -> Result<QuadraticModel> {
    if r == 0 || r > basis.r_max() {
        return Err(crate::error::config(format!(
            "r = {r} exceeds basis rank {}",
            basis.r_max()
        )));
    }
    let g = &basis.grid;
    let phi: Vec<&[f64]> = (0..r).map(|i| basis.mode(i)).collect();
    let dphi: Vec<Vec<f64>> = phi.iter().map(|p| g.central_diff(p)).collect();
    let fphi: Vec<Vec<f64>> = phi.iter().map(|p| g.forward_diff(p)).collect();
    let mean = &basis.mean_mode;
    let dmean = g.central_diff(mean);
    let fmean = g.forward_diff(mean);

    let a_visc = DMatrix::from_fn(r, r, |i, m| -viscosity * g.inner(&fphi[m], &fphi[i]));
    let a_mean = DMatrix::from_fn(r, r, |i, m| {
        -trilinear(g, mean, phi[m], &dphi[m], phi[i], &dphi[i])
            - trilinear(g, phi[m], mean, &dmean, phi[i], &dphi[i])
    });
    let c = DVector::from_fn(r, |i, _| {
        -viscosity * g.inner(&fmean, &fphi[i]) - trilinear(g, mean, mean, &dmean, phi[i], &dphi[i])
    });
    let blocks = map_range(par, r, |i| {
        let mut out = vec![0.0; r * r];
        for m in 0..r {
            for n in 0..r {
                out[m * r + n] = -trilinear(g, phi[m], phi[n], &dphi[n], phi[i], &dphi[i]);
            }
        }
        out
    });
    let b = Tensor3::from_fn(r, |i, m, n| blocks[i][m * r + n]);
    Ok(QuadraticModel {
        c,
        a: &a_visc + &a_mean,
        a_visc,
        a_mean,
        b,
        viscosity,
        provenance: Provenance::Galerkin,
    })
}

//! Uniform periodic 1D grid, rectangle-rule quadrature and the finite
//! difference operators shared by the full-order solver and the Galerkin
//! assembly.

use crate::error::{config, dim, Result};

/// Uniform periodic grid on `[0, length)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    n_points: usize,
    length: f64,
    dx: f64,
    weights: Vec<f64>,
}

impl Grid1D {
    pub const MIN_POINTS: usize = 8;

    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points < Self::MIN_POINTS {
            return Err(config(format!(
                "grid needs at least {} points, got {n_points}",
                Self::MIN_POINTS
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(config(format!("grid length must be positive, got {length}")));
        }
        let dx = length / n_points as f64;
        Ok(Self {
            n_points,
            length,
            dx,
            weights: vec![dx; n_points],
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Grid coordinates `x_k = k dx`.
    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| k as f64 * self.dx).collect()
    }

    pub(crate) fn check_len(&self, u: &[f64], what: &str) -> Result<()> {
        if u.len() != self.n_points {
            return Err(dim(format!(
                "{what} has {} entries, grid has {}",
                u.len(),
                self.n_points
            )));
        }
        Ok(())
    }

    /// Weighted inner product `sum_k w_k u_k v_k`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.n_points);
        debug_assert_eq!(v.len(), self.n_points);
        // weights are uniform
        self.dx * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Weighted inner product of three fields, `sum_k w_k u_k v_k z_k`.
    pub fn inner3(&self, u: &[f64], v: &[f64], z: &[f64]) -> f64 {
        self.dx * u.iter().zip(v).zip(z).map(|((a, b), c)| a * b * c).sum::<f64>()
    }

    /// Second-order central first derivative, `(u_{k+1} - u_{k-1}) / 2dx`.
    pub fn central_diff(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n_points;
        let s = 0.5 / self.dx;
        (0..n)
            .map(|k| (u[(k + 1) % n] - u[(k + n - 1) % n]) * s)
            .collect()
    }

    /// Forward difference `(u_{k+1} - u_k) / dx`. Its weighted Gram form
    /// `<D+u, D+v>` equals `-<D2 u, v>` exactly on the periodic grid.
    pub fn forward_diff(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n_points;
        (0..n).map(|k| (u[(k + 1) % n] - u[k]) / self.dx).collect()
    }

    /// Three-point Laplacian.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n_points;
        let s = 1.0 / (self.dx * self.dx);
        (0..n)
            .map(|k| (u[(k + 1) % n] - 2.0 * u[k] + u[(k + n - 1) % n]) * s)
            .collect()
    }

    /// Skew-symmetric Burgers convection `(u Du + D(u^2)) / 3`, whose
    /// weighted inner product with `u` vanishes identically.
    pub fn convection(&self, u: &[f64]) -> Vec<f64> {
        self.linearized_convection(u, u)
    }

    /// Convection with frozen advecting field `e`:
    /// `(e Dv + D(e v)) / 3`. Linear in `v`, and `<N_e(v), v> = 0`.
    pub fn linearized_convection(&self, e: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n_points;
        let s = 1.0 / (6.0 * self.dx);
        (0..n)
            .map(|k| {
                let kp = (k + 1) % n;
                let km = (k + n - 1) % n;
                s * (e[k] * (v[kp] - v[km]) + e[kp] * v[kp] - e[km] * v[km])
            })
            .collect()
    }
}

//! Independent oracles shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romkit::closure::{
    build_regression, select_samples, RegressionData, SelectionScheme, TauMethod, TauSeries,
};
use romkit::fom::SnapshotSet;
use romkit::galerkin::Tensor3;
use romkit::harness::PreparedRun;
use romkit::linalg::lstsq;
use romkit::pod::CoefficientSeries;
use romkit::regression::{BoxProblem, ConstraintBasis};

pub fn synthetic(r: usize, k: usize, seed: u64, f: impl Fn(&[f64]) -> Vec<f64>) -> RegressionData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = DMatrix::from_fn(r, k, |_, _| rng.random_range(-1.0..1.0));
    let times: Vec<f64> = (0..k).map(|j| j as f64 * 0.01).collect();
    let mut values = DMatrix::zeros(r, k);
    for j in 0..k {
        let a: Vec<f64> = coeffs.column(j).iter().copied().collect();
        values.set_column(j, &DVector::from_vec(f(&a)));
    }
    let series = CoefficientSeries::new(times.clone(), coeffs).unwrap();
    let tau = TauSeries {
        times,
        values,
        method: TauMethod::Commutator { m: r },
    };
    build_regression(&series, &tau, &select_samples(k, SelectionScheme::Full).unwrap()).unwrap()
}

pub fn random_operators(r: usize, seed: u64) -> (DMatrix<f64>, Tensor3) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
    let mut b = Tensor3::zeros(r);
    for i in 0..r {
        for m in 0..r {
            for n in m..r {
                let v = rng.random_range(-1.0..1.0);
                b.set(i, m, n, v);
                b.set(i, n, m, v);
            }
        }
    }
    (a, b)
}

/// Feasible operators: diagonal below `-eps`, equalities by construction.
pub fn feasible_operators(r: usize, eps: f64, seed: u64) -> (DMatrix<f64>, Tensor3) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = ConstraintBasis::new(r);
    let z = DVector::from_fn(basis.n_reduced(), |c, _| {
        if c < r {
            -eps - rng.random_range(0.1..1.0)
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    basis.map.unpack(&(&basis.transform * z))
}

pub fn max_diff(a: &DMatrix<f64>, b: &Tensor3, a2: &DMatrix<f64>, b2: &Tensor3) -> f64 {
    let da = (a - a2).amax();
    let db = b
        .as_slice()
        .iter()
        .zip(b2.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    da.max(db)
}

/// Enumerates every active set of the box problem.
pub fn brute_force(p: &BoxProblem) -> (DVector<f64>, f64) {
    let n = p.matrix.ncols();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0..(1usize << n) {
        let active: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let free: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
        let mut d = DVector::from_element(n, p.upper);
        if !free.is_empty() {
            let mf = DMatrix::from_fn(p.matrix.nrows(), free.len(), |i, c| p.matrix[(i, free[c])]);
            let mut rhs = p.rhs.clone();
            for &c in &active {
                rhs -= p.matrix.column(c) * p.upper;
            }
            let x = lstsq(&mf, &rhs).unwrap();
            for (c, &i) in free.iter().enumerate() {
                d[i] = x[c];
            }
        }
        if d.iter().any(|&v| v > p.upper + 1e-12) {
            continue;
        }
        let v = p.value(&d);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((d, v));
        }
    }
    best.expect("the all-active pattern is always feasible")
}

/// Dense SVD of the weighted, centered snapshot matrix.
pub fn svd_oracle(snaps: &SnapshotSet) -> (Vec<f64>, DMatrix<f64>) {
    let n = snaps.n_points();
    let m = snaps.len();
    let dx = snaps.grid.dx();
    let mut x = snaps.data.clone();
    for k in 0..n {
        let mean = x.row(k).sum() / m as f64;
        for j in 0..m {
            x[(k, j)] -= mean;
        }
    }
    x *= (dx / m as f64).sqrt();
    let svd = x.svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = svd.u.unwrap();
    let lambda = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
    let modes = DMatrix::from_fn(n, order.len(), |k, c| u[(k, order[c])] / dx.sqrt());
    (lambda, modes)
}

/// Largest deviation, relative to `max |tau|`, of the commutator from the
/// projected difference of grid-level convection of the `m`- and `r`-mode
/// reconstructions, over every `stride`-th training sample.
pub fn tau_oracle_gap(run: &PreparedRun, r: usize, m: usize, stride: usize) -> f64 {
    let basis = &run.basis;
    let g = &basis.grid;
    let tau = run.tau(r, m).unwrap();
    let series = run.training_series(m).unwrap();
    let scale = tau.values.amax();
    let mut worst: f64 = 0.0;
    for j in (0..series.len()).step_by(stride) {
        let am = series.column(j);
        let um = basis.reconstruct(&am).unwrap();
        let ur = basis.reconstruct(&am[..r]).unwrap();
        let diff: Vec<f64> = g
            .convection(&ur)
            .iter()
            .zip(g.convection(&um))
            .map(|(a, b)| a - b)
            .collect();
        for i in 0..r {
            let want = g.inner(&diff, basis.mode(i));
            worst = worst.max((tau.values[(i, j)] - want).abs() / scale);
        }
    }
    worst
}

pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

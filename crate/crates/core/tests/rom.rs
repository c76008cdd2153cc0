use nalgebra::{DMatrix, DVector};
use romkit::fom::FomConfig;
use romkit::galerkin::{QuadraticModel, Tensor3};
use romkit::harness::PreparedRun;
use romkit::par::Parallelism;
use romkit::regression::ClosureOperators;
use romkit::rom::{compare, integrate, IdealTauTable, ModelKind, TimeSpan};

mod common;
use common::observed_orders;

fn span(t_end: f64, dt: f64) -> TimeSpan {
    TimeSpan {
        t_start: 0.0,
        t_end,
        dt,
    }
}

fn damped_rotation() -> QuadraticModel {
    let a = DMatrix::from_row_slice(2, 2, &[-0.5, 2.0, -2.0, -0.5]);
    QuadraticModel::from_parts(DVector::zeros(2), a, Tensor3::zeros(2))
}

#[test]
fn second_order_on_linear_problem() {
    let model = damped_rotation();
    let t: f64 = 2.0;
    let exact = [
        (-0.5 * t).exp() * (2.0 * t).cos(),
        -(-0.5 * t).exp() * (2.0 * t).sin(),
    ];
    let errors: Vec<f64> = [0.02, 0.01, 0.005, 0.0025]
        .iter()
        .map(|&dt| {
            let tr = integrate(&model, None, None, &[1.0, 0.0], None, span(t, dt)).unwrap();
            let last = tr.coeffs.column(tr.len() - 1);
            ((last[0] - exact[0]).powi(2) + (last[1] - exact[1]).powi(2)).sqrt()
        })
        .collect();
    for p in observed_orders(&errors) {
        assert!((1.8..=2.2).contains(&p), "order {p} from {errors:?}");
    }
}

fn rk4(model: &QuadraticModel, a0: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let h = t / steps as f64;
    let f = |a: &[f64]| model.rhs(a).unwrap();
    let add =
        |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, y)| x + s * y).collect() };
    let mut a = a0.to_vec();
    for _ in 0..steps {
        let k1 = f(&a);
        let k2 = f(&add(&a, &k1, h / 2.0));
        let k3 = f(&add(&a, &k2, h / 2.0));
        let k4 = f(&add(&a, &k3, h));
        for i in 0..a.len() {
            a[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    a
}

#[test]
fn second_order_on_quadratic_problem() {
    let run = PreparedRun::prepare(&FomConfig::desk_default(), 6, 1.0, Parallelism::default()).unwrap();
    let model = run.model(6).unwrap();
    let a0 = run.training_series(6).unwrap().column(0);
    let t = 0.2;
    let exact = rk4(&model, &a0, t, 20_000);
    let errors: Vec<f64> = [4e-3, 2e-3, 1e-3, 5e-4]
        .iter()
        .map(|&dt| {
            let tr = integrate(&model, None, None, &a0, None, span(t, dt)).unwrap();
            let last = tr.coeffs.column(tr.len() - 1);
            (0..6).map(|i| (last[i] - exact[i]).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    for p in observed_orders(&errors) {
        assert!((1.8..=2.2).contains(&p), "order {p} from {errors:?}");
    }
}

#[test]
fn zero_ideal_table_reproduces_galerkin_bitwise() {
    let run = PreparedRun::prepare(&FomConfig::desk_default(), 6, 1.0, Parallelism::default()).unwrap();
    let model = run.model(4).unwrap();
    let series = run.training_series(4).unwrap();
    let s = run.span(1.0);
    let table = IdealTauTable::new(series.times.clone(), DMatrix::zeros(4, series.len())).unwrap();
    let a0 = series.column(0);
    let g = integrate(&model, None, None, &a0, None, s).unwrap();
    let i = integrate(&model, None, Some(&table), &a0, None, s).unwrap();
    assert_eq!(g.coeffs, i.coeffs);
    assert_eq!(g.model_kind, ModelKind::Grom);
    assert_eq!(i.model_kind, ModelKind::Ideal);
    let z = ClosureOperators::zeros(4);
    let c = integrate(&model, Some(&z), None, &a0, None, s).unwrap();
    assert_eq!(g.coeffs, c.coeffs);
}

#[test]
fn ideal_run_stops_at_table_end() {
    let model = damped_rotation();
    let times: Vec<f64> = (0..11).map(|j| j as f64 * 0.1).collect();
    let table = IdealTauTable::new(times, DMatrix::zeros(2, 11)).unwrap();
    let tr = integrate(&model, None, Some(&table), &[1.0, 0.0], None, span(3.0, 0.1)).unwrap();
    assert_eq!(tr.len(), 11);
    assert!(tr.blowup.is_none());
    assert!((table.at(0.05).unwrap()).amax() == 0.0);
    assert!(table.at(1.5).is_none());
}

#[test]
fn blowup_is_flagged_and_scored_infinite() {
    let model = QuadraticModel::from_parts(
        DVector::zeros(1),
        DMatrix::zeros(1, 1),
        Tensor3::from_fn(1, |_, _, _| 1.0),
    );
    // a' = a^2 from a0 = 1 blows up at t = 1.
    let tr = integrate(&model, None, None, &[1.0], None, span(3.0, 0.01)).unwrap();
    assert!(tr.blowup.is_some());
    let reference =
        romkit::pod::CoefficientSeries::new(vec![0.0, 1.0], DMatrix::from_element(1, 2, 1.0)).unwrap();
    let cmp = compare(&tr, &reference).unwrap();
    assert!(cmp.blowup && cmp.energy_error.is_infinite() && cmp.coeff_error.is_infinite());
    let err = tr.into_result().unwrap_err();
    assert!(err.is_numerical());
}

#[test]
fn perfect_trajectory_scores_zero() {
    let model = damped_rotation();
    let tr = integrate(&model, None, None, &[1.0, 0.0], None, span(1.0, 0.1)).unwrap();
    let reference = romkit::pod::CoefficientSeries::new(tr.times.clone(), tr.coeffs.clone()).unwrap();
    let cmp = compare(&tr, &reference).unwrap();
    assert_eq!(cmp.energy_error, 0.0);
    assert_eq!(cmp.coeff_error, 0.0);
    assert_eq!(cmp.samples, tr.len());
}

#[test]
fn dissipative_closure_damps_energy() {
    let model = QuadraticModel::from_parts(
        DVector::zeros(2),
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        Tensor3::zeros(2),
    );
    let mut ops = ClosureOperators::zeros(2);
    ops.a_tilde = DMatrix::identity(2, 2) * -0.1;
    ops.constrained = true;
    let tr = integrate(&model, Some(&ops), None, &[1.0, 0.0], None, span(5.0, 0.01)).unwrap();
    assert_eq!(tr.model_kind, ModelKind::Cddf);
    assert!(tr.energy.windows(2).skip(1).all(|w| w[1] <= w[0]));
}

#[test]
fn input_validation() {
    let model = damped_rotation();
    assert!(integrate(&model, None, None, &[1.0], None, span(1.0, 0.1)).is_err());
    assert!(integrate(&model, None, None, &[1.0, 0.0], None, span(1.0, 0.0)).is_err());
    let table = IdealTauTable::new(vec![0.0, 1.0], DMatrix::zeros(2, 2)).unwrap();
    let ops = ClosureOperators::zeros(2);
    assert!(integrate(
        &model,
        Some(&ops),
        Some(&table),
        &[1.0, 0.0],
        None,
        span(1.0, 0.1)
    )
    .is_err());
    assert!(IdealTauTable::new(vec![1.0, 0.0], DMatrix::zeros(2, 2)).is_err());
}

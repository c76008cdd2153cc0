use romkit::closure::SelectionScheme;
use romkit::harness::{
    run_predictive, run_reproductive, smoke_plan, ExperimentPlan, PreparedRun, CSV_HEADER,
};
use romkit::par::Parallelism;
use romkit::rom::{compare_until, integrate, IdealTauTable, ModelKind};

#[test]
fn predictive_full_scheme_matches_reproductive() {
    let plan = smoke_plan();
    let pred = run_predictive(&plan).unwrap();
    let repr = run_reproductive(&plan).unwrap();
    let full: Vec<_> = pred
        .records
        .iter()
        .filter(|r| r.config.scheme == SelectionScheme::Full)
        .collect();
    assert_eq!(full.len(), repr.records.len());
    for (a, b) in full.iter().zip(&repr.records) {
        assert!(a.same_outcome(b), "{a:?}\n{b:?}");
    }
}

#[test]
fn sequential_and_parallel_sweeps_agree_bitwise() {
    let mut plan = smoke_plan();
    plan.parallelism = Parallelism::Sequential;
    plan.threads = 1;
    let seq = run_predictive(&plan).unwrap();
    plan.parallelism = Parallelism::Parallel;
    plan.threads = 3;
    let par = run_predictive(&plan).unwrap();
    assert_eq!(seq.records.len(), par.records.len());
    for (a, b) in seq.records.iter().zip(&par.records) {
        assert!(a.same_outcome(b));
    }
    assert_eq!(seq.to_csv().lines().next(), Some(CSV_HEADER));
}

#[test]
fn every_configuration_has_every_kind() {
    let plan = smoke_plan();
    let rep = run_predictive(&plan).unwrap();
    let configs = plan.configurations(&plan.schemes);
    assert_eq!(rep.records.len(), 4 * configs.len());
    for c in &configs {
        for kind in [ModelKind::Grom, ModelKind::Ddf, ModelKind::Cddf, ModelKind::Ideal] {
            let rec = rep.find(c, kind).expect("record present");
            assert!(rec.error.is_none(), "{rec:?}");
            assert!(rec.energy_error.is_finite());
            if kind == ModelKind::Cddf {
                assert!(rec.constraint_violation <= 1e-10);
            } else {
                assert!(rec.constraint_violation.is_nan());
            }
        }
    }
}

#[test]
fn predictive_needs_a_held_out_scheme() {
    let mut plan = smoke_plan();
    plan.schemes = vec![SelectionScheme::Full];
    assert!(run_predictive(&plan).is_err());
    assert!(run_reproductive(&plan).is_ok());
}

#[test]
fn invalid_plans_are_rejected() {
    let base = smoke_plan();
    let mut p = base.clone();
    p.r_values = vec![6];
    assert!(run_predictive(&p).is_err(), "m = r + offset exceeds r_max");
    let mut p = base.clone();
    p.tol_grid = vec![1.5];
    assert!(p.validate().is_err());
    let mut p = base;
    p.epsilon_grid = vec![-1.0];
    assert!(p.validate().is_err());
}

/// The ideal model at the largest available `m` is a floor on the training
/// window for the trained closures at r = 2 and r = 4. (At r = 6 one trained
/// configuration edges below it; the same-`m` ideal is no floor at all, since
/// it omits the viscous coupling and the modes beyond `m`.)
#[test]
fn ideal_at_full_resolution_bounds_trained_models() {
    let plan = ExperimentPlan::desk_default();
    let rep = run_predictive(&plan).unwrap();
    let run = PreparedRun::prepare(&plan.fom, plan.r_max, plan.horizon_multiplier, plan.parallelism).unwrap();
    for r in [2, 4] {
        let table = IdealTauTable::from_tau(&run.tau(r, plan.r_max).unwrap()).unwrap();
        let a0 = run.training_series(r).unwrap().column(0);
        let traj = integrate(
            &run.model(r).unwrap(),
            None,
            Some(&table),
            &a0,
            None,
            run.span(1.0),
        )
        .unwrap();
        let floor = compare_until(&traj, &run.reference(r).unwrap(), Some(run.t_train_end()))
            .unwrap()
            .energy_error;
        for rec in rep.records.iter().filter(|x| x.config.r == r) {
            if matches!(rec.kind, ModelKind::Ddf | ModelKind::Cddf) {
                assert!(rec.train_energy_error >= floor - 1e-8, "{rec:?} beats {floor:e}");
            }
        }
    }
}

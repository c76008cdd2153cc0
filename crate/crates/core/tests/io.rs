use std::path::Path;

use nalgebra::DMatrix;
use proptest::prelude::*;
use romkit::closure::{build_regression, select_samples, SelectionScheme};
use romkit::fom::run_fom;
use romkit::galerkin::Tensor3;
use romkit::harness::smoke_plan;
use romkit::io::*;
use romkit::pod::build_pod;
use romkit::regression::{solve_constrained, ClosureOperators};
use romkit::rom::{integrate, TimeSpan};
use romkit::RomError;

#[test]
fn pipeline_artifacts_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fom = smoke_plan().fom;
    let snaps = run_fom(&fom).unwrap();
    let basis = build_pod(&snaps, 6).unwrap();
    let model_m = romkit::galerkin::assemble_galerkin(&basis, 5, fom.viscosity).unwrap();
    let model = model_m.leading(2).unwrap();
    let sm = romkit::pod::project_series(&basis, &snaps, 5).unwrap();
    let s = sm.truncated(2).unwrap();
    let tau = romkit::closure::compute_tau_commutator(&sm, &s, &model_m, &model).unwrap();
    let data = build_regression(&s, &tau, &select_samples(s.len(), SelectionScheme::Full).unwrap()).unwrap();
    let (ops, _) = solve_constrained(&data, 1e-4, 1e-3).unwrap();
    let span = TimeSpan {
        t_start: s.times[0],
        t_end: s.times[0] + 0.3,
        dt: fom.dt,
    };
    let traj = integrate(&model, Some(&ops), None, &s.column(0), None, span).unwrap();

    write_snapshots(&d.join("s.txt"), &snaps).unwrap();
    assert_eq!(read_snapshots(&d.join("s.txt")).unwrap(), snaps);
    write_pod(&d.join("p.txt"), &basis).unwrap();
    assert_eq!(read_pod(&d.join("p.txt")).unwrap(), basis);
    write_operators(&d.join("o.txt"), &model).unwrap();
    assert_eq!(read_operators(&d.join("o.txt")).unwrap(), model);
    write_tau(&d.join("t.txt"), &tau).unwrap();
    assert_eq!(read_tau(&d.join("t.txt")).unwrap(), tau);
    write_closure(&d.join("c.txt"), &ops).unwrap();
    assert_eq!(read_closure(&d.join("c.txt")).unwrap(), ops);
    write_trajectory(&d.join("j.txt"), &traj).unwrap();
    assert_eq!(read_trajectory(&d.join("j.txt")).unwrap(), traj);

    // Re-rendering a parsed file reproduces it byte for byte.
    let text = std::fs::read_to_string(d.join("o.txt")).unwrap();
    assert_eq!(
        render_operators(&parse_operators(&text, Path::new("o")).unwrap()),
        text
    );
    // No temporary files are left behind.
    assert_eq!(std::fs::read_dir(d).unwrap().count(), 6);
}

#[test]
fn corrupted_value_names_its_line() {
    let snaps = run_fom(&smoke_plan().fom).unwrap();
    let text = render_snapshots(&snaps);
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let target = lines.len() / 2;
    lines[target] = lines[target].replacen(char::is_numeric, "x", 1);
    let bad = lines.join("\n") + "\n";
    match parse_snapshots(&bad, Path::new("snap.txt")).unwrap_err() {
        RomError::Format { line, .. } => assert_eq!(line, target + 1),
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn wrong_magic_and_version() {
    let ops = ClosureOperators::zeros(2);
    let text = render_closure(&ops);
    let err = parse_closure(&text.replacen("ROMCLS 1", "ROMCLS 2", 1), Path::new("c")).unwrap_err();
    assert!(matches!(err, RomError::Version { .. }));
    let err = parse_tau(&text, Path::new("c")).unwrap_err();
    assert!(matches!(err, RomError::Format { line: 1, .. }));
    let err = parse_closure(&(text.clone() + "1.0\n"), Path::new("c")).unwrap_err();
    assert!(matches!(err, RomError::Format { .. }));
    assert!(read_closure(Path::new("/nonexistent/closure.txt")).is_err());
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e300f64..1e300,
        -1.0f64..1.0,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(5e-324),
        Just(f64::MAX),
    ]
}

proptest! {
    #[test]
    fn closure_round_trip_is_exact(
        r in 1usize..4,
        vals in prop::collection::vec(finite(), 40),
        eps in 0.0f64..1.0,
        kept in 0usize..100,
    ) {
        let a = DMatrix::from_fn(r, r, |i, j| vals[i * r + j]);
        let b = Tensor3::from_fn(r, |i, m, n| vals[9 + i * r * r + m * r + n]);
        let ops = ClosureOperators {
            a_tilde: a,
            b_tilde: b,
            constrained: kept % 2 == 0,
            epsilon: eps,
            tol: vals[39].abs().min(0.5),
            residual: vals[38].abs(),
            kept_rank: kept,
        };
        let text = render_closure(&ops);
        let back = parse_closure(&text, Path::new("p")).unwrap();
        prop_assert_eq!(render_closure(&back), text);
        for (x, y) in back.a_tilde.iter().zip(ops.a_tilde.iter()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in back.b_tilde.as_slice().iter().zip(ops.b_tilde.as_slice()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        prop_assert_eq!(back.kept_rank, kept);
    }
}

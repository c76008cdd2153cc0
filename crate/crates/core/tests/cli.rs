use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use romkit::cli::{closure_file, trajectory_file, OPERATORS_FILE, REPORT_CSV};
use romkit::galerkin::Tensor3;
use romkit::io::{read_closure, read_operators, read_trajectory, write_closure};
use romkit::rom::ModelKind;

const SMALL: &str = "\
n_points = 64
length = 1.0
viscosity = 1e-2
dt = 0.005
t_end = 0.5
initial_condition = sine
ic_amplitude = 0.25
ic_offset = 1.0
snapshot_start = 0.0
snapshot_stop = 0.5
r_max = 6
r_values = 2
m_offsets = 1, 3
tol_grid = 1e-2, 1e-4
epsilon_grid = 0, 1e-3
schemes = full, equally_spaced:4
horizon_multiplier = 1.5
stability_multiplier = 2
threads = 2
seed = 7
r = 2
m = 5
tol = 1e-4
epsilon = 1e-3
";

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    let text = format!("{SMALL}{extra}output_dir = {}\n", dir.join("out").display());
    std::fs::write(&path, text).unwrap();
    path
}

fn romkit(stage: &str, cfg: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_romkit"))
        .args([stage, "--config"])
        .arg(cfg)
        .output()
        .unwrap()
}

fn status(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .last()
        .unwrap_or("")
        .to_string()
}

#[test]
fn full_pipeline_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    std::fs::create_dir_all(dir.path().join("out")).unwrap();
    for (stage, files) in [("generate", 1), ("train", 5), ("simulate", 1), ("report", 2)] {
        let out = romkit(stage, &cfg);
        let line = status(&out);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{stage}: {line} / {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(
            line.starts_with(&format!("status=ok stage={stage} files={files}")),
            "{line}"
        );
    }
    let traj = read_trajectory(&dir.path().join("out").join(trajectory_file(ModelKind::Cddf))).unwrap();
    assert!(traj.blowup.is_none());
    let csv = std::fs::read_to_string(dir.path().join("out").join(REPORT_CSV)).unwrap();
    // header + 2 schemes x 2 m x 2 tol x 2 eps configurations x 4 kinds
    assert_eq!(csv.lines().count(), 1 + 16 * 4);
}

#[test]
fn stage_out_of_order_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = romkit("train", &cfg);
    assert_eq!(out.status.code(), Some(1));
    let line = status(&out);
    assert!(
        line.starts_with("status=error stage=train kind=validation"),
        "{line}"
    );
    assert!(line.contains("snapshots.txt"));
}

#[test]
fn bad_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "colour = blue\n");
    let out = romkit("generate", &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(status(&out).contains("unknown key"));
    let out = romkit("generate", &dir.path().join("missing.cfg"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergent_model_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "model = ddf\nsimulate_multiplier = 4\n");
    std::fs::create_dir_all(dir.path().join("out")).unwrap();
    assert_eq!(romkit("generate", &cfg).status.code(), Some(0));
    assert_eq!(romkit("train", &cfg).status.code(), Some(0));
    // Replace the trained closure with one that cancels the quadratic term
    // and adds linear growth; the linearized step would otherwise saturate.
    let out_dir = dir.path().join("out");
    let model = read_operators(&out_dir.join(OPERATORS_FILE)).unwrap();
    let path = out_dir.join(closure_file(ModelKind::Ddf));
    let mut ops = read_closure(&path).unwrap();
    ops.a_tilde = DMatrix::identity(2, 2) * 100.0 - &model.a;
    ops.b_tilde = Tensor3::from_fn(2, |i, m, n| -model.b.get(i, m, n));
    write_closure(&path, &ops).unwrap();
    let out = romkit("simulate", &cfg);
    assert_eq!(out.status.code(), Some(2));
    let line = status(&out);
    assert!(
        line.starts_with("status=error stage=simulate kind=numerical"),
        "{line}"
    );
    // The diverged trajectory is still written for inspection.
    let traj = read_trajectory(&dir.path().join("out").join(trajectory_file(ModelKind::Ddf))).unwrap();
    assert!(traj.blowup.is_some());
}

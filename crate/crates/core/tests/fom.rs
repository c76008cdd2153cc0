use romkit::fom::{burgers_rhs, kinetic_energy, run_fom, FomConfig, InitialCondition};
use romkit::grid::Grid1D;

fn sine_config(n: usize, nu: f64, dt: f64, t_end: f64) -> FomConfig {
    FomConfig {
        grid: Grid1D::new(n, 1.0).unwrap(),
        viscosity: nu,
        dt,
        t_end,
        initial_condition: InitialCondition::Sine {
            amplitude: 1.0,
            wavenumber: 1,
            offset: 0.0,
        },
        snapshot_window: (0.0, t_end),
        snapshot_stride: 1,
    }
}

fn rk4(grid: &Grid1D, nu: f64, u0: &[f64], dt: f64, steps: usize) -> Vec<Vec<f64>> {
    let axpy =
        |u: &[f64], k: &[f64], h: f64| -> Vec<f64> { u.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let mut u = u0.to_vec();
    let mut out = vec![u.clone()];
    for _ in 0..steps {
        let k1 = burgers_rhs(grid, nu, &u);
        let k2 = burgers_rhs(grid, nu, &axpy(&u, &k1, dt / 2.0));
        let k3 = burgers_rhs(grid, nu, &axpy(&u, &k2, dt / 2.0));
        let k4 = burgers_rhs(grid, nu, &axpy(&u, &k3, dt));
        for k in 0..u.len() {
            u[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        out.push(u.clone());
    }
    out
}

#[test]
fn energy_matches_fine_rk4_reference() {
    let cfg = sine_config(256, 1e-3, 0.002, 0.12);
    let snaps = run_fom(&cfg).unwrap();
    let grid = &cfg.grid;
    let u0 = cfg.initial_condition.sample(grid);
    let sub = 40;
    let reference = rk4(grid, 1e-3, &u0, 0.002 / sub as f64, 60 * sub);
    let mut worst: f64 = 0.0;
    for j in 0..snaps.len() {
        let e = kinetic_energy(&snaps.snapshot(j), grid).unwrap();
        let e_ref = kinetic_energy(&reference[j * sub], grid).unwrap();
        worst = worst.max(((e - e_ref) / e_ref).abs());
    }
    assert!(worst <= 1e-4, "relative energy gap {worst:e}");
}

#[test]
fn energy_non_increasing_after_bootstrap() {
    for cfg in [sine_config(256, 1e-3, 0.002, 0.4), FomConfig::desk_default()] {
        let mut cfg = cfg;
        cfg.snapshot_window = (0.0, cfg.t_end);
        let snaps = run_fom(&cfg).unwrap();
        let e: Vec<f64> = (0..snaps.len())
            .map(|j| kinetic_energy(&snaps.snapshot(j), &cfg.grid).unwrap())
            .collect();
        for j in 2..e.len() - 1 {
            assert!(
                e[j + 1] <= e[j] * (1.0 + 1e-10),
                "energy rose at step {}: {} -> {}",
                j + 1,
                e[j],
                e[j + 1]
            );
        }
    }
}

#[test]
fn second_order_in_space_and_time() {
    // Smooth regime: large viscosity, short horizon.
    let nu = 2e-2;
    let t = 0.1;
    let fine = run_fom(&sine_config(1024, nu, 0.1 / 512.0, t)).unwrap();
    let u_ref = fine.snapshot(fine.len() - 1);
    let mut errors = Vec::new();
    for (n, steps) in [(32usize, 16usize), (64, 32), (128, 64)] {
        let s = run_fom(&sine_config(n, nu, t / steps as f64, t)).unwrap();
        let u = s.snapshot(s.len() - 1);
        let stride = 1024 / n;
        let err = (0..n)
            .map(|k| (u[k] - u_ref[k * stride]).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(
            (1.7..=2.3).contains(&order),
            "observed order {order} from {errors:?}"
        );
    }
}

#[test]
fn default_window_snapshot_count() {
    let cfg = FomConfig::desk_default();
    let s = run_fom(&cfg).unwrap();
    let (t0, t1) = cfg.snapshot_window;
    assert_eq!(s.len(), ((t1 - t0) / cfg.dt).round() as usize + 1);
    assert!((s.t0() - t0).abs() < 1e-12);
    for w in s.times.windows(2) {
        assert!((w[1] - w[0] - cfg.dt).abs() < 1e-12);
    }
}

#[test]
fn bitwise_deterministic() {
    let cfg = sine_config(64, 1e-2, 0.01, 0.2);
    assert_eq!(run_fom(&cfg).unwrap(), run_fom(&cfg).unwrap());
}

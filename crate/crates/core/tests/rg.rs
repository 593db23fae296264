use feshrg::fock::{AngularMode, ModeGrid};
use feshrg::num::{c, RGrid};
use feshrg::rg::{contraction_audit, e_rho, free_family, invert_e_rho, iterate_to_ground, RGConfig, RGTrace};

fn setup() -> (ModeGrid, RGConfig, RGrid) {
    let cfg = RGConfig::default();
    let grid = ModeGrid::build(2, cfg.rho, 1.0, AngularMode::Radial).unwrap();
    let rgrid = RGrid::new(cfg.n_r);
    (grid, cfg, rgrid)
}

#[test]
fn free_family_is_a_fixed_point() {
    let (grid, cfg, rgrid) = setup();
    let f = free_family(grid.n_modes(), &rgrid, &cfg, c(0.0, 0.0));
    let run = iterate_to_ground(&f, &grid, &cfg).unwrap();
    assert_eq!(run.iterations, 0);
    assert!(run.e0.norm() < 1e-15, "{}", run.e0);
}

#[test]
fn shifted_free_family_returns_the_shift() {
    let (grid, cfg, rgrid) = setup();
    let shift = c(0.004, -0.002);
    let f = free_family(grid.n_modes(), &rgrid, &cfg, shift);
    let run = iterate_to_ground(&f, &grid, &cfg).unwrap();
    assert!((run.e0 - shift).norm() < 1e-12, "{}", run.e0);
}

#[test]
fn energy_rescaling_inverse_round_trip() {
    let (grid, cfg, rgrid) = setup();
    let f = free_family(grid.n_modes(), &rgrid, &cfg, c(0.001, 0.0));
    let e = e_rho(&f, cfg.rho);
    for u in [c(0.0, 0.0), c(0.01, 0.005), c(-0.02, -0.01)] {
        let z = invert_e_rho(&e, u).unwrap();
        assert!((e.eval(z) - u).norm() < 1e-12);
    }
}

fn trace(d2: &[f64], d3: &[f64]) -> RGTrace {
    RGTrace {
        delta1: vec![0.0; d2.len()],
        delta2: d2.to_vec(),
        delta3: d3.to_vec(),
        ..RGTrace::default()
    }
}

#[test]
fn audit_accepts_halving_and_rejects_stalls() {
    let eps0 = RGConfig::default().eps0;
    let good = trace(&[1e-3, 4e-4, 2e-4, 1e-4], &[1e-3, 5e-4, 2.5e-4, 1.2e-4]);
    assert!(contraction_audit(&good, eps0));
    let stalled = trace(&[1e-3, 4e-4, 2e-4, 1e-4], &[1e-3, 5e-4, 4e-4, 1e-4]);
    assert!(!contraction_audit(&stalled, eps0));
    let floored = trace(&[1e-3, 1e-14, 2e-14, 5e-15], &[1e-3, 5e-4, 2.5e-4, 1e-4]);
    assert!(contraction_audit(&floored, eps0));
    assert!(!contraction_audit(&trace(&[1e-3, 1e-4], &[1e-3, 1e-4]), eps0));
    let mut wide = good.clone();
    wide.delta1[0] = eps0;
    assert!(!contraction_audit(&wide, eps0));
}

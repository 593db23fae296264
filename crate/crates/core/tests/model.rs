use feshrg::fock::{AngularMode, FockBasis, ModeGrid};
use feshrg::linalg;
use feshrg::model::{
    assemble_hamiltonian, atomic_ground, exact_ground, normalize_gap, riesz_projection, vacuum_shift, AtomSpec,
    CouplingSpec, RIESZ_NODES,
};
use feshrg::num::{c, CMat};
use feshrg::pipeline::ground_state;
use feshrg::rg::RGConfig;

fn radial(j: usize) -> ModeGrid {
    ModeGrid::build(j, 0.25, 1.0, AngularMode::Radial).unwrap()
}

#[test]
fn gap_normalization() {
    let a = AtomSpec::hydrogen_radial(60, 15.0).unwrap();
    let n = normalize_gap(&a).unwrap();
    assert!((n.gap() - 1.0).abs() < 1e-10, "gap {}", n.gap());
    assert!((n.scale * a.gap() - 1.0).abs() < 1e-10);
}

#[test]
fn riesz_projection_on_diagonal_matrix() {
    let h = linalg::real_diag(&[0.0, 1.0, 2.5]);
    let p = riesz_projection(&h, c(0.0, 0.0), 0.5, RIESZ_NODES).unwrap();
    let mut want = CMat::zeros(3, 3);
    want[(0, 0)] = c(1.0, 0.0);
    assert!(linalg::max_abs(&(&p - &want)) < 1e-12);
    assert!(riesz_projection(&h, c(0.0, 0.0), 1.0, RIESZ_NODES).is_err());
}

#[test]
fn atomic_ground_is_dilation_invariant() {
    let a = AtomSpec::matrix_toy();
    let e = atomic_ground(&a, c(0.0, 0.0), c(0.0, 0.0), RIESZ_NODES).unwrap().energy;
    let et = atomic_ground(&a, c(0.1, 0.07), c(0.03, -0.02), RIESZ_NODES).unwrap().energy;
    assert!((e - et).norm() < 1e-12, "{e} vs {et}");
}

#[test]
fn vacuum_shift_scales_as_g_squared() {
    let grid = radial(4);
    let s1 = vacuum_shift(&CouplingSpec::new(c(0.05, 0.0), c(0.0, 0.0), c(0.0, 0.0)), &grid);
    let s2 = vacuum_shift(&CouplingSpec::new(c(0.1, 0.0), c(0.0, 0.0), c(0.0, 0.0)), &grid);
    assert!((s2 - s1 * 4.0).norm() < 1e-15);
    assert!(s1.re > 0.0 && s1.im == 0.0);
}

#[test]
fn uncoupled_hamiltonian_is_atom_plus_field() {
    let a = AtomSpec::matrix_toy();
    let grid = radial(2);
    let basis = FockBasis::new(&grid, 2);
    let cs = CouplingSpec::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
    let h = assemble_hamiltonian(&a, &cs, &grid, &basis).unwrap();
    let ev = linalg::eigenvalues(&h);
    let lowest = ev.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    assert!(lowest.abs() < 1e-12);
    assert!(linalg::max_abs(&(&h - h.adjoint())) < 1e-13);
}

#[test]
fn coupled_energy_is_conjugation_symmetric() {
    let a = AtomSpec::matrix_toy();
    let grid = radial(2);
    let basis = FockBasis::new(&grid, 2);
    let g = c(0.03, 0.02);
    let e1 = exact_ground(&a, &CouplingSpec::new(g, c(0.0, 0.0), c(0.0, 0.0)), &grid, &basis).unwrap();
    let e2 = exact_ground(&a, &CouplingSpec::new(g.conj(), c(0.0, 0.0), c(0.0, 0.0)), &grid, &basis).unwrap();
    assert!((e1.energy - e2.energy.conj()).norm() < 1e-12, "{} {}", e1.energy, e2.energy);
}

#[test]
fn zero_coupling_gives_atomic_energy_without_iterating() {
    let a = AtomSpec::matrix_toy();
    let cfg = RGConfig::default();
    let grid = ModeGrid::build(1, cfg.rho, 1.0, AngularMode::Radial).unwrap();
    let cs = CouplingSpec::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
    let gs = ground_state(&a, &cs, &grid, &cfg, 2, false).unwrap();
    assert_eq!(gs.iterations, 0);
    assert!(gs.e0.norm() < 1e-14);
    assert!(gs.energy.norm() < 1e-14);
    assert!(gs.residual < 1e-12);
}

#[test]
fn kernel_route_matches_dense_oracle_on_small_grid() {
    let a = AtomSpec::matrix_toy();
    let cfg = RGConfig::default();
    let grid = ModeGrid::build(2, cfg.rho, 1.0, AngularMode::Radial).unwrap();
    let cs = CouplingSpec::new(c(0.05, 0.0), c(0.0, 0.0), c(0.0, 0.0));
    let gs = ground_state(&a, &cs, &grid, &cfg, 3, true).unwrap();
    let o = gs.oracle.unwrap();
    assert!((gs.energy - o.energy).norm() < 1e-6, "{} vs {}", gs.energy, o.energy);
    assert!(gs.residual < 1e-6);
}

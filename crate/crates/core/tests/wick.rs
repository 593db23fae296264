use feshrg::fock::{AngularMode, FockBasis, ModeGrid};
use feshrg::kernels::{to_operator, Kernel, KernelSeq};
use feshrg::num::{c, Dual, RGrid};
use feshrg::wick::{direct_product, neumann_terms, normal_order, normal_order_all, Interaction, NeumannSetup, Profile};

fn cutoff_cubic(x: f64) -> Dual {
    if x >= 1.0 {
        Dual::ZERO
    } else {
        let y = 1.0 - x;
        Dual::real(y * y * y, -3.0 * y * y)
    }
}

fn bump_mid(x: f64) -> Dual {
    if x >= 1.0 {
        Dual::ZERO
    } else {
        let y = 1.0 - x;
        Dual::real(0.7 * y * y * y * (1.0 + x), 0.7 * (-3.0 * y * y * (1.0 + x) + y * y * y))
    }
}

fn test_interaction(grid: &ModeGrid, rg: &RGrid) -> KernelSeq {
    let nm = grid.n_modes();
    let mut w = KernelSeq::new(nm, rg, 0.25, 2);
    let coef = |legs: &[usize]| legs.iter().map(|&j| 0.3 + 0.17 * j as f64).product::<f64>();
    for (m, n) in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)] {
        w.insert(Kernel::from_fn(m, n, nm, rg, |r, o, i| {
            let a = coef(o) * coef(i) * if m == 1 && n == 1 { 1.3 } else { 0.8 };
            Dual::real(a * (1.0 + 0.5 * r - 0.3 * r * r), a * (0.5 - 0.6 * r))
        }));
    }
    w
}

#[test]
fn explicit_normal_order_matches_direct_product() {
    let grid = ModeGrid::build(1, 0.5, 1.0, AngularMode::Radial).unwrap();
    let rg = RGrid::new(65);
    let w = test_interaction(&grid, &rg);
    let target = FockBasis::with_cutoff(&grid, 2, 1.0);
    for l in 1..=2 {
        let mut f: Vec<Profile> = vec![&cutoff_cubic];
        for _ in 1..l {
            f.push(&bump_mid);
        }
        f.push(&cutoff_cubic);
        let direct = direct_product(&f, &w, &grid, &target).unwrap();
        let seq = normal_order_all(&f, &w, l, &grid).unwrap();
        let op = to_operator(&seq, &grid, &target).unwrap();
        let diff = feshrg::linalg::max_abs(&(&op.mat - &direct));
        assert!(diff < 1e-12 * (1.0 + feshrg::linalg::max_abs(&direct)), "L = {l}: {diff}");
    }
}

#[test]
fn tagged_chain_matches_explicit_contractions() {
    let grid = ModeGrid::build(1, 0.5, 1.0, AngularMode::Radial).unwrap();
    let rg = RGrid::new(65);
    let w = test_interaction(&grid, &rg);
    let inter = Interaction::scalar(&w);
    let mid = |x: f64| vec![bump_mid(x)];
    let setup = NeumannSetup {
        grid: &grid,
        w: &inter,
        f_end: &cutoff_cubic,
        f_mid: &mid,
        start: vec![c(1.0, 0.0)],
        end: vec![c(1.0, 0.0)],
        r_out: rg.points(),
        out_modes: (0..grid.n_modes()).collect(),
        m_out: 2,
        l_max: 3,
        cap: 3,
        xi: 0.25,
    };
    let terms = neumann_terms(&setup).unwrap();
    for l in 1..=3 {
        let mut f: Vec<Profile> = vec![&cutoff_cubic];
        for _ in 1..l {
            f.push(&bump_mid);
        }
        f.push(&cutoff_cubic);
        for (&(m, n), k) in &terms[l - 1] {
            let ex = normal_order(&f, &w, l, (m, n), &grid).unwrap();
            let scale = 1.0 + ex.sup_norm();
            assert!(k.max_diff(&ex) < 1e-12 * scale, "L = {l} ({m},{n}): {}", k.max_diff(&ex));
        }
    }
}

use feshrg::checks::{planted_feshbach, random_kernel};
use feshrg::feshbach::{feshbach_map, smooth_chi, ChiOps};
use feshrg::fock::{annihilation, block, creation, AngularMode, FockBasis, ModeGrid};
use feshrg::kernels::checkpoint::Checkpoint;
use feshrg::kernels::zfamily::ScalarFamily;
use feshrg::kernels::{kernel_operator, KernelSeq, ZFamily};
use feshrg::linalg::{self, op_norm};
use feshrg::num::{c, fmt_g17, RGrid, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ccr_holds_below_the_cutoff(j in 1usize..3, n_max in 2usize..4, i in 0usize..3, k in 0usize..3) {
        let grid = ModeGrid::build(j, 0.5, 1.0, AngularMode::Radial).unwrap();
        let (i, k) = (i % grid.n_modes(), k % grid.n_modes());
        let basis = FockBasis::new(&grid, n_max);
        let a = annihilation(&basis, i).mat;
        let ad = creation(&basis, k).mat;
        let mut comm = &a * &ad - &ad * &a;
        if i == k {
            comm -= linalg::identity(basis.dim());
        }
        let rows: Vec<usize> = (0..basis.dim()).collect();
        prop_assert!(op_norm(&block(&comm, &rows, &basis.interior())) < 1e-13);
    }

    #[test]
    fn planted_eigenvalue_is_recovered(seed in 0u64..10_000) {
        let s = planted_feshbach(1, seed).unwrap();
        prop_assert!(s.max_eigenvalue_error <= 1e-10);
        prop_assert!(s.max_residual <= 1e-8);
    }

    #[test]
    fn feshbach_of_block_diagonal_is_the_block(d in 2usize..6, shift in -0.3f64..0.3) {
        // chi projects onto the first d levels; a block-diagonal H decouples
        let n = d + 3;
        let tau: Vec<f64> = (0..n).map(|i| if i < d { 0.1 * i as f64 } else { 2.0 + i as f64 }).collect();
        let pair = smooth_chi(1.0);
        let ops = ChiOps::from_matrices(
            linalg::real_diag(&tau.iter().map(|&x| pair.chi(x)).collect::<Vec<_>>()),
            linalg::real_diag(&tau.iter().map(|&x| pair.chibar(x)).collect::<Vec<_>>()),
        );
        let mut h = linalg::real_diag(&tau);
        h[(0, 1)] = c(shift, 0.0);
        h[(1, 0)] = c(shift, 0.0);
        let t = linalg::real_diag(&tau);
        let f = feshbach_map(&h, &t, &ops).unwrap();
        prop_assert!(linalg::max_abs(&(&f - &h)) < 1e-12);
    }

    #[test]
    fn kernel_symmetrization_is_idempotent_and_preserves_operators(seed in 0u64..1000, m in 0usize..3, n in 0usize..3) {
        prop_assume!(m + n >= 1);
        let grid = ModeGrid::build(1, 0.5, 1.0, AngularMode::Radial).unwrap();
        let rgrid = RGrid::new(9);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let k = random_kernel(m, n, grid.n_modes(), &rgrid, &mut r);
        let s = k.symmetrize();
        prop_assert!(s.symmetrize().max_diff(&s) < 1e-15);
        let basis = FockBasis::with_cutoff(&grid, 3, 1.0);
        let a = kernel_operator(&k, &grid, &basis).unwrap();
        let b = kernel_operator(&s, &grid, &basis).unwrap();
        prop_assert!(linalg::max_abs(&(&a - &b)) < 1e-12);
    }

    #[test]
    fn cauchy_interpolation_is_exact_on_low_polynomials(
        a0 in -1.0f64..1.0, a1 in -1.0f64..1.0, a2 in -1.0f64..1.0, x in -0.2f64..0.2, y in -0.2f64..0.2,
    ) {
        let f = move |z: C64| c(a0, 0.0) + z * a1 + z * z * c(0.0, a2);
        let fam = ScalarFamily::from_fn(0.4, 16, f);
        let z = c(x, y);
        prop_assert!((fam.eval(z) - f(z)).norm() < 1e-12);
        prop_assert!((fam.deriv(z) - (c(a1, 0.0) + z * c(0.0, 2.0 * a2))).norm() < 1e-11);
        prop_assert!(fam.analyticity_residual() < 1e-14);
    }

    #[test]
    fn g17_formatting_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        let s = fmt_g17(x);
        let back: f64 = s.parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }

    #[test]
    fn checkpoint_round_trip(seed in 0u64..1000, shift_re in -0.01f64..0.01) {
        let rgrid = RGrid::new(5);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let k = random_kernel(1, 1, 2, &rgrid, &mut r);
        let fam = ZFamily::from_fn(0.4, 4, |z| {
            let mut w = KernelSeq::free(2, &rgrid, 0.25, 2, z - c(shift_re, 0.0));
            w.insert(k.clone());
            Ok(w)
        }).unwrap();
        let ck = Checkpoint {
            meta: serde_json::json!({ "seed": seed }),
            family: Some(fam),
            arrays: [("e".to_string(), vec![shift_re, 1.0])].into_iter().collect(),
        };
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] ^= 1;
        prop_assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}

//! Seeded randomized checks shared by `feshrg verify` and the acceptance
//! harness. Each returns the measured quantity next to its bound.

use crate::error::{Error, Result};
use crate::feshbach::{check_pair, feshbach_unchecked, find_singular_z, smooth_chi, ChiOps};
use crate::fock::{AngularMode, FockBasis, ModeGrid};
use crate::kernels::rotation::{octahedral_group, rotation_average};
use crate::kernels::{kernel_operator, measure_bound_check, to_operator, Kernel, KernelSeq};
use crate::linalg::{self, op_norm};
use crate::model::{initial_kernels, AtomSpec, CouplingSpec};
use crate::num::{c, factorial, CMat, Dual, RGrid, C64};
use crate::rg::RGConfig;
use crate::wick::{direct_product, normal_order_all, Profile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// One inequality with both sides recorded.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

impl Check {
    /// value <= bound.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, bound, margin: bound - value, pass: value <= bound }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss_c(r: &mut ChaCha8Rng) -> C64 {
    c(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct PlantedStats {
    pub pairs: usize,
    pub max_eigenvalue_error: f64,
    pub max_residual: f64,
}

/// Planted-eigenvalue pairs H = V D V^{-1}, T = diag(tau), chi = chi_1(T).
/// Ran chi holds the levels tau < 3/4; the planted eigenvalue is D_00.
/// Even-numbered pairs are real and the rest complex non-normal.
pub fn planted_feshbach(n_pairs: usize, seed: u64) -> Result<PlantedStats> {
    let mut r = rng(seed);
    let pair = smooth_chi(1.0);
    let mut max_err: f64 = 0.0;
    let mut max_res: f64 = 0.0;
    for p in 0..n_pairs {
        let n = r.gen_range(8..=40);
        let complex = p % 2 == 1;
        let n_low = r.gen_range(1..=2);
        let mut tau = Vec::with_capacity(n);
        for i in 0..n {
            tau.push(if i < n_low { 0.4 * i as f64 } else { r.gen_range(1.0..3.0) });
        }
        let pick = |r: &mut ChaCha8Rng| if complex { gauss_c(r) } else { c(r.gen_range(-1.0..1.0), 0.0) };
        let d: Vec<C64> = tau.iter().map(|&t| c(t, 0.0) + pick(&mut r) * 0.02).collect();
        let eps = 0.05 / (n as f64).sqrt();
        let v = CMat::identity(n, n) + CMat::from_fn(n, n, |_, _| pick(&mut r) * eps);
        let h = &v * linalg::diag(&d) * linalg::inverse(&v)?;
        let t = linalg::real_diag(&tau);
        let vals: Vec<(f64, f64)> = tau.iter().map(|&x| (pair.chi(x), pair.chibar(x))).collect();
        let ops = ChiOps::from_matrices(
            linalg::real_diag(&vals.iter().map(|v| v.0).collect::<Vec<_>>()),
            linalg::real_diag(&vals.iter().map(|v| v.1).collect::<Vec<_>>()),
        );
        let lambda = d[0];
        let id = CMat::identity(n, n);
        let rep = check_pair(&(&h - &id * lambda), &(&t - &id * lambda), &ops);
        if !rep.valid {
            return Err(Error::PairInvalid(format!("planted pair {p} (dim {n}) failed the pair conditions")));
        }
        let z = find_singular_z(&h, &t, &ops, c(tau[0], 0.0), 1e-14)?;
        max_err = max_err.max((z - lambda).norm());
        let hz = &h - &id * z;
        let res = feshbach_unchecked(&hz, &(&t - &id * z), &ops)?;
        let f_red = ops.range.adjoint() * &res.f * &ops.range;
        let (u, _) = linalg::null_vector(&f_red);
        let psi = res.q * (&ops.range * u);
        max_res = max_res.max((&hz * &psi).norm() / psi.norm());
    }
    Ok(PlantedStats { pairs: n_pairs, max_eigenvalue_error: max_err, max_residual: max_res })
}

fn random_profile(r: &mut ChaCha8Rng) -> (f64, f64) {
    (r.gen_range(0.5..1.5), r.gen_range(-0.5..0.5))
}

fn cutoff_profile(a: f64, b: f64, x: f64) -> Dual {
    if x >= 1.0 {
        return Dual::ZERO;
    }
    let y = 1.0 - x;
    Dual::real(y * y * y * (a + b * x), -3.0 * y * y * (a + b * x) + y * y * y * b)
}

/// Kernel with tuple-dependent quadratic r-profiles and random complex
/// coefficients of modulus <= 1.
pub fn random_kernel(m: usize, n: usize, n_modes: usize, grid: &RGrid, r: &mut ChaCha8Rng) -> Kernel {
    let mut k = Kernel::zeros(m, n, n_modes, grid);
    for t in 0..k.n_tuples() {
        let a = gauss_c(r) * 0.7;
        let b = gauss_c(r) * 0.2;
        let q = gauss_c(r) * 0.1;
        for i in 0..grid.n {
            let x = grid.point(i);
            k.set(t, i, Dual::new(a + b * x + q * x * x, b + q * (2.0 * x)));
        }
    }
    k
}

#[derive(Clone, Debug, Serialize)]
pub struct WickStats {
    pub configs: usize,
    pub max_error: f64,
}

/// to_operator(normal_order_all) against the explicit product
/// F_0 W F_1 ... W F_L on H_red with n_max = L.
pub fn wick_oracle(n_configs: usize, seed: u64) -> Result<WickStats> {
    let mut r = rng(seed);
    let rgrid = RGrid::new(33);
    let mut max_err: f64 = 0.0;
    for cfg in 0..n_configs {
        let l = 1 + cfg % 3;
        let j = if l == 3 { 1 } else { r.gen_range(1..=2) };
        let grid = ModeGrid::build(j, 0.5, 1.0, AngularMode::Radial)?;
        let nm = grid.n_modes();
        let mut w = KernelSeq::new(nm, &rgrid, 0.25, 2);
        for (m, n) in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)] {
            if r.gen_bool(0.8) {
                w.insert(random_kernel(m, n, nm, &rgrid, &mut r).symmetrize());
            }
        }
        let coefs: Vec<(f64, f64)> = (0..=l).map(|_| random_profile(&mut r)).collect();
        let fs: Vec<Box<dyn Fn(f64) -> Dual + Sync>> =
            coefs.iter().map(|&(a, b)| Box::new(move |x| cutoff_profile(a, b, x)) as Box<dyn Fn(f64) -> Dual + Sync>).collect();
        let f: Vec<Profile> = fs.iter().map(|b| b.as_ref() as Profile).collect();
        let target = FockBasis::with_cutoff(&grid, l, 1.0);
        let direct = direct_product(&f, &w, &grid, &target)?;
        let op = to_operator(&normal_order_all(&f, &w, l, &grid)?, &grid, &target)?;
        let scale = 1.0 + linalg::max_abs(&direct);
        max_err = max_err.max(linalg::max_abs(&(&op.mat - &direct)) / scale);
    }
    Ok(WickStats { configs: n_configs, max_error: max_err })
}

#[derive(Clone, Debug, Serialize)]
pub struct NormStats {
    pub kernels: usize,
    /// max ||H_{m,n}(w)|| / (||w||_inf (m! n!)^{-1/2}).
    pub max_ratio: f64,
    pub measure_value: f64,
    pub measure_bound: f64,
}

/// Operator norms of random kernels with 1 <= m + n <= 3 on H_red, and the
/// (1,0) measure integral against 8 pi.
pub fn norm_bound(n_kernels: usize, seed: u64) -> Result<NormStats> {
    let mut r = rng(seed);
    let rgrid = RGrid::new(17);
    let grid = ModeGrid::build(4, 0.5, 1.0, AngularMode::Radial)?;
    let basis = FockBasis::with_cutoff(&grid, 3, 1.0);
    let nm = grid.n_modes();
    let shapes = [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2), (3, 0), (0, 3)];
    let mut max_ratio: f64 = 0.0;
    for i in 0..n_kernels {
        let (m, n) = shapes[i % shapes.len()];
        let k = random_kernel(m, n, nm, &rgrid, &mut r);
        let norm = op_norm(&kernel_operator(&k, &grid, &basis)?);
        let bound = k.sup_norm() / (factorial(m) * factorial(n)).sqrt();
        max_ratio = max_ratio.max(norm / bound);
    }
    let big = ModeGrid::build(12, 0.5, 1.0, AngularMode::Radial)?;
    let (measure_value, measure_bound) = measure_bound_check(1, 0, &big);
    Ok(NormStats { kernels: n_kernels, max_ratio, measure_value, measure_bound })
}

#[derive(Clone, Debug, Serialize)]
pub struct RotationStats {
    /// sup ||avg w_{m,n}|| / sup ||w_{m,n}|| over m + n = 1.
    pub relative_average: f64,
    pub kernel_norm: f64,
}

/// Octahedral average of the one-leg kernels of the initial family (full
/// angular grid, vector dipole toy).
pub fn marginal_rotation_average(j_max: usize, g: f64) -> Result<RotationStats> {
    let a = AtomSpec::matrix_toy_vector();
    // only the one-leg output kernels are needed
    let cfg = RGConfig { m_max: 1, z_nodes: 8, pair_n_max: 1, ..RGConfig::default() };
    let grid = ModeGrid::build(j_max, cfg.rho, 1.0, AngularMode::Full { n_dirs: 6 })?;
    let cs = CouplingSpec::new(c(g, 0.0), c(0.0, 0.0), c(0.0, 0.0));
    let init = initial_kernels(&a, &cs, &grid, &cfg)?;
    let group = octahedral_group();
    let mut avg: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for s in init.w0.all_samples() {
        for key in [(1, 0), (0, 1)] {
            if let Some(k) = s.get(key.0, key.1) {
                norm = norm.max(k.sup_norm());
                avg = avg.max(rotation_average(k, &grid, &group)?.sup_norm());
            }
        }
    }
    if norm == 0.0 {
        return Err(Error::Symmetry("one-leg kernels vanish identically; the probe is empty".into()));
    }
    Ok(RotationStats { relative_average: avg / norm, kernel_norm: norm })
}

//! The smooth Feshbach map F_chi(H, T), the auxiliary operator Q_chi and the
//! checks that go with them, on dense truncated matrices.

use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{self, op_norm, range_basis, sigma_min};
use crate::num::{c, smoothstep, CMat, CVec, Dual, C64};
use std::f64::consts::FRAC_PI_2;

/// Singular values of chi-bar above this span Ran chi-bar.
pub const RANGE_TOL: f64 = 1e-10;

/// chi(r) = cos(pi/2 s(4r/rho - 3)), chibar(r) = sin(pi/2 s(4r/rho - 3)).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiPair {
    pub rho: f64,
}

pub fn smooth_chi(rho: f64) -> ChiPair {
    assert!(rho > 0.0);
    ChiPair { rho }
}

impl ChiPair {
    fn angle(&self, r: f64) -> (f64, f64) {
        let (s, ds) = smoothstep(4.0 * r / self.rho - 3.0);
        (FRAC_PI_2 * s, FRAC_PI_2 * ds * 4.0 / self.rho)
    }

    pub fn chi(&self, r: f64) -> f64 {
        self.angle(r).0.cos()
    }

    pub fn chibar(&self, r: f64) -> f64 {
        self.angle(r).0.sin()
    }

    /// chi with its r-derivative.
    pub fn chi_dual(&self, r: f64) -> Dual {
        let (a, da) = self.angle(r);
        Dual::real(a.cos(), -a.sin() * da)
    }

    pub fn chibar_dual(&self, r: f64) -> Dual {
        let (a, da) = self.angle(r);
        Dual::real(a.sin(), a.cos() * da)
    }

    /// chibar^2 with derivative.
    pub fn chibar_sq_dual(&self, r: f64) -> Dual {
        let (a, da) = self.angle(r);
        let s = a.sin();
        Dual::real(s * s, 2.0 * s * a.cos() * da)
    }
}

/// The partition (chi, chibar) as matrices together with orthonormal bases of
/// Ran chi and Ran chibar.
#[derive(Clone, Debug)]
pub struct ChiOps {
    pub chi: CMat,
    pub chibar: CMat,
    pub range: CMat,
    pub range_bar: CMat,
}

impl ChiOps {
    pub fn from_matrices(chi: CMat, chibar: CMat) -> Self {
        let range = abs_range(&chi);
        let range_bar = abs_range(&chibar);
        ChiOps { chi, chibar, range, range_bar }
    }

    /// chi(H_f), chibar(H_f) on a Fock basis (diagonal, ranges read off).
    pub fn of_field_energy(basis: &FockBasis, pair: &ChiPair) -> Self {
        let vals: Vec<(f64, f64)> = basis.energies.iter().map(|&e| (pair.chi(e), pair.chibar(e))).collect();
        diagonal_ops(&vals)
    }

    /// chi = P (x) chi_1(H_f), chibar = (1 - P) (x) 1 + P (x) chibar_1(H_f) for
    /// the rank-one projection P = phi phitilde^dagger. Ranges are built from
    /// phi, the orthogonal complement of phitilde, and the Fock states.
    pub fn atomic(phi: &CVec, phit: &CVec, energies: &[f64], pair: &ChiPair) -> Self {
        let d = phi.len();
        let nf = energies.len();
        let p = phi * phit.adjoint();
        let pbar = CMat::identity(d, d) - &p;
        let chi1 = linalg::real_diag(&energies.iter().map(|&e| pair.chi(e)).collect::<Vec<_>>());
        let chib1 = linalg::real_diag(&energies.iter().map(|&e| pair.chibar(e)).collect::<Vec<_>>());
        let chi = linalg::kron(&p, &chi1);
        let chibar = linalg::kron(&pbar, &CMat::identity(nf, nf)) + linalg::kron(&p, &chib1);
        let perp = range_basis(&pbar, RANGE_TOL);
        let phin = phi / c(phi.norm(), 0.0);
        let mut cols: Vec<CVec> = Vec::new();
        let mut cols_chi: Vec<CVec> = Vec::new();
        for s in 0..nf {
            let e_s = |v: &CVec| {
                let mut x = CVec::zeros(d * nf);
                for a in 0..d {
                    x[a * nf + s] = v[a];
                }
                x
            };
            if pair.chibar(energies[s]) > RANGE_TOL {
                for a in 0..d {
                    let mut v = CVec::zeros(d);
                    v[a] = c(1.0, 0.0);
                    cols.push(e_s(&v));
                }
            } else {
                for k in 0..perp.ncols() {
                    cols.push(e_s(&perp.column(k).into_owned()));
                }
            }
            if pair.chi(energies[s]) > RANGE_TOL {
                cols_chi.push(e_s(&phin));
            }
        }
        let range_bar = if cols.is_empty() { CMat::zeros(d * nf, 0) } else { CMat::from_columns(&cols) };
        let range = if cols_chi.is_empty() { CMat::zeros(d * nf, 0) } else { CMat::from_columns(&cols_chi) };
        ChiOps { chi, chibar, range, range_bar }
    }

    pub fn dim(&self) -> usize {
        self.chi.nrows()
    }
}

fn abs_range(a: &CMat) -> CMat {
    let n = a.nrows();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.unwrap();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > RANGE_TOL).collect();
    let mut b = CMat::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        b.set_column(j, &u.column(i));
    }
    b
}

fn diagonal_ops(vals: &[(f64, f64)]) -> ChiOps {
    let n = vals.len();
    let chi = linalg::real_diag(&vals.iter().map(|v| v.0).collect::<Vec<_>>());
    let chibar = linalg::real_diag(&vals.iter().map(|v| v.1).collect::<Vec<_>>());
    let pick = |f: &dyn Fn(&(f64, f64)) -> bool| {
        let idx: Vec<usize> = (0..n).filter(|&i| f(&vals[i])).collect();
        let mut b = CMat::zeros(n, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            b[(i, j)] = c(1.0, 0.0);
        }
        b
    };
    let range = pick(&|v| v.0 > RANGE_TOL);
    let range_bar = pick(&|v| v.1 > RANGE_TOL);
    ChiOps { chi, chibar, range, range_bar }
}

/// Conditions (a'), (b'), (c') of the sufficient-condition lemma.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct FeshbachPairReport {
    /// max(||[chi, T]||, ||[chibar, T]||).
    pub commutator: f64,
    /// Smallest singular value of T restricted to Ran chibar.
    pub t_sigma_min: f64,
    /// ||T^{-1} chibar W chibar||.
    pub c_left: f64,
    /// ||chibar W T^{-1} chibar||.
    pub c_right: f64,
    /// ||T^{-1} chibar W chi||.
    pub c_mixed: f64,
    pub valid: bool,
}

/// (B^dagger A B)^{-1} lifted back: the inverse of A on Ran B.
fn inverse_on(a: &CMat, b: &CMat) -> Result<CMat> {
    if b.ncols() == 0 {
        return Ok(CMat::zeros(a.nrows(), a.ncols()));
    }
    let inner = b.adjoint() * a * b;
    let inv = linalg::inverse(&inner)?;
    Ok(b * inv * b.adjoint())
}

pub fn check_pair(h: &CMat, t: &CMat, ops: &ChiOps) -> FeshbachPairReport {
    let w = h - t;
    let scale = op_norm(t).max(1.0);
    let comm = op_norm(&(&ops.chi * t - t * &ops.chi)).max(op_norm(&(&ops.chibar * t - t * &ops.chibar)));
    let tb = &ops.range_bar;
    let t_sigma_min = if tb.ncols() == 0 { f64::INFINITY } else { sigma_min(&(tb.adjoint() * t * tb)) };
    let (c_left, c_right, c_mixed) = match inverse_on(t, tb) {
        Ok(tinv) if t_sigma_min > 1e-14 * scale => {
            let tc = &tinv * &ops.chibar;
            let bwb = &ops.chibar * &w * &ops.chibar;
            (
                op_norm(&(&tinv * &bwb)),
                op_norm(&(&ops.chibar * &w * &tc)),
                op_norm(&(&tc * &w * &ops.chi)),
            )
        }
        _ => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
    };
    let valid = comm <= 1e-12 * scale && t_sigma_min > 0.0 && c_left < 1.0 && c_right < 1.0 && c_mixed.is_finite();
    FeshbachPairReport { commutator: comm, t_sigma_min, c_left, c_right, c_mixed, valid }
}

/// F_chi(H, T) and Q_chi(H, T) sharing one solve on Ran chibar.
#[derive(Clone, Debug)]
pub struct FeshbachResult {
    pub f: CMat,
    pub q: CMat,
}

/// Computes F and Q without the pair check (callers that already verified
/// the pair, or that only need the algebraic identities, use this).
pub fn feshbach_unchecked(h: &CMat, t: &CMat, ops: &ChiOps) -> Result<FeshbachResult> {
    let w = h - t;
    let hbar = t + &ops.chibar * &w * &ops.chibar;
    let hinv = inverse_on(&hbar, &ops.range_bar)?;
    let bwc = &ops.chibar * &w * &ops.chi;
    let x = &hinv * &bwc;
    let f = t + &ops.chi * &w * &ops.chi - &ops.chi * &w * &ops.chibar * &x;
    let q = &ops.chi - &ops.chibar * &x;
    Ok(FeshbachResult { f, q })
}

fn require_pair(h: &CMat, t: &CMat, ops: &ChiOps) -> Result<()> {
    let rep = check_pair(h, t, ops);
    if !rep.valid {
        return Err(Error::PairInvalid(format!(
            "commutator {:.3e}, sigma_min {:.3e}, contraction norms {:.3e} / {:.3e}",
            rep.commutator, rep.t_sigma_min, rep.c_left, rep.c_right
        )));
    }
    Ok(())
}

pub fn feshbach_map(h: &CMat, t: &CMat, ops: &ChiOps) -> Result<CMat> {
    require_pair(h, t, ops)?;
    Ok(feshbach_unchecked(h, t, ops)?.f)
}

pub fn q_operator(h: &CMat, t: &CMat, ops: &ChiOps) -> Result<CMat> {
    require_pair(h, t, ops)?;
    Ok(feshbach_unchecked(h, t, ops)?.q)
}

/// F restricted to Ran chi (in the orthonormal basis ops.range).
pub fn restricted(f: &CMat, ops: &ChiOps) -> CMat {
    ops.range.adjoint() * f * &ops.range
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct IsoPoint {
    pub z: (f64, f64),
    pub sigma_h: f64,
    pub sigma_f: f64,
    pub singular_h: bool,
    pub singular_f: bool,
    /// ||(H - z) Q v|| / ||Q v|| for the null vector v of F (if singular).
    pub reconstruction: Option<f64>,
    /// ||F chi u|| / ||chi u|| for the null vector u of H (if singular).
    pub chi_kernel: Option<f64>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct IsoReport {
    pub points: Vec<IsoPoint>,
    pub consistent: bool,
}

/// Singularity of H - z against singularity of F_chi(H - z, T - z) on Ran chi.
pub fn isospectrality_check(h: &CMat, t: &CMat, ops: &ChiOps, z_grid: &[C64]) -> Result<IsoReport> {
    let n = h.nrows();
    let hn = op_norm(h).max(1e-300);
    let thr = 1e-8 * hn;
    let mut points = Vec::new();
    let mut consistent = true;
    for &z in z_grid {
        let hz = h - CMat::identity(n, n) * z;
        let tz = t - CMat::identity(n, n) * z;
        require_pair(&hz, &tz, ops)?;
        let fr = feshbach_unchecked(&hz, &tz, ops)?;
        let fres = restricted(&fr.f, ops);
        let (u, sigma_h) = linalg::null_vector(&hz);
        let (v, sigma_f) = if fres.nrows() == 0 { (CVec::zeros(0), f64::INFINITY) } else { linalg::null_vector(&fres) };
        let singular_h = sigma_h < thr;
        let singular_f = sigma_f < thr;
        let mut reconstruction = None;
        let mut chi_kernel = None;
        if singular_f {
            let qv = &fr.q * (&ops.range * &v);
            reconstruction = Some((&hz * &qv).norm() / qv.norm().max(1e-300));
        }
        if singular_h {
            let cu = &ops.chi * &u;
            chi_kernel = Some((&fr.f * &cu).norm() / cu.norm().max(1e-300));
        }
        if singular_h != singular_f || reconstruction.is_some_and(|r| r > 1e-8) || chi_kernel.is_some_and(|r| r > 1e-8) {
            consistent = false;
        }
        points.push(IsoPoint { z: (z.re, z.im), sigma_h, sigma_f, singular_h, singular_f, reconstruction, chi_kernel });
    }
    Ok(IsoReport { points, consistent })
}

/// Eigenvalue of smallest modulus of F_chi(H - z, T - z) on Ran chi.
pub fn reduced_eigenvalue(h: &CMat, t: &CMat, ops: &ChiOps, z: C64) -> Result<C64> {
    let n = h.nrows();
    let hz = h - CMat::identity(n, n) * z;
    let tz = t - CMat::identity(n, n) * z;
    let f = feshbach_unchecked(&hz, &tz, ops)?.f;
    let ev = linalg::eigenvalues(&restricted(&f, ops));
    ev.into_iter()
        .min_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
        .ok_or_else(|| Error::Linalg("empty Ran chi".into()))
}

/// Solves lambda(z) = 0 for the reduced eigenvalue by the secant method.
pub fn find_singular_z(h: &CMat, t: &CMat, ops: &ChiOps, z0: C64, tol: f64) -> Result<C64> {
    let mut za = z0;
    let mut zb = z0 + c(1e-3, 1e-3);
    let mut fa = reduced_eigenvalue(h, t, ops, za)?;
    let mut fb = reduced_eigenvalue(h, t, ops, zb)?;
    for _ in 0..60 {
        if fb.norm() == 0.0 {
            return Ok(zb);
        }
        let step = fb * (zb - za) / (fb - fa);
        if !step.is_finite() {
            break;
        }
        za = zb;
        fa = fb;
        zb -= step;
        fb = reduced_eigenvalue(h, t, ops, zb)?;
        if step.norm() < tol {
            return Ok(zb);
        }
    }
    Err(Error::NewtonDiverged(format!("secant for the Feshbach eigenvalue stalled near {zb}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_schur_complement() {
        let h = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let t = linalg::real_diag(&[0.0, 1.0]);
        let ops = ChiOps::from_matrices(linalg::real_diag(&[1.0, 0.0]), linalg::real_diag(&[0.0, 1.0]));
        let r = feshbach_unchecked(&h, &t, &ops).unwrap();
        assert!((r.f[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((r.q[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((r.q[(1, 0)] - c(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn chi_pair_basics() {
        let p = smooth_chi(0.25);
        assert_eq!(p.chi(0.0), 1.0);
        assert!(p.chi(0.25).abs() < 1e-15 && (p.chibar(0.25) - 1.0).abs() < 1e-15);
        let d = p.chi_dual(0.22);
        let h = 1e-6;
        let fd = (p.chi(0.22 + h) - p.chi(0.22 - h)) / (2.0 * h);
        assert!((d.d.re - fd).abs() < 1e-6);
    }
}

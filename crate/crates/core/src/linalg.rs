//! Dense complex linear algebra on top of nalgebra.

use crate::error::{Error, Result};
use crate::num::{c, CMat, CVec, C64, ZERO};

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Spectral norm.
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn sigma_min(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Linalg("singular system".into()))
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Linalg("singular matrix".into()))
}

/// Eigenvalues of a general complex matrix (Schur form diagonal).
pub fn eigenvalues(a: &CMat) -> Vec<C64> {
    let n = a.nrows();
    if n == 0 {
        return vec![];
    }
    let t = a.clone().schur().unpack().1;
    (0..n).map(|i| t[(i, i)]).collect()
}

/// Orthonormal basis of the column space, keeping singular values above
/// `tol` times the largest one.
pub fn range_basis(a: &CMat, tol: f64) -> CMat {
    let n = a.nrows();
    if a.ncols() == 0 || n == 0 {
        return CMat::zeros(n, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol * smax.max(1e-300))
        .collect();
    let mut b = CMat::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        b.set_column(j, &u.column(i));
    }
    b
}

/// Right singular vector for the smallest singular value, and that value.
pub fn null_vector(a: &CMat) -> (CVec, f64) {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut best = 0;
    for i in 0..svd.singular_values.len() {
        if svd.singular_values[i] < svd.singular_values[best] {
            best = i;
        }
    }
    let v = CVec::from_iterator(n, vt.row(best).iter().map(|z| z.conj()));
    (v, svd.singular_values[best])
}

/// Left eigenvector is the null vector of the adjoint.
pub fn left_null_vector(a: &CMat) -> (CVec, f64) {
    null_vector(&a.adjoint())
}

/// Eigenvector for eigenvalue `lambda` by inverse iteration.
pub fn eigvec_inverse_iteration(a: &CMat, lambda: C64, iters: usize) -> Result<CVec> {
    let n = a.nrows();
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let shift = lambda + c(1e-10 * scale, 1e-10 * scale);
    let m = a - CMat::identity(n, n) * shift;
    let lu = m.lu();
    let mut v = CVec::from_element(n, c(1.0, 0.3));
    v /= c(v.norm(), 0.0);
    for _ in 0..iters {
        let w = lu
            .solve(&v)
            .ok_or_else(|| Error::Linalg("inverse iteration: singular shift".into()))?;
        let nr = w.norm();
        if !nr.is_finite() || nr == 0.0 {
            return Err(Error::Linalg("inverse iteration breakdown".into()));
        }
        v = w / c(nr, 0.0);
    }
    Ok(v)
}

pub fn expm(a: &CMat) -> CMat {
    a.clone().exp()
}

/// Kronecker product a ⊗ b.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn diag(vals: &[C64]) -> CMat {
    let n = vals.len();
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = vals[i];
    }
    m
}

pub fn real_diag(vals: &[f64]) -> CMat {
    diag(&vals.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>())
}

/// Frobenius-free max-abs entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_and_null_vector_agree() {
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let mut ev = eigenvalues(&a);
        ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        let l = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((ev[0].re - l).abs() < 1e-12);
        let (v, s) = null_vector(&(&a - CMat::identity(2, 2) * c(l, 0.0)));
        assert!(s < 1e-12);
        let r = &a * &v - &v * c(l, 0.0);
        assert!(r.norm() < 1e-12);
        let e = expm(&CMat::zeros(2, 2));
        assert!((e - CMat::identity(2, 2)).norm() < 1e-15);
    }
}

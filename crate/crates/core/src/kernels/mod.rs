//! Integral kernels w_{m,n}(r; K, K~) on the mode grid, their norms, and the
//! map w -> H(w) onto truncated Fock space.

pub mod checkpoint;
pub mod rotation;
pub mod zfamily;

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockOperator, ModeGrid, Adjointness};
use crate::num::{c, hermite_eval, CMat, Dual, RGrid, C64, ZERO};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub use zfamily::{ScalarFamily, ZFamily};

/// Sampled kernel. Layout: `values[tuple * n_r + i]`, where the tuple index
/// is mixed radix over (creation legs, annihilation legs), first leg most
/// significant.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub m: usize,
    pub n: usize,
    pub n_modes: usize,
    pub grid: RGrid,
    pub values: Vec<C64>,
    pub d_values: Vec<C64>,
}

pub fn n_tuples(n_modes: usize, legs: usize) -> usize {
    n_modes.pow(legs as u32)
}

pub fn decode_tuple(mut idx: usize, n_modes: usize, legs: usize) -> Vec<usize> {
    let mut out = vec![0; legs];
    for l in (0..legs).rev() {
        out[l] = idx % n_modes;
        idx /= n_modes;
    }
    out
}

pub fn encode_tuple(legs: &[usize], n_modes: usize) -> usize {
    legs.iter().fold(0, |acc, &x| acc * n_modes + x)
}

/// All permutations of 0..k.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

impl Kernel {
    pub fn zeros(m: usize, n: usize, n_modes: usize, grid: &RGrid) -> Self {
        let len = n_tuples(n_modes, m + n) * grid.n;
        Kernel { m, n, n_modes, grid: grid.clone(), values: vec![ZERO; len], d_values: vec![ZERO; len] }
    }

    /// Kernel from a closure returning (value, r-derivative).
    pub fn from_fn(m: usize, n: usize, n_modes: usize, grid: &RGrid, f: impl Fn(f64, &[usize], &[usize]) -> Dual) -> Self {
        let mut k = Kernel::zeros(m, n, n_modes, grid);
        for t in 0..k.n_tuples() {
            let legs = decode_tuple(t, n_modes, m + n);
            for i in 0..grid.n {
                let d = f(grid.point(i), &legs[..m], &legs[m..]);
                k.set(t, i, d);
            }
        }
        k
    }

    pub fn n_tuples(&self) -> usize {
        n_tuples(self.n_modes, self.m + self.n)
    }

    pub fn legs(&self, t: usize) -> (Vec<usize>, Vec<usize>) {
        let l = decode_tuple(t, self.n_modes, self.m + self.n);
        (l[..self.m].to_vec(), l[self.m..].to_vec())
    }

    pub fn tuple(&self, out: &[usize], inn: &[usize]) -> usize {
        let mut all = out.to_vec();
        all.extend_from_slice(inn);
        encode_tuple(&all, self.n_modes)
    }

    #[inline]
    pub fn at(&self, t: usize, i: usize) -> Dual {
        let k = t * self.grid.n + i;
        Dual { v: self.values[k], d: self.d_values[k] }
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, d: Dual) {
        let k = t * self.grid.n + i;
        self.values[k] = d.v;
        self.d_values[k] = d.d;
    }

    pub fn profile(&self, t: usize) -> (&[C64], &[C64]) {
        let n = self.grid.n;
        (&self.values[t * n..(t + 1) * n], &self.d_values[t * n..(t + 1) * n])
    }

    /// Value and derivative at an arbitrary r by quintic Hermite interpolation.
    pub fn eval(&self, t: usize, x: f64) -> Dual {
        let (v, d) = self.profile(t);
        hermite_eval(&self.grid, v, d, x)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn deriv_sup_norm(&self) -> f64 {
        self.d_values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// ||w||_inf + ||d_r w||_inf over the grid.
    pub fn sharp_norm(&self) -> f64 {
        self.sup_norm() + self.deriv_sup_norm()
    }

    /// Average over permutations of the creation legs and of the annihilation legs.
    pub fn symmetrize(&self) -> Kernel {
        let pm = permutations(self.m);
        let pn = permutations(self.n);
        let count = (pm.len() * pn.len()) as f64;
        let mut out = Kernel::zeros(self.m, self.n, self.n_modes, &self.grid);
        let nr = self.grid.n;
        for t in 0..self.n_tuples() {
            let (o, i) = self.legs(t);
            for p in &pm {
                let op: Vec<usize> = p.iter().map(|&k| o[k]).collect();
                for q in &pn {
                    let iq: Vec<usize> = q.iter().map(|&k| i[k]).collect();
                    let s = self.tuple(&op, &iq);
                    for r in 0..nr {
                        out.values[t * nr + r] += self.values[s * nr + r];
                        out.d_values[t * nr + r] += self.d_values[s * nr + r];
                    }
                }
            }
        }
        for z in out.values.iter_mut().chain(out.d_values.iter_mut()) {
            *z /= count;
        }
        out
    }

    /// Zero the samples outside Q_{m,n} = {r <= 1 - max(sum k, sum k~)}.
    pub fn support_restrict(&mut self, grid: &ModeGrid) {
        if self.m + self.n == 0 {
            return;
        }
        for t in 0..self.n_tuples() {
            let (o, i) = self.legs(t);
            let so: f64 = o.iter().map(|&x| grid.omega(x)).sum();
            let si: f64 = i.iter().map(|&x| grid.omega(x)).sum();
            let lim = 1.0 - so.max(si);
            for r in 0..self.grid.n {
                if self.grid.point(r) > lim + 1e-12 {
                    self.set(t, r, Dual::ZERO);
                }
            }
        }
    }

    /// Largest sample outside Q_{m,n}.
    pub fn support_defect(&self, grid: &ModeGrid) -> f64 {
        let mut k = self.clone();
        k.support_restrict(grid);
        self.values.iter().zip(&k.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, s: C64) {
        for z in self.values.iter_mut().chain(self.d_values.iter_mut()) {
            *z *= s;
        }
    }

    pub fn add_scaled(&mut self, other: &Kernel, s: C64) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b * s;
        }
        for (a, b) in self.d_values.iter_mut().zip(&other.d_values) {
            *a += b * s;
        }
    }

    pub fn max_diff(&self, other: &Kernel) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .chain(self.d_values.iter().zip(&other.d_values))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// The sequence (w_{m,n}) with m + n <= m_max.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSeq {
    pub entries: BTreeMap<(usize, usize), Kernel>,
    pub xi: f64,
    pub m_max: usize,
    pub tail_bound: f64,
    pub n_modes: usize,
    pub grid: RGrid,
}

impl KernelSeq {
    pub fn new(n_modes: usize, grid: &RGrid, xi: f64, m_max: usize) -> Self {
        KernelSeq { entries: BTreeMap::new(), xi, m_max, tail_bound: 0.0, n_modes, grid: grid.clone() }
    }

    /// w_{0,0}(r) = r - z and nothing else.
    pub fn free(n_modes: usize, grid: &RGrid, xi: f64, m_max: usize, z: C64) -> Self {
        let mut s = Self::new(n_modes, grid, xi, m_max);
        s.insert(Kernel::from_fn(0, 0, n_modes, grid, |r, _, _| Dual::new(c(r, 0.0) - z, c(1.0, 0.0))));
        s
    }

    pub fn insert(&mut self, k: Kernel) {
        assert_eq!(k.n_modes, self.n_modes);
        self.entries.insert((k.m, k.n), k);
    }

    pub fn get(&self, m: usize, n: usize) -> Option<&Kernel> {
        self.entries.get(&(m, n))
    }

    pub fn require(&self, m: usize, n: usize) -> Result<&Kernel> {
        self.get(m, n).ok_or(Error::KernelMissing(m, n))
    }

    /// sum xi^{-(m+n)} ||w_{m,n}||^# + tail_bound.
    pub fn xi_norm(&self) -> f64 {
        self.entries
            .values()
            .map(|k| self.xi.powi(-((k.m + k.n) as i32)) * k.sharp_norm())
            .sum::<f64>()
            + self.tail_bound
    }

    /// ||w_{>=1}||_xi: the interaction part of the norm.
    pub fn interaction_norm(&self) -> f64 {
        self.entries
            .values()
            .filter(|k| k.m + k.n >= 1)
            .map(|k| self.xi.powi(-((k.m + k.n) as i32)) * k.sharp_norm())
            .sum::<f64>()
            + self.tail_bound
    }

    pub fn symmetrize(&self) -> KernelSeq {
        let mut out = self.clone();
        for k in out.entries.values_mut() {
            *k = k.symmetrize();
        }
        out
    }

    pub fn support_restrict(&mut self, grid: &ModeGrid) {
        for k in self.entries.values_mut() {
            k.support_restrict(grid);
        }
    }

    /// Linear combination sum_i coeffs[i] * seqs[i]; tail bounds combine by |coeff|.
    pub fn combine(seqs: &[&KernelSeq], coeffs: &[C64]) -> KernelSeq {
        let first = seqs[0];
        let mut out = KernelSeq::new(first.n_modes, &first.grid, first.xi, first.m_max);
        for (key, k) in &first.entries {
            let mut acc = Kernel::zeros(k.m, k.n, k.n_modes, &k.grid);
            for (s, &cf) in seqs.iter().zip(coeffs) {
                if let Some(kk) = s.entries.get(key) {
                    acc.add_scaled(kk, cf);
                }
            }
            out.entries.insert(*key, acc);
        }
        out.tail_bound = seqs.iter().zip(coeffs).map(|(s, cf)| s.tail_bound * cf.norm()).sum();
        out
    }

    pub fn max_diff(&self, other: &KernelSeq) -> f64 {
        let mut d: f64 = 0.0;
        for (key, k) in &self.entries {
            match other.entries.get(key) {
                Some(o) => d = d.max(k.max_diff(o)),
                None => d = d.max(k.sup_norm().max(k.deriv_sup_norm())),
            }
        }
        for (key, o) in &other.entries {
            if !self.entries.contains_key(key) {
                d = d.max(o.sup_norm().max(o.deriv_sup_norm()));
            }
        }
        d
    }
}

/// Calls `f(ordered legs, amplitude, occupation after removal)` for every
/// ordered tuple of `n` annihilations acting on `occ`.
pub fn for_each_annihilation(occ: &[u8], n: usize, f: &mut dyn FnMut(&[usize], f64, &[u8])) {
    fn rec(occ: &mut Vec<u8>, left: usize, legs: &mut Vec<usize>, amp: f64, f: &mut dyn FnMut(&[usize], f64, &[u8])) {
        if left == 0 {
            f(legs, amp, occ);
            return;
        }
        for j in 0..occ.len() {
            if occ[j] > 0 {
                let a = (occ[j] as f64).sqrt();
                occ[j] -= 1;
                legs.push(j);
                rec(occ, left - 1, legs, amp * a, f);
                legs.pop();
                occ[j] += 1;
            }
        }
    }
    let mut o = occ.to_vec();
    rec(&mut o, n, &mut Vec::new(), 1.0, f);
}

/// Ordered creation tuples from `modes`, photon budget `cap` on the total count.
pub fn for_each_creation(occ: &[u8], m: usize, modes: &[usize], f: &mut dyn FnMut(&[usize], f64, &[u8])) {
    fn rec(occ: &mut Vec<u8>, left: usize, modes: &[usize], legs: &mut Vec<usize>, amp: f64, f: &mut dyn FnMut(&[usize], f64, &[u8])) {
        if left == 0 {
            f(legs, amp, occ);
            return;
        }
        for &i in modes {
            let a = (occ[i] as f64 + 1.0).sqrt();
            occ[i] += 1;
            legs.push(i);
            rec(occ, left - 1, modes, legs, amp * a, f);
            legs.pop();
            occ[i] -= 1;
        }
    }
    let mut o = occ.to_vec();
    rec(&mut o, m, modes, &mut Vec::new(), 1.0, f);
}

/// P_red H_{m,n}(w) P_red on the basis: sum over ordered leg tuples of
/// c-weights times a*(K) w(H_f; K, K~) a(K~).
pub fn kernel_operator(k: &Kernel, grid: &ModeGrid, basis: &FockBasis) -> Result<CMat> {
    assemble(k, grid, basis, true)
}

/// H_{m,n}(w) on the whole truncated basis for a kernel that does not depend
/// on r (read at its first node), without the P_red sandwich.
pub fn constant_kernel_operator(k: &Kernel, grid: &ModeGrid, basis: &FockBasis) -> Result<CMat> {
    assemble(k, grid, basis, false)
}

fn assemble(k: &Kernel, grid: &ModeGrid, basis: &FockBasis, reduced: bool) -> Result<CMat> {
    if basis.n_modes != grid.n_modes() || k.n_modes != grid.n_modes() {
        return Err(Error::GridMismatch(format!(
            "kernel on {} modes, grid {}, basis {}",
            k.n_modes,
            grid.n_modes(),
            basis.n_modes
        )));
    }
    let dim = basis.dim();
    let mut mat = CMat::zeros(dim, dim);
    let omegas = grid.omegas();
    let weights = grid.weights();
    let all_modes: Vec<usize> = (0..grid.n_modes()).collect();
    let value = |t: usize, e: f64| if reduced { k.eval(t, e).v } else { k.at(t, 0).v };
    for s in 0..dim {
        if reduced && basis.energies[s] > 1.0 + 1e-12 {
            continue;
        }
        if k.m + k.n == 0 {
            mat[(s, s)] = value(0, basis.energies[s]);
            continue;
        }
        for_each_annihilation(&basis.states[s], k.n, &mut |jl, ja, u| {
            let eu = crate::fock::occupation_energy(u, &omegas);
            let wj: f64 = jl.iter().map(|&j| weights[j]).product();
            for_each_creation(u, k.m, &all_modes, &mut |il, ia, t_occ| {
                let et = eu + il.iter().map(|&i| omegas[i]).sum::<f64>();
                if reduced && et > 1.0 + 1e-12 {
                    return;
                }
                if let Some(t) = basis.index_of(t_occ) {
                    let wi: f64 = il.iter().map(|&i| weights[i]).product();
                    let val = value(k.tuple(il, jl), eu);
                    mat[(t, s)] += val * (wi * wj * ja * ia);
                }
            });
        });
    }
    Ok(mat)
}

/// H(w) = sum_{m,n} H_{m,n}(w) on the reduced space.
pub fn to_operator(w: &KernelSeq, grid: &ModeGrid, basis: &FockBasis) -> Result<FockOperator> {
    let dim = basis.dim();
    let mut mat = CMat::zeros(dim, dim);
    for k in w.entries.values() {
        mat += kernel_operator(k, grid, basis)?;
    }
    FockOperator::new(basis, mat, Adjointness::None)
}

/// Quadrature of the integral of |K|^{-2} over S_{m,n} and the bound (8 pi)^{m+n}/(m! n!).
pub fn measure_bound_check(m: usize, n: usize, grid: &ModeGrid) -> (f64, f64) {
    let simplex_sum = |legs: usize| -> f64 {
        if legs == 0 {
            return 1.0;
        }
        let nm = grid.n_modes();
        let mut total = 0.0;
        for t in 0..n_tuples(nm, legs) {
            let l = decode_tuple(t, nm, legs);
            let s: f64 = l.iter().map(|&x| grid.omega(x)).sum();
            if s <= 1.0 + 1e-12 {
                total += l.iter().map(|&x| 8.0 * PI * grid.weight(x).powi(2) / grid.omega(x)).product::<f64>();
            }
        }
        total
    };
    let value = simplex_sum(m) * simplex_sum(n);
    let bound = (8.0 * PI).powi((m + n) as i32) / (crate::num::factorial(m) * crate::num::factorial(n));
    (value, bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::AngularMode;

    #[test]
    fn tuple_roundtrip() {
        for t in 0..125 {
            assert_eq!(encode_tuple(&decode_tuple(t, 5, 3), 5), t);
        }
        assert_eq!(permutations(3).len(), 6);
    }

    #[test]
    fn identity_kernel_gives_field_energy() {
        let g = ModeGrid::build(2, 0.5, 1.0, AngularMode::Radial).unwrap();
        let b = FockBasis::with_cutoff(&g, 3, 1.0);
        let rg = RGrid::new(65);
        let mut w = KernelSeq::new(g.n_modes(), &rg, 0.25, 2);
        w.insert(Kernel::from_fn(0, 0, g.n_modes(), &rg, |r, _, _| Dual::real(r, 1.0)));
        let h = to_operator(&w, &g, &b).unwrap();
        for i in 0..b.dim() {
            assert!((h.mat[(i, i)].re - b.energies[i]).abs() < 1e-14);
        }
    }
}

//! Truncated bosonic Fock space over a geometric momentum-shell grid.

use crate::error::{Error, Result};
use crate::linalg;
use crate::num::{c, CMat, C64, ZERO};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularMode {
    Radial,
    Full { n_dirs: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub shell: usize,
    pub dir: Option<usize>,
    pub pol: usize,
    pub omega: f64,
    /// Leg weight c with c^2 = (1 - rho) k^2 / (modes per shell).
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeGrid {
    pub j_max: usize,
    pub rho: f64,
    pub k_max: f64,
    pub angular: AngularMode,
    pub shells: Vec<f64>,
    pub directions: Vec<[f64; 3]>,
    pub polarizations: Vec<[[f64; 3]; 2]>,
    pub modes: Vec<Mode>,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Polarization gauge: e1 = z x k / |z x k| (x x k if k is along z), e2 = k x e1.
pub fn polarization_pair(k: [f64; 3]) -> [[f64; 3]; 2] {
    let k = normalize(k);
    let zk = cross([0.0, 0.0, 1.0], k);
    let nz = (zk[0] * zk[0] + zk[1] * zk[1] + zk[2] * zk[2]).sqrt();
    let e1 = if nz > 1e-8 { normalize(zk) } else { normalize(cross([1.0, 0.0, 0.0], k)) };
    let e2 = cross(k, e1);
    [e1, e2]
}

pub fn axis_directions() -> Vec<[f64; 3]> {
    vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
}

impl ModeGrid {
    pub fn build(j_max: usize, rho: f64, k_max: f64, angular: AngularMode) -> Result<Self> {
        if j_max < 1 {
            return Err(Error::Config("grid.J must be >= 1".into()));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("grid.rho_grid = {rho} not in (0,1)")));
        }
        if !(k_max > 0.0 && k_max <= 1.0) {
            return Err(Error::Config(format!("grid.k_max = {k_max} not in (0,1]")));
        }
        let shells: Vec<f64> = (0..=j_max).map(|j| k_max * rho.powi(j as i32)).collect();
        let (directions, polarizations) = match angular {
            AngularMode::Radial => (vec![], vec![]),
            AngularMode::Full { n_dirs } => {
                if n_dirs != 6 {
                    return Err(Error::Config(format!(
                        "grid.n_dirs = {n_dirs}: only the 6 axis directions are supported"
                    )));
                }
                let d = axis_directions();
                let p = d.iter().map(|&k| polarization_pair(k)).collect();
                (d, p)
            }
        };
        let per_shell = match angular {
            AngularMode::Radial => 1,
            AngularMode::Full { n_dirs } => 2 * n_dirs,
        };
        let mut modes = Vec::new();
        for (j, &k) in shells.iter().enumerate() {
            let w = ((1.0 - rho) * k * k / per_shell as f64).sqrt();
            match angular {
                AngularMode::Radial => modes.push(Mode { shell: j, dir: None, pol: 0, omega: k, weight: w }),
                AngularMode::Full { n_dirs } => {
                    for d in 0..n_dirs {
                        for p in 0..2 {
                            modes.push(Mode { shell: j, dir: Some(d), pol: p, omega: k, weight: w });
                        }
                    }
                }
            }
        }
        Ok(ModeGrid { j_max, rho, k_max, angular, shells, directions, polarizations, modes })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn per_shell(&self) -> usize {
        match self.angular {
            AngularMode::Radial => 1,
            AngularMode::Full { n_dirs } => 2 * n_dirs,
        }
    }

    pub fn omega(&self, m: usize) -> f64 {
        self.modes[m].omega
    }

    pub fn weight(&self, m: usize) -> f64 {
        self.modes[m].weight
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.weight).collect()
    }

    /// Mode index moved by `ds` shells (same direction and polarization).
    pub fn shift(&self, m: usize, ds: isize) -> Option<usize> {
        let s = self.modes[m].shell as isize + ds;
        if s < 0 || s > self.j_max as isize {
            return None;
        }
        Some((m as isize + ds * self.per_shell() as isize) as usize)
    }

    /// Unit momentum direction of a mode (full mode only).
    pub fn direction(&self, m: usize) -> Option<[f64; 3]> {
        self.modes[m].dir.map(|d| self.directions[d])
    }

    pub fn polarization(&self, m: usize) -> Option<[f64; 3]> {
        self.modes[m].dir.map(|d| self.polarizations[d][self.modes[m].pol])
    }

    /// Quadrature of the integral of |k|^{-2} over the unit ball (8 pi in the continuum).
    pub fn inverse_square_measure(&self) -> f64 {
        self.modes
            .iter()
            .filter(|m| m.omega <= 1.0 + 1e-12)
            .map(|m| 8.0 * PI * m.weight * m.weight / m.omega)
            .sum()
    }

    /// Largest deviation from orthonormality of the triads (e1, e2, k).
    pub fn triad_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (d, k) in self.directions.iter().enumerate() {
            let v = [self.polarizations[d][0], self.polarizations[d][1], *k];
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|a| v[i][a] * v[j][a]).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((dot - target).abs());
                }
            }
        }
        worst
    }
}

/// Occupation-number basis with total photon number <= n_max, optionally
/// restricted to field energy <= e_max.
#[derive(Clone, Debug)]
pub struct FockBasis {
    pub n_modes: usize,
    pub n_max: usize,
    pub e_max: Option<f64>,
    pub states: Vec<Vec<u8>>,
    pub energies: Vec<f64>,
    pub photons: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
}

fn gen_occupations(n_modes: usize, total: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(pos: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if pos == cur.len() - 1 {
            cur[pos] = left as u8;
            out.push(cur.clone());
            cur[pos] = 0;
            return;
        }
        for k in (0..=left).rev() {
            cur[pos] = k as u8;
            rec(pos + 1, left - k, cur, out);
        }
        cur[pos] = 0;
    }
    if n_modes == 0 {
        if total == 0 {
            out.push(vec![]);
        }
        return;
    }
    let mut cur = vec![0u8; n_modes];
    rec(0, total, &mut cur, out);
}

pub fn occupation_energy(occ: &[u8], omegas: &[f64]) -> f64 {
    let mut e = 0.0;
    for (n, w) in occ.iter().zip(omegas) {
        if *n > 0 {
            e += *n as f64 * w;
        }
    }
    e
}

impl FockBasis {
    pub fn new(grid: &ModeGrid, n_max: usize) -> Self {
        Self::build(grid, n_max, None)
    }

    /// Basis of the reduced space H_red (field energy <= e_max).
    pub fn with_cutoff(grid: &ModeGrid, n_max: usize, e_max: f64) -> Self {
        Self::build(grid, n_max, Some(e_max))
    }

    fn build(grid: &ModeGrid, n_max: usize, e_max: Option<f64>) -> Self {
        let omegas = grid.omegas();
        let n_modes = omegas.len();
        let mut states = Vec::new();
        for n in 0..=n_max {
            let mut occs = Vec::new();
            gen_occupations(n_modes, n, &mut occs);
            for o in occs {
                let e = occupation_energy(&o, &omegas);
                if e_max.map_or(true, |em| e <= em + 1e-12) {
                    states.push(o);
                }
            }
        }
        let energies: Vec<f64> = states.iter().map(|o| occupation_energy(o, &omegas)).collect();
        let photons = states.iter().map(|o| o.iter().map(|&x| x as usize).sum()).collect();
        let index = states.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        FockBasis { n_modes, n_max, e_max, states, energies, photons, index }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Indices of states with fewer than n_max photons (where the CCR hold exactly).
    pub fn interior(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.photons[i] < self.n_max).collect()
    }

    /// Diagonal operator f(H_f).
    pub fn diag_fn(&self, f: impl Fn(f64) -> C64) -> CMat {
        let n = self.dim();
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = f(self.energies[i]);
        }
        m
    }

    pub fn vacuum(&self) -> crate::num::CVec {
        let mut v = crate::num::CVec::zeros(self.dim());
        v[0] = c(1.0, 0.0);
        v
    }
}

pub fn expected_state_count(n_modes: usize, n_max: usize) -> usize {
    (0..=n_max).map(|n| crate::num::binom(n_modes + n - 1, n)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adjointness {
    None,
    SelfAdjoint,
    KnownAdjoint,
}

#[derive(Clone, Debug)]
pub struct FockOperator {
    pub mat: CMat,
    pub tag: Adjointness,
}

impl FockOperator {
    pub fn new(basis: &FockBasis, mat: CMat, tag: Adjointness) -> Result<Self> {
        if mat.nrows() != basis.dim() || mat.ncols() != basis.dim() {
            return Err(Error::GridMismatch(format!(
                "operator {}x{} on basis of dimension {}",
                mat.nrows(),
                mat.ncols(),
                basis.dim()
            )));
        }
        if tag == Adjointness::SelfAdjoint {
            let d = linalg::max_abs(&(&mat - mat.adjoint()));
            if d > 1e-12 {
                return Err(Error::Linalg(format!("self-adjoint tag violated by {d:.3e}")));
            }
        }
        Ok(FockOperator { mat, tag })
    }

    pub fn adjoint(&self) -> FockOperator {
        FockOperator { mat: self.mat.adjoint(), tag: self.tag }
    }
}

/// Matrix of a*(mode); amplitudes leaving the basis are dropped.
pub fn creation(basis: &FockBasis, mode: usize) -> FockOperator {
    let n = basis.dim();
    let mut m = CMat::zeros(n, n);
    for (s, occ) in basis.states.iter().enumerate() {
        let mut o = occ.clone();
        let k = o[mode] as f64;
        o[mode] += 1;
        if let Some(t) = basis.index_of(&o) {
            m[(t, s)] = c((k + 1.0).sqrt(), 0.0);
        }
    }
    FockOperator { mat: m, tag: Adjointness::KnownAdjoint }
}

pub fn annihilation(basis: &FockBasis, mode: usize) -> FockOperator {
    creation(basis, mode).adjoint()
}

pub fn number_operator(basis: &FockBasis) -> FockOperator {
    let m = basis.diag_fn(|_| ZERO);
    let mut m = m;
    for i in 0..basis.dim() {
        m[(i, i)] = c(basis.photons[i] as f64, 0.0);
    }
    FockOperator { mat: m, tag: Adjointness::SelfAdjoint }
}

pub fn field_energy(basis: &FockBasis) -> FockOperator {
    FockOperator { mat: basis.diag_fn(|e| c(e, 0.0)), tag: Adjointness::SelfAdjoint }
}

/// The dilation Gamma_rho: a photon in shell j is moved to shell j-1 (momentum
/// k -> k/rho), shell-0 photons leave the grid and the state is dropped.
/// Gamma H_f Gamma^dagger = rho H_f and Gamma^dagger moves shell j to j+1.
pub fn dilation(basis: &FockBasis, grid: &ModeGrid, rho: f64) -> Result<FockOperator> {
    if (rho - grid.rho).abs() > 1e-14 {
        return Err(Error::GridMismatch(format!("rho = {rho} but grid ratio is {}", grid.rho)));
    }
    let n = basis.dim();
    let ps = grid.per_shell();
    let mut m = CMat::zeros(n, n);
    for (s, occ) in basis.states.iter().enumerate() {
        if occ[..ps].iter().any(|&x| x > 0) {
            continue;
        }
        let mut o = vec![0u8; occ.len()];
        for i in ps..occ.len() {
            o[i - ps] = occ[i];
        }
        if let Some(t) = basis.index_of(&o) {
            m[(t, s)] = c(1.0, 0.0);
        }
    }
    Ok(FockOperator { mat: m, tag: Adjointness::KnownAdjoint })
}

/// Orthogonal projection 1_{H_f <= threshold}.
pub fn spectral_cutoff(basis: &FockBasis, threshold: f64) -> FockOperator {
    FockOperator {
        mat: basis.diag_fn(|e| if e <= threshold + 1e-12 { c(1.0, 0.0) } else { ZERO }),
        tag: Adjointness::SelfAdjoint,
    }
}

/// Restriction of a matrix to the given row/column index set.
pub fn block(m: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// ||f(H_f) a*(m) - a*(m) f(H_f + w_m)|| on the photon-< n_max block.
pub fn pull_through_residual(basis: &FockBasis, grid: &ModeGrid, f: &dyn Fn(f64) -> f64, mode: usize) -> f64 {
    let a = creation(basis, mode).mat;
    let w = grid.omega(mode);
    let lhs = basis.diag_fn(|e| c(f(e), 0.0)) * &a;
    let rhs = &a * basis.diag_fn(|e| c(f(e + w), 0.0));
    let cols = basis.interior();
    let rows: Vec<usize> = (0..basis.dim()).collect();
    linalg::op_norm(&block(&(lhs - rhs), &rows, &cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shells_and_counts() {
        let g = ModeGrid::build(1, 0.5, 1.0, AngularMode::Radial).unwrap();
        assert_eq!(g.shells, vec![1.0, 0.5]);
        let g = ModeGrid::build(2, 0.25, 1.0, AngularMode::Full { n_dirs: 6 }).unwrap();
        assert_eq!(g.n_modes(), 2 * 6 * 3);
        let b = FockBasis::new(&g, 2);
        assert_eq!(b.dim(), expected_state_count(36, 2));
        assert_eq!(b.energies[0], 0.0);
    }

    #[test]
    fn ladder_on_one_mode() {
        let g = ModeGrid::build(1, 0.5, 1.0, AngularMode::Radial).unwrap();
        let b = FockBasis::new(&g, 2);
        let a = creation(&b, 0).mat;
        let one = b.index_of(&[1, 0]).unwrap();
        let two = b.index_of(&[2, 0]).unwrap();
        assert_eq!(a[(one, 0)], c(1.0, 0.0));
        assert!((a[(two, one)].re - 2f64.sqrt()).abs() < 1e-15);
    }
}

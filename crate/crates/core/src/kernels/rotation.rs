//! The rotation group of the axis direction set acting on full-mode kernels
//! and on Fock space.

use super::{decode_tuple, Kernel, KernelSeq};
use crate::error::{Error, Result};
use crate::fock::{AngularMode, FockBasis, ModeGrid};
use crate::num::{c, CMat};
use std::collections::BTreeMap;

pub type Rotation = [[f64; 3]; 3];

fn mat_vec(r: &Rotation, v: [f64; 3]) -> [f64; 3] {
    let mut o = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i] += r[i][j] * v[j];
        }
    }
    o
}

fn det(r: &Rotation) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// The 24 proper rotations of the cube (signed permutation matrices, det = 1).
pub fn octahedral_group() -> Vec<Rotation> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for p in perms {
        for s in 0..8 {
            let mut r = [[0.0; 3]; 3];
            for i in 0..3 {
                r[i][p[i]] = if s >> i & 1 == 1 { -1.0 } else { 1.0 };
            }
            if det(&r) > 0.0 {
                out.push(r);
            }
        }
    }
    out
}

pub fn rotation_about_z(phi: f64) -> Rotation {
    let (s, co) = phi.sin_cos();
    [[co, -s, 0.0], [s, co, 0.0], [0.0, 0.0, 1.0]]
}

/// One-photon representation: column i holds the (target mode, coefficient)
/// pairs of U a*(i) U^dagger = sum_j u_{ji} a*(j).
#[derive(Clone, Debug)]
pub struct ModeMap {
    pub cols: Vec<Vec<(usize, f64)>>,
}

pub fn mode_map(grid: &ModeGrid, r: &Rotation) -> Result<ModeMap> {
    if !matches!(grid.angular, AngularMode::Full { .. }) {
        return Err(Error::Symmetry("rotations act on full angular mode only".into()));
    }
    let orth: f64 = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| {
            let d: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            (d - if i == j { 1.0 } else { 0.0 }).abs()
        })
        .fold(0.0, f64::max);
    if orth > 1e-12 || det(r) < 0.0 {
        return Err(Error::Symmetry("matrix is not a proper rotation".into()));
    }
    let nd = grid.directions.len();
    let mut target = vec![0usize; nd];
    for (d, k) in grid.directions.iter().enumerate() {
        let rk = mat_vec(r, *k);
        let hit = grid
            .directions
            .iter()
            .position(|q| (0..3).all(|a| (q[a] - rk[a]).abs() < 1e-12))
            .ok_or_else(|| Error::Symmetry(format!("rotation maps direction {d} off the grid")))?;
        target[d] = hit;
    }
    let mut cols = vec![Vec::new(); grid.n_modes()];
    for (i, mode) in grid.modes.iter().enumerate() {
        let d = mode.dir.unwrap();
        let re = mat_vec(r, grid.polarizations[d][mode.pol]);
        let d2 = target[d];
        for lam in 0..2 {
            let e = grid.polarizations[d2][lam];
            let coef: f64 = (0..3).map(|a| e[a] * re[a]).sum();
            if coef.abs() > 1e-15 {
                let j = mode.shell * grid.per_shell() + d2 * 2 + lam;
                cols[i].push((j, coef));
            }
        }
    }
    Ok(ModeMap { cols })
}

/// Kernel of U H(w) U^dagger: every leg transformed by the one-photon map.
pub fn rotate_kernel(k: &Kernel, grid: &ModeGrid, r: &Rotation) -> Result<Kernel> {
    let map = mode_map(grid, r)?;
    Ok(apply_map(k, &map))
}

pub fn apply_map(k: &Kernel, map: &ModeMap) -> Kernel {
    let legs = k.m + k.n;
    let nm = k.n_modes;
    let nr = k.grid.n;
    let mut cur = k.clone();
    for p in 0..legs {
        let stride = nm.pow((legs - 1 - p) as u32);
        let mut next = Kernel::zeros(k.m, k.n, nm, &k.grid);
        for t in 0..k.n_tuples() {
            let i = decode_tuple(t, nm, legs)[p];
            let base = t - i * stride;
            for &(j, coef) in &map.cols[i] {
                let t2 = base + j * stride;
                for x in 0..nr {
                    next.values[t2 * nr + x] += cur.values[t * nr + x] * coef;
                    next.d_values[t2 * nr + x] += cur.d_values[t * nr + x] * coef;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Group average (1/|G|) sum_R R.w.
pub fn rotation_average(k: &Kernel, grid: &ModeGrid, group: &[Rotation]) -> Result<Kernel> {
    let mut acc = Kernel::zeros(k.m, k.n, k.n_modes, &k.grid);
    for r in group {
        acc.add_scaled(&rotate_kernel(k, grid, r)?, c(1.0 / group.len() as f64, 0.0));
    }
    Ok(acc)
}

pub fn rotate_seq(w: &KernelSeq, grid: &ModeGrid, r: &Rotation) -> Result<KernelSeq> {
    let map = mode_map(grid, r)?;
    let mut out = w.clone();
    for k in out.entries.values_mut() {
        *k = apply_map(k, &map);
    }
    Ok(out)
}

/// Largest deviation max_R ||R.w - w|| over the group.
pub fn invariance_defect(w: &KernelSeq, grid: &ModeGrid, group: &[Rotation]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for r in group {
        worst = worst.max(rotate_seq(w, grid, r)?.max_diff(w));
    }
    Ok(worst)
}

/// The second-quantized rotation U_F on the truncated basis.
pub fn fock_rotation(basis: &FockBasis, grid: &ModeGrid, r: &Rotation) -> Result<CMat> {
    let map = mode_map(grid, r)?;
    let n = basis.dim();
    let mut u = CMat::zeros(n, n);
    for (s, occ) in basis.states.iter().enumerate() {
        let mut vec: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        vec.insert(vec![0u8; occ.len()], 1.0);
        let mut norm = 1.0;
        for (i, &ni) in occ.iter().enumerate() {
            for _ in 0..ni {
                let mut next: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
                for (o, amp) in &vec {
                    for &(j, coef) in &map.cols[i] {
                        let mut o2 = o.clone();
                        let a = (o2[j] as f64 + 1.0).sqrt();
                        o2[j] += 1;
                        *next.entry(o2).or_insert(0.0) += amp * coef * a;
                    }
                }
                vec = next;
            }
            norm *= crate::num::factorial(ni as usize);
        }
        let inv = 1.0 / norm.sqrt();
        for (o, amp) in vec {
            if amp.abs() < 1e-300 {
                continue;
            }
            let t = basis
                .index_of(&o)
                .ok_or_else(|| Error::Symmetry("rotated state leaves the basis".into()))?;
            u[(t, s)] += c(amp * inv, 0.0);
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_has_24_elements_and_preserves_directions() {
        let g = octahedral_group();
        assert_eq!(g.len(), 24);
        let grid = ModeGrid::build(1, 0.5, 1.0, AngularMode::Full { n_dirs: 6 }).unwrap();
        for r in &g {
            let m = mode_map(&grid, r).unwrap();
            for col in &m.cols {
                let n2: f64 = col.iter().map(|x| x.1 * x.1).sum();
                assert!((n2 - 1.0).abs() < 1e-14);
            }
        }
        assert!(mode_map(&grid, &rotation_about_z(0.3)).is_err());
    }
}

//! Physical inputs: atomic families H_at(theta, alpha), the photon coupling,
//! the hatted Hamiltonian on atom (x) Fock, the Riesz projection, the initial
//! Feshbach step and the exact-diagonalization oracle.

use crate::error::{Error, Result};
use crate::feshbach::{check_pair, smooth_chi, ChiOps, FeshbachPairReport};
use crate::fock::{annihilation, creation, AngularMode, FockBasis, ModeGrid};
use crate::kernels::{Kernel, KernelSeq, ZFamily};
use crate::linalg::{self, kron};
use crate::num::{c, CMat, CVec, Dual, RGrid, C64, I, ONE, ZERO};
use crate::rg::{ball_membership, BallReport, RGConfig};
use crate::wick::{neumann_wick, Interaction, NeumannSetup};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const RIESZ_NODES: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum AtomMode {
    Matrix { d: usize },
    HydrogenRadial { n_grid: usize, box_len: f64 },
}

/// Radial operators of the s-wave hydrogen discretization on r_i = i h.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialOps {
    pub radii: Vec<f64>,
    /// -1/2 d^2/dr^2 with Dirichlet ends.
    pub kinetic: CMat,
    /// -i d/dr by central differences.
    pub momentum: CMat,
    pub potential: Vec<f64>,
    /// r / <r>.
    pub s: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomSpec {
    pub mode: AtomMode,
    /// Matrix mode: H_at at theta = alpha = 0.
    pub h0: CMat,
    /// Matrix mode: H_at(theta, alpha) = S h0 S^{-1}, S = exp(i alpha X) exp(i theta G).
    pub gen_theta: CMat,
    pub gen_alpha: CMat,
    /// Matrix mode dipole matrices: one (radial grid) or three (x, y, z).
    pub dipole: Vec<CMat>,
    /// Coefficient of :A^2:.
    pub quad: f64,
    pub radial: Option<RadialOps>,
    /// Factor applied to the atomic Hamiltonian by `normalize_gap`.
    pub scale: f64,
}

fn pauli() -> (CMat, CMat, CMat) {
    let x = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let y = CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]);
    let z = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
    (x, y, z)
}

impl AtomSpec {
    pub fn matrix(h0: CMat, gen_theta: CMat, gen_alpha: CMat, dipole: Vec<CMat>, quad: f64) -> Result<Self> {
        let d = h0.nrows();
        let herm = |m: &CMat| linalg::max_abs(&(m - m.adjoint())) <= 1e-14 && m.nrows() == d && m.ncols() == d;
        if !herm(&h0) || !herm(&gen_theta) || !herm(&gen_alpha) || !dipole.iter().all(herm) {
            return Err(Error::Config("matrix atom needs Hermitian d x d h0, generators and dipoles".into()));
        }
        if dipole.len() != 1 && dipole.len() != 3 {
            return Err(Error::Config("dipole must have one or three components".into()));
        }
        Ok(AtomSpec {
            mode: AtomMode::Matrix { d },
            h0,
            gen_theta,
            gen_alpha,
            dipole,
            quad,
            radial: None,
            scale: 1.0,
        })
    }

    /// Two-level toy: H0 = diag(0, 1), dipole 0.006 sigma_x, :A^2: weight 1e-4.
    pub fn matrix_toy() -> Self {
        let (x, y, z) = pauli();
        let h0 = linalg::real_diag(&[0.0, 1.0]);
        let g = &x * c(0.5, 0.0) + &z * c(0.2, 0.0);
        let a = &y * c(0.3, 0.0) + &x * c(0.1, 0.0);
        AtomSpec::matrix(h0, g, a, vec![&x * c(0.006, 0.0)], 1e-4).unwrap()
    }

    /// Two-level toy with a vector dipole for the full angular grid. The
    /// diagonal parts give the atom a nonzero mean dipole.
    pub fn matrix_toy_vector() -> Self {
        let (x, _, z) = pauli();
        let base = Self::matrix_toy();
        let comps = [0.5, 0.3, 0.2]
            .iter()
            .map(|&v| (&x + &z * c(v, 0.0)) * c(0.006, 0.0))
            .collect();
        AtomSpec { dipole: comps, ..base }
    }

    /// s-wave hydrogen on n_grid interior points of (0, box_len).
    pub fn hydrogen_radial(n_grid: usize, box_len: f64) -> Result<Self> {
        if n_grid < 10 || box_len <= 0.0 {
            return Err(Error::Config("hydrogen grid needs n_grid >= 10 and a positive box".into()));
        }
        let h = box_len / (n_grid + 1) as f64;
        let radii: Vec<f64> = (1..=n_grid).map(|i| i as f64 * h).collect();
        let mut kinetic = CMat::zeros(n_grid, n_grid);
        let mut momentum = CMat::zeros(n_grid, n_grid);
        for i in 0..n_grid {
            kinetic[(i, i)] = c(1.0 / (h * h), 0.0);
            if i + 1 < n_grid {
                kinetic[(i, i + 1)] = c(-0.5 / (h * h), 0.0);
                kinetic[(i + 1, i)] = c(-0.5 / (h * h), 0.0);
                momentum[(i, i + 1)] = c(0.0, -0.5 / h);
                momentum[(i + 1, i)] = c(0.0, 0.5 / h);
            }
        }
        let potential = radii.iter().map(|r| -1.0 / r).collect();
        let s = radii.iter().map(|r| r / (1.0 + r * r).sqrt()).collect();
        Ok(AtomSpec {
            mode: AtomMode::HydrogenRadial { n_grid, box_len },
            h0: CMat::zeros(0, 0),
            gen_theta: CMat::zeros(0, 0),
            gen_alpha: CMat::zeros(0, 0),
            dipole: vec![],
            quad: 0.5,
            radial: Some(RadialOps { radii, kinetic, momentum, potential, s }),
            scale: 1.0,
        })
    }

    pub fn dim(&self) -> usize {
        match self.mode {
            AtomMode::Matrix { d } => d,
            AtomMode::HydrogenRadial { n_grid, .. } => n_grid,
        }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self.mode, AtomMode::Matrix { .. })
    }

    pub fn similarity(&self, theta: C64, alpha: C64) -> (CMat, CMat) {
        let s = linalg::expm(&(&self.gen_alpha * (I * alpha))) * linalg::expm(&(&self.gen_theta * (I * theta)));
        let sinv = linalg::expm(&(&self.gen_theta * (-I * theta))) * linalg::expm(&(&self.gen_alpha * (-I * alpha)));
        (s, sinv)
    }

    /// The kinetic momentum e^{-theta} p - alpha r/<r> (radial mode).
    fn radial_momentum(&self, theta: C64, alpha: C64) -> CMat {
        let r = self.radial.as_ref().unwrap();
        let s = linalg::diag(&r.s.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>());
        &r.momentum * (-theta).exp() - s * alpha
    }

    /// H_at(theta, alpha), including the gap normalization factor.
    pub fn h_at(&self, theta: C64, alpha: C64) -> CMat {
        let raw = match self.mode {
            AtomMode::Matrix { .. } => {
                let (s, sinv) = self.similarity(theta, alpha);
                s * &self.h0 * sinv
            }
            AtomMode::HydrogenRadial { .. } => {
                let r = self.radial.as_ref().unwrap();
                let et = (-theta).exp();
                let sv: Vec<C64> = r.s.iter().map(|&x| c(x, 0.0)).collect();
                let s = linalg::diag(&sv);
                // (1/2) pi^2 with p^2 replaced by the three-point Laplacian
                let kin = &r.kinetic * (et * et) - (&r.momentum * &s + &s * &r.momentum) * (alpha * et * 0.5)
                    + &s * &s * (alpha * alpha * 0.5);
                kin + linalg::diag(&r.potential.iter().map(|&v| et * v).collect::<Vec<_>>())
            }
        };
        raw * c(self.scale, 0.0)
    }

    /// The two lowest (real) eigenvalues of H_at(0, 0).
    pub fn lowest_levels(&self) -> (f64, f64) {
        let mut ev: Vec<f64> = linalg::eigenvalues(&self.h_at(ZERO, ZERO)).iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (ev[0], ev.get(1).copied().unwrap_or(f64::INFINITY))
    }

    pub fn gap(&self) -> f64 {
        let (a, b) = self.lowest_levels();
        b - a
    }
}

/// Rescales H_at so that E_1 - E_0 = 1; the factor is kept in `scale`.
pub fn normalize_gap(a: &AtomSpec) -> Result<AtomSpec> {
    normalize_gap_to(a, 1.0)
}

/// Rescales H_at so that E_1 - E_0 = target.
pub fn normalize_gap_to(a: &AtomSpec, target: f64) -> Result<AtomSpec> {
    let (e0, e1) = a.lowest_levels();
    let gap = e1 - e0;
    if !(gap > 1e-9 * (1.0 + e0.abs())) {
        return Err(Error::DegenerateGroundState(format!("lowest levels {e0} and {e1}")));
    }
    let mut out = a.clone();
    out.scale = a.scale * target / gap;
    Ok(out)
}

/// Atomic eigenvalue with its Riesz projection P = phi phit^dagger.
#[derive(Clone, Debug)]
pub struct AtomicGround {
    pub energy: C64,
    pub p: CMat,
    pub phi: CVec,
    pub phit: CVec,
}

/// (2 pi i)^{-1} times the trapezoid rule for the contour integral of
/// (z - H)^{-1} over the circle |z - center| = radius.
pub fn riesz_projection(h: &CMat, center: C64, radius: f64, n_nodes: usize) -> Result<CMat> {
    let n = h.nrows();
    for ev in linalg::eigenvalues(h) {
        let d = (ev - center).norm();
        if (d - radius).abs() < 0.05 * radius {
            return Err(Error::ContourCrossesSpectrum(format!("eigenvalue {ev} lies on the contour")));
        }
    }
    let mut p = CMat::zeros(n, n);
    for q in 0..n_nodes {
        let u = C64::from_polar(1.0, 2.0 * PI * q as f64 / n_nodes as f64);
        let z = center + u * radius;
        let res = linalg::inverse(&(CMat::identity(n, n) * z - h))?;
        // dz / (2 pi i) = radius u dphi / (2 pi)
        p += res * (u * radius / n_nodes as f64);
    }
    Ok(p)
}

/// The atomic ground level of H_at(theta, alpha): the eigenvalue nearest to
/// the ground level at theta = alpha = 0, its projection and vectors.
pub fn atomic_ground(a: &AtomSpec, theta: C64, alpha: C64, n_nodes: usize) -> Result<AtomicGround> {
    let (e00, e01) = a.lowest_levels();
    let radius = 0.5 * (e01 - e00);
    let h = a.h_at(theta, alpha);
    let center = linalg::eigenvalues(&h)
        .into_iter()
        .min_by(|x, y| (x - e00).norm().partial_cmp(&(y - e00).norm()).unwrap())
        .ok_or_else(|| Error::Config("empty atom".into()))?;
    let p = riesz_projection(&h, center, radius, n_nodes)?;
    let tr: C64 = (0..p.nrows()).map(|i| p[(i, i)]).sum();
    let idem = linalg::max_abs(&(&p * &p - &p));
    if (tr - 1.0).norm() > 1e-8 || idem > 1e-8 {
        return Err(Error::ContourCrossesSpectrum(format!("projection trace {tr}, idempotency defect {idem:.2e}")));
    }
    let mut best = 0;
    for j in 0..p.ncols() {
        if p.column(j).norm() > p.column(best).norm() {
            best = j;
        }
    }
    let mut phi: CVec = p.column(best).into_owned();
    phi /= c(phi.norm(), 0.0);
    let phit = p.adjoint() * &phi;
    let energy = (phit.adjoint() * &h * &phi)[(0, 0)];
    Ok(AtomicGround { energy, p, phi, phit })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaKind {
    Exponential,
    Gaussian,
    Sharp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kind: KappaKind,
    pub scale: f64,
}

impl Kappa {
    pub fn exponential() -> Self {
        Kappa { kind: KappaKind::Exponential, scale: 1.0 }
    }

    /// kappa(k) for complex arguments (the sharp cutoff uses Re k).
    pub fn value(&self, k: C64) -> C64 {
        let x = k / self.scale;
        match self.kind {
            KappaKind::Exponential => (-x).exp(),
            KappaKind::Gaussian => (-x * x).exp(),
            KappaKind::Sharp => {
                if x.re <= 1.0 + 1e-12 {
                    ONE
                } else {
                    ZERO
                }
            }
        }
    }

    /// int d^3k |kappa|^2 / |k| in closed form.
    pub fn continuum_shift(&self) -> f64 {
        let s2 = self.scale * self.scale;
        match self.kind {
            KappaKind::Exponential | KappaKind::Gaussian => PI * s2,
            KappaKind::Sharp => 2.0 * PI * s2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingSpec {
    pub g: C64,
    pub theta: C64,
    pub alpha: C64,
    pub kappa: Kappa,
    pub beta: f64,
}

impl CouplingSpec {
    pub fn new(g: C64, theta: C64, alpha: C64) -> Self {
        CouplingSpec { g, theta, alpha, kappa: Kappa::exponential(), beta: 1.0 }
    }
}

/// The coupling in operator form: W = 2 g sum_k amp_k D_k (x) (a_k + a*_k)
/// + g^2 quad sum_{k,q} amp_k amp_q B_{kq} (x) (a*a* + 2 a*_k a_q + a a),
/// with B_{kq} = sum_j F_{kj} F_{qj}. The hatted Hamiltonian is
/// prefactor (H_at + W) + H_f.
#[derive(Clone, Debug)]
pub struct CouplingOps {
    pub g: C64,
    pub quad: f64,
    pub prefactor: C64,
    /// c_k f(k) per mode.
    pub amp: Vec<C64>,
    /// f(k) = sqrt(4 pi) kappa(k) per mode (kernel values carry no c_k).
    pub profile: Vec<C64>,
    pub linear: Vec<CMat>,
    pub quad_factors: Vec<Vec<CMat>>,
    /// E = Ehat / prefactor + shift.
    pub shift: C64,
}

impl CouplingOps {
    pub fn quad_block(&self, k: usize, q: usize) -> CMat {
        let d = self.linear[0].nrows();
        let mut b = CMat::zeros(d, d);
        for (x, y) in self.quad_factors[k].iter().zip(&self.quad_factors[q]) {
            b += x * y;
        }
        b
    }
}

fn spherical_j0(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

pub fn coupling_ops(a: &AtomSpec, cs: &CouplingSpec, grid: &ModeGrid) -> Result<CouplingOps> {
    let nm = grid.n_modes();
    let d = a.dim();
    let full = matches!(grid.angular, AngularMode::Full { .. });
    let root = (4.0 * PI).sqrt();
    let mut linear = Vec::with_capacity(nm);
    let mut quad_factors = Vec::with_capacity(nm);
    let mut profile = Vec::with_capacity(nm);
    let prefactor;
    match a.mode {
        AtomMode::Matrix { .. } => {
            if full != (a.dipole.len() == 3) {
                return Err(Error::Config("vector dipole goes with the full angular grid, scalar with radial".into()));
            }
            prefactor = ONE;
            let (s, sinv) = a.similarity(cs.theta, cs.alpha);
            let ds: Vec<CMat> = a.dipole.iter().map(|m| &s * m * &sinv).collect();
            let id = CMat::identity(d, d);
            for m in 0..nm {
                profile.push(a_kappa(cs, grid.omega(m), ZERO) * root);
                if full {
                    let e = grid.polarization(m).unwrap();
                    let mut dk = CMat::zeros(d, d);
                    for j in 0..3 {
                        dk += &ds[j] * c(e[j], 0.0);
                    }
                    linear.push(dk);
                    quad_factors.push((0..3).map(|j| &id * c(e[j], 0.0)).collect());
                } else {
                    linear.push(ds[0].clone());
                    quad_factors.push(vec![id.clone()]);
                }
            }
        }
        AtomMode::HydrogenRadial { .. } => {
            if full {
                return Err(Error::Config("hydrogen mode runs on the radial grid only".into()));
            }
            prefactor = cs.theta.exp();
            let r = a.radial.as_ref().unwrap();
            let pi = a.radial_momentum(cs.theta, cs.alpha);
            for m in 0..nm {
                let k = grid.omega(m);
                profile.push(a_kappa(cs, k, cs.theta) * root);
                let jk = linalg::real_diag(&r.radii.iter().map(|&x| spherical_j0(cs.beta * k * x)).collect::<Vec<_>>());
                linear.push((&pi * &jk + &jk * &pi) * c(0.25, 0.0));
                quad_factors.push(vec![jk]);
            }
        }
    }
    let amp: Vec<C64> = (0..nm).map(|m| profile[m] * grid.weight(m)).collect();
    let s_grid: f64 = (0..nm).map(|m| (a_kappa(cs, grid.omega(m), ZERO) * root * grid.weight(m)).norm_sqr()).sum();
    let shift = cs.g * cs.g * a.quad * s_grid;
    Ok(CouplingOps { g: cs.g, quad: a.quad, prefactor, amp, profile, linear, quad_factors, shift })
}

/// kappa(e^{-theta} k).
fn a_kappa(cs: &CouplingSpec, k: f64, theta: C64) -> C64 {
    cs.kappa.value((-theta).exp() * k)
}

/// N g^2 sum_k c_k^2 f(k)^2: the grid value of g^2 int |kappa|^2/|k| d^3k.
pub fn vacuum_shift(cs: &CouplingSpec, grid: &ModeGrid) -> C64 {
    let root = (4.0 * PI).sqrt();
    let s: f64 = (0..grid.n_modes())
        .map(|m| (a_kappa(cs, grid.omega(m), ZERO) * root * grid.weight(m)).norm_sqr())
        .sum();
    cs.g * cs.g * s
}

/// e^{-2 theta} g^2 int d^3k kappa(e^{-theta} k)^2 / |k| along the real
/// axis, by composite Simpson on [0, 80 scale].
pub fn dilated_vacuum_shift(cs: &CouplingSpec) -> C64 {
    let upper = 80.0 * cs.kappa.scale;
    let n = 200_000;
    let h = upper / n as f64;
    let f = |k: f64| {
        let v = cs.kappa.value((-cs.theta).exp() * k);
        v * v * k * 4.0 * PI
    };
    let mut acc = f(0.0) + f(upper);
    for i in 1..n {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (-2.0 * cs.theta).exp() * cs.g * cs.g * acc * (h / 3.0)
}

/// The five interaction kernels as d x d blocks of r-independent kernels.
pub fn build_interaction_kernels(a: &AtomSpec, cs: &CouplingSpec, grid: &ModeGrid, rgrid: &RGrid) -> Result<Interaction> {
    let ops = coupling_ops(a, cs, grid)?;
    Ok(interaction_from_ops(&ops, grid, rgrid))
}

pub fn interaction_from_ops(ops: &CouplingOps, grid: &ModeGrid, rgrid: &RGrid) -> Interaction {
    let nm = grid.n_modes();
    let d = ops.linear[0].nrows();
    let pg = ops.prefactor * ops.g;
    let pg2 = ops.prefactor * ops.g * ops.g * ops.quad;
    let mut entries = BTreeMap::new();
    let blocks = |m: usize, n: usize, f: &dyn Fn(&[usize]) -> CMat| -> Vec<Kernel> {
        let legs = m + n;
        let nt = crate::kernels::n_tuples(nm, legs);
        let mats: Vec<CMat> = (0..nt).map(|t| f(&crate::kernels::decode_tuple(t, nm, legs))).collect();
        (0..d * d)
            .map(|ab| {
                let (x, y) = (ab / d, ab % d);
                let mut k = Kernel::zeros(m, n, nm, rgrid);
                for (t, mat) in mats.iter().enumerate() {
                    for i in 0..rgrid.n {
                        k.set(t, i, Dual::constant(mat[(x, y)]));
                    }
                }
                k
            })
            .collect()
    };
    let lin = |l: &[usize]| &ops.linear[l[0]] * (pg * 2.0 * ops.profile[l[0]]);
    entries.insert((1, 0), blocks(1, 0, &lin));
    entries.insert((0, 1), blocks(0, 1, &lin));
    let qd = |l: &[usize], w: f64| ops.quad_block(l[0], l[1]) * (pg2 * w * ops.profile[l[0]] * ops.profile[l[1]]);
    entries.insert((1, 1), blocks(1, 1, &|l| qd(l, 2.0)));
    entries.insert((2, 0), blocks(2, 0, &|l| qd(l, 1.0)));
    entries.insert((0, 2), blocks(0, 2, &|l| qd(l, 1.0)));
    Interaction { d, entries, r_independent: true }
}

/// Prefactor times the atomic Hamiltonian.
pub fn hat_atom(a: &AtomSpec, cs: &CouplingSpec, ops: &CouplingOps) -> CMat {
    a.h_at(cs.theta, cs.alpha) * ops.prefactor
}

/// The free part prefactor H_at (x) 1 + 1 (x) H_f.
pub fn free_hamiltonian(a: &AtomSpec, cs: &CouplingSpec, ops: &CouplingOps, basis: &FockBasis) -> CMat {
    let d = a.dim();
    let nf = basis.dim();
    kron(&hat_atom(a, cs, ops), &CMat::identity(nf, nf)) + kron(&CMat::identity(d, d), &basis.diag_fn(|e| c(e, 0.0)))
}

/// The hatted Hamiltonian on atom (x) Fock (atom index major).
pub fn assemble_hamiltonian(a: &AtomSpec, cs: &CouplingSpec, grid: &ModeGrid, basis: &FockBasis) -> Result<CMat> {
    let ops = coupling_ops(a, cs, grid)?;
    Ok(assemble_from_ops(a, cs, &ops, basis))
}

pub fn assemble_from_ops(a: &AtomSpec, cs: &CouplingSpec, ops: &CouplingOps, basis: &FockBasis) -> CMat {
    let mut h = free_hamiltonian(a, cs, ops, basis);
    if ops.g == ZERO {
        return h;
    }
    let nm = ops.amp.len();
    let cr: Vec<CMat> = (0..nm).map(|m| creation(basis, m).mat).collect();
    let an: Vec<CMat> = (0..nm).map(|m| annihilation(basis, m).mat).collect();
    let pg = ops.prefactor * ops.g;
    for k in 0..nm {
        h += kron(&(&ops.linear[k] * (pg * 2.0 * ops.amp[k])), &(&cr[k] + &an[k]));
    }
    let pg2 = ops.prefactor * ops.g * ops.g * ops.quad;
    for k in 0..nm {
        for q in 0..nm {
            let b = ops.quad_block(k, q) * (pg2 * ops.amp[k] * ops.amp[q]);
            if linalg::max_abs(&b) == 0.0 {
                continue;
            }
            let f = &cr[k] * &cr[q] + &cr[k] * &an[q] * c(2.0, 0.0) + &an[k] * &an[q];
            h += kron(&b, &f);
        }
    }
    h
}

/// Output of the initial Feshbach step.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub e_at: C64,
    pub ground: AtomicGround,
    pub ops: CouplingOps,
    pub interaction: Interaction,
    pub w0: ZFamily,
    pub pair: FeshbachPairReport,
    pub ball: BallReport,
    /// Largest observed Neumann term ratio over the z samples.
    pub ratio: f64,
}

/// chibar^(I)^2 (Hat H_at - E_at + E - z)^{-1} at H_f = E, as d x d duals.
fn initial_mid(hat_at: &CMat, ground: &AtomicGround, z: C64, e: f64) -> Vec<Dual> {
    let d = hat_at.nrows();
    let p = &ground.p;
    let pbar = CMat::identity(d, d) - p;
    let chi1 = smooth_chi(1.0);
    // A' = A + P (1 - (E - z)) agrees with A on Ran Pbar and is invertible
    let a = hat_at - CMat::identity(d, d) * ground.energy + CMat::identity(d, d) * (c(e, 0.0) - z);
    let a_reg = &a + p * (ONE - (c(e, 0.0) - z));
    let inv = linalg::inverse(&a_reg).unwrap_or_else(|_| CMat::zeros(d, d));
    let val = &pbar * &inv;
    let der = -(&pbar * &inv * &inv);
    let cb = chi1.chibar_sq_dual(e);
    let (pv, pd) = if cb.v == ZERO && cb.d == ZERO {
        (ZERO, ZERO)
    } else {
        let den = c(e, 0.0) - z;
        (cb.v / den, cb.d / den - cb.v / (den * den))
    };
    let mut out = Vec::with_capacity(d * d);
    for x in 0..d {
        for y in 0..d {
            out.push(Dual::new(val[(x, y)] + p[(x, y)] * pv, der[(x, y)] + p[(x, y)] * pd));
        }
    }
    out
}

/// The reduced kernel family w^(0)(z) of <F_chi(Hhat - z - E_at, Hhat_0 - z - E_at)>_at,
/// required to lie in the ball of radius eps0/2.
pub fn initial_feshbach(a: &AtomSpec, cs: &CouplingSpec, grid: &ModeGrid, cfg: &RGConfig) -> Result<InitialData> {
    let data = initial_kernels(a, cs, grid, cfg)?;
    let ball = &data.ball;
    if !ball.inside {
        return Err(Error::BallViolation(format!(
            "initial kernels: delta = ({:.3e}, {:.3e}, {:.3e}), radius {:.3e}",
            ball.delta1,
            ball.delta2,
            ball.delta3,
            cfg.eps0 / 2.0
        )));
    }
    Ok(data)
}

/// The initial family without the ball requirement (the pair check still applies).
pub fn initial_kernels(a: &AtomSpec, cs: &CouplingSpec, grid: &ModeGrid, cfg: &RGConfig) -> Result<InitialData> {
    let ops = coupling_ops(a, cs, grid)?;
    let ground0 = atomic_ground(a, cs.theta, cs.alpha, RIESZ_NODES)?;
    let hat_at = hat_atom(a, cs, &ops);
    // the atomic level of the hatted operator
    let ground = AtomicGround { energy: ground0.energy * ops.prefactor, ..ground0 };
    let interaction = interaction_from_ops(&ops, grid, &RGrid::new(3));
    let rgrid = RGrid::new(cfg.n_r);
    let chi1 = smooth_chi(1.0);
    let nm = grid.n_modes();
    let out_modes: Vec<usize> = (0..nm).filter(|&m| grid.omega(m) < 1.0 - 1e-12).collect();

    let pair = {
        let pb = FockBasis::new(grid, cfg.pair_n_max);
        let h = assemble_from_ops(a, cs, &ops, &pb);
        let t = free_hamiltonian(a, cs, &ops, &pb);
        let n = h.nrows();
        let shift = CMat::identity(n, n) * ground.energy;
        let chi_ops = ChiOps::atomic(&ground.phi, &ground.phit, &pb.energies, &chi1);
        check_pair(&(h - &shift), &(t - &shift), &chi_ops)
    };
    if !pair.valid {
        return Err(Error::PairInvalid(format!(
            "initial pair: commutator {:.3e}, contraction norms {:.3e} / {:.3e}",
            pair.commutator, pair.c_left, pair.c_right
        )));
    }

    let f_end = |e: f64| chi1.chi_dual(e);
    let start: Vec<C64> = ground.phi.iter().copied().collect();
    let end: Vec<C64> = ground.phit.iter().map(|z| z.conj()).collect();
    let ratio = std::cell::Cell::new(0.0f64);
    let sample = |z: C64| -> Result<KernelSeq> {
        let mid = |e: f64| initial_mid(&hat_at, &ground, z, e);
        let setup = NeumannSetup {
            grid,
            w: &interaction,
            f_end: &f_end,
            f_mid: &mid,
            start: start.clone(),
            end: end.clone(),
            r_out: rgrid.points(),
            out_modes: out_modes.clone(),
            m_out: cfg.m_max,
            l_max: cfg.l_max,
            cap: cfg.cap,
            xi: cfg.xi,
        };
        let out = neumann_wick(&setup)?;
        ratio.set(ratio.get().max(out.ratio));
        let mut seq = KernelSeq::new(nm, &rgrid, cfg.xi, cfg.m_max);
        for (key, k) in out.sum {
            seq.insert(k.clone());
            if key == (0, 0) {
                let free = Kernel::from_fn(0, 0, nm, &rgrid, |r, _, _| Dual::new(c(r, 0.0) - z, ONE));
                seq.entries.get_mut(&(0, 0)).unwrap().add_scaled(&free, ONE);
            }
        }
        seq.support_restrict(grid);
        seq.tail_bound = out.tail;
        Ok(seq)
    };
    let w0 = ZFamily::from_fn(cfg.z_radius, cfg.z_nodes, sample)?;
    let ball = ball_membership(&w0, cfg.eps0 / 2.0, cfg.eps0 / 2.0, cfg.eps0 / 2.0);
    Ok(InitialData { e_at: ground.energy, ground, ops, interaction, w0, pair, ball, ratio: ratio.get() })
}

/// Dense eigenpair of the hatted Hamiltonian continued from g = 0.
#[derive(Clone, Debug)]
pub struct ExactGround {
    /// Eigenvalue of the hatted operator.
    pub e_hat: C64,
    /// E = e_hat / prefactor + shift.
    pub energy: C64,
    pub psi: CVec,
    pub min_overlap: f64,
}

fn inverse_iteration(h: &CMat, shift: C64, v0: &CVec, iters: usize) -> Result<(C64, CVec)> {
    let n = h.nrows();
    let scale = linalg::max_abs(h).max(1.0);
    let mut s = shift;
    let mut v = v0 / c(v0.norm(), 0.0);
    let mut lam = s;
    for round in 0..3 {
        let lu = (h - CMat::identity(n, n) * s).lu();
        for _ in 0..iters {
            let w = match lu.solve(&v) {
                Some(w) => w,
                None => {
                    s += c(1e-12 * scale, 0.0);
                    break;
                }
            };
            let den = (v.adjoint() * &w)[(0, 0)];
            let new_lam = s + ONE / den;
            let nw = w.norm();
            if !nw.is_finite() || nw == 0.0 {
                return Err(Error::Linalg("inverse iteration breakdown".into()));
            }
            v = w / c(nw, 0.0);
            let done = (new_lam - lam).norm() <= 1e-15 * scale;
            lam = new_lam;
            if done {
                break;
            }
        }
        if round < 2 {
            s = lam + c(1e-9 * scale, 0.0);
        }
    }
    Ok((lam, v))
}

/// Continuation in g from the unperturbed eigenpair phi (x) Omega.
pub fn exact_ground(a: &AtomSpec, cs: &CouplingSpec, grid: &ModeGrid, basis: &FockBasis) -> Result<ExactGround> {
    let ops = coupling_ops(a, cs, grid)?;
    let ground = atomic_ground(a, cs.theta, cs.alpha, RIESZ_NODES)?;
    let nf = basis.dim();
    let mut v = kron(
        &CMat::from_column_slice(a.dim(), 1, ground.phi.as_slice()),
        &CMat::from_column_slice(nf, 1, basis.vacuum().as_slice()),
    )
    .column(0)
    .into_owned();
    let mut lam = ground.energy * ops.prefactor;
    let steps = 8;
    let mut min_overlap: f64 = 1.0;
    for t in 1..=steps {
        let mut cst = *cs;
        cst.g = cs.g * (t as f64 / steps as f64);
        let h = assemble_hamiltonian(a, &cst, grid, basis)?;
        let (l2, v2) = inverse_iteration(&h, lam, &v, 40)?;
        let ov = (v.adjoint() * &v2)[(0, 0)].norm() / (v.norm() * v2.norm());
        min_overlap = min_overlap.min(ov);
        if ov < 0.5 {
            return Err(Error::TrackingLost(format!("overlap {ov:.3} at g = {}", cst.g)));
        }
        lam = l2;
        v = v2;
    }
    Ok(ExactGround { e_hat: lam, energy: lam / ops.prefactor + ops.shift, psi: v, min_overlap })
}

//! End-to-end ground-state computation: initial Feshbach step, RG iteration,
//! vector reconstruction and the comparison with exact diagonalization.

use crate::analysis::eigen_residual;
use crate::error::{Error, Result};
use crate::feshbach::{feshbach_unchecked, find_singular_z, smooth_chi, ChiOps};
use crate::fock::{FockBasis, ModeGrid};
use crate::linalg::{self, kron};
use crate::model::{
    assemble_from_ops, atomic_ground, coupling_ops, exact_ground, free_hamiltonian, initial_feshbach, AtomSpec,
    CouplingSpec, ExactGround, RIESZ_NODES,
};
use crate::num::{c, CMat, CVec, C64};
use crate::rg::{iterate_with, reconstruct_vector, BallReport, RGConfig, RGTrace};
use crate::feshbach::FeshbachPairReport;
use crate::kernels::ZFamily;

#[derive(Clone, Debug)]
pub struct GroundState {
    /// E = (E_at + e0) / prefactor + shift.
    pub energy: C64,
    /// Eigenvalue of the hatted operator.
    pub e_hat: C64,
    pub e0: C64,
    pub psi: CVec,
    /// ||(H - E) psi|| / ||psi|| for the hatted operator on the oracle basis.
    pub residual: f64,
    pub iterations: usize,
    pub trace: RGTrace,
    pub families: Vec<ZFamily>,
    pub oracle: Option<ExactGround>,
    pub pair: Option<FeshbachPairReport>,
    pub initial_ball: Option<BallReport>,
}

/// Kernel-level route for matrix atoms without persistence.
pub fn ground_state(a: &AtomSpec, cs: &CouplingSpec, grid: &ModeGrid, cfg: &RGConfig, n_max: usize, oracle: bool) -> Result<GroundState> {
    ground_state_with(a, cs, grid, cfg, n_max, oracle, None, &mut |_, _| Ok(()))
}

/// Kernel-level route for matrix atoms. `resume` continues from already
/// computed families (the first must be the initial family); `on_level`
/// sees every family of the iteration.
#[allow(clippy::too_many_arguments)]
pub fn ground_state_with(
    a: &AtomSpec,
    cs: &CouplingSpec,
    grid: &ModeGrid,
    cfg: &RGConfig,
    n_max: usize,
    oracle: bool,
    resume: Option<Vec<ZFamily>>,
    on_level: &mut dyn FnMut(usize, &ZFamily) -> Result<()>,
) -> Result<GroundState> {
    if !a.is_matrix() {
        return Err(Error::Config("the kernel-level route needs a matrix atom".into()));
    }
    let init = initial_feshbach(a, cs, grid, cfg)?;
    let families = match resume {
        Some(f) if !f.is_empty() => f,
        _ => vec![init.w0.clone()],
    };
    let run = iterate_with(families, grid, cfg, on_level)?;
    let red = FockBasis::with_cutoff(grid, n_max, 1.0);
    let psi_red = reconstruct_vector(&run, grid, &red, cfg.rho)?;

    let full = FockBasis::new(grid, n_max);
    let mut psi0 = CVec::zeros(full.dim());
    for (i, occ) in red.states.iter().enumerate() {
        let j = full.index_of(occ).ok_or_else(|| Error::GridMismatch("reduced state missing from full basis".into()))?;
        psi0[j] = psi_red[i];
    }
    let h = assemble_from_ops(a, cs, &init.ops, &full);
    let t = free_hamiltonian(a, cs, &init.ops, &full);
    let e_hat = init.e_at + run.e0;
    let n = h.nrows();
    let shift = CMat::identity(n, n) * e_hat;
    let chi = ChiOps::atomic(&init.ground.phi, &init.ground.phit, &full.energies, &smooth_chi(1.0));
    let q = feshbach_unchecked(&(&h - &shift), &(&t - &shift), &chi)?.q;
    let seed = kron(
        &CMat::from_column_slice(a.dim(), 1, init.ground.phi.as_slice()),
        &CMat::from_column_slice(full.dim(), 1, psi0.as_slice()),
    )
    .column(0)
    .into_owned();
    let mut psi = q * seed;
    psi /= c(psi.norm(), 0.0);
    let residual = eigen_residual(&h, e_hat, &psi)?;
    let oracle = if oracle { Some(exact_ground(a, cs, grid, &full)?) } else { None };
    Ok(GroundState {
        energy: e_hat / init.ops.prefactor + init.ops.shift,
        e_hat,
        e0: run.e0,
        psi,
        residual,
        iterations: run.iterations,
        trace: run.trace,
        families: run.families,
        oracle,
        pair: Some(init.pair),
        initial_ball: Some(init.ball),
    })
}

/// Operator-level route on atom (x) Fock: the smallest singular point of the
/// atomic Feshbach map and Psi = Q(H - E, H0 - E) applied to its kernel.
pub fn operator_ground_state(a: &AtomSpec, cs: &CouplingSpec, grid: &ModeGrid, n_max: usize) -> Result<GroundState> {
    let ops = coupling_ops(a, cs, grid)?;
    let ground = atomic_ground(a, cs.theta, cs.alpha, RIESZ_NODES)?;
    let basis = FockBasis::new(grid, n_max);
    let h = assemble_from_ops(a, cs, &ops, &basis);
    let t = free_hamiltonian(a, cs, &ops, &basis);
    let e_at = ground.energy * ops.prefactor;
    let n = h.nrows();
    let id = CMat::identity(n, n);
    let chi = ChiOps::atomic(&ground.phi, &ground.phit, &basis.energies, &smooth_chi(1.0));
    let h0 = &h - &id * e_at;
    let t0 = &t - &id * e_at;
    let e0 = find_singular_z(&h0, &t0, &chi, c(0.0, 0.0), 1e-13)?;
    let shifted = &h0 - &id * e0;
    let res = feshbach_unchecked(&shifted, &(&t0 - &id * e0), &chi)?;
    let f_red = chi.range.adjoint() * &res.f * &chi.range;
    let (v, _) = linalg::null_vector(&f_red);
    let mut psi = res.q * (&chi.range * v);
    psi /= c(psi.norm(), 0.0);
    let e_hat = e_at + e0;
    let residual = eigen_residual(&h, e_hat, &psi)?;
    Ok(GroundState {
        energy: e_hat / ops.prefactor + ops.shift,
        e_hat,
        e0,
        psi,
        residual,
        iterations: 0,
        trace: RGTrace::default(),
        families: Vec::new(),
        oracle: None,
        pair: None,
        initial_ball: None,
    })
}

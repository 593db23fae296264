//! The renormalization map on kernel families: energy rescaling E_rho,
//! Feshbach reduction at scale rho and the dilation S_rho, iterated to the
//! ground state.

use crate::error::{Error, Result};
use crate::feshbach::{feshbach_unchecked, smooth_chi, ChiOps};
use crate::fock::{dilation, FockBasis, ModeGrid};
use crate::kernels::{decode_tuple, encode_tuple, kernel_operator, to_operator, Kernel, KernelSeq, ScalarFamily, ZFamily};
use crate::num::{c, CVec, Dual, RGrid, C64, ONE, ZERO};
use crate::wick::{neumann_wick, Interaction, NeumannSetup};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RGConfig {
    pub rho: f64,
    pub xi: f64,
    pub eps0: f64,
    pub l_max: usize,
    /// Largest M + N kept in the kernel sequences.
    pub m_max: usize,
    /// Largest number of simultaneous internal photons in the Neumann chain.
    pub cap: usize,
    pub tol_e: f64,
    pub max_iters: usize,
    pub min_iters: usize,
    pub z_nodes: usize,
    pub z_radius: f64,
    pub n_r: usize,
    /// Photon budget of the basis used for the initial pair check.
    pub pair_n_max: usize,
}

impl Default for RGConfig {
    fn default() -> Self {
        RGConfig {
            rho: 0.25,
            xi: 0.25,
            eps0: 0.25 / 8.0,
            l_max: 4,
            m_max: 2,
            cap: 2,
            tol_e: 1e-9,
            max_iters: 30,
            min_iters: 5,
            z_nodes: crate::kernels::zfamily::DEFAULT_NODES,
            z_radius: crate::kernels::zfamily::DEFAULT_RADIUS,
            n_r: 65,
            pair_n_max: 2,
        }
    }
}

impl RGConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, why: &str| Err(Error::Config(format!("rg.{f}: {why}")));
        if !(self.rho > 0.0 && self.rho <= 0.25) {
            return bad("rho", "must lie in (0, 1/4]");
        }
        if !(self.xi > 0.0 && self.xi <= 0.25) {
            return bad("xi", "must lie in (0, 1/4]");
        }
        if !(self.eps0 > 0.0 && self.eps0 <= self.rho / 8.0 + 1e-15) {
            return bad("eps0", "must lie in (0, rho/8]");
        }
        if self.l_max < 1 || self.l_max > 8 {
            return bad("l_max", "must lie in 1..=8");
        }
        if self.m_max < 1 || self.m_max > 4 {
            return bad("m_max", "must lie in 1..=4");
        }
        if self.cap < 1 {
            return bad("cap", "must be positive");
        }
        if !(self.tol_e > 0.0) {
            return bad("tol_e", "must be positive");
        }
        if self.max_iters == 0 || self.min_iters > self.max_iters {
            return bad("max_iters", "must be positive and at least min_iters");
        }
        if self.z_nodes < 8 || self.z_nodes % 2 != 0 {
            return bad("z_nodes", "must be even and at least 8");
        }
        if !(self.z_radius > 0.0 && self.z_radius < 0.5) {
            return bad("z_radius", "must lie in (0, 1/2)");
        }
        if self.n_r < 3 || (self.n_r - 1) % 4 != 0 {
            return bad("n_r", "n_r - 1 must be a positive multiple of 4");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallReport {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub inside: bool,
}

/// sup over the samples of ||d_r w00 - 1||, |w00(z, 0) + z| and ||w_{>=1}||_xi.
pub fn ball_membership(f: &ZFamily, d1: f64, d2: f64, d3: f64) -> BallReport {
    let nodes = std::iter::once(ZERO).chain(f.nodes());
    let mut delta1: f64 = 0.0;
    let mut delta2: f64 = 0.0;
    let mut delta3: f64 = 0.0;
    for (z, s) in nodes.zip(f.all_samples()) {
        match s.get(0, 0) {
            Some(k) => {
                for i in 0..k.grid.n {
                    delta1 = delta1.max((k.at(0, i).d - ONE).norm());
                }
                delta2 = delta2.max((k.at(0, 0).v + z).norm());
            }
            None => {
                delta1 = delta1.max(1.0);
                delta2 = delta2.max(z.norm());
            }
        }
        delta3 = delta3.max(s.interaction_norm());
    }
    let inside = delta1 <= d1 && delta2 <= d2 && delta3 <= d3;
    BallReport { delta1, delta2, delta3, inside }
}

/// E_rho(z) = -w00(z, 0) / rho as a sampled scalar family.
pub fn e_rho(f: &ZFamily, rho: f64) -> ScalarFamily {
    f.scalar(|w| w.get(0, 0).map_or(ZERO, |k| k.at(0, 0).v) * (-1.0 / rho))
}

/// The preimage z of u under E, |z| < 1/2, by Newton from the linearization.
pub fn invert_e_rho(e: &ScalarFamily, u: C64) -> Result<C64> {
    let a1 = e.deriv(ZERO);
    let z0 = if a1.norm() > 1e-12 { (u - e.center) / a1 } else { ZERO };
    let z0 = if z0.norm() < 0.9 * e.radius { z0 } else { z0 * (0.5 * e.radius / z0.norm()) };
    let z = e.solve(u, z0, 1e-13)?;
    if z.norm() >= 0.5 {
        return Err(Error::OutOfDomain(format!("preimage {z} of {u} outside D_1/2")));
    }
    Ok(z)
}

/// Index shift plus prefactors of S_rho applied to kernels already sampled at
/// rho r_i (values and r-derivatives in the unscaled variable).
fn pushforward(sampled: &KernelSeq, grid: &ModeGrid, rho: f64) -> KernelSeq {
    let nm = sampled.n_modes;
    let nr = sampled.grid.n;
    let mut out = KernelSeq::new(nm, &sampled.grid, sampled.xi, sampled.m_max);
    out.tail_bound = sampled.tail_bound;
    for k in sampled.entries.values() {
        let legs = k.m + k.n;
        let pv = rho.powi(legs as i32 - 1);
        let pd = rho.powi(legs as i32);
        let mut nk = Kernel::zeros(k.m, k.n, nm, &sampled.grid);
        for t in 0..nk.n_tuples() {
            let l = decode_tuple(t, nm, legs);
            let src: Option<Vec<usize>> = l.iter().map(|&m| grid.shift(m, 1)).collect();
            if let Some(src) = src {
                let s = encode_tuple(&src, nm);
                for i in 0..nr {
                    let d = k.at(s, i);
                    nk.set(t, i, Dual::new(d.v * pv, d.d * pd));
                }
            }
        }
        out.insert(nk);
    }
    out
}

/// w'_{m,n}(r; K) = rho^{m+n-1} w_{m,n}(rho r; rho K).
pub fn scale_kernels(w: &KernelSeq, grid: &ModeGrid, rho: f64) -> Result<KernelSeq> {
    if (rho - grid.rho).abs() > 1e-14 {
        return Err(Error::GridMismatch(format!("rho = {rho} but grid ratio is {}", grid.rho)));
    }
    let mut sampled = KernelSeq::new(w.n_modes, &w.grid, w.xi, w.m_max);
    sampled.tail_bound = w.tail_bound;
    for k in w.entries.values() {
        let mut s = Kernel::zeros(k.m, k.n, k.n_modes, &k.grid);
        for t in 0..k.n_tuples() {
            for i in 0..k.grid.n {
                s.set(t, i, k.eval(t, rho * k.grid.point(i)));
            }
        }
        sampled.insert(s);
    }
    Ok(pushforward(&sampled, grid, rho))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StepInfo {
    /// Preimages z' = E_rho^{-1}(u) of the output nodes (center first).
    pub preimages: Vec<(f64, f64)>,
    pub ratio: f64,
    pub tail: f64,
}

/// One renormalization step of a scalar family.
pub fn renormalize(f: &ZFamily, grid: &ModeGrid, cfg: &RGConfig) -> Result<(ZFamily, StepInfo)> {
    let rho = cfg.rho;
    if (rho - grid.rho).abs() > 1e-14 {
        return Err(Error::GridMismatch(format!("rho = {rho} but grid ratio is {}", grid.rho)));
    }
    let lim = rho / 8.0;
    let ball = ball_membership(f, lim, lim, lim);
    if !ball.inside {
        return Err(Error::BallViolation(format!(
            "input outside B(rho/8): delta = ({:.3e}, {:.3e}, {:.3e})",
            ball.delta1, ball.delta2, ball.delta3
        )));
    }
    let e = e_rho(f, rho);
    let chi = smooth_chi(rho);
    let nm = grid.n_modes();
    let rgrid = f.center.grid.clone();
    let r_out: Vec<f64> = rgrid.points().iter().map(|r| rho * r).collect();
    let out_modes: Vec<usize> = (0..nm).filter(|&m| grid.modes[m].shell >= 1).collect();
    let f_end = |x: f64| chi.chi_dual(x);
    let mut info = StepInfo::default();
    let mut step = |u: C64| -> Result<KernelSeq> {
        let zp = invert_e_rho(&e, u)?;
        info.preimages.push((zp.re, zp.im));
        let w = f.eval(zp);
        let w00 = w.require(0, 0)?.clone();
        let inter = Interaction::scalar(&w);
        let mid = |x: f64| {
            if x > 1.0 {
                return vec![Dual::ZERO];
            }
            let cb = chi.chibar_sq_dual(x);
            if cb.v == ZERO && cb.d == ZERO {
                return vec![Dual::ZERO];
            }
            vec![cb * w00.eval(0, x).recip()]
        };
        let setup = NeumannSetup {
            grid,
            w: &inter,
            f_end: &f_end,
            f_mid: &mid,
            start: vec![ONE],
            end: vec![ONE],
            r_out: r_out.clone(),
            out_modes: out_modes.clone(),
            m_out: cfg.m_max,
            l_max: cfg.l_max,
            cap: cfg.cap,
            xi: cfg.xi,
        };
        let out = neumann_wick(&setup)?;
        info.ratio = info.ratio.max(out.ratio);
        info.tail = info.tail.max(out.tail);
        let mut sampled = KernelSeq::new(nm, &rgrid, cfg.xi, cfg.m_max);
        for (key, mut k) in out.sum {
            if key == (0, 0) {
                for (i, &x) in r_out.iter().enumerate() {
                    let cur = k.at(0, i);
                    k.set(0, i, cur + w00.eval(0, x));
                }
            }
            sampled.insert(k);
        }
        // (0,0) errors are divided by rho, kernels with m + n > m_max legs
        // shrink by rho^{m_max}, the carried tail at least by rho
        sampled.tail_bound = out.series_tail / rho + rho.powi(cfg.m_max as i32) * out.high_legs + rho * w.tail_bound;
        let mut scaled = pushforward(&sampled, grid, rho);
        scaled.support_restrict(grid);
        Ok(scaled)
    };
    let center = step(ZERO)?;
    let samples = f.nodes().into_iter().map(&mut step).collect::<Result<Vec<_>>>()?;
    Ok((ZFamily { radius: f.radius, center, samples }, info))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RGTrace {
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
    pub delta3: Vec<f64>,
    /// Nested preimages z_n of 0 after n + 1 levels.
    pub z: Vec<(f64, f64)>,
    pub ratio: Vec<f64>,
}

impl RGTrace {
    fn push_ball(&mut self, b: &BallReport) {
        self.delta1.push(b.delta1);
        self.delta2.push(b.delta2);
        self.delta3.push(b.delta3);
    }
}

#[derive(Clone, Debug)]
pub struct RGRun {
    pub e0: C64,
    /// zeta_k: the spectral parameter at level k (zeta_0 = e0).
    pub levels: Vec<C64>,
    pub families: Vec<ZFamily>,
    pub trace: RGTrace,
    pub iterations: usize,
}

/// Iterates R_rho from f0 until the nested preimages of 0 settle.
pub fn iterate_to_ground(f0: &ZFamily, grid: &ModeGrid, cfg: &RGConfig) -> Result<RGRun> {
    iterate_from(vec![f0.clone()], grid, cfg)
}

/// Continues an iteration from already computed families f_0 .. f_k.
pub fn iterate_from(families: Vec<ZFamily>, grid: &ModeGrid, cfg: &RGConfig) -> Result<RGRun> {
    iterate_with(families, grid, cfg, &mut |_, _| Ok(()))
}

/// As `iterate_from`, calling `on_level(k, f_k)` once per visited level.
pub fn iterate_with(
    mut families: Vec<ZFamily>,
    grid: &ModeGrid,
    cfg: &RGConfig,
    on_level: &mut dyn FnMut(usize, &ZFamily) -> Result<()>,
) -> Result<RGRun> {
    cfg.validate()?;
    if families.is_empty() {
        return Err(Error::Config("no initial family".into()));
    }
    let mut trace = RGTrace::default();
    let mut es: Vec<ScalarFamily> = Vec::new();
    let mut prev: Option<C64> = None;
    let mut n = 0;
    loop {
        let f = &families[n];
        on_level(n, f)?;
        let lim = cfg.rho / 8.0;
        let ball = ball_membership(f, lim, lim, lim);
        trace.push_ball(&ball);
        if !ball.inside {
            return Err(Error::BallViolation(format!(
                "level {n}: delta = ({:.3e}, {:.3e}, {:.3e}), trace delta3 = {:?}",
                ball.delta1, ball.delta2, ball.delta3, trace.delta3
            )));
        }
        es.push(e_rho(f, cfg.rho));
        let mut levels = vec![ZERO; n + 2];
        for k in (0..=n).rev() {
            levels[k] = invert_e_rho(&es[k], levels[k + 1])?;
        }
        let z = levels[0];
        trace.z.push((z.re, z.im));
        let settled = prev.is_some_and(|p| (z - p).norm() < cfg.tol_e);
        // an interaction-free family is a fixed point already
        let free = ball.delta2 == 0.0 && ball.delta3 == 0.0;
        if free || (n >= cfg.min_iters && settled) {
            levels.pop();
            families.truncate(n + 1);
            return Ok(RGRun { e0: z, levels, families, trace, iterations: n });
        }
        if n + 1 >= cfg.max_iters {
            return Err(Error::MaxItersExceeded(n + 1));
        }
        prev = Some(z);
        if families.len() == n + 1 {
            let (next, info) = renormalize(&families[n], grid, cfg)?;
            trace.ratio.push(info.ratio);
            families.push(next);
        }
        n += 1;
    }
}

/// True iff delta2 and delta3 shrink by 0.55 per step (values below 1e-13
/// count as converged) and delta1_n <= eps0 (1 - 2^{-(n+1)}).
pub fn contraction_audit(trace: &RGTrace, eps0: f64) -> bool {
    let n = trace.delta1.len();
    if n < 3 {
        return false;
    }
    let floor = 1e-13;
    let halves = |v: &[f64]| v.windows(2).all(|w| w[1] <= floor || w[1] <= 0.55 * w[0]);
    let d1 = trace
        .delta1
        .iter()
        .enumerate()
        .all(|(k, &d)| d <= eps0 * (1.0 - 0.5f64.powi(k as i32 + 1)) + 1e-15);
    halves(&trace.delta2) && halves(&trace.delta3) && d1
}

/// The vector at level 0 telescoped from the vacuum at the deepest level:
/// psi_k = Q_chi(H_k, T_k) Gamma^dagger psi_{k+1} on the reduced basis.
pub fn reconstruct_vector(run: &RGRun, grid: &ModeGrid, basis: &FockBasis, rho: f64) -> Result<CVec> {
    let gam_dag = dilation(basis, grid, rho)?.mat.adjoint();
    let chi = ChiOps::of_field_energy(basis, &smooth_chi(rho));
    let depth = run.families.len();
    let mut psi = basis.vacuum();
    for k in (0..depth.saturating_sub(1)).rev() {
        let w = run.families[k].eval(run.levels[k]);
        let h = to_operator(&w, grid, basis)?.mat;
        let t = kernel_operator(w.require(0, 0)?, grid, basis)?;
        let q = feshbach_unchecked(&h, &t, &chi)?.q;
        psi = q * (&gam_dag * psi);
        let nrm = psi.norm();
        if !(nrm > 0.0) {
            return Err(Error::Linalg("vector reconstruction collapsed".into()));
        }
        psi /= c(nrm, 0.0);
    }
    Ok(psi)
}

/// Free family w00 = r - z (plus an optional constant shift).
pub fn free_family(n_modes: usize, rgrid: &RGrid, cfg: &RGConfig, shift: C64) -> ZFamily {
    ZFamily::from_fn(cfg.z_radius, cfg.z_nodes, |z| {
        Ok(KernelSeq::free(n_modes, rgrid, cfg.xi, cfg.m_max, z - shift))
    })
    .unwrap()
}

//! Acceptance harness: one line per criterion, nonzero exit if any fails.

use feshrg::analysis::{analyticity_residual, decay_profile, decay_series_consistent, oconnor_partial_sums, theta_constancy};
use feshrg::checks;
use feshrg::cli::commands::{cmd_run, load_checkpoints};
use feshrg::cli::config::RunConfig;
use feshrg::fock::{AngularMode, ModeGrid};
use feshrg::model::{normalize_gap, AtomSpec, CouplingSpec};
use feshrg::num::{c, RGrid, C64};
use feshrg::pipeline::{ground_state, operator_ground_state, GroundState};
use feshrg::rg::{contraction_audit, free_family, iterate_to_ground, RGConfig, RGTrace};
use std::time::Instant;

type Outcome = Result<(bool, String), String>;

fn report(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let (pass, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let secs = t.elapsed().as_secs_f64();
    println!("criterion {id} [{name}]: {} ({detail}; {secs:.1} s)", if pass { "PASS" } else { "FAIL" });
    pass
}

fn toy_run(j: usize, cs: &CouplingSpec, oracle: bool) -> Result<GroundState, String> {
    let cfg = RGConfig::default();
    let grid = ModeGrid::build(j, cfg.rho, 1.0, AngularMode::Radial).map_err(|e| e.to_string())?;
    ground_state(&AtomSpec::matrix_toy(), cs, &grid, &cfg, 3, oracle).map_err(|e| e.to_string())
}

fn real_coupling() -> CouplingSpec {
    CouplingSpec::new(c(0.05, 0.0), c(0.0, 0.0), c(0.0, 0.0))
}

fn complex_coupling() -> CouplingSpec {
    let g = c(0.03, 0.0) * c(0.0, std::f64::consts::FRAC_PI_4).exp();
    CouplingSpec::new(g, c(0.0, 0.05), c(0.02, 0.0))
}

fn crit1() -> Outcome {
    let s = checks::planted_feshbach(200, 1).map_err(|e| e.to_string())?;
    let pass = s.max_eigenvalue_error <= 1e-10 && s.max_residual <= 1e-8;
    Ok((pass, format!("{} pairs, eigenvalue error {:.2e} <= 1e-10, residual {:.2e} <= 1e-8", s.pairs, s.max_eigenvalue_error, s.max_residual)))
}

fn crit2() -> Outcome {
    let s = checks::wick_oracle(50, 2).map_err(|e| e.to_string())?;
    Ok((s.max_error <= 1e-10, format!("{} configs, max error {:.2e} <= 1e-10", s.configs, s.max_error)))
}

fn crit3() -> Outcome {
    let s = checks::norm_bound(100, 3).map_err(|e| e.to_string())?;
    let rel = (s.measure_value - s.measure_bound).abs() / s.measure_bound;
    let pass = s.max_ratio <= 1.05 && rel <= 0.02;
    Ok((
        pass,
        format!(
            "{} kernels, max norm ratio {:.4} <= 1.05, measure {:.5} vs 8pi {:.5} (rel {:.2e} <= 0.02)",
            s.kernels, s.max_ratio, s.measure_value, s.measure_bound, rel
        ),
    ))
}

fn crit4(real: &Result<GroundState, String>, cplx: &Result<GroundState, String>) -> Outcome {
    let r = real.as_ref().map_err(|e| format!("real run: {e}"))?;
    let z = cplx.as_ref().map_err(|e| format!("complex run: {e}"))?;
    let o = r.oracle.as_ref().ok_or("real run has no oracle")?;
    let diff = (r.energy - o.energy).norm();
    let pass = diff <= 1e-6 && r.residual <= 1e-6 && z.residual <= 1e-5;
    let zdiff = z.oracle.as_ref().map(|o| (z.energy - o.energy).norm()).unwrap_or(f64::NAN);
    Ok((
        pass,
        format!(
            "real: |E_RG - E_oracle| {diff:.2e} <= 1e-6, residual {:.2e} <= 1e-6; complex: residual {:.2e} <= 1e-5 (oracle diff {zdiff:.2e})",
            r.residual, z.residual
        ),
    ))
}

fn audit_line(t: &RGTrace, iters: usize, eps0: f64) -> (bool, String) {
    let ok = iters >= 5 && contraction_audit(t, eps0);
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    (ok, format!("{iters} iterations, delta2 {:.1e}, delta3 {:.1e}", last(&t.delta2), last(&t.delta3)))
}

fn crit5(real: &Result<GroundState, String>, cplx: &Result<GroundState, String>) -> Outcome {
    let eps0 = RGConfig::default().eps0;
    let r = real.as_ref().map_err(|e| format!("real run: {e}"))?;
    let z = cplx.as_ref().map_err(|e| format!("complex run: {e}"))?;
    let (ok_r, line_r) = audit_line(&r.trace, r.iterations, eps0);
    let (ok_z, line_z) = audit_line(&z.trace, z.iterations, eps0);
    let cfg = RGConfig::default();
    let grid = ModeGrid::build(3, cfg.rho, 1.0, AngularMode::Radial).map_err(|e| e.to_string())?;
    let rgrid = RGrid::new(cfg.n_r);
    let mut free_err: f64 = 0.0;
    for shift in [c(0.0, 0.0), c(0.01, -0.005)] {
        let f = free_family(grid.n_modes(), &rgrid, &cfg, shift);
        let run = iterate_to_ground(&f, &grid, &cfg).map_err(|e| e.to_string())?;
        free_err = free_err.max((run.e0 - shift).norm());
        // a constant shift grows by 1/rho per step; only the unshifted input is fixed
        if shift == c(0.0, 0.0) {
            for g in &run.families {
                free_err = free_err.max(g.center.max_diff(&f.center));
            }
        }
    }
    let pass = ok_r && ok_z && free_err <= 1e-12;
    Ok((pass, format!("real {line_r}; complex {line_z}; free input drift and shifted e0 error {free_err:.1e} <= 1e-12")))
}

fn crit6() -> Outcome {
    let s = checks::marginal_rotation_average(1, 0.05).map_err(|e| e.to_string())?;
    Ok((s.relative_average <= 1e-10, format!("relative averaged norm {:.2e} <= 1e-10 (kernel norm {:.2e})", s.relative_average, s.kernel_norm)))
}

/// Pipeline energies on an 8-node circle around `center` in one parameter.
fn circle(center: C64, radius: f64, set: impl Fn(C64) -> CouplingSpec) -> Result<(Vec<C64>, f64), String> {
    let mut es = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..8 {
        let p = center + C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / 8.0);
        let gs = toy_run(3, &set(p), false)?;
        worst = worst.max(gs.residual);
        es.push(gs.energy);
    }
    Ok((es, worst))
}

fn crit7() -> Outcome {
    let g0 = c(0.05, 0.0);
    let (eg, rg) = circle(g0, 0.02, |g| CouplingSpec::new(g, c(0.0, 0.0), c(0.0, 0.0)))?;
    let (et, rt) = circle(c(0.0, 0.0), 0.05, |t| CouplingSpec::new(g0, t, c(0.0, 0.0)))?;
    let (ea, ra) = circle(c(0.0, 0.0), 0.02, |a| CouplingSpec::new(g0, c(0.0, 0.0), a))?;
    let reference = toy_run(3, &real_coupling(), false)?.energy;
    let res = |e: &[C64]| analyticity_residual(e).map_err(|e| e.to_string());
    let (ng, nt, na) = (res(&eg)?, res(&et)?, res(&ea)?);
    let (ct, ca) = (theta_constancy(&et, reference), theta_constancy(&ea, reference));
    let worst = ng.max(nt).max(na);
    let pass = worst <= 1e-6 && ct <= 1e-8 && ca <= 1e-8;
    Ok((
        pass,
        format!(
            "negative-mode residual g {ng:.1e}, theta {nt:.1e}, alpha {na:.1e} <= 1e-6; theta constancy {ct:.1e}, alpha constancy {ca:.1e} <= 1e-8; max eigen-residual {:.1e}",
            rg.max(rt).max(ra)
        ),
    ))
}

fn crit8() -> Outcome {
    let atom = normalize_gap(&AtomSpec::hydrogen_radial(160, 20.0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let grid = ModeGrid::build(1, 0.25, 1.0, AngularMode::Radial).map_err(|e| e.to_string())?;
    let radii = atom.radial.as_ref().ok_or("hydrogen atom without radial data")?.radii.clone();
    let free = operator_ground_state(&atom, &CouplingSpec::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)), &grid, 2)
        .map_err(|e| e.to_string())?;
    let a0 = decay_profile(&free.psi, &radii, &[]).map_err(|e| e.to_string())?.a_fit;
    let cs = CouplingSpec::new(c(0.05, 0.0), c(0.05, 0.0), c(0.0, 0.0));
    let gs = operator_ground_state(&atom, &cs, &grid, 2).map_err(|e| e.to_string())?;
    let a1 = decay_profile(&gs.psi, &radii, &[]).map_err(|e| e.to_string())?.a_fit;
    let ladder: Vec<f64> = (1..=9).map(|k| a1 * k as f64 / 10.0).collect();
    let prof = decay_profile(&gs.psi, &radii, &ladder).map_err(|e| e.to_string())?;
    let finite = prof.ladder.iter().all(|p| p.finite && p.norm.is_finite());
    let oc = oconnor_partial_sums(&gs.psi, &radii, 0.5, 30).map_err(|e| e.to_string())?;
    let consistent = decay_series_consistent(&gs.psi, &radii, oc.t_star, 0.2).map_err(|e| e.to_string())?;
    let pass = (a0 - 1.0).abs() <= 0.05 && a1 > 0.0 && finite && consistent;
    Ok((
        pass,
        format!(
            "g=0: a_fit {a0:.4} (1 +- 5%); g=0.05: a_fit {a1:.4} > 0, weighted norm finite for a <= 0.9 a_fit: {finite}, t* {:.3}, consistency at 20%: {consistent}",
            oc.t_star
        ),
    ))
}

const DET_CONFIG: &str = r#"
seed = 7
[model]
mode = "matrix"
g = { re = 0.05 }
[grid]
J = 2
rho_grid = 0.25
[oracle]
n_max = 3
"#;

fn crit9() -> Outcome {
    let cs = real_coupling();
    let a = toy_run(2, &cs, false)?;
    let b = toy_run(2, &cs, false)?;
    let same_e = a.e0.re.to_bits() == b.e0.re.to_bits() && a.e0.im.to_bits() == b.e0.im.to_bits();
    let same_psi = a.psi.len() == b.psi.len()
        && a.psi.iter().zip(b.psi.iter()).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits());
    let p1 = checks::planted_feshbach(5, 9).map_err(|e| e.to_string())?;
    let p2 = checks::planted_feshbach(5, 9).map_err(|e| e.to_string())?;
    let same_checks = p1.max_eigenvalue_error.to_bits() == p2.max_eigenvalue_error.to_bits();

    let cfg = RunConfig::from_toml(DET_CONFIG).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let r1 = cmd_run(&cfg, &first, None).map_err(|e| e.to_string())?;
    let r2 = cmd_run(&cfg, &second, None).map_err(|e| e.to_string())?;
    let read = |p: std::path::PathBuf| std::fs::read(p).map_err(|e| e.to_string());
    let same_files = read(first.join("run.json"))? == read(second.join("run.json"))?
        && read(first.join("trace.csv"))? == read(second.join("trace.csv"))?;
    let ckpt = first.join("checkpoints");
    let n_modes = cfg.grid().map_err(|e| e.to_string())?.n_modes();
    let upto = 2.min(r1.ground.families.len() - 1);
    load_checkpoints(&ckpt, Some(upto), n_modes).map_err(|e| e.to_string())?;
    let resumed = cmd_run(&cfg, &dir.path().join("resumed"), Some((&ckpt, Some(upto)))).map_err(|e| e.to_string())?;
    let resume_diff = (resumed.ground.e0 - r1.ground.e0).norm();
    let pass = same_e && same_psi && same_checks && same_files && r1.ground.e0 == r2.ground.e0 && resume_diff <= 1e-12;
    Ok((
        pass,
        format!(
            "repeated runs bit-identical: e0 {same_e}, psi {same_psi}, checks {same_checks}, artifacts {same_files}; resume from level {upto}: |de0| {resume_diff:.1e} <= 1e-12"
        ),
    ))
}

fn main() {
    let mut ok = true;
    ok &= report(1, "Feshbach isospectrality", crit1);
    ok &= report(2, "Wick operator oracle", crit2);
    ok &= report(3, "kernel norm bound", crit3);
    let t = Instant::now();
    let real = toy_run(6, &real_coupling(), true);
    let cplx = toy_run(6, &complex_coupling(), true);
    println!("(criterion 4 and 5 runs: {:.1} s)", t.elapsed().as_secs_f64());
    ok &= report(4, "RG vs exact diagonalization", || crit4(&real, &cplx));
    ok &= report(5, "contraction audit", || crit5(&real, &cplx));
    ok &= report(6, "marginal-term vanishing", crit6);
    ok &= report(7, "analyticity certificates", crit7);
    ok &= report(8, "exponential decay", crit8);
    ok &= report(9, "determinism and persistence", crit9);
    if !ok {
        std::process::exit(1);
    }
}

//! The four subcommands. Each returns a report that is also written to the
//! output directory.

use super::config::{Format, ModelMode, RunConfig, ScanParam};
use crate::analysis::{analyticity_residual, decay_profile, decay_series_consistent, oconnor_partial_sums, theta_constancy};
use crate::checks::{self, Check};
use crate::error::{Error, Result};
use crate::fock::{annihilation, block, creation, dilation, field_energy, pull_through_residual, AngularMode, FockBasis, ModeGrid};
use crate::kernels::checkpoint::Checkpoint;
use crate::kernels::ZFamily;
use crate::linalg::{self, op_norm};
use crate::model::exact_ground;
use crate::num::{c, fmt_g17, RGrid, C64};
use crate::pipeline::{ground_state_with, operator_ground_state, GroundState};
use crate::rg::{contraction_audit, free_family, invert_e_rho, iterate_to_ground, e_rho, RGConfig};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub const INJECT_ENV: &str = "FESHRG_INJECT_FAILURE";
pub const JOBS_ENV: &str = "FESHRG_JOBS";

fn cjson(z: C64) -> serde_json::Value {
    json!({ "re": z.re, "im": z.im })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::fs::write(path, text)?)
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    write_text(path, &s)
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn checkpoint_path(dir: &Path, level: usize) -> PathBuf {
    dir.join(format!("level_{level:03}.ckpt"))
}

/// Families level_000 .. level_k from a checkpoint directory (all present
/// levels when `upto` is None).
pub fn load_checkpoints(dir: &Path, upto: Option<usize>, n_modes: usize) -> Result<Vec<ZFamily>> {
    let mut out = Vec::new();
    loop {
        let k = out.len();
        if upto.is_some_and(|u| k > u) {
            break;
        }
        let p = checkpoint_path(dir, k);
        if !p.exists() {
            break;
        }
        let ck = Checkpoint::read(&p)?;
        let fam = ck.family.ok_or_else(|| Error::Checkpoint(format!("{} holds no family", p.display())))?;
        if fam.center.n_modes != n_modes {
            return Err(Error::GridMismatch(format!("{} has {} modes, grid {}", p.display(), fam.center.n_modes, n_modes)));
        }
        out.push(fam);
    }
    if out.is_empty() {
        return Err(Error::Checkpoint(format!("no checkpoints in {}", dir.display())));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub ground: GroundState,
    pub json: serde_json::Value,
}

fn solve(cfg: &RunConfig, ckpt_dir: Option<&Path>, resume: Option<Vec<ZFamily>>) -> Result<GroundState> {
    let atom = cfg.atom()?;
    let grid = cfg.grid()?;
    let cs = cfg.coupling();
    let rg = cfg.rg_config();
    match cfg.model.mode {
        ModelMode::Hydrogen => {
            let mut gs = operator_ground_state(&atom, &cs, &grid, cfg.oracle.n_max)?;
            if cfg.oracle.enabled {
                gs.oracle = Some(exact_ground(&atom, &cs, &grid, &FockBasis::new(&grid, cfg.oracle.n_max))?);
            }
            Ok(gs)
        }
        _ => {
            let seed = cfg.seed;
            let mut on_level = |k: usize, f: &ZFamily| -> Result<()> {
                if let Some(dir) = ckpt_dir {
                    std::fs::create_dir_all(dir)?;
                    let ck = Checkpoint {
                        meta: json!({ "level": k, "seed": seed }),
                        family: Some(f.clone()),
                        arrays: Default::default(),
                    };
                    ck.write(&checkpoint_path(dir, k))?;
                }
                Ok(())
            };
            ground_state_with(&atom, &cs, &grid, &rg, cfg.oracle.n_max, cfg.oracle.enabled, resume, &mut on_level)
        }
    }
}

/// Tolerance on |E_RG - E_oracle| reported by `run`.
pub const ORACLE_TOL: f64 = 1e-6;
/// Tolerance on the eigen-residual reported by `run`.
pub const RESIDUAL_TOL: f64 = 1e-5;

pub fn run_json(cfg: &RunConfig, gs: &GroundState) -> serde_json::Value {
    let rg = cfg.rg_config();
    let mut checks = vec![Check::at_most("eigen_residual", gs.residual, RESIDUAL_TOL)];
    let mut oracle = serde_json::Value::Null;
    if let Some(o) = &gs.oracle {
        let diff = (gs.energy - o.energy).norm();
        checks.push(Check::at_most("oracle_energy_difference", diff, ORACLE_TOL));
        oracle = json!({ "E": cjson(o.energy), "abs_diff": diff, "min_overlap": o.min_overlap });
    }
    let audit = if gs.trace.delta1.len() >= 3 { Some(contraction_audit(&gs.trace, rg.eps0)) } else { None };
    json!({
        "mode": cfg.model.mode,
        "seed": cfg.seed,
        "E_g": cjson(gs.energy),
        "e0": cjson(gs.e0),
        "e_hat": cjson(gs.e_hat),
        "residual": gs.residual,
        "iterations": gs.iterations,
        "ball_trace": gs.trace,
        "contraction_audit": audit,
        "pair": gs.pair,
        "initial_ball": gs.initial_ball,
        "oracle": oracle,
        "checks": checks,
    })
}

fn trace_rows(gs: &GroundState) -> Vec<Vec<String>> {
    let t = &gs.trace;
    (0..t.delta1.len())
        .map(|k| {
            let (zr, zi) = t.z.get(k).copied().unwrap_or((f64::NAN, f64::NAN));
            vec![
                k.to_string(),
                fmt_g17(t.delta1[k]),
                fmt_g17(t.delta2[k]),
                fmt_g17(t.delta3[k]),
                fmt_g17(zr),
                fmt_g17(zi),
                t.ratio.get(k).map(|&r| fmt_g17(r)).unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn cmd_run(cfg: &RunConfig, out: &Path, resume: Option<(&Path, Option<usize>)>) -> Result<RunReport> {
    let ckpt = out.join("checkpoints");
    let families = match resume {
        Some((dir, upto)) => Some(load_checkpoints(dir, upto, cfg.grid()?.n_modes())?),
        None => None,
    };
    let gs = solve(cfg, Some(&ckpt), families)?;
    let j = run_json(cfg, &gs);
    if cfg.output.formats.contains(&Format::Json) {
        write_json(&out.join("run.json"), &j)?;
    }
    if cfg.output.formats.contains(&Format::Csv) {
        let header = ["level", "delta1", "delta2", "delta3", "z_re", "z_im", "ratio"];
        write_text(&out.join("trace.csv"), &csv_string(&header, &trace_rows(&gs))?)?;
    }
    Ok(RunReport { ground: gs, json: j })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub node: usize,
    pub param: (f64, f64),
    pub energy: (f64, f64),
    pub e0: (f64, f64),
    pub residual: f64,
    pub iterations: usize,
    pub delta3_final: f64,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub param: ScanParam,
    pub center: (f64, f64),
    pub radius: f64,
    pub rows: Vec<ScanRow>,
    /// Negative-frequency fraction of E over the circle (all nodes ok).
    pub analyticity_residual: Option<f64>,
    /// max_k |E_k - E_0|.
    pub constancy: Option<f64>,
}

pub fn resolve_jobs(jobs: Option<usize>) -> usize {
    jobs.or_else(|| std::env::var(JOBS_ENV).ok().and_then(|s| s.parse().ok())).unwrap_or(1).max(1)
}

pub fn cmd_scan(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<ScanReport> {
    let sc = cfg.scan.clone().ok_or_else(|| Error::Config("scan: the config has no [scan] section".into()))?;
    let center = match sc.param {
        ScanParam::G => cfg.model.g,
        ScanParam::Theta => cfg.model.theta,
        ScanParam::Alpha => cfg.model.alpha,
    }
    .value();
    let n = sc.nodes;
    let nodes: Vec<C64> = (0..n)
        .map(|k| center + C64::from_polar(sc.radius, 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ScanRow>>> = Mutex::new(vec![None; n]);
    let work = || loop {
        let k = next.fetch_add(1, Ordering::SeqCst);
        if k >= n {
            break;
        }
        let p = nodes[k];
        let mut node_cfg = cfg.clone();
        let slot = match sc.param {
            ScanParam::G => &mut node_cfg.model.g,
            ScanParam::Theta => &mut node_cfg.model.theta,
            ScanParam::Alpha => &mut node_cfg.model.alpha,
        };
        slot.re = p.re;
        slot.im = p.im;
        node_cfg.oracle.enabled = false;
        let row = match solve(&node_cfg, None, None) {
            Ok(gs) => ScanRow {
                node: k,
                param: (p.re, p.im),
                energy: (gs.energy.re, gs.energy.im),
                e0: (gs.e0.re, gs.e0.im),
                residual: gs.residual,
                iterations: gs.iterations,
                delta3_final: gs.trace.delta3.last().copied().unwrap_or(0.0),
                status: "ok".into(),
            },
            Err(e) => ScanRow {
                node: k,
                param: (p.re, p.im),
                energy: (f64::NAN, f64::NAN),
                e0: (f64::NAN, f64::NAN),
                residual: f64::NAN,
                iterations: 0,
                delta3_final: f64::NAN,
                status: super::error_name(&e).into(),
            },
        };
        slots.lock().unwrap()[k] = Some(row);
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.min(n) {
            s.spawn(work);
        }
    });
    let rows: Vec<ScanRow> = slots.into_inner().unwrap().into_iter().map(|r| r.expect("every node ran")).collect();
    let all_ok = rows.iter().all(|r| r.status == "ok");
    let es: Vec<C64> = rows.iter().map(|r| c(r.energy.0, r.energy.1)).collect();
    let analyticity = if all_ok && n >= 8 { Some(analyticity_residual(&es)?) } else { None };
    let constancy = if all_ok { Some(theta_constancy(&es, es[0])) } else { None };
    let report = ScanReport {
        param: sc.param,
        center: (center.re, center.im),
        radius: sc.radius,
        rows,
        analyticity_residual: analyticity,
        constancy,
    };
    if cfg.output.formats.contains(&Format::Csv) {
        let header = [
            "node", "param_re", "param_im", "E_re", "E_im", "e0_re", "e0_im", "residual", "iters", "delta3_final", "status",
        ];
        let body: Vec<Vec<String>> = report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.node.to_string(),
                    fmt_g17(r.param.0),
                    fmt_g17(r.param.1),
                    fmt_g17(r.energy.0),
                    fmt_g17(r.energy.1),
                    fmt_g17(r.e0.0),
                    fmt_g17(r.e0.1),
                    fmt_g17(r.residual),
                    r.iterations.to_string(),
                    fmt_g17(r.delta3_final),
                    r.status.clone(),
                ]
            })
            .collect();
        write_text(&out.join("scan.csv"), &csv_string(&header, &body)?)?;
    }
    if cfg.output.formats.contains(&Format::Json) {
        write_json(&out.join("scan.json"), &serde_json::to_value(&report).map_err(|e| Error::Config(e.to_string()))?)?;
    }
    Ok(report)
}

pub fn cmd_decay(cfg: &RunConfig, out: &Path) -> Result<serde_json::Value> {
    if cfg.model.mode != ModelMode::Hydrogen {
        return Err(Error::Config("decay: model.mode must be \"hydrogen\" (matrix atoms have no position variable)".into()));
    }
    let dc = cfg.decay.clone().unwrap_or_default();
    let atom = cfg.atom()?;
    let grid = cfg.grid()?;
    let gs = operator_ground_state(&atom, &cfg.coupling(), &grid, cfg.oracle.n_max)?;
    let radii = &atom.radial.as_ref().expect("hydrogen atom has radial data").radii;
    let a_fit = decay_profile(&gs.psi, radii, &[])?.a_fit;
    let ladder: Vec<f64> = (1..=12).map(|k| a_fit * k as f64 / 10.0).collect();
    let prof = decay_profile(&gs.psi, radii, &ladder)?;
    let oc = oconnor_partial_sums(&gs.psi, radii, dc.t, dc.n_terms)?;
    let consistent = decay_series_consistent(&gs.psi, radii, oc.t_star, 0.2)?;
    let at_09 = decay_profile(&gs.psi, radii, &[0.9 * a_fit])?.ladder[0].finite;
    let checks = vec![
        Check { name: "a_fit_positive".into(), value: a_fit, bound: 0.0, margin: a_fit, pass: a_fit > 0.0 },
        Check { name: "finite_at_0.9_a_fit".into(), value: 0.9 * a_fit, bound: a_fit, margin: 0.1 * a_fit, pass: at_09 },
        Check {
            name: "oconnor_consistency".into(),
            value: 0.8 * oc.t_star / 2.0,
            bound: a_fit,
            margin: a_fit - 0.4 * oc.t_star,
            pass: consistent,
        },
    ];
    let j = json!({
        "E_g": cjson(gs.energy),
        "residual": gs.residual,
        "a_fit": a_fit,
        "window": prof.window,
        "ladder": prof.ladder,
        "oconnor": oc,
        "checks": checks,
    });
    if cfg.output.formats.contains(&Format::Json) {
        write_json(&out.join("decay.json"), &j)?;
    }
    if cfg.output.formats.contains(&Format::Csv) {
        let rows: Vec<Vec<String>> = prof
            .ladder
            .iter()
            .map(|p| vec![fmt_g17(p.a), fmt_g17(p.norm), fmt_g17(p.outer_slope), p.finite.to_string()])
            .collect();
        write_text(&out.join("ladder.csv"), &csv_string(&["a", "weighted_norm", "outer_slope", "finite"], &rows)?)?;
    }
    Ok(j)
}

pub const SUITES: [&str; 5] = ["fock", "kernels", "wick", "feshbach", "rg"];

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn fock_checks() -> Result<Vec<Check>> {
    let grid = ModeGrid::build(2, 0.5, 1.0, AngularMode::Radial)?;
    let basis = FockBasis::new(&grid, 3);
    let interior = basis.interior();
    let rows: Vec<usize> = (0..basis.dim()).collect();
    let mut ccr: f64 = 0.0;
    let nm = grid.n_modes();
    for i in 0..nm {
        for j in 0..nm {
            let a = annihilation(&basis, i).mat;
            let ad = creation(&basis, j).mat;
            let mut comm = &a * &ad - &ad * &a;
            if i == j {
                comm -= linalg::identity(basis.dim());
            }
            ccr = ccr.max(op_norm(&block(&comm, &rows, &interior)));
        }
    }
    let pull = (0..nm).map(|m| pull_through_residual(&basis, &grid, &|e| (-e).exp(), m)).fold(0.0, f64::max);
    let gam = dilation(&basis, &grid, grid.rho)?.mat;
    let hf = field_energy(&basis).mat;
    let scaled = &gam * &hf * gam.adjoint() - &gam * gam.adjoint() * &hf * c(grid.rho, 0.0);
    Ok(vec![
        Check::at_most("fock.ccr_interior", ccr, 1e-13),
        Check::at_most("fock.pull_through", pull, 1e-13),
        Check::at_most("fock.dilation_scaling", linalg::max_abs(&scaled), 1e-13),
    ])
}

fn rg_checks() -> Result<Vec<Check>> {
    let grid = ModeGrid::build(2, 0.25, 1.0, AngularMode::Radial)?;
    let cfg = RGConfig::default();
    let rgrid = RGrid::new(cfg.n_r);
    let f = free_family(grid.n_modes(), &rgrid, &cfg, c(0.0, 0.0));
    let run = iterate_to_ground(&f, &grid, &cfg)?;
    let drift = run.families.last().map(|g| g.center.max_diff(&f.center)).unwrap_or(0.0);
    let e = e_rho(&f, cfg.rho);
    let u = c(0.01, -0.02);
    let z = invert_e_rho(&e, u)?;
    Ok(vec![
        Check::at_most("rg.free_fixed_point_e0", run.e0.norm(), 1e-12),
        Check::at_most("rg.free_fixed_point_drift", drift, 1e-12),
        Check::at_most("rg.e_rho_inverse", (e.eval(z) - u).norm(), 1e-12),
    ])
}

fn suite_checks(suite: &str, seed: u64) -> Result<Vec<Check>> {
    Ok(match suite {
        "fock" => fock_checks()?,
        "kernels" => {
            let s = checks::norm_bound(18, seed)?;
            let rel = (s.measure_value - s.measure_bound).abs() / s.measure_bound;
            vec![
                Check::at_most("kernels.operator_norm_ratio", s.max_ratio, 1.05),
                Check::at_most("kernels.measure_bound_relative", rel, 0.02),
            ]
        }
        "wick" => {
            let s = checks::wick_oracle(6, seed)?;
            vec![Check::at_most("wick.operator_oracle", s.max_error, 1e-10)]
        }
        "feshbach" => {
            let s = checks::planted_feshbach(20, seed)?;
            vec![
                Check::at_most("feshbach.isospectrality", s.max_eigenvalue_error, 1e-10),
                Check::at_most("feshbach.reconstruction", s.max_residual, 1e-8),
            ]
        }
        "rg" => rg_checks()?,
        other => return Err(Error::Config(format!("suite: unknown suite {other:?}"))),
    })
}

pub fn cmd_verify(suite: &str, seed: u64) -> Result<VerifyReport> {
    if suite.is_empty() {
        return Err(Error::Config("suite: empty suite name".into()));
    }
    let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite] };
    let inject = std::env::var(INJECT_ENV).ok();
    let mut all = Vec::new();
    for name in names {
        for mut ch in suite_checks(name, seed)? {
            if inject.as_deref() == Some(ch.name.as_str()) {
                ch.pass = false;
            }
            all.push(ch);
        }
    }
    let pass = all.iter().all(|c| c.pass);
    Ok(VerifyReport { suite: suite.into(), seed, checks: all, pass })
}

pub fn write_verify(report: &VerifyReport, out: &Path) -> Result<()> {
    write_json(&out.join("verify.json"), &serde_json::to_value(report).map_err(|e| Error::Config(e.to_string()))?)
}

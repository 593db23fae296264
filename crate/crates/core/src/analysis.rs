//! Diagnostics on pipeline output: circle-DFT analyticity residuals,
//! parameter constancy, spatial decay and the O'Connor moment series.

use crate::error::{Error, Result};
use crate::kernels::zfamily::negative_frequency_fraction;
use crate::num::{CMat, CVec, C64};
use serde::Serialize;

/// Negative-frequency DFT mass over total mass of equispaced circle samples.
pub fn analyticity_residual(samples: &[C64]) -> Result<f64> {
    if samples.len() < 8 {
        return Err(Error::Config(format!("{} circle nodes, need at least 8", samples.len())));
    }
    Ok(negative_frequency_fraction(samples))
}

/// max |E_i - E_ref|.
pub fn theta_constancy(values: &[C64], reference: C64) -> f64 {
    values.iter().map(|e| (e - reference).norm()).fold(0.0, f64::max)
}

/// ||(H - E) psi|| / ||psi||.
pub fn eigen_residual(h: &CMat, e: C64, psi: &CVec) -> Result<f64> {
    if h.ncols() != psi.len() || h.nrows() != psi.len() {
        return Err(Error::GridMismatch(format!("operator {}x{} and vector {}", h.nrows(), h.ncols(), psi.len())));
    }
    let hp = h * psi - psi * e;
    Ok(hp.norm() / psi.norm())
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderPoint {
    pub a: f64,
    pub norm: f64,
    /// Log-slope of the weighted density across the outer quarter.
    pub outer_slope: f64,
    pub finite: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub a_fit: f64,
    pub window: (f64, f64),
    pub ladder: Vec<LadderPoint>,
}

/// Radial density |psi(r)|^2 = sum_Fock |u(r)|^2 / r^2 of an atom (x) Fock
/// vector (atom index major) on the radial grid.
pub fn radial_density(psi: &CVec, radii: &[f64]) -> Result<Vec<f64>> {
    let n = radii.len();
    if n == 0 || psi.len() % n != 0 {
        return Err(Error::GridMismatch(format!("vector of length {} on {} radial points", psi.len(), n)));
    }
    let nf = psi.len() / n;
    Ok((0..n)
        .map(|i| (0..nf).map(|s| psi[i * nf + s].norm_sqr()).sum::<f64>() / (radii[i] * radii[i]))
        .collect())
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn window(radii: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    let edge = radii.last().copied().unwrap_or(0.0) + radii.first().copied().unwrap_or(0.0);
    (0..radii.len()).filter(|&i| radii[i] >= lo * edge && radii[i] <= hi * edge).collect()
}

/// Decay rate a_fit = -slope of (1/2) log density over 50-90% of the box and
/// the weighted norms ||e^{a <x>} psi|| on the ladder `a_values`.
pub fn decay_profile(psi: &CVec, radii: &[f64], a_values: &[f64]) -> Result<DecayReport> {
    let rho = radial_density(psi, radii)?;
    let idx = window(radii, 0.5, 0.9);
    if idx.len() < 5 || idx.iter().any(|&i| !(rho[i] > 0.0)) {
        return Err(Error::WindowTooSmall(format!("{} usable points in the fit window", idx.len())));
    }
    let xs: Vec<f64> = idx.iter().map(|&i| radii[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| 0.5 * rho[i].ln()).collect();
    let a_fit = -slope(&xs, &ys);
    let outer = window(radii, 0.75, 0.9);
    if outer.len() < 3 {
        return Err(Error::WindowTooSmall("outer quarter has fewer than 3 points".into()));
    }
    let n = radii.len();
    let nf = psi.len() / n;
    let h = radii[0];
    let mut ladder = Vec::new();
    for &a in a_values {
        let bracket = |r: f64| (1.0 + r * r).sqrt();
        let mut norm2 = 0.0;
        for i in 0..n {
            let u2: f64 = (0..nf).map(|s| psi[i * nf + s].norm_sqr()).sum();
            norm2 += (2.0 * a * bracket(radii[i])).exp() * u2 * h;
        }
        let ox: Vec<f64> = outer.iter().map(|&i| radii[i]).collect();
        let oy: Vec<f64> = outer.iter().map(|&i| 2.0 * a * bracket(radii[i]) + rho[i].max(1e-300).ln()).collect();
        let outer_slope = slope(&ox, &oy);
        ladder.push(LadderPoint { a, norm: norm2.sqrt(), outer_slope, finite: outer_slope < 0.0 });
    }
    let lo = xs[0];
    let hi = *xs.last().unwrap();
    Ok(DecayReport { a_fit, window: (lo, hi), ladder })
}

#[derive(Clone, Debug, Serialize)]
pub struct OConnorReport {
    pub t: f64,
    pub partial_sums: Vec<f64>,
    /// term_{n+1} / term_n.
    pub ratios: Vec<f64>,
    pub converging: bool,
    /// Ratio-test estimate of the convergence radius from the moments.
    pub t_star: f64,
}

/// Partial sums of sum_n ||<x>^n psi|| t^n / n! and the ratio diagnostics.
pub fn oconnor_partial_sums(psi: &CVec, radii: &[f64], t: f64, n_terms: usize) -> Result<OConnorReport> {
    let n = radii.len();
    if n == 0 || psi.len() % n != 0 || n_terms < 4 {
        return Err(Error::GridMismatch("O'Connor series needs a radial vector and at least 4 terms".into()));
    }
    let nf = psi.len() / n;
    let u2: Vec<f64> = (0..n).map(|i| (0..nf).map(|s| psi[i * nf + s].norm_sqr()).sum()).collect();
    let br: Vec<f64> = radii.iter().map(|r| (1.0 + r * r).sqrt()).collect();
    let moment = |k: usize| -> f64 { u2.iter().zip(&br).map(|(u, b)| u * b.powi(2 * k as i32)).sum::<f64>().sqrt() };
    let moments: Vec<f64> = (0..=n_terms).map(moment).collect();
    let mut terms = Vec::with_capacity(n_terms);
    let mut fact = 1.0;
    for k in 0..n_terms {
        if k > 0 {
            fact *= k as f64;
        }
        terms.push(moments[k] * t.powi(k as i32) / fact);
    }
    let mut partial_sums = Vec::with_capacity(n_terms);
    let mut acc = 0.0;
    for x in &terms {
        acc += x;
        partial_sums.push(acc);
    }
    let ratios: Vec<f64> = terms.windows(2).map(|w| w[1] / w[0]).collect();
    let tail = &ratios[ratios.len() * 2 / 3..];
    let converging = tail.iter().all(|&r| r < 1.0);
    // (k + 1) ||A^k psi|| / ||A^{k+1} psi|| over the moderate orders
    let lo = 4.min(n_terms - 1);
    let hi = 12.min(n_terms - 1);
    let t_star = (lo..hi)
        .map(|k| (k as f64 + 1.0) * moments[k] / moments[k + 1])
        .fold(f64::INFINITY, f64::min);
    Ok(OConnorReport { t, partial_sums, ratios, converging, t_star })
}

/// The one-sided implication: convergence up to t* must come with a finite
/// weighted norm at a = (1 - margin) t*/2.
pub fn decay_series_consistent(psi: &CVec, radii: &[f64], t_star: f64, margin: f64) -> Result<bool> {
    let a = (1.0 - margin) * t_star / 2.0;
    let rep = decay_profile(psi, radii, &[a])?;
    Ok(rep.ladder[0].finite)
}

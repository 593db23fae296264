//! Analytic families in the spectral parameter z, stored as samples on a
//! circle |z| = r_z plus the center z = 0.

use super::KernelSeq;
use crate::error::{Error, Result};
use crate::num::{C64, ZERO};
use rustfft::FftPlanner;
use std::f64::consts::PI;

pub const DEFAULT_NODES: usize = 16;
pub const DEFAULT_RADIUS: f64 = 0.4;

pub fn circle_nodes(radius: f64, q: usize) -> Vec<C64> {
    (0..q).map(|k| C64::from_polar(radius, 2.0 * PI * k as f64 / q as f64)).collect()
}

/// Weights of the degree-(Q-1) interpolant through the circle samples:
/// f(z) ~ sum_q lam_q f(z_q), lam_q = (1/Q) z_q/(z_q - z) (1 - (z/r)^Q).
/// This is the trapezoid Cauchy formula with its aliasing term removed, so
/// polynomials of degree < Q are reproduced exactly.
pub fn cauchy_weights(nodes: &[C64], z: C64) -> Vec<C64> {
    let q = nodes.len() as f64;
    let r = nodes[0].norm();
    let u = 1.0 - (z / r).powi(nodes.len() as i32);
    nodes.iter().map(|&zq| zq / (zq - z) / q * u).collect()
}

/// Weights for f'(z) of the same interpolant.
pub fn cauchy_deriv_weights(nodes: &[C64], z: C64) -> Vec<C64> {
    let qn = nodes.len();
    let q = qn as f64;
    let r = nodes[0].norm();
    let u = 1.0 - (z / r).powi(qn as i32);
    let du = -(z / r).powi(qn as i32 - 1) * (q / r);
    nodes
        .iter()
        .map(|&zq| (zq / ((zq - z) * (zq - z)) * u + zq / (zq - z) * du) / q)
        .collect()
}

/// Normalized DFT c_k = (1/Q) sum_q f_q e^{-2 pi i k q / Q}.
pub fn dft(samples: &[C64]) -> Vec<C64> {
    let mut buf = samples.to_vec();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    let q = samples.len() as f64;
    buf.iter().map(|z| z / q).collect()
}

/// Fraction of DFT mass in the negative frequencies -1 .. -(Q/2 - 1).
pub fn negative_frequency_fraction(samples: &[C64]) -> f64 {
    let cs = dft(samples);
    let q = cs.len();
    let total: f64 = cs.iter().map(|z| z.norm()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let neg: f64 = ((q / 2 + 1)..q).map(|k| cs[k].norm()).sum();
    neg / total
}

/// Scalar analytic family on the disc, sampled like a ZFamily.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarFamily {
    pub radius: f64,
    pub center: C64,
    pub samples: Vec<C64>,
}

impl ScalarFamily {
    pub fn from_fn(radius: f64, q: usize, f: impl Fn(C64) -> C64) -> Self {
        let nodes = circle_nodes(radius, q);
        ScalarFamily { radius, center: f(ZERO), samples: nodes.iter().map(|&z| f(z)).collect() }
    }

    pub fn nodes(&self) -> Vec<C64> {
        circle_nodes(self.radius, self.samples.len())
    }

    pub fn eval(&self, z: C64) -> C64 {
        cauchy_weights(&self.nodes(), z).iter().zip(&self.samples).map(|(w, f)| w * f).sum()
    }

    pub fn deriv(&self, z: C64) -> C64 {
        cauchy_deriv_weights(&self.nodes(), z).iter().zip(&self.samples).map(|(w, f)| w * f).sum()
    }

    /// Taylor coefficients a_k, k = 0..Q-1 (aliased beyond Q/2).
    pub fn taylor(&self) -> Vec<C64> {
        let cs = dft(&self.samples);
        cs.iter().enumerate().map(|(k, z)| z / self.radius.powi(k as i32)).collect()
    }

    pub fn analyticity_residual(&self) -> f64 {
        negative_frequency_fraction(&self.samples)
    }

    /// Solve f(z) = u by Newton from z0; |z| must stay inside 0.95 r_z.
    pub fn solve(&self, u: C64, z0: C64, tol: f64) -> Result<C64> {
        let mut z = z0;
        for _ in 0..100 {
            let fz = self.eval(z) - u;
            let dz = fz / self.deriv(z);
            if !dz.is_finite() {
                return Err(Error::NewtonDiverged(format!("non-finite step at z = {z}")));
            }
            z -= dz;
            if z.norm() > 0.95 * self.radius {
                return Err(Error::OutOfDomain(format!("preimage of {u} left the disc: |z| = {:.3}", z.norm())));
            }
            if dz.norm() <= tol * (1.0 + z.norm()) {
                let res = (self.eval(z) - u).norm();
                if res > 1e3 * tol * (1.0 + u.norm()) {
                    return Err(Error::NewtonDiverged(format!("residual {res:.3e} at z = {z}")));
                }
                return Ok(z);
            }
        }
        Err(Error::NewtonDiverged(format!("no convergence for u = {u}")))
    }
}

/// KernelSeq-valued family: center sample and Q circle samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ZFamily {
    pub radius: f64,
    pub center: KernelSeq,
    pub samples: Vec<KernelSeq>,
}

impl ZFamily {
    pub fn nodes(&self) -> Vec<C64> {
        circle_nodes(self.radius, self.samples.len())
    }

    pub fn from_fn(radius: f64, q: usize, f: impl Fn(C64) -> Result<KernelSeq>) -> Result<Self> {
        let center = f(ZERO)?;
        let samples = circle_nodes(radius, q).into_iter().map(&f).collect::<Result<Vec<_>>>()?;
        Ok(ZFamily { radius, center, samples })
    }

    /// Family member at z by the Cauchy formula.
    pub fn eval(&self, z: C64) -> KernelSeq {
        if z == ZERO {
            return self.center.clone();
        }
        let w = cauchy_weights(&self.nodes(), z);
        let refs: Vec<&KernelSeq> = self.samples.iter().collect();
        let mut out = KernelSeq::combine(&refs, &w);
        out.tail_bound = self.samples.iter().map(|s| s.tail_bound).fold(self.center.tail_bound, f64::max);
        out
    }

    pub fn all_samples(&self) -> impl Iterator<Item = &KernelSeq> {
        std::iter::once(&self.center).chain(self.samples.iter())
    }

    /// Scalar family z -> probe(w(z)).
    pub fn scalar(&self, probe: impl Fn(&KernelSeq) -> C64) -> ScalarFamily {
        ScalarFamily {
            radius: self.radius,
            center: probe(&self.center),
            samples: self.samples.iter().map(&probe).collect(),
        }
    }

    /// Largest negative-frequency fraction over a set of scalar probes
    /// (w_{0,0} at a few r, and the largest entry of every other kernel).
    pub fn analyticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let n = self.center.grid.n;
        for (key, k) in &self.center.entries {
            let mut probes: Vec<(usize, usize)> = Vec::new();
            if key.0 + key.1 == 0 {
                probes.extend([(0, 0), (0, n / 2), (0, n - 1)]);
            } else {
                let mut best = (0, 0);
                let mut bv = -1.0;
                for t in 0..k.n_tuples() {
                    for i in 0..n {
                        let v = self.samples[0].entries[key].at(t, i).v.norm();
                        if v > bv {
                            bv = v;
                            best = (t, i);
                        }
                    }
                }
                if bv <= 1e-300 {
                    continue;
                }
                probes.push(best);
            }
            for (t, i) in probes {
                let s = self.scalar(|w| w.entries[key].at(t, i).v);
                let spread: f64 = s.samples.iter().map(|z| (z - s.samples[0]).norm()).fold(0.0, f64::max);
                if spread <= 1e-14 * s.samples[0].norm().max(1e-300) {
                    continue;
                }
                worst = worst.max(s.analyticity_residual());
            }
        }
        worst
    }

    /// w_{m,n}(conj z)(r; K, K~) = conj(w_{n,m}(z)(r; K~, K)) on all samples.
    pub fn symmetry_defect(&self) -> f64 {
        let q = self.samples.len();
        let mut worst: f64 = 0.0;
        let mut pairs: Vec<(&KernelSeq, &KernelSeq)> = vec![(&self.center, &self.center)];
        for k in 0..q {
            pairs.push((&self.samples[k], &self.samples[(q - k) % q]));
        }
        for (a, b) in pairs {
            for ((m, n), ka) in &a.entries {
                let kb = match b.entries.get(&(*n, *m)) {
                    Some(k) => k,
                    None => {
                        worst = worst.max(ka.sup_norm());
                        continue;
                    }
                };
                for t in 0..ka.n_tuples() {
                    let (o, i) = ka.legs(t);
                    let s = kb.tuple(&i, &o);
                    for r in 0..ka.grid.n {
                        let x = ka.at(t, r);
                        let y = kb.at(s, r);
                        worst = worst.max((x.v - y.v.conj()).norm()).max((x.d - y.d.conj()).norm());
                    }
                }
            }
        }
        worst
    }

    pub fn is_symmetric_family(&self, tol: f64) -> bool {
        self.symmetry_defect() <= tol
    }

    /// sup over samples of ||w_{>=1}(z)||_xi.
    pub fn interaction_norm(&self) -> f64 {
        self.all_samples().map(|s| s.interaction_norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::c;

    #[test]
    fn cauchy_reproduces_polynomials() {
        let f = ScalarFamily::from_fn(0.4, 16, |z| z * z * 3.0 - z + c(0.5, 0.1));
        let z = c(0.1, -0.05);
        assert!((f.eval(z) - (z * z * 3.0 - z + c(0.5, 0.1))).norm() < 1e-14);
        assert!((f.deriv(z) - (z * 6.0 - 1.0)).norm() < 1e-13);
        assert!(f.analyticity_residual() < 1e-15);
        let g = ScalarFamily::from_fn(0.4, 16, |z| z.conj());
        assert!(g.analyticity_residual() > 0.99);
    }
}

//! Scalar helpers: complex aliases, value/derivative pairs, the smoothstep
//! and local Hermite interpolation on uniform grids.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A value together with its derivative in r.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub v: C64,
    pub d: C64,
}

impl Dual {
    pub const ZERO: Dual = Dual { v: ZERO, d: ZERO };

    pub fn new(v: C64, d: C64) -> Self {
        Dual { v, d }
    }

    pub fn constant(v: C64) -> Self {
        Dual { v, d: ZERO }
    }

    pub fn real(v: f64, d: f64) -> Self {
        Dual { v: c(v, 0.0), d: c(d, 0.0) }
    }

    pub fn scale(self, s: C64) -> Self {
        Dual { v: self.v * s, d: self.d * s }
    }

    pub fn conj(self) -> Self {
        Dual { v: self.v.conj(), d: self.d.conj() }
    }

    pub fn recip(self) -> Self {
        let inv = self.v.inv();
        Dual { v: inv, d: -self.d * inv * inv }
    }

    /// `self += a * b` with the product rule.
    #[inline]
    pub fn fma(&mut self, a: Dual, b: Dual) {
        self.v += a.v * b.v;
        self.d += a.d * b.v + a.v * b.d;
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, o: Dual) {
        self.v += o.v;
        self.d += o.d;
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

fn bump(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else {
        let f = (-1.0 / t).exp();
        (f, f / (t * t))
    }
}

/// C-infinity step: 0 for t <= 0, 1 for t >= 1. Returns value and derivative.
pub fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let (a, da) = bump(t);
    let (b, db) = bump(1.0 - t);
    let s = a + b;
    (a / s, (da * b + a * db) / (s * s))
}

/// Uniform grid on [0, 1].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RGrid {
    pub n: usize,
}

impl RGrid {
    pub fn new(n: usize) -> Self {
        assert!(n >= 3, "r-grid needs at least 3 points");
        RGrid { n }
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 / (self.n - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }
}

/// Quintic Hermite interpolation through the three nodes nearest to `x`,
/// using stored values and derivatives. Exact on polynomials of degree 5.
/// Returns zero for x beyond 1 (kernels vanish outside [0,1]).
pub fn hermite_eval(grid: &RGrid, vals: &[C64], ders: &[C64], x: f64) -> Dual {
    let n = grid.n;
    debug_assert_eq!(vals.len(), n);
    let h = grid.h();
    if x > 1.0 + 1e-12 {
        return Dual::ZERO;
    }
    let pos = x / h;
    let mut i = pos.round() as isize;
    if (pos - i as f64).abs() < 1e-9 && i >= 0 && (i as usize) < n {
        let i = i as usize;
        return Dual { v: vals[i], d: ders[i] };
    }
    i = i.clamp(1, n as isize - 2);
    let i = i as usize;
    let t = pos - i as f64;
    let f0 = vals[i];
    let fm = vals[i - 1];
    let fp = vals[i + 1];
    let g0 = ders[i] * h;
    let gm = ders[i - 1] * h;
    let gp = ders[i + 1] * h;
    let a0 = f0;
    let a1 = g0;
    let s = (fp + fm) * 0.5 - a0;
    let dd = (fp - fm) * 0.5 - a1;
    let gs = (gp + gm) * 0.5 - a1;
    let gd = (gp - gm) * 0.5;
    let a4 = (gd - s * 2.0) * 0.5;
    let a2 = s - a4;
    let a5 = (gs - dd * 3.0) * 0.5;
    let a3 = dd - a5;
    let v = a0 + t * (a1 + t * (a2 + t * (a3 + t * (a4 + t * a5))));
    let dv = a1 + t * (a2 * 2.0 + t * (a3 * 3.0 + t * (a4 * 4.0 + t * a5 * 5.0)));
    Dual { v, d: dv / h }
}

/// `%.17g` formatting as used in CSV outputs.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let e = format!("{:.16e}", x);
    let (mant, exp) = e.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        let m = trim_zeros(mant);
        format!("{}e{}{:02}", m, if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_ends_and_symmetry() {
        assert_eq!(smoothstep(0.0).0, 0.0);
        assert_eq!(smoothstep(1.0).0, 1.0);
        for k in 1..100 {
            let t = k as f64 / 100.0;
            let (a, da) = smoothstep(t);
            let (b, db) = smoothstep(1.0 - t);
            assert!((a + b - 1.0).abs() < 1e-15);
            assert!((da - db).abs() < 1e-12);
            let h = 1e-6;
            let fd = (smoothstep(t + h).0 - smoothstep(t - h).0) / (2.0 * h);
            assert!((fd - da).abs() < 1e-6);
        }
    }

    #[test]
    fn hermite_is_exact_on_quintics() {
        let g = RGrid::new(17);
        let p = |x: f64| 1.0 - 2.0 * x + 3.0 * x.powi(3) - x.powi(5);
        let dp = |x: f64| -2.0 + 9.0 * x * x - 5.0 * x.powi(4);
        let v: Vec<C64> = g.points().iter().map(|&x| c(p(x), 0.0)).collect();
        let d: Vec<C64> = g.points().iter().map(|&x| c(dp(x), 0.0)).collect();
        for k in 0..200 {
            let x = k as f64 / 199.0;
            let r = hermite_eval(&g, &v, &d, x);
            assert!((r.v.re - p(x)).abs() < 1e-12, "x={x}");
            assert!((r.d.re - dp(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn g17_matches_c_style() {
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_g17(-2.5), "-2.5");
        assert_eq!(fmt_g17(1e20), "1e+20");
    }
}

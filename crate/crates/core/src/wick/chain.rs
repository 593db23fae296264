//! Neumann series of the Feshbach map, normal ordered by propagating tagged
//! external legs through the product chi W F W F ... W chi.
//!
//! Every external leg is a distinguishable tag photon of weight one:
//! annihilation tags are present in the initial state and can only be
//! removed, creation tags can only be added. The matrix element of the L-th
//! product between the tagged states is M! N! times the symmetrized kernel.

use super::explicit::Profile;
use crate::error::{Error, Result};
use crate::fock::ModeGrid;
use crate::kernels::{decode_tuple, encode_tuple, n_tuples, permutations, Kernel};
use crate::num::{c, Dual, RGrid, C64, ZERO};
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

/// Vertices of W: for every (m, n) with 1 <= m + n <= 2 a d x d block of
/// scalar kernels (row-major, entry a * d + b). Kernels flagged
/// `r_independent` are read at their first r-node for every energy; they
/// describe operators on the whole Fock space rather than on H_red.
#[derive(Clone, Debug)]
pub struct Interaction {
    pub d: usize,
    pub entries: BTreeMap<(usize, usize), Vec<Kernel>>,
    pub r_independent: bool,
}

impl Interaction {
    /// Scalar interaction from the m + n >= 1 part of a kernel sequence.
    pub fn scalar(w: &crate::kernels::KernelSeq) -> Self {
        let mut entries = BTreeMap::new();
        for (key, k) in &w.entries {
            if key.0 + key.1 >= 1 && k.sup_norm() > 0.0 {
                entries.insert(*key, vec![k.clone()]);
            }
        }
        Interaction { d: 1, entries, r_independent: false }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|ks| ks.iter().all(|k| k.sup_norm() == 0.0))
    }
}

/// Matrix-valued profile: d x d row-major duals.
pub type MatProfile<'a> = &'a (dyn Fn(f64) -> Vec<Dual> + Sync);

pub struct NeumannSetup<'a> {
    pub grid: &'a ModeGrid,
    pub w: &'a Interaction,
    /// chi at both ends of the chain.
    pub f_end: Profile<'a>,
    /// The middle factor chibar^2 T^{-1} as a function of the energy.
    pub f_mid: MatProfile<'a>,
    /// Atomic vectors: the chain starts from `start` and is read with `end`.
    pub start: Vec<C64>,
    pub end: Vec<C64>,
    /// Background energies r at which the output kernels are evaluated.
    pub r_out: Vec<f64>,
    /// Modes allowed as external legs.
    pub out_modes: Vec<usize>,
    /// Largest M + N computed.
    pub m_out: usize,
    pub l_max: usize,
    /// Largest number of simultaneous internal photons.
    pub cap: usize,
    pub xi: f64,
}

/// Output kernels are sampled at the points r_out (grid index = position).
#[derive(Clone, Debug)]
pub struct NeumannOutput {
    /// sum_{L=1}^{L_max} (-1)^{L+1} term_L.
    pub sum: BTreeMap<(usize, usize), Kernel>,
    /// xi-weighted sharp norms of the individual terms.
    pub term_norms: Vec<f64>,
    pub ratio: f64,
    /// Geometric tail of the truncated series (all leg counts).
    pub series_tail: f64,
    /// Bound on the discarded kernels with more than m_out legs.
    pub high_legs: f64,
    pub tail: f64,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
struct State {
    internal: Vec<u16>,
    in_mask: u8,
    out_mask: u8,
}

struct Ctx<'a> {
    s: &'a NeumannSetup<'a>,
    omegas: Vec<f64>,
    weights: Vec<f64>,
    nr: usize,
    d: usize,
    out_legs: Vec<usize>,
    in_legs: Vec<usize>,
    kcache: HashMap<(usize, usize, usize, u64), Rc<Vec<Dual>>>,
    fcache: HashMap<u64, Rc<Vec<Dual>>>,
    vertex_keys: Vec<(usize, usize)>,
}

fn ordered_multiset_removals(
    internal: &[u16],
    in_mask: u8,
    in_legs: &[usize],
    n: usize,
    f: &mut dyn FnMut(&[usize], &[bool], f64, Vec<u16>, u8),
) {
    fn rec(
        internal: &mut Vec<u16>,
        in_mask: u8,
        in_legs: &[usize],
        left: usize,
        legs: &mut Vec<usize>,
        tags: &mut Vec<bool>,
        amp: f64,
        f: &mut dyn FnMut(&[usize], &[bool], f64, Vec<u16>, u8),
    ) {
        if left == 0 {
            f(legs, tags, amp, internal.clone(), in_mask);
            return;
        }
        // internal photons: distinct modes with multiplicity
        let mut i = 0;
        while i < internal.len() {
            let mode = internal[i];
            let mut cnt = 0;
            while i + cnt < internal.len() && internal[i + cnt] == mode {
                cnt += 1;
            }
            let pos = i;
            internal.remove(pos);
            legs.push(mode as usize);
            tags.push(false);
            rec(internal, in_mask, in_legs, left - 1, legs, tags, amp * (cnt as f64).sqrt(), f);
            tags.pop();
            legs.pop();
            internal.insert(pos, mode);
            i += cnt;
        }
        for b in 0..in_legs.len() {
            if in_mask >> b & 1 == 1 {
                legs.push(in_legs[b]);
                tags.push(true);
                rec(internal, in_mask & !(1 << b), in_legs, left - 1, legs, tags, amp, f);
                tags.pop();
                legs.pop();
            }
        }
    }
    let mut v = internal.to_vec();
    rec(&mut v, in_mask, in_legs, n, &mut Vec::new(), &mut Vec::new(), 1.0, f);
}

impl<'a> Ctx<'a> {
    fn energy(&self, st: &State) -> f64 {
        let mut e: f64 = st.internal.iter().map(|&m| self.omegas[m as usize]).sum();
        for (b, &k) in self.in_legs.iter().enumerate() {
            if st.in_mask >> b & 1 == 1 {
                e += self.omegas[k];
            }
        }
        for (a, &k) in self.out_legs.iter().enumerate() {
            if st.out_mask >> a & 1 == 1 {
                e += self.omegas[k];
            }
        }
        e
    }

    fn needed(&self, st: &State) -> usize {
        st.internal.len() + st.in_mask.count_ones() as usize + self.out_legs.len() - st.out_mask.count_ones() as usize
    }

    /// Kernel block (d x d per r) of vertex `vi` at tuple `t`, energy offset `e`.
    fn kernel_profile(&mut self, vi: usize, t: usize, e: f64) -> Rc<Vec<Dual>> {
        let key = (vi, t, 0, e.to_bits());
        if let Some(p) = self.kcache.get(&key) {
            return p.clone();
        }
        let ks = &self.s.w.entries[&self.vertex_keys[vi]];
        let d = self.d;
        let mut out = vec![Dual::ZERO; self.nr * d * d];
        let flat = self.s.w.r_independent;
        for (ab, k) in ks.iter().enumerate() {
            for i in 0..self.nr {
                out[i * d * d + ab] = if flat { Dual::constant(k.at(t, 0).v) } else { k.eval(t, self.s.r_out[i] + e) };
            }
        }
        let rc = Rc::new(out);
        self.kcache.insert(key, rc.clone());
        rc
    }

    fn mid_profile(&mut self, e: f64) -> Rc<Vec<Dual>> {
        if let Some(p) = self.fcache.get(&e.to_bits()) {
            return p.clone();
        }
        let d = self.d;
        let mut out = vec![Dual::ZERO; self.nr * d * d];
        for i in 0..self.nr {
            let m = (self.s.f_mid)(self.s.r_out[i] + e);
            out[i * d * d..(i + 1) * d * d].copy_from_slice(&m);
        }
        let rc = Rc::new(out);
        self.fcache.insert(e.to_bits(), rc.clone());
        rc
    }

    fn apply_w(&mut self, vecs: &HashMap<State, Vec<Dual>>, remaining: usize) -> HashMap<State, Vec<Dual>> {
        let mut out: HashMap<State, Vec<Dual>> = HashMap::new();
        let nm = self.omegas.len();
        let d = self.d;
        let nr = self.nr;
        let cap = self.s.cap;
        let n_out = self.out_legs.len();
        let mut keys: Vec<&State> = vecs.keys().collect();
        keys.sort_by(|a, b| (&a.internal, a.in_mask, a.out_mask).cmp(&(&b.internal, b.in_mask, b.out_mask)));
        for st in keys {
            let v = &vecs[st];
            for vi in 0..self.vertex_keys.len() {
                let (m, n) = self.vertex_keys[vi];
                let mut removals: Vec<(Vec<usize>, Vec<bool>, f64, Vec<u16>, u8)> = Vec::new();
                ordered_multiset_removals(&st.internal, st.in_mask, &self.in_legs, n, &mut |l, t, a, int, mask| {
                    removals.push((l.to_vec(), t.to_vec(), a, int, mask))
                });
                for (inl, intag, amp_a, int_u, mask_u) in removals {
                    let wa: f64 = inl.iter().zip(&intag).map(|(&k, &tg)| if tg { 1.0 } else { self.weights[k] }).product();
                    let su = State { internal: int_u.clone(), in_mask: mask_u, out_mask: st.out_mask };
                    let eu = self.energy(&su);
                    // ordered creations
                    let mut stack: Vec<(Vec<usize>, Vec<u16>, u8, f64)> = vec![(Vec::new(), int_u, st.out_mask, 1.0)];
                    for _ in 0..m {
                        let mut next = Vec::new();
                        for (legs, int, om, amp) in stack {
                            if int.len() < cap {
                                for k in 0..nm {
                                    let cnt = int.iter().filter(|&&x| x as usize == k).count();
                                    let mut i2 = int.clone();
                                    let pos = i2.partition_point(|&x| (x as usize) < k);
                                    i2.insert(pos, k as u16);
                                    let mut l2 = legs.clone();
                                    l2.push(k);
                                    next.push((l2, i2, om, amp * ((cnt + 1) as f64).sqrt() * self.weights[k]));
                                }
                            }
                            for a in 0..n_out {
                                if om >> a & 1 == 0 {
                                    let mut l2 = legs.clone();
                                    l2.push(self.out_legs[a]);
                                    next.push((l2, int.clone(), om | 1 << a, amp));
                                }
                            }
                        }
                        stack = next;
                    }
                    for (outl, int_t, om_t, amp_c) in stack {
                        let st_t = State { internal: int_t, in_mask: mask_u, out_mask: om_t };
                        if self.needed(&st_t) > 2 * remaining {
                            continue;
                        }
                        let mut all = outl.clone();
                        all.extend_from_slice(&inl);
                        let tup = encode_tuple(&all, nm);
                        let prof = self.kernel_profile(vi, tup, eu);
                        let amp = c(amp_a * amp_c * wa, 0.0);
                        let tgt = out.entry(st_t).or_insert_with(|| vec![Dual::ZERO; nr * d]);
                        for i in 0..nr {
                            for a in 0..d {
                                let mut acc = Dual::ZERO;
                                for b in 0..d {
                                    acc.fma(prof[i * d * d + a * d + b], v[i * d + b]);
                                }
                                tgt[i * d + a] += acc.scale(amp);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn apply_mid(&mut self, vecs: HashMap<State, Vec<Dual>>) -> HashMap<State, Vec<Dual>> {
        let d = self.d;
        let nr = self.nr;
        let mut out = HashMap::new();
        for (st, v) in vecs {
            let e = self.energy(&st);
            let f = self.mid_profile(e);
            let mut nv = vec![Dual::ZERO; nr * d];
            let mut nonzero = false;
            for i in 0..nr {
                for a in 0..d {
                    let mut acc = Dual::ZERO;
                    for b in 0..d {
                        acc.fma(f[i * d * d + a * d + b], v[i * d + b]);
                    }
                    if acc.v != ZERO || acc.d != ZERO {
                        nonzero = true;
                    }
                    nv[i * d + a] = acc;
                }
            }
            if nonzero {
                out.insert(st, nv);
            }
        }
        out
    }

    /// Terms L = 1..l_max of <out| chi (W F)^{L-1} W chi |in> per r.
    fn run(&mut self) -> Vec<Vec<Dual>> {
        let d = self.d;
        let nr = self.nr;
        let in_mask: u8 = ((1u16 << self.in_legs.len()) - 1) as u8;
        let full_out: u8 = ((1u16 << self.out_legs.len()) - 1) as u8;
        let s0 = State { internal: vec![], in_mask, out_mask: 0 };
        let e0 = self.energy(&s0);
        let mut v0 = vec![Dual::ZERO; nr * d];
        for i in 0..nr {
            let f = (self.s.f_end)(self.s.r_out[i] + e0);
            for a in 0..d {
                v0[i * d + a] = Dual::constant(self.s.start[a]) * f;
            }
        }
        let mut cur: HashMap<State, Vec<Dual>> = HashMap::new();
        cur.insert(s0, v0);
        let fin = State { internal: vec![], in_mask: 0, out_mask: full_out };
        let e_fin: f64 = self.out_legs.iter().map(|&k| self.omegas[k]).sum();
        let mut terms = Vec::new();
        let l_max = self.s.l_max;
        for l in 1..=l_max {
            let u = self.apply_w(&cur, l_max - l);
            let mut term = vec![Dual::ZERO; nr];
            if let Some(v) = u.get(&fin) {
                for i in 0..nr {
                    let f = (self.s.f_end)(self.s.r_out[i] + e_fin);
                    let mut acc = Dual::ZERO;
                    for a in 0..d {
                        acc.fma(Dual::constant(self.s.end[a]), v[i * d + a]);
                    }
                    term[i] = acc * f;
                }
            }
            terms.push(term);
            if l < l_max {
                cur = self.apply_mid(u);
                if cur.is_empty() {
                    for _ in l + 1..=l_max {
                        terms.push(vec![Dual::ZERO; nr]);
                    }
                    break;
                }
            }
        }
        terms
    }
}

/// Nondecreasing tuples of length k over `modes`.
fn sorted_tuples(modes: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(modes: &[usize], start: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..modes.len() {
            cur.push(modes[i]);
            rec(modes, i, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(modes, 0, k, &mut Vec::new(), &mut out);
    out
}

/// Per-L output kernels of the tagged chain (already symmetric).
pub fn neumann_terms(setup: &NeumannSetup) -> Result<Vec<BTreeMap<(usize, usize), Kernel>>> {
    if setup.m_out > 8 {
        return Err(Error::Config("at most 8 external legs".into()));
    }
    let nm = setup.grid.n_modes();
    let d = setup.w.d;
    if setup.start.len() != d || setup.end.len() != d {
        return Err(Error::Config("atomic vectors do not match the interaction".into()));
    }
    let nr = setup.r_out.len();
    let rg = RGrid::new(nr.max(3));
    let mut per_l: Vec<BTreeMap<(usize, usize), Kernel>> = vec![BTreeMap::new(); setup.l_max];
    let vertex_keys: Vec<(usize, usize)> = setup.w.entries.keys().copied().collect();
    let omegas = setup.grid.omegas();
    let weights = setup.grid.weights();
    for tot in 0..=setup.m_out {
        for mm in 0..=tot {
            let nn = tot - mm;
            for map in per_l.iter_mut() {
                map.insert((mm, nn), Kernel::zeros(mm, nn, nm, &rg));
            }
            let fact = crate::num::factorial(mm) * crate::num::factorial(nn);
            let pm = permutations(mm);
            let pn = permutations(nn);
            for o in sorted_tuples(&setup.out_modes, mm) {
                for i in sorted_tuples(&setup.out_modes, nn) {
                    let mut ctx = Ctx {
                        s: setup,
                        omegas: omegas.clone(),
                        weights: weights.clone(),
                        nr,
                        d,
                        out_legs: o.clone(),
                        in_legs: i.clone(),
                        kcache: HashMap::new(),
                        fcache: HashMap::new(),
                        vertex_keys: vertex_keys.clone(),
                    };
                    let terms = ctx.run();
                    for (l, term) in terms.iter().enumerate() {
                        let k = per_l[l].get_mut(&(mm, nn)).unwrap();
                        for p in &pm {
                            let op: Vec<usize> = p.iter().map(|&x| o[x]).collect();
                            for q in &pn {
                                let iq: Vec<usize> = q.iter().map(|&x| i[x]).collect();
                                let mut all = op.clone();
                                all.extend_from_slice(&iq);
                                let t = encode_tuple(&all, nm);
                                for x in 0..nr {
                                    k.set(t, x, term[x].scale(c(1.0 / fact, 0.0)));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let _ = (n_tuples, decode_tuple);
    Ok(per_l)
}

fn map_norm(m: &BTreeMap<(usize, usize), Kernel>, xi: f64) -> f64 {
    m.values().map(|k| xi.powi(-((k.m + k.n) as i32)) * k.sharp_norm()).sum()
}

/// Rough size of the discarded output kernels with more than `m_out` legs:
/// single vertices and uncontracted vertex pairs at L = 2, continued
/// geometrically with the observed term ratio.
pub fn high_leg_bound(setup: &NeumannSetup, ratio: f64) -> f64 {
    let d = setup.w.d;
    let vnorm = |ks: &Vec<Kernel>| -> f64 {
        (0..d).map(|a| (0..d).map(|b| ks[a * d + b].sharp_norm()).sum::<f64>()).fold(0.0, f64::max)
    };
    // sup of values and of r-derivatives kept apart for the product rule
    let (mut mv, mut md, mut fv, mut fd): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..=300 {
        let e = i as f64 * 0.01;
        let m = (setup.f_mid)(e);
        for a in 0..d {
            mv = mv.max((0..d).map(|b| m[a * d + b].v.norm()).sum());
            md = md.max((0..d).map(|b| m[a * d + b].d.norm()).sum());
        }
        let f = (setup.f_end)(e);
        fv = fv.max(f.v.norm());
        fd = fd.max(f.d.norm());
    }
    let ends = fv * fv + 2.0 * fv * fd;
    let chain = fv * fv * mv + 2.0 * fv * fd * mv + fv * fv * md;
    let legs = |k: &(usize, usize)| k.0 + k.1;
    let mut acc = 0.0;
    for (ka, wa) in &setup.w.entries {
        if legs(ka) > setup.m_out {
            acc += setup.xi.powi(-(legs(ka) as i32)) * vnorm(wa) * ends;
        }
        for (kb, wb) in &setup.w.entries {
            let l = legs(ka) + legs(kb);
            if l > setup.m_out {
                acc += setup.xi.powi(-(l as i32)) * vnorm(wa) * vnorm(wb) * chain;
            }
        }
    }
    acc / (1.0 - ratio)
}

/// Geometric rate of the term norms. From three terms on, each T_l is
/// compared with T_{l-1} and T_{l-2} and the slower of the implied rates
/// (T_l/T_{l-1} or (T_l/T_{l-2})^{1/2}) is discarded: parity can make
/// consecutive terms comparable while every second one shrinks.
pub fn series_ratio(term_norms: &[f64]) -> f64 {
    let step = |a: f64, b: f64, p: f64| {
        if b == 0.0 {
            0.0
        } else if a > 0.0 {
            (b / a).powf(p)
        } else {
            f64::INFINITY
        }
    };
    let n = term_norms.len();
    if n < 3 {
        return (1..n).map(|l| step(term_norms[l - 1], term_norms[l], 1.0)).fold(0.0, f64::max);
    }
    (2..n)
        .map(|l| step(term_norms[l - 1], term_norms[l], 1.0).min(step(term_norms[l - 2], term_norms[l], 0.5)))
        .fold(0.0, f64::max)
}

/// The alternating sum of the terms with the empirical geometric tail.
pub fn neumann_wick(setup: &NeumannSetup) -> Result<NeumannOutput> {
    let per_l = neumann_terms(setup)?;
    let term_norms: Vec<f64> = per_l.iter().map(|m| map_norm(m, setup.xi)).collect();
    let ratio = series_ratio(&term_norms);
    if ratio >= 1.0 {
        return Err(Error::SeriesDiverged { ratio });
    }
    let n = term_norms.len();
    let last_two: f64 = term_norms[n.saturating_sub(2)..].iter().sum();
    let series_tail = last_two * ratio * ratio / (1.0 - ratio * ratio);
    let high_legs = high_leg_bound(setup, ratio);
    let tail = series_tail + high_legs;
    let mut sum = per_l[0].clone();
    for (l, m) in per_l.iter().enumerate().skip(1) {
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        for (key, k) in m {
            sum.get_mut(key).unwrap().add_scaled(k, c(sign, 0.0));
        }
    }
    Ok(NeumannOutput { sum, term_norms, ratio, series_tail, high_legs, tail })
}

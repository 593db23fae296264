//! Normal ordering of F_0 W F_1 ... W F_L by explicit enumeration of the
//! contraction pattern (m_l, p_l, n_l, q_l) of every slot.

use crate::error::{Error, Result};
use crate::fock::{occupation_energy, FockBasis, ModeGrid};
use crate::kernels::{
    decode_tuple, for_each_annihilation, for_each_creation, kernel_operator, n_tuples, Kernel, KernelSeq,
};
use crate::num::{binom, c, CMat, CVec, Dual, RGrid, C64, ZERO};

/// Scalar profile F(r) with its derivative.
pub type Profile<'a> = &'a (dyn Fn(f64) -> Dual + Sync);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Slot {
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub q: usize,
}

impl Slot {
    pub fn legs(&self) -> usize {
        self.m + self.p + self.n + self.q
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionSpec {
    pub slots: Vec<Slot>,
}

impl ContractionSpec {
    /// prod_l C(m_l + p_l, p_l) C(n_l + q_l, q_l).
    pub fn weight(&self) -> usize {
        self.slots.iter().map(|s| binom(s.m + s.p, s.p) * binom(s.n + s.q, s.q)).product()
    }

    pub fn external(&self) -> (usize, usize) {
        (self.slots.iter().map(|s| s.m).sum(), self.slots.iter().map(|s| s.n).sum())
    }

    /// All specs with L slots, |m| = m_tot, |n| = n_tot and 1 <= legs <= 2
    /// per slot, restricted to kernels available in `avail`.
    pub fn enumerate(l: usize, m_tot: usize, n_tot: usize, avail: &dyn Fn(usize, usize) -> bool) -> Vec<Self> {
        let mut choices = Vec::new();
        for m in 0..=2 {
            for p in 0..=2 {
                for n in 0..=2 {
                    for q in 0..=2 {
                        let s = Slot { m, p, n, q };
                        if (1..=2).contains(&s.legs()) && avail(m + p, n + q) {
                            choices.push(s);
                        }
                    }
                }
            }
        }
        let mut out = Vec::new();
        fn rec(
            l: usize,
            mleft: usize,
            nleft: usize,
            choices: &[Slot],
            cur: &mut Vec<Slot>,
            out: &mut Vec<ContractionSpec>,
        ) {
            if cur.len() == l {
                if mleft == 0 && nleft == 0 {
                    out.push(ContractionSpec { slots: cur.clone() });
                }
                return;
            }
            for s in choices {
                if s.m <= mleft && s.n <= nleft {
                    cur.push(*s);
                    rec(l, mleft - s.m, nleft - s.n, choices, cur, out);
                    cur.pop();
                }
            }
        }
        rec(l, m_tot, n_tot, &choices, &mut Vec::new(), &mut out);
        out
    }

    /// Splits the external legs slot by slot, in order.
    pub fn split<'a>(&self, out: &'a [usize], inn: &'a [usize]) -> Vec<(&'a [usize], &'a [usize])> {
        let mut res = Vec::new();
        let (mut a, mut b) = (0, 0);
        for s in &self.slots {
            res.push((&out[a..a + s.m], &inn[b..b + s.n]));
            a += s.m;
            b += s.n;
        }
        res
    }
}

/// Contraction energies: r[l] for slots l = 1..L (stored at l - 1) and
/// r_tilde[l] for l = 0..L.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftAccounting {
    pub r: Vec<f64>,
    pub r_tilde: Vec<f64>,
}

impl ShiftAccounting {
    pub fn new(spec: &ContractionSpec, omegas: &[f64], out: &[usize], inn: &[usize]) -> Self {
        let parts = spec.split(out, inn);
        let sig = |legs: &[usize]| legs.iter().map(|&i| omegas[i]).sum::<f64>();
        let ks: Vec<f64> = parts.iter().map(|p| sig(p.0)).collect();
        let kts: Vec<f64> = parts.iter().map(|p| sig(p.1)).collect();
        let l = parts.len();
        // r_tilde[l] = sum_{i <= l} kt_i + sum_{i > l} k_i  (slots numbered from 1)
        let r_tilde: Vec<f64> = (0..=l)
            .map(|j| kts[..j].iter().sum::<f64>() + ks[j..].iter().sum::<f64>())
            .collect();
        // r[l] = sum_{i < l} kt_i + sum_{i > l} k_i
        let r: Vec<f64> = (1..=l)
            .map(|j| kts[..j - 1].iter().sum::<f64>() + ks[j..].iter().sum::<f64>())
            .collect();
        ShiftAccounting { r, r_tilde }
    }
}

fn slot_kernel<'a>(w: &'a KernelSeq, s: &Slot) -> Result<&'a Kernel> {
    w.require(s.m + s.p, s.n + s.q)
}

/// The operator W_{p,q}^{m,n}[w](r; K) on an internal basis: internal legs
/// summed with their quadrature weights, externals fixed.
pub fn contracted_block(
    w: &KernelSeq,
    slot: &Slot,
    ext_out: &[usize],
    ext_in: &[usize],
    r: f64,
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<CMat> {
    let k = slot_kernel(w, slot)?;
    let dim = basis.dim();
    let mut mat = CMat::zeros(dim, dim);
    let omegas = grid.omegas();
    let weights = grid.weights();
    let all: Vec<usize> = (0..grid.n_modes()).collect();
    for s in 0..dim {
        for_each_annihilation(&basis.states[s], slot.q, &mut |xl, xa, u| {
            let eu = occupation_energy(u, &omegas);
            let wx: f64 = xl.iter().map(|&j| weights[j]).product();
            for_each_creation(u, slot.p, &all, &mut |yl, ya, t_occ| {
                if let Some(t) = basis.index_of(t_occ) {
                    let wy: f64 = yl.iter().map(|&j| weights[j]).product();
                    let mut o = ext_out.to_vec();
                    o.extend_from_slice(yl);
                    let mut i = ext_in.to_vec();
                    i.extend_from_slice(xl);
                    let val = k.eval(k.tuple(&o, &i), eu + r).v;
                    mat[(t, s)] += val * (wx * wy * xa * ya);
                }
            });
        });
    }
    Ok(mat)
}

/// <Omega, F_0(H_f + r + rt_0) prod_l { B_l F_l(H_f + r + rt_l) } Omega>.
pub fn vev_chain(
    f_list: &[&dyn Fn(f64) -> C64],
    blocks: &[CMat],
    r: f64,
    shifts: &ShiftAccounting,
    basis: &FockBasis,
) -> Result<C64> {
    let l = blocks.len();
    if basis.n_max < l {
        return Err(Error::Truncation(format!("vacuum chain of length {l} needs n_max >= {l}, got {}", basis.n_max)));
    }
    if f_list.len() != l + 1 {
        return Err(Error::Config(format!("{} profiles for {l} blocks", f_list.len())));
    }
    let dim = basis.dim();
    let diag = |j: usize| CVec::from_iterator(dim, basis.energies.iter().map(|&e| f_list[j](e + r + shifts.r_tilde[j])));
    let mut v = basis.vacuum();
    v.component_mul_assign(&diag(l));
    for j in (0..l).rev() {
        v = &blocks[j] * v;
        v.component_mul_assign(&diag(j));
    }
    Ok(v[0])
}

/// Vectorized chain over all r of the output grid, with derivatives.
fn chain_profile(
    w: &KernelSeq,
    spec: &ContractionSpec,
    out: &[usize],
    inn: &[usize],
    f_list: &[Profile],
    grid: &ModeGrid,
    basis: &FockBasis,
    rgrid: &RGrid,
) -> Result<Vec<Dual>> {
    let omegas = grid.omegas();
    let weights = grid.weights();
    let all: Vec<usize> = (0..grid.n_modes()).collect();
    let shifts = ShiftAccounting::new(spec, &omegas, out, inn);
    let parts = spec.split(out, inn);
    let l = spec.slots.len();
    let nr = rgrid.n;
    let rs = rgrid.points();
    let dim = basis.dim();
    let mut v = vec![vec![Dual::ZERO; nr]; dim];
    for i in 0..nr {
        v[0][i] = f_list[l](rs[i] + shifts.r_tilde[l]);
    }
    for j in (0..l).rev() {
        let slot = spec.slots[j];
        let k = slot_kernel(w, &slot)?;
        let (eo, ei) = parts[j];
        let mut nv = vec![vec![Dual::ZERO; nr]; dim];
        for s in 0..dim {
            if v[s].iter().all(|d| d.v == ZERO && d.d == ZERO) {
                continue;
            }
            for_each_annihilation(&basis.states[s], slot.q, &mut |xl, xa, u| {
                let eu = occupation_energy(u, &omegas);
                let wx: f64 = xl.iter().map(|&jj| weights[jj]).product();
                for_each_creation(u, slot.p, &all, &mut |yl, ya, t_occ| {
                    let Some(t) = basis.index_of(t_occ) else { return };
                    let wy: f64 = yl.iter().map(|&jj| weights[jj]).product();
                    let mut o = eo.to_vec();
                    o.extend_from_slice(yl);
                    let mut ii = ei.to_vec();
                    ii.extend_from_slice(xl);
                    let tup = k.tuple(&o, &ii);
                    let amp = c(wx * wy * xa * ya, 0.0);
                    for i in 0..nr {
                        let kv = k.eval(tup, eu + rs[i] + shifts.r[j]).scale(amp);
                        nv[t][i].fma(kv, v[s][i]);
                    }
                });
            });
        }
        for t in 0..dim {
            for i in 0..nr {
                let f = f_list[j](basis.energies[t] + rs[i] + shifts.r_tilde[j]);
                nv[t][i] = nv[t][i] * f;
            }
        }
        v = nv;
    }
    Ok(std::mem::take(&mut v[0]))
}

/// The normal-ordered kernel w~_{M,N} of F_0 W F_1 ... W F_L (symmetrized).
/// W is built from all entries of `w` with 1 <= m + n <= 2.
pub fn normal_order(
    f_list: &[Profile],
    w: &KernelSeq,
    l: usize,
    target: (usize, usize),
    grid: &ModeGrid,
) -> Result<Kernel> {
    if f_list.len() != l + 1 {
        return Err(Error::Config(format!("{} profiles for L = {l}", f_list.len())));
    }
    let (mm, nn) = target;
    let basis = FockBasis::new(grid, l);
    let avail = |a: usize, b: usize| w.get(a, b).is_some();
    let specs = ContractionSpec::enumerate(l, mm, nn, &avail);
    let nm = grid.n_modes();
    let mut out = Kernel::zeros(mm, nn, nm, &w.grid);
    for t in 0..n_tuples(nm, mm + nn) {
        let legs = decode_tuple(t, nm, mm + nn);
        let (o, i) = legs.split_at(mm);
        for spec in &specs {
            let wt = c(spec.weight() as f64, 0.0);
            let prof = chain_profile(w, spec, o, i, f_list, grid, &basis, &w.grid)?;
            for (x, d) in prof.into_iter().enumerate() {
                let cur = out.at(t, x);
                out.set(t, x, cur + d.scale(wt));
            }
        }
    }
    Ok(out.symmetrize())
}

/// All kernels w~_{M,N} with M + N <= 2L.
pub fn normal_order_all(f_list: &[Profile], w: &KernelSeq, l: usize, grid: &ModeGrid) -> Result<KernelSeq> {
    let mut seq = KernelSeq::new(w.n_modes, &w.grid, w.xi, 2 * l);
    for tot in 0..=2 * l {
        for mm in 0..=tot {
            seq.insert(normal_order(f_list, w, l, (mm, tot - mm), grid)?);
        }
    }
    Ok(seq)
}

/// F_0(H_f) W F_1(H_f) ... W F_L(H_f) as a matrix, compressed to `target`.
/// Intermediate states live on the energy-<= 1 basis with enough photons to
/// make the product exact.
pub fn direct_product(f_list: &[Profile], w: &KernelSeq, grid: &ModeGrid, target: &FockBasis) -> Result<CMat> {
    let l = f_list.len() - 1;
    if target.e_max.map_or(true, |e| e > 1.0 + 1e-12) {
        return Err(Error::Config("direct product is compared on H_red only".into()));
    }
    let wmin = grid.omegas().iter().cloned().fold(f64::INFINITY, f64::min);
    let n_big = ((1.0 + 1e-9) / wmin).floor() as usize;
    let big = FockBasis::with_cutoff(grid, n_big, 1.0);
    let dim = big.dim();
    let mut wmat = CMat::zeros(dim, dim);
    for k in w.entries.values() {
        if (1..=2).contains(&(k.m + k.n)) {
            wmat += kernel_operator(k, grid, &big)?;
        }
    }
    let fd = |j: usize| big.diag_fn(|e| f_list[j](e).v);
    let mut prod = fd(0);
    for j in 1..=l {
        prod = prod * &wmat * fd(j);
    }
    let idx: Vec<usize> = target
        .states
        .iter()
        .map(|s| big.index_of(s).ok_or_else(|| Error::Truncation("target state missing from product basis".into())))
        .collect::<Result<_>>()?;
    Ok(crate::fock::block(&prod, &idx, &idx))
}

//! Binary checkpoints of kernel families.
//!
//! Layout: magic `FESHRGCK`, u32 version, u64 header length, JSON header,
//! little-endian f64 payload, SHA-256 of everything before the digest.

use super::{Kernel, KernelSeq, ZFamily};
use crate::error::{Error, Result};
use crate::num::{RGrid, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"FESHRGCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SeqHeader {
    xi: f64,
    m_max: usize,
    tail_bound_bits: u64,
    kernels: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    n_modes: usize,
    n_r: usize,
    radius: Option<f64>,
    seqs: Vec<SeqHeader>,
    arrays: Vec<(String, usize)>,
}

/// A family (optional) plus named f64 arrays and free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub family: Option<ZFamily>,
    pub arrays: BTreeMap<String, Vec<f64>>,
}

fn push_c(buf: &mut Vec<u8>, zs: &[C64]) {
    for z in zs {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint("truncated payload".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn complex(&mut self, n: usize) -> Result<Vec<C64>> {
        (0..n).map(|_| Ok(C64::new(self.f64()?, self.f64()?))).collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut seqs_ref: Vec<&KernelSeq> = Vec::new();
        let (n_modes, n_r, radius) = match &self.family {
            Some(f) => {
                seqs_ref.extend(f.all_samples());
                (f.center.n_modes, f.center.grid.n, Some(f.radius))
            }
            None => (0, 0, None),
        };
        let header = Header {
            meta: self.meta.clone(),
            n_modes,
            n_r,
            radius,
            seqs: seqs_ref
                .iter()
                .map(|s| SeqHeader {
                    xi: s.xi,
                    m_max: s.m_max,
                    tail_bound_bits: s.tail_bound.to_bits(),
                    kernels: s.entries.keys().copied().collect(),
                })
                .collect(),
            arrays: self.arrays.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
        };
        let hjson = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(hjson.len() as u64).to_le_bytes());
        buf.extend_from_slice(&hjson);
        if let Some(f) = &self.family {
            buf.extend_from_slice(&f.radius.to_le_bytes());
        }
        for s in &seqs_ref {
            for k in s.entries.values() {
                push_c(&mut buf, &k.values);
                push_c(&mut buf, &k.d_values);
            }
        }
        for v in self.arrays.values() {
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 8 + 4 + 8 + 32 || &data[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let body = &data[..data.len() - 32];
        let digest = Sha256::digest(body);
        if digest.as_slice() != &data[data.len() - 32..] {
            return Err(Error::Checkpoint("hash mismatch".into()));
        }
        let mut rd = Reader { data: body, pos: 8 };
        let version = u32::from_le_bytes(rd.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(rd.take(8)?.try_into().unwrap()) as usize;
        let header: Header =
            serde_json::from_slice(rd.take(hlen)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let family = match header.radius {
            Some(_) => {
                let radius = rd.f64()?;
                let grid = RGrid::new(header.n_r);
                let mut seqs = Vec::new();
                for sh in &header.seqs {
                    let mut s = KernelSeq::new(header.n_modes, &grid, sh.xi, sh.m_max);
                    s.tail_bound = f64::from_bits(sh.tail_bound_bits);
                    for &(m, n) in &sh.kernels {
                        let mut k = Kernel::zeros(m, n, header.n_modes, &grid);
                        let len = k.values.len();
                        k.values = rd.complex(len)?;
                        k.d_values = rd.complex(len)?;
                        s.insert(k);
                    }
                    seqs.push(s);
                }
                if seqs.is_empty() {
                    return Err(Error::Checkpoint("family without samples".into()));
                }
                let center = seqs.remove(0);
                Some(ZFamily { radius, center, samples: seqs })
            }
            None => None,
        };
        let mut arrays = BTreeMap::new();
        for (name, len) in &header.arrays {
            let v = (0..*len).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
            arrays.insert(name.clone(), v);
        }
        if rd.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { meta: header.meta, family, arrays })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes()?)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let data = std::fs::read(path)?;
        Self::from_bytes(&data)
    }
}

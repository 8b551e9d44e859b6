//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DA2N"  u32 version  u32 count
//! count x { u32 name_len, name (UTF-8), u32 ndim, ndim x u32 dim }
//! raw f32 data of every tensor in table order
//! ```
//!
//! The network shape travels as three leading tensors: `meta.alpha_s`,
//! `meta.leaky_slope` and `meta.shears`.

use std::io::{Read, Write};
use std::path::Path;

use lfaa_core::{LfError, Result};

use crate::network::{build_network, NetworkConfig, NetworkParams};
use crate::params::{Params, Role};
use crate::tensor::Real;

pub const MAGIC: &[u8; 4] = b"DA2N";
pub const VERSION: u32 = 1;

const META: [&str; 3] = ["meta.alpha_s", "meta.leaky_slope", "meta.shears"];

fn err(msg: impl Into<String>) -> LfError {
    LfError::Container(format!("checkpoint: {}", msg.into()))
}

pub fn to_bytes<T: Real>(np: &NetworkParams<T>) -> Vec<u8> {
    let cfg = &np.config;
    let meta: [(&str, Vec<usize>, Vec<f32>); 3] = [
        (META[0], vec![1], vec![cfg.alpha_s as f32]),
        (META[1], vec![1], vec![cfg.leaky_slope as f32]),
        (META[2], vec![cfg.shears.len()], cfg.shears.iter().map(|&a| a as f32).collect()),
    ];
    let mut table: Vec<(&str, &[usize])> = meta.iter().map(|(n, s, _)| (*n, s.as_slice())).collect();
    table.extend(np.params.tensors().iter().map(|t| (t.name.as_str(), t.shape.as_slice())));

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (name, shape) in &table {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in *shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, _, data) in &meta {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for t in np.params.tensors() {
        for v in &t.data {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| err("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| err("tensor too large"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

/// Parses a checkpoint and checks it against the network it describes.
pub fn from_bytes<T: Real>(bytes: &[u8]) -> Result<NetworkParams<T>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(err("bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let count = c.u32()? as usize;
    let mut table = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?).map_err(|_| err("name is not UTF-8"))?.to_string();
        let ndim = c.u32()? as usize;
        let shape = (0..ndim).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        table.push((name, shape));
    }
    if table.len() < META.len() || table.iter().zip(META).any(|((n, _), m)| n != m) {
        return Err(err("missing network description"));
    }
    let mut data = Vec::with_capacity(table.len());
    for (_, shape) in &table {
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| err("tensor too large"))?;
        data.push(c.f32s(n)?);
    }
    if c.pos != bytes.len() {
        return Err(err("trailing bytes"));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LfError::NonFinite("checkpoint tensor".into()));
    }
    let alpha_s = data[0].first().copied().unwrap_or(0.0);
    if alpha_s < 1.0 || alpha_s.fract() != 0.0 {
        return Err(err(format!("alpha_s {alpha_s}")));
    }
    let config = NetworkConfig {
        alpha_s: alpha_s as usize,
        leaky_slope: widen(data[1].first().copied().unwrap_or(0.0)),
        shears: data[2].iter().map(|&v| widen(v)).collect(),
    };

    // Rebuild the expected layout and fill it.
    let graph = build_network(&config)?;
    let template = Params::<T>::init_with_std(&graph, 0, 0.0)?;
    if template.len() != table.len() - META.len() {
        return Err(err(format!("{} tensors, network needs {}", table.len() - META.len(), template.len())));
    }
    let mut params = Params::new();
    for (t, ((name, shape), values)) in template.tensors().iter().zip(table.into_iter().zip(data).skip(META.len())) {
        if t.name != name || t.shape != shape {
            return Err(err(format!("tensor {name} {shape:?} where {} {:?} was expected", t.name, t.shape)));
        }
        if t.role == Role::RunningVar && values.iter().any(|&v| v < 0.0) {
            return Err(err(format!("negative variance in {name}")));
        }
        params.push(name, shape, values.into_iter().map(|v| T::of(v as f64)).collect(), t.role)?;
    }
    Ok(NetworkParams { config, params })
}

/// Shortest decimal reading of an `f32`, so `0.2f32` comes back as `0.2`.
fn widen(v: f32) -> f64 {
    v.to_string().parse().unwrap_or(v as f64)
}

pub fn save<T: Real>(np: &NetworkParams<T>, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(np))?;
    Ok(())
}

pub fn load<T: Real>(path: &Path) -> Result<NetworkParams<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

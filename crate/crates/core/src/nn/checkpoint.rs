//! Binary parameter files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "ILABMLP1"
//! layers       u32      number of affine layers (3)
//! dims         u32 x (layers + 1)   input, hidden1, hidden2, output
//! activation   u32      output activation (0 identity, 1 logistic)
//! count        u64      number of parameters that follow
//! params       f64 x count
//! ```
//!
//! Parameters are layer-major; each layer stores its `fan_out x fan_in`
//! row-major weights followed by its `fan_out` biases.

use std::fs;
use std::path::Path;

use super::mlp::{Mlp, MlpSpec, OutputActivation, N_LAYERS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ILABMLP1";

pub fn encode(net: &Mlp) -> Vec<u8> {
    let spec = net.spec();
    let mut out = Vec::with_capacity(8 + 4 * (N_LAYERS + 3) + 8 + 8 * net.params().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(N_LAYERS as u32).to_le_bytes());
    for d in [spec.input_dim, spec.hidden[0], spec.hidden[1], spec.output_dim] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&spec.output.code().to_le_bytes());
    out.extend_from_slice(&(net.params().len() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Mlp> {
    let corrupt = |reason: &str| Error::Corrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut cur = Cursor { bytes, at: 0 };
    if cur.take(8).ok_or_else(|| corrupt("short header"))? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let layers = cur.u32().ok_or_else(|| corrupt("short header"))? as usize;
    if layers != N_LAYERS {
        return Err(corrupt(&format!("{layers} layers, expected {N_LAYERS}")));
    }
    let mut dims = [0usize; N_LAYERS + 1];
    for d in &mut dims {
        *d = cur.u32().ok_or_else(|| corrupt("short header"))? as usize;
    }
    let act = cur.u32().ok_or_else(|| corrupt("short header"))?;
    let output = OutputActivation::from_code(act).ok_or_else(|| corrupt("unknown activation"))?;
    let spec = MlpSpec::new(dims[0], dims[3], output).with_hidden(dims[1], dims[2]);
    let count = cur.u64().ok_or_else(|| corrupt("short header"))? as usize;
    if count != spec.param_count() {
        return Err(corrupt("parameter count does not match dimensions"));
    }
    let payload = cur.take(8 * count).ok_or_else(|| corrupt("truncated parameters"))?;
    if cur.at != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Mlp::from_params(spec, params)
}

pub fn save(net: &Mlp, path: &Path) -> Result<()> {
    fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at.checked_add(n)?)?;
        self.at += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

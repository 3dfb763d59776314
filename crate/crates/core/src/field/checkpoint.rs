//! Binary parameter checkpoints.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic     8 bytes  "PHSECKPT"
//! version   u32      1
//! dim, depth, width, skip_at            u32 x4
//! activation u32 (0 = relu, 1 = softplus), beta f64
//! fourier_k u32, fourier_offset u32
//! epsilon   f64      phase-field width the field was trained with
//! iteration u64      last completed training iteration
//! domain    f64 x dim lower, f64 x dim upper
//! n_params  u64, then n_params f64
//! ```

use std::fs;
use std::path::Path;

use super::{Activation, MlpConfig, Network, ParamVector};
use crate::error::{Error, Result};
use crate::geometry::Domain;

const MAGIC: &[u8; 8] = b"PHSECKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub epsilon: f64,
    pub iteration: u64,
    pub domain: Domain,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode(ckpt);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|msg| Error::Parse {
        path: path.into(),
        line: 0,
        msg,
    })
}

fn encode(c: &Checkpoint) -> Vec<u8> {
    let cfg = c.network.config();
    let theta = c.network.theta();
    let mut out = Vec::with_capacity(96 + 8 * theta.len());
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        cfg.dim as u32,
        cfg.depth as u32,
        cfg.width as u32,
        cfg.skip_at as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let (act, beta) = match cfg.activation {
        Activation::Relu => (0u32, 0.0),
        Activation::Softplus { beta } => (1u32, beta),
    };
    out.extend_from_slice(&act.to_le_bytes());
    out.extend_from_slice(&beta.to_le_bytes());
    out.extend_from_slice(&(cfg.fourier_k as u32).to_le_bytes());
    out.extend_from_slice(&cfg.fourier_offset.to_le_bytes());
    out.extend_from_slice(&c.epsilon.to_le_bytes());
    out.extend_from_slice(&c.iteration.to_le_bytes());
    for v in c.domain.lower.iter().chain(&c.domain.upper) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for v in theta {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| format!("truncated checkpoint at byte {}", self.pos))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode(buf: &[u8]) -> Result<Checkpoint, String> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a phase checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let dim = r.u32()? as usize;
    let depth = r.u32()? as usize;
    let width = r.u32()? as usize;
    let skip_at = r.u32()? as usize;
    let act = r.u32()?;
    let beta = r.f64()?;
    let activation = match act {
        0 => Activation::Relu,
        1 => Activation::Softplus { beta },
        other => return Err(format!("unknown activation code {other}")),
    };
    let fourier_k = r.u32()? as usize;
    let fourier_offset = r.u32()?;
    let epsilon = r.f64()?;
    let iteration = r.u64()?;
    if !(1..=3).contains(&dim) {
        return Err(format!("bad dimension {dim}"));
    }
    let lower = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let upper = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let n = r.u64()? as usize;
    if buf.len() - r.pos != 8 * n {
        return Err(format!(
            "parameter block holds {} bytes, header declares {} values",
            buf.len() - r.pos,
            n
        ));
    }
    let theta = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let config = MlpConfig {
        dim,
        depth,
        width,
        skip_at,
        activation,
        fourier_k,
        fourier_offset,
    };
    let network = Network::new(config, ParamVector { theta }).map_err(|e| e.to_string())?;
    let domain = Domain::new(lower, upper).map_err(|e| e.to_string())?;
    Ok(Checkpoint {
        network,
        epsilon,
        iteration,
        domain,
    })
}

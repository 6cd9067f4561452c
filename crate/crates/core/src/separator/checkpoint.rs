//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "MIXSEPCK"
//! version    u32      1
//! config     u32 num_filters, kernel_len, stride, hidden_dim,
//!                num_hidden_layers, num_outputs
//!            u8  mixture_consistency (0/1)
//!            u8  mask_activation (0 sigmoid, 1 relu)
//!            u8  has_seed (0/1), u64 seed
//! count      u64      number of f64 values that follow
//! values     f64 × count: encoder, (weight, bias) per masker layer, decoder
//! ```

use std::fs;
use std::path::Path;

use super::params::{MaskActivation, SeparatorConfig, SeparatorParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MIXSEPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &SeparatorParams, config: &SeparatorConfig) -> Result<Vec<u8>> {
    if !params.matches_config(config) {
        return Err(Error::Checkpoint(
            "parameter shapes do not match config".into(),
        ));
    }
    let mut buf = Vec::with_capacity(64 + 8 * params.num_values());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [
        config.num_filters,
        config.kernel_len,
        config.stride,
        config.hidden_dim,
        config.num_hidden_layers,
        config.num_outputs,
    ] {
        let v = u32::try_from(v)
            .map_err(|_| Error::Checkpoint(format!("dimension {v} does not fit in u32")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.push(u8::from(config.mixture_consistency));
    buf.push(match config.mask_activation {
        MaskActivation::Sigmoid => 0,
        MaskActivation::Relu => 1,
    });
    buf.push(u8::from(config.seed.is_some()));
    buf.extend_from_slice(&config.seed_or_zero().to_le_bytes());
    buf.extend_from_slice(&(params.num_values() as u64).to_le_bytes());
    for t in params.tensors() {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Checkpoint(format!("truncated checkpoint at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(SeparatorParams, SeparatorConfig)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = cur.u32()? as usize;
    }
    let flag = |v: u8, what: &str| match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::Checkpoint(format!("invalid {what} flag {v}"))),
    };
    let mixture_consistency = flag(cur.u8()?, "mixture_consistency")?;
    let mask_activation = match cur.u8()? {
        0 => MaskActivation::Sigmoid,
        1 => MaskActivation::Relu,
        v => return Err(Error::Checkpoint(format!("invalid mask activation {v}"))),
    };
    let has_seed = flag(cur.u8()?, "seed")?;
    let seed = cur.u64()?;
    let config = SeparatorConfig {
        num_filters: dims[0],
        kernel_len: dims[1],
        stride: dims[2],
        hidden_dim: dims[3],
        num_hidden_layers: dims[4],
        num_outputs: dims[5],
        mixture_consistency,
        mask_activation,
        seed: has_seed.then_some(seed),
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("embedded config invalid: {e}")))?;
    let mut params = SeparatorParams::zeros(&config);
    let count = cur.u64()?;
    if count != params.num_values() as u64 {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {count} values, config implies {}",
            params.num_values()
        )));
    }
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = cur.f64()?;
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after parameters",
            bytes.len() - cur.pos
        )));
    }
    Ok((params, config))
}

pub fn save_checkpoint(
    params: &SeparatorParams,
    config: &SeparatorConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params, config)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(SeparatorParams, SeparatorConfig)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

//! Checkpoint layout (all integers `u32` little-endian):
//!
//! ```text
//! "AGN1"
//! config_len, config text (key=value lines, UTF-8)
//! kernel_count
//! per kernel: out, in, k, dilation, out*in*k weights (f64 LE), out biases (f64 LE)
//! ```

use std::path::Path;

use super::{AgnetConfig, ModelState};
use crate::error::{Error, FormatFault, Result};
use crate::io_util::{read_bytes, write_atomic, Reader};
use crate::tensor::ConvKernel;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AGN1";

pub fn encode_checkpoint(state: &ModelState) -> Vec<u8> {
    let text = state.config().to_text();
    let mut out = Vec::with_capacity(16 + text.len() + 8 * state.parameter_count());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(state.kernels().len() as u32).to_le_bytes());
    for k in state.kernels() {
        for dim in [k.out_channels(), k.in_channels(), k.kernel_size(), k.dilation()] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in k.weights.iter().chain(&k.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelState> {
    let fault = |fault: FormatFault| Error::Format {
        path: path.to_path_buf(),
        fault,
    };
    let truncated = |r: &Reader, need: usize| {
        fault(FormatFault::Truncated {
            expected: need as u64,
            found: r.remaining() as u64,
        })
    };
    let mut r = Reader::new(bytes);
    let magic = r.take(4).ok_or_else(|| truncated(&r, 4))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(fault(FormatFault::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic.try_into().unwrap(),
        }));
    }
    let text_len = r.u32().ok_or_else(|| truncated(&r, 4))? as usize;
    let text = r.take(text_len).ok_or_else(|| truncated(&r, text_len))?;
    let text = std::str::from_utf8(text).map_err(|e| fault(FormatFault::Header(e.to_string())))?;
    let config = AgnetConfig::from_text(text).map_err(|e| fault(FormatFault::Header(e.to_string())))?;

    let count = r.u32().ok_or_else(|| truncated(&r, 4))? as usize;
    let mut kernels = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32().ok_or_else(|| truncated(&r, 4))? as usize;
        }
        let [o, c, k, dil] = dims;
        let n_w = o
            .checked_mul(c)
            .and_then(|v| v.checked_mul(k))
            .ok_or(fault(FormatFault::Overflow(o as u64, (c * k) as u64)))?;
        let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
            let need = n.checked_mul(8).ok_or(fault(FormatFault::Overflow(n as u64, 8)))?;
            let raw = r.take(need).ok_or_else(|| truncated(&r, need))?;
            Ok(raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect())
        };
        let weights = read_f64s(n_w)?;
        let bias = read_f64s(o)?;
        kernels.push(
            ConvKernel::new(o, c, k, dil, weights, bias)
                .map_err(|e| fault(FormatFault::Header(e.to_string())))?,
        );
    }
    if r.remaining() != 0 {
        return Err(fault(FormatFault::Trailing(r.remaining() as u64)));
    }
    ModelState::from_parts(config, kernels).map_err(|e| fault(FormatFault::Header(e.to_string())))
}

pub fn write_checkpoint(path: &Path, state: &ModelState) -> Result<()> {
    write_atomic(path, &encode_checkpoint(state))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelState> {
    decode_checkpoint(&read_bytes(path)?, path)
}

//! Feature file layout (integers `u32` little-endian):
//!
//! ```text
//! "TSF1" version T C segment_len
//! T*C f32 little-endian values, time-major
//! ```

use std::path::Path;

use crate::error::{Error, FormatFault, Result};
use crate::io_util::{read_bytes, write_atomic, Reader};
use crate::tensor::TimeMatrix;

pub const FEATURE_MAGIC: [u8; 4] = *b"TSF1";
const VERSION: u32 = 1;

/// Per-segment features of one video, stored at file precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video: String,
    steps: usize,
    channels: usize,
    pub segment_len: usize,
    values: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(video: impl Into<String>, steps: usize, channels: usize, segment_len: usize, values: Vec<f32>) -> Result<Self> {
        if steps == 0 || channels == 0 || segment_len == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature sequence needs T, C, segment_len >= 1, got {steps}, {channels}, {segment_len}"
            )));
        }
        if values.len() != steps * channels {
            return Err(Error::shape(
                "FeatureSequence::new",
                format!("{} values for {steps}x{channels}", values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature at index {i}")));
        }
        Ok(Self {
            video: video.into(),
            steps,
            channels,
            segment_len,
            values,
        })
    }

    /// Rounds each entry to `f32`.
    pub fn from_matrix(video: impl Into<String>, m: &TimeMatrix, segment_len: usize) -> Result<Self> {
        let values = m.as_slice().iter().map(|&v| v as f32).collect();
        Self::new(video, m.steps(), m.channels(), segment_len, values)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_matrix(&self) -> TimeMatrix {
        TimeMatrix::new(self.steps, self.channels, self.values.iter().map(|&v| v as f64).collect())
            .expect("dimensions checked at construction")
    }
}

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * seq.values.len());
    out.extend_from_slice(&FEATURE_MAGIC);
    for v in [VERSION, seq.steps as u32, seq.channels as u32, seq.segment_len as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &seq.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// The video id is not stored in the file; callers supply it.
pub fn decode_features(bytes: &[u8], video: &str, path: &Path) -> Result<FeatureSequence> {
    let fault = |fault: FormatFault| Error::Format {
        path: path.to_path_buf(),
        fault,
    };
    let mut r = Reader::new(bytes);
    let truncated = |r: &Reader, need: u64| {
        fault(FormatFault::Truncated {
            expected: need,
            found: r.remaining() as u64,
        })
    };
    let magic = r.take(4).ok_or_else(|| truncated(&r, 4))?;
    if magic != FEATURE_MAGIC {
        return Err(fault(FormatFault::BadMagic {
            expected: FEATURE_MAGIC,
            found: magic.try_into().unwrap(),
        }));
    }
    let mut header = [0u32; 4];
    for h in &mut header {
        *h = r.u32().ok_or_else(|| truncated(&r, 4))?;
    }
    let [version, t, c, seg] = header;
    if version != VERSION {
        return Err(fault(FormatFault::Version(version)));
    }
    if t == 0 || c == 0 || seg == 0 {
        return Err(fault(FormatFault::Empty));
    }
    let count = (t as usize)
        .checked_mul(c as usize)
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or(fault(FormatFault::Overflow(t as u64, c as u64)))?;
    let need = count * 4;
    let raw = r.take(need).ok_or_else(|| truncated(&r, need as u64))?;
    if r.remaining() != 0 {
        return Err(fault(FormatFault::Trailing(r.remaining() as u64)));
    }
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(fault(FormatFault::NonFinite(i)));
    }
    FeatureSequence::new(video, t as usize, c as usize, seg as usize, values)
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    write_atomic(path, &encode_features(seq))
}

/// Reads a feature file; the video id is the file stem.
pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let video = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    decode_features(&read_bytes(path)?, video, path)
}

//! Binary feature files.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                    |
//! |--------|------|--------------------------|
//! | 0      | 4    | magic `b"LSEG"`          |
//! | 4      | 4    | `u32` version (1)        |
//! | 8      | 4    | `u32` snippet count `T`  |
//! | 12     | 4    | `u32` feature dim `F`    |
//! | 16     | 8    | `u64` reserved, zero     |
//! | 24     | 8·T·F| `f64` row-major payload  |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FEATURE_MAGIC: [u8; 4] = *b"LSEG";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_HEADER_LEN: usize = 24;

/// Per-snippet features of one video, `T × F`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    data: Matrix,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, data: Matrix) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::Malformed {
                what: "feature sequence",
                reason: format!("needs T >= 1 and F >= 1, got {}x{}", data.rows(), data.cols()),
            });
        }
        if !data.is_finite() {
            return Err(Error::NonFinite {
                context: "feature sequence".into(),
            });
        }
        Ok(FeatureSequence {
            video_id: video_id.into(),
            data,
        })
    }

    /// Number of snippets `T`.
    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    /// Feature dimension `F`.
    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn snippet(&self, t: usize) -> &[f64] {
        self.data.row(t)
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    /// Rows `[start, end)` as a new sequence with the same id.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let f = self.dim();
        let rows = self.data.as_slice()[start * f..end * f].to_vec();
        FeatureSequence::new(self.video_id.clone(), Matrix::from_vec(end - start, f, rows)?)
    }
}

pub fn encode_features(data: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 8 * data.len());
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(data.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(data.cols() as u32).to_le_bytes());
    out.extend_from_slice(&0u64.to_le_bytes());
    for v in data.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"))
}

pub fn decode_features(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(Error::Truncated {
            what: "feature header",
            needed: FEATURE_HEADER_LEN,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            what: "feature file",
            expected: FEATURE_MAGIC,
            found: magic,
        });
    }
    let version = u32_at(bytes, 4);
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "feature file",
            expected: FEATURE_VERSION,
            found: version,
        });
    }
    let (t, f) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize);
    let reserved = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    if reserved != 0 {
        return Err(Error::Malformed {
            what: "feature file",
            reason: format!("reserved field is {reserved}, expected 0"),
        });
    }
    let needed = FEATURE_HEADER_LEN + 8 * t * f;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            what: "feature payload",
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::Malformed {
            what: "feature file",
            reason: format!("{} trailing bytes", bytes.len() - needed),
        });
    }
    let data = bytes[FEATURE_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_vec(t, f, data)
}

pub fn write_features(path: impl AsRef<Path>, seq: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_features(seq.data())).map_err(|e| Error::io(path, e))
}

/// Reads a feature file; the video id is the file stem.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let data = decode_features(&bytes)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    FeatureSequence::new(id, data)
}

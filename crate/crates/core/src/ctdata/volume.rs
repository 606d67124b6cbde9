//! The HQIV volume file and its JSON sidecar.
//!
//! Layout, all little-endian: `b"HQIV"`, `u16` version, `u16` dtype
//! (0 = f32), `u32` slices, `u32` height, `u32` width, then the samples
//! slice-major and row-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CtError, Result};

pub const MAGIC: [u8; 4] = *b"HQIV";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u16 = 0;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub n_slices: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Volume {
    pub fn new(n_slices: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let expected = checked_len(n_slices, height, width)?;
        if data.len() != expected {
            return Err(CtError::InvalidArgument(format!(
                "volume data has {} samples, expected {expected}",
                data.len()
            )));
        }
        Ok(Self {
            n_slices,
            height,
            width,
            data,
        })
    }

    /// Stacks equally sized slices.
    pub fn from_slices(height: usize, width: usize, slices: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(slices.len() * height * width);
        for s in slices {
            if s.len() != height * width {
                return Err(CtError::InvalidArgument(format!(
                    "slice has {} samples, expected {height}x{width}",
                    s.len()
                )));
            }
            data.extend(s.iter().map(|&v| v as f32));
        }
        Self::new(slices.len(), height, width, data)
    }

    pub fn slice(&self, i: usize) -> &[f32] {
        let p = self.height * self.width;
        &self.data[i * p..(i + 1) * p]
    }

    pub fn slice_f64(&self, i: usize) -> Vec<f64> {
        self.slice(i).iter().map(|&v| v as f64).collect()
    }

    pub fn same_geometry(&self, other: &Volume) -> bool {
        (self.n_slices, self.height, self.width) == (other.n_slices, other.height, other.width)
    }
}

fn checked_len(n: usize, h: usize, w: usize) -> Result<usize> {
    n.checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .filter(|&v| v.checked_mul(4).is_some())
        .ok_or(CtError::DimensionOverflow { n, h, w })
}

pub fn encode_volume(v: &Volume) -> Result<Vec<u8>> {
    let dim = |d: usize| {
        u32::try_from(d).map_err(|_| CtError::DimensionOverflow {
            n: v.n_slices,
            h: v.height,
            w: v.width,
        })
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * v.data.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for d in [v.n_slices, v.height, v.width] {
        out.extend_from_slice(&dim(d)?.to_le_bytes());
    }
    for x in &v.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_LEN {
        return Err(CtError::Truncated {
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(CtError::BadMagic(magic));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let version = u16_at(4);
    if version != VERSION {
        return Err(CtError::UnsupportedVersion(version));
    }
    let dtype = u16_at(6);
    if dtype != DTYPE_F32 {
        return Err(CtError::UnsupportedDtype(dtype));
    }
    let (n, h, w) = (u32_at(8), u32_at(12), u32_at(16));
    let count = checked_len(n, h, w)?;
    let expected = HEADER_LEN + 4 * count;
    let payload = &bytes[HEADER_LEN..];
    if bytes.len() < expected {
        return Err(CtError::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(CtError::TrailingData {
            expected,
            got: bytes.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::new(n, h, w, data)
}

pub fn write_volume(path: &Path, v: &Volume) -> Result<()> {
    fs::write(path, encode_volume(v)?).map_err(|e| CtError::io(path, e))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).map_err(|e| CtError::io(path, e))?;
    decode_volume(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dose {
    Low,
    Full,
}

/// How intensities were mapped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub method: String,
    /// Every sample was divided by this, then clamped.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeManifest {
    pub patient_id: String,
    pub dose: Dose,
    pub i0: f64,
    pub n_views: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
}

/// The sidecar path: same basename, `.json` extension.
pub fn manifest_path(volume_path: &Path) -> PathBuf {
    volume_path.with_extension("json")
}

pub fn write_manifest(volume_path: &Path, m: &VolumeManifest) -> Result<()> {
    let path = manifest_path(volume_path);
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| CtError::io(&path, e))
}

pub fn read_manifest(volume_path: &Path) -> Result<VolumeManifest> {
    let path = manifest_path(volume_path);
    let text = fs::read_to_string(&path).map_err(|e| CtError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CtError::Manifest {
        path: path.clone(),
        msg: e.to_string(),
    })
}

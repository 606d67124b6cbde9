//! Synthetic CT data: phantoms, parallel-beam projection, photon noise,
//! filtered backprojection, triplet assembly and the HQIV volume format.

mod dose;
mod phantom;
mod radon;
mod simulate;
mod triplet;
mod volume;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::tensor::TensorError;

pub use dose::{apply_low_dose, MAX_OPTICAL_DEPTH};
pub use phantom::{generate_phantom_volume, Ellipse, Phantom};
pub use radon::{fbp, radon, Sinogram};
pub use simulate::{derive_seed, simulate_pair, SimulatedPair, SimulationConfig};
pub use triplet::{build_triplets, slice_tensor, SliceTriplet};
pub use volume::{
    decode_volume, encode_volume, manifest_path, read_manifest, read_volume, write_manifest, write_volume, Dose,
    Normalization, Volume, VolumeManifest, DTYPE_F32, HEADER_LEN, MAGIC, VERSION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtError {
    #[error("not an HQIV file: magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported HQIV version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported HQIV dtype code {0}")]
    UnsupportedDtype(u16),
    #[error("truncated volume: {got} bytes, expected {expected}")]
    Truncated { expected: usize, got: usize },
    #[error("volume has {got} bytes, header describes {expected}")]
    TrailingData { expected: usize, got: usize },
    #[error("volume dimensions {n}x{h}x{w} overflow")]
    DimensionOverflow { n: usize, h: usize, w: usize },
    #[error("volumes differ in geometry: {0}")]
    GeometryMismatch(String),
    #[error("need at least 3 slices, got {0}")]
    TooFewSlices(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
    #[error("bad manifest {}: {msg}", path.display())]
    Manifest { path: PathBuf, msg: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl CtError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CtError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
    }
}

pub type Result<T, E = CtError> = std::result::Result<T, E>;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::evaluate::{load_model, predict};
use super::pgm::encode_pgm;
use super::{io_error, Result, TrainError};
use crate::ctdata::{manifest_path, read_volume, write_volume, CtError, Volume};
use crate::tensor::{Shape, Tensor};

/// Sidecar of a reconstructed volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionManifest {
    pub source: PathBuf,
    pub checkpoint: PathBuf,
    pub n_slices: usize,
    /// Slices predicted by the network.
    pub reconstructed: Vec<usize>,
    /// Slices copied unchanged from the input: the network needs both
    /// neighbours, which the first and last slice lack.
    pub copied_from_input: Vec<usize>,
    /// Display window of the PGM images, mapped to 0..=255.
    pub pgm_window: [f64; 2],
}

/// Runs the network over every interior slice of `input`. Writes
/// `<stem>_recon.hqiv` with its manifest and `slices/slice_<i>.pgm`.
pub fn cmd_reconstruct(checkpoint: &Path, input: &Path, out_dir: &Path) -> Result<Volume> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let vol = read_volume(input)?;
    if vol.n_slices < 3 {
        return Err(CtError::TooFewSlices(vol.n_slices).into());
    }
    let (net, mut store) = load_model(&ckpt)?;
    let (n, h, w) = (vol.n_slices, vol.height, vol.width);
    let plane = h * w;
    let mut data = vol.data.clone();
    for i in 1..n - 1 {
        let x: Vec<f64> = vol.data[(i - 1) * plane..(i + 2) * plane]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let x = Tensor::new(Shape::new(1, 3, h, w), x)?;
        let y = predict(&net, &mut store, &x)?;
        for (d, v) in data[i * plane..(i + 1) * plane].iter_mut().zip(y.data()) {
            *d = *v as f32;
        }
    }
    let out = Volume::new(n, h, w, data)?;

    let slices_dir = out_dir.join("slices");
    fs::create_dir_all(&slices_dir).map_err(|e| io_error(&slices_dir, e))?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| TrainError::Data(format!("bad input file name {}", input.display())))?;
    let out_path = out_dir.join(format!("{stem}_recon.hqiv"));
    write_volume(&out_path, &out)?;
    let manifest = ReconstructionManifest {
        source: input.to_path_buf(),
        checkpoint: checkpoint.to_path_buf(),
        n_slices: n,
        reconstructed: (1..n - 1).collect(),
        copied_from_input: vec![0, n - 1],
        pgm_window: [0.0, 1.0],
    };
    let mpath = manifest_path(&out_path);
    fs::write(
        &mpath,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )
    .map_err(|e| io_error(&mpath, e))?;
    for i in 0..n {
        let path = slices_dir.join(format!("slice_{i:03}.pgm"));
        fs::write(&path, encode_pgm(w, h, &out.slice_f64(i))).map_err(|e| io_error(&path, e))?;
    }
    Ok(out)
}

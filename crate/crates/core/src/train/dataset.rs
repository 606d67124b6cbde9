//! On-disk dataset: `dataset.json` and one low/full HQIV pair per patient
//! under `train/` and `test/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_error, Result, RunConfig, TrainError};
use crate::ctdata::{
    derive_seed, read_volume, simulate_pair, write_manifest, write_volume, Dose, SimulationConfig, Volume,
    VolumeManifest,
};

pub const DATASET_INDEX: &str = "dataset.json";
const VOLUME_STREAM: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub seed: u64,
    pub simulation: SimulationConfig,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Patient {
    pub id: String,
    pub low: Volume,
    pub full: Volume,
}

fn volume_path(dir: &Path, split: &str, id: &str, dose: Dose) -> PathBuf {
    let suffix = match dose {
        Dose::Low => "low",
        Dose::Full => "full",
    };
    dir.join(split).join(format!("{id}_{suffix}.hqiv"))
}

/// Refuses a non-empty existing directory unless `force` is set.
pub fn ensure_fresh_dir(dir: &Path, force: bool) -> Result<()> {
    let nonempty = fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if nonempty && !force {
        return Err(TrainError::OutputExists(dir.to_path_buf()));
    }
    Ok(())
}

/// Simulates the train and test volumes into `cfg.data.dir`.
pub fn cmd_generate(cfg: &RunConfig, force: bool) -> Result<DatasetIndex> {
    cfg.validate()?;
    let dir = &cfg.data.dir;
    ensure_fresh_dir(dir, force)?;
    let sim = &cfg.data.synthetic;
    let mut index = DatasetIndex {
        seed: cfg.seed,
        simulation: sim.clone(),
        train: Vec::new(),
        test: Vec::new(),
    };
    let splits = [("train", cfg.data.train_volumes), ("test", cfg.data.test_volumes)];
    let mut volume_no = 0u32;
    for (split, count) in splits {
        fs::create_dir_all(dir.join(split)).map_err(|e| io_error(dir, e))?;
        for k in 0..count {
            let id = format!("{split}{k:03}");
            let seed = derive_seed(cfg.seed, VOLUME_STREAM, volume_no);
            volume_no += 1;
            let pair = simulate_pair(sim, seed)?;
            for (dose, vol, i0) in [
                (Dose::Low, &pair.low, sim.i0_low),
                (Dose::Full, &pair.full, sim.i0_full),
            ] {
                let path = volume_path(dir, split, &id, dose);
                write_volume(&path, vol)?;
                write_manifest(
                    &path,
                    &VolumeManifest {
                        patient_id: id.clone(),
                        dose,
                        i0,
                        n_views: sim.n_views,
                        seed,
                        normalization: Some(pair.normalization.clone()),
                    },
                )?;
            }
            if split == "train" {
                index.train.push(id);
            } else {
                index.test.push(id);
            }
        }
    }
    let path = dir.join(DATASET_INDEX);
    fs::write(
        &path,
        serde_json::to_string_pretty(&index).expect("index serializes") + "\n",
    )
    .map_err(|e| io_error(&path, e))?;
    Ok(index)
}

pub fn load_index(dir: &Path) -> Result<DatasetIndex> {
    let path = dir.join(DATASET_INDEX);
    let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    serde_json::from_str(&text).map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))
}

/// Reads the low/full pairs of one split.
pub fn load_split(dir: &Path, split: &str, ids: &[String]) -> Result<Vec<Patient>> {
    ids.iter()
        .map(|id| {
            let low = read_volume(&volume_path(dir, split, id, Dose::Low))?;
            let full = read_volume(&volume_path(dir, split, id, Dose::Full))?;
            if !low.same_geometry(&full) {
                return Err(TrainError::Data(format!(
                    "patient {id}: low and full volumes differ in geometry"
                )));
            }
            Ok(Patient {
                id: id.clone(),
                low,
                full,
            })
        })
        .collect()
}

/// The index and both splits.
pub fn load_dataset(dir: &Path) -> Result<(DatasetIndex, Vec<Patient>, Vec<Patient>)> {
    let index = load_index(dir)?;
    let train = load_split(dir, "train", &index.train)?;
    let test = load_split(dir, "test", &index.test)?;
    Ok((index, train, test))
}

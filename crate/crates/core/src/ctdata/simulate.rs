//! Paired low-dose and full-dose volumes from one phantom volume.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_low_dose, fbp, generate_phantom_volume, radon, CtError, Normalization, Phantom, Result, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub size: usize,
    pub n_views: usize,
    pub n_detectors: usize,
    pub i0_low: f64,
    pub i0_full: f64,
    /// Inclusive range of slices per volume.
    pub slices: [usize; 2],
    /// Inclusive range of ellipsoids per volume, body included.
    pub ellipses: [usize; 2],
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            size: 128,
            n_views: 180,
            n_detectors: 185,
            i0_low: 1e4,
            i0_full: 1e6,
            slices: [8, 12],
            ellipses: [6, 12],
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CtError::InvalidArgument(m));
        if self.size < 32 {
            return bad(format!("size must be at least 32, got {}", self.size));
        }
        if self.n_views == 0 || self.n_detectors == 0 {
            return bad("n_views and n_detectors must be positive".into());
        }
        for i0 in [self.i0_low, self.i0_full] {
            if !(i0 > 0.0 && i0.is_finite()) {
                return bad(format!("i0 must be positive and finite, got {i0}"));
            }
        }
        if self.slices[0] < 3 || self.slices[0] > self.slices[1] {
            return bad(format!("slice range {:?} must start at 3 or more", self.slices));
        }
        if self.ellipses[0] > self.ellipses[1] {
            return bad(format!("empty ellipse range {:?}", self.ellipses));
        }
        Ok(())
    }
}

/// Independent seed for stream `tag`, item `index`, of a master seed.
pub fn derive_seed(seed: u64, tag: u32, index: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 32) | index as u64);
    rng.next_u64()
}

const PHANTOM_STREAM: u32 = 0;
const LOW_STREAM: u32 = 1;
const FULL_STREAM: u32 = 2;

#[derive(Debug, Clone)]
pub struct SimulatedPair {
    pub phantoms: Vec<Phantom>,
    pub low: Volume,
    pub full: Volume,
    pub normalization: Normalization,
}

/// Phantom volume, noisy sinograms at both doses, FBP, joint normalization.
///
/// Both volumes are divided by the full-dose volume maximum and clamped to
/// `[0, 1]`, so equal intensities mean the same thing in input and target.
pub fn simulate_pair(cfg: &SimulationConfig, seed: u64) -> Result<SimulatedPair> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, PHANTOM_STREAM, 0));
    let n_slices = rng.random_range(cfg.slices[0]..=cfg.slices[1]);
    let phantoms = generate_phantom_volume(rng.next_u64(), n_slices, cfg.size, cfg.ellipses[0]..=cfg.ellipses[1])?;
    let mut low = Vec::with_capacity(n_slices);
    let mut full = Vec::with_capacity(n_slices);
    for (i, p) in phantoms.iter().enumerate() {
        let sino = radon(&p.image, cfg.size, cfg.n_views, cfg.n_detectors)?;
        let i = i as u32;
        low.push(fbp(
            &apply_low_dose(&sino, cfg.i0_low, derive_seed(seed, LOW_STREAM, i))?,
            cfg.size,
        ));
        full.push(fbp(
            &apply_low_dose(&sino, cfg.i0_full, derive_seed(seed, FULL_STREAM, i))?,
            cfg.size,
        ));
    }
    let peak = full.iter().flatten().copied().fold(0.0, f64::max);
    let scale = if peak > 0.0 { peak } else { 1.0 };
    let norm = |v: &mut Vec<Vec<f64>>| {
        for px in v.iter_mut().flatten() {
            *px = (*px / scale).clamp(0.0, 1.0);
        }
    };
    norm(&mut low);
    norm(&mut full);
    Ok(SimulatedPair {
        phantoms,
        low: Volume::from_slices(cfg.size, cfg.size, &low)?,
        full: Volume::from_slices(cfg.size, cfg.size, &full)?,
        normalization: Normalization {
            method: "full_dose_max".into(),
            scale,
        },
    })
}

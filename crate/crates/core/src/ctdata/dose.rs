use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{CtError, Result, Sinogram};

/// Optical depth of the most attenuating ray.
pub const MAX_OPTICAL_DEPTH: f64 = 4.0;

/// Poisson photon-count noise at `i0` photons per bin.
///
/// The attenuation scale maps the largest line integral to
/// [`MAX_OPTICAL_DEPTH`]; counts are clamped to at least one photon.
pub fn apply_low_dose(sino: &Sinogram, i0: f64, seed: u64) -> Result<Sinogram> {
    if !(i0 > 0.0 && i0.is_finite()) {
        return Err(CtError::InvalidArgument(format!(
            "i0 must be positive and finite, got {i0}"
        )));
    }
    let peak = sino.data.iter().copied().fold(0.0, f64::max);
    let mu = if peak > 0.0 { MAX_OPTICAL_DEPTH / peak } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = sino
        .data
        .iter()
        .map(|&p| {
            let expected = i0 * (-mu * p).exp();
            let counts: f64 = Poisson::new(expected)
                .map_err(|e| CtError::InvalidArgument(format!("photon count {expected}: {e}")))?
                .sample(&mut rng);
            Ok(-(counts.max(1.0) / i0).ln() / mu)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sinogram {
        data,
        i0,
        ..sino.clone()
    })
}

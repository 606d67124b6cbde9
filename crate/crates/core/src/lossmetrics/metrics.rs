use serde::{Deserialize, Serialize};

use super::{MetricError, Result};

fn check_len(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(MetricError::ShapeMismatch {
            got: pred.len(),
            expected: reference.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricError::EmptySet);
    }
    Ok(())
}

fn mse(pred: &[f64], reference: &[f64]) -> f64 {
    pred.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64
}

/// Mean absolute error.
pub fn l1_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(pred, reference)?;
    Ok(pred.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

/// `‖pred − ref‖² / ‖ref‖²`.
pub fn nmse(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(pred, reference)?;
    let norm: f64 = reference.iter().map(|v| v * v).sum();
    if norm == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let err: f64 = pred.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(err / norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrMode {
    /// `10·log10(MAX² / MSE)`.
    #[default]
    Standard,
    /// `10·log10(MAX² / sqrt(MSE))`, the square-rooted denominator variant.
    RootMse,
}

/// Peak signal-to-noise ratio in dB, peak = max of the reference.
///
/// Identical images give `f64::INFINITY`.
pub fn psnr(pred: &[f64], reference: &[f64], mode: PsnrMode) -> Result<f64> {
    check_len(pred, reference)?;
    let err = mse(pred, reference);
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom = match mode {
        PsnrMode::Standard => err,
        PsnrMode::RootMse => err.sqrt(),
    };
    Ok(10.0 * (peak * peak / denom).log10())
}

fn bin_of(v: f64, bins: usize, range: f64) -> usize {
    let b = (v / range * bins as f64).floor();
    if b.is_nan() || b < 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

/// Histogram mutual information in nats.
///
/// Intensities are binned into `bins` equal-width bins on `[0, data_range]`;
/// values outside fall into the end bins.
pub fn mutual_information(pred: &[f64], reference: &[f64], bins: usize, data_range: f64) -> Result<f64> {
    check_len(pred, reference)?;
    if bins < 2 {
        return Err(MetricError::InvalidParams(format!("need at least 2 bins, got {bins}")));
    }
    if !(data_range > 0.0) {
        return Err(MetricError::InvalidParams(format!(
            "data range must be positive, got {data_range}"
        )));
    }
    let mut joint = vec![0u64; bins * bins];
    let mut pa = vec![0u64; bins];
    let mut pb = vec![0u64; bins];
    for (&a, &b) in pred.iter().zip(reference) {
        let (i, j) = (bin_of(a, bins, data_range), bin_of(b, bins, data_range));
        joint[i * bins + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    let n = pred.len() as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c == 0 {
                continue;
            }
            let pij = c as f64 / n;
            let pi = pa[i] as f64 / n;
            let pj = pb[j] as f64 / n;
            mi += pij * (pij / (pi * pj)).ln();
        }
    }
    Ok(mi.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images() {
        let a = [0.1, 0.5, 0.9, 0.3];
        assert_eq!(l1_error(&a, &a).unwrap(), 0.0);
        assert_eq!(nmse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a, PsnrMode::Standard).unwrap(), f64::INFINITY);
    }

    #[test]
    fn doubled_prediction_has_unit_nmse() {
        let r = [0.2, -0.4, 1.5, 3.0];
        let p: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        assert!((nmse(&p, &r).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_reference_is_an_error() {
        assert_eq!(nmse(&[1.0, 2.0], &[0.0, 0.0]), Err(MetricError::ZeroReference));
    }

    #[test]
    fn constant_offset_psnr() {
        let r = [1.0, 0.0, 0.5, 0.25];
        let p: Vec<f64> = r.iter().map(|v| v + 0.1).collect();
        let db = psnr(&p, &r, PsnrMode::Standard).unwrap();
        assert!((db - 20.0).abs() < 1e-12, "{db}");
        // sqrt(0.01) = 0.1 in the literal variant
        let lit = psnr(&p, &r, PsnrMode::RootMse).unwrap();
        assert!((lit - 10.0).abs() < 1e-12, "{lit}");
    }

    #[test]
    fn self_information_is_entropy() {
        let a: Vec<f64> = (0..64).map(|i| (i % 4) as f64 * 0.25 + 0.01).collect();
        let mi = mutual_information(&a, &a, 4, 1.0).unwrap();
        assert!((mi - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn too_few_bins_rejected() {
        assert!(mutual_information(&[0.5], &[0.5], 1, 1.0).is_err());
    }

    #[test]
    fn out_of_range_values_clamp_to_end_bins() {
        assert_eq!(bin_of(-3.0, 8, 1.0), 0);
        assert_eq!(bin_of(1.0, 8, 1.0), 7);
        assert_eq!(bin_of(7.0, 8, 1.0), 7);
        assert_eq!(bin_of(f64::NAN, 8, 1.0), 0);
    }
}

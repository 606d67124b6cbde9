//! Parallel-beam projection and filtered backprojection.
//!
//! Distances are in pixels: detector bins are one pixel apart and rays are
//! sampled once per pixel length, so line integrals carry pixel units.

use std::f64::consts::PI;

use super::{CtError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_views: usize,
    pub n_detectors: usize,
    /// `n_views × n_detectors`, row-major.
    pub data: Vec<f64>,
    /// Uniform over `[0, π)`.
    pub view_angles: Vec<f64>,
    pub detector_spacing: f64,
    /// Photons per detector bin; infinite for noise-free data.
    pub i0: f64,
}

impl Sinogram {
    pub fn view(&self, v: usize) -> &[f64] {
        &self.data[v * self.n_detectors..(v + 1) * self.n_detectors]
    }
}

fn view_angles(n_views: usize) -> Vec<f64> {
    (0..n_views).map(|v| PI * v as f64 / n_views as f64).collect()
}

/// Bilinear sample of a square image at pixel coordinates, zero outside.
fn sample(image: &[f64], n: usize, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (tx, ty) = (x - fx, y - fy);
    let (x0, y0) = (fx as isize, fy as isize);
    let at = |xi: isize, yi: isize| {
        if xi < 0 || yi < 0 || xi >= n as isize || yi >= n as isize {
            0.0
        } else {
            image[yi as usize * n + xi as usize]
        }
    };
    (1.0 - ty) * ((1.0 - tx) * at(x0, y0) + tx * at(x0 + 1, y0))
        + ty * ((1.0 - tx) * at(x0, y0 + 1) + tx * at(x0 + 1, y0 + 1))
}

/// Line integrals of a square row-major image.
///
/// The ray at angle `θ` and detector offset `t` passes through
/// `t·(cos θ, sin θ)` relative to the image centre, heading `(-sin θ, cos θ)`.
pub fn radon(image: &[f64], size: usize, n_views: usize, n_detectors: usize) -> Result<Sinogram> {
    if image.len() != size * size {
        return Err(CtError::InvalidArgument(format!(
            "image has {} pixels, expected {size}x{size}",
            image.len()
        )));
    }
    if n_views == 0 || n_detectors == 0 {
        return Err(CtError::InvalidArgument(
            "need at least one view and one detector".into(),
        ));
    }
    let centre = (size as f64 - 1.0) / 2.0;
    let det_centre = (n_detectors as f64 - 1.0) / 2.0;
    // Rays are sampled over the full image diagonal.
    let n_samples = (size as f64 * 2f64.sqrt()).ceil() as usize + 1;
    let s_centre = (n_samples as f64 - 1.0) / 2.0;
    let angles = view_angles(n_views);
    let mut data = vec![0.0; n_views * n_detectors];
    for (v, &theta) in angles.iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        for d in 0..n_detectors {
            let t = d as f64 - det_centre;
            let mut acc = 0.0;
            for m in 0..n_samples {
                let s = m as f64 - s_centre;
                let x = centre + t * cos - s * sin;
                let y = centre + t * sin + s * cos;
                acc += sample(image, size, x, y);
            }
            data[v * n_detectors + d] = acc;
        }
    }
    Ok(Sinogram {
        n_views,
        n_detectors,
        data,
        view_angles: angles,
        detector_spacing: 1.0,
        i0: f64::INFINITY,
    })
}

/// Ram-Lak kernel sampled at integer detector offsets `-(n-1)..=(n-1)`.
fn ramp_kernel(n: usize, spacing: f64) -> Vec<f64> {
    let len = 2 * n - 1;
    let mid = n as isize - 1;
    (0..len)
        .map(|i| {
            let k = i as isize - mid;
            if k == 0 {
                1.0 / (4.0 * spacing * spacing)
            } else if k % 2 == 0 {
                0.0
            } else {
                -1.0 / (PI * PI * (k * k) as f64 * spacing * spacing)
            }
        })
        .collect()
}

/// Filtered backprojection onto an `out_size²` grid, clamped to `[0, 1.5]`.
pub fn fbp(sino: &Sinogram, out_size: usize) -> Vec<f64> {
    let nd = sino.n_detectors;
    let kernel = ramp_kernel(nd, sino.detector_spacing);
    let mid = nd - 1;
    let mut filtered = vec![0.0; sino.data.len()];
    for v in 0..sino.n_views {
        let p = sino.view(v);
        let q = &mut filtered[v * nd..(v + 1) * nd];
        for (d, out) in q.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &pk) in p.iter().enumerate() {
                acc += pk * kernel[d + mid - k];
            }
            *out = acc * sino.detector_spacing;
        }
    }
    let centre = (out_size as f64 - 1.0) / 2.0;
    let det_centre = (nd as f64 - 1.0) / 2.0;
    let mut image = vec![0.0; out_size * out_size];
    for (v, &theta) in sino.view_angles.iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        let q = &filtered[v * nd..(v + 1) * nd];
        for i in 0..out_size {
            let y = i as f64 - centre;
            for j in 0..out_size {
                let x = j as f64 - centre;
                let t = (x * cos + y * sin) / sino.detector_spacing + det_centre;
                let t0 = t.floor();
                let w = t - t0;
                let k = t0 as isize;
                let at = |k: isize| if k < 0 || k >= nd as isize { 0.0 } else { q[k as usize] };
                image[i * out_size + j] += (1.0 - w) * at(k) + w * at(k + 1);
            }
        }
    }
    let scale = PI / sino.n_views as f64;
    for px in &mut image {
        *px = (*px * scale).clamp(0.0, 1.5);
    }
    image
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_kernel_values() {
        let k = ramp_kernel(4, 1.0);
        assert_eq!(k.len(), 7);
        assert_eq!(k[3], 0.25);
        assert_eq!(k[5], 0.0);
        assert!((k[4] + 1.0 / (PI * PI)).abs() < 1e-15);
        assert!((k[0] + 1.0 / (9.0 * PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn smooth_blob_mass_is_view_independent() {
        let n = 33;
        let c = 16.0;
        let img: Vec<f64> = (0..n * n)
            .map(|k| {
                let (y, x) = ((k / n) as f64 - c, (k % n) as f64 - c);
                (-(x * x + y * y) / 18.0).exp()
            })
            .collect();
        let mass: f64 = img.iter().sum();
        let s = radon(&img, n, 12, 48).unwrap();
        for v in 0..12 {
            let total: f64 = s.view(v).iter().sum();
            assert!((total / mass - 1.0).abs() < 1e-3, "view {v}: {total} vs {mass}");
        }
    }
}

//! Ellipse phantoms sliced from a volume of random ellipsoids.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CtError, Result};

/// One ellipse in normalized coordinates, the image spanning `[-1, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    /// Rotation in radians.
    pub theta: f64,
    /// Added to every pixel inside the ellipse.
    pub intensity: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }
}

/// A square slice, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub size: usize,
    pub image: Vec<f64>,
    pub ellipses: Vec<Ellipse>,
}

impl Phantom {
    /// Sum of ellipse indicators at pixel centres, clamped to `[0, 1]`.
    pub fn render(size: usize, ellipses: Vec<Ellipse>) -> Self {
        let mut image = vec![0.0; size * size];
        let coord = |i: usize| (i as f64 + 0.5) / size as f64 * 2.0 - 1.0;
        for (i, row) in image.chunks_mut(size.max(1)).enumerate() {
            let y = coord(i);
            for (j, px) in row.iter_mut().enumerate() {
                let x = coord(j);
                let v: f64 = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
                *px = v.clamp(0.0, 1.0);
            }
        }
        Self { size, image, ellipses }
    }
}

/// Ellipsoid with per-slice drift of its centre and rotation.
#[derive(Debug, Clone, Copy)]
struct Ellipsoid {
    base: Ellipse,
    /// Centre and half-extent along z, in slices.
    cz: f64,
    c: f64,
    drift_x: f64,
    drift_y: f64,
    drift_theta: f64,
}

impl Ellipsoid {
    fn section(&self, z: f64) -> Option<Ellipse> {
        let dz = z - self.cz;
        let r = 1.0 - (dz / self.c).powi(2);
        if r <= 0.0 {
            return None;
        }
        let k = r.sqrt();
        let e = &self.base;
        Some(Ellipse {
            cx: e.cx + self.drift_x * dz,
            cy: e.cy + self.drift_y * dz,
            a: e.a * k,
            b: e.b * k,
            theta: e.theta + self.drift_theta * dz,
            intensity: e.intensity,
        })
    }
}

fn random_ellipsoids(rng: &mut ChaCha8Rng, count: usize, n_slices: usize) -> Vec<Ellipsoid> {
    let depth = n_slices as f64;
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    // The body: large, soft tissue, spanning every slice.
    let body = Ellipse {
        cx: rng.random_range(-0.05..0.05),
        cy: rng.random_range(-0.05..0.05),
        a: rng.random_range(0.70..0.85),
        b: rng.random_range(0.55..0.75),
        theta: rng.random_range(-0.2..0.2),
        intensity: rng.random_range(0.45..0.6),
    };
    out.push(Ellipsoid {
        base: body,
        cz: depth / 2.0,
        c: 4.0 * depth,
        drift_x: 0.0,
        drift_y: 0.0,
        drift_theta: 0.0,
    });
    for _ in 1..count {
        let magnitude = rng.random_range(0.08..0.4);
        let intensity = if rng.random_bool(0.3) {
            -0.6 * magnitude
        } else {
            magnitude
        };
        let base = Ellipse {
            cx: body.cx + rng.random_range(-0.55..0.55) * body.a,
            cy: body.cy + rng.random_range(-0.55..0.55) * body.b,
            a: rng.random_range(0.04..0.25),
            b: rng.random_range(0.04..0.25),
            theta: rng.random_range(0.0..std::f64::consts::PI),
            intensity,
        };
        out.push(Ellipsoid {
            base,
            cz: rng.random_range(0.0..depth),
            c: rng.random_range(1.5..depth.max(2.0)),
            drift_x: rng.random_range(-0.01..0.01),
            drift_y: rng.random_range(-0.01..0.01),
            drift_theta: rng.random_range(-0.02..0.02),
        });
    }
    out
}

/// `n_slices` consecutive sections through a random ellipsoid volume.
///
/// The first ellipsoid is a body outline present in every slice; the rest
/// are interior structures that appear, grow, shrink and drift along z.
pub fn generate_phantom_volume(
    seed: u64,
    n_slices: usize,
    size: usize,
    n_ellipses: RangeInclusive<usize>,
) -> Result<Vec<Phantom>> {
    if size < 32 {
        return Err(CtError::InvalidArgument(format!(
            "phantom size must be at least 32, got {size}"
        )));
    }
    if n_ellipses.is_empty() {
        return Err(CtError::InvalidArgument(format!("empty ellipse range {n_ellipses:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(n_ellipses);
    let solids = random_ellipsoids(&mut rng, count, n_slices);
    Ok((0..n_slices)
        .map(|z| {
            let sections = solids.iter().filter_map(|s| s.section(z as f64 + 0.5)).collect();
            Phantom::render(size, sections)
        })
        .collect())
}

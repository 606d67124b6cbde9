//! Windowed SSIM over valid window positions, with its analytic gradient.

use super::{MetricError, Result, SsimParams};
use crate::tensor::{check_same_shape, Function, Shape, Tensor};

/// Normalized 1-D window taps.
fn window_taps(params: &SsimParams) -> Vec<f64> {
    let k = params.window_size;
    let r = (k / 2) as f64;
    let two_var = 2.0 * params.window_sigma * params.window_sigma;
    let raw: Vec<f64> = (0..k).map(|i| (-(i as f64 - r).powi(2) / two_var).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Valid-mode separable filtering: `(h, w)` -> `(h-k+1, w-k+1)`.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (j, t) in taps.iter().enumerate() {
            let src_row = &tmp[(y + j) * ow..(y + j + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src_row) {
                *o += t * v;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: `(h-k+1, w-k+1)` -> `(h, w)`.
fn filter_adjoint(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..oh {
        for (j, t) in taps.iter().enumerate() {
            let dst = &mut tmp[(y + j) * ow..(y + j + 1) * ow];
            for (d, v) in dst.iter_mut().zip(&src[y * ow..(y + 1) * ow]) {
                *d += t * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let row = &tmp[y * ow..(y + 1) * ow];
        let dst = &mut out[y * w..(y + 1) * w];
        for (x, v) in row.iter().enumerate() {
            for (i, t) in taps.iter().enumerate() {
                dst[x + i] += t * v;
            }
        }
    }
    out
}

/// Local statistics of one plane pair at every valid window position.
struct PlaneStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    var_x: Vec<f64>,
    var_y: Vec<f64>,
    cov: Vec<f64>,
}

impl PlaneStats {
    fn new(x: &[f64], y: &[f64], h: usize, w: usize, taps: &[f64]) -> Self {
        let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
        let mu_x = filter_valid(x, h, w, taps);
        let mu_y = filter_valid(y, h, w, taps);
        let ex2 = filter_valid(&prod(x, x), h, w, taps);
        let ey2 = filter_valid(&prod(y, y), h, w, taps);
        let exy = filter_valid(&prod(x, y), h, w, taps);
        let n = mu_x.len();
        let mut var_x = vec![0.0; n];
        let mut var_y = vec![0.0; n];
        let mut cov = vec![0.0; n];
        for i in 0..n {
            var_x[i] = ex2[i] - mu_x[i] * mu_x[i];
            var_y[i] = ey2[i] - mu_y[i] * mu_y[i];
            cov[i] = exy[i] - mu_x[i] * mu_y[i];
        }
        Self {
            mu_x,
            mu_y,
            var_x,
            var_y,
            cov,
        }
    }

    fn terms(&self, i: usize, c1: f64, c2: f64) -> (f64, f64, f64, f64) {
        let a1 = 2.0 * self.mu_x[i] * self.mu_y[i] + c1;
        let a2 = 2.0 * self.cov[i] + c2;
        let b1 = self.mu_x[i].powi(2) + self.mu_y[i].powi(2) + c1;
        let b2 = self.var_x[i] + self.var_y[i] + c2;
        (a1, a2, b1, b2)
    }
}

pub(crate) fn check(a: Shape, b: Shape, params: &SsimParams) -> Result<()> {
    params.validate()?;
    check_same_shape("ssim", a, b)?;
    if params.window_size > a.h || params.window_size > a.w {
        return Err(MetricError::WindowTooLarge {
            window: params.window_size,
            h: a.h,
            w: a.w,
        });
    }
    Ok(())
}

/// Mean SSIM over every valid window position of every (n, c) plane.
pub(crate) fn forward(a: &Tensor, b: &Tensor, params: &SsimParams) -> f64 {
    let s = a.shape();
    let taps = window_taps(params);
    let mut total = 0.0;
    let mut count = 0usize;
    for n in 0..s.n {
        for c in 0..s.c {
            let st = PlaneStats::new(a.plane(n, c), b.plane(n, c), s.h, s.w, &taps);
            for i in 0..st.mu_x.len() {
                let (a1, a2, b1, b2) = st.terms(i, params.c1, params.c2);
                total += a1 * a2 / (b1 * b2);
            }
            count += st.mu_x.len();
        }
    }
    total / count as f64
}

/// SSIM between two same-shaped tensors, in `[-1, 1]`.
pub fn ssim_value(a: &Tensor, b: &Tensor, params: &SsimParams) -> Result<f64> {
    check(a.shape(), b.shape(), params)?;
    Ok(forward(a, b, params))
}

pub(crate) struct SsimFn {
    pub(crate) params: SsimParams,
}

impl SsimFn {
    /// Gradient of mean SSIM with respect to `x`, holding `y` fixed.
    fn grad_wrt(&self, x: &Tensor, y: &Tensor, upstream: f64) -> Tensor {
        let s = x.shape();
        let taps = window_taps(&self.params);
        let (c1, c2) = (self.params.c1, self.params.c2);
        let positions = (s.h - taps.len() + 1) * (s.w - taps.len() + 1);
        let scale = upstream / (positions * s.n * s.c) as f64;
        let mut out = Tensor::zeros(s);
        let p = s.plane();
        for n in 0..s.n {
            for c in 0..s.c {
                let (xp, yp) = (x.plane(n, c), y.plane(n, c));
                let st = PlaneStats::new(xp, yp, s.h, s.w, &taps);
                let m = st.mu_x.len();
                let mut d_mu = vec![0.0; m];
                let mut d_ex2 = vec![0.0; m];
                let mut d_exy = vec![0.0; m];
                for i in 0..m {
                    let (a1, a2, b1, b2) = st.terms(i, c1, c2);
                    let denom = b1 * b2;
                    let value = a1 * a2 / denom;
                    let (mx, my) = (st.mu_x[i], st.mu_y[i]);
                    // Partials with respect to the local statistics.
                    let ds_dmu = 2.0 * my * a2 / denom - value * 2.0 * mx / b1;
                    let ds_dcov = 2.0 * a1 / denom;
                    let ds_dvar = -value / b2;
                    // var = E[x²] - mu², cov = E[xy] - mu_x mu_y
                    d_mu[i] = scale * (ds_dmu - ds_dcov * my - 2.0 * ds_dvar * mx);
                    d_ex2[i] = scale * ds_dvar;
                    d_exy[i] = scale * ds_dcov;
                }
                let g_mu = filter_adjoint(&d_mu, s.h, s.w, &taps);
                let g_ex2 = filter_adjoint(&d_ex2, s.h, s.w, &taps);
                let g_exy = filter_adjoint(&d_exy, s.h, s.w, &taps);
                let dst = &mut out.data_mut()[(n * s.c + c) * p..(n * s.c + c + 1) * p];
                for q in 0..p {
                    dst[q] = g_mu[q] + 2.0 * xp[q] * g_ex2[q] + yp[q] * g_exy[q];
                }
            }
        }
        out
    }
}

impl Function for SsimFn {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (a, b) = (inputs[0], inputs[1]);
        vec![
            needs[0].then(|| self.grad_wrt(a, b, grad.item())),
            needs[1].then(|| self.grad_wrt(b, a, grad.item())),
        ]
    }
}

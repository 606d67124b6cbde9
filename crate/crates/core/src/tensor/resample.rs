use super::graph::Function;
use super::{Graph, Result, Shape, Tensor, TensorError, Var};

/// Interpolation taps along one axis: `(lower index, upper index, upper weight)`.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

struct Taps {
    ys: Vec<(usize, usize, f64)>,
    xs: Vec<(usize, usize, f64)>,
}

fn check_upsample(input: Shape, out_h: usize, out_w: usize) -> Result<()> {
    if out_h < input.h || out_w < input.w {
        return Err(TensorError::InvalidArgument {
            op: "bilinear_upsample",
            msg: format!("target {out_h}x{out_w} smaller than input {}x{}", input.h, input.w),
        });
    }
    Ok(())
}

fn upsample(input: &Tensor, taps: &Taps) -> Tensor {
    let s = input.shape();
    let (oh, ow) = (taps.ys.len(), taps.xs.len());
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    let op = oh * ow;
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            let start = (n * s.c + c) * op;
            let dst = &mut out.data_mut()[start..start + op];
            for (oy, &(y0, y1, fy)) in taps.ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in taps.xs.iter().enumerate() {
                    let top = (1.0 - fx) * src[y0 * s.w + x0] + fx * src[y0 * s.w + x1];
                    let bottom = (1.0 - fx) * src[y1 * s.w + x0] + fx * src[y1 * s.w + x1];
                    dst[oy * ow + ox] = (1.0 - fy) * top + fy * bottom;
                }
            }
        }
    }
    out
}

/// Half-pixel-centre bilinear upsampling with edge clamping.
pub fn bilinear_upsample_forward(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    check_upsample(input.shape(), out_h, out_w)?;
    let s = input.shape();
    let taps = Taps {
        ys: axis_taps(s.h, out_h),
        xs: axis_taps(s.w, out_w),
    };
    Ok(upsample(input, &taps))
}

struct Upsample(Taps);

impl Function for Upsample {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let s = inputs[0].shape();
        let (oh, ow) = (self.0.ys.len(), self.0.xs.len());
        let mut dx = Tensor::zeros(s);
        let p = s.plane();
        for n in 0..s.n {
            for c in 0..s.c {
                let g = &grad.data()[(n * s.c + c) * oh * ow..(n * s.c + c + 1) * oh * ow];
                let start = (n * s.c + c) * p;
                let dst = &mut dx.data_mut()[start..start + p];
                for (oy, &(y0, y1, fy)) in self.0.ys.iter().enumerate() {
                    for (ox, &(x0, x1, fx)) in self.0.xs.iter().enumerate() {
                        let v = g[oy * ow + ox];
                        dst[y0 * s.w + x0] += (1.0 - fy) * (1.0 - fx) * v;
                        dst[y0 * s.w + x1] += (1.0 - fy) * fx * v;
                        dst[y1 * s.w + x0] += fy * (1.0 - fx) * v;
                        dst[y1 * s.w + x1] += fy * fx * v;
                    }
                }
            }
        }
        vec![Some(dx)]
    }
}

struct GlobalAvgPool;

impl Function for GlobalAvgPool {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let s = inputs[0].shape();
        let k = 1.0 / s.plane() as f64;
        let dx = Tensor::from_fn(s, |n, c, _, _| grad.data()[n * s.c + c] * k);
        vec![Some(dx)]
    }
}

impl Graph<'_> {
    pub fn bilinear_upsample(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let s = self.shape(x);
        check_upsample(s, out_h, out_w)?;
        let taps = Taps {
            ys: axis_taps(s.h, out_h),
            xs: axis_taps(s.w, out_w),
        };
        let out = upsample(self.value(x), &taps);
        Ok(self.apply(&[x], out, Upsample(taps)))
    }

    /// Spatial mean per channel, shape `(n, c, 1, 1)`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.shape();
        let p = s.plane() as f64;
        let out = Tensor::from_fn(Shape::new(s.n, s.c, 1, 1), |n, c, _, _| {
            v.plane(n, c).iter().sum::<f64>() / p
        });
        self.apply(&[x], out, GlobalAvgPool)
    }
}

//! 2-D convolution via im2col and a dense GEMM.

use super::graph::Function;
use super::{Graph, Result, Shape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub padding: usize,
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            dilation: 1,
            groups: 1,
            padding: 0,
        }
    }
}

impl Conv2dOptions {
    /// Stride-1 convolution padded so a `k`-tap kernel keeps the spatial size.
    pub fn same(k: usize, dilation: usize) -> Self {
        Self {
            padding: dilation * (k - 1) / 2,
            dilation,
            ..Self::default()
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    groups: usize,
    opts: Conv2dOptions,
}

impl Geometry {
    fn new(input: Shape, weight: Shape, bias: Option<Shape>, opts: Conv2dOptions) -> Result<Self> {
        let invalid = |msg: String| TensorError::InvalidArgument { op: "conv2d", msg };
        if opts.stride == 0 || opts.dilation == 0 || opts.groups == 0 {
            return Err(invalid(format!(
                "stride, dilation and groups must be >= 1 (got {}, {}, {})",
                opts.stride, opts.dilation, opts.groups
            )));
        }
        let groups = opts.groups;
        if input.c % groups != 0 {
            return Err(invalid(format!(
                "input channels {} not divisible by groups {groups}",
                input.c
            )));
        }
        if weight.n % groups != 0 {
            return Err(invalid(format!(
                "output channels {} not divisible by groups {groups}",
                weight.n
            )));
        }
        if weight.c != input.c / groups {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                dim: "weight c_in/groups",
                got: weight.c,
                expected: input.c / groups,
            });
        }
        if let Some(b) = bias {
            if b.numel() != weight.n {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d",
                    dim: "bias length",
                    got: b.numel(),
                    expected: weight.n,
                });
            }
        }
        let extent_h = opts.dilation * (weight.h - 1) + 1;
        let extent_w = opts.dilation * (weight.w - 1) + 1;
        if input.h + 2 * opts.padding < extent_h || input.w + 2 * opts.padding < extent_w {
            return Err(invalid(format!(
                "dilated kernel {extent_h}x{extent_w} exceeds padded input {}x{}",
                input.h + 2 * opts.padding,
                input.w + 2 * opts.padding
            )));
        }
        Ok(Self {
            n: input.n,
            c_in: input.c,
            h: input.h,
            w: input.w,
            c_out: weight.n,
            kh: weight.h,
            kw: weight.w,
            oh: (input.h + 2 * opts.padding - extent_h) / opts.stride + 1,
            ow: (input.w + 2 * opts.padding - extent_w) / opts.stride + 1,
            groups,
            opts,
        })
    }

    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }

    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }

    fn rows(&self) -> usize {
        self.cin_g() * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    fn output_shape(&self) -> Shape {
        Shape::new(self.n, self.c_out, self.oh, self.ow)
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.opts.stride == 1 && self.opts.padding == 0
    }

    /// Input channel block of one (sample, group), contiguous.
    fn input_block<'a>(&self, data: &'a [f64], n: usize, g: usize) -> &'a [f64] {
        let p = self.h * self.w;
        let start = (n * self.c_in + g * self.cin_g()) * p;
        &data[start..start + self.cin_g() * p]
    }

    fn im2col(&self, block: &[f64], col: &mut [f64]) {
        let (s, d, pad) = (
            self.opts.stride as isize,
            self.opts.dilation as isize,
            self.opts.padding as isize,
        );
        let op = self.out_plane();
        let mut r = 0;
        for ci in 0..self.cin_g() {
            let plane = &block[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &mut col[r * op..(r + 1) * op];
                    for oy in 0..self.oh {
                        let iy = oy as isize * s - pad + ky as isize * d;
                        let out_row = &mut row[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            out_row.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let ix = ox as isize * s - pad + kx as isize * d;
                            *o = if ix < 0 || ix >= self.w as isize {
                                0.0
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                    r += 1;
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], block: &mut [f64]) {
        let (s, d, pad) = (
            self.opts.stride as isize,
            self.opts.dilation as isize,
            self.opts.padding as isize,
        );
        let op = self.out_plane();
        let mut r = 0;
        for ci in 0..self.cin_g() {
            let plane = &mut block[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &col[r * op..(r + 1) * op];
                    for oy in 0..self.oh {
                        let iy = oy as isize * s - pad + ky as isize * d;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.ow {
                            let ix = ox as isize * s - pad + kx as isize * d;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += row[oy * self.ow + ox];
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

/// Row/column strides of a matrix operand.
#[derive(Clone, Copy)]
struct Layout {
    rs: usize,
    cs: usize,
}

impl Layout {
    const fn row_major(cols: usize) -> Self {
        Self { rs: cols, cs: 1 }
    }

    const fn transposed(rows: usize) -> Self {
        Self { rs: 1, cs: rows }
    }
}

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n`, `c: m×n` row-major.
fn gemm(m: usize, k: usize, n: usize, a: &[f64], la: Layout, b: &[f64], lb: Layout, beta: f64, c: &mut [f64]) {
    assert!(m == 0 || k == 0 || (m - 1) * la.rs + (k - 1) * la.cs < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * lb.rs + (n - 1) * lb.cs < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            la.rs as isize,
            la.cs as isize,
            b.as_ptr(),
            lb.rs as isize,
            lb.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Direct (non-recording) convolution.
pub fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, opts: Conv2dOptions) -> Result<Tensor> {
    let geo = Geometry::new(input.shape(), weight.shape(), bias.map(Tensor::shape), opts)?;
    Ok(forward(&geo, input, weight, bias))
}

fn forward(geo: &Geometry, input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let mut out = Tensor::zeros(geo.output_shape());
    let (rows, op, cout_g) = (geo.rows(), geo.out_plane(), geo.cout_g());
    let mut col = if geo.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; rows * op]
    };
    for n in 0..geo.n {
        for g in 0..geo.groups {
            let block = geo.input_block(input.data(), n, g);
            let b: &[f64] = if geo.is_pointwise() {
                block
            } else {
                geo.im2col(block, &mut col);
                &col
            };
            let w = &weight.data()[g * cout_g * rows..(g + 1) * cout_g * rows];
            let start = (n * geo.c_out + g * cout_g) * op;
            let dst = &mut out.data_mut()[start..start + cout_g * op];
            gemm(
                cout_g,
                rows,
                op,
                w,
                Layout::row_major(rows),
                b,
                Layout::row_major(op),
                0.0,
                dst,
            );
        }
        if let Some(bias) = bias {
            for co in 0..geo.c_out {
                let start = (n * geo.c_out + co) * op;
                let b = bias.data()[co];
                out.data_mut()[start..start + op].iter_mut().for_each(|v| *v += b);
            }
        }
    }
    out
}

struct Conv2d {
    geo: Geometry,
}

impl Function for Conv2d {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let geo = &self.geo;
        let (x, w) = (inputs[0], inputs[1]);
        let (rows, op, cout_g) = (geo.rows(), geo.out_plane(), geo.cout_g());
        let mut dx = needs[0].then(|| Tensor::zeros(x.shape()));
        let mut dw = needs[1].then(|| Tensor::zeros(w.shape()));
        let db = needs.get(2).copied().unwrap_or(false).then(|| {
            let mut db = Tensor::zeros(inputs[2].shape());
            for n in 0..geo.n {
                for co in 0..geo.c_out {
                    let start = (n * geo.c_out + co) * op;
                    db.data_mut()[co] += grad.data()[start..start + op].iter().sum::<f64>();
                }
            }
            db
        });

        let pointwise = geo.is_pointwise();
        let mut col = vec![0.0; rows * op];
        let p = geo.h * geo.w;
        for n in 0..geo.n {
            for g in 0..geo.groups {
                let gstart = (n * geo.c_out + g * cout_g) * op;
                let dout = &grad.data()[gstart..gstart + cout_g * op];
                let wg = &w.data()[g * cout_g * rows..(g + 1) * cout_g * rows];
                if let Some(dw) = dw.as_mut() {
                    let block = geo.input_block(x.data(), n, g);
                    let b: &[f64] = if pointwise {
                        block
                    } else {
                        geo.im2col(block, &mut col);
                        &col
                    };
                    let dst = &mut dw.data_mut()[g * cout_g * rows..(g + 1) * cout_g * rows];
                    gemm(
                        cout_g,
                        op,
                        rows,
                        dout,
                        Layout::row_major(op),
                        b,
                        Layout::transposed(op),
                        1.0,
                        dst,
                    );
                }
                if let Some(dx) = dx.as_mut() {
                    let start = (n * geo.c_in + g * geo.cin_g()) * p;
                    let dblock = &mut dx.data_mut()[start..start + geo.cin_g() * p];
                    if pointwise {
                        gemm(
                            rows,
                            cout_g,
                            op,
                            wg,
                            Layout::transposed(rows),
                            dout,
                            Layout::row_major(op),
                            1.0,
                            dblock,
                        );
                    } else {
                        gemm(
                            rows,
                            cout_g,
                            op,
                            wg,
                            Layout::transposed(rows),
                            dout,
                            Layout::row_major(op),
                            0.0,
                            &mut col,
                        );
                        geo.col2im(&col, dblock);
                    }
                }
            }
        }
        let mut grads = vec![dx, dw];
        if inputs.len() > 2 {
            grads.push(db);
        }
        grads
    }
}

impl Graph<'_> {
    /// Zero-padded grouped, strided, dilated 2-D cross-correlation.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, opts: Conv2dOptions) -> Result<Var> {
        let geo = Geometry::new(self.shape(x), self.shape(weight), bias.map(|b| self.shape(b)), opts)?;
        let out = forward(&geo, self.value(x), self.value(weight), bias.map(|b| self.value(b)));
        let inputs: Vec<Var> = [Some(x), Some(weight), bias].into_iter().flatten().collect();
        Ok(self.apply(&inputs, out, Conv2d { geo }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::from_fn(Shape::new(1, 1, 3, 3), |_, _, y, x| (y * 3 + x) as f64);
        let w = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        let y = conv2d_forward(&x, &w, None, Conv2dOptions::default()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_weight_gives_zero_output_of_contract_shape() {
        let x = Tensor::from_fn(Shape::new(2, 4, 9, 7), |n, c, y, x| (n + c + y * x) as f64 + 0.5);
        let w = Tensor::zeros(Shape::new(6, 2, 3, 3));
        let opts = Conv2dOptions {
            stride: 2,
            dilation: 2,
            groups: 2,
            padding: 1,
        };
        let y = conv2d_forward(&x, &w, None, opts).unwrap();
        // floor((9 + 2 - 4 - 1) / 2) + 1 = 4, floor((7 + 2 - 4 - 1) / 2) + 1 = 3
        assert_eq!(y.shape(), Shape::new(2, 6, 4, 3));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_weight_channels_name_dimension() {
        let x = Tensor::zeros(Shape::new(1, 4, 5, 5));
        let w = Tensor::zeros(Shape::new(4, 3, 3, 3));
        let err = conv2d_forward(&x, &w, None, Conv2dOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            TensorError::ShapeMismatch {
                dim: "weight c_in/groups",
                got: 3,
                expected: 4,
                ..
            }
        ));
    }

    #[test]
    fn kernel_larger_than_padded_input_rejected() {
        let x = Tensor::zeros(Shape::new(1, 1, 4, 4));
        let w = Tensor::zeros(Shape::new(1, 1, 3, 3));
        let opts = Conv2dOptions {
            dilation: 3,
            ..Conv2dOptions::default()
        };
        assert!(conv2d_forward(&x, &w, None, opts).is_err());
    }

    #[test]
    fn bias_is_added_per_output_channel() {
        let x = Tensor::zeros(Shape::new(1, 2, 3, 3));
        let w = Tensor::zeros(Shape::new(2, 2, 3, 3));
        let b = Tensor::new(Shape::new(1, 2, 1, 1), vec![1.5, -2.0]).unwrap();
        let y = conv2d_forward(&x, &w, Some(&b), Conv2dOptions::same(3, 1)).unwrap();
        assert!(y.plane(0, 0).iter().all(|&v| v == 1.5));
        assert!(y.plane(0, 1).iter().all(|&v| v == -2.0));
    }
}

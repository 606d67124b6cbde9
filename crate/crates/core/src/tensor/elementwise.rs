use super::graph::Function;
use super::{check_same_shape, Graph, Result, Shape, Tensor, TensorError, Var};

struct Relu;

impl Function for Relu {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let data = x
            .data()
            .iter()
            .zip(grad.data())
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect();
        vec![Some(Tensor::new(x.shape(), data).unwrap())]
    }
}

struct Sigmoid;

impl Function for Sigmoid {
    fn backward(&self, _: &[&Tensor], out: &Tensor, grad: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let data = out
            .data()
            .iter()
            .zip(grad.data())
            .map(|(&y, &g)| g * y * (1.0 - y))
            .collect();
        vec![Some(Tensor::new(out.shape(), data).unwrap())]
    }
}

/// Logistic function, kept strictly inside (0, 1).
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

struct Add;

impl Function for Add {
    fn backward(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        needs.iter().map(|&n| n.then(|| grad.clone())).collect()
    }
}

struct Sum;

impl Function for Sum {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(Tensor::full(inputs[0].shape(), grad.item()))]
    }
}

struct Scale(Vec<f64>);

impl Function for Scale {
    fn backward(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        self.0
            .iter()
            .zip(needs)
            .map(|(&k, &n)| {
                n.then(|| {
                    let data = grad.data().iter().map(|g| g * k).collect();
                    Tensor::new(grad.shape(), data).unwrap()
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
enum GateKind {
    Full,
    Channel,
    Spatial,
}

struct MulBroadcast(GateKind);

impl Function for MulBroadcast {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (x, gate) = (inputs[0], inputs[1]);
        let s = x.shape();
        let mut dx = needs[0].then(|| Tensor::zeros(s));
        let mut dgate = needs[1].then(|| Tensor::zeros(gate.shape()));
        let gd = grad.data();
        let xd = x.data();
        let gt = gate.data();
        let p = s.plane();
        for n in 0..s.n {
            for c in 0..s.c {
                let base = (n * s.c + c) * p;
                for i in 0..p {
                    let gi = match self.0 {
                        GateKind::Full => base + i,
                        GateKind::Channel => n * s.c + c,
                        GateKind::Spatial => n * p + i,
                    };
                    if let Some(dx) = dx.as_mut() {
                        dx.data_mut()[base + i] = gd[base + i] * gt[gi];
                    }
                    if let Some(dg) = dgate.as_mut() {
                        dg.data_mut()[gi] += gd[base + i] * xd[base + i];
                    }
                }
            }
        }
        vec![dx, dgate]
    }
}

struct Concat {
    channels: Vec<usize>,
}

impl Function for Concat {
    fn backward(&self, _: &[&Tensor], out: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let s = out.shape();
        let p = s.plane();
        let mut offset = 0;
        let mut grads = Vec::with_capacity(self.channels.len());
        for (&c, &need) in self.channels.iter().zip(needs) {
            if need {
                let mut data = Vec::with_capacity(s.n * c * p);
                for n in 0..s.n {
                    let start = (n * s.c + offset) * p;
                    data.extend_from_slice(&grad.data()[start..start + c * p]);
                }
                grads.push(Some(Tensor::new(Shape::new(s.n, c, s.h, s.w), data).unwrap()));
            } else {
                grads.push(None);
            }
            offset += c;
        }
        grads
    }
}

impl Graph<'_> {
    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.max(0.0)).collect();
        let out = Tensor::new(v.shape(), data).unwrap();
        self.apply(&[x], out, Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| sigmoid_scalar(a)).collect();
        let out = Tensor::new(v.shape(), data).unwrap();
        self.apply(&[x], out, Sigmoid)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("add", self.shape(b), self.shape(a))?;
        let mut out = self.value(a).clone();
        out.accumulate(self.value(b));
        Ok(self.apply(&[a, b], out, Add))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.apply(&[x], Tensor::scalar(total), Sum)
    }

    /// `Σ kᵢ·xᵢ + bias` over same-shaped inputs.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)], bias: f64) -> Result<Var> {
        let (first, _) = *terms.first().ok_or_else(|| TensorError::InvalidArgument {
            op: "weighted_sum",
            msg: "no terms".into(),
        })?;
        let shape = self.shape(first);
        let mut out = Tensor::full(shape, bias);
        for &(v, k) in terms {
            check_same_shape("weighted_sum", self.shape(v), shape)?;
            for (o, x) in out.data_mut().iter_mut().zip(self.value(v).data()) {
                *o += k * x;
            }
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let ks = terms.iter().map(|t| t.1).collect();
        Ok(self.apply(&vars, out, Scale(ks)))
    }

    /// Elementwise product with a gate of shape `(n, c, 1, 1)`,
    /// `(n, 1, h, w)` or the full shape of `x`.
    pub fn mul_broadcast(&mut self, x: Var, gate: Var) -> Result<Var> {
        let s = self.shape(x);
        let gs = self.shape(gate);
        let kind = if gs == s {
            GateKind::Full
        } else if gs == Shape::new(s.n, s.c, 1, 1) {
            GateKind::Channel
        } else if gs == Shape::new(s.n, 1, s.h, s.w) {
            GateKind::Spatial
        } else {
            let (dim, got, expected) = if gs.n != s.n {
                ("n", gs.n, s.n)
            } else if gs.c != s.c && gs.c != 1 {
                ("c", gs.c, s.c)
            } else if gs.h != s.h && gs.h != 1 {
                ("h", gs.h, s.h)
            } else {
                ("w", gs.w, s.w)
            };
            return Err(TensorError::ShapeMismatch {
                op: "mul_broadcast",
                dim,
                got,
                expected,
            });
        };
        let xv = self.value(x);
        let gv = self.value(gate);
        let p = s.plane();
        let mut out = xv.clone();
        for n in 0..s.n {
            for c in 0..s.c {
                let base = (n * s.c + c) * p;
                for i in 0..p {
                    let gi = match kind {
                        GateKind::Full => base + i,
                        GateKind::Channel => n * s.c + c,
                        GateKind::Spatial => n * p + i,
                    };
                    out.data_mut()[base + i] *= gv.data()[gi];
                }
            }
        }
        Ok(self.apply(&[x, gate], out, MulBroadcast(kind)))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| TensorError::InvalidArgument {
            op: "concat_channels",
            msg: "no inputs".into(),
        })?;
        let s0 = self.shape(first);
        let mut channels = Vec::with_capacity(parts.len());
        for &v in parts {
            let s = self.shape(v);
            for (dim, got, expected) in [("n", s.n, s0.n), ("h", s.h, s0.h), ("w", s.w, s0.w)] {
                if got != expected {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat_channels",
                        dim,
                        got,
                        expected,
                    });
                }
            }
            channels.push(s.c);
        }
        let total: usize = channels.iter().sum();
        let out_shape = Shape::new(s0.n, total, s0.h, s0.w);
        let p = s0.plane();
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..s0.n {
            for (&v, &c) in parts.iter().zip(&channels) {
                let start = n * c * p;
                data.extend_from_slice(&self.value(v).data()[start..start + c * p]);
            }
        }
        let out = Tensor::new(out_shape, data)?;
        Ok(self.apply(parts, out, Concat { channels }))
    }
}

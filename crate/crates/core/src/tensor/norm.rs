use super::graph::Function;
use super::{Graph, Mode, ParamId, Result, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormOptions {
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for BatchNormOptions {
    fn default() -> Self {
        Self {
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }
}

struct BatchNormTrain {
    /// Normalized input, same layout as `x`.
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl Function for BatchNormTrain {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let gamma = inputs[1];
        let s = grad.shape();
        let p = s.plane();
        let count = (s.n * p) as f64;
        let mut sum_dy = vec![0.0; s.c];
        let mut sum_dy_xhat = vec![0.0; s.c];
        for n in 0..s.n {
            for c in 0..s.c {
                let start = (n * s.c + c) * p;
                let dy = &grad.data()[start..start + p];
                let xh = &self.xhat.data()[start..start + p];
                for (d, x) in dy.iter().zip(xh) {
                    sum_dy[c] += d;
                    sum_dy_xhat[c] += d * x;
                }
            }
        }
        let dx = needs[0].then(|| {
            let mut dx = Tensor::zeros(s);
            for n in 0..s.n {
                for c in 0..s.c {
                    let start = (n * s.c + c) * p;
                    let k = gamma.data()[c] * self.inv_std[c] / count;
                    let dy = &grad.data()[start..start + p];
                    let xh = &self.xhat.data()[start..start + p];
                    let out = &mut dx.data_mut()[start..start + p];
                    for i in 0..p {
                        out[i] = k * (count * dy[i] - sum_dy[c] - xh[i] * sum_dy_xhat[c]);
                    }
                }
            }
            dx
        });
        let dgamma = needs[1].then(|| Tensor::new(gamma.shape(), sum_dy_xhat).unwrap());
        let dbeta = needs[2].then(|| Tensor::new(inputs[2].shape(), sum_dy).unwrap());
        vec![dx, dgamma, dbeta]
    }
}

struct BatchNormEval {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl Function for BatchNormEval {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let gamma = inputs[1];
        let s = grad.shape();
        let p = s.plane();
        let mut dx = needs[0].then(|| Tensor::zeros(s));
        let mut dgamma = vec![0.0; s.c];
        let mut dbeta = vec![0.0; s.c];
        for n in 0..s.n {
            for c in 0..s.c {
                let start = (n * s.c + c) * p;
                let k = gamma.data()[c] * self.inv_std[c];
                for i in start..start + p {
                    let dy = grad.data()[i];
                    dgamma[c] += dy * self.xhat.data()[i];
                    dbeta[c] += dy;
                    if let Some(dx) = dx.as_mut() {
                        dx.data_mut()[i] = dy * k;
                    }
                }
            }
        }
        vec![
            dx,
            needs[1].then(|| Tensor::new(gamma.shape(), dgamma).unwrap()),
            needs[2].then(|| Tensor::new(inputs[2].shape(), dbeta).unwrap()),
        ]
    }
}

impl Graph<'_> {
    /// Per-channel batch normalization.
    ///
    /// In [`Mode::Train`] the batch statistics over `(n, h, w)` normalize the
    /// input and `running = (mean, var)` buffers, when given, are updated
    /// with the unbiased variance. [`Mode::Eval`] normalizes with the running
    /// buffers and fails without them.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(ParamId, ParamId)>,
        opts: BatchNormOptions,
    ) -> Result<Var> {
        let s = self.shape(x);
        for (v, name) in [(gamma, "gamma length"), (beta, "beta length")] {
            let len = self.shape(v).numel();
            if len != s.c {
                return Err(TensorError::ShapeMismatch {
                    op: "batchnorm2d",
                    dim: name,
                    got: len,
                    expected: s.c,
                });
            }
        }
        if opts.epsilon <= 0.0 {
            return Err(TensorError::InvalidArgument {
                op: "batchnorm2d",
                msg: format!("epsilon must be positive, got {}", opts.epsilon),
            });
        }
        let p = s.plane();
        let count = s.n * p;
        let xd = self.value(x).data();

        let (mean, var) = match self.mode() {
            Mode::Train => {
                let mut mean = vec![0.0; s.c];
                let mut var = vec![0.0; s.c];
                for c in 0..s.c {
                    let mut acc = 0.0;
                    for n in 0..s.n {
                        acc += self.value(x).plane(n, c).iter().sum::<f64>();
                    }
                    mean[c] = acc / count as f64;
                    let mut sq = 0.0;
                    for n in 0..s.n {
                        sq += self
                            .value(x)
                            .plane(n, c)
                            .iter()
                            .map(|v| (v - mean[c]).powi(2))
                            .sum::<f64>();
                    }
                    var[c] = sq / count as f64;
                }
                (mean, var)
            }
            Mode::Eval => {
                let (rm, rv) = running.ok_or(TensorError::MissingRunningStats)?;
                (
                    self.store.value(rm).data().to_vec(),
                    self.store.value(rv).data().to_vec(),
                )
            }
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + opts.epsilon).sqrt()).collect();
        let mut xhat = Tensor::zeros(s);
        let mut out = Tensor::zeros(s);
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        for n in 0..s.n {
            for c in 0..s.c {
                let start = (n * s.c + c) * p;
                for i in start..start + p {
                    let h = (xd[i] - mean[c]) * inv_std[c];
                    xhat.data_mut()[i] = h;
                    out.data_mut()[i] = gd[c] * h + bd[c];
                }
            }
        }

        match self.mode() {
            Mode::Train => {
                if let Some((rm, rv)) = running {
                    let m = opts.momentum;
                    let unbias = if count > 1 {
                        count as f64 / (count - 1) as f64
                    } else {
                        1.0
                    };
                    let rmean = self.store.get_mut(rm).value.data_mut();
                    for (r, v) in rmean.iter_mut().zip(&mean) {
                        *r = (1.0 - m) * *r + m * v;
                    }
                    let rvar = self.store.get_mut(rv).value.data_mut();
                    for (r, v) in rvar.iter_mut().zip(&var) {
                        *r = (1.0 - m) * *r + m * v * unbias;
                    }
                }
                Ok(self.apply(&[x, gamma, beta], out, BatchNormTrain { xhat, inv_std }))
            }
            Mode::Eval => Ok(self.apply(&[x, gamma, beta], out, BatchNormEval { xhat, inv_std })),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamKind, ParamStore, Shape};

    fn affine(store: &mut ParamStore, c: usize) -> (ParamId, ParamId, ParamId, ParamId) {
        let s = Shape::new(1, c, 1, 1);
        (
            store.add("g", Tensor::full(s, 1.0), ParamKind::Trainable).unwrap(),
            store.add("b", Tensor::zeros(s), ParamKind::Trainable).unwrap(),
            store.add("rm", Tensor::zeros(s), ParamKind::Buffer).unwrap(),
            store.add("rv", Tensor::full(s, 1.0), ParamKind::Buffer).unwrap(),
        )
    }

    #[test]
    fn constant_input_normalizes_to_zero() {
        let mut store = ParamStore::new();
        let (gm, bt, rm, rv) = affine(&mut store, 2);
        let mut g = Graph::new(&mut store, Mode::Train);
        let x = g.constant(Tensor::full(Shape::new(3, 2, 4, 4), 7.25));
        let (gv, bv) = (g.param(gm), g.param(bt));
        let y = g
            .batchnorm2d(x, gv, bv, Some((rm, rv)), BatchNormOptions::default())
            .unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
        assert!(g.value(y).is_finite());
    }

    #[test]
    fn standardized_input_passes_through() {
        let mut store = ParamStore::new();
        let (gm, bt, _, _) = affine(&mut store, 1);
        let mut g = Graph::new(&mut store, Mode::Train);
        // Alternating +-1 has mean 0 and biased variance 1.
        let xt = Tensor::from_fn(
            Shape::new(2, 1, 2, 2),
            |n, _, y, x| if (n + y + x) % 2 == 0 { 1.0 } else { -1.0 },
        );
        let x = g.constant(xt.clone());
        let (gv, bv) = (g.param(gm), g.param(bt));
        let y = g.batchnorm2d(x, gv, bv, None, BatchNormOptions::default()).unwrap();
        let tol = 1e-5;
        for (a, b) in g.value(y).data().iter().zip(xt.data()) {
            assert!((a - b).abs() < tol, "{a} vs {b}");
        }
    }

    #[test]
    fn eval_without_running_stats_is_an_error() {
        let mut store = ParamStore::new();
        let (gm, bt, _, _) = affine(&mut store, 1);
        let mut g = Graph::new(&mut store, Mode::Eval);
        let x = g.constant(Tensor::zeros(Shape::new(1, 1, 2, 2)));
        let (gv, bv) = (g.param(gm), g.param(bt));
        let err = g.batchnorm2d(x, gv, bv, None, BatchNormOptions::default()).unwrap_err();
        assert_eq!(err, TensorError::MissingRunningStats);
    }

    #[test]
    fn eval_with_initial_stats_is_near_identity() {
        let mut store = ParamStore::new();
        let (gm, bt, rm, rv) = affine(&mut store, 1);
        let mut g = Graph::new(&mut store, Mode::Eval);
        let xt = Tensor::from_fn(Shape::new(1, 1, 2, 2), |_, _, y, x| (y * 2 + x) as f64);
        let x = g.constant(xt.clone());
        let (gv, bv) = (g.param(gm), g.param(bt));
        let y = g
            .batchnorm2d(x, gv, bv, Some((rm, rv)), BatchNormOptions::default())
            .unwrap();
        for (a, b) in g.value(y).data().iter().zip(xt.data()) {
            assert!((a - b / (1.0f64 + 1e-5).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut store = ParamStore::new();
        let (gm, bt, rm, rv) = affine(&mut store, 1);
        let mut g = Graph::new(&mut store, Mode::Train);
        let x = g.constant(Tensor::new(Shape::new(1, 1, 1, 4), vec![1.0, 2.0, 3.0, 6.0]).unwrap());
        let (gv, bv) = (g.param(gm), g.param(bt));
        g.batchnorm2d(x, gv, bv, Some((rm, rv)), BatchNormOptions::default())
            .unwrap();
        // mean 3, unbiased variance 14/3
        assert!((store.value(rm).item() - 0.3).abs() < 1e-15);
        assert!((store.value(rv).item() - (0.9 + 0.1 * 14.0 / 3.0)).abs() < 1e-15);
    }
}

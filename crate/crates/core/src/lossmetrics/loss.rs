use super::ssim::{self, SsimFn};
use super::{LossWeights, Result, SsimParams};
use crate::tensor::{check_same_shape, Function, Graph, Tensor, Var};

struct L1;

impl Function for L1 {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (a, b) = (inputs[0], inputs[1]);
        let k = grad.item() / a.numel() as f64;
        let sign: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| {
                let d = x - y;
                if d > 0.0 {
                    k
                } else if d < 0.0 {
                    -k
                } else {
                    0.0
                }
            })
            .collect();
        let da = needs[0].then(|| Tensor::new(a.shape(), sign.clone()).unwrap());
        let db = needs[1].then(|| Tensor::new(b.shape(), sign.iter().map(|v| -v).collect()).unwrap());
        vec![da, db]
    }
}

/// Mean absolute error, as a scalar.
pub fn l1_loss(g: &mut Graph<'_>, pred: Var, target: Var) -> Result<Var> {
    check_same_shape("l1_loss", g.shape(pred), g.shape(target))?;
    let (a, b) = (g.value(pred), g.value(target));
    let mean = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.numel() as f64;
    Ok(g.apply(&[pred, target], Tensor::scalar(mean), L1))
}

/// Mean windowed SSIM, as a scalar.
pub fn ssim(g: &mut Graph<'_>, pred: Var, target: Var, params: &SsimParams) -> Result<Var> {
    ssim::check(g.shape(pred), g.shape(target), params)?;
    let value = ssim::forward(g.value(pred), g.value(target), params);
    Ok(g.apply(&[pred, target], Tensor::scalar(value), SsimFn { params: *params }))
}

/// `1 - SSIM`.
pub fn ssim_loss(g: &mut Graph<'_>, pred: Var, target: Var, params: &SsimParams) -> Result<Var> {
    let s = ssim(g, pred, target, params)?;
    Ok(g.weighted_sum(&[(s, -1.0)], 1.0)?)
}

/// The three scalars of one objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub l1: Var,
    pub ssim_loss: Var,
}

/// `alpha · L1 + beta · (1 - SSIM)`.
pub fn combined_loss(
    g: &mut Graph<'_>,
    pred: Var,
    target: Var,
    weights: &LossWeights,
    params: &SsimParams,
) -> Result<LossParts> {
    weights.validate()?;
    let l1 = l1_loss(g, pred, target)?;
    let ssim_loss = ssim_loss(g, pred, target, params)?;
    let total = g.weighted_sum(&[(l1, weights.alpha), (ssim_loss, weights.beta)], 0.0)?;
    Ok(LossParts { total, l1, ssim_loss })
}

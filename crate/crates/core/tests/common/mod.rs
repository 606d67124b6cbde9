//! Independent reference implementations and helpers shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use std::path::Path;

use hqinet::model::{HqiNet, ModelConfig};
use hqinet::tensor::{Conv2dOptions, Graph, Mode, ParamId, ParamStore, Shape, Tensor, Var};
use hqinet::train::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: Shape, lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_, _, _, _| r.random_range(lo..hi))
}

/// Uniform samples kept at least `gap` away from zero, for ops with a kink there.
pub fn uniform_off_zero(shape: Shape, hi: f64, gap: f64, seed: u64) -> Tensor {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_, _, _, _| {
        let m = r.random_range(gap..hi);
        if r.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    let d = (got - want).abs();
    if d == 0.0 {
        0.0
    } else {
        d / want.abs().max(got.abs())
    }
}

// ---- direct-summation oracles ----

pub fn naive_conv(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, o: Conv2dOptions) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let k = ws.h;
    let span = o.dilation * (k - 1) + 1;
    let oh = (xs.h + 2 * o.padding - span) / o.stride + 1;
    let ow = (xs.w + 2 * o.padding - span) / o.stride + 1;
    let cin_g = xs.c / o.groups;
    let cout_g = ws.n / o.groups;
    let mut out = Tensor::zeros(Shape::new(xs.n, ws.n, oh, ow));
    for n in 0..xs.n {
        for co in 0..ws.n {
            let g = co / cout_g;
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b.data()[co]);
                    for ci in 0..cin_g {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * o.stride + ky * o.dilation) as isize - o.padding as isize;
                                let ix = (xo * o.stride + kx * o.dilation) as isize - o.padding as isize;
                                if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                                    continue;
                                }
                                acc += w.get(co, ci, ky, kx) * x.get(n, g * cin_g + ci, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.set(n, co, y, xo, acc);
                }
            }
        }
    }
    out
}

/// Mean SSIM over every valid `k`×`k` window of every plane, with a 2-D
/// Gaussian window built directly (sigma infinite gives a flat window).
pub fn naive_ssim(a: &Tensor, b: &Tensor, k: usize, sigma: f64, c1: f64, c2: f64) -> f64 {
    let s = a.shape();
    let r = (k / 2) as f64;
    let mut win = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let d2 = (i as f64 - r).powi(2) + (j as f64 - r).powi(2);
            win[i * k + j] = if sigma.is_infinite() {
                1.0
            } else {
                (-d2 / (2.0 * sigma * sigma)).exp()
            };
        }
    }
    let total: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= total);
    let (mut sum, mut count) = (0.0, 0usize);
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..=s.h - k {
                for x in 0..=s.w - k {
                    let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..k {
                        for j in 0..k {
                            let wt = win[i * k + j];
                            let p = a.get(n, c, y + i, x + j);
                            let q = b.get(n, c, y + i, x + j);
                            mx += wt * p;
                            my += wt * q;
                            xx += wt * p * p;
                            yy += wt * q * q;
                            xy += wt * p * q;
                        }
                    }
                    let vx = xx - mx * mx;
                    let vy = yy - my * my;
                    let cxy = xy - mx * my;
                    sum += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    count += 1;
                }
            }
        }
    }
    sum / count as f64
}

pub fn naive_l1(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).abs();
    }
    s / a.len() as f64
}

pub fn naive_nmse(a: &[f64], b: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..a.len() {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    num / den
}

pub fn naive_psnr(a: &[f64], b: &[f64]) -> f64 {
    let mut mse = 0.0;
    let mut peak = b[0];
    for i in 0..a.len() {
        mse += (a[i] - b[i]) * (a[i] - b[i]);
        if b[i] > peak {
            peak = b[i];
        }
    }
    mse /= a.len() as f64;
    20.0 * peak.log10() - 10.0 * mse.log10()
}

fn bin_by_search(v: f64, bins: usize, range: f64) -> usize {
    for k in (0..bins).rev() {
        if v >= range * k as f64 / bins as f64 {
            return k;
        }
    }
    0
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    counts.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).ln()).sum()
}

/// `H(A) + H(B) - H(A, B)` from explicit histograms.
pub fn naive_mi(a: &[f64], b: &[f64], bins: usize, range: f64) -> f64 {
    let mut ha = vec![0.0; bins];
    let mut hb = vec![0.0; bins];
    let mut hab = vec![0.0; bins * bins];
    for i in 0..a.len() {
        let p = bin_by_search(a[i], bins, range);
        let q = bin_by_search(b[i], bins, range);
        ha[p] += 1.0;
        hb[q] += 1.0;
        hab[p * bins + q] += 1.0;
    }
    let n = a.len() as f64;
    entropy(&ha, n) + entropy(&hb, n) - entropy(&hab, n)
}

// ---- finite differences ----

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Relative error, floored at 1e-4 in the denominator: central differences
/// of a loss near 1 carry about 1e-9 of rounding noise, which must not
/// count against gradients that are themselves near zero.
fn grad_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Scalarizes `out` as `Σ out ⊙ R` with a fixed random `R`.
pub fn project(g: &mut Graph<'_>, out: Var, seed: u64) -> Var {
    let s = g.shape(out);
    if s.is_scalar() {
        return out;
    }
    let r = g.constant(uniform(s, -1.0, 1.0, seed ^ 0x5eed));
    let prod = g.mul_broadcast(out, r).unwrap();
    g.sum(prod)
}

/// Max relative error between backprop and central differences, over every
/// element of every input.
pub fn check_input_grads<F>(store: &mut ParamStore, mode: Mode, inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Var,
{
    let eval = |store: &mut ParamStore, xs: &[Tensor]| {
        let mut g = Graph::new(store, mode);
        let vars: Vec<Var> = xs.iter().map(|x| g.leaf(x.clone())).collect();
        let out = f(&mut g, &vars);
        let loss = project(&mut g, out, 7);
        g.value(loss).item()
    };
    let analytic: Vec<Tensor> = {
        let mut g = Graph::new(store, mode);
        let vars: Vec<Var> = inputs.iter().map(|x| g.leaf(x.clone())).collect();
        let out = f(&mut g, &vars);
        let loss = project(&mut g, out, 7);
        g.backward(loss).unwrap();
        vars.iter().map(|&v| g.grad(v).unwrap().clone()).collect()
    };
    let mut worst = 0.0f64;
    for (k, grad) in analytic.iter().enumerate() {
        for i in 0..inputs[k].numel() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[i] += FD_STEP;
            let up = eval(store, &xs);
            xs[k].data_mut()[i] -= 2.0 * FD_STEP;
            let down = eval(store, &xs);
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(grad_err(grad.data()[i], numeric));
        }
    }
    worst
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub worst: f64,
    pub worst_at: String,
    pub checked: usize,
    /// Entries skipped because the loss has a kink (a ReLU or L1 sign
    /// change) within one step of the evaluation point.
    pub kinked: usize,
}

/// Same check for stored parameters: `per_tensor` entries of each listed
/// parameter, spread evenly.
///
/// Central differences only estimate the derivative where the loss is
/// smooth over `[-h, h]`. Where it is, the estimates at `h` and `h/2` agree
/// to `O(h²)`; an entry where they disagree by more than the tolerance
/// straddles a kink and is counted in `kinked` instead of checked.
pub fn check_param_grads<F>(store: &mut ParamStore, ids: &[ParamId], per_tensor: usize, f: F) -> GradReport
where
    F: Fn(&mut Graph<'_>) -> Var,
{
    store.zero_grad();
    {
        let mut g = Graph::new(store, Mode::Train);
        let loss = f(&mut g);
        g.backward(loss).unwrap();
    }
    let analytic: Vec<Tensor> = ids.iter().map(|&id| store.grad(id).clone()).collect();
    let central = |store: &mut ParamStore, id: ParamId, i: usize, h: f64| {
        let orig = store.value(id).data()[i];
        let at = |store: &mut ParamStore, v: f64| {
            store.get_mut(id).value.data_mut()[i] = v;
            let mut g = Graph::new(store, Mode::Train);
            let loss = f(&mut g);
            g.value(loss).item()
        };
        let d = (at(store, orig + h) - at(store, orig - h)) / (2.0 * h);
        store.get_mut(id).value.data_mut()[i] = orig;
        d
    };
    let mut report = GradReport::default();
    for (k, &id) in ids.iter().enumerate() {
        let n = store.value(id).numel();
        let picks: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|j| j * (n - 1) / (per_tensor - 1).max(1)).collect()
        };
        for i in picks {
            let numeric = central(store, id, i, FD_STEP);
            if grad_err(numeric, central(store, id, i, FD_STEP / 2.0)) > FD_TOL {
                report.kinked += 1;
                continue;
            }
            report.checked += 1;
            let a = analytic[k].data()[i];
            let e = grad_err(a, numeric);
            if e > report.worst {
                report.worst = e;
                report.worst_at = format!("{}[{i}] analytic {a} numeric {numeric}", store.get(id).name);
            }
        }
    }
    report
}

// ---- model and pipeline fixtures ----

/// Eighth-width network with one block per stage; fits 32×32 inputs.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        aspp_rates: vec![1],
        width_multiplier: 0.125,
        ..ModelConfig::desk()
    }
}

/// Builds a network and redraws every trainable tensor with std `std`, so
/// activations stay well away from zero through the deep stack.
pub fn tiny_net(std: f64, seed: u64) -> (HqiNet, ParamStore) {
    let mut store = ParamStore::new();
    let net = HqiNet::new(tiny_config(), &mut store, seed).unwrap();
    let mut r = rng(seed ^ 0xabc);
    let ids: Vec<ParamId> = store.iter().filter(|(_, p)| p.is_trainable()).map(|(id, _)| id).collect();
    for id in ids {
        let is_gamma = store.get(id).name.ends_with("gamma");
        for v in store.get_mut(id).value.data_mut() {
            let z: f64 = r.random_range(-1.0..1.0) * std * 3f64.sqrt();
            *v = if is_gamma { 1.0 + z } else { z };
        }
    }
    (net, store)
}

/// Small run config: 64² slices, few slices per volume, eighth-width model.
pub fn small_run(data_dir: &Path, out_dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.model = ModelConfig {
        width_multiplier: 0.125,
        ..ModelConfig::desk()
    };
    cfg.crop_size = 32;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.crops_per_triplet = 1;
    cfg.seed = 11;
    cfg.data.dir = data_dir.to_path_buf();
    cfg.data.train_volumes = 2;
    cfg.data.test_volumes = 1;
    cfg.data.synthetic.size = 64;
    cfg.data.synthetic.n_views = 60;
    cfg.data.synthetic.n_detectors = 93;
    cfg.data.synthetic.slices = [4, 5];
    cfg.output_dir = out_dir.to_path_buf();
    cfg.strict_determinism = true;
    cfg.model.aspp_rates = vec![1];
    cfg
}

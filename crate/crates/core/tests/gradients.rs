mod common;

use common::*;
use hqinet::lossmetrics::{combined_loss, l1_loss, ssim, LossWeights, SsimParams};
use hqinet::tensor::{BatchNormOptions, Conv2dOptions, Mode, ParamId, ParamKind, ParamStore, Shape, Tensor};

fn assert_fd(name: &str, err: f64) {
    assert!(err < FD_TOL, "{name}: max relative error {err:e}");
}

fn x_shape() -> Shape {
    Shape::new(2, 3, 5, 6)
}

#[test]
fn elementwise_ops() {
    let mut store = ParamStore::new();
    let x = uniform_off_zero(x_shape(), 2.0, 0.05, 1);
    let y = uniform(x_shape(), -2.0, 2.0, 2);
    let err = check_input_grads(&mut store, Mode::Train, &[x.clone()], |g, v| g.relu(v[0]));
    assert_fd("relu", err);
    let err = check_input_grads(&mut store, Mode::Train, &[y.clone()], |g, v| g.sigmoid(v[0]));
    assert_fd("sigmoid", err);
    let err = check_input_grads(&mut store, Mode::Train, &[x.clone(), y.clone()], |g, v| {
        g.add(v[0], v[1]).unwrap()
    });
    assert_fd("add", err);
    let err = check_input_grads(&mut store, Mode::Train, &[x.clone()], |g, v| g.sum(v[0]));
    assert_fd("sum", err);
    let err = check_input_grads(&mut store, Mode::Train, &[x, y], |g, v| {
        g.weighted_sum(&[(v[0], 0.3), (v[1], -1.7)], 0.5).unwrap()
    });
    assert_fd("weighted_sum", err);
}

#[test]
fn broadcast_and_concat() {
    let mut store = ParamStore::new();
    let s = x_shape();
    let x = uniform(s, -1.0, 1.0, 3);
    for (kind, gs) in [
        ("full", s),
        ("channel", Shape::new(s.n, s.c, 1, 1)),
        ("spatial", Shape::new(s.n, 1, s.h, s.w)),
    ] {
        let gate = uniform(gs, -1.0, 1.0, 4);
        let err = check_input_grads(&mut store, Mode::Train, &[x.clone(), gate], |g, v| {
            g.mul_broadcast(v[0], v[1]).unwrap()
        });
        assert_fd(kind, err);
    }
    let other = uniform(Shape::new(s.n, 2, s.h, s.w), -1.0, 1.0, 5);
    let err = check_input_grads(&mut store, Mode::Train, &[x, other], |g, v| {
        g.concat_channels(&[v[1], v[0], v[1]]).unwrap()
    });
    assert_fd("concat_channels", err);
}

#[test]
fn conv2d_over_options() {
    let mut store = ParamStore::new();
    let cases = [
        Conv2dOptions::same(3, 1),
        Conv2dOptions::same(3, 1).with_stride(2),
        Conv2dOptions::same(3, 2),
        Conv2dOptions::same(3, 2).with_groups(4),
        Conv2dOptions::same(1, 1).with_stride(2),
        Conv2dOptions::same(3, 1).with_groups(2).with_stride(2),
    ];
    for (i, opts) in cases.into_iter().enumerate() {
        let x = uniform(Shape::new(2, 4, 6, 7), -1.0, 1.0, 10 + i as u64);
        let c_out = 4;
        let k = if opts.padding == 0 && opts.dilation == 1 { 1 } else { 3 };
        let w = uniform(Shape::new(c_out, 4 / opts.groups, k, k), -1.0, 1.0, 20 + i as u64);
        let b = uniform(Shape::new(1, c_out, 1, 1), -1.0, 1.0, 30 + i as u64);
        let err = check_input_grads(&mut store, Mode::Train, &[x, w, b], |g, v| {
            g.conv2d(v[0], v[1], Some(v[2]), opts).unwrap()
        });
        assert_fd(&format!("conv2d {opts:?}"), err);
    }
}

#[test]
fn batchnorm_train_and_eval() {
    let mut store = ParamStore::new();
    let c = 3;
    let rm = store
        .add("rm", uniform(Shape::new(1, c, 1, 1), -0.5, 0.5, 1), ParamKind::Buffer)
        .unwrap();
    let rv = store
        .add("rv", uniform(Shape::new(1, c, 1, 1), 0.5, 2.0, 2), ParamKind::Buffer)
        .unwrap();
    let x = uniform(Shape::new(3, c, 4, 4), -2.0, 2.0, 3);
    let gamma = uniform(Shape::new(1, c, 1, 1), 0.5, 1.5, 4);
    let beta = uniform(Shape::new(1, c, 1, 1), -0.5, 0.5, 5);
    let inputs = [x, gamma, beta];
    let opts = BatchNormOptions::default();
    let err = check_input_grads(&mut store, Mode::Train, &inputs, |g, v| {
        g.batchnorm2d(v[0], v[1], v[2], None, opts).unwrap()
    });
    assert_fd("batchnorm train", err);
    let err = check_input_grads(&mut store, Mode::Eval, &inputs, |g, v| {
        g.batchnorm2d(v[0], v[1], v[2], Some((rm, rv)), opts).unwrap()
    });
    assert_fd("batchnorm eval", err);
}

#[test]
fn resampling_ops() {
    let mut store = ParamStore::new();
    let x = uniform(Shape::new(2, 2, 3, 4), -1.0, 1.0, 6);
    for (h, w) in [(3, 4), (6, 8), (12, 16), (7, 9)] {
        let err = check_input_grads(&mut store, Mode::Train, &[x.clone()], |g, v| {
            g.bilinear_upsample(v[0], h, w).unwrap()
        });
        assert_fd(&format!("upsample to {h}x{w}"), err);
    }
    let err = check_input_grads(&mut store, Mode::Train, &[x], |g, v| g.global_avg_pool(v[0]));
    assert_fd("global_avg_pool", err);
}

fn loss_pair(seed: u64) -> (Tensor, Tensor) {
    let s = Shape::new(2, 1, 9, 9);
    let target = uniform(s, 0.2, 0.8, seed);
    let offset = uniform_off_zero(s, 0.2, 0.02, seed + 1);
    let mut pred = target.clone();
    for (p, o) in pred.data_mut().iter_mut().zip(offset.data()) {
        *p += o;
    }
    (pred, target)
}

#[test]
fn losses() {
    let mut store = ParamStore::new();
    let (pred, target) = loss_pair(7);
    let p = SsimParams::with_window(5, 1.5, 1.0);
    let err = check_input_grads(&mut store, Mode::Train, &[pred.clone(), target.clone()], |g, v| {
        ssim(g, v[0], v[1], &p).unwrap()
    });
    assert_fd("ssim", err);
    let global = SsimParams::global(9, 1.0);
    let err = check_input_grads(&mut store, Mode::Train, &[pred.clone(), target.clone()], |g, v| {
        ssim(g, v[0], v[1], &global).unwrap()
    });
    assert_fd("ssim global", err);
    let err = check_input_grads(&mut store, Mode::Train, &[pred.clone(), target.clone()], |g, v| {
        l1_loss(g, v[0], v[1]).unwrap()
    });
    assert_fd("l1", err);
    let err = check_input_grads(&mut store, Mode::Train, &[pred, target], |g, v| {
        combined_loss(g, v[0], v[1], &LossWeights::default(), &p).unwrap().total
    });
    assert_fd("combined", err);
}

#[test]
fn tiny_hqinet_end_to_end() {
    let (net, mut store) = tiny_net(1.0, 0);
    let x = uniform(Shape::new(2, 3, 32, 32), 0.0, 1.0, 100);
    let y = uniform(Shape::new(2, 1, 32, 32), 0.0, 1.0, 200);
    let ssim_p = SsimParams::with_window(7, 1.5, 1.0);
    let ids: Vec<ParamId> = store.sorted().filter(|(_, p)| p.is_trainable()).map(|(id, _)| id).collect();
    let r = check_param_grads(&mut store, &ids, 3, |g| {
        let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
        let out = net.forward(g, xv).unwrap();
        combined_loss(g, out, yv, &LossWeights::default(), &ssim_p).unwrap().total
    });
    let total = r.checked + r.kinked;
    assert!(total >= 3 * ids.len() / 2, "{total} entries for {} tensors", ids.len());
    assert!(r.kinked * 20 <= total, "{} of {total} entries straddle a kink", r.kinked);
    assert_fd(&format!("tiny hqinet parameters, worst at {}", r.worst_at), r.worst);
}

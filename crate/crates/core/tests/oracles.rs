mod common;

use common::*;
use hqinet::lossmetrics::{
    combined_loss, l1_error, l1_loss, mutual_information, nmse, psnr, ssim, ssim_value, LossWeights, PsnrMode,
    SsimParams,
};
use hqinet::tensor::{conv2d_forward, Conv2dOptions, Graph, Mode, ParamStore, Shape, Tensor};

const TOL: f64 = 1e-10;

/// (kernel, stride, dilation, groups, padding)
const CONV_CASES: [(usize, usize, usize, usize, usize); 9] = [
    (3, 1, 1, 1, 1),
    (3, 2, 1, 1, 1),
    (3, 1, 2, 1, 2),
    (3, 1, 3, 4, 3),
    (3, 1, 1, 4, 1),
    (1, 1, 1, 1, 0),
    (1, 2, 1, 2, 0),
    (5, 1, 1, 2, 0),
    (3, 2, 2, 2, 2),
];

#[test]
fn conv2d_matches_direct_summation() {
    for (i, &(k, stride, dilation, groups, padding)) in CONV_CASES.iter().enumerate() {
        let opts = Conv2dOptions {
            stride,
            dilation,
            groups,
            padding,
        };
        let seed = 100 + i as u64;
        let x = uniform(Shape::new(2, 4, 8, 8), -1.0, 1.0, seed);
        let c_out = if groups == 4 { 8 } else { 6 };
        let w = uniform(Shape::new(c_out, 4 / groups, k, k), -1.0, 1.0, seed + 50);
        let b = uniform(Shape::new(1, c_out, 1, 1), -1.0, 1.0, seed + 99);
        for bias in [None, Some(&b)] {
            let got = conv2d_forward(&x, &w, bias, opts).unwrap();
            let want = naive_conv(&x, &w, bias, opts);
            assert_eq!(got.shape(), want.shape(), "case {i}");
            for (g, e) in got.data().iter().zip(want.data()) {
                assert!(rel_err(*g, *e) < TOL, "case {i}: {g} vs {e}");
            }
        }
    }
}

fn image_pair(seed: u64) -> (Tensor, Tensor) {
    let a = uniform(Shape::new(1, 1, 8, 8), 0.0, 1.0, seed);
    let b = uniform(Shape::new(1, 1, 8, 8), 0.0, 1.0, seed + 1);
    (a, b)
}

#[test]
fn ssim_matches_direct_windows() {
    let cases = [
        SsimParams::with_window(7, 1.5, 1.0),
        SsimParams::with_window(3, 0.8, 1.0),
        SsimParams::with_window(5, f64::INFINITY, 2.0),
        SsimParams::global(7, 1.0),
    ];
    for seed in 0..5 {
        let (a, b) = image_pair(seed * 10);
        for p in &cases {
            let got = ssim_value(&a, &b, p).unwrap();
            let want = naive_ssim(&a, &b, p.window_size, p.window_sigma, p.c1, p.c2);
            assert!(rel_err(got, want) < TOL, "{p:?}: {got} vs {want}");
        }
    }
}

#[test]
fn ssim_averages_over_batch_and_channels() {
    let a = uniform(Shape::new(2, 3, 8, 8), 0.0, 1.0, 1);
    let b = uniform(Shape::new(2, 3, 8, 8), 0.0, 1.0, 2);
    let p = SsimParams::with_window(5, 1.5, 1.0);
    let got = ssim_value(&a, &b, &p).unwrap();
    let want = naive_ssim(&a, &b, 5, 1.5, p.c1, p.c2);
    assert!(rel_err(got, want) < TOL);
}

#[test]
fn graph_losses_match_oracles() {
    let (a, b) = image_pair(3);
    let p = SsimParams::with_window(7, 1.5, 1.0);
    let mut store = ParamStore::new();
    let mut g = Graph::new(&mut store, Mode::Train);
    let (x, y) = (g.constant(a.clone()), g.constant(b.clone()));
    let s = ssim(&mut g, x, y, &p).unwrap();
    let l1 = l1_loss(&mut g, x, y).unwrap();
    assert!(rel_err(g.value(s).item(), naive_ssim(&a, &b, 7, 1.5, p.c1, p.c2)) < TOL);
    assert!(rel_err(g.value(l1).item(), naive_l1(a.data(), b.data())) < TOL);
}

#[test]
fn pixel_metrics_match_oracles() {
    for seed in 0..10 {
        let (a, b) = image_pair(seed * 7);
        let (p, r) = (a.data(), b.data());
        let checks = [
            ("l1", l1_error(p, r).unwrap(), naive_l1(p, r)),
            ("nmse", nmse(p, r).unwrap(), naive_nmse(p, r)),
            ("psnr", psnr(p, r, PsnrMode::Standard).unwrap(), naive_psnr(p, r)),
            ("mi8", mutual_information(p, r, 8, 1.0).unwrap(), naive_mi(p, r, 8, 1.0)),
            ("mi64", mutual_information(p, r, 64, 1.0).unwrap(), naive_mi(p, r, 64, 1.0)),
        ];
        for (name, got, want) in checks {
            assert!(rel_err(got, want) < TOL, "{name}: {got} vs {want}");
        }
    }
}

#[test]
fn combined_loss_is_the_weighted_composition() {
    let p = SsimParams::with_window(7, 1.5, 1.0);
    let w = LossWeights::default();
    assert_eq!((w.alpha, w.beta), (0.85, 0.15));
    for seed in 0..5 {
        let (a, b) = image_pair(40 + seed);
        let mut store = ParamStore::new();
        let mut g = Graph::new(&mut store, Mode::Train);
        let (x, y) = (g.constant(a.clone()), g.constant(b.clone()));
        let parts = combined_loss(&mut g, x, y, &w, &p).unwrap();
        let want = 0.85 * naive_l1(a.data(), b.data()) + 0.15 * (1.0 - naive_ssim(&a, &b, 7, 1.5, p.c1, p.c2));
        assert!(rel_err(g.value(parts.total).item(), want) < TOL);
    }
}

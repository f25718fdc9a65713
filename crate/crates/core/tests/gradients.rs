//! Every backward pass against central finite differences of its forward
//! pass, in f64, on 20 random instances per layer.

mod support;

use aaa_core::tensor::*;
use aaa_core::DenseTensor;
use support::*;

const INSTANCES: u64 = 20;
const LAYER_TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

fn check(label: &str, analytic: &[f64], numeric: &[f64]) {
    let err = max_rel_err(analytic, numeric, FLOOR);
    assert!(err < LAYER_TOL, "{label}: max relative error {err:.3e}");
}

#[test]
fn conv3d_gradients() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let input = random_tensor(&mut r, &[1, 2, 5, 5, 3], 1.0);
        let kernel = random_tensor(&mut r, &[3, 2, 3, 3, 3], 0.5);
        let bias = random_tensor(&mut r, &[3], 0.5);
        let weights = random_tensor(&mut r, &[1, 3, 5, 5, 3], 1.0);
        let loss = |i: &DenseTensor<f64>, k: &DenseTensor<f64>, b: &DenseTensor<f64>| {
            conv3d_forward(i, k, b.data()).unwrap().dot(&weights).unwrap()
        };
        let g = conv3d_backward(&input, &kernel, &weights).unwrap();
        check(
            "conv3d input",
            g.grad_input.data(),
            &numeric_grad(&input, |i| loss(i, &kernel, &bias)),
        );
        check(
            "conv3d kernel",
            g.param("kernel").data(),
            &numeric_grad(&kernel, |k| loss(&input, k, &bias)),
        );
        check(
            "conv3d bias",
            g.param("bias").data(),
            &numeric_grad(&bias, |b| loss(&input, &kernel, b)),
        );
    }
}

#[test]
fn conv3d_gradients_batched_thin_z() {
    for seed in 0..INSTANCES {
        let mut r = rng(100 + seed);
        let input = random_tensor(&mut r, &[2, 1, 4, 3, 1], 1.0);
        let kernel = random_tensor(&mut r, &[2, 1, 3, 3, 3], 0.5);
        let weights = random_tensor(&mut r, &[2, 2, 4, 3, 1], 1.0);
        let g = conv3d_backward(&input, &kernel, &weights).unwrap();
        check(
            "conv3d batched input",
            g.grad_input.data(),
            &numeric_grad(&input, |i| {
                conv3d_forward(i, &kernel, &[0.1, -0.2]).unwrap().dot(&weights).unwrap()
            }),
        );
        check(
            "conv3d batched kernel",
            g.param("kernel").data(),
            &numeric_grad(&kernel, |k| {
                conv3d_forward(&input, k, &[0.1, -0.2]).unwrap().dot(&weights).unwrap()
            }),
        );
    }
}

#[test]
fn conv1x1_gradients() {
    for seed in 0..INSTANCES {
        let mut r = rng(200 + seed);
        let input = random_tensor(&mut r, &[2, 3, 3, 2, 2], 1.0);
        let kernel = random_tensor(&mut r, &[2, 3, 1, 1, 1], 1.0);
        let bias = random_tensor(&mut r, &[2], 1.0);
        let weights = random_tensor(&mut r, &[2, 2, 3, 2, 2], 1.0);
        let loss = |i: &DenseTensor<f64>, k: &DenseTensor<f64>, b: &DenseTensor<f64>| {
            conv1x1_forward(i, k, b.data()).unwrap().dot(&weights).unwrap()
        };
        let g = conv1x1_backward(&input, &kernel, &weights).unwrap();
        check("conv1x1 input", g.grad_input.data(), &numeric_grad(&input, |i| loss(i, &kernel, &bias)));
        check(
            "conv1x1 kernel",
            g.param("kernel").data(),
            &numeric_grad(&kernel, |k| loss(&input, k, &bias)),
        );
        check("conv1x1 bias", g.param("bias").data(), &numeric_grad(&bias, |b| loss(&input, &kernel, b)));
    }
}

#[test]
fn batchnorm_gradients() {
    let cfg = BatchNormConfig::default();
    for seed in 0..INSTANCES {
        let mut r = rng(300 + seed);
        let input = random_tensor(&mut r, &[2, 3, 3, 3, 2], 2.0);
        let gamma = random_tensor(&mut r, &[3], 1.5);
        let beta = random_tensor(&mut r, &[3], 1.0);
        let weights = random_tensor(&mut r, &[2, 3, 3, 3, 2], 1.0);
        let state = BatchNormState::new(3);
        for mode in [Mode::Train, Mode::Infer] {
            let loss = |i: &DenseTensor<f64>, g: &DenseTensor<f64>, b: &DenseTensor<f64>| {
                batchnorm_forward(i, g.data(), b.data(), &state, mode, &cfg)
                    .unwrap()
                    .output
                    .dot(&weights)
                    .unwrap()
            };
            let fwd = batchnorm_forward(&input, gamma.data(), beta.data(), &state, mode, &cfg).unwrap();
            let g = batchnorm_backward(&fwd.cache, gamma.data(), &weights).unwrap();
            check("batchnorm input", g.grad_input.data(), &numeric_grad(&input, |i| loss(i, &gamma, &beta)));
            check(
                "batchnorm gamma",
                g.param("gamma").data(),
                &numeric_grad(&gamma, |gm| loss(&input, gm, &beta)),
            );
            check(
                "batchnorm beta",
                g.param("beta").data(),
                &numeric_grad(&beta, |b| loss(&input, &gamma, b)),
            );
        }
    }
}

#[test]
fn relu_gradients() {
    for seed in 0..INSTANCES {
        let mut r = rng(400 + seed);
        let input = random_away_from_zero(&mut r, &[1, 2, 4, 3, 3]);
        let weights = random_tensor(&mut r, &[1, 2, 4, 3, 3], 1.0);
        let analytic = relu_backward(&input, &weights).unwrap();
        check(
            "relu",
            analytic.data(),
            &numeric_grad(&input, |i| relu(i).dot(&weights).unwrap()),
        );
    }
}

#[test]
fn maxpool_gradients() {
    for seed in 0..INSTANCES {
        let mut r = rng(500 + seed);
        let input = random_tensor(&mut r, &[1, 2, 4, 6, 3], 1.0);
        let weights = random_tensor(&mut r, &[1, 2, 2, 3, 3], 1.0);
        let (_, rec) = maxpool_2x2x1_forward(&input).unwrap();
        let analytic = maxpool_2x2x1_backward(&rec, &weights).unwrap();
        check(
            "maxpool",
            analytic.data(),
            &numeric_grad(&input, |i| maxpool_2x2x1_forward(i).unwrap().0.dot(&weights).unwrap()),
        );
    }
}

/// Brute-force window scan: forward values and the backward routing.
#[test]
fn maxpool_matches_window_scan() {
    for seed in 0..INSTANCES {
        let mut r = rng(550 + seed);
        let (x, y, z) = (6, 4, 3);
        let input = random_tensor(&mut r, &[2, 3, x, y, z], 1.0);
        let (out, rec) = maxpool_2x2x1_forward(&input).unwrap();
        let at = |p: usize, i: usize, j: usize, k: usize| ((p * x + i) * y + j) * z + k;
        let mut o = 0;
        for p in 0..6 {
            for i in 0..x / 2 {
                for j in 0..y / 2 {
                    for k in 0..z {
                        let cands = [
                            at(p, 2 * i, 2 * j, k),
                            at(p, 2 * i, 2 * j + 1, k),
                            at(p, 2 * i + 1, 2 * j, k),
                            at(p, 2 * i + 1, 2 * j + 1, k),
                        ];
                        let best = *cands
                            .iter()
                            .max_by(|&&a, &&b| input.data()[a].partial_cmp(&input.data()[b]).unwrap())
                            .unwrap();
                        assert_eq!(out.data()[o], input.data()[best]);
                        assert_eq!(rec.argmax[o], best);
                        o += 1;
                    }
                }
            }
        }
    }
}

#[test]
fn upconv_gradients() {
    for seed in 0..INSTANCES {
        let mut r = rng(600 + seed);
        let input = random_tensor(&mut r, &[2, 3, 2, 3, 2], 1.0);
        let kernel = random_tensor(&mut r, &[3, 2, 2, 2, 1], 1.0);
        let bias = random_tensor(&mut r, &[2], 1.0);
        let weights = random_tensor(&mut r, &[2, 2, 4, 6, 2], 1.0);
        let loss = |i: &DenseTensor<f64>, k: &DenseTensor<f64>, b: &DenseTensor<f64>| {
            upconv_2x2x1_forward(i, k, b.data()).unwrap().dot(&weights).unwrap()
        };
        let g = upconv_2x2x1_backward(&input, &kernel, &weights).unwrap();
        check("upconv input", g.grad_input.data(), &numeric_grad(&input, |i| loss(i, &kernel, &bias)));
        check(
            "upconv kernel",
            g.param("kernel").data(),
            &numeric_grad(&kernel, |k| loss(&input, k, &bias)),
        );
        check("upconv bias", g.param("bias").data(), &numeric_grad(&bias, |b| loss(&input, &kernel, b)));
    }
}

#[test]
fn softmax_gradients() {
    for seed in 0..INSTANCES {
        let mut r = rng(700 + seed);
        let input = random_tensor(&mut r, &[1, 2, 3, 3, 2], 3.0);
        let weights = random_tensor(&mut r, &[1, 2, 3, 3, 2], 1.0);
        let out = softmax_channels(&input).unwrap();
        let analytic = softmax_backward(&out, &weights).unwrap();
        check(
            "softmax",
            analytic.data(),
            &numeric_grad(&input, |i| softmax_channels(i).unwrap().dot(&weights).unwrap()),
        );
        // per-voxel normalization
        let vol = 18;
        for v in 0..vol {
            let s = out.data()[v] + out.data()[vol + v];
            assert!((s - 1.0).abs() < 1e-6);
            assert!(out.data()[v] > 0.0 && out.data()[v] < 1.0);
        }
    }
}

#[test]
fn concat_and_dropout_gradients() {
    for seed in 0..INSTANCES {
        let mut r = rng(800 + seed);
        let a = random_tensor(&mut r, &[1, 2, 2, 2, 3], 1.0);
        let b = random_tensor(&mut r, &[1, 1, 2, 2, 3], 1.0);
        let weights = random_tensor(&mut r, &[1, 3, 2, 2, 3], 1.0);
        let (ga, gb) = split_channels(&weights, 2).unwrap();
        check(
            "concat a",
            ga.data(),
            &numeric_grad(&a, |x| concat_channels(x, &b).unwrap().dot(&weights).unwrap()),
        );
        check(
            "concat b",
            gb.data(),
            &numeric_grad(&b, |x| concat_channels(&a, x).unwrap().dot(&weights).unwrap()),
        );

        let w = random_tensor(&mut r, a.shape(), 1.0);
        let analytic = dropout_backward(&w, 0.2, seed, Mode::Train).unwrap();
        check(
            "dropout",
            analytic.data(),
            &numeric_grad(&a, |x| dropout(x, 0.2, seed, Mode::Train).unwrap().dot(&w).unwrap()),
        );
    }
}

/// Every layer primitive keeps the z extent.
#[test]
fn layers_preserve_z() {
    for z in [1usize, 2, 5, 9] {
        let x = DenseTensor::<f32>::filled(&[1, 2, 4, 4, z], 0.5);
        let k = DenseTensor::filled(&[3, 2, 3, 3, 3], 0.1);
        assert_eq!(conv3d_forward(&x, &k, &[0.0; 3]).unwrap().shape()[4], z);
        assert_eq!(maxpool_2x2x1_forward(&x).unwrap().0.shape()[4], z);
        let uk = DenseTensor::filled(&[2, 1, 2, 2, 1], 0.1);
        assert_eq!(upconv_2x2x1_forward(&x, &uk, &[0.0]).unwrap().shape()[4], z);
        let bn = batchnorm_forward(
            &x,
            &[1.0, 1.0],
            &[0.0, 0.0],
            &BatchNormState::new(2),
            Mode::Train,
            &BatchNormConfig::default(),
        )
        .unwrap();
        assert_eq!(bn.output.shape()[4], z);
        assert_eq!(relu(&x).shape()[4], z);
        assert_eq!(softmax_channels(&x).unwrap().shape()[4], z);
        assert_eq!(dropout(&x, 0.2, 0, Mode::Train).unwrap().shape()[4], z);
    }
}

use arabic_ocr::nn::{
    conv2d_backward, conv2d_forward, grad_check, maxpool_backward, maxpool_forward, LayerSpec, Tensor,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Direct quadruple-loop cross-correlation with zero padding and unit stride.
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, pad: [usize; 2]) -> Vec<f64> {
    let [n, c, h, wd] = x.dims4().unwrap();
    let [co, _, kh, kw] = w.dims4().unwrap();
    let (oh, ow) = (h + 2 * pad[0] - kh + 1, wd + 2 * pad[1] - kw + 1);
    let mut out = vec![0.0; n * co * oh * ow];
    for bi in 0..n {
        for o in 0..co {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut s = b.data()[o];
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let (yy, xx) = (y + i, xo + j);
                                if yy < pad[0] || xx < pad[1] || yy - pad[0] >= h || xx - pad[1] >= wd {
                                    continue;
                                }
                                let xi = ((bi * c + ci) * h + yy - pad[0]) * wd + xx - pad[1];
                                s += x.data()[xi] * w.data()[((o * c + ci) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[((bi * co + o) * oh + y) * ow + xo] = s;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_direct_sum() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for (kernel, pad) in [([3, 3], [1, 1]), ([2, 2], [0, 0]), ([3, 1], [1, 0]), ([1, 3], [0, 2])] {
        let x = random(&mut r, &[2, 3, 5, 6]);
        let w = random(&mut r, &[4, 3, kernel[0], kernel[1]]);
        let b = random(&mut r, &[4]);
        let y = conv2d_forward(&x, &w, &b, &LayerSpec::conv(kernel, pad, 4)).unwrap();
        for (a, e) in y.data().iter().zip(naive_conv(&x, &w, &b, pad)) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_is_linear_in_its_input() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let spec = LayerSpec::conv([3, 3], [1, 1], 3);
    let w = random(&mut r, &[3, 2, 3, 3]);
    let zero = Tensor::zeros(&[3]);
    for _ in 0..20 {
        let x1 = random(&mut r, &[1, 2, 4, 5]);
        let x2 = random(&mut r, &[1, 2, 4, 5]);
        let (a, b) = (r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0));
        let mix: Vec<f64> = x1.data().iter().zip(x2.data()).map(|(p, q)| a * p + b * q).collect();
        let mixed = conv2d_forward(&Tensor::from_vec(&[1, 2, 4, 5], mix).unwrap(), &w, &zero, &spec).unwrap();
        let y1 = conv2d_forward(&x1, &w, &zero, &spec).unwrap();
        let y2 = conv2d_forward(&x2, &w, &zero, &spec).unwrap();
        for ((m, p), q) in mixed.data().iter().zip(y1.data()).zip(y2.data()) {
            assert!((m - (a * p + b * q)).abs() < 1e-10);
        }
    }
}

#[test]
fn conv_gradients_on_20_random_instances() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for i in 0..20 {
        let (kernel, pad) = if i % 2 == 0 { ([3, 3], [1, 1]) } else { ([2, 3], [0, 1]) };
        let spec = LayerSpec::conv(kernel, pad, 3);
        let x = random(&mut r, &[2, 2, 4, 5]);
        let w = random(&mut r, &[3, 2, kernel[0], kernel[1]]);
        let b = random(&mut r, &[3]);
        let probe = random(&mut r, conv2d_forward(&x, &w, &b, &spec).unwrap().shape());
        let g = conv2d_backward(&x, &w, &spec, &probe).unwrap();

        let fx = |v: &[f64]| dot(&conv2d_forward(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &w, &b, &spec).unwrap(), &probe);
        assert!(grad_check(fx, x.data(), g.dx.data()).passes(1e-6));
        let fw = |v: &[f64]| dot(&conv2d_forward(&x, &Tensor::from_vec(w.shape(), v.to_vec()).unwrap(), &b, &spec).unwrap(), &probe);
        assert!(grad_check(fw, w.data(), g.dw.data()).passes(1e-6));
        let fb = |v: &[f64]| dot(&conv2d_forward(&x, &w, &Tensor::from_vec(&[3], v.to_vec()).unwrap(), &spec).unwrap(), &probe);
        assert!(grad_check(fb, b.data(), g.db.data()).passes(1e-6));
    }
}

#[test]
fn pool_gradients_on_20_random_instances_with_broken_ties() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for i in 0..20 {
        let spec = if i % 2 == 0 {
            LayerSpec::max_pool([2, 2], [2, 2])
        } else {
            LayerSpec::max_pool([2, 1], [2, 1])
        };
        // values on a coarse grid tie often; distinct offsets then break
        // every tie by at least 1e-4, well above the difference step
        let mut offsets: Vec<usize> = (0..96).collect();
        offsets.shuffle(&mut r);
        let data = offsets.iter().map(|&o| r.gen_range(0..3) as f64 + o as f64 * 1e-4).collect();
        let x = Tensor::from_vec(&[2, 2, 4, 6], data).unwrap();
        let (y, cache) = maxpool_forward(&x, &spec).unwrap();
        let probe = random(&mut r, y.shape());
        let dx = maxpool_backward(&probe, &cache).unwrap();
        let f = |v: &[f64]| dot(&maxpool_forward(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &spec).unwrap().0, &probe);
        let report = grad_check(f, x.data(), dx.data());
        assert!(report.passes(1e-6), "{i}: {report:?}");
    }
}

proptest! {
    #[test]
    fn pool_output_is_the_window_maximum(data in prop::collection::vec(-5.0f64..5.0, 2 * 6 * 7), kh in 1usize..4, kw in 1usize..4) {
        let x = Tensor::from_vec(&[1, 2, 6, 7], data).unwrap();
        let spec = LayerSpec::max_pool([kh, kw], [kh, kw]);
        let (y, _) = maxpool_forward(&x, &spec).unwrap();
        let [_, _, oh, ow] = y.dims4().unwrap();
        for c in 0..2 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut m = f64::NEG_INFINITY;
                    for i in 0..kh {
                        for j in 0..kw {
                            let (yy, xx) = (oy * kh + i, ox * kw + j);
                            if yy < 6 && xx < 7 {
                                m = m.max(x.data()[(c * 6 + yy) * 7 + xx]);
                            }
                        }
                    }
                    prop_assert_eq!(y.data()[(c * oh + oy) * ow + ox], m);
                }
            }
        }
    }

    #[test]
    fn pool_gradient_preserves_mass(data in prop::collection::vec(-5.0f64..5.0, 36), up in prop::collection::vec(-1.0f64..1.0, 9)) {
        let x = Tensor::from_vec(&[1, 1, 6, 6], data).unwrap();
        let (_, cache) = maxpool_forward(&x, &LayerSpec::max_pool([2, 2], [2, 2])).unwrap();
        let dy = Tensor::from_vec(&[1, 1, 3, 3], up.clone()).unwrap();
        let dx = maxpool_backward(&dy, &cache).unwrap();
        prop_assert!((dx.data().iter().sum::<f64>() - up.iter().sum::<f64>()).abs() < 1e-12);
    }
}

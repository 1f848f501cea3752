use super::gemm::{gemm, Op};
use super::{LayerKind, LayerSpec, NnError, Tensor};

/// Gradients of a convolution with respect to its input, weight and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(x: &Tensor, weight: &Tensor, spec: &LayerSpec) -> Result<Self, NnError> {
        if spec.kind != LayerKind::Conv {
            return Err(NnError::InvalidSpec(format!("{spec} is not a convolution")));
        }
        let [n, c, h, w] = x.dims4()?;
        let [kh, kw] = spec.kernel;
        let expected = vec![spec.channels_out, c, kh, kw];
        if weight.shape() != expected.as_slice() {
            return Err(NnError::ShapeMismatch {
                op: "conv2d weight",
                expected,
                found: weight.shape().to_vec(),
            });
        }
        let (oh, ow) = spec.output_hw(h, w)?;
        Ok(Geometry {
            n,
            c,
            h,
            w,
            co: spec.channels_out,
            kh,
            kw,
            sh: spec.stride[0],
            sw: spec.stride[1],
            ph: spec.padding[0],
            pw: spec.padding[1],
            oh,
            ow,
        })
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Patch matrix of one image: row `(c, i, j)`, column `(oy, ox)`.
    fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.c {
            let plane = &image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = &mut cols[((c * self.kh + i) * self.kw + j) * p..][..p];
                    for oy in 0..self.oh {
                        let y = (oy * self.sh + i) as isize - self.ph as isize;
                        let out = &mut row[oy * self.ow..(oy + 1) * self.ow];
                        if y < 0 || y >= self.h as isize {
                            out.fill(0.0);
                            continue;
                        }
                        let src = &plane[y as usize * self.w..(y as usize + 1) * self.w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let x = (ox * self.sw + j) as isize - self.pw as isize;
                            *o = if x < 0 || x >= self.w as isize {
                                0.0
                            } else {
                                src[x as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a patch-matrix gradient back onto one image gradient.
    fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.c {
            let plane = &mut image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = &cols[((c * self.kh + i) * self.kw + j) * p..][..p];
                    for oy in 0..self.oh {
                        let y = (oy * self.sh + i) as isize - self.ph as isize;
                        if y < 0 || y >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[y as usize * self.w..(y as usize + 1) * self.w];
                        for ox in 0..self.ow {
                            let x = (ox * self.sw + j) as isize - self.pw as isize;
                            if x >= 0 && x < self.w as isize {
                                dst[x as usize] += row[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_bias(bias: &Tensor, co: usize) -> Result<(), NnError> {
    if bias.shape() != [co] {
        return Err(NnError::ShapeMismatch {
            op: "conv2d bias",
            expected: vec![co],
            found: bias.shape().to_vec(),
        });
    }
    Ok(())
}

/// 2-D cross-correlation with zero padding: `x` is `[N, C, H, W]`, `weight`
/// is `[C_out, C, kh, kw]`, `bias` is `[C_out]`.
pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    spec: &LayerSpec,
) -> Result<Tensor, NnError> {
    let g = Geometry::new(x, weight, spec)?;
    check_bias(bias, g.co)?;
    let (k, p) = (g.patch(), g.positions());
    let in_size = g.c * g.h * g.w;
    let out_size = g.co * p;
    let mut out = Tensor::zeros(&[g.n, g.co, g.oh, g.ow]);
    let mut cols = vec![0.0; k * p];
    for (b, dst) in out.data_mut().chunks_mut(out_size).enumerate() {
        g.im2col(&x.data()[b * in_size..(b + 1) * in_size], &mut cols);
        for (co, row) in dst.chunks_mut(p).enumerate() {
            row.fill(bias.data()[co]);
        }
        gemm(g.co, k, p, 1.0, weight.data(), Op::N, &cols, Op::N, 1.0, dst);
    }
    Ok(out)
}

/// Exact gradients of [`conv2d_forward`] given the upstream gradient `dy`.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    spec: &LayerSpec,
    dy: &Tensor,
) -> Result<ConvGrads, NnError> {
    let g = Geometry::new(x, weight, spec)?;
    let expected = vec![g.n, g.co, g.oh, g.ow];
    if dy.shape() != expected.as_slice() {
        return Err(NnError::ShapeMismatch {
            op: "conv2d backward",
            expected,
            found: dy.shape().to_vec(),
        });
    }
    let (k, p) = (g.patch(), g.positions());
    let in_size = g.c * g.h * g.w;
    let out_size = g.co * p;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[g.co]);
    let mut cols = vec![0.0; k * p];
    let mut dcols = vec![0.0; k * p];
    for b in 0..g.n {
        let dy_b = &dy.data()[b * out_size..(b + 1) * out_size];
        g.im2col(&x.data()[b * in_size..(b + 1) * in_size], &mut cols);
        gemm(g.co, p, k, 1.0, dy_b, Op::N, &cols, Op::T, 1.0, dw.data_mut());
        for (co, row) in dy_b.chunks(p).enumerate() {
            db.data_mut()[co] += row.iter().sum::<f64>();
        }
        gemm(k, g.co, p, 1.0, weight.data(), Op::T, dy_b, Op::N, 0.0, &mut dcols);
        g.col2im(&dcols, &mut dx.data_mut()[b * in_size..(b + 1) * in_size]);
    }
    Ok(ConvGrads { dx, dw, db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct nested-loop evaluation of the convolution sum.
    fn direct(x: &Tensor, w: &Tensor, b: &Tensor, spec: &LayerSpec) -> Tensor {
        let [n, c, h, wd] = x.dims4().unwrap();
        let co = spec.channels_out;
        let [kh, kw] = spec.kernel;
        let (oh, ow) = spec.output_hw(h, wd).unwrap();
        let mut out = Tensor::zeros(&[n, co, oh, ow]);
        for bi in 0..n {
            for o in 0..co {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = b.data()[o];
                        for ci in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let y = (oy * spec.stride[0] + i) as isize
                                        - spec.padding[0] as isize;
                                    let xx = (ox * spec.stride[1] + j) as isize
                                        - spec.padding[1] as isize;
                                    if y >= 0 && y < h as isize && xx >= 0 && xx < wd as isize {
                                        s += x.data()[((bi * c + ci) * h + y as usize) * wd
                                            + xx as usize]
                                            * w.data()[((o * c + ci) * kh + i) * kw + j];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((bi * co + o) * oh + oy) * ow + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn scalar_case() {
        let spec = LayerSpec::conv([1, 1], [0, 0], 1);
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![3.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![-2.5]).unwrap();
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), &spec).unwrap();
        assert_eq!(y.data(), &[-7.5]);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = LayerSpec::conv([3, 3], [1, 1], 1);
        let x = random(&[2, 1, 6, 7], &mut rng);
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), &spec).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_direct_sum_with_stride_and_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut spec = LayerSpec::conv([3, 2], [1, 0], 3);
        spec.stride = [2, 1];
        let x = random(&[2, 2, 7, 5], &mut rng);
        let w = random(&[3, 2, 3, 2], &mut rng);
        let b = random(&[3], &mut rng);
        let fast = conv2d_forward(&x, &w, &b, &spec).unwrap();
        let slow = direct(&x, &w, &b, &spec);
        for (a, e) in fast.data().iter().zip(slow.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let spec = LayerSpec::conv([3, 3], [1, 1], 4);
        let x = Tensor::zeros(&[1, 2, 5, 5]);
        let w = Tensor::zeros(&[4, 3, 3, 3]);
        let err = conv2d_forward(&x, &w, &Tensor::zeros(&[4]), &spec).unwrap_err();
        assert_eq!(
            err,
            NnError::ShapeMismatch {
                op: "conv2d weight",
                expected: vec![4, 2, 3, 3],
                found: vec![4, 3, 3, 3]
            }
        );
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = LayerSpec::conv([3, 3], [1, 1], 3);
        let x = random(&[1, 2, 5, 5], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let r = random(&[1, 3, 5, 5], &mut rng);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let y = conv2d_forward(x, w, b, &spec).unwrap();
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let grads = conv2d_backward(&x, &w, &spec, &r).unwrap();

        let rep = grad_check(
            |v| loss(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &w, &b),
            x.data(),
            grads.dx.data(),
        );
        assert!(rep.max_rel_error < 1e-4, "dx {rep:?}");
        let rep = grad_check(
            |v| loss(&x, &Tensor::from_vec(w.shape(), v.to_vec()).unwrap(), &b),
            w.data(),
            grads.dw.data(),
        );
        assert!(rep.max_rel_error < 1e-4, "dw {rep:?}");
        let rep = grad_check(
            |v| loss(&x, &w, &Tensor::from_vec(b.shape(), v.to_vec()).unwrap()),
            b.data(),
            grads.db.data(),
        );
        assert!(rep.max_rel_error < 1e-4, "db {rep:?}");
    }
}

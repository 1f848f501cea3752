use super::{LayerKind, LayerSpec, NnError, Tensor};

/// Argmax routing recorded by [`maxpool_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCache {
    input_shape: Vec<usize>,
    /// Flat input index of the winning element for every output element.
    argmax: Vec<usize>,
}

/// Max pooling over `[N, C, H, W]`. Padded positions count as negative
/// infinity; ties go to the first maximal element in row-major order.
pub fn maxpool_forward(x: &Tensor, spec: &LayerSpec) -> Result<(Tensor, PoolCache), NnError> {
    if spec.kind != LayerKind::MaxPool {
        return Err(NnError::InvalidSpec(format!("{spec} is not a max pool")));
    }
    let [n, c, h, w] = x.dims4()?;
    let (oh, ow) = spec.output_hw(h, w)?;
    let [kh, kw] = spec.kernel;
    let [sh, sw] = spec.stride;
    let [ph, pw] = spec.padding;
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(out.len());
    let data = x.data();
    let od = out.data_mut();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for i in 0..kh {
                    let y = (oy * sh + i) as isize - ph as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for j in 0..kw {
                        let xx = (ox * sw + j) as isize - pw as isize;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let idx = base + y as usize * w + xx as usize;
                        if best_idx == usize::MAX || data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                od[o] = best;
                argmax.push(best_idx);
                o += 1;
            }
        }
    }
    Ok((
        out,
        PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

/// Routes each upstream gradient to the input element that won its window.
pub fn maxpool_backward(dy: &Tensor, cache: &PoolCache) -> Result<Tensor, NnError> {
    if dy.len() != cache.argmax.len() {
        return Err(NnError::ShapeMismatch {
            op: "maxpool backward",
            expected: vec![cache.argmax.len()],
            found: dy.shape().to_vec(),
        });
    }
    let mut dx = Tensor::zeros(&cache.input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
        d[idx] += g;
    }
    Ok(dx)
}

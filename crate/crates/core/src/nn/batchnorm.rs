use super::{NnError, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight kept on the previous running statistic at each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Infer,
}

/// Per-channel running statistics used in inference mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
        }
    }
}

/// Values saved by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: BatchNormMode,
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

fn check_channels(x: &Tensor, t: &Tensor, op: &'static str) -> Result<[usize; 4], NnError> {
    let dims = x.dims4()?;
    if t.shape() != [dims[1]] {
        return Err(NnError::ShapeMismatch {
            op,
            expected: vec![dims[1]],
            found: t.shape().to_vec(),
        });
    }
    Ok(dims)
}

/// Batch normalization over `[N, C, H, W]`, per channel across `(N, H, W)`.
/// Train mode uses batch statistics and updates `state`; infer mode uses
/// the running statistics.
pub fn batchnorm_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BatchNormState,
    mode: BatchNormMode,
) -> Result<(Tensor, BatchNormCache), NnError> {
    let [n, c, h, w] = check_channels(x, gamma, "batchnorm gamma")?;
    check_channels(x, beta, "batchnorm beta")?;
    if mode == BatchNormMode::Train && n * h * w < 2 {
        return Err(NnError::BatchTooSmall(n * h * w));
    }
    let hw = h * w;
    let count = (n * hw) as f64;
    let data = x.data();
    let mut x_hat = Tensor::zeros(x.shape());
    let mut out = Tensor::zeros(x.shape());
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let planes = || (0..n).map(move |b| (b * c + ch) * hw);
        let (mean, var) = match mode {
            BatchNormMode::Train => {
                let mean = planes()
                    .map(|o| data[o..o + hw].iter().sum::<f64>())
                    .sum::<f64>()
                    / count;
                let var = planes()
                    .map(|o| data[o..o + hw].iter().map(|v| (v - mean).powi(2)).sum::<f64>())
                    .sum::<f64>()
                    / count;
                let rm = &mut state.running_mean.data_mut()[ch];
                *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * mean;
                let rv = &mut state.running_var.data_mut()[ch];
                *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * var * count / (count - 1.0);
                (mean, var)
            }
            BatchNormMode::Infer => (
                state.running_mean.data()[ch],
                state.running_var.data()[ch],
            ),
        };
        let is = 1.0 / (var + BN_EPSILON).sqrt();
        inv_std[ch] = is;
        let (g, b) = (gamma.data()[ch], beta.data()[ch]);
        for o in planes() {
            for i in o..o + hw {
                let xh = (data[i] - mean) * is;
                x_hat.data_mut()[i] = xh;
                out.data_mut()[i] = g * xh + b;
            }
        }
    }
    Ok((
        out,
        BatchNormCache {
            mode,
            x_hat,
            inv_std,
        },
    ))
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward(
    dy: &Tensor,
    gamma: &Tensor,
    cache: &BatchNormCache,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    if dy.shape() != cache.x_hat.shape() {
        return Err(NnError::ShapeMismatch {
            op: "batchnorm backward",
            expected: cache.x_hat.shape().to_vec(),
            found: dy.shape().to_vec(),
        });
    }
    let [n, c, h, w] = check_channels(dy, gamma, "batchnorm gamma")?;
    let hw = h * w;
    let count = (n * hw) as f64;
    let (g_data, xh) = (dy.data(), cache.x_hat.data());
    let mut dx = Tensor::zeros(dy.shape());
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let planes = || (0..n).map(move |b| (b * c + ch) * hw);
        let mut sum_dy = 0.0;
        let mut sum_dy_xh = 0.0;
        for o in planes() {
            for i in o..o + hw {
                sum_dy += g_data[i];
                sum_dy_xh += g_data[i] * xh[i];
            }
        }
        dgamma.data_mut()[ch] = sum_dy_xh;
        dbeta.data_mut()[ch] = sum_dy;
        let scale = gamma.data()[ch] * cache.inv_std[ch];
        for o in planes() {
            for i in o..o + hw {
                dx.data_mut()[i] = match cache.mode {
                    BatchNormMode::Train => {
                        scale * (g_data[i] - sum_dy / count - xh[i] * sum_dy_xh / count)
                    }
                    BatchNormMode::Infer => scale * g_data[i],
                };
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

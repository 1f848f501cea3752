//! LSTM cells, bidirectional layers and stacked encoders with exact
//! back-propagation through time.
//!
//! A sequence is a `[T, D]` tensor, one row per time step. Gate rows in the
//! weight matrices are ordered input, forget, output, candidate.

use rand::Rng;
use thiserror::Error;

use crate::nn::gemm::{gemm, Op};
use crate::nn::{NnError, Parameter, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecurrentError {
    #[error("empty input sequence")]
    EmptySequence,
    #[error("input width {found} does not match layer input size {expected}")]
    InputSize { expected: usize, found: usize },
    #[error("upstream gradient shape {found:?} does not match cached output {expected:?}")]
    CacheMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("layer {index} expects input size {expected} but the previous layer emits {found}")]
    StackMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Tensor(#[from] NnError),
}

/// Uniform initialization half-range.
pub const INIT_RANGE: f64 = 0.08;
pub const FORGET_BIAS: f64 = 1.0;

fn sigmoid(v: f64) -> f64 {
    crate::nn::Activation::Sigmoid.apply(v)
}

/// Weights of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[4H, D]`
    pub w_ih: Parameter,
    /// `[4H, H]`
    pub w_hh: Parameter,
    /// `[4H]`
    pub bias: Parameter,
    input_size: usize,
    hidden_size: usize,
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let g = 4 * hidden_size;
        LstmParams {
            w_ih: Parameter::new(Tensor::zeros(&[g, input_size])),
            w_hh: Parameter::new(Tensor::zeros(&[g, hidden_size])),
            bias: Parameter::new(Tensor::zeros(&[g])),
            input_size,
            hidden_size,
        }
    }

    /// Uniform(-0.08, 0.08) weights, zero biases except the forget gate at 1.
    pub fn init<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        for t in [&mut p.w_ih.value, &mut p.w_hh.value] {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-INIT_RANGE..INIT_RANGE));
        }
        p.bias.value.data_mut()[hidden_size..2 * hidden_size].fill(FORGET_BIAS);
        p
    }

    /// Rebuilds parameters from tensors, checking their shapes.
    pub fn from_tensors(w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> Result<Self, RecurrentError> {
        let [g, d] = w_ih.dims2()?;
        let h = g / 4;
        for (t, expected) in [
            (&w_ih, vec![4 * h, d]),
            (&w_hh, vec![4 * h, h]),
            (&bias, vec![4 * h]),
        ] {
            if t.shape() != expected.as_slice() || g % 4 != 0 {
                return Err(NnError::ShapeMismatch {
                    op: "lstm parameters",
                    expected,
                    found: t.shape().to_vec(),
                }
                .into());
            }
        }
        Ok(LstmParams {
            w_ih: Parameter::new(w_ih),
            w_hh: Parameter::new(w_hh),
            bias: Parameter::new(bias),
            input_size: d,
            hidden_size: h,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter; 3] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }

    pub fn parameters(&self) -> [&Parameter; 3] {
        [&self.w_ih, &self.w_hh, &self.bias]
    }

    /// Adds a gradient computed by [`lstm_backward`] into the parameters.
    pub fn accumulate(&mut self, grads: &LstmParamGrads) -> Result<(), NnError> {
        self.w_ih.grad.add_assign(&grads.w_ih)?;
        self.w_hh.grad.add_assign(&grads.w_hh)?;
        self.bias.grad.add_assign(&grads.bias)
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Tensor,
    /// Post-activation gates `[T, 4H]`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hidden: Vec<f64>,
    steps: usize,
    hidden_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParamGrads {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub dx: Tensor,
    pub params: LstmParamGrads,
}

fn check_input(seq: &Tensor, input_size: usize) -> Result<usize, RecurrentError> {
    let [t, d] = seq.dims2()?;
    if t == 0 {
        return Err(RecurrentError::EmptySequence);
    }
    if d != input_size {
        return Err(RecurrentError::InputSize {
            expected: input_size,
            found: d,
        });
    }
    Ok(t)
}

/// Runs one LSTM direction over `seq` from zero initial state. Returns the
/// hidden states `[T, H]`.
pub fn lstm_forward(seq: &Tensor, params: &LstmParams) -> Result<(Tensor, LstmCache), RecurrentError> {
    let steps = check_input(seq, params.input_size)?;
    let (d, h) = (params.input_size, params.hidden_size);
    let g = 4 * h;
    // input contributions for every step at once
    let mut pre = vec![0.0; steps * g];
    for row in pre.chunks_mut(g) {
        row.copy_from_slice(params.bias.value.data());
    }
    gemm(steps, d, g, 1.0, seq.data(), Op::N, params.w_ih.value.data(), Op::T, 1.0, &mut pre);

    let mut gates = pre;
    let mut cells = vec![0.0; steps * h];
    let mut tanh_cells = vec![0.0; steps * h];
    let mut hidden = vec![0.0; steps * h];
    let w_hh = params.w_hh.value.data();
    for t in 0..steps {
        let row = &mut gates[t * g..(t + 1) * g];
        if t > 0 {
            let h_prev = &hidden[(t - 1) * h..t * h];
            for (r, out) in row.iter_mut().enumerate() {
                let w = &w_hh[r * h..(r + 1) * h];
                *out += w.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for v in &mut row[..3 * h] {
            *v = sigmoid(*v);
        }
        for v in &mut row[3 * h..] {
            *v = v.tanh();
        }
        for j in 0..h {
            let (i, f, o, cand) = (row[j], row[h + j], row[2 * h + j], row[3 * h + j]);
            let c_prev = if t > 0 { cells[(t - 1) * h + j] } else { 0.0 };
            let c = f * c_prev + i * cand;
            let tc = c.tanh();
            cells[t * h + j] = c;
            tanh_cells[t * h + j] = tc;
            hidden[t * h + j] = o * tc;
        }
    }
    let out = Tensor::from_vec(&[steps, h], hidden.clone())?;
    Ok((
        out,
        LstmCache {
            x: seq.clone(),
            gates,
            cells,
            tanh_cells,
            hidden,
            steps,
            hidden_size: h,
        },
    ))
}

/// Back-propagation through time for [`lstm_forward`].
pub fn lstm_backward(
    dy: &Tensor,
    cache: &LstmCache,
    params: &LstmParams,
) -> Result<LstmGrads, RecurrentError> {
    let (steps, h) = (cache.steps, cache.hidden_size);
    if dy.shape() != [steps, h] || params.hidden_size != h {
        return Err(RecurrentError::CacheMismatch {
            expected: vec![steps, h],
            found: dy.shape().to_vec(),
        });
    }
    let d = params.input_size;
    let g = 4 * h;
    let w_hh = params.w_hh.value.data();
    let mut d_pre = vec![0.0; steps * g];
    let mut d_w_hh = Tensor::zeros(&[g, h]);
    let mut d_bias = Tensor::zeros(&[g]);
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let dy = dy.data();
    for t in (0..steps).rev() {
        let gates = &cache.gates[t * g..(t + 1) * g];
        let da = &mut d_pre[t * g..(t + 1) * g];
        for j in 0..h {
            let (i, f, o, cand) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = cache.tanh_cells[t * h + j];
            let c_prev = if t > 0 { cache.cells[(t - 1) * h + j] } else { 0.0 };
            let dh = dy[t * h + j] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            da[j] = dc * cand * i * (1.0 - i);
            da[h + j] = dc * c_prev * f * (1.0 - f);
            da[2 * h + j] = d_o * o * (1.0 - o);
            da[3 * h + j] = dc * i * (1.0 - cand * cand);
            dc_next[j] = dc * f;
        }
        for (b, v) in d_bias.data_mut().iter_mut().zip(da.iter()) {
            *b += v;
        }
        dh_next.fill(0.0);
        if t > 0 {
            let h_prev = &cache.hidden[(t - 1) * h..t * h];
            let dw = d_w_hh.data_mut();
            for (r, &a) in da.iter().enumerate() {
                let w = &w_hh[r * h..(r + 1) * h];
                for j in 0..h {
                    dw[r * h + j] += a * h_prev[j];
                    dh_next[j] += a * w[j];
                }
            }
        }
    }
    let mut dx = Tensor::zeros(&[steps, d]);
    gemm(steps, g, d, 1.0, &d_pre, Op::N, params.w_ih.value.data(), Op::N, 0.0, dx.data_mut());
    let mut d_w_ih = Tensor::zeros(&[g, d]);
    gemm(g, steps, d, 1.0, &d_pre, Op::T, cache.x.data(), Op::N, 0.0, d_w_ih.data_mut());
    Ok(LstmGrads {
        dx,
        params: LstmParamGrads {
            w_ih: d_w_ih,
            w_hh: d_w_hh,
            bias: d_bias,
        },
    })
}

/// Reverses the row order of a `[T, D]` tensor.
pub fn reverse_steps(seq: &Tensor) -> Tensor {
    let [t, d] = seq.dims2().expect("sequence tensor");
    let mut out = Vec::with_capacity(t * d);
    for row in seq.data().chunks(d.max(1)).rev() {
        out.extend_from_slice(row);
    }
    Tensor::from_vec(&[t, d], out).expect("same size")
}

/// Forward and backward LSTM directions sharing a hidden size.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmLayer {
    pub fn init<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        BiLstmLayer {
            forward: LstmParams::init(input_size, hidden_size, rng),
            backward: LstmParams::init(input_size, hidden_size, rng),
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        BiLstmLayer {
            forward: LstmParams::zeros(input_size, hidden_size),
            backward: LstmParams::zeros(input_size, hidden_size),
        }
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size
    }

    pub fn output_size(&self) -> usize {
        2 * self.forward.hidden_size
    }

    pub fn accumulate(&mut self, grads: &BiLstmGrads) -> Result<(), NnError> {
        self.forward.accumulate(&grads.forward)?;
        self.backward.accumulate(&grads.backward)
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    forward: LstmCache,
    backward: LstmCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmGrads {
    pub forward: LstmParamGrads,
    pub backward: LstmParamGrads,
}

/// Output row `t` is `[forward_h_t ; backward_h_t]`, where the backward
/// direction reads the sequence from the end.
pub fn bilstm_forward(
    seq: &Tensor,
    layer: &BiLstmLayer,
) -> Result<(Tensor, BiLstmCache), RecurrentError> {
    if layer.forward.hidden_size != layer.backward.hidden_size
        || layer.forward.input_size != layer.backward.input_size
    {
        return Err(RecurrentError::InputSize {
            expected: layer.forward.input_size,
            found: layer.backward.input_size,
        });
    }
    let (fwd, fwd_cache) = lstm_forward(seq, &layer.forward)?;
    let (bwd_rev, bwd_cache) = lstm_forward(&reverse_steps(seq), &layer.backward)?;
    let bwd = reverse_steps(&bwd_rev);
    let [t, h] = fwd.dims2()?;
    let mut out = Vec::with_capacity(t * 2 * h);
    for (a, b) in fwd.data().chunks(h).zip(bwd.data().chunks(h)) {
        out.extend_from_slice(a);
        out.extend_from_slice(b);
    }
    Ok((
        Tensor::from_vec(&[t, 2 * h], out)?,
        BiLstmCache {
            forward: fwd_cache,
            backward: bwd_cache,
        },
    ))
}

/// Returns the input gradient and both directions' parameter gradients.
pub fn bilstm_backward(
    dy: &Tensor,
    cache: &BiLstmCache,
    layer: &BiLstmLayer,
) -> Result<(Tensor, BiLstmGrads), RecurrentError> {
    let (t, h) = (cache.forward.steps, cache.forward.hidden_size);
    if dy.shape() != [t, 2 * h] {
        return Err(RecurrentError::CacheMismatch {
            expected: vec![t, 2 * h],
            found: dy.shape().to_vec(),
        });
    }
    let mut dy_f = Vec::with_capacity(t * h);
    let mut dy_b = Vec::with_capacity(t * h);
    for row in dy.data().chunks(2 * h) {
        dy_f.extend_from_slice(&row[..h]);
        dy_b.extend_from_slice(&row[h..]);
    }
    let gf = lstm_backward(&Tensor::from_vec(&[t, h], dy_f)?, &cache.forward, &layer.forward)?;
    let dy_b_rev = reverse_steps(&Tensor::from_vec(&[t, h], dy_b)?);
    let gb = lstm_backward(&dy_b_rev, &cache.backward, &layer.backward)?;
    let mut dx = gf.dx;
    dx.add_assign(&reverse_steps(&gb.dx))?;
    Ok((
        dx,
        BiLstmGrads {
            forward: gf.params,
            backward: gb.params,
        },
    ))
}

/// Deep bidirectional encoder: layers applied in sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    pub layers: Vec<BiLstmLayer>,
}

#[derive(Debug, Clone)]
pub struct StackCache {
    layers: Vec<BiLstmCache>,
}

impl LstmStack {
    pub fn new(layers: Vec<BiLstmLayer>) -> Result<Self, RecurrentError> {
        for (index, pair) in layers.windows(2).enumerate() {
            if pair[1].input_size() != pair[0].output_size() {
                return Err(RecurrentError::StackMismatch {
                    index: index + 1,
                    expected: pair[1].input_size(),
                    found: pair[0].output_size(),
                });
            }
        }
        Ok(LstmStack { layers })
    }

    pub fn init<R: Rng>(input_size: usize, hidden_size: usize, depth: usize, rng: &mut R) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let d = if i == 0 { input_size } else { 2 * hidden_size };
                BiLstmLayer::init(d, hidden_size, rng)
            })
            .collect();
        LstmStack { layers }
    }

    pub fn output_size(&self) -> Option<usize> {
        self.layers.last().map(BiLstmLayer::output_size)
    }

    pub fn forward(&self, seq: &Tensor) -> Result<(Tensor, StackCache), RecurrentError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = seq.clone();
        for layer in &self.layers {
            let (next, cache) = bilstm_forward(&cur, layer)?;
            caches.push(cache);
            cur = next;
        }
        Ok((cur, StackCache { layers: caches }))
    }

    /// Returns the input gradient and per-layer parameter gradients.
    pub fn backward(
        &self,
        dy: &Tensor,
        cache: &StackCache,
    ) -> Result<(Tensor, Vec<BiLstmGrads>), RecurrentError> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut cur = dy.clone();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let (dx, g) = bilstm_backward(&cur, c, layer)?;
            grads.push(g);
            cur = dx;
        }
        grads.reverse();
        Ok((cur, grads))
    }

    pub fn accumulate(&mut self, grads: &[BiLstmGrads]) -> Result<(), NnError> {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.accumulate(g)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let p = LstmParams::zeros(3, 4);
        let seq = Tensor::filled(&[5, 3], 0.7);
        let (h, _) = lstm_forward(&seq, &p).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        let (y, _) = bilstm_forward(&seq, &BiLstmLayer::zeros(3, 4)).unwrap();
        assert_eq!(y.shape(), &[5, 8]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_unit_hand_computation() {
        let p = LstmParams::from_tensors(
            Tensor::filled(&[4, 1], 1.0),
            Tensor::filled(&[4, 1], 1.0),
            Tensor::zeros(&[4]),
        )
        .unwrap();
        let (h, cache) = lstm_forward(&Tensor::filled(&[1, 1], 1.0), &p).unwrap();
        // i = f = o = sigmoid(1), g = tanh(1), c = i * g, h = o * tanh(c)
        assert!((cache.gates[0] - 0.731059).abs() < 1e-6);
        assert!((cache.gates[3] - 0.761594).abs() < 1e-6);
        assert!((cache.cells[0] - 0.556770).abs() < 1e-6);
        assert!((h.data()[0] - 0.369606).abs() < 1e-6, "{}", h.data()[0]);
    }

    #[test]
    fn init_sets_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = LstmParams::init(3, 2, &mut rng);
        assert_eq!(p.bias.value.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(p.w_ih.value.data().iter().all(|v| v.abs() < INIT_RANGE));
    }

    #[test]
    fn errors() {
        let p = LstmParams::zeros(3, 2);
        assert_eq!(
            lstm_forward(&Tensor::zeros(&[0, 3]), &p).unwrap_err(),
            RecurrentError::EmptySequence
        );
        assert_eq!(
            lstm_forward(&Tensor::zeros(&[2, 4]), &p).unwrap_err(),
            RecurrentError::InputSize {
                expected: 3,
                found: 4
            }
        );
        let (_, cache) = lstm_forward(&Tensor::zeros(&[2, 3]), &p).unwrap();
        assert!(matches!(
            lstm_backward(&Tensor::zeros(&[3, 2]), &cache, &p),
            Err(RecurrentError::CacheMismatch { .. })
        ));
        assert!(matches!(
            LstmStack::new(vec![BiLstmLayer::zeros(3, 2), BiLstmLayer::zeros(5, 2)]),
            Err(RecurrentError::StackMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::init(3, 4, &mut rng);
        let seq = Tensor::filled(&[5, 3], 0.3);
        let (_, cache) = lstm_forward(&seq, &p).unwrap();
        let g = lstm_backward(&Tensor::zeros(&[5, 4]), &cache, &p).unwrap();
        assert!(g.dx.data().iter().all(|&v| v == 0.0));
        assert!(g.params.w_ih.data().iter().all(|&v| v == 0.0));
        assert!(g.params.w_hh.data().iter().all(|&v| v == 0.0));
        assert!(g.params.bias.data().iter().all(|&v| v == 0.0));
    }
}

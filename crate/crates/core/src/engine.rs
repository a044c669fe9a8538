//! Minimal differentiable-layer engine: forward and backward passes for the
//! five layer kinds the denoising network needs.
//!
//! All arithmetic is 64-bit. Convolution is implemented as cross-correlation
//! (the deep-learning convention) with zero-padded "same" output, stride 1,
//! so pooling is the only operation that changes the time length. Activations
//! are cached on a [`TapeState`] during the forward pass; the backward pass
//! consumes the tape exactly once.

use crate::error::{Error, Result};

/// A `channels x len` activation map in row-major (channel-major) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    data: Vec<f64>,
    channels: usize,
    len: usize,
}

impl Tensor2 {
    pub fn new(channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match {channels}x{len}",
                data.len()
            )));
        }
        Ok(Self { data, channels, len })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            data: vec![0.0; channels * len],
            channels,
            len,
        }
    }

    /// Single-channel tensor wrapping a signal.
    pub fn from_signal(samples: &[f64]) -> Self {
        Self {
            data: samples.to_vec(),
            channels: 1,
            len: samples.len(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    fn reshaped(mut self, channels: usize, len: usize) -> Self {
        debug_assert_eq!(self.data.len(), channels * len);
        self.channels = channels;
        self.len = len;
        self
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// 1-D convolution, kernel `k` (odd), stride 1, zero-padded "same" output.
/// Weights are `(c_out, c_in, k)` row-major; one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeroed(c_in: usize, c_out: usize, kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(Error::Shape(format!(
                "conv kernel must be odd and positive, got {kernel}"
            )));
        }
        Ok(Self {
            c_in,
            c_out,
            kernel,
            weights: vec![0.0; c_out * c_in * kernel],
            bias: vec![0.0; c_out],
        })
    }

    pub fn fan_in(&self) -> usize {
        self.c_in * self.kernel
    }

    fn weight_row(&self, co: usize, ci: usize) -> &[f64] {
        let base = (co * self.c_in + ci) * self.kernel;
        &self.weights[base..base + self.kernel]
    }

    pub fn forward(&self, input: &Tensor2) -> Result<Tensor2> {
        if input.channels != self.c_in {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.c_in, input.channels
            )));
        }
        let t = input.len;
        let pad = (self.kernel / 2) as isize;
        let mut out = Tensor2::zeros(self.c_out, t);
        for co in 0..self.c_out {
            let out_ch = &mut out.data[co * t..(co + 1) * t];
            out_ch.fill(self.bias[co]);
            for ci in 0..self.c_in {
                let in_ch = input.channel(ci);
                let w = self.weight_row(co, ci);
                for (k, &coeff) in w.iter().enumerate() {
                    if coeff == 0.0 || shiftless(k, pad, t) {
                        continue;
                    }
                    let shift = k as isize - pad;
                    let (o_off, i_off) = offsets(shift);
                    let n = t - shift.unsigned_abs();
                    for (o, &i) in out_ch[o_off..o_off + n]
                        .iter_mut()
                        .zip(&in_ch[i_off..i_off + n])
                    {
                        *o += coeff * i;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Returns `(grad_input, grad_weights, grad_bias)`.
    pub fn backward(&self, grad_out: &Tensor2, input: &Tensor2) -> (Tensor2, Vec<f64>, Vec<f64>) {
        let t = input.len;
        let pad = (self.kernel / 2) as isize;
        let mut grad_in = Tensor2::zeros(self.c_in, t);
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.c_out];
        for co in 0..self.c_out {
            let gout_ch = grad_out.channel(co);
            grad_b[co] = gout_ch.iter().sum();
            for ci in 0..self.c_in {
                let in_ch = input.channel(ci);
                let gin_ch = &mut grad_in.data[ci * t..(ci + 1) * t];
                let w = self.weight_row(co, ci);
                let gw_base = (co * self.c_in + ci) * self.kernel;
                for k in 0..self.kernel {
                    if shiftless(k, pad, t) {
                        continue;
                    }
                    // Forward used out[t] += w * in[t + shift]; the adjoint
                    // pairs the same two windows.
                    let shift = k as isize - pad;
                    let (o_off, i_off) = offsets(shift);
                    let n = t - shift.unsigned_abs();
                    grad_w[gw_base + k] = gout_ch[o_off..o_off + n]
                        .iter()
                        .zip(&in_ch[i_off..i_off + n])
                        .map(|(g, i)| g * i)
                        .sum();
                    let coeff = w[k];
                    if coeff != 0.0 {
                        for (gi, &g) in gin_ch[i_off..i_off + n]
                            .iter_mut()
                            .zip(&gout_ch[o_off..o_off + n])
                        {
                            *gi += coeff * g;
                        }
                    }
                }
            }
        }
        (grad_in, grad_w, grad_b)
    }
}

fn offsets(shift: isize) -> (usize, usize) {
    if shift >= 0 {
        (0, shift as usize)
    } else {
        ((-shift) as usize, 0)
    }
}

/// True when tap `k` falls entirely in the padding for a length-`t` signal.
fn shiftless(k: usize, pad: isize, t: usize) -> bool {
    (k as isize - pad).unsigned_abs() >= t
}

/// Fully connected layer, `out = W*in + b`, weights `(out_dim, in_dim)`
/// row-major. Linear: any activation is a separate layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeroed(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_dim
    }

    pub fn forward(&self, input: &Tensor2) -> Result<Tensor2> {
        if input.channels != 1 || input.len != self.in_dim {
            return Err(Error::Shape(format!(
                "dense expects a 1x{} input, got {}x{}",
                self.in_dim, input.channels, input.len
            )));
        }
        let mut out = Tensor2::zeros(1, self.out_dim);
        for (o, (row, b)) in out
            .data
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = b + row.iter().zip(&input.data).map(|(w, x)| w * x).sum::<f64>();
        }
        Ok(out)
    }

    pub fn backward(&self, grad_out: &Tensor2, input: &Tensor2) -> (Tensor2, Vec<f64>, Vec<f64>) {
        let mut grad_in = Tensor2::zeros(1, self.in_dim);
        let mut grad_w = vec![0.0; self.weights.len()];
        let grad_b = grad_out.data.clone();
        for (o, &g) in grad_out.data.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let gw_row = &mut grad_w[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                gw_row[i] = g * input.data[i];
                grad_in.data[i] += g * row[i];
            }
        }
        (grad_in, grad_w, grad_b)
    }
}

/// One layer of a sequential network.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d(ConvLayer),
    Relu,
    AvgPool2,
    Flatten,
    Dense(DenseLayer),
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::Relu => "relu",
            Layer::AvgPool2 => "avgpool2",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    /// Weight/bias vectors of a parameterized layer.
    pub fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv1d(c) => Some((&c.weights, &c.bias)),
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Conv1d(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().map_or(0, |(w, b)| w.len() + b.len())
    }

    pub fn forward(&self, input: &Tensor2) -> Result<Tensor2> {
        match self {
            Layer::Conv1d(c) => c.forward(input),
            Layer::Relu => Ok(relu_forward(input)),
            Layer::AvgPool2 => avgpool2_forward(input),
            Layer::Flatten => Ok(flatten_forward(input)),
            Layer::Dense(d) => d.forward(input),
        }
    }

    /// Gradients given this layer's upstream gradient and its cached input.
    fn backward(&self, grad_out: &Tensor2, input: &Tensor2) -> (Tensor2, LayerGrads) {
        match self {
            Layer::Conv1d(c) => {
                let (gi, gw, gb) = c.backward(grad_out, input);
                (gi, LayerGrads { weights: gw, bias: gb })
            }
            Layer::Relu => (relu_backward(grad_out, input), LayerGrads::empty()),
            Layer::AvgPool2 => (avgpool2_backward(grad_out), LayerGrads::empty()),
            Layer::Flatten => (
                flatten_backward(grad_out, input.channels, input.len),
                LayerGrads::empty(),
            ),
            Layer::Dense(d) => {
                let (gi, gw, gb) = d.backward(grad_out, input);
                (gi, LayerGrads { weights: gw, bias: gb })
            }
        }
    }
}

pub fn relu_forward(input: &Tensor2) -> Tensor2 {
    let data = input.data.iter().map(|&v| v.max(0.0)).collect();
    Tensor2 {
        data,
        channels: input.channels,
        len: input.len,
    }
}

/// Grad passes where the cached input was strictly positive, else 0.
pub fn relu_backward(grad_out: &Tensor2, input: &Tensor2) -> Tensor2 {
    let data = grad_out
        .data
        .iter()
        .zip(&input.data)
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor2 {
        data,
        channels: input.channels,
        len: input.len,
    }
}

pub fn avgpool2_forward(input: &Tensor2) -> Result<Tensor2> {
    if input.len % 2 != 0 {
        return Err(Error::Shape(format!(
            "avgpool2 needs an even length, got {}",
            input.len
        )));
    }
    let t_out = input.len / 2;
    let mut out = Tensor2::zeros(input.channels, t_out);
    for c in 0..input.channels {
        let in_ch = input.channel(c);
        let out_ch = &mut out.data[c * t_out..(c + 1) * t_out];
        for (o, pair) in out_ch.iter_mut().zip(in_ch.chunks_exact(2)) {
            *o = (pair[0] + pair[1]) / 2.0;
        }
    }
    Ok(out)
}

pub fn avgpool2_backward(grad_out: &Tensor2) -> Tensor2 {
    let t_in = grad_out.len * 2;
    let mut grad_in = Tensor2::zeros(grad_out.channels, t_in);
    for c in 0..grad_out.channels {
        let g_ch = grad_out.channel(c);
        let gi_ch = &mut grad_in.data[c * t_in..(c + 1) * t_in];
        for (pair, &g) in gi_ch.chunks_exact_mut(2).zip(g_ch) {
            pair[0] = g / 2.0;
            pair[1] = g / 2.0;
        }
    }
    grad_in
}

/// `CxT -> 1x(C*T)` in channel-major order; the data is already laid out
/// that way, so only the shape changes.
pub fn flatten_forward(input: &Tensor2) -> Tensor2 {
    input.clone().reshaped(1, input.channels * input.len)
}

pub fn flatten_backward(grad_out: &Tensor2, channels: usize, len: usize) -> Tensor2 {
    grad_out.clone().reshaped(channels, len)
}

/// Per-layer activation cache recorded by a forward pass. Backward may
/// only run once per forward.
#[derive(Debug, Default)]
pub struct TapeState {
    inputs: Vec<Tensor2>,
    consumed: bool,
}

impl TapeState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cached input of layer `i` from the most recent forward pass.
    pub fn layer_input(&self, i: usize) -> Option<&Tensor2> {
        self.inputs.get(i)
    }
}

/// Gradient of one layer's parameters; empty for layers without any.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrads {
    fn empty() -> Self {
        Self {
            weights: Vec::new(),
            bias: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty() && self.bias.is_empty()
    }
}

/// Gradients of a scalar loss with respect to every parameter and the input.
/// `layers[i]` lines up with the network's layer `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub input: Tensor2,
}

impl Gradients {
    /// Elementwise accumulate (used to sum per-example gradients).
    pub fn add_assign(&mut self, other: &Gradients) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        for (x, y) in self.input.data.iter_mut().zip(&other.input.data) {
            *x += y;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            for x in &mut g.weights {
                *x *= factor;
            }
            for x in &mut g.bias {
                *x *= factor;
            }
        }
        for x in &mut self.input.data {
            *x *= factor;
        }
    }
}

/// Run `input` through the layer chain, recording each layer's input on the
/// tape. The tape is reset and re-armed on every call.
pub fn forward(layers: &[Layer], input: &Tensor2, tape: &mut TapeState) -> Result<Tensor2> {
    tape.inputs.clear();
    tape.consumed = false;
    let mut current = input.clone();
    for layer in layers {
        let next = layer.forward(&current)?;
        tape.inputs.push(current);
        current = next;
    }
    Ok(current)
}

/// Forward without recording; for inference.
pub fn forward_inference(layers: &[Layer], input: &Tensor2) -> Result<Tensor2> {
    let mut current = input.clone();
    for layer in layers {
        current = layer.forward(&current)?;
    }
    Ok(current)
}

/// Propagate `grad_output` back through the chain, consuming the tape.
pub fn backward(layers: &[Layer], grad_output: &Tensor2, tape: &mut TapeState) -> Result<Gradients> {
    if tape.consumed {
        return Err(Error::Tape("tape already consumed by a previous backward"));
    }
    if tape.inputs.len() != layers.len() {
        return Err(Error::Tape("tape does not match this layer chain; run forward first"));
    }
    tape.consumed = true;
    let mut grad = grad_output.clone();
    let mut layer_grads = vec![LayerGrads::empty(); layers.len()];
    for (i, layer) in layers.iter().enumerate().rev() {
        let (grad_in, grads) = layer.backward(&grad, &tape.inputs[i]);
        layer_grads[i] = grads;
        grad = grad_in;
    }
    Ok(Gradients {
        layers: layer_grads,
        input: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t2(channels: usize, len: usize, data: &[f64]) -> Tensor2 {
        Tensor2::new(channels, len, data.to_vec()).unwrap()
    }

    /// Brute-force cross-correlation with explicit zero padding; the
    /// independent oracle for the sliced implementation.
    fn conv_oracle(input: &Tensor2, conv: &ConvLayer) -> Tensor2 {
        let t = input.len();
        let pad = (conv.kernel / 2) as isize;
        let mut out = Tensor2::zeros(conv.c_out, t);
        for co in 0..conv.c_out {
            for pos in 0..t {
                let mut acc = conv.bias[co];
                for ci in 0..conv.c_in {
                    for k in 0..conv.kernel {
                        let src = pos as isize + k as isize - pad;
                        if src >= 0 && (src as usize) < t {
                            acc += conv.weights[(co * conv.c_in + ci) * conv.kernel + k]
                                * input.channel(ci)[src as usize];
                        }
                    }
                }
                out.data_mut()[co * t + pos] = acc;
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel() {
        let mut conv = ConvLayer::zeroed(1, 1, 3).unwrap();
        conv.weights = vec![0.0, 1.0, 0.0];
        let input = t2(1, 3, &[1.0, 2.0, 3.0]);
        let out = conv.forward(&input).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv_edge_detector_hand_value() {
        // Cross-correlation of [1,2,3] with [1,0,-1], zero padded:
        // out[0] = 0*1 + 1*0 + 2*(-1) = -2
        // out[1] = 1*1 + 2*0 + 3*(-1) = -2
        // out[2] = 2*1 + 3*0 + 0*(-1) = 2
        let mut conv = ConvLayer::zeroed(1, 1, 3).unwrap();
        conv.weights = vec![1.0, 0.0, -1.0];
        let input = t2(1, 3, &[1.0, 2.0, 3.0]);
        let out = conv.forward(&input).unwrap();
        assert_eq!(out.data(), &[-2.0, -2.0, 2.0]);
        let oracle = conv_oracle(&input, &conv);
        assert_eq!(out.data(), oracle.data());
    }

    #[test]
    fn conv_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let c_in = rng.random_range(1..4usize);
            let c_out = rng.random_range(1..4usize);
            let t = rng.random_range(1..20usize);
            let mut conv = ConvLayer::zeroed(c_in, c_out, 3).unwrap();
            conv.weights = (0..conv.weights.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            conv.bias = (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
            let input = Tensor2::new(
                c_in,
                t,
                (0..c_in * t).map(|_| rng.random_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let fast = conv.forward(&input).unwrap();
            let slow = conv_oracle(&input, &conv);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let conv = ConvLayer::zeroed(2, 1, 3).unwrap();
        let input = t2(1, 4, &[1.0; 4]);
        assert!(matches!(conv.forward(&input), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_backward_bias_and_identity() {
        let mut conv = ConvLayer::zeroed(1, 1, 3).unwrap();
        conv.weights = vec![0.0, 1.0, 0.0];
        let input = t2(1, 4, &[1.0, -2.0, 3.0, 0.5]);
        let gout = t2(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let (gin, _, gb) = conv.backward(&gout, &input);
        // bias grad is the plain sum over positions
        assert_eq!(gb, vec![10.0]);
        // identity kernel passes the gradient straight through
        assert_eq!(gin.data(), gout.data());
    }

    #[test]
    fn relu_forward_backward_and_idempotence() {
        let input = t2(1, 2, &[-1.0, 2.0]);
        let out = relu_forward(&input);
        assert_eq!(out.data(), &[0.0, 2.0]);
        let gout = t2(1, 2, &[5.0, 7.0]);
        let gin = relu_backward(&gout, &input);
        assert_eq!(gin.data(), &[0.0, 7.0]);
        assert_eq!(relu_forward(&out).data(), out.data());
    }

    #[test]
    fn avgpool_forward_backward() {
        let input = t2(1, 4, &[1.0, 3.0, 5.0, 7.0]);
        let out = avgpool2_forward(&input).unwrap();
        assert_eq!(out.data(), &[2.0, 6.0]);
        let gout = t2(1, 2, &[1.0, 1.0]);
        let gin = avgpool2_backward(&gout);
        assert_eq!(gin.data(), &[0.5, 0.5, 0.5, 0.5]);
        let odd = t2(1, 3, &[1.0, 2.0, 3.0]);
        assert!(matches!(avgpool2_forward(&odd), Err(Error::Shape(_))));
    }

    #[test]
    fn flatten_round_trip() {
        let input = t2(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let flat = flatten_forward(&input);
        assert_eq!(flat.channels(), 1);
        assert_eq!(flat.len(), 4);
        assert_eq!(flat.data(), &[1.0, 2.0, 3.0, 4.0]);
        let back = flatten_backward(&flat, 2, 2);
        assert_eq!(back, input);
    }

    #[test]
    fn dense_forward_hand_values() {
        let mut dense = DenseLayer::zeroed(2, 2);
        dense.weights = vec![1.0, 0.0, 0.0, 1.0];
        let input = t2(1, 2, &[4.0, 5.0]);
        assert_eq!(dense.forward(&input).unwrap().data(), &[4.0, 5.0]);

        let mut dense = DenseLayer::zeroed(2, 1);
        dense.weights = vec![1.0, 2.0];
        dense.bias = vec![3.0];
        // 1*4 + 2*5 + 3 = 17
        assert_eq!(dense.forward(&input).unwrap().data(), &[17.0]);
        let bad = t2(1, 3, &[1.0; 3]);
        assert!(matches!(dense.forward(&bad), Err(Error::Shape(_))));
    }

    #[test]
    fn forward_never_mutates_inputs_or_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut conv = ConvLayer::zeroed(2, 3, 3).unwrap();
        conv.weights = (0..conv.weights.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let layers = vec![Layer::Conv1d(conv.clone()), Layer::Relu, Layer::AvgPool2];
        let input = Tensor2::new(2, 8, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let input_before = input.clone();
        let mut tape = TapeState::new();
        let out = forward(&layers, &input, &mut tape).unwrap();
        assert_eq!(input, input_before);
        assert!(out.all_finite());
        match &layers[0] {
            Layer::Conv1d(c) => assert_eq!(c.weights, conv.weights),
            _ => unreachable!(),
        }
    }

    #[test]
    fn tape_consumed_exactly_once() {
        let layers = vec![Layer::Relu];
        let input = t2(1, 2, &[1.0, -1.0]);
        let mut tape = TapeState::new();
        let out = forward(&layers, &input, &mut tape).unwrap();
        let gout = Tensor2::zeros(out.channels(), out.len());
        assert!(backward(&layers, &gout, &mut tape).is_ok());
        assert!(matches!(
            backward(&layers, &gout, &mut tape),
            Err(Error::Tape(_))
        ));
        // backward without any forward
        let mut fresh = TapeState::new();
        assert!(matches!(
            backward(&layers, &gout, &mut fresh),
            Err(Error::Tape(_))
        ));
    }
}

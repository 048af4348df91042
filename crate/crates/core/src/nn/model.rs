//! Layer vocabulary, the model tensor, forward passes with recording points
//! and backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::linalg::{gemm, Op};
use crate::nn::loss::{LossKind, TargetBatch};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Sigmoid,
    Identity,
}

impl Activation {
    /// Applies the activation in place to a batch of rows of width `width`.
    fn apply(self, z: &mut [f64], width: usize) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                for row in z.chunks_exact_mut(width) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= sum);
                }
            }
        }
    }

    /// Multiplies `grad` (dL/d output) by d output / d pre-activation, given
    /// the post-activation `out`. Softmax is only valid fused with a loss.
    fn backprop(self, grad: &mut [f64], out: &[f64]) -> Result<()> {
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, &o)| {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Sigmoid => grad.iter_mut().zip(out).for_each(|(g, &o)| *g *= o * (1.0 - o)),
            Activation::Softmax => {
                return Err(Error::InvalidModel(
                    "softmax is only supported on the output layer".into(),
                ))
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[outputs, inputs]`
    pub weights: Tensor,
    /// `[outputs]`
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding that keeps the spatial size for stride 1.
    Same,
}

/// Stride-1 2-D convolution over channels-last (`H x W x C`) inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    /// `[kernel_h, kernel_w, in_channels, out_channels]`
    pub kernel: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub activation: Activation,
    pub padding: Padding,
    /// Spatial size of the input, `[height, width]`.
    pub input_hw: [usize; 2],
}

impl Conv2d {
    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.kernel.shape();
        (s[0], s[1], s[2], s[3])
    }

    fn positions(&self) -> usize {
        self.input_hw[0] * self.input_hw[1]
    }

    /// Examples unrolled at a time, keeping the column buffer cache-sized.
    fn chunk_examples(&self) -> usize {
        (1024 / self.positions().max(1)).max(1)
    }

    /// Unrolls a batch of inputs into `(batch * H * W) x (kh * kw * cin)`.
    fn im2col(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let (kh, kw, cin, _) = self.dims();
        let [h, w] = self.input_hw;
        let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
        let kkc = kh * kw * cin;
        let mut cols = vec![0.0; batch * h * w * kkc];
        for b in 0..batch {
            for y in 0..h {
                for x in 0..w {
                    let row = ((b * h + y) * w + x) * kkc;
                    for dy in 0..kh {
                        let iy = y as isize + dy as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for dx in 0..kw {
                            let ix = x as isize + dx as isize - pw as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let src = ((b * h + iy as usize) * w + ix as usize) * cin;
                            let dst = row + (dy * kw + dx) * cin;
                            cols[dst..dst + cin].copy_from_slice(&input[src..src + cin]);
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-adds column gradients back onto the input layout.
    fn col2im(&self, dcols: &[f64], batch: usize) -> Vec<f64> {
        let (kh, kw, cin, _) = self.dims();
        let [h, w] = self.input_hw;
        let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
        let kkc = kh * kw * cin;
        let mut dx_out = vec![0.0; batch * h * w * cin];
        for b in 0..batch {
            for y in 0..h {
                for x in 0..w {
                    let row = ((b * h + y) * w + x) * kkc;
                    for dy in 0..kh {
                        let iy = y as isize + dy as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for dx in 0..kw {
                            let ix = x as isize + dx as isize - pw as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = ((b * h + iy as usize) * w + ix as usize) * cin;
                            let src = row + (dy * kw + dx) * cin;
                            for c in 0..cin {
                                dx_out[dst + c] += dcols[src + c];
                            }
                        }
                    }
                }
            }
        }
        dx_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
}

impl Layer {
    pub fn input_len(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.shape()[1],
            Layer::Conv2d(c) => c.positions() * c.kernel.shape()[2],
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.shape()[0],
            Layer::Conv2d(c) => c.positions() * c.kernel.shape()[3],
        }
    }

    /// Shape of one example's output: `[units]` or `[H, W, C]`.
    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            Layer::Dense(d) => vec![d.weights.shape()[0]],
            Layer::Conv2d(c) => vec![c.input_hw[0], c.input_hw[1], c.kernel.shape()[3]],
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::Dense(d) => d.activation,
            Layer::Conv2d(c) => c.activation,
        }
    }

    /// `[weights, bias]`
    pub fn params(&self) -> [&Tensor; 2] {
        match self {
            Layer::Dense(d) => [&d.weights, &d.bias],
            Layer::Conv2d(c) => [&c.kernel, &c.bias],
        }
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 2] {
        match self {
            Layer::Dense(d) => [&mut d.weights, &mut d.bias],
            Layer::Conv2d(c) => [&mut c.kernel, &mut c.bias],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Pre-activation output for a batch.
    fn linear(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let out_len = self.output_len();
        let mut z = vec![0.0; batch * out_len];
        match self {
            Layer::Dense(d) => {
                let (o, i) = (d.weights.shape()[0], d.weights.shape()[1]);
                for row in z.chunks_exact_mut(o) {
                    row.copy_from_slice(d.bias.values());
                }
                gemm(batch, i, o, 1.0, input, Op::N, d.weights.values(), Op::T, 1.0, &mut z);
            }
            Layer::Conv2d(c) => {
                let (kh, kw, cin, cout) = c.dims();
                let kkc = kh * kw * cin;
                let (in_len, out_len) = (self.input_len(), self.output_len());
                for row in z.chunks_exact_mut(cout) {
                    row.copy_from_slice(c.bias.values());
                }
                let per = c.chunk_examples();
                for start in (0..batch).step_by(per) {
                    let nb = per.min(batch - start);
                    let cols = c.im2col(&input[start * in_len..(start + nb) * in_len], nb);
                    let zc = &mut z[start * out_len..(start + nb) * out_len];
                    gemm(
                        nb * c.positions(),
                        kkc,
                        cout,
                        1.0,
                        &cols,
                        Op::N,
                        c.kernel.values(),
                        Op::N,
                        1.0,
                        zc,
                    );
                }
            }
        }
        z
    }

    pub fn forward(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let mut z = self.linear(input, batch);
        self.activation().apply(&mut z, self.output_len());
        z
    }

    /// Given `delta = dL/dz` for this layer's pre-activation, accumulates
    /// parameter gradients and returns `dL/d input` when requested.
    fn backward(
        &self,
        input: &[f64],
        delta: &[f64],
        batch: usize,
        grad: &mut LayerGrad,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        match self {
            Layer::Dense(d) => {
                let (o, i) = (d.weights.shape()[0], d.weights.shape()[1]);
                gemm(o, batch, i, 1.0, delta, Op::T, input, Op::N, 0.0, &mut grad.weights);
                column_sums(delta, o, &mut grad.bias);
                want_input_grad.then(|| {
                    let mut dx = vec![0.0; batch * i];
                    gemm(batch, o, i, 1.0, delta, Op::N, d.weights.values(), Op::N, 0.0, &mut dx);
                    dx
                })
            }
            Layer::Conv2d(c) => {
                let (kh, kw, cin, cout) = c.dims();
                let kkc = kh * kw * cin;
                let (in_len, out_len) = (self.input_len(), self.output_len());
                column_sums(delta, cout, &mut grad.bias);
                grad.weights.iter_mut().for_each(|g| *g = 0.0);
                let mut dx = want_input_grad.then(|| vec![0.0; batch * in_len]);
                let per = c.chunk_examples();
                let mut dcols = Vec::new();
                for start in (0..batch).step_by(per) {
                    let nb = per.min(batch - start);
                    let rows = nb * c.positions();
                    let cols = c.im2col(&input[start * in_len..(start + nb) * in_len], nb);
                    let dc = &delta[start * out_len..(start + nb) * out_len];
                    gemm(kkc, rows, cout, 1.0, &cols, Op::T, dc, Op::N, 1.0, &mut grad.weights);
                    if let Some(dx) = dx.as_mut() {
                        dcols.clear();
                        dcols.resize(rows * kkc, 0.0);
                        gemm(
                            rows,
                            cout,
                            kkc,
                            1.0,
                            dc,
                            Op::N,
                            c.kernel.values(),
                            Op::T,
                            0.0,
                            &mut dcols,
                        );
                        dx[start * in_len..(start + nb) * in_len].copy_from_slice(&c.col2im(&dcols, nb));
                    }
                }
                dx
            }
        }
    }
}

fn column_sums(m: &[f64], width: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for row in m.chunks_exact(width) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Gradient of one layer's parameters, laid out like `Layer::params`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelTensor) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| {
                    let [w, b] = l.params();
                    LayerGrad {
                        weights: vec![0.0; w.len()],
                        bias: vec![0.0; b.len()],
                    }
                })
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
    }
}

/// Post-activation values captured at the recording points for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSnapshot {
    pub layers: Vec<Vec<f64>>,
}

impl ActivationSnapshot {
    /// Layer-major concatenation of all recorded values.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.concat()
    }
}

/// All parameters of a network plus the indices of layers whose outputs are
/// recorded. Layers of different widths are stored ragged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTensor {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    pub recording_points: Vec<usize>,
}

impl ModelTensor {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, recording_points: Vec<usize>) -> Result<Self> {
        let model = ModelTensor {
            input_shape,
            layers,
            recording_points,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        let mut width: usize = self.input_shape.iter().product();
        let mut shape = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.input_len() != width {
                return Err(Error::ShapeMismatch {
                    expected: vec![layer.input_len()],
                    actual: shape,
                });
            }
            let [w, b] = layer.params();
            match layer {
                Layer::Dense(d) => {
                    if w.shape().len() != 2 || b.shape() != [d.weights.shape()[0]] {
                        return Err(Error::InvalidModel(format!("dense layer {i} has bad parameter shapes")));
                    }
                }
                Layer::Conv2d(c) => {
                    let s = w.shape();
                    if s.len() != 4 || b.shape() != [s[3]] || s[0] % 2 == 0 || s[1] % 2 == 0 {
                        return Err(Error::InvalidModel(format!(
                            "conv layer {i} has bad kernel shape {s:?}"
                        )));
                    }
                    if let [_, _, _] = shape[..] {
                        if shape[..2] != c.input_hw {
                            return Err(Error::ShapeMismatch {
                                expected: vec![c.input_hw[0], c.input_hw[1], s[2]],
                                actual: shape,
                            });
                        }
                    }
                }
            }
            if layer.activation() == Activation::Softmax && i + 1 != self.layers.len() {
                return Err(Error::InvalidModel(
                    "softmax is only allowed on the output layer".into(),
                ));
            }
            if layer.params().iter().any(|t| t.values().iter().any(|v| !v.is_finite())) {
                return Err(Error::InvalidModel(format!("layer {i} has non-finite parameters")));
            }
            width = layer.output_len();
            shape = layer.output_shape();
        }
        if self.recording_points.windows(2).any(|w| w[0] >= w[1])
            || self.recording_points.iter().any(|&r| r >= self.layers.len())
        {
            return Err(Error::InvalidModel(
                "recording points must be increasing layer indices".into(),
            ));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_len)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn recorded_widths(&self) -> Vec<usize> {
        self.recording_points
            .iter()
            .map(|&i| self.layers[i].output_len())
            .collect()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut())
    }

    fn check_batch(&self, inputs: &[f64], batch: usize) -> Result<()> {
        if inputs.len() != batch * self.input_len() {
            let mut expected = vec![batch];
            expected.extend(&self.input_shape);
            return Err(Error::ShapeMismatch {
                expected,
                actual: vec![inputs.len()],
            });
        }
        Ok(())
    }

    /// Post-activation outputs of every layer for a batch.
    pub fn forward_all(&self, inputs: &[f64], batch: usize) -> Result<Vec<Vec<f64>>> {
        self.check_batch(inputs, batch)?;
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = outs.last().map_or(inputs, Vec::as_slice);
            outs.push(layer.forward(x, batch));
        }
        Ok(outs)
    }

    /// Final-layer output for a batch.
    pub fn predict(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward_all(inputs, batch)?.pop().unwrap_or_default())
    }

    /// Output for a batch plus the flattened recorded activations per
    /// example (layer-major, `batch x sum(recorded widths)`).
    pub fn forward_recorded(&self, inputs: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut outs = self.forward_all(inputs, batch)?;
        let widths = self.recorded_widths();
        let total: usize = widths.iter().sum();
        let mut recorded = vec![0.0; batch * total];
        for b in 0..batch {
            let mut off = b * total;
            for (&layer, &w) in self.recording_points.iter().zip(&widths) {
                recorded[off..off + w].copy_from_slice(&outs[layer][b * w..(b + 1) * w]);
                off += w;
            }
        }
        Ok((outs.pop().unwrap_or_default(), recorded))
    }

    /// Runs one example and captures the recording-point activations.
    pub fn forward_with_recording(&self, input: &Tensor) -> Result<(Tensor, ActivationSnapshot)> {
        if input.len() != self.input_len() {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.clone(),
                actual: input.shape().to_vec(),
            });
        }
        let mut outs = self.forward_all(input.values(), 1)?;
        let snapshot = ActivationSnapshot {
            layers: self.recording_points.iter().map(|&i| outs[i].clone()).collect(),
        };
        let output = Tensor::new(self.layers.last().unwrap().output_shape(), outs.pop().unwrap())?;
        Ok((output, snapshot))
    }

    /// Mean loss over the batch and its gradient with respect to every
    /// parameter. The loss must match the output activation (softmax with
    /// categorical cross-entropy, sigmoid with binary cross-entropy).
    pub fn backward(
        &self,
        inputs: &[f64],
        batch: usize,
        targets: TargetBatch<'_>,
        loss: LossKind,
    ) -> Result<(f64, Gradients)> {
        let outs = self.forward_all(inputs, batch)?;
        let last = self.layers.last().unwrap();
        let output = outs.last().unwrap();
        let loss_value = loss.batch_loss(output, last.output_len(), batch, targets)?;
        let mut delta = loss.output_delta(last.activation(), output, last.output_len(), batch, targets)?;

        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { inputs } else { &outs[l - 1] };
            let dx = self.layers[l].backward(input, &delta, batch, &mut grads.layers[l], l > 0);
            if let Some(mut dx) = dx {
                self.layers[l - 1].activation().backprop(&mut dx, &outs[l - 1])?;
                delta = dx;
            }
        }
        Ok((loss_value, grads))
    }
}

/// Fluent construction of models with Glorot-uniform weights and zero biases.
pub struct ModelBuilder {
    input_shape: Vec<usize>,
    shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    recording_points: Vec<usize>,
}

enum LayerSpec {
    Dense {
        inputs: usize,
        units: usize,
        activation: Activation,
    },
    Conv {
        hw: [usize; 2],
        cin: usize,
        filters: usize,
        kernel: [usize; 2],
        activation: Activation,
    },
}

impl ModelBuilder {
    pub fn new(input_shape: Vec<usize>) -> Self {
        ModelBuilder {
            shape: input_shape.clone(),
            input_shape,
            specs: Vec::new(),
            recording_points: Vec::new(),
        }
    }

    pub fn dense(mut self, units: usize, activation: Activation) -> Self {
        let inputs = self.shape.iter().product();
        self.specs.push(LayerSpec::Dense {
            inputs,
            units,
            activation,
        });
        self.shape = vec![units];
        self
    }

    /// Same-padded convolution; the current shape must be `[H, W, C]`.
    pub fn conv2d(mut self, filters: usize, kernel: [usize; 2], activation: Activation) -> Self {
        let (hw, cin) = match self.shape[..] {
            [h, w, c] => ([h, w], c),
            [h, w] => ([h, w], 1),
            _ => ([0, 0], 0),
        };
        self.specs.push(LayerSpec::Conv {
            hw,
            cin,
            filters,
            kernel,
            activation,
        });
        self.shape = vec![hw[0], hw[1], filters];
        self
    }

    /// Records the output of the most recently added layer.
    pub fn record(mut self) -> Self {
        if let Some(i) = self.specs.len().checked_sub(1) {
            self.recording_points.push(i);
        }
        self
    }

    pub fn build(self, seed: u64) -> Result<ModelTensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |shape: Vec<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
            Tensor::new(shape, values)
        };
        let mut layers = Vec::with_capacity(self.specs.len());
        for spec in self.specs {
            layers.push(match spec {
                LayerSpec::Dense {
                    inputs,
                    units,
                    activation,
                } => Layer::Dense(Dense {
                    weights: glorot(vec![units, inputs], inputs, units)?,
                    bias: Tensor::zeros(vec![units]),
                    activation,
                }),
                LayerSpec::Conv {
                    hw,
                    cin,
                    filters,
                    kernel,
                    activation,
                } => {
                    if cin == 0 {
                        return Err(Error::InvalidModel("conv2d needs an [H, W, C] input".into()));
                    }
                    let area = kernel[0] * kernel[1];
                    Layer::Conv2d(Conv2d {
                        kernel: glorot(vec![kernel[0], kernel[1], cin, filters], area * cin, area * filters)?,
                        bias: Tensor::zeros(vec![filters]),
                        activation,
                        padding: Padding::Same,
                        input_hw: hw,
                    })
                }
            });
        }
        let input_shape = match self.input_shape[..] {
            [h, w] => vec![h, w, 1],
            _ => self.input_shape,
        };
        ModelTensor::new(input_shape, layers, self.recording_points)
    }
}

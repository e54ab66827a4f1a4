use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mode, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding; the output shrinks by `kernel - 1`.
    Valid,
    /// Zero padding of `kernel / 2` on each side; odd kernels keep the size.
    Same,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: Padding,
    },
    MaxPool {
        size: usize,
    },
    Relu,
    BatchNorm,
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn conv3x3(filters: usize, padding: Padding) -> Self {
        LayerSpec::Conv2d {
            filters,
            kernel_h: 3,
            kernel_w: 3,
            padding,
        }
    }

    /// Output `(channels, height, width)` for an input shape.
    pub fn output_shape(&self, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let out = match *self {
            LayerSpec::Conv2d {
                filters,
                kernel_h,
                kernel_w,
                padding,
            } => {
                if filters == 0 || kernel_h == 0 || kernel_w == 0 {
                    return Err(Error::invalid("convolution sizes must be positive"));
                }
                let (ph, pw) = pads(padding, kernel_h, kernel_w);
                let oh = (h + 2 * ph).saturating_sub(kernel_h - 1);
                let ow = (w + 2 * pw).saturating_sub(kernel_w - 1);
                (filters, oh, ow)
            }
            LayerSpec::MaxPool { size } => {
                if size == 0 {
                    return Err(Error::invalid("pool size must be positive"));
                }
                (c, h / size, w / size)
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
                }
                (c, h, w)
            }
            LayerSpec::Relu | LayerSpec::BatchNorm | LayerSpec::Softmax => (c, h, w),
            LayerSpec::Flatten => (c * h * w, 1, 1),
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(Error::invalid("dense units must be positive"));
                }
                if h != 1 || w != 1 {
                    return Err(Error::Shape(format!(
                        "dense layer needs flattened input, got {c}x{h}x{w}"
                    )));
                }
                (units, 1, 1)
            }
        };
        if out.0 == 0 || out.1 == 0 || out.2 == 0 {
            return Err(Error::Shape(format!(
                "{self:?} maps {c}x{h}x{w} to an empty {}x{}x{}",
                out.0, out.1, out.2
            )));
        }
        Ok(out)
    }
}

fn pads(padding: Padding, kh: usize, kw: usize) -> (usize, usize) {
    match padding {
        Padding::Valid => (0, 0),
        Padding::Same => (kh / 2, kw / 2),
    }
}

fn he_uniform(n: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

fn check_input(x: &Tensor, expected: (usize, usize, usize), what: &str) -> Result<()> {
    if x.item_shape() != expected {
        return Err(Error::Shape(format!(
            "{what} expects {expected:?}, got {:?}",
            x.item_shape()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_shape: (usize, usize, usize),
    pub filters: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: (usize, usize),
    /// `(filters, in_channels, kh, kw)`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    input: Option<Tensor>,
}

impl Conv2d {
    fn out_hw(&self) -> (usize, usize) {
        let (_, h, w) = self.in_shape;
        (
            h + 2 * self.pad.0 + 1 - self.kh,
            w + 2 * self.pad.1 + 1 - self.kw,
        )
    }

    /// Output columns `x` whose tap `v` lands inside the input row.
    fn span(&self, v: usize, ow: usize, w: usize) -> (usize, usize) {
        let lo = self.pad.1.saturating_sub(v);
        let hi = (w + self.pad.1).saturating_sub(v).min(ow);
        (lo, hi.max(lo))
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        check_input(x, self.in_shape, "conv2d")?;
        let (ci, h, w) = self.in_shape;
        let (oh, ow) = self.out_hw();
        let n = x.batch();
        let mut out = Tensor::zeros([n, self.filters, oh, ow]);
        for b in 0..n {
            for o in 0..self.filters {
                let ob = ((b * self.filters + o) * oh) * ow;
                out.data[ob..ob + oh * ow].fill(self.bias[o]);
                for i in 0..ci {
                    let ib = (b * ci + i) * h * w;
                    for u in 0..self.kh {
                        for v in 0..self.kw {
                            let wv = self.weight[((o * ci + i) * self.kh + u) * self.kw + v];
                            let (x0, x1) = self.span(v, ow, w);
                            for y in 0..oh {
                                let iy = y + u;
                                if iy < self.pad.0 || iy - self.pad.0 >= h {
                                    continue;
                                }
                                let irow = ib + (iy - self.pad.0) * w;
                                let orow = ob + y * ow;
                                for xx in x0..x1 {
                                    out.data[orow + xx] +=
                                        wv * x.data[irow + xx + v - self.pad.1];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or(Error::NoForwardCache)?;
        let (ci, h, w) = self.in_shape;
        let (oh, ow) = self.out_hw();
        let n = x.batch();
        let mut gx = Tensor::zeros(x.shape);
        for b in 0..n {
            for o in 0..self.filters {
                let ob = ((b * self.filters + o) * oh) * ow;
                self.grad_bias[o] += g.data[ob..ob + oh * ow].iter().sum::<f64>();
                for i in 0..ci {
                    let ib = (b * ci + i) * h * w;
                    for u in 0..self.kh {
                        for v in 0..self.kw {
                            let widx = ((o * ci + i) * self.kh + u) * self.kw + v;
                            let wv = self.weight[widx];
                            let (x0, x1) = self.span(v, ow, w);
                            let mut gw = 0.0;
                            for y in 0..oh {
                                let iy = y + u;
                                if iy < self.pad.0 || iy - self.pad.0 >= h {
                                    continue;
                                }
                                let irow = ib + (iy - self.pad.0) * w;
                                let orow = ob + y * ow;
                                for xx in x0..x1 {
                                    let gi = g.data[orow + xx];
                                    let ii = irow + xx + v - self.pad.1;
                                    gw += gi * x.data[ii];
                                    gx.data[ii] += gi * wv;
                                }
                            }
                            self.grad_weight[widx] += gw;
                        }
                    }
                }
            }
        }
        Ok(gx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool {
    pub size: usize,
    in_shape: [usize; 4],
    argmax: Vec<usize>,
}

impl MaxPool {
    fn forward(&mut self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape;
        let (oh, ow) = (h / self.size, w / self.size);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        self.argmax = vec![0; out.data.len()];
        for p in 0..n * c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = usize::MAX;
                    for u in 0..self.size {
                        for v in 0..self.size {
                            let i = (p * h + y * self.size + u) * w + xx * self.size + v;
                            // the first maximum wins ties
                            if best == usize::MAX || x.data[i] > x.data[best] {
                                best = i;
                            }
                        }
                    }
                    let o = (p * oh + y) * ow + xx;
                    out.data[o] = x.data[best];
                    self.argmax[o] = best;
                }
            }
        }
        self.in_shape = x.shape;
        out
    }

    fn backward(&self, g: &Tensor) -> Tensor {
        let mut gx = Tensor::zeros(self.in_shape);
        for (o, &i) in self.argmax.iter().enumerate() {
            gx.data[i] += g.data[o];
        }
        gx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
    xhat: Option<Tensor>,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            grad_gamma: vec![0.0; channels],
            grad_beta: vec![0.0; channels],
            xhat: None,
            inv_std: Vec::new(),
            mode: Mode::Eval,
        }
    }

    /// Statistics are taken per channel over the batch and spatial axes.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape;
        if c != self.channels {
            return Err(Error::Shape(format!(
                "batch norm over {} channels got {c}",
                self.channels
            )));
        }
        if mode == Mode::Train && n < 2 {
            return Err(Error::invalid("batch norm needs at least 2 items in training"));
        }
        let hw = h * w;
        let mut xhat = Tensor::zeros(x.shape);
        let mut out = Tensor::zeros(x.shape);
        self.inv_std = vec![0.0; c];
        for ch in 0..c {
            let idx = |b: usize| (b * c + ch) * hw;
            let (mean, var) = match mode {
                Mode::Train => {
                    let m = (n * hw) as f64;
                    let mean = (0..n).map(|b| x.data[idx(b)..idx(b) + hw].iter().sum::<f64>()).sum::<f64>() / m;
                    let var = (0..n)
                        .map(|b| {
                            x.data[idx(b)..idx(b) + hw]
                                .iter()
                                .map(|v| (v - mean) * (v - mean))
                                .sum::<f64>()
                        })
                        .sum::<f64>()
                        / m;
                    self.running_mean[ch] =
                        BN_MOMENTUM * self.running_mean[ch] + (1.0 - BN_MOMENTUM) * mean;
                    self.running_var[ch] =
                        BN_MOMENTUM * self.running_var[ch] + (1.0 - BN_MOMENTUM) * var;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean[ch], self.running_var[ch]),
            };
            let inv = 1.0 / (var + BN_EPS).sqrt();
            self.inv_std[ch] = inv;
            for b in 0..n {
                for k in idx(b)..idx(b) + hw {
                    let xh = (x.data[k] - mean) * inv;
                    xhat.data[k] = xh;
                    out.data[k] = self.gamma[ch] * xh + self.beta[ch];
                }
            }
        }
        self.xhat = Some(xhat);
        self.mode = mode;
        Ok(out)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let xhat = self.xhat.as_ref().ok_or(Error::NoForwardCache)?;
        let [n, c, h, w] = xhat.shape;
        let hw = h * w;
        let m = (n * hw) as f64;
        let mut gx = Tensor::zeros(xhat.shape);
        for ch in 0..c {
            let items = || (0..n).flat_map(move |b| (b * c + ch) * hw..(b * c + ch + 1) * hw);
            let (mut sg, mut sgx) = (0.0, 0.0);
            for k in items() {
                sg += g.data[k];
                sgx += g.data[k] * xhat.data[k];
            }
            self.grad_beta[ch] += sg;
            self.grad_gamma[ch] += sgx;
            let scale = self.gamma[ch] * self.inv_std[ch];
            for k in items() {
                gx.data[k] = match self.mode {
                    Mode::Train => scale * (g.data[k] - sg / m - xhat.data[k] * sgx / m),
                    Mode::Eval => scale * g.data[k],
                };
            }
        }
        Ok(gx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub units: usize,
    /// `(units, inputs)`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    input: Option<Tensor>,
}

impl Dense {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        check_input(x, (self.inputs, 1, 1), "dense")?;
        let n = x.batch();
        let mut out = Tensor::zeros([n, self.units, 1, 1]);
        for b in 0..n {
            let xi = x.item(b);
            for u in 0..self.units {
                let row = &self.weight[u * self.inputs..(u + 1) * self.inputs];
                out.data[b * self.units + u] =
                    self.bias[u] + row.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        self.input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or(Error::NoForwardCache)?;
        let n = x.batch();
        let mut gx = Tensor::zeros(x.shape);
        for b in 0..n {
            let xi = &x.data[b * self.inputs..(b + 1) * self.inputs];
            let gxi = &mut gx.data[b * self.inputs..(b + 1) * self.inputs];
            for u in 0..self.units {
                let gu = g.data[b * self.units + u];
                self.grad_bias[u] += gu;
                let row = u * self.inputs;
                for k in 0..self.inputs {
                    self.grad_weight[row + k] += gu * xi[k];
                    gxi[k] += gu * self.weight[row + k];
                }
            }
        }
        Ok(gx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool(MaxPool),
    Relu { mask: Vec<bool> },
    BatchNorm(BatchNorm),
    Dropout { rate: f64, mask: Vec<f64> },
    Flatten { in_shape: [usize; 4] },
    Dense(Dense),
    Softmax { output: Option<Tensor> },
}

impl Layer {
    /// Instantiates a layer for the given input shape with seeded He-uniform weights.
    pub fn build(spec: &LayerSpec, input: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.output_shape(input)?;
        let (c, h, w) = input;
        Ok(match *spec {
            LayerSpec::Conv2d {
                filters,
                kernel_h,
                kernel_w,
                padding,
            } => {
                let n = filters * c * kernel_h * kernel_w;
                Layer::Conv2d(Conv2d {
                    in_shape: input,
                    filters,
                    kh: kernel_h,
                    kw: kernel_w,
                    pad: pads(padding, kernel_h, kernel_w),
                    weight: he_uniform(n, c * kernel_h * kernel_w, rng),
                    bias: vec![0.0; filters],
                    grad_weight: vec![0.0; n],
                    grad_bias: vec![0.0; filters],
                    input: None,
                })
            }
            LayerSpec::MaxPool { size } => Layer::MaxPool(MaxPool {
                size,
                in_shape: [0; 4],
                argmax: Vec::new(),
            }),
            LayerSpec::Relu => Layer::Relu { mask: Vec::new() },
            LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(c)),
            LayerSpec::Dropout { rate } => Layer::Dropout {
                rate,
                mask: Vec::new(),
            },
            LayerSpec::Flatten => Layer::Flatten { in_shape: [0; 4] },
            LayerSpec::Dense { units } => {
                let inputs = c * h * w;
                Layer::Dense(Dense {
                    inputs,
                    units,
                    weight: he_uniform(units * inputs, inputs, rng),
                    bias: vec![0.0; units],
                    grad_weight: vec![0.0; units * inputs],
                    grad_bias: vec![0.0; units],
                    input: None,
                })
            }
            LayerSpec::Softmax => Layer::Softmax { output: None },
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::MaxPool(l) => Ok(l.forward(x)),
            Layer::Relu { mask } => {
                *mask = x.data.iter().map(|&v| v > 0.0).collect();
                Ok(Tensor {
                    shape: x.shape,
                    data: x.data.iter().map(|&v| v.max(0.0)).collect(),
                })
            }
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Dropout { rate, mask } => {
                let keep = 1.0 - *rate;
                *mask = match mode {
                    Mode::Train => (0..x.data.len())
                        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect(),
                    Mode::Eval => vec![1.0; x.data.len()],
                };
                Ok(Tensor {
                    shape: x.shape,
                    data: x.data.iter().zip(mask.iter()).map(|(v, m)| v * m).collect(),
                })
            }
            Layer::Flatten { in_shape } => {
                *in_shape = x.shape;
                Ok(Tensor {
                    shape: [x.batch(), x.item_len(), 1, 1],
                    data: x.data.clone(),
                })
            }
            Layer::Dense(l) => l.forward(x),
            Layer::Softmax { output } => {
                let mut out = x.clone();
                let k = x.item_len();
                for row in out.data.chunks_mut(k) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= sum);
                }
                *output = Some(out.clone());
                Ok(out)
            }
        }
    }

    /// Gradient with respect to the layer input; parameter gradients accumulate.
    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.backward(g),
            Layer::MaxPool(l) => {
                if l.argmax.is_empty() {
                    return Err(Error::NoForwardCache);
                }
                Ok(l.backward(g))
            }
            Layer::Relu { mask } => {
                if mask.len() != g.data.len() {
                    return Err(Error::NoForwardCache);
                }
                Ok(Tensor {
                    shape: g.shape,
                    data: g
                        .data
                        .iter()
                        .zip(mask.iter())
                        .map(|(v, &m)| if m { *v } else { 0.0 })
                        .collect(),
                })
            }
            Layer::BatchNorm(l) => l.backward(g),
            Layer::Dropout { mask, .. } => {
                if mask.len() != g.data.len() {
                    return Err(Error::NoForwardCache);
                }
                Ok(Tensor {
                    shape: g.shape,
                    data: g.data.iter().zip(mask.iter()).map(|(v, m)| v * m).collect(),
                })
            }
            Layer::Flatten { in_shape } => {
                if in_shape[0] == 0 {
                    return Err(Error::NoForwardCache);
                }
                Ok(Tensor {
                    shape: *in_shape,
                    data: g.data.clone(),
                })
            }
            Layer::Dense(l) => l.backward(g),
            Layer::Softmax { output } => {
                let p = output.as_ref().ok_or(Error::NoForwardCache)?;
                let k = p.item_len();
                let mut gx = g.clone();
                for (gr, pr) in gx.data.chunks_mut(k).zip(p.data.chunks(k)) {
                    let dot: f64 = gr.iter().zip(pr).map(|(a, b)| a * b).sum();
                    for (gv, pv) in gr.iter_mut().zip(pr) {
                        *gv = pv * (*gv - dot);
                    }
                }
                Ok(gx)
            }
        }
    }

    /// Trainable parameters paired with their gradients.
    pub fn params_mut(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Conv2d(l) => vec![
                (&mut l.weight, &mut l.grad_weight),
                (&mut l.bias, &mut l.grad_bias),
            ],
            Layer::Dense(l) => vec![
                (&mut l.weight, &mut l.grad_weight),
                (&mut l.bias, &mut l.grad_bias),
            ],
            Layer::BatchNorm(l) => vec![
                (&mut l.gamma, &mut l.grad_gamma),
                (&mut l.beta, &mut l.grad_beta),
            ],
            _ => Vec::new(),
        }
    }

    /// Everything a checkpoint must store, including running statistics.
    pub fn state(&self) -> Vec<&Vec<f64>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta, &l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![
                &mut l.gamma,
                &mut l.beta,
                &mut l.running_mean,
                &mut l.running_var,
            ],
            _ => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        for (_, g) in self.params_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.input = None,
            Layer::Dense(l) => l.input = None,
            Layer::MaxPool(l) => l.argmax.clear(),
            Layer::BatchNorm(l) => l.xhat = None,
            Layer::Relu { mask } => mask.clear(),
            Layer::Dropout { mask, .. } => mask.clear(),
            Layer::Flatten { in_shape } => *in_shape = [0; 4],
            Layer::Softmax { output } => *output = None,
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Checks input and parameter gradients of one layer against central
    /// differences of the scalar `sum(r * forward(x))`.
    pub(crate) fn gradcheck_layer(spec: &LayerSpec, input: [usize; 4], mode: Mode, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let item = (input[1], input[2], input[3]);
        let mut layer = Layer::build(spec, item, &mut rng).unwrap();
        // non-trivial batch-norm affine parameters
        if let Layer::BatchNorm(bn) = &mut layer {
            for (g, b) in bn.gamma.iter_mut().zip(bn.beta.iter_mut()) {
                *g = rng.gen_range(0.5..1.5);
                *b = rng.gen_range(-0.5..0.5);
            }
            bn.running_mean.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
            bn.running_var.iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
        }
        let x = Tensor {
            shape: input,
            data: (0..input.iter().product::<usize>())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        };
        let out_len = {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            layer.clone().forward(&x, mode, &mut r).unwrap().data.len()
        };
        let r: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let objective = |layer: &Layer, x: &Tensor| -> f64 {
            let mut l = layer.clone();
            let mut d = ChaCha8Rng::seed_from_u64(99);
            let out = l.forward(x, mode, &mut d).unwrap();
            out.data.iter().zip(&r).map(|(a, b)| a * b).sum()
        };
        let mut d = ChaCha8Rng::seed_from_u64(99);
        let mut work = layer.clone();
        let out = work.forward(&x, mode, &mut d).unwrap();
        let gx = work
            .backward(&Tensor {
                shape: out.shape,
                data: r.clone(),
            })
            .unwrap();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-7);
        for k in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[k] += eps;
            let mut xm = x.clone();
            xm.data[k] -= eps;
            let num = (objective(&layer, &xp) - objective(&layer, &xm)) / (2.0 * eps);
            worst = worst.max(rel(gx.data[k], num));
        }
        let analytic: Vec<Vec<f64>> = work.params_mut().into_iter().map(|(_, g)| g.clone()).collect();
        for (p, grads) in analytic.iter().enumerate() {
            for (k, &analytic) in grads.iter().enumerate() {
                let mut lp = layer.clone();
                lp.params_mut()[p].0[k] += eps;
                let mut lm = layer.clone();
                lm.params_mut()[p].0[k] -= eps;
                let num = (objective(&lp, &x) - objective(&lm, &x)) / (2.0 * eps);
                worst = worst.max(rel(analytic, num));
            }
        }
        worst
    }

    #[test]
    fn output_shapes() {
        let s = (10, 15, 15);
        assert_eq!(LayerSpec::conv3x3(64, Padding::Valid).output_shape(s).unwrap(), (64, 13, 13));
        assert_eq!(LayerSpec::conv3x3(64, Padding::Same).output_shape(s).unwrap(), (64, 15, 15));
        assert_eq!(LayerSpec::MaxPool { size: 2 }.output_shape((64, 13, 13)).unwrap(), (64, 6, 6));
        assert_eq!(LayerSpec::Flatten.output_shape((64, 2, 2)).unwrap(), (256, 1, 1));
        assert!(LayerSpec::conv3x3(8, Padding::Valid).output_shape((1, 34, 2)).is_err());
        assert!(LayerSpec::Dense { units: 4 }.output_shape((3, 2, 2)).is_err());
        assert!(LayerSpec::Dropout { rate: 1.0 }.output_shape(s).is_err());
    }

    #[test]
    fn every_layer_kind_passes_gradient_check() {
        let cases: Vec<(LayerSpec, [usize; 4], Mode)> = vec![
            (LayerSpec::conv3x3(2, Padding::Valid), [2, 2, 4, 4], Mode::Train),
            (LayerSpec::conv3x3(2, Padding::Same), [2, 2, 4, 5], Mode::Train),
            (
                LayerSpec::Conv2d {
                    filters: 3,
                    kernel_h: 2,
                    kernel_w: 3,
                    padding: Padding::Same,
                },
                [1, 2, 5, 4],
                Mode::Train,
            ),
            (LayerSpec::MaxPool { size: 2 }, [2, 2, 5, 4], Mode::Train),
            (LayerSpec::Relu, [2, 3, 3, 3], Mode::Train),
            (LayerSpec::BatchNorm, [3, 2, 3, 3], Mode::Train),
            (LayerSpec::BatchNorm, [3, 2, 3, 3], Mode::Eval),
            (LayerSpec::Dropout { rate: 0.4 }, [2, 2, 3, 3], Mode::Train),
            (LayerSpec::Flatten, [2, 2, 3, 3], Mode::Train),
            (LayerSpec::Dense { units: 4 }, [3, 6, 1, 1], Mode::Train),
            (LayerSpec::Softmax, [3, 4, 1, 1], Mode::Train),
        ];
        for (spec, shape, mode) in cases {
            let err = gradcheck_layer(&spec, shape, mode, 7);
            assert!(err < 1e-4, "{spec:?} {mode:?}: relative error {err}");
        }
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor {
            shape: [8, 2, 3, 3],
            data: (0..144).map(|i| (i % 7) as f64 * 3.0 + rng.gen_range(0.0..1.0)).collect(),
        };
        let mut bn = BatchNorm::new(2);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..8)
                .flat_map(|b| y.data[(b * 2 + ch) * 9..(b * 2 + ch + 1) * 9].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
        let mut bn = BatchNorm::new(2);
        let mut train = bn.forward(&x, Mode::Train).unwrap();
        for _ in 0..300 {
            train = bn.forward(&x, Mode::Train).unwrap();
        }
        let eval = bn.forward(&x, Mode::Eval).unwrap();
        for (a, b) in train.data.iter().zip(&eval.data) {
            assert!((a - b).abs() < 1e-6);
        }
        let constant = Tensor {
            shape: [4, 1, 2, 2],
            data: vec![3.0; 16],
        };
        let y = BatchNorm::new(1).forward(&constant, Mode::Train).unwrap();
        assert!(y.data.iter().all(|v| *v == 0.0));
        let single = Tensor::zeros([1, 1, 2, 2]);
        assert!(BatchNorm::new(1).forward(&single, Mode::Train).is_err());
        assert!(BatchNorm::new(1).forward(&single, Mode::Eval).is_ok());
    }

    #[test]
    fn dropout_rate_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for rate in [0.2, 0.25, 0.45] {
            let mut layer = Layer::build(&LayerSpec::Dropout { rate }, (10_000, 1, 1), &mut rng).unwrap();
            let x = Tensor {
                shape: [1, 10_000, 1, 1],
                data: vec![1.0; 10_000],
            };
            let y = layer.forward(&x, Mode::Train, &mut rng).unwrap();
            let zeros = y.data.iter().filter(|v| **v == 0.0).count() as f64 / 1e4;
            assert!((zeros - rate).abs() < 0.02, "rate {rate}: {zeros}");
            let kept = 1.0 / (1.0 - rate);
            assert!(y.data.iter().all(|v| *v == 0.0 || (*v - kept).abs() < 1e-12));
            let e = layer.forward(&x, Mode::Eval, &mut rng).unwrap();
            assert_eq!(e, x);
        }
    }

    #[test]
    fn backward_without_forward_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = Tensor::zeros([1, 2, 1, 1]);
        for spec in [LayerSpec::Dense { units: 2 }, LayerSpec::Relu, LayerSpec::Softmax] {
            let mut l = Layer::build(&spec, (2, 1, 1), &mut rng).unwrap();
            assert!(matches!(l.backward(&g), Err(Error::NoForwardCache)));
        }
    }
}

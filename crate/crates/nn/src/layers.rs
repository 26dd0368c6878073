//! Layers with hand-written forward and reverse passes.
//!
//! Every layer caches what its backward pass needs during `forward` and
//! overwrites (does not accumulate) its parameter gradients in `backward`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{gemm, Tensor};
use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Architecture description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        k: usize,
        stride: usize,
        cin: usize,
        cout: usize,
    },
    Tconv {
        k: usize,
        stride: usize,
        cin: usize,
        cout: usize,
    },
    Batchnorm {
        channels: usize,
    },
    Relu,
    Sigmoid,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

/// "Same-ceil" padding: output extent `ceil(len / stride)`, zero padding split
/// with the extra cell on the bottom/right. Returns (output, leading pad).
pub fn same_ceil(len: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let needed = ((out - 1) * stride + k).saturating_sub(len);
    (out, needed / 2)
}

/// Geometry of a strided 2-D cross-correlation on NHWC data.
#[derive(Debug, Clone, Copy)]
struct Geom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Geom {
    fn new(n: usize, h: usize, w: usize, c: usize, k: usize, stride: usize) -> Self {
        let (oh, pad_top) = same_ceil(h, k, stride);
        let (ow, pad_left) = same_ceil(w, k, stride);
        Self {
            n,
            h,
            w,
            c,
            k,
            stride,
            oh,
            ow,
            pad_top,
            pad_left,
        }
    }

    fn rows(&self) -> usize {
        self.n * self.oh * self.ow
    }

    fn cols(&self) -> usize {
        self.k * self.k * self.c
    }

    /// Visit each (column row, column offset, input offset) triple of the
    /// unfolded patch matrix that touches a real (unpadded) input cell.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let cols = self.cols();
        for b in 0..self.n {
            for oy in 0..self.oh {
                for ox in 0..self.ow {
                    let row = (b * self.oh + oy) * self.ow + ox;
                    for ky in 0..self.k {
                        let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for kx in 0..self.k {
                            let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            let col_off = row * cols + (ky * self.k + kx) * self.c;
                            let in_off =
                                ((b * self.h + iy as usize) * self.w + ix as usize) * self.c;
                            f(col_off, in_off);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let mut col = vec![0.0; self.rows() * self.cols()];
        let c = self.c;
        self.for_each_tap(|co, io| col[co..co + c].copy_from_slice(&x[io..io + c]));
        col
    }

    fn col2im(&self, col: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n * self.h * self.w * self.c];
        let c = self.c;
        self.for_each_tap(|co, io| {
            for (dst, src) in x[io..io + c].iter_mut().zip(&col[co..co + c]) {
                *dst += src;
            }
        });
        x
    }
}

fn expect_rank(x: &Tensor, rank: usize, what: &str) -> Result<(), NnError> {
    if x.shape().len() != rank {
        return Err(NnError::Shape(format!(
            "{what} expects rank-{rank} input, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

fn he_uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    t.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-limit..limit));
    t
}

fn add_bias(y: &mut [f64], bias: &[f64]) {
    let c = bias.len();
    for row in y.chunks_mut(c) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn column_sums(g: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for row in g.chunks(c) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Strided 2-D cross-correlation, weights `[k, k, cin, cout]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub k: usize,
    pub stride: usize,
    pub cin: usize,
    pub cout: usize,
    pub weight: Tensor,
    pub bias: Tensor,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    cache: Option<(Geom, Vec<f64>)>,
}

impl Conv2d {
    pub fn new<R: Rng>(k: usize, stride: usize, cin: usize, cout: usize, rng: &mut R) -> Self {
        let wshape = [k, k, cin, cout];
        Self {
            k,
            stride,
            cin,
            cout,
            weight: he_uniform(&wshape, k * k * cin, rng),
            bias: Tensor::zeros(&[cout]),
            grad_weight: Tensor::zeros(&wshape),
            grad_bias: Tensor::zeros(&[cout]),
            cache: None,
        }
    }

    fn geom(&self, x: &Tensor) -> Result<Geom, NnError> {
        expect_rank(x, 4, "conv")?;
        let s = x.shape();
        if s[3] != self.cin {
            return Err(NnError::Shape(format!(
                "conv expects {} input channels, got {}",
                self.cin, s[3]
            )));
        }
        Ok(Geom::new(s[0], s[1], s[2], s[3], self.k, self.stride))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let g = self.geom(x)?;
        let col = g.im2col(x.data());
        let mut y = vec![0.0; g.rows() * self.cout];
        gemm(
            g.rows(),
            g.cols(),
            self.cout,
            &col,
            false,
            self.weight.data(),
            false,
            0.0,
            &mut y,
        );
        add_bias(&mut y, self.bias.data());
        self.cache = Some((g, col));
        Tensor::new(vec![g.n, g.oh, g.ow, self.cout], y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let (g, col) = self.cache.as_ref().ok_or(NnError::NoForward("conv"))?;
        let g = *g;
        gemm(
            g.cols(),
            g.rows(),
            self.cout,
            col,
            true,
            dy.data(),
            false,
            0.0,
            self.grad_weight.data_mut(),
        );
        self.grad_bias = Tensor::new(vec![self.cout], column_sums(dy.data(), self.cout))?;
        let mut dcol = vec![0.0; g.rows() * g.cols()];
        gemm(
            g.rows(),
            self.cout,
            g.cols(),
            dy.data(),
            false,
            self.weight.data(),
            true,
            0.0,
            &mut dcol,
        );
        Tensor::new(vec![g.n, g.h, g.w, g.c], g.col2im(&dcol))
    }
}

/// Transposed convolution: the exact adjoint of [`Conv2d`] with the same
/// `(k, stride)` mapping `cout -> cin`, plus a bias. Weights are stored in
/// that convolution's layout `[k, k, cout, cin]`. Output extent is
/// `stride * input`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub k: usize,
    pub stride: usize,
    pub cin: usize,
    pub cout: usize,
    pub weight: Tensor,
    pub bias: Tensor,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    cache: Option<(Geom, Tensor)>,
}

impl ConvTranspose2d {
    pub fn new<R: Rng>(k: usize, stride: usize, cin: usize, cout: usize, rng: &mut R) -> Self {
        let wshape = [k, k, cout, cin];
        Self {
            k,
            stride,
            cin,
            cout,
            weight: he_uniform(&wshape, k * k * cin, rng),
            bias: Tensor::zeros(&[cout]),
            grad_weight: Tensor::zeros(&wshape),
            grad_bias: Tensor::zeros(&[cout]),
            cache: None,
        }
    }

    fn geom(&self, x: &Tensor) -> Result<Geom, NnError> {
        expect_rank(x, 4, "tconv")?;
        let s = x.shape();
        if s[3] != self.cin {
            return Err(NnError::Shape(format!(
                "tconv expects {} input channels, got {}",
                self.cin, s[3]
            )));
        }
        // geometry of the forward convolution this layer is the adjoint of
        Ok(Geom::new(
            s[0],
            s[1] * self.stride,
            s[2] * self.stride,
            self.cout,
            self.k,
            self.stride,
        ))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let g = self.geom(x)?;
        debug_assert_eq!((g.oh, g.ow), (x.shape()[1], x.shape()[2]));
        let mut dcol = vec![0.0; g.rows() * g.cols()];
        gemm(
            g.rows(),
            self.cin,
            g.cols(),
            x.data(),
            false,
            self.weight.data(),
            true,
            0.0,
            &mut dcol,
        );
        let mut y = g.col2im(&dcol);
        add_bias(&mut y, self.bias.data());
        self.cache = Some((g, x.clone()));
        Tensor::new(vec![g.n, g.h, g.w, self.cout], y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let (g, x) = self.cache.as_ref().ok_or(NnError::NoForward("tconv"))?;
        let g = *g;
        self.grad_bias = Tensor::new(vec![self.cout], column_sums(dy.data(), self.cout))?;
        let col = g.im2col(dy.data());
        gemm(
            g.cols(),
            g.rows(),
            self.cin,
            &col,
            true,
            x.data(),
            false,
            0.0,
            self.grad_weight.data_mut(),
        );
        let mut dx = vec![0.0; g.rows() * self.cin];
        gemm(
            g.rows(),
            g.cols(),
            self.cin,
            &col,
            false,
            self.weight.data(),
            false,
            0.0,
            &mut dx,
        );
        Tensor::new(x.shape().to_vec(), dx)
    }
}

/// Per-channel batch normalization over every axis but the last.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub grad_gamma: Tensor,
    pub grad_beta: Tensor,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    mode: Mode,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let c = self.channels;
        if x.shape().last() != Some(&c) {
            return Err(NnError::Shape(format!(
                "batchnorm expects {c} channels, got {:?}",
                x.shape()
            )));
        }
        if mode == Mode::Train && x.batch() < 2 {
            return Err(NnError::BatchTooSmall);
        }
        let rows = x.len() / c;
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                for row in x.data().chunks(c) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; c];
                for row in x.data().chunks(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= rows as f64);
                for ch in 0..c {
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * mean[ch];
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * var[ch];
                }
                (mean, var)
            }
            Mode::Infer => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        let (gamma, beta) = (self.gamma.data(), self.beta.data());
        for row in x.data().chunks(c) {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                xhat.push(h);
                y.push(gamma[ch] * h + beta[ch]);
            }
        }
        self.cache = Some(BnCache {
            mode,
            xhat,
            inv_std,
        });
        Tensor::new(x.shape().to_vec(), y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForward("batchnorm"))?;
        let c = self.channels;
        let rows = dy.len() / c;
        let gamma = self.gamma.data();
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for (drow, hrow) in dy.data().chunks(c).zip(cache.xhat.chunks(c)) {
            for ch in 0..c {
                sum_dy[ch] += drow[ch];
                sum_dy_xhat[ch] += drow[ch] * hrow[ch];
            }
        }
        let mut dx = Vec::with_capacity(dy.len());
        match cache.mode {
            Mode::Train => {
                let m = rows as f64;
                for (drow, hrow) in dy.data().chunks(c).zip(cache.xhat.chunks(c)) {
                    for ch in 0..c {
                        let k = gamma[ch] * cache.inv_std[ch] / m;
                        dx.push(k * (m * drow[ch] - sum_dy[ch] - hrow[ch] * sum_dy_xhat[ch]));
                    }
                }
            }
            Mode::Infer => {
                for drow in dy.data().chunks(c) {
                    for ch in 0..c {
                        dx.push(drow[ch] * gamma[ch] * cache.inv_std[ch]);
                    }
                }
            }
        }
        self.grad_gamma = Tensor::new(vec![c], sum_dy_xhat)?;
        self.grad_beta = Tensor::new(vec![c], sum_dy)?;
        Tensor::new(dy.shape().to_vec(), dx)
    }
}

/// Fully connected layer on `[batch, inputs]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Tensor,
    pub bias: Tensor,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            inputs,
            outputs,
            weight: he_uniform(&[inputs, outputs], inputs, rng),
            bias: Tensor::zeros(&[outputs]),
            grad_weight: Tensor::zeros(&[inputs, outputs]),
            grad_bias: Tensor::zeros(&[outputs]),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let n = x.batch();
        if x.sample_len() != self.inputs {
            return Err(NnError::Shape(format!(
                "dense expects {} inputs per sample, got {}",
                self.inputs,
                x.sample_len()
            )));
        }
        let mut y = vec![0.0; n * self.outputs];
        gemm(
            n,
            self.inputs,
            self.outputs,
            x.data(),
            false,
            self.weight.data(),
            false,
            0.0,
            &mut y,
        );
        add_bias(&mut y, self.bias.data());
        self.cache = Some(x.clone());
        Tensor::new(vec![n, self.outputs], y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let x = self.cache.as_ref().ok_or(NnError::NoForward("dense"))?;
        let n = x.batch();
        gemm(
            self.inputs,
            n,
            self.outputs,
            x.data(),
            true,
            dy.data(),
            false,
            0.0,
            self.grad_weight.data_mut(),
        );
        self.grad_bias = Tensor::new(vec![self.outputs], column_sums(dy.data(), self.outputs))?;
        let mut dx = vec![0.0; n * self.inputs];
        gemm(
            n,
            self.outputs,
            self.inputs,
            dy.data(),
            false,
            self.weight.data(),
            true,
            0.0,
            &mut dx,
        );
        Tensor::new(x.shape().to_vec(), dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    cache: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let x = self.cache.as_ref().ok_or(NnError::NoForward("relu"))?;
        let mut dx = dy.clone();
        for (d, v) in dx.data_mut().iter_mut().zip(x.data()) {
            if *v <= 0.0 {
                *d = 0.0;
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    cache: Option<Tensor>,
}

impl Sigmoid {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        y.data_mut()
            .iter_mut()
            .for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
        self.cache = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let y = self.cache.as_ref().ok_or(NnError::NoForward("sigmoid"))?;
        let mut dx = dy.clone();
        for (d, s) in dx.data_mut().iter_mut().zip(y.data()) {
            *d *= s * (1.0 - s);
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    Tconv(ConvTranspose2d),
    Batchnorm(BatchNorm),
    Relu(Relu),
    Sigmoid(Sigmoid),
    Dense(Dense),
}

impl Layer {
    pub fn build<R: Rng>(spec: &LayerSpec, rng: &mut R) -> Self {
        match *spec {
            LayerSpec::Conv {
                k,
                stride,
                cin,
                cout,
            } => Layer::Conv(Conv2d::new(k, stride, cin, cout, rng)),
            LayerSpec::Tconv {
                k,
                stride,
                cin,
                cout,
            } => Layer::Tconv(ConvTranspose2d::new(k, stride, cin, cout, rng)),
            LayerSpec::Batchnorm { channels } => Layer::Batchnorm(BatchNorm::new(channels)),
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::Sigmoid => Layer::Sigmoid(Sigmoid::default()),
            LayerSpec::Dense { inputs, outputs } => Layer::Dense(Dense::new(inputs, outputs, rng)),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(l) => LayerSpec::Conv {
                k: l.k,
                stride: l.stride,
                cin: l.cin,
                cout: l.cout,
            },
            Layer::Tconv(l) => LayerSpec::Tconv {
                k: l.k,
                stride: l.stride,
                cin: l.cin,
                cout: l.cout,
            },
            Layer::Batchnorm(l) => LayerSpec::Batchnorm {
                channels: l.channels,
            },
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::Sigmoid(_) => LayerSpec::Sigmoid,
            Layer::Dense(l) => LayerSpec::Dense {
                inputs: l.inputs,
                outputs: l.outputs,
            },
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::Tconv(l) => l.forward(x),
            Layer::Batchnorm(l) => l.forward(x, mode),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
            Layer::Dense(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        match self {
            Layer::Conv(l) => l.backward(dy),
            Layer::Tconv(l) => l.backward(dy),
            Layer::Batchnorm(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::Sigmoid(l) => l.backward(dy),
            Layer::Dense(l) => l.backward(dy),
        }
    }

    /// Trainable parameters paired with their gradients.
    pub fn params_mut(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        match self {
            Layer::Conv(l) => vec![(&mut l.weight, &l.grad_weight), (&mut l.bias, &l.grad_bias)],
            Layer::Tconv(l) => vec![(&mut l.weight, &l.grad_weight), (&mut l.bias, &l.grad_bias)],
            Layer::Dense(l) => vec![(&mut l.weight, &l.grad_weight), (&mut l.bias, &l.grad_bias)],
            Layer::Batchnorm(l) => {
                vec![(&mut l.gamma, &l.grad_gamma), (&mut l.beta, &l.grad_beta)]
            }
            Layer::Relu(_) | Layer::Sigmoid(_) => Vec::new(),
        }
    }

    /// Persistent state (parameters and running statistics) by name.
    pub fn state(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Layer::Conv(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Tconv(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Dense(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Batchnorm(l) => vec![
                ("gamma", &l.gamma),
                ("beta", &l.beta),
                ("running_mean", &l.running_mean),
                ("running_var", &l.running_var),
            ],
            Layer::Relu(_) | Layer::Sigmoid(_) => Vec::new(),
        }
    }

    pub fn state_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        match (self, name) {
            (Layer::Conv(l), "weight") => Some(&mut l.weight),
            (Layer::Conv(l), "bias") => Some(&mut l.bias),
            (Layer::Tconv(l), "weight") => Some(&mut l.weight),
            (Layer::Tconv(l), "bias") => Some(&mut l.bias),
            (Layer::Dense(l), "weight") => Some(&mut l.weight),
            (Layer::Dense(l), "bias") => Some(&mut l.bias),
            (Layer::Batchnorm(l), "gamma") => Some(&mut l.gamma),
            (Layer::Batchnorm(l), "beta") => Some(&mut l.beta),
            (Layer::Batchnorm(l), "running_mean") => Some(&mut l.running_mean),
            (Layer::Batchnorm(l), "running_var") => Some(&mut l.running_var),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(l) => l.weight.len() + l.bias.len(),
            Layer::Tconv(l) => l.weight.len() + l.bias.len(),
            Layer::Dense(l) => l.weight.len() + l.bias.len(),
            Layer::Batchnorm(l) => 2 * l.channels,
            Layer::Relu(_) | Layer::Sigmoid(_) => 0,
        }
    }
}

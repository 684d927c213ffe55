use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Variance floor added inside the batch-norm square root.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// No padding: n_out = n - k + 1.
    Valid,
    /// Zero padding (k-1)/2 on the left, the rest on the right: n_out = n.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { units: usize },
    Conv1d { channels: usize, kernel: usize, padding: Padding, bias: bool },
    Relu,
    Sigmoid,
    MaxPool1d { pool: usize },
    GlobalAvgPool,
    BatchNorm1d { momentum: f64 },
    Dropout { rate: f64 },
    Flatten,
    /// Adds activation `from` (0 = network input, i = output of layer i-1) to the
    /// incoming tensor. A kernel-1 convolution projects the skip path when the
    /// channel counts differ.
    Add { from: usize },
    Softmax,
}

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: [usize; 3],
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Param {
    pub fn new(shape: [usize; 3], value: Vec<f64>) -> Param {
        let n = value.len();
        assert_eq!(n, shape.iter().product::<usize>());
        Param {
            shape,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn filled(shape: [usize; 3], x: f64) -> Param {
        Param::new(shape, vec![x; shape.iter().product()])
    }

    pub fn glorot<R: Rng>(shape: [usize; 3], fan_in: usize, fan_out: usize, rng: &mut R) -> Param {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        Param::new(shape, (0..n).map(|_| rng.random_range(-limit..limit)).collect())
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// C = A·B + beta·C for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |r: usize, c: usize, rs: usize, cs: usize| (r.max(1) - 1) * rs + (c.max(1) - 1) * cs + 1;
    assert!(k == 0 || a.len() >= span(m, k, rsa, csa));
    assert!(k == 0 || b.len() >= span(k, n, rsb, csb));
    assert!(c.len() >= span(m, n, rsc, csc));
    // SAFETY: the asserts above keep every strided access inside its slice and
    // `c` is a unique borrow, so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// (1, n_in, n_out), row-major n_in × n_out.
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Dense {
        Dense {
            weight: Param::glorot([1, n_in, n_out], n_in, n_out, rng),
            bias: Param::filled([1, 1, n_out], 0.0),
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn n_out(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, n, m) = (x.batch(), x.features(), self.n_out());
        if n != self.n_in() {
            return Err(Error::Shape(format!(
                "dense input {:?} has {} features, weights are {}x{}",
                x.shape(),
                n,
                self.n_in(),
                m
            )));
        }
        let mut y = Tensor::zeros([b, 1, m]);
        for row in y.data_mut().chunks_exact_mut(m) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(b, n, m, x.data(), (n, 1), &self.weight.value, (m, 1), 1.0, y.data_mut(), (m, 1));
        Ok(y)
    }

    fn backward(&mut self, x: &Tensor, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let (b, n, m) = (x.batch(), x.features(), self.n_out());
        gemm(n, b, m, x.data(), (1, n), dy.data(), (m, 1), 1.0, &mut self.weight.grad, (m, 1));
        for row in dy.data().chunks_exact(m) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        need_dx.then(|| {
            let mut dx = Tensor::zeros(x.shape());
            gemm(b, m, n, dy.data(), (m, 1), &self.weight.value, (1, m), 0.0, dx.data_mut(), (n, 1));
            dx
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub kernel: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    /// (c_out, c_in, kernel).
    pub weight: Param,
    pub bias: Option<Param>,
}

impl Conv1d {
    pub fn new<R: Rng>(c_in: usize, c_out: usize, kernel: usize, padding: Padding, bias: bool, rng: &mut R) -> Conv1d {
        let (pad_left, pad_right) = match padding {
            Padding::Valid => (0, 0),
            Padding::Same => ((kernel - 1) / 2, kernel - 1 - (kernel - 1) / 2),
        };
        Conv1d {
            kernel,
            pad_left,
            pad_right,
            weight: Param::glorot([c_out, c_in, kernel], c_in * kernel, c_out * kernel, rng),
            bias: bias.then(|| Param::filled([1, 1, c_out], 0.0)),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn out_len(&self, n: usize) -> Result<usize> {
        let padded = n + self.pad_left + self.pad_right;
        if self.kernel == 0 || self.kernel > padded {
            return Err(Error::Shape(format!("kernel {} does not fit input length {}", self.kernel, n)));
        }
        Ok(padded - self.kernel + 1)
    }

    /// Unfolds one item (c_in × n) into a (c_in·k) × n_out column matrix.
    fn im2col(&self, x: &[f64], n: usize, n_out: usize, col: &mut [f64]) {
        let k = self.kernel;
        for ci in 0..self.c_in() {
            let src = &x[ci * n..(ci + 1) * n];
            for kk in 0..k {
                let row = &mut col[(ci * k + kk) * n_out..][..n_out];
                // output t reads input t + kk - pad_left
                let lo = self.pad_left.saturating_sub(kk).min(n_out);
                let hi = (n + self.pad_left).saturating_sub(kk).min(n_out).max(lo);
                row[..lo].fill(0.0);
                row[hi..].fill(0.0);
                let start = lo + kk - self.pad_left;
                row[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
            }
        }
    }

    fn col2im(&self, col: &[f64], n: usize, n_out: usize, dx: &mut [f64]) {
        let k = self.kernel;
        for ci in 0..self.c_in() {
            let dst = &mut dx[ci * n..(ci + 1) * n];
            for kk in 0..k {
                let row = &col[(ci * k + kk) * n_out..][..n_out];
                let lo = self.pad_left.saturating_sub(kk).min(n_out);
                let hi = (n + self.pad_left).saturating_sub(kk).min(n_out).max(lo);
                let start = lo + kk - self.pad_left;
                for (d, c) in dst[start..start + hi - lo].iter_mut().zip(&row[lo..hi]) {
                    *d += c;
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let [b, c_in, n] = x.shape();
        if c_in != self.c_in() {
            return Err(Error::Shape(format!("conv expects {} input channels, got {:?}", self.c_in(), x.shape())));
        }
        let n_out = self.out_len(n)?;
        let (c_out, kdim) = (self.c_out(), self.c_in() * self.kernel);
        let mut y = Tensor::zeros([b, c_out, n_out]);
        let mut col = vec![0.0; kdim * n_out];
        for s in 0..b {
            self.im2col(x.item(s), n, n_out, &mut col);
            let ys = y.item_mut(s);
            gemm(c_out, kdim, n_out, &self.weight.value, (kdim, 1), &col, (n_out, 1), 0.0, ys, (n_out, 1));
            if let Some(bias) = &self.bias {
                for (row, &bv) in ys.chunks_exact_mut(n_out).zip(&bias.value) {
                    row.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        Ok(y)
    }

    fn backward(&mut self, x: &Tensor, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let [b, _, n] = x.shape();
        let n_out = dy.len();
        let (c_out, kdim) = (self.c_out(), self.c_in() * self.kernel);
        let mut col = vec![0.0; kdim * n_out];
        let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
        for s in 0..b {
            let dys = dy.item(s);
            self.im2col(x.item(s), n, n_out, &mut col);
            gemm(c_out, n_out, kdim, dys, (n_out, 1), &col, (1, n_out), 1.0, &mut self.weight.grad, (kdim, 1));
            if let Some(bias) = &mut self.bias {
                for (g, row) in bias.grad.iter_mut().zip(dys.chunks_exact(n_out)) {
                    *g += row.iter().sum::<f64>();
                }
            }
            if let Some(dx) = &mut dx {
                gemm(kdim, c_out, n_out, &self.weight.value, (1, kdim), dys, (n_out, 1), 0.0, &mut col, (n_out, 1));
                self.col2im(&col, n, n_out, dx.item_mut(s));
            }
        }
        dx
    }

    fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
}

impl BatchNorm1d {
    pub fn new(channels: usize, momentum: f64) -> BatchNorm1d {
        BatchNorm1d {
            gamma: Param::filled([1, 1, channels], 1.0),
            beta: Param::filled([1, 1, channels], 0.0),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Per-channel (mean, biased variance) over batch and length.
    fn batch_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let [b, c, l] = x.shape();
        let count = (b * l) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for s in 0..b {
            for (ch, row) in x.item(s).chunks_exact(l).enumerate() {
                mean[ch] += row.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for s in 0..b {
            for (ch, row) in x.item(s).chunks_exact(l).enumerate() {
                var[ch] += row.iter().map(|v| (v - mean[ch]) * (v - mean[ch])).sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= count);
        (mean, var)
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Cache)> {
        let [b, c, l] = x.shape();
        if c != self.channels() {
            return Err(Error::Shape(format!("batch norm over {} channels got {:?}", self.channels(), x.shape())));
        }
        let (mean, var) = match mode {
            Mode::Train => Self::batch_stats(x),
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut y = Tensor::zeros(x.shape());
        for s in 0..b {
            for (ch, (out, row)) in y.item_mut(s).chunks_exact_mut(l).zip(x.item(s).chunks_exact(l)).enumerate() {
                let (scale, shift) = (self.gamma.value[ch] * inv_std[ch], self.beta.value[ch]);
                for (o, v) in out.iter_mut().zip(row) {
                    *o = (v - mean[ch]) * scale + shift;
                }
            }
        }
        Ok((y, Cache::Stats { mean, var, inv_std }))
    }

    fn update_running(&mut self, mean: &[f64], var: &[f64], count: usize) {
        let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
        let m = self.momentum;
        for ch in 0..self.channels() {
            self.running_mean[ch] = m * self.running_mean[ch] + (1.0 - m) * mean[ch];
            self.running_var[ch] = m * self.running_var[ch] + (1.0 - m) * var[ch] * unbias;
        }
    }

    fn backward(&mut self, x: &Tensor, dy: &Tensor, cache: &Cache, mode: Mode, need_dx: bool) -> Option<Tensor> {
        let Cache::Stats { mean, inv_std, .. } = cache else {
            unreachable!("batch norm cache")
        };
        let [b, c, l] = x.shape();
        let count = (b * l) as f64;
        // sums of dy and dy·x_hat per channel
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for s in 0..b {
            for (ch, (g, row)) in dy.item(s).chunks_exact(l).zip(x.item(s).chunks_exact(l)).enumerate() {
                for (d, v) in g.iter().zip(row) {
                    sum_dy[ch] += d;
                    sum_dy_xhat[ch] += d * (v - mean[ch]) * inv_std[ch];
                }
            }
        }
        for ch in 0..c {
            self.gamma.grad[ch] += sum_dy_xhat[ch];
            self.beta.grad[ch] += sum_dy[ch];
        }
        need_dx.then(|| {
            let mut dx = Tensor::zeros(x.shape());
            for s in 0..b {
                let (xs, dys) = (x.item(s), dy.item(s));
                for (ch, out) in dx.item_mut(s).chunks_exact_mut(l).enumerate() {
                    let g = self.gamma.value[ch] * inv_std[ch];
                    let (row, drow) = (&xs[ch * l..(ch + 1) * l], &dys[ch * l..(ch + 1) * l]);
                    match mode {
                        Mode::Eval => out.iter_mut().zip(drow).for_each(|(o, d)| *o = g * d),
                        Mode::Train => {
                            let (mdy, mdyx) = (sum_dy[ch] / count, sum_dy_xhat[ch] / count);
                            for ((o, d), v) in out.iter_mut().zip(drow).zip(row) {
                                let xhat = (v - mean[ch]) * inv_std[ch];
                                *o = g * (d - mdy - xhat * mdyx);
                            }
                        }
                    }
                }
            }
            dx
        })
    }
}

/// Residual join; `proj` is present when the skip path changes channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct Add {
    pub from: usize,
    pub proj: Option<Conv1d>,
}

/// Per-layer values saved by the forward pass for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Cache {
    None,
    /// Inverted-dropout multipliers (0 or 1/(1-rate)).
    Mask(Vec<f64>),
    /// Flat input index of each pooled maximum.
    Argmax(Vec<usize>),
    Stats { mean: Vec<f64>, var: Vec<f64>, inv_std: Vec<f64> },
    /// Projected skip input.
    Skip(Option<Tensor>),
}

/// Activation pattern held fixed during finite-difference evaluations so the
/// network is smooth around the base point.
#[derive(Debug, Clone, PartialEq)]
pub enum Pinned {
    Relu(Vec<bool>),
    Argmax(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    Relu,
    Sigmoid,
    MaxPool1d { pool: usize },
    GlobalAvgPool,
    BatchNorm1d(BatchNorm1d),
    Dropout { rate: f64 },
    Flatten,
    Add(Add),
    Softmax,
}

impl Layer {
    /// Instantiates `spec` for inputs of shape (channels, length); `skip` is the
    /// (channels, length) of the source activation for residual joins.
    pub fn build<R: Rng>(
        spec: &LayerSpec,
        (c, l): (usize, usize),
        skip: Option<(usize, usize)>,
        rng: &mut R,
    ) -> Result<(Layer, (usize, usize))> {
        Ok(match *spec {
            LayerSpec::Dense { units } => (Layer::Dense(Dense::new(c * l, units, rng)), (1, units)),
            LayerSpec::Conv1d { channels, kernel, padding, bias } => {
                let conv = Conv1d::new(c, channels, kernel, padding, bias, rng);
                let n_out = conv.out_len(l)?;
                (Layer::Conv1d(conv), (channels, n_out))
            }
            LayerSpec::Relu => (Layer::Relu, (c, l)),
            LayerSpec::Sigmoid => (Layer::Sigmoid, (c, l)),
            LayerSpec::MaxPool1d { pool } => {
                if pool == 0 || pool > l {
                    return Err(Error::Shape(format!("pool {pool} on length {l}")));
                }
                (Layer::MaxPool1d { pool }, (c, l / pool))
            }
            LayerSpec::GlobalAvgPool => (Layer::GlobalAvgPool, (c, 1)),
            LayerSpec::BatchNorm1d { momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::Domain(format!("batch norm momentum {momentum}")));
                }
                (Layer::BatchNorm1d(BatchNorm1d::new(c, momentum)), (c, l))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Domain(format!("dropout rate {rate} outside [0, 1)")));
                }
                (Layer::Dropout { rate }, (c, l))
            }
            LayerSpec::Flatten => (Layer::Flatten, (1, c * l)),
            LayerSpec::Add { from } => {
                let (sc, sl) = skip.ok_or_else(|| Error::Shape(format!("no activation {from} to join")))?;
                if sl != l {
                    return Err(Error::Shape(format!("residual join of lengths {sl} and {l}")));
                }
                let proj = (sc != c).then(|| Conv1d::new(sc, c, 1, Padding::Valid, true, rng));
                (Layer::Add(Add { from, proj }), (c, l))
            }
            LayerSpec::Softmax => (Layer::Softmax, (c, l)),
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv1d(c) => c.params(),
            Layer::BatchNorm1d(bn) => vec![&bn.gamma, &bn.beta],
            Layer::Add(a) => a.proj.as_ref().map_or_else(Vec::new, Conv1d::params),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv1d(c) => c.params_mut(),
            Layer::BatchNorm1d(bn) => vec![&mut bn.gamma, &mut bn.beta],
            Layer::Add(a) => a.proj.as_mut().map_or_else(Vec::new, Conv1d::params_mut),
            _ => Vec::new(),
        }
    }

    pub fn forward<R: Rng>(
        &self,
        x: &Tensor,
        skip: Option<&Tensor>,
        mode: Mode,
        rng: &mut R,
        pin: Option<&Pinned>,
    ) -> Result<(Tensor, Cache)> {
        let [b, c, l] = x.shape();
        Ok(match (self, pin) {
            (Layer::Relu, Some(Pinned::Relu(mask))) => {
                let data = x.data().iter().zip(mask).map(|(&v, &on)| if on { v } else { 0.0 }).collect();
                (Tensor::from_vec(x.shape(), data)?, Cache::None)
            }
            (&Layer::MaxPool1d { pool }, Some(Pinned::Argmax(arg))) => {
                let data = arg.iter().map(|&i| x.data()[i]).collect();
                (Tensor::from_vec([b, c, l / pool], data)?, Cache::Argmax(arg.clone()))
            }
            _ => self.forward_free(x, skip, mode, rng)?,
        })
    }

    fn forward_free<R: Rng>(&self, x: &Tensor, skip: Option<&Tensor>, mode: Mode, rng: &mut R) -> Result<(Tensor, Cache)> {
        let [b, c, l] = x.shape();
        Ok(match self {
            Layer::Dense(d) => (d.forward(x)?, Cache::None),
            Layer::Conv1d(conv) => (conv.forward(x)?, Cache::None),
            Layer::Relu => (x.map(|v| v.max(0.0)), Cache::None),
            Layer::Sigmoid => (x.map(|v| 1.0 / (1.0 + (-v).exp())), Cache::None),
            &Layer::MaxPool1d { pool } => {
                let lo = l / pool;
                let mut y = Tensor::zeros([b, c, lo]);
                let mut arg = Vec::with_capacity(b * c * lo);
                for (r, (out, row)) in y.data_mut().chunks_exact_mut(lo).zip(x.data().chunks_exact(l)).enumerate() {
                    for (w, o) in out.iter_mut().enumerate() {
                        let win = &row[w * pool..(w + 1) * pool];
                        let mut best = 0;
                        for (i, v) in win.iter().enumerate() {
                            if *v > win[best] {
                                best = i;
                            }
                        }
                        *o = win[best];
                        arg.push(r * l + w * pool + best);
                    }
                }
                (y, Cache::Argmax(arg))
            }
            Layer::GlobalAvgPool => {
                let data = x.data().chunks_exact(l).map(|row| row.iter().sum::<f64>() / l as f64).collect();
                (Tensor::from_vec([b, c, 1], data)?, Cache::None)
            }
            Layer::BatchNorm1d(bn) => bn.forward(x, mode)?,
            &Layer::Dropout { rate } => {
                if mode == Mode::Eval || rate == 0.0 {
                    (x.clone(), Cache::None)
                } else {
                    let keep = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> =
                        (0..x.data().len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
                    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                    (Tensor::from_vec(x.shape(), data)?, Cache::Mask(mask))
                }
            }
            Layer::Flatten => (x.clone().reshape([b, 1, c * l])?, Cache::None),
            Layer::Add(add) => {
                let skip = skip.ok_or_else(|| Error::Shape(format!("missing skip activation {}", add.from)))?;
                let projected = add.proj.as_ref().map(|p| p.forward(skip)).transpose()?;
                let s = projected.as_ref().unwrap_or(skip);
                if s.shape() != x.shape() {
                    return Err(Error::Shape(format!("residual join of {:?} and {:?}", s.shape(), x.shape())));
                }
                let data = x.data().iter().zip(s.data()).map(|(a, b)| a + b).collect();
                (Tensor::from_vec(x.shape(), data)?, Cache::Skip(projected))
            }
            Layer::Softmax => {
                let mut y = x.clone();
                let f = x.features();
                for row in y.data_mut().chunks_exact_mut(f) {
                    softmax_in_place(row);
                }
                (y, Cache::None)
            }
        })
    }

    /// Accumulates parameter gradients and returns (d input, d skip input).
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &mut self,
        x: &Tensor,
        y: &Tensor,
        skip: Option<&Tensor>,
        cache: &Cache,
        dy: Tensor,
        mode: Mode,
        need_dx: bool,
    ) -> (Option<Tensor>, Option<Tensor>) {
        let zip = |dy: Tensor, f: &dyn Fn(f64, f64) -> f64, src: &Tensor| -> Tensor {
            let mut dy = dy;
            dy.data_mut().iter_mut().zip(src.data()).for_each(|(d, &v)| *d = f(*d, v));
            dy
        };
        match self {
            Layer::Dense(d) => (d.backward(x, &dy, need_dx), None),
            Layer::Conv1d(conv) => (conv.backward(x, &dy, need_dx), None),
            Layer::Relu => (Some(zip(dy, &|d, v| if v > 0.0 { d } else { 0.0 }, y)), None),
            Layer::Sigmoid => (Some(zip(dy, &|d, s| d * s * (1.0 - s), y)), None),
            Layer::MaxPool1d { .. } => {
                let Cache::Argmax(arg) = cache else { unreachable!("pool cache") };
                let mut dx = Tensor::zeros(x.shape());
                for (&i, &d) in arg.iter().zip(dy.data()) {
                    dx.data_mut()[i] += d;
                }
                (Some(dx), None)
            }
            Layer::GlobalAvgPool => {
                let l = x.len();
                let mut dx = Tensor::zeros(x.shape());
                for (row, &d) in dx.data_mut().chunks_exact_mut(l).zip(dy.data()) {
                    row.fill(d / l as f64);
                }
                (Some(dx), None)
            }
            Layer::BatchNorm1d(bn) => (bn.backward(x, &dy, cache, mode, need_dx), None),
            Layer::Dropout { .. } => match cache {
                Cache::Mask(mask) => {
                    let mut dy = dy;
                    dy.data_mut().iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
                    (Some(dy), None)
                }
                _ => (Some(dy), None),
            },
            Layer::Flatten => (Some(dy.reshape(x.shape()).expect("flatten preserves size")), None),
            Layer::Add(add) => {
                let dskip = match &mut add.proj {
                    Some(p) => p.backward(skip.expect("skip input"), &dy, true),
                    None => Some(dy.clone()),
                };
                (Some(dy), dskip)
            }
            Layer::Softmax => {
                let f = y.features();
                let mut dx = dy;
                for (g, p) in dx.data_mut().chunks_exact_mut(f).zip(y.data().chunks_exact(f)) {
                    let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                    g.iter_mut().zip(p).for_each(|(a, b)| *a = b * (*a - dot));
                }
                (Some(dx), None)
            }
        }
    }

    /// Folds batch statistics into the running averages after a training forward.
    pub(crate) fn update_running(&mut self, cache: &Cache, count: usize) {
        if let (Layer::BatchNorm1d(bn), Cache::Stats { mean, var, .. }) = (self, cache) {
            bn.update_running(mean, var, count);
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

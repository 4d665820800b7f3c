//! Parameter storage, forward pass and backpropagation.
//!
//! Activations are flat row-major buffers in channel-major (NCHW) order.
//! Convolutions run through im2col + GEMM; every other kernel is explicit.
//! Dropout is inverted (train-time scaling by `1/(1-rate)`), batch
//! normalization uses biased batch statistics in train mode and running
//! statistics in inference mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::tensor::Tensor;
use super::{Feature, LayerSpec, ModelSpec, Padding};

/// Forward execution mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, active dropout, cache recorded for backward.
    Train { seed: u64 },
    /// Running statistics, dropout off, no cache.
    Infer,
}

/// Parameters and non-trainable buffers of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<T> {
    pub params: Vec<Tensor<T>>,
    pub buffers: Vec<Tensor<T>>,
}

impl<T> LayerState<T> {
    fn empty() -> Self {
        Self { params: Vec::new(), buffers: Vec::new() }
    }
}

/// A spec bound to its parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub spec: ModelSpec,
    pub layers: Vec<LayerState<T>>,
    shapes: Vec<Feature>,
}

/// Per-layer values recorded in train mode for the backward pass.
enum CacheItem<T> {
    Conv { input: Vec<T> },
    Pool { argmax: Vec<usize>, input_len: usize },
    BatchNorm { xhat: Vec<T>, inv_std: Vec<T> },
    Relu { mask: Vec<bool> },
    Flatten,
    Dense { input: Vec<T> },
    Dropout { mask: Vec<T> },
    Softmax,
    None,
}

/// Train-mode forward cache.
pub struct ForwardCache<T> {
    pub batch: usize,
    items: Vec<CacheItem<T>>,
    /// Softmax output, `batch x classes`.
    pub probs: Vec<T>,
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^ (z >> 31)
}

impl<T: Real> Model<T> {
    /// Initialize parameters: Kaiming-uniform fan-in for conv/dense weights,
    /// zero biases, unit gamma / zero beta with fresh running stats for BN.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.feature_shapes()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let mut rng = ChaCha12Rng::seed_from_u64(mix(seed, i as u64));
            let mut kaiming = |shape: &[usize], fan_in: usize| -> Tensor<T> {
                let bound = (6.0 / fan_in as f64).sqrt();
                let data = (0..shape.iter().product::<usize>())
                    .map(|_| T::of(rng.gen_range(-bound..bound)))
                    .collect();
                Tensor::from_data(shape, data).expect("generated data matches shape")
            };
            let state = match (layer, shapes[i]) {
                (LayerSpec::Conv2D { kernel: (kh, kw), out_channels, .. }, Feature::Map(cin, _, _)) => {
                    let fan_in = cin * kh * kw;
                    LayerState {
                        params: vec![
                            kaiming(&[*out_channels, cin, *kh, *kw], fan_in),
                            Tensor::zeros(&[*out_channels]),
                        ],
                        buffers: Vec::new(),
                    }
                }
                (LayerSpec::BatchNorm2D { .. }, Feature::Map(c, _, _)) => LayerState {
                    params: vec![Tensor::filled(&[c], T::one()), Tensor::zeros(&[c])],
                    buffers: vec![Tensor::zeros(&[c]), Tensor::filled(&[c], T::one())],
                },
                (LayerSpec::Dense { out }, Feature::Flat(input)) => {
                    // the classifier head starts at zero so the softmax is
                    // exactly uniform at init (initial loss = ln classes)
                    let is_head = matches!(spec.layers.get(i + 1), Some(LayerSpec::Softmax));
                    let weight = if is_head {
                        Tensor::zeros(&[input, *out])
                    } else {
                        kaiming(&[input, *out], input)
                    };
                    LayerState { params: vec![weight, Tensor::zeros(&[*out])], buffers: Vec::new() }
                }
                _ => LayerState::empty(),
            };
            layers.push(state);
        }
        Ok(Self { spec, layers, shapes })
    }

    pub fn feature_shapes(&self) -> &[Feature] {
        &self.shapes
    }

    /// Total trainable parameter elements, counted from the live tensors.
    pub fn param_element_count(&self) -> u64 {
        self.layers.iter().flat_map(|l| &l.params).map(|t| t.len() as u64).sum()
    }

    /// Run the network on a `batch` of flattened inputs.
    ///
    /// Returns softmax probabilities (`batch x classes`) plus the cache
    /// backward needs; the cache is only recorded in train mode.
    pub fn forward(&mut self, input: &[T], batch: usize, mode: Mode) -> Result<(Vec<T>, ForwardCache<T>)> {
        let in_len = self.shapes[0].len();
        if input.len() != batch * in_len {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, expected {batch} x {in_len}",
                input.len()
            )));
        }
        let train = matches!(mode, Mode::Train { .. });
        let mut items: Vec<CacheItem<T>> = Vec::with_capacity(self.spec.layers.len());
        let mut x = input.to_vec();

        for i in 0..self.spec.layers.len() {
            let layer = self.spec.layers[i].clone();
            let in_shape = self.shapes[i];
            let out_shape = self.shapes[i + 1];
            match layer {
                LayerSpec::Conv2D { kernel, padding, .. } => {
                    let Feature::Map(cin, h, w) = in_shape else { unreachable!() };
                    let Feature::Map(cout, oh, ow) = out_shape else { unreachable!() };
                    let weight = &self.layers[i].params[0];
                    let bias = &self.layers[i].params[1];
                    let out = conv2d_forward(
                        &x, batch, cin, h, w, &weight.data, &bias.data, cout, kernel, padding, oh, ow,
                    );
                    items.push(if train { CacheItem::Conv { input: x } } else { CacheItem::None });
                    x = out;
                }
                LayerSpec::MaxPool2 => {
                    let Feature::Map(c, h, w) = in_shape else { unreachable!() };
                    let (out, argmax) = maxpool2_forward(&x, batch, c, h, w);
                    items.push(if train {
                        CacheItem::Pool { argmax, input_len: batch * c * h * w }
                    } else {
                        CacheItem::None
                    });
                    x = out;
                }
                LayerSpec::BatchNorm2D { eps, momentum } => {
                    let Feature::Map(c, h, w) = in_shape else { unreachable!() };
                    if train {
                        let state = &mut self.layers[i];
                        let (gamma, rest) = state.params.split_at_mut(1);
                        let beta = &rest[0];
                        let (rm, rv) = {
                            let (a, b) = state.buffers.split_at_mut(1);
                            (&mut a[0], &mut b[0])
                        };
                        let (out, xhat, inv_std) = batchnorm_forward_train(
                            &x,
                            batch,
                            c,
                            h * w,
                            &gamma[0].data,
                            &beta.data,
                            T::of(eps),
                            T::of(momentum),
                            &mut rm.data,
                            &mut rv.data,
                        );
                        items.push(CacheItem::BatchNorm { xhat, inv_std });
                        x = out;
                    } else {
                        let state = &self.layers[i];
                        x = batchnorm_forward_infer(
                            &x,
                            batch,
                            c,
                            h * w,
                            &state.params[0].data,
                            &state.params[1].data,
                            T::of(eps),
                            &state.buffers[0].data,
                            &state.buffers[1].data,
                        );
                        items.push(CacheItem::None);
                    }
                }
                LayerSpec::Relu => {
                    let mask: Vec<bool> = x.iter().map(|&v| v > T::zero()).collect();
                    for (v, &keep) in x.iter_mut().zip(&mask) {
                        if !keep {
                            *v = T::zero();
                        }
                    }
                    items.push(if train { CacheItem::Relu { mask } } else { CacheItem::None });
                }
                LayerSpec::Flatten => {
                    items.push(if train { CacheItem::Flatten } else { CacheItem::None });
                }
                LayerSpec::Dense { out } => {
                    let Feature::Flat(in_w) = in_shape else { unreachable!() };
                    let weight = &self.layers[i].params[0];
                    let bias = &self.layers[i].params[1];
                    let mut y = vec![T::zero(); batch * out];
                    T::gemm(false, false, batch, in_w, out, T::one(), &x, &weight.data, T::zero(), &mut y);
                    for b in 0..batch {
                        for (o, &bv) in bias.data.iter().enumerate() {
                            y[b * out + o] += bv;
                        }
                    }
                    items.push(if train { CacheItem::Dense { input: x } } else { CacheItem::None });
                    x = y;
                }
                LayerSpec::Dropout { rate } => {
                    if train && rate > 0.0 {
                        let Mode::Train { seed } = mode else { unreachable!() };
                        let mut rng = ChaCha12Rng::seed_from_u64(mix(seed, 0x0d0d ^ i as u64));
                        let keep_scale = T::of(1.0 / (1.0 - rate));
                        let mask: Vec<T> = (0..x.len())
                            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep_scale })
                            .collect();
                        for (v, &m) in x.iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        items.push(CacheItem::Dropout { mask });
                    } else {
                        items.push(if train {
                            CacheItem::Dropout { mask: vec![T::one(); x.len()] }
                        } else {
                            CacheItem::None
                        });
                    }
                }
                LayerSpec::Softmax => {
                    let Feature::Flat(classes) = in_shape else { unreachable!() };
                    softmax_rows(&mut x, batch, classes);
                    items.push(if train { CacheItem::Softmax } else { CacheItem::None });
                }
            }
        }

        let probs = x.clone();
        Ok((x, ForwardCache { batch, items, probs }))
    }

    /// Backpropagate mean cross-entropy of `targets` through the cached
    /// forward pass, filling every parameter's gradient slot.
    ///
    /// Returns the loss.
    pub fn backward(&mut self, cache: &ForwardCache<T>, targets: &[usize]) -> Result<T> {
        let batch = cache.batch;
        if targets.len() != batch {
            return Err(Error::ShapeMismatch(format!("{} targets for batch {batch}", targets.len())));
        }
        if cache.items.len() != self.spec.layers.len()
            || cache.items.iter().any(|i| matches!(i, CacheItem::None))
        {
            return Err(Error::MissingCache);
        }
        let classes = self.spec.classes;
        for &t in targets {
            if t >= classes {
                return Err(Error::LabelOutOfRange { got: t, classes });
            }
        }

        for state in &mut self.layers {
            for p in &mut state.params {
                p.grad_mut();
                p.zero_grad();
            }
        }

        let loss = cross_entropy(&cache.probs, targets, classes);

        // softmax + cross-entropy head: d logits = (p - y) / batch
        let scale = T::one() / T::of_usize(batch);
        let mut grad: Vec<T> = cache.probs.iter().copied().map(|p| p * scale).collect();
        for (b, &t) in targets.iter().enumerate() {
            grad[b * classes + t] -= scale;
        }

        for i in (0..self.spec.layers.len()).rev() {
            let layer = self.spec.layers[i].clone();
            let in_shape = self.shapes[i];
            let out_shape = self.shapes[i + 1];
            match (&layer, &cache.items[i]) {
                (LayerSpec::Softmax, CacheItem::Softmax) => {
                    // folded into the head gradient above
                }
                (LayerSpec::Dropout { .. }, CacheItem::Dropout { mask }) => {
                    for (g, &m) in grad.iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                (LayerSpec::Dense { out }, CacheItem::Dense { input }) => {
                    let Feature::Flat(in_w) = in_shape else { unreachable!() };
                    let state = &mut self.layers[i];
                    {
                        let dw = state.params[0].grad_mut();
                        T::gemm(true, false, in_w, batch, *out, T::one(), input, &grad, T::zero(), dw);
                    }
                    {
                        let db = state.params[1].grad_mut();
                        for b in 0..batch {
                            for o in 0..*out {
                                db[o] += grad[b * out + o];
                            }
                        }
                    }
                    let weight = &state.params[0].data;
                    let mut dx = vec![T::zero(); batch * in_w];
                    T::gemm(false, true, batch, *out, in_w, T::one(), &grad, weight, T::zero(), &mut dx);
                    grad = dx;
                }
                (LayerSpec::Flatten, CacheItem::Flatten) => {
                    // pure reshape
                }
                (LayerSpec::Relu, CacheItem::Relu { mask }) => {
                    for (g, &keep) in grad.iter_mut().zip(mask) {
                        if !keep {
                            *g = T::zero();
                        }
                    }
                }
                (LayerSpec::BatchNorm2D { .. }, CacheItem::BatchNorm { xhat, inv_std }) => {
                    let Feature::Map(c, h, w) = in_shape else { unreachable!() };
                    let state = &mut self.layers[i];
                    let gamma = state.params[0].data.clone();
                    let (dgamma, dbeta, dx) =
                        batchnorm_backward(&grad, xhat, inv_std, &gamma, batch, c, h * w);
                    state.params[0].grad_mut().copy_from_slice(&dgamma);
                    state.params[1].grad_mut().copy_from_slice(&dbeta);
                    grad = dx;
                }
                (LayerSpec::MaxPool2, CacheItem::Pool { argmax, input_len }) => {
                    let mut dx = vec![T::zero(); *input_len];
                    for (&src, &g) in argmax.iter().zip(grad.iter()) {
                        dx[src] += g;
                    }
                    grad = dx;
                }
                (LayerSpec::Conv2D { kernel, padding, .. }, CacheItem::Conv { input }) => {
                    let Feature::Map(cin, h, w) = in_shape else { unreachable!() };
                    let Feature::Map(cout, oh, ow) = out_shape else { unreachable!() };
                    let state = &mut self.layers[i];
                    let weight = state.params[0].data.clone();
                    let (dw, db, dx) = conv2d_backward(
                        input, &grad, batch, cin, h, w, &weight, cout, *kernel, *padding, oh, ow,
                    );
                    state.params[0].grad_mut().copy_from_slice(&dw);
                    state.params[1].grad_mut().copy_from_slice(&db);
                    grad = dx;
                }
                _ => return Err(Error::MissingCache),
            }
        }

        Ok(loss)
    }
}

/// Mean cross-entropy of softmax probabilities against class indices.
pub fn cross_entropy<T: Real>(probs: &[T], targets: &[usize], classes: usize) -> T {
    let batch = targets.len();
    let mut loss = T::zero();
    for (b, &t) in targets.iter().enumerate() {
        let p = probs[b * classes + t].max(T::min_positive_value());
        loss -= p.ln();
    }
    loss / T::of_usize(batch)
}

fn pad_for(padding: Padding, k: usize) -> usize {
    match padding {
        Padding::Same => (k - 1) / 2,
        Padding::Valid => 0,
    }
}

/// Gather the `cin*kh*kw x oh*ow` patch matrix of one sample.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    input: &[T],
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let hw = oh * ow;
    let mut col = vec![T::zero(); cin * kh * kw * hw];
    for ci in 0..cin {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let dst = &mut col[row * hw..(row + 1) * hw];
                for oy in 0..oh {
                    let iy = oy + ki;
                    if iy < ph || iy >= h + ph {
                        continue;
                    }
                    let iy = iy - ph;
                    for ox in 0..ow {
                        let ix = ox + kj;
                        if ix < pw || ix >= w + pw {
                            continue;
                        }
                        dst[oy * ow + ox] = input[(ci * h + iy) * w + (ix - pw)];
                    }
                }
            }
        }
    }
    col
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward<T: Real>(
    input: &[T],
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
    (kh, kw): (usize, usize),
    padding: Padding,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let (ph, pw) = (pad_for(padding, kh), pad_for(padding, kw));
    let hw = oh * ow;
    let ckk = cin * kh * kw;
    let mut out = vec![T::zero(); batch * cout * hw];
    for b in 0..batch {
        let col = im2col(&input[b * cin * h * w..(b + 1) * cin * h * w], cin, h, w, kh, kw, ph, pw, oh, ow);
        let dst = &mut out[b * cout * hw..(b + 1) * cout * hw];
        T::gemm(false, false, cout, ckk, hw, T::one(), weight, &col, T::zero(), dst);
        for co in 0..cout {
            let bv = bias[co];
            for v in &mut dst[co * hw..(co + 1) * hw] {
                *v += bv;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward<T: Real>(
    input: &[T],
    dout: &[T],
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    cout: usize,
    (kh, kw): (usize, usize),
    padding: Padding,
    oh: usize,
    ow: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (ph, pw) = (pad_for(padding, kh), pad_for(padding, kw));
    let hw = oh * ow;
    let ckk = cin * kh * kw;
    let mut dw = vec![T::zero(); cout * ckk];
    let mut db = vec![T::zero(); cout];
    let mut dx = vec![T::zero(); batch * cin * h * w];

    let mut dcol = vec![T::zero(); ckk * hw];
    for b in 0..batch {
        let sample = &input[b * cin * h * w..(b + 1) * cin * h * w];
        let col = im2col(sample, cin, h, w, kh, kw, ph, pw, oh, ow);
        let dout_b = &dout[b * cout * hw..(b + 1) * cout * hw];

        // dW += dOut * col^T
        T::gemm(false, true, cout, hw, ckk, T::one(), dout_b, &col, T::one(), &mut dw);
        for co in 0..cout {
            db[co] += dout_b[co * hw..(co + 1) * hw].iter().copied().sum::<T>();
        }

        // dcol = W^T * dOut, then scatter back (col2im)
        T::gemm(true, false, ckk, cout, hw, T::one(), weight, dout_b, T::zero(), &mut dcol);
        let dst = &mut dx[b * cin * h * w..(b + 1) * cin * h * w];
        for ci in 0..cin {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (ci * kh + ki) * kw + kj;
                    let src = &dcol[row * hw..(row + 1) * hw];
                    for oy in 0..oh {
                        let iy = oy + ki;
                        if iy < ph || iy >= h + ph {
                            continue;
                        }
                        let iy = iy - ph;
                        for ox in 0..ow {
                            let ix = ox + kj;
                            if ix < pw || ix >= w + pw {
                                continue;
                            }
                            dst[(ci * h + iy) * w + (ix - pw)] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    (dw, db, dx)
}

fn maxpool2_forward<T: Real>(input: &[T], batch: usize, c: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); batch * c * oh * ow];
    let mut argmax = vec![0usize; out.len()];
    for b in 0..batch {
        for ci in 0..c {
            let plane = (b * c + ci) * h * w;
            let out_plane = (b * c + ci) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = plane + (2 * oy) * w + 2 * ox;
                    let mut best = input[best_idx];
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = plane + (2 * oy + dy) * w + 2 * ox + dx;
                            if input[idx] > best {
                                best = input[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[out_plane + oy * ow + ox] = best;
                    argmax[out_plane + oy * ow + ox] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}

#[allow(clippy::too_many_arguments)]
fn batchnorm_forward_train<T: Real>(
    x: &[T],
    batch: usize,
    c: usize,
    hw: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
    momentum: T,
    running_mean: &mut [T],
    running_var: &mut [T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let m = T::of_usize(batch * hw);
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_stds = vec![T::zero(); c];

    for ci in 0..c {
        let mut mean = T::zero();
        for b in 0..batch {
            let base = (b * c + ci) * hw;
            for i in 0..hw {
                mean += x[base + i];
            }
        }
        mean /= m;
        let mut var = T::zero();
        for b in 0..batch {
            let base = (b * c + ci) * hw;
            for i in 0..hw {
                let d = x[base + i] - mean;
                var += d * d;
            }
        }
        var /= m; // biased, matching the normalization denominator
        let inv_std = T::one() / (var + eps).sqrt();
        inv_stds[ci] = inv_std;

        running_mean[ci] = momentum * running_mean[ci] + (T::one() - momentum) * mean;
        running_var[ci] = momentum * running_var[ci] + (T::one() - momentum) * var;

        for b in 0..batch {
            let base = (b * c + ci) * hw;
            for i in 0..hw {
                let xh = (x[base + i] - mean) * inv_std;
                xhat[base + i] = xh;
                out[base + i] = gamma[ci] * xh + beta[ci];
            }
        }
    }
    (out, xhat, inv_stds)
}

#[allow(clippy::too_many_arguments)]
fn batchnorm_forward_infer<T: Real>(
    x: &[T],
    batch: usize,
    c: usize,
    hw: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
    running_mean: &[T],
    running_var: &[T],
) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ci in 0..c {
        let inv_std = T::one() / (running_var[ci] + eps).sqrt();
        for b in 0..batch {
            let base = (b * c + ci) * hw;
            for i in 0..hw {
                out[base + i] = gamma[ci] * (x[base + i] - running_mean[ci]) * inv_std + beta[ci];
            }
        }
    }
    out
}

fn batchnorm_backward<T: Real>(
    dout: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    batch: usize,
    c: usize,
    hw: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let m = T::of_usize(batch * hw);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut dx = vec![T::zero(); dout.len()];

    for ci in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for b in 0..batch {
            let base = (b * c + ci) * hw;
            for i in 0..hw {
                sum_dy += dout[base + i];
                sum_dy_xhat += dout[base + i] * xhat[base + i];
            }
        }
        dgamma[ci] = sum_dy_xhat;
        dbeta[ci] = sum_dy;

        let k = gamma[ci] * inv_std[ci];
        for b in 0..batch {
            let base = (b * c + ci) * hw;
            for i in 0..hw {
                dx[base + i] =
                    k * (dout[base + i] - sum_dy / m - xhat[base + i] * sum_dy_xhat / m);
            }
        }
    }
    (dgamma, dbeta, dx)
}

fn softmax_rows<T: Real>(x: &mut [T], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut x[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

//! Layer kinds with forward passes and exact analytic backward passes.
//!
//! All layers act on a single `[C, X, Y, Z]` feature map (batch size one).
//! Convolutions are same-size cross-correlations with zero padding, computed as
//! an im2col expansion followed by a GEMM.

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::tensor::{Scalar, Tensor};

pub const ELU_ALPHA: f64 = 1.0;
pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv3,
    Conv5,
    BatchNorm,
    Elu,
    Softmax,
    MaxPool2,
    Upsample2,
    /// Appends the map stored in skip slot `slot` after the incoming channels.
    ConcatSkip { slot: usize },
    /// Reduces every channel to its maximum, producing a `[C]` vector.
    GlobalMaxPool,
}

impl LayerKind {
    pub fn kernel_size(&self) -> Option<usize> {
        match self {
            LayerKind::Conv3 => Some(3),
            LayerKind::Conv5 => Some(5),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Store this layer's output in the given skip slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_skip: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Learnable parameters and non-learnable buffers of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T = f32> {
    pub name: String,
    pub params: Vec<Tensor<T>>,
    pub buffers: Vec<Tensor<T>>,
}

impl<T: Scalar> LayerWeights<T> {
    pub fn empty(name: &str) -> Self {
        Self { name: name.to_string(), params: Vec::new(), buffers: Vec::new() }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match (self.params.len(), self.buffers.len()) {
            (2, 0) => &["kernel", "bias"],
            (2, 2) => &["gamma", "beta"],
            _ => &[],
        }
    }

    pub fn buffer_names(&self) -> &'static [&'static str] {
        if self.buffers.len() == 2 { &["running_mean", "running_var"] } else { &[] }
    }
}

/// Values saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Conv { input: Tensor<T> },
    /// `moments` holds the batch mean and variance when batch statistics were used.
    BatchNorm { xhat: Tensor<T>, inv_std: Vec<f64>, moments: Option<(Vec<f64>, Vec<f64>)> },
    Elu { output: Tensor<T> },
    Softmax { output: Tensor<T> },
    MaxPool { argmax: Vec<u32>, in_shape: Vec<usize> },
    Upsample { in_shape: Vec<usize> },
    Concat { split: usize },
    GlobalMax { argmax: Vec<usize>, in_shape: Vec<usize> },
}

impl<T> Cache<T> {
    fn kind_name(&self) -> &'static str {
        match self {
            Cache::Conv { .. } => "conv",
            Cache::BatchNorm { .. } => "batchnorm",
            Cache::Elu { .. } => "elu",
            Cache::Softmax { .. } => "softmax",
            Cache::MaxPool { .. } => "maxpool2",
            Cache::Upsample { .. } => "upsample2",
            Cache::Concat { .. } => "concat_skip",
            Cache::GlobalMax { .. } => "global_maxpool",
        }
    }
}

/// Gradients produced by [`layer_backward`].
#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub input: Tensor<T>,
    pub params: Vec<Tensor<T>>,
    /// Gradient flowing into the skip slot read by a `ConcatSkip` layer.
    pub skip: Option<Tensor<T>>,
}

/// He-uniform kernels, zero biases, unit/zero batch-norm affine, unit running variance.
pub fn init_weights<T: Scalar>(spec: &LayerSpec, rng: &mut crate::rng::RngStream) -> LayerWeights<T> {
    let mut w = LayerWeights::empty(&spec.name);
    match &spec.kind {
        LayerKind::Conv3 | LayerKind::Conv5 => {
            let k = spec.kind.kernel_size().unwrap();
            let fan_in = spec.in_channels * k * k * k;
            let limit = (6.0 / fan_in as f64).sqrt();
            let shape = [spec.out_channels, spec.in_channels, k, k, k];
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| T::lit(rng.uniform(-limit, limit))).collect();
            w.params.push(Tensor::from_vec(&shape, data));
            w.params.push(Tensor::zeros(&[spec.out_channels]));
        }
        LayerKind::BatchNorm => {
            let c = spec.out_channels;
            w.params.push(Tensor::filled(&[c], T::one()));
            w.params.push(Tensor::zeros(&[c]));
            w.buffers.push(Tensor::zeros(&[c]));
            w.buffers.push(Tensor::filled(&[c], T::one()));
        }
        _ => {}
    }
    w
}

fn expect_channels<T: Scalar>(spec: &LayerSpec, input: &Tensor<T>) -> Result<(), NnError> {
    if input.shape().len() != 4 || input.channels() != spec.in_channels {
        return Err(NnError::ShapeMismatch {
            layer: spec.name.clone(),
            expected: format!("[{}, X, Y, Z]", spec.in_channels),
            found: input.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn layer_forward<T: Scalar>(
    spec: &LayerSpec,
    weights: &LayerWeights<T>,
    input: &Tensor<T>,
    mode: Mode,
    skip: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, Cache<T>), NnError> {
    expect_channels(spec, input)?;
    match &spec.kind {
        LayerKind::Conv3 | LayerKind::Conv5 => {
            let k = spec.kind.kernel_size().unwrap();
            let out = conv_forward(input, &weights.params[0], &weights.params[1], k);
            Ok((out, Cache::Conv { input: input.clone() }))
        }
        LayerKind::BatchNorm => batchnorm_forward(weights, input, mode),
        LayerKind::Elu => {
            let alpha = T::lit(ELU_ALPHA);
            let data = input.data().iter().map(|&x| if x > T::zero() { x } else { alpha * x.exp_m1() }).collect();
            let out = Tensor::from_vec(input.shape(), data);
            Ok((out.clone(), Cache::Elu { output: out }))
        }
        LayerKind::Softmax => {
            let out = softmax_channels(input);
            Ok((out.clone(), Cache::Softmax { output: out }))
        }
        LayerKind::MaxPool2 => maxpool_forward(spec, input),
        LayerKind::Upsample2 => Ok((upsample_forward(input), Cache::Upsample { in_shape: input.shape().to_vec() })),
        LayerKind::ConcatSkip { slot } => {
            let skip = skip.ok_or_else(|| NnError::MissingSkip { layer: spec.name.clone(), slot: *slot })?;
            if skip.spatial() != input.spatial() || input.channels() + skip.channels() != spec.out_channels {
                return Err(NnError::ShapeMismatch {
                    layer: spec.name.clone(),
                    expected: format!("skip with {} channels", spec.out_channels - spec.in_channels),
                    found: skip.shape().to_vec(),
                });
            }
            Ok((input.concat_channels(skip), Cache::Concat { split: input.channels() }))
        }
        LayerKind::GlobalMaxPool => {
            let c = input.channels();
            let mut argmax = Vec::with_capacity(c);
            let mut out = Vec::with_capacity(c);
            for ch in 0..c {
                let data = input.channel(ch);
                let mut best = 0;
                for (i, &v) in data.iter().enumerate() {
                    if v > data[best] {
                        best = i;
                    }
                }
                argmax.push(best);
                out.push(data[best]);
            }
            Ok((Tensor::from_vec(&[c], out), Cache::GlobalMax { argmax, in_shape: input.shape().to_vec() }))
        }
    }
}

pub fn layer_backward<T: Scalar>(
    spec: &LayerSpec,
    weights: &LayerWeights<T>,
    cache: &Cache<T>,
    grad_out: &Tensor<T>,
) -> Result<LayerGrads<T>, NnError> {
    let mismatch = || NnError::CacheMismatch { layer: spec.name.clone(), cache: cache.kind_name() };
    let plain = |input: Tensor<T>| LayerGrads { input, params: Vec::new(), skip: None };
    match (&spec.kind, cache) {
        (LayerKind::Conv3 | LayerKind::Conv5, Cache::Conv { input }) => {
            let k = spec.kind.kernel_size().unwrap();
            let (gi, gw, gb) = conv_backward(input, &weights.params[0], grad_out, k);
            Ok(LayerGrads { input: gi, params: vec![gw, gb], skip: None })
        }
        (LayerKind::BatchNorm, Cache::BatchNorm { xhat, inv_std, moments }) => {
            Ok(batchnorm_backward(weights, xhat, inv_std, moments.is_some(), grad_out))
        }
        (LayerKind::Elu, Cache::Elu { output }) => {
            let data = output
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&y, &g)| if y > T::zero() { g } else { g * (y + T::lit(ELU_ALPHA)) })
                .collect();
            Ok(plain(Tensor::from_vec(output.shape(), data)))
        }
        (LayerKind::Softmax, Cache::Softmax { output }) => Ok(plain(softmax_backward(output, grad_out))),
        (LayerKind::MaxPool2, Cache::MaxPool { argmax, in_shape }) => {
            let mut gi = Tensor::zeros(in_shape);
            let d = gi.data_mut();
            for (&src, &g) in argmax.iter().zip(grad_out.data()) {
                d[src as usize] += g;
            }
            Ok(plain(gi))
        }
        (LayerKind::Upsample2, Cache::Upsample { in_shape }) => Ok(plain(upsample_backward(in_shape, grad_out))),
        (LayerKind::ConcatSkip { .. }, Cache::Concat { split }) => {
            let c = grad_out.channels();
            Ok(LayerGrads {
                input: grad_out.slice_channels(0, *split),
                params: Vec::new(),
                skip: Some(grad_out.slice_channels(*split, c)),
            })
        }
        (LayerKind::GlobalMaxPool, Cache::GlobalMax { argmax, in_shape }) => {
            let mut gi = Tensor::zeros(in_shape);
            for (ch, &i) in argmax.iter().enumerate() {
                gi.channel_mut(ch)[i] += grad_out.data()[ch];
            }
            Ok(plain(gi))
        }
        _ => Err(mismatch()),
    }
}

/// Expands `[C, X, Y, Z]` into `[C * k^3, X * Y * Z]` patches (zero padded).
fn im2col<T: Scalar>(input: &Tensor<T>, k: usize) -> Vec<T> {
    let c = input.channels();
    let [nx, ny, nz] = input.spatial();
    let p = nx * ny * nz;
    let pad = (k / 2) as isize;
    let mut col = vec![T::zero(); c * k * k * k * p];
    let src = input.data();
    let mut row = 0;
    for ch in 0..c {
        let plane = &src[ch * p..(ch + 1) * p];
        for dx in 0..k as isize {
            for dy in 0..k as isize {
                for dz in 0..k as isize {
                    let dst = &mut col[row * p..(row + 1) * p];
                    scatter_shift(plane, dst, [nx, ny, nz], [dx - pad, dy - pad, dz - pad], false);
                    row += 1;
                }
            }
        }
    }
    col
}

/// Adds the columns of a `[C * k^3, P]` patch-gradient matrix back onto `[C, X, Y, Z]`.
fn col2im<T: Scalar>(col: &[T], shape: &[usize], k: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(shape);
    let c = shape[0];
    let [nx, ny, nz] = [shape[1], shape[2], shape[3]];
    let p = nx * ny * nz;
    let pad = (k / 2) as isize;
    let data = out.data_mut();
    let mut row = 0;
    for ch in 0..c {
        let plane = &mut data[ch * p..(ch + 1) * p];
        for dx in 0..k as isize {
            for dy in 0..k as isize {
                for dz in 0..k as isize {
                    let src = &col[row * p..(row + 1) * p];
                    gather_shift(src, plane, [nx, ny, nz], [dx - pad, dy - pad, dz - pad]);
                    row += 1;
                }
            }
        }
    }
    out
}

/// `dst[x, y, z] = plane[x + o.x, y + o.y, z + o.z]` where in bounds.
#[inline]
fn scatter_shift<T: Scalar>(plane: &[T], dst: &mut [T], d: [usize; 3], o: [isize; 3], _acc: bool) {
    let [nx, ny, nz] = d;
    let z0 = (-o[2]).max(0) as usize;
    let z1 = (nz as isize - o[2]).min(nz as isize).max(0) as usize;
    if z0 >= z1 {
        return;
    }
    for x in 0..nx {
        let sx = x as isize + o[0];
        if sx < 0 || sx >= nx as isize {
            continue;
        }
        for y in 0..ny {
            let sy = y as isize + o[1];
            if sy < 0 || sy >= ny as isize {
                continue;
            }
            let s = (sx as usize * ny + sy as usize) * nz;
            let t = (x * ny + y) * nz;
            let so = (z0 as isize + o[2]) as usize;
            dst[t + z0..t + z1].copy_from_slice(&plane[s + so..s + so + (z1 - z0)]);
        }
    }
}

/// `plane[x + o.x, y + o.y, z + o.z] += src[x, y, z]` where in bounds.
#[inline]
fn gather_shift<T: Scalar>(src: &[T], plane: &mut [T], d: [usize; 3], o: [isize; 3]) {
    let [nx, ny, nz] = d;
    let z0 = (-o[2]).max(0) as usize;
    let z1 = (nz as isize - o[2]).min(nz as isize).max(0) as usize;
    if z0 >= z1 {
        return;
    }
    for x in 0..nx {
        let sx = x as isize + o[0];
        if sx < 0 || sx >= nx as isize {
            continue;
        }
        for y in 0..ny {
            let sy = y as isize + o[1];
            if sy < 0 || sy >= ny as isize {
                continue;
            }
            let s = (sx as usize * ny + sy as usize) * nz + (z0 as isize + o[2]) as usize;
            let t = (x * ny + y) * nz + z0;
            for (a, &b) in plane[s..s + (z1 - z0)].iter_mut().zip(&src[t..t + (z1 - z0)]) {
                *a += b;
            }
        }
    }
}

fn conv_forward<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>, k: usize) -> Tensor<T> {
    let o = kernel.shape()[0];
    let ck = kernel.len() / o;
    let [nx, ny, nz] = input.spatial();
    let p = nx * ny * nz;
    let col = im2col(input, k);
    let mut out = Tensor::zeros(&[o, nx, ny, nz]);
    for (ch, &b) in bias.data().iter().enumerate() {
        out.channel_mut(ch).iter_mut().for_each(|v| *v = b);
    }
    T::gemm(o, ck, p, T::one(), kernel.data(), ck as isize, 1, &col, p as isize, 1, T::one(), out.data_mut(), p as isize, 1);
    out
}

fn conv_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    k: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let o = kernel.shape()[0];
    let ck = kernel.len() / o;
    let p = input.voxels();
    let col = im2col(input, k);
    let g = grad_out.data();

    let mut gw = Tensor::zeros(kernel.shape());
    // dW[o, ck] = dY[o, p] * col[ck, p]^T
    T::gemm(o, p, ck, T::one(), g, p as isize, 1, &col, 1, p as isize, T::zero(), gw.data_mut(), ck as isize, 1);

    let gb = (0..o).map(|ch| T::lit(grad_out.channel(ch).iter().map(|v| v.f64()).sum())).collect();
    let gb = Tensor::from_vec(&[o], gb);

    // dcol[ck, p] = W[o, ck]^T * dY[o, p]
    let mut gcol = col;
    T::gemm(ck, o, p, T::one(), kernel.data(), 1, ck as isize, g, p as isize, 1, T::zero(), &mut gcol, p as isize, 1);
    (col2im(&gcol, input.shape(), k), gw, gb)
}

fn batchnorm_forward<T: Scalar>(
    weights: &LayerWeights<T>,
    input: &Tensor<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Cache<T>), NnError> {
    let c = input.channels();
    let p = input.voxels();
    let mut xhat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    let mut inv_std = Vec::with_capacity(c);
    let mut means = Vec::with_capacity(c);
    let mut vars = Vec::with_capacity(c);
    for ch in 0..c {
        let x = input.channel(ch);
        let (mean, var) = if mode == Mode::Train {
            let mean = x.iter().map(|v| v.f64()).sum::<f64>() / p as f64;
            let var = x.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / p as f64;
            (mean, var)
        } else {
            (weights.buffers[0].data()[ch].f64(), weights.buffers[1].data()[ch].f64())
        };
        means.push(mean);
        vars.push(var);
        let is = 1.0 / (var + BN_EPSILON).sqrt();
        inv_std.push(is);
        let gamma = weights.params[0].data()[ch];
        let beta = weights.params[1].data()[ch];
        for (h, &v) in xhat.channel_mut(ch).iter_mut().zip(x) {
            *h = T::lit((v.f64() - mean) * is);
        }
        let xh = xhat.channel(ch).to_vec();
        for (o, h) in out.channel_mut(ch).iter_mut().zip(xh) {
            *o = gamma * h + beta;
        }
    }
    let moments = (mode == Mode::Train).then_some((means, vars));
    Ok((out, Cache::BatchNorm { xhat, inv_std, moments }))
}

/// Folds the batch moments recorded by a train-mode batch-norm pass into the
/// running moments (exponential moving average).
pub fn update_running_moments<T: Scalar>(weights: &mut LayerWeights<T>, cache: &Cache<T>) {
    if let Cache::BatchNorm { moments: Some((means, vars)), .. } = cache {
        let m = BN_MOMENTUM;
        for (ch, (&mean, &var)) in means.iter().zip(vars).enumerate() {
            let rm = &mut weights.buffers[0].data_mut()[ch];
            *rm = T::lit(m * rm.f64() + (1.0 - m) * mean);
            let rv = &mut weights.buffers[1].data_mut()[ch];
            *rv = T::lit(m * rv.f64() + (1.0 - m) * var);
        }
    }
}

fn batchnorm_backward<T: Scalar>(
    weights: &LayerWeights<T>,
    xhat: &Tensor<T>,
    inv_std: &[f64],
    batch_stats: bool,
    grad_out: &Tensor<T>,
) -> LayerGrads<T> {
    let c = xhat.channels();
    let p = xhat.voxels() as f64;
    let mut gi = Tensor::zeros(xhat.shape());
    let mut ggamma = Vec::with_capacity(c);
    let mut gbeta = Vec::with_capacity(c);
    for ch in 0..c {
        let dy = grad_out.channel(ch);
        let xh = xhat.channel(ch);
        let sum_dy: f64 = dy.iter().map(|v| v.f64()).sum();
        let sum_dy_xh: f64 = dy.iter().zip(xh).map(|(a, b)| a.f64() * b.f64()).sum();
        ggamma.push(T::lit(sum_dy_xh));
        gbeta.push(T::lit(sum_dy));
        let gamma = weights.params[0].data()[ch].f64();
        let is = inv_std[ch];
        let dst = gi.channel_mut(ch);
        if batch_stats {
            for ((d, &g), &h) in dst.iter_mut().zip(dy).zip(xh) {
                *d = T::lit(gamma * is * (g.f64() - sum_dy / p - h.f64() * sum_dy_xh / p));
            }
        } else {
            for (d, &g) in dst.iter_mut().zip(dy) {
                *d = T::lit(gamma * is * g.f64());
            }
        }
    }
    LayerGrads {
        input: gi,
        params: vec![Tensor::from_vec(&[c], ggamma), Tensor::from_vec(&[c], gbeta)],
        skip: None,
    }
}

/// Softmax across the channel axis, independently at every voxel.
pub fn softmax_channels<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let c = input.channels();
    let p = input.voxels();
    let x = input.data();
    let mut out = Tensor::zeros(input.shape());
    let y = out.data_mut();
    for v in 0..p {
        let mut max = x[v];
        for ch in 1..c {
            max = max.max(x[ch * p + v]);
        }
        let mut sum = 0.0f64;
        for ch in 0..c {
            let e = (x[ch * p + v] - max).exp();
            y[ch * p + v] = e;
            sum += e.f64();
        }
        let inv = T::lit(1.0 / sum);
        for ch in 0..c {
            y[ch * p + v] *= inv;
        }
    }
    out
}

fn softmax_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let c = y.channels();
    let p = y.voxels();
    let (yd, gd) = (y.data(), g.data());
    let mut out = Tensor::zeros(y.shape());
    let od = out.data_mut();
    for v in 0..p {
        let dot: f64 = (0..c).map(|ch| yd[ch * p + v].f64() * gd[ch * p + v].f64()).sum();
        for ch in 0..c {
            let i = ch * p + v;
            od[i] = T::lit(yd[i].f64() * (gd[i].f64() - dot));
        }
    }
    out
}

fn maxpool_forward<T: Scalar>(spec: &LayerSpec, input: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>), NnError> {
    let [nx, ny, nz] = input.spatial();
    if nx % 2 != 0 || ny % 2 != 0 || nz % 2 != 0 {
        return Err(NnError::ShapeMismatch {
            layer: spec.name.clone(),
            expected: "even spatial dims".into(),
            found: input.shape().to_vec(),
        });
    }
    let c = input.channels();
    let (ox, oy, oz) = (nx / 2, ny / 2, nz / 2);
    let mut out = Tensor::zeros(&[c, ox, oy, oz]);
    let mut argmax = Vec::with_capacity(out.len());
    let x = input.data();
    let od = out.data_mut();
    let mut o = 0;
    for ch in 0..c {
        for i in 0..ox {
            for j in 0..oy {
                for k in 0..oz {
                    let mut best = ((ch * nx + 2 * i) * ny + 2 * j) * nz + 2 * k;
                    for (a, b, d) in OCTANT {
                        let idx = ((ch * nx + 2 * i + a) * ny + 2 * j + b) * nz + 2 * k + d;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    od[o] = x[best];
                    argmax.push(best as u32);
                    o += 1;
                }
            }
        }
    }
    Ok((out, Cache::MaxPool { argmax, in_shape: input.shape().to_vec() }))
}

const OCTANT: [(usize, usize, usize); 8] =
    [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 0), (1, 0, 1), (1, 1, 0), (1, 1, 1)];

fn upsample_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let c = input.channels();
    let [nx, ny, nz] = input.spatial();
    let (ox, oy, oz) = (2 * nx, 2 * ny, 2 * nz);
    let mut out = Tensor::zeros(&[c, ox, oy, oz]);
    let x = input.data();
    let od = out.data_mut();
    for ch in 0..c {
        for i in 0..ox {
            for j in 0..oy {
                let src = ((ch * nx + i / 2) * ny + j / 2) * nz;
                let dst = ((ch * ox + i) * oy + j) * oz;
                for k in 0..oz {
                    od[dst + k] = x[src + k / 2];
                }
            }
        }
    }
    out
}

fn upsample_backward<T: Scalar>(in_shape: &[usize], g: &Tensor<T>) -> Tensor<T> {
    let mut gi = Tensor::zeros(in_shape);
    let (c, nx, ny, nz) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (ox, oy, oz) = (2 * nx, 2 * ny, 2 * nz);
    let gd = g.data();
    let d = gi.data_mut();
    for ch in 0..c {
        for i in 0..ox {
            for j in 0..oy {
                let dst = ((ch * nx + i / 2) * ny + j / 2) * nz;
                let src = ((ch * ox + i) * oy + j) * oz;
                for k in 0..oz {
                    d[dst + k / 2] += gd[src + k];
                }
            }
        }
    }
    gi
}

//! Central finite-difference checks of the analytic layer and loss gradients,
//! run entirely in f64.
//!
//! The error of a gradient tensor is `max_i |analytic_i - numeric_i|` divided by
//! `max_i |numeric_i|`, i.e. relative to the gradient's own scale.

use synthseg_core::nn::layers::{init_weights, update_running_moments};
use synthseg_core::nn::{
    layer_backward, layer_forward, soft_dice_loss, sum_squares_loss, LayerKind, LayerSpec, LayerWeights, Mode,
};
use synthseg_core::rng::RngStream;
use synthseg_core::tensor::Tensor;

pub const EPS: f64 = 1e-3;
pub const SHAPE: [usize; 4] = [2, 4, 4, 4];

pub fn all_layer_kinds() -> Vec<LayerKind> {
    vec![
        LayerKind::Conv3,
        LayerKind::Conv5,
        LayerKind::BatchNorm,
        LayerKind::Elu,
        LayerKind::Softmax,
        LayerKind::MaxPool2,
        LayerKind::Upsample2,
        LayerKind::ConcatSkip { slot: 0 },
        LayerKind::GlobalMaxPool,
    ]
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn normal(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect())
}

/// Distinct values at least 0.05 apart, so max selections never flip under
/// a perturbation of `EPS`.
fn well_separated(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.index(i + 1));
    }
    Tensor::from_vec(shape, order.into_iter().map(|v| v as f64 * 0.05 - 1.0).collect())
}

/// Keeps inputs away from the ELU kink, where central differences lose accuracy.
fn away_from_zero(mut t: Tensor<f64>) -> Tensor<f64> {
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1f64.copysign(*v);
        }
    }
    t
}

/// Largest relative error over the input, skip and parameter gradients of one
/// random instance of `kind`.
pub fn check_layer(kind: &LayerKind, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 7);
    let c = SHAPE[0];
    let out_channels = match kind {
        LayerKind::ConcatSkip { .. } => 2 * c,
        LayerKind::Conv3 | LayerKind::Conv5 => 3,
        _ => c,
    };
    let spec = LayerSpec { name: "probe".into(), kind: kind.clone(), in_channels: c, out_channels, save_skip: None };
    let mut weights: LayerWeights<f64> = init_weights(&spec, &mut rng);
    for p in weights.params.iter_mut() {
        for v in p.data_mut() {
            *v += 0.3 * rng.normal();
        }
    }
    let input = match kind {
        LayerKind::MaxPool2 | LayerKind::GlobalMaxPool => well_separated(&SHAPE, &mut rng),
        LayerKind::Elu => away_from_zero(normal(&SHAPE, &mut rng)),
        _ => normal(&SHAPE, &mut rng),
    };
    let skip = matches!(kind, LayerKind::ConcatSkip { .. }).then(|| normal(&SHAPE, &mut rng));

    let objective = |w: &LayerWeights<f64>, x: &Tensor<f64>, s: Option<&Tensor<f64>>, r: &Tensor<f64>| -> f64 {
        let (y, _) = layer_forward(&spec, w, x, Mode::Train, s).unwrap();
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let (y, cache) = layer_forward(&spec, &weights, &input, Mode::Train, skip.as_ref()).unwrap();
    let projection = normal(y.shape(), &mut rng);
    let grads = layer_backward(&spec, &weights, &cache, &projection).unwrap();
    // running-moment bookkeeping must not disturb the gradient path
    let mut scratch = weights.clone();
    update_running_moments(&mut scratch, &cache);

    let numeric = |f: &dyn Fn(f64) -> f64| (f(EPS) - f(-EPS)) / (2.0 * EPS);
    let mut worst = 0.0f64;

    let num_in: Vec<f64> = (0..input.len())
        .map(|i| {
            numeric(&|e| {
                let mut x = input.clone();
                x.data_mut()[i] += e;
                objective(&weights, &x, skip.as_ref(), &projection)
            })
        })
        .collect();
    worst = worst.max(rel_error(grads.input.data(), &num_in));

    if let Some(s) = &skip {
        let num_skip: Vec<f64> = (0..s.len())
            .map(|i| {
                numeric(&|e| {
                    let mut t = s.clone();
                    t.data_mut()[i] += e;
                    objective(&weights, &input, Some(&t), &projection)
                })
            })
            .collect();
        worst = worst.max(rel_error(grads.skip.as_ref().unwrap().data(), &num_skip));
    }

    for (pi, g) in grads.params.iter().enumerate() {
        let num: Vec<f64> = (0..g.len())
            .map(|i| {
                numeric(&|e| {
                    let mut w = weights.clone();
                    w.params[pi].data_mut()[i] += e;
                    objective(&w, &input, skip.as_ref(), &projection)
                })
            })
            .collect();
        worst = worst.max(rel_error(g.data(), &num));
    }
    worst
}

/// Soft Dice gradient against central differences on a random prediction and one-hot target.
pub fn check_soft_dice(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 8);
    let [k, x, y, z] = [3, 3, 3, 2];
    let p = x * y * z;
    let pred = Tensor::from_vec(&[k, x, y, z], (0..k * p).map(|_| rng.uniform(0.05, 1.0)).collect());
    let mut target = Tensor::zeros(&[k, x, y, z]);
    for v in 0..p {
        let c = rng.index(k);
        target.data_mut()[c * p + v] = 1.0;
    }
    let (_, grad) = soft_dice_loss(&pred, &target).unwrap();
    let num: Vec<f64> = (0..pred.len())
        .map(|i| {
            let f = |e: f64| {
                let mut q = pred.clone();
                q.data_mut()[i] += e;
                soft_dice_loss(&q, &target).unwrap().0
            };
            (f(EPS) - f(-EPS)) / (2.0 * EPS)
        })
        .collect();
    rel_error(grad.data(), &num)
}

pub fn check_sum_squares(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 9);
    let pred = normal(&[10], &mut rng);
    let target = normal(&[10], &mut rng);
    let (_, grad) = sum_squares_loss(&pred, &target).unwrap();
    let num: Vec<f64> = (0..pred.len())
        .map(|i| {
            let f = |e: f64| {
                let mut q = pred.clone();
                q.data_mut()[i] += e;
                sum_squares_loss(&q, &target).unwrap().0
            };
            (f(EPS) - f(-EPS)) / (2.0 * EPS)
        })
        .collect();
    rel_error(grad.data(), &num)
}

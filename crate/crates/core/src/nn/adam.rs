use super::{Grads, NnError, Weights};
use crate::tensor::{Scalar, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const DEFAULT_LR: f64 = 1e-5;

/// First and second moments, shaped like the parameters of a [`Weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Vec<Vec<Tensor<T>>>,
    pub v: Vec<Vec<Tensor<T>>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(weights: &Weights<T>) -> Self {
        let zeros: Vec<Vec<Tensor<T>>> =
            weights.layers.iter().map(|l| l.params.iter().map(|p| Tensor::zeros(p.shape())).collect()).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One bias-corrected Adam update. Moment arithmetic is done in `f64`.
pub fn adam_step<T: Scalar>(
    weights: &mut Weights<T>,
    grads: &Grads<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<(), NnError> {
    let aligned = grads.len() == weights.layers.len()
        && state.m.len() == weights.layers.len()
        && weights.layers.iter().zip(grads).zip(&state.m).all(|((l, g), m)| {
            l.params.len() == g.len()
                && m.len() == g.len()
                && l.params.iter().zip(g).zip(m).all(|((p, g), m)| p.shape() == g.shape() && p.shape() == m.shape())
        });
    if !aligned {
        return Err(NnError::WeightsMismatch("gradients or moments are not aligned with the weights".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (li, layer) in weights.layers.iter_mut().enumerate() {
        for (pi, param) in layer.params.iter_mut().enumerate() {
            let g = grads[li][pi].data();
            let m = state.m[li][pi].data_mut();
            let v = state.v[li][pi].data_mut();
            for (i, w) in param.data_mut().iter_mut().enumerate() {
                let gi = g[i].f64();
                let mi = ADAM_BETA1 * m[i].f64() + (1.0 - ADAM_BETA1) * gi;
                let vi = ADAM_BETA2 * v[i].f64() + (1.0 - ADAM_BETA2) * gi * gi;
                m[i] = T::lit(mi);
                v[i] = T::lit(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + ADAM_EPSILON);
                *w = T::lit(w.f64() - update);
            }
        }
    }
    Ok(())
}

use super::NnError;
use crate::tensor::{Scalar, Tensor};

/// Average soft Dice loss over the `K` channels of `[K, X, Y, Z]` maps:
/// `1 - (1/K) sum_k 2 <Y_k, T_k> / (|Y_k|^2 + |T_k|^2)`.
///
/// A channel whose prediction and target are both all-zero counts as Dice 1
/// with zero gradient.
pub fn soft_dice_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::LossInput(format!("shapes {:?} and {:?} differ", pred.shape(), target.shape())));
    }
    if pred.shape().is_empty() || pred.channels() == 0 {
        return Err(NnError::LossInput("no channels".into()));
    }
    let k = pred.channels();
    let mut dice_sum = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for ch in 0..k {
        let (y, t) = (pred.channel(ch), target.channel(ch));
        let mut inter = 0.0f64;
        let mut denom = 0.0f64;
        for (&a, &b) in y.iter().zip(t) {
            let (a, b) = (a.f64(), b.f64());
            inter += a * b;
            denom += a * a + b * b;
        }
        if denom == 0.0 {
            dice_sum += 1.0;
            continue;
        }
        dice_sum += 2.0 * inter / denom;
        let scale = -1.0 / k as f64;
        for ((g, &a), &b) in grad.channel_mut(ch).iter_mut().zip(y).zip(t) {
            let d = 2.0 * b.f64() / denom - 4.0 * inter * a.f64() / (denom * denom);
            *g = T::lit(scale * d);
        }
    }
    Ok((1.0 - dice_sum / k as f64, grad))
}

/// `sum_i (p_i - t_i)^2` with gradient `2 (p - t)`.
pub fn sum_squares_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>), NnError> {
    if pred.len() != target.len() {
        return Err(NnError::LossInput(format!("lengths {} and {} differ", pred.len(), target.len())));
    }
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p.f64() - t.f64();
            loss += d * d;
            T::lit(2.0 * d)
        })
        .collect();
    Ok((loss, Tensor::from_vec(pred.shape(), grad)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_zero() {
        let t = Tensor::<f32>::from_vec(&[2, 1, 1, 3], vec![1., 0., 1., 0., 1., 0.]);
        assert_eq!(soft_dice_loss(&t, &t).unwrap().0, 0.0);
    }

    #[test]
    fn uniform_two_class_case() {
        let t = Tensor::<f64>::from_vec(&[2, 1, 1, 2], vec![1., 0., 0., 1.]);
        let p = Tensor::filled(&[2, 1, 1, 2], 0.5);
        // per label: 2 * 0.5 / (0.5 + 1) = 2/3
        assert!((soft_dice_loss(&p, &t).unwrap().0 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sum_squares_example() {
        let p = Tensor::<f64>::from_vec(&[2], vec![1., 2.]);
        let (l, g) = sum_squares_loss(&p, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(l, 5.0);
        assert_eq!(g.data(), &[2., 4.]);
        assert_eq!(sum_squares_loss(&Tensor::zeros(&[2]), &p).unwrap().0, 5.0);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let a = Tensor::<f32>::zeros(&[2, 1, 1, 1]);
        assert!(soft_dice_loss(&a, &Tensor::zeros(&[3, 1, 1, 1])).is_err());
        assert!(sum_squares_loss(&Tensor::<f32>::zeros(&[2]), &Tensor::zeros(&[3])).is_err());
    }
}

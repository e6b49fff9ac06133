use super::{NumericsError, Result, Scalar, Tensor};

/// Huber loss of a single residual and its derivative.
#[inline]
pub fn huber_scalar<T: Scalar>(residual: T, delta: T) -> (T, T) {
    let half = T::of(0.5);
    if residual.abs() <= delta {
        (half * residual * residual, residual)
    } else {
        (delta * residual.abs() - half * delta * delta, delta * residual.signum())
    }
}

/// Mean Huber loss over cells where `mask == 1`, with its gradient w.r.t. `pred`.
///
/// Cells with `mask == 0` are never read from `pred` or `target`, so they
/// cannot influence the value or the gradient.
pub fn huber_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mask: &Tensor<T>,
    delta: T,
) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(NumericsError::ShapeMismatch {
            op: "huber_loss",
            detail: format!(
                "pred {:?}, target {:?}, mask {:?}",
                pred.shape(),
                target.shape(),
                mask.shape()
            ),
        });
    }
    if !(delta > T::zero()) {
        return Err(NumericsError::InvalidArgument(format!("huber delta must be > 0, got {delta}")));
    }
    if mask.data().iter().any(|&m| m != T::zero() && m != T::one()) {
        return Err(NumericsError::InvalidArgument("huber mask must be 0/1".into()));
    }
    let active = mask.data().iter().filter(|&&m| m == T::one()).count();
    if active == 0 {
        return Err(NumericsError::EmptyMask);
    }
    let inv = T::one() / T::of(active as f64);
    let mut grad = Tensor::zeros(pred.shape());
    let mut total = T::zero();
    for (i, g) in grad.data_mut().iter_mut().enumerate() {
        if mask.data()[i] == T::one() {
            let (l, d) = huber_scalar(pred.data()[i] - target.data()[i], delta);
            total += l;
            *g = d * inv;
        }
    }
    Ok((total * inv, grad))
}

/// Cross-entropy of a probability vector against a class label, with the
/// gradient of the loss w.r.t. the logits that produced `probabilities`
/// through softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossEntropy<T> {
    pub loss: T,
    pub logit_grad: Vec<T>,
}

pub fn cross_entropy<T: Scalar>(probabilities: &[T], label: usize) -> Result<CrossEntropy<T>> {
    if label >= probabilities.len() {
        return Err(NumericsError::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probabilities.len()
        )));
    }
    let sum: T = probabilities.iter().copied().sum();
    if (sum - T::one()).abs().as_f64() > 1e-6 {
        return Err(NumericsError::InvalidArgument(format!("probabilities sum to {sum}, not 1")));
    }
    let p = probabilities[label].max(T::of(1e-12)).min(T::one());
    let logit_grad = probabilities
        .iter()
        .enumerate()
        .map(|(k, &pk)| if k == label { pk - T::one() } else { pk })
        .collect();
    Ok(CrossEntropy { loss: -p.ln(), logit_grad })
}

/// `w1 * huber + w2 * ce`.
pub fn combined_loss<T: Scalar>(huber: T, ce: T, w1: T, w2: T) -> Result<T> {
    if w1 < T::zero() || w2 < T::zero() {
        return Err(NumericsError::InvalidArgument(format!("loss weights must be >= 0, got {w1}, {w2}")));
    }
    if w1 == T::zero() && w2 == T::zero() {
        return Err(NumericsError::ZeroWeights);
    }
    Ok(w1 * huber + w2 * ce)
}

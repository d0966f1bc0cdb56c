use ndarray::{Array2, ArrayView2};

use crate::error::{check_len, Error, Result};
use crate::scalar::{euclidean, Scalar};

/// A scalar loss together with its gradient with respect to each input, in
/// argument order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T> {
    pub loss: T,
    pub grads: Vec<Vec<T>>,
}

/// Mean squared error; gradients are with respect to `pred` and `target`.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<LossValue<T>> {
    check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::Empty("mse input"));
    }
    let n = T::of(pred.len() as f64);
    let two = T::of(2.0);
    let loss = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<T>()
        / n;
    let dpred: Vec<T> = pred.iter().zip(target).map(|(&p, &t)| two * (p - t) / n).collect();
    let dtarget = dpred.iter().map(|&g| -g).collect();
    Ok(LossValue {
        loss,
        grads: vec![dpred, dtarget],
    })
}

/// MSE averaged over every entry of a batch; returns the loss and the
/// gradient with respect to `pred`.
pub fn mse_loss_batch<T: Scalar>(pred: ArrayView2<'_, T>, target: ArrayView2<'_, T>) -> Result<(T, Array2<T>)> {
    if pred.dim() != target.dim() {
        return Err(Error::Invalid(format!(
            "mse batch shapes {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("mse batch"));
    }
    let n = T::of(pred.len() as f64);
    let diff = &pred - &target;
    let loss = diff.iter().map(|&d| d * d).sum::<T>() / n;
    let scale = T::of(2.0) / n;
    Ok((loss, diff.mapv(|d| d * scale)))
}

/// Hinge triplet loss `max(d(a,p) - d(a,n) + alpha, 0)` with Euclidean `d`.
///
/// Gradients are zero when the hinge is inactive or exactly at its boundary;
/// a zero distance contributes a zero subgradient.
pub fn triplet_loss<T: Scalar>(a: &[T], p: &[T], n: &[T], alpha: T) -> Result<LossValue<T>> {
    check_len(a.len(), p.len())?;
    check_len(a.len(), n.len())?;
    if alpha < T::zero() || !alpha.is_finite() {
        return Err(Error::Invalid(format!("triplet margin {alpha} must be finite and >= 0")));
    }
    let d_ap = euclidean(a, p);
    let d_an = euclidean(a, n);
    let raw = d_ap - d_an + alpha;
    let dim = a.len();
    if raw <= T::zero() {
        return Ok(LossValue {
            loss: T::zero(),
            grads: vec![vec![T::zero(); dim]; 3],
        });
    }
    let unit = |x: &[T], y: &[T], d: T| -> Vec<T> {
        if d > T::zero() {
            x.iter().zip(y).map(|(&xi, &yi)| (xi - yi) / d).collect()
        } else {
            vec![T::zero(); x.len()]
        }
    };
    let e_ap = unit(a, p, d_ap);
    let e_an = unit(a, n, d_an);
    let ga = e_ap.iter().zip(&e_an).map(|(&x, &y)| x - y).collect();
    let gp = e_ap.iter().map(|&x| -x).collect();
    Ok(LossValue {
        loss: raw,
        grads: vec![ga, gp, e_an],
    })
}

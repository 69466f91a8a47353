use super::gemm::Real;
use crate::{Error, Result};

fn check(pred: usize, target: usize) -> Result<()> {
    if pred != target || pred == 0 {
        return Err(Error::Shape(format!(
            "loss over {pred} predictions and {target} targets"
        )));
    }
    Ok(())
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<T: Real>(pred: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    check(pred.len(), target.len())?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p.as_f64() - t.as_f64();
            value += e * e;
            T::of_f64(2.0 * e / n)
        })
        .collect();
    Ok((value / n, grad))
}

/// Mean Huber loss: quadratic `e^2 / 2` for `|e| <= delta`, linear
/// `delta * (|e| - delta / 2)` beyond.
pub fn huber_loss<T: Real>(pred: &[T], target: &[T], delta: f64) -> Result<(f64, Vec<T>)> {
    check(pred.len(), target.len())?;
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("Huber delta must be positive, got {delta}")));
    }
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p.as_f64() - t.as_f64();
            if e.abs() <= delta {
                value += 0.5 * e * e;
                T::of_f64(e / n)
            } else {
                value += delta * (e.abs() - 0.5 * delta);
                T::of_f64(delta * e.signum() / n)
            }
        })
        .collect();
    Ok((value / n, grad))
}

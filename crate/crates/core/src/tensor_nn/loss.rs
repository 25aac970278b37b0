use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check(op: &'static str, pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            op,
            format!(
                "prediction {:?} vs target {:?}",
                pred.shape(),
                target.shape()
            ),
        ));
    }
    Ok(())
}

/// Mean of squared errors over every element.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check("mse_loss", pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean of absolute errors over every element.
pub fn mae_metric(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check("mae_metric", pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// d(mse)/d(pred) where the mean runs over `count` elements.
pub fn mse_grad(pred: &Tensor, target: &Tensor, count: usize) -> Tensor {
    let scale = 2.0 / count as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| scale * (p - t))
        .collect();
    Tensor::new(pred.shape().to_vec(), data).expect("same shape as prediction")
}

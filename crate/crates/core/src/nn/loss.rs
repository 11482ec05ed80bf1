use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Half mean squared error over every entry of the batch.
///
/// Returns the loss and its gradient with respect to `y_hat`.
pub fn mse_loss(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if y_hat.dim() != y.dim() {
        return Err(Error::Contract(format!(
            "prediction shape {:?} differs from target shape {:?}",
            y_hat.dim(),
            y.dim()
        )));
    }
    let count = y.len();
    if count == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let scale = 1.0 / count as f64;
    let mut grad = Array2::zeros(y.dim());
    let mut sum = 0.0;
    Zip::from(&mut grad).and(y_hat).and(y).for_each(|g, &a, &b| {
        let r = a - b;
        sum += r * r;
        *g = r * scale;
    });
    Ok((0.5 * sum * scale, grad))
}

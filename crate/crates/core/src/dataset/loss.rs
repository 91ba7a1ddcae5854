use crate::error::{param_err, Error, Result};
use crate::neural::DenseMatrix;
use crate::scalar::Scalar;

fn check<T: Scalar>(pred: &DenseMatrix<T>, target: &DenseMatrix<T>, mask: &[bool]) -> Result<usize> {
    if pred.shape() != target.shape() || mask.len() != pred.rows() {
        return param_err(format!(
            "masked MSE shapes: pred {:?}, target {:?}, mask {}",
            pred.shape(),
            target.shape(),
            mask.len()
        ));
    }
    let count = mask.iter().filter(|&&m| m).count() * pred.cols();
    if count == 0 {
        return Err(Error::DegenerateLoss("mask excludes every entry".into()));
    }
    Ok(count)
}

/// Mean squared error over the rows with `mask[row] == true`.
pub fn masked_mse<T: Scalar>(pred: &DenseMatrix<T>, target: &DenseMatrix<T>, mask: &[bool]) -> Result<T> {
    let count = check(pred, target, mask)?;
    let mut s = T::zero();
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (&p, &t) in pred.row(i).iter().zip(target.row(i)) {
            s += (p - t) * (p - t);
        }
    }
    Ok(s / T::from_count(count))
}

/// [`masked_mse`] together with its gradient w.r.t. `pred`; excluded rows get zero.
pub fn masked_mse_grad<T: Scalar>(
    pred: &DenseMatrix<T>,
    target: &DenseMatrix<T>,
    mask: &[bool],
) -> Result<(T, DenseMatrix<T>)> {
    let count = check(pred, target, mask)?;
    let scale = T::lit(2.0) / T::from_count(count);
    let mut grad = DenseMatrix::zeros(pred.rows(), pred.cols());
    let mut s = T::zero();
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for ((&p, &t), g) in pred.row(i).iter().zip(target.row(i)).zip(grad.row_mut(i)) {
            s += (p - t) * (p - t);
            *g = scale * (p - t);
        }
    }
    Ok((s / T::from_count(count), grad))
}

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Compare an analytic gradient against central finite differences.
///
/// `f` returns the scalar value and its analytic gradient at the point.
/// The result is `max_i |fd_i - an_i| / max(1, |fd_i|, |an_i|)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let (value, analytic) = f(x)?;
    if !value.is_finite() {
        return Err(Error::Evaluation(format!("f(x) = {value}")));
    }
    if analytic.shape() != x.shape() {
        return Err(Error::dim("grad_check", analytic.shape(), x.shape()));
    }
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let (plus, _) = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let (minus, _) = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite value while probing coordinate {i}"
            )));
        }
        let fd = (plus - minus) / (2.0 * eps);
        let an = analytic.data()[i];
        let err = (fd - an).abs() / 1f64.max(fd.abs()).max(an.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

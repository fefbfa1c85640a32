//! Central finite differences, used to validate reverse-mode gradients.

use crate::error::Result;
use crate::params::{ParamId, ParamStore};

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Numerical gradient of `loss` with respect to every scalar of parameter `id`.
///
/// `loss` is re-evaluated from scratch at `theta ± step` for each coordinate.
pub fn numeric_param_grad<F>(params: &mut ParamStore, id: ParamId, step: f64, mut loss: F) -> Result<Vec<f64>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let n = params.get(id).len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let orig = params.get(id).data()[k];
        params.get_mut(id).data_mut()[k] = orig + step;
        let up = loss(params)?;
        params.get_mut(id).data_mut()[k] = orig - step;
        let down = loss(params)?;
        params.get_mut(id).data_mut()[k] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

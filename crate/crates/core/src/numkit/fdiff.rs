use alloc::vec::Vec;

use crate::{Error, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient `(f(p + h e_i) - f(p - h e_i)) / 2h`.
///
/// `f` must be deterministic in `params`; any noise it draws has to be frozen
/// by the caller.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("finite-difference step {h}")));
    }
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                context: "finite_diff_grad",
                coord: i,
            });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

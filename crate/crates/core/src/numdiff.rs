//! Central finite-difference gradients, used as the numeric baseline.

/// Step used for coordinate `x`: `1e-6 · max(1, |x|)`.
#[inline]
pub fn central_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// Central-difference gradient with two evaluations per coordinate.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = central_step(x[i]);
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let dn = f(&work);
            work[i] = x[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

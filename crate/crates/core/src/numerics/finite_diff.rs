use super::DenseMatrix;

/// Central-difference gradient of `f` at `params`, one coordinate at a time.
pub fn finite_diff_gradient<F>(mut f: F, params: &[DenseMatrix], eps: f64) -> Vec<DenseMatrix>
where
    F: FnMut(&[DenseMatrix]) -> f64,
{
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut grad = DenseMatrix::zeros(params[p].rows(), params[p].cols());
        for k in 0..params[p].as_slice().len() {
            let orig = work[p].as_slice()[k];
            work[p].as_mut_slice()[k] = orig + eps;
            let plus = f(&work);
            work[p].as_mut_slice()[k] = orig - eps;
            let minus = f(&work);
            work[p].as_mut_slice()[k] = orig;
            grad.as_mut_slice()[k] = (plus - minus) / (2.0 * eps);
        }
        out.push(grad);
    }
    out
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero entries from
/// being judged on roundoff alone.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

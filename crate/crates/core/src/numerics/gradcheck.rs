//! Central finite differences, the oracle for every analytic backward pass.

/// `(f(p + eps e_i) - f(p - eps e_i)) / 2 eps` for every coordinate `i`.
pub fn finite_difference_gradient<F>(mut f: F, params: &[f64], epsilon: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + epsilon;
            let up = f(&p);
            p[i] = orig - epsilon;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * epsilon)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`; zero when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

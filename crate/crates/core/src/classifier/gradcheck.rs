/// Largest elementwise relative error between the analytic gradient that `f`
/// reports at `theta` and the fourth-order central difference
/// `(8(f(θ+ε) − f(θ−ε)) − (f(θ+2ε) − f(θ−2ε))) / 12ε`.
///
/// The stencil reaches `2ε` from `theta`, so `ε` must keep it inside a region
/// where `f` is smooth. Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(mut f: F, theta: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let (_, analytic) = f(theta);
    assert_eq!(analytic.len(), theta.len(), "gradient length");
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for k in 0..theta.len() {
        let mut at = |delta: f64| {
            probe[k] = theta[k] + delta;
            let (v, _) = f(&probe);
            probe[k] = theta[k];
            v
        };
        let near = at(eps) - at(-eps);
        let far = at(2.0 * eps) - at(-2.0 * eps);
        let numeric = (8.0 * near - far) / (12.0 * eps);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

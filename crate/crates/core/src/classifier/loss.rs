use crate::matrix::Matrix;

/// Multiclass hinge loss (Weston–Watkins) averaged over rows, with its exact
/// gradient with respect to the scores.
///
/// `loss = (1/n) Σᵢ Σ_{j≠yᵢ} max(0, sᵢⱼ − sᵢ,yᵢ + margin)`
pub fn svm_loss_grad(scores: &Matrix, labels: &[usize], margin: f64) -> (f64, Matrix) {
    let (n, c) = scores.shape();
    assert_eq!(labels.len(), n, "one label per score row");
    let mut grad = Matrix::zeros(n, c);
    if n == 0 {
        return (0.0, grad);
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        assert!(y < c, "label {y} out of range for {c} classes");
        let row = scores.row(i);
        let correct = row[y];
        let g = grad.row_mut(i);
        for j in 0..c {
            if j == y {
                continue;
            }
            let m = row[j] - correct + margin;
            if m > 0.0 {
                loss += m;
                g[j] += inv_n;
                g[y] -= inv_n;
            }
        }
    }
    (loss * inv_n, grad)
}

/// Mean cross-entropy of the row-wise softmax, with its exact gradient.
pub fn softmax_loss_grad(scores: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let (n, c) = scores.shape();
    assert_eq!(labels.len(), n, "one label per score row");
    let mut grad = Matrix::zeros(n, c);
    if n == 0 {
        return (0.0, grad);
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        assert!(y < c, "label {y} out of range for {c} classes");
        let row = scores.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let g = grad.row_mut(i);
        let mut z = 0.0;
        for (gj, &s) in g.iter_mut().zip(row) {
            *gj = (s - max).exp();
            z += *gj;
        }
        loss += z.ln() - (row[y] - max);
        for gj in g.iter_mut() {
            *gj *= inv_n / z;
        }
        g[y] -= inv_n;
    }
    (loss * inv_n, grad)
}

/// Row-wise softmax.
pub fn softmax_rows(scores: &Matrix) -> Matrix {
    let mut out = scores.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

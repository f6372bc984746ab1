use super::Matrix;
use crate::error::{Error, Result};

/// Row-wise softmax with the usual max shift.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Class-weighted mean cross-entropy of softmax(logits).
///
/// `loss = sum_i w[y_i] * -log softmax(logits_i)[y_i] / sum_i w[y_i]`.
/// Returns the loss and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(
    logits: &Matrix,
    labels: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Matrix)> {
    let (n, k) = logits.shape();
    if labels.len() != n {
        return Err(Error::dim("labels", n, labels.len()));
    }
    if class_weights.len() != k {
        return Err(Error::dim("class weights", k, class_weights.len()));
    }
    if class_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Invalid("class weights must be positive".into()));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    if n == 0 {
        return Err(Error::Empty("cross-entropy batch".into()));
    }
    let mut grad = Matrix::zeros(n, k);
    let mut total_weight = 0.0;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::Invalid(format!("label {y} out of range")));
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let w = class_weights[y];
        loss += w * (lse - row[y]);
        total_weight += w;
        let g = grad.row_mut(i);
        for (c, gv) in g.iter_mut().enumerate() {
            let p = (row[c] - lse).exp();
            *gv = w * (p - if c == y { 1.0 } else { 0.0 });
        }
    }
    grad.scale(1.0 / total_weight);
    Ok((loss / total_weight, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln2() {
        let (l, _) = softmax_cross_entropy(&Matrix::zeros(1, 2), &[0], &[1.0, 1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_logits_are_stable() {
        let logits = Matrix::row_vector(vec![1000.0, 0.0]);
        let (l, g) = softmax_cross_entropy(&logits, &[0], &[1.0, 1.0]).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g.is_finite());
        let (l, _) = softmax_cross_entropy(&logits, &[1], &[1.0, 1.0]).unwrap();
        assert!((l - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_mean() {
        let logits = Matrix::from_rows(&[vec![0.3, -0.2], vec![1.0, 0.5]]).unwrap();
        let single = |r: usize, y: usize| {
            let m = Matrix::row_vector(logits.row(r).to_vec());
            softmax_cross_entropy(&m, &[y], &[1.0, 1.0]).unwrap().0
        };
        let l0 = single(0, 0);
        let l1 = single(1, 1);
        let (l, _) = softmax_cross_entropy(&logits, &[0, 1], &[2.0, 1.0]).unwrap();
        assert!((l - (2.0 * l0 + l1) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let logits = Matrix::from_rows(&[vec![0.3, -0.2], vec![1.0, 0.5], vec![-2.0, 0.1]]).unwrap();
        let labels = [0, 1, 1];
        let w = [1.5, 0.5];
        let (_, g) = softmax_cross_entropy(&logits, &labels, &w).unwrap();
        let h = 1e-6;
        for idx in 0..6 {
            let mut p = logits.clone();
            p.data_mut()[idx] += h;
            let mut q = logits.clone();
            q.data_mut()[idx] -= h;
            let fd = (softmax_cross_entropy(&p, &labels, &w).unwrap().0
                - softmax_cross_entropy(&q, &labels, &w).unwrap().0)
                / (2.0 * h);
            assert!((fd - g.data()[idx]).abs() < 1e-8);
        }
    }

    #[test]
    fn errors() {
        let nan = Matrix::row_vector(vec![f64::NAN, 0.0]);
        assert!(matches!(
            softmax_cross_entropy(&nan, &[0], &[1.0, 1.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(softmax_cross_entropy(&Matrix::zeros(1, 2), &[0], &[1.0]).is_err());
        assert!(softmax_cross_entropy(&Matrix::zeros(1, 2), &[0], &[0.0, 1.0]).is_err());
    }
}

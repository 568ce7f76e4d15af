//! Small dense linear-algebra helpers shared across modules.
//!
//! Matrix-valued states are flattened row-major ("component-fastest"):
//! entry `(i, j)` of an `m x d` value sits at flat index `i*d + j`.

use nalgebra::{DMatrix, DVector};

/// Row-major flattening of a matrix value into a state vector.
pub fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    DVector::from_vec(v)
}

/// Inverse of [`flatten`] for a known shape.
pub fn unflatten(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "flat state length mismatch");
    DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

/// 3x3 diagonal matrix.
pub fn diag3(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![a, b, c]))
}

/// Euclidean (Frobenius) distance between two matrix values.
pub fn dist(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

/// Simple ordinary least squares for `y ~ a + b x`; returns `(a, b, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(u, v)| {
            let p = a + b * u;
            (v - p) * (v - p)
        })
        .sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (a, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let v = flatten(&m);
        assert_eq!(v[1], 2.0);
        assert_eq!(unflatten(&v, 2, 3), m);
    }

    #[test]
    fn exact_line_has_unit_r2() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let (a, b, r2) = linear_fit(&x, &y);
        assert!((a - 1.0).abs() < 1e-12);
        assert!((b - 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}

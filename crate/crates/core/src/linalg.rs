//! Small dense linear-algebra helpers shared across modules.

use nalgebra::SVD;

use crate::{Matrix, Vector, RANK_RTOL};

/// Singular values in descending order. Empty matrices yield an empty list.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `RANK_RTOL · σ_max`. A zero matrix has rank 0.
pub fn numerical_rank(a: &Matrix) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > RANK_RTOL * smax).count(),
        _ => 0,
    }
}

/// Whether the `p`-th singular value clears the shared relative threshold.
pub fn has_full_column_rank(a: &Matrix) -> bool {
    numerical_rank(a) == a.ncols()
}

/// Ratio σ_min/σ_max over the first `min(rows, cols)` singular values (0 for a zero matrix).
pub fn rank_ratio(a: &Matrix) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}

/// Spectral norm.
pub fn op_norm(a: &Matrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Minimum-norm least-squares solution of `a x = b` with the given relative
/// rank tolerance. Returns the solution and the numerical rank used.
pub fn min_norm_solve(a: &Matrix, b: &Vector, rtol: f64) -> (Vector, usize) {
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rtol * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut x = Vector::zeros(a.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let coeff = u.column(i).dot(b) / s;
            x += v_t.row(i).transpose() * coeff;
        }
    }
    (x, rank)
}

/// Thin QR factorization `a = q r` with `r` having a nonnegative diagonal.
pub fn thin_qr(a: &Matrix) -> (Matrix, Matrix) {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows().min(r.ncols()) {
        if r[(j, j)] < 0.0 {
            r.row_mut(j).neg_mut();
            q.column_mut(j).neg_mut();
        }
    }
    (q, r)
}

/// Moore–Penrose pseudoinverse of a matrix with full column rank, built from
/// its reduced singular value decomposition.
pub fn pseudoinverse(a: &Matrix) -> Matrix {
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = RANK_RTOL * smax;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut p = Matrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            p += v_t.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    p
}

/// Least-squares line fit `y ≈ slope·x + intercept`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Median of a slice (mean of the two central values for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

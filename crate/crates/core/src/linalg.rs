//! Small dense helpers shared by the hot loops. Matrices live in public APIs
//! as `nalgebra::DMatrix`; inner loops use flat row-major copies.

use nalgebra::DMatrix;

use crate::error::{Result, UrnError};

/// Tolerance for accepting a caller-supplied point as lying on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance from `x` to the segment `[a, b]`.
pub fn segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut ax_ab = 0.0;
    for i in 0..x.len() {
        let ab = b[i] - a[i];
        ab2 += ab * ab;
        ax_ab += (x[i] - a[i]) * ab;
    }
    if ab2 == 0.0 {
        return distance(x, a);
    }
    let s = (ax_ab / ab2).clamp(0.0, 1.0);
    x.iter()
        .zip(a.iter().zip(b))
        .map(|(xi, (ai, bi))| {
            let d = xi - (ai + s * (bi - ai));
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Row-major copy of a square matrix.
pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `out = A x` for a row-major `k x k` matrix.
pub fn mat_vec(a: &[f64], k: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..k {
        let row = &a[i * k..(i + 1) * k];
        out[i] = dot(row, x);
    }
}

/// `xᵀ A x` for a row-major `k x k` matrix.
pub fn quadratic_form(a: &[f64], k: usize, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..k {
        if x[i] == 0.0 {
            continue;
        }
        acc += x[i] * dot(&a[i * k..(i + 1) * k], x);
    }
    acc
}

/// Barycenter `(1/k, …, 1/k)`.
pub fn barycenter(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Vertex `e_i` of `S_k`.
pub fn vertex(k: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[i] = 1.0;
    v
}

/// Check that `x` has dimension `k`, nonnegative entries and unit sum.
pub fn check_simplex(x: &[f64], k: usize) -> Result<()> {
    if x.len() != k {
        return Err(UrnError::DimensionMismatch {
            expected: k,
            actual: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite() || *v < -SIMPLEX_TOL) {
        return Err(UrnError::NotOnSimplex(format!("{x:?} has a negative entry")));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(UrnError::NotOnSimplex(format!("{x:?} sums to {s}")));
    }
    Ok(())
}

/// Uniform sample from `S_k` from `k` independent uniforms (normalized
/// exponentials).
pub fn simplex_from_uniforms(u: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = u.iter().map(|v| -(1.0 - v).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_matches_nalgebra() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.0, 1.0, 2.0]);
        let x = [0.2, 0.3, 0.5];
        let xv = nalgebra::DVector::from_row_slice(&x);
        let expected = (xv.transpose() * &m * &xv)[(0, 0)];
        let q = quadratic_form(&row_major(&m), 3, &x);
        assert!((q - expected).abs() < 1e-15);
    }

    #[test]
    fn segment_distance_endpoints_and_interior() {
        let a = [0.0, 0.0];
        let b = [1.0, 0.0];
        assert_eq!(segment_distance(&[0.5, 1.0], &a, &b), 1.0);
        assert_eq!(segment_distance(&[2.0, 0.0], &a, &b), 1.0);
        assert_eq!(segment_distance(&[0.3, 0.0], &a, &b), 0.0);
    }

    #[test]
    fn simplex_check_rejects_bad_points() {
        assert!(check_simplex(&[0.5, 0.5], 2).is_ok());
        assert!(check_simplex(&[0.6, 0.5], 2).is_err());
        assert!(check_simplex(&[1.1, -0.1], 2).is_err());
        assert!(check_simplex(&[1.0], 2).is_err());
    }
}

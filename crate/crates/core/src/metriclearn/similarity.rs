use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{dot, norm, Matrix};

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        bail!(InvalidArgument, "cosine similarity of a zero vector");
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Row-normalized copy of `rows` plus the row norms.
pub(crate) fn normalize_rows(rows: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut out = rows.clone();
    let mut norms = Vec::with_capacity(rows.rows());
    for i in 0..rows.rows() {
        let n = norm(rows.row(i));
        if n == 0.0 || !n.is_finite() {
            bail!(Degenerate, "row {i} has norm {n}; cosine similarity undefined");
        }
        for x in out.row_mut(i) {
            *x /= n;
        }
        norms.push(n);
    }
    Ok((out, norms))
}

/// Gram matrix of already unit-length rows.
pub(crate) fn gram(unit: &Matrix) -> Matrix {
    let m = unit.rows();
    let mut s = Matrix::zeros(m, m);
    for i in 0..m {
        s.set(i, i, dot(unit.row(i), unit.row(i)));
        for k in i + 1..m {
            let v = dot(unit.row(i), unit.row(k));
            s.set(i, k, v);
            s.set(k, i, v);
        }
    }
    s
}

/// Pairwise cosine similarities between the rows of `rows`.
pub fn cosine_similarity_matrix(rows: &Matrix) -> Result<Matrix> {
    let (unit, _) = normalize_rows(rows)?;
    Ok(gram(&unit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_orthogonal_antipodal() {
        let u = [0.3, -1.2, 2.0];
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let neg: alloc::vec::Vec<f64> = u.iter().map(|x| -x).collect();
        assert!((cosine_similarity(&u, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_is_argument_error() {
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::InvalidArgument(_))));
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn matrix_matches_pairwise() {
        let rows = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5], [3.0, 3.0]]).unwrap();
        let s = cosine_similarity_matrix(&rows).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                let direct = cosine_similarity(rows.row(i), rows.row(k)).unwrap();
                assert!((s.get(i, k) - direct).abs() < 1e-15);
            }
        }
    }
}

//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues of the pencil `(h, g)` with `g` symmetric positive definite,
/// sorted ascending.
pub fn generalized_eigenvalues(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = g.clone().cholesky().ok_or_else(|| Error::LinearSolve("metric is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.ncols()))
        .ok_or_else(|| Error::LinearSolve("singular Cholesky factor".into()))?;
    let m = &linv * h * linv.transpose();
    let sym = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ev)
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a.clone().cholesky().ok_or_else(|| Error::LinearSolve("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Solve a general square system by LU.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = a.clone().lu().solve(b).ok_or_else(|| Error::LinearSolve("singular matrix".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(x)
}

/// Rank over `Z/2` of a 0/1 matrix given as rows of booleans.
pub fn rank_mod2(rows: &[Vec<bool>]) -> usize {
    let mut m: Vec<Vec<bool>> = rows.to_vec();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..ncols {
        let Some(pivot) = (rank..m.len()).find(|&r| m[r][col]) else { continue };
        m.swap(rank, pivot);
        for r in 0..m.len() {
            if r != rank && m[r][col] {
                let (src, dst) = if r < rank {
                    let (a, b) = m.split_at_mut(rank);
                    (&b[0], &mut a[r])
                } else {
                    let (a, b) = m.split_at_mut(r);
                    (&a[rank], &mut b[0])
                };
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d ^= *s;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Inertia counts `(negative, zero, positive)` of sorted eigenvalues with an
/// absolute null tolerance.
pub fn inertia(ev: &[f64], null_tol: f64) -> (usize, usize, usize) {
    let neg = ev.iter().filter(|&&v| v < -null_tol).count();
    let zero = ev.iter().filter(|&&v| v.abs() <= null_tol).count();
    (neg, zero, ev.len() - neg - zero)
}

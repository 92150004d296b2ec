//! Fourier spectral differentiation on the uniform periodic grid `t_i = i/N`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

fn weight_cache() -> &'static Mutex<HashMap<usize, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Circulant weights `c[k] = pi (-1)^k cot(pi k / N)`, `c[0] = 0`, so that
/// `(D r)_i = sum_j c[(i - j) mod N] r_j` for period-1 functions and even `N`.
pub fn weights(n: usize) -> Arc<Vec<f64>> {
    let mut cache = weight_cache().lock().unwrap();
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut c = vec![0.0; n];
            for (k, ck) in c.iter_mut().enumerate().skip(1) {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                *ck = PI * sign / (PI * k as f64 / n as f64).tan();
            }
            Arc::new(c)
        })
        .clone()
}

/// Differentiate interleaved 2-vector samples `[x0, y0, x1, y1, ...]`.
pub fn diff2(r: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = r.len();
    let c = weights(n);
    let mut out = vec![[0.0; 2]; n];
    for (i, o) in out.iter_mut().enumerate() {
        // The weights sum to zero, so differencing against r_i is exact on constants.
        let ri = r[i];
        let mut acc = [0.0; 2];
        for (j, rj) in r.iter().enumerate() {
            let w = c[(i + n - j) % n];
            acc[0] += w * (rj[0] - ri[0]);
            acc[1] += w * (rj[1] - ri[1]);
        }
        *o = acc;
    }
    out
}

/// Apply the transpose `D^T = -D`.
pub fn diff2_t(w: &[[f64; 2]]) -> Vec<[f64; 2]> {
    diff2(w).into_iter().map(|v| [-v[0], -v[1]]).collect()
}

/// Dense `N x N` differentiation matrix.
pub fn diff_matrix(n: usize) -> DMatrix<f64> {
    let c = weights(n);
    DMatrix::from_fn(n, n, |i, j| c[(i + n - j) % n])
}

/// Basis of the coordinates orthogonal to the Nyquist mode `(-1)^i`.
///
/// The spectral derivative annihilates the Nyquist mode, so it carries no
/// kinetic term and is removed before counting Morse indices. Sample `i`
/// occupies coordinates `dim*i .. dim*(i+1)`; `extra` trailing scalar slots are
/// kept. Columns pair neighbouring samples, `e_i + e_{i+1}`.
pub fn nyquist_free_basis(n: usize, dim: usize, extra: usize) -> DMatrix<f64> {
    let rows = n * dim + extra;
    let cols = (n - 1) * dim + extra;
    let mut p = DMatrix::zeros(rows, cols);
    for j in 0..n - 1 {
        for c in 0..dim {
            p[(dim * j + c, dim * j + c)] = 1.0;
            p[(dim * (j + 1) + c, dim * j + c)] = 1.0;
        }
    }
    for e in 0..extra {
        p[(n * dim + e, (n - 1) * dim + e)] = 1.0;
    }
    p
}

/// Congruence `P^T M P` with the Nyquist-free basis.
pub fn reduce_nyquist(m: &DMatrix<f64>, n: usize, dim: usize, extra: usize) -> DMatrix<f64> {
    let p = nyquist_free_basis(n, dim, extra);
    p.transpose() * m * p
}

/// Trigonometric interpolant of periodic samples evaluated at `t`.
///
/// The Nyquist mode is treated as a cosine so the interpolant is real.
pub fn interpolate(r: &[[f64; 2]], ts: &[f64]) -> Vec<[f64; 2]> {
    let n = r.len();
    let half = n / 2;
    let mut coeffs = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let mut re = [0.0; 2];
        let mut im = [0.0; 2];
        for (j, rj) in r.iter().enumerate() {
            let arg = -2.0 * PI * (k * j) as f64 / n as f64;
            let (s, c) = arg.sin_cos();
            for d in 0..2 {
                re[d] += rj[d] * c;
                im[d] += rj[d] * s;
            }
        }
        coeffs.push((re, im));
    }
    ts.iter()
        .map(|&t| {
            let mut v = [0.0; 2];
            for (k, (re, im)) in coeffs.iter().enumerate() {
                let arg = 2.0 * PI * k as f64 * t;
                let (s, c) = arg.sin_cos();
                let weight = if k == 0 || (n % 2 == 0 && k == half) { 1.0 } else { 2.0 };
                for d in 0..2 {
                    v[d] += weight * (re[d] * c - im[d] * s);
                }
            }
            [v[0] / n as f64, v[1] / n as f64]
        })
        .collect()
}

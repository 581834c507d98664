//! Small complex linear-algebra helpers shared by the simulator, the
//! network heads and the classical baselines.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

pub type CVec = Array1<Complex64>;
pub type CMat = Array2<Complex64>;

/// Hermitian transpose.
pub fn conj_t(a: &CMat) -> CMat {
    let mut out = Array2::zeros((a.ncols(), a.nrows()));
    for ((i, j), v) in a.indexed_iter() {
        out[(j, i)] = v.conj();
    }
    out
}

/// Squared Frobenius norm.
pub fn frob_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Inner product `a^H b` of two complex vectors.
pub fn vdot(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Cholesky factor (lower triangular) of a Hermitian positive definite
/// matrix. Returns `None` if the matrix is not positive definite.
pub fn cholesky(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut l: CMat = Array2::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `A x = b` for Hermitian positive definite `A` via Cholesky.
/// `b` may have multiple right-hand-side columns.
pub fn herm_solve(a: &CMat, b: &CMat) -> Option<CMat> {
    let l = cholesky(a)?;
    let n = a.nrows();
    let m = b.ncols();
    let mut x = b.clone();
    // forward: L y = b
    for c in 0..m {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    // backward: L^H x = y
    for c in 0..m {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Some(x)
}

/// Minimum-norm least squares `argmin_X ||A X - B||_F` for a tall matrix
/// `A` via the normal equations. Falls back to a slightly ridged system
/// when the Gram matrix is numerically rank deficient.
pub fn lstsq(a: &CMat, b: &CMat) -> CMat {
    let ah = conj_t(a);
    let gram = ah.dot(a);
    let rhs = ah.dot(b);
    let mut ridge = 0.0f64;
    loop {
        let mut g = gram.clone();
        if ridge > 0.0 {
            for i in 0..g.nrows() {
                g[(i, i)] += Complex64::new(ridge, 0.0);
            }
        }
        if let Some(x) = herm_solve(&g, &rhs) {
            return x;
        }
        let scale = gram.diag().iter().map(|z| z.re).fold(1e-30, f64::max);
        ridge = if ridge == 0.0 { scale * 1e-12 } else { ridge * 100.0 };
    }
}

/// Interleaves a complex vector as `[re0, im0, re1, im1, ...]`.
pub fn interleave(v: &CVec) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * v.len());
    for z in v.iter() {
        out.push(z.re);
        out.push(z.im);
    }
    out
}

/// Inverse of [`interleave`].
pub fn deinterleave(v: &[f64]) -> CVec {
    assert_eq!(v.len() % 2, 0);
    Array1::from_iter(v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])))
}

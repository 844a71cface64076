//! Dense matrix helpers on top of faer.
//!
//! Matrix functions of Hermitian arguments all go through one
//! eigendecomposition path; logarithms and square roots clip eigenvalues
//! at [`CLIP_FLOOR`].

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

pub use faer::c64;

/// Eigenvalue floor applied before logarithms and square roots.
pub const CLIP_FLOOR: f64 = 1e-14;

pub type CMat = Mat<c64>;

#[inline]
pub fn cr(re: f64) -> c64 {
    c64::new(re, 0.0)
}

/// Runs dense kernels single-threaded so results do not depend on the
/// rayon pool size. Parallelism then comes from independent trajectories.
pub fn sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

pub fn identity(dim: usize) -> CMat {
    Mat::from_fn(dim, dim, |i, j| if i == j { cr(1.0) } else { cr(0.0) })
}

pub fn to_complex(m: MatRef<'_, f64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| cr(m[(i, j)]))
}

pub fn dagger(m: MatRef<'_, c64>) -> CMat {
    m.adjoint().to_owned()
}

pub fn trace(m: MatRef<'_, c64>) -> c64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn frobenius(m: MatRef<'_, c64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(a.ncols(), b.ncols());
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

/// Largest deviation from Hermiticity, `max |m_ij - conj(m_ji)|`.
pub fn hermiticity_defect(m: MatRef<'_, c64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m^dag) / 2`.
pub fn hermitize(m: MatRef<'_, c64>) -> CMat {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Kronecker product with `a` as the most significant factor.
pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn scale(m: MatRef<'_, c64>, s: c64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn commutator(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    a * b - b * a
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    let h = hermitize(m);
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen)?;
    let s = evd.S().column_vector();
    let values = (0..h.nrows()).map(|i| s[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    let h = hermitize(m);
    h.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::Eigen)
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
pub fn symmetric_eigen(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen)?;
    let s = evd.S().column_vector();
    let values = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

/// `V diag(f(lambda)) V^dag` for Hermitian `m`.
pub fn hermitian_function(m: MatRef<'_, c64>, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (values, vecs) = hermitian_eigen(m)?;
    Ok(reassemble(&values.iter().map(|&x| f(x)).collect::<Vec<_>>(), vecs.as_ref()))
}

/// `V diag(d) V^dag`.
pub fn reassemble(diag: &[f64], vecs: MatRef<'_, c64>) -> CMat {
    let n = vecs.nrows();
    let scaled = Mat::from_fn(n, diag.len(), |i, k| vecs[(i, k)] * diag[k]);
    &scaled * vecs.adjoint()
}

/// Matrix square root of a PSD Hermitian matrix (negative eigenvalues clipped to zero).
pub fn psd_sqrt(m: MatRef<'_, c64>) -> Result<CMat> {
    hermitian_function(m, |x| if x > CLIP_FLOOR { x.sqrt() } else { 0.0 })
}

/// `sum_i x_i ln x_i` convention helper: returns `x ln x` with `0 ln 0 = 0` under clipping.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x > CLIP_FLOOR {
        x * x.ln()
    } else {
        0.0
    }
}

/// Complex matrix times real matrix, `a * b`.
pub fn cmul_real(a: MatRef<'_, c64>, b: MatRef<'_, f64>) -> CMat {
    let (re, im) = split(a);
    let r = &re * b;
    let i = &im * b;
    Mat::from_fn(r.nrows(), r.ncols(), |p, q| c64::new(r[(p, q)], i[(p, q)]))
}

/// Real matrix times complex matrix, `a * b`.
pub fn real_cmul(a: MatRef<'_, f64>, b: MatRef<'_, c64>) -> CMat {
    let (re, im) = split(b);
    let r = a * &re;
    let i = a * &im;
    Mat::from_fn(r.nrows(), r.ncols(), |p, q| c64::new(r[(p, q)], i[(p, q)]))
}

fn split(a: MatRef<'_, c64>) -> (Mat<f64>, Mat<f64>) {
    (
        Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].re),
        Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].im),
    )
}

pub fn pauli_x() -> CMat {
    Mat::from_fn(2, 2, |i, j| if i != j { cr(1.0) } else { cr(0.0) })
}

/// sigma^z on one site. Local index 1 is spin up (set bit), so this is `diag(-1, +1)`.
pub fn pauli_z() -> CMat {
    Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => cr(-1.0),
        (1, 1) => cr(1.0),
        _ => cr(0.0),
    })
}

/// `+1` for a set bit (spin up), `-1` otherwise.
#[inline]
pub fn z_eigen(bit: bool) -> f64 {
    if bit {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = Mat::from_fn(3, 3, |i, j| {
            let base = if i == j { 2.0 } else { 0.3 };
            c64::new(base, if i < j { 0.1 } else if i > j { -0.1 } else { 0.0 })
        });
        let s = psd_sqrt(m.as_ref()).unwrap();
        let back = &s * &s;
        assert!(max_abs_diff(back.as_ref(), m.as_ref()) < 1e-12);
    }

    #[test]
    fn kron_dims_and_values() {
        let k = kron(pauli_z().as_ref(), pauli_x().as_ref());
        assert_eq!(k.nrows(), 4);
        assert_eq!(k[(0, 1)], cr(-1.0));
        assert_eq!(k[(3, 2)], cr(1.0));
    }

    #[test]
    fn mixed_products_match() {
        let a = Mat::from_fn(3, 3, |i, j| c64::new(i as f64, j as f64 - 1.0));
        let b = Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        let expect = &a * to_complex(b.as_ref());
        assert!(max_abs_diff(cmul_real(a.as_ref(), b.as_ref()).as_ref(), expect.as_ref()) < 1e-12);
        let expect = to_complex(b.as_ref()) * &a;
        assert!(max_abs_diff(real_cmul(b.as_ref(), a.as_ref()).as_ref(), expect.as_ref()) < 1e-12);
    }
}

//! Small dense complex matrix helpers shared across the crate.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub const IM: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)])
}

pub fn sigma_y() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(0.0), -IM, IM, cr(0.0)])
}

pub fn sigma_z() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)])
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Hilbert-Schmidt inner product Tr(a† b).
pub fn frob_inner(a: &CMat, b: &CMat) -> Complex64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Max element magnitude of H - H†.
pub fn hermiticity_error(h: &CMat) -> f64 {
    max_abs_diff(h, &h.adjoint())
}

/// Max element magnitude of U†U - I.
pub fn unitarity_error(u: &CMat) -> f64 {
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &identity(n))
}

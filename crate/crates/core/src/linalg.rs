//! Small dense helpers shared by the packet, averaging and integrator code.

use nalgebra::{ComplexField, DMatrix, DVector, Vector3};
use num_complex::Complex64;

use crate::error::{GwpError, Result};

pub type RVec = DVector<f64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Ratio of extreme LU pivots above which Q is treated as singular.
const MAX_PIVOT_RATIO: f64 = 1e14;

pub fn to_complex_vec(v: &RVec) -> CVec {
    v.map(|x| Complex64::new(x, 0.0))
}

pub fn to_complex_mat(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn re_mat(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn im_mat(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

pub fn re_vec(v: &CVec) -> RVec {
    v.map(|z| z.re)
}

pub fn im_vec(v: &CVec) -> RVec {
    v.map(|z| z.im)
}

pub fn symmetrize(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

/// ln|det M| accumulated from LU pivots so that tiny packets do not underflow.
pub fn log_abs_det(m: &CMat) -> Result<f64> {
    // Complex division inside the LU squares the pivots, so scale to unit size first.
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(GwpError::SingularWidth { cond: f64::INFINITY });
    }
    let lu = m.map(|z| z / scale).lu();
    let u = lu.u();
    let mut acc = m.nrows() as f64 * scale.ln();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..u.nrows() {
        let a = u[(i, i)].norm();
        lo = lo.min(a);
        hi = hi.max(a);
        acc += a.ln();
    }
    if !(lo > 0.0) || !acc.is_finite() || hi / lo > MAX_PIVOT_RATIO {
        return Err(GwpError::SingularWidth { cond: if lo > 0.0 { hi / lo } else { f64::INFINITY } });
    }
    Ok(acc)
}

pub fn try_inverse(m: &CMat) -> Result<CMat> {
    log_abs_det(m)?;
    m.clone().try_inverse().ok_or(GwpError::SingularWidth { cond: f64::INFINITY })
}

pub fn try_inverse_real(m: &RMat) -> Result<RMat> {
    m.clone().try_inverse().ok_or(GwpError::SingularWidth { cond: f64::INFINITY })
}

/// Real part of Q Q*, symmetrized. Equals C_I^{-1} for a symplectic pair.
pub fn width_covariance(q_mat: &CMat) -> RMat {
    symmetrize(&re_mat(&(q_mat * q_mat.adjoint())))
}

/// v × B for d = 3; for d = 2 the vector is embedded in the plane and B = (0, 0, b).
pub fn cross_field<T>(v: &DVector<T>, b: &Vector3<f64>) -> DVector<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let f = |x: f64| T::from_real(x);
    match v.len() {
        2 => DVector::from_vec(vec![v[1] * f(b[2]), -(v[0] * f(b[2]))]),
        3 => DVector::from_vec(vec![
            v[1] * f(b[2]) - v[2] * f(b[1]),
            v[2] * f(b[0]) - v[0] * f(b[2]),
            v[0] * f(b[1]) - v[1] * f(b[0]),
        ]),
        d => panic!("cross_field supports d = 2 or 3, got {d}"),
    }
}

/// Column-wise v × B.
pub fn cross_field_cols<T>(m: &DMatrix<T>, b: &Vector3<f64>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let c = cross_field(&m.column(j).into_owned(), b);
        out.set_column(j, &c);
    }
    out
}

/// Frobenius norm divided by the number of entries.
pub fn per_entry_frobenius(norm_sq: f64, entries: usize) -> f64 {
    norm_sq.sqrt() / entries as f64
}

pub fn identity_c(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn i_unit() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_det_matches_direct_determinant() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[Complex64::new(1.0, 0.5), Complex64::new(0.2, -0.1), Complex64::new(-0.3, 0.0), Complex64::new(0.8, 0.4)],
        );
        let direct = m.determinant().norm().ln();
        assert!((log_abs_det(&m).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn log_det_survives_tiny_scales() {
        let m = CMat::identity(3, 3) * Complex64::new(1e-200, 0.0);
        let ld = log_abs_det(&m).unwrap();
        assert!((ld - 3.0 * (1e-200f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn singular_width_is_reported() {
        let m = CMat::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(log_abs_det(&m), Err(GwpError::SingularWidth { .. })));
    }

    #[test]
    fn planar_cross_matches_embedded_cross() {
        let v = RVec::from_vec(vec![0.3, -1.2]);
        let b = Vector3::new(0.0, 0.0, 2.5);
        let c = cross_field(&v, &b);
        let full = Vector3::new(0.3, -1.2, 0.0).cross(&b);
        assert!((c[0] - full[0]).abs() < 1e-15 && (c[1] - full[1]).abs() < 1e-15);
    }
}

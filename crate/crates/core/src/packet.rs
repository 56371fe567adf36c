//! Gaussian wave packet state in Hagedorn and magnetic variables.
//!
//! The packet is
//! `u(x) = exp((i/eps) (0.5 (x-q)^T C (x-q) + (x-q)^T p + zeta))` with `C = P Q^{-1}`.
//! Integrators carry the magnetic variables `v = p - <A>` and `Upsilon = P - <J_A> Q`;
//! the canonical pair `(p, P)` is recovered from the current field averages.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{GwpError, Result};
use crate::linalg::{self, CMat, RMat, RVec};

/// Packet in magnetic variables. `t` is carried so time-dependent fields can be averaged.
#[derive(Clone, Debug, PartialEq)]
pub struct WavePacketState {
    pub t: f64,
    pub eps: f64,
    pub q: RVec,
    pub v: RVec,
    pub q_mat: CMat,
    pub upsilon: CMat,
    pub zeta_r: f64,
    pub zeta_i: f64,
}

/// Packet in canonical Hagedorn variables.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalState {
    pub t: f64,
    pub eps: f64,
    pub q: RVec,
    pub p: RVec,
    pub q_mat: CMat,
    pub p_mat: CMat,
    pub zeta: Complex64,
}

fn check_shapes(d: usize, vecs: &[&RVec], mats: &[&CMat]) -> Result<()> {
    if !(d == 2 || d == 3) {
        return Err(GwpError::Config(format!("dimension must be 2 or 3, got {d}")));
    }
    for v in vecs {
        if v.len() != d {
            return Err(GwpError::Dimension { expected: d, got: v.len() });
        }
    }
    for m in mats {
        if m.nrows() != d || m.ncols() != d {
            return Err(GwpError::Dimension { expected: d, got: m.nrows().max(m.ncols()) });
        }
    }
    Ok(())
}

impl WavePacketState {
    pub fn new(
        t: f64,
        eps: f64,
        q: RVec,
        v: RVec,
        q_mat: CMat,
        upsilon: CMat,
        zeta_r: f64,
        zeta_i: f64,
    ) -> Result<Self> {
        check_shapes(q.len(), &[&v], &[&q_mat, &upsilon])?;
        if !(eps > 0.0) {
            return Err(GwpError::Config(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { t, eps, q, v, q_mat, upsilon, zeta_r, zeta_i })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.v.iter()).all(|x| x.is_finite())
            && self.q_mat.iter().chain(self.upsilon.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
            && self.zeta_r.is_finite()
            && self.zeta_i.is_finite()
    }

    pub fn log_abs_det_q(&self) -> Result<f64> {
        linalg::log_abs_det(&self.q_mat)
    }

    /// Canonical variables given the averages `<A>` and `<J_A>` at this state.
    pub fn to_canonical(&self, mean_a: &RVec, mean_jac: &RMat) -> CanonicalState {
        let jac = linalg::to_complex_mat(mean_jac);
        CanonicalState {
            t: self.t,
            eps: self.eps,
            q: self.q.clone(),
            p: &self.v + mean_a,
            q_mat: self.q_mat.clone(),
            p_mat: &self.upsilon + jac * &self.q_mat,
            zeta: Complex64::new(self.zeta_r, self.zeta_i),
        }
    }

    pub fn l2_norm_squared(&self) -> Result<f64> {
        l2_norm_squared(self.zeta_i, &self.q_mat, self.eps)
    }
}

impl CanonicalState {
    pub fn new(t: f64, eps: f64, q: RVec, p: RVec, q_mat: CMat, p_mat: CMat, zeta: Complex64) -> Result<Self> {
        check_shapes(q.len(), &[&p], &[&q_mat, &p_mat])?;
        if !(eps > 0.0) {
            return Err(GwpError::Config(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { t, eps, q, p, q_mat, p_mat, zeta })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn to_magnetic(&self, mean_a: &RVec, mean_jac: &RMat) -> WavePacketState {
        let jac = linalg::to_complex_mat(mean_jac);
        WavePacketState {
            t: self.t,
            eps: self.eps,
            q: self.q.clone(),
            v: &self.p - mean_a,
            q_mat: self.q_mat.clone(),
            upsilon: &self.p_mat - jac * &self.q_mat,
            zeta_r: self.zeta.re,
            zeta_i: self.zeta.im,
        }
    }

    pub fn width(&self) -> Result<CMat> {
        width_from_hagedorn(&self.q_mat, &self.p_mat)
    }

    pub fn l2_norm_squared(&self) -> Result<f64> {
        l2_norm_squared(self.zeta.im, &self.q_mat, self.eps)
    }

    pub fn evaluate(&self, x: &RVec) -> Result<Complex64> {
        let c = self.width()?;
        Ok(evaluate_packet(x, &self.q, &self.p, &c, self.zeta, self.eps))
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
            && self.q_mat.iter().chain(self.p_mat.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
            && self.zeta.re.is_finite()
            && self.zeta.im.is_finite()
    }
}

/// `C = P Q^{-1}`, symmetrized against round-off.
pub fn width_from_hagedorn(q_mat: &CMat, p_mat: &CMat) -> Result<CMat> {
    let qi = linalg::try_inverse(q_mat)?;
    let c = p_mat * qi;
    Ok((&c + c.transpose()) * Complex64::new(0.5, 0.0))
}

/// Frobenius norms of `Q^T P - P^T Q` and `Q^* P - P^* Q - 2i Id`.
pub fn symplecticity_residual(q_mat: &CMat, p_mat: &CMat) -> (f64, f64) {
    let d = q_mat.nrows();
    let r1 = q_mat.transpose() * p_mat - p_mat.transpose() * q_mat;
    let r2 = q_mat.adjoint() * p_mat - p_mat.adjoint() * q_mat - CMat::identity(d, d) * Complex64::new(0.0, 2.0);
    (r1.norm(), r2.norm())
}

/// `ln ||u||^2 = -2 zeta_I / eps + (d/2) ln(eps pi) + ln|det Q|`.
pub fn log_l2_norm_squared(zeta_i: f64, q_mat: &CMat, eps: f64) -> Result<f64> {
    let d = q_mat.nrows() as f64;
    Ok(-2.0 * zeta_i / eps + 0.5 * d * (eps * std::f64::consts::PI).ln() + linalg::log_abs_det(q_mat)?)
}

pub fn l2_norm_squared(zeta_i: f64, q_mat: &CMat, eps: f64) -> Result<f64> {
    Ok(log_l2_norm_squared(zeta_i, q_mat, eps)?.exp())
}

/// The value of `zeta_I` that makes the packet unit-normalized.
pub fn normalizing_zeta_i(q_mat: &CMat, eps: f64) -> Result<f64> {
    let d = q_mat.nrows() as f64;
    Ok(0.5 * eps * (0.5 * d * (eps * std::f64::consts::PI).ln() + linalg::log_abs_det(q_mat)?))
}

pub fn evaluate_packet(x: &RVec, q: &RVec, p: &RVec, c: &CMat, zeta: Complex64, eps: f64) -> Complex64 {
    let dx: DVector<Complex64> = linalg::to_complex_vec(&(x - q));
    let quad = (dx.transpose() * c * &dx)[(0, 0)];
    let lin: f64 = (x - q).dot(p);
    let arg = (quad * 0.5 + lin + zeta) * Complex64::new(0.0, 1.0 / eps);
    arg.exp()
}

/// Symplectic pair `(Q, (C_R + i (Q Q^*)^{-1}) Q)` for real symmetric `C_R`.
///
/// `Q Q^*` must be real, i.e. `Q = L U` with `L` real invertible and `U` unitary; an
/// imaginary part of `Q Q^*` is rejected.
pub fn symplectic_partner(q_mat: &CMat, c_r: &RMat) -> Result<CMat> {
    let qq = q_mat * q_mat.adjoint();
    let im = linalg::im_mat(&qq).norm();
    if im > 1e-12 * qq.norm() {
        return Err(GwpError::ImaginaryResidual { quantity: "Q Q^*", residual: im / qq.norm(), tol: 1e-12 });
    }
    let ci = linalg::try_inverse(&qq)?;
    let c = linalg::to_complex_mat(&linalg::symmetrize(c_r)) + ci * Complex64::new(0.0, 1.0);
    Ok(c * q_mat)
}

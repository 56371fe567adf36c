//! Energy, norm, parameter errors and the L2 distance between two packets.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::averages::GaussHermite;
use crate::eom::Dynamics;
use crate::error::{GwpError, Result};
use crate::linalg::{self, CMat, RMat, RVec};
use crate::packet::{self, CanonicalState, WavePacketState};

pub const DEFAULT_L2_ORDER: usize = 16;

/// Per-step diagnostics of one packet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub energy_err_abs: f64,
    pub energy_err_rel: f64,
    pub sympl_r1: f64,
    pub sympl_r2: f64,
    pub det_q_abs: f64,
}

impl Diagnostics {
    /// Diagnostics of a canonical state; `e0` is the reference energy (usually at `t = 0`).
    pub fn of_canonical(dy: &Dynamics, s: &CanonicalState, e0: f64) -> Result<Self> {
        let energy = dy.energy_canonical(s)?;
        let (r1, r2) = packet::symplecticity_residual(&s.q_mat, &s.p_mat);
        let err = (energy - e0).abs();
        Ok(Self {
            t: s.t,
            norm: s.l2_norm_squared()?.sqrt(),
            energy,
            energy_err_abs: err,
            energy_err_rel: if e0 != 0.0 { err / e0.abs() } else { err },
            sympl_r1: r1,
            sympl_r2: r2,
            det_q_abs: linalg::log_abs_det(&s.q_mat)?.exp(),
        })
    }

    pub fn of_state(dy: &Dynamics, s: &WavePacketState, e0: f64) -> Result<Self> {
        Self::of_canonical(dy, &dy.to_canonical(s)?, e0)
    }
}

/// Scaled Frobenius errors `||a - b||_F / #entries` per parameter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterErrors {
    pub q: f64,
    pub p: f64,
    pub q_mat: f64,
    pub p_mat: f64,
    pub zeta_r: f64,
    pub zeta_i: f64,
}

impl ParameterErrors {
    pub const NAMES: [&'static str; 6] = ["q", "p", "Q", "P", "zeta_R", "zeta_I"];

    pub fn as_array(&self) -> [f64; 6] {
        [self.q, self.p, self.q_mat, self.p_mat, self.zeta_r, self.zeta_i]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { q: a[0], p: a[1], q_mat: a[2], p_mat: a[3], zeta_r: a[4], zeta_i: a[5] }
    }

    /// Componentwise maximum.
    pub fn max(&self, other: &Self) -> Self {
        let (a, b) = (self.as_array(), other.as_array());
        Self::from_array(std::array::from_fn(|i| a[i].max(b[i])))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.as_array()[i])
    }
}

fn vec_err(a: &RVec, b: &RVec) -> f64 {
    (a - b).norm() / a.len() as f64
}

fn mat_err(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / (a.nrows() * a.ncols()) as f64
}

/// Errors between two canonical states.
pub fn parameter_errors(a: &CanonicalState, b: &CanonicalState) -> ParameterErrors {
    ParameterErrors {
        q: vec_err(&a.q, &b.q),
        p: vec_err(&a.p, &b.p),
        q_mat: mat_err(&a.q_mat, &b.q_mat),
        p_mat: mat_err(&a.p_mat, &b.p_mat),
        zeta_r: (a.zeta.re - b.zeta.re).abs(),
        zeta_i: (a.zeta.im - b.zeta.im).abs(),
    }
}

/// Errors between two states in magnetic variables; `p`, `P` slots hold the `v`, `Upsilon` errors.
pub fn parameter_errors_magnetic(a: &WavePacketState, b: &WavePacketState) -> ParameterErrors {
    ParameterErrors {
        q: vec_err(&a.q, &b.q),
        p: vec_err(&a.v, &b.v),
        q_mat: mat_err(&a.q_mat, &b.q_mat),
        p_mat: mat_err(&a.upsilon, &b.upsilon),
        zeta_r: (a.zeta_r - b.zeta_r).abs(),
        zeta_i: (a.zeta_i - b.zeta_i).abs(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Distance {
    pub value: f64,
    /// The packets are too far apart for a shared grid; `value` is `sqrt(|a|^2 + |b|^2)`.
    pub saturated: bool,
}

fn check_pair(a: &CanonicalState, b: &CanonicalState) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(GwpError::Dimension { expected: a.dim(), got: b.dim() });
    }
    if a.eps != b.eps {
        return Err(GwpError::Config(format!("packets have different eps: {} and {}", a.eps, b.eps)));
    }
    Ok(())
}

/// `||u_a - u_b||_{L^2}` by Gauss-Hermite quadrature against the Gaussian with the mean
/// center and mean precision of the two packets.
pub fn l2_distance(a: &CanonicalState, b: &CanonicalState, order: usize) -> Result<L2Distance> {
    check_pair(a, b)?;
    let d = a.dim();
    let eps = a.eps;
    let ca = a.width()?;
    let cb = b.width()?;
    let prec = linalg::symmetrize(&((linalg::im_mat(&ca) + linalg::im_mat(&cb)) * 0.5));
    let cov = linalg::try_inverse_real(&prec)?;
    let m = linalg::symmetrize(&cov).cholesky().ok_or(GwpError::SingularWidth { cond: f64::INFINITY })?.l();
    let center = (&a.q + &b.q) * 0.5;

    let rule = GaussHermite::new(order);
    let reach = rule.nodes.iter().fold(0.0f64, |x, y| x.max(y.abs()));
    let m_inv = linalg::try_inverse_real(&m)?;
    let offset = (&m_inv * (&a.q - &center)).norm() / eps.sqrt();
    if offset > 0.5 * reach {
        let na = a.l2_norm_squared()?;
        let nb = b.l2_norm_squared()?;
        return Ok(L2Distance { value: (na + nb).sqrt(), saturated: true });
    }

    let jac = eps.powf(0.5 * d as f64) * m.determinant().abs();
    let n = rule.order();
    let mut idx = vec![0usize; d];
    let mut acc = 0.0;
    for _ in 0..n.pow(d as u32) {
        let y = RVec::from_iterator(d, idx.iter().map(|&i| rule.nodes[i]));
        let w: f64 = idx.iter().map(|&i| rule.weights[i]).product();
        let x = &center + &m * &y * eps.sqrt();
        let ua = packet::evaluate_packet(&x, &a.q, &a.p, &ca, a.zeta, eps);
        let ub = packet::evaluate_packet(&x, &b.q, &b.p, &cb, b.zeta, eps);
        acc += w * (ua - ub).norm_sqr() * y.norm_squared().exp();
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    let value = (acc * jac).max(0.0).sqrt();
    if !value.is_finite() {
        return Err(GwpError::Evaluation { t: a.t, node: center.iter().copied().collect() });
    }
    Ok(L2Distance { value, saturated: false })
}

/// Closed-form inner product `<u_a, u_b> = int conj(u_a) u_b dx`.
///
/// Both packets are written as `exp((i/eps)(x^T C x / 2 + beta^T x + gamma))`; the product is a
/// complex Gaussian `exp(-x^T A x / 2 + j^T x + c)` with `Re A` positive definite.
pub fn overlap(a: &CanonicalState, b: &CanonicalState) -> Result<Complex64> {
    check_pair(a, b)?;
    let d = a.dim();
    let ie = Complex64::new(0.0, 1.0 / a.eps);
    let parts = |s: &CanonicalState| -> Result<(CMat, DVector<Complex64>, Complex64)> {
        let c = s.width()?;
        let q = linalg::to_complex_vec(&s.q);
        let beta = linalg::to_complex_vec(&s.p) - &c * &q;
        let gamma = (q.transpose() * &c * &q)[(0, 0)] * 0.5 - q.dot(&linalg::to_complex_vec(&s.p)) + s.zeta;
        Ok((c, beta, gamma))
    };
    let (ca, ba, ga) = parts(a)?;
    let (cb, bb, gb) = parts(b)?;
    let big_a = -(&cb - ca.conjugate()) * ie;
    let j = (&bb - ba.conjugate()) * ie;
    let c = (gb - ga.conj()) * ie;
    let a_inv = linalg::try_inverse(&big_a)?;
    let det = big_a.determinant();
    let quad = (j.transpose() * a_inv * &j)[(0, 0)];
    let pref = Complex64::new((2.0 * std::f64::consts::PI).powf(0.5 * d as f64), 0.0) / det.sqrt();
    Ok(pref * (quad * 0.5 + c).exp())
}

/// `sqrt(|a|^2 + |b|^2 - 2 Re <a, b>)` from the closed-form overlap.
pub fn l2_distance_exact(a: &CanonicalState, b: &CanonicalState) -> Result<f64> {
    let ov = overlap(a, b)?;
    let v = a.l2_norm_squared()? + b.l2_norm_squared()? - 2.0 * ov.re;
    Ok(v.max(0.0).sqrt())
}

/// Energy per unit mass.
pub fn energy(dy: &Dynamics, s: &WavePacketState) -> Result<f64> {
    dy.energy(s)
}

/// Energy with the linear-`A` expansion `<|A|^2> = |A(q)|^2 + (eps/2) tr(J^T J C_I^{-1})` and
/// point values of every field. Exact for linear `A` and quadratic `phi`.
pub fn energy_linear(dy: &Dynamics, s: &CanonicalState) -> Result<f64> {
    let fd = dy.model.derivatives(s.t, &s.q);
    let qq = linalg::width_covariance(&s.q_mat);
    let c = s.width()?;
    let cr = linalg::symmetrize(&linalg::re_mat(&c));
    let ci = linalg::symmetrize(&linalg::im_mat(&c));
    let eps = s.eps;
    let a_sq = fd.a.norm_squared() + 0.5 * eps * (fd.jac.transpose() * &fd.jac * &qq).trace();
    let phi = fd.phi + 0.25 * eps * (&fd.hess_phi * &qq).trace();
    let r: RMat = &cr * &cr + &ci * &ci - fd.jac.transpose() * &cr * 2.0;
    Ok(0.5 * s.p.norm_squared() - s.p.dot(&fd.a) + 0.5 * a_sq + phi + 0.25 * eps * (r * qq).trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averages::{AverageEngine, AverageMode};
    use crate::fields::{PenningField3D, TrigField2D};
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn packet(eps: f64, q: [f64; 2], p: [f64; 2], zeta_r: f64, seed: f64) -> CanonicalState {
        let l = CMat::from_row_slice(2, 2, &[c(1.0 + 0.1 * seed, 0.0), c(0.2, 0.0), c(-0.1, 0.0), c(0.8, 0.0)]);
        let u = CMat::from_row_slice(
            2,
            2,
            &[c(seed.cos(), 0.0), c(-seed.sin(), 0.0), c(seed.sin(), 0.0), c(seed.cos(), 0.0)],
        ) * Complex64::from_polar(1.0, 0.3 * seed);
        let q_mat = l * u;
        let cr = RMat::from_row_slice(2, 2, &[0.2 * seed, 0.1, 0.1, -0.3]);
        let p_mat = packet::symplectic_partner(&q_mat, &cr).unwrap();
        let zi = packet::normalizing_zeta_i(&q_mat, eps).unwrap();
        CanonicalState::new(
            0.0,
            eps,
            RVec::from_vec(q.to_vec()),
            RVec::from_vec(p.to_vec()),
            q_mat,
            p_mat,
            c(zeta_r, zi),
        )
        .unwrap()
    }

    #[test]
    fn identical_states_have_zero_errors() {
        let a = packet(1e-2, [0.1, 0.2], [1.0, 0.0], 0.3, 0.4);
        assert_eq!(parameter_errors(&a, &a), ParameterErrors::default());
        assert!(l2_distance(&a, &a, 12).unwrap().value < 1e-12);
    }

    #[test]
    fn scaled_frobenius_arithmetic() {
        let a = packet(1e-2, [0.0, 0.0], [1.0, 0.0], 0.0, 0.1);
        let mut b = a.clone();
        b.q = RVec::from_vec(vec![1.5, 2.0]);
        assert!((parameter_errors(&a, &b).q - 1.25).abs() < 1e-15);
    }

    #[test]
    fn quadrature_matches_closed_form_overlap() {
        for (k, eps) in [1e-2, 1e-3].into_iter().enumerate() {
            let a = packet(eps, [0.1, 0.2], [1.0, 0.0], 0.3, 0.4 + k as f64);
            let b = packet(
                eps,
                [0.1 + 0.3 * eps.sqrt(), 0.2],
                [1.0 + 0.2 * eps, 0.05 * eps],
                0.3 + 0.1 * eps,
                0.45 + k as f64,
            );
            let quad = l2_distance(&a, &b, 24).unwrap();
            let exact = l2_distance_exact(&a, &b).unwrap();
            assert!(!quad.saturated);
            assert!((quad.value - exact).abs() < 1e-9, "{} vs {exact}", quad.value);
        }
    }

    #[test]
    fn overlap_of_a_packet_with_itself_is_its_norm() {
        let a = packet(1e-3, [0.5, -0.2], [0.3, 1.0], 0.7, 1.1);
        let ov = overlap(&a, &a).unwrap();
        assert!((ov.re - 1.0).abs() < 1e-10 && ov.im.abs() < 1e-10, "{ov}");
    }

    #[test]
    fn phase_offset_distance() {
        let eps = 1e-3;
        let a = packet(eps, [0.0, 0.0], [1.0, 0.0], 0.0, 0.2);
        for dz in [1e-4, 1e-3, 2.5e-3] {
            let mut b = a.clone();
            b.zeta.re += dz;
            let expect = 2.0 * (dz / (2.0 * eps)).sin().abs();
            assert!((l2_distance(&a, &b, 16).unwrap().value - expect).abs() < 1e-10);
            assert!((l2_distance_exact(&a, &b).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn separated_packets_saturate_at_sqrt_two() {
        let eps = 1e-3;
        let a = packet(eps, [0.0, 0.0], [1.0, 0.0], 0.0, 0.2);
        let b = packet(eps, [3.0, 0.0], [1.0, 0.0], 0.0, 0.2);
        let r = l2_distance(&a, &b, 16).unwrap();
        assert!(r.saturated);
        assert!((r.value - 2f64.sqrt()).abs() < 1e-12);
        assert!((l2_distance_exact(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn free_packet_zero_point_energy() {
        struct Free;
        impl crate::fields::FieldModel for Free {
            fn name(&self) -> &str {
                "free"
            }
            fn dim(&self) -> usize {
                3
            }
            fn capabilities(&self) -> crate::fields::Capabilities {
                crate::fields::Capabilities {
                    is_linear_a: true,
                    is_quadratic_phi: true,
                    has_analytic_averages: false,
                    time_dependent: false,
                }
            }
            fn derivatives(&self, _t: f64, _x: &RVec) -> crate::fields::FieldDerivatives {
                crate::fields::FieldDerivatives::zeros(3)
            }
        }
        let dy = Dynamics::new(Arc::new(Free), AverageEngine::default());
        let eps = 0.02;
        let q_mat = linalg::identity_c(3);
        let s = CanonicalState::new(
            0.0,
            eps,
            RVec::zeros(3),
            RVec::from_vec(vec![1.0, -2.0, 0.5]),
            q_mat.clone(),
            q_mat * c(0.0, 1.0),
            c(0.0, packet::normalizing_zeta_i(&linalg::identity_c(3), eps).unwrap()),
        )
        .unwrap();
        // |u|^2 = exp(-|x|^2 / eps) has variance eps/2 per axis, so <|x|^2>/2 = d eps / 4.
        let expect = 0.5 * 5.25 + eps * 3.0 / 4.0;
        assert!((dy.energy_canonical(&s).unwrap() - expect).abs() < 1e-14);
        assert!((energy_linear(&dy, &s).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn linear_energy_matches_general_path_on_penning() {
        let dy = Dynamics::new(Arc::new(PenningField3D::published()), AverageEngine::default());
        let q_mat = CMat::from_diagonal(&DVector::from_vec(vec![c(0.133, 0.0), c(0.133, 0.01), c(0.258, 0.0)]));
        let cr = RMat::from_diagonal(&RVec::from_vec(vec![0.1, -0.2, 0.0]));
        let s = CanonicalState::new(
            0.0,
            1.19e-8,
            RVec::from_vec(vec![0.133, 0.133, 0.258]),
            RVec::from_vec(vec![0.133, 7.492, 3.879]),
            q_mat.clone(),
            packet::symplectic_partner(&q_mat, &cr).unwrap(),
            c(1.009, -1.84e-7),
        )
        .unwrap();
        let g = dy.energy_canonical(&s).unwrap();
        let l = energy_linear(&dy, &s).unwrap();
        assert!((g - l).abs() <= 1e-12 * g.abs(), "{g} vs {l}");
    }

    /// `<H>` by direct quadrature of `|(C(x - q) + p - A) u|^2 / 2 + phi |u|^2`.
    #[test]
    fn energy_matches_direct_quadrature() {
        let model = TrigField2D::new(1.0);
        let dy = Dynamics::new(Arc::new(model.clone()), AverageEngine::new(AverageMode::Analytic, 10));
        let eng = AverageEngine::quadrature(24);
        for k in 0..10 {
            let eps = if k % 2 == 0 { 1e-2 } else { 1e-3 };
            let s = packet(eps, [0.3 * k as f64, -0.1], [1.0, 0.2 * k as f64], 0.1, 0.37 * k as f64);
            let dn = crate::averages::GaussianDensity::of_canonical(&s).unwrap();
            let cw = s.width().unwrap();
            let direct = eng
                .mean_scalar(&dn, |x| {
                    use crate::fields::FieldModel;
                    let f = model.derivatives(s.t, x);
                    let xi = &cw * linalg::to_complex_vec(&(x - &s.q)) + linalg::to_complex_vec(&(&s.p - &f.a));
                    0.5 * xi.iter().map(|z| z.norm_sqr()).sum::<f64>() + f.phi
                })
                .unwrap()
                / dn.mass();
            let e = dy.energy_canonical(&s).unwrap();
            assert!((e - direct).abs() <= 1e-8 * direct.abs(), "{e} vs {direct}");
        }
    }
}

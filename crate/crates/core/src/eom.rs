//! Right-hand sides of the variational equations of motion.
//!
//! Transformed system, in magnetic variables:
//! `q' = v`, `v' = v x <B> + E`, `Q' = Upsilon`, `Upsilon' = Upsilon x <B> + S Q`,
//! with `E` and `S` assembled from averaged field derivatives (see [`Contractions`] for
//! the width products in the epsilon-terms). The canonical system in `(q, p, Q, P, zeta)`
//! serves as reference.

use std::sync::Arc;

use num_complex::Complex64;

use crate::averages::{AverageEngine, GaussianDensity, MeanFields};
use crate::error::{GwpError, Result};
use crate::fields::FieldModel;
use crate::linalg::{self, CMat, RMat, RVec};
use crate::packet::{self, CanonicalState, WavePacketState};

/// Relative tolerance on the imaginary residual of `Upsilon Q^* - i Id` before truncation.
pub const DEFAULT_IMAG_TOL: f64 = 1e-6;
/// Breakdown guard inside the time steppers. None of them preserves symplecticity exactly,
/// so stages, probes and accepted states drift off it by the local error.
pub const STAGE_IMAG_TOL: f64 = 1e-1;

#[derive(Clone, Debug, PartialEq)]
pub struct TransformedRhs {
    pub dq: RVec,
    pub dv: RVec,
    pub dq_mat: CMat,
    pub dupsilon: CMat,
    pub dzeta_r: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalRhs {
    pub dq: RVec,
    pub dp: RVec,
    pub dq_mat: CMat,
    pub dp_mat: CMat,
    pub dzeta: Complex64,
}

/// Real width products entering every epsilon-term.
///
/// For a symplectic pair `M Q^* - i Id` is real, with `M = Upsilon` (transformed) or
/// `M = P` (canonical), and so is `Q Q^*`. The imaginary parts are measured, then dropped:
/// `y = Re(M Q^*)`, `qq = Re(Q Q^*)`, and `yg = y + <J_A> qq` (transformed) or `yg = y`.
#[derive(Clone, Debug)]
pub struct Contractions {
    pub y: RMat,
    pub qq: RMat,
    pub yg: RMat,
    pub imag_residual: f64,
}

impl Contractions {
    fn build(m: &CMat, q_mat: &CMat, jac: Option<&RMat>) -> Self {
        let d = q_mat.nrows();
        let mq = m * q_mat.adjoint();
        let qq = q_mat * q_mat.adjoint();
        let im_res = (linalg::im_mat(&mq) - RMat::identity(d, d)).norm() + linalg::im_mat(&qq).norm();
        let scale = mq.norm().max(qq.norm()).max(1.0);
        let y = linalg::re_mat(&mq);
        let qq = linalg::symmetrize(&linalg::re_mat(&qq));
        let yg = match jac {
            Some(j) => &y + j * &qq,
            None => y.clone(),
        };
        Self { y, qq, yg, imag_residual: im_res / scale }
    }

    pub fn transformed(s: &WavePacketState, means: &MeanFields) -> Self {
        Self::build(&s.upsilon, &s.q_mat, Some(&means.jac))
    }

    pub fn canonical(s: &CanonicalState) -> Self {
        Self::build(&s.p_mat, &s.q_mat, None)
    }

    fn check(&self, means: &MeanFields, tol: f64, quantity: &'static str) -> Result<()> {
        if has_curvature(means) && self.imag_residual > tol {
            return Err(GwpError::ImaginaryResidual { quantity, residual: self.imag_residual, tol });
        }
        Ok(())
    }
}

/// True if any second or third derivative of `A` is non-zero, i.e. the epsilon-terms matter.
fn has_curvature(means: &MeanFields) -> bool {
    means.hess_a.iter().any(|h| h.amax() > 0.0) || means.third_a.iter().any(|t| t.max_abs() > 0.0)
}

/// `sum_{m,n} <d_k d_l d_n A_m> x_{mn}` as a matrix over `(k, l)`.
fn third_contract(means: &MeanFields, x: &RMat) -> RMat {
    let d = means.dim();
    RMat::from_fn(d, d, |k, l| {
        let mut s = 0.0;
        for m in 0..d {
            for n in 0..d {
                s += means.third_a[m].get(k, l, n) * x[(m, n)];
            }
        }
        s
    })
}

/// `<d^2_x h>` for momentum `p = v + <A>` and the epsilon-term matrix `yg`.
pub fn mean_hess_h_with(means: &MeanFields, p: &RVec, yg: &RMat, eps: f64) -> RMat {
    let mut h = &means.jac_t_jac + &means.hess_phi + &means.hess_a_a;
    for m in 0..means.dim() {
        h -= &means.hess_a[m] * p[m];
    }
    h - third_contract(means, yg) * (0.5 * eps)
}

pub fn mean_hess_h(s: &WavePacketState, means: &MeanFields, tol: f64) -> Result<RMat> {
    let c = Contractions::transformed(s, means);
    c.check(means, tol, "<d2 h>")?;
    Ok(mean_hess_h_with(means, &(&s.v + &means.a), &c.yg, s.eps))
}

pub fn field_e_with(means: &MeanFields, c: &Contractions, eps: f64) -> RVec {
    let d = means.dim();
    let mut e = -&means.grad_phi - &means.dt_a + means.jac.tr_mul(&means.a) - &means.jac_t_a;
    for k in 0..d {
        let mut t1 = 0.0;
        let mut t2 = 0.0;
        for i in 0..d {
            for j in 0..d {
                t1 += means.hess_a[i][(k, j)] * c.yg[(i, j)];
                t2 += means.hess_a[k][(i, j)] * c.y[(j, i)];
            }
        }
        e[k] += 0.5 * eps * (t1 - t2);
    }
    e
}

pub fn field_e(s: &WavePacketState, means: &MeanFields, tol: f64) -> Result<RVec> {
    let c = Contractions::transformed(s, means);
    c.check(means, tol, "E")?;
    Ok(field_e_with(means, &c, s.eps))
}

pub fn field_s_with(means: &MeanFields, v: &RVec, c: &Contractions, eps: f64) -> RMat {
    let d = means.dim();
    let mut s = -&means.hess_phi - &means.dt_jac + means.jac.tr_mul(&means.jac) - &means.jac_t_jac - &means.hess_a_a;
    for m in 0..d {
        s += &means.hess_a[m] * means.a[m];
    }
    let mut extra = RMat::zeros(d, d);
    for k in 0..d {
        for l in 0..d {
            let mut sv = 0.0;
            let mut s2 = 0.0;
            for m in 0..d {
                sv += (means.hess_a[m][(k, l)] - means.hess_a[k][(m, l)]) * v[m];
                for n in 0..d {
                    s2 += means.third_a[k].get(m, n, l) * c.y[(n, m)];
                }
            }
            extra[(k, l)] = sv - 0.5 * eps * s2;
        }
    }
    s + extra + third_contract(means, &c.yg) * (0.5 * eps)
}

pub fn field_s(s: &WavePacketState, means: &MeanFields, tol: f64) -> Result<RMat> {
    let c = Contractions::transformed(s, means);
    c.check(means, tol, "S")?;
    Ok(field_s_with(means, &s.v, &c, s.eps))
}

/// `E = -(dt A(q) + <grad phi>)` for linear `A`.
pub fn field_e_linear(means: &MeanFields) -> RVec {
    -(&means.dt_a + &means.grad_phi)
}

/// `S = -(dt J_A(q) + <grad^2 phi>)` for linear `A`.
pub fn field_s_linear(means: &MeanFields) -> RMat {
    -(&means.dt_jac + &means.hess_phi)
}

/// `zeta_R' = v^2/2 + <A>^T v - (<|A|^2> - |<A>|^2)/2 - <phi> + (eps/4) tr(<d^2 h> QQ^* - 2 (QQ^*)^{-1})`.
///
/// The variance of `A` over the packet is kept; it is what `Re zeta'` of the canonical
/// system gives after substituting `p = v + <A>`.
pub fn zeta_r_rhs_with(v: &RVec, means: &MeanFields, hess_h: &RMat, qq: &RMat, eps: f64) -> Result<f64> {
    let qq_inv = linalg::try_inverse_real(qq)?;
    let var_a = means.a_sq - means.a.norm_squared();
    Ok(0.5 * v.norm_squared() + means.a.dot(v) - 0.5 * var_a - means.phi
        + 0.25 * eps * ((hess_h * qq).trace() - 2.0 * qq_inv.trace()))
}

pub fn zeta_r_rhs(s: &WavePacketState, means: &MeanFields, tol: f64) -> Result<f64> {
    let c = Contractions::transformed(s, means);
    c.check(means, tol, "zeta_R'")?;
    let h = mean_hess_h_with(means, &(&s.v + &means.a), &c.yg, s.eps);
    zeta_r_rhs_with(&s.v, means, &h, &c.qq, s.eps)
}

/// Options for assembling the transformed system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhsOptions {
    pub imag_tol: f64,
    /// Use `E = -(dt A + <grad phi>)`, `S = -(dt J_A + <grad^2 phi>)` (valid for linear `A`).
    pub linear_shortcut: bool,
}

impl Default for RhsOptions {
    fn default() -> Self {
        Self { imag_tol: DEFAULT_IMAG_TOL, linear_shortcut: false }
    }
}

/// Fields `E`, `S`, `<B>` and the phase ingredients at one state.
#[derive(Clone, Debug)]
pub struct ForceTerms {
    pub e: RVec,
    pub s: RMat,
    pub b: nalgebra::Vector3<f64>,
    pub hess_h: RMat,
    pub qq: RMat,
}

pub fn force_terms(s: &WavePacketState, means: &MeanFields, opts: &RhsOptions) -> Result<ForceTerms> {
    let c = Contractions::transformed(s, means);
    let (e, sm) = if opts.linear_shortcut {
        (field_e_linear(means), field_s_linear(means))
    } else {
        c.check(means, opts.imag_tol, "E, S")?;
        (field_e_with(means, &c, s.eps), field_s_with(means, &s.v, &c, s.eps))
    };
    let hess_h = mean_hess_h_with(means, &(&s.v + &means.a), &c.yg, s.eps);
    Ok(ForceTerms { e, s: sm, b: means.curl, hess_h, qq: c.qq })
}

pub fn rhs_transformed(s: &WavePacketState, means: &MeanFields, opts: &RhsOptions) -> Result<TransformedRhs> {
    let f = force_terms(s, means, opts)?;
    let sq = linalg::to_complex_mat(&f.s) * &s.q_mat;
    Ok(TransformedRhs {
        dq: s.v.clone(),
        dv: linalg::cross_field(&s.v, &f.b) + &f.e,
        dq_mat: s.upsilon.clone(),
        dupsilon: linalg::cross_field_cols(&s.upsilon, &f.b) + sq,
        dzeta_r: zeta_r_rhs_with(&s.v, means, &f.hess_h, &f.qq, s.eps)?,
    })
}

/// Energy per unit mass from momentum `p`, width `C` and normalized averages.
pub fn energy_with(p: &RVec, c: &CMat, qq: &RMat, means: &MeanFields, eps: f64) -> f64 {
    let cr = linalg::symmetrize(&linalg::re_mat(c));
    let ci = linalg::symmetrize(&linalg::im_mat(c));
    let m = &cr * &cr + &ci * &ci - means.jac.transpose() * &cr * 2.0;
    0.5 * p.norm_squared() - p.dot(&means.a) + 0.5 * means.a_sq + means.phi + 0.25 * eps * (m * qq).trace()
}

pub fn rhs_canonical(s: &CanonicalState, means: &MeanFields, tol: f64) -> Result<CanonicalRhs> {
    let d = s.dim();
    let ctr = Contractions::canonical(s);
    ctr.check(means, tol, "canonical rhs")?;
    let eps = s.eps;

    let dq = &s.p - &means.a;
    let mut dp = means.jac.tr_mul(&s.p) - &means.jac_t_a - &means.grad_phi;
    for k in 0..d {
        let mut t = 0.0;
        for m in 0..d {
            for l in 0..d {
                t += means.hess_a[m][(k, l)] * ctr.y[(m, l)];
            }
        }
        dp[k] += 0.5 * eps * t;
    }
    let jac_c = linalg::to_complex_mat(&means.jac);
    let dq_mat = &s.p_mat - &jac_c * &s.q_mat;
    let hess_h = mean_hess_h_with(means, &s.p, &ctr.yg, eps);
    let dp_mat = jac_c.transpose() * &s.p_mat - linalg::to_complex_mat(&hess_h) * &s.q_mat;

    let c = s.width()?;
    let h = energy_with(&s.p, &c, &ctr.qq, means, eps);
    let jt = jac_c.transpose();
    let bc = linalg::to_complex_mat(&hess_h) - &jt * &c - &c * &jac_c + &c * &c;
    let tr = (bc * linalg::to_complex_mat(&ctr.qq)).trace();
    let dzeta = Complex64::new(-h + s.p.dot(&dq), 0.0) + tr * 0.25 * eps;
    Ok(CanonicalRhs { dq, dp, dq_mat, dp_mat, dzeta })
}

/// `d/dt <w> = <grad w>^T v + (eps/2) tr(<grad^2 w> (Upsilon Q^* - i Id))`.
pub fn ehrenfest_derivative(s: &WavePacketState, mean_grad_w: &RVec, mean_hess_w: &RMat) -> f64 {
    let y = linalg::re_mat(&(&s.upsilon * s.q_mat.adjoint()));
    mean_grad_w.dot(&s.v) + 0.5 * s.eps * (mean_hess_w * y).trace()
}

/// A field model paired with an averaging engine and assembly options.
#[derive(Clone)]
pub struct Dynamics {
    pub model: Arc<dyn FieldModel>,
    pub engine: AverageEngine,
    pub opts: RhsOptions,
}

impl Dynamics {
    pub fn new(model: Arc<dyn FieldModel>, engine: AverageEngine) -> Self {
        Self { model, engine, opts: RhsOptions::default() }
    }

    pub fn with_options(mut self, opts: RhsOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn means(&self, s: &WavePacketState) -> Result<MeanFields> {
        self.engine.means_of(self.model.as_ref(), s)
    }

    pub fn means_canonical(&self, s: &CanonicalState) -> Result<MeanFields> {
        self.engine.means_of_canonical(self.model.as_ref(), s)
    }

    pub fn rhs_transformed(&self, s: &WavePacketState) -> Result<TransformedRhs> {
        rhs_transformed(s, &self.means(s)?, &self.opts)
    }

    pub fn rhs_canonical(&self, s: &CanonicalState) -> Result<CanonicalRhs> {
        rhs_canonical(s, &self.means_canonical(s)?, self.opts.imag_tol)
    }

    /// Same dynamics with the imaginary-part tolerance relaxed to at least [`STAGE_IMAG_TOL`].
    pub fn for_stages(&self) -> Self {
        let mut d = self.clone();
        d.opts.imag_tol = d.opts.imag_tol.max(STAGE_IMAG_TOL);
        d
    }

    pub fn to_canonical(&self, s: &WavePacketState) -> Result<CanonicalState> {
        let m = self.means(s)?;
        Ok(s.to_canonical(&m.a, &m.jac))
    }

    pub fn to_magnetic(&self, s: &CanonicalState) -> Result<WavePacketState> {
        let m = self.means_canonical(s)?;
        Ok(s.to_magnetic(&m.a, &m.jac))
    }

    /// Energy per unit mass.
    pub fn energy(&self, s: &WavePacketState) -> Result<f64> {
        let m = self.means(s)?;
        let cs = s.to_canonical(&m.a, &m.jac);
        self.energy_with_means(&cs, &m)
    }

    pub fn energy_canonical(&self, s: &CanonicalState) -> Result<f64> {
        let m = self.means_canonical(s)?;
        self.energy_with_means(s, &m)
    }

    fn energy_with_means(&self, s: &CanonicalState, m: &MeanFields) -> Result<f64> {
        let c = s.width()?;
        let qq = linalg::width_covariance(&s.q_mat);
        Ok(energy_with(&s.p, &c, &qq, m, s.eps))
    }

    pub fn density(&self, s: &WavePacketState) -> Result<GaussianDensity> {
        GaussianDensity::of_state(s)
    }

    pub fn packet_norm(&self, s: &WavePacketState) -> Result<f64> {
        packet::l2_norm_squared(s.zeta_i, &s.q_mat, s.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averages::AverageMode;
    use crate::fields::{PenningField3D, TrigField2D};
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn trig_dynamics(mode: AverageMode) -> Dynamics {
        Dynamics::new(Arc::new(TrigField2D::new(1.0)), AverageEngine::new(mode, 20))
    }

    fn random_like_state(eps: f64, seed: u64) -> CanonicalState {
        let s = seed as f64;
        let l = CMat::from_row_slice(
            2,
            2,
            &[c(1.0 + 0.1 * s.sin(), 0.0), c(0.1 * s.cos(), 0.0), c(-0.2, 0.0), c(0.9 + 0.05 * s, 0.0)],
        );
        let (a, b, g) = (0.3 + 0.2 * s, 0.7 * s, -0.4 + 0.1 * s);
        let u = CMat::from_row_slice(
            2,
            2,
            &[c(a.cos(), 0.0), -Complex64::from_polar(a.sin(), b), c(a.sin(), 0.0), Complex64::from_polar(a.cos(), b)],
        ) * Complex64::from_polar(1.0, g);
        let q_mat = l * u;
        let cr = RMat::from_row_slice(2, 2, &[0.3, -0.1 * s.cos(), -0.1 * s.cos(), 0.2]);
        let p_mat = packet::symplectic_partner(&q_mat, &cr).unwrap();
        let zi = packet::normalizing_zeta_i(&q_mat, eps).unwrap();
        CanonicalState::new(
            0.1 * s,
            eps,
            DVector::from_vec(vec![0.3 * s.sin(), -0.2 + 0.1 * s]),
            DVector::from_vec(vec![1.0, 0.2 * s.cos()]),
            q_mat,
            p_mat,
            c(0.05 * s, zi),
        )
        .unwrap()
    }

    /// Canonical right-hand side assembled directly from position-space integrals with
    /// `-i eps grad u = (C (x - q) + p) u`: `<J_A^T (xi - A) - grad phi>`,
    /// `<J_A^T J_A - sum_m grad^2 A_m (xi_m - A_m) + grad^2 phi>` and
    /// `<h> = <|C (x - q) + p - A|^2 / 2 + phi>`.
    fn direct_canonical(model: &dyn FieldModel, s: &CanonicalState) -> (RVec, RMat, f64) {
        let eng = AverageEngine::quadrature(24);
        let dn = GaussianDensity::of_canonical(s).unwrap();
        let cw = s.width().unwrap();
        let d = s.dim();
        let xi = |x: &RVec| -> DVector<Complex64> {
            let dx = linalg::to_complex_vec(&(x - &s.q));
            &cw * dx + linalg::to_complex_vec(&s.p)
        };
        let mass = dn.mass();
        let dp_re = eng
            .mean_vector(&dn, |x| {
                let f = model.derivatives(s.t, x);
                let r = linalg::re_vec(&(xi(x) - linalg::to_complex_vec(&f.a)));
                f.jac.tr_mul(&r) - &f.grad_phi
            })
            .unwrap()
            / mass;
        let h2 = eng
            .mean_matrix(&dn, |x| {
                let f = model.derivatives(s.t, x);
                let r = linalg::re_vec(&xi(x)) - &f.a;
                let mut m = f.jac.tr_mul(&f.jac) + &f.hess_phi;
                for k in 0..d {
                    m -= &f.hess_a[k] * r[k];
                }
                m
            })
            .unwrap()
            / mass;
        let h = eng
            .mean_scalar(&dn, |x| {
                let f = model.derivatives(s.t, x);
                let r = xi(x) - linalg::to_complex_vec(&f.a);
                0.5 * r.iter().map(|z| z.norm_sqr()).sum::<f64>() + f.phi
            })
            .unwrap()
            / mass;
        (dp_re, h2, h)
    }

    #[test]
    fn canonical_rhs_matches_direct_integrals() {
        let model = TrigField2D::new(1.0);
        let dy = trig_dynamics(AverageMode::Analytic);
        for seed in 0..5 {
            for eps in [1e-2, 1e-3] {
                let s = random_like_state(eps, seed);
                let rhs = dy.rhs_canonical(&s).unwrap();
                let (dp, h2, h) = direct_canonical(&model, &s);
                assert!((&rhs.dp - &dp).norm() <= 1e-10, "dp {} vs {}", rhs.dp, dp);
                let dp_mat = linalg::to_complex_mat(&dy.means_canonical(&s).unwrap().jac).transpose() * &s.p_mat
                    - linalg::to_complex_mat(&h2) * &s.q_mat;
                assert!((&rhs.dp_mat - dp_mat).norm() <= 1e-10);
                let e = dy.energy_canonical(&s).unwrap();
                assert!((e - h).abs() <= 1e-10 * (1.0 + h.abs()), "energy {e} vs {h}");
            }
        }
    }

    #[test]
    fn imaginary_phase_rate_identity() {
        let dy = trig_dynamics(AverageMode::Analytic);
        for seed in 0..10 {
            let s = random_like_state(1e-3, seed);
            let rhs = dy.rhs_canonical(&s).unwrap();
            let qi = s.q_mat.clone().try_inverse().unwrap();
            let expect = 0.5 * s.eps * linalg::re_mat(&(&rhs.dq_mat * qi)).trace();
            assert!((rhs.dzeta.im - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn transformed_matches_converted_canonical() {
        // v' = p' - d/dt <A>, Upsilon' = P' - d/dt<J_A> Q - <J_A> Q', with the time derivatives
        // of averages from the Ehrenfest formula plus explicit time dependence.
        let dy = trig_dynamics(AverageMode::Analytic);
        let model = TrigField2D::new(1.0);
        let eng = AverageEngine::quadrature(20);
        for seed in 0..10 {
            let cs = random_like_state(1e-3, seed);
            let crhs = dy.rhs_canonical(&cs).unwrap();
            let ms = dy.to_magnetic(&cs).unwrap();
            let trhs = dy.rhs_transformed(&ms).unwrap();
            let dn = GaussianDensity::of_state(&ms).unwrap();
            let mass = dn.mass();
            let d = 2;
            let mut dt_a = RVec::zeros(d);
            let mut dt_j = RMat::zeros(d, d);
            for k in 0..d {
                let g = eng.mean_vector(&dn, |x| model.derivatives(ms.t, x).jac.row(k).transpose()).unwrap() / mass;
                let h = eng.mean_matrix(&dn, |x| model.derivatives(ms.t, x).hess_a[k].clone()).unwrap() / mass;
                let expl = eng.mean_scalar(&dn, |x| model.derivatives(ms.t, x).dt_a[k]).unwrap() / mass;
                dt_a[k] = ehrenfest_derivative(&ms, &g, &h) + expl;
                for l in 0..d {
                    let g =
                        eng.mean_vector(&dn, |x| model.derivatives(ms.t, x).hess_a[k].column(l).into_owned()).unwrap()
                            / mass;
                    let h = eng
                        .mean_matrix(&dn, |x| {
                            let f = model.derivatives(ms.t, x);
                            RMat::from_fn(d, d, |i, j| f.third_a[k].get(l, i, j))
                        })
                        .unwrap()
                        / mass;
                    let expl = eng.mean_scalar(&dn, |x| model.derivatives(ms.t, x).dt_jac[(k, l)]).unwrap() / mass;
                    dt_j[(k, l)] = ehrenfest_derivative(&ms, &g, &h) + expl;
                }
            }
            let jac = linalg::to_complex_mat(&dy.means(&ms).unwrap().jac);
            let dv = &crhs.dp - &dt_a;
            let dups = &crhs.dp_mat - linalg::to_complex_mat(&dt_j) * &cs.q_mat - jac * &crhs.dq_mat;
            assert!((&trhs.dq - &crhs.dq).norm() <= 1e-12);
            assert!((&trhs.dv - &dv).norm() <= 1e-9, "dv {} vs {}", trhs.dv, dv);
            assert!((&trhs.dq_mat - &crhs.dq_mat).norm() <= 1e-12);
            assert!((&trhs.dupsilon - &dups).norm() <= 1e-9, "dUps {} vs {}", trhs.dupsilon, dups);
            assert!((trhs.dzeta_r - crhs.dzeta.re).abs() <= 1e-9, "zeta_R {} vs {}", trhs.dzeta_r, crhs.dzeta.re);
        }
    }

    fn penning_state() -> WavePacketState {
        let q = DVector::from_vec(vec![0.133, 0.133, 0.258]);
        let qm = CMat::from_diagonal(&DVector::from_vec(vec![c(0.133, 0.0), c(0.133, 0.0), c(0.258, 0.0)]));
        let pm = CMat::from_diagonal(&DVector::from_vec(vec![c(0.0, 7.492), c(0.0, 7.492), c(0.0, 3.879)]));
        let cs = CanonicalState::new(
            0.0,
            1.19e-8,
            q.clone(),
            DVector::from_vec(vec![0.133, 7.492, 3.879]),
            qm,
            pm,
            c(1.009, -1.84e-7),
        )
        .unwrap();
        let f = PenningField3D::published();
        let m = crate::averages::point_averages(&f, 0.0, &GaussianDensity::of_canonical(&cs).unwrap()).unwrap();
        cs.to_magnetic(&m.a, &m.jac)
    }

    #[test]
    fn penning_fields_reduce_to_point_values() {
        let f = PenningField3D::published();
        let s = penning_state();
        let m = crate::averages::point_averages(&f, 0.0, &GaussianDensity::of_state(&s).unwrap()).unwrap();
        let e = field_e(&s, &m, DEFAULT_IMAG_TOL).unwrap();
        let sm = field_s(&s, &m, DEFAULT_IMAG_TOL).unwrap();
        let grad = f.derivatives(0.0, &s.q).grad_phi;
        assert!((&e + &grad).norm() <= 1e-12 * grad.norm());
        assert!((&e - field_e_linear(&m)).norm() <= 1e-12 * grad.norm());
        assert!((&sm - field_s_linear(&m)).norm() <= 1e-12 * 226.5);
        let h = mean_hess_h(&s, &m, DEFAULT_IMAG_TOL).unwrap();
        let fd = f.derivatives(0.0, &s.q);
        assert!((h - (fd.jac.tr_mul(&fd.jac) + fd.hess_phi)).norm() <= 1e-10);
    }

    #[test]
    fn zero_magnetic_field_reduces_to_standard_dynamics() {
        let dy = Dynamics::new(Arc::new(TrigField2D::electric_only()), AverageEngine::new(AverageMode::Analytic, 10));
        let cs = random_like_state(1e-2, 3);
        let s = dy.to_magnetic(&cs).unwrap();
        let m = dy.means(&s).unwrap();
        let r = dy.rhs_transformed(&s).unwrap();
        assert!((&r.dv + &m.grad_phi).norm() <= 1e-14);
        let expect = -linalg::to_complex_mat(&m.hess_phi) * &s.q_mat;
        assert!((&r.dupsilon - expect).norm() <= 1e-14);
    }

    struct Free;

    impl FieldModel for Free {
        fn name(&self) -> &str {
            "free"
        }
        fn dim(&self) -> usize {
            2
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
            crate::fields::FieldDerivatives::zeros(2)
        }
    }

    #[test]
    fn free_packet_phase_rate_and_energy() {
        let dy = Dynamics::new(Arc::new(Free), AverageEngine::default());
        let s = WavePacketState::new(
            0.0,
            0.1,
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, 2.0]),
            CMat::identity(2, 2),
            CMat::identity(2, 2) * c(0.0, 1.0),
            0.0,
            0.0,
        )
        .unwrap();
        let m = dy.means(&s).unwrap();
        let rate = zeta_r_rhs(&s, &m, DEFAULT_IMAG_TOL).unwrap();
        assert!((rate - (2.5 - 0.1)).abs() < 1e-14, "{rate}");
        assert!((dy.energy(&s).unwrap() - (2.5 + 0.05)).abs() < 1e-14);
        let r = dy.rhs_transformed(&s).unwrap();
        assert!(r.dv.norm() == 0.0 && r.dupsilon.norm() == 0.0);
    }

    #[test]
    fn ehrenfest_on_coordinates() {
        let cs = random_like_state(1e-2, 2);
        let s = cs.to_magnetic(&RVec::zeros(2), &RMat::zeros(2, 2));
        for k in 0..2 {
            let mut g = RVec::zeros(2);
            g[k] = 1.0;
            assert!((ehrenfest_derivative(&s, &g, &RMat::zeros(2, 2)) - s.v[k]).abs() < 1e-15);
        }
        assert_eq!(ehrenfest_derivative(&s, &RVec::zeros(2), &RMat::zeros(2, 2)), 0.0);
    }

    #[test]
    fn non_symplectic_width_trips_the_assertion() {
        let dy = trig_dynamics(AverageMode::Analytic);
        let mut cs = random_like_state(1e-2, 1);
        cs.p_mat = CMat::identity(2, 2);
        assert!(matches!(dy.rhs_canonical(&cs), Err(GwpError::ImaginaryResidual { .. })));
    }
}

//! Gaussian averages `<f> = int f |u|^2 dx` by tensor Gauss–Hermite quadrature,
//! point evaluation (linear `A`, quadratic `phi`) or scenario closed forms.
//!
//! Two conventions coexist. The raw integrals (`mean_*`, [`analytic_trig_average`])
//! carry the density mass `exp(-2 zeta_I / eps) (eps pi)^{d/2} |det Q|`. The bundle
//! [`MeanFields`] that feeds the equations of motion holds normalized averages
//! (raw integral divided by the mass) and stores the mass alongside.

pub mod calculus;
mod hermite;

pub use hermite::GaussHermite;

use std::ops::{AddAssign, Mul};
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{GwpError, Result};
use crate::fields::{FieldDerivatives, FieldModel, Tensor3};
use crate::linalg::{self, CMat, RMat, RVec};
use crate::packet::{self, CanonicalState, WavePacketState};

pub const DEFAULT_QUAD_ORDER: usize = 10;

/// The Gaussian weight `|u(x)|^2` of a packet, parametrized by `q`, `W = Re(Q Q^*)`
/// (equal to `C_I^{-1}` for symplectic pairs) and the mass.
#[derive(Clone, Debug)]
pub struct GaussianDensity {
    pub eps: f64,
    pub q: RVec,
    /// `W = Re(Q Q^*)`, symmetrized.
    pub cov: RMat,
    /// Lower Cholesky factor `M` with `M M^T = W`.
    pub cov_chol: RMat,
    pub log_mass: f64,
}

impl GaussianDensity {
    pub fn new(eps: f64, q: &RVec, q_mat: &CMat, zeta_i: f64) -> Result<Self> {
        let log_mass = packet::log_l2_norm_squared(zeta_i, q_mat, eps)?;
        let cov = linalg::width_covariance(q_mat);
        let cov_chol = cov.clone().cholesky().ok_or(GwpError::SingularWidth { cond: f64::INFINITY })?.l();
        Ok(Self { eps, q: q.clone(), cov, cov_chol, log_mass })
    }

    pub fn of_state(s: &WavePacketState) -> Result<Self> {
        Self::new(s.eps, &s.q, &s.q_mat, s.zeta_i)
    }

    pub fn of_canonical(s: &CanonicalState) -> Result<Self> {
        Self::new(s.eps, &s.q, &s.q_mat, s.zeta.im)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn mass(&self) -> f64 {
        self.log_mass.exp()
    }

    /// Lower Cholesky factor `L` of the precision `C_I = W^{-1} = L L^T`.
    pub fn precision_cholesky(&self) -> Result<RMat> {
        let prec = linalg::try_inverse_real(&self.cov)?;
        let prec = linalg::symmetrize(&prec);
        Ok(prec.cholesky().ok_or(GwpError::SingularWidth { cond: f64::INFINITY })?.l())
    }

    /// `x = q + sqrt(eps) M y` turns the weight into `exp(-|y|^2)`.
    pub fn node(&self, y: &RVec) -> RVec {
        &self.q + &self.cov_chol * y * self.eps.sqrt()
    }
}

/// Normalized averages of every field quantity the equations of motion use.
#[derive(Clone, Debug)]
pub struct MeanFields {
    pub mass: f64,
    pub a: RVec,
    pub dt_a: RVec,
    pub jac: RMat,
    pub dt_jac: RMat,
    pub hess_a: Vec<RMat>,
    pub third_a: Vec<Tensor3>,
    pub phi: f64,
    pub grad_phi: RVec,
    pub hess_phi: RMat,
    pub curl: Vector3<f64>,
    /// `<J_A^T A>`
    pub jac_t_a: RVec,
    /// `<J_A^T J_A>`
    pub jac_t_jac: RMat,
    /// `sum_m <(grad^2 A_m) A_m>`
    pub hess_a_a: RMat,
    /// `<|A|^2>`
    pub a_sq: f64,
}

impl MeanFields {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Point values at `q`, with the second-moment corrections for `<phi>` and `<|A|^2>`
    /// that are exact for linear `A` and quadratic `phi`.
    pub fn from_point(fd: FieldDerivatives, density: &GaussianDensity) -> Self {
        let w = &density.cov;
        let e = density.eps;
        let jac_t_jac = fd.jac.transpose() * &fd.jac;
        let a_sq = fd.a.norm_squared() + 0.5 * e * (&jac_t_jac * w).trace();
        let phi = fd.phi + 0.25 * e * (&fd.hess_phi * w).trace();
        let d = fd.a.len();
        Self {
            mass: density.mass(),
            jac_t_a: fd.jac.transpose() * &fd.a,
            jac_t_jac,
            hess_a_a: RMat::zeros(d, d),
            a_sq,
            phi,
            a: fd.a,
            dt_a: fd.dt_a,
            jac: fd.jac,
            dt_jac: fd.dt_jac,
            hess_a: fd.hess_a,
            third_a: fd.third_a,
            grad_phi: fd.grad_phi,
            hess_phi: fd.hess_phi,
            curl: fd.curl,
        }
    }

    fn zeros(d: usize, mass: f64) -> Self {
        Self {
            mass,
            a: RVec::zeros(d),
            dt_a: RVec::zeros(d),
            jac: RMat::zeros(d, d),
            dt_jac: RMat::zeros(d, d),
            hess_a: vec![RMat::zeros(d, d); d],
            third_a: vec![Tensor3::zeros(d); d],
            phi: 0.0,
            grad_phi: RVec::zeros(d),
            hess_phi: RMat::zeros(d, d),
            curl: Vector3::zeros(),
            jac_t_a: RVec::zeros(d),
            jac_t_jac: RMat::zeros(d, d),
            hess_a_a: RMat::zeros(d, d),
            a_sq: 0.0,
        }
    }

    fn accumulate(&mut self, w: f64, fd: &FieldDerivatives) {
        self.a.axpy(w, &fd.a, 1.0);
        self.dt_a.axpy(w, &fd.dt_a, 1.0);
        self.jac += &fd.jac * w;
        self.dt_jac += &fd.dt_jac * w;
        for m in 0..fd.a.len() {
            self.hess_a[m] += &fd.hess_a[m] * w;
            self.third_a[m].axpy(w, &fd.third_a[m]);
            self.hess_a_a += &fd.hess_a[m] * (w * fd.a[m]);
        }
        self.phi += w * fd.phi;
        self.grad_phi.axpy(w, &fd.grad_phi, 1.0);
        self.hess_phi += &fd.hess_phi * w;
        self.curl += fd.curl * w;
        self.jac_t_a += fd.jac.tr_mul(&fd.a) * w;
        self.jac_t_jac += fd.jac.tr_mul(&fd.jac) * w;
        self.a_sq += w * fd.a.norm_squared();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AverageMode {
    /// Point if the field is linear/quadratic, else analytic if available, else quadrature.
    #[default]
    Auto,
    Quadrature,
    Analytic,
    Point,
}

impl std::str::FromStr for AverageMode {
    type Err = GwpError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "quadrature" => Ok(Self::Quadrature),
            "analytic" => Ok(Self::Analytic),
            "point" => Ok(Self::Point),
            _ => Err(GwpError::Config(format!("unknown averages.mode `{s}`"))),
        }
    }
}

/// Quantity types that can be integrated against the density.
pub trait Integrand: Clone + AddAssign + Mul<f64, Output = Self> {
    fn all_finite(&self) -> bool;
}

impl Integrand for f64 {
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl Integrand for RVec {
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl Integrand for RMat {
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct AverageEngine {
    pub mode: AverageMode,
    rule: Arc<GaussHermite>,
}

impl Default for AverageEngine {
    fn default() -> Self {
        Self::new(AverageMode::Auto, DEFAULT_QUAD_ORDER)
    }
}

impl AverageEngine {
    pub fn new(mode: AverageMode, quad_order: usize) -> Self {
        Self { mode, rule: Arc::new(GaussHermite::new(quad_order.max(1))) }
    }

    pub fn quadrature(order: usize) -> Self {
        Self::new(AverageMode::Quadrature, order)
    }

    pub fn quad_order(&self) -> usize {
        self.rule.order()
    }

    pub fn with_mode(&self, mode: AverageMode) -> Self {
        Self { mode, rule: Arc::clone(&self.rule) }
    }

    /// Mode actually used for `model` once `Auto` is resolved.
    pub fn resolve(&self, model: &dyn FieldModel) -> AverageMode {
        match self.mode {
            AverageMode::Auto => {
                let c = model.capabilities();
                if c.is_linear_a && c.is_quadratic_phi {
                    AverageMode::Point
                } else if c.has_analytic_averages {
                    AverageMode::Analytic
                } else {
                    AverageMode::Quadrature
                }
            }
            m => m,
        }
    }

    /// Tensor-grid nodes and weights such that `sum w_i f(x_i)` approximates the raw integral.
    pub fn nodes(&self, density: &GaussianDensity) -> Vec<(RVec, f64)> {
        let d = density.dim();
        let n = self.rule.order();
        let total = n.pow(d as u32);
        let scale = density.mass() / std::f64::consts::PI.powf(0.5 * d as f64);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let y = RVec::from_iterator(d, idx.iter().map(|&i| self.rule.nodes[i]));
            let w: f64 = idx.iter().map(|&i| self.rule.weights[i]).product();
            out.push((density.node(&y), w * scale));
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < n {
                    break;
                }
                *slot = 0;
            }
        }
        out
    }

    /// Raw integral `int f |u|^2 dx`.
    pub fn integrate<T: Integrand>(&self, density: &GaussianDensity, f: impl Fn(&RVec) -> T) -> Result<T> {
        let mut acc: Option<T> = None;
        for (x, w) in self.nodes(density) {
            let v = f(&x);
            if !v.all_finite() {
                return Err(GwpError::Evaluation { t: f64::NAN, node: x.iter().copied().collect() });
            }
            let term = v * w;
            match acc.as_mut() {
                Some(a) => *a += term,
                None => acc = Some(term),
            }
        }
        Ok(acc.expect("quadrature grid is never empty"))
    }

    pub fn mean_scalar(&self, density: &GaussianDensity, f: impl Fn(&RVec) -> f64) -> Result<f64> {
        self.integrate(density, f)
    }

    pub fn mean_vector(&self, density: &GaussianDensity, f: impl Fn(&RVec) -> RVec) -> Result<RVec> {
        self.integrate(density, f)
    }

    pub fn mean_matrix(&self, density: &GaussianDensity, f: impl Fn(&RVec) -> RMat) -> Result<RMat> {
        self.integrate(density, f)
    }

    /// Normalized field averages over the density at time `t`.
    pub fn means(&self, model: &dyn FieldModel, t: f64, density: &GaussianDensity) -> Result<MeanFields> {
        if model.dim() != density.dim() {
            return Err(GwpError::Dimension { expected: model.dim(), got: density.dim() });
        }
        match self.resolve(model) {
            AverageMode::Point => point_averages(model, t, density),
            AverageMode::Analytic => model.analytic_means(t, density).ok_or_else(|| GwpError::Capability {
                model: model.name().to_string(),
                what: "analytic averages".into(),
            }),
            _ => self.quadrature_means(model, t, density),
        }
    }

    pub fn means_of(&self, model: &dyn FieldModel, s: &WavePacketState) -> Result<MeanFields> {
        self.means(model, s.t, &GaussianDensity::of_state(s)?)
    }

    pub fn means_of_canonical(&self, model: &dyn FieldModel, s: &CanonicalState) -> Result<MeanFields> {
        self.means(model, s.t, &GaussianDensity::of_canonical(s)?)
    }

    pub fn quadrature_means(&self, model: &dyn FieldModel, t: f64, density: &GaussianDensity) -> Result<MeanFields> {
        let d = density.dim();
        let mut acc = MeanFields::zeros(d, density.mass());
        let mut total = 0.0;
        let nodes = self.nodes(density);
        // Weights without the mass factor keep the sums O(1) at tiny eps.
        let inv_mass = 1.0 / density.mass();
        for (x, w) in nodes {
            let fd = model.derivatives(t, &x);
            if !fd.is_finite() {
                return Err(GwpError::Evaluation { t, node: x.iter().copied().collect() });
            }
            let w = w * inv_mass;
            total += w;
            acc.accumulate(w, &fd);
        }
        let inv = 1.0 / total;
        acc.a *= inv;
        acc.dt_a *= inv;
        acc.jac *= inv;
        acc.dt_jac *= inv;
        for m in 0..d {
            acc.hess_a[m] *= inv;
            acc.third_a[m].scale(inv);
        }
        acc.phi *= inv;
        acc.grad_phi *= inv;
        acc.hess_phi *= inv;
        acc.curl *= inv;
        acc.jac_t_a *= inv;
        acc.jac_t_jac *= inv;
        acc.hess_a_a *= inv;
        acc.a_sq *= inv;
        Ok(acc)
    }
}

/// Point-evaluation averages. Requires linear `A` and quadratic `phi`.
pub fn point_averages(model: &dyn FieldModel, t: f64, density: &GaussianDensity) -> Result<MeanFields> {
    let c = model.capabilities();
    if !c.is_linear_a || !c.is_quadratic_phi {
        return Err(GwpError::Capability {
            model: model.name().to_string(),
            what: "point averages need linear A and quadratic phi".into(),
        });
    }
    Ok(MeanFields::from_point(model.derivatives(t, &density.q), density))
}

/// Normalized `(<sin(k.x + theta)>, <cos(k.x + theta)>)`.
pub fn normalized_trig_mean(density: &GaussianDensity, k: &RVec, theta: f64) -> (f64, f64) {
    let damp = (-0.25 * density.eps * (k.transpose() * &density.cov * k)[(0, 0)]).exp();
    let arg = k.dot(&density.q) + theta;
    (damp * arg.sin(), damp * arg.cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrigPhase {
    Sin,
    Cos,
}

/// Raw `int sin(x1 + x2 + alpha t) |u|^2` (or the cosine) for a planar packet.
pub fn analytic_trig_average(density: &GaussianDensity, alpha: f64, t: f64, phase: TrigPhase) -> Result<f64> {
    if density.dim() != 2 {
        return Err(GwpError::Dimension { expected: 2, got: density.dim() });
    }
    let (s, c) = normalized_trig_mean(density, &RVec::from_element(2, 1.0), alpha * t);
    Ok(density.mass()
        * match phase {
            TrigPhase::Sin => s,
            TrigPhase::Cos => c,
        })
}

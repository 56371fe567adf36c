//! Electromagnetic scenarios: vector potential `A`, scalar potential `phi` and the
//! derivatives the equations of motion consume.

mod penning;
mod trig;

pub use penning::{penning_scaling, PenningField3D, PenningScaling, Species, TrapParameters};
pub use trig::TrigField2D;

use nalgebra::Vector3;

use crate::averages::{GaussianDensity, MeanFields};
use crate::linalg::{RMat, RVec};

/// Dense rank-3 tensor with `d^3` entries, indexed `(i, j, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    d: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d: usize) -> Self {
        Self { d, data: vec![0.0; d * d * d] }
    }

    pub fn filled(d: usize, value: f64) -> Self {
        Self { d, data: vec![value; d * d * d] }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.d + j) * self.d + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i * self.d + j) * self.d + k] = value;
    }

    pub fn axpy(&mut self, a: f64, other: &Tensor3) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub is_linear_a: bool,
    pub is_quadratic_phi: bool,
    pub has_analytic_averages: bool,
    pub time_dependent: bool,
}

/// Pointwise field values and derivatives at `(t, x)`.
///
/// Index conventions: `jac[(k, l)] = d_l A_k`, `hess_a[m][(k, l)] = d_k d_l A_m`,
/// `third_a[m].get(i, j, k) = d_i d_j d_k A_m`. `curl` is `(0, 0, d_1 A_2 - d_2 A_1)` for d = 2.
#[derive(Clone, Debug)]
pub struct FieldDerivatives {
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
}

impl FieldDerivatives {
    pub fn zeros(d: usize) -> Self {
        Self {
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
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|x| x.is_finite())
            && self.jac.iter().all(|x| x.is_finite())
            && self.phi.is_finite()
            && self.grad_phi.iter().all(|x| x.is_finite())
            && self.hess_phi.iter().all(|x| x.is_finite())
            && self.hess_a.iter().all(|h| h.iter().all(|x| x.is_finite()))
            && self.third_a.iter().all(|t| t.max_abs().is_finite())
    }
}

pub trait FieldModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    fn derivatives(&self, t: f64, x: &RVec) -> FieldDerivatives;

    /// Closed-form normalized averages over the density, if the scenario has them.
    fn analytic_means(&self, _t: f64, _density: &GaussianDensity) -> Option<MeanFields> {
        None
    }
}

pub fn field_derivatives(model: &dyn FieldModel, t: f64, x: &RVec) -> FieldDerivatives {
    model.derivatives(t, x)
}

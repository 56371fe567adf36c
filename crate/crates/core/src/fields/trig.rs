use nalgebra::Vector3;

use super::{Capabilities, FieldDerivatives, FieldModel, Tensor3};
use crate::averages::{normalized_trig_mean, GaussianDensity, MeanFields};
use crate::linalg::{RMat, RVec};

/// `A = a (sin u, -sin u)` with `u = x1 + x2 + alpha t`, and `phi = sin(x1 + x2)`.
///
/// `amplitude = 1` is the sublinear test problem; `amplitude = 0` switches the magnetic
/// part off and leaves a purely electric trigonometric potential.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigField2D {
    pub alpha: f64,
    pub amplitude: f64,
}

const SIGMA: [f64; 2] = [1.0, -1.0];

impl TrigField2D {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, amplitude: 1.0 }
    }

    pub fn electric_only() -> Self {
        Self { alpha: 0.0, amplitude: 0.0 }
    }

    /// Builds the bundle from `sin u`, `cos u`, `sin s`, `cos s`. Every entry is linear in
    /// these, so passing their Gaussian averages yields the averaged bundle.
    fn assemble(&self, su: f64, cu: f64, sphi: f64, cphi: f64) -> FieldDerivatives {
        let a = self.amplitude;
        let al = self.alpha;
        let mut out = FieldDerivatives::zeros(2);
        for k in 0..2 {
            out.a[k] = a * SIGMA[k] * su;
            out.dt_a[k] = a * SIGMA[k] * al * cu;
            for l in 0..2 {
                out.jac[(k, l)] = a * SIGMA[k] * cu;
                out.dt_jac[(k, l)] = -a * SIGMA[k] * al * su;
            }
        }
        for m in 0..2 {
            out.hess_a[m] = RMat::from_element(2, 2, -a * SIGMA[m] * su);
            out.third_a[m] = Tensor3::filled(2, -a * SIGMA[m] * cu);
        }
        out.phi = sphi;
        out.grad_phi = RVec::from_element(2, cphi);
        out.hess_phi = RMat::from_element(2, 2, -sphi);
        out.curl = Vector3::new(0.0, 0.0, -2.0 * a * cu);
        out
    }
}

impl FieldModel for TrigField2D {
    fn name(&self) -> &str {
        "trig2d"
    }

    fn dim(&self) -> usize {
        2
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            is_linear_a: self.amplitude == 0.0,
            is_quadratic_phi: false,
            has_analytic_averages: true,
            time_dependent: self.alpha != 0.0 && self.amplitude != 0.0,
        }
    }

    fn derivatives(&self, t: f64, x: &RVec) -> FieldDerivatives {
        let s = x[0] + x[1];
        let u = s + self.alpha * t;
        self.assemble(u.sin(), u.cos(), s.sin(), s.cos())
    }

    fn analytic_means(&self, t: f64, density: &GaussianDensity) -> Option<MeanFields> {
        if density.dim() != 2 {
            return None;
        }
        let one = RVec::from_element(2, 1.0);
        let two = RVec::from_element(2, 2.0);
        let (su, cu) = normalized_trig_mean(density, &one, self.alpha * t);
        let (s2u, c2u) = normalized_trig_mean(density, &two, 2.0 * self.alpha * t);
        let (sphi, cphi) = normalized_trig_mean(density, &one, 0.0);
        let fd = self.assemble(su, cu, sphi, cphi);
        let a2 = self.amplitude * self.amplitude;
        // sum_m d_k A_m A_m = a^2 sin 2u, sum_m d_k A_m d_l A_m = a^2 (1 + cos 2u),
        // sum_m (d_k d_l A_m) A_m = -a^2 (1 - cos 2u), |A|^2 = a^2 (1 - cos 2u).
        Some(MeanFields {
            mass: density.mass(),
            jac_t_a: RVec::from_element(2, a2 * s2u),
            jac_t_jac: RMat::from_element(2, 2, a2 * (1.0 + c2u)),
            hess_a_a: RMat::from_element(2, 2, -a2 * (1.0 - c2u)),
            a_sq: a2 * (1.0 - c2u),
            a: fd.a,
            dt_a: fd.dt_a,
            jac: fd.jac,
            dt_jac: fd.dt_jac,
            hess_a: fd.hess_a,
            third_a: fd.third_a,
            phi: fd.phi,
            grad_phi: fd.grad_phi,
            hess_phi: fd.hess_phi,
            curl: fd.curl,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::fd;
    use super::*;

    #[test]
    fn values_at_origin() {
        let f = TrigField2D::new(1.0);
        let d = f.derivatives(0.0, &RVec::zeros(2));
        assert!(d.a.norm() < 1e-15);
        assert_eq!(d.jac, RMat::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]));
        assert_eq!(d.curl[2], -2.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = TrigField2D::new(1.0);
        let pts = [[0.3, -0.7], [1.1, 0.4], [-1.5, 1.9], [0.0, 0.0]];
        for (i, p) in pts.iter().enumerate() {
            fd::check_model(&f, 0.37 * i as f64, &RVec::from_row_slice(p), 1e-8);
        }
    }

    #[test]
    fn planar_curl_convention() {
        let f = TrigField2D::new(0.0);
        let x = RVec::from_vec(vec![0.4, -0.1]);
        let d = f.derivatives(0.0, &x);
        let w = RVec::from_vec(vec![0.7, 1.3]);
        let lhs = (d.jac.transpose() - &d.jac) * &w;
        let b = d.curl[2];
        assert!((lhs[0] - w[1] * b).abs() < 1e-12);
        assert!((lhs[1] + w[0] * b).abs() < 1e-12);
    }

    #[test]
    fn divergence_free_on_lattice() {
        let f = TrigField2D::new(1.0);
        for i in 0..5 {
            for j in 0..5 {
                let x = RVec::from_vec(vec![-2.0 + i as f64, -2.0 + j as f64]);
                let d = f.derivatives(0.3, &x);
                assert!(d.jac.trace().abs() <= 1e-12);
            }
        }
    }
}

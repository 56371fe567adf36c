use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Capabilities, FieldDerivatives, FieldModel};
use crate::error::{GwpError, Result};
use crate::linalg::{RMat, RVec};

/// CODATA 2018 values.
pub const HBAR: f64 = 1.054_571_817e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const PROTON_MASS: f64 = 1.672_621_923_69e-27;
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Proton,
    Electron,
    Custom { mass: f64, charge: f64 },
}

impl Species {
    pub fn mass(&self) -> f64 {
        match self {
            Species::Proton => PROTON_MASS,
            Species::Electron => ELECTRON_MASS,
            Species::Custom { mass, .. } => *mass,
        }
    }

    /// Signed charge in coulomb.
    pub fn charge(&self) -> f64 {
        match self {
            Species::Proton => ELEMENTARY_CHARGE,
            Species::Electron => -ELEMENTARY_CHARGE,
            Species::Custom { charge, .. } => *charge,
        }
    }
}

/// SI trap description. `charge` is signed; only its magnitude enters the frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapParameters {
    pub delta: f64,
    pub b0: f64,
    pub phi0: f64,
    pub mass: f64,
    pub charge: f64,
    pub hbar: f64,
}

impl TrapParameters {
    pub fn new(species: Species, delta: f64, b0: f64, phi0: f64) -> Self {
        Self { delta, b0, phi0, mass: species.mass(), charge: species.charge(), hbar: HBAR }
    }

    /// Proton trap of the reference table: 1.12 mm, 5.050 T, 53.10 V.
    pub fn proton_reference() -> Self {
        Self::new(Species::Proton, 0.00112, 5.050, 53.10)
    }

    /// Electron trap of the reference table: 3.35 mm, 5.872 T, 10.22 V.
    pub fn electron_reference() -> Self {
        Self::new(Species::Electron, 0.00335, 5.872, 10.22)
    }

    pub fn reference(species: Species) -> Option<Self> {
        match species {
            Species::Proton => Some(Self::proton_reference()),
            Species::Electron => Some(Self::electron_reference()),
            Species::Custom { .. } => None,
        }
    }

    pub fn charge_sign(&self) -> f64 {
        self.charge.signum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenningScaling {
    pub omega_c: f64,
    pub omega_3: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub big_omega: f64,
    pub b_m: f64,
    pub eps: f64,
    pub ratio_b: f64,
    pub ratio_omega: f64,
}

impl PenningScaling {
    pub fn nu_plus(&self) -> f64 {
        self.omega_plus / (2.0 * PI)
    }

    pub fn nu_3(&self) -> f64 {
        self.omega_3 / (2.0 * PI)
    }

    pub fn nu_minus(&self) -> f64 {
        self.omega_minus / (2.0 * PI)
    }
}

pub fn penning_scaling(p: &TrapParameters) -> Result<PenningScaling> {
    let positive = [p.delta, p.b0, p.phi0, p.mass, p.charge.abs(), p.hbar];
    if positive.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(GwpError::Config("trap parameters must be positive and finite".into()));
    }
    let qe = p.charge.abs();
    let omega_c = qe * p.b0 / p.mass;
    let omega_3_sq = qe * p.phi0 / (p.mass * p.delta * p.delta);
    let disc = omega_c * omega_c - 2.0 * omega_3_sq;
    if !(disc > 0.0) {
        return Err(GwpError::UnstableTrap { omega_c_sq: omega_c * omega_c, two_omega_3_sq: 2.0 * omega_3_sq });
    }
    let big_omega = disc.sqrt();
    let omega_plus = 0.5 * (omega_c + big_omega);
    // omega_+ omega_- = omega_3^2 / 2 avoids the cancellation in (omega_c - Omega) / 2.
    let omega_minus = 0.5 * omega_3_sq / omega_plus;
    let b_m = p.mass * omega_minus / qe;
    Ok(PenningScaling {
        omega_c,
        omega_3: omega_3_sq.sqrt(),
        omega_plus,
        omega_minus,
        big_omega,
        b_m,
        eps: p.hbar / (qe * b_m * p.delta * p.delta),
        ratio_b: p.b0 / b_m,
        ratio_omega: omega_plus / omega_minus,
    })
}

/// Dimensionless trap: `A = ratio_b / 2 (-x2, x1, 0)`,
/// `phi = charge_sign ratio_omega (x3^2 - (x1^2 + x2^2) / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PenningField3D {
    pub ratio_b: f64,
    pub ratio_omega: f64,
    pub charge_sign: f64,
}

impl PenningField3D {
    pub fn new(ratio_b: f64, ratio_omega: f64, charge_sign: f64) -> Self {
        Self { ratio_b, ratio_omega, charge_sign }
    }

    pub fn from_scaling(s: &PenningScaling, charge_sign: f64) -> Self {
        Self::new(s.ratio_b, s.ratio_omega, charge_sign)
    }

    /// The rounded ratios the published Penning experiment is stated with.
    pub fn published() -> Self {
        Self::new(114.25, 113.25, 1.0)
    }

    /// Angular frequencies of the exact coherent widths, `(radial, axial)`.
    ///
    /// Radial: `sqrt(b^2/4 - s kappa)`, axial: `sqrt(2 s kappa)`, where `b = ratio_b`,
    /// `kappa = ratio_omega`, `s = charge_sign`.
    pub fn coherent_frequencies(&self) -> Result<(f64, f64)> {
        let sk = self.charge_sign * self.ratio_omega;
        let radial = 0.25 * self.ratio_b * self.ratio_b - sk;
        let axial = 2.0 * sk;
        if !(radial > 0.0 && axial > 0.0) {
            return Err(GwpError::UnstableTrap {
                omega_c_sq: self.ratio_b * self.ratio_b,
                two_omega_3_sq: 2.0 * axial,
            });
        }
        Ok((radial.sqrt(), axial.sqrt()))
    }
}

impl FieldModel for PenningField3D {
    fn name(&self) -> &str {
        "penning3d"
    }

    fn dim(&self) -> usize {
        3
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { is_linear_a: true, is_quadratic_phi: true, has_analytic_averages: false, time_dependent: false }
    }

    fn derivatives(&self, _t: f64, x: &RVec) -> FieldDerivatives {
        let hb = 0.5 * self.ratio_b;
        let k = self.charge_sign * self.ratio_omega;
        let mut out = FieldDerivatives::zeros(3);
        out.a = RVec::from_vec(vec![-hb * x[1], hb * x[0], 0.0]);
        out.jac = RMat::from_row_slice(3, 3, &[0.0, -hb, 0.0, hb, 0.0, 0.0, 0.0, 0.0, 0.0]);
        out.phi = k * (x[2] * x[2] - 0.5 * (x[0] * x[0] + x[1] * x[1]));
        out.grad_phi = RVec::from_vec(vec![-k * x[0], -k * x[1], 2.0 * k * x[2]]);
        out.hess_phi = RMat::from_diagonal(&RVec::from_vec(vec![-k, -k, 2.0 * k]));
        out.curl = Vector3::new(0.0, 0.0, self.ratio_b);
        out
    }
}

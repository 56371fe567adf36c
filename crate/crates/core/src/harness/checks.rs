//! Seeded self-checks of the Gaussian calculus, the dynamics and the steppers.

use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::averages::{calculus, AverageEngine, AverageMode, GaussianDensity};
use crate::eom::{ehrenfest_derivative, Dynamics};
use crate::error::{GwpError, Result};
use crate::fields::{FieldModel, TrigField2D};
use crate::integrators::{boris_rotate, IntegratorKind};
use crate::linalg::{CMat, RMat, RVec};
use crate::observables;
use crate::packet::{self, CanonicalState};
use crate::scenarios::{propagate, sublinear_initial_canonical};

pub const SUITES: [&str; 5] =
    ["gaussian-calculus", "ehrenfest", "symplecticity", "boris-rotation", "canonical-consistency"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, passed: value <= tol }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: String,
    pub seed: u64,
    pub outcomes: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

pub fn run_check_suite(name: &str, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcomes = match name {
        "gaussian-calculus" => gaussian_calculus(&mut rng)?,
        "ehrenfest" => ehrenfest(&mut rng)?,
        "symplecticity" => symplecticity()?,
        "boris-rotation" => boris_rotation(&mut rng),
        "canonical-consistency" => canonical_consistency(&mut rng)?,
        _ => return Err(GwpError::Config(format!("unknown check suite `{name}` (known: {})", SUITES.join(", ")))),
    };
    Ok(CheckReport { suite: name.to_string(), seed, outcomes })
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Normalized 2D packet with `Q = L U` (`L` real lower-triangular, `U` unitary), so that
/// `(Q, P)` is symplectic for a random symmetric real part of the width.
pub fn random_canonical_state<R: Rng>(rng: &mut R, eps: f64) -> Result<CanonicalState> {
    let l = CMat::from_row_slice(
        2,
        2,
        &[
            c(rng.gen_range(0.7..1.3), 0.0),
            c(0.0, 0.0),
            c(rng.gen_range(-0.3..0.3), 0.0),
            c(rng.gen_range(0.7..1.3), 0.0),
        ],
    );
    let (a, b, g) = (rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    let u = CMat::from_row_slice(
        2,
        2,
        &[
            c(f64::cos(a), 0.0),
            -Complex64::from_polar(f64::sin(a), b),
            c(f64::sin(a), 0.0),
            Complex64::from_polar(f64::cos(a), b),
        ],
    ) * Complex64::from_polar(1.0, g);
    let q_mat = l * u;
    let off = rng.gen_range(-0.2..0.2);
    let cr = RMat::from_row_slice(2, 2, &[rng.gen_range(-0.4..0.4), off, off, rng.gen_range(-0.4..0.4)]);
    let p_mat = packet::symplectic_partner(&q_mat, &cr)?;
    let zi = packet::normalizing_zeta_i(&q_mat, eps)?;
    let mut v = || rng.gen_range(-1.0..1.0);
    let q = DVector::from_vec(vec![v(), v()]);
    let p = DVector::from_vec(vec![v(), v()]);
    CanonicalState::new(0.0, eps, q, p, q_mat, p_mat, c(v(), zi))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn rel_vec(a: &RVec, b: &RVec) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

/// Moment identities against the trigonometric field at high quadrature order.
fn gaussian_calculus(rng: &mut ChaCha8Rng) -> Result<Vec<CheckOutcome>> {
    let model = TrigField2D::new(1.0);
    let eng = AverageEngine::quadrature(30);
    let (mut e_mat, mut e_scal, mut e_quad) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let s = random_canonical_state(rng, 0.1)?;
        let dn = GaussianDensity::of_canonical(&s)?;
        let t = rng.gen_range(0.0..2.0);
        let (l, r) = calculus::matrix_moment(
            &eng,
            &dn,
            |x| model.derivatives(t, x).jac,
            |x| {
                let f = model.derivatives(t, x);
                (0..2).map(|l| RMat::from_fn(2, 2, |k, j| f.hess_a[k][(j, l)])).collect()
            },
        )?;
        e_mat = e_mat.max(rel_vec(&l, &r));
        let (l, r) =
            calculus::scalar_moment(&eng, &dn, |x| model.derivatives(t, x).phi, |x| model.derivatives(t, x).grad_phi)?;
        e_scal = e_scal.max(rel_vec(&l, &r));
        let m = RMat::from_row_slice(2, 2, &[rng.gen_range(-1.0..1.0), 0.3, -0.2, rng.gen_range(-1.0..1.0)]);
        let (l, r) = calculus::quadratic_moment(
            &eng,
            &dn,
            |x| model.derivatives(t, x).phi,
            |x| model.derivatives(t, x).hess_phi,
            &m,
        )?;
        e_quad = e_quad.max(rel(l, r));
    }
    Ok(vec![
        CheckOutcome::new("matrix first moment", e_mat, 1e-8),
        CheckOutcome::new("scalar first moment", e_scal, 1e-8),
        CheckOutcome::new("weighted second moment", e_quad, 1e-8),
    ])
}

/// `d/dt <w>` along an mRK4 trajectory by a five-point difference versus the closed form.
fn ehrenfest(rng: &mut ChaCha8Rng) -> Result<Vec<CheckOutcome>> {
    let dy = Dynamics::new(Arc::new(TrigField2D::new(1.0)), AverageEngine::new(AverageMode::Analytic, 10));
    let eng = AverageEngine::quadrature(24);
    let w = |x: &RVec| (1.3 * x[0]).sin() * (0.7 * x[1]).cos() + 0.2 * x[0] * x[1];
    let grad = |x: &RVec| {
        RVec::from_vec(vec![
            1.3 * (1.3 * x[0]).cos() * (0.7 * x[1]).cos() + 0.2 * x[1],
            -0.7 * (1.3 * x[0]).sin() * (0.7 * x[1]).sin() + 0.2 * x[0],
        ])
    };
    let hess = |x: &RVec| {
        let (s0, c0, s1, c1) = ((1.3 * x[0]).sin(), (1.3 * x[0]).cos(), (0.7 * x[1]).sin(), (0.7 * x[1]).cos());
        RMat::from_row_slice(2, 2, &[-1.69 * s0 * c1, -0.91 * c0 * s1 + 0.2, -0.91 * c0 * s1 + 0.2, -0.49 * s0 * c1])
    };
    let mean = |s: &crate::packet::WavePacketState| -> Result<f64> {
        let dn = GaussianDensity::of_state(s)?;
        Ok(eng.mean_scalar(&dn, w)? / dn.mass())
    };
    let h = 2e-3;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let cs = random_canonical_state(rng, 0.05)?;
        let s0 = dy.to_magnetic(&cs)?;
        let mut vals = [0.0; 5];
        for (i, k) in [-2i32, -1, 0, 1, 2].into_iter().enumerate() {
            let mut s = s0.clone();
            for _ in 0..k.unsigned_abs() {
                s = crate::integrators::mrk4_step(&dy, &s, h * k.signum() as f64)?;
            }
            vals[i] = mean(&s)?;
        }
        let fd = (vals[0] - 8.0 * vals[1] + 8.0 * vals[3] - vals[4]) / (12.0 * h);
        let dn = GaussianDensity::of_state(&s0)?;
        let g = eng.mean_vector(&dn, grad)? / dn.mass();
        let hm = eng.mean_matrix(&dn, hess)? / dn.mass();
        worst = worst.max(rel(ehrenfest_derivative(&s0, &g, &hm), fd));
    }
    Ok(vec![CheckOutcome::new("Ehrenfest derivative vs finite difference", worst, 1e-7)])
}

/// Growth of the symplecticity residuals over `[0, 8]` along fine-step reference runs.
fn symplecticity() -> Result<Vec<CheckOutcome>> {
    let dy = Dynamics::new(Arc::new(TrigField2D::new(1.0)), AverageEngine::default());
    let init = sublinear_initial_canonical(1e-3)?;
    let (a0, b0) = packet::symplecticity_residual(&init.q_mat, &init.p_mat);
    let mut out = Vec::new();
    for kind in [IntegratorKind::Rk4, IntegratorKind::Mrk4] {
        let mut worst = 0.0f64;
        propagate(&dy, &init, kind, 1e-3, 8000, |s| {
            let (r1, r2) = packet::symplecticity_residual(&s.canonical.q_mat, &s.canonical.p_mat);
            worst = worst.max((r1 - a0).abs()).max((r2 - b0).abs());
            Ok(())
        })?;
        out.push(CheckOutcome::new(format!("{} symplecticity growth over [0, 8]", kind.name()), worst, 1e-6));
    }
    Ok(out)
}

/// Implicit midpoint form of the rotation and its invariance of `|v|`.
fn boris_rotation(rng: &mut ChaCha8Rng) -> Vec<CheckOutcome> {
    let (mut res, mut norm) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let v = RVec::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let b = Vector3::from_fn(|_, _| rng.gen_range(-100.0..100.0));
        let tau = rng.gen_range(1e-4..0.1);
        let vp = boris_rotate(&v, &b, tau);
        let mid = (&vp + &v) * (0.5 * tau);
        let cross = RVec::from_vec(vec![
            mid[1] * b[2] - mid[2] * b[1],
            mid[2] * b[0] - mid[0] * b[2],
            mid[0] * b[1] - mid[1] * b[0],
        ]);
        res = res.max((&vp - &v - cross).norm() / (1.0 + v.norm()));
        norm = norm.max((vp.norm() - v.norm()).abs() / v.norm());
    }
    vec![CheckOutcome::new("rotation residual", res, 1e-13), CheckOutcome::new("rotation speed change", norm, 1e-13)]
}

/// mRK4 on the transformed system against RK4 on the canonical one, short horizon, fine step.
fn canonical_consistency(rng: &mut ChaCha8Rng) -> Result<Vec<CheckOutcome>> {
    let dy = Dynamics::new(Arc::new(TrigField2D::new(1.0)), AverageEngine::default());
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let init = random_canonical_state(rng, 1e-2)?;
        let mut a = Vec::new();
        let mut b = Vec::new();
        propagate(&dy, &init, IntegratorKind::Mrk4, 1e-3, 1000, |s| {
            a.push(s.canonical.clone());
            Ok(())
        })?;
        propagate(&dy, &init, IntegratorKind::Rk4, 1e-3, 1000, |s| {
            b.push(s.canonical.clone());
            Ok(())
        })?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max(observables::parameter_errors(x, y).as_array().iter().cloned().fold(0.0, f64::max));
        }
    }
    Ok(vec![CheckOutcome::new("transformed vs canonical over [0, 1]", worst, 1e-8)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_states_are_symplectic_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let s = random_canonical_state(&mut rng, 1e-2).unwrap();
            let (r1, r2) = packet::symplecticity_residual(&s.q_mat, &s.p_mat);
            assert!(r1 < 1e-13 && r2 < 1e-13, "{r1} {r2}");
            assert!((s.l2_norm_squared().unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(run_check_suite("bogus", 0).is_err());
    }

    #[test]
    fn rotation_suite_passes() {
        assert!(run_check_suite("boris-rotation", 3).unwrap().passed());
    }
}

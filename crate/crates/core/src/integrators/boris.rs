use nalgebra::{ComplexField, DVector, Vector3};
use num_complex::Complex64;

use super::rk4::mrk4_step;
use crate::eom::{self, Dynamics, ForceTerms, RhsOptions};
use crate::error::{GwpError, Result};
use crate::linalg::{self, CMat, RVec};
use crate::packet::{self, WavePacketState};

pub const DEFAULT_BOOTSTRAP_SUBSTEPS: usize = 10;

/// `v+ = v- + (v- + v- x (tau/2) b) x tau b / (1 + |tau b / 2|^2)`, the explicit solution of
/// `v+ - v- = (tau/2)(v+ + v-) x b`. Planar vectors use `b = (0, 0, b_3)`.
pub fn boris_rotate<T>(v_minus: &DVector<T>, b: &Vector3<f64>, tau: f64) -> DVector<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let half = b * (0.5 * tau);
    let half_sq = if v_minus.len() == 2 { half[2] * half[2] } else { half.norm_squared() };
    let w = v_minus + linalg::cross_field(v_minus, &half);
    let full = b * (tau / (1.0 + half_sq));
    v_minus + linalg::cross_field(&w, &full)
}

fn boris_rotate_cols(m: &CMat, b: &Vector3<f64>, tau: f64) -> CMat {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let c = boris_rotate(&m.column(j).into_owned(), b, tau);
        out.set_column(j, &c);
    }
    out
}

/// Kick, rotate, kick, drift.
pub fn boris_point_step(q: &RVec, v_half: &RVec, e: &RVec, b: &Vector3<f64>, tau: f64) -> (RVec, RVec) {
    let v_minus = v_half + e * (0.5 * tau);
    let v_plus = boris_rotate(&v_minus, b, tau);
    let v_next = v_plus + e * (0.5 * tau);
    (q + &v_next * tau, v_next)
}

pub fn extrapolate_vec(x_half: &RVec, x_half_prev: &RVec) -> RVec {
    x_half * 1.5 - x_half_prev * 0.5
}

pub fn extrapolate_mat(x_half: &CMat, x_half_prev: &CMat) -> CMat {
    x_half * Complex64::new(1.5, 0.0) - x_half_prev * Complex64::new(0.5, 0.0)
}

/// Staggered record: positions, widths and phases at `t_n`, velocities at `t_{n -+ 1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BorisStaggeredState {
    pub n: usize,
    pub t_n: f64,
    pub tau: f64,
    pub eps: f64,
    pub q_n: RVec,
    pub v_half: RVec,
    pub v_half_prev: RVec,
    pub q_mat_n: CMat,
    pub ups_half: CMat,
    pub ups_half_prev: CMat,
    pub zeta_r_n: f64,
    pub zeta_r_prev: f64,
    pub zeta_i_n: f64,
}

#[derive(Clone, Debug)]
pub struct StepReport {
    /// Packet at `t_n` with the averaged velocities `(v^{n-1/2} + v^{n+1/2}) / 2`.
    pub full_state: WavePacketState,
    pub v_tilde: RVec,
    pub ups_tilde: CMat,
    pub forces: ForceTerms,
    /// Norm of the packet after the step.
    pub norm: f64,
}

/// Startup from a full state at `t_0`: mRK4 with `tau / substeps` steps forward to
/// `t_0 + tau/2` and `t_0 + tau`, backward to `t_0 - tau/2`. Returns the state ready for step 1.
pub fn bootstrap(dy: &Dynamics, initial: &WavePacketState, tau: f64, substeps: usize) -> Result<BorisStaggeredState> {
    if !(tau > 0.0) {
        return Err(GwpError::Config(format!("tau must be positive, got {tau}")));
    }
    if substeps < 2 || !substeps.is_multiple_of(2) {
        return Err(GwpError::Config(format!("bootstrap substeps must be even and >= 2, got {substeps}")));
    }
    let h = tau / substeps as f64;
    let half = substeps / 2;
    let t0 = initial.t;
    let advance = |from: &WavePacketState, k: usize, h: f64, t_start: f64| -> Result<WavePacketState> {
        let mut s = from.clone();
        for i in 0..k {
            s.t = t_start + i as f64 * h;
            s = mrk4_step(dy, &s, h)?;
        }
        s.t = t_start + k as f64 * h;
        Ok(s)
    };
    let fwd_half = advance(initial, half, h, t0)?;
    let fwd_full = advance(&fwd_half, half, h, t0 + 0.5 * tau)?;
    let back_half = advance(initial, half, -h, t0)?;
    Ok(BorisStaggeredState {
        n: 1,
        t_n: t0 + tau,
        tau,
        eps: initial.eps,
        q_n: fwd_full.q,
        v_half: fwd_half.v,
        v_half_prev: back_half.v,
        q_mat_n: fwd_full.q_mat,
        ups_half: fwd_half.upsilon,
        ups_half_prev: back_half.upsilon,
        zeta_r_n: fwd_full.zeta_r,
        zeta_r_prev: initial.zeta_r,
        zeta_i_n: fwd_full.zeta_i,
    })
}

/// One step of the Boris-type scheme from `t_n` to `t_{n+1}`.
///
/// All averages are taken once, at the full-step state with extrapolated `v`, `Upsilon`.
pub fn boris_full_step(dy: &Dynamics, s: &BorisStaggeredState) -> Result<(BorisStaggeredState, StepReport)> {
    let tau = s.tau;
    let eps = s.eps;
    let v_tilde = extrapolate_vec(&s.v_half, &s.v_half_prev);
    let ups_tilde = extrapolate_mat(&s.ups_half, &s.ups_half_prev);
    let probe = WavePacketState {
        t: s.t_n,
        eps,
        q: s.q_n.clone(),
        v: v_tilde.clone(),
        q_mat: s.q_mat_n.clone(),
        upsilon: ups_tilde.clone(),
        zeta_r: s.zeta_r_n,
        zeta_i: s.zeta_i_n,
    };
    let means = dy.means(&probe)?;
    let probe_opts = RhsOptions { imag_tol: dy.opts.imag_tol.max(eom::STAGE_IMAG_TOL), ..dy.opts };
    let forces = eom::force_terms(&probe, &means, &probe_opts)?;

    let (q_next, v_next) = boris_point_step(&s.q_n, &s.v_half, &forces.e, &forces.b, tau);

    let kick = linalg::to_complex_mat(&forces.s) * &s.q_mat_n * Complex64::new(0.5 * tau, 0.0);
    let ups_minus = &s.ups_half + &kick;
    let ups_next = boris_rotate_cols(&ups_minus, &forces.b, tau) + &kick;
    let q_mat_next = &s.q_mat_n + &ups_next * Complex64::new(tau, 0.0);

    let zeta_i_next = s.zeta_i_n + 0.5 * eps * (linalg::log_abs_det(&q_mat_next)? - linalg::log_abs_det(&s.q_mat_n)?);

    let v_n = (&s.v_half + &v_next) * 0.5;
    let ups_n = (&s.ups_half + &ups_next) * Complex64::new(0.5, 0.0);
    let full_state = WavePacketState { v: v_n, upsilon: ups_n, ..probe };
    let ctr = eom::Contractions::transformed(&full_state, &means);
    let hess_h = eom::mean_hess_h_with(&means, &(&full_state.v + &means.a), &ctr.yg, eps);
    let rate = eom::zeta_r_rhs_with(&full_state.v, &means, &hess_h, &ctr.qq, eps)?;
    let zeta_r_next = s.zeta_r_prev + 2.0 * tau * rate;

    let next = BorisStaggeredState {
        n: s.n + 1,
        t_n: s.t_n + tau,
        tau,
        eps,
        q_n: q_next,
        v_half: v_next,
        v_half_prev: s.v_half.clone(),
        q_mat_n: q_mat_next,
        ups_half: ups_next,
        ups_half_prev: s.ups_half.clone(),
        zeta_r_n: zeta_r_next,
        zeta_r_prev: s.zeta_r_n,
        zeta_i_n: zeta_i_next,
    };
    let finite = next.q_n.iter().chain(next.v_half.iter()).all(|x| x.is_finite())
        && next.q_mat_n.iter().chain(next.ups_half.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
        && next.zeta_r_n.is_finite()
        && next.zeta_i_n.is_finite();
    if !finite {
        return Err(GwpError::NonFiniteState { step: next.n, t: next.t_n });
    }
    let norm = packet::l2_norm_squared(next.zeta_i_n, &next.q_mat_n, eps)?;
    Ok((next, StepReport { full_state, v_tilde, ups_tilde, forces, norm }))
}

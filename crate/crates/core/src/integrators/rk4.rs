use num_complex::Complex64;

use crate::eom::Dynamics;
use crate::error::{GwpError, Result};
use crate::linalg::{self, CMat, RVec};
use crate::packet::{CanonicalState, WavePacketState};

/// One classical RK4 step of `y' = f(t, y)`.
pub fn rk4_step<F>(mut f: F, t: f64, y: &[f64], tau: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    let shifted = |k: &[f64], h: f64| -> Vec<f64> { (0..n).map(|i| y[i] + h * k[i]).collect() };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * tau, &shifted(&k1, 0.5 * tau))?;
    let k3 = f(t + 0.5 * tau, &shifted(&k2, 0.5 * tau))?;
    let k4 = f(t + tau, &shifted(&k3, tau))?;
    Ok((0..n).map(|i| y[i] + tau / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

fn push_mat(out: &mut Vec<f64>, m: &CMat) {
    let d = m.nrows();
    for i in 0..d {
        for j in 0..d {
            out.push(m[(i, j)].re);
        }
    }
    for i in 0..d {
        for j in 0..d {
            out.push(m[(i, j)].im);
        }
    }
}

fn read_mat(y: &[f64], d: usize) -> CMat {
    let dd = d * d;
    CMat::from_fn(d, d, |i, j| Complex64::new(y[i * d + j], y[dd + i * d + j]))
}

/// Layout: `q, v, Re Q, Im Q, Re Upsilon, Im Upsilon, zeta_R`, matrices row-major.
pub fn flatten_transformed(q: &RVec, v: &RVec, q_mat: &CMat, ups: &CMat, zeta_r: f64) -> Vec<f64> {
    let d = q.len();
    let mut out = Vec::with_capacity(2 * d + 4 * d * d + 1);
    out.extend(q.iter());
    out.extend(v.iter());
    push_mat(&mut out, q_mat);
    push_mat(&mut out, ups);
    out.push(zeta_r);
    out
}

/// Inverse of [`flatten_transformed`]; `zeta_I` and metadata come from `template`.
pub fn unflatten_transformed(y: &[f64], t: f64, template: &WavePacketState) -> WavePacketState {
    let d = template.dim();
    let dd = d * d;
    WavePacketState {
        t,
        eps: template.eps,
        q: RVec::from_row_slice(&y[..d]),
        v: RVec::from_row_slice(&y[d..2 * d]),
        q_mat: read_mat(&y[2 * d..], d),
        upsilon: read_mat(&y[2 * d + 2 * dd..], d),
        zeta_r: y[2 * d + 4 * dd],
        zeta_i: template.zeta_i,
    }
}

/// Layout: `q, p, Re Q, Im Q, Re P, Im P, zeta_R, zeta_I`, matrices row-major.
pub fn flatten_canonical(s: &CanonicalState) -> Vec<f64> {
    let mut out = flatten_transformed(&s.q, &s.p, &s.q_mat, &s.p_mat, s.zeta.re);
    out.push(s.zeta.im);
    out
}

pub fn unflatten_canonical(y: &[f64], t: f64, eps: f64, d: usize) -> CanonicalState {
    let dd = d * d;
    CanonicalState {
        t,
        eps,
        q: RVec::from_row_slice(&y[..d]),
        p: RVec::from_row_slice(&y[d..2 * d]),
        q_mat: read_mat(&y[2 * d..], d),
        p_mat: read_mat(&y[2 * d + 2 * dd..], d),
        zeta: Complex64::new(y[2 * d + 4 * dd], y[2 * d + 4 * dd + 1]),
    }
}

/// Plain RK4 on the canonical system, including the complex phase.
pub fn rk4_canonical_step(dy: &Dynamics, s: &CanonicalState, tau: f64) -> Result<CanonicalState> {
    let d = s.dim();
    let y = flatten_canonical(s);
    let dy = dy.for_stages();
    let y1 = rk4_step(
        |t, y| {
            let st = unflatten_canonical(y, t, s.eps, d);
            let r = dy.rhs_canonical(&st)?;
            let mut out = flatten_transformed(&r.dq, &r.dp, &r.dq_mat, &r.dp_mat, r.dzeta.re);
            out.push(r.dzeta.im);
            Ok(out)
        },
        s.t,
        &y,
        tau,
    )?;
    let out = unflatten_canonical(&y1, s.t + tau, s.eps, d);
    if !out.is_finite() {
        return Err(GwpError::NonFiniteState { step: 0, t: out.t });
    }
    Ok(out)
}

/// Modified RK4: RK4 on `(q, v, Q, Upsilon, zeta_R)`; `zeta_I` at every stage and at the
/// end follows from `zeta_I^n + (eps/2)(ln|det Q| - ln|det Q^n|)`, so the norm is exact.
pub fn mrk4_step(dy: &Dynamics, s: &WavePacketState, tau: f64) -> Result<WavePacketState> {
    let ld0 = linalg::log_abs_det(&s.q_mat)?;
    let with_zeta_i = |mut st: WavePacketState| -> Result<WavePacketState> {
        st.zeta_i = s.zeta_i + 0.5 * s.eps * (linalg::log_abs_det(&st.q_mat)? - ld0);
        Ok(st)
    };
    let y = flatten_transformed(&s.q, &s.v, &s.q_mat, &s.upsilon, s.zeta_r);
    let dy = dy.for_stages();
    let y1 = rk4_step(
        |t, y| {
            let st = with_zeta_i(unflatten_transformed(y, t, s))?;
            let r = dy.rhs_transformed(&st)?;
            Ok(flatten_transformed(&r.dq, &r.dv, &r.dq_mat, &r.dupsilon, r.dzeta_r))
        },
        s.t,
        &y,
        tau,
    )?;
    let out = with_zeta_i(unflatten_transformed(&y1, s.t + tau, s))?;
    if !out.is_finite() {
        return Err(GwpError::NonFiniteState { step: 0, t: out.t });
    }
    Ok(out)
}

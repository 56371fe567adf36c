//! Experiment definitions: the two-dimensional trigonometric test problem and the proton
//! Penning trap, their initial data, fine-step references and the (eps, tau, integrator) grid.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averages::{AverageEngine, AverageMode, DEFAULT_QUAD_ORDER};
use crate::eom::{Dynamics, RhsOptions};
use crate::error::{GwpError, Result};
use crate::fields::{FieldModel, PenningField3D, TrigField2D};
use crate::harness::{convergence_slopes, SlopeSummary};
use crate::integrators::{
    bootstrap, boris_full_step, mrk4_step, rk4_canonical_step, IntegratorKind, DEFAULT_BOOTSTRAP_SUBSTEPS,
};
use crate::linalg::{self, CMat, RVec};
use crate::observables::{self, Diagnostics, ParameterErrors};
use crate::packet::{self, CanonicalState, WavePacketState};

/// Published proton trap: `eps` and the two dimensionless ratios as printed (3 figures).
pub const PENNING_EPS: f64 = 1.19e-8;
pub const PENNING_T_END: f64 = 2.0 * std::f64::consts::PI;

/// Symplecticity residual of initial data above which a warning is recorded.
pub const SYMPL_WARN: f64 = 5e-3;
/// Residual above which initial data is rejected.
pub const SYMPL_ERROR: f64 = 2e-2;

/// Rejects initial widths far from symplectic; returns a warning for mildly perturbed ones.
pub fn check_initial_symplecticity(s: &CanonicalState) -> Result<Option<String>> {
    let (r1, r2) = packet::symplecticity_residual(&s.q_mat, &s.p_mat);
    let r = r1.max(r2);
    if !(r <= SYMPL_ERROR) {
        return Err(GwpError::Config(format!(
            "initial (Q, P) is not symplectic: residuals {r1:.3e}, {r2:.3e} exceed {SYMPL_ERROR}"
        )));
    }
    Ok((r > SYMPL_WARN).then(|| format!("initial (Q, P) symplecticity residuals {r1:.3e}, {r2:.3e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    Trig {
        alpha: f64,
    },
    Penning {
        ratio_b: f64,
        ratio_omega: f64,
        #[serde(default = "one")]
        charge_sign: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn published_penning() -> Self {
        let f = PenningField3D::published();
        Self::Penning { ratio_b: f.ratio_b, ratio_omega: f.ratio_omega, charge_sign: f.charge_sign }
    }

    pub fn build(&self) -> Arc<dyn FieldModel> {
        match *self {
            Self::Trig { alpha } => Arc::new(TrigField2D::new(alpha)),
            Self::Penning { ratio_b, ratio_omega, charge_sign } => {
                Arc::new(PenningField3D::new(ratio_b, ratio_omega, charge_sign))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Trig { .. } => 2,
            Self::Penning { .. } => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSpec {
    /// `q = 0`, `p = (1, 0)`, `Q = Id`, `P = i Id`, `zeta_R = 0`, normalized.
    Sublinear,
    /// The printed Penning data (three-figure widths, slightly off the exact coherent state).
    Penning,
    /// Penning center and phase with the exact coherent widths of the trap.
    PenningCoherent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSystem {
    /// Plain RK4 on the canonical system, averages from the engine.
    Rk4Canonical,
    /// mRK4 on the transformed system with point-evaluated fields (linear `A`, quadratic `phi`).
    Mrk4Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub system: ReferenceSystem,
    pub tau_ref: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub field: FieldSpec,
    pub initial: InitialSpec,
    pub eps: Vec<f64>,
    pub taus: Vec<f64>,
    pub t_end: f64,
    pub integrators: Vec<IntegratorKind>,
    pub reference: Option<ReferenceSpec>,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
    #[serde(default)]
    pub average_mode: AverageMode,
    /// Quadrature order for the L2 distance to the reference; `None` skips it.
    #[serde(default)]
    pub l2_order: Option<usize>,
    /// Keep per-step energy error, norm and L2 series in the results.
    #[serde(default)]
    pub record_series: bool,
}

fn default_quad_order() -> usize {
    DEFAULT_QUAD_ORDER
}

pub const PRESETS: [&str; 5] =
    ["sublinear-convergence", "sublinear-energy", "sublinear-l2", "penning-convergence", "penning-energy"];

const SUBLINEAR_TAUS: [f64; 6] = [0.032, 0.016, 0.008, 0.004, 0.002, 0.001];
const PENNING_TAUS: [f64; 6] = [0.008, 0.004, 0.002, 0.001, 0.0005, 0.00025];

impl ExperimentSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let all = vec![IntegratorKind::Boris, IntegratorKind::Mrk4];
        let spec = match name {
            "sublinear-convergence" => Self {
                name: name.into(),
                field: FieldSpec::Trig { alpha: 1.0 },
                initial: InitialSpec::Sublinear,
                eps: vec![1e-3],
                taus: SUBLINEAR_TAUS.to_vec(),
                t_end: 8.0,
                integrators: all,
                reference: Some(ReferenceSpec { system: ReferenceSystem::Rk4Canonical, tau_ref: 1e-4 }),
                quad_order: DEFAULT_QUAD_ORDER,
                average_mode: AverageMode::Auto,
                l2_order: None,
                record_series: false,
            },
            "sublinear-l2" => Self {
                name: name.into(),
                eps: vec![1e-2, 1e-3],
                l2_order: Some(observables::DEFAULT_L2_ORDER),
                ..Self::preset("sublinear-convergence")?
            },
            "sublinear-energy" => Self {
                name: name.into(),
                field: FieldSpec::Trig { alpha: 0.0 },
                initial: InitialSpec::Sublinear,
                eps: vec![1e-3],
                taus: vec![0.1, 0.05, 0.025, 0.0125],
                t_end: 200.0,
                integrators: vec![IntegratorKind::Boris, IntegratorKind::Mrk4, IntegratorKind::Rk4],
                reference: None,
                quad_order: DEFAULT_QUAD_ORDER,
                average_mode: AverageMode::Auto,
                l2_order: None,
                record_series: true,
            },
            "penning-convergence" => Self {
                name: name.into(),
                field: FieldSpec::published_penning(),
                initial: InitialSpec::Penning,
                eps: vec![PENNING_EPS],
                taus: PENNING_TAUS.to_vec(),
                t_end: PENNING_T_END,
                integrators: vec![IntegratorKind::Boris, IntegratorKind::Rk4, IntegratorKind::Mrk4],
                reference: Some(ReferenceSpec { system: ReferenceSystem::Mrk4Linear, tau_ref: 1e-5 }),
                quad_order: DEFAULT_QUAD_ORDER,
                average_mode: AverageMode::Auto,
                l2_order: None,
                record_series: false,
            },
            "penning-energy" => Self {
                name: name.into(),
                taus: vec![0.01, 0.005, 0.0025, 0.00125],
                reference: None,
                record_series: true,
                ..Self::preset("penning-convergence")?
            },
            _ => return Err(GwpError::Config(format!("unknown preset `{name}` (known: {})", PRESETS.join(", ")))),
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GwpError::Config(m));
        if self.eps.is_empty() || self.taus.is_empty() || self.integrators.is_empty() {
            return bad("eps, tau and integrator lists must be non-empty".into());
        }
        if self.eps.iter().any(|e| !(*e > 0.0)) {
            return bad("eps must be positive".into());
        }
        if self.taus.iter().any(|t| !(*t > 0.0)) || self.taus.windows(2).any(|w| w[1] >= w[0]) {
            return bad("taus must be positive and strictly decreasing".into());
        }
        if !(self.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.quad_order == 0 {
            return bad("quadrature order must be at least 1".into());
        }
        if self.field.dim() == 3 && self.initial == InitialSpec::Sublinear
            || self.field.dim() == 2 && self.initial != InitialSpec::Sublinear
        {
            return bad("initial data does not match the field dimension".into());
        }
        if let Some(r) = &self.reference {
            let min_tau = self.taus.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(r.tau_ref > 0.0) || r.tau_ref > min_tau / 10.0 * (1.0 + 1e-12) {
                return bad(format!("tau_ref = {} must be at most min(tau)/10 = {}", r.tau_ref, min_tau / 10.0));
            }
            for &t in &self.taus {
                multiple_of(t, r.tau_ref)?;
            }
        }
        Ok(())
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics::new(self.field.build(), AverageEngine::new(self.average_mode, self.quad_order))
    }
}

/// `tau / base` as an integer, or an error if it is not one.
pub fn multiple_of(tau: f64, base: f64) -> Result<usize> {
    let r = tau / base;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * r.max(1.0) {
        return Err(GwpError::Config(format!("tau = {tau} is not an integer multiple of {base}")));
    }
    Ok(k as usize)
}

/// Number of steps of size `tau` covering `[0, t_end]`.
pub fn step_count(t_end: f64, tau: f64) -> usize {
    (t_end / tau + 1e-9).floor() as usize
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn sublinear_initial_canonical(eps: f64) -> Result<CanonicalState> {
    let q_mat = linalg::identity_c(2);
    let zi = packet::normalizing_zeta_i(&q_mat, eps)?;
    CanonicalState::new(
        0.0,
        eps,
        RVec::zeros(2),
        RVec::from_vec(vec![1.0, 0.0]),
        q_mat.clone(),
        q_mat * c(0.0, 1.0),
        c(0.0, zi),
    )
}

/// Sublinear initial data in magnetic variables, via the averages of `dy` at `t = 0`.
pub fn sublinear_initial(dy: &Dynamics, eps: f64) -> Result<WavePacketState> {
    dy.to_magnetic(&sublinear_initial_canonical(eps)?)
}

pub fn penning_initial_canonical() -> CanonicalState {
    let d3 = |a: f64, b: f64, cc: f64| RVec::from_vec(vec![a, b, cc]);
    let q = d3(0.133, 0.133, 0.258);
    let q_mat = CMat::from_diagonal(&q.map(|x| c(x, 0.0)));
    let p_mat = CMat::from_diagonal(&DVector::from_vec(vec![c(0.0, 7.492), c(0.0, 7.492), c(0.0, 3.879)]));
    CanonicalState { t: 0.0, eps: PENNING_EPS, q, p: d3(0.133, 7.492, 3.879), q_mat, p_mat, zeta: c(1.009, -1.84e-7) }
}

/// Same center and real phase as the printed data, exact coherent widths
/// `Q = diag(w^{-1/2})`, `P = i diag(w^{1/2})`, and the normalizing `zeta_I`.
pub fn penning_coherent_canonical(field: &PenningField3D, eps: f64) -> Result<CanonicalState> {
    let (wr, wa) = field.coherent_frequencies()?;
    let w = [wr, wr, wa];
    let q_mat = CMat::from_diagonal(&DVector::from_iterator(3, w.iter().map(|x| c(x.powf(-0.5), 0.0))));
    let p_mat = CMat::from_diagonal(&DVector::from_iterator(3, w.iter().map(|x| c(0.0, x.sqrt()))));
    let base = penning_initial_canonical();
    let zi = packet::normalizing_zeta_i(&q_mat, eps)?;
    Ok(CanonicalState { eps, q_mat, p_mat, zeta: c(base.zeta.re, zi), ..base })
}

pub fn initial_canonical(spec: InitialSpec, field: &FieldSpec, eps: f64) -> Result<CanonicalState> {
    let s = initial_unchecked(spec, field, eps)?;
    check_initial_symplecticity(&s)?;
    Ok(s)
}

fn initial_unchecked(spec: InitialSpec, field: &FieldSpec, eps: f64) -> Result<CanonicalState> {
    match (spec, field) {
        (InitialSpec::Sublinear, _) => sublinear_initial_canonical(eps),
        (InitialSpec::Penning, _) => Ok(CanonicalState { eps, ..penning_initial_canonical() }),
        (InitialSpec::PenningCoherent, FieldSpec::Penning { ratio_b, ratio_omega, charge_sign }) => {
            penning_coherent_canonical(&PenningField3D::new(*ratio_b, *ratio_omega, *charge_sign), eps)
        }
        (InitialSpec::PenningCoherent, _) => Err(GwpError::Config("coherent data needs a Penning field".into())),
    }
}

/// One output point of a trajectory in both variable sets.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: usize,
    pub magnetic: WavePacketState,
    pub canonical: CanonicalState,
}

/// Runs `kind` with step `tau` for `n_steps` steps and calls `obs` at `t_0, ..., t_N`.
///
/// For the Boris-type scheme the state at `t_n` uses the averaged velocities and is only
/// available after step `n`, so one extra step is taken internally.
pub fn propagate(
    dy: &Dynamics,
    initial: &CanonicalState,
    kind: IntegratorKind,
    tau: f64,
    n_steps: usize,
    mut obs: impl FnMut(&Snapshot) -> Result<()>,
) -> Result<()> {
    let t0 = initial.t;
    let snap_m = |step: usize, m: WavePacketState| -> Result<Snapshot> {
        let canonical = dy.to_canonical(&m)?;
        Ok(Snapshot { step, magnetic: m, canonical })
    };
    let first = Snapshot { step: 0, magnetic: dy.to_magnetic(initial)?, canonical: initial.clone() };
    obs(&first)?;
    match kind {
        IntegratorKind::Rk4 => {
            let mut s = initial.clone();
            for n in 1..=n_steps {
                s.t = t0 + (n - 1) as f64 * tau;
                s = rk4_canonical_step(dy, &s, tau).map_err(|e| restep(e, n))?;
                s.t = t0 + n as f64 * tau;
                obs(&Snapshot { step: n, magnetic: dy.to_magnetic(&s)?, canonical: s.clone() })?;
            }
        }
        IntegratorKind::Mrk4 => {
            let mut s = first.magnetic;
            for n in 1..=n_steps {
                s.t = t0 + (n - 1) as f64 * tau;
                s = mrk4_step(dy, &s, tau).map_err(|e| restep(e, n))?;
                s.t = t0 + n as f64 * tau;
                obs(&snap_m(n, s.clone())?)?;
            }
        }
        IntegratorKind::Boris => {
            if n_steps == 0 {
                return Ok(());
            }
            let mut st = bootstrap(dy, &first.magnetic, tau, DEFAULT_BOOTSTRAP_SUBSTEPS)?;
            for n in 1..=n_steps {
                st.t_n = t0 + n as f64 * tau;
                let (next, report) = boris_full_step(dy, &st).map_err(|e| restep(e, n))?;
                obs(&snap_m(n, report.full_state)?)?;
                st = next;
            }
        }
    }
    Ok(())
}

fn restep(e: GwpError, n: usize) -> GwpError {
    match e {
        GwpError::NonFiniteState { t, .. } => GwpError::NonFiniteState { step: n, t },
        other => other,
    }
}

/// Canonical reference states at `t_0 + k * stride * tau_ref`, `k = 0..=n_out`.
pub fn reference_trajectory(
    dy: &Dynamics,
    initial: &CanonicalState,
    spec: &ReferenceSpec,
    stride: usize,
    n_out: usize,
) -> Result<Vec<CanonicalState>> {
    let mut out = Vec::with_capacity(n_out + 1);
    let n = stride * n_out;
    let dy_ref = match spec.system {
        ReferenceSystem::Rk4Canonical => dy.clone(),
        ReferenceSystem::Mrk4Linear => {
            let caps = dy.model.capabilities();
            if !(caps.is_linear_a && caps.is_quadratic_phi) {
                return Err(GwpError::Capability {
                    model: dy.model.name().to_string(),
                    what: "linear A and quadratic phi for the point-evaluation reference".into(),
                });
            }
            Dynamics::new(dy.model.clone(), dy.engine.with_mode(AverageMode::Point))
                .with_options(RhsOptions { linear_shortcut: true, ..dy.opts })
        }
    };
    let kind = match spec.system {
        ReferenceSystem::Rk4Canonical => IntegratorKind::Rk4,
        ReferenceSystem::Mrk4Linear => IntegratorKind::Mrk4,
    };
    propagate(&dy_ref, initial, kind, spec.tau_ref, n, |s| {
        if s.step % stride == 0 {
            out.push(s.canonical.clone());
        }
        Ok(())
    })?;
    Ok(out)
}

/// Fine-step trajectory of the Penning trap with point-evaluated fields, sampled every
/// `stride` steps of `tau_ref` up to `t_end`.
pub fn penning_exact_oracle(
    field: &PenningField3D,
    initial: &CanonicalState,
    tau_ref: f64,
    stride: usize,
    t_end: f64,
) -> Result<Vec<CanonicalState>> {
    let dy = Dynamics::new(Arc::new(field.clone()), AverageEngine::new(AverageMode::Point, 1));
    let n_out = step_count(t_end, tau_ref * stride as f64);
    reference_trajectory(&dy, initial, &ReferenceSpec { system: ReferenceSystem::Mrk4Linear, tau_ref }, stride, n_out)
}

/// Outcome of one (eps, tau, integrator) run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunResult {
    pub eps: f64,
    pub tau: f64,
    pub integrator: Option<IntegratorKind>,
    pub n_steps: usize,
    /// Max over the time grid of the scaled parameter errors against the reference.
    pub max_errors: Option<ParameterErrors>,
    pub max_l2: Option<f64>,
    pub final_l2: Option<f64>,
    pub l2_saturated: bool,
    pub initial_energy: f64,
    pub max_energy_err_abs: f64,
    pub max_energy_err_rel: f64,
    /// `max_n | ||u^n||_2 / ||u^0||_2 - 1 |`.
    pub max_norm_dev: f64,
    pub max_sympl_r2_growth: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub runtime_s: f64,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub energy_err_abs: f64,
    pub norm_dev: f64,
    pub l2: Option<f64>,
}

/// Slopes of every parameter error (and the L2 error) for one (eps, integrator).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeTable {
    pub eps: f64,
    pub integrator: IntegratorKind,
    pub parameters: BTreeMap<String, SlopeSummary>,
    pub l2: Option<SlopeSummary>,
    pub energy: SlopeSummary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub runs: Vec<RunResult>,
    pub slopes: Vec<SlopeTable>,
    pub reference_runtime_s: f64,
}

impl ExperimentResult {
    pub fn run(&self, eps: f64, tau: f64, kind: IntegratorKind) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.eps == eps && r.integrator == Some(kind) && (r.tau - tau).abs() < 1e-15)
    }

    pub fn slopes_for(&self, eps: f64, kind: IntegratorKind) -> Option<&SlopeTable> {
        self.slopes.iter().find(|s| s.eps == eps && s.integrator == kind)
    }
}

struct Reference {
    states: Vec<CanonicalState>,
    /// Output spacing in units of `tau_ref`.
    stride: usize,
}

fn build_reference(spec: &ExperimentSpec, dy: &Dynamics, eps: f64) -> Result<Option<Reference>> {
    let Some(r) = &spec.reference else { return Ok(None) };
    let ks: Vec<usize> = spec.taus.iter().map(|&t| multiple_of(t, r.tau_ref)).collect::<Result<_>>()?;
    let stride = ks.iter().copied().fold(0, gcd);
    let n_out = step_count(spec.t_end, r.tau_ref * stride as f64);
    let init = initial_canonical(spec.initial, &spec.field, eps)?;
    let states = reference_trajectory(dy, &init, r, stride, n_out)?;
    Ok(Some(Reference { states, stride }))
}

fn single_run(
    spec: &ExperimentSpec,
    dy: &Dynamics,
    eps: f64,
    tau: f64,
    kind: IntegratorKind,
    reference: Option<&Reference>,
) -> RunResult {
    let start = Instant::now();
    let n_steps = step_count(spec.t_end, tau);
    let mut res = RunResult { eps, tau, integrator: Some(kind), n_steps, ..Default::default() };
    let outcome = (|| -> Result<()> {
        let init = initial_canonical(spec.initial, &spec.field, eps)?;
        res.warnings.extend(check_initial_symplecticity(&init)?);
        let e0 = dy.energy_canonical(&init)?;
        let norm0 = init.l2_norm_squared()?.sqrt();
        let r20 = packet::symplecticity_residual(&init.q_mat, &init.p_mat).1;
        res.initial_energy = e0;
        let ratio = match (reference, &spec.reference) {
            (Some(r), Some(rs)) => Some(multiple_of(tau, rs.tau_ref)? / r.stride),
            _ => None,
        };
        let mut max_err: Option<ParameterErrors> = None;
        propagate(dy, &init, kind, tau, n_steps, |s| {
            let diag = Diagnostics::of_canonical(dy, &s.canonical, e0)?;
            res.max_energy_err_abs = res.max_energy_err_abs.max(diag.energy_err_abs);
            res.max_energy_err_rel = res.max_energy_err_rel.max(diag.energy_err_rel);
            let norm_dev = (diag.norm / norm0 - 1.0).abs();
            res.max_norm_dev = res.max_norm_dev.max(norm_dev);
            res.max_sympl_r2_growth = res.max_sympl_r2_growth.max((diag.sympl_r2 - r20).abs());
            let mut l2 = None;
            if let (Some(r), Some(k)) = (reference, ratio) {
                let target = &r.states[s.step * k];
                let e = observables::parameter_errors(&s.canonical, target);
                max_err = Some(max_err.map_or(e, |m| m.max(&e)));
                if let Some(order) = spec.l2_order {
                    let d = observables::l2_distance(&s.canonical, target, order)?;
                    res.l2_saturated |= d.saturated;
                    res.max_l2 = Some(res.max_l2.map_or(d.value, |m: f64| m.max(d.value)));
                    res.final_l2 = Some(d.value);
                    l2 = Some(d.value);
                }
            }
            if spec.record_series {
                res.series.push(SeriesPoint { t: s.canonical.t, energy_err_abs: diag.energy_err_abs, norm_dev, l2 });
            }
            Ok(())
        })?;
        res.max_errors = max_err;
        Ok(())
    })();
    if let Err(e) = outcome {
        res.error = Some(e.to_string());
    }
    res.runtime_s = start.elapsed().as_secs_f64();
    res
}

fn slope_tables(spec: &ExperimentSpec, runs: &[RunResult]) -> Vec<SlopeTable> {
    let mut out = Vec::new();
    for &eps in &spec.eps {
        for &kind in &spec.integrators {
            let rs: Vec<&RunResult> =
                runs.iter().filter(|r| r.eps == eps && r.integrator == Some(kind) && r.error.is_none()).collect();
            let mut parameters = BTreeMap::new();
            if rs.iter().all(|r| r.max_errors.is_some()) && !rs.is_empty() {
                for (i, name) in ParameterErrors::NAMES.iter().enumerate() {
                    let pts: Vec<(f64, f64)> =
                        rs.iter().map(|r| (r.tau, r.max_errors.unwrap().as_array()[i])).collect();
                    parameters.insert(name.to_string(), convergence_slopes(&pts));
                }
            }
            let l2 = (spec.l2_order.is_some() && spec.reference.is_some()).then(|| {
                convergence_slopes(&rs.iter().map(|r| (r.tau, r.max_l2.unwrap_or(f64::NAN))).collect::<Vec<_>>())
            });
            let energy = convergence_slopes(&rs.iter().map(|r| (r.tau, r.max_energy_err_abs)).collect::<Vec<_>>());
            out.push(SlopeTable { eps, integrator: kind, parameters, l2, energy });
        }
    }
    out
}

/// Runs every (eps, tau, integrator) combination. `jobs > 1` spreads runs over a thread pool;
/// results are ordered by (eps, tau, integrator) regardless.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentResult> {
    spec.validate()?;
    let dy = spec.dynamics();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| GwpError::Config(format!("thread pool: {e}")))?;
    let t_ref = Instant::now();
    let references: Vec<Option<Reference>> =
        pool.install(|| spec.eps.par_iter().map(|&eps| build_reference(spec, &dy, eps)).collect::<Result<Vec<_>>>())?;
    let reference_runtime_s = t_ref.elapsed().as_secs_f64();

    let mut jobs_list = Vec::new();
    for (ei, &eps) in spec.eps.iter().enumerate() {
        for &tau in &spec.taus {
            for &kind in &spec.integrators {
                jobs_list.push((ei, eps, tau, kind));
            }
        }
    }
    let runs: Vec<RunResult> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(ei, eps, tau, kind)| single_run(spec, &dy, eps, tau, kind, references[ei].as_ref()))
            .collect()
    });
    let slopes = slope_tables(spec, &runs);
    Ok(ExperimentResult { spec: spec.clone(), runs, slopes, reference_runtime_s })
}

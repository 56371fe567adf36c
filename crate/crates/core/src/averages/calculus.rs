//! Gaussian moment identities, evaluated as (quadrature, closed form) pairs.
//!
//! With `W = C_I^{-1}`:
//! * `<F (x - q)>_k = (eps/2) sum_l (<d_l F> W)_{kl}` for matrix-valued `F`,
//! * `<w (x - q)> = (eps/2) W <grad w>` for scalar `w`,
//! * `<(x-q)^T w M (x-q)> = (eps/2) <w> tr(M W) + (eps^2/4) tr(<grad^2 w> W M W)`.

use super::{AverageEngine, GaussianDensity};
use crate::error::Result;
use crate::linalg::{RMat, RVec};

/// Matrix-valued identity. `dfield(x)[l]` is `d_l F(x)`.
pub fn matrix_moment(
    engine: &AverageEngine,
    density: &GaussianDensity,
    field: impl Fn(&RVec) -> RMat,
    dfield: impl Fn(&RVec) -> Vec<RMat>,
) -> Result<(RVec, RVec)> {
    let d = density.dim();
    let q = density.q.clone();
    let lhs = engine.mean_vector(density, |x| field(x) * (x - &q))?;
    let mut rhs = RVec::zeros(d);
    for l in 0..d {
        let mean_dl = engine.mean_matrix(density, |x| dfield(x)[l].clone())?;
        let prod = mean_dl * &density.cov;
        for k in 0..d {
            rhs[k] += 0.5 * density.eps * prod[(k, l)];
        }
    }
    Ok((lhs, rhs))
}

/// Scalar first-moment identity.
pub fn scalar_moment(
    engine: &AverageEngine,
    density: &GaussianDensity,
    w: impl Fn(&RVec) -> f64,
    grad_w: impl Fn(&RVec) -> RVec,
) -> Result<(RVec, RVec)> {
    let q = density.q.clone();
    let lhs = engine.mean_vector(density, |x| (x - &q) * w(x))?;
    let g = engine.mean_vector(density, grad_w)?;
    Ok((lhs, &density.cov * g * (0.5 * density.eps)))
}

/// Second-moment identity with an arbitrary matrix `m`.
pub fn quadratic_moment(
    engine: &AverageEngine,
    density: &GaussianDensity,
    w: impl Fn(&RVec) -> f64,
    hess_w: impl Fn(&RVec) -> RMat,
    m: &RMat,
) -> Result<(f64, f64)> {
    let q = density.q.clone();
    let lhs = engine.mean_scalar(density, |x| {
        let dx = x - &q;
        w(x) * (dx.transpose() * m * &dx)[(0, 0)]
    })?;
    let mw = engine.mean_scalar(density, &w)?;
    let mh = engine.mean_matrix(density, hess_w)?;
    let e = density.eps;
    let cov = &density.cov;
    let rhs = 0.5 * e * mw * (m * cov).trace() + 0.25 * e * e * (mh * cov * m * cov).trace();
    Ok((lhs, rhs))
}

//! Time steppers: the Boris kernel and the Boris-type packet scheme on a staggered grid,
//! classical RK4 on the canonical system, and the norm-preserving modified RK4 (mRK4)
//! on the transformed system.

mod boris;
mod rk4;

pub use boris::{
    bootstrap, boris_full_step, boris_point_step, boris_rotate, extrapolate_mat, extrapolate_vec, BorisStaggeredState,
    StepReport, DEFAULT_BOOTSTRAP_SUBSTEPS,
};
pub use rk4::{
    flatten_canonical, flatten_transformed, mrk4_step, rk4_canonical_step, rk4_step, unflatten_canonical,
    unflatten_transformed,
};

use serde::{Deserialize, Serialize};

use crate::error::GwpError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorKind {
    Boris,
    Rk4,
    Mrk4,
}

impl IntegratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Boris => "boris",
            Self::Rk4 => "rk4",
            Self::Mrk4 => "mrk4",
        }
    }
}

impl std::fmt::Display for IntegratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for IntegratorKind {
    type Err = GwpError;
    fn from_str(s: &str) -> Result<Self, GwpError> {
        match s {
            "boris" => Ok(Self::Boris),
            "rk4" => Ok(Self::Rk4),
            "mrk4" => Ok(Self::Mrk4),
            _ => Err(GwpError::Config(format!("unknown integrator `{s}`"))),
        }
    }
}

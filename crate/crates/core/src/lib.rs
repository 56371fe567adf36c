//! Variational Gaussian wave packets for the semiclassical magnetic Schrödinger equation
//! `i eps d_t psi = (1/2 (i eps grad + A)^2 + phi) psi`.
//!
//! A packet is integrated either with a Boris-type scheme on a staggered grid or with a
//! norm-preserving modified RK4. Plain RK4 on the canonical system provides references.

pub mod averages;
pub mod eom;
pub mod error;
pub mod fields;
pub mod harness;
pub mod integrators;
pub mod linalg;
pub mod observables;
pub mod packet;
pub mod scenarios;

pub use averages::{AverageEngine, AverageMode, GaussianDensity, MeanFields};
pub use eom::{CanonicalRhs, Dynamics, RhsOptions, TransformedRhs};
pub use error::{GwpError, Result};
pub use fields::{FieldModel, PenningField3D, Species, TrapParameters, TrigField2D};
pub use packet::{CanonicalState, WavePacketState};

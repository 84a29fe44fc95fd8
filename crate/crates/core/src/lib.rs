//! Confining potentials near the boundary of a bounded domain.
//!
//! The crate evaluates the iterated-logarithm critical hierarchy
//! `3/4 - 1/L_1 - 1/(L_1 L_2) - ...`, decides the weight condition behind
//! it, classifies singular Sturm–Liouville endpoints as limit point or
//! limit circle, and checks the Agmon identity and Hardy inequalities by
//! quadrature. All boundary-proximity arithmetic happens in `s = ln(1/t)`.

pub mod agmon;
pub mod cli;
pub mod domains;
pub mod error;
pub mod fit;
pub mod hardy;
pub mod iterlog;
pub mod potentials;
pub mod sigma;
pub mod sturm;

pub use error::{ConfineError, Result};
pub use iterlog::LogCoordinate;

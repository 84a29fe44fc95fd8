//! Solutions of `-u'' + V u = E u` near a singular endpoint and the
//! limit-point / limit-circle decision built on their tails.

mod classify;
mod grid;
pub mod ode;
mod sample;

pub use classify::{
    classify_endpoint, classify_endpoint_with, classify_sample, default_anchor, esa_verdict, l2_decision, tail_exponent,
    tail_exponent_with, threshold_sweep, ClassifyOptions, EndpointClassification, EsaVerdict, Integrability, L2Decision,
    SweepPoint, SweepResult, TailFit, TailOptions, Verdict,
};
pub use grid::{Endpoint, QuadratureGrid, MIN_NODES};
pub use sample::{integrate, integrate_basis, integrate_with, wronskian, InitialCondition, SolutionSample, WronskianReport};

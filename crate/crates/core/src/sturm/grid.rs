use serde::{Deserialize, Serialize};

use crate::error::{ConfineError, Result};
use crate::fit::{log_sum_exp, simpson_weights};

/// Which end of the interval `(0, 1)` the distance `t` is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    /// `x -> 0+`, `t = x`.
    Left,
    /// `x -> 1-`, `t = 1 - x`.
    Right,
}

/// Nodes in `s = ln(1/t)` with composite-Simpson weights for `∫ f dt`,
/// stored as logarithms because `dt = e^{-s} ds` underflows deep in the tail.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub endpoint: Endpoint,
    s: Vec<f64>,
    log_weights: Vec<f64>,
}

pub const MIN_NODES: usize = 64;

impl QuadratureGrid {
    pub fn from_nodes(endpoint: Endpoint, s: Vec<f64>) -> Result<Self> {
        if s.len() < MIN_NODES {
            return Err(ConfineError::pre(format!("grid needs at least {MIN_NODES} nodes, got {}", s.len())));
        }
        if s[0] <= 0.0 || s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ConfineError::pre("grid nodes must be positive and strictly increasing in s"));
        }
        let w = simpson_weights(&s);
        if w.iter().any(|v| !(*v > 0.0)) {
            return Err(ConfineError::pre("grid grading too uneven for positive Simpson weights"));
        }
        let log_weights = w.iter().zip(&s).map(|(wi, si)| wi.ln() - si).collect();
        Ok(QuadratureGrid { endpoint, s, log_weights })
    }

    /// `nodes` points uniform in `s` (geometric in `t`).
    pub fn uniform(endpoint: Endpoint, s_min: f64, s_max: f64, nodes: usize) -> Result<Self> {
        if !(s_max > s_min) || nodes < 2 {
            return Err(ConfineError::pre("uniform grid needs s_min < s_max"));
        }
        let h = (s_max - s_min) / (nodes - 1) as f64;
        Self::from_nodes(endpoint, (0..nodes).map(|i| s_min + h * i as f64).collect())
    }

    /// Uniform spacing `h` up to `s_switch`, then spacing growing
    /// geometrically by `growth` per node until `s_max`. Suited to fitting
    /// iterated-log tails over many decades of `s`.
    pub fn graded(endpoint: Endpoint, s_min: f64, s_switch: f64, h: f64, s_max: f64, growth: f64) -> Result<Self> {
        if !(s_max > s_switch && s_switch > s_min && h > 0.0 && growth >= 1.0) {
            return Err(ConfineError::pre("graded grid parameters out of order"));
        }
        let mut s = vec![s_min];
        let mut x = s_min;
        while x + h < s_switch {
            x += h;
            s.push(x);
        }
        let mut step = h;
        while x + step < s_max {
            x += step;
            s.push(x);
            step *= growth;
        }
        if s_max - x < 0.5 * step && s.len() > 1 {
            s.pop();
        }
        s.push(s_max);
        Self::from_nodes(endpoint, s)
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.log_weights[i].exp()
    }

    /// `∫ f dt` for nodal values `f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.log_weights).map(|(v, lw)| v * lw.exp()).sum()
    }

    /// `ln ∫ f dt` for a positive integrand given as `ln f`.
    pub fn integrate_log(&self, log_f: &[f64]) -> f64 {
        log_sum_exp(log_f.iter().zip(&self.log_weights).map(|(lf, lw)| lf + lw))
    }

    /// Sub-grid restricted to `s in [lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        let nodes: Vec<f64> = self.s.iter().cloned().filter(|s| *s >= lo && *s <= hi).collect();
        Self::from_nodes(self.endpoint, nodes)
    }
}

//! Hardy quotients on `(0, 1)` with `d(x) = min(x, 1 - x)`, including the
//! iterated-log improvement of the weight.

use serde::{Deserialize, Serialize};

use crate::error::{ConfineError, Result};
use crate::fit::log_sum_exp;
use crate::iterlog::xk_from_log;
use crate::sturm::{Endpoint, QuadratureGrid};

/// Test functions vanishing at both ends. All are symmetric about `1/2` in
/// absolute value, so the two halves contribute equally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunctionFamily {
    /// `sin(kπx)`.
    SinePad { k: u32 },
    /// `d(x)^{1/2+ε}`, Lipschitz with a kink at `1/2`.
    PowerBoundary { epsilon: f64 },
    /// `(x(1-x))^m`.
    BumpProduct { m: f64 },
}

impl TestFunctionFamily {
    pub fn label(&self) -> String {
        match self {
            TestFunctionFamily::SinePad { k } => format!("sine_pad(k={k})"),
            TestFunctionFamily::PowerBoundary { epsilon } => format!("power_boundary(eps={epsilon})"),
            TestFunctionFamily::BumpProduct { m } => format!("bump_product(m={m})"),
        }
    }

    pub fn param(&self) -> f64 {
        match self {
            TestFunctionFamily::SinePad { k } => *k as f64,
            TestFunctionFamily::PowerBoundary { epsilon } => *epsilon,
            TestFunctionFamily::BumpProduct { m } => *m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TestFunctionFamily::SinePad { k } if k >= 1 => Ok(()),
            TestFunctionFamily::PowerBoundary { epsilon } if epsilon > 0.0 && epsilon.is_finite() => Ok(()),
            TestFunctionFamily::BumpProduct { m } if m >= 1.0 && m.is_finite() => Ok(()),
            _ => Err(ConfineError::pre(format!("{} has no H^1_0 member", self.label()))),
        }
    }

    /// `(ln|φ|, ln|φ'|)` at distance `d = e^{-s}` from the left end, `d <= 1/2`.
    pub fn ln_values(&self, s: f64) -> (f64, f64) {
        let d = (-s).exp();
        match *self {
            TestFunctionFamily::SinePad { k } => {
                let a = k as f64 * std::f64::consts::PI;
                let ln_phi = if a * d < 1e-4 {
                    a.ln() - s + (-(a * d).powi(2) / 6.0).ln_1p()
                } else {
                    (a * d).sin().abs().ln()
                };
                (ln_phi, a.ln() + (a * d).cos().abs().ln())
            }
            TestFunctionFamily::PowerBoundary { epsilon } => {
                let a = 0.5 + epsilon;
                (-a * s, a.ln() - (a - 1.0) * s)
            }
            TestFunctionFamily::BumpProduct { m } => power_ln(m, s, d),
        }
    }

    /// `(φ(x), φ'(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match *self {
            TestFunctionFamily::SinePad { k } => {
                let a = k as f64 * std::f64::consts::PI;
                ((a * x).sin(), a * (a * x).cos())
            }
            TestFunctionFamily::PowerBoundary { epsilon } => {
                let a = 0.5 + epsilon;
                let d = x.min(1.0 - x);
                let sign = if x <= 0.5 { 1.0 } else { -1.0 };
                (d.powf(a), sign * a * d.powf(a - 1.0))
            }
            TestFunctionFamily::BumpProduct { m } => power_eval(m, x),
        }
    }
}

fn power_ln(m: f64, s: f64, d: f64) -> (f64, f64) {
    let ln_q = -s + (-d).ln_1p();
    (m * ln_q, m.ln() + (m - 1.0) * ln_q + (1.0 - 2.0 * d).abs().ln())
}

fn power_eval(m: f64, x: f64) -> (f64, f64) {
    let q = x * (1.0 - x);
    (q.powf(m), m * q.powf(m - 1.0) * (1.0 - 2.0 * x))
}

#[derive(Debug, Clone, Serialize)]
pub struct HardyReport {
    pub quotient: f64,
    pub gradient: f64,
    pub mass: f64,
    pub weighted: f64,
    /// Largest estimated share of an integral beyond the last node.
    pub tail_fraction: f64,
    pub unresolved: bool,
}

/// Default half-interval grid in `s = ln(1/d)`: fine near `d = 1/2`, graded
/// out to `s = 4000` so slowly decaying boundary layers are captured.
pub fn default_grid() -> QuadratureGrid {
    QuadratureGrid::graded(Endpoint::Left, std::f64::consts::LN_2, 20.0, 5e-3, 4000.0, 1.002).expect("static grid")
}

const TAIL_WARN: f64 = 1e-4;

/// `ln ∫_{grid} e^{g}` plus a geometric tail estimate beyond the last node.
fn log_integral(grid: &QuadratureGrid, ln_f: &[f64]) -> (f64, f64) {
    let body = grid.integrate_log(ln_f);
    let s = grid.s();
    let n = s.len();
    // integrand in s is f e^{-s}; assume exponential decay past the end
    let a = ln_f[n - 1] - s[n - 1];
    let b = ln_f[n - 2] - s[n - 2];
    let kappa = (b - a) / (s[n - 1] - s[n - 2]);
    if !a.is_finite() {
        return (body, 0.0);
    }
    if !(kappa > 0.0) {
        return (body, f64::INFINITY);
    }
    let tail = a - kappa.ln();
    let total = log_sum_exp([body, tail]);
    (total, (tail - total).exp())
}

fn quotient_with(phi: &TestFunctionFamily, a_term: f64, grid: &QuadratureGrid, ln_weight: impl Fn(f64) -> f64) -> Result<HardyReport> {
    phi.validate()?;
    let s = grid.s();
    if s[0] > std::f64::consts::LN_2 + 1e-12 {
        return Err(ConfineError::pre("half-interval grid must start at d = 1/2"));
    }
    let mut lg = Vec::with_capacity(s.len());
    let mut lm = Vec::with_capacity(s.len());
    let mut lw = Vec::with_capacity(s.len());
    for &si in s {
        let (lp, ld) = phi.ln_values(si);
        lg.push(2.0 * ld);
        lm.push(2.0 * lp);
        lw.push(2.0 * lp + 2.0 * si + ln_weight(si));
    }
    let (g, tg) = log_integral(grid, &lg);
    let (m, tm) = log_integral(grid, &lm);
    let (w, tw) = log_integral(grid, &lw);
    let (gradient, mass, weighted) = (g.exp(), m.exp(), w.exp());
    let tail_fraction = tg.max(tm).max(tw);
    let quotient = (gradient + a_term * mass) / weighted;
    Ok(HardyReport { quotient, gradient, mass, weighted, tail_fraction, unresolved: !(tail_fraction <= TAIL_WARN) })
}

/// `(∫|φ'|² + A∫|φ|²) / (¼∫|φ|²/d²)` over one half of the interval.
pub fn hardy_quotient(phi: &TestFunctionFamily, a_term: f64, grid: &QuadratureGrid) -> Result<HardyReport> {
    quotient_with(phi, a_term, grid, |_| 0.25f64.ln())
}

/// `ln(1 + Σ_{i≤depth} Π_{k≤i} X_k²(r))` from `ln(1/r)`.
pub fn ln_improvement(log_inv_r: f64, depth: u32) -> f64 {
    let mut sum = 1.0;
    let mut prod = 1.0;
    for k in 1..=depth {
        prod *= xk_from_log(k, log_inv_r).powi(2);
        sum += prod;
    }
    sum.ln()
}

/// Hardy quotient with weight `¼(1 + Σ_{i=1}^{depth} Π_{k=1}^{i} X_k²(d/D))`.
pub fn improved_quotient(phi: &TestFunctionFamily, big_d: f64, depth: u32, grid: &QuadratureGrid) -> Result<HardyReport> {
    if !(big_d >= 0.5) {
        return Err(ConfineError::pre(format!("D = {big_d} is below the largest distance 1/2")));
    }
    if depth > 4 {
        return Err(ConfineError::pre("improvement depth is capped at 4"));
    }
    let ln_d = big_d.ln();
    quotient_with(phi, 0.0, grid, |s| 0.25f64.ln() + ln_improvement(s + ln_d, depth))
}

#[derive(Debug, Clone, Serialize)]
pub struct SharpnessPoint {
    pub epsilon: f64,
    pub quotient: f64,
}

/// Hardy quotients of `d^{1/2+ε}` along a decreasing `ε` sequence.
pub fn sharpness_probe(epsilons: &[f64], a_term: f64, grid: &QuadratureGrid) -> Result<Vec<SharpnessPoint>> {
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ConfineError::pre("epsilon sequence must be strictly decreasing"));
    }
    epsilons
        .iter()
        .map(|&e| {
            let r = hardy_quotient(&TestFunctionFamily::PowerBoundary { epsilon: e }, a_term, grid)?;
            Ok(SharpnessPoint { epsilon: e, quotient: r.quotient })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn improvement_first_factor() {
        // X_1(1/e) = 1/2
        assert_relative_eq!(ln_improvement(1.0, 1).exp(), 1.25, max_relative = 1e-14);
        assert_eq!(ln_improvement(3.0, 0), 0.0);
    }

    #[test]
    fn depth_zero_is_plain() {
        let g = default_grid();
        let phi = TestFunctionFamily::SinePad { k: 1 };
        let a = hardy_quotient(&phi, 0.0, &g).unwrap().quotient;
        let b = improved_quotient(&phi, 2.0, 0, &g).unwrap().quotient;
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn log_values_match_direct() {
        for phi in [
            TestFunctionFamily::SinePad { k: 2 },
            TestFunctionFamily::PowerBoundary { epsilon: 0.3 },
            TestFunctionFamily::BumpProduct { m: 2.0 },
        ] {
            for x in [1e-3, 0.1, 0.3, 0.45] {
                let (lp, ld) = phi.ln_values(-(x as f64).ln());
                let (p, d) = phi.eval(x);
                assert_relative_eq!(lp.exp(), p.abs(), max_relative = 1e-10);
                assert_relative_eq!(ld.exp(), d.abs(), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn rejects_non_h1_members() {
        assert!(TestFunctionFamily::PowerBoundary { epsilon: 0.0 }.validate().is_err());
        assert!(TestFunctionFamily::SinePad { k: 0 }.validate().is_err());
    }
}

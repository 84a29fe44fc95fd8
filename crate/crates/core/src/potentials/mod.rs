//! Potential families near a boundary endpoint and the condition-(Σ)
//! weight functions built from them.
//!
//! A family is evaluated as the dimensionless coefficient `w(s)` with
//! `V(t) = w(s) / t^2`, so inverse-square singularities become bounded.

mod gfunc;

use serde::{Deserialize, Serialize};

pub use gfunc::{
    g_hierarchy_build, g_log_plus_log_l1, g_log_t, g_log_t_minus_linear, smoothing, GBuildOptions, GFunction, Smoothing,
};

use crate::error::{ConfineError, Result};
use crate::fit::log_add;
use crate::iterlog::{self, prod_inv, script_l, LogCoordinate};
use crate::sturm::ode::StepControl;
use crate::sturm::{integrate_with, InitialCondition, QuadratureGrid, SolutionSample};

fn default_leading() -> f64 {
    0.75
}

/// A nonnegative profile `f` with `t f(t) -> 0` and `∫_0 f < ∞`, used for
/// the integrable corrections `f(d)/d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrableProfile {
    Zero,
    /// `f(t) = value`.
    Constant { value: f64 },
    /// `f(t) = value * t^{-exponent}` with `exponent < 1`.
    Power { value: f64, exponent: f64 },
}

impl Default for IntegrableProfile {
    fn default() -> Self {
        IntegrableProfile::Zero
    }
}

impl IntegrableProfile {
    pub fn one() -> Self {
        IntegrableProfile::Constant { value: 1.0 }
    }

    pub fn f(&self, t: f64) -> f64 {
        match *self {
            IntegrableProfile::Zero => 0.0,
            IntegrableProfile::Constant { value } => value,
            IntegrableProfile::Power { value, exponent } => value * t.powf(-exponent),
        }
    }

    /// `t f(t)` evaluated from `s`.
    pub fn t_f(&self, s: f64) -> f64 {
        match *self {
            IntegrableProfile::Zero => 0.0,
            IntegrableProfile::Constant { value } => value * (-s).exp(),
            IntegrableProfile::Power { value, exponent } => value * (-(1.0 - exponent) * s).exp(),
        }
    }

    /// `∫_0^t f(u) du` evaluated from `s`.
    pub fn integral_below(&self, s: f64) -> f64 {
        match *self {
            IntegrableProfile::Zero => 0.0,
            IntegrableProfile::Constant { value } => value * (-s).exp(),
            IntegrableProfile::Power { value, exponent } => value * (-(1.0 - exponent) * s).exp() / (1.0 - exponent),
        }
    }

    /// Checks nonnegativity, `t f(t) -> 0` and a finite cumulative limit on
    /// a decreasing sample of distances.
    pub fn validate(&self) -> Result<()> {
        if let IntegrableProfile::Power { exponent, .. } = *self {
            if !(exponent < 1.0) {
                return Err(ConfineError::pre(format!("profile exponent must be < 1, got {exponent}")));
            }
        }
        let samples: Vec<f64> = (1..=40).map(|k| 2.0 * k as f64).collect();
        let mut prev_tf = f64::INFINITY;
        for &s in &samples {
            let t = (-s).exp();
            if self.f(t) < 0.0 {
                return Err(ConfineError::pre("profile must be nonnegative"));
            }
            let tf = self.t_f(s);
            if tf > prev_tf * (1.0 + 1e-12) {
                return Err(ConfineError::pre("t f(t) does not decrease to zero"));
            }
            prev_tf = tf;
        }
        if !(prev_tf < 1e-6) || !self.integral_below(samples[0]).is_finite() {
            return Err(ConfineError::pre("profile is not integrable at the endpoint"));
        }
        Ok(())
    }
}

/// A one-sided potential near an endpoint, evaluated through `w(s) = t^2 V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PotentialFamily {
    /// `V = c / t^2`.
    PowerCritical { c: f64 },
    /// `w = leading - sum_{j=2}^{p-1} prod_inv(j-1) - c prod_inv(p-1)`.
    LogHierarchy {
        p: u32,
        #[serde(default = "default_leading")]
        leading: f64,
        #[serde(rename = "c")]
        last_constant: f64,
    },
    /// The explicit potential with zero-energy solution `ψ_{p,α}`.
    Counterexample { p: u32, alpha: f64 },
    /// `V = c`, bounded.
    Bounded { c: f64 },
    /// `V = V_base - f(t)/t`.
    BoundedPerturbation { base: Box<PotentialFamily>, f: IntegrableProfile },
    /// Radial reduction on a disk: `V(t) + (n-1)(n-3) / (4 (R - t)^2)`.
    RadialReduced { base: Box<PotentialFamily>, n: u32, radius: f64 },
}

impl PotentialFamily {
    pub fn power(c: f64) -> Self {
        PotentialFamily::PowerCritical { c }
    }

    pub fn log_hierarchy(p: u32, c: f64) -> Self {
        PotentialFamily::LogHierarchy { p, leading: 0.75, last_constant: c }
    }

    pub fn counterexample(p: u32, alpha: f64) -> Self {
        PotentialFamily::Counterexample { p, alpha }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialFamily::LogHierarchy { p, .. } if !(2..=iterlog::MAX_LEVEL + 1).contains(p) => {
                Err(ConfineError::pre(format!("log hierarchy needs 2 <= p <= 5, got {p}")))
            }
            PotentialFamily::Counterexample { p, .. } if !(1..=iterlog::MAX_LEVEL).contains(p) => {
                Err(ConfineError::pre(format!("counterexample needs 1 <= p <= 4, got {p}")))
            }
            PotentialFamily::BoundedPerturbation { base, f } => {
                f.validate()?;
                base.validate()
            }
            PotentialFamily::RadialReduced { base, n, radius } => {
                if *n == 0 || !(*radius > 0.0) {
                    return Err(ConfineError::pre("radial reduction needs n >= 1 and R > 0"));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    /// Smallest `s` at which the family is defined.
    pub fn min_s(&self) -> Result<f64> {
        Ok(match self {
            PotentialFamily::PowerCritical { .. } | PotentialFamily::Bounded { .. } => 0.0,
            PotentialFamily::LogHierarchy { p, .. } => iterlog::min_s(p.saturating_sub(1))?,
            PotentialFamily::Counterexample { p, .. } => iterlog::min_s(*p)?,
            PotentialFamily::BoundedPerturbation { base, .. } => base.min_s()?,
            PotentialFamily::RadialReduced { base, radius, .. } => base.min_s()?.max(-radius.ln()),
        })
    }

    /// `w(s) = t^2 V(t)`.
    pub fn coefficient(&self, x: LogCoordinate) -> Result<f64> {
        let s = x.s();
        match self {
            PotentialFamily::PowerCritical { c } => Ok(*c),
            PotentialFamily::LogHierarchy { p, leading, last_constant } => {
                let p = *p;
                let head = if p >= 3 { script_l(p - 1, x)? } else { 0.0 };
                Ok(leading - head - last_constant * prod_inv(p - 1, x)?)
            }
            PotentialFamily::Counterexample { p, alpha } => counterexample_potential(*p, *alpha, x),
            PotentialFamily::Bounded { c } => Ok(c * (-2.0 * s).exp()),
            PotentialFamily::BoundedPerturbation { base, f } => Ok(base.coefficient(x)? - f.t_f(s)),
            PotentialFamily::RadialReduced { base, n, radius } => {
                let t = (-s).exp();
                let n = *n as f64;
                let r = radius - t;
                if !(r > 0.0) {
                    return Err(ConfineError::Domain { level: 0, s, min_s: -radius.ln() });
                }
                Ok(base.coefficient(x)? + t * t * (n - 1.0) * (n - 3.0) / (4.0 * r * r))
            }
        }
    }

    /// `V(t)` for a materializable distance.
    pub fn potential(&self, t: f64) -> Result<f64> {
        let x = LogCoordinate::from_t(t)?;
        Ok(self.coefficient(x)? / (t * t))
    }
}

/// `3/4 - sum_{j=2}^{p} prod_inv(j-1)`.
pub fn critical_coeff(p: u32, x: LogCoordinate) -> Result<f64> {
    Ok(0.75 - script_l(p, x)?)
}

/// `3/4 - sum_{j=2}^{p-1} prod_inv(j-1) - c prod_inv(p-1)`.
pub fn optimality_coeff(p: u32, c: f64, x: LogCoordinate) -> Result<f64> {
    if p < 2 {
        return Err(ConfineError::pre("optimality family needs p >= 2"));
    }
    Ok(0.75 - script_l(p - 1, x)? - c * prod_inv(p - 1, x)?)
}

fn check_counterexample_domain(p: u32, x: LogCoordinate) -> Result<()> {
    if p == 0 {
        return Err(ConfineError::pre("counterexample needs p >= 1"));
    }
    iterlog::iterlog(p, x).map(|_| ())
}

/// `ln ψ_{p,α}` where `ψ = t^{-1/2} (L_1...L_{p-1})^{-1/2} L_p^α`.
pub fn counterexample_psi_log(p: u32, alpha: f64, x: LogCoordinate) -> Result<f64> {
    check_counterexample_domain(p, x)?;
    let mut total = 0.5 * x.s();
    for j in 1..p {
        total -= 0.5 * iterlog::iterlog(j, x)?.ln();
    }
    Ok(total + alpha * iterlog::iterlog(p, x)?.ln())
}

/// `P_j = prod_inv(j)` and running sums `S_j = P_1 + ... + P_j` for `j = 1..=p`.
fn prod_table(p: u32, x: LogCoordinate) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut prods = Vec::with_capacity(p as usize);
    let mut sums = Vec::with_capacity(p as usize);
    let mut acc = 0.0;
    for j in 1..=p {
        let pj = prod_inv(j, x)?;
        acc += pj;
        prods.push(pj);
        sums.push(acc);
    }
    Ok((prods, sums))
}

/// `d ln ψ_{p,α} / ds`.
pub fn counterexample_log_slope(p: u32, alpha: f64, x: LogCoordinate) -> Result<f64> {
    check_counterexample_domain(p, x)?;
    let (prods, _) = prod_table(p, x)?;
    let head: f64 = prods[..(p - 1) as usize].iter().sum();
    Ok(0.5 - 0.5 * head + alpha * prods[(p - 1) as usize])
}

/// `t^2 V_{p,α}` from the exact second derivative of `ln ψ` in `s`:
/// `w = ℓ'' + ℓ'(ℓ' + 1)` because `ψ_tt = e^{2s}(ψ_ss + ψ_s)`.
pub fn counterexample_potential(p: u32, alpha: f64, x: LogCoordinate) -> Result<f64> {
    check_counterexample_domain(p, x)?;
    let (prods, sums) = prod_table(p, x)?;
    let last = (p - 1) as usize;
    let head: f64 = prods[..last].iter().sum();
    let slope = 0.5 - 0.5 * head + alpha * prods[last];
    let head_curv: f64 = prods[..last].iter().zip(&sums[..last]).map(|(pj, sj)| pj * sj).sum();
    let curvature = 0.5 * head_curv - alpha * prods[last] * sums[last];
    Ok(curvature + slope * (slope + 1.0))
}

/// The displayed expansion of `t^2 V_{p,α}`: leading terms plus the listed
/// lower-order corrections, transcribed term by term.
pub fn counterexample_potential_expansion(p: u32, alpha: f64, x: LogCoordinate) -> Result<f64> {
    check_counterexample_domain(p, x)?;
    let (prods, _) = prod_table(p, x)?;
    let last = (p - 1) as usize;
    let head: f64 = prods[..last].iter().sum();
    let pp = prods[last];
    let mut w = 0.75 - head + 2.0 * alpha * pp;
    w += 0.25 * head * head + alpha * alpha * pp * pp - alpha * head * pp;
    let mut double = 0.0;
    for j in 0..last {
        for k in 0..=j {
            double += prods[j] * prods[k];
        }
    }
    w += 0.5 * double;
    w -= alpha * pp * prods.iter().sum::<f64>();
    Ok(w)
}

/// Outcome of the reduction-of-order construction.
#[derive(Debug, Clone)]
pub struct SecondSolution {
    pub psi: SolutionSample,
    pub phi: SolutionSample,
    /// Relative contribution of the extrapolated tail beyond the grid to
    /// `∫_0^t ψ^{-2}` at the shallowest node.
    pub tail_fraction: f64,
    /// Set when the tail contribution exceeds `1e-8` relative.
    pub tail_warning: bool,
}

/// `φ_{p,α} = ψ ∫_0^t ψ^{-2}` sampled on `grid` by cumulative quadrature of
/// `exp(-2 ln ψ)`, accumulated from the deep end in log space.
pub fn second_solution(p: u32, alpha: f64, grid: &QuadratureGrid) -> Result<SecondSolution> {
    let min = iterlog::min_s(p)?;
    if grid.s()[0] < min * (1.0 - 1e-12) {
        return Err(ConfineError::Domain { level: p, s: grid.s()[0], min_s: min });
    }
    let psi = SolutionSample::from_log_fn(
        grid,
        0.0,
        |s| counterexample_psi_log(p, alpha, LogCoordinate::new(s).unwrap()).unwrap(),
        |s| counterexample_log_slope(p, alpha, LogCoordinate::new(s).unwrap()).unwrap(),
    );
    let (phi, tail_fraction) = reduction_of_order(&psi)?;
    Ok(SecondSolution { psi, phi, tail_fraction, tail_warning: tail_fraction > 1e-8 })
}

/// `φ = ψ ∫_0^t ψ^{-2} dy` for a positive-near-the-end sample `ψ`.
/// Returns `φ` and the relative weight of the extrapolated tail.
pub fn reduction_of_order(psi: &SolutionSample) -> Result<(SolutionSample, f64)> {
    let s = psi.grid().s();
    let n = s.len();
    // integrand of ∫ ψ^{-2} dt in s: exp(-2 ln|ψ| - s)
    let ell: Vec<f64> = (0..n).map(|i| -2.0 * psi.ln_abs(i) - s[i]).collect();
    let slope_end = (ell[n - 1] - ell[n - 2]) / (s[n - 1] - s[n - 2]);
    if !(slope_end < 0.0) {
        return Err(ConfineError::pre("ψ^{-2} is not decaying at the deep end; no recessive solution"));
    }
    let mut log_tail = vec![0.0; n];
    log_tail[n - 1] = ell[n - 1] - (-slope_end).ln();
    let tail_only = log_tail[n - 1];
    for i in (0..n - 1).rev() {
        let (a, b) = (ell[i], ell[i + 1]);
        let h = s[i + 1] - s[i];
        // exact for log-linear integrands
        let d = b - a;
        let seg = if d.abs() < 1e-8 {
            a + h.ln() + (0.5 * d).ln_1p()
        } else if d < 0.0 {
            a + h.ln() + (-d.exp_m1() / -d).ln()
        } else {
            b + h.ln() + ((-(-d).exp_m1()) / d).ln()
        };
        log_tail[i] = log_add(log_tail[i + 1], seg);
    }
    let tail_fraction = (tail_only - log_tail[0]).exp();
    // φ = ψ T, dφ/ds = ψ_s T + ψ dT/ds with dT/ds = -ψ^{-2} e^{-s}
    let mut log_scale = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut du = Vec::with_capacity(n);
    for i in 0..n {
        let ln_phi = psi.ln_abs(i) + log_tail[i];
        let sign = psi.sign(i);
        // dφ/ds / φ = ψ_s/ψ - exp(ell - log_tail)
        let ratio = psi.log_slope(i) - (ell[i] - log_tail[i]).exp();
        log_scale.push(ln_phi);
        u.push(sign);
        du.push(sign * ratio);
    }
    let phi = SolutionSample::from_parts(psi.grid().clone(), psi.energy, log_scale, u, du, 0.0);
    Ok((phi, tail_fraction))
}

/// Relative deviation `|u/ψ - 1|` at each node of `grid` between the
/// closed-form `ψ_{p,α}` and a numerical solution of the closed-form
/// potential started from `ψ`'s data at the first node.
pub fn counterexample_residual(p: u32, alpha: f64, grid: &QuadratureGrid, ctl: &StepControl) -> Result<Vec<f64>> {
    let v = PotentialFamily::counterexample(p, alpha);
    let s = grid.s();
    let anchor = LogCoordinate::new(s[0])?;
    let slope = counterexample_log_slope(p, alpha, anchor)?;
    let ic = InitialCondition { anchor, u: 1.0, du_dt: -s[0].exp() * slope };
    let u = integrate_with(&v, 0.0, grid, ic, ctl)?;
    let base = counterexample_psi_log(p, alpha, anchor)?;
    let mut out = Vec::with_capacity(s.len());
    for (i, &si) in s.iter().enumerate() {
        let exact = counterexample_psi_log(p, alpha, LogCoordinate::new(si)?)? - base;
        out.push(if u.sign(i) > 0.0 { (u.ln_abs(i) - exact).exp_m1().abs() } else { f64::INFINITY });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sturm::{wronskian, Endpoint};
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn lc(s: f64) -> LogCoordinate {
        LogCoordinate::new(s).unwrap()
    }

    #[test]
    fn critical_and_optimality_examples() {
        assert_eq!(critical_coeff(1, lc(3.0)).unwrap(), 0.75);
        assert_relative_eq!(critical_coeff(2, lc(4.0)).unwrap(), 0.5);
        let ee = E.exp();
        let expect = 0.75 - 1.0 / ee - 1.0 / (ee * E);
        assert_relative_eq!(critical_coeff(3, lc(ee)).unwrap(), expect, epsilon = 1e-15);
        assert_relative_eq!(expect, 0.659732, epsilon = 1e-5);
        assert_relative_eq!(optimality_coeff(2, 1.0, lc(4.0)).unwrap(), 0.5);
        assert_relative_eq!(optimality_coeff(2, 1.5, lc(10.0)).unwrap(), 0.6, epsilon = 1e-15);
        assert_eq!(optimality_coeff(2, 0.0, lc(7.0)).unwrap(), 0.75);
    }

    #[test]
    fn log_hierarchy_family_matches_optimality_coeff() {
        for p in 2..=4 {
            let fam = PotentialFamily::log_hierarchy(p, 1.3);
            let x = lc(5.0e6);
            assert_relative_eq!(fam.coefficient(x).unwrap(), optimality_coeff(p, 1.3, x).unwrap(), epsilon = 1e-15);
        }
        let fam = PotentialFamily::log_hierarchy(3, 1.0);
        assert_relative_eq!(fam.coefficient(lc(50.0)).unwrap(), critical_coeff(3, lc(50.0)).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn psi_log_examples() {
        assert_relative_eq!(counterexample_psi_log(1, 0.0, lc(10.0)).unwrap(), 5.0);
        assert_relative_eq!(counterexample_psi_log(1, 1.0, lc(10.0)).unwrap(), 7.302585, epsilon = 1e-6);
        let s = E * E;
        let expect = s / 2.0 - 1.0 - 0.5 * 2f64.ln();
        assert_relative_eq!(counterexample_psi_log(2, -0.5, lc(s)).unwrap(), expect, epsilon = 1e-14);
        assert_relative_eq!(expect, 2.34798, epsilon = 1e-4);
        assert!(counterexample_psi_log(2, -0.5, lc(2.0)).is_err());
    }

    #[test]
    fn counterexample_potential_leading_terms() {
        assert_relative_eq!(counterexample_potential(1, 0.0, lc(7.0)).unwrap(), 0.75, epsilon = 1e-15);
        // p = 1: w = 3/4 + 2α/s + O(1/s^2)
        for s in [20.0, 80.0, 320.0] {
            let w = counterexample_potential(1, 1.0, lc(s)).unwrap();
            assert!((w - (0.75 + 2.0 / s)).abs() <= 3.0 / (s * s));
        }
    }

    #[test]
    fn closed_form_matches_displayed_expansion() {
        for p in 1..=3 {
            for alpha in [-0.6, -0.4, 0.0, 1.0] {
                let min = iterlog::min_s(p).unwrap();
                for s in [min + 1.0, 40.0_f64.max(min + 3.0), 1e4] {
                    let a = counterexample_potential(p, alpha, lc(s)).unwrap();
                    let b = counterexample_potential_expansion(p, alpha, lc(s)).unwrap();
                    assert_relative_eq!(a, b, max_relative = 1e-13);
                }
            }
        }
    }

    #[test]
    fn finite_difference_residual() {
        // ψ'' = V ψ on an s-stencil, p = 2, α = -0.6, s = 100
        let (p, alpha, s) = (2, -0.6, 100.0);
        let h = 1e-3;
        let psi = |s: f64| counterexample_psi_log(p, alpha, lc(s)).unwrap();
        let l0 = psi(s);
        let rp = (psi(s + h) - l0).exp();
        let rm = (psi(s - h) - l0).exp();
        // ψ_ss + ψ_s over ψ
        let w_fd = (rp - 2.0 + rm) / (h * h) + (rp - rm) / (2.0 * h);
        let w = counterexample_potential(p, alpha, lc(s)).unwrap();
        assert_relative_eq!(w_fd, w, max_relative = 1e-5);
    }

    #[test]
    fn second_solution_power_case() {
        // p = 1, α = 0: φ = t^{3/2} / 2
        let grid = QuadratureGrid::uniform(Endpoint::Left, 1.0, 61.0, 6001).unwrap();
        let sol = second_solution(1, 0.0, &grid).unwrap();
        let i = grid.s().iter().position(|s| (*s - 2.0).abs() < 1e-9).unwrap();
        assert_relative_eq!(sol.phi.value(i), (-3.0f64).exp() / 2.0, max_relative = 1e-8);
        assert_relative_eq!(sol.phi.value(i), 0.024894, epsilon = 1e-6);
        let w = wronskian(&sol.psi, &sol.phi).unwrap();
        assert_relative_eq!(w.value, 1.0, max_relative = 1e-12);
        assert!(w.drift <= 1e-6);
        assert!(!sol.tail_warning);
    }

    #[test]
    fn family_json_shape() {
        let fam = PotentialFamily::log_hierarchy(2, 1.5);
        let v = serde_json::to_value(&fam).unwrap();
        assert_eq!(v["variant"], "log_hierarchy");
        assert_eq!(v["p"], 2);
        assert_eq!(v["c"], 1.5);
        assert_eq!(v["leading"], 0.75);
        let back: PotentialFamily = serde_json::from_str(r#"{"variant":"log_hierarchy","p":2,"c":1.5}"#).unwrap();
        assert_eq!(back, fam);
        let pert: PotentialFamily =
            serde_json::from_str(r#"{"variant":"bounded_perturbation","base":{"variant":"power_critical","c":0.75},"f":"zero"}"#)
                .unwrap();
        assert!(matches!(pert, PotentialFamily::BoundedPerturbation { .. }));
    }

    #[test]
    fn profiles_validate() {
        assert!(IntegrableProfile::Zero.validate().is_ok());
        assert!(IntegrableProfile::one().validate().is_ok());
        assert!(IntegrableProfile::Power { value: 1.0, exponent: 0.5 }.validate().is_ok());
        assert!(IntegrableProfile::Power { value: 1.0, exponent: 1.0 }.validate().is_err());
        assert!(IntegrableProfile::Constant { value: -1.0 }.validate().is_err());
    }
}

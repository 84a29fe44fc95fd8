use std::fmt;
use std::sync::Arc;

use crate::error::{ConfineError, Result};
use crate::fit::integrate_gl;
use crate::iterlog::{self, script_l, LogCoordinate};

use super::IntegrableProfile;

/// `F(s_h)` and `h F'(h)` for the unsmoothed profile, both as functions of
/// `s_h = ln(1/h)`.
type Profile = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// The smoothed distance `h(t)` at one point.
#[derive(Debug, Clone, Copy)]
pub struct Smoothing {
    /// `ln(1/h(t))`.
    pub s_h: f64,
    /// `dh/dt`, in `[0, 1]`.
    pub h_prime: f64,
}

/// `H(τ) = τ - τ^3 + τ^4/2` joins `h = t` at `t = d0/2` to the plateau
/// `h = 3 d0 / 4` at `t = d0` with matching first and second derivatives.
fn joint(tau: f64) -> (f64, f64) {
    let h = tau - tau.powi(3) + 0.5 * tau.powi(4);
    let dh = (1.0 - tau) * (1.0 - tau) * (1.0 + 2.0 * tau);
    (h, dh)
}

/// `h(t)`: equal to `t` below `d0/2`, constant `3 d0 / 4` above `d0`.
pub fn smoothing(x: LogCoordinate, d0: LogCoordinate) -> Smoothing {
    let s = x.s();
    let sd = d0.s();
    let log_r = sd - s;
    if log_r <= -std::f64::consts::LN_2 {
        return Smoothing { s_h: s, h_prime: 1.0 };
    }
    if log_r >= 0.0 {
        return Smoothing { s_h: sd - 0.75f64.ln(), h_prime: 0.0 };
    }
    let r = log_r.exp();
    let (hh, dh) = joint(2.0 * r - 1.0);
    let ratio = 0.5 + 0.5 * hh;
    Smoothing { s_h: sd - ratio.ln(), h_prime: dh }
}

/// A weight `G(t) = F(h(t))` for condition (Σ), evaluated in `s = ln(1/t)`.
#[derive(Clone)]
pub struct GFunction {
    pub label: String,
    d0: LogCoordinate,
    profile: Arc<Profile>,
}

impl fmt::Debug for GFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GFunction").field("label", &self.label).field("d0_s", &self.d0.s()).finish()
    }
}

impl GFunction {
    pub fn new(label: impl Into<String>, d0: LogCoordinate, profile: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        GFunction { label: label.into(), d0, profile: Arc::new(profile) }
    }

    /// The cutoff `d0` as a log coordinate.
    pub fn d0(&self) -> LogCoordinate {
        self.d0
    }

    /// `d0` in domain units (0 if it underflows).
    pub fn d0_value(&self) -> f64 {
        (-self.d0.s()).exp()
    }

    /// `G(t)`.
    pub fn value(&self, x: LogCoordinate) -> f64 {
        let sm = smoothing(x, self.d0);
        (self.profile)(sm.s_h).0
    }

    /// `t G'(t)`, between 0 and 1 when (Σ.1) holds.
    pub fn t_gprime(&self, x: LogCoordinate) -> f64 {
        let sm = smoothing(x, self.d0);
        if sm.h_prime == 0.0 {
            return 0.0;
        }
        let hf = (self.profile)(sm.s_h).1;
        // t/h = e^{s_h - s}
        (sm.s_h - x.s()).exp() * hf * sm.h_prime
    }

    /// `G'(t)`; overflows to infinity only for `t` below `e^{-709}`.
    pub fn gprime(&self, x: LogCoordinate) -> f64 {
        self.t_gprime(x) * x.s().exp()
    }

    /// `ln(t G'(t)) + G(t)`, the log of `|∇η| e^{η}` times `t`.
    pub fn log_brusentsev(&self, x: LogCoordinate) -> f64 {
        self.t_gprime(x).ln() + self.value(x)
    }
}

/// `G = ln h`.
pub fn g_log_t(d0: LogCoordinate) -> GFunction {
    GFunction::new("ln t", d0, |sh| (-sh, 1.0))
}

/// `G = ln h - c h`; needs `d0 <= 1/c` so that `G' >= 0`.
pub fn g_log_t_minus_linear(c: f64, d0: LogCoordinate) -> Result<GFunction> {
    if c < 0.0 || (c * (-d0.s()).exp() > 1.0) {
        return Err(ConfineError::pre(format!("ln t - c t needs 0 <= c <= 1/d0, got c = {c}")));
    }
    Ok(GFunction::new(format!("ln t - {c} t"), d0, move |sh| {
        let h = (-sh).exp();
        (-sh - c * h, 1.0 - c * h)
    }))
}

/// `G = ln h + m ln L_1(h)`; needs `d0 <= e^{-m}` so that `G' >= 0`.
pub fn g_log_plus_log_l1(m: f64, d0: LogCoordinate) -> Result<GFunction> {
    if d0.s() < m.max(1.0) {
        return Err(ConfineError::pre(format!("ln t + m ln L_1 needs d0 <= e^-max(m,1), got m = {m}")));
    }
    Ok(GFunction::new(format!("ln t + {m} ln L1"), d0, move |sh| (-sh + m * sh.ln(), 1.0 - m / sh)))
}

/// Options for the `G_p` construction.
#[derive(Debug, Clone)]
pub struct GBuildOptions {
    /// Points on which the `d0` inequality is verified.
    pub verify_points: usize,
    /// Required margin above `2/3`.
    pub margin: f64,
    /// Smallest admissible `d0`, as `s = ln(1/d0)`.
    pub floor_s: f64,
}

impl Default for GBuildOptions {
    fn default() -> Self {
        GBuildOptions { verify_points: 512, margin: 1e-6, floor_s: 700.0 }
    }
}

/// `𝓛_p^2 / 4` integrated in `σ` from `s_lo` to `s_hi`, through `σ = e^v`.
fn script_l_sq_integral(p: u32, s_lo: f64, s_hi: f64) -> f64 {
    if p < 2 || s_hi <= s_lo {
        return 0.0;
    }
    let f = |v: f64| {
        let sigma = v.exp();
        let l = script_l(p, LogCoordinate::new(sigma).unwrap()).unwrap();
        0.25 * l * l * sigma
    };
    let (a, b) = (s_lo.ln(), s_hi.ln());
    let panels = (((b - a) * 8.0).ceil() as usize).max(8);
    integrate_gl(f, a, b, panels, 8)
}

/// Left side of the `d0` inequality, `1 - 𝓛_p/2 - t f(t) - 𝓛_p^2/4`.
pub(crate) fn d0_condition(p: u32, f: &IntegrableProfile, s: f64) -> f64 {
    let l = if p >= 2 { script_l(p, LogCoordinate::new(s).unwrap()).unwrap() } else { 0.0 };
    1.0 - 0.5 * l - f.t_f(s) - 0.25 * l * l
}

fn verify_d0(p: u32, f: &IntegrableProfile, s0: f64, opts: &GBuildOptions) -> Option<(f64, f64)> {
    // log-spaced in t is uniform in s; cover a wide stretch with geometric spacing in s
    let n = opts.verify_points.max(2);
    let hi = (s0 * 1e4).max(s0 + 1e4);
    let ratio = (hi / s0).ln();
    let mut worst: Option<(f64, f64)> = None;
    for i in 0..n {
        let s = s0 * (ratio * i as f64 / (n - 1) as f64).exp();
        let v = d0_condition(p, f, s);
        if v < 2.0 / 3.0 + opts.margin && worst.is_none_or(|(_, w)| v < w) {
            worst = Some((s, v));
        }
    }
    worst
}

/// The weight `G_p(t) = ln h + ½ Σ_{j=2}^p L_j(h) + ∫_h f̃` with
/// `f̃ = f + 𝓛_p^2 / (4u)`, and the cutoff `d0` chosen as the largest value
/// not above `min(e_p^{-1}, d_Ω)` satisfying `1 - 𝓛_p/2 - t f̃ ≥ 2/3`.
pub fn g_hierarchy_build(p: u32, f: IntegrableProfile, d_omega: f64, opts: &GBuildOptions) -> Result<GFunction> {
    if p == 0 || p > iterlog::MAX_LEVEL {
        return Err(ConfineError::pre(format!("G_p needs 1 <= p <= {}, got {p}", iterlog::MAX_LEVEL)));
    }
    if !(d_omega > 0.0) {
        return Err(ConfineError::pre("d_omega must be positive"));
    }
    f.validate()?;
    // e_p^{-1} in log form: ln e_p = e_{p-1}
    let s_edge = iterlog::min_s(p)?;
    let mut s0 = s_edge.max(-d_omega.ln());
    if verify_d0(p, &f, s0, opts).is_some() {
        let mut fail = s0;
        let mut step = 1.0;
        let mut pass = None;
        while s0 < opts.floor_s {
            s0 = (s0 + step).min(opts.floor_s);
            if verify_d0(p, &f, s0, opts).is_none() {
                pass = Some(s0);
                break;
            }
            fail = s0;
            step *= 2.0;
        }
        let Some(mut ok) = pass else {
            let (s, v) = verify_d0(p, &f, opts.floor_s, opts).unwrap();
            return Err(ConfineError::Construction(format!(
                "1 - L_p/2 - t f~ = {v:.6} < 2/3 at t = exp(-{s:.4}); no admissible d0 above exp(-{})",
                opts.floor_s
            )));
        };
        while ok - fail > 1e-9 * ok.max(1.0) {
            let mid = 0.5 * (ok + fail);
            if verify_d0(p, &f, mid, opts).is_none() {
                ok = mid;
            } else {
                fail = mid;
            }
        }
        s0 = ok;
    }
    let d0 = LogCoordinate::new(s0)?;
    let s_top = s_edge;
    let f_top = f.integral_below(s_top);
    let label = format!("G_{p}");
    Ok(GFunction::new(label, d0, move |sh| {
        let x = LogCoordinate::new(sh).unwrap();
        let mut g = -sh;
        for j in 2..=p {
            g += 0.5 * iterlog::iterlog(j, x).unwrap();
        }
        // ∫_h^{e_p^{-1}} f
        g += f_top - f.integral_below(sh);
        g += script_l_sq_integral(p, s_top, sh);
        let l = if p >= 2 { script_l(p, x).unwrap() } else { 0.0 };
        let hf = 1.0 - 0.5 * l - f.t_f(sh) - 0.25 * l * l;
        (g, hf)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn lc(s: f64) -> LogCoordinate {
        LogCoordinate::new(s).unwrap()
    }

    #[test]
    fn smoothing_plateaus_and_slope_bounds() {
        let d0 = lc(3.0);
        for i in 0..2000 {
            let s = 1.5 + 4.0 * i as f64 / 1999.0;
            let x = lc(s);
            let sm = smoothing(x, d0);
            assert!((0.0..=1.0).contains(&sm.h_prime));
            // t h' <= h
            assert!(sm.h_prime * (sm.s_h - s).exp() <= 1.0 + 1e-12);
        }
        assert_eq!(smoothing(lc(3.0 + 0.7), d0).s_h, 3.7);
        assert_relative_eq!(smoothing(lc(2.9), d0).s_h, 3.0 - 0.75f64.ln());
    }

    #[test]
    fn smoothing_is_c1_at_joints() {
        let d0 = lc(2.0);
        let t0 = (-2.0f64).exp();
        for r in [0.5, 1.0] {
            let t = r * t0;
            let h = |t: f64| (-smoothing(LogCoordinate::from_t(t).unwrap(), d0).s_h).exp();
            let eps = 1e-7 * t0;
            let left = (h(t) - h(t - eps)) / eps;
            let right = (h(t + eps) - h(t)) / eps;
            assert!((left - right).abs() < 1e-5, "r = {r}: {left} vs {right}");
        }
    }

    #[test]
    fn g2_cutoff_is_e_minus_e() {
        let g = g_hierarchy_build(2, IntegrableProfile::Zero, 1.0, &GBuildOptions::default()).unwrap();
        assert_relative_eq!(g.d0().s(), E, max_relative = 1e-15);
        assert_relative_eq!(g.d0_value(), 0.065988, epsilon = 1e-6);
    }

    #[test]
    fn g1_is_log_below_half_cutoff() {
        let g = g_hierarchy_build(1, IntegrableProfile::Zero, 1.0, &GBuildOptions::default()).unwrap();
        let s = g.d0().s() + 2.0;
        assert_relative_eq!(g.value(lc(s)), -s, max_relative = 1e-14);
        assert_relative_eq!(g.gprime(lc(s)), s.exp(), max_relative = 1e-14);
    }

    #[test]
    fn gprime_matches_finite_difference() {
        let opts = GBuildOptions::default();
        for p in 1..=3 {
            for f in [IntegrableProfile::Zero, IntegrableProfile::one()] {
                let g = g_hierarchy_build(p, f, 1.0, &opts).unwrap();
                let sd = g.d0().s();
                for k in 0..40 {
                    let s = sd - 0.6 + 0.05 * k as f64;
                    // central difference in s: dG/ds = -t G'(t)
                    let h = 1e-5;
                    let fd = -(g.value(lc(s + h)) - g.value(lc(s - h))) / (2.0 * h);
                    let exact = g.t_gprime(lc(s));
                    assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-3), "p={p} s={s}: {fd} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn impossible_cutoff_reports_inequality() {
        // a huge constant profile pushes d0 below any floor
        let opts = GBuildOptions { floor_s: 5.0, ..GBuildOptions::default() };
        let err = g_hierarchy_build(1, IntegrableProfile::Constant { value: 1e6 }, 1.0, &opts).unwrap_err();
        assert!(matches!(err, ConfineError::Construction(_)));
    }
}

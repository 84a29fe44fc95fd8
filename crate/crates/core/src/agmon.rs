//! Eigenpairs of truncated Dirichlet problems on `(0, 1)`, the localized
//! quadratic-form identity, and the annulus ratio behind the Agmon-type
//! decay estimate.

use serde::Serialize;

use crate::error::{ConfineError, Result};
use crate::fit::{gauss_legendre, least_squares, simpson_weights};
use crate::iterlog::LogCoordinate;
use crate::potentials::{counterexample_log_slope, counterexample_psi_log, GFunction, PotentialFamily};
use crate::sturm::ode::{advance, ScaledState, StepControl};
use crate::sturm::{integrate, Endpoint, InitialCondition, QuadratureGrid, SolutionSample};

/// `V(x) = V_left(x) + V_right(1 - x)` on `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct IntervalPotential {
    pub left: PotentialFamily,
    #[serde(default)]
    pub right: Option<PotentialFamily>,
}

impl IntervalPotential {
    pub fn one_sided(left: PotentialFamily) -> Self {
        IntervalPotential { left, right: None }
    }

    pub fn symmetric(v: PotentialFamily) -> Self {
        IntervalPotential { left: v.clone(), right: Some(v) }
    }

    pub fn free() -> Self {
        IntervalPotential::one_sided(PotentialFamily::power(0.0))
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        let mut v = side_value(&self.left, x)?;
        if let Some(r) = &self.right {
            v += side_value(r, 1.0 - x)?;
        }
        Ok(v)
    }
}

fn side_value(f: &PotentialFamily, t: f64) -> Result<f64> {
    match f {
        // defined for every t > 0, not only inside the unit boundary layer
        PotentialFamily::PowerCritical { c } => Ok(if *c == 0.0 { 0.0 } else { c / (t * t) }),
        _ => f.potential(t),
    }
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Recorded nodes per half of the interval, geometric toward each end.
    pub nodes_per_side: usize,
    pub step: StepControl,
    /// Relative bisection tolerance on the energy.
    pub energy_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { nodes_per_side: 400, step: StepControl { h_max: 0.01, ..StepControl::default() }, energy_tol: 1e-10 }
    }
}

/// A Dirichlet eigenpair on `[ρ, 1 - ρ']`, normalized in `L^2` and
/// positive near the left end.
#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub energy: f64,
    pub index: usize,
    pub node_count: usize,
    pub rho: f64,
    pub rho_prime: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
}

fn side_nodes(rho: f64, n: usize) -> Vec<f64> {
    // distances from the end, geometric from max(rho, 1e-9) to 1/2
    let start = rho.max(1e-9);
    let ratio = (0.5 / start).ln();
    let mut t: Vec<f64> = (0..=n).map(|k| start * (ratio * k as f64 / n as f64).exp()).collect();
    if rho == 0.0 {
        t.insert(0, 0.0);
    }
    t
}

fn x_nodes(rho: f64, rho_prime: f64, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = side_nodes(rho, n);
    let right: Vec<f64> = side_nodes(rho_prime, n).into_iter().rev().map(|t| 1.0 - t).collect();
    x.pop();
    x.extend(right);
    x
}

struct Shot {
    sign_changes: usize,
    states: Vec<ScaledState>,
}

fn shoot(v: &IntervalPotential, energy: f64, x: &[f64], ctl: &StepControl, record: bool) -> Result<Shot> {
    let f = |xx: f64, y: &[f64; 2]| -> [f64; 2] {
        let q = v.value(xx).unwrap_or(f64::NAN) - energy;
        [y[1], q * y[0]]
    };
    let mut st = [ScaledState::new([0.0, 1.0])];
    let mut states = Vec::new();
    if record {
        states.push(st[0]);
    }
    let mut h = ctl.h_init.min(0.1 * (x[1] - x[0]));
    let mut prev_sign = 1.0;
    let mut changes = 0;
    for w in x.windows(2) {
        advance(&f, w[0], w[1], &mut st, &mut h, ctl, |_, s| {
            let m = s[0].mantissa[0];
            if m != 0.0 && m.signum() != prev_sign {
                changes += 1;
                prev_sign = m.signum();
            }
        })?;
        if record {
            states.push(st[0]);
        }
    }
    Ok(Shot { sign_changes: changes, states })
}

/// The `index`-th Dirichlet eigenpair of `-u'' + V u = E u` on
/// `[ρ, 1 - ρ']`, by shooting from the left end and bisecting on the number
/// of sign changes.
pub fn ground_state(v: &IntervalPotential, rho: f64, rho_prime: f64, index: usize, opts: &EigenOptions) -> Result<EigenPair> {
    if !(rho >= 0.0 && rho_prime >= 0.0 && rho < 1.0 - rho_prime) {
        return Err(ConfineError::pre("truncation needs 0 <= rho < 1 - rho' <= 1"));
    }
    let x = x_nodes(rho, rho_prime, opts.nodes_per_side);
    let mut vmin = f64::INFINITY;
    for xi in &x {
        let vi = v.value(*xi)?;
        if !vi.is_finite() {
            return Err(ConfineError::pre(format!("potential is not finite at x = {xi}; truncate further")));
        }
        vmin = vmin.min(vi);
    }
    let count = |e: f64| -> Result<usize> { Ok(shoot(v, e, &x, &opts.step, false)?.sign_changes) };
    let mut lo = vmin - 1.0;
    if count(lo)? > index {
        return Err(ConfineError::Bracket { lo, hi: lo });
    }
    let mut hi = lo + 10.0;
    while count(hi)? <= index {
        hi = lo + 2.0 * (hi - lo);
        if hi - lo > 1e10 {
            return Err(ConfineError::Bracket { lo, hi });
        }
    }
    while hi - lo > opts.energy_tol * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if count(mid)? <= index {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let energy = 0.5 * (lo + hi);
    let shot = shoot(v, energy, &x, &opts.step, true)?;
    let mut u: Vec<f64> = Vec::with_capacity(x.len());
    let mut du: Vec<f64> = Vec::with_capacity(x.len());
    let top = shot.states.iter().map(|s| s.log_scale).fold(f64::NEG_INFINITY, f64::max);
    for s in &shot.states {
        let scale = (s.log_scale - top).exp();
        u.push(s.mantissa[0] * scale);
        du.push(s.mantissa[1] * scale);
    }
    let n = u.len();
    u[n - 1] = 0.0;
    let w = simpson_weights(&x);
    let norm: f64 = u.iter().zip(&w).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
    for (a, b) in u.iter_mut().zip(du.iter_mut()) {
        *a /= norm;
        *b /= norm;
    }
    let peak = u.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let significant: Vec<f64> = u[1..n - 1].iter().cloned().filter(|a| a.abs() > 1e-6 * peak).collect();
    let node_count = significant.windows(2).filter(|p| p[0].signum() != p[1].signum()).count();
    Ok(EigenPair { energy, index, node_count, rho, rho_prime, x, u, du })
}

impl EigenPair {
    /// Cubic Hermite interpolation of `u` at `x`.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|v| *v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let t = ((x - x0) / h).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) =
            (2.0 * t.powi(3) - 3.0 * t * t + 1.0, t.powi(3) - 2.0 * t * t + t, -2.0 * t.powi(3) + 3.0 * t * t, t.powi(3) - t * t);
        h00 * self.u[i] + h10 * h * self.du[i] + h01 * self.u[i + 1] + h11 * h * self.du[i + 1]
    }

    /// `∫_a^b weight(x) u(x)^2 dx`, Gauss–Legendre on each grid cell.
    pub fn integrate_u2(&self, a: f64, b: f64, weight: impl Fn(f64) -> f64) -> f64 {
        let (gx, gw) = gauss_legendre(6);
        let lo = a.max(self.x[0]);
        let hi = b.min(self.x[self.x.len() - 1]);
        if hi <= lo {
            return 0.0;
        }
        let mut cuts = vec![lo];
        cuts.extend(self.x.iter().cloned().filter(|v| *v > lo && *v < hi));
        cuts.push(hi);
        let mut total = 0.0;
        for c in cuts.windows(2) {
            let (m, r) = (0.5 * (c[0] + c[1]), 0.5 * (c[1] - c[0]));
            for (xi, wi) in gx.iter().zip(&gw) {
                let xx = m + r * xi;
                let uu = self.interpolate(xx);
                total += wi * r * weight(xx) * uu * uu;
            }
        }
        total
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub rms: f64,
    pub samples: usize,
}

/// Local exponent `σ` of `|u| ~ t^σ` near an endpoint, fitted as
/// `ln|u| ≈ a + σ ln t + b t^2` on `t ∈ [max(20ρ, 1e-6), 0.1]`.
pub fn decay_fit(pair: &EigenPair, endpoint: Endpoint) -> Result<DecayFit> {
    let rho = match endpoint {
        Endpoint::Left => pair.rho,
        Endpoint::Right => pair.rho_prime,
    };
    let lo = (20.0 * rho).max(1e-6);
    let hi = 0.1;
    let mut lt = Vec::new();
    let mut t2 = Vec::new();
    let mut y = Vec::new();
    for (x, u) in pair.x.iter().zip(&pair.u) {
        let t = match endpoint {
            Endpoint::Left => *x,
            Endpoint::Right => 1.0 - x,
        };
        if t >= lo && t <= hi && *u != 0.0 {
            lt.push(t.ln());
            t2.push(t * t);
            y.push(u.abs().ln());
        }
    }
    if y.len() < 32 {
        return Err(ConfineError::pre(format!("decay fit needs 32 samples in the boundary window, got {}", y.len())));
    }
    let fit = least_squares(&[vec![1.0; y.len()], lt, t2], &y)?;
    Ok(DecayFit { exponent: fit.coefficients[1], rms: fit.rms, samples: y.len() })
}

/// A `C^2` bump in `t`: 1 on the inner half of `[center - width, center + width]`,
/// quintic smoothstep ramps on the outer quarters, 0 outside.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct Bump {
    pub center: f64,
    pub half_width: f64,
}

fn smoothstep(u: f64) -> (f64, f64) {
    let u = u.clamp(0.0, 1.0);
    (u * u * u * (10.0 - 15.0 * u + 6.0 * u * u), 30.0 * u * u * (1.0 - u) * (1.0 - u))
}

impl Bump {
    /// Bump with support `[a, b]`.
    pub fn on(a: f64, b: f64) -> Self {
        Bump { center: 0.5 * (a + b), half_width: 0.5 * (b - a) }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    /// `(f(t), f'(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let w = self.half_width;
        let d = (t - self.center).abs();
        let ramp = 0.5 * w;
        if d >= w {
            return (0.0, 0.0);
        }
        if d <= ramp {
            return (1.0, 0.0);
        }
        let (v, dv) = smoothstep((w - d) / ramp);
        let sign = if t > self.center { -1.0 } else { 1.0 };
        (v, sign * dv / ramp)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FormIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_error: f64,
}

/// Compares `∫|(fψ)'|^2 + ∫(V - E)(fψ)^2` with `∫ f'^2 ψ^2` for a solution
/// `ψ` sampled in `s`. Derivatives in `t` are taken through `d/dt = -e^s d/ds`.
pub fn form_identity_check(v: &PotentialFamily, energy: f64, psi: &SolutionSample, f: &Bump) -> Result<FormIdentity> {
    let grid = psi.grid();
    let s = grid.s();
    let (a, b) = f.support();
    if f.half_width == 0.0 {
        return Ok(FormIdentity { lhs: 0.0, rhs: 0.0, rel_error: 0.0 });
    }
    if !(a > 0.0) || -(a.ln()) >= s[s.len() - 1] || -(b.ln()) <= s[0] {
        return Err(ConfineError::pre("bump support must lie strictly inside the grid"));
    }
    let n = grid.len();
    let mut lhs_v = Vec::with_capacity(n);
    let mut rhs_v = Vec::with_capacity(n);
    for i in 0..n {
        let t = (-s[i]).exp();
        let (fv, ft) = f.eval(t);
        if fv == 0.0 && ft == 0.0 {
            lhs_v.push(0.0);
            rhs_v.push(0.0);
            continue;
        }
        let p = psi.value(i);
        let pt = psi.du_dt(i);
        let w = v.coefficient(LogCoordinate::new(s[i])?)?;
        let d = ft * p + fv * pt;
        lhs_v.push(d * d + (w / (t * t) - energy) * fv * fv * p * p);
        rhs_v.push(ft * ft * p * p);
    }
    let lhs = grid.integrate(&lhs_v);
    let rhs = grid.integrate(&rhs_v);
    let floor = 1e-300;
    let rel_error = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(floor) };
    Ok(FormIdentity { lhs, rhs, rel_error })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub solution: String,
    pub support: (f64, f64),
    pub nodes: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_error: f64,
}

/// The standard (solution, bump) matrix: both power solutions of the
/// `3/4` potential, the closed-form `ψ_{p,α}` for `p ≤ 3`, `α ∈ {-0.6, -0.4}`,
/// and a numerically integrated solution of the `p = 2` hierarchy, each
/// against several bumps, on grids with `nodes` points uniform in `s`.
pub fn identity_matrix(nodes: usize) -> Result<Vec<IdentityRow>> {
    let mut rows = Vec::new();
    let mut push = |name: String, v: &PotentialFamily, psi: &SolutionSample, f: Bump| -> Result<()> {
        let r = form_identity_check(v, 0.0, psi, &f)?;
        rows.push(IdentityRow { solution: name, support: f.support(), nodes, lhs: r.lhs, rhs: r.rhs, rel_error: r.rel_error });
        Ok(())
    };
    let grid = QuadratureGrid::uniform(Endpoint::Left, 0.05, 30.0, nodes)?;
    let v = PotentialFamily::power(0.75);
    for (name, sigma) in [("t^-1/2", -0.5), ("t^3/2", 1.5)] {
        let psi = SolutionSample::from_log_fn(&grid, 0.0, |s| -sigma * s, |_| -sigma);
        for f in [Bump::on(0.1, 0.9), Bump::on(1e-3, 0.05), Bump::on(1e-9, 1e-2)] {
            push(name.to_string(), &v, &psi, f)?;
        }
    }
    for p in 1..=3u32 {
        for alpha in [-0.6, -0.4] {
            let v = PotentialFamily::counterexample(p, alpha);
            let lo = v.min_s()?;
            let grid = QuadratureGrid::uniform(Endpoint::Left, lo + 0.01, lo + 40.0, nodes)?;
            let psi = SolutionSample::from_log_fn(
                &grid,
                0.0,
                |s| counterexample_psi_log(p, alpha, LogCoordinate::new(s).unwrap()).unwrap(),
                |s| counterexample_log_slope(p, alpha, LogCoordinate::new(s).unwrap()).unwrap(),
            );
            for (a, b) in [(30.0, 1.0), (5.0, 2.0)] {
                push(format!("psi(p={p},alpha={alpha})"), &v, &psi, Bump::on((-(lo + a)).exp(), (-(lo + b)).exp()))?;
            }
        }
    }
    let v = PotentialFamily::log_hierarchy(2, 1.0);
    let lo = v.min_s()?;
    let grid = QuadratureGrid::uniform(Endpoint::Left, lo + 0.01, lo + 40.0, nodes)?;
    let ic = InitialCondition { anchor: LogCoordinate::new(lo + 1.0)?, u: 1.0, du_dt: 0.0 };
    let psi = integrate(&v, 0.0, &grid, ic)?;
    for (a, b) in [(30.0, 1.0), (5.0, 2.0)] {
        push("numerical(log_hierarchy p=2 c=1)".to_string(), &v, &psi, Bump::on((-(lo + a)).exp(), (-(lo + b)).exp()))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct AgmonRow {
    pub n: usize,
    pub rho_n: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgmonRatioReport {
    pub rows: Vec<AgmonRow>,
    pub sup_ratio: f64,
}

/// For `ρ_n = 2^{-n} ρ_0` and `g = G(d) - G(ρ_n)` with `d = min(x, 1-x)`:
/// `lhs = ∫_{d > 2ρ_n} e^{2g} u^2`, `rhs = ρ_n^{-1} ∫_{ρ_n < d < 2ρ_n} (ρ_n^{-1} + |G'(d)|) e^{2g} u^2`.
pub fn agmon_ratio(pair: &EigenPair, g: &GFunction, rho0: f64, n_max: usize) -> Result<AgmonRatioReport> {
    if !(rho0 > 0.0) || rho0 > 0.5 * g.d0_value() * (1.0 + 1e-12) {
        return Err(ConfineError::pre("rho0 must lie in (0, d0/2]"));
    }
    let deepest = rho0 * 0.5f64.powi(n_max as i32);
    if pair.rho.max(pair.rho_prime) > deepest {
        return Err(ConfineError::pre(format!(
            "eigenpair truncated at {} but the sequence reaches {deepest}",
            pair.rho.max(pair.rho_prime)
        )));
    }
    let gval = |d: f64| g.value(LogCoordinate::from_t(d).unwrap());
    let mut rows = Vec::new();
    for n in 0..=n_max {
        let rho_n = rho0 * 0.5f64.powi(n as i32);
        let g0 = gval(rho_n);
        let weight = |x: f64| {
            let d = x.min(1.0 - x);
            (2.0 * (gval(d) - g0)).exp()
        };
        let lhs = pair.integrate_u2(2.0 * rho_n, 1.0 - 2.0 * rho_n, weight);
        let ann = |x: f64| {
            let d = x.min(1.0 - x);
            let gp = g.gprime(LogCoordinate::from_t(d).unwrap()).abs();
            (1.0 / rho_n + gp) * weight(x) / rho_n
        };
        let rhs = pair.integrate_u2(rho_n, 2.0 * rho_n, ann) + pair.integrate_u2(1.0 - 2.0 * rho_n, 1.0 - rho_n, ann);
        if !(rhs > 0.0) {
            return Err(ConfineError::pre(format!("annulus integral vanishes at n = {n}; the ratio is degenerate")));
        }
        rows.push(AgmonRow { n, rho_n, lhs, rhs, ratio: lhs / rhs });
    }
    let sup_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(AgmonRatioReport { rows, sup_ratio })
}

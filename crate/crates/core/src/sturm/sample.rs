use crate::error::{ConfineError, Result};
use crate::iterlog::LogCoordinate;
use crate::potentials::PotentialFamily;

use super::grid::QuadratureGrid;
use super::ode::{advance, ScaledState, State, StepControl};

/// Initial data at an anchor distance, in the original variable `t`.
#[derive(Debug, Clone, Copy)]
pub struct InitialCondition {
    pub anchor: LogCoordinate,
    pub u: f64,
    pub du_dt: f64,
}

/// A solution of `-u'' + V u = E u` sampled on a grid. Values are kept as
/// `exp(log_scale[i]) * (u[i], du_ds[i])` so tails far beyond `f64` range
/// stay representable.
#[derive(Debug, Clone)]
pub struct SolutionSample {
    grid: QuadratureGrid,
    log_scale: Vec<f64>,
    u: Vec<f64>,
    du_ds: Vec<f64>,
    pub energy: f64,
    /// Largest deviation of the Wronskian with the companion solution,
    /// relative to the size of its two cross terms.
    pub wronskian_drift: f64,
}

impl SolutionSample {
    pub(crate) fn from_parts(
        grid: QuadratureGrid,
        energy: f64,
        log_scale: Vec<f64>,
        u: Vec<f64>,
        du_ds: Vec<f64>,
        wronskian_drift: f64,
    ) -> Self {
        SolutionSample { grid, log_scale, u, du_ds, energy, wronskian_drift }
    }

    /// Samples a positive closed-form solution from `ln u(s)` and its
    /// `s`-derivative.
    pub fn from_log_fn(
        grid: &QuadratureGrid,
        energy: f64,
        ln_u: impl Fn(f64) -> f64,
        slope: impl Fn(f64) -> f64,
    ) -> Self {
        let n = grid.len();
        let mut log_scale = Vec::with_capacity(n);
        let mut du = Vec::with_capacity(n);
        for &s in grid.s() {
            log_scale.push(ln_u(s));
            du.push(slope(s));
        }
        SolutionSample::from_parts(grid.clone(), energy, log_scale, vec![1.0; n], du, 0.0)
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `ln |u|` at node `i` (`-inf` at a zero).
    pub fn ln_abs(&self, i: usize) -> f64 {
        self.log_scale[i] + self.u[i].abs().ln()
    }

    pub fn sign(&self, i: usize) -> f64 {
        if self.u[i] < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// `u` at node `i`; may overflow to `±inf` deep in a growing tail.
    pub fn value(&self, i: usize) -> f64 {
        self.u[i] * self.log_scale[i].exp()
    }

    /// `(du/ds) / u` at node `i`.
    pub fn log_slope(&self, i: usize) -> f64 {
        self.du_ds[i] / self.u[i]
    }

    /// `du/dt = -e^s du/ds`.
    pub fn du_dt(&self, i: usize) -> f64 {
        -self.du_ds[i] * (self.log_scale[i] + self.grid.s()[i]).exp()
    }

    /// Mantissas and scale at node `i`.
    pub fn raw(&self, i: usize) -> (f64, f64, f64) {
        (self.u[i], self.du_ds[i], self.log_scale[i])
    }

    /// `ln ∫ u^2 dt` over the grid.
    pub fn log_l2_norm_sq(&self) -> f64 {
        let lf: Vec<f64> = (0..self.len()).map(|i| 2.0 * self.ln_abs(i)).collect();
        self.grid.integrate_log(&lf)
    }

    /// The sample restricted to nodes `from..`.
    pub fn tail(&self, from: usize) -> Result<SolutionSample> {
        let s = self.grid.s();
        let grid = QuadratureGrid::from_nodes(self.grid.endpoint, s[from..].to_vec())?;
        Ok(SolutionSample::from_parts(
            grid,
            self.energy,
            self.log_scale[from..].to_vec(),
            self.u[from..].to_vec(),
            self.du_ds[from..].to_vec(),
            self.wronskian_drift,
        ))
    }

    /// `ln |u|` at all nodes.
    pub fn ln_abs_all(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.ln_abs(i)).collect()
    }
}

/// `u_ss + u_s = (w(s) - E e^{-2s}) u`, first-order form in `(u, u_s)`.
fn rhs_for<'a>(v: &'a PotentialFamily, energy: f64) -> impl Fn(f64, &State) -> State + 'a {
    move |s: f64, y: &State| {
        let w = v.coefficient(LogCoordinate::new(s).unwrap()).unwrap_or(f64::NAN);
        let q = w - energy * (-2.0 * s).exp();
        [y[1], q * y[0] - y[1]]
    }
}

fn s_state(ic_u: f64, ic_du_dt: f64, s: f64) -> State {
    // u_s = -t u_t
    [ic_u, -(-s).exp() * ic_du_dt]
}

/// Integrate several solutions sharing one step sequence, recording them at
/// every grid node.
fn integrate_many(
    v: &PotentialFamily,
    energy: f64,
    grid: &QuadratureGrid,
    anchor: LogCoordinate,
    init: &[State],
    ctl: &StepControl,
) -> Result<Vec<Vec<ScaledState>>> {
    let s = grid.s();
    let sa = anchor.s();
    let n = s.len();
    if sa < s[0] - 1e-12 || sa > s[n - 1] + 1e-12 {
        return Err(ConfineError::pre(format!("anchor s = {sa} lies outside the grid [{}, {}]", s[0], s[n - 1])));
    }
    let min = v.min_s()?;
    if s[0] < min - 8.0 * f64::EPSILON * min.abs().max(1.0) {
        return Err(ConfineError::Domain { level: 0, s: s[0], min_s: min });
    }
    let f = rhs_for(v, energy);
    let start: Vec<ScaledState> = init.iter().map(|y| ScaledState::new(*y)).collect();
    let mut out = vec![start.clone(); n];
    let first_up = s.iter().position(|x| *x >= sa).unwrap_or(n);
    let check = |states: &[ScaledState], at: f64| -> Result<()> {
        if states.iter().any(|st| !(st.mantissa[0].is_finite() && st.mantissa[1].is_finite())) {
            return Err(ConfineError::Integration { s: at, reason: "non-finite state".into() });
        }
        Ok(())
    };
    // toward the endpoint (increasing s)
    let mut states = start.clone();
    let mut x = sa;
    let mut h = ctl.h_init;
    for i in first_up..n {
        advance(&f, x, s[i], &mut states, &mut h, ctl, |_, _| {})?;
        check(&states, s[i])?;
        x = s[i];
        out[i] = states.clone();
    }
    // away from the endpoint
    let mut states = start;
    let mut x = sa;
    let mut h = ctl.h_init;
    for i in (0..first_up).rev() {
        advance(&f, x, s[i], &mut states, &mut h, ctl, |_, _| {})?;
        check(&states, s[i])?;
        x = s[i];
        out[i] = states.clone();
    }
    Ok(out)
}

fn sample_from(grid: &QuadratureGrid, energy: f64, nodes: &[Vec<ScaledState>], k: usize, drift: f64) -> SolutionSample {
    let n = nodes.len();
    let mut log_scale = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut du = Vec::with_capacity(n);
    for st in nodes {
        log_scale.push(st[k].log_scale);
        u.push(st[k].mantissa[0]);
        du.push(st[k].mantissa[1]);
    }
    SolutionSample::from_parts(grid.clone(), energy, log_scale, u, du, drift)
}

/// Relative Wronskian deviation of two recorded solutions against its value
/// at node `anchor_idx`, measured against the cross-term magnitude
/// `|u1 u2_s| + |u1_s u2|` so cancellation in the tail is not misread as drift.
fn pair_drift(nodes: &[Vec<ScaledState>], grid: &QuadratureGrid, a: usize, b: usize, anchor_idx: usize) -> f64 {
    let s = grid.s();
    let expo = |i: usize| s[i] + nodes[i][a].log_scale + nodes[i][b].log_scale;
    let det = |i: usize| {
        let (p, q) = (nodes[i][a].mantissa, nodes[i][b].mantissa);
        p[0] * q[1] - p[1] * q[0]
    };
    let ea = expo(anchor_idx);
    let da = det(anchor_idx);
    let mut worst: f64 = 0.0;
    for i in 0..nodes.len() {
        let (p, q) = (nodes[i][a].mantissa, nodes[i][b].mantissa);
        let cross = (p[0] * q[1]).abs() + (p[1] * q[0]).abs();
        // mantissas that have underflowed carry no Wronskian information
        if cross < 1e-250 {
            continue;
        }
        let diff = det(i) - (ea - expo(i)).exp() * da;
        worst = worst.max(diff.abs() / cross);
    }
    worst
}

fn nearest_index(grid: &QuadratureGrid, s: f64) -> usize {
    let nodes = grid.s();
    let mut best = 0;
    for (i, x) in nodes.iter().enumerate() {
        if (x - s).abs() < (nodes[best] - s).abs() {
            best = i;
        }
    }
    best
}

/// Solves `-u'' + V u = E u` through the grid from the given anchor data.
/// A companion solution with complementary data is carried along to monitor
/// the Wronskian.
pub fn integrate(v: &PotentialFamily, energy: f64, grid: &QuadratureGrid, ic: InitialCondition) -> Result<SolutionSample> {
    integrate_with(v, energy, grid, ic, &StepControl::default())
}

pub fn integrate_with(
    v: &PotentialFamily,
    energy: f64,
    grid: &QuadratureGrid,
    ic: InitialCondition,
    ctl: &StepControl,
) -> Result<SolutionSample> {
    let sa = ic.anchor.s();
    let y = s_state(ic.u, ic.du_dt, sa);
    if y[0] == 0.0 && y[1] == 0.0 {
        return Err(ConfineError::pre("initial data must not vanish identically"));
    }
    let companion = [-y[1], y[0]];
    let nodes = integrate_many(v, energy, grid, ic.anchor, &[y, companion], ctl)?;
    let drift = pair_drift(&nodes, grid, 0, 1, nearest_index(grid, sa));
    Ok(sample_from(grid, energy, &nodes, 0, drift))
}

/// The solutions with `(u, u_t) = (1, 0)` and `(0, 1)` at the anchor.
pub fn integrate_basis(
    v: &PotentialFamily,
    energy: f64,
    grid: &QuadratureGrid,
    anchor: LogCoordinate,
    ctl: &StepControl,
) -> Result<(SolutionSample, SolutionSample)> {
    let sa = anchor.s();
    let init = [s_state(1.0, 0.0, sa), s_state(0.0, 1.0, sa)];
    let nodes = integrate_many(v, energy, grid, anchor, &init, ctl)?;
    let drift = pair_drift(&nodes, grid, 0, 1, nearest_index(grid, sa));
    Ok((sample_from(grid, energy, &nodes, 0, drift), sample_from(grid, energy, &nodes, 1, drift)))
}

/// Wronskian `u1 u2_t - u1_t u2` of two samples on the same grid.
#[derive(Debug, Clone, Copy)]
pub struct WronskianReport {
    /// Mean value over the grid.
    pub value: f64,
    /// Largest relative deviation from the mean.
    pub drift: f64,
}

pub fn wronskian(u1: &SolutionSample, u2: &SolutionSample) -> Result<WronskianReport> {
    if u1.len() != u2.len() || u1.grid().s() != u2.grid().s() {
        return Err(ConfineError::pre("Wronskian needs samples on the same grid"));
    }
    if (u1.energy - u2.energy).abs() > 1e-12 * u1.energy.abs().max(1.0) {
        return Err(ConfineError::pre("Wronskian needs samples at the same energy"));
    }
    let s = u1.grid().s();
    let values: Vec<f64> = (0..u1.len())
        .map(|i| {
            let (a1, b1, l1) = u1.raw(i);
            let (a2, b2, l2) = u2.raw(i);
            let det = a1 * b2 - b1 * a2;
            if det == 0.0 {
                0.0
            } else {
                -det.signum() * (s[i] + l1 + l2 + det.abs().ln()).exp()
            }
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let dev = values.iter().fold(0.0_f64, |m, w| m.max((w - mean).abs()));
    let drift = if dev == 0.0 { 0.0 } else { dev / mean.abs().max(f64::MIN_POSITIVE) };
    Ok(WronskianReport { value: mean, drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sturm::Endpoint;
    use approx::assert_relative_eq;

    #[test]
    fn power_potential_matches_exact_solutions() {
        // c = 2: u = t^2 and t^{-1}
        let v = PotentialFamily::power(2.0);
        let grid = QuadratureGrid::uniform(Endpoint::Left, 0.5, 30.0, 600).unwrap();
        let anchor = LogCoordinate::new(3.0).unwrap();
        let t = (-3.0f64).exp();
        let ic = InitialCondition { anchor, u: t * t, du_dt: 2.0 * t };
        let sol = integrate(&v, 0.0, &grid, ic).unwrap();
        for i in (0..grid.len()).step_by(37) {
            let s = grid.s()[i];
            assert_relative_eq!(sol.ln_abs(i), -2.0 * s, epsilon = 1e-7);
        }
        assert!(sol.wronskian_drift < 1e-7, "drift {}", sol.wronskian_drift);
    }

    #[test]
    fn energy_term_matches_bessel_free_case() {
        // V = 0, E = 1: u = sin t
        let v = PotentialFamily::power(0.0);
        let grid = QuadratureGrid::uniform(Endpoint::Left, 0.01, 10.0, 300).unwrap();
        let anchor = LogCoordinate::new(0.01).unwrap();
        let t0 = (-0.01f64).exp();
        let ic = InitialCondition { anchor, u: t0.sin(), du_dt: t0.cos() };
        let sol = integrate(&v, 1.0, &grid, ic).unwrap();
        for i in 0..grid.len() {
            let t = (-grid.s()[i]).exp();
            assert_relative_eq!(sol.value(i), t.sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn basis_wronskian_is_constant() {
        let v = PotentialFamily::log_hierarchy(2, 0.5);
        let grid = QuadratureGrid::uniform(Endpoint::Left, 2.0, 8.0, 400).unwrap();
        let (a, b) = integrate_basis(&v, 0.0, &grid, LogCoordinate::new(3.0).unwrap(), &StepControl::default()).unwrap();
        let w = wronskian(&a, &b).unwrap();
        assert_relative_eq!(w.value, 1.0, max_relative = 1e-6);
        assert!(a.wronskian_drift < 1e-6);
    }
}

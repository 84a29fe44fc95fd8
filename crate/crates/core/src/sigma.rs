//! Condition (Σ) on a weight `G`: the pointwise derivative bounds, the
//! dyadic series `Σ 4^{-n} e^{-2G(2^{-n}ρ_0)}`, and the stronger
//! Brusentsev-type bound `G'(t) e^{G(t)} ≤ C`.
//!
//! Divergence of an infinite series cannot be decided from finitely many
//! terms. [`divergence_verdict`] is a model-fit heuristic against the
//! iterated-log integral-test ladder and reports `Inconclusive` when the
//! fit does not separate from the critical pattern.

use serde::{Deserialize, Serialize};

use crate::error::{ConfineError, Result};
use crate::fit::{least_squares, log_sum_exp};
use crate::iterlog::{self, LogCoordinate};
use crate::potentials::{
    g_hierarchy_build, g_log_plus_log_l1, g_log_t, g_log_t_minus_linear, GBuildOptions, GFunction, IntegrableProfile,
};

#[derive(Debug, Clone, Serialize)]
pub struct Sigma1Violation {
    /// `ln(1/t)` of the probe.
    pub s: f64,
    pub clause: String,
    /// Amount by which the bound is exceeded, in units of `t G'(t)`.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sigma1Report {
    pub holds: bool,
    pub probes: usize,
    pub violations: Vec<Sigma1Violation>,
}

/// Checks `0 ≤ G' ≤ 1/t` on `(0, d0)` and `G' = 0` on `[d0, 2 d0]`.
pub fn check_sigma1(g: &GFunction, n_points: usize) -> Result<Sigma1Report> {
    if n_points < 16 {
        return Err(ConfineError::pre("check_sigma1 needs at least 16 probes"));
    }
    let sd = g.d0().s();
    let inner = n_points - n_points / 4;
    let outer = n_points / 4;
    let mut probes = Vec::with_capacity(n_points);
    // log-spaced in t over a million e-folds below d0
    let span = (1e6f64 + 1.0).ln();
    for k in 0..inner {
        let u = (k as f64 + 0.5) / inner as f64;
        probes.push((sd + (span * u).exp_m1(), true));
    }
    for k in 0..outer {
        let r = 1.0 + k as f64 / (outer.max(2) - 1) as f64;
        // t = 1 and beyond lie outside the unit scale of the domain
        if sd - r.ln() > 0.0 {
            probes.push((sd - r.ln(), false));
        }
    }
    let mut violations = Vec::new();
    let (inner, outer) = (probes.iter().filter(|p| p.1).count(), probes.iter().filter(|p| !p.1).count());
    for (s, inside) in probes {
        let x = LogCoordinate::new(s)?;
        let tg = g.t_gprime(x);
        if inside {
            if tg < 0.0 {
                violations.push(Sigma1Violation { s, clause: "G' < 0".into(), margin: -tg });
            } else if tg > 1.0 + 1e-12 {
                violations.push(Sigma1Violation { s, clause: "G' > 1/t".into(), margin: tg - 1.0 });
            }
        } else if tg != 0.0 {
            violations.push(Sigma1Violation { s, clause: "G' != 0 for t >= d0".into(), margin: tg.abs() });
        }
    }
    let probes = inner + outer;
    Ok(Sigma1Report { holds: violations.is_empty(), probes, violations })
}

/// `(n, ln a_n)` with `a_n = 4^{-n} e^{-2 G(2^{-n} ρ_0)}`.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesTerms {
    /// `ln(1/ρ_0)`.
    pub rho0_s: f64,
    pub terms: Vec<(usize, f64)>,
}

pub fn sigma_series_terms(g: &GFunction, rho0: LogCoordinate, n: usize) -> Result<SeriesTerms> {
    if n < 8 {
        return Err(ConfineError::pre("series needs at least 8 terms"));
    }
    let limit = g.d0().s() + std::f64::consts::LN_2;
    if rho0.s() < limit - 1e-12 * limit.abs() {
        return Err(ConfineError::pre(format!("rho0 = exp(-{}) exceeds d0/2 = exp(-{limit})", rho0.s())));
    }
    let ln4 = 4f64.ln();
    let terms = (1..=n)
        .map(|k| {
            let s = k as f64 * std::f64::consts::LN_2 + rho0.s();
            (k, -(k as f64) * ln4 - 2.0 * g.value(LogCoordinate::new(s).unwrap()))
        })
        .collect();
    Ok(SeriesTerms { rho0_s: rho0.s(), terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesClass {
    Divergent,
    Convergent,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct SeriesOptions {
    pub ladder_depth: u32,
    /// Half-width of the band treated as exactly critical.
    pub tol: f64,
    /// Distance above critical required for a convergence verdict.
    pub margin: f64,
    /// Largest acceptable fit residual.
    pub residual_threshold: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions { ladder_depth: 4, tol: 0.05, margin: 0.1, residual_threshold: 1e-3 }
    }
}

/// Heuristic classification of a positive series from its terms.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesVerdict {
    pub verdict: SeriesClass,
    /// `β_0, β_1, ...` of `ln a_n ≈ β_0 - Σ β_k ln L_k(2^{-n} ρ_0)`.
    pub beta: Vec<f64>,
    pub rho0: f64,
    pub n_terms: usize,
    pub residual: f64,
    /// `(N, ln S_N)` at powers of two.
    pub partial_sums: Vec<(usize, f64)>,
    pub heuristic: bool,
}

/// Fits `ln a_n` in the variable `σ_n = n ln 2 + ln(1/ρ_0) = L_1(2^{-n}ρ_0)`
/// against `β_0 - β_1 ln L_1 - β_2 ln L_2 - ... + δ/σ_n` and compares the
/// ladder lexicographically with the integral-test pattern `(1, 1, ...)`.
pub fn divergence_verdict(terms: &SeriesTerms, opts: &SeriesOptions) -> Result<SeriesVerdict> {
    let n_terms = terms.terms.len();
    if n_terms < 32 {
        return Err(ConfineError::pre("divergence verdict needs at least 32 terms"));
    }
    let sig: Vec<f64> = terms.terms.iter().map(|(n, _)| *n as f64 * std::f64::consts::LN_2 + terms.rho0_s).collect();
    let mut levels = 0;
    for k in 1..=opts.ladder_depth.min(iterlog::MAX_LEVEL) {
        // fit a level only where it has at least one e-fold of range
        let min = iterlog::min_s(k)?;
        let first_ok = sig.iter().position(|s| *s >= min).unwrap_or(sig.len());
        if sig.len() - first_ok < 32 || sig[sig.len() - 1] < min * std::f64::consts::E {
            break;
        }
        levels = k;
    }
    let start_s = if levels == 0 { sig[0] } else { iterlog::min_s(levels)?.max(sig[0]) };
    let window: Vec<usize> = (0..n_terms).filter(|&i| sig[i] >= start_s).collect();
    let y: Vec<f64> = window.iter().map(|&i| terms.terms[i].1).collect();
    let mut cols = vec![vec![1.0; window.len()]];
    for k in 1..=levels {
        cols.push(
            window
                .iter()
                .map(|&i| -iterlog::iterlog(k, LogCoordinate::new(sig[i]).unwrap()).unwrap().ln())
                .collect(),
        );
    }
    cols.push(window.iter().map(|&i| 1.0 / sig[i]).collect());
    if levels >= 2 {
        cols.push(window.iter().map(|&i| 1.0 / (sig[i] * sig[i].ln())).collect());
    }
    let fit = least_squares(&cols, &y)?;
    let beta: Vec<f64> = fit.coefficients[..=levels as usize].to_vec();
    let mut verdict = SeriesClass::Divergent;
    if fit.max_abs > opts.residual_threshold {
        verdict = SeriesClass::Inconclusive;
    } else {
        for b in &beta[1..] {
            let d = b - 1.0;
            if d < -opts.tol {
                verdict = SeriesClass::Divergent;
                break;
            }
            if d.abs() <= opts.tol {
                continue;
            }
            verdict = if d >= opts.margin { SeriesClass::Convergent } else { SeriesClass::Inconclusive };
            break;
        }
    }
    let mut partial_sums = Vec::new();
    let mut acc = f64::NEG_INFINITY;
    let mut next = 1;
    for (i, (_, la)) in terms.terms.iter().enumerate() {
        acc = log_sum_exp([acc, *la]);
        if i + 1 == next || i + 1 == n_terms {
            partial_sums.push((i + 1, acc));
            next *= 2;
        }
    }
    Ok(SeriesVerdict {
        verdict,
        beta,
        rho0: (-terms.rho0_s).exp(),
        n_terms,
        residual: fit.max_abs,
        partial_sums,
        heuristic: true,
    })
}

/// Verdicts at several `ρ_0`; disagreement gives `Inconclusive`.
pub fn series_verdict_multi(g: &GFunction, rho0s: &[LogCoordinate], n: usize, opts: &SeriesOptions) -> Result<(SeriesClass, Vec<SeriesVerdict>)> {
    let verdicts: Vec<SeriesVerdict> =
        rho0s.iter().map(|r| divergence_verdict(&sigma_series_terms(g, *r, n)?, opts)).collect::<Result<_>>()?;
    let first = verdicts.first().map(|v| v.verdict).unwrap_or(SeriesClass::Inconclusive);
    let agreed = if verdicts.iter().all(|v| v.verdict == first) { first } else { SeriesClass::Inconclusive };
    Ok((agreed, verdicts))
}

#[derive(Debug, Clone, Serialize)]
pub struct BrusentsevReport {
    /// `None` when the quantity grows along the probe.
    pub sup_estimate: Option<f64>,
    /// `γ` in `G'(t) e^{G(t)} ~ (ln 1/t)^γ`.
    pub growth_exponent: f64,
    pub satisfied: bool,
}

/// Geometric probe in `s` from `d0/2` down to `t = e^{-s_max}`.
pub fn default_probe(g: &GFunction, points: usize, s_max: f64) -> Vec<LogCoordinate> {
    let s0 = g.d0().s() + std::f64::consts::LN_2;
    let ratio = (s_max / s0).ln();
    (0..points)
        .map(|i| LogCoordinate::new(s0 * (ratio * i as f64 / (points - 1) as f64).exp()).unwrap())
        .collect()
}

/// Evaluates `G'(t) e^{G(t)}` in log space and fits its growth in `ln(1/t)`.
pub fn brusentsev_sup(g: &GFunction, probe: &[LogCoordinate], tol: f64) -> Result<BrusentsevReport> {
    if probe.len() < 8 {
        return Err(ConfineError::pre("Brusentsev probe needs at least 8 points"));
    }
    let sd = g.d0().s();
    if probe.iter().any(|x| x.s() <= sd) {
        return Err(ConfineError::pre("probe must lie inside (0, d0)"));
    }
    let y: Vec<f64> = probe.iter().map(|x| g.log_brusentsev(*x) + x.s()).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ConfineError::pre("G' vanishes on the probe"));
    }
    // fit on the deeper half where the 1/s transient is small
    let half = probe.len() / 2;
    let cols = vec![
        vec![1.0; probe.len() - half],
        probe[half..].iter().map(|x| x.s().ln()).collect(),
        probe[half..].iter().map(|x| 1.0 / x.s()).collect(),
    ];
    let fit = least_squares(&cols, &y[half..])?;
    let gamma = fit.coefficients[1];
    let growing = gamma > tol;
    let sup = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(BrusentsevReport { sup_estimate: if growing { None } else { Some(sup) }, growth_exponent: gamma, satisfied: !growing })
}

/// The weights shipped with the (Σ) suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SigmaFamily {
    /// `G = ln t`.
    LogT,
    /// `G = ln t - c t`.
    LogTMinusLinear { c: f64 },
    /// The hierarchy weight `G_p` with `f ≡ 0` unless given.
    Hierarchy {
        p: u32,
        #[serde(default)]
        f: IntegrableProfile,
    },
    /// `G = ln t + m ln L_1(t)`.
    LogPlusLogL1 { m: f64 },
}

impl SigmaFamily {
    pub fn label(&self) -> String {
        match self {
            SigmaFamily::LogT => "ln t".into(),
            SigmaFamily::LogTMinusLinear { c } => format!("ln t - {c} t"),
            SigmaFamily::Hierarchy { p, .. } => format!("G_{p}"),
            SigmaFamily::LogPlusLogL1 { m } => format!("ln t + {m} ln L1"),
        }
    }

    /// Builds the weight with the largest admissible `d0 ≤ d_omega`.
    pub fn build(&self, d_omega: f64) -> Result<GFunction> {
        let ds = (-d_omega.ln()).max(0.0);
        match self {
            SigmaFamily::LogT => Ok(g_log_t(LogCoordinate::new(ds)?)),
            SigmaFamily::LogTMinusLinear { c } => g_log_t_minus_linear(*c, LogCoordinate::new(ds.max(c.max(1e-300).ln()))?),
            SigmaFamily::Hierarchy { p, f } => g_hierarchy_build(*p, f.clone(), d_omega, &GBuildOptions::default()),
            SigmaFamily::LogPlusLogL1 { m } => g_log_plus_log_l1(*m, LogCoordinate::new(ds.max(m.max(1.0)))?),
        }
    }

    /// The six labelled weights with their expected series verdicts.
    pub fn suite() -> Vec<(SigmaFamily, SeriesClass)> {
        vec![
            (SigmaFamily::LogT, SeriesClass::Divergent),
            (SigmaFamily::LogTMinusLinear { c: 1.0 }, SeriesClass::Divergent),
            (SigmaFamily::Hierarchy { p: 2, f: IntegrableProfile::Zero }, SeriesClass::Divergent),
            (SigmaFamily::Hierarchy { p: 3, f: IntegrableProfile::Zero }, SeriesClass::Divergent),
            (SigmaFamily::LogPlusLogL1 { m: 1.0 }, SeriesClass::Convergent),
            (SigmaFamily::LogPlusLogL1 { m: 2.0 }, SeriesClass::Convergent),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lc(s: f64) -> LogCoordinate {
        LogCoordinate::new(s).unwrap()
    }

    #[test]
    fn log_t_terms_are_constant() {
        let g = g_log_t(lc(1.0));
        let rho = lc(3.0);
        let terms = sigma_series_terms(&g, rho, 64).unwrap();
        for (_, la) in &terms.terms {
            assert_relative_eq!(*la, 6.0, max_relative = 1e-12);
        }
        let v = divergence_verdict(&terms, &SeriesOptions::default()).unwrap();
        assert_eq!(v.verdict, SeriesClass::Divergent);
        let (n, ln_s) = *v.partial_sums.last().unwrap();
        assert_relative_eq!(ln_s, (n as f64).ln() + 6.0, max_relative = 1e-12);
    }

    #[test]
    fn log_plus_log_l1_terms() {
        let g = g_log_plus_log_l1(1.0, lc(1.0)).unwrap();
        let rho = lc(2.0);
        let terms = sigma_series_terms(&g, rho, 40).unwrap();
        for (n, la) in &terms.terms {
            let s = *n as f64 * std::f64::consts::LN_2 + 2.0;
            assert_relative_eq!(*la, 4.0 - 2.0 * s.ln(), max_relative = 1e-12);
        }
    }

    #[test]
    fn doubled_log_violates_sigma1() {
        let g = GFunction::new("2 ln t", lc(1.0), |sh| (-2.0 * sh, 2.0));
        let r = check_sigma1(&g, 64).unwrap();
        assert!(!r.holds);
        assert!(r.violations.iter().all(|v| v.clause == "G' > 1/t"));
        assert!(r.violations.len() >= 40);
        assert!(check_sigma1(&g_log_t(lc(1.0)), 64).unwrap().holds);
    }

    #[test]
    fn rho0_above_half_cutoff_rejected() {
        let g = g_log_t(lc(2.0));
        assert!(sigma_series_terms(&g, lc(2.2), 64).is_err());
        assert!(sigma_series_terms(&g, lc(2.0 + std::f64::consts::LN_2), 64).is_ok());
    }

    #[test]
    fn brusentsev_log_t_is_one() {
        let g = g_log_t(lc(1.0));
        let r = brusentsev_sup(&g, &default_probe(&g, 200, 1e6), 0.05).unwrap();
        assert!(r.satisfied);
        assert_relative_eq!(r.sup_estimate.unwrap(), 1.0, max_relative = 1e-12);
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConfineError, Result};
use crate::fit::least_squares;
use crate::iterlog::{self, LogCoordinate};
use crate::potentials::{reduction_of_order, PotentialFamily};

use super::grid::{Endpoint, QuadratureGrid};
use super::ode::StepControl;
use super::sample::{integrate_basis, SolutionSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    LimitPoint,
    LimitCircle,
    Borderline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EsaVerdict {
    EssentiallySelfAdjoint,
    Not,
    Borderline,
}

/// Options for [`tail_exponent_with`].
#[derive(Debug, Clone)]
pub struct TailOptions {
    /// Number of `ln L_k` corrections to include.
    pub depth: u32,
    /// First `s` of the fit window; `None` uses the deepest quartile of nodes.
    pub window_start: Option<f64>,
    /// Include a `1/s` term to absorb the leading transient.
    pub inverse_term: bool,
    /// Hold `σ` fixed instead of fitting it.
    pub pin_sigma: Option<f64>,
    /// `max_abs` residual above which the fit is flagged.
    pub poor_fit_threshold: f64,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions { depth: 1, window_start: None, inverse_term: true, pin_sigma: None, poor_fit_threshold: 1e-3 }
    }
}

/// `ln|u| ≈ -σ s + Σ γ_k ln L_k(s) + β_0 + δ / s` on the deep window.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    pub sigma: f64,
    /// `γ_k`, one per ladder level actually fitted.
    pub log_corrections: Vec<f64>,
    pub constant: f64,
    pub inverse: f64,
    pub rms: f64,
    pub max_abs: f64,
    pub r_squared: f64,
    pub samples: usize,
    pub window: (f64, f64),
    pub poor_fit: bool,
}

/// Tail fit with default options: `σ` and `γ_1` on the deepest quartile.
pub fn tail_exponent(u: &SolutionSample) -> Result<TailFit> {
    tail_exponent_with(u, &TailOptions::default())
}

fn envelope(u: &SolutionSample, i: usize) -> f64 {
    let (a, b, l) = u.raw(i);
    l + a.abs().max(b.abs()).ln()
}

fn sign_changes(u: &SolutionSample, from: usize) -> usize {
    (from + 1..u.len()).filter(|&i| u.sign(i) != u.sign(i - 1)).count()
}

pub fn tail_exponent_with(u: &SolutionSample, opts: &TailOptions) -> Result<TailFit> {
    let s = u.grid().s();
    let n = s.len();
    let first = match opts.window_start {
        Some(lo) => s.iter().position(|x| *x >= lo).unwrap_or(n),
        None => (3 * n) / 4,
    };
    let count = n - first;
    if count < 32 {
        return Err(ConfineError::pre(format!("tail fit needs at least 32 samples in the window, got {count}")));
    }
    let idx: Vec<usize> = (first..n).collect();
    let oscillating = sign_changes(u, first) >= 2;
    let y: Vec<f64> = idx
        .iter()
        .map(|&i| if oscillating { envelope(u, i) } else { u.ln_abs(i) })
        .collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ConfineError::pre("solution vanishes inside the fit window"));
    }
    let lo = s[first];
    let mut levels = Vec::new();
    for k in 1..=opts.depth.min(iterlog::MAX_LEVEL) {
        let min = iterlog::min_s(k)?;
        if lo < min {
            break;
        }
        let col: Vec<f64> = idx
            .iter()
            .map(|&i| iterlog::iterlog(k, LogCoordinate::new(s[i]).unwrap()).unwrap().ln())
            .collect();
        levels.push(col);
    }
    let mut columns = Vec::new();
    let target: Vec<f64> = match opts.pin_sigma {
        Some(sig) => idx.iter().zip(&y).map(|(&i, v)| v + sig * s[i]).collect(),
        None => {
            columns.push(idx.iter().map(|&i| -s[i]).collect());
            y.clone()
        }
    };
    let n_levels = levels.len();
    columns.extend(levels);
    columns.push(vec![1.0; count]);
    if opts.inverse_term {
        columns.push(idx.iter().map(|&i| 1.0 / s[i]).collect());
    }
    let fit = least_squares(&columns, &target)?;
    let mut c = fit.coefficients.iter().copied();
    let sigma = match opts.pin_sigma {
        Some(sig) => sig,
        None => c.next().unwrap(),
    };
    let log_corrections: Vec<f64> = (0..n_levels).map(|_| c.next().unwrap()).collect();
    let constant = c.next().unwrap();
    let inverse = if opts.inverse_term { c.next().unwrap() } else { 0.0 };
    let mean = target.iter().sum::<f64>() / count as f64;
    let ss_tot: f64 = target.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res = fit.rms * fit.rms * count as f64;
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(TailFit {
        sigma,
        log_corrections,
        constant,
        inverse,
        rms: fit.rms,
        max_abs: fit.max_abs,
        r_squared,
        samples: count,
        window: (lo, s[n - 1]),
        poor_fit: fit.max_abs > opts.poor_fit_threshold || oscillating,
    })
}

/// Square-integrability of one solution near the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrability {
    Integrable,
    NotIntegrable,
    Undecided,
}

/// The L² decision on a tail fit. `level = 0` is the power `t^{2σ}`;
/// `level = k` is the ladder exponent `β_k = -2 γ_k` against critical 1.
#[derive(Debug, Clone, Serialize)]
pub struct L2Decision {
    pub integrability: Integrability,
    pub level: usize,
    /// Signed distance from the critical pattern at `level`; positive means
    /// the `|u|^2` integral converges.
    pub margin: f64,
    /// Same decision with the tight sweep bands.
    pub score: f64,
    pub fit: TailFit,
    pub ladder: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    /// Depth of the grid in `s`.
    pub s_max: f64,
    pub ladder_depth: u32,
    /// Reporting band on `|σ + 1/2|`.
    pub sigma_band: f64,
    /// Reporting band on `|β_k - 1|`.
    pub ladder_band: f64,
    /// Bands below which the sweep treats a level as exactly critical.
    pub sigma_tight: f64,
    pub ladder_tight: f64,
    /// Fit window start; `None` places it at `sqrt(s_anchor s_max)`-like depth.
    pub window_start: Option<f64>,
    pub anchor: Option<LogCoordinate>,
    pub step: StepControl,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            s_max: 1e5,
            ladder_depth: 3,
            sigma_band: 0.02,
            ladder_band: 0.05,
            sigma_tight: 2e-3,
            ladder_tight: 1e-2,
            window_start: None,
            anchor: None,
            step: StepControl { h_max: 16.0, ..StepControl::default() },
        }
    }
}

/// Anchor `t_a = min(1/4, ...)` inside the domain of the family.
pub fn default_anchor(v: &PotentialFamily) -> Result<LogCoordinate> {
    let min = v.min_s()?;
    let s = (4.0f64).ln().max(if min > 0.0 { min + 1.0 } else { 0.0 });
    LogCoordinate::new(s)
}

fn classification_grid(endpoint: Endpoint, s0: f64, s_max: f64) -> Result<QuadratureGrid> {
    let switch = (s0 + 20.0).min(0.5 * (s0 + s_max));
    QuadratureGrid::graded(endpoint, s0, switch, 0.05, s_max, 1.002)
}

fn window_start(opts: &ClassifyOptions, s0: f64) -> f64 {
    opts.window_start.unwrap_or_else(|| {
        let a = s0.max(1.0).ln();
        let b = opts.s_max.ln();
        (a + 0.45 * (b - a)).exp().max(iterlog::min_s(opts.ladder_depth.min(3)).unwrap_or(1.0))
    })
}

/// Applies the L² rule to a solution sample.
pub fn l2_decision(u: &SolutionSample, window: f64, opts: &ClassifyOptions) -> Result<L2Decision> {
    let free = TailOptions {
        depth: opts.ladder_depth,
        window_start: Some(window),
        inverse_term: true,
        pin_sigma: None,
        poor_fit_threshold: 1e-3,
    };
    let fit = tail_exponent_with(u, &free)?;
    let power_margin = 2.0 * fit.sigma + 1.0;
    let dev = (fit.sigma + 0.5).abs();
    let oscillating = sign_changes(u, u.len() - fit.samples) >= 2;
    if oscillating || dev >= opts.sigma_band {
        let integrability = if power_margin > 0.0 { Integrability::Integrable } else { Integrability::NotIntegrable };
        return Ok(L2Decision { integrability, level: 0, margin: power_margin, score: power_margin, fit, ladder: vec![] });
    }
    let pinned = tail_exponent_with(u, &TailOptions { pin_sigma: Some(-0.5), ..free.clone() })?;
    if pinned.max_abs > 1e-4 + 10.0 * fit.max_abs {
        // a genuine power offset too small to resolve: report it, undecided
        return Ok(L2Decision {
            integrability: Integrability::Undecided,
            level: 0,
            margin: power_margin,
            score: power_margin,
            fit,
            ladder: vec![],
        });
    }
    let ladder: Vec<f64> = pinned.log_corrections.iter().map(|g| -2.0 * g).collect();
    let mut integrability = Integrability::Undecided;
    let mut level = 0;
    let mut margin = 0.0;
    // a level inside the band but visibly off critical cannot be passed
    // down to the next level
    for (k, beta) in ladder.iter().enumerate() {
        margin = beta - 1.0;
        level = k + 1;
        if margin.abs() > opts.ladder_band {
            integrability = if margin > 0.0 { Integrability::Integrable } else { Integrability::NotIntegrable };
            break;
        }
        if margin.abs() > opts.ladder_tight {
            break;
        }
    }
    let mut score = 0.0;
    for beta in &ladder {
        if (beta - 1.0).abs() > opts.ladder_tight {
            score = beta - 1.0;
            break;
        }
    }
    Ok(L2Decision { integrability, level, margin, score, fit: pinned, ladder })
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaReport {
    pub dominant: f64,
    pub recessive: f64,
    /// Ladder exponents `β_k` of the dominant solution.
    pub log_corrections: Vec<f64>,
}

/// Limit-point / limit-circle classification of one endpoint.
#[derive(Debug, Clone, Serialize)]
pub struct EndpointClassification {
    pub endpoint: Endpoint,
    pub verdict: Verdict,
    pub sigma: SigmaReport,
    pub confidence: f64,
    pub energies: Vec<f64>,
    /// Level at which the dominant solution was decided (0 = power).
    pub level: usize,
    pub margin: f64,
    /// Signed decision value used by threshold sweeps; positive is the
    /// limit-circle side.
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl EndpointClassification {
    pub fn sigma_dominant(&self) -> f64 {
        self.sigma.dominant
    }

    pub fn sigma_recessive(&self) -> f64 {
        self.sigma.recessive
    }
}

/// Classifies a dominant-solution sample, deriving the recessive one by
/// reduction of order over the fit window.
pub fn classify_sample(dominant: &SolutionSample, endpoint: Endpoint, opts: &ClassifyOptions) -> Result<EndpointClassification> {
    let s = dominant.grid().s();
    let window = window_start(opts, s[0]);
    let dom = l2_decision(dominant, window, opts)?;
    let first = s.iter().position(|x| *x >= window).unwrap_or(0);
    let oscillating = sign_changes(dominant, first) >= 2;
    let (sigma_rec, rec_integrable) = if oscillating {
        (dom.fit.sigma, dom.integrability)
    } else {
        let tail = dominant.tail(first)?;
        let (phi, _) = reduction_of_order(&tail)?;
        let rec = tail_exponent_with(
            &phi,
            &TailOptions { depth: opts.ladder_depth, window_start: Some(window), ..TailOptions::default() },
        )?;
        let integrable = if 2.0 * rec.sigma + 1.0 > opts.sigma_band { Integrability::Integrable } else { Integrability::Undecided };
        (rec.sigma, integrable)
    };
    let verdict = match (dom.integrability, rec_integrable) {
        (Integrability::NotIntegrable, _) => Verdict::LimitPoint,
        (Integrability::Integrable, Integrability::Integrable) => Verdict::LimitCircle,
        _ => Verdict::Borderline,
    };
    let band = if dom.level == 0 { 2.0 * opts.sigma_band } else { opts.ladder_band };
    let confidence = match verdict {
        Verdict::Borderline => (1.0 - dom.margin.abs() / band).clamp(0.0, 1.0),
        _ => (dom.margin.abs() / (4.0 * band)).min(1.0),
    };
    Ok(EndpointClassification {
        endpoint,
        verdict,
        sigma: SigmaReport { dominant: dom.fit.sigma, recessive: sigma_rec, log_corrections: dom.ladder.clone() },
        confidence,
        energies: vec![dominant.energy],
        level: dom.level,
        margin: dom.margin,
        score: dom.score,
        diagnostic: None,
    })
}

fn classify_one(v: &PotentialFamily, endpoint: Endpoint, energy: f64, opts: &ClassifyOptions) -> Result<EndpointClassification> {
    let anchor = match opts.anchor {
        Some(a) => a,
        None => default_anchor(v)?,
    };
    let grid = classification_grid(endpoint, anchor.s(), opts.s_max)?;
    let (mut a, mut b) = integrate_basis(v, energy, &grid, anchor, &opts.step)?;
    if a.wronskian_drift > 1e-6 {
        let tight = StepControl { tol: opts.step.tol * 1e-2, ..opts.step };
        (a, b) = integrate_basis(v, energy, &grid, anchor, &tight)?;
    }
    let last = grid.len() - 1;
    let dominant = if a.ln_abs(last) >= b.ln_abs(last) { a } else { b };
    let mut out = classify_sample(&dominant, endpoint, opts)?;
    if dominant.wronskian_drift > 1e-6 {
        out.diagnostic = Some(format!("Wronskian drift {:.3e}", dominant.wronskian_drift));
    }
    Ok(out)
}

pub fn classify_endpoint(v: &PotentialFamily, endpoint: Endpoint, energies: &[f64]) -> Result<EndpointClassification> {
    classify_endpoint_with(v, endpoint, energies, &ClassifyOptions::default())
}

/// Classifies at every energy; disagreement yields `Borderline` with a
/// diagnostic.
pub fn classify_endpoint_with(
    v: &PotentialFamily,
    endpoint: Endpoint,
    energies: &[f64],
    opts: &ClassifyOptions,
) -> Result<EndpointClassification> {
    v.validate()?;
    let energies: Vec<f64> = if energies.is_empty() { vec![0.0] } else { energies.to_vec() };
    let results: Vec<EndpointClassification> =
        energies.par_iter().map(|e| classify_one(v, endpoint, *e, opts)).collect::<Result<_>>()?;
    let mut out = results[0].clone();
    out.energies = energies.clone();
    if results.iter().any(|r| r.verdict != out.verdict) {
        let listing: Vec<String> = results.iter().map(|r| format!("E={}: {:?}", r.energies[0], r.verdict)).collect();
        out.verdict = Verdict::Borderline;
        out.diagnostic = Some(format!("verdict depends on energy ({})", listing.join(", ")));
    }
    Ok(out)
}

/// Essential self-adjointness on an interval from its two endpoint verdicts.
pub fn esa_verdict(left: Verdict, right: Verdict) -> EsaVerdict {
    match (left, right) {
        (Verdict::LimitPoint, Verdict::LimitPoint) => EsaVerdict::EssentiallySelfAdjoint,
        (Verdict::LimitCircle, _) | (_, Verdict::LimitCircle) => EsaVerdict::Not,
        _ => EsaVerdict::Borderline,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub param: f64,
    pub verdict: Verdict,
    pub sigma_dominant: f64,
    pub sigma_recessive: f64,
    pub confidence: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    /// `None` when the verdict never changes over the range.
    pub threshold: Option<f64>,
    /// Final bracket around the threshold.
    pub bracket: Option<(f64, f64)>,
    /// Parameter range over which samples were `Borderline`.
    pub borderline_band: Option<(f64, f64)>,
    /// Every evaluated point in increasing parameter order.
    pub points: Vec<SweepPoint>,
}

fn sweep_point(param: f64, c: &EndpointClassification) -> SweepPoint {
    SweepPoint {
        param,
        verdict: c.verdict,
        sigma_dominant: c.sigma.dominant,
        sigma_recessive: c.sigma.recessive,
        confidence: c.confidence,
        score: c.score,
    }
}

/// Locates the parameter where the classification changes side, by a coarse
/// scan of `coarse` points followed by bisection to width `tol`.
pub fn threshold_sweep<F>(
    family: F,
    range: (f64, f64),
    tol: f64,
    coarse: usize,
    energies: &[f64],
    opts: &ClassifyOptions,
) -> Result<SweepResult>
where
    F: Fn(f64) -> PotentialFamily + Sync,
{
    let (lo, hi) = range;
    if !(hi > lo) || coarse < 2 || !(tol > 0.0) {
        return Err(ConfineError::pre("sweep needs lo < hi, at least two points and tol > 0"));
    }
    let eval = |c: f64| -> Result<SweepPoint> {
        let cls = classify_endpoint_with(&family(c), Endpoint::Left, energies, opts)?;
        Ok(sweep_point(c, &cls))
    };
    let params: Vec<f64> = (0..coarse).map(|i| lo + (hi - lo) * i as f64 / (coarse - 1) as f64).collect();
    let mut points: Vec<SweepPoint> = params.par_iter().map(|c| eval(*c)).collect::<Result<_>>()?;
    let side = |p: &SweepPoint| p.score > 0.0;
    let changes: Vec<usize> = (1..points.len()).filter(|&i| side(&points[i]) != side(&points[i - 1])).collect();
    if changes.len() > 1 {
        let i = changes[1];
        let triple = &points[i - 2..=i.min(points.len() - 1)];
        let desc: Vec<String> = triple.iter().map(|p| format!("({}, {:?}, {:.4})", p.param, p.verdict, p.score)).collect();
        return Err(ConfineError::NonMonotone(desc.join(", ")));
    }
    let mut threshold = None;
    let mut bracket = None;
    if let Some(&i) = changes.first() {
        let (mut a, mut b) = (points[i - 1].clone(), points[i].clone());
        while b.param - a.param > tol {
            let mid = eval(0.5 * (a.param + b.param))?;
            points.push(mid.clone());
            if side(&mid) == side(&a) {
                a = mid;
            } else {
                b = mid;
            }
        }
        threshold = Some(0.5 * (a.param + b.param));
        bracket = Some((a.param, b.param));
    }
    points.sort_by(|x, y| x.param.partial_cmp(&y.param).unwrap());
    let border: Vec<f64> = points.iter().filter(|p| p.verdict == Verdict::Borderline).map(|p| p.param).collect();
    let borderline_band = if border.is_empty() {
        None
    } else {
        Some((border.iter().cloned().fold(f64::INFINITY, f64::min), border.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
    };
    Ok(SweepResult { threshold, bracket, borderline_band, points })
}

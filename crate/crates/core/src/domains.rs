//! Distance to the boundary, reach, and radial reduction for a few simple
//! smooth domains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConfineError, Result};
use crate::potentials::PotentialFamily;
use crate::sturm::{
    classify_endpoint_with, esa_verdict, ClassifyOptions, Endpoint, EndpointClassification, EsaVerdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "params", rename_all = "snake_case")]
pub enum Domain {
    /// `(0, 1)`.
    Interval,
    /// Ball of radius `R` about the origin, in any dimension.
    Disk(f64),
    /// `r < |x| < R`, in any dimension.
    Annulus(f64, f64),
    /// `x²/a² + y²/b² < 1` with `b <= a`.
    Ellipse(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceInfo {
    pub d: f64,
    pub grad: Vec<f64>,
    /// `d >= reach`: the distance may fail to be differentiable here.
    pub near_medial: bool,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Domain::Interval => true,
            Domain::Disk(r) => r > 0.0 && r.is_finite(),
            Domain::Annulus(r, big) => r > 0.0 && big > r && big.is_finite(),
            Domain::Ellipse(a, b) => b > 0.0 && a >= b && a.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(ConfineError::pre(format!("invalid domain parameters {self:?}")))
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Domain::Interval => "interval".into(),
            Domain::Disk(r) => format!("disk(R={r})"),
            Domain::Annulus(r, big) => format!("annulus(r={r},R={big})"),
            Domain::Ellipse(a, b) => format!("ellipse(a={a},b={b})"),
        }
    }

    pub fn dimension(&self) -> Option<usize> {
        match self {
            Domain::Interval => Some(1),
            Domain::Ellipse(..) => Some(2),
            _ => None,
        }
    }

    /// Largest `d` below which the distance is `C²`.
    pub fn reach(&self) -> f64 {
        match *self {
            Domain::Interval => 0.5,
            Domain::Disk(r) => r,
            Domain::Annulus(r, big) => 0.5 * (big - r),
            Domain::Ellipse(a, b) => b * b / a,
        }
    }

    /// Axis-aligned bounding box.
    fn bounds(&self, dim: usize) -> Vec<(f64, f64)> {
        match *self {
            Domain::Interval => vec![(0.0, 1.0)],
            Domain::Disk(r) => vec![(-r, r); dim],
            Domain::Annulus(_, big) => vec![(-big, big); dim],
            Domain::Ellipse(a, b) => vec![(-a, a), (-b, b)],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match *self {
            Domain::Interval => x.len() == 1 && x[0] > 0.0 && x[0] < 1.0,
            Domain::Disk(r) => !x.is_empty() && norm(x) < r,
            Domain::Annulus(r, big) => {
                let n = norm(x);
                !x.is_empty() && n > r && n < big
            }
            Domain::Ellipse(a, b) => x.len() == 2 && (x[0] / a).powi(2) + (x[1] / b).powi(2) < 1.0,
        }
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.dist_and_grad(x)?.d)
    }

    /// `d(x)` and `∇d(x)` for `x` strictly inside.
    pub fn dist_and_grad(&self, x: &[f64]) -> Result<DistanceInfo> {
        self.validate()?;
        if !self.contains(x) {
            return Err(ConfineError::OutsideDomain(format!("{x:?}")));
        }
        let (d, grad) = match *self {
            Domain::Interval => {
                if x[0] <= 0.5 {
                    (x[0], vec![1.0])
                } else {
                    (1.0 - x[0], vec![-1.0])
                }
            }
            Domain::Disk(r) => {
                let n = norm(x);
                (r - n, radial_dir(x, n, -1.0))
            }
            Domain::Annulus(r, big) => {
                let n = norm(x);
                if n - r <= big - n {
                    (n - r, radial_dir(x, n, 1.0))
                } else {
                    (big - n, radial_dir(x, n, -1.0))
                }
            }
            Domain::Ellipse(a, b) => ellipse_distance(a, b, x[0], x[1]),
        };
        Ok(DistanceInfo { d, grad, near_medial: d >= self.reach() })
    }
}

fn radial_dir(x: &[f64], n: f64, sign: f64) -> Vec<f64> {
    if n == 0.0 {
        // every direction is a minimizer at the center
        let mut g = vec![0.0; x.len()];
        g[0] = sign;
        return g;
    }
    x.iter().map(|v| sign * v / n).collect()
}

/// Foot point on the ellipse by scanning the stationarity condition of
/// `|x - (a cos θ, b sin θ)|²` over the first quadrant and bisecting each
/// bracketed root to machine precision.
fn ellipse_distance(a: f64, b: f64, x0: f64, y0: f64) -> (f64, Vec<f64>) {
    let (px, py) = (x0.abs(), y0.abs());
    let stat = |th: f64| (a * a - b * b) * th.sin() * th.cos() - px * a * th.sin() + py * b * th.cos();
    let dist = |th: f64| ((px - a * th.cos()).powi(2) + (py - b * th.sin()).powi(2)).sqrt();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut candidates = vec![0.0, half_pi];
    const PANELS: usize = 64;
    for k in 0..PANELS {
        let (mut lo, mut hi) = (half_pi * k as f64 / PANELS as f64, half_pi * (k + 1) as f64 / PANELS as f64);
        let (mut flo, fhi) = (stat(lo), stat(hi));
        if flo == 0.0 {
            candidates.push(lo);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = stat(mid);
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        candidates.push(0.5 * (lo + hi));
    }
    let th = candidates.into_iter().min_by(|p, q| dist(*p).total_cmp(&dist(*q))).unwrap();
    let (fx, fy) = (a * th.cos(), b * th.sin());
    let d = dist(th);
    let (gx, gy) = if d > 0.0 { ((px - fx) / d, (py - fy) / d) } else { (-th.cos() * b, -th.sin() * a) };
    (d, vec![gx * sign_or_one(x0), gy * sign_or_one(y0)])
}

fn sign_or_one(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradViolation {
    pub x: Vec<f64>,
    pub d: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradNormReport {
    pub domain: Domain,
    pub samples: usize,
    pub checked: usize,
    pub excluded: usize,
    pub max_deviation: f64,
    pub violators: Vec<GradViolation>,
    pub passed: bool,
}

pub const GRAD_TOL: f64 = 1e-6;

/// Central-difference `|∇d|` at seeded uniform samples, drawn until
/// `sample_count` of them lie below the reach. Those must have `|∇d| = 1` within [`GRAD_TOL`]; all must satisfy
/// `|∇d| <= 1 + GRAD_TOL`.
pub fn grad_norm_check(dom: &Domain, sample_count: usize, dim: usize, seed: u64) -> Result<GradNormReport> {
    dom.validate()?;
    if sample_count < 100 {
        return Err(ConfineError::pre("grad_norm_check needs at least 100 samples"));
    }
    let dim = dom.dimension().unwrap_or(dim);
    if dim == 0 {
        return Err(ConfineError::pre("dimension must be positive"));
    }
    let h = 1e-6;
    let reach = dom.reach();
    let bounds = dom.bounds(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(sample_count);
    let mut below_reach = 0;
    let mut draws = 0usize;
    while below_reach < sample_count {
        draws += 1;
        if draws > 1000 * sample_count {
            return Err(ConfineError::pre("too few interior samples fall below the reach"));
        }
        let x: Vec<f64> = bounds.iter().map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect();
        if !dom.contains(&x) {
            continue;
        }
        let d = dom.distance(&x)?;
        if d > 4.0 * h {
            below_reach += usize::from(d < reach);
            points.push(x);
        }
    }
    let total = points.len();
    let results: Vec<(Vec<f64>, f64, f64)> = points
        .into_par_iter()
        .map(|x| {
            let d = dom.distance(&x)?;
            let mut sq = 0.0;
            for k in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[k] += h;
                xm[k] -= h;
                let g = (dom.distance(&xp)? - dom.distance(&xm)?) / (2.0 * h);
                sq += g * g;
            }
            Ok((x, d, sq.sqrt()))
        })
        .collect::<Result<_>>()?;
    let mut checked = 0;
    let mut max_deviation: f64 = 0.0;
    let mut violators = Vec::new();
    for (x, d, g) in results {
        let inside = d < reach;
        let bad = if inside {
            checked += 1;
            max_deviation = max_deviation.max((g - 1.0).abs());
            (g - 1.0).abs() > GRAD_TOL
        } else {
            g > 1.0 + GRAD_TOL
        };
        if bad {
            violators.push(GradViolation { x, d, grad_norm: g });
        }
    }
    Ok(GradNormReport {
        domain: *dom,
        samples: total,
        checked,
        excluded: total - checked,
        max_deviation,
        passed: violators.is_empty(),
        violators,
    })
}

/// Radial part of `-Δ + V` on a ball of radius `R` in `n` dimensions, as a
/// 1-D family in the distance `t = R - r` to the boundary sphere.
pub fn radial_reduce(dom: &Domain, boundary: PotentialFamily, n: u32) -> Result<PotentialFamily> {
    let Domain::Disk(radius) = *dom else {
        return Err(ConfineError::pre("radial reduction is only defined on a disk"));
    };
    let fam = PotentialFamily::RadialReduced { base: Box::new(boundary), n, radius };
    fam.validate()?;
    Ok(fam)
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialVerdict {
    pub n: u32,
    pub boundary: EndpointClassification,
    pub esa: EsaVerdict,
}

/// Classifies the boundary end of the reduced problem. The centre of the
/// ball is an interior point of the domain, where the full operator is
/// regular, so only the boundary sphere decides self-adjointness.
pub fn radial_esa(dom: &Domain, boundary: PotentialFamily, n: u32, opts: &ClassifyOptions) -> Result<RadialVerdict> {
    let fam = radial_reduce(dom, boundary, n)?;
    let c = classify_endpoint_with(&fam, Endpoint::Left, &[0.0], opts)?;
    let esa = esa_verdict(c.verdict, c.verdict);
    Ok(RadialVerdict { n, boundary: c, esa })
}

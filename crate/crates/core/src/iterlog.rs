//! Iterated logarithms evaluated in the log coordinate `s = ln(1/t)`.
//!
//! Every quantity near the boundary is a function of `s`, never of the raw
//! distance `t`. At level 4 the admitted distances lie below `1/e_4`, which
//! no binary float can hold, while the matching `s >= e_3 ~ 3.8e6` is an
//! ordinary number.

use serde::{Deserialize, Serialize};

use crate::error::{ConfineError, Result};

/// Deepest supported hierarchy level. Level 5 needs `s >= e_4 = exp(e_3)`.
pub const MAX_LEVEL: u32 = 4;

/// Largest `s` for which `t = exp(-s)` is materialized.
pub const MAX_MATERIALIZED_S: f64 = 700.0;

// Relative slack at the domain edge so that inputs such as `s = e^e`
// round-tripped through `exp` are admitted at level 3.
const EDGE_SLACK: f64 = 8.0 * f64::EPSILON;

/// Position near the boundary, stored as `s = ln(1/t)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LogCoordinate(f64);

impl LogCoordinate {
    pub fn new(s: f64) -> Result<Self> {
        if s.is_finite() && s > 0.0 {
            Ok(LogCoordinate(s))
        } else {
            Err(ConfineError::pre(format!("log coordinate must be positive and finite, got {s}")))
        }
    }

    pub fn from_t(t: f64) -> Result<Self> {
        if t > 0.0 && t < 1.0 {
            Self::new(-t.ln())
        } else {
            Err(ConfineError::pre(format!("distance must lie in (0, 1), got {t}")))
        }
    }

    #[inline]
    pub fn s(self) -> f64 {
        self.0
    }

    /// The raw distance, only when it is comfortably representable.
    pub fn t(self) -> Option<f64> {
        (self.0 <= MAX_MATERIALIZED_S).then(|| (-self.0).exp())
    }
}

impl TryFrom<f64> for LogCoordinate {
    type Error = ConfineError;
    fn try_from(s: f64) -> Result<Self> {
        Self::new(s)
    }
}

impl From<LogCoordinate> for f64 {
    fn from(x: LogCoordinate) -> f64 {
        x.0
    }
}

/// The tower `e_1 = e`, `e_p = exp(e_{p-1})`, kept as
/// `exp^log_depth(mantissa)` once the plain value overflows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerValue {
    pub p: u32,
    /// Number of pending exponentials; zero means `mantissa` is `e_p` itself.
    pub log_depth: u32,
    pub mantissa: f64,
}

impl TowerValue {
    pub fn is_exact(&self) -> bool {
        self.log_depth == 0
    }

    pub fn value(&self) -> Option<f64> {
        self.is_exact().then_some(self.mantissa)
    }

    /// `ln(e_p) = e_{p-1}` when that is representable.
    pub fn ln_value(&self) -> Option<f64> {
        match self.log_depth {
            0 => Some(self.mantissa.ln()),
            1 => Some(self.mantissa),
            _ => None,
        }
    }
}

pub fn tower_exp(p: u32) -> TowerValue {
    let p = p.max(1);
    let mut value = std::f64::consts::E;
    let mut level = 1;
    while level < p {
        let next = value.exp();
        if !next.is_finite() {
            break;
        }
        value = next;
        level += 1;
    }
    TowerValue { p, log_depth: p - level, mantissa: value }
}

/// Smallest admitted `s` for `L_k`, i.e. `ln(e_k)` with `e_0 = 1`.
pub fn min_s(k: u32) -> Result<f64> {
    match k {
        0 => Ok(0.0),
        1 => Ok(1.0),
        k if k <= MAX_LEVEL => Ok(tower_exp(k - 1).value().expect("e_3 is representable")),
        k => Err(ConfineError::Capability { level: k }),
    }
}

fn check_domain(k: u32, s: f64) -> Result<()> {
    let edge = min_s(k)?;
    if s >= edge * (1.0 - EDGE_SLACK) {
        Ok(())
    } else {
        Err(ConfineError::Domain { level: k, s, min_s: edge })
    }
}

/// `[L_1, ..., L_k]` at `s`, without domain checks.
fn levels(k: u32, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k as usize);
    let mut l = s;
    for j in 0..k {
        if j > 0 {
            l = l.ln();
        }
        out.push(l);
    }
    out
}

/// `L_k(t)` computed from `s`: `L_1 = s`, `L_k = ln L_{k-1}`.
pub fn iterlog(k: u32, x: LogCoordinate) -> Result<f64> {
    if k == 0 {
        return Err(ConfineError::pre("iterlog level must be >= 1"));
    }
    check_domain(k, x.s())?;
    Ok(*levels(k, x.s()).last().unwrap())
}

/// `(L_1 L_2 ... L_k)^{-1}`; the empty product is 1.
pub fn prod_inv(k: u32, x: LogCoordinate) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    check_domain(k, x.s())?;
    let log_sum: f64 = levels(k, x.s()).iter().map(|l| l.ln()).sum();
    Ok((-log_sum).exp())
}

/// `dL_k/ds`, which equals `prod_inv(k - 1)` since `dL_k/dt = -(1/t) prod_inv(k - 1)`.
pub fn iterlog_ds(k: u32, x: LogCoordinate) -> Result<f64> {
    check_domain(k.max(1), x.s())?;
    prod_inv(k.saturating_sub(1), x)
}

/// `sum_{k=2}^{p} prod_inv(k - 1)`. Zero for `p <= 1`.
pub fn script_l(p: u32, x: LogCoordinate) -> Result<f64> {
    if p <= 1 {
        return Ok(0.0);
    }
    check_domain(p - 1, x.s())?;
    let mut sum = 0.0;
    let mut log_prod = 0.0;
    for l in levels(p - 1, x.s()) {
        log_prod += l.ln();
        sum += (-log_prod).exp();
    }
    Ok(sum)
}

/// `X_1(t) = (1 - ln t)^{-1}`, `X_k = X_1(X_{k-1})` on `t in (0, 1]`.
pub fn xk(k: u32, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(ConfineError::pre(format!("X_k needs t in (0, 1], got {t}")));
    }
    Ok(xk_from_log(k, -t.ln()))
}

/// `X_k` evaluated from `ln(1/t) >= 0`, so it never needs the raw `t`.
pub fn xk_from_log(k: u32, log_inv_t: f64) -> f64 {
    let mut x = 1.0 / (1.0 + log_inv_t);
    for _ in 1..k {
        x = 1.0 / (1.0 - x.ln());
    }
    x
}

/// `ln_0(x) = x`, `ln_k(x) = ln(ln_{k-1}(x))` for large arguments.
pub fn lnk(k: u32, x: f64) -> Result<f64> {
    let mut v = x;
    for level in 1..=k {
        if !(v > 0.0) {
            return Err(ConfineError::Domain { level, s: x, min_s: f64::NAN });
        }
        v = v.ln();
    }
    if k > 0 && !(v > 0.0) {
        return Err(ConfineError::Domain { level: k, s: x, min_s: f64::NAN });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn lc(s: f64) -> LogCoordinate {
        LogCoordinate::new(s).unwrap()
    }

    #[test]
    fn tower_values() {
        assert_eq!(tower_exp(1).value(), Some(E));
        assert_relative_eq!(tower_exp(2).value().unwrap(), 15.154262241479262, max_relative = 1e-14);
        let e4 = tower_exp(4);
        assert!(!e4.is_exact());
        assert_eq!(e4.log_depth, 1);
        assert_relative_eq!(e4.ln_value().unwrap(), 3_814_279.104760214, max_relative = 1e-12);
        let e5 = tower_exp(5);
        assert_eq!(e5.log_depth, 2);
        assert_eq!(e5.ln_value(), None);
    }

    #[test]
    fn iterlog_at_domain_edges() {
        assert_eq!(iterlog(1, lc(1.0)).unwrap(), 1.0);
        assert_relative_eq!(iterlog(2, lc(E)).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(iterlog(3, lc(E.exp())).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn iterlog_domain_errors() {
        match iterlog(2, lc(2.0)) {
            Err(ConfineError::Domain { level, .. }) => assert_eq!(level, 2),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(matches!(iterlog(5, lc(1e300)), Err(ConfineError::Capability { level: 5 })));
        // level 4 is reachable in s-space
        assert!(iterlog(4, lc(4.0e6)).unwrap() > 0.0);
    }

    #[test]
    fn prod_inv_examples() {
        assert_eq!(prod_inv(0, lc(0.3)).unwrap(), 1.0);
        assert_relative_eq!(prod_inv(1, lc(4.0)).unwrap(), 0.25, max_relative = 1e-15);
        let s = E.exp();
        assert_relative_eq!(prod_inv(2, lc(s)).unwrap(), 1.0 / (s * E), max_relative = 1e-14);
        assert_relative_eq!(prod_inv(2, lc(s)).unwrap(), 0.024276, epsilon = 1e-6);
    }

    #[test]
    fn script_l_examples() {
        assert_relative_eq!(script_l(2, lc(4.0)).unwrap(), 0.25, max_relative = 1e-15);
        let ee = E.exp();
        assert_relative_eq!(script_l(3, lc(ee)).unwrap(), 1.0 / ee + 1.0 / (ee * E), max_relative = 1e-14);
        assert_relative_eq!(script_l(3, lc(ee)).unwrap(), 0.090264, epsilon = 1e-6);
        assert_relative_eq!(script_l(2, lc(1e6)).unwrap(), 1e-6, max_relative = 1e-14);
    }

    #[test]
    fn xk_and_lnk_examples() {
        assert_eq!(xk(1, 1.0).unwrap(), 1.0);
        assert_relative_eq!(xk(1, 1.0 / E).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(xk(2, 1.0 / E).unwrap(), 1.0 / (1.0 + 2f64.ln()), max_relative = 1e-15);
        assert_relative_eq!(xk(2, 1.0 / E).unwrap(), 0.59061, epsilon = 1e-5);
        assert!(xk(1, 0.0).is_err());
        assert_eq!(lnk(0, 7.0).unwrap(), 7.0);
        assert_relative_eq!(lnk(1, E).unwrap(), 1.0);
        assert_relative_eq!(lnk(2, E.exp()).unwrap(), 1.0, max_relative = 1e-15);
        assert!(lnk(2, 2.0).is_err());
    }

    #[test]
    fn materialization_limit() {
        assert!(lc(700.0).t().is_some());
        assert!(lc(700.5).t().is_none());
    }

    proptest! {
        #[test]
        fn derivative_matches_closed_form(k in 1u32..=3, frac in 0.0f64..1.0) {
            // s in [2 * min_s, 1e5]
            let lo = (2.0 * min_s(k).unwrap()).max(2.0);
            let s = lo + frac * (1e5 - lo);
            let h = 1e-4 * s;
            let fd = (iterlog(k, lc(s + h)).unwrap() - iterlog(k, lc(s - h)).unwrap()) / (2.0 * h);
            // dL/dt = -(1/t) dL/ds ; compare in s to avoid materializing t
            let exact = iterlog_ds(k, lc(s)).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs());
        }

        #[test]
        fn prod_inv_inverts_product(k in 1u32..=4, s in 4.0e6f64..1e12) {
            let prod: f64 = (1..=k).map(|j| iterlog(j, lc(s)).unwrap()).product();
            let p = prod_inv(k, lc(s)).unwrap();
            prop_assert!((p * prod - 1.0).abs() < 1e-12);
        }

        #[test]
        fn iterlog_increasing_in_s(k in 1u32..=3, s in 20.0f64..1e6, ds in 1e-3f64..10.0) {
            prop_assert!(iterlog(k, lc(s + ds)).unwrap() > iterlog(k, lc(s)).unwrap());
            prop_assert!(iterlog(k, lc(s)).unwrap() > 0.0);
        }

        #[test]
        fn script_l_monotone(p in 2u32..=3, s in 20.0f64..1e6, ds in 1e-2f64..10.0) {
            prop_assert!(script_l(p, lc(s + ds)).unwrap() < script_l(p, lc(s)).unwrap());
            prop_assert!(script_l(p + 1, lc(s)).unwrap() > script_l(p, lc(s)).unwrap());
        }

        #[test]
        fn xk_in_unit_interval(k in 1u32..=4, t in 1e-300f64..1.0, f in 0.01f64..0.99) {
            let x = xk(k, t).unwrap();
            prop_assert!(x > 0.0 && x <= 1.0);
            prop_assert!(xk(k, t * f).unwrap() < x);
        }
    }
}

//! Time-varying coefficients `h, r, p, q` of the continuous dynamics
//!
//! ```text
//! v' = p(t) S(x) - q(t) v
//! m' = h(t) ∇F(x) - r(t) m
//! x' = -m / sqrt(v + ε)
//! ```
//!
//! and their discrete samples `h_n = h(τ_n)` etc. used by the stochastic
//! algorithms. Every schedule carries its limits `(h∞, r∞, p∞, q∞)`
//! explicitly; limits are never extrapolated from samples.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Below this time the Nesterov damping `α/t` is refused.
pub const NAG_MIN_TIME: f64 = 1e-12;

/// Relative slack allowed when checking monotonicity on a grid.
const MONOTONE_SLACK: f64 = 1e-12;

/// Relative tolerance for the tail checks (convergence of `p`, declared limits).
const TAIL_TOLERANCE: f64 = 1e-3;

/// Adam coefficient `a(t, λ, α) = λ⁻¹(1 − e^{−λα}) / (1 − e^{−αt})`.
pub fn adam_a(t: f64, lambda: f64, alpha: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("adam coefficient needs t > 0, got {t}")));
    }
    if !(lambda > 0.0) || !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "adam coefficient needs λ > 0 and α > 0, got λ = {lambda}, α = {alpha}"
        )));
    }
    Ok(adam_limit(lambda, alpha) / -(-alpha * t).exp_m1())
}

/// `lim_{t→∞} a(t, λ, α) = λ⁻¹(1 − e^{−λα})`.
fn adam_limit(lambda: f64, alpha: f64) -> f64 {
    -(-lambda * alpha).exp_m1() / lambda
}

/// A user-supplied coefficient function together with its declared limit.
#[derive(Clone)]
pub struct Coefficient {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    limit: f64,
}

impl Coefficient {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, limit: f64) -> Self {
        Self { f: Arc::new(f), limit }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, c)
    }

    /// `limit + amplitude / (1 + t)^rate`, declared limit `limit`.
    pub fn power_law(limit: f64, amplitude: f64, rate: f64) -> Self {
        Self::new(move |t| limit + amplitude / (1.0 + t).powf(rate), limit)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficient")
            .field("limit", &self.limit)
            .finish_non_exhaustive()
    }
}

/// The four coefficient functions.
#[derive(Debug, Clone)]
pub enum ScheduleSpec {
    /// `h = r = a(·, λ, α₁)`, `p = q = a(·, λ, α₂)`.
    Adam {
        lambda: f64,
        alpha1: f64,
        alpha2: f64,
    },
    Constant {
        h: f64,
        r: f64,
        p: f64,
        q: f64,
    },
    /// `h = r ≡ r`, `p = q ≡ 0`.
    HeavyBall {
        r: f64,
    },
    /// `h ≡ 1`, `r(t) = α/t`, `p = q ≡ 0`.
    Nag {
        alpha: f64,
    },
    Custom {
        h: Coefficient,
        r: Coefficient,
        p: Coefficient,
        q: Coefficient,
    },
}

/// Coefficient values at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleValues {
    pub h: f64,
    pub r: f64,
    pub p: f64,
    pub q: f64,
}

/// `(h∞, r∞, p∞, q∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub h: f64,
    pub r: f64,
    pub p: f64,
    pub q: f64,
}

impl Limits {
    pub fn new(h: f64, r: f64, p: f64, q: f64) -> Self {
        Self { h, r, p, q }
    }

    /// The equilibrium second moment `p∞ s / q∞` for one coordinate of `S(x*)`.
    pub fn v_star_component(&self, s: f64) -> Result<f64> {
        if !(self.q > 0.0) {
            return Err(Error::Domain(format!("v* needs q∞ > 0, got {}", self.q)));
        }
        Ok(self.p * s / self.q)
    }
}

impl From<Limits> for ScheduleValues {
    fn from(l: Limits) -> Self {
        Self {
            h: l.h,
            r: l.r,
            p: l.p,
            q: l.q,
        }
    }
}

impl ScheduleSpec {
    pub fn adam(lambda: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        let s = Self::Adam { lambda, alpha1, alpha2 };
        s.validate_params()?;
        Ok(s)
    }

    pub fn constant(h: f64, r: f64, p: f64, q: f64) -> Result<Self> {
        let s = Self::Constant { h, r, p, q };
        s.validate_params()?;
        Ok(s)
    }

    pub fn heavy_ball(r: f64) -> Result<Self> {
        let s = Self::HeavyBall { r };
        s.validate_params()?;
        Ok(s)
    }

    pub fn nag(alpha: f64) -> Result<Self> {
        let s = Self::Nag { alpha };
        s.validate_params()?;
        Ok(s)
    }

    /// Checks the kind's parameter constraints.
    pub fn validate_params(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "schedule parameter {name} must be positive, got {v}"
                )))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "schedule parameter {name} must be nonnegative, got {v}"
                )))
            }
        };
        match self {
            Self::Adam { lambda, alpha1, alpha2 } => {
                positive("lambda", *lambda)?;
                positive("alpha1", *alpha1)?;
                positive("alpha2", *alpha2)
            }
            Self::Constant { h, r, p, q } => {
                nonneg("h", *h)?;
                nonneg("r", *r)?;
                nonneg("p", *p)?;
                nonneg("q", *q)
            }
            Self::HeavyBall { r } => positive("r", *r),
            Self::Nag { alpha } => positive("alpha", *alpha),
            Self::Custom { h, r, p, q } => {
                nonneg("h limit", h.limit())?;
                nonneg("r limit", r.limit())?;
                nonneg("p limit", p.limit())?;
                nonneg("q limit", q.limit())
            }
        }
    }

    /// Evaluates the four coefficients at `t > 0`.
    pub fn eval(&self, t: f64) -> Result<ScheduleValues> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("schedule evaluated at t = {t}; need t > 0")));
        }
        let values = match self {
            Self::Adam { lambda, alpha1, alpha2 } => {
                let a1 = adam_a(t, *lambda, *alpha1)?;
                let a2 = adam_a(t, *lambda, *alpha2)?;
                ScheduleValues {
                    h: a1,
                    r: a1,
                    p: a2,
                    q: a2,
                }
            }
            Self::Constant { h, r, p, q } => ScheduleValues {
                h: *h,
                r: *r,
                p: *p,
                q: *q,
            },
            Self::HeavyBall { r } => ScheduleValues {
                h: *r,
                r: *r,
                p: 0.0,
                q: 0.0,
            },
            Self::Nag { alpha } => {
                if t < NAG_MIN_TIME {
                    return Err(Error::Domain(format!(
                        "nesterov schedule evaluated at t = {t:e} < {NAG_MIN_TIME:e}"
                    )));
                }
                ScheduleValues {
                    h: 1.0,
                    r: alpha / t,
                    p: 0.0,
                    q: 0.0,
                }
            }
            Self::Custom { h, r, p, q } => ScheduleValues {
                h: h.eval(t),
                r: r.eval(t),
                p: p.eval(t),
                q: q.eval(t),
            },
        };
        for (name, v) in [("h", values.h), ("r", values.r), ("p", values.p), ("q", values.q)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "coefficient {name}({t}) = {v} is not a finite nonnegative number"
                )));
            }
        }
        Ok(values)
    }

    pub fn limits(&self) -> Limits {
        match self {
            Self::Adam { lambda, alpha1, alpha2 } => {
                let a1 = adam_limit(*lambda, *alpha1);
                let a2 = adam_limit(*lambda, *alpha2);
                Limits::new(a1, a1, a2, a2)
            }
            Self::Constant { h, r, p, q } => Limits::new(*h, *r, *p, *q),
            Self::HeavyBall { r } => Limits::new(*r, *r, 0.0, 0.0),
            Self::Nag { .. } => Limits::new(1.0, 0.0, 0.0, 0.0),
            Self::Custom { h, r, p, q } => Limits::new(h.limit(), r.limit(), p.limit(), q.limit()),
        }
    }

    /// `(lim_{t↓0} h/r, lim_{t↓0} p/q)`, used by the compatible initial condition.
    ///
    /// A ratio with a vanishing denominator and numerator (heavy ball's `p/q`) is taken as 0.
    pub fn small_time_ratios(&self) -> (f64, f64) {
        match self {
            Self::Adam { .. } => (1.0, 1.0),
            Self::Constant { h, r, p, q } => (ratio(*h, *r), ratio(*p, *q)),
            Self::HeavyBall { .. } => (1.0, 0.0),
            Self::Nag { .. } => (0.0, 0.0),
            Self::Custom { h, r, p, q } => {
                let t = 1e-9;
                (ratio(h.eval(t), r.eval(t)), ratio(p.eval(t), q.eval(t)))
            }
        }
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// 64 log-spaced points in `[1e-3, 1e6]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-3, 1e6, 64)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// One checked clause of the schedule hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub id: &'static str,
    pub holds: bool,
    pub detail: String,
}

/// Result of [`validate_assumptions`]. Passing is a necessary condition
/// observed on the grid, not a proof.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub clauses: Vec<Clause>,
}

impl ValidationReport {
    pub fn all_hold(&self) -> bool {
        self.clauses.iter().all(|c| c.holds)
    }

    pub fn holds(&self, id: &str) -> Option<bool> {
        self.clauses.iter().find(|c| c.id == id).map(|c| c.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter().filter(|c| !c.holds)
    }
}

/// Checks the schedule hypotheses clause by clause on `grid`.
///
/// Clauses: `h_nonincreasing`, `h_limit_positive`, `r_nonincreasing`,
/// `q_nonincreasing`, `r_limit_positive`, `q_limit_positive`,
/// `p_convergent` (heuristic: the tail of the grid has stabilized near the
/// declared limit), `r_dominates_q` (`r(t) ≥ q(t)/4` at every grid point),
/// `limit_margin` (`r∞ > q∞/4`) and `limits_consistent` (declared limits
/// match the last grid sample).
pub fn validate_assumptions(spec: &ScheduleSpec, grid: &[f64]) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::Domain("validation grid is empty".into()));
    }
    if grid.iter().any(|&t| !(t > 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "validation grid must be positive and strictly increasing".into(),
        ));
    }
    let samples = grid.iter().map(|&t| spec.eval(t)).collect::<Result<Vec<_>>>()?;
    let lim = spec.limits();
    let series = |pick: fn(&ScheduleValues) -> f64| samples.iter().map(pick).collect::<Vec<_>>();
    let (hs, rs, ps, qs) = (series(|s| s.h), series(|s| s.r), series(|s| s.p), series(|s| s.q));

    let mut clauses = Vec::new();
    let mut push = |id: &'static str, holds: bool, detail: String| clauses.push(Clause { id, holds, detail });

    for (id, xs) in [
        ("h_nonincreasing", &hs),
        ("r_nonincreasing", &rs),
        ("q_nonincreasing", &qs),
    ] {
        match first_increase(grid, xs) {
            None => push(id, true, "nonincreasing on grid".into()),
            Some((t, a, b)) => push(id, false, format!("increases near t = {t:e}: {a} -> {b}")),
        }
    }
    for (id, name, l) in [
        ("h_limit_positive", "h∞", lim.h),
        ("r_limit_positive", "r∞", lim.r),
        ("q_limit_positive", "q∞", lim.q),
    ] {
        push(id, l > 0.0, format!("{name} = {l}"));
    }

    let tail_start = (grid.len() * 3 / 4).min(grid.len().saturating_sub(2));
    let tail = &ps[tail_start..];
    let spread =
        tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = lim.p.abs().max(1.0);
    let gap = (ps[ps.len() - 1] - lim.p).abs();
    push(
        "p_convergent",
        spread <= TAIL_TOLERANCE * scale && gap <= TAIL_TOLERANCE * scale,
        format!("tail spread {spread:e}, distance to p∞ {gap:e} (heuristic)"),
    );

    let violation = grid
        .iter()
        .zip(rs.iter().zip(&qs))
        .find(|(_, (r, q))| **r < **q / 4.0 - MONOTONE_SLACK * q.abs().max(1.0));
    match violation {
        None => push("r_dominates_q", true, "r(t) >= q(t)/4 on grid".into()),
        Some((t, (r, q))) => push("r_dominates_q", false, format!("r({t:e}) = {r} < q/4 = {}", q / 4.0)),
    }
    push(
        "limit_margin",
        lim.r > lim.q / 4.0,
        format!("r∞ = {}, q∞/4 = {}", lim.r, lim.q / 4.0),
    );

    let last = samples[samples.len() - 1];
    let worst = [(last.h, lim.h), (last.r, lim.r), (last.p, lim.p), (last.q, lim.q)]
        .iter()
        .map(|(v, l)| (v - l).abs() / l.abs().max(1.0))
        .fold(0.0, f64::max);
    push(
        "limits_consistent",
        worst <= TAIL_TOLERANCE,
        format!("largest relative gap at t = {:e}: {worst:e}", grid[grid.len() - 1]),
    );

    Ok(ValidationReport { clauses })
}

fn first_increase(grid: &[f64], xs: &[f64]) -> Option<(f64, f64, f64)> {
    xs.windows(2)
        .zip(grid.windows(2))
        .find(|(w, _)| w[1] > w[0] + MONOTONE_SLACK * w[0].abs().max(1.0))
        .map(|(w, g)| (g[1], w[0], w[1]))
}

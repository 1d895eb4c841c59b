//! RK4 integration of the continuous-time dynamics and the energies that
//! decrease along them.
//!
//! Three systems are covered:
//!
//! * `General`: `v' = pS(x) − qv`, `m' = h∇F(x) − rm`, `x' = −m/√(v+ε)`;
//! * `Adagrad`: `v' = pS(x) − qv`, `x' = −∇F(x)/√(v+ε)`;
//! * `Nesterov`: `m' = ∇F(x) − (α/t)m`, `x' = −m`.

use std::ops::Range;

use crate::error::{check_dim, Error, Result};
use crate::problems::{l2, Problem};
use crate::schedules::{Limits, ScheduleSpec};
use crate::state::IterateState;

/// Components of `v` in `(−V_CLIP, 0)` after an accepted step are roundoff and reset to 0.
pub const V_CLIP: f64 = 1e-14;
pub const BLOW_UP_NORM: f64 = 1e12;
pub const DEFAULT_T0: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeKind {
    General,
    Adagrad,
    Nesterov { alpha: f64 },
}

impl OdeKind {
    pub fn has_v(self) -> bool {
        !matches!(self, Self::Nesterov { .. })
    }

    pub fn has_m(self) -> bool {
        !matches!(self, Self::Adagrad)
    }

    /// `(0, 0, x)` with the components this kind does not carry left empty.
    pub fn state_at_rest(self, x: Vec<f64>) -> IterateState {
        let d = x.len();
        IterateState {
            v: if self.has_v() { vec![0.0; d] } else { Vec::new() },
            m: if self.has_m() { vec![0.0; d] } else { Vec::new() },
            x,
        }
    }

    fn check_state(self, z: &IterateState) -> Result<()> {
        let d = z.x.len();
        check_dim(if self.has_v() { d } else { 0 }, z.v.len())?;
        check_dim(if self.has_m() { d } else { 0 }, z.m.len())
    }
}

/// Initial state with `m₀ = ∇F(x₀)·lim h/r` and `v₀ = S(x₀)·lim p/q` as `t ↓ 0`.
pub fn compatible_initial_state(
    kind: OdeKind,
    spec: &ScheduleSpec,
    problem: &Problem,
    x0: Vec<f64>,
) -> Result<IterateState> {
    check_dim(problem.dim(), x0.len())?;
    let (hr, pq) = spec.small_time_ratios();
    let mut z = kind.state_at_rest(x0);
    if kind.has_v() {
        z.v = problem.second_moment(&z.x)?.into_iter().map(|s| s * pq).collect();
    }
    if kind.has_m() && !matches!(kind, OdeKind::Nesterov { .. }) {
        z.m = problem.grad(&z.x).into_iter().map(|g| g * hr).collect();
    }
    Ok(z)
}

/// The vector field of `kind` at `(z, t)`.
pub fn rhs(
    kind: OdeKind,
    spec: &ScheduleSpec,
    problem: &Problem,
    z: &IterateState,
    t: f64,
    eps: f64,
) -> Result<IterateState> {
    kind.check_state(z)?;
    check_dim(problem.dim(), z.dim())?;
    let sys = System::new(kind, spec, problem, eps)?;
    let y = sys.pack(z);
    let mut dy = vec![0.0; y.len()];
    sys.eval(t, &y, &mut dy)?;
    Ok(sys.unpack(&dy))
}

/// Flat `[v, m, x]` layout of the state for a given kind.
struct System<'a> {
    kind: OdeKind,
    spec: &'a ScheduleSpec,
    problem: &'a Problem,
    eps: f64,
    d: usize,
}

impl<'a> System<'a> {
    fn new(kind: OdeKind, spec: &'a ScheduleSpec, problem: &'a Problem, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("ε must be positive, got {eps}")));
        }
        Ok(Self {
            kind,
            spec,
            problem,
            eps,
            d: problem.dim(),
        })
    }

    fn v_range(&self) -> Range<usize> {
        if self.kind.has_v() {
            0..self.d
        } else {
            0..0
        }
    }

    fn m_range(&self) -> Range<usize> {
        let start = self.v_range().end;
        if self.kind.has_m() {
            start..start + self.d
        } else {
            start..start
        }
    }

    fn x_range(&self) -> Range<usize> {
        let start = self.m_range().end;
        start..start + self.d
    }

    fn pack(&self, z: &IterateState) -> Vec<f64> {
        z.v.iter().chain(&z.m).chain(&z.x).copied().collect()
    }

    fn unpack(&self, y: &[f64]) -> IterateState {
        IterateState {
            v: y[self.v_range()].to_vec(),
            m: y[self.m_range()].to_vec(),
            x: y[self.x_range()].to_vec(),
        }
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (vr, mr, xr) = (self.v_range(), self.m_range(), self.x_range());
        let x = &y[xr.clone()];
        let mut grad = vec![0.0; self.d];
        self.problem.grad_into(x, &mut grad);

        if let OdeKind::Nesterov { alpha } = self.kind {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("nesterov field evaluated at t = {t}")));
            }
            for i in 0..self.d {
                let m = y[mr.start + i];
                dy[mr.start + i] = grad[i] - alpha / t * m;
                dy[xr.start + i] = -m;
            }
            return Ok(());
        }

        let c = self.spec.eval(t)?;
        let v = &y[vr.clone()];
        if let Some(bad) = v.iter().find(|&&vi| vi < -self.eps) {
            return Err(Error::Domain(format!("v component {bad} below −ε")));
        }
        let s = self.problem.second_moment(x)?;
        for i in 0..self.d {
            dy[vr.start + i] = c.p * s[i] - c.q * v[i];
        }
        for i in 0..self.d {
            let precond = 1.0 / (v[i] + self.eps).sqrt();
            if self.kind == OdeKind::General {
                let m = y[mr.start + i];
                dy[mr.start + i] = c.h * grad[i] - c.r * m;
                dy[xr.start + i] = -m * precond;
            } else {
                dy[xr.start + i] = -grad[i] * precond;
            }
        }
        Ok(())
    }

    fn energy(&self, t: f64, z: &IterateState) -> Result<f64> {
        match self.kind {
            OdeKind::General => {
                let h = self.spec.eval(t)?.h;
                Ok(energy(h, z, self.problem, self.eps))
            }
            OdeKind::Adagrad => Ok(self.problem.value(&z.x) - self.problem.f_star()),
            OdeKind::Nesterov { .. } => Ok(energy_nesterov(z, self.problem)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    /// Base (maximal) step.
    pub step: f64,
    /// Step-halving tolerance; `None` integrates with the fixed base step.
    pub tol: Option<f64>,
    /// Smallest step allowed, relative to `max(1, t)`.
    pub min_step: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            step: 1e-2,
            tol: Some(1e-8),
            min_step: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: OdeKind,
    pub times: Vec<f64>,
    pub states: Vec<IterateState>,
    pub energies: Vec<f64>,
    /// Error estimate of the step that produced each state (0 for the initial state).
    pub local_errors: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &IterateState {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Integrates `kind` from `(t0, z0)` to `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    kind: OdeKind,
    spec: &ScheduleSpec,
    problem: &Problem,
    z0: &IterateState,
    t0: f64,
    t_end: f64,
    eps: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    kind.check_state(z0)?;
    check_dim(problem.dim(), z0.dim())?;
    if !(t0 > 0.0) || !(t_end >= t0) {
        return Err(Error::Domain(format!(
            "integration interval needs 0 < t0 <= T, got [{t0}, {t_end}]"
        )));
    }
    if !z0.v_nonnegative() {
        return Err(Error::Domain("initial v has negative components".into()));
    }
    let sys = System::new(kind, spec, problem, eps)?;
    let path = solve(
        |t, y, dy| sys.eval(t, y, dy),
        &sys.pack(z0),
        t0,
        t_end,
        opts,
        sys.v_range(),
    )?;

    let mut traj = Trajectory {
        kind,
        times: path.times,
        states: Vec::with_capacity(path.states.len()),
        energies: Vec::with_capacity(path.states.len()),
        local_errors: path.errors,
    };
    for (t, y) in traj.times.iter().zip(&path.states) {
        let z = sys.unpack(y);
        traj.energies.push(sys.energy(*t, &z)?);
        traj.states.push(z);
    }
    Ok(traj)
}

pub(crate) struct Path {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub errors: Vec<f64>,
}

fn rk4<F>(f: &F, t: f64, y: &[f64], h: f64, out: &mut [f64]) -> Result<()>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    f(t, y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4)?;
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

/// RK4 with step halving. Components in `nonneg` must stay `≥ 0`.
pub(crate) fn solve<F>(
    f: F,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    opts: IntegrateOptions,
    nonneg: Range<usize>,
) -> Result<Path>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(opts.step > 0.0) {
        return Err(Error::Domain(format!(
            "integration step must be positive, got {}",
            opts.step
        )));
    }
    let n = y0.len();
    let mut path = Path {
        times: vec![t0],
        states: vec![y0.to_vec()],
        errors: vec![0.0],
    };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = opts.step;
    let (mut full, mut half, mut two_half) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    while t < t_end {
        let remaining = t_end - t;
        let last = h >= remaining;
        let dt = if last { remaining } else { h };
        if dt <= opts.min_step * t.abs().max(1.0) && !last {
            return Err(Error::StepUnderflow(t));
        }

        let err = match opts.tol {
            None => {
                rk4(&f, t, &y, dt, &mut two_half)?;
                0.0
            }
            Some(tol) => {
                let trial = rk4(&f, t, &y, dt, &mut full)
                    .and_then(|_| rk4(&f, t, &y, 0.5 * dt, &mut half))
                    .and_then(|_| rk4(&f, t + 0.5 * dt, &half, 0.5 * dt, &mut two_half));
                let err = match trial {
                    Ok(()) => full
                        .iter()
                        .zip(&two_half)
                        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
                        .fold(0.0, f64::max),
                    Err(_) => f64::INFINITY,
                };
                let violates = two_half[nonneg.clone()].iter().any(|&v| v <= -V_CLIP);
                if !(err <= tol) || violates || two_half.iter().any(|c| !c.is_finite()) {
                    h = 0.5 * dt;
                    if h <= opts.min_step * t.abs().max(1.0) {
                        return Err(Error::StepUnderflow(t));
                    }
                    continue;
                }
                if err < tol / 64.0 && h < opts.step {
                    h = (2.0 * h).min(opts.step);
                }
                err
            }
        };

        for v in &mut two_half[nonneg.clone()] {
            if *v < 0.0 {
                if *v <= -V_CLIP {
                    return Err(Error::Domain(format!("v component {v} became negative at t = {t}")));
                }
                *v = 0.0;
            }
        }
        t = if last { t_end } else { t + dt };
        std::mem::swap(&mut y, &mut two_half);
        let norm = l2(&y);
        if !(norm <= BLOW_UP_NORM) {
            return Err(Error::BlowUp { t, norm });
        }
        path.times.push(t);
        path.states.push(y.clone());
        path.errors.push(err);
    }
    Ok(path)
}

/// `h(F(x) − F⋆) + ½‖m/(v+ε)^{1/4}‖²`.
pub fn energy(h: f64, z: &IterateState, problem: &Problem, eps: f64) -> f64 {
    let kinetic: f64 = z.m.iter().zip(&z.v).map(|(m, v)| m * m / (v + eps).sqrt()).sum();
    h * (problem.value(&z.x) - problem.f_star()) + 0.5 * kinetic
}

/// `F(x) + ½‖m‖²`.
pub fn energy_nesterov(z: &IterateState, problem: &Problem) -> f64 {
    problem.value(&z.x) + 0.5 * z.m.iter().map(|m| m * m).sum::<f64>()
}

/// `𝓔∞(z) − δ⟨∇F(x), m⟩ + δ‖q∞v − p∞S(x)‖²`.
pub fn w_delta(z: &IterateState, delta: f64, limits: &Limits, problem: &Problem, eps: f64) -> Result<f64> {
    let g = problem.grad(&z.x);
    let s = problem.second_moment(&z.x)?;
    let cross: f64 = g.iter().zip(&z.m).map(|(a, b)| a * b).sum();
    let gap: f64 =
        z.v.iter()
            .zip(&s)
            .map(|(v, s)| (limits.q * v - limits.p * s).powi(2))
            .sum();
    Ok(energy(limits.h, z, problem, eps) - delta * cross + delta * gap)
}

/// `max(‖∇F(x)‖, ‖m‖, ‖q∞v − p∞S(x)‖)`; the last term is dropped for Nesterov.
pub fn residual_to_equilibrium(kind: OdeKind, z: &IterateState, limits: &Limits, problem: &Problem) -> Result<f64> {
    let mut res = l2(&problem.grad(&z.x)).max(l2(&z.m));
    if kind.has_v() {
        let s = problem.second_moment(&z.x)?;
        let gap: Vec<f64> = z.v.iter().zip(&s).map(|(v, s)| limits.q * v - limits.p * s).collect();
        res = res.max(l2(&gap));
    }
    Ok(res)
}

/// `(κ, β) = (√(2α + 2), κ²/4)`.
pub fn change_of_variable_constants(alpha: f64) -> (f64, f64) {
    let kappa = (2.0 * alpha + 2.0).sqrt();
    (kappa, kappa * kappa / 4.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeOfVariableReport {
    pub kappa: f64,
    pub beta: f64,
    /// Transformed times at which the residual was evaluated.
    pub grid: Vec<f64>,
    /// `max ‖ẏ − (β/t)(∇F(u) − y)‖∞` over the grid.
    pub residual_y: f64,
    /// `max ‖u̇ + y‖∞` over the grid.
    pub residual_u: f64,
    /// Largest gap between the transformed trajectory and an independent
    /// integration of the transformed system from the same start.
    pub transport_gap: f64,
}

impl ChangeOfVariableReport {
    pub fn residual(&self) -> f64 {
        self.residual_y.max(self.residual_u)
    }
}

/// Checks that `y(t) = κ m(κ√t) / (2√t)`, `u(t) = x(κ√t)` solves
/// `ẏ = (β/t)(∇F(u) − y)`, `u̇ = −y` along a Nesterov trajectory.
///
/// `(m, x)` and their time derivatives are recovered between nodes by cubic
/// Hermite interpolation; the derivative of the interpolant enters the
/// residual, so it measures the discretization error of the trajectory.
/// The check grid holds `n_check` points spread uniformly in transformed time.
pub fn nesterov_change_of_variable(
    traj: &Trajectory,
    problem: &Problem,
    n_check: usize,
) -> Result<ChangeOfVariableReport> {
    let alpha = match traj.kind {
        OdeKind::Nesterov { alpha } => alpha,
        other => {
            return Err(Error::Domain(format!(
                "change of variable needs a Nesterov trajectory, got {other:?}"
            )))
        }
    };
    if traj.len() < 2 || n_check == 0 {
        return Err(Error::Range(
            "trajectory too short for the change-of-variable check".into(),
        ));
    }
    let (kappa, _) = change_of_variable_constants(alpha);
    let (s0, s1) = (traj.times[0], traj.times[traj.len() - 1]);
    let (tau0, tau1) = ((s0 / kappa).powi(2), (s1 / kappa).powi(2));
    let grid: Vec<f64> = (1..=n_check)
        .map(|i| tau0 + (tau1 - tau0) * i as f64 / (n_check + 1) as f64)
        .collect();
    nesterov_change_of_variable_on_grid(traj, problem, &grid)
}

/// As [`nesterov_change_of_variable`] on a caller-supplied grid of transformed times.
pub fn nesterov_change_of_variable_on_grid(
    traj: &Trajectory,
    problem: &Problem,
    grid: &[f64],
) -> Result<ChangeOfVariableReport> {
    let OdeKind::Nesterov { alpha } = traj.kind else {
        return Err(Error::Domain("change of variable needs a Nesterov trajectory".into()));
    };
    let (kappa, beta) = change_of_variable_constants(alpha);
    let d = problem.dim();
    let (s_first, s_last) = (traj.times[0], traj.times[traj.len() - 1]);
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("check grid must be strictly increasing".into()));
    }
    for &tau in grid {
        let s = kappa * tau.max(0.0).sqrt();
        if !(tau > 0.0) || s < s_first || s > s_last {
            return Err(Error::Range(format!(
                "κ√t = {s} at t = {tau} lies outside the trajectory [{s_first}, {s_last}]"
            )));
        }
    }

    // Node derivatives of (m, x) from the vector field.
    let node_derivs: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, z)| {
            let g = problem.grad(&z.x);
            let dm = (0..d).map(|i| g[i] - alpha / t * z.m[i]);
            let dx = z.m.iter().map(|m| -m);
            dm.chain(dx).collect()
        })
        .collect();
    let node_states: Vec<Vec<f64>> = traj
        .states
        .iter()
        .map(|z| z.m.iter().chain(&z.x).copied().collect())
        .collect();

    let transform = |tau: f64, state: &[f64]| -> Vec<f64> {
        let c = kappa / (2.0 * tau.sqrt());
        state[..d]
            .iter()
            .map(|m| c * m)
            .chain(state[d..].iter().copied())
            .collect()
    };

    let mut residual_y = 0.0f64;
    let mut residual_u = 0.0f64;
    let mut interpolated = Vec::with_capacity(grid.len());
    let mut seg = 0;
    for &tau in grid {
        let s = kappa * tau.sqrt();
        while seg + 2 < traj.len() && traj.times[seg + 1] < s {
            seg += 1;
        }
        let (ta, tb) = (traj.times[seg], traj.times[seg + 1]);
        let (state, dstate) = hermite(
            ta,
            tb,
            &node_states[seg],
            &node_states[seg + 1],
            &node_derivs[seg],
            &node_derivs[seg + 1],
            s,
        );
        let (m, x) = state.split_at(d);
        let (dm, dx) = dstate.split_at(d);
        let ds = kappa / (2.0 * tau.sqrt());
        let g = problem.grad(x);
        for i in 0..d {
            let y = ds * m[i];
            let ydot = ds * ds * dm[i] - kappa * m[i] / (4.0 * tau.powf(1.5));
            let udot = ds * dx[i];
            residual_y = residual_y.max((ydot - beta / tau * (g[i] - y)).abs());
            residual_u = residual_u.max((udot + y).abs());
        }
        interpolated.push(transform(tau, &state));
    }

    // Independent integration of the transformed system from the first node.
    let tau_start = (s_first / kappa).powi(2);
    let y0 = transform(tau_start, &node_states[0]);
    let field = |t: f64, w: &[f64], dw: &mut [f64]| -> Result<()> {
        let g = problem.grad(&w[d..]);
        for i in 0..d {
            dw[i] = beta / t * (g[i] - w[i]);
            dw[d + i] = -w[i];
        }
        Ok(())
    };
    let mut transport_gap = 0.0f64;
    let mut t = tau_start;
    let mut w = y0;
    let step = (traj.times[1] - traj.times[0]).min(1e-2);
    let opts = IntegrateOptions {
        step,
        tol: Some(1e-10),
        min_step: 1e-14,
    };
    for (&tau, target) in grid.iter().zip(&interpolated) {
        if tau > t {
            let path = solve(field, &w, t, tau, opts, 0..0)?;
            w = path.states.last().cloned().expect("path is nonempty");
            t = tau;
        }
        let gap = w.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        transport_gap = transport_gap.max(gap);
    }

    Ok(ChangeOfVariableReport {
        kappa,
        beta,
        grid: grid.to_vec(),
        residual_y,
        residual_u,
        transport_gap,
    })
}

/// Cubic Hermite interpolant on `[ta, tb]` and its derivative at `s`.
fn hermite(ta: f64, tb: f64, ya: &[f64], yb: &[f64], da: &[f64], db: &[f64], s: f64) -> (Vec<f64>, Vec<f64>) {
    let h = tb - ta;
    let u = (s - ta) / h;
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    let d00 = (6.0 * u2 - 6.0 * u) / h;
    let d10 = 3.0 * u2 - 4.0 * u + 1.0;
    let d01 = (-6.0 * u2 + 6.0 * u) / h;
    let d11 = 3.0 * u2 - 2.0 * u;
    let value = (0..ya.len())
        .map(|i| h00 * ya[i] + h10 * h * da[i] + h01 * yb[i] + h11 * h * db[i])
        .collect();
    let deriv = (0..ya.len())
        .map(|i| d00 * ya[i] + d10 * da[i] + d01 * yb[i] + d11 * db[i])
        .collect();
    (value, deriv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{quadratic_diag, saddle_quartic, NoiseModel};
    use approx::assert_relative_eq;

    fn unit_quadratic() -> Problem {
        quadratic_diag(vec![1.0], NoiseModel::None).unwrap()
    }

    fn ones() -> ScheduleSpec {
        ScheduleSpec::constant(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn general_rhs_by_hand() {
        let z = IterateState::new(vec![0.0], vec![0.0], vec![2.0]);
        let dz = rhs(OdeKind::General, &ones(), &unit_quadratic(), &z, 1.0, 1.0).unwrap();
        assert_eq!(dz, IterateState::new(vec![4.0], vec![2.0], vec![0.0]));
    }

    #[test]
    fn nesterov_rhs_by_hand() {
        let z = IterateState::new(vec![], vec![0.0], vec![1.0]);
        let kind = OdeKind::Nesterov { alpha: 3.0 };
        let dz = rhs(kind, &ones(), &unit_quadratic(), &z, 2.0, 1.0).unwrap();
        assert_eq!(dz.m, vec![1.0]);
        assert_eq!(dz.x, vec![0.0]);
    }

    #[test]
    fn rhs_vanishes_at_equilibrium() {
        let p = saddle_quartic(NoiseModel::isotropic(2, 0.5)).unwrap();
        let z = IterateState::new(vec![0.25, 0.25], vec![0.0, 0.0], vec![0.0, 1.0]);
        let dz = rhs(OdeKind::General, &ones(), &p, &z, 3.0, 1e-8).unwrap();
        assert!(dz.norm() == 0.0, "{dz:?}");
    }

    #[test]
    fn rhs_rejects_v_below_minus_eps() {
        let z = IterateState::new(vec![-2.0], vec![0.0], vec![1.0]);
        assert!(matches!(
            rhs(OdeKind::General, &ones(), &unit_quadratic(), &z, 1.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn empty_interval() {
        let z0 = IterateState::new(vec![0.0], vec![0.0], vec![2.0]);
        let traj = integrate(
            OdeKind::General,
            &ones(),
            &unit_quadratic(),
            &z0,
            1.0,
            1.0,
            1.0,
            IntegrateOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.states[0], z0);
    }

    #[test]
    fn energy_by_hand() {
        let p = quadratic_diag(vec![1.0], NoiseModel::None).unwrap();
        // F(2) − F⋆ = 2.
        let z = IterateState::new(vec![0.0], vec![2.0], vec![2.0]);
        assert_eq!(energy(1.0, &z, &p, 1.0), 4.0);
        assert_eq!(energy(1.0, &IterateState::at_rest(vec![0.0]), &p, 1.0), 0.0);
    }

    #[test]
    fn nesterov_energy_by_hand() {
        let p = quadratic_diag(vec![1.0, 1.0], NoiseModel::None).unwrap();
        // F = 3 at x = (√3, √3).
        let x = vec![3f64.sqrt(), 3f64.sqrt()];
        let z = IterateState::new(vec![], vec![1.0, 1.0], x);
        assert_relative_eq!(energy_nesterov(&z, &p), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn w_delta_reductions() {
        let p = saddle_quartic(NoiseModel::isotropic(2, 1.0)).unwrap();
        let lim = Limits::new(1.0, 1.0, 1.0, 1.0);
        let star = IterateState::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0]);
        assert_relative_eq!(w_delta(&star, 0.3, &lim, &p, 1e-8).unwrap(), 0.25, epsilon = 1e-15);
        let z = IterateState::new(vec![0.3, 0.1], vec![0.5, -0.2], vec![0.4, 0.8]);
        assert_eq!(w_delta(&z, 0.0, &lim, &p, 1e-8).unwrap(), energy(1.0, &z, &p, 1e-8));
    }

    #[test]
    fn residual_cases() {
        let p = quadratic_diag(vec![1.0], NoiseModel::isotropic(1, 1.0)).unwrap();
        let lim = Limits::new(1.0, 1.0, 1.0, 1.0);
        let z = IterateState::at_rest(vec![0.0]);
        assert_eq!(residual_to_equilibrium(OdeKind::General, &z, &lim, &p).unwrap(), 1.0);
        let star = IterateState::new(vec![1.0], vec![0.0], vec![0.0]);
        assert_eq!(residual_to_equilibrium(OdeKind::General, &star, &lim, &p).unwrap(), 0.0);
        let q = quadratic_diag(vec![1.0], NoiseModel::None).unwrap();
        let zn = IterateState::new(vec![], vec![0.0], vec![0.3]);
        assert_eq!(
            residual_to_equilibrium(OdeKind::Nesterov { alpha: 3.0 }, &zn, &lim, &q).unwrap(),
            0.3
        );
    }

    #[test]
    fn change_of_variable_constants_by_hand() {
        let (k, b) = change_of_variable_constants(3.0);
        assert_relative_eq!(k, 8f64.sqrt());
        assert_relative_eq!(b, 2.0, epsilon = 1e-15);
        let (k, b) = change_of_variable_constants(0.0);
        assert_relative_eq!(k, 2f64.sqrt());
        assert_relative_eq!(b, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn general_converges_on_quadratic() {
        let z0 = IterateState::new(vec![0.0], vec![0.0], vec![2.0]);
        let traj = integrate(
            OdeKind::General,
            &ones(),
            &unit_quadratic(),
            &z0,
            DEFAULT_T0,
            60.0,
            1e-8,
            IntegrateOptions::default(),
        )
        .unwrap();
        let z = traj.last();
        assert!(z.norm() < 1e-4, "{z:?}");
        assert!(traj.states.iter().all(|s| s.v_nonnegative()));
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn blow_up_detected() {
        let spec = ScheduleSpec::constant(1.0, 1.0, 0.0, 1.0).unwrap();
        let p = Problem::new("concave", std::sync::Arc::new(Concave), NoiseModel::None, 0.0, vec![]).unwrap();
        let z0 = IterateState::new(vec![0.0], vec![0.0], vec![1.0]);
        let opts = IntegrateOptions {
            step: 0.1,
            tol: None,
            min_step: 1e-12,
        };
        let res = integrate(OdeKind::General, &spec, &p, &z0, 0.1, 200.0, 1.0, opts);
        assert!(matches!(res, Err(Error::BlowUp { .. })), "{res:?}");
    }

    #[derive(Debug)]
    struct Concave;

    impl crate::problems::Objective for Concave {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            -0.5 * x[0] * x[0]
        }
        fn grad_into(&self, x: &[f64], out: &mut [f64]) {
            out[0] = -x[0];
        }
    }
}

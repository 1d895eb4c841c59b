//! The stochastic algorithms and their Monte-Carlo driver.
//!
//! With `γ' = γ_{n+1}` and `(h_n, r_n, p_n, q_n)` the schedule at `τ_n`:
//!
//! ```text
//! general:  v' = (1 − γ'q_n)v + γ'p_n g²,  m' = (1 − γ'r_n)m + γ'h_n g,  x' = x − γ'm'/√(v'+ε)
//! adagrad:  v' = (1 − γ'q_n)v + γ'p_n g²,  x' = x − γ'g/√(v'+ε)
//! nag:      m' = (1 − αγ'/τ_n)m + γ'g,     x' = x − γ'm'
//! ```
//!
//! The schedule time `τ_n = γ_1 + … + γ_n` vanishes at `n = 0`, where the
//! schedules may be undefined; step 0 uses `τ_1` instead.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::integrate::{residual_to_equilibrium, OdeKind, BLOW_UP_NORM};
use crate::problems::{GradientSample, Problem};
use crate::rng::{run_stream, Stream};
use crate::schedules::{ScheduleSpec, ScheduleValues};
use crate::state::IterateState;

pub const DEFAULT_EPS: f64 = 1e-8;

/// `γ_n = γ₀ / n^α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeSpec {
    pub gamma0: f64,
    pub alpha: f64,
}

impl StepsizeSpec {
    pub fn new(gamma0: f64, alpha: f64) -> Result<Self> {
        if !(gamma0 > 0.0) || !gamma0.is_finite() {
            return Err(Error::Config(format!("γ₀ must be positive, got {gamma0}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!(
                "stepsize exponent must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self { gamma0, alpha })
    }

    /// `γ_n` for `n ≥ 1`.
    pub fn gamma(&self, n: usize) -> f64 {
        debug_assert!(n >= 1);
        self.gamma0 / (n as f64).powf(self.alpha)
    }

    /// `τ_n = γ_1 + … + γ_n`.
    pub fn tau(&self, n: usize) -> f64 {
        (1..=n).map(|k| self.gamma(k)).sum()
    }

    /// Whether `Σ γ_n²` is finite.
    pub fn square_summable(&self) -> bool {
        self.alpha > 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    General,
    Adagrad,
    Nag { alpha: f64 },
}

impl Algorithm {
    pub fn ode_kind(self) -> OdeKind {
        match self {
            Self::General => OdeKind::General,
            Self::Adagrad => OdeKind::Adagrad,
            Self::Nag { alpha } => OdeKind::Nesterov { alpha },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::General => "general",
            Self::Adagrad => "adagrad",
            Self::Nag { .. } => "nag",
        }
    }
}

/// Coefficients of one step `n → n + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoeffs {
    /// `γ_{n+1}`.
    pub gamma: f64,
    /// `τ_n` as used by the schedule.
    pub tau: f64,
    pub values: ScheduleValues,
}

fn guard(n: usize, c: &StepCoeffs) -> Result<()> {
    let value = 1.0 - c.gamma * c.values.q;
    if value < 0.0 {
        return Err(Error::StepGuard { n, value });
    }
    Ok(())
}

fn coeffs_at(
    n: usize,
    spec: &ScheduleSpec,
    stepsize: &StepsizeSpec,
    tau: f64,
    needs_schedule: bool,
) -> Result<StepCoeffs> {
    let gamma = stepsize.gamma(n + 1);
    let values = if needs_schedule {
        spec.eval(tau)?
    } else {
        ScheduleValues {
            h: 1.0,
            r: 0.0,
            p: 0.0,
            q: 0.0,
        }
    };
    Ok(StepCoeffs { gamma, tau, values })
}

fn effective_tau(n: usize, stepsize: &StepsizeSpec) -> f64 {
    stepsize.tau(n.max(1))
}

fn general_in_place(v: &mut [f64], m: &mut [f64], x: &mut [f64], g: &[f64], c: &StepCoeffs, eps: f64) {
    let ScheduleValues { h, r, p, q } = c.values;
    let gm = c.gamma;
    for i in 0..x.len() {
        v[i] = (1.0 - gm * q) * v[i] + gm * p * g[i] * g[i];
        m[i] = (1.0 - gm * r) * m[i] + gm * h * g[i];
        x[i] -= gm * m[i] / (v[i] + eps).sqrt();
    }
}

fn adagrad_in_place(v: &mut [f64], x: &mut [f64], g: &[f64], c: &StepCoeffs, eps: f64) {
    let ScheduleValues { p, q, .. } = c.values;
    let gm = c.gamma;
    for i in 0..x.len() {
        v[i] = (1.0 - gm * q) * v[i] + gm * p * g[i] * g[i];
        x[i] -= gm * g[i] / (v[i] + eps).sqrt();
    }
}

fn nag_in_place(m: &mut [f64], x: &mut [f64], g: &[f64], alpha: f64, gamma: f64, tau: f64) {
    let decay = 1.0 - alpha * gamma / tau;
    for i in 0..x.len() {
        m[i] = decay * m[i] + gamma * g[i];
        x[i] -= gamma * m[i];
    }
}

fn check_sample(z: &IterateState, sample: &GradientSample) -> Result<()> {
    check_dim(z.dim(), sample.g.len())?;
    check_dim(z.dim(), sample.g_sq.len())
}

/// One step of the general algorithm from `z_n` with the draw `sample`.
pub fn step_general(
    z: &IterateState,
    n: usize,
    spec: &ScheduleSpec,
    stepsize: &StepsizeSpec,
    sample: &GradientSample,
    eps: f64,
) -> Result<IterateState> {
    check_sample(z, sample)?;
    check_dim(z.dim(), z.v.len())?;
    check_dim(z.dim(), z.m.len())?;
    let c = coeffs_at(n, spec, stepsize, effective_tau(n, stepsize), true)?;
    guard(n, &c)?;
    let ScheduleValues { h, r, p, q } = c.values;
    let gm = c.gamma;
    let v: Vec<f64> =
        z.v.iter()
            .zip(&sample.g_sq)
            .map(|(v, gs)| (1.0 - gm * q) * v + gm * p * gs)
            .collect();
    let m: Vec<f64> =
        z.m.iter()
            .zip(&sample.g)
            .map(|(m, g)| (1.0 - gm * r) * m + gm * h * g)
            .collect();
    let x =
        z.x.iter()
            .zip(m.iter().zip(&v))
            .map(|(x, (m, v))| x - gm * m / (v + eps).sqrt())
            .collect();
    Ok(IterateState { v, m, x })
}

/// One step of the momentum-free adaptive variant; `z.m` is ignored and returned empty.
pub fn step_adagrad(
    z: &IterateState,
    n: usize,
    spec: &ScheduleSpec,
    stepsize: &StepsizeSpec,
    sample: &GradientSample,
    eps: f64,
) -> Result<IterateState> {
    check_sample(z, sample)?;
    check_dim(z.dim(), z.v.len())?;
    let c = coeffs_at(n, spec, stepsize, effective_tau(n, stepsize), true)?;
    guard(n, &c)?;
    let ScheduleValues { p, q, .. } = c.values;
    let gm = c.gamma;
    let v: Vec<f64> =
        z.v.iter()
            .zip(&sample.g_sq)
            .map(|(v, gs)| (1.0 - gm * q) * v + gm * p * gs)
            .collect();
    let x =
        z.x.iter()
            .zip(sample.g.iter().zip(&v))
            .map(|(x, (g, v))| x - gm * g / (v + eps).sqrt())
            .collect();
    Ok(IterateState { v, m: Vec::new(), x })
}

/// One step of stochastic Nesterov from `(m_n, x_n)` given `τ_n > 0`.
pub fn step_nag(
    m: &[f64],
    x: &[f64],
    n: usize,
    alpha: f64,
    stepsize: &StepsizeSpec,
    g: &[f64],
    tau: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(x.len(), m.len())?;
    check_dim(x.len(), g.len())?;
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("τ_n must be positive, got {tau}")));
    }
    let (mut m, mut x) = (m.to_vec(), x.to_vec());
    nag_in_place(&mut m, &mut x, g, alpha, stepsize.gamma(n + 1), tau);
    if m.iter().chain(&x).any(|c| !c.is_finite()) {
        return Err(Error::Domain(format!("non-finite iterate after step {n}")));
    }
    Ok((m, x))
}

/// `h_{n−1}(F(x_n) − F⋆) + ½⟨m_n², 1/√(v_n + ε)⟩`; with no `v` the weight is 1.
pub fn lyapunov_diag(z: &IterateState, h_prev: f64, problem: &Problem, eps: f64) -> f64 {
    let kinetic: f64 = if z.v.is_empty() {
        z.m.iter().map(|m| m * m).sum()
    } else {
        z.m.iter().zip(&z.v).map(|(m, v)| m * m / (v + eps).sqrt()).sum()
    };
    h_prev * (problem.value(&z.x) - problem.f_star()) + 0.5 * kinetic
}

/// Everything a run needs besides the problem and the random stream.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub spec: ScheduleSpec,
    pub stepsize: StepsizeSpec,
    pub n_iter: usize,
    /// Record every `record_stride`-th iterate; 0 records only the first and last.
    pub record_stride: usize,
    pub eps: f64,
}

/// Precomputed step coefficients, shared by all runs of a configuration.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub config: RunConfig,
    steps: Vec<StepCoeffs>,
    /// `τ_n` for `0 ≤ n ≤ N`.
    taus: Vec<f64>,
}

impl RunPlan {
    /// Evaluates all coefficients and checks the step guard for every `n`.
    pub fn new(config: RunConfig) -> Result<Self> {
        if config.n_iter == 0 {
            return Err(Error::Config("n_iter must be at least 1".into()));
        }
        if !(config.eps > 0.0) {
            return Err(Error::Config(format!("ε must be positive, got {}", config.eps)));
        }
        let needs_schedule = !matches!(config.algorithm, Algorithm::Nag { .. });
        let mut steps = Vec::with_capacity(config.n_iter);
        let mut taus = Vec::with_capacity(config.n_iter + 1);
        let mut tau = 0.0;
        taus.push(tau);
        for n in 0..config.n_iter {
            let eff = if n == 0 { config.stepsize.gamma(1) } else { tau };
            let c = coeffs_at(n, &config.spec, &config.stepsize, eff, needs_schedule)?;
            if needs_schedule {
                guard(n, &c)?;
            }
            tau += c.gamma;
            taus.push(tau);
            steps.push(c);
        }
        Ok(Self { config, steps, taus })
    }

    pub fn steps(&self) -> &[StepCoeffs] {
        &self.steps
    }

    /// `γ_N` after the last step.
    pub fn final_gamma(&self) -> f64 {
        self.steps[self.steps.len() - 1].gamma
    }

    /// `h_{n−1}`, with `h_{−1}` taken as `h_0`.
    fn h_prev(&self, n: usize) -> f64 {
        self.steps[n.saturating_sub(1).min(self.steps.len() - 1)].values.h
    }

    /// `τ_n` for `0 ≤ n ≤ N`.
    pub fn tau(&self, n: usize) -> f64 {
        self.taus[n]
    }

    fn check_state(&self, z: &IterateState, d: usize) -> Result<()> {
        check_dim(d, z.x.len())?;
        let kind = self.config.algorithm.ode_kind();
        check_dim(if kind.has_v() { d } else { 0 }, z.v.len())?;
        check_dim(if kind.has_m() { d } else { 0 }, z.m.len())?;
        if !z.v_nonnegative() {
            return Err(Error::Domain("initial v has negative components".into()));
        }
        Ok(())
    }

    /// Executes one run from `z0`, drawing noise from `rng`.
    pub fn execute<R: Rng + ?Sized>(&self, problem: &Problem, z0: &IterateState, rng: &mut R) -> Result<RunRecord> {
        let d = problem.dim();
        self.check_state(z0, d)?;
        let cfg = &self.config;
        let mut z = z0.clone();
        let mut g = vec![0.0; d];
        let mut record = RunRecord {
            rows: Vec::new(),
            steps: 0,
            termination: Termination::Completed,
            final_state: z0.clone(),
        };
        record.rows.push(self.row(0, &z, problem)?);

        for (n, c) in self.steps.iter().enumerate() {
            problem.sample_grad_into(&z.x, rng, &mut g);
            match cfg.algorithm {
                Algorithm::General => general_in_place(&mut z.v, &mut z.m, &mut z.x, &g, c, cfg.eps),
                Algorithm::Adagrad => adagrad_in_place(&mut z.v, &mut z.x, &g, c, cfg.eps),
                Algorithm::Nag { alpha } => nag_in_place(&mut z.m, &mut z.x, &g, alpha, c.gamma, c.tau),
            }
            let done = n + 1;
            record.steps = done;
            let norm = z.norm();
            if !(norm <= BLOW_UP_NORM) {
                record.termination = Termination::Diverged { n: done, norm };
                record.rows.push(self.row(done, &z, problem)?);
                break;
            }
            let stride_hit = cfg.record_stride > 0 && done % cfg.record_stride == 0;
            if stride_hit || done == self.steps.len() {
                record.rows.push(self.row(done, &z, problem)?);
            }
        }
        record.final_state = z;
        Ok(record)
    }

    fn row(&self, n: usize, z: &IterateState, problem: &Problem) -> Result<RecordRow> {
        let diverged = !z.is_finite();
        let lyapunov = if diverged {
            f64::NAN
        } else {
            lyapunov_diag(z, self.h_prev(n), problem, self.config.eps)
        };
        let residual = if diverged {
            f64::NAN
        } else {
            residual_to_equilibrium(self.config.algorithm.ode_kind(), z, &self.config.spec.limits(), problem)?
        };
        Ok(RecordRow {
            n,
            tau: self.tau(n),
            state: z.clone(),
            lyapunov,
            residual,
        })
    }

    /// Run `run_index` of a Monte-Carlo batch seeded by `master_seed`.
    pub fn execute_seeded(
        &self,
        problem: &Problem,
        z0: &IterateState,
        master_seed: u64,
        run_index: u64,
    ) -> Result<RunRecord> {
        let mut rng = run_stream(master_seed, run_index);
        self.execute(problem, z0, &mut rng)
    }

    /// `n_runs` independent runs in parallel, returned in run order.
    pub fn execute_many(
        &self,
        problem: &Problem,
        z0: &IterateState,
        master_seed: u64,
        n_runs: usize,
    ) -> Result<Vec<RunRecord>> {
        self.execute_many_with(problem, master_seed, n_runs, |_, _| Ok(z0.clone()))
    }

    /// As [`execute_many`](Self::execute_many), with a per-run initial state
    /// drawn from the run's own stream before the first step.
    pub fn execute_many_with<F>(
        &self,
        problem: &Problem,
        master_seed: u64,
        n_runs: usize,
        init: F,
    ) -> Result<Vec<RunRecord>>
    where
        F: Fn(usize, &mut Stream) -> Result<IterateState> + Sync,
    {
        (0..n_runs)
            .into_par_iter()
            .map(|i| {
                let mut rng = run_stream(master_seed, i as u64);
                let z0 = init(i, &mut rng)?;
                self.execute(problem, &z0, &mut rng)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    Diverged { n: usize, norm: f64 },
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub n: usize,
    pub tau: f64,
    pub state: IterateState,
    /// `V_n`.
    pub lyapunov: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RecordRow>,
    /// Number of steps executed.
    pub steps: usize,
    pub termination: Termination,
    pub final_state: IterateState,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        matches!(self.termination, Termination::Diverged { .. })
    }

    pub fn final_residual(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.residual)
    }
}

/// Plans and executes a single seeded run.
pub fn run(
    problem: &Problem,
    config: RunConfig,
    z0: &IterateState,
    master_seed: u64,
    run_index: u64,
) -> Result<RunRecord> {
    RunPlan::new(config)?.execute_seeded(problem, z0, master_seed, run_index)
}

/// The state `(0, 0, x)` in the layout of `algorithm`.
pub fn initial_state(algorithm: Algorithm, x: Vec<f64>) -> IterateState {
    algorithm.ode_kind().state_at_rest(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{quadratic_diag, NoiseModel};
    use approx::assert_relative_eq;

    fn ones() -> ScheduleSpec {
        ScheduleSpec::constant(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn general_step_by_hand() {
        // γ₁ = 0.1.
        let gamma = StepsizeSpec::new(0.1, 1.0).unwrap();
        let z = IterateState::at_rest(vec![1.5]);
        let s = GradientSample::from_grad(vec![2.0]);
        let z1 = step_general(&z, 0, &ones(), &gamma, &s, 1.0).unwrap();
        assert_relative_eq!(z1.v[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(z1.m[0], 0.2, epsilon = 1e-15);
        assert_relative_eq!(1.5 - z1.x[0], 0.016_903_085_094_570_332, epsilon = 1e-15);
    }

    #[test]
    fn adagrad_step_by_hand() {
        let gamma = StepsizeSpec::new(0.1, 1.0).unwrap();
        let z = IterateState::new(vec![0.0], vec![], vec![0.0]);
        let s = GradientSample::from_grad(vec![3.0]);
        let z1 = step_adagrad(&z, 0, &ones(), &gamma, &s, 1.0).unwrap();
        assert_relative_eq!(z1.v[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(-z1.x[0], 0.217_642_875_033_003_56, epsilon = 1e-15);
    }

    #[test]
    fn nag_step_by_hand() {
        // γ₂ = 0.5 with γ₀ = 1, α = 1.
        let gamma = StepsizeSpec::new(1.0, 1.0).unwrap();
        let (m, x) = step_nag(&[0.0], &[2.0], 1, 3.0, &gamma, &[1.0], 1.0).unwrap();
        assert_eq!(m, vec![0.5]);
        assert_eq!(x, vec![1.75]);
        let (m, x) = step_nag(&[0.3], &[2.0], 1, 0.0, &gamma, &[1.0], 1.0).unwrap();
        assert_eq!(m, vec![0.8]);
        assert_eq!(x, vec![1.6]);
        let (m, x) = step_nag(&[0.0], &[2.0], 4, 3.0, &gamma, &[0.0], 2.0).unwrap();
        assert_eq!((m, x), (vec![0.0], vec![2.0]));
    }

    #[test]
    fn degenerate_steps() {
        let gamma = StepsizeSpec::new(0.1, 0.7).unwrap();
        let hb = ScheduleSpec::heavy_ball(1.0).unwrap();
        let s = GradientSample::from_grad(vec![2.0, -1.0]);
        let z = IterateState::at_rest(vec![1.0, 1.0]);
        let z1 = step_general(&z, 3, &hb, &gamma, &s, 1e-8).unwrap();
        assert_eq!(z1.v, vec![0.0, 0.0]);
        let zero = GradientSample::from_grad(vec![0.0, 0.0]);
        let z2 = step_general(&z, 3, &ones(), &gamma, &zero, 1e-8).unwrap();
        assert_eq!(z2.x, z.x);
        let za = IterateState::new(vec![0.0, 0.0], vec![], vec![1.0, 1.0]);
        assert_eq!(step_adagrad(&za, 3, &ones(), &gamma, &zero, 1e-8).unwrap().x, za.x);
    }

    #[test]
    fn guard_violation_names_step() {
        let gamma = StepsizeSpec::new(2.0, 1.0).unwrap();
        let s = GradientSample::from_grad(vec![1.0]);
        let z = IterateState::at_rest(vec![1.0]);
        let err = step_general(&z, 0, &ones(), &gamma, &s, 1e-8).unwrap_err();
        assert!(matches!(err, Error::StepGuard { n: 0, .. }));
        let cfg = RunConfig {
            algorithm: Algorithm::General,
            spec: ones(),
            stepsize: gamma,
            n_iter: 10,
            record_stride: 1,
            eps: 1e-8,
        };
        assert!(matches!(RunPlan::new(cfg), Err(Error::StepGuard { n: 0, .. })));
    }

    #[test]
    fn stepsize_validation() {
        assert!(StepsizeSpec::new(0.0, 0.5).is_err());
        assert!(StepsizeSpec::new(1.0, 0.0).is_err());
        assert!(StepsizeSpec::new(1.0, 1.5).is_err());
        let g = StepsizeSpec::new(1.0, 0.5).unwrap();
        assert_eq!(g.gamma(4), 0.5);
        assert_eq!(g.tau(4), 1.0 + 1.0 / 2f64.sqrt() + 1.0 / 3f64.sqrt() + 0.5);
    }

    #[test]
    fn lyapunov_diag_by_hand() {
        let p = quadratic_diag(vec![1.0], NoiseModel::None).unwrap();
        // F(2) = 2.
        let z = IterateState::new(vec![3.0], vec![2.0], vec![2.0]);
        assert_eq!(lyapunov_diag(&z, 1.0, &p, 1.0), 3.0);
        assert_eq!(lyapunov_diag(&IterateState::at_rest(vec![0.0]), 1.0, &p, 1.0), 0.0);
    }

    #[test]
    fn single_iteration_run() {
        let p = quadratic_diag(vec![1.0, 2.0], NoiseModel::isotropic(2, 0.5)).unwrap();
        let cfg = RunConfig {
            algorithm: Algorithm::General,
            spec: ones(),
            stepsize: StepsizeSpec::new(0.5, 0.7).unwrap(),
            n_iter: 1,
            record_stride: 1,
            eps: DEFAULT_EPS,
        };
        let rec = run(&p, cfg, &IterateState::at_rest(vec![1.0, 1.0]), 1, 0).unwrap();
        assert_eq!(rec.steps, 1);
        assert_eq!(rec.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(rec.rows[1].tau, 0.5);
    }

    #[test]
    fn equilibrium_is_fixed_without_noise() {
        let p = quadratic_diag(vec![1.0, 2.0], NoiseModel::None).unwrap();
        let cfg = RunConfig {
            algorithm: Algorithm::General,
            spec: ones(),
            stepsize: StepsizeSpec::new(0.5, 0.7).unwrap(),
            n_iter: 100,
            record_stride: 10,
            eps: DEFAULT_EPS,
        };
        let z0 = IterateState::at_rest(vec![0.0, 0.0]);
        let rec = run(&p, cfg, &z0, 5, 0).unwrap();
        assert_eq!(rec.final_state, z0);
        assert!(rec.rows.windows(2).all(|w| w[1].n > w[0].n));
    }

    #[test]
    fn divergence_terminates_early() {
        let p = quadratic_diag(vec![1.0], NoiseModel::None).unwrap();
        let cfg = RunConfig {
            algorithm: Algorithm::Nag { alpha: 3.0 },
            spec: ones(),
            stepsize: StepsizeSpec::new(50.0, 0.7).unwrap(),
            n_iter: 10_000,
            record_stride: 0,
            eps: DEFAULT_EPS,
        };
        let z0 = IterateState::new(vec![], vec![0.0], vec![1.0]);
        let rec = run(&p, cfg, &z0, 5, 0).unwrap();
        assert!(rec.diverged());
        assert!(rec.steps < 10_000);
    }
}

//! Asymptotic covariance of the general algorithm at a strict local minimum.
//!
//! Given `z_n → z* = (v*, 0, x*)`, the rescaled iterate
//! `γ_n^{−1/2}(m_n, x_n − x*)` is asymptotically `N(0, Γ)` where `Γ` solves
//!
//! ```text
//! (𝓗 + θI)Γ + Γ(𝓗 + θI)ᵀ = −blockdiag(h∞² 𝒬, 0),    𝓗 = [[−r∞ I, h∞ H], [−V, 0]]
//! ```
//!
//! with `V = diag((ε + v*)^{−1/2})`, `H = ∇²F(x*)` and `𝒬 = Cov(∇f(x*, ξ))`.
//! The noise covariance is used in place of `E[∇f ∇fᵀ]` in the closed form
//! for the `x` block; the two agree because `∇F(x*) = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::optimize::{Algorithm, RunConfig, RunPlan, StepsizeSpec};
use crate::problems::{l2, Problem};
use crate::schedules::{Limits, ScheduleSpec};
use crate::spectral::{lyapunov_solve, sym_eigen, SymmetricEigen};
use crate::state::IterateState;

/// Runs whose final state is farther than this from `z*` (sup norm) are not
/// counted as converging to `z*`.
pub const DEFAULT_FILTER_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct CltInputs {
    pub x_star: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub s_star: Vec<f64>,
    pub noise_cov: DMatrix<f64>,
    pub limits: Limits,
    pub stepsize: StepsizeSpec,
    pub eps: f64,
}

impl CltInputs {
    /// Collects `H`, `S(x*)` and `𝒬` from a problem at a declared minimum.
    pub fn from_problem(
        problem: &Problem,
        x_star: &[f64],
        limits: Limits,
        stepsize: StepsizeSpec,
        eps: f64,
    ) -> Result<Self> {
        check_dim(problem.dim(), x_star.len())?;
        let g = l2(&problem.grad(x_star));
        if g > 1e-10 {
            return Err(Error::Domain(format!(
                "∇F(x*) has norm {g:e}; x* is not a critical point"
            )));
        }
        let inputs = Self {
            x_star: x_star.to_vec(),
            hessian: problem.hessian(x_star)?,
            s_star: problem.second_moment(x_star)?,
            noise_cov: problem.noise_covariance(x_star)?,
            limits,
            stepsize,
            eps,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        check_dim(d, self.hessian.nrows())?;
        check_dim(d, self.hessian.ncols())?;
        check_dim(d, self.s_star.len())?;
        check_dim(d, self.noise_cov.nrows())?;
        check_dim(d, self.noise_cov.ncols())?;
        if !(self.eps > 0.0) {
            return Err(Error::Domain(format!("ε must be positive, got {}", self.eps)));
        }
        if !(self.limits.r > 0.0) || !(self.limits.h > 0.0) {
            return Err(Error::Domain(format!(
                "need h∞ > 0 and r∞ > 0, got h∞ = {}, r∞ = {}",
                self.limits.h, self.limits.r
            )));
        }
        let eig = sym_eigen(&self.hessian)?;
        if !(eig.eigenvalues[0] > 0.0) {
            return Err(Error::Domain(format!(
                "Hessian at x* is not positive definite (smallest eigenvalue {})",
                eig.eigenvalues[0]
            )));
        }
        let cov_eig = sym_eigen(&self.noise_cov)?;
        if cov_eig
            .eigenvalues
            .iter()
            .any(|&l| l < -1e-12 * (1.0 + self.noise_cov.norm()))
        {
            return Err(Error::Domain("noise covariance is not positive semidefinite".into()));
        }
        Ok(())
    }
}

/// `v* = p∞ S(x*) / q∞`.
pub fn v_star(inputs: &CltInputs) -> Result<Vec<f64>> {
    inputs
        .s_star
        .iter()
        .map(|&s| inputs.limits.v_star_component(s))
        .collect()
}

/// `V = diag((ε + v*)^{−1/2})`.
pub fn v_matrix(v_star: &[f64], eps: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        v_star.len(),
        v_star.iter().map(|v| 1.0 / (eps + v).sqrt()),
    ))
}

fn sqrt_diag(v: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&v.diagonal().map(f64::sqrt))
}

/// `L = (r∞/2)(1 − √max(0, 1 − 4h∞π₁/r∞²))`.
pub fn rate_l(h: f64, r: f64, pi1: f64) -> f64 {
    0.5 * r * (1.0 - (1.0 - 4.0 * h * pi1 / (r * r)).max(0.0).sqrt())
}

/// `θ = 0` if `α < 1`, else `1/(2γ₀)` provided `γ₀ > 1/(2(L ∧ q∞))`.
pub fn theta(stepsize: &StepsizeSpec, l_wedge_q: f64) -> Result<f64> {
    if stepsize.alpha < 1.0 {
        return Ok(0.0);
    }
    let bound = 1.0 / (2.0 * l_wedge_q);
    if !(stepsize.gamma0 > bound) {
        return Err(Error::StepsizeConstraint(format!(
            "with α = 1 the stepsize needs γ₀ > 1/(2(L ∧ q∞)) = {bound}, got γ₀ = {}",
            stepsize.gamma0
        )));
    }
    Ok(1.0 / (2.0 * stepsize.gamma0))
}

/// `𝓗 = [[−r∞ I, h∞ H], [−V, 0]]`.
pub fn h_matrix(limits: &Limits, hessian: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let d = hessian.nrows();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).fill_diagonal(-limits.r);
    m.view_mut((0, d), (d, d)).copy_from(&(hessian * limits.h));
    m.view_mut((d, 0), (d, d)).copy_from(&(-v));
    m
}

/// `−max Re λ` of `[[−r I, h H], [−V, 0]]` from the eigenvalues `π_k` of
/// `V^{1/2} H V^{1/2}`: each `π_k` contributes the roots of `λ² + rλ + hπ_k`.
pub fn damped_block_margin(h: f64, r: f64, pis: &[f64]) -> f64 {
    let top = pis
        .iter()
        .map(|&pi| {
            let disc = r * r - 4.0 * h * pi;
            if disc >= 0.0 {
                0.5 * (-r + disc.sqrt())
            } else {
                -0.5 * r
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    -top
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltResult {
    pub v_star: Vec<f64>,
    pub v: DMatrix<f64>,
    pub eigen: SymmetricEigen,
    pub l: f64,
    pub theta: f64,
    pub h_matrix: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl CltResult {
    /// Lower-right `d × d` block of `Γ`.
    pub fn gamma_x_block(&self) -> DMatrix<f64> {
        let d = self.v_star.len();
        self.gamma.view((d, d), (d, d)).into_owned()
    }

    /// `‖Γ₂ − Γ_xx‖_F`.
    pub fn consistency_gap(&self) -> f64 {
        (&self.gamma2 - self.gamma_x_block()).norm()
    }
}

struct Prepared {
    v_star: Vec<f64>,
    v: DMatrix<f64>,
    v_half: DMatrix<f64>,
    eigen: SymmetricEigen,
    l: f64,
    theta: f64,
}

fn prepare(inputs: &CltInputs) -> Result<Prepared> {
    inputs.validate()?;
    let v_star = v_star(inputs)?;
    let v = v_matrix(&v_star, inputs.eps);
    let v_half = sqrt_diag(&v);
    let eigen = sym_eigen(&(&v_half * &inputs.hessian * &v_half))?;
    let l = rate_l(inputs.limits.h, inputs.limits.r, eigen.eigenvalues[0]);
    let theta = theta(&inputs.stepsize, l.min(inputs.limits.q))?;
    Ok(Prepared {
        v_star,
        v,
        v_half,
        eigen,
        l,
        theta,
    })
}

/// `Γ` from the Lyapunov equation.
pub fn gamma_lyapunov(inputs: &CltInputs) -> Result<DMatrix<f64>> {
    let prep = prepare(inputs)?;
    solve_gamma(inputs, &prep)
}

fn solve_gamma(inputs: &CltInputs, prep: &Prepared) -> Result<DMatrix<f64>> {
    let d = inputs.dim();
    let shifted = h_matrix(&inputs.limits, &inputs.hessian, &prep.v) + DMatrix::identity(2 * d, 2 * d) * prep.theta;
    let mut forcing = DMatrix::zeros(2 * d, 2 * d);
    let h2 = inputs.limits.h * inputs.limits.h;
    forcing.view_mut((0, 0), (d, d)).copy_from(&(&inputs.noise_cov * h2));
    lyapunov_solve(&shifted, &forcing)
}

/// `Γ₂ = V^{1/2} P [C_kl / den_kl] Pᵀ V^{1/2}` with `C = Pᵀ V^{1/2} 𝒬 V^{1/2} P`.
pub fn gamma2_closed_form(inputs: &CltInputs) -> Result<DMatrix<f64>> {
    let prep = prepare(inputs)?;
    closed_form(inputs, &prep).map(|(g2, _)| g2)
}

fn closed_form(inputs: &CltInputs, prep: &Prepared) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = inputs.dim();
    let Limits { h, r, .. } = inputs.limits;
    let theta = prep.theta;
    let damping = r - 2.0 * theta;
    if !(damping > 0.0) {
        return Err(Error::DegenerateDenominator {
            k: 0,
            l: 0,
            value: damping,
        });
    }
    let p = &prep.eigen.eigenvectors;
    let pis = &prep.eigen.eigenvalues;
    let c = p.transpose() * &prep.v_half * &inputs.noise_cov * &prep.v_half * p;
    let mut inner = DMatrix::zeros(d, d);
    for k in 0..d {
        for l in 0..d {
            let den = damping / h * (pis[k] + pis[l] + 2.0 * theta * (theta - r) / h)
                + (pis[k] - pis[l]).powi(2) / (2.0 * damping);
            if !(den > 0.0) {
                return Err(Error::DegenerateDenominator { k, l, value: den });
            }
            inner[(k, l)] = c[(k, l)] / den;
        }
    }
    let g2 = &prep.v_half * p * inner * p.transpose() * &prep.v_half;
    Ok(((&g2 + g2.transpose()) * 0.5, c))
}

/// The full set of CLT quantities.
pub fn analyze(inputs: &CltInputs) -> Result<CltResult> {
    let prep = prepare(inputs)?;
    let gamma = solve_gamma(inputs, &prep)?;
    let (gamma2, c) = closed_form(inputs, &prep)?;
    let h_matrix = h_matrix(&inputs.limits, &inputs.hessian, &prep.v);
    Ok(CltResult {
        v_star: prep.v_star,
        v: prep.v,
        eigen: prep.eigen,
        l: prep.l,
        theta: prep.theta,
        h_matrix,
        gamma,
        gamma2,
        c,
    })
}

/// `‖A − B‖_F / ‖B‖_F`, or the absolute distance when `B = 0`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalClt {
    /// `γ_N^{−1/2}(m_N, x_N − x*)` of each kept run, in run order.
    pub samples: Vec<Vec<f64>>,
    /// Index of each kept run.
    pub kept: Vec<usize>,
    pub n_runs: usize,
    pub n_diverged: usize,
    /// Finite runs whose final state was farther than the filter radius from `z*`.
    pub n_filtered: usize,
    pub covariance: DMatrix<f64>,
    pub x_block: DMatrix<f64>,
    pub rel_error_gamma: f64,
    pub rel_error_gamma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalOptions {
    pub n_iter: usize,
    pub n_runs: usize,
    pub master_seed: u64,
    pub filter_radius: f64,
}

/// Runs the general algorithm from `z* = (v*, 0, x*)` and compares the
/// sample covariance of the rescaled final iterates with `Γ` and `Γ₂`.
pub fn empirical_clt(
    problem: &Problem,
    spec: &ScheduleSpec,
    inputs: &CltInputs,
    reference: &CltResult,
    opts: &EmpiricalOptions,
) -> Result<EmpiricalClt> {
    let d = inputs.dim();
    let config = RunConfig {
        algorithm: Algorithm::General,
        spec: spec.clone(),
        stepsize: inputs.stepsize,
        n_iter: opts.n_iter,
        record_stride: 0,
        eps: inputs.eps,
    };
    let plan = RunPlan::new(config)?;
    let z_star = IterateState::new(reference.v_star.clone(), vec![0.0; d], inputs.x_star.clone());
    let records = plan.execute_many(problem, &z_star, opts.master_seed, opts.n_runs)?;
    let scale = 1.0 / plan.final_gamma().sqrt();

    let mut samples = Vec::new();
    let mut kept = Vec::new();
    let (mut n_diverged, mut n_filtered) = (0, 0);
    for (i, rec) in records.iter().enumerate() {
        let z = &rec.final_state;
        if rec.diverged() || !z.is_finite() {
            n_diverged += 1;
            continue;
        }
        let dist =
            z.v.iter()
                .zip(&z_star.v)
                .chain(z.m.iter().zip(&z_star.m))
                .chain(z.x.iter().zip(&z_star.x))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        if dist > opts.filter_radius {
            n_filtered += 1;
            continue;
        }
        let row =
            z.m.iter()
                .map(|m| m * scale)
                .chain(z.x.iter().zip(&inputs.x_star).map(|(x, s)| (x - s) * scale))
                .collect();
        samples.push(row);
        kept.push(i);
    }

    let covariance = sample_covariance(&samples, 2 * d);
    let x_block = covariance.view((d, d), (d, d)).into_owned();
    Ok(EmpiricalClt {
        rel_error_gamma: relative_frobenius(&covariance, &reference.gamma),
        rel_error_gamma2: relative_frobenius(&x_block, &reference.gamma2),
        samples,
        kept,
        n_runs: opts.n_runs,
        n_diverged,
        n_filtered,
        covariance,
        x_block,
    })
}

/// Mean-centred sample covariance with the `n − 1` normalization; zero for fewer than two samples.
pub fn sample_covariance(samples: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    let n = samples.len();
    if n < 2 {
        return DMatrix::zeros(dim, dim);
    }
    let mut mean = DVector::zeros(dim);
    for s in samples {
        mean += DVector::from_column_slice(s);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for s in samples {
        let dev = DVector::from_column_slice(s) - &mean;
        cov += &dev * dev.transpose();
    }
    cov / (n - 1) as f64
}

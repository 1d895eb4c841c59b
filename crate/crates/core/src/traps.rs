//! Linearization at critical points, unstable spectra, noise excitation and
//! Monte-Carlo escape experiments.
//!
//! At `z* = (v*, 0, x*)` the limiting vector field linearizes to
//!
//! ```text
//!     [ −q∞ I     0       p∞ ∇S(x*) ]
//! D = [   0     −r∞ I     h∞ H      ]
//!     [   0      −V         0       ]
//! ```
//!
//! Every eigenvalue `ζ` of `D` with positive real part is real and solves
//! `ζ² + r∞ζ + β = 0` for a negative eigenvalue `β` of `h∞ V^{1/2} H V^{1/2}`.
//! For the Nesterov dynamics the damping block vanishes in the limit and `D`
//! is replaced by `[[0, h∞ H], [−I, 0]]`, so `ζ = √(−β)` with `β` an
//! eigenvalue of `h∞ H`.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::clt::v_matrix;
use crate::error::{check_dim, Error, Result};
use crate::optimize::{Algorithm, RunConfig, RunPlan, StepsizeSpec};
use crate::problems::{CriticalKind, NoiseModel, Problem};
use crate::schedules::{Limits, ScheduleSpec};
use crate::spectral::sym_eigen;
use crate::state::IterateState;

pub const DEFAULT_CLASSIFY_RADIUS: f64 = 1e-2;

/// `D` at the critical point `x*`.
pub fn linearize_d(problem: &Problem, x_star: &[f64], limits: &Limits, eps: f64) -> Result<DMatrix<f64>> {
    check_dim(problem.dim(), x_star.len())?;
    let hess = problem.hessian(x_star)?;
    let jac_s = problem.second_moment_jacobian(x_star)?;
    let v_star = preconditioner_state(problem, x_star, limits)?;
    let v = v_matrix(&v_star, eps);
    Ok(assemble_d(limits, &hess, &v, &jac_s))
}

/// `v* = p∞ S(x*) / q∞`.
pub fn preconditioner_state(problem: &Problem, x_star: &[f64], limits: &Limits) -> Result<Vec<f64>> {
    problem
        .second_moment(x_star)?
        .into_iter()
        .map(|s| limits.v_star_component(s))
        .collect()
}

pub fn assemble_d(limits: &Limits, hess: &DMatrix<f64>, v: &DMatrix<f64>, jac_s: &DMatrix<f64>) -> DMatrix<f64> {
    let d = hess.nrows();
    let mut m = DMatrix::zeros(3 * d, 3 * d);
    m.view_mut((0, 0), (d, d)).fill_diagonal(-limits.q);
    m.view_mut((0, 2 * d), (d, d)).copy_from(&(jac_s * limits.p));
    m.view_mut((d, d), (d, d)).fill_diagonal(-limits.r);
    m.view_mut((d, 2 * d), (d, d)).copy_from(&(hess * limits.h));
    m.view_mut((2 * d, d), (d, d)).copy_from(&(-v));
    m
}

/// `D̃ = [[0, h∞ H], [−I, 0]]`.
pub fn assemble_d_nag(h: f64, hess: &DMatrix<f64>) -> DMatrix<f64> {
    let d = hess.nrows();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, d), (d, d)).copy_from(&(hess * h));
    m.view_mut((d, 0), (d, d)).fill_diagonal(-1.0);
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnstableMode {
    /// Index of the paired eigenvalue among the ascending `β`.
    pub k: usize,
    pub beta: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapAnalysis {
    /// `D` (`3d × 3d`) or `D̃` (`2d × 2d`).
    pub d_matrix: DMatrix<f64>,
    /// Ascending eigenvalues `β` of `h∞ V^{1/2} H V^{1/2}` (or `h∞ H`).
    pub betas: Vec<f64>,
    pub unstable: Vec<UnstableMode>,
    /// Left eigenvectors of `D` for the unstable modes, one per row.
    pub a_plus: DMatrix<f64>,
    /// Orthogonal projector onto the negative eigenspace.
    pub projector: DMatrix<f64>,
    pub excitation: f64,
}

impl TrapAnalysis {
    pub fn d_plus(&self) -> usize {
        self.unstable.len()
    }

    /// `‖A⁺D − diag(ζ)A⁺‖_F`.
    pub fn left_eigen_residual(&self) -> f64 {
        let zetas = DVector::from_iterator(self.unstable.len(), self.unstable.iter().map(|u| u.zeta));
        (&self.a_plus * &self.d_matrix - DMatrix::from_diagonal(&zetas) * &self.a_plus).norm()
    }
}

/// Positive root of `ζ² + rζ + β = 0` for `β < 0`.
pub fn unstable_root(r: f64, beta: f64) -> f64 {
    0.5 * (-r + (r * r - 4.0 * beta).sqrt())
}

/// `(betas, unstable modes, A⁺, projector)`.
pub type UnstableSpectrum = (Vec<f64>, Vec<UnstableMode>, DMatrix<f64>, DMatrix<f64>);

/// Unstable modes of `D` from `H`, the diagonal `V` and the limits.
///
/// Returns the ascending `β`, the modes with `β < 0`, the rows of `A⁺` and
/// the projector onto the span of the corresponding eigenvectors of
/// `V^{1/2} H V^{1/2}`.
pub fn unstable_spectrum(hess: &DMatrix<f64>, v: &DMatrix<f64>, limits: &Limits) -> Result<UnstableSpectrum> {
    let d = hess.nrows();
    check_dim(d, v.nrows())?;
    if v.diagonal().iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Domain("V must be a positive diagonal matrix".into()));
    }
    let v_half = DMatrix::from_diagonal(&v.diagonal().map(f64::sqrt));
    let v_inv_half = DMatrix::from_diagonal(&v.diagonal().map(|c| 1.0 / c.sqrt()));
    let eig = sym_eigen(&(&v_half * hess * &v_half))?;
    let betas: Vec<f64> = eig.eigenvalues.iter().map(|mu| limits.h * mu).collect();

    let mut modes = Vec::new();
    let mut rows = Vec::new();
    for (k, &beta) in betas.iter().enumerate() {
        if beta < 0.0 {
            let zeta = unstable_root(limits.r, beta);
            let w = eig.eigenvectors.column(k).transpose();
            let mut row = RowDVector::zeros(3 * d);
            row.columns_mut(d, d).copy_from(&(&w * &v_half));
            row.columns_mut(2 * d, d)
                .copy_from(&(&w * &v_inv_half * -(limits.r + zeta)));
            rows.push(row);
            modes.push(UnstableMode { k, beta, zeta });
        }
    }
    let a_plus = stack_rows(&rows, 3 * d);
    let projector = eig.projector_below(0.0);
    Ok((betas, modes, a_plus, projector))
}

fn stack_rows(rows: &[RowDVector<f64>], width: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), width);
    for (i, r) in rows.iter().enumerate() {
        m.set_row(i, r);
    }
    m
}

/// `‖Π_u V^{1/2} 𝒬 V^{1/2} Π_u‖_F` with `Π_u` onto the negative eigenspace of `V^{1/2} H V^{1/2}`.
pub fn noise_excitation(problem: &Problem, x_star: &[f64], v: &DMatrix<f64>) -> Result<f64> {
    let hess = problem.hessian(x_star)?;
    let cov = problem.noise_covariance(x_star)?;
    excitation_from_parts(&hess, v, &cov)
}

pub fn excitation_from_parts(hess: &DMatrix<f64>, v: &DMatrix<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let v_half = DMatrix::from_diagonal(&v.diagonal().map(f64::sqrt));
    let proj = sym_eigen(&(&v_half * hess * &v_half))?.projector_below(0.0);
    Ok((&proj * &v_half * cov * &v_half * &proj).norm())
}

/// Full analysis for the general dynamics at `x*`.
pub fn trap_analysis(problem: &Problem, x_star: &[f64], limits: &Limits, eps: f64) -> Result<TrapAnalysis> {
    let d_matrix = linearize_d(problem, x_star, limits, eps)?;
    let v = v_matrix(&preconditioner_state(problem, x_star, limits)?, eps);
    let hess = problem.hessian(x_star)?;
    let (betas, unstable, a_plus, projector) = unstable_spectrum(&hess, &v, limits)?;
    let excitation = noise_excitation(problem, x_star, &v)?;
    Ok(TrapAnalysis {
        d_matrix,
        betas,
        unstable,
        a_plus,
        projector,
        excitation,
    })
}

/// Analysis for the Nesterov dynamics (`h∞ = 1`, no damping in the limit).
pub fn nag_trap_analysis(problem: &Problem, x_star: &[f64]) -> Result<TrapAnalysis> {
    check_dim(problem.dim(), x_star.len())?;
    let hess = problem.hessian(x_star)?;
    let d = hess.nrows();
    let eig = sym_eigen(&hess)?;
    let betas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut unstable = Vec::new();
    let mut rows = Vec::new();
    for (k, &beta) in betas.iter().enumerate() {
        if beta < 0.0 {
            let zeta = (-beta).sqrt();
            let w = eig.eigenvectors.column(k).transpose();
            let mut row = RowDVector::zeros(2 * d);
            row.columns_mut(0, d).copy_from(&w);
            row.columns_mut(d, d).copy_from(&(&w * -zeta));
            rows.push(row);
            unstable.push(UnstableMode { k, beta, zeta });
        }
    }
    let projector = eig.projector_below(0.0);
    let cov = problem.noise_covariance(x_star)?;
    let excitation = (&projector * cov * &projector).norm();
    Ok(TrapAnalysis {
        d_matrix: assemble_d_nag(1.0, &hess),
        betas,
        unstable,
        a_plus: stack_rows(&rows, 2 * d),
        projector,
        excitation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Converging,
    Diverging,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Converging => "converging",
            Self::Diverging => "diverging",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDiagnostic {
    /// `(N, Σ_{n ≤ N} a_n)` for `N = 10³, …, 10⁶`.
    pub partial_sums: Vec<(usize, f64)>,
    /// Last decade increment over the previous one.
    pub ratio: f64,
    pub verdict: Verdict,
}

const CHECKPOINTS: [usize; 4] = [1_000, 10_000, 100_000, 1_000_000];

/// Partial sums of `terms(n)` for `n = 1..=10⁶` and a tail-trend verdict:
/// converging if the last decade adds at most 0.75 of the previous decade's
/// increment, diverging if it adds at least 0.95 of it.
pub fn series_diagnostic(mut terms: impl FnMut(usize) -> f64) -> SeriesDiagnostic {
    let mut sum = 0.0;
    let mut partial_sums = Vec::new();
    let mut next = 0;
    for n in 1..=CHECKPOINTS[CHECKPOINTS.len() - 1] {
        sum += terms(n);
        if n == CHECKPOINTS[next] {
            partial_sums.push((n, sum));
            next += 1;
        }
    }
    let k = partial_sums.len();
    let last = partial_sums[k - 1].1 - partial_sums[k - 2].1;
    let prev = partial_sums[k - 2].1 - partial_sums[k - 3].1;
    let (ratio, verdict) = if last == 0.0 && prev == 0.0 {
        (0.0, Verdict::Converging)
    } else if prev == 0.0 {
        (f64::INFINITY, Verdict::Diverging)
    } else {
        let r = last / prev;
        let v = if r <= 0.75 {
            Verdict::Converging
        } else if r >= 0.95 {
            Verdict::Diverging
        } else {
            Verdict::Inconclusive
        };
        (r, v)
    };
    SeriesDiagnostic {
        partial_sums,
        ratio,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvtReport {
    /// `Σ (q∞ p_n − p∞ q_n)²`.
    pub schedule_gap: SeriesDiagnostic,
    /// `Σ γ_n²`.
    pub stepsize_squares: SeriesDiagnostic,
}

/// Partial-sum checks of the summability hypotheses of the avoidance result.
pub fn check_avt_assumptions(spec: &ScheduleSpec, stepsize: &StepsizeSpec) -> Result<AvtReport> {
    let lim = spec.limits();
    let mut tau = 0.0;
    let mut gap_terms = Vec::with_capacity(CHECKPOINTS[3]);
    for n in 1..=CHECKPOINTS[3] {
        tau += stepsize.gamma(n);
        let c = spec.eval(tau)?;
        gap_terms.push((lim.q * c.p - lim.p * c.q).powi(2));
    }
    Ok(AvtReport {
        schedule_gap: series_diagnostic(|n| gap_terms[n - 1]),
        stepsize_squares: series_diagnostic(|n| stepsize.gamma(n).powi(2)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointClass {
    Critical(CriticalKind),
    Unclassified,
}

impl EndpointClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Critical(k) => k.as_str(),
            Self::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeRun {
    pub index: usize,
    pub endpoint: Vec<f64>,
    pub nearest: usize,
    pub distance: f64,
    pub class: EndpointClass,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmReport {
    pub runs: Vec<EscapeRun>,
}

impl ArmReport {
    fn count(&self, kind: CriticalKind) -> usize {
        self.runs
            .iter()
            .filter(|r| r.class == EndpointClass::Critical(kind))
            .count()
    }

    pub fn at_saddle(&self) -> usize {
        self.count(CriticalKind::Saddle) + self.count(CriticalKind::Maximum)
    }

    pub fn at_minimum(&self) -> usize {
        self.count(CriticalKind::Minimum)
    }

    pub fn fraction_saddle(&self) -> f64 {
        self.at_saddle() as f64 / self.runs.len().max(1) as f64
    }

    pub fn fraction_minimum(&self) -> f64 {
        self.at_minimum() as f64 / self.runs.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeReport {
    /// Runs with the problem's noise, started near the trap.
    pub excited: ArmReport,
    /// Noise-free runs started exactly at the trap.
    pub control: ArmReport,
    pub excitation: f64,
}

#[derive(Debug, Clone)]
pub struct EscapeOptions {
    pub algorithm: Algorithm,
    pub spec: ScheduleSpec,
    pub stepsize: StepsizeSpec,
    pub eps: f64,
    pub n_runs: usize,
    pub n_iter: usize,
    pub init_radius: f64,
    pub classify_radius: f64,
    pub master_seed: u64,
}

/// Runs the excited and the noise-free arm from the trap `x*`.
pub fn escape_experiment(problem: &Problem, x_star: &[f64], opts: &EscapeOptions) -> Result<EscapeReport> {
    check_dim(problem.dim(), x_star.len())?;
    if !opts.stepsize.square_summable() {
        return Err(Error::StepsizeConstraint(format!(
            "escape experiments need Σγ_n² < ∞ (exponent > 1/2), got {}",
            opts.stepsize.alpha
        )));
    }
    if !(opts.init_radius >= 0.0) || !(opts.classify_radius > 0.0) {
        return Err(Error::Config("init_radius must be >= 0 and classify_radius > 0".into()));
    }
    let lim = opts.spec.limits();
    let excitation = match opts.algorithm {
        Algorithm::Nag { .. } => nag_trap_analysis(problem, x_star)?.excitation,
        _ => {
            let v = v_matrix(&preconditioner_state(problem, x_star, &lim)?, opts.eps);
            noise_excitation(problem, x_star, &v)?
        }
    };

    let config = RunConfig {
        algorithm: opts.algorithm,
        spec: opts.spec.clone(),
        stepsize: opts.stepsize,
        n_iter: opts.n_iter,
        record_stride: 0,
        eps: opts.eps,
    };
    let plan = RunPlan::new(config)?;

    let excited = run_arm(&plan, problem, x_star, opts.init_radius, opts)?;
    let quiet = problem.with_noise(NoiseModel::None)?;
    let control = run_arm(&plan, &quiet, x_star, 0.0, opts)?;
    Ok(EscapeReport {
        excited,
        control,
        excitation,
    })
}

fn trap_state(plan: &RunPlan, problem: &Problem, x: Vec<f64>) -> Result<IterateState> {
    let kind = plan.config.algorithm.ode_kind();
    let mut z = kind.state_at_rest(x);
    if kind.has_v() {
        let lim = plan.config.spec.limits();
        if lim.q > 0.0 {
            z.v = preconditioner_state(problem, &z.x, &lim)?;
        }
    }
    Ok(z)
}

fn run_arm(plan: &RunPlan, problem: &Problem, x_star: &[f64], radius: f64, opts: &EscapeOptions) -> Result<ArmReport> {
    let base = trap_state(plan, problem, x_star.to_vec())?;
    let d = x_star.len();
    let records = plan.execute_many_with(problem, opts.master_seed, opts.n_runs, |_, rng| {
        let mut z = base.clone();
        if radius > 0.0 {
            let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let rho = radius * rng.random::<f64>().powf(1.0 / d as f64);
            for (x, u) in z.x.iter_mut().zip(&dir) {
                *x += rho * u / norm;
            }
        }
        Ok(z)
    })?;
    let runs = records
        .into_iter()
        .enumerate()
        .map(|(index, rec)| {
            let endpoint = rec.final_state.x.clone();
            let diverged = rec.diverged() || !rec.final_state.is_finite();
            let (nearest, distance) = problem
                .nearest_critical_point(&endpoint)
                .unwrap_or((usize::MAX, f64::INFINITY));
            let class = if !diverged && distance <= opts.classify_radius {
                EndpointClass::Critical(problem.critical_points()[nearest].kind)
            } else {
                EndpointClass::Unclassified
            };
            EscapeRun {
                index,
                endpoint,
                nearest,
                distance,
                class,
                diverged,
            }
        })
        .collect();
    Ok(ArmReport { runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::saddle_quartic;
    use crate::spectral::eigenvalue_real_parts;
    use approx::assert_relative_eq;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    fn ones() -> Limits {
        Limits::new(1.0, 1.0, 1.0, 1.0)
    }

    #[test]
    fn golden_root() {
        let hess = DMatrix::from_element(1, 1, -1.0);
        let (_, modes, a_plus, _) = unstable_spectrum(&hess, &DMatrix::identity(1, 1), &ones()).unwrap();
        assert_eq!(modes.len(), 1);
        assert_relative_eq!(modes[0].zeta, GOLDEN, epsilon = 1e-15);
        assert_eq!(a_plus.nrows(), 1);
    }

    #[test]
    fn positive_definite_has_no_unstable_modes() {
        let hess = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let (_, modes, _, proj) = unstable_spectrum(&hess, &DMatrix::identity(2, 2), &ones()).unwrap();
        assert!(modes.is_empty());
        assert_eq!(proj.norm(), 0.0);
    }

    #[test]
    fn saddle_quartic_at_origin() {
        let p = saddle_quartic(NoiseModel::isotropic(2, 1.0)).unwrap();
        let t = trap_analysis(&p, &[0.0, 0.0], &ones(), 1.0).unwrap();
        assert_eq!(t.d_plus(), 1);
        let beta = -std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(t.unstable[0].beta, beta, epsilon = 1e-15);
        // Positive root of ζ² + ζ − 1/√2, computed independently at high precision.
        assert_relative_eq!(t.unstable[0].zeta, 0.478_318_343_478_516, epsilon = 1e-15);
        assert!(t.left_eigen_residual() <= 1e-12);
        assert!(t.excitation > 0.0);

        let v = 1.0 / 2f64.sqrt();
        let d = &t.d_matrix;
        for i in 0..2 {
            assert_eq!(d[(i, i)], -1.0);
            assert_eq!(d[(2 + i, 2 + i)], -1.0);
            assert_relative_eq!(d[(4 + i, 2 + i)], -v, epsilon = 1e-15);
        }
        assert_eq!(d[(2, 4)], 1.0);
        assert_eq!(d[(3, 5)], -1.0);
        assert_eq!(d.view((0, 4), (2, 2)).norm(), 0.0);
    }

    #[test]
    fn d_has_q_eigenvalues() {
        let p = saddle_quartic(NoiseModel::isotropic(2, 0.3)).unwrap();
        let lim = Limits::new(0.8, 1.2, 0.9, 0.7);
        let d = linearize_d(&p, &[0.0, 1.0], &lim, 1e-3).unwrap();
        let re = eigenvalue_real_parts(&d).unwrap();
        let at_q = re.iter().filter(|&&l| (l + 0.7).abs() < 1e-9).count();
        assert!(at_q >= 2, "{re:?}");
    }

    #[test]
    fn zero_noise_preconditioner() {
        let p = saddle_quartic(NoiseModel::None).unwrap();
        let v = preconditioner_state(&p, &[0.0, 0.0], &ones()).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        let vm = v_matrix(&v, 1e-4);
        assert_relative_eq!(vm[(0, 0)], 100.0, max_relative = 1e-14);
        assert_eq!(noise_excitation(&p, &[0.0, 0.0], &vm).unwrap(), 0.0);
    }

    #[test]
    fn stable_only_noise_is_not_exciting() {
        let hess = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        assert_eq!(
            excitation_from_parts(&hess, &DMatrix::identity(2, 2), &cov).unwrap(),
            0.0
        );
        let iso = DMatrix::identity(2, 2) * 0.25;
        let v = DMatrix::identity(2, 2) * 0.5;
        assert_relative_eq!(excitation_from_parts(&hess, &v, &iso).unwrap(), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn nag_analysis() {
        let p = saddle_quartic(NoiseModel::isotropic(2, 0.5)).unwrap();
        let t = nag_trap_analysis(&p, &[0.0, 0.0]).unwrap();
        assert_eq!(t.d_plus(), 1);
        assert_eq!(t.unstable[0].zeta, 1.0);
        assert!(t.left_eigen_residual() <= 1e-14);
        assert!(t.excitation > 0.0);
        let m = nag_trap_analysis(&p, &[0.0, 1.0]).unwrap();
        assert_eq!(m.d_plus(), 0);
    }

    #[test]
    fn avt_checks() {
        let adam = ScheduleSpec::adam(1.0, 1.0, 2.0).unwrap();
        let r = check_avt_assumptions(&adam, &StepsizeSpec::new(0.5, 0.7).unwrap()).unwrap();
        assert!(r.schedule_gap.partial_sums.iter().all(|(_, s)| *s == 0.0));
        assert_eq!(r.schedule_gap.verdict, Verdict::Converging);
        assert_eq!(r.stepsize_squares.verdict, Verdict::Converging);
        let r = check_avt_assumptions(&adam, &StepsizeSpec::new(0.5, 0.5).unwrap()).unwrap();
        assert_eq!(r.stepsize_squares.verdict, Verdict::Diverging);
    }

    #[test]
    fn escape_needs_square_summable_steps() {
        let p = saddle_quartic(NoiseModel::isotropic(2, 0.5)).unwrap();
        let opts = EscapeOptions {
            algorithm: Algorithm::General,
            spec: ScheduleSpec::adam(1.0, 1.0, 1.0).unwrap(),
            stepsize: StepsizeSpec::new(0.1, 0.5).unwrap(),
            eps: 1e-8,
            n_runs: 2,
            n_iter: 10,
            init_radius: 0.0,
            classify_radius: DEFAULT_CLASSIFY_RADIUS,
            master_seed: 1,
        };
        assert!(matches!(
            escape_experiment(&p, &[0.0, 0.0], &opts),
            Err(Error::StepsizeConstraint(_))
        ));
    }

    #[test]
    fn control_arm_stays_at_fixed_point() {
        let p = saddle_quartic(NoiseModel::isotropic(2, 0.5)).unwrap();
        let opts = EscapeOptions {
            algorithm: Algorithm::General,
            spec: ScheduleSpec::adam(1.0, 1.0, 1.0).unwrap(),
            stepsize: StepsizeSpec::new(0.1, 0.7).unwrap(),
            eps: 1e-8,
            n_runs: 4,
            n_iter: 500,
            init_radius: 0.0,
            classify_radius: DEFAULT_CLASSIFY_RADIUS,
            master_seed: 1,
        };
        let rep = escape_experiment(&p, &[0.0, 0.0], &opts).unwrap();
        assert_eq!(rep.control.at_saddle(), 4);
        assert!(rep.control.runs.iter().all(|r| r.endpoint == vec![0.0, 0.0]));
    }
}

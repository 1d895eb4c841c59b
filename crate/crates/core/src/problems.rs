//! Objectives with exact derivatives and stochastic gradient oracles.
//!
//! Every noise model here has a closed-form second moment
//! `S(x) = E[∇f(x, ξ)^2]` and covariance `Cov(∇f(x, ξ))`, so equilibria and
//! asymptotic covariances have exact reference values.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

/// Gradient norm below which a declared critical point is accepted.
pub const CRITICAL_TOLERANCE: f64 = 1e-12;

/// A smooth objective `F` with its gradient and, optionally, its Hessian.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad_into(&self, x: &[f64], out: &mut [f64]);

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_into(x, &mut g);
        g
    }
}

/// Component gradients `∇f_i`, `i < count`, of a finite-sum objective.
pub trait ComponentGradients: Send + Sync + fmt::Debug {
    fn count(&self) -> usize;
    fn dim(&self) -> usize;
    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]);

    fn component_hessian(&self, _i: usize, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone)]
pub enum NoiseModel {
    None,
    /// `∇f(x, ζ) = ∇F(x) + σ ⊙ ζ` with `ζ` standard normal.
    AdditiveGaussian {
        sigma: Vec<f64>,
    },
    /// Mean of `batch` distinct components drawn uniformly without replacement.
    FiniteSum {
        components: Arc<dyn ComponentGradients>,
        batch: usize,
    },
}

impl NoiseModel {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::AdditiveGaussian { .. } => "additive_gaussian",
            Self::FiniteSum { .. } => "finite_sum",
        }
    }

    pub fn isotropic(d: usize, sigma: f64) -> Self {
        Self::AdditiveGaussian { sigma: vec![sigma; d] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    Minimum,
    Saddle,
    Maximum,
}

impl CriticalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Minimum => "minimum",
            Self::Saddle => "saddle",
            Self::Maximum => "maximum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub x: Vec<f64>,
    pub kind: CriticalKind,
}

/// One draw of the stochastic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub g: Vec<f64>,
    pub g_sq: Vec<f64>,
}

impl GradientSample {
    pub fn from_grad(g: Vec<f64>) -> Self {
        let g_sq = g.iter().map(|c| c * c).collect();
        Self { g, g_sq }
    }
}

/// An objective, its noise model, the known minimum value `F⋆` and its
/// declared critical points.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    objective: Arc<dyn Objective>,
    noise: NoiseModel,
    f_star: f64,
    critical_points: Vec<CriticalPoint>,
}

impl Problem {
    /// Validates the noise model and the declared critical points.
    pub fn new(
        name: impl Into<String>,
        objective: Arc<dyn Objective>,
        noise: NoiseModel,
        f_star: f64,
        critical_points: Vec<CriticalPoint>,
    ) -> Result<Self> {
        let problem = Self {
            name: name.into(),
            objective,
            noise,
            f_star,
            critical_points,
        };
        problem.validate()?;
        Ok(problem)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        match &self.noise {
            NoiseModel::None => {}
            NoiseModel::AdditiveGaussian { sigma } => {
                check_dim(d, sigma.len())?;
                if let Some(s) = sigma.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
                    return Err(Error::Config(format!(
                        "noise standard deviation must be finite and >= 0, got {s}"
                    )));
                }
            }
            NoiseModel::FiniteSum { components, batch } => {
                check_dim(d, components.dim())?;
                let k = components.count();
                if k == 0 || *batch == 0 || *batch > k {
                    return Err(Error::Config(format!("minibatch size {batch} must lie in 1..={k}")));
                }
                self.check_components_average(components.as_ref())?;
            }
        }
        for cp in &self.critical_points {
            check_dim(d, cp.x.len())?;
            let norm = l2(&self.grad(&cp.x));
            if norm > CRITICAL_TOLERANCE {
                return Err(Error::Config(format!(
                    "declared critical point {:?} of `{}` has gradient norm {norm:e}",
                    cp.x, self.name
                )));
            }
        }
        Ok(())
    }

    fn check_components_average(&self, components: &dyn ComponentGradients) -> Result<()> {
        let d = self.dim();
        let k = components.count();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut gi = vec![0.0; d];
        for _ in 0..5 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut mean = vec![0.0; d];
            for i in 0..k {
                components.component_grad_into(i, &x, &mut gi);
                for (a, b) in mean.iter_mut().zip(&gi) {
                    *a += b / k as f64;
                }
            }
            let g = self.grad(&x);
            let gap = mean.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap > 1e-10 * (1.0 + l2(&g)) {
                return Err(Error::Config(format!(
                    "finite-sum components do not average to the gradient (gap {gap:e})"
                )));
            }
        }
        Ok(())
    }

    /// The same objective with another noise model.
    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.objective.clone(),
            noise,
            self.f_star,
            self.critical_points.clone(),
        )
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical_points
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.objective.grad(x)
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.objective.grad_into(x, out)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.objective
            .hessian(x)
            .ok_or_else(|| Error::MissingHessian(self.name.clone()))
    }

    /// Draws `∇f(x, ξ)` into `g`.
    pub fn sample_grad_into<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, g: &mut [f64]) {
        match &self.noise {
            NoiseModel::None => self.grad_into(x, g),
            NoiseModel::AdditiveGaussian { sigma } => {
                self.grad_into(x, g);
                for (gi, s) in g.iter_mut().zip(sigma) {
                    let z: f64 = rng.sample(StandardNormal);
                    *gi += s * z;
                }
            }
            NoiseModel::FiniteSum { components, batch } => {
                let k = components.count();
                g.iter_mut().for_each(|c| *c = 0.0);
                let mut gi = vec![0.0; g.len()];
                for i in index::sample(rng, k, *batch) {
                    components.component_grad_into(i, x, &mut gi);
                    for (a, b) in g.iter_mut().zip(&gi) {
                        *a += b;
                    }
                }
                let scale = 1.0 / *batch as f64;
                g.iter_mut().for_each(|c| *c *= scale);
            }
        }
    }

    pub fn sample_grad<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> GradientSample {
        let mut g = vec![0.0; self.dim()];
        self.sample_grad_into(x, rng, &mut g);
        GradientSample::from_grad(g)
    }

    /// Finite-population correction `(k − B) / ((k − 1) B)` of a batch mean.
    fn batch_factor(k: usize, batch: usize) -> f64 {
        if k <= 1 {
            0.0
        } else {
            (k - batch) as f64 / ((k - 1) as f64 * batch as f64)
        }
    }

    /// `S(x) = E[∇f(x, ξ)^2]`.
    pub fn second_moment(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.grad(x);
        let mut s: Vec<f64> = g.iter().map(|c| c * c).collect();
        match &self.noise {
            NoiseModel::None => {}
            NoiseModel::AdditiveGaussian { sigma } => {
                for (si, sig) in s.iter_mut().zip(sigma) {
                    *si += sig * sig;
                }
            }
            NoiseModel::FiniteSum { components, batch } => {
                let k = components.count();
                let c = Self::batch_factor(k, *batch);
                let mut gi = vec![0.0; g.len()];
                let mut mean_sq = vec![0.0; g.len()];
                for i in 0..k {
                    components.component_grad_into(i, x, &mut gi);
                    for (a, b) in mean_sq.iter_mut().zip(&gi) {
                        *a += b * b / k as f64;
                    }
                }
                for ((si, m2), gj) in s.iter_mut().zip(&mean_sq).zip(&g) {
                    *si += c * (m2 - gj * gj).max(0.0);
                }
            }
        }
        Ok(s)
    }

    /// `Cov(∇f(x, ξ))`.
    pub fn noise_covariance(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        match &self.noise {
            NoiseModel::None => Ok(DMatrix::zeros(d, d)),
            NoiseModel::AdditiveGaussian { sigma } => Ok(DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                sigma.iter().map(|s| s * s),
            ))),
            NoiseModel::FiniteSum { components, batch } => {
                let k = components.count();
                let g = DVector::from_vec(self.grad(x));
                let mut gi = vec![0.0; d];
                let mut cov = DMatrix::zeros(d, d);
                for i in 0..k {
                    components.component_grad_into(i, x, &mut gi);
                    let dev = DVector::from_column_slice(&gi) - &g;
                    cov += &dev * dev.transpose();
                }
                Ok(cov * (Self::batch_factor(k, *batch) / k as f64))
            }
        }
    }

    /// Jacobian of `S` at `x`.
    pub fn second_moment_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let h = self.hessian(x)?;
        let g = self.grad(x);
        let diag_times = |v: &[f64], m: &DMatrix<f64>| {
            let mut out = m.clone();
            for (i, vi) in v.iter().enumerate() {
                out.row_mut(i).scale_mut(2.0 * vi);
            }
            out
        };
        match &self.noise {
            NoiseModel::None | NoiseModel::AdditiveGaussian { .. } => Ok(diag_times(&g, &h)),
            NoiseModel::FiniteSum { components, batch } => {
                let k = components.count();
                let c = Self::batch_factor(k, *batch);
                let mut jac = diag_times(&g, &h) * (1.0 - c);
                if c > 0.0 {
                    let mut gi = vec![0.0; g.len()];
                    for i in 0..k {
                        components.component_grad_into(i, x, &mut gi);
                        let hi = components
                            .component_hessian(i, x)
                            .ok_or_else(|| Error::MissingHessian(format!("{} component {i}", self.name)))?;
                        jac += diag_times(&gi, &hi) * (c / k as f64);
                    }
                }
                Ok(jac)
            }
        }
    }

    /// The declared critical point closest to `x`, with its distance.
    pub fn nearest_critical_point(&self, x: &[f64]) -> Option<(usize, f64)> {
        self.critical_points
            .iter()
            .enumerate()
            .map(|(i, cp)| (i, l2_dist(&cp.x, x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `F(x) = ½⟨x, Λx⟩` with `Λ = diag(eigenvalues) ≻ 0`.
#[derive(Debug, Clone)]
pub struct QuadraticDiag {
    eigenvalues: Vec<f64>,
}

impl QuadraticDiag {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Config("quadratic_diag needs at least one eigenvalue".into()));
        }
        if let Some(l) = eigenvalues.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!(
                "quadratic_diag eigenvalues must be positive, got {l}"
            )));
        }
        Ok(Self { eigenvalues })
    }
}

impl Objective for QuadraticDiag {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.eigenvalues.iter().zip(x).map(|(l, xi)| l * xi * xi).sum::<f64>()
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, l), xi) in out.iter_mut().zip(&self.eigenvalues).zip(x) {
            *o = l * xi;
        }
    }

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues)))
    }
}

/// `F(x, y) = (x⁴ + y⁴)/4 + (x² − y²)/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SaddleQuartic;

impl Objective for SaddleQuartic {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, z: &[f64]) -> f64 {
        let (x, y) = (z[0], z[1]);
        (x.powi(4) + y.powi(4)) / 4.0 + (x * x - y * y) / 2.0
    }

    fn grad_into(&self, z: &[f64], out: &mut [f64]) {
        let (x, y) = (z[0], z[1]);
        out[0] = x + x * x * x;
        out[1] = -y + y * y * y;
    }

    fn hessian(&self, z: &[f64]) -> Option<DMatrix<f64>> {
        let (x, y) = (z[0], z[1]);
        Some(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0 + 3.0 * x * x,
            -1.0 + 3.0 * y * y,
        ])))
    }
}

/// `F(x) = (1/k) Σ ½(⟨a_i, x⟩ − b_i)²`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: DMatrix<f64>,
    b: Vec<f64>,
}

impl LeastSquares {
    /// `a` holds one data point per row.
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Config(
                "least squares needs at least one data point and one feature".into(),
            ));
        }
        Ok(Self { a, b })
    }

    fn residual(&self, i: usize, x: &[f64]) -> f64 {
        self.a.row(i).iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() - self.b[i]
    }

    fn gram(&self) -> DMatrix<f64> {
        self.a.transpose() * &self.a / self.a.nrows() as f64
    }

    /// The unique minimizer, if the Gram matrix is invertible.
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        let rhs = self.a.transpose() * DVector::from_column_slice(&self.b) / self.a.nrows() as f64;
        let sol = self.gram().cholesky().ok_or(Error::Singular)?.solve(&rhs);
        Ok(sol.as_slice().to_vec())
    }
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let k = self.a.nrows();
        (0..k).map(|i| 0.5 * self.residual(i, x).powi(2)).sum::<f64>() / k as f64
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let k = self.a.nrows();
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..k {
            let r = self.residual(i, x) / k as f64;
            for (o, ai) in out.iter_mut().zip(self.a.row(i).iter()) {
                *o += r * ai;
            }
        }
    }

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.gram())
    }
}

impl ComponentGradients for LeastSquares {
    fn count(&self) -> usize {
        self.a.nrows()
    }

    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let r = self.residual(i, x);
        for (o, ai) in out.iter_mut().zip(self.a.row(i).iter()) {
            *o = r * ai;
        }
    }

    fn component_hessian(&self, i: usize, _x: &[f64]) -> Option<DMatrix<f64>> {
        let row = self.a.row(i).transpose();
        Some(&row * row.transpose())
    }
}

pub fn quadratic_diag(eigenvalues: Vec<f64>, noise: NoiseModel) -> Result<Problem> {
    let d = eigenvalues.len();
    let objective = Arc::new(QuadraticDiag::new(eigenvalues)?);
    let min = CriticalPoint {
        x: vec![0.0; d],
        kind: CriticalKind::Minimum,
    };
    Problem::new("quadratic_diag", objective, noise, 0.0, vec![min])
}

pub fn saddle_quartic(noise: NoiseModel) -> Result<Problem> {
    let points = vec![
        CriticalPoint {
            x: vec![0.0, 0.0],
            kind: CriticalKind::Saddle,
        },
        CriticalPoint {
            x: vec![0.0, 1.0],
            kind: CriticalKind::Minimum,
        },
        CriticalPoint {
            x: vec![0.0, -1.0],
            kind: CriticalKind::Minimum,
        },
    ];
    Problem::new("saddle_quartic", Arc::new(SaddleQuartic), noise, -0.25, points)
}

/// Least squares over the rows of `a`, with minibatch sampling of `batch` rows.
pub fn finite_sum_ls(a: DMatrix<f64>, b: Vec<f64>, batch: usize) -> Result<Problem> {
    let ls = Arc::new(LeastSquares::new(a, b)?);
    let x_star = ls.minimizer()?;
    let f_star = ls.value(&x_star);
    let min = CriticalPoint {
        x: x_star,
        kind: CriticalKind::Minimum,
    };
    let noise = NoiseModel::FiniteSum {
        components: ls.clone(),
        batch,
    };
    let objective: Arc<dyn Objective> = ls;
    // The minimizer comes out of a linear solve, so its gradient is only
    // zero up to roundoff; polish it with one Newton step before declaring it.
    let mut problem = Problem {
        name: "finite_sum_ls".into(),
        objective,
        noise,
        f_star,
        critical_points: vec![min],
    };
    polish_minimum(&mut problem)?;
    problem.validate()?;
    Ok(problem)
}

fn polish_minimum(problem: &mut Problem) -> Result<()> {
    let x = problem.critical_points[0].x.clone();
    let h = problem.hessian(&x)?;
    let g = DVector::from_vec(problem.grad(&x));
    let dx = h.cholesky().ok_or(Error::Singular)?.solve(&g);
    let polished: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a - b).collect();
    if l2(&problem.grad(&polished)) <= l2(g.as_slice()) {
        problem.f_star = problem.value(&polished);
        problem.critical_points[0].x = polished;
    }
    Ok(())
}

/// Least squares on `k` Gaussian data points in dimension `d` with
/// noisy linear targets, generated from `seed`.
pub fn random_least_squares(d: usize, k: usize, batch: usize, seed: u64) -> Result<Problem> {
    if d == 0 || k < d {
        return Err(Error::Config(format!(
            "random least squares needs k >= d >= 1, got d = {d}, k = {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(k, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let truth: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let b = (0..k)
        .map(|i| {
            let clean: f64 = a.row(i).iter().zip(&truth).map(|(x, y)| x * y).sum();
            clean + 0.5 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    finite_sum_ls(a, b, batch)
}

/// The default least-squares data set: four points in the plane.
pub fn default_least_squares(batch: usize) -> Result<Problem> {
    let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
    finite_sum_ls(a, vec![1.0, 2.0, 2.0, 0.5], batch)
}

/// The builtin problems with default parameters and no noise.
pub fn builtin_problems() -> Vec<Problem> {
    vec![
        quadratic_diag(vec![1.0, 2.0], NoiseModel::None).expect("valid builtin"),
        saddle_quartic(NoiseModel::None).expect("valid builtin"),
        default_least_squares(2).expect("valid builtin"),
    ]
}

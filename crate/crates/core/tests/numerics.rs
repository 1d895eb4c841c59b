use adaflow_core::integrate::{integrate, IntegrateOptions, OdeKind};
use adaflow_core::problems::{builtin_problems, quadratic_diag, NoiseModel};
use adaflow_core::schedules::ScheduleSpec;
use adaflow_core::spectral::{hurwitz_margin, lyapunov_residual, lyapunov_solve};
use adaflow_core::IterateState;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    for p in builtin_problems() {
        let d = p.dim();
        for _ in 0..20 {
            let x = random_point(&mut rng, d);
            let g = p.grad(&x);
            for i in 0..d {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6, "{} at {x:?}: {fd} vs {}", p.name, g[i]);
            }
        }
    }
}

#[test]
fn hessians_match_differences_of_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    for p in builtin_problems() {
        let d = p.dim();
        for _ in 0..20 {
            let x = random_point(&mut rng, d);
            let hess = p.hessian(&x).unwrap();
            for j in 0..d {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += h;
                xm[j] -= h;
                let (gp, gm) = (p.grad(&xp), p.grad(&xm));
                for i in 0..d {
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    assert!((fd - hess[(i, j)]).abs() <= 1e-4, "{} H[{i},{j}]", p.name);
                }
            }
        }
    }
}

#[test]
fn rk4_is_fourth_order() {
    let p = quadratic_diag(vec![1.0, 3.0], NoiseModel::None).unwrap();
    let spec = ScheduleSpec::nag(3.0).unwrap();
    let kind = OdeKind::Nesterov { alpha: 3.0 };
    let z0 = IterateState::new(Vec::new(), vec![0.5, -0.2], vec![1.0, 1.0]);
    let solve = |step: f64| {
        let opts = IntegrateOptions {
            step,
            tol: None,
            min_step: 1e-12,
        };
        integrate(kind, &spec, &p, &z0, 1.0, 3.0, 1e-8, opts)
            .unwrap()
            .last()
            .x
            .clone()
    };
    let reference = solve(0.2 / 64.0);
    let err = |step: f64| {
        let x = solve(step);
        x.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
    for ratio in [e1 / e2, e2 / e3] {
        let order = ratio.log2();
        assert!(
            (3.7..4.3).contains(&order),
            "observed order {order} ({e1:e}, {e2:e}, {e3:e})"
        );
    }
}

#[test]
fn lyapunov_solver_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for d in [2, 4, 6] {
        let shift = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let b = &shift - DMatrix::identity(d, d) * (shift.norm() + 0.5);
        assert!(hurwitz_margin(&b) > 0.0);
        let c = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let q = &c * c.transpose();
        let gamma = lyapunov_solve(&b, &q).unwrap();
        assert!(lyapunov_residual(&b, &gamma, &q) <= 1e-9);
    }
}

use adaflow_core::clt::{analyze, empirical_clt, CltInputs, EmpiricalOptions};
use adaflow_core::integrate::{
    compatible_initial_state, integrate, nesterov_change_of_variable, residual_to_equilibrium, IntegrateOptions,
    OdeKind,
};
use adaflow_core::optimize::{initial_state, Algorithm, RunConfig, RunPlan, Termination};
use adaflow_core::problems::{CriticalKind, Problem};
use adaflow_core::schedules::{default_grid, validate_assumptions, ScheduleSpec};
use adaflow_core::traps::{
    check_avt_assumptions, escape_experiment, nag_trap_analysis, trap_analysis, ArmReport, EscapeOptions,
    SeriesDiagnostic,
};
use adaflow_core::IterateState;
use nalgebra::DMatrix;

use crate::config::{ExperimentConfig, ScheduleConfig, SystemConfig};
use crate::error::CliError;
use crate::output::{indexed, num, nums, quantile, Csv, Outputs, Summary};

fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("missing [{name}] table")))
}

fn check_eps(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.eps > 0.0 && cfg.eps.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("eps must be positive, got {}", cfg.eps)))
    }
}

fn check_dim(what: &str, got: usize, problem: &Problem) -> Result<(), CliError> {
    if got == problem.dim() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} has {got} components; the problem has dimension {}",
            problem.dim()
        )))
    }
}

fn state_header(z: &IterateState) -> Vec<String> {
    indexed("v", z.v.len())
        .chain(indexed("m", z.m.len()))
        .chain(indexed("x", z.x.len()))
        .collect()
}

fn state_cells(z: &IterateState) -> impl Iterator<Item = String> + '_ {
    nums(&z.v).chain(nums(&z.m)).chain(nums(&z.x))
}

fn assumption_table(spec: &ScheduleSpec, out: &mut Outputs) -> Result<(), CliError> {
    let report = validate_assumptions(spec, &default_grid())?;
    let mut csv = Csv::new(["clause", "holds", "detail"]);
    for c in &report.clauses {
        csv.row([
            c.id.to_owned(),
            c.holds.to_string(),
            format!("\"{}\"", c.detail.replace('"', "'")),
        ]);
    }
    for c in report.failures() {
        out.notice(format!("warning: schedule clause {} fails: {}", c.id, c.detail));
    }
    out.add("assumptions.csv", csv);
    Ok(())
}

/// Integrates the configured ODE and records the trajectory.
pub fn cmd_ode(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let oc = section(&cfg.ode, "ode")?;
    check_eps(cfg)?;
    let problem = cfg.build_problem()?;
    let spec = cfg.build_schedule()?;
    check_dim("ode.x0", oc.x0.len(), &problem)?;
    if oc.record_every == 0 {
        return Err(CliError::Config("ode.record_every must be at least 1".into()));
    }
    let kind = match (oc.system, &cfg.schedule) {
        (SystemConfig::Nesterov, ScheduleConfig::Nag { alpha }) => OdeKind::Nesterov { alpha: *alpha },
        (SystemConfig::Nesterov, _) => {
            return Err(CliError::Config(
                "system \"nesterov\" needs a schedule of kind \"nag\"".into(),
            ))
        }
        (_, ScheduleConfig::Nag { .. }) => {
            return Err(CliError::Config(
                "a schedule of kind \"nag\" is only valid with system \"nesterov\"".into(),
            ))
        }
        (SystemConfig::General, _) => OdeKind::General,
        (SystemConfig::Adagrad, _) => OdeKind::Adagrad,
    };
    if !(oc.t0 > 0.0) || !(oc.t_end > oc.t0) {
        return Err(CliError::Config(format!(
            "need 0 < t0 < t_end, got t0 = {}, t_end = {}",
            oc.t0, oc.t_end
        )));
    }
    if !(oc.step > 0.0) || !(oc.tol >= 0.0) || !(oc.min_step > 0.0) {
        return Err(CliError::Config(
            "step and min_step must be positive and tol nonnegative".into(),
        ));
    }

    let mut out = Outputs::default();
    if !matches!(kind, OdeKind::Nesterov { .. }) {
        assumption_table(&spec, &mut out)?;
    }
    let opts = IntegrateOptions {
        step: oc.step,
        tol: (oc.tol > 0.0).then_some(oc.tol),
        min_step: oc.min_step,
    };
    let z0 = compatible_initial_state(kind, &spec, &problem, oc.x0.clone())?;
    let traj = integrate(kind, &spec, &problem, &z0, oc.t0, oc.t_end, cfg.eps, opts)?;
    let limits = spec.limits();

    let mut csv = Csv::new(
        ["t", "energy", "residual", "local_error"]
            .into_iter()
            .map(String::from)
            .chain(state_header(&z0)),
    );
    let last = traj.len() - 1;
    for i in (0..traj.len()).filter(|&i| i % oc.record_every == 0 || i == last) {
        let z = &traj.states[i];
        let res = residual_to_equilibrium(kind, z, &limits, &problem)?;
        let head = [traj.times[i], traj.energies[i], res, traj.local_errors[i]];
        csv.row(nums(&head).chain(state_cells(z)));
    }
    out.add("trajectory.csv", csv);

    let mut s = Summary::default();
    s.text("system", format!("{:?}", oc.system).to_lowercase());
    s.count("steps", last);
    s.num("t_end", traj.times[last]);
    s.num("final_energy", traj.energies[last]);
    s.num(
        "final_residual",
        residual_to_equilibrium(kind, traj.last(), &limits, &problem)?,
    );
    if matches!(kind, OdeKind::Nesterov { .. }) && oc.change_of_variable > 0 {
        let rep = nesterov_change_of_variable(&traj, &problem, oc.change_of_variable)?;
        s.num("cov_kappa", rep.kappa);
        s.num("cov_beta", rep.beta);
        s.num("cov_residual_y", rep.residual_y);
        s.num("cov_residual_u", rep.residual_u);
        s.num("cov_residual", rep.residual());
        s.num("cov_transport_gap", rep.transport_gap);
        out.notice(format!(
            "change-of-variable residual {:e} (transport gap {:e})",
            rep.residual(),
            rep.transport_gap
        ));
    }
    out.add("summary.csv", s.into_csv());
    Ok(out)
}

/// Monte-Carlo runs of the discrete algorithm.
pub fn cmd_optimize(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let oc = section(&cfg.optimize, "optimize")?;
    check_eps(cfg)?;
    let problem = cfg.build_problem()?;
    let spec = cfg.build_schedule()?;
    let stepsize = cfg.build_stepsize()?;
    let algorithm = cfg.algorithm(oc.algorithm)?;
    check_dim("optimize.x0", oc.x0.len(), &problem)?;
    if oc.n_runs == 0 {
        return Err(CliError::Config("optimize.n_runs must be at least 1".into()));
    }
    let plan = RunPlan::new(RunConfig {
        algorithm,
        spec,
        stepsize,
        n_iter: oc.n_iter,
        record_stride: oc.record_stride,
        eps: cfg.eps,
    })?;
    let z0 = initial_state(algorithm, oc.x0.clone());
    let records = plan.execute_many(&problem, &z0, cfg.seed, oc.n_runs)?;

    let mut out = Outputs::default();
    let mut runs = Csv::new(
        ["run", "n", "tau", "lyapunov", "residual"]
            .into_iter()
            .map(String::from)
            .chain(state_header(&z0)),
    );
    let mut finals = Csv::new(
        ["run", "termination", "diverged_at", "final_residual"]
            .into_iter()
            .map(String::from)
            .chain(indexed("x", z0.dim())),
    );
    let mut residuals = Vec::new();
    let mut diverged = 0;
    for (i, rec) in records.iter().enumerate() {
        for row in &rec.rows {
            let head = [
                i.to_string(),
                row.n.to_string(),
                num(row.tau),
                num(row.lyapunov),
                num(row.residual),
            ];
            runs.row(head.into_iter().chain(state_cells(&row.state)));
        }
        let at = match rec.termination {
            Termination::Diverged { n, .. } => {
                diverged += 1;
                n.to_string()
            }
            Termination::Completed => String::new(),
        };
        let r = rec.final_residual();
        if !rec.diverged() {
            residuals.push(r);
        }
        let head = [i.to_string(), rec.termination.as_str().to_owned(), at, num(r)];
        finals.row(head.into_iter().chain(nums(&rec.final_state.x)));
    }
    residuals.sort_by(f64::total_cmp);

    let mut s = Summary::default();
    s.text("algorithm", algorithm.name());
    s.count("n_runs", oc.n_runs);
    s.count("n_iter", oc.n_iter);
    s.count("completed", oc.n_runs - diverged);
    s.count("diverged", diverged);
    for (key, q) in [
        ("q10", 0.1),
        ("q25", 0.25),
        ("median", 0.5),
        ("q75", 0.75),
        ("q90", 0.9),
    ] {
        s.num(&format!("residual_{key}"), quantile(&residuals, q));
    }
    s.num("residual_max", residuals.last().copied().unwrap_or(f64::NAN));
    if diverged > 0 {
        out.notice(format!("warning: {diverged} of {} runs diverged", oc.n_runs));
    }
    out.add("runs.csv", runs);
    out.add("final.csv", finals);
    out.add("summary.csv", s.into_csv());
    Ok(out)
}

fn matrix_rows(csv: &mut Csv, name: &str, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            csv.row([name.to_owned(), i.to_string(), j.to_string(), num(m[(i, j)])]);
        }
    }
}

/// Asymptotic covariance and, optionally, its Monte-Carlo estimate.
pub fn cmd_clt(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let cc = section(&cfg.clt, "clt")?;
    check_eps(cfg)?;
    let problem = cfg.build_problem()?;
    let spec = cfg.build_schedule()?;
    if matches!(cfg.schedule, ScheduleConfig::Nag { .. }) {
        return Err(CliError::Config(
            "the covariance analysis needs r∞ > 0; a nag schedule is not supported".into(),
        ));
    }
    let stepsize = cfg.build_stepsize()?;
    let x_star = match &cc.x_star {
        Some(x) => x.clone(),
        None => problem
            .critical_points()
            .iter()
            .find(|c| c.kind == CriticalKind::Minimum)
            .map(|c| c.x.clone())
            .ok_or_else(|| CliError::Config("problem declares no minimum; set clt.x_star".into()))?,
    };
    check_dim("clt.x_star", x_star.len(), &problem)?;
    let inputs = CltInputs::from_problem(&problem, &x_star, spec.limits(), stepsize, cfg.eps)?;
    let res = analyze(&inputs)?;
    let d = inputs.dim();

    let mut out = Outputs::default();
    let mut cov = Csv::new(["matrix", "row", "col", "value"]);
    matrix_rows(&mut cov, "gamma", &res.gamma);
    matrix_rows(&mut cov, "gamma2", &res.gamma2);

    let mut s = Summary::default();
    for (i, v) in res.v_star.iter().enumerate() {
        s.num(&format!("v_star_{i}"), *v);
    }
    s.num("rate_l", res.l);
    s.num("theta", res.theta);
    s.num("consistency_gap", res.consistency_gap());

    if cc.n_runs > 0 && cc.n_iter > 0 {
        let opts = EmpiricalOptions {
            n_iter: cc.n_iter,
            n_runs: cc.n_runs,
            master_seed: cfg.seed,
            filter_radius: cc.filter_radius,
        };
        let emp = empirical_clt(&problem, &spec, &inputs, &res, &opts)?;
        matrix_rows(&mut cov, "empirical", &emp.covariance);
        let mut samples = Csv::new(
            std::iter::once("run".to_owned())
                .chain(indexed("m", d))
                .chain(indexed("x", d)),
        );
        for (run, row) in emp.kept.iter().zip(&emp.samples) {
            samples.row(std::iter::once(run.to_string()).chain(nums(row)));
        }
        out.add("samples.csv", samples);
        s.count("n_runs", emp.n_runs);
        s.count("kept", emp.kept.len());
        s.count("filtered", emp.n_filtered);
        s.count("diverged", emp.n_diverged);
        s.num("filter_radius", cc.filter_radius);
        s.num("rel_error_gamma", emp.rel_error_gamma);
        s.num("rel_error_gamma2", emp.rel_error_gamma2);
        out.notice(format!(
            "empirical covariance from {} of {} runs (runs farther than {} from z* excluded)",
            emp.kept.len(),
            emp.n_runs,
            cc.filter_radius
        ));
    }
    out.add("covariance.csv", cov);
    out.add("summary.csv", s.into_csv());
    Ok(out)
}

fn escape_rows(csv: &mut Csv, arm: &str, report: &ArmReport) {
    for r in &report.runs {
        let nearest = if r.nearest == usize::MAX {
            String::new()
        } else {
            r.nearest.to_string()
        };
        let cells = [arm.to_owned(), r.index.to_string()]
            .into_iter()
            .chain(nums(&r.endpoint))
            .chain([
                nearest,
                num(r.distance),
                r.class.as_str().to_owned(),
                r.diverged.to_string(),
            ]);
        csv.row(cells);
    }
}

fn series_rows(csv: &mut Csv, name: &str, diag: &SeriesDiagnostic) {
    for (n, sum) in &diag.partial_sums {
        csv.row([name.to_owned(), n.to_string(), num(*sum)]);
    }
}

/// Linearization at a critical point and the escape experiment.
pub fn cmd_traps(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let tc = section(&cfg.traps, "traps")?;
    check_eps(cfg)?;
    let problem = cfg.build_problem()?;
    let spec = cfg.build_schedule()?;
    let algorithm = cfg.algorithm(tc.algorithm)?;
    check_dim("traps.x_star", tc.x_star.len(), &problem)?;
    let stepsize = if tc.n_runs > 0 || tc.check_assumptions {
        Some(cfg.build_stepsize()?)
    } else {
        None
    };

    let analysis = match algorithm {
        Algorithm::Nag { .. } => nag_trap_analysis(&problem, &tc.x_star)?,
        _ => trap_analysis(&problem, &tc.x_star, &spec.limits(), cfg.eps)?,
    };

    let mut out = Outputs::default();
    let mut spectrum = Csv::new(["k", "beta", "zeta", "unstable"]);
    for (k, beta) in analysis.betas.iter().enumerate() {
        let mode = analysis.unstable.iter().find(|m| m.k == k);
        let zeta = mode.map(|m| num(m.zeta)).unwrap_or_default();
        spectrum.row([k.to_string(), num(*beta), zeta, mode.is_some().to_string()]);
    }
    out.add("spectrum.csv", spectrum);

    let mut s = Summary::default();
    s.text("algorithm", algorithm.name());
    s.count("d_plus", analysis.d_plus());
    s.num("excitation", analysis.excitation);
    s.num("left_eigen_residual", analysis.left_eigen_residual());

    if let (Some(stepsize), true) = (stepsize, tc.check_assumptions) {
        let avt = check_avt_assumptions(&spec, &stepsize)?;
        let mut csv = Csv::new(["series", "n", "partial_sum"]);
        series_rows(&mut csv, "schedule_gap", &avt.schedule_gap);
        series_rows(&mut csv, "stepsize_squares", &avt.stepsize_squares);
        out.add("assumptions.csv", csv);
        s.text("schedule_gap_verdict", avt.schedule_gap.verdict.as_str());
        s.text("stepsize_squares_verdict", avt.stepsize_squares.verdict.as_str());
    }

    if analysis.d_plus() == 0 {
        out.notice("x* has no unstable direction (d+ = 0); escape experiment skipped");
        s.text("escape", "skipped");
    } else if let (Some(stepsize), true) = (stepsize, tc.n_runs > 0) {
        if analysis.excitation == 0.0 {
            out.notice("warning: noise does not excite the unstable directions");
        }
        let opts = EscapeOptions {
            algorithm,
            spec: spec.clone(),
            stepsize,
            eps: cfg.eps,
            n_runs: tc.n_runs,
            n_iter: tc.n_iter,
            init_radius: tc.init_radius,
            classify_radius: tc.classify_radius,
            master_seed: cfg.seed,
        };
        let rep = escape_experiment(&problem, &tc.x_star, &opts)?;
        let d = problem.dim();
        let mut csv = Csv::new(
            ["arm", "run"]
                .into_iter()
                .map(String::from)
                .chain(indexed("x", d))
                .chain(
                    ["nearest", "distance", "class", "diverged"]
                        .into_iter()
                        .map(String::from),
                ),
        );
        escape_rows(&mut csv, "excited", &rep.excited);
        escape_rows(&mut csv, "control", &rep.control);
        out.add("escape.csv", csv);
        for (arm, r) in [("excited", &rep.excited), ("control", &rep.control)] {
            s.count(&format!("{arm}_runs"), r.runs.len());
            s.count(&format!("{arm}_at_saddle"), r.at_saddle());
            s.count(&format!("{arm}_at_minimum"), r.at_minimum());
            s.num(&format!("{arm}_fraction_saddle"), r.fraction_saddle());
            s.num(&format!("{arm}_fraction_minimum"), r.fraction_minimum());
        }
        out.notice(format!(
            "excited arm: {}/{} runs at the trap, {}/{} at a minimum",
            rep.excited.at_saddle(),
            rep.excited.runs.len(),
            rep.excited.at_minimum(),
            rep.excited.runs.len()
        ));
    }
    out.add("summary.csv", s.into_csv());
    Ok(out)
}

//! Subcommand bodies. Each returns tables, optional plots and a few lines for
//! the terminal; writing files is left to the caller.

use hmc_core::budget::{run_budget_experiment, BudgetConfig, TEST_FUNCTIONS};
use hmc_core::integrator::{integrate_leg, LeapfrogParams};
use hmc_core::model::{BuiltinTarget, MassSpec, PhasePoint};
use hmc_core::moments::estimate_energy_moments;
use hmc_core::oracle::{
    alpha, beta, det, harmonic_constants, quadratic_energy_increment, HarmonicLeapfrogMatrix, Mat2,
};
use hmc_core::scaling::{
    acceptance_curve, limit_dynamics_diagnostic, resolve_constants, scheme_acceptance, sjd_study, ScalingRunConfig,
    Scheme, SchemeScaling,
};
use hmc_core::stats::ls_slope;
use hmc_core::tuning::{emit_efficiency_curve, optimal_acceptance, CostModel, GridSpec};

use crate::config::{parse_rounding, ExperimentConfig};
use crate::error::CliError;
use crate::output::{Cell, Table};
use crate::plot::{BoxPlot, LinePlot, Series};

pub const SUBCOMMANDS: [&str; 7] = ["moments", "scaling", "tune", "sjd", "budget", "oracle-check", "baselines"];

#[derive(Debug, Default)]
pub struct Report {
    /// `(file stem, table)`.
    pub tables: Vec<(String, Table)>,
    /// `(file stem, svg)`.
    pub plots: Vec<(String, String)>,
    pub messages: Vec<String>,
}

pub fn run(name: &str, config: &ExperimentConfig) -> Result<Report, CliError> {
    match name {
        "moments" => moments(config),
        "scaling" => scaling(config),
        "tune" => tune(config),
        "sjd" => sjd(config),
        "budget" => budget(config),
        "oracle-check" => oracle_check(),
        "baselines" => baselines(config),
        other => Err(CliError::Config(format!(
            "unknown subcommand '{other}' (expected one of {})",
            SUBCOMMANDS.join(", ")
        ))),
    }
}

fn moments(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.moments;
    let (target, mass) = config.target.build()?;
    let mut table = Table::new(&[
        "target", "h", "n", "mu_hat", "se_mu", "s2_hat", "se_s2", "sigma2_hat", "se_sigma2", "ratio", "se_ratio",
        "mu_naive", "se_mu_naive",
    ]);
    let mut estimates = Vec::new();
    for (i, &h) in c.h_grid.iter().enumerate() {
        let params = LeapfrogParams::new(h, c.leg_length)?;
        let e = estimate_energy_moments(&target, &mass, &params, c.n, config.seed.wrapping_add(i as u64))?;
        table.push(vec![
            config.target.name.as_str().into(),
            e.h.into(),
            e.n.into(),
            e.mu_hat.into(),
            e.se_mu.into(),
            e.s2_hat.into(),
            e.se_s2.into(),
            e.sigma2_hat.into(),
            e.se_sigma2.into(),
            e.ratio.into(),
            e.se_ratio.into(),
            e.mu_naive.into(),
            e.se_mu_naive.into(),
        ]);
        estimates.push(e);
    }
    let mut report = Report::default();
    let positive: Vec<_> = estimates.iter().filter(|e| e.mu_hat > 0.0 && e.sigma2_hat > 0.0).collect();
    if positive.len() >= 2 {
        let lh: Vec<f64> = positive.iter().map(|e| e.h.ln()).collect();
        let lm: Vec<f64> = positive.iter().map(|e| e.mu_hat.ln()).collect();
        let ls: Vec<f64> = positive.iter().map(|e| e.sigma2_hat.ln()).collect();
        report.messages.push(format!(
            "log-log slopes: mu {:.3}, sigma2 {:.3}",
            ls_slope(&lh, &lm),
            ls_slope(&lh, &ls)
        ));
        let h4 = |e: &&hmc_core::moments::MomentEstimate, v: f64| (e.h, v / e.h.powi(4));
        report.plots.push((
            "moments".into(),
            LinePlot {
                title: format!("Energy-error moments / h^4 ({})", config.target.name),
                x_label: "h".into(),
                y_label: "moment / h^4".into(),
                log_x: true,
                series: vec![
                    Series::line("mu_hat / h^4", positive.iter().map(|e| h4(e, e.mu_hat)).collect()).with_markers(),
                    Series::line("sigma2_hat / h^4", positive.iter().map(|e| h4(e, e.sigma2_hat)).collect())
                        .with_markers(),
                ],
                ..LinePlot::default()
            }
            .to_svg(),
        ));
    }
    report.tables.push(("moments".into(), table));
    Ok(report)
}

fn scaling_run_config(config: &ExperimentConfig) -> Result<ScalingRunConfig, CliError> {
    let c = &config.scaling;
    let mut run = ScalingRunConfig::new(c.d_grid.clone(), c.l, c.n_transitions, config.seed);
    run.leg_length = c.leg_length;
    run.burn_in = c.burn_in;
    run.replicates = c.replicates;
    run.rounding = parse_rounding(&c.rounding)?;
    Ok(run)
}

fn scaling(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.scaling;
    let (target, mass) = config.target.build()?;
    let run = scaling_run_config(config)?;
    let constants = resolve_constants(&target, &mass, c.leg_length, c.constants_n, config.seed)?;
    let rows = acceptance_curve(&run, &target, &mass, Some(&constants))?;
    let mut table = Table::new(&[
        "d", "h", "n_steps", "acc_mean", "acc_se", "acc_pred", "jump2_mean", "jump2_se", "jump2_pred", "error",
    ]);
    let mut report = Report::default();
    report.messages.push(format!(
        "Sigma = {:.6}, C_J = {:.6} ({:?})",
        constants.sigma, constants.c_j, constants.source
    ));
    for r in &rows {
        table.push(vec![
            r.d.into(),
            r.h.into(),
            r.n_steps.into(),
            r.acc_mean.into(),
            r.acc_se.into(),
            r.acc_pred.into(),
            r.jump2_mean.into(),
            r.jump2_se.into(),
            r.jump2_pred.into(),
            r.error.clone().map_or(Cell::Empty, Cell::Text),
        ]);
        if let Some(e) = &r.error {
            report.messages.push(format!("d = {} failed: {e}", r.d));
        }
    }
    if c.diagnostic {
        let mut single = run.clone();
        single.d_grid = vec![*c.d_grid.last().unwrap_or(&1)];
        let diag = limit_dynamics_diagnostic(&single, &target, &mass, 1.0)?;
        report.messages.push(format!(
            "one-step diagnostic at d = {}: KS D = {:.4}, p = {:.4} ({} accepted moves)",
            single.d_grid[0], diag.ks.statistic, diag.ks.p_value, diag.n_accepted
        ));
    }
    let points = |f: fn(&hmc_core::scaling::ScalingRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter_map(|r| Some((r.d as f64, f(r)?))).collect()
    };
    report.plots.push((
        "scaling".into(),
        LinePlot {
            title: format!("Mean acceptance under h = {} d^-1/4", c.l),
            x_label: "d".into(),
            y_label: "acceptance".into(),
            log_x: true,
            series: vec![
                Series::line("empirical", points(|r| Some(r.acc_mean))).with_markers(),
                Series::line("a(l)", points(|r| r.acc_pred)).dashed(),
            ],
            ..LinePlot::default()
        }
        .to_svg(),
    ));
    report.tables.push(("scaling".into(), table));
    Ok(report)
}

fn tune(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.tune;
    let sigma = c.sigma.unwrap_or_else(|| harmonic_constants().sigma);
    let curve = emit_efficiency_curve(sigma, &GridSpec { lo: c.lo, hi: c.hi, n: c.n })?;
    let mut table = Table::new(&["a", "eff", "l", "eff_absolute", "eff_normalized", "is_argmax"]);
    for r in &curve.rows {
        table.push(vec![
            r.a.into(),
            r.eff.into(),
            r.l.into(),
            r.eff_absolute.into(),
            r.eff_normalized.into(),
            r.is_argmax.into(),
        ]);
    }
    let best = curve.argmax();
    let mut report = Report::default();
    report.messages.push(format!("optimal acceptance: {:.3}", optimal_acceptance()));
    report
        .messages
        .push(format!("grid argmax: a = {:.4}, l = {:.4} (Sigma = {sigma:.6})", best.a, best.l));
    report.plots.push((
        "tune".into(),
        LinePlot {
            title: "Efficiency against limiting acceptance".into(),
            x_label: "a".into(),
            y_label: "eff(a)".into(),
            series: vec![Series::line("eff", curve.rows.iter().map(|r| (r.a, r.eff)).collect())],
            ..LinePlot::default()
        }
        .to_svg(),
    ));
    report.tables.push(("tune".into(), table));
    Ok(report)
}

fn sjd(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.sjd;
    let (target, mass) = config.target.build()?;
    let constants = resolve_constants(&target, &mass, c.leg_length, config.scaling.constants_n, config.seed)?;
    let cost = CostModel::new(c.c_lf, c.c_o, c.leg_length, c.d)?;
    let rows = sjd_study(&target, &mass, &cost, &c.l_values, c.delta, c.n_transitions, &constants, config.seed)?;
    let mut table = Table::new(&["l", "prediction", "empirical", "ratio", "jump_sq_mean"]);
    for r in &rows {
        table.push(vec![r.l.into(), r.prediction.into(), r.empirical.into(), r.ratio.into(), r.jump_sq_mean.into()]);
    }
    let mut report = Report::default();
    report.plots.push((
        "sjd".into(),
        LinePlot {
            title: format!("Scaled SJD at d = {}", c.d),
            x_label: "l".into(),
            y_label: "d^5/4 SJD".into(),
            series: vec![
                Series::line("empirical", rows.iter().map(|r| (r.l, r.empirical)).collect()).with_markers(),
                Series::line("prediction", rows.iter().map(|r| (r.l, r.prediction)).collect()).dashed(),
            ],
            ..LinePlot::default()
        }
        .to_svg(),
    ));
    report.tables.push(("sjd".into(), table));
    Ok(report)
}

fn budget(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.budget;
    let core = BudgetConfig {
        d: c.d,
        budget: c.budget,
        replicates: c.replicates,
        acceptance_grid: c.acceptance_grid.clone(),
        leg_length: c.leg_length,
        seed: config.seed,
        ..BudgetConfig::default()
    };
    let result = run_budget_experiment(&core)?;
    let mut table = Table::new(&[
        "h", "replicate", "f_name", "sq_error", "mean_acceptance", "n_legs", "n_steps", "grad_evals",
    ]);
    for r in &result.rows {
        table.push(vec![
            r.h.into(),
            r.replicate.into(),
            r.f_name.into(),
            r.sq_error.into(),
            r.mean_acceptance.into(),
            r.n_legs.into(),
            r.n_steps.into(),
            r.grad_evals(result.d).into(),
        ]);
    }
    let mut summary = Table::new(&["h", "target_acceptance", "median_acceptance", "f_name", "median_sq_error"]);
    for (g, &h) in result.h_values.iter().enumerate() {
        for (name, _, _) in TEST_FUNCTIONS {
            summary.push(vec![
                h.into(),
                c.acceptance_grid[g].into(),
                result.median_acceptance(g).into(),
                name.into(),
                result.median_sq_error(g, name).into(),
            ]);
        }
    }
    let mut report = Report::default();
    let best = result.best_index("q2");
    report.messages.push(format!(
        "f = q2: smallest median squared error at h = {:.5} (median acceptance {:.3})",
        result.h_values[best],
        result.median_acceptance(best)
    ));
    report.messages.push(format!(
        "largest per-run cost {} of budget {}",
        result.max_grad_evals(),
        result.budget
    ));
    let groups = (0..result.h_values.len())
        .map(|g| {
            let errs: Vec<f64> = result
                .rows
                .iter()
                .filter(|r| r.grid_index == g && r.f_name == "q2")
                .map(|r| r.sq_error)
                .collect();
            (format!("{:.3}", result.median_acceptance(g)), errs)
        })
        .collect();
    report.plots.push((
        "budget".into(),
        BoxPlot {
            title: format!("Squared error of the q^2 average, budget {}", result.budget),
            x_label: "median acceptance".into(),
            y_label: "squared error".into(),
            log_y: true,
            groups,
        }
        .to_svg(),
    ));
    report.tables.push(("budget".into(), table));
    report.tables.push(("budget_summary".into(), summary));
    Ok(report)
}

/// Probabilists' Gauss–Hermite rule with five nodes (exact to degree 9).
fn gauss_hermite5() -> [(f64, f64); 5] {
    let r = 10f64.sqrt();
    let (a, b) = ((5.0 - r).sqrt(), (5.0 + r).sqrt());
    let he4 = |x: f64| x.powi(4) - 6.0 * x * x + 3.0;
    let w = |x: f64| 120.0 / (25.0 * he4(x).powi(2));
    [(-b, w(b)), (-a, w(a)), (0.0, w(0.0)), (a, w(a)), (b, w(b))]
}

/// `E[g(q, p)]` for independent standard normals.
fn gaussian_expectation(g: impl Fn(f64, f64) -> f64) -> f64 {
    let rule = gauss_hermite5();
    rule.iter()
        .flat_map(|&(q, wq)| rule.iter().map(move |&(p, wp)| (q, p, wq * wp)))
        .map(|(q, p, w)| w * g(q, p))
        .sum()
}

fn max_abs_diff(a: &Mat2, b: &Mat2) -> f64 {
    (0..4).map(|k| (a[k / 2][k % 2] - b[k / 2][k % 2]).abs()).fold(0.0, f64::max)
}

fn oracle_check() -> Result<Report, CliError> {
    let mut table = Table::new(&["check", "h", "n", "value", "reference", "residual"]);
    let mut push = |check: &str, h: f64, n: usize, value: f64, reference: f64| {
        table.push(vec![
            check.into(),
            h.into(),
            n.into(),
            value.into(),
            reference.into(),
            (value - reference).abs().into(),
        ]);
    };
    let target = BuiltinTarget::StdGaussian { dim: 1 };
    let mass = MassSpec::identity(1);
    for h in [0.05, 0.1, 0.25, 0.5, 1.0] {
        let m = HarmonicLeapfrogMatrix::new(h)?;
        push("det_xi", h, 1, det(&m.xi), 1.0);
        for n in [1u32, 2, 10, 20] {
            push(
                "power_closed_vs_product",
                h,
                n as usize,
                max_abs_diff(&m.power(n), &m.power_by_multiplication(n)),
                0.0,
            );
        }
        let params = LeapfrogParams::new(h, 1.0)?;
        let a = m.power(params.n_steps as u32);
        let mut worst: f64 = 0.0;
        let mut worst_delta: f64 = 0.0;
        for (q, p) in [(1.0, 0.0), (0.0, 1.0), (0.3, -1.1), (-2.0, 0.7)] {
            let leg = integrate_leg(&PhasePoint::scalar(q, p)?, &target, &mass, &params)?;
            worst = worst
                .max((leg.endpoint.q[0] - (a[0][0] * q + a[0][1] * p)).abs())
                .max((leg.endpoint.p[0] - (a[1][0] * q + a[1][1] * p)).abs());
            worst_delta = worst_delta.max((leg.delta - quadratic_energy_increment(&a, q, p)).abs());
        }
        push("integrator_vs_closed_form", h, params.n_steps, worst, 0.0);
        push("delta_vs_quadratic_form", h, params.n_steps, worst_delta, 0.0);
    }
    let k = harmonic_constants();
    let (s1, c1) = 1.0f64.sin_cos();
    push("sigma_vs_quadrature", 0.0, 0, k.sigma, gaussian_expectation(|q, p| alpha(q, p).powi(2)));
    push("alpha_mean_vs_quadrature", 0.0, 0, 0.0, gaussian_expectation(alpha));
    push("mu_vs_quadrature", 0.0, 0, k.mu, gaussian_expectation(beta));
    push(
        "c_j_vs_quadrature",
        0.0,
        0,
        k.c_j,
        gaussian_expectation(|q, p| (q * c1 + p * s1 - q).powi(2)),
    );
    push("mu_minus_half_sigma", 0.0, 0, k.mu, 0.5 * k.sigma);
    let worst = table.floats("residual").into_iter().fold(0.0, f64::max);
    let mut report = Report::default();
    report.messages.push(format!(
        "Sigma = {:.10}, mu = {:.10}, C_J = {:.10}, a_opt = {:.7}",
        k.sigma,
        k.mu,
        k.c_j,
        optimal_acceptance()
    ));
    report.messages.push(format!("largest residual {worst:.3e}"));
    report.tables.push(("oracle_check".into(), table));
    Ok(report)
}

fn baselines(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.baselines;
    let (target, mass) = config.target.build()?;
    let mut table = Table::new(&["scheme", "exponent", "l", "d", "h", "acc_mean", "acc_se"]);
    let runs = [
        SchemeScaling::natural(Scheme::Rwm, c.rwm_l),
        SchemeScaling::natural(Scheme::Mala, c.mala_l),
        SchemeScaling::natural(Scheme::Hmc, c.hmc_l),
        SchemeScaling {
            exponent: c.misscaled_exponent,
            ..SchemeScaling::natural(Scheme::Rwm, c.misscaled_l)
        },
    ];
    let mut series = Vec::new();
    for (i, s) in runs.iter().enumerate() {
        let rows = scheme_acceptance(&target, &mass, s, &c.d_grid, c.n_transitions, config.seed.wrapping_add(i as u64))?;
        for r in &rows {
            table.push(vec![
                s.scheme.name().into(),
                s.exponent.into(),
                s.l.into(),
                r.d.into(),
                r.h.into(),
                r.acc_mean.into(),
                r.acc_se.into(),
            ]);
        }
        let label = format!("{} h = {} d^-{:.3}", s.scheme.name(), s.l, s.exponent);
        series.push(Series::line(label, rows.iter().map(|r| (r.d as f64, r.acc_mean)).collect()).with_markers());
    }
    let mut report = Report::default();
    report.plots.push((
        "baselines".into(),
        LinePlot {
            title: "Mean acceptance across dimension".into(),
            x_label: "d".into(),
            y_label: "acceptance".into(),
            log_x: true,
            series,
            ..LinePlot::default()
        }
        .to_svg(),
    ));
    report.tables.push(("baselines".into(), table));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_weights_sum_to_one_and_integrate_moments() {
        let rule = gauss_hermite5();
        let total: f64 = rule.iter().map(|r| r.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let m4: f64 = rule.iter().map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 3.0).abs() < 1e-13);
        let m8: f64 = rule.iter().map(|(x, w)| w * x.powi(8)).sum();
        assert!((m8 - 105.0).abs() < 1e-11);
    }

    #[test]
    fn oracle_residuals_are_tiny() {
        let report = oracle_check().unwrap();
        let residuals = report.tables[0].1.floats("residual");
        assert!(residuals.len() > 20);
        assert!(residuals.iter().all(|r| *r <= 1e-10), "{residuals:?}");
    }

    #[test]
    fn unknown_subcommand() {
        assert!(matches!(run("nuts", &ExperimentConfig::default()), Err(CliError::Config(_))));
    }
}

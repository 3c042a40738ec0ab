//! Mode runners: each experiment mode produces a [`Table`] from a resolved
//! [`ExperimentConfig`].

use bran_core::model::{AttackParams, GiveUp, InvalidParam, SystemParams};
use bran_core::{analytic, attack, ctmc, des};
use thiserror::Error;

use crate::config::{ExperimentConfig, Mode, SweepVariable};
use crate::output::{Cell, Table};

#[derive(Debug, Error)]
pub enum RunError {
    /// Closed-form evaluation refused outside its stability region.
    #[error("{message}")]
    Unstable { message: String },
    #[error(transparent)]
    Invalid(#[from] InvalidParam),
    #[error("steady-state solve failed: {0}")]
    Solve(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<analytic::AnalyticError> for RunError {
    fn from(err: analytic::AnalyticError) -> Self {
        match err {
            analytic::AnalyticError::Unstable { component, .. } => RunError::Unstable {
                message: match component {
                    analytic::Component::BlockQueue => "unstable: lambda_a >= lambda_b".to_string(),
                    analytic::Component::ServiceQueue => {
                        "unstable: lambda_a >= s * lambda_c".to_string()
                    }
                },
            },
            analytic::AnalyticError::InvalidParam(e) => RunError::Invalid(e),
        }
    }
}

impl From<ctmc::CtmcError> for RunError {
    fn from(err: ctmc::CtmcError) -> Self {
        match err {
            ctmc::CtmcError::InvalidParam(e) => RunError::Invalid(e),
            other => RunError::Solve(other.to_string()),
        }
    }
}

impl From<des::DesError> for RunError {
    fn from(err: des::DesError) -> Self {
        match err {
            des::DesError::InvalidParam(e) => RunError::Invalid(e),
            des::DesError::Io(e) => RunError::Io(e),
        }
    }
}

/// Runs the configured experiment and returns its output table.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Table, RunError> {
    match config.mode {
        Mode::Analytic => run_analytic(config),
        Mode::SteadyState => run_steady_state(config),
        Mode::Simulate => run_simulate(config),
        Mode::Attack => run_attack(config),
        Mode::SweepRho => run_sweep_rho(config),
        Mode::SweepConfirmations => run_sweep_confirmations(config),
        Mode::SweepAttack => run_sweep_attack(config),
    }
}

fn param_headers() -> Vec<&'static str> {
    vec!["lambda_a", "lambda_b", "lambda_c", "lambda_r", "k", "r", "s", "n_conf"]
}

fn param_cells(p: &SystemParams) -> Vec<Cell> {
    vec![
        p.lambda_a.into(),
        p.lambda_b.into(),
        p.lambda_c.into(),
        p.lambda_r.into(),
        u64::from(p.k).into(),
        u64::from(p.r).into(),
        u64::from(p.s).into(),
        u64::from(p.n_conf).into(),
    ]
}

fn give_up_cell(give_up: GiveUp) -> Cell {
    match give_up {
        GiveUp::Bounded(g) => u64::from(g).into(),
        GiveUp::Unbounded => Cell::Text("unbounded".to_string()),
    }
}

fn attack_params(config: &ExperimentConfig, beta: f64) -> Result<AttackParams, InvalidParam> {
    let mut ap = AttackParams::new(beta, config.params.n_conf, config.give_up)?;
    ap.conf_counting = config.conf_counting;
    Ok(ap)
}

fn sim_config(config: &ExperimentConfig, params: SystemParams, seed: u64) -> des::SimConfig {
    let mut sim = des::SimConfig::new(params, config.num_arrivals, seed);
    sim.warmup_fraction = config.warmup_fraction;
    sim
}

fn run_analytic(config: &ExperimentConfig) -> Result<Table, RunError> {
    let report = analytic::latency_report(&config.params)?;
    let mut headers = param_headers();
    headers.extend(["tau1", "tau2", "tau3", "tau_s", "tau_t", "upper", "lower"]);
    let mut table = Table::new(headers);
    let mut row = param_cells(&config.params);
    row.extend([
        report.tau1.into(),
        report.tau2.into(),
        report.tau3.into(),
        report.tau_s.into(),
        report.tau_t.into(),
        report.upper.into(),
        report.lower.into(),
    ]);
    table.push_row(row);
    Ok(table)
}

fn run_steady_state(config: &ExperimentConfig) -> Result<Table, RunError> {
    let opts = ctmc::SolveOptions::default();
    let (space, ss) = ctmc::solve_adaptive(&config.params, &opts)?;
    let metrics = ctmc::metrics(&ss, &space, &config.params);
    let mut headers = param_headers();
    headers.extend([
        "i_max",
        "j_max",
        "e_pending",
        "e_service",
        "little_latency",
        "p_pending_nonempty",
        "boundary_mass",
        "residual",
    ]);
    let mut table = Table::new(headers);
    let mut row = param_cells(&config.params);
    row.extend([
        u64::from(space.i_max).into(),
        u64::from(space.j_max).into(),
        metrics.e_pending.into(),
        metrics.e_service.into(),
        metrics.little_latency.into(),
        metrics.p_pending_nonempty.into(),
        metrics.boundary_mass.into(),
        ss.residual.into(),
    ]);
    table.push_row(row);
    Ok(table)
}

fn run_simulate(config: &ExperimentConfig) -> Result<Table, RunError> {
    let out = des::run(&sim_config(config, config.params, config.seed))?;
    let stats = out.stats;
    let mut headers = param_headers();
    headers.extend([
        "num_arrivals",
        "seed",
        "mean_latency",
        "ci95",
        "mean_sojourn",
        "sojourn_ci95",
        "inclusion_wait",
        "confirmation_wait",
        "service_wait",
        "service_time",
        "arrived",
        "serviced",
        "rejected",
        "measured",
        "throughput",
        "reliable",
    ]);
    let mut table = Table::new(headers);
    let mut row = param_cells(&config.params);
    row.extend([
        config.num_arrivals.into(),
        config.seed.into(),
        stats.mean_latency.into(),
        stats.ci95_halfwidth.into(),
        stats.mean_sojourn.into(),
        stats.sojourn_ci95_halfwidth.into(),
        stats.phase_means.inclusion_wait.into(),
        stats.phase_means.confirmation_wait.into(),
        stats.phase_means.service_wait.into(),
        stats.phase_means.service_time.into(),
        stats.counts.arrived.into(),
        stats.counts.serviced.into(),
        stats.counts.rejected.into(),
        stats.measured.into(),
        stats.throughput.into(),
        Cell::Text(stats.reliable.to_string()),
    ]);
    table.push_row(row);
    Ok(table)
}

fn run_attack(config: &ExperimentConfig) -> Result<Table, RunError> {
    let ap = attack_params(config, config.beta)?;
    let analytic_s = analytic::attack_probability(&ap)?;
    let estimate = attack::estimate(&ap, config.trials, config.seed)?;
    let mut table = Table::new(vec![
        "beta",
        "n_conf",
        "n_g",
        "trials",
        "seed",
        "analytic_s",
        "mc_p_hat",
        "mc_stderr",
        "gave_up_fraction",
    ]);
    table.push_row(vec![
        config.beta.into(),
        u64::from(config.params.n_conf).into(),
        give_up_cell(config.give_up),
        config.trials.into(),
        config.seed.into(),
        analytic_s.into(),
        estimate.p_hat.into(),
        estimate.stderr.into(),
        estimate.gave_up_fraction.into(),
    ]);
    Ok(table)
}

fn run_sweep_rho(config: &ExperimentConfig) -> Result<Table, RunError> {
    let sweep = config.sweep.expect("sweep modes always resolve a sweep");
    debug_assert_eq!(sweep.variable, SweepVariable::Rho);
    let mut table = Table::new(vec![
        "rho",
        "k",
        "analytic_upper",
        "analytic_lower",
        "sim_mean_latency",
        "sim_ci95",
    ]);
    for (i, rho) in sweep.grid().into_iter().enumerate() {
        let params = SystemParams {
            lambda_a: config.rho_definition.lambda_a(rho, &config.params),
            ..config.params
        };
        // Unstable grid points keep their simulated columns; the analytic
        // cells stay empty.
        let (upper, lower) = match analytic::latency_report(&params) {
            Ok(report) => (Cell::from(report.upper), Cell::from(report.lower)),
            Err(analytic::AnalyticError::Unstable { .. }) => (Cell::Empty, Cell::Empty),
            Err(analytic::AnalyticError::InvalidParam(e)) => return Err(e.into()),
        };
        let stats = des::run(&sim_config(config, params, config.seed.wrapping_add(i as u64)))?.stats;
        table.push_row(vec![
            rho.into(),
            u64::from(config.params.k).into(),
            upper,
            lower,
            stats.mean_latency.into(),
            stats.ci95_halfwidth.into(),
        ]);
    }
    Ok(table)
}

fn run_sweep_confirmations(config: &ExperimentConfig) -> Result<Table, RunError> {
    let sweep = config.sweep.expect("sweep modes always resolve a sweep");
    debug_assert_eq!(sweep.variable, SweepVariable::Confirmations);
    let rho = config.rho_definition.rho(&config.params);
    let mut table = Table::new(vec!["N", "rho", "analytic_tau_t", "sim_mean_latency", "sim_ci95"]);
    for (i, value) in sweep.grid().into_iter().enumerate() {
        let n_conf = value.round() as u32;
        let params = SystemParams {
            n_conf,
            ..config.params
        };
        let tau_t = match analytic::latency_report(&params) {
            Ok(report) => Cell::from(report.tau_t),
            Err(analytic::AnalyticError::Unstable { .. }) => Cell::Empty,
            Err(analytic::AnalyticError::InvalidParam(e)) => return Err(e.into()),
        };
        let stats = des::run(&sim_config(config, params, config.seed.wrapping_add(i as u64)))?.stats;
        table.push_row(vec![
            u64::from(n_conf).into(),
            rho.into(),
            tau_t,
            stats.mean_latency.into(),
            stats.ci95_halfwidth.into(),
        ]);
    }
    Ok(table)
}

fn run_sweep_attack(config: &ExperimentConfig) -> Result<Table, RunError> {
    let sweep = config.sweep.expect("sweep modes always resolve a sweep");
    debug_assert_eq!(sweep.variable, SweepVariable::Beta);
    let mut table = Table::new(vec!["beta", "N", "Ng", "analytic_S", "mc_p_hat", "mc_stderr"]);
    for (i, beta) in sweep.grid().into_iter().enumerate() {
        let ap = attack_params(config, beta)?;
        let analytic_s = analytic::attack_probability(&ap)?;
        let estimate = attack::estimate(&ap, config.trials, config.seed.wrapping_add(i as u64))?;
        table.push_row(vec![
            beta.into(),
            u64::from(config.params.n_conf).into(),
            give_up_cell(config.give_up),
            analytic_s.into(),
            estimate.p_hat.into(),
            estimate.stderr.into(),
        ]);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, resolve, Overrides};

    fn resolve_mode(mode: Mode, text: &str) -> ExperimentConfig {
        let file = parse_config(text).unwrap();
        resolve(mode, &file, &Overrides::default(), None).unwrap()
    }

    #[test]
    fn analytic_mode_emits_report_row() {
        let cfg = resolve_mode(Mode::Analytic, "lambda_a = 1.0\nlambda_b = 2.0\nn_conf = 2\n");
        let table = run_experiment(&cfg).unwrap();
        assert_eq!(table.rows().len(), 1);
        let headers = table.headers();
        let tau_t = headers.iter().position(|h| *h == "tau_t").unwrap();
        let upper = headers.iter().position(|h| *h == "upper").unwrap();
        // For this parameter set tau_t and the upper bound coincide.
        assert_eq!(table.rows()[0][tau_t], table.rows()[0][upper]);
    }

    #[test]
    fn analytic_mode_refuses_unstable_params() {
        let cfg = resolve_mode(Mode::Analytic, "lambda_a = 2.0\nlambda_b = 1.0\n");
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, RunError::Unstable { .. }));
        assert_eq!(err.to_string(), "unstable: lambda_a >= lambda_b");
    }

    #[test]
    fn sweep_attack_columns_and_determinism() {
        let cfg = resolve_mode(
            Mode::SweepAttack,
            "trials = 2000\nsweep.start = 0.1\nsweep.stop = 0.5\nsweep.points = 3\n",
        );
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.headers(), &["beta", "N", "Ng", "analytic_S", "mc_p_hat", "mc_stderr"]);
        assert_eq!(a.rows().len(), 3);
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn sweep_rho_leaves_unstable_analytic_cells_empty() {
        let cfg = resolve_mode(
            Mode::SweepRho,
            "num_arrivals = 2000\nsweep.start = 0.5\nsweep.stop = 1.5\nsweep.points = 3\n",
        );
        let table = run_experiment(&cfg).unwrap();
        let rows = table.rows();
        assert!(matches!(rows[0][2], Cell::Float(_)));
        // rho = 1.5 is unstable: empty analytic columns, simulation still ran.
        assert_eq!(rows[2][2], Cell::Empty);
        assert_eq!(rows[2][3], Cell::Empty);
        assert!(matches!(rows[2][4], Cell::Float(_)));
    }

    #[test]
    fn sweep_confirmations_tau_t_is_affine_in_n() {
        let cfg = resolve_mode(
            Mode::SweepConfirmations,
            "lambda_a = 0.3\nnum_arrivals = 2000\nsweep.start = 1\nsweep.stop = 4\nsweep.points = 4\n",
        );
        let table = run_experiment(&cfg).unwrap();
        let tau: Vec<f64> = table
            .rows()
            .iter()
            .map(|row| match row[2] {
                Cell::Float(v) => v,
                _ => panic!("expected analytic cell"),
            })
            .collect();
        // Slope exactly 1/lambda_b = 1 per confirmation.
        for pair in tau.windows(2) {
            assert_eq!(pair[1] - pair[0], 1.0);
        }
    }
}

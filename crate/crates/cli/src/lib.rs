//! Command-line front end: figure reproductions, trajectory dumps and
//! validation suites, written as provenance-stamped CSV or JSON.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod artifact;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod spec;
pub mod suites;

use std::path::PathBuf;

use qd_core::closed_form::ExponentAxis;

use crate::artifact::{Check, ExperimentResult};
pub use crate::error::CliError;
pub use crate::spec::{Cli, CommandName, ExperimentSpec, RunArgs};
use crate::suites::SuiteParams;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "QD_THREADS";

/// Computes the result of a resolved spec without touching the filesystem.
pub fn execute(spec: &ExperimentSpec) -> Result<ExperimentResult, CliError> {
    match spec.command {
        CommandName::Fig1 | CommandName::Fig2 => experiments::curves(spec),
        CommandName::Fig3 => experiments::fig3(spec),
        CommandName::Traj => experiments::traj(spec),
        CommandName::Validate => validate(spec),
    }
}

fn validate(spec: &ExperimentSpec) -> Result<ExperimentResult, CliError> {
    let params = SuiteParams {
        gamma: spec.gamma,
        dt: spec.dt.expect("resolved"),
        n_traj: spec.n_traj.expect("resolved"),
        seed: spec.seed,
        thetas: spec.theta.clone(),
        integrator: spec.integrator.expect("resolved"),
        axis: if spec.debug_exponent_z {
            ExponentAxis::Z
        } else {
            ExponentAxis::X
        },
    };
    if params.n_traj < qd_core::info::MIN_MC_SAMPLES {
        return Err(CliError::BadArgs(format!(
            "validate needs --n-traj of at least {}",
            qd_core::info::MIN_MC_SAMPLES
        )));
    }
    let cases = suites::run_all(&params)?;
    let mut result = ExperimentResult::new(spec.clone());
    result.tolerances.insert("ks_alpha", suites::KS_ALPHA);
    result.tolerances.insert("mi_sigmas", suites::MI_SIGMAS);
    result.tolerances.insert("martingale_sigmas", suites::MARTINGALE_SIGMAS);
    result.tolerances.insert("completeness", suites::COMPLETENESS_TOL);
    result.tolerances.insert("mixture_defect", suites::MIXTURE_TOL);
    result.checks = cases
        .iter()
        .map(|c| {
            Check::new(
                format!("{}: {}", c.suite, c.case),
                c.passed(),
                format!("statistic {:e} in [{:e}, {:e}]", c.statistic, c.lower, c.upper),
            )
        })
        .collect();
    result.tables.push(suites::table(&cases));
    Ok(result)
}

/// What a finished run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub result: ExperimentResult,
    pub written: Vec<PathBuf>,
}

impl RunOutcome {
    /// 0 when every check passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.result.all_passed() { 0 } else { 2 }
    }
}

/// Resolves, computes and writes one command.
pub fn run(cli: &Cli) -> Result<RunOutcome, CliError> {
    let (name, args) = cli.command.parts();
    let spec = ExperimentSpec::resolve(name, args)?;
    let result = execute(&spec)?;
    let written = artifact::write_all(&result, &args.out)?;
    Ok(RunOutcome { result, written })
}

/// Parses `QD_THREADS`; `None` when unset.
pub fn threads_from_env(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::BadArgs(format!(
                "{THREADS_ENV}={v} is not a positive integer"
            ))),
        },
    }
}

/// Runs `f` with at most `threads` workers (all cores when `None`).
#[cfg(feature = "parallel")]
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::BadArgs(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<T: Send>(_threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    Ok(f())
}

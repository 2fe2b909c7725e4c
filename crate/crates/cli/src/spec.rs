//! Command-line arguments and their resolution into a complete, serializable
//! experiment description.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qd_core::Integrator;
use serde::Serialize;

use crate::angle::parse_angle;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "qd",
    version,
    about = "Continuous-measurement discrimination of non-orthogonal qubit states"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mutual information against measurement time, without feedback.
    Fig1(RunArgs),
    /// Mutual information with and without feedback.
    Fig2(RunArgs),
    /// Percent increase in transmission rate from feedback against preparation time.
    Fig3(RunArgs),
    /// Dumps individual trajectories and an ensemble summary.
    Traj(RunArgs),
    /// Runs the statistical oracle suites; exits 2 if any fails.
    Validate(RunArgs),
}

impl Command {
    pub fn parts(&self) -> (CommandName, &RunArgs) {
        match self {
            Command::Fig1(a) => (CommandName::Fig1, a),
            Command::Fig2(a) => (CommandName::Fig2, a),
            Command::Fig3(a) => (CommandName::Fig3, a),
            Command::Traj(a) => (CommandName::Traj, a),
            Command::Validate(a) => (CommandName::Validate, a),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Coding half-angle; repeatable. Radians or forms like pi/8, 3pi/8.
    #[arg(long = "theta", value_parser = parse_angle, allow_negative_numbers = true)]
    pub theta: Vec<f64>,
    /// Measurement strength (default 1, so times read as γt).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Integration step for trajectory simulations.
    #[arg(long)]
    pub dt: Option<f64>,
    /// End of the time grid or simulation horizon.
    #[arg(long = "t-max")]
    pub t_max: Option<f64>,
    /// Number of points on the measurement-time grid (fig1, fig2).
    #[arg(long = "t-points")]
    pub t_points: Option<usize>,
    #[arg(long = "n-traj")]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "t-prep-min")]
    pub t_prep_min: Option<f64>,
    #[arg(long = "t-prep-max")]
    pub t_prep_max: Option<f64>,
    #[arg(long = "t-prep-points")]
    pub t_prep_points: Option<usize>,
    #[arg(long, value_enum)]
    pub feedback: Option<FeedbackMode>,
    /// Trajectory step rule: kraus, em or milstein.
    #[arg(long, value_parser = parse_integrator)]
    pub integrator: Option<Integrator>,
    /// Keep every n-th step in trajectory dumps.
    #[arg(long = "record-every")]
    pub record_every: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write a gnuplot script next to the data.
    #[arg(long = "emit-plot")]
    pub emit_plot: bool,
    /// Negative control: use σz instead of σx in the closed-form reference.
    #[arg(long = "debug-exponent-z", hide = true)]
    pub debug_exponent_z: bool,
}

fn parse_integrator(s: &str) -> Result<Integrator, String> {
    s.parse().map_err(|e: qd_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    On,
    Off,
    Both,
}

impl FeedbackMode {
    pub fn modes(self) -> &'static [bool] {
        match self {
            FeedbackMode::Off => &[false],
            FeedbackMode::On => &[true],
            FeedbackMode::Both => &[false, true],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandName {
    Fig1,
    Fig2,
    Fig3,
    Traj,
    Validate,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandName::Fig1 => "fig1",
            CommandName::Fig2 => "fig2",
            CommandName::Fig3 => "fig3",
            CommandName::Traj => "traj",
            CommandName::Validate => "validate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TPrepGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

/// Fully resolved run description. The output directory is deliberately not
/// part of it, so identical runs into different places hash the same.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub command: CommandName,
    pub theta: Vec<f64>,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_prep: Option<TPrepGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "integrator_name")]
    pub integrator: Option<Integrator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    pub seed: u64,
    pub format: Format,
    pub emit_plot: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub debug_exponent_z: bool,
}

fn integrator_name<S: serde::Serializer>(i: &Option<Integrator>, s: S) -> Result<S::Ok, S::Error> {
    match i {
        Some(i) => s.serialize_str(&i.to_string()),
        None => s.serialize_none(),
    }
}

pub const DEFAULT_SEED: u64 = 1;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::BadArgs(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("--{name} must be positive and finite, got {v}")))
    }
}

/// Rejects flags the command would silently ignore.
fn unused(name: &str, present: bool, command: CommandName) -> Result<(), CliError> {
    if present {
        Err(bad(format!("--{name} has no effect on {command}")))
    } else {
        Ok(())
    }
}

impl ExperimentSpec {
    pub fn resolve(command: CommandName, a: &RunArgs) -> Result<Self, CliError> {
        use CommandName::*;
        let gamma = positive("gamma", a.gamma.unwrap_or(1.0))?;
        let theta = if a.theta.is_empty() {
            match command {
                Fig1 => vec![FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8],
                Fig2 => vec![FRAC_PI_8, 3.0 * FRAC_PI_8],
                Fig3 => vec![PI / 32.0, PI / 16.0, FRAC_PI_8],
                Traj => vec![FRAC_PI_4],
                Validate => vec![FRAC_PI_8, FRAC_PI_4],
            }
        } else {
            a.theta.clone()
        };
        if let Some(t) = theta.iter().find(|t| !(0.0..=PI / 2.0).contains(*t)) {
            return Err(bad(format!("--theta {t} outside [0, pi/2]")));
        }

        let curves = matches!(command, Fig1 | Fig2);
        let sim = matches!(command, Traj | Validate);
        let prep = a.t_prep_min.is_some() || a.t_prep_max.is_some() || a.t_prep_points.is_some();
        unused("t-points", a.t_points.is_some() && !curves, command)?;
        unused("t-max", a.t_max.is_some() && !(curves || command == Traj), command)?;
        unused("t-prep-*", prep && command != Fig3, command)?;
        unused("dt", a.dt.is_some() && !sim, command)?;
        unused("n-traj", a.n_traj.is_some() && !sim, command)?;
        unused("seed", a.seed.is_some() && !sim, command)?;
        unused("integrator", a.integrator.is_some() && !sim, command)?;
        unused("record-every", a.record_every.is_some() && command != Traj, command)?;
        unused(
            "feedback",
            a.feedback.is_some() && !(curves || command == Traj),
            command,
        )?;
        unused("debug-exponent-z", a.debug_exponent_z && command != Validate, command)?;
        if a.emit_plot && a.format == Format::Json {
            return Err(bad("plot scripts read CSV; drop --emit-plot or use --format csv"));
        }

        let mut spec = ExperimentSpec {
            command,
            theta,
            gamma,
            t_max: None,
            t_points: None,
            t_prep: None,
            feedback: None,
            dt: None,
            n_traj: None,
            integrator: None,
            record_every: None,
            seed: a.seed.unwrap_or(DEFAULT_SEED),
            format: a.format,
            emit_plot: a.emit_plot,
            debug_exponent_z: a.debug_exponent_z,
        };

        if curves {
            let (t_max, points, fb) = match command {
                Fig1 => (5.0, 101, FeedbackMode::Off),
                _ => (20.0, 401, FeedbackMode::Both),
            };
            spec.t_max = Some(positive("t-max", a.t_max.unwrap_or(t_max / gamma))?);
            let points = a.t_points.unwrap_or(points);
            if points < 2 {
                return Err(bad("--t-points must be at least 2"));
            }
            spec.t_points = Some(points);
            spec.feedback = Some(a.feedback.unwrap_or(fb));
        }
        if command == Fig3 {
            let min = positive("t-prep-min", a.t_prep_min.unwrap_or(0.02 / gamma))?;
            let max = positive("t-prep-max", a.t_prep_max.unwrap_or(2.0 / gamma))?;
            let points = a.t_prep_points.unwrap_or(25);
            if points < 1 || (points > 1 && max <= min) {
                return Err(bad("t_prep grid needs t-prep-min < t-prep-max and at least one point"));
            }
            spec.t_prep = Some(TPrepGrid { min, max, points });
        }
        if sim {
            let dt = positive("dt", a.dt.unwrap_or(1e-4 / gamma))?;
            if gamma * dt > 1e-2 {
                return Err(bad(format!("gamma * dt = {} exceeds 1e-2", gamma * dt)));
            }
            spec.dt = Some(dt);
            let n_traj = a.n_traj.unwrap_or(if command == Traj { 1 } else { 10_000 });
            if n_traj == 0 {
                return Err(bad("--n-traj must be at least 1"));
            }
            spec.n_traj = Some(n_traj);
            spec.integrator = Some(a.integrator.unwrap_or_default());
        }
        if command == Traj {
            if spec.theta.len() != 1 {
                return Err(bad("traj takes exactly one --theta"));
            }
            let t_max = positive("t-max", a.t_max.unwrap_or(1.0 / gamma))?;
            spec.t_max = Some(t_max);
            let fb = a.feedback.unwrap_or(FeedbackMode::Off);
            if fb == FeedbackMode::Both {
                return Err(bad("traj runs with --feedback on or off, not both"));
            }
            spec.feedback = Some(fb);
            let steps = (t_max / spec.dt.unwrap_or(1e-4)).round() as usize;
            let every = a.record_every.unwrap_or((steps / 1000).max(1));
            if every == 0 {
                return Err(bad("--record-every must be at least 1"));
            }
            spec.record_every = Some(every);
        }
        Ok(spec)
    }
}

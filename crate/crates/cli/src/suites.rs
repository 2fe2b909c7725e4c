//! Statistical oracle suites behind `qd validate`.
//!
//! Every suite compares a simulation against something computed a different
//! way: the closed-form outcome laws, the exact weak-measurement outcome tree,
//! the martingale property of the Bayes filter, or the known convergence
//! order of the Itô integrators.

use std::f64::consts::FRAC_PI_4;

use qd_core::closed_form::{ExponentAxis, FeedbackLaw, NoFeedbackLaw};
use qd_core::exec::{self, Execution};
use qd_core::info::{mutual_info_fb, mutual_info_mc, mutual_info_nofb};
use qd_core::stats::{Moments, ks_critical_one_sample, ks_critical_two_sample, ks_statistic, ks_two_sample};
use qd_core::trajectory::{Diagnostics, EnsembleSamples, SimConfig, sample_ensemble};
use qd_core::weak::{ContinuumSchedule, WeakMeasurement, sample_weak_posterior, weak_sequence_mi};
use qd_core::{Integrator, coding_states, rng};

use crate::artifact::{Cell, Table};
use crate::error::CliError;

pub const KS_ALPHA: f64 = 0.01;
pub const MI_SIGMAS: f64 = 2.0;
pub const MARTINGALE_SIGMAS: f64 = 3.0;
pub const COMPLETENESS_TOL: f64 = 1e-14;
pub const MIXTURE_TOL: f64 = crate::experiments::MIXTURE_TOL;
/// Observation times of the closed-form comparison, in units of 1/γ.
pub const CLOSED_FORM_TIMES: [f64; 3] = [0.1, 0.5, 1.0];
pub const TREE_STEPS: usize = 12;
/// Total strength γt spanned by the outcome tree; each of its steps is the
/// matched weak measurement for a slice of length γt / 12.
pub const TREE_GAMMA_T: f64 = 0.5;
/// Weak-chain step (in 1/γ) fine enough that the lattice of reachable
/// posteriors does not register in the two-sample test.
pub const WEAK_CHAIN_DT: f64 = 1e-4;
pub const WEAK_CHAIN_T: f64 = 0.5;
pub const MARTINGALE_PRIOR: f64 = 0.3;
pub const ORDER_TRAJECTORIES: usize = 400;
pub const ORDER_T: f64 = 0.5;
/// Accepted defect ratios when dt doubles: first order for Milstein, order
/// one half for Euler–Maruyama.
pub const MILSTEIN_RATIO: (f64, f64) = (1.6, 2.5);
pub const EM_RATIO: (f64, f64) = (1.15, 1.75);

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteParams {
    pub gamma: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub thetas: Vec<f64>,
    pub integrator: Integrator,
    pub axis: ExponentAxis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub suite: &'static str,
    pub case: String,
    pub statistic: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CaseResult {
    fn at_most(suite: &'static str, case: String, statistic: f64, upper: f64) -> Self {
        Self {
            suite,
            case,
            statistic,
            lower: 0.0,
            upper,
        }
    }

    pub fn passed(&self) -> bool {
        (self.lower..=self.upper).contains(&self.statistic)
    }
}

/// Distinct stream family per suite so that suites never share noise.
fn suite_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn config(p: &SuiteParams, theta0: f64, t_max: f64, feedback: bool, tag: u64) -> SimConfig {
    SimConfig {
        gamma: p.gamma,
        dt: p.dt,
        t_max,
        theta0,
        p1: 0.5,
        feedback,
        seed: suite_seed(p.seed, tag),
        n_traj: p.n_traj,
        integrator: p.integrator,
    }
}

/// KS of simulated P₁ against the closed-form pushforward, and Monte Carlo
/// against quadrature mutual information, on the θ × γt grid.
pub fn closed_form_vs_mc(p: &SuiteParams, feedback: bool) -> Result<(Vec<CaseResult>, Vec<EnsembleSamples>), CliError> {
    let suite = if feedback { "closed-form-fb" } else { "closed-form-nofb" };
    let times: Vec<f64> = CLOSED_FORM_TIMES.iter().map(|t| t / p.gamma).collect();
    let mut cases = Vec::new();
    let mut ensembles = Vec::new();
    for (k, &theta) in p.thetas.iter().enumerate() {
        let cfg = config(
            p,
            theta,
            times[times.len() - 1],
            feedback,
            1 + 2 * k as u64 + feedback as u64,
        );
        let ens = sample_ensemble(&cfg, &times, Execution::Parallel)?;
        let e = coding_states(theta)?;
        for (j, &t) in times.iter().enumerate() {
            let p1 = ens.p1_at(j);
            let (ks, quad) = if feedback {
                let law = FeedbackLaw::new(theta, p.gamma, t, 0.5)?;
                (ks_statistic(&p1, |x| law.p1_cdf(x)), mutual_info_fb(theta, p.gamma, t)?)
            } else {
                let law = NoFeedbackLaw::with_axis(&e, p.gamma, t, p.axis)?;
                (
                    ks_statistic(&p1, |x| law.p1_cdf(x)),
                    mutual_info_nofb(theta, p.gamma, t)?,
                )
            };
            let (mc, se) = mutual_info_mc(&p1)?;
            let case = format!("theta={theta} gamma_t={}", p.gamma * t);
            cases.push(CaseResult::at_most(
                suite,
                format!("ks {case}"),
                ks,
                ks_critical_one_sample(p1.len(), KS_ALPHA),
            ));
            cases.push(CaseResult::at_most(
                suite,
                format!("mi {case} mc={mc} quad={quad}"),
                (mc - quad).abs(),
                MI_SIGMAS * se,
            ));
        }
        ensembles.push(ens);
    }
    Ok((cases, ensembles))
}

/// Exact n-step outcome tree against sampled weak-measurement sequences.
pub fn weak_tree_vs_mc(p: &SuiteParams) -> Result<Vec<CaseResult>, CliError> {
    let e = coding_states(FRAC_PI_4)?;
    let schedule = ContinuumSchedule::for_gamma(p.gamma, TREE_GAMMA_T / p.gamma / TREE_STEPS as f64)?;
    let k = schedule.k();
    let exact = weak_sequence_mi(&e, k, TREE_STEPS)?;
    let m = WeakMeasurement::new(k)?;
    let seed = suite_seed(p.seed, 101);
    let p1: Vec<f64> = exec::map_indexed(p.n_traj, |i| {
        sample_weak_posterior(&e, &m, TREE_STEPS, &mut rng::stream(seed, i as u64))[0]
    });
    let (mc, se) = mutual_info_mc(&p1)?;
    Ok(vec![CaseResult::at_most(
        "weak-tree-vs-mc",
        format!("k={k} n={TREE_STEPS} exact={exact} mc={mc}"),
        (mc - exact).abs(),
        MI_SIGMAS * se,
    )])
}

/// Completeness of the weak-measurement operators on a 101-point k grid.
pub fn weak_completeness() -> Result<Vec<CaseResult>, CliError> {
    let mut worst = 0.0f64;
    for i in 0..=100 {
        worst = worst.max(WeakMeasurement::new(i as f64 / 100.0)?.completeness_defect());
    }
    Ok(vec![CaseResult::at_most(
        "weak-completeness",
        "k in 0..=1 step 0.01".into(),
        worst,
        COMPLETENESS_TOL,
    )])
}

/// Two-sample KS between the fine weak chain and the SME ensemble at the
/// same total strength. `ensembles` are the no-feedback closed-form runs.
pub fn weak_vs_sme(p: &SuiteParams, ensembles: &[EnsembleSamples]) -> Result<Vec<CaseResult>, CliError> {
    let t = WEAK_CHAIN_T / p.gamma;
    let schedule = ContinuumSchedule::for_gamma(p.gamma, WEAK_CHAIN_DT / p.gamma)?;
    let m = schedule.measurement();
    let steps = (t / schedule.dt).round() as usize;
    let seed = suite_seed(p.seed, 202);
    let mut cases = Vec::new();
    for (k, (&theta, ens)) in p.thetas.iter().zip(ensembles).enumerate() {
        let Some(j) = ens.times.iter().position(|&s| (s - t).abs() < 1e-12) else {
            continue;
        };
        let e = coding_states(theta)?;
        let offset = (k * p.n_traj) as u64;
        let weak: Vec<f64> = exec::map_indexed(p.n_traj, |i| {
            sample_weak_posterior(&e, &m, steps, &mut rng::stream(seed, offset + i as u64))[0]
        });
        let sme = ens.p1_at(j);
        cases.push(CaseResult::at_most(
            "weak-vs-sme",
            format!("theta={theta} gamma_t={} weak steps={steps}", p.gamma * t),
            ks_two_sample(&weak, &sme),
            ks_critical_two_sample(weak.len(), sme.len(), KS_ALPHA),
        ));
    }
    Ok(cases)
}

/// E[P₁(t)] = P₁(0) with and without feedback.
pub fn martingale(p: &SuiteParams) -> Result<(Vec<CaseResult>, Vec<Diagnostics>), CliError> {
    let times = [0.1 / p.gamma, 1.0 / p.gamma];
    let mut cases = Vec::new();
    let mut diags = Vec::new();
    for feedback in [false, true] {
        let cfg = SimConfig {
            p1: MARTINGALE_PRIOR,
            ..config(p, FRAC_PI_4, times[1], feedback, 303 + feedback as u64)
        };
        let ens = sample_ensemble(&cfg, &times, Execution::Parallel)?;
        for (j, &t) in times.iter().enumerate() {
            let m: Moments = ens.p1_at(j).into_iter().collect();
            cases.push(CaseResult::at_most(
                "martingale",
                format!("feedback={feedback} gamma_t={} mean={}", p.gamma * t, m.mean()),
                (m.mean() - MARTINGALE_PRIOR).abs(),
                MARTINGALE_SIGMAS * m.std_error(),
            ));
        }
        diags.extend(ens.diagnostics);
    }
    Ok((cases, diags))
}

/// ‖ρ - ΣPᵢρᵢ‖∞ along every trajectory simulated by the other suites.
pub fn mixture_consistency<'a>(diags: impl IntoIterator<Item = &'a Diagnostics>) -> Vec<CaseResult> {
    let mut worst = Diagnostics::default();
    let mut n = 0usize;
    for d in diags {
        worst.merge(d);
        n += 1;
    }
    vec![CaseResult::at_most(
        "mixture-consistency",
        format!("{n} trajectories"),
        worst.max_mixture_defect,
        MIXTURE_TOL,
    )]
}

fn mean_max_defect(p: &SuiteParams, integrator: Integrator, dt: f64) -> Result<f64, CliError> {
    let cfg = SimConfig {
        dt,
        n_traj: ORDER_TRAJECTORIES,
        integrator,
        ..config(p, FRAC_PI_4, ORDER_T / p.gamma, false, 404)
    };
    let ens = sample_ensemble(&cfg, &[cfg.t_max], Execution::Parallel)?;
    Ok(ens
        .diagnostics
        .iter()
        .map(|d| d.max_mixture_defect)
        .collect::<Moments>()
        .mean())
}

/// Mixture-defect ratio between dt and dt/2: about 2 for Milstein, about √2
/// for Euler–Maruyama.
pub fn integrator_order(p: &SuiteParams) -> Result<Vec<CaseResult>, CliError> {
    let mut cases = Vec::new();
    for (integrator, (lower, upper)) in [
        (Integrator::Milstein, MILSTEIN_RATIO),
        (Integrator::EulerMaruyama, EM_RATIO),
    ] {
        let coarse = mean_max_defect(p, integrator, p.dt)?;
        let fine = mean_max_defect(p, integrator, 0.5 * p.dt)?;
        cases.push(CaseResult {
            suite: "integrator-order",
            case: format!("{integrator} dt={} defect={coarse:e} dt/2 defect={fine:e}", p.dt),
            statistic: coarse / fine,
            lower,
            upper,
        });
    }
    Ok(cases)
}

/// Runs every suite in a fixed order.
pub fn run_all(p: &SuiteParams) -> Result<Vec<CaseResult>, CliError> {
    let mut cases = Vec::new();
    let (nofb, nofb_runs) = closed_form_vs_mc(p, false)?;
    cases.extend(nofb);
    let (fb, fb_runs) = closed_form_vs_mc(p, true)?;
    cases.extend(fb);
    cases.extend(weak_completeness()?);
    cases.extend(weak_tree_vs_mc(p)?);
    cases.extend(weak_vs_sme(p, &nofb_runs)?);
    let (mart, mart_diags) = martingale(p)?;
    cases.extend(mart);
    let all = nofb_runs
        .iter()
        .chain(&fb_runs)
        .flat_map(|e| &e.diagnostics)
        .chain(&mart_diags);
    cases.extend(mixture_consistency(all));
    cases.extend(integrator_order(p)?);
    Ok(cases)
}

pub fn table(cases: &[CaseResult]) -> Table {
    let mut t = Table::new(None, vec!["suite", "case", "statistic", "lower", "upper", "passed"]);
    for c in cases {
        t.push(vec![
            c.suite.into(),
            Cell::Text(c.case.clone()),
            c.statistic.into(),
            c.lower.into(),
            c.upper.into(),
            c.passed().into(),
        ]);
    }
    t
}

//! Time-domain simulation of the continuously monitored qubit.
//!
//! One trajectory carries the receiver's state ρ, the two conditional coding
//! states ρ₁, ρ₂ and the preparation probabilities P₁, P₂, all driven by a
//! single Wiener increment per step. Measurement record:
//! `dy = ⟨σx⟩dt + dW/√(8γ)`.
//!
//! Bloch form of the measurement (pure σx monitoring):
//!
//! ```text
//! dx = √(8γ)(1 - x²) dW
//! dy = -4γ y dt - √(8γ) x y dW
//! dz = -4γ z dt - √(8γ) x z dW
//! ```
//!
//! A coding state is updated with the innovation of its own hypothesis,
//! `dWᵢ = √(8γ)(dy - xᵢdt) = dW + √(8γ)(x̄ - xᵢ)dt`, and the preparation
//! probabilities follow `dPᵢ = √(8γ)(xᵢ - x̄)Pᵢ dW`.

use crate::bloch::{BlochState, coding_states, mixture, rotate_xz};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::{self, StreamRng};

/// Slack on the Bloch norm before an Euler step is rejected.
pub const NORM_BLOWUP: f64 = 0.1;
/// Slack on Pᵢ ∈ [0, 1] before an Euler step is rejected.
pub const PROBABILITY_SLACK: f64 = 1e-9;

#[inline]
fn root8(gamma: f64) -> f64 {
    (8.0 * gamma).sqrt()
}

/// Euler–Maruyama increment of the monitored state.
pub fn sme_increment(rho: &BlochState, dw: f64, dt: f64, gamma: f64) -> BlochState {
    let k = root8(gamma);
    let BlochState { x, y, z } = *rho;
    BlochState::new(
        k * (1.0 - x * x) * dw,
        -4.0 * gamma * y * dt - k * x * y * dw,
        -4.0 * gamma * z * dt - k * x * z * dw,
    )
}

pub fn record_increment(rho: &BlochState, dw: f64, dt: f64, gamma: f64) -> f64 {
    rho.x * dt + dw / root8(gamma)
}

/// Increment of coding state `rho_i` under the record generated by `rho`.
pub fn coding_state_increment(rho_i: &BlochState, rho: &BlochState, dw: f64, dt: f64, gamma: f64) -> BlochState {
    let dw_i = dw + root8(gamma) * (rho.x - rho_i.x) * dt;
    sme_increment(rho_i, dw_i, dt, gamma)
}

/// Bayes-filter increment of the probability that `rho_i` was prepared.
pub fn bayes_increment(p_i: f64, rho_i: &BlochState, rho: &BlochState, dw: f64, gamma: f64) -> f64 {
    root8(gamma) * (rho_i.x - rho.x) * p_i * dw
}

/// Milstein term ½(b·∇)b for the noise coefficient b of a monitored state;
/// multiply by dW² - dt.
pub fn sme_milstein_term(rho: &BlochState, gamma: f64) -> BlochState {
    let s2 = 8.0 * gamma;
    let BlochState { x, y, z } = *rho;
    let shrink = -0.5 * s2 * (1.0 - 2.0 * x * x);
    BlochState::new(-s2 * x * (1.0 - x * x), shrink * y, shrink * z)
}

/// Milstein term for the Bayes filter; the noise coefficient of Pᵢ depends on
/// Pᵢ, xᵢ and x̄ alike.
pub fn bayes_milstein_term(p_i: f64, rho_i: &BlochState, rho: &BlochState, gamma: f64) -> f64 {
    -8.0 * gamma * rho.x * p_i * (rho_i.x - rho.x)
}

/// Itô-level rotation angle that keeps the coding pair symmetric about +z,
/// for a pair currently at (±x, 0, z) with probabilities `p1`, `p2`.
///
/// Both coding states shift their artanh(x) by the same `8γ dy`, so the
/// bisector turns by `z · 8γ dy = z(√(8γ)dW + 8γ x (P₁ - P₂) dt)`. The sign
/// matches [`rotate_xz`].
pub fn feedback_angle(x: f64, z: f64, p1: f64, p2: f64, dw: f64, dt: f64, gamma: f64) -> f64 {
    z * (root8(gamma) * dw + 8.0 * gamma * x * (p1 - p2) * dt)
}

/// Exact angle that rotates the bisector of `r1`, `r2` onto +z under [`rotate_xz`].
pub fn restoring_angle(r1: &BlochState, r2: &BlochState) -> f64 {
    (r1.x + r2.x).atan2(r1.z + r2.z)
}

/// σz coefficient of the feedback Hamiltonian (ħ = 1), reading the record as
/// its instantaneous rate. Only used for logging.
pub fn feedback_hamiltonian_coeff(y_rate: f64, z: f64, x_bar: f64, gamma: f64) -> f64 {
    8.0 * gamma * (y_rate + (z - 1.0) * x_bar)
}

/// |z₁ - z₂| + |x₁ + x₂|: distance from mirror symmetry about the z axis.
pub fn asymmetry(r1: &BlochState, r2: &BlochState) -> f64 {
    (r1.z - r2.z).abs() + (r1.x + r2.x).abs()
}

/// Step rule for the coupled equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Applies the Gaussian measurement operator `exp(4γ dy σx)` for the
    /// sampled record increment to ρ, ρ₁ and ρ₂, and reweights Pᵢ by the
    /// matching likelihoods. First order like Euler–Maruyama, but keeps
    /// ρ = ΣPᵢρᵢ and the purity of the coding states exact.
    #[default]
    MeasurementOperator,
    /// Plain Euler–Maruyama on the Itô equations with renormalisation of the
    /// coding states and probabilities after each step.
    EulerMaruyama,
    /// Euler–Maruyama plus the Milstein correction; strong order one, so the
    /// mixture defect shrinks linearly with dt.
    Milstein,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kraus" | "measurement-operator" => Ok(Integrator::MeasurementOperator),
            "em" | "euler-maruyama" => Ok(Integrator::EulerMaruyama),
            "milstein" => Ok(Integrator::Milstein),
            other => Err(Error::domain(format!("unknown integrator '{other}'"))),
        }
    }
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Integrator::MeasurementOperator => "kraus",
            Integrator::EulerMaruyama => "em",
            Integrator::Milstein => "milstein",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub gamma: f64,
    pub dt: f64,
    pub t_max: f64,
    pub theta0: f64,
    /// Prior of the first coding state.
    pub p1: f64,
    pub feedback: bool,
    pub seed: u64,
    pub n_traj: usize,
    pub integrator: Integrator,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            dt: 1e-4,
            t_max: 1.0,
            theta0: std::f64::consts::FRAC_PI_4,
            p1: 0.5,
            feedback: false,
            seed: 1,
            n_traj: 1,
            integrator: Integrator::MeasurementOperator,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("gamma", self.gamma), ("dt", self.dt), ("t_max", self.t_max)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} = {v} must be positive and finite")));
            }
        }
        if self.gamma * self.dt > 1e-2 {
            return Err(Error::domain(format!(
                "gamma * dt = {} exceeds 1e-2",
                self.gamma * self.dt
            )));
        }
        if self.n_traj == 0 {
            return Err(Error::domain("n_traj must be at least 1"));
        }
        coding_states(self.theta0)?.with_priors(self.p1)?;
        Ok(())
    }

    /// Number of steps to reach `t`.
    pub fn steps_to(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub rho: BlochState,
    pub rho1: BlochState,
    pub rho2: BlochState,
    pub p1: f64,
    pub p2: f64,
    /// Accumulated measurement record.
    pub y: f64,
}

impl TrajectoryState {
    pub fn initial(config: &SimConfig) -> Result<Self> {
        let e = coding_states(config.theta0)?.with_priors(config.p1)?;
        Ok(Self {
            t: 0.0,
            rho: mixture(&e),
            rho1: e.rho1,
            rho2: e.rho2,
            p1: e.p1,
            p2: e.p2,
            y: 0.0,
        })
    }

    /// ‖ρ - (P₁ρ₁ + P₂ρ₂)‖∞.
    pub fn mixture_defect(&self) -> f64 {
        let mix = self.rho1.scale(self.p1) + self.rho2.scale(self.p2);
        self.rho.max_abs_diff(&mix)
    }

    pub fn asymmetry(&self) -> f64 {
        asymmetry(&self.rho1, &self.rho2)
    }

    /// Tangent of half the angle between the coding states.
    pub fn tan_half_angle(&self) -> f64 {
        let a1 = self.rho1.x.atan2(self.rho1.z);
        let a2 = self.rho2.x.atan2(self.rho2.z);
        (0.5 * (a1 - a2)).tan()
    }
}

/// Worst-case invariant violations seen along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub steps: u64,
    pub max_mixture_defect: f64,
    pub max_purity_defect: f64,
    /// Largest post-rotation asymmetry; stays 0 without feedback.
    pub max_asymmetry: f64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Self) {
        self.steps += other.steps;
        self.max_mixture_defect = self.max_mixture_defect.max(other.max_mixture_defect);
        self.max_purity_defect = self.max_purity_defect.max(other.max_purity_defect);
        self.max_asymmetry = self.max_asymmetry.max(other.max_asymmetry);
    }
}

/// Single-trajectory integrator.
pub struct Stepper {
    config: SimConfig,
    index: u64,
    state: TrajectoryState,
    rng: StreamRng,
    sqrt_dt: f64,
    steps: u64,
    diagnostics: Diagnostics,
}

impl Stepper {
    pub fn new(config: &SimConfig, index: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            index,
            state: TrajectoryState::initial(config)?,
            rng: rng::stream(config.seed, index),
            sqrt_dt: config.dt.sqrt(),
            steps: 0,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn state(&self) -> &TrajectoryState {
        &self.state
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    /// Advances one step with a freshly drawn increment.
    pub fn step(&mut self) -> Result<()> {
        let dw = rng::wiener_increment(&mut self.rng, self.sqrt_dt);
        self.step_with(dw)
    }

    /// Advances one step with a caller-supplied Wiener increment.
    pub fn step_with(&mut self, dw: f64) -> Result<()> {
        let cfg = &self.config;
        let (gamma, dt) = (cfg.gamma, cfg.dt);
        let s = self.state;
        let dy = record_increment(&s.rho, dw, dt, gamma);

        let mut next = match cfg.integrator {
            Integrator::MeasurementOperator => measurement_operator_step(&s, dy, gamma),
            Integrator::EulerMaruyama => self.euler_step(&s, dw, false)?,
            Integrator::Milstein => self.euler_step(&s, dw, true)?,
        };
        next.y = s.y + dy;
        self.steps += 1;
        next.t = self.steps as f64 * dt;

        if cfg.feedback {
            let phi = restoring_angle(&next.rho1, &next.rho2);
            next.rho = rotate_xz(next.rho, phi);
            next.rho1 = rotate_xz(next.rho1, phi);
            next.rho2 = rotate_xz(next.rho2, phi);
            self.diagnostics.max_asymmetry = self.diagnostics.max_asymmetry.max(next.asymmetry());
        }

        let finite = [
            next.rho.x,
            next.rho.z,
            next.rho1.x,
            next.rho1.z,
            next.rho2.x,
            next.rho2.z,
            next.p1,
            next.y,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(self.step_error(next.t, "non-finite state"));
        }
        let purity = (next.rho1.norm() - 1.0).abs().max((next.rho2.norm() - 1.0).abs());
        self.diagnostics.max_purity_defect = self.diagnostics.max_purity_defect.max(purity);
        self.diagnostics.max_mixture_defect = self.diagnostics.max_mixture_defect.max(next.mixture_defect());
        self.diagnostics.steps = self.steps;
        self.state = next;
        Ok(())
    }

    fn step_error(&self, t: f64, reason: impl Into<String>) -> Error {
        Error::Step {
            trajectory: self.index,
            t,
            reason: reason.into(),
        }
    }

    fn euler_step(&self, s: &TrajectoryState, dw: f64, milstein: bool) -> Result<TrajectoryState> {
        let (gamma, dt) = (self.config.gamma, self.config.dt);
        let t = s.t + dt;
        let mut rho = s.rho + sme_increment(&s.rho, dw, dt, gamma);
        let mut rho1 = s.rho1 + coding_state_increment(&s.rho1, &s.rho, dw, dt, gamma);
        let mut rho2 = s.rho2 + coding_state_increment(&s.rho2, &s.rho, dw, dt, gamma);
        let mut p1 = s.p1 + bayes_increment(s.p1, &s.rho1, &s.rho, dw, gamma);
        let mut p2 = s.p2 + bayes_increment(s.p2, &s.rho2, &s.rho, dw, gamma);
        if milstein {
            let q = dw * dw - dt;
            rho = rho + sme_milstein_term(&s.rho, gamma).scale(q);
            rho1 = rho1 + sme_milstein_term(&s.rho1, gamma).scale(q);
            rho2 = rho2 + sme_milstein_term(&s.rho2, gamma).scale(q);
            p1 += bayes_milstein_term(s.p1, &s.rho1, &s.rho, gamma) * q;
            p2 += bayes_milstein_term(s.p2, &s.rho2, &s.rho, gamma) * q;
        }

        for (name, p) in [("P1", p1), ("P2", p2)] {
            if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p) {
                return Err(self.step_error(t, format!("{name} = {p} left [0, 1]; halve dt")));
            }
        }
        for r in [&rho, &rho1, &rho2] {
            if r.norm() > 1.0 + NORM_BLOWUP {
                return Err(self.step_error(t, format!("Bloch norm {} blew up; halve dt", r.norm())));
            }
        }
        if rho.norm() > 1.0 {
            rho = rho.normalized();
        }
        let (p1, p2) = (p1.clamp(0.0, 1.0), p2.clamp(0.0, 1.0));
        let total = p1 + p2;
        Ok(TrajectoryState {
            t,
            rho,
            rho1: rho1.normalized(),
            rho2: rho2.normalized(),
            p1: p1 / total,
            p2: p2 / total,
            y: s.y,
        })
    }
}

/// exp(aσx) ρ exp(aσx) / Tr[·] with 2a = 8γ dy, in the stable tanh form.
#[inline]
fn kraus_update(r: &BlochState, tau: f64, sech: f64) -> BlochState {
    let d = 1.0 + r.x * tau;
    BlochState::new((r.x + tau) / d, r.y * sech / d, r.z * sech / d)
}

fn measurement_operator_step(s: &TrajectoryState, dy: f64, gamma: f64) -> TrajectoryState {
    let two_a = 8.0 * gamma * dy;
    let tau = two_a.tanh();
    let sech = (1.0 - tau * tau).max(0.0).sqrt();
    let w1 = s.p1 * (1.0 + s.rho1.x * tau);
    let w2 = s.p2 * (1.0 + s.rho2.x * tau);
    let total = w1 + w2;
    TrajectoryState {
        t: s.t,
        rho: kraus_update(&s.rho, tau, sech),
        rho1: kraus_update(&s.rho1, tau, sech).normalized(),
        rho2: kraus_update(&s.rho2, tau, sech).normalized(),
        p1: w1 / total,
        p2: w2 / total,
        y: s.y,
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub index: u64,
    pub samples: Vec<TrajectoryState>,
    pub diagnostics: Diagnostics,
}

/// Runs trajectory `index` of `config` to `t_max`, keeping every
/// `record_every`-th state (and the initial one).
pub fn simulate(config: &SimConfig, index: u64, record_every: usize) -> Result<Trajectory> {
    let mut stepper = Stepper::new(config, index)?;
    let n = config.steps_to(config.t_max);
    let every = record_every.max(1);
    let mut samples = Vec::with_capacity(n / every + 2);
    samples.push(*stepper.state());
    for i in 1..=n {
        stepper.step()?;
        if i % every == 0 || i == n {
            samples.push(*stepper.state());
        }
    }
    Ok(Trajectory {
        index,
        samples,
        diagnostics: stepper.diagnostics(),
    })
}

/// P₁ (and full states) of every trajectory at a set of observation times.
#[derive(Debug, Clone)]
pub struct EnsembleSamples {
    pub times: Vec<f64>,
    /// `states[j][i]`: trajectory `i` at `times[j]`.
    pub states: Vec<Vec<TrajectoryState>>,
    pub diagnostics: Vec<Diagnostics>,
}

impl EnsembleSamples {
    pub fn p1_at(&self, j: usize) -> Vec<f64> {
        self.states[j].iter().map(|s| s.p1).collect()
    }

    pub fn worst(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        for x in &self.diagnostics {
            d.merge(x);
        }
        d
    }
}

/// Runs `config.n_traj` trajectories and snapshots them at `times`
/// (ascending, within `t_max`).
pub fn sample_ensemble(config: &SimConfig, times: &[f64], execution: Execution) -> Result<EnsembleSamples> {
    config.validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0 || t > config.t_max * (1.0 + 1e-12)) {
        return Err(Error::domain("observation times must be ascending within [0, t_max]"));
    }
    let marks: Vec<usize> = times.iter().map(|&t| config.steps_to(t)).collect();
    let runs = execution.map(config.n_traj, |i| -> Result<(Vec<TrajectoryState>, Diagnostics)> {
        let mut stepper = Stepper::new(config, i as u64)?;
        let mut snaps = Vec::with_capacity(marks.len());
        let mut done = 0usize;
        for &m in &marks {
            while done < m {
                stepper.step()?;
                done += 1;
            }
            snaps.push(*stepper.state());
        }
        Ok((snaps, stepper.diagnostics()))
    });
    let mut states = vec![Vec::with_capacity(config.n_traj); times.len()];
    let mut diagnostics = Vec::with_capacity(config.n_traj);
    for run in runs {
        let (snaps, diag) = run?;
        for (j, s) in snaps.into_iter().enumerate() {
            states[j].push(s);
        }
        diagnostics.push(diag);
    }
    Ok(EnsembleSamples {
        times: times.to_vec(),
        states,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density;
    use crate::stats::Moments;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn cfg(theta0: f64, feedback: bool, integrator: Integrator) -> SimConfig {
        SimConfig {
            theta0,
            feedback,
            integrator,
            ..SimConfig::default()
        }
    }

    #[test]
    fn milstein_terms_match_finite_differences() {
        // ½ (b·∇)b with b the dW coefficient: b(ξ + h b) - b(ξ - h b) over 4h
        let gamma = 0.7;
        let unit = 1.0;
        let noise = |r: &BlochState| sme_increment(r, unit, 0.0, gamma);
        let r = BlochState::new(0.3, -0.2, 0.5);
        let b = noise(&r);
        let h = 1e-6;
        let fd = (noise(&(r + b.scale(h))) - noise(&(r - b.scale(h)))).scale(0.25 / h);
        assert!(fd.max_abs_diff(&sme_milstein_term(&r, gamma)) < 1e-8);

        let (ri, p) = (BlochState::new(-0.4, 0.0, 0.6), 0.35);
        let bp = |p: f64, ri: &BlochState, r: &BlochState| bayes_increment(p, ri, r, unit, gamma);
        let (bi, bb, bpp) = (noise(&ri), b, bp(p, &ri, &r));
        let shifted = |sgn: f64| bp(p + sgn * h * bpp, &(ri + bi.scale(sgn * h)), &(r + bb.scale(sgn * h)));
        let fd = (shifted(1.0) - shifted(-1.0)) * 0.25 / h;
        assert_abs_diff_eq!(fd, bayes_milstein_term(p, &ri, &r, gamma), epsilon = 1e-8);
    }

    #[test]
    fn milstein_mixture_defect_is_first_order() {
        let mean_max = |dt: f64| {
            let c = SimConfig {
                dt,
                t_max: 0.2,
                n_traj: 200,
                ..cfg(FRAC_PI_4, false, Integrator::Milstein)
            };
            let ens = sample_ensemble(&c, &[0.2], Execution::Parallel).unwrap();
            ens.diagnostics
                .iter()
                .map(|d| d.max_mixture_defect)
                .collect::<Moments>()
                .mean()
        };
        let ratio = mean_max(4e-4) / mean_max(2e-4);
        assert!((1.6..2.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn eigenstates_are_fixed_points() {
        for x in [1.0, -1.0] {
            let inc = sme_increment(&BlochState::new(x, 0.0, 0.0), 0.37, 1e-4, 1.3);
            assert_eq!(inc.norm(), 0.0);
            let inc = coding_state_increment(
                &BlochState::new(x, 0.0, 0.0),
                &BlochState::new(0.1, 0.0, 0.5),
                0.2,
                1e-4,
                1.0,
            );
            assert_eq!(inc.norm(), 0.0);
        }
    }

    #[test]
    fn bloch_and_matrix_increments_agree() {
        let cases = [
            (BlochState::new(0.0, 0.0, 1.0), 0.01, 1.0, 1e-4),
            (BlochState::new(0.3, 0.2, -0.5), -0.02, 2.5, 1e-3),
            (BlochState::new(-0.6, 0.0, 0.8), 0.005, 0.7, 1e-5),
        ];
        for (s, dw, gamma, dt) in cases {
            let bloch = sme_increment(&s, dw, dt, gamma);
            let matrix = density::to_bloch(&density::sme_increment(&density::from_bloch(&s), dw, dt, gamma));
            assert!(bloch.max_abs_diff(&matrix) <= 1e-12, "{bloch:?} vs {matrix:?}");

            let rho = BlochState::new(0.1, 0.0, 0.7);
            let bloch = coding_state_increment(&s, &rho, dw, dt, gamma);
            let matrix = density::to_bloch(&density::coding_state_increment(
                &density::from_bloch(&s),
                &density::from_bloch(&rho),
                dw,
                dt,
                gamma,
            ));
            assert!(bloch.max_abs_diff(&matrix) <= 1e-12);
        }
    }

    #[test]
    fn record_examples() {
        assert_eq!(record_increment(&BlochState::new(1.0, 0.0, 0.0), 0.0, 1e-3, 1.0), 1e-3);
        assert_abs_diff_eq!(
            record_increment(&BlochState::new(0.0, 0.0, 1.0), 0.02, 1e-3, 2.0),
            0.02 / 4.0,
            epsilon = 1e-18
        );
        assert_abs_diff_eq!(
            record_increment(&BlochState::new(0.5, 0.0, 0.0), 0.02, 1e-3, 2.0),
            5.5e-3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn coding_state_reduces_to_sme_when_equal() {
        let s = BlochState::new(0.4, 0.0, 0.6);
        assert_eq!(
            coding_state_increment(&s, &s, 0.013, 1e-4, 1.0),
            sme_increment(&s, 0.013, 1e-4, 1.0)
        );
    }

    #[test]
    fn deterministic_coding_drift_matches_component_equations() {
        // dW = 0: dx_i = -8γ z_i²(x_i - x̄)dt, dz_i = -8γ z_i(1/2 - x_i(x_i - x̄))dt
        let e = coding_states(FRAC_PI_4).unwrap();
        let rho = mixture(&e);
        let (gamma, dt) = (1.0, 1e-4);
        for r in [e.rho1, e.rho2] {
            let inc = coding_state_increment(&r, &rho, 0.0, dt, gamma);
            let dx = -8.0 * gamma * r.z * r.z * (r.x - rho.x) * dt;
            let dz = -8.0 * gamma * r.z * (0.5 - r.x * (r.x - rho.x)) * dt;
            assert_abs_diff_eq!(inc.x, dx, epsilon = 1e-16);
            assert_abs_diff_eq!(inc.z, dz, epsilon = 1e-16);
        }
        // towards each other
        assert!(coding_state_increment(&e.rho1, &rho, 0.0, dt, gamma).x < 0.0);
        assert!(coding_state_increment(&e.rho2, &rho, 0.0, dt, gamma).x > 0.0);
    }

    #[test]
    fn bayes_examples() {
        let rho = BlochState::new(0.2, 0.0, 0.5);
        assert_eq!(
            bayes_increment(0.4, &BlochState::new(0.2, 0.0, 0.9), &rho, 0.1, 1.0),
            0.0
        );
        assert_eq!(
            bayes_increment(0.0, &BlochState::new(0.9, 0.0, 0.1), &rho, 0.1, 1.0),
            0.0
        );

        let e = coding_states(FRAC_PI_2).unwrap();
        let rho = mixture(&e);
        let d1 = bayes_increment(0.5, &e.rho1, &rho, 0.01, 1.0);
        let d2 = bayes_increment(0.5, &e.rho2, &rho, 0.01, 1.0);
        assert_abs_diff_eq!(d1, 0.014_142_135_623_730_95, epsilon = 1e-16);
        assert!((d1 + d2).abs() <= 1e-12);
    }

    #[test]
    fn itô_product_rule_keeps_mixture_consistent() {
        // E[d(ΣPᵢrᵢ)] - E[dρ] = 0 when dW² is replaced by dt: check the dt terms.
        let e = coding_states(0.7).unwrap().with_priors(0.3).unwrap();
        let (r1, r2) = (rotate_xz(e.rho1, 0.2), rotate_xz(e.rho2, -0.1));
        let (p1, p2) = (e.p1, e.p2);
        let rho = r1.scale(p1) + r2.scale(p2);
        let (gamma, dt) = (1.3, 1.0);
        // drift parts (dW = 0) plus Itô cross-terms dPᵢ·drᵢ with dW² = dt
        let drift = |r: &BlochState| coding_state_increment(r, &rho, 0.0, dt, gamma);
        let noise = |r: &BlochState| coding_state_increment(r, &rho, 1.0, 0.0, gamma);
        let dp = |p: f64, r: &BlochState| bayes_increment(p, r, &rho, 1.0, gamma);
        let lhs_drift = drift(&r1).scale(p1)
            + drift(&r2).scale(p2)
            + noise(&r1).scale(dp(p1, &r1) * dt)
            + noise(&r2).scale(dp(p2, &r2) * dt);
        let rhs_drift = sme_increment(&rho, 0.0, dt, gamma);
        assert!(
            lhs_drift.max_abs_diff(&rhs_drift) < 1e-13,
            "{lhs_drift:?} vs {rhs_drift:?}"
        );
        // noise parts
        let lhs_noise = noise(&r1).scale(p1) + noise(&r2).scale(p2) + r1.scale(dp(p1, &r1)) + r2.scale(dp(p2, &r2));
        let rhs_noise = sme_increment(&rho, 1.0, 0.0, gamma);
        assert!(lhs_noise.max_abs_diff(&rhs_noise) < 1e-13);
    }

    #[test]
    fn feedback_angle_examples() {
        assert_eq!(feedback_angle(0.3, 0.9, 0.5, 0.5, 0.0, 1e-3, 1.0), 0.0);
        assert_abs_diff_eq!(
            feedback_angle(0.0, 1.0, 0.9, 0.1, 0.02, 1e-3, 2.0),
            4.0 * 0.02,
            epsilon = 1e-16
        );
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // z(√8·0.03 + 8·x·0.2·1e-3) with x = z = 1/√2
        assert_abs_diff_eq!(
            feedback_angle(h, h, 0.6, 0.4, 0.03, 1e-3, 1.0),
            0.060_8,
            epsilon = 1e-15
        );
    }

    #[test]
    fn feedback_angle_restores_symmetry_to_higher_order() {
        // Measure a symmetric pair for one Euler step and compare the Itô
        // formula with the exact bisector angle; the residual must shrink
        // faster than dt.
        let gamma = 1.0;
        let e = coding_states(0.5).unwrap().with_priors(0.7).unwrap();
        let rho = mixture(&e);
        let mut residuals = Vec::new();
        for dt in [1e-3, 1e-4, 1e-5] {
            let dw = 1.3 * f64::sqrt(dt);
            let r1 = (e.rho1 + coding_state_increment(&e.rho1, &rho, dw, dt, gamma)).normalized();
            let r2 = (e.rho2 + coding_state_increment(&e.rho2, &rho, dw, dt, gamma)).normalized();
            let exact = restoring_angle(&r1, &r2);
            let ito = feedback_angle(e.rho1.x, e.rho1.z, e.p1, e.p2, dw, dt, gamma);
            // the sign convention restores symmetry
            let before = asymmetry(&r1, &r2);
            let after = asymmetry(&rotate_xz(r1, ito), &rotate_xz(r2, ito));
            let wrong = asymmetry(&rotate_xz(r1, -ito), &rotate_xz(r2, -ito));
            assert!(after < before && after < wrong);
            residuals.push((exact - ito).abs() / dt);
        }
        assert!(
            residuals[1] < 0.5 * residuals[0] && residuals[2] < 0.5 * residuals[1],
            "{residuals:?}"
        );
    }

    #[test]
    fn hamiltonian_coefficient_examples() {
        assert_eq!(feedback_hamiltonian_coeff(0.0, 1.0, 0.4, 1.0), 0.0);
        assert_abs_diff_eq!(feedback_hamiltonian_coeff(0.3, 1.0, 0.0, 1.0), 2.4, epsilon = 1e-15);
        assert_abs_diff_eq!(feedback_hamiltonian_coeff(0.0, 0.8, 0.1, 1.0), -0.16, epsilon = 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(
            SimConfig {
                dt: 0.1,
                ..SimConfig::default()
            }
            .validate()
            .is_err()
        );
        assert!(
            SimConfig {
                n_traj: 0,
                ..SimConfig::default()
            }
            .validate()
            .is_err()
        );
        assert!(
            SimConfig {
                theta0: 2.0,
                ..SimConfig::default()
            }
            .validate()
            .is_err()
        );
        assert!(
            SimConfig {
                gamma: -1.0,
                ..SimConfig::default()
            }
            .validate()
            .is_err()
        );
        assert!(SimConfig::default().validate().is_ok());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let c = cfg(FRAC_PI_4, true, Integrator::MeasurementOperator);
        let a = simulate(&c, 3, 100).unwrap();
        let b = simulate(&c, 3, 100).unwrap();
        assert_eq!(a.samples, b.samples);
        let other = simulate(&c, 4, 100).unwrap();
        assert_ne!(a.samples.last(), other.samples.last());
    }

    #[test]
    fn orthogonal_states_are_fully_resolved() {
        for integrator in [Integrator::MeasurementOperator, Integrator::EulerMaruyama] {
            let c = SimConfig {
                t_max: 4.0,
                n_traj: 50,
                ..cfg(FRAC_PI_2, false, integrator)
            };
            let ens = sample_ensemble(&c, &[4.0], Execution::Parallel).unwrap();
            for p in ens.p1_at(0) {
                assert!(!(1e-3..=1.0 - 1e-3).contains(&p), "{integrator}: p1 = {p}");
            }
        }
    }

    #[test]
    fn kraus_step_keeps_mixture_exact() {
        let c = SimConfig {
            t_max: 2.0,
            ..cfg(0.5, false, Integrator::MeasurementOperator)
        };
        let t = simulate(&c, 0, 1000).unwrap();
        assert!(t.diagnostics.max_mixture_defect < 1e-12, "{:?}", t.diagnostics);
        assert!(t.diagnostics.max_purity_defect < 1e-14);
    }

    #[test]
    fn forced_zero_noise_feedback_follows_ode() {
        // dW = 0 with feedback: ż = 4γz(1 - z²), i.e. tanθ(t) = tanθ₀ e^{-4γt}.
        let theta0 = FRAC_PI_4;
        let mut errors = Vec::new();
        for dt in [1e-3, 5e-4] {
            let c = SimConfig {
                dt,
                ..cfg(theta0, true, Integrator::EulerMaruyama)
            };
            let mut st = Stepper::new(&c, 0).unwrap();
            for _ in 0..c.steps_to(1.0) {
                st.step_with(0.0).unwrap();
            }
            let tan = st.state().tan_half_angle();
            errors.push((tan / theta0.tan() - (-4.0f64).exp()).abs());
            assert!(st.diagnostics().max_asymmetry < 1e-14);
        }
        // global error O(dt)
        let ratio = errors[0] / errors[1];
        assert!((1.6..2.4).contains(&ratio), "{errors:?}");
    }

    #[test]
    fn feedback_keeps_pair_symmetric() {
        for integrator in [Integrator::MeasurementOperator, Integrator::EulerMaruyama] {
            let c = cfg(0.4, true, integrator);
            let t = simulate(&c, 11, 1000).unwrap();
            assert!(t.diagnostics.max_asymmetry <= 1e-8, "{:?}", t.diagnostics);
        }
    }

    #[test]
    fn probability_is_a_martingale() {
        let c = SimConfig {
            n_traj: 2000,
            t_max: 0.5,
            p1: 0.3,
            ..cfg(0.6, false, Integrator::EulerMaruyama)
        };
        let ens = sample_ensemble(&c, &[0.1, 0.5], Execution::Parallel).unwrap();
        for j in 0..2 {
            let m: Moments = ens.p1_at(j).into_iter().collect();
            assert!(
                (m.mean() - 0.3).abs() < 3.0 * m.std_error(),
                "t={} mean={} se={}",
                ens.times[j],
                m.mean(),
                m.std_error()
            );
        }
    }

    #[test]
    fn sequential_and_parallel_ensembles_agree() {
        let c = SimConfig {
            n_traj: 16,
            t_max: 0.05,
            ..cfg(0.3, true, Integrator::MeasurementOperator)
        };
        let a = sample_ensemble(&c, &[0.02, 0.05], Execution::Parallel).unwrap();
        let b = sample_ensemble(&c, &[0.02, 0.05], Execution::Sequential).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn bad_observation_times_rejected() {
        let c = SimConfig {
            t_max: 0.1,
            ..SimConfig::default()
        };
        assert!(sample_ensemble(&c, &[0.05, 0.01], Execution::Sequential).is_err());
        assert!(sample_ensemble(&c, &[0.5], Execution::Sequential).is_err());
    }
}

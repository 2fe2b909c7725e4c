//! Analytic solution families for the receiver's posterior.
//!
//! Without feedback, the state after a record `y(t) = v·t` is
//! `e^{4γtvσx} ρ(0) e^{4γtvσx} / Tr[e^{8γtvσx} ρ(0)]` and `v` has density
//!
//! ```text
//! P(v, t) = √(4γt/π) e^{-4γt(v² + 1)} Tr[e^{8γtvσx} ρ(0)]
//! ```
//!
//! so that `Pᵢ(t) ∝ Tr[e^{8γtvσx} ρᵢ(0)] Pᵢ(0)`. With feedback the coding
//! states stay symmetric and the filter is a classical two-state measurement
//! of accumulated strength Γ(t); the same formulas hold with ρᵢ replaced by
//! the σx eigenstates and γt by Γ.
//!
//! Both laws are a two-component Gaussian mixture in the outcome parameter
//! with means ±1 and variance 1/(8s), where s is γt or Γ.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::bloch::{BlochState, CodingEnsemble};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::stats::normal_cdf;

/// Half-width of the integration window, in component standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 10.0;

/// ln(cosh b + c sinh b) for |c| ≤ 1, without overflow.
fn ln_trace_exp(b: f64, c: f64) -> f64 {
    let a = b.abs();
    let cs = if b >= 0.0 { c } else { -c };
    let e = (-2.0 * a).exp();
    a + (0.5 * ((1.0 + cs) + (1.0 - cs) * e)).ln()
}

/// Shared machinery: outcome parameter `w` with density
/// `√(4s/π) e^{-4s(w²+1)} Σᵢ Pᵢ(cosh 8sw + cᵢ sinh 8sw)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct GaussianPairLaw {
    strength: f64,
    coeff: [f64; 2],
    priors: [f64; 2],
}

impl GaussianPairLaw {
    fn mean_coeff(&self) -> f64 {
        self.priors[0] * self.coeff[0] + self.priors[1] * self.coeff[1]
    }

    fn posterior(&self, w: f64) -> (f64, f64) {
        let b = 8.0 * self.strength * w;
        let l: [f64; 2] = std::array::from_fn(|i| {
            if self.priors[i] > 0.0 {
                self.priors[i].ln() + ln_trace_exp(b, self.coeff[i])
            } else {
                f64::NEG_INFINITY
            }
        });
        let top = l[0].max(l[1]);
        if top == f64::NEG_INFINITY {
            return (self.priors[0], self.priors[1]);
        }
        let e0 = (l[0] - top).exp();
        let e1 = (l[1] - top).exp();
        let p1 = e0 / (e0 + e1);
        (p1, 1.0 - p1)
    }

    fn density(&self, w: f64) -> f64 {
        let s = self.strength;
        let b = 8.0 * s * w;
        // -4s(w² + 1) + |b| = -4s(|w| - 1)²
        let a = w.abs() - 1.0;
        let cs = if b >= 0.0 {
            self.mean_coeff()
        } else {
            -self.mean_coeff()
        };
        let tail = 0.5 * ((1.0 + cs) + (1.0 - cs) * (-2.0 * b.abs()).exp());
        (4.0 * s / PI).sqrt() * (-4.0 * s * a * a).exp() * tail
    }

    /// Component weights for means +1 and -1.
    fn weights(&self) -> [f64; 2] {
        let c = self.mean_coeff();
        [0.5 * (1.0 + c), 0.5 * (1.0 - c)]
    }

    fn sigma(&self) -> f64 {
        1.0 / (8.0 * self.strength).sqrt()
    }

    fn cdf(&self, w: f64) -> f64 {
        let [wp, wm] = self.weights();
        let k = (8.0 * self.strength).sqrt();
        wp * normal_cdf((w - 1.0) * k) + wm * normal_cdf((w + 1.0) * k)
    }

    fn support(&self) -> (f64, f64) {
        let h = TRUNCATION_SIGMAS * self.sigma();
        (-1.0 - h, 1.0 + h)
    }

    fn sample(&self, rng: &mut StreamRng) -> f64 {
        let [wp, _] = self.weights();
        let mean = if rng::uniform(rng) < wp { 1.0 } else { -1.0 };
        mean + self.sigma() * rng::standard_normal(rng)
    }

    /// P(P₁(t) ≤ p) under the pushforward of the outcome law.
    fn p1_cdf(&self, p: f64) -> f64 {
        if p < 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        let [c1, c2] = self.coeff;
        let [q1, q2] = self.priors;
        if c1 == c2 || q1 == 0.0 || q2 == 0.0 {
            // posterior never moves
            return if p >= q1 { 1.0 } else { 0.0 };
        }
        // P₁/P₂ = (q1/q2)(1 + c1 τ)/(1 + c2 τ) with τ = tanh(8sw)
        let r = (p / (1.0 - p)) * (q2 / q1);
        let tau = (r - 1.0) / (c1 - r * c2);
        let increasing = c1 > c2;
        let below = if tau <= -1.0 {
            0.0
        } else if tau >= 1.0 || !tau.is_finite() {
            1.0
        } else {
            self.cdf(tau.atanh() / (8.0 * self.strength))
        };
        if increasing { below } else { 1.0 - below }
    }
}

/// Which Pauli operator appears in the exponent of the no-feedback solution.
/// `X` is the physical one; `Z` exists only as a negative control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExponentAxis {
    #[default]
    X,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoFeedbackLaw {
    pub gamma: f64,
    pub t: f64,
    pub rho1: BlochState,
    pub rho2: BlochState,
    pub priors: [f64; 2],
    pub axis: ExponentAxis,
    law: GaussianPairLaw,
}

impl NoFeedbackLaw {
    pub fn new(ensemble: &CodingEnsemble, gamma: f64, t: f64) -> Result<Self> {
        Self::with_axis(ensemble, gamma, t, ExponentAxis::X)
    }

    pub fn with_axis(ensemble: &CodingEnsemble, gamma: f64, t: f64, axis: ExponentAxis) -> Result<Self> {
        if !(gamma > 0.0) || !(t >= 0.0) || !t.is_finite() {
            return Err(Error::domain(format!(
                "need gamma > 0 and finite t >= 0, got gamma = {gamma}, t = {t}"
            )));
        }
        let pick = |r: &BlochState| match axis {
            ExponentAxis::X => r.x,
            ExponentAxis::Z => r.z,
        };
        Ok(Self {
            gamma,
            t,
            rho1: ensemble.rho1,
            rho2: ensemble.rho2,
            priors: ensemble.priors(),
            axis,
            law: GaussianPairLaw {
                strength: gamma * t,
                coeff: [pick(&ensemble.rho1), pick(&ensemble.rho2)],
                priors: ensemble.priors(),
            },
        })
    }

    pub fn posterior_v(&self, v: f64) -> (f64, f64) {
        if self.t == 0.0 {
            return (self.priors[0], self.priors[1]);
        }
        self.law.posterior(v)
    }

    pub fn density_v(&self, v: f64) -> Result<f64> {
        if self.t <= 0.0 {
            return Err(Error::domain("density over v needs t > 0"));
        }
        Ok(self.law.density(v))
    }

    pub fn cdf_v(&self, v: f64) -> f64 {
        self.law.cdf(v)
    }

    /// Window holding all but ~1e-22 of the probability.
    pub fn support(&self) -> (f64, f64) {
        self.law.support()
    }

    pub fn sample_v(&self, rng: &mut StreamRng) -> f64 {
        self.law.sample(rng)
    }

    /// CDF of the receiver's P₁(t) over measurement outcomes.
    pub fn p1_cdf(&self, p: f64) -> f64 {
        self.law.p1_cdf(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackLaw {
    pub theta0: f64,
    pub gamma: f64,
    pub t: f64,
    pub priors: [f64; 2],
    pub big_gamma: f64,
    law: GaussianPairLaw,
}

impl FeedbackLaw {
    pub fn new(theta0: f64, gamma: f64, t: f64, p_plus: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_plus) {
            return Err(Error::domain(format!("prior {p_plus} outside [0, 1]")));
        }
        let big_gamma = gamma_integral(theta0, gamma, t)?;
        let priors = [p_plus, 1.0 - p_plus];
        Ok(Self {
            theta0,
            gamma,
            t,
            priors,
            big_gamma,
            law: GaussianPairLaw {
                strength: big_gamma,
                coeff: [1.0, -1.0],
                priors,
            },
        })
    }

    /// (P₊, P₋) = P±(0) e^{±8Γu} / Σ.
    pub fn posterior_u(&self, u: f64) -> (f64, f64) {
        if self.big_gamma == 0.0 {
            return (self.priors[0], self.priors[1]);
        }
        self.law.posterior(u)
    }

    /// √(4Γ/π) Σ± P±(0) e^{-4Γ(u ∓ 1)²}; the + preparation centres on u = +1.
    pub fn density_u(&self, u: f64) -> Result<f64> {
        if self.big_gamma <= 0.0 {
            return Err(Error::domain("density over u is degenerate at Γ = 0"));
        }
        Ok(self.law.density(u))
    }

    pub fn cdf_u(&self, u: f64) -> f64 {
        self.law.cdf(u)
    }

    pub fn support(&self) -> (f64, f64) {
        self.law.support()
    }

    pub fn sample_u(&self, rng: &mut StreamRng) -> f64 {
        self.law.sample(rng)
    }

    pub fn p1_cdf(&self, p: f64) -> f64 {
        self.law.p1_cdf(p)
    }
}

fn check_gamma_args(theta0: f64, gamma: f64, t: f64) -> Result<()> {
    if !(0.0..=FRAC_PI_2).contains(&theta0) {
        return Err(Error::domain(format!("theta0 = {theta0} outside [0, pi/2]")));
    }
    if !(gamma > 0.0) || !(t >= 0.0) {
        return Err(Error::domain(format!("need gamma > 0 and t >= 0, got {gamma}, {t}")));
    }
    Ok(())
}

/// Γ(t) = ∫₀ᵗ γ sin²θ(t') dt' = -(1/8) ln(cos²θ₀ + sin²θ₀ e^{-8γt}).
pub fn gamma_integral(theta0: f64, gamma: f64, t: f64) -> Result<f64> {
    check_gamma_args(theta0, gamma, t)?;
    if theta0 == FRAC_PI_2 {
        return Ok(gamma * t);
    }
    let (s, c) = theta0.sin_cos();
    let (s2, c2) = (s * s, c * c);
    let x = 8.0 * gamma * t;
    let ln_arg = if s2 * (-x).exp() >= c2 {
        -x + (s2 + c2 * x.exp()).ln()
    } else {
        (s2 * (-x).exp_m1()).ln_1p()
    };
    Ok(-ln_arg / 8.0)
}

/// Γ(∞) = -(1/4) ln cos θ₀; infinite at θ₀ = π/2.
pub fn gamma_integral_limit(theta0: f64) -> Result<f64> {
    check_gamma_args(theta0, 1.0, 0.0)?;
    Ok(-0.25 * theta0.cos().ln())
}

/// Half-angle of the coding pair under feedback: tanθ(t) = tanθ₀ e^{-4γt}.
pub fn coding_half_angle(theta0: f64, gamma: f64, t: f64) -> Result<f64> {
    check_gamma_args(theta0, gamma, t)?;
    let (s, c) = theta0.sin_cos();
    Ok((s * (-4.0 * gamma * t).exp()).atan2(c))
}

/// γ_c(t) = γ sin²θ(t), the classical filter's instantaneous strength.
pub fn classical_strength(theta0: f64, gamma: f64, t: f64) -> Result<f64> {
    let th = coding_half_angle(theta0, gamma, t)?;
    Ok(gamma * th.sin().powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::coding_states;
    use crate::quad::integrate;
    use crate::stats::NeumaierSum;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

    fn integral<F: Fn(f64) -> f64>(f: F, (lo, hi): (f64, f64)) -> f64 {
        integrate(f, lo, hi, &[-1.0, 0.0, 1.0], 16, 1e-11).unwrap().value
    }

    #[test]
    fn ln_trace_exp_matches_direct_form() {
        for &b in &[-3.0, -0.2, 0.0, 0.7, 5.0] {
            for &c in &[-1.0, -0.3, 0.0, 0.8, 1.0] {
                let direct = (f64::cosh(b) + c * f64::sinh(b)).ln();
                assert_abs_diff_eq!(ln_trace_exp(b, c), direct, epsilon = 1e-11);
            }
        }
        // no overflow far out
        assert!(ln_trace_exp(2000.0, 0.5).is_finite());
    }

    #[test]
    fn posterior_v_examples() {
        let e = coding_states(FRAC_PI_4).unwrap().with_priors(0.3).unwrap();
        let law = NoFeedbackLaw::new(&e, 1.0, 0.0).unwrap();
        assert_eq!(law.posterior_v(2.5), (0.3, 0.7));

        let e = coding_states(FRAC_PI_2).unwrap();
        let law = NoFeedbackLaw::new(&e, 1.0, 1.0).unwrap();
        let (p1, p2) = law.posterior_v(50.0);
        assert_abs_diff_eq!(p1, 1.0, epsilon = 1e-15);
        assert_eq!(p1 + p2, 1.0);
        let (p1, _) = law.posterior_v(1e6);
        assert_eq!(p1, 1.0);
    }

    #[test]
    fn posterior_v_matches_matrix_exponential() {
        use crate::density::{expectation, from_bloch, identity, sigma_x};
        use num_complex::Complex64;
        let e = coding_states(0.7).unwrap().with_priors(0.4).unwrap();
        let (gamma, t, v): (f64, f64, f64) = (1.3, 0.6, 0.25);
        let b = 8.0 * gamma * t * v;
        let expo = identity() * Complex64::new(b.cosh(), 0.0) + sigma_x() * Complex64::new(b.sinh(), 0.0);
        let w1 = expectation(&expo, &from_bloch(&e.rho1)) * e.p1;
        let w2 = expectation(&expo, &from_bloch(&e.rho2)) * e.p2;
        let (p1, _) = NoFeedbackLaw::new(&e, gamma, t).unwrap().posterior_v(v);
        assert_abs_diff_eq!(p1, w1 / (w1 + w2), epsilon = 1e-14);
    }

    #[test]
    fn density_v_normalisation() {
        for st in [0.1, 1.0, 5.0] {
            let e = coding_states(FRAC_PI_8).unwrap();
            let law = NoFeedbackLaw::new(&e, 1.0, st).unwrap();
            let total = integral(|v| law.density_v(v).unwrap(), law.support());
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        }
        let e = coding_states(0.3).unwrap();
        assert!(NoFeedbackLaw::new(&e, 1.0, 0.0).unwrap().density_v(0.1).is_err());
    }

    #[test]
    fn density_v_is_two_gaussian_mixture() {
        // maximally mixed ρ(0) (θ = 0... mixture x = 0) → weights ½, means ±1, variance 1/(8γt)
        let e = coding_states(FRAC_PI_2).unwrap();
        let (gamma, t) = (1.0, 1.0);
        let law = NoFeedbackLaw::new(&e, gamma, t).unwrap();
        let var = 1.0 / (8.0 * gamma * t);
        let g = |v: f64, m: f64| (-(v - m).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        for v in [-2.0, -1.0, -0.3, 0.0, 0.4, 1.2] {
            assert_abs_diff_eq!(
                law.density_v(v).unwrap(),
                0.5 * g(v, 1.0) + 0.5 * g(v, -1.0),
                epsilon = 1e-14
            );
        }
        // orthogonal states reduce to the classical law with Γ = γt
        let fb = FeedbackLaw::new(FRAC_PI_2, gamma, t, 0.5).unwrap();
        assert_abs_diff_eq!(fb.big_gamma, gamma * t, epsilon = 1e-15);
        for v in [-1.5, 0.2, 0.9] {
            assert_abs_diff_eq!(law.density_v(v).unwrap(), fb.density_u(v).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn total_probability_over_outcomes() {
        let e = coding_states(0.9).unwrap().with_priors(0.27).unwrap();
        let law = NoFeedbackLaw::new(&e, 1.0, 0.8).unwrap();
        let avg = integral(|v| law.posterior_v(v).0 * law.density_v(v).unwrap(), law.support());
        assert_abs_diff_eq!(avg, 0.27, epsilon = 1e-8);

        let fb = FeedbackLaw::new(0.6, 1.0, 0.8, 0.27).unwrap();
        let avg = integral(|u| fb.posterior_u(u).0 * fb.density_u(u).unwrap(), fb.support());
        assert_abs_diff_eq!(avg, 0.27, epsilon = 1e-8);
    }

    #[test]
    fn gamma_integral_examples() {
        assert_eq!(gamma_integral(0.7, 1.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(gamma_integral(FRAC_PI_2, 2.0, 0.3).unwrap(), 0.6, epsilon = 1e-15);
        let near = gamma_integral(FRAC_PI_2 - 1e-9, 2.0, 0.3).unwrap();
        assert_abs_diff_eq!(near, 0.6, epsilon = 1e-9);
        // (1/8) ln 2
        assert_abs_diff_eq!(
            gamma_integral(FRAC_PI_4, 1.0, 60.0).unwrap(),
            0.08664339756999316,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            gamma_integral_limit(FRAC_PI_4).unwrap(),
            0.08664339756999316,
            epsilon = 1e-15
        );
        assert!(gamma_integral(1.7, 1.0, 1.0).is_err());
        assert!(gamma_integral(0.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn gamma_integral_derivative_is_classical_strength() {
        let (theta0, gamma) = (0.6, 1.7);
        for t in [0.0, 0.05, 0.3, 1.0] {
            let h = 1e-6;
            let lo = if t == 0.0 { 0.0 } else { t - h };
            let fd = (gamma_integral(theta0, gamma, t + h).unwrap() - gamma_integral(theta0, gamma, lo).unwrap())
                / (t + h - lo);
            let exact = if t == 0.0 {
                classical_strength(theta0, gamma, h / 2.0).unwrap()
            } else {
                classical_strength(theta0, gamma, t).unwrap()
            };
            assert_abs_diff_eq!(fd, exact, epsilon = 1e-6);
        }
    }

    #[test]
    fn gamma_integral_is_nondecreasing() {
        let mut prev = 0.0;
        for i in 0..200 {
            let g = gamma_integral(FRAC_PI_8, 1.0, i as f64 * 0.05).unwrap();
            assert!(g >= prev);
            prev = g;
        }
        assert!(prev <= gamma_integral_limit(FRAC_PI_8).unwrap());
    }

    #[test]
    fn posterior_u_examples() {
        let law = FeedbackLaw::new(0.0, 1.0, 1.0, 0.3).unwrap();
        assert_eq!(law.big_gamma, 0.0);
        assert_eq!(law.posterior_u(1.7), (0.3, 0.7));
        assert!(law.density_u(0.0).is_err());

        let law = FeedbackLaw::new(0.5, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(law.posterior_u(0.0), (0.5, 0.5));

        // Γ = 0.25, u = 1: (e², e⁻²)/(e² + e⁻²)
        let mut law = FeedbackLaw::new(FRAC_PI_2, 1.0, 0.25, 0.5).unwrap();
        law.law.strength = 0.25;
        let (pp, pm) = law.posterior_u(1.0);
        assert_abs_diff_eq!(pp, 0.9820137900379085, epsilon = 1e-15);
        assert_abs_diff_eq!(pm, 0.01798620996209156, epsilon = 1e-15);
    }

    #[test]
    fn density_u_examples() {
        for target in [0.01, 0.1, 1.0] {
            // θ₀ = π/2 gives Γ = γt
            let law = FeedbackLaw::new(FRAC_PI_2, 1.0, target, 0.5).unwrap();
            assert_abs_diff_eq!(
                integral(|u| law.density_u(u).unwrap(), law.support()),
                1.0,
                epsilon = 1e-8
            );
        }
        // one-component limit: mean +1 for the + preparation, variance 1/(8Γ)
        let law = FeedbackLaw::new(FRAC_PI_2, 1.0, 0.5, 1.0).unwrap();
        let mean = integral(|u| u * law.density_u(u).unwrap(), law.support());
        let var = integral(|u| (u - 1.0).powi(2) * law.density_u(u).unwrap(), law.support());
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(var, 1.0 / 4.0, epsilon = 1e-8);

        let law = FeedbackLaw::new(FRAC_PI_8, 1.0, 200.0, 0.5).unwrap();
        assert_abs_diff_eq!(law.big_gamma, 0.019793397977546867, epsilon = 1e-15);
        assert_abs_diff_eq!(law.law.sigma(), 2.513013537012466, epsilon = 1e-12);
    }

    #[test]
    fn posteriors_are_monotone_in_outcome() {
        let e = coding_states(0.8).unwrap().with_priors(0.6).unwrap();
        let nf = NoFeedbackLaw::new(&e, 1.0, 0.7).unwrap();
        let fb = FeedbackLaw::new(0.8, 1.0, 0.7, 0.6).unwrap();
        let grid: Vec<f64> = (0..400).map(|i| -4.0 + 0.02 * i as f64).collect();
        for w in grid.windows(2) {
            assert!(nf.posterior_v(w[1]).0 >= nf.posterior_v(w[0]).0);
            assert!(fb.posterior_u(w[1]).0 >= fb.posterior_u(w[0]).0);
        }
    }

    #[test]
    fn pushforward_cdf_matches_sampling() {
        let e = coding_states(FRAC_PI_4).unwrap();
        let law = NoFeedbackLaw::new(&e, 1.0, 0.5).unwrap();
        let mut rng = rng::stream(99, 0);
        let samples: Vec<f64> = (0..20_000).map(|_| law.posterior_v(law.sample_v(&mut rng)).0).collect();
        let d = crate::stats::ks_statistic(&samples, |p| law.p1_cdf(p));
        assert!(d < crate::stats::ks_critical_one_sample(samples.len(), 0.01), "D = {d}");

        let fb = FeedbackLaw::new(FRAC_PI_8, 1.0, 1.0, 0.3).unwrap();
        let samples: Vec<f64> = (0..20_000).map(|_| fb.posterior_u(fb.sample_u(&mut rng)).0).collect();
        let d = crate::stats::ks_statistic(&samples, |p| fb.p1_cdf(p));
        assert!(d < crate::stats::ks_critical_one_sample(samples.len(), 0.01), "D = {d}");
        let mean: NeumaierSum = samples.iter().copied().collect();
        assert!((mean.value() / samples.len() as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn sigma_z_exponent_carries_no_information() {
        let e = coding_states(FRAC_PI_4).unwrap();
        let law = NoFeedbackLaw::with_axis(&e, 1.0, 0.5, ExponentAxis::Z).unwrap();
        assert_abs_diff_eq!(law.posterior_v(0.7).0, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn half_angle_decays_at_four_gamma() {
        let th = coding_half_angle(FRAC_PI_4, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(th.tan(), (-4.0f64).exp(), epsilon = 1e-15);
    }
}

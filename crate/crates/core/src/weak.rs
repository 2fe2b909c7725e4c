//! Two-outcome weak σx measurements Ω± = aI ± bσx and their repetition.
//!
//! `a = (√k + √(1-k))/2`, `b = (√k - √(1-k))/2`. Repeating the measurement
//! many times converges to the projective σx measurement; with
//! `k = 1/2 - √(ε dt)` it becomes the continuous measurement of strength
//! `γ = ε / 2` (see [`calibrate_epsilon`]).

use crate::bloch::{BlochState, CodingEnsemble, binary_entropy, shannon_entropy};
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{self, StreamRng};
use crate::stats::NeumaierSum;

/// Largest outcome tree we are willing to enumerate (2^25 leaves).
pub const MAX_TREE_STEPS: usize = 25;

/// ε/γ obtained from [`calibrate_epsilon`]; the fit is dt-independent.
pub const EPSILON_PER_GAMMA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakMeasurement {
    pub k: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }
}

impl WeakMeasurement {
    pub fn new(k: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::domain(format!("k = {k} outside [0, 1]")));
        }
        let (r, s) = (k.sqrt(), (1.0 - k).sqrt());
        Ok(Self {
            k,
            a: 0.5 * (r + s),
            b: 0.5 * (r - s),
        })
    }

    /// |Ω₊†Ω₊ + Ω₋†Ω₋ - I| = |2(a² + b²) - 1|.
    pub fn completeness_defect(&self) -> f64 {
        (2.0 * (self.a * self.a + self.b * self.b) - 1.0).abs()
    }

    /// Tr[Ω†Ω ρ] for a state with σx expectation `x`.
    #[inline]
    pub fn outcome_probability(&self, x: f64, outcome: Outcome) -> f64 {
        self.a * self.a + self.b * self.b + 2.0 * self.a * self.b * outcome.sign() * x
    }
}

/// Same as `WeakMeasurement::new`.
pub fn weak_operators(k: f64) -> Result<WeakMeasurement> {
    WeakMeasurement::new(k)
}

/// Applies Ω± to `state`, returning the normalised post-measurement state and
/// the outcome probability.
///
/// Ω(I, σx, σy, σz)Ω = ((a²+b²)I + 2abs σx, (a²+b²)σx + 2abs I, (a²-b²)σy, (a²-b²)σz).
pub fn apply_weak(state: BlochState, m: &WeakMeasurement, outcome: Outcome) -> (BlochState, f64) {
    let s = outcome.sign();
    let sum_sq = m.a * m.a + m.b * m.b;
    let cross = 2.0 * m.a * m.b * s;
    let diff_sq = m.a * m.a - m.b * m.b;
    let prob = sum_sq + cross * state.x;
    if prob <= 0.0 {
        return (state, 0.0);
    }
    let post = BlochState::new(
        (cross + sum_sq * state.x) / prob,
        diff_sq * state.y / prob,
        diff_sq * state.z / prob,
    );
    (post, prob)
}

/// One leaf of the outcome tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    /// Probability of the whole outcome string.
    pub probability: f64,
    /// Receiver's posterior over the two preparations.
    pub posterior: [f64; 2],
}

#[derive(Clone, Copy)]
struct Node {
    weights: [f64; 2],
    states: [BlochState; 2],
}

impl Node {
    fn root(e: &CodingEnsemble) -> Self {
        Self {
            weights: [e.p1, e.p2],
            states: [e.rho1, e.rho2],
        }
    }

    fn child(&self, m: &WeakMeasurement, outcome: Outcome) -> Self {
        let (s0, l0) = apply_weak(self.states[0], m, outcome);
        let (s1, l1) = apply_weak(self.states[1], m, outcome);
        Self {
            weights: [self.weights[0] * l0, self.weights[1] * l1],
            states: [s0, s1],
        }
    }

    fn branch(&self) -> Branch {
        let p = self.weights[0] + self.weights[1];
        let posterior = if p > 0.0 {
            [self.weights[0] / p, self.weights[1] / p]
        } else {
            [0.5, 0.5]
        };
        Branch {
            probability: p,
            posterior,
        }
    }
}

fn outcome_from_bit(bits: usize, level: usize) -> Outcome {
    if bits >> level & 1 == 0 {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

fn visit<F: FnMut(Branch) + ?Sized>(node: Node, m: &WeakMeasurement, remaining: usize, sink: &mut F) {
    if remaining == 0 {
        sink(node.branch());
        return;
    }
    for outcome in [Outcome::Plus, Outcome::Minus] {
        visit(node.child(m, outcome), m, remaining - 1, sink);
    }
}

fn check_tree_size(n_steps: usize) -> Result<()> {
    if n_steps > MAX_TREE_STEPS {
        return Err(Error::Resource(format!(
            "outcome tree with {n_steps} steps exceeds the {MAX_TREE_STEPS}-step cap"
        )));
    }
    Ok(())
}

/// Walks every leaf in outcome-string order. The top levels are split into
/// independent subtrees; `per_subtree` folds each one and the results come
/// back in prefix order.
fn fold_subtrees<T, F>(ensemble: &CodingEnsemble, m: &WeakMeasurement, n_steps: usize, per_subtree: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut dyn FnMut(&mut dyn FnMut(Branch))) -> T + Sync + Send,
{
    let split = n_steps.min(6);
    let root = Node::root(ensemble);
    exec::map_indexed(1usize << split, |prefix| {
        let mut node = root;
        for level in (0..split).rev() {
            node = node.child(m, outcome_from_bit(prefix, level));
        }
        per_subtree(&mut |sink| visit(node, m, n_steps - split, sink))
    })
}

/// Exact joint distribution over all 2^n outcome strings.
pub fn enumerate_outcome_tree(ensemble: &CodingEnsemble, k: f64, n_steps: usize) -> Result<Vec<Branch>> {
    check_tree_size(n_steps)?;
    let m = WeakMeasurement::new(k)?;
    let parts = fold_subtrees(ensemble, &m, n_steps, |walk| {
        let mut leaves = Vec::new();
        walk(&mut |b| leaves.push(b));
        leaves
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Expected posterior entropy over the exact tree, with compensated summation.
pub fn expected_posterior_entropy(ensemble: &CodingEnsemble, k: f64, n_steps: usize) -> Result<f64> {
    check_tree_size(n_steps)?;
    let m = WeakMeasurement::new(k)?;
    let parts = fold_subtrees(ensemble, &m, n_steps, |walk| {
        let mut acc = NeumaierSum::new();
        walk(&mut |b| acc.add(b.probability * binary_entropy(b.posterior[0])));
        acc
    });
    let mut total = NeumaierSum::new();
    for p in &parts {
        total.merge(p);
    }
    Ok(total.value())
}

/// Mutual information H(priors) - E[H(posterior)] after `n_steps` repetitions.
pub fn weak_sequence_mi(ensemble: &CodingEnsemble, k: f64, n_steps: usize) -> Result<f64> {
    let prior = shannon_entropy(&ensemble.priors())?;
    Ok(prior - expected_posterior_entropy(ensemble, k, n_steps)?)
}

/// Samples one outcome string of length `n_steps` and returns the posterior.
pub fn sample_weak_posterior(
    ensemble: &CodingEnsemble,
    m: &WeakMeasurement,
    n_steps: usize,
    rng: &mut StreamRng,
) -> [f64; 2] {
    let mut node = Node::root(ensemble);
    for _ in 0..n_steps {
        let total = node.weights[0] + node.weights[1];
        let p_plus = (node.weights[0] * m.outcome_probability(node.states[0].x, Outcome::Plus)
            + node.weights[1] * m.outcome_probability(node.states[1].x, Outcome::Plus))
            / total;
        let outcome = if rng::uniform(rng) < p_plus {
            Outcome::Plus
        } else {
            Outcome::Minus
        };
        node = node.child(m, outcome);
        // keep weights O(1); only their ratio matters
        let s = node.weights[0] + node.weights[1];
        node.weights = [node.weights[0] / s, node.weights[1] / s];
    }
    node.branch().posterior
}

/// Step size bookkeeping for the discretised continuous measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumSchedule {
    pub epsilon: f64,
    pub dt: f64,
}

impl ContinuumSchedule {
    pub fn new(epsilon: f64, dt: f64) -> Result<Self> {
        if !(epsilon > 0.0 && dt > 0.0) {
            return Err(Error::domain("epsilon and dt must be positive"));
        }
        if epsilon * dt >= 0.25 {
            return Err(Error::domain(format!(
                "epsilon * dt = {} must be below 1/4",
                epsilon * dt
            )));
        }
        Ok(Self { epsilon, dt })
    }

    /// Schedule matching a continuous measurement of strength `gamma`.
    pub fn for_gamma(gamma: f64, dt: f64) -> Result<Self> {
        Self::new(EPSILON_PER_GAMMA * gamma, dt)
    }

    pub fn k(&self) -> f64 {
        0.5 - (self.epsilon * self.dt).sqrt()
    }

    pub fn measurement(&self) -> WeakMeasurement {
        WeakMeasurement::new(self.k()).expect("k lies in (0, 1/2) by construction")
    }
}

/// Exact one-step variance of ⟨σx⟩ under the weak measurement, for a pure
/// state in the x–z plane with σx expectation `x`.
pub fn one_step_x_variance(m: &WeakMeasurement, x: f64) -> f64 {
    let state = BlochState::new(x, 0.0, (1.0 - x * x).max(0.0).sqrt());
    [Outcome::Plus, Outcome::Minus]
        .into_iter()
        .map(|o| {
            let (post, p) = apply_weak(state, m, o);
            p * (post.x - x).powi(2)
        })
        .sum()
}

/// Finds ε such that the weak step's x-variance equals the continuous
/// measurement's 8γ(1 - x²)² dt, and returns ε/γ.
pub fn calibrate_epsilon(gamma: f64, dt: f64, probe_x: f64) -> Result<f64> {
    if !(gamma > 0.0 && dt > 0.0) || probe_x.abs() >= 1.0 {
        return Err(Error::domain("calibration needs gamma, dt > 0 and |x| < 1"));
    }
    let target = 8.0 * gamma * (1.0 - probe_x * probe_x).powi(2) * dt;
    let variance = |eps: f64| {
        let m = ContinuumSchedule { epsilon: eps, dt }.measurement();
        one_step_x_variance(&m, probe_x)
    };
    let (mut lo, mut hi) = (0.0, 0.25 / dt * (1.0 - 1e-12));
    if variance(hi) < target {
        return Err(Error::numeric("calibration", "target variance unreachable"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if variance(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) / gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{coding_states, optimal_mutual_info};
    use crate::stats::Moments;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, LN_2};

    #[test]
    fn operator_coefficients() {
        let m = weak_operators(0.5).unwrap();
        assert_abs_diff_eq!(m.a, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_eq!(m.b, 0.0);

        let m = weak_operators(1.0).unwrap();
        assert_eq!((m.a, m.b), (0.5, 0.5));
        let m = weak_operators(0.0).unwrap();
        assert_eq!((m.a, m.b), (0.5, -0.5));

        let m = weak_operators(0.9).unwrap();
        assert_abs_diff_eq!(m.a, 0.6324555320336759, epsilon = 1e-15);
        assert_abs_diff_eq!(m.b, 0.31622776601683794, epsilon = 1e-15);

        assert!(weak_operators(-0.01).is_err());
        assert!(weak_operators(1.01).is_err());
    }

    #[test]
    fn completeness_on_grid() {
        for i in 0..=100 {
            let m = weak_operators(i as f64 / 100.0).unwrap();
            assert!(m.completeness_defect() <= 1e-14, "k = {}", m.k);
        }
    }

    #[test]
    fn apply_weak_examples() {
        let m = weak_operators(1.0).unwrap();
        let (post, p) = apply_weak(BlochState::new(1.0, 0.0, 0.0), &m, Outcome::Plus);
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-15);
        assert!(post.max_abs_diff(&BlochState::new(1.0, 0.0, 0.0)) < 1e-15);

        for k in [0.1, 0.3, 0.9] {
            let m = weak_operators(k).unwrap();
            for o in [Outcome::Plus, Outcome::Minus] {
                let (_, p) = apply_weak(BlochState::new(0.0, 0.0, 1.0), &m, o);
                assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
            }
        }

        let m = weak_operators(0.9).unwrap();
        let (post, p) = apply_weak(BlochState::new(FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2), &m, Outcome::Plus);
        assert_abs_diff_eq!(p, 0.782_842_712_474_619, epsilon = 1e-12);
        assert!(post.is_pure());
    }

    #[test]
    fn apply_weak_agrees_with_matrix_route() {
        use crate::density::{from_bloch, identity, sigma_x, to_bloch};
        use num_complex::Complex64;
        let m = weak_operators(0.73).unwrap();
        let s = BlochState::new(0.3, 0.1, -0.6);
        for o in [Outcome::Plus, Outcome::Minus] {
            let omega = identity() * Complex64::new(m.a, 0.0) + sigma_x() * Complex64::new(o.sign() * m.b, 0.0);
            let un = omega * from_bloch(&s) * omega.adjoint();
            let p = un.trace().re;
            let post = to_bloch(&(un / Complex64::new(p, 0.0)));
            let (bloch_post, bloch_p) = apply_weak(s, &m, o);
            assert_abs_diff_eq!(p, bloch_p, epsilon = 1e-15);
            assert!(post.max_abs_diff(&bloch_post) < 1e-14);
        }
    }

    #[test]
    fn tree_examples() {
        let e = coding_states(FRAC_PI_4).unwrap();
        let leaves = enumerate_outcome_tree(&e, 0.8, 0).unwrap();
        assert_eq!(leaves.len(), 1);
        assert_eq!(leaves[0].probability, 1.0);
        assert_eq!(leaves[0].posterior, [0.5, 0.5]);

        let e = coding_states(FRAC_PI_2).unwrap();
        let leaves = enumerate_outcome_tree(&e, 1.0, 1).unwrap();
        assert_eq!(leaves.len(), 2);
        assert_abs_diff_eq!(leaves[0].probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(leaves[0].posterior[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(leaves[1].posterior[1], 1.0, epsilon = 1e-15);

        assert!(matches!(enumerate_outcome_tree(&e, 0.8, 26), Err(Error::Resource(_))));
    }

    #[test]
    fn tree_probabilities_sum_to_one() {
        let e = coding_states(0.4).unwrap().with_priors(0.3).unwrap();
        let leaves = enumerate_outcome_tree(&e, 0.62, 14).unwrap();
        assert_eq!(leaves.len(), 1 << 14);
        let total: NeumaierSum = leaves.iter().map(|b| b.probability).collect();
        assert!((total.value() - 1.0).abs() < 1e-10);
        // Bayes consistency: posteriors average back to the prior
        let p1: NeumaierSum = leaves.iter().map(|b| b.probability * b.posterior[0]).collect();
        assert!((p1.value() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn sequence_information_examples() {
        let e = coding_states(FRAC_PI_4).unwrap();
        assert_abs_diff_eq!(weak_sequence_mi(&e, 0.8, 0).unwrap(), 0.0, epsilon = 1e-15);
        let e2 = coding_states(FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(weak_sequence_mi(&e2, 1.0, 1).unwrap(), LN_2, epsilon = 1e-15);

        let target = optimal_mutual_info(FRAC_PI_4).unwrap();
        let mi20 = weak_sequence_mi(&e, 0.8, 20).unwrap();
        assert!(mi20 < target);
        assert!(target - mi20 < 0.01, "gap {}", target - mi20);
    }

    #[test]
    fn information_gain_per_step_shrinks() {
        let e = coding_states(FRAC_PI_4).unwrap();
        let mi: Vec<f64> = (0..=12).map(|n| weak_sequence_mi(&e, 0.8, n).unwrap()).collect();
        let gains: Vec<f64> = mi.windows(2).map(|w| w[1] - w[0]).collect();
        for g in gains.windows(2) {
            assert!(g[0] >= 0.0);
            assert!(g[1] <= g[0] + 1e-14, "{gains:?}");
        }
    }

    #[test]
    fn calibration_constant_is_dt_independent() {
        for dt in [1e-5, 1e-4, 1e-3] {
            for x in [0.0, 0.3] {
                let ratio = calibrate_epsilon(1.0, dt, x).unwrap();
                assert!((ratio - EPSILON_PER_GAMMA).abs() < 2e-3, "dt={dt} x={x} ratio={ratio}");
            }
        }
        assert!((calibrate_epsilon(1.0, 1e-4, 0.0).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn schedule_validation() {
        assert!(ContinuumSchedule::new(300.0, 1e-3).is_err());
        let s = ContinuumSchedule::for_gamma(1.0, 1e-4).unwrap();
        assert_abs_diff_eq!(s.k(), 0.5 - (2e-4f64).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn one_step_bayes_increment_moments_match_continuum() {
        // Bayes increment of P1 after one weak step versus √(8γ)(x1 - x̄)P1 dW
        let gamma = 1.0;
        let e = coding_states(0.6).unwrap().with_priors(0.35).unwrap();
        let xbar = e.p1 * e.rho1.x + e.p2 * e.rho2.x;
        for dt in [1e-3, 1e-4] {
            let m = ContinuumSchedule::for_gamma(gamma, dt).unwrap().measurement();
            let node = Node::root(&e);
            let (mut mean, mut second) = (0.0, 0.0);
            for o in [Outcome::Plus, Outcome::Minus] {
                let child = node.child(&m, o);
                let b = child.branch();
                let dp = b.posterior[0] - e.p1;
                mean += b.probability * dp;
                second += b.probability * dp * dp;
            }
            let expected = 8.0 * gamma * (e.rho1.x - xbar).powi(2) * e.p1 * e.p1 * dt;
            assert!(mean.abs() < 1e-15);
            assert!(
                (second - expected).abs() < 10.0 * expected * dt,
                "dt={dt}: {second} vs {expected}"
            );
        }
    }

    #[test]
    fn sampler_reproduces_prior_on_average() {
        let e = coding_states(FRAC_PI_4).unwrap();
        let m = weak_operators(0.8).unwrap();
        let mut rng = rng::stream(5, 0);
        let mom: Moments = (0..4000)
            .map(|_| sample_weak_posterior(&e, &m, 6, &mut rng)[0])
            .collect();
        assert!((mom.mean() - 0.5).abs() < 4.0 * mom.std_error());
    }
}

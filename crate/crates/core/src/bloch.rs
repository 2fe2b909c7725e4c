//! Two-level-system primitives in Bloch-vector form.
//!
//! A qubit density matrix is written ρ = ½(I + xσx + yσy + zσz). All dynamics in
//! this crate stay in the x–z plane; `y` is carried so rotations and the
//! density-matrix cross-checks have somewhere to put it.

use std::f64::consts::{FRAC_PI_2, LN_2};

use crate::error::{Error, Result};

/// Slack allowed on the Bloch-ball constraint.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochState {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// State in the x–z plane at angle `theta` from the +z axis, measured towards +x.
    pub fn from_xz_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(s, 0.0, c)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_physical(&self) -> bool {
        self.norm() <= 1.0 + NORM_TOL
    }

    pub fn is_pure(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOL
    }

    /// Rescales onto the unit sphere. The zero vector is returned unchanged.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == 0.0 { self } else { self.scale(1.0 / n) }
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

impl std::ops::Add for BlochState {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        Self::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }
}

impl std::ops::Sub for BlochState {
    type Output = Self;

    fn sub(self, other: Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }
}

/// The two coding states together with the sender's priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodingEnsemble {
    pub theta: f64,
    pub rho1: BlochState,
    pub rho2: BlochState,
    pub p1: f64,
    pub p2: f64,
}

impl CodingEnsemble {
    /// Replaces the priors. `p1` must lie in [0, 1]; `p2 = 1 - p1`.
    pub fn with_priors(mut self, p1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::domain(format!("prior p1 = {p1} outside [0, 1]")));
        }
        self.p1 = p1;
        self.p2 = 1.0 - p1;
        Ok(self)
    }

    pub fn priors(&self) -> [f64; 2] {
        [self.p1, self.p2]
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::domain(format!("theta = {theta} outside [0, pi/2]")));
    }
    Ok(())
}

/// Symmetric pair (±sinθ, 0, cosθ) with equal priors.
pub fn coding_states(theta: f64) -> Result<CodingEnsemble> {
    check_theta(theta)?;
    let (s, c) = theta.sin_cos();
    Ok(CodingEnsemble {
        theta,
        rho1: BlochState::new(s, 0.0, c),
        rho2: BlochState::new(-s, 0.0, c),
        p1: 0.5,
        p2: 0.5,
    })
}

/// Shannon entropy in nats, with 0 ln 0 = 0.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    if let Some(bad) = p.iter().find(|&&v| !(v >= 0.0)) {
        return Err(Error::domain(format!("negative or NaN probability {bad}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("probabilities sum to {total}")));
    }
    Ok(p.iter().map(|&v| entropy_term(v)).sum())
}

#[inline]
pub(crate) fn entropy_term(p: f64) -> f64 {
    if p > 0.0 { -p * p.ln() } else { 0.0 }
}

/// Binary entropy H(p, 1 - p) without validation, for hot loops.
#[inline]
pub fn binary_entropy(p: f64) -> f64 {
    entropy_term(p) + entropy_term(1.0 - p)
}

/// Mutual information of the projective σx measurement on the equal-prior coding pair.
pub fn optimal_mutual_info(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let s = theta.sin();
    let hi = 0.5 + 0.5 * s;
    let lo = 0.5 - 0.5 * s;
    Ok(LN_2 - entropy_term(hi) - entropy_term(lo))
}

/// Rotation in the x–z plane: (x, z) -> (x cosφ - z sinφ, x sinφ + z cosφ).
///
/// A state at angle α from +z ends up at α - φ.
pub fn rotate_xz(state: BlochState, phi: f64) -> BlochState {
    let (s, c) = phi.sin_cos();
    BlochState::new(state.x * c - state.z * s, state.y, state.x * s + state.z * c)
}

pub fn mixture(ensemble: &CodingEnsemble) -> BlochState {
    ensemble.rho1.scale(ensemble.p1) + ensemble.rho2.scale(ensemble.p2)
}

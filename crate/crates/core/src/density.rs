//! 2×2 density-matrix representation, kept as an independent route for
//! checking the Bloch-form equations.

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::bloch::BlochState;

pub type Operator = Matrix2<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity() -> Operator {
    Operator::identity()
}

pub fn sigma_x() -> Operator {
    Operator::new(c(0.0), c(1.0), c(1.0), c(0.0))
}

pub fn sigma_y() -> Operator {
    Operator::new(c(0.0), Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), c(0.0))
}

pub fn sigma_z() -> Operator {
    Operator::new(c(1.0), c(0.0), c(0.0), c(-1.0))
}

pub fn from_bloch(s: &BlochState) -> Operator {
    (identity() + sigma_x() * c(s.x) + sigma_y() * c(s.y) + sigma_z() * c(s.z)) * c(0.5)
}

pub fn expectation(op: &Operator, rho: &Operator) -> f64 {
    (op * rho).trace().re
}

pub fn to_bloch(rho: &Operator) -> BlochState {
    BlochState::new(
        expectation(&sigma_x(), rho),
        expectation(&sigma_y(), rho),
        expectation(&sigma_z(), rho),
    )
}

fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

/// dρ = -γ[σx,[σx,ρ]]dt + √(2γ)(σxρ + ρσx - 2⟨σx⟩ρ)dW, evaluated on matrices.
pub fn sme_increment(rho: &Operator, dw: f64, dt: f64, gamma: f64) -> Operator {
    let sx = sigma_x();
    let mean = expectation(&sx, rho);
    let dephasing = commutator(&sx, &commutator(&sx, rho)) * c(-gamma * dt);
    let innovation = (sx * rho + rho * sx - rho * c(2.0 * mean)) * c((2.0 * gamma).sqrt() * dw);
    dephasing + innovation
}

/// Conditional coding-state increment driven by the shared record, in matrix form.
pub fn coding_state_increment(rho_i: &Operator, rho: &Operator, dw: f64, dt: f64, gamma: f64) -> Operator {
    let sx = sigma_x();
    let xi = expectation(&sx, rho_i);
    let xbar = expectation(&sx, rho);
    let dw_i = dw + (8.0 * gamma).sqrt() * (xbar - xi) * dt;
    sme_increment(rho_i, dw_i, dt, gamma)
}

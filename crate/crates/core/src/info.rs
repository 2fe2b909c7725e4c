//! Mutual information versus measurement time, the pipelined transmission
//! rate, and the rate enhancement delivered by feedback.

use std::cell::RefCell;
use std::f64::consts::LN_2;

use crate::bloch::{binary_entropy, coding_states};
use crate::closed_form::{FeedbackLaw, NoFeedbackLaw, gamma_integral};
use crate::error::{Error, Result};
use crate::exec;
use crate::quad;
use crate::search::golden_section_max;
use crate::stats::{Moments, jackknife_mean_std_error};

/// Absolute tolerance of every mutual-information quadrature.
pub const QUAD_TOL: f64 = 1e-8;
/// Initial panels per breakpoint interval.
const INITIAL_PANELS: usize = 8;
/// Upper end of the measurement-time search, in units of 1/γ.
pub const T_MEAS_CEILING: f64 = 50.0;
/// Relative tolerance of the measurement-time search.
pub const SEARCH_REL_TOL: f64 = 1e-6;
/// Minimum Monte Carlo sample count for [`mutual_info_mc`].
pub const MIN_MC_SAMPLES: usize = 100;

/// ln 2 - ∫ H(P₁(w), P₂(w)) p(w) dw, integrated as ∫ (ln 2 - H) p dw.
fn equal_prior_information<P, D>(posterior: P, density: D, support: (f64, f64)) -> Result<f64>
where
    P: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let q = quad::integrate(
        |w| (LN_2 - binary_entropy(posterior(w))) * density(w),
        support.0,
        support.1,
        &[-1.0, 0.0, 1.0],
        INITIAL_PANELS,
        QUAD_TOL,
    )?;
    Ok(q.value.clamp(0.0, LN_2))
}

/// M(t) for the continuous σx measurement without feedback, equal priors.
pub fn mutual_info_nofb(theta: f64, gamma: f64, t: f64) -> Result<f64> {
    let e = coding_states(theta)?;
    let law = NoFeedbackLaw::new(&e, gamma, t)?;
    if t == 0.0 || theta == 0.0 {
        return Ok(0.0);
    }
    equal_prior_information(
        |v| law.posterior_v(v).0,
        |v| law.density_v(v).expect("t > 0"),
        law.support(),
    )
    .map_err(|err| annotate(err, theta, t))
}

/// M(t) under the symmetry-restoring feedback, equal priors.
pub fn mutual_info_fb(theta0: f64, gamma: f64, t: f64) -> Result<f64> {
    if gamma_integral(theta0, gamma, t)? == 0.0 {
        return Ok(0.0);
    }
    let law = FeedbackLaw::new(theta0, gamma, t, 0.5)?;
    equal_prior_information(
        |u| law.posterior_u(u).0,
        |u| law.density_u(u).expect("Γ > 0"),
        law.support(),
    )
    .map_err(|err| annotate(err, theta0, t))
}

fn annotate(err: Error, theta: f64, t: f64) -> Error {
    match err {
        Error::Numeric { what, diagnostics } => Error::Numeric {
            what,
            diagnostics: format!("{diagnostics}; theta = {theta}, t = {t}"),
        },
        other => other,
    }
}

pub fn mutual_info(theta: f64, gamma: f64, t: f64, feedback: bool) -> Result<f64> {
    if feedback {
        mutual_info_fb(theta, gamma, t)
    } else {
        mutual_info_nofb(theta, gamma, t)
    }
}

/// Monte Carlo estimate ln 2 - mean H(P₁, 1 - P₁) with its jackknife standard error.
pub fn mutual_info_mc(p1_samples: &[f64]) -> Result<(f64, f64)> {
    if p1_samples.len() < MIN_MC_SAMPLES {
        return Err(Error::domain(format!(
            "{} samples is fewer than the {MIN_MC_SAMPLES} required",
            p1_samples.len()
        )));
    }
    if let Some(bad) = p1_samples.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::domain(format!("sample {bad} is not a probability")));
    }
    let gains: Vec<f64> = p1_samples.iter().map(|&p| LN_2 - binary_entropy(p)).collect();
    let m: Moments = gains.iter().copied().collect();
    Ok((m.mean(), jackknife_mean_std_error(&gains)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MICurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub method: CurveMethod,
    /// Per-point absolute error estimate.
    pub errors: Vec<f64>,
}

impl MICurve {
    /// Largest drop between consecutive points (0 for a nondecreasing curve).
    pub fn max_decrease(&self) -> f64 {
        self.values.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

/// Quadrature M(t) over a time grid, evaluated point-parallel.
pub fn mi_curve(theta: f64, gamma: f64, times: &[f64], feedback: bool) -> Result<MICurve> {
    let values = exec::try_map_indexed(times.len(), |i| mutual_info(theta, gamma, times[i], feedback))?;
    Ok(MICurve {
        times: times.to_vec(),
        values,
        method: CurveMethod::Quadrature,
        errors: vec![QUAD_TOL; times.len()],
    })
}

/// Information per unit time when preparation and measurement overlap.
pub fn transmission_rate(m: f64, t_prep: f64, t_meas: f64) -> f64 {
    m / t_prep.max(t_meas)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub t_prep: f64,
    pub t_meas_opt: f64,
    pub rate: f64,
    /// The golden-section result was beaten by a probe point and a dense scan was used instead.
    pub used_grid_fallback: bool,
}

/// Best rate over measurement times for a given preparation time.
///
/// M(t) is nondecreasing, so the optimum has t ≥ t_prep and maximises
/// M(t)/t on [t_prep, 50/γ].
pub fn optimal_rate(theta: f64, gamma: f64, t_prep: f64, feedback: bool) -> Result<RatePoint> {
    if !(t_prep > 0.0) || !t_prep.is_finite() {
        return Err(Error::domain(format!("t_prep = {t_prep} must be positive")));
    }
    let hi = (T_MEAS_CEILING / gamma).max(t_prep);
    if hi == t_prep {
        let m = mutual_info(theta, gamma, t_prep, feedback)?;
        return Ok(RatePoint {
            t_prep,
            t_meas_opt: t_prep,
            rate: m / t_prep,
            used_grid_fallback: false,
        });
    }
    let failure = RefCell::new(None);
    let objective = |t: f64| match mutual_info(theta, gamma, t, feedback) {
        Ok(m) => m / t,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NEG_INFINITY
        }
    };
    let best = golden_section_max(objective, t_prep, hi, SEARCH_REL_TOL);

    // unimodality probe
    let probes: Vec<f64> = log_grid(t_prep, hi, 17);
    let probe_best = probes
        .iter()
        .map(|&t| (t, objective(t)))
        .fold((t_prep, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
    if let Some(e) = failure.take() {
        return Err(e);
    }
    if probe_best.1 <= best.value * (1.0 + 1e-9) {
        return Ok(RatePoint {
            t_prep,
            t_meas_opt: best.x,
            rate: best.value,
            used_grid_fallback: false,
        });
    }

    let dense = log_grid(t_prep, hi, 2001);
    let values: Vec<f64> = dense.iter().map(|&t| objective(t)).collect();
    let (i, _) = values.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
    );
    let lo = dense[i.saturating_sub(1)];
    let up = dense[(i + 1).min(dense.len() - 1)];
    let refined = golden_section_max(objective, lo, up, SEARCH_REL_TOL);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(RatePoint {
        t_prep,
        t_meas_opt: refined.x,
        rate: refined.value,
        used_grid_fallback: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhancementPoint {
    pub t_prep: f64,
    pub no_feedback: RatePoint,
    pub feedback: RatePoint,
    /// 100 (rate_fb - rate_nofb) / rate_nofb.
    pub percent_increase: f64,
}

pub fn enhancement_at(theta: f64, gamma: f64, t_prep: f64) -> Result<EnhancementPoint> {
    let no_feedback = optimal_rate(theta, gamma, t_prep, false)?;
    let feedback = optimal_rate(theta, gamma, t_prep, true)?;
    let percent_increase = if no_feedback.rate > 0.0 {
        100.0 * (feedback.rate - no_feedback.rate) / no_feedback.rate
    } else {
        0.0
    };
    Ok(EnhancementPoint {
        t_prep,
        no_feedback,
        feedback,
        percent_increase,
    })
}

/// Percent rate increase from feedback across preparation times.
pub fn enhancement_curve(theta: f64, gamma: f64, t_prep_grid: &[f64]) -> Result<Vec<EnhancementPoint>> {
    if t_prep_grid.windows(2).any(|w| w[1] <= w[0]) || t_prep_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::domain("t_prep grid must be positive and strictly increasing"));
    }
    exec::try_map_indexed(t_prep_grid.len(), |i| enhancement_at(theta, gamma, t_prep_grid[i]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub t_prep: f64,
    pub percent_increase: f64,
}

/// Peak of the enhancement curve: best grid point, refined by golden-section
/// search between its neighbours.
pub fn enhancement_peak(theta: f64, gamma: f64, curve: &[EnhancementPoint]) -> Result<Peak> {
    if curve.is_empty() {
        return Err(Error::domain("empty enhancement curve"));
    }
    let (i, best) = curve.iter().enumerate().fold((0, &curve[0]), |acc, (i, p)| {
        if p.percent_increase > acc.1.percent_increase {
            (i, p)
        } else {
            acc
        }
    });
    if curve.len() < 3 {
        return Ok(Peak {
            t_prep: best.t_prep,
            percent_increase: best.percent_increase,
        });
    }
    let lo = curve[i.saturating_sub(1)].t_prep;
    let hi = curve[(i + 1).min(curve.len() - 1)].t_prep;
    let mut failure = None;
    let refined = golden_section_max(
        |t| match enhancement_at(theta, gamma, t) {
            Ok(p) => p.percent_increase,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        1e-4,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    if refined.value >= best.percent_increase {
        Ok(Peak {
            t_prep: refined.x,
            percent_increase: refined.value,
        })
    } else {
        Ok(Peak {
            t_prep: best.t_prep,
            percent_increase: best.percent_increase,
        })
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i + 1 == n {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

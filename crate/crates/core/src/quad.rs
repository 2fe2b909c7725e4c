//! Composite adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over [`lo`, `hi`] to absolute tolerance `tol`.
///
/// `breakpoints` inside the interval (e.g. mixture-component centres) are
/// always panel edges, and every panel is further split into `initial_panels`
/// equal pieces before refinement starts, so narrow peaks cannot be skipped.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    initial_panels: usize,
    tol: f64,
) -> Result<Quadrature> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("bad integration interval [{lo}, {hi}]")));
    }
    let mut edges = vec![lo];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > lo && p < hi).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(hi);

    let per = initial_panels.max(1);
    let total_width = hi - lo;
    let mut out = Quadrature {
        value: 0.0,
        error_estimate: 0.0,
        evaluations: 0,
    };
    let mut stack = Vec::with_capacity(64);
    for w in edges.windows(2) {
        let h = (w[1] - w[0]) / per as f64;
        for k in 0..per {
            let a = w[0] + h * k as f64;
            let b = if k + 1 == per { w[1] } else { a + h };
            let m = 0.5 * (a + b);
            let (fa, fm, fb) = (f(a), f(m), f(b));
            out.evaluations += 3;
            let panel_tol = tol * (b - a) / total_width;
            stack.clear();
            stack.push((
                Panel {
                    a,
                    b,
                    fa,
                    fm,
                    fb,
                    whole: simpson(a, b, fa, fm, fb),
                },
                panel_tol,
                0u32,
            ));
            while let Some((p, ptol, depth)) = stack.pop() {
                let m = 0.5 * (p.a + p.b);
                let lm = 0.5 * (p.a + m);
                let rm = 0.5 * (m + p.b);
                let (flm, frm) = (f(lm), f(rm));
                out.evaluations += 2;
                let left = simpson(p.a, m, p.fa, flm, p.fm);
                let right = simpson(m, p.b, p.fm, frm, p.fb);
                let delta = left + right - p.whole;
                if !delta.is_finite() {
                    return Err(Error::numeric("non-finite integrand", format!("on [{}, {}]", p.a, p.b)));
                }
                if delta.abs() <= 15.0 * ptol {
                    out.value += left + right + delta / 15.0;
                    out.error_estimate += delta.abs() / 15.0;
                } else if depth >= MAX_DEPTH {
                    return Err(Error::numeric(
                        format!("quadrature did not reach tolerance {tol:e}"),
                        format!(
                            "panel [{}, {}] stalled at depth {depth} with local error {:e}",
                            p.a,
                            p.b,
                            delta.abs() / 15.0
                        ),
                    ));
                } else {
                    stack.push((
                        Panel {
                            a: p.a,
                            b: m,
                            fa: p.fa,
                            fm: flm,
                            fb: p.fm,
                            whole: left,
                        },
                        0.5 * ptol,
                        depth + 1,
                    ));
                    stack.push((
                        Panel {
                            a: m,
                            b: p.b,
                            fa: p.fm,
                            fm: frm,
                            fb: p.fb,
                            whole: right,
                        },
                        0.5 * ptol,
                        depth + 1,
                    ));
                }
            }
        }
    }
    Ok(out)
}

//! Golden-section search for scalar maximisation.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Maximises a unimodal `f` on [`lo`, `hi`] until the bracket is narrower than
/// `rel_tol * |x|` (or `rel_tol` near zero). The returned point is the best
/// evaluated, including the bracket ends; ties go to the smaller abscissa.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> Maximum {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (fa, fb) = (f(a), f(b));
    let (mut fc, mut fd) = (f(c), f(d));
    let mut evaluations = 4;

    let mut best = Maximum {
        x: a,
        value: fa,
        evaluations: 0,
    };
    let consider = |x: f64, v: f64, best: &mut Maximum| {
        if v > best.value || (v == best.value && x < best.x) {
            best.x = x;
            best.value = v;
        }
    };
    consider(b, fb, &mut best);
    consider(c, fc, &mut best);
    consider(d, fd, &mut best);

    while (b - a) > rel_tol * (0.5 * (a + b)).abs().max(1.0e-300).max(rel_tol) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            consider(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            consider(d, fd, &mut best);
        }
        evaluations += 1;
        if evaluations > 10_000 {
            break;
        }
    }
    best.evaluations = evaluations;
    best
}

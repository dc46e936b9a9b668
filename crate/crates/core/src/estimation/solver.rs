//! Root of the homophily score on `[THETA_FLOOR, 1]`.

use serde::Serialize;

/// Lower end of the search interval for `theta`.
pub const THETA_FLOOR: f64 = 1e-9;

const BRACKET_TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Score is non-positive on the whole interval; the supremum is at 0.
    Low,
    /// Score is non-negative at 1.
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaFit {
    pub theta: f64,
    pub boundary: Option<Boundary>,
    pub iterations: usize,
}

/// `(-sum_same w c / (1 - theta c), sum_cross w)` over `(same, c, w)` terms.
pub(crate) fn score_parts(terms: impl Iterator<Item = (bool, f64, f64)>, theta: f64) -> (f64, f64) {
    let mut same = 0.0;
    let mut cross = 0.0;
    for (is_same, c, w) in terms {
        if is_same {
            same -= w * c / (1.0 - theta * c);
        } else {
            cross += w;
        }
    }
    (same, cross)
}

/// Score and its derivative in one pass.
fn score_and_slope(terms: impl Iterator<Item = (bool, f64, f64)>, theta: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut ds = 0.0;
    let mut cross = 0.0;
    for (is_same, c, w) in terms {
        if is_same {
            let r = c / (1.0 - theta * c);
            s -= w * r;
            ds -= w * r * r;
        } else {
            cross += w;
        }
    }
    (s + cross / theta, ds - cross / (theta * theta))
}

/// Maximizes `sum_same w log(1 - theta c) + sum_cross w log(theta)` over
/// `(0, 1]`. `terms` must yield the same sequence on every call.
///
/// Safeguarded Newton: the bracket `[lo, hi]` around the score's sign change
/// shrinks on every iteration and a bisection step replaces any Newton step
/// that leaves it.
pub fn maximize_theta<I, F>(terms: F) -> ThetaFit
where
    F: Fn() -> I,
    I: Iterator<Item = (bool, f64, f64)>,
{
    let cross: f64 = terms().filter(|t| !t.0).map(|t| t.2).sum();
    if cross <= 0.0 {
        return ThetaFit { theta: THETA_FLOOR, boundary: Some(Boundary::Low), iterations: 0 };
    }
    let (s_hi, _) = score_and_slope(terms(), 1.0);
    if s_hi >= 0.0 {
        return ThetaFit { theta: 1.0, boundary: Some(Boundary::High), iterations: 1 };
    }
    let (s_lo, _) = score_and_slope(terms(), THETA_FLOOR);
    if s_lo <= 0.0 {
        return ThetaFit { theta: THETA_FLOOR, boundary: Some(Boundary::Low), iterations: 2 };
    }

    let (mut lo, mut hi) = (THETA_FLOOR, 1.0);
    let mut theta = 0.5;
    let mut iterations = 2;
    while iterations < MAX_ITER {
        iterations += 1;
        let (s, ds) = score_and_slope(terms(), theta);
        if s == 0.0 {
            break;
        }
        if s > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let newton = theta - s / ds;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - theta).abs();
        theta = next;
        if hi - lo < BRACKET_TOL || step < 1e-15 {
            break;
        }
    }
    ThetaFit { theta, boundary: None, iterations }
}

//! Single change point in `theta` by split maximum likelihood.
//!
//! For a candidate `tau` the history is cut into steps `1..=tau` and
//! `tau+1..=T`; each side gets its own `theta` MLE and the two maximized
//! log-likelihoods are added. The estimate is the `tau` maximizing that sum
//! over `[t0, T - t0]`, `t0 = ceil(c0 T)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{KpaError, Result};
use crate::estimation::{loglik_theta, maximize_theta, EventFeature};

pub const DEFAULT_C0: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectOptions {
    pub c0: f64,
    /// Coarse grid spacing; `None` picks `max(1, T / 200)`.
    pub stride: Option<usize>,
    pub keep_curve: bool,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions { c0: DEFAULT_C0, stride: None, keep_curve: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangepointReport {
    pub tau_hat: usize,
    pub theta1_hat: f64,
    pub theta2_hat: f64,
    pub max_split_loglik: f64,
    pub horizon: usize,
    pub c0: f64,
    pub t0: usize,
    pub stride: usize,
    /// Every evaluated `(tau, split log-likelihood)`, sorted by `tau`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_loglik_curve: Option<Vec<(usize, f64)>>,
}

pub fn default_stride(horizon: usize) -> usize {
    (horizon / 200).max(1)
}

fn segment_fit(features: &[EventFeature]) -> (f64, f64) {
    let fit = maximize_theta(|| features.iter().map(|f| (f.same, 1.0 - f.share, 1.0)));
    (fit.theta, loglik_theta(features, fit.theta))
}

/// Sum of the two segment-wise maximized log-likelihoods for a cut after
/// step `tau`.
pub fn split_loglik(features: &[EventFeature], tau: usize) -> Result<f64> {
    let t = features.len();
    if tau < 1 || tau >= t {
        return Err(KpaError::Changepoint(format!(
            "tau = {tau} leaves an empty segment (need 1 <= tau < {t})"
        )));
    }
    let (_, left) = segment_fit(&features[..tau]);
    let (_, right) = segment_fit(&features[tau..]);
    Ok(left + right)
}

pub fn detect(features: &[EventFeature], opts: &DetectOptions) -> Result<ChangepointReport> {
    let t = features.len();
    let c0 = opts.c0;
    if !(c0 > 0.0 && c0 < 0.5) {
        return Err(KpaError::Changepoint(format!("margin c0 = {c0} outside (0, 0.5)")));
    }
    let t0 = ((c0 * t as f64).ceil() as usize).max(1);
    if t < 2 * t0 + 1 {
        return Err(KpaError::Changepoint(format!(
            "history of {t} steps is too short for margin t0 = {t0}"
        )));
    }
    let stride = opts.stride.unwrap_or_else(|| default_stride(t));
    if stride == 0 {
        return Err(KpaError::Changepoint("stride must be at least 1".into()));
    }
    let (lo, hi) = (t0, t - t0);

    let eval = |tau: usize| split_loglik(features, tau).map(|v| (tau, v));
    let mut curve: Vec<(usize, f64)> =
        (lo..=hi).step_by(stride).collect::<Vec<_>>().into_par_iter().map(eval).collect::<Result<_>>()?;
    let coarse = argmax(&curve);

    let refine_lo = coarse.saturating_sub(stride).max(lo);
    let refine_hi = (coarse + stride).min(hi);
    let fresh: Vec<usize> = (refine_lo..=refine_hi).filter(|tau| curve.binary_search_by_key(tau, |p| p.0).is_err()).collect();
    let refined: Vec<(usize, f64)> = fresh.into_par_iter().map(eval).collect::<Result<_>>()?;
    curve.extend(refined);
    curve.sort_by_key(|p| p.0);

    let window: Vec<(usize, f64)> =
        curve.iter().copied().filter(|&(tau, _)| tau >= refine_lo && tau <= refine_hi).collect();
    let tau_hat = argmax(&window);
    let max_split_loglik = window.iter().find(|p| p.0 == tau_hat).map(|p| p.1).unwrap_or(f64::NAN);

    let (theta1_hat, _) = segment_fit(&features[..tau_hat]);
    let (theta2_hat, _) = segment_fit(&features[tau_hat..]);

    Ok(ChangepointReport {
        tau_hat,
        theta1_hat,
        theta2_hat,
        max_split_loglik,
        horizon: t,
        c0,
        t0,
        stride,
        split_loglik_curve: opts.keep_curve.then_some(curve),
    })
}

/// Largest value; ties go to the smallest `tau`. `points` is sorted by `tau`.
fn argmax(points: &[(usize, f64)]) -> usize {
    let mut best = points[0];
    for &p in &points[1..] {
        if p.1 > best.1 {
            best = p;
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::features_from_log;
    use crate::model::ModelParams;
    use crate::simulator::{simulate, SimConfig};

    fn changepoint_features(seed: u64, tau: u64, t: u64, theta1: f64, theta2: f64) -> Vec<EventFeature> {
        let p = ModelParams { theta: theta1, p: vec![0.5, 0.3, 0.2], q: 0.5, n0: 10 };
        let (_, log) = simulate(&p, &SimConfig::collapsed(t, seed).with_changepoint(tau, theta2)).unwrap();
        features_from_log(&log).unwrap()
    }

    #[test]
    fn degenerate_segments_rejected() {
        let f = changepoint_features(1, 50, 100, 0.1, 0.9);
        assert!(split_loglik(&f, 0).is_err());
        assert!(split_loglik(&f, 100).is_err());
        assert!(split_loglik(&f, 99).is_ok());
    }

    #[test]
    fn invalid_margin_or_stride() {
        let f = changepoint_features(1, 50, 100, 0.1, 0.9);
        assert!(detect(&f, &DetectOptions { c0: 0.6, ..Default::default() }).is_err());
        assert!(detect(&f, &DetectOptions { c0: 0.0, ..Default::default() }).is_err());
        assert!(detect(&f, &DetectOptions { stride: Some(0), ..Default::default() }).is_err());
        assert!(detect(&f[..2], &DetectOptions::default()).is_err());
    }

    #[test]
    fn finds_sharp_change() {
        let f = changepoint_features(7, 500, 1000, 0.1, 0.9);
        let r = detect(&f, &DetectOptions { keep_curve: true, ..Default::default() }).unwrap();
        assert!((r.tau_hat as i64 - 500).abs() <= 20, "tau_hat = {}", r.tau_hat);
        assert!(r.t0 <= r.tau_hat && r.tau_hat <= 1000 - r.t0);
        assert!(r.theta1_hat < 0.3 && r.theta2_hat > 0.7);
        let curve = r.split_loglik_curve.unwrap();
        assert!(curve.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn stride_does_not_change_sharp_peak() {
        let f = changepoint_features(3, 400, 1000, 0.1, 0.9);
        let fine = detect(&f, &DetectOptions { stride: Some(1), ..Default::default() }).unwrap();
        let coarse = detect(&f, &DetectOptions { stride: Some(10), ..Default::default() }).unwrap();
        assert!((fine.max_split_loglik - coarse.max_split_loglik).abs() < 1e-6);
    }

    #[test]
    fn ties_break_to_smallest_tau() {
        assert_eq!(argmax(&[(3, 1.0), (4, 2.0), (5, 2.0)]), 4);
    }

    #[test]
    fn segment_estimates_match_history_estimator() {
        use crate::estimation::estimate_history;
        let p = ModelParams { theta: 0.2, p: vec![0.5, 0.3, 0.2], q: 0.5, n0: 10 };
        let (_, log) = simulate(&p, &SimConfig::collapsed(1000, 9).with_changepoint(600, 0.8)).unwrap();
        let f = features_from_log(&log).unwrap();
        let r = detect(&f, &DetectOptions::default()).unwrap();
        let left = estimate_history(&log.slice(0, r.tau_hat).unwrap(), 0.95).unwrap();
        let right = estimate_history(&log.slice(r.tau_hat, log.len()).unwrap(), 0.95).unwrap();
        assert!((left.theta_hat - r.theta1_hat).abs() < 1e-9);
        assert!((right.theta_hat - r.theta2_hat).abs() < 1e-9);
    }
}

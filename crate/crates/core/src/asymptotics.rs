//! Tail analysis: `√s` growth of `a` and `b`, the limit of `f'`, decay of `Q`
//! and the `Q∞ ∈ {0, 1}` dichotomy.

use serde::Serialize;

use crate::classify::{classify, Regime};
use crate::error::{Result, SolitonError};
use crate::integrator::{Sample, Trajectory};
use crate::model::origin_scalar_curvature;

pub const MIN_WINDOW_SAMPLES: usize = 50;
pub const DICHOTOMY_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_err: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_err = if xs.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    LinearFit { slope, intercept, slope_err }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub s_a: f64,
    pub s_b: f64,
    pub samples: usize,
    /// Fitted `d(a²)/ds`.
    pub slope_a: f64,
    /// Fitted `d(b²)/ds`.
    pub slope_b: f64,
    /// Extrapolated `lim f'`.
    pub f_prime_limit: f64,
    pub q_limit: f64,
    /// Log-log slope of `Q` over the window.
    pub decay_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FPrimeLimit {
    /// `c0` of the fit `f' ≈ c0 + c1/s` over the window.
    pub estimate: f64,
    pub c1: f64,
    /// `f'` at the last sample.
    pub last: f64,
    /// Mean of `f'` over the window.
    pub window_mean: f64,
    /// `−√R(0)`, the balance value of the first integral.
    pub predicted: f64,
    pub deviation: f64,
    pub s_a: f64,
    pub s_b: f64,
}

/// Default tail window: the last third of the run, starting no earlier than `s = 20`.
pub fn default_window(trajectory: &Trajectory) -> (f64, f64) {
    let s0 = trajectory.first().state.s;
    let s1 = trajectory.last().state.s;
    ((s1 - (s1 - s0) / 3.0).max(20.0).min(s1), s1)
}

fn window_samples(trajectory: &Trajectory, window: (f64, f64)) -> Result<Vec<&Sample>> {
    let (s_a, s_b) = window;
    let w: Vec<&Sample> = trajectory.window(s_a, s_b).collect();
    if w.len() < MIN_WINDOW_SAMPLES {
        return Err(SolitonError::WindowTooShort {
            s_a,
            s_b,
            found: w.len(),
            needed: MIN_WINDOW_SAMPLES,
        });
    }
    Ok(w)
}

fn fprime_fit(samples: &[&Sample]) -> LinearFit {
    let xs: Vec<f64> = samples.iter().map(|x| 1.0 / x.state.s).collect();
    let ys: Vec<f64> = samples.iter().map(|x| x.state.df).collect();
    linear_fit(&xs, &ys)
}

/// `−√R(0)`: the value of `f'` at which the first integral balances once the
/// mean curvature `a'/a + 2n b'/b` has decayed.
pub fn predicted_fprime_limit(trajectory: &Trajectory) -> f64 {
    -origin_scalar_curvature(&trajectory.params, &trajectory.cfg).max(0.0).sqrt()
}

/// Linear fits of `a²` and `b²` in `s` over `window` (default: [`default_window`]).
pub fn fit_sqrt_growth(trajectory: &Trajectory, window: Option<(f64, f64)>) -> Result<TailFit> {
    let window = window.unwrap_or_else(|| default_window(trajectory));
    let w = window_samples(trajectory, window)?;
    let s: Vec<f64> = w.iter().map(|x| x.state.s).collect();
    let a2: Vec<f64> = w.iter().map(|x| x.state.a * x.state.a).collect();
    let b2: Vec<f64> = w.iter().map(|x| x.state.b * x.state.b).collect();
    let ls: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let lq: Vec<f64> = w.iter().map(|x| x.diag.q.ln()).collect();
    let last = w.last().expect("window is non-empty");
    Ok(TailFit {
        s_a: window.0,
        s_b: window.1,
        samples: w.len(),
        slope_a: linear_fit(&s, &a2).slope,
        slope_b: linear_fit(&s, &b2).slope,
        f_prime_limit: fprime_fit(&w).intercept,
        q_limit: last.diag.q,
        decay_exponent: linear_fit(&ls, &lq).slope,
    })
}

/// Estimate `lim f'` over the default tail window.
pub fn limit_fprime(trajectory: &Trajectory) -> Result<FPrimeLimit> {
    limit_fprime_in(trajectory, default_window(trajectory))
}

pub fn limit_fprime_in(trajectory: &Trajectory, window: (f64, f64)) -> Result<FPrimeLimit> {
    let w = window_samples(trajectory, window)?;
    let fit = fprime_fit(&w);
    let predicted = predicted_fprime_limit(trajectory);
    let window_mean = w.iter().map(|x| x.state.df).sum::<f64>() / w.len() as f64;
    Ok(FPrimeLimit {
        estimate: fit.intercept,
        c1: fit.slope,
        last: w.last().expect("window is non-empty").state.df,
        window_mean,
        predicted,
        deviation: fit.intercept - predicted,
        s_a: window.0,
        s_b: window.1,
    })
}

/// Predicted `d(b²)/ds` on a collapsed tail: `4(n+1)/(−f'∞)`.
pub fn predicted_collapsed_slope(n: f64, fprime_limit: f64) -> f64 {
    4.0 * (n + 1.0) / (-fprime_limit)
}

/// Predicted `d(a²)/ds = d(b²)/ds` when `Q → 1`: `4n/(−f'∞)`.
pub fn predicted_critical_slope(n: f64, fprime_limit: f64) -> f64 {
    4.0 * n / (-fprime_limit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport {
    /// Log-log slope of `Q(s)` over the window.
    pub exponent: f64,
    /// Log-log slope of `Q(s)·s^{1/2 − ε}`.
    pub scaled_trend: f64,
    pub trend_err: f64,
    pub sup_scaled: f64,
    pub pass: bool,
}

/// Check that `Q(s)·s^{1/2−ε}` shows no growth over the tail of a collapsed run.
pub fn verify_decay(trajectory: &Trajectory, epsilon: f64, window: Option<(f64, f64)>) -> Result<DecayReport> {
    if classify(trajectory).label != Regime::Collapsed {
        return Err(SolitonError::NotCollapsed);
    }
    let window = window.unwrap_or_else(|| default_window(trajectory));
    let w = window_samples(trajectory, window)?;
    let power = 0.5 - epsilon;
    let ls: Vec<f64> = w.iter().map(|x| x.state.s.ln()).collect();
    let lq: Vec<f64> = w.iter().map(|x| x.diag.q.ln()).collect();
    let lscaled: Vec<f64> = ls.iter().zip(&lq).map(|(l, q)| q + power * l).collect();
    let exponent = linear_fit(&ls, &lq).slope;
    let trend = linear_fit(&ls, &lscaled);
    let sup_scaled = lscaled.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(DecayReport {
        exponent,
        scaled_trend: trend.slope,
        trend_err: trend.slope_err,
        sup_scaled,
        pass: trend.slope <= 2.0 * trend.slope_err,
    })
}

/// First sample in `window` at which `Q·s^power` increases, if any.
pub fn first_scaled_q_increase(trajectory: &Trajectory, window: (f64, f64), power: f64) -> Option<f64> {
    let w: Vec<&Sample> = trajectory.window(window.0, window.1).collect();
    w.windows(2)
        .find(|p| p[1].diag.q * p[1].state.s.powf(power) > p[0].diag.q * p[0].state.s.powf(power))
        .map(|p| p[1].state.s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum QLimit {
    Zero,
    One,
    /// Neither limit within tolerance, e.g. a run still shadowing `Q ≈ 1`.
    Flagged,
}

pub fn dichotomy(q_tail: f64, tol: f64) -> QLimit {
    if q_tail.abs() <= tol {
        QLimit::Zero
    } else if (q_tail - 1.0).abs() <= tol {
        QLimit::One
    } else {
        QLimit::Flagged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{solve, IntegrationControls};
    use crate::model::{ModelParams, ShootConfig};

    fn collapsed() -> Trajectory {
        let p = ModelParams::line_bundle(1, 2, 2).unwrap();
        let cfg = ShootConfig::line_bundle(-10.0).unwrap();
        solve(&p, &cfg, 10, &IntegrationControls::default()).unwrap()
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys);
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-13);
        assert!(f.slope_err < 1e-14);
    }

    #[test]
    fn collapsed_tail() {
        let t = collapsed();
        let fit = fit_sqrt_growth(&t, Some((30.0, 60.0))).unwrap();
        let pred = predicted_collapsed_slope(1.0, -20f64.sqrt());
        assert!((fit.slope_b - pred).abs() < 0.05 * pred, "{} vs {pred}", fit.slope_b);
        assert!(fit.slope_a.abs() < 0.01);
        let lim = limit_fprime(&t).unwrap();
        assert!(lim.deviation.abs() < 1e-3, "{lim:?}");
        let d = verify_decay(&t, 0.1, None).unwrap();
        assert!(d.pass && d.exponent <= -0.4, "{d:?}");
        assert_eq!(first_scaled_q_increase(&t, (30.0, 60.0), 0.4), None);
        assert_eq!(dichotomy(fit.q_limit, DICHOTOMY_TOL), QLimit::Flagged);
    }

    #[test]
    fn zero_potential_limit() {
        let p = ModelParams::line_bundle(1, 2, 2).unwrap();
        let cfg = ShootConfig::line_bundle(0.0).unwrap();
        let t = solve(&p, &cfg, 10, &IntegrationControls::default()).unwrap();
        let lim = limit_fprime_in(&t, (0.0, 60.0)).unwrap();
        assert_eq!(lim.predicted, 0.0);
        // f' stays at integration-error level, not exactly zero
        assert!(lim.estimate.abs() < 1e-9 && lim.last.abs() < 1e-9, "{lim:?}");
    }

    #[test]
    fn short_windows_and_crossing_runs_are_rejected() {
        let t = collapsed();
        assert!(matches!(
            fit_sqrt_growth(&t, Some((59.9, 60.0))),
            Err(SolitonError::WindowTooShort { .. })
        ));
        let p = ModelParams::line_bundle(1, 3, 2).unwrap();
        let cfg = ShootConfig::line_bundle(0.0).unwrap();
        let c = solve(&p, &cfg, 10, &IntegrationControls::default()).unwrap();
        assert_eq!(verify_decay(&c, 0.1, None).unwrap_err(), SolitonError::NotCollapsed);
    }

    #[test]
    fn dichotomy_bins() {
        assert_eq!(dichotomy(0.01, 0.05), QLimit::Zero);
        assert_eq!(dichotomy(0.97, 0.05), QLimit::One);
        assert_eq!(dichotomy(0.5, 0.05), QLimit::Flagged);
    }
}

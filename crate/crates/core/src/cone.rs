//! The four cone-point cases: Euclidean, Taub-NUT, Bryant and Taub-NUT-like.

use serde::Serialize;

use crate::asymptotics::{fit_sqrt_growth, limit_fprime_in, linear_fit, FPrimeLimit, TailFit};
use crate::error::{Result, SolitonError};
use crate::integrator::{solve, IntegrationControls, Trajectory};
use crate::model::{eval_rhs, ModelParams, ShootConfig, SolitonState};
use crate::series::DEFAULT_ORDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseLabel {
    Euclidean,
    TaubNut,
    Bryant,
    TaubNutLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeCase {
    pub label: CaseLabel,
    pub n: f64,
    pub a0: f64,
    pub b0: f64,
}

impl ConeCase {
    /// Case from the third derivatives at the cone point.
    pub fn detect(n: f64, a0: f64, b0: f64) -> Result<Self> {
        if !(a0.is_finite() && b0.is_finite()) {
            return Err(SolitonError::InvalidCase("cone data must be finite".into()));
        }
        let sum = a0 + 2.0 * n * b0;
        if a0 > b0 || sum > 0.0 {
            return Err(SolitonError::InvalidCase(format!(
                "need a0 <= b0 and a0 + 2n b0 <= 0, got a0 = {a0}, b0 = {b0}, n = {n}"
            )));
        }
        let label = match (sum == 0.0, a0 == b0) {
            (true, true) => CaseLabel::Euclidean,
            (true, false) => CaseLabel::TaubNut,
            (false, true) => CaseLabel::Bryant,
            (false, false) => CaseLabel::TaubNutLike,
        };
        Ok(Self { label, n, a0, b0 })
    }

    pub fn f0(&self) -> f64 {
        self.a0 + 2.0 * self.n * self.b0
    }
}

/// One measured property of a cone run against its predicted value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseCheck {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CaseCheck {
    fn abs(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tol,
            pass: (value - target).abs() <= tol,
        }
    }

    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: 0.0,
            tol: bound,
            pass: value <= bound,
        }
    }
}

/// Quantities measured along a cone run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case: ConeCase,
    /// `max |a − s|` and `max |b − s|` over samples with `s ≤ 10`.
    pub max_abs_a_minus_s: f64,
    pub max_abs_b_minus_s: f64,
    pub max_abs_f: f64,
    pub max_abs_df: f64,
    /// `max |a − b| / a`.
    pub max_diagonal_defect: f64,
    /// `max |f'' − (2n+1) a''/a|`, relevant on the diagonal.
    pub max_rotational_residual: f64,
    pub s_end: f64,
    pub a_end: f64,
    pub da_end: f64,
    pub db_end: f64,
    /// Log-log slopes of `a` and `b` over the tail window.
    pub log_slope_a: Option<f64>,
    pub log_slope_b: Option<f64>,
    pub checks: Vec<CaseCheck>,
}

impl CaseReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CaseCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tail window for cone runs: the second half of the run.
pub fn cone_window(trajectory: &Trajectory) -> (f64, f64) {
    let s1 = trajectory.last().state.s;
    (0.5 * s1, s1)
}

fn log_slope(trajectory: &Trajectory, window: (f64, f64), g: impl Fn(&SolitonState) -> f64) -> Option<f64> {
    let w: Vec<_> = trajectory.window(window.0, window.1).collect();
    if w.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = w.iter().map(|x| x.state.s.ln()).collect();
    let ys: Vec<f64> = w.iter().map(|x| g(&x.state).ln()).collect();
    Some(linear_fit(&xs, &ys).slope)
}

pub const EUCLIDEAN_TOL: f64 = 1e-10;
pub const TAUB_NUT_F_TOL: f64 = 1e-9;
pub const TAUB_NUT_DB_TOL: f64 = 1e-3;
pub const DIAGONAL_TOL: f64 = 1e-9;
/// Tolerance on log-log tail slopes (`0` for bounded, `1/2` for `√s`).
pub const LOG_SLOPE_TOL: f64 = 0.05;

/// Measure a cone run and compare it with the behaviour predicted for its case.
pub fn case_report(case: &ConeCase, trajectory: &Trajectory) -> Result<CaseReport> {
    let params = &trajectory.params;
    let two_n_plus_1 = params.two_n() + 1.0;
    let mut max_as: f64 = 0.0;
    let mut max_bs: f64 = 0.0;
    let mut max_f: f64 = 0.0;
    let mut max_df: f64 = 0.0;
    let mut diag: f64 = 0.0;
    let mut rot: f64 = 0.0;
    for x in &trajectory.samples {
        let st = &x.state;
        if st.s <= 10.0 {
            max_as = max_as.max((st.a - st.s).abs());
            max_bs = max_bs.max((st.b - st.s).abs());
        }
        max_f = max_f.max(st.f.abs());
        max_df = max_df.max(st.df.abs());
        diag = diag.max((st.a - st.b).abs() / st.a);
        let d = eval_rhs(st, params)?;
        rot = rot.max((d.ddf - two_n_plus_1 * d.dda / st.a).abs());
    }
    let last = trajectory.last().state;
    let window = cone_window(trajectory);
    let lsa = log_slope(trajectory, window, |s| s.a);
    let lsb = log_slope(trajectory, window, |s| s.b);
    let nan = f64::NAN;

    let checks = match case.label {
        CaseLabel::Euclidean => vec![
            CaseCheck::at_most("max|a-s| on [0,10]", max_as, EUCLIDEAN_TOL),
            CaseCheck::at_most("max|b-s| on [0,10]", max_bs, EUCLIDEAN_TOL),
        ],
        CaseLabel::TaubNut => vec![
            CaseCheck::at_most("max|f|", max_f, TAUB_NUT_F_TOL),
            CaseCheck::abs("a log-slope", lsa.unwrap_or(nan), 0.0, LOG_SLOPE_TOL),
            CaseCheck::abs("db at s_end", last.db, 1.0, TAUB_NUT_DB_TOL),
        ],
        CaseLabel::Bryant => vec![
            CaseCheck::at_most("max|a-b|/a", diag, DIAGONAL_TOL),
            CaseCheck::abs("a log-slope", lsa.unwrap_or(nan), 0.5, LOG_SLOPE_TOL),
        ],
        CaseLabel::TaubNutLike => vec![
            CaseCheck::abs("a log-slope", lsa.unwrap_or(nan), 0.0, LOG_SLOPE_TOL),
            CaseCheck::abs("b log-slope", lsb.unwrap_or(nan), 0.5, LOG_SLOPE_TOL),
        ],
    };

    Ok(CaseReport {
        case: *case,
        max_abs_a_minus_s: max_as,
        max_abs_b_minus_s: max_bs,
        max_abs_f: max_f,
        max_abs_df: max_df,
        max_diagonal_defect: diag,
        max_rotational_residual: rot,
        s_end: last.s,
        a_end: last.a,
        da_end: last.da,
        db_end: last.db,
        log_slope_a: lsa,
        log_slope_b: lsb,
        checks,
    })
}

#[derive(Debug, Clone)]
pub struct ConeRun {
    pub case: ConeCase,
    pub trajectory: Trajectory,
    /// `None` when the tail holds too few samples, as for the Euclidean run.
    pub tail: Option<TailFit>,
    pub report: CaseReport,
}

pub fn run_cone_case(n: f64, a0: f64, b0: f64, controls: &IntegrationControls) -> Result<ConeRun> {
    run_cone_case_with_order(n, a0, b0, controls, DEFAULT_ORDER)
}

pub fn run_cone_case_with_order(
    n: f64,
    a0: f64,
    b0: f64,
    controls: &IntegrationControls,
    order: usize,
) -> Result<ConeRun> {
    let params = ModelParams::cone(n)?;
    let case = ConeCase::detect(n, a0, b0)?;
    let cfg = ShootConfig::cone(n, a0, b0)?;
    let trajectory = solve(&params, &cfg, order, controls)?;
    let tail = match fit_sqrt_growth(&trajectory, Some(cone_window(&trajectory))) {
        Ok(t) => Some(t),
        Err(SolitonError::WindowTooShort { .. }) => None,
        Err(e) => return Err(e),
    };
    let report = case_report(&case, &trajectory)?;
    Ok(ConeRun {
        case,
        trajectory,
        tail,
        report,
    })
}

/// Asymptotic predictions for a Bryant run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BryantPrediction {
    pub fprime_limit: f64,
    pub slope: f64,
}

impl BryantPrediction {
    /// `f'∞ = −√(−2 f0)` and `d(b²)/ds = 4n/√(−2 f0)`.
    pub fn literal(n: f64, f0: f64) -> Self {
        let r = (-2.0 * f0).sqrt();
        Self {
            fprime_limit: -r,
            slope: 4.0 * n / r,
        }
    }

    /// Balance of the first integral with the cone-point curvature
    /// `R(0) = −2(n+1) f0`: `f'∞ = −√R(0)` and slope `4n/√R(0)`.
    pub fn from_first_integral(n: f64, f0: f64) -> Self {
        let r = (-2.0 * (n + 1.0) * f0).sqrt();
        Self {
            fprime_limit: -r,
            slope: 4.0 * n / r,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BryantRun {
    pub dimension: u32,
    pub run: ConeRun,
    pub tail: TailFit,
    pub fprime: FPrimeLimit,
    pub literal: BryantPrediction,
    pub first_integral: BryantPrediction,
}

impl BryantRun {
    pub fn n(&self) -> f64 {
        self.run.case.n
    }

    pub fn f0(&self) -> f64 {
        self.run.case.f0()
    }
}

/// Bryant soliton in dimension `d`: `n = (d − 2)/2`, `b0 = a0`.
pub fn bryant_for_dimension(d: u32, a0: f64, controls: &IntegrationControls) -> Result<BryantRun> {
    if d < 3 {
        return Err(SolitonError::BadDimension(d));
    }
    if !(a0 < 0.0) {
        return Err(SolitonError::InvalidCase(format!("Bryant data needs a0 < 0, got {a0}")));
    }
    let n = (d as f64 - 2.0) / 2.0;
    let run = run_cone_case(n, a0, a0, controls)?;
    let window = cone_window(&run.trajectory);
    let tail = match run.tail {
        Some(t) => t,
        None => fit_sqrt_growth(&run.trajectory, Some(window))?,
    };
    let fprime = limit_fprime_in(&run.trajectory, window)?;
    let f0 = run.case.f0();
    Ok(BryantRun {
        dimension: d,
        tail,
        fprime,
        literal: BryantPrediction::literal(n, f0),
        first_integral: BryantPrediction::from_first_integral(n, f0),
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_detection() {
        let l = |n, a, b| ConeCase::detect(n, a, b).unwrap().label;
        assert_eq!(l(1.0, 0.0, 0.0), CaseLabel::Euclidean);
        assert_eq!(l(1.0, -2.0, 1.0), CaseLabel::TaubNut);
        assert_eq!(l(1.0, -1.0, -1.0), CaseLabel::Bryant);
        assert_eq!(l(1.0, -3.0, 1.0), CaseLabel::TaubNutLike);
        assert_eq!(l(0.5, -1.0, 1.0), CaseLabel::TaubNut);
        assert!(matches!(ConeCase::detect(1.0, 1.0, 0.0), Err(SolitonError::InvalidCase(_))));
        assert!(matches!(ConeCase::detect(1.0, -1.0, 1.0), Err(SolitonError::InvalidCase(_))));
    }

    #[test]
    fn euclidean_case_is_flat_space() {
        let run = run_cone_case(1.0, 0.0, 0.0, &IntegrationControls::default()).unwrap();
        assert_eq!(run.case.label, CaseLabel::Euclidean);
        assert!(run.report.all_pass(), "{:?}", run.report);
        assert!(run.tail.is_none());
    }

    #[test]
    fn taub_nut_like_tail() {
        let run = run_cone_case(1.0, -3.0, 1.0, &IntegrationControls::default()).unwrap();
        assert!(run.report.all_pass(), "{:?}", run.report.checks);
        assert!(run.tail.unwrap().slope_b > 0.0);
    }

    #[test]
    fn bryant_runs_stay_on_the_diagonal() {
        for d in [3, 4, 5] {
            let b = bryant_for_dimension(d, -1.0, &IntegrationControls::default()).unwrap();
            assert_eq!(b.run.report.max_diagonal_defect, 0.0);
            assert!(b.run.report.max_rotational_residual < 1e-12);
            let fi = b.first_integral;
            assert!((b.fprime.estimate - fi.fprime_limit).abs() < 1e-3, "{:?} {fi:?}", b.fprime);
            assert!((b.tail.slope_b - fi.slope).abs() < 0.05 * fi.slope);
        }
        assert_eq!(bryant_for_dimension(2, -1.0, &IntegrationControls::default()).unwrap_err(), SolitonError::BadDimension(2));
    }
}

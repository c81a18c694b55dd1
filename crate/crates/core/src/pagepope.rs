//! Closed-form Ricci-flat (`f ≡ 0`) solution in the gauge `a·p = L`.
//!
//! With `r` the radial coordinate, `ds = p dr`, the metric functions are
//!
//! ```text
//! b² = L² − r²
//! a² = −(2n+2) L² r (r² − L²)^{−n} ∫_{r_B}^{r} (t² − L²)ⁿ / t² dt,    p = L / a
//! ```
//!
//! on `r ∈ [r_B, L)`. The integral is expanded binomially and written as
//! `(r − r_B)` times a polynomial-like factor, so `a²` carries no cancellation
//! near `r_B` and is smooth through `r = 0`.

use serde::Serialize;

use crate::error::{Result, SolitonError};
use crate::integrator::Trajectory;
use crate::model::{Branch, ModelParams, SolitonState};
use crate::quadrature;

const ARC_ABS_TOL: f64 = 1e-14;
const ARC_REL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PagePopeSolution {
    pub n: u32,
    pub a1: f64,
    pub l: f64,
    pub r_b: f64,
    /// `C(n, j) (−L²)^{n−j}` for `j = 0..=n`.
    coeffs: Vec<f64>,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

impl PagePopeSolution {
    pub fn new(n: u32, a1: f64) -> Result<Self> {
        let np1 = f64::from(n) + 1.0;
        if n == 0 || !(a1.is_finite() && a1 > np1) {
            return Err(SolitonError::InvalidParams(format!(
                "closed form needs n >= 1 and a'(0) > n + 1, got n = {n}, a'(0) = {a1}"
            )));
        }
        let l = a1 / (a1 * a1 - np1 * np1).sqrt();
        let r_b = -np1 * l / a1;
        let l2 = l * l;
        let coeffs = (0..=n)
            .map(|j| binomial(n, j) * (-l2).powi((n - j) as i32))
            .collect();
        Ok(Self { n, a1, l, r_b, coeffs })
    }

    pub fn from_params(params: &ModelParams) -> Result<Self> {
        if params.branch() != Branch::LineBundle {
            return Err(SolitonError::MismatchedParams("closed form is line-bundle only".into()));
        }
        Self::new(params.n() as u32, params.a1())
    }

    fn check(&self, r: f64) -> Result<()> {
        if r >= self.r_b && r < self.l {
            Ok(())
        } else {
            Err(SolitonError::OutOfDomain { r, lo: self.r_b, hi: self.l })
        }
    }

    /// `S(r) = Σ_{j≥1} c_j/(2j−1) · (r^{2j−1} − r_B^{2j−1})/(r − r_B)` and `S'(r)`.
    fn s_poly(&self, r: f64) -> (f64, f64) {
        let rb = self.r_b;
        let mut s = 0.0;
        let mut ds = 0.0;
        for (j, &c) in self.coeffs.iter().enumerate().skip(1) {
            let m = 2 * j - 1;
            let w = c / m as f64;
            let mut sum = 0.0;
            let mut dsum = 0.0;
            for i in 0..m {
                let tail = rb.powi((m - 1 - i) as i32);
                sum += r.powi(i as i32) * tail;
                if i > 0 {
                    dsum += i as f64 * r.powi(i as i32 - 1) * tail;
                }
            }
            s += w * sum;
            ds += w * dsum;
        }
        (s, ds)
    }

    /// `a²` and `d(a²)/dr` at `r = r_B + delta`.
    fn a2_from_delta(&self, delta: f64) -> (f64, f64) {
        let r = self.r_b + delta;
        let nf = f64::from(self.n);
        let l2 = self.l * self.l;
        let k = -(2.0 * nf + 2.0) * l2;
        let base = r * r - l2;
        let g = base.powi(-(self.n as i32));
        let dg = -2.0 * nf * r * base.powi(-(self.n as i32) - 1);
        let (s, ds) = self.s_poly(r);
        // r·∫(t² − L²)ⁿ/t² = (r − r_B)·M(r)
        let m = self.coeffs[0] / self.r_b + r * s;
        let dm = s + r * ds;
        let a2 = k * g * delta * m;
        let da2 = k * (dg * delta * m + g * m + g * delta * dm);
        (a2, da2)
    }

    /// `(a², b², p²)` at `r`.
    pub fn profiles(&self, r: f64) -> Result<(f64, f64, f64)> {
        self.check(r)?;
        let (a2, _) = self.a2_from_delta(r - self.r_b);
        let b2 = self.l * self.l - r * r;
        let p2 = if a2 > 0.0 { self.l * self.l / a2 } else { f64::INFINITY };
        Ok((a2, b2, p2))
    }

    /// `s(r) = ∫_{r_B}^{r} p dt`, computed in `t = r_B + u²` to remove the endpoint singularity.
    pub fn arclength(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(self.arc_in_u((r - self.r_b).max(0.0).sqrt()))
    }

    fn arc_in_u(&self, umax: f64) -> f64 {
        let l = self.l;
        let integrand = |u: f64| {
            let delta = u * u;
            if u == 0.0 {
                // a² ≈ (da²/dr)·u² at small u, so 2uL/a stays finite
                let (_, da2) = self.a2_from_delta(0.0);
                return 2.0 * l / da2.sqrt();
            }
            if self.r_b + delta >= l {
                return 0.0;
            }
            2.0 * u * l / self.a2_from_delta(delta).0.sqrt()
        };
        quadrature::integrate(integrand, 0.0, umax, ARC_ABS_TOL, ARC_REL_TOL).value
    }

    /// Phase-space state at `r`, including its arclength.
    pub fn state_at_r(&self, r: f64) -> Result<SolitonState> {
        let s = self.arclength(r)?;
        Ok(self.state_with_s(r, s))
    }

    fn state_with_s(&self, r: f64, s: f64) -> SolitonState {
        let (a2, da2) = self.a2_from_delta(r - self.r_b);
        let a = a2.max(0.0).sqrt();
        let b = (self.l * self.l - r * r).sqrt();
        // dr/ds = a/L
        SolitonState {
            s,
            a,
            da: da2 / (2.0 * self.l),
            b,
            db: -r * a / (self.l * b),
            f: 0.0,
            df: 0.0,
        }
    }

    /// Arclength at which `r → L`, where the solution ceases to exist.
    pub fn s_limit(&self) -> f64 {
        self.arc_in_u((self.l - self.r_b).sqrt())
    }

    /// Invert `s ↦ r` by safeguarded Newton iteration (`dr/ds = a/L`).
    pub fn r_of_s(&self, s: f64, guess: Option<f64>) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(SolitonError::OutOfDomain { r: f64::NAN, lo: self.r_b, hi: self.l });
        }
        if s == 0.0 {
            return Ok(self.r_b);
        }
        let (mut lo, mut hi) = (self.r_b, self.l);
        let mut r = guess
            .filter(|g| *g > lo && *g < hi)
            .unwrap_or(self.r_b + 0.5 * (self.l - self.r_b));
        for _ in 0..100 {
            let f = self.arclength(r)? - s;
            if f.abs() <= 1e-14 * s.max(1.0) {
                return Ok(r);
            }
            if f < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            let a = self.a2_from_delta(r - self.r_b).0.max(0.0).sqrt();
            let mut next = r - f * a / self.l;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - r).abs() <= 1e-16 * r.abs().max(1.0) || hi - lo <= 1e-16 {
                return Ok(next);
            }
            r = next;
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub max_rel_err_a: f64,
    pub max_rel_err_b: f64,
    /// Largest `|R|` over the compared samples.
    pub max_abs_r: f64,
    pub samples_compared: usize,
    pub s_first: f64,
    pub s_last: f64,
    pub q_cap: f64,
}

/// Compare an `f0 = 0` trajectory with the closed form at every sample up to
/// the first one with `Q > q_cap`.
pub fn compare_oracle(trajectory: &Trajectory, sol: &PagePopeSolution, q_cap: f64) -> Result<OracleReport> {
    let params = &trajectory.params;
    if params.branch() != Branch::LineBundle {
        return Err(SolitonError::MismatchedParams("trajectory is on the cone branch".into()));
    }
    if params.n() != f64::from(sol.n) || (params.a1() - sol.a1).abs() > 1e-12 * sol.a1 {
        return Err(SolitonError::MismatchedParams(format!(
            "trajectory has n = {}, a'(0) = {}; oracle has n = {}, a'(0) = {}",
            params.n(),
            params.a1(),
            sol.n,
            sol.a1
        )));
    }
    if trajectory.cfg.f0() != 0.0 {
        return Err(SolitonError::MismatchedParams(format!(
            "closed form needs f''(0) = 0, got {}",
            trajectory.cfg.f0()
        )));
    }
    let s_lim = sol.s_limit();
    let mut report = OracleReport {
        max_rel_err_a: 0.0,
        max_rel_err_b: 0.0,
        max_abs_r: 0.0,
        samples_compared: 0,
        s_first: f64::NAN,
        s_last: f64::NAN,
        q_cap,
    };
    let mut guess = None;
    for sample in &trajectory.samples {
        let st = &sample.state;
        if sample.diag.q > q_cap || st.s >= s_lim {
            break;
        }
        let r = sol.r_of_s(st.s, guess)?;
        guess = Some(r);
        let exact = sol.state_with_s(r, st.s);
        report.max_rel_err_a = report.max_rel_err_a.max((st.a - exact.a).abs() / exact.a);
        report.max_rel_err_b = report.max_rel_err_b.max((st.b - exact.b).abs() / exact.b);
        report.max_abs_r = report.max_abs_r.max(sample.diag.r.abs());
        if report.samples_compared == 0 {
            report.s_first = st.s;
        }
        report.s_last = st.s;
        report.samples_compared += 1;
    }
    Ok(report)
}

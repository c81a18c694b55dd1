//! Parity-constrained Taylor jets at the degenerate origin.
//!
//! The equations are singular at `s = 0`, so the integrator starts at a small
//! handoff radius `s₀` from a truncated power series. Coefficients are found
//! order by order: the three ODEs are multiplied through by powers of `a` and
//! `b` to become polynomial, and at each level the unknowns enter the lowest
//! surviving coefficient linearly. The first level is singular in both
//! branches; that is where the free data `f''(0)` (or `a'''(0)`, `b'''(0)`)
//! sits.

use serde::Serialize;

use crate::error::{Result, SolitonError};
use crate::model::{eval_rhs, Branch, DerivativeVector, ModelParams, ShootConfig, SolitonState};

pub const DEFAULT_ORDER: usize = 10;
const HANDOFF_RATIO: f64 = 1e-14;
const PIVOT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesJet {
    branch: Branch,
    order: usize,
    n: f64,
    // dense coefficient arrays indexed by power, length order + 1
    a: Vec<f64>,
    b: Vec<f64>,
    f: Vec<f64>,
    handoff_radius: f64,
}

/// Serialized form: parity-filtered coefficient arrays.
#[derive(Debug, Clone, Serialize)]
pub struct JetRecord {
    pub branch: Branch,
    pub order: usize,
    pub a_coeffs: Vec<f64>,
    pub b_coeffs: Vec<f64>,
    pub f_coeffs: Vec<f64>,
    pub handoff_radius: f64,
}

impl Serialize for SeriesJet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.record().serialize(serializer)
    }
}

fn parity_slice(c: &[f64], start: usize) -> Vec<f64> {
    c.iter().skip(start).step_by(2).copied().collect()
}

impl SeriesJet {
    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn handoff_radius(&self) -> f64 {
        self.handoff_radius
    }

    /// Coefficients of `s¹, s³, …`.
    pub fn a_coeffs(&self) -> Vec<f64> {
        parity_slice(&self.a, 1)
    }

    /// Coefficients of `s⁰, s², …` (line bundle) or `s¹, s³, …` (cone).
    pub fn b_coeffs(&self) -> Vec<f64> {
        match self.branch {
            Branch::LineBundle => parity_slice(&self.b, 0),
            Branch::Cone => parity_slice(&self.b, 1),
        }
    }

    /// Coefficients of `s², s⁴, …`.
    pub fn f_coeffs(&self) -> Vec<f64> {
        parity_slice(&self.f, 2)
    }

    /// Coefficient of `s^power` in `a`, `b` or `f`.
    pub fn coeff(&self, series: Series, power: usize) -> f64 {
        let c = match series {
            Series::A => &self.a,
            Series::B => &self.b,
            Series::F => &self.f,
        };
        c.get(power).copied().unwrap_or(0.0)
    }

    pub fn record(&self) -> JetRecord {
        JetRecord {
            branch: self.branch,
            order: self.order,
            a_coeffs: self.a_coeffs(),
            b_coeffs: self.b_coeffs(),
            f_coeffs: self.f_coeffs(),
            handoff_radius: self.handoff_radius,
        }
    }

    /// Termwise evaluation without the radius check; any sign of `s`.
    pub fn evaluate_formal(&self, s: f64) -> SolitonState {
        let (a, da, _) = horner3(&self.a, s);
        let (b, db, _) = horner3(&self.b, s);
        let (f, df, _) = horner3(&self.f, s);
        SolitonState { s, a, da, b, db, f, df }
    }

    /// Termwise second derivatives `(a'', b'', f'')`.
    pub fn second_derivatives(&self, s: f64) -> DerivativeVector {
        DerivativeVector {
            dda: horner3(&self.a, s).2,
            ddb: horner3(&self.b, s).2,
            ddf: horner3(&self.f, s).2,
        }
    }

    /// Scalar curvature from jet second derivatives; usable for `s` below the
    /// handoff radius where the interior formulas lose accuracy.
    pub fn scalar_curvature_near_origin(&self, s: f64) -> f64 {
        let st = self.evaluate_formal(s);
        let d2 = self.second_derivatives(s);
        let two_n = 2.0 * self.n;
        let (a, b) = (st.a, st.b);
        let lb = st.db / b;
        let b2 = b * b;
        -2.0 * d2.dda / a - 2.0 * two_n * d2.ddb / b - 2.0 * two_n * st.da * st.db / (a * b)
            - two_n * (two_n - 1.0) * lb * lb
            - two_n * a * a / (b2 * b2)
            + two_n * (two_n + 2.0) / b2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    A,
    B,
    F,
}

/// Value, first and second derivative of a dense polynomial.
fn horner3(c: &[f64], s: f64) -> (f64, f64, f64) {
    let mut v = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for &ck in c.iter().rev() {
        d2 = d2 * s + 2.0 * d1;
        d1 = d1 * s + v;
        v = v * s + ck;
    }
    (v, d1, d2)
}

fn mul(x: &[f64], y: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &xi) in x.iter().enumerate().take(len) {
        if xi == 0.0 {
            continue;
        }
        for (j, &yj) in y.iter().enumerate().take(len - i) {
            out[i + j] += xi * yj;
        }
    }
    out
}

fn deriv(x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

fn axpy(acc: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, &v) in acc.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// Polynomial forms of the three equations:
///
/// ```text
/// E1 = f''ab − a''b − 2n b''a
/// E2 = a''b⁴ − 2n a³ + 2n a'b'b³ − a'f'b⁴
/// E3 = b''ab³ − (2n+2)ab² + 2a³ + a'b'b³ + (2n−1)ab'²b² − ab'f'b³
/// ```
fn residual_polys(a: &[f64], b: &[f64], f: &[f64], two_n: f64, len: usize) -> [Vec<f64>; 3] {
    let da = deriv(a);
    let db = deriv(b);
    let df = deriv(f);
    let dda = deriv(&da);
    let ddb = deriv(&db);
    let ddf = deriv(&df);

    let ab = mul(a, b, len);
    let b2 = mul(b, b, len);
    let b3 = mul(&b2, b, len);
    let b4 = mul(&b2, &b2, len);
    let a2 = mul(a, a, len);
    let a3 = mul(&a2, a, len);
    let dadb = mul(&da, &db, len);
    let dadf = mul(&da, &df, len);
    let dbdf = mul(&db, &df, len);
    let db2 = mul(&db, &db, len);

    let mut e1 = mul(&ddf, &ab, len);
    axpy(&mut e1, -1.0, &mul(&dda, b, len));
    axpy(&mut e1, -two_n, &mul(&ddb, a, len));

    let mut e2 = mul(&dda, &b4, len);
    axpy(&mut e2, -two_n, &a3);
    axpy(&mut e2, two_n, &mul(&dadb, &b3, len));
    axpy(&mut e2, -1.0, &mul(&dadf, &b4, len));

    let ab3 = mul(a, &b3, len);
    let mut e3 = mul(&ddb, &ab3, len);
    axpy(&mut e3, -(two_n + 2.0), &mul(a, &b2, len));
    axpy(&mut e3, 2.0, &a3);
    axpy(&mut e3, 1.0, &mul(&dadb, &b3, len));
    axpy(&mut e3, two_n - 1.0, &mul(&mul(a, &db2, len), &b2, len));
    axpy(&mut e3, -1.0, &mul(&dbdf, &ab3, len));

    [e1, e2, e3]
}

struct Recursion {
    two_n: f64,
    len: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    f: Vec<f64>,
}

type Slot = (Series, usize);

impl Recursion {
    fn new(two_n: f64, order: usize) -> Self {
        // one extra slot: a's next odd coefficient couples to the top f coefficient
        let len = order + 2;
        Self {
            two_n,
            len,
            a: vec![0.0; len],
            b: vec![0.0; len],
            f: vec![0.0; len],
        }
    }

    fn slot_mut(&mut self, (series, k): Slot) -> &mut f64 {
        match series {
            Series::A => &mut self.a[k],
            Series::B => &mut self.b[k],
            Series::F => &mut self.f[k],
        }
    }

    fn residuals_at(&self, picks: &[(usize, usize)]) -> Vec<f64> {
        // highest order needed + 1
        let len = picks.iter().map(|&(_, o)| o + 1).max().unwrap_or(1).max(self.len);
        let polys = residual_polys(&self.a, &self.b, &self.f, self.two_n, len);
        picks.iter().map(|&(eq, o)| polys[eq][o]).collect()
    }

    /// Solve for `slots` so that the picked residual coefficients vanish.
    /// The picked coefficients are affine in the slots, so probing each slot
    /// with a unit value gives the linear system exactly.
    fn solve_level(&mut self, level: usize, slots: &[Slot], picks: &[(usize, usize)]) -> Result<()> {
        let m = slots.len();
        for &s in slots {
            *self.slot_mut(s) = 0.0;
        }
        let base = self.residuals_at(picks);
        let mut mat = vec![vec![0.0; m]; m];
        for (col, &s) in slots.iter().enumerate() {
            *self.slot_mut(s) = 1.0;
            let probe = self.residuals_at(picks);
            *self.slot_mut(s) = 0.0;
            for row in 0..m {
                mat[row][col] = probe[row] - base[row];
            }
        }
        let rhs: Vec<f64> = base.iter().map(|v| -v).collect();
        let x = gauss_solve(mat, rhs).map_err(|pivot| SolitonError::ResonanceFailure { level, pivot })?;
        for (&s, v) in slots.iter().zip(x) {
            *self.slot_mut(s) = v;
        }
        Ok(())
    }
}

/// Gaussian elimination with partial pivoting; `Err(pivot)` on a vanishing pivot.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> std::result::Result<Vec<f64>, f64> {
    let n = rhs.len();
    let scale = m
        .iter()
        .flatten()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty");
        if m[piv][col].abs() < PIVOT_FLOOR * scale {
            return Err(m[piv][col]);
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Ok(x)
}

fn check_order(order: usize) -> Result<()> {
    if order < 5 {
        return Err(SolitonError::InvalidParams(format!("series order must be >= 5, got {order}")));
    }
    Ok(())
}

/// Jet for `a(0) = 0, a'(0) = a1, b(0) = 1, b'(0) = 0, f(0) = f'(0) = 0, f''(0) = f0`.
pub fn build_line_bundle_jet(params: &ModelParams, cfg: &ShootConfig, order: usize) -> Result<SeriesJet> {
    if params.branch() != Branch::LineBundle {
        return Err(SolitonError::InvalidParams("line-bundle jet needs line-bundle params".into()));
    }
    if cfg.cone_data().is_some() {
        return Err(SolitonError::InvalidParams("cone data given for a line-bundle jet".into()));
    }
    check_order(order)?;
    let mut rec = Recursion::new(params.two_n(), order);
    rec.a[1] = params.a1();
    rec.b[0] = 1.0;
    rec.f[2] = cfg.f0() / 2.0;

    // level 1: E3 fixes b₂ alone, then E2 fixes a₃; E1 is automatically satisfied
    rec.solve_level(1, &[(Series::B, 2)], &[(2, 1)])?;
    rec.solve_level(1, &[(Series::A, 3)], &[(1, 1)])?;

    for j in 2..=order / 2 {
        let o = 2 * j - 1;
        rec.solve_level(
            j,
            &[(Series::A, 2 * j + 1), (Series::B, 2 * j), (Series::F, 2 * j)],
            &[(0, o), (1, o), (2, o)],
        )?;
    }
    Ok(finish(rec, Branch::LineBundle, params, order))
}

/// Jet for `a = b = 0, a' = b' = 1` with `a'''(0) = a0`, `b'''(0) = b0`.
pub fn build_cone_jet(params: &ModelParams, cfg: &ShootConfig, order: usize) -> Result<SeriesJet> {
    if params.branch() != Branch::Cone {
        return Err(SolitonError::InvalidParams("cone jet needs cone params".into()));
    }
    let data = cfg
        .cone_data()
        .ok_or_else(|| SolitonError::InvalidParams("cone jet needs a'''(0), b'''(0)".into()))?;
    check_order(order)?;
    let two_n = params.two_n();
    if (cfg.f0() - (data.a0 + two_n * data.b0)).abs() > 1e-12 * (1.0 + cfg.f0().abs()) {
        return Err(SolitonError::InvalidParams("cone data built for a different n".into()));
    }
    if cfg.f0() > 0.0 {
        return Err(SolitonError::InvalidCase(format!(
            "a0 + 2n b0 = {} > 0 gives negative scalar curvature at the origin",
            cfg.f0()
        )));
    }
    if data.a0 > data.b0 {
        return Err(SolitonError::InvalidCase(format!(
            "a0 = {} exceeds b0 = {}",
            data.a0, data.b0
        )));
    }

    let mut rec = Recursion::new(two_n, order);
    rec.a[1] = 1.0;
    rec.b[1] = 1.0;
    rec.a[3] = data.a0 / 6.0;
    rec.b[3] = data.b0 / 6.0;
    rec.f[2] = cfg.f0() / 2.0;

    for j in 2..=order / 2 {
        rec.solve_level(
            j,
            &[(Series::A, 2 * j + 1), (Series::B, 2 * j + 1), (Series::F, 2 * j)],
            &[(0, 2 * j), (1, 2 * j + 3), (2, 2 * j + 3)],
        )?;
    }
    if data.a0 == data.b0 {
        // the exact diagonal jet has a ≡ b; remove rounding asymmetry
        for k in (1..rec.len).step_by(2) {
            let mid = 0.5 * (rec.a[k] + rec.b[k]);
            rec.a[k] = mid;
            rec.b[k] = mid;
        }
    }
    Ok(finish(rec, Branch::Cone, params, order))
}

/// Dispatch on the branch with the given order.
pub fn build_jet(params: &ModelParams, cfg: &ShootConfig, order: usize) -> Result<SeriesJet> {
    match params.branch() {
        Branch::LineBundle => build_line_bundle_jet(params, cfg, order),
        Branch::Cone => build_cone_jet(params, cfg, order),
    }
}

fn finish(rec: Recursion, branch: Branch, params: &ModelParams, order: usize) -> SeriesJet {
    let trim = |mut v: Vec<f64>| {
        v.truncate(order + 1);
        v
    };
    let (a, b, f) = (trim(rec.a), trim(rec.b), trim(rec.f));
    let radius = handoff_radius(&a, &b, &f, branch, params.a1());
    SeriesJet {
        branch,
        order,
        n: params.n(),
        a,
        b,
        f,
        handoff_radius: radius,
    }
}

/// Largest `s ≤ 0.1 / max(1, a1)` at which the last retained term of every
/// series is at most `1e-14` of its leading term.
fn handoff_radius(a: &[f64], b: &[f64], f: &[f64], branch: Branch, a1: f64) -> f64 {
    let mut radius = 0.1 / a1.max(1.0);
    let b_lead = match branch {
        Branch::LineBundle => 0,
        Branch::Cone => 1,
    };
    for (c, lead) in [(a, 1usize), (b, b_lead), (f, 2)] {
        let lead_coeff = c.get(lead).copied().unwrap_or(0.0);
        if lead_coeff == 0.0 {
            // identically vanishing series up to rounding (f ≡ 0 when f''(0) = 0)
            continue;
        }
        let last = (lead + 1..c.len()).rev().find(|&k| c[k] != 0.0);
        if let Some(k) = last {
            let bound = (HANDOFF_RATIO * lead_coeff.abs() / c[k].abs()).powf(1.0 / (k - lead) as f64);
            radius = radius.min(bound);
        }
    }
    radius
}

/// State at `0 < s ≤ s₀` from the truncated series.
pub fn evaluate_jet(jet: &SeriesJet, s: f64) -> Result<SolitonState> {
    if !(s > 0.0 && s <= jet.handoff_radius) {
        return Err(SolitonError::OutOfRadius {
            s,
            radius: jet.handoff_radius,
        });
    }
    Ok(jet.evaluate_formal(s))
}

/// Largest absolute defect `|jet'' − rhs(jet)|` over the three equations at `s`.
/// Only meaningful for `s > 0`; not restricted to the handoff radius so the
/// truncation order can be measured.
pub fn jet_residual(jet: &SeriesJet, s: f64, params: &ModelParams, _cfg: &ShootConfig) -> f64 {
    let state = jet.evaluate_formal(s);
    let d2 = jet.second_derivatives(s);
    match eval_rhs(&state, params) {
        Ok(rhs) => (d2.dda - rhs.dda)
            .abs()
            .max((d2.ddb - rhs.ddb).abs())
            .max((d2.ddf - rhs.ddf).abs()),
        Err(_) => f64::INFINITY,
    }
}

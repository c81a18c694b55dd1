//! Runtime invariant suite evaluated on recorded trajectories.

use serde::Serialize;

use crate::integrator::{EventKind, Terminal, Trajectory};
use crate::model::{origin_scalar_curvature, Branch, SolitonState};

/// Samples beyond the first with `Q > q_cap` are not checked: crossing runs
/// approach blow-up there and absolute residuals lose meaning.
pub const DEFAULT_Q_CAP: f64 = 3.0;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const BOUND_TOL: f64 = 1e-8;
pub const INTEGRAL_IDENTITY_TOL: f64 = 1e-5;
pub const CRITICAL_POINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The property does not apply to this run.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Largest observed violation measure; `≤ tol` means pass.
    pub worst: f64,
    pub tol: f64,
    pub first_violation_s: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub checks: Vec<InvariantCheck>,
    pub samples_checked: usize,
    pub q_cap: f64,
    pub s_checked: f64,
}

impl InvariantReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantCheck> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Accumulates the worst violation and where the first one happened.
struct Tally {
    name: &'static str,
    tol: f64,
    worst: f64,
    first: Option<f64>,
    seen: bool,
}

impl Tally {
    fn new(name: &'static str, tol: f64) -> Self {
        Self { name, tol, worst: 0.0, first: None, seen: false }
    }

    /// Record `measure` at `s`; a violation is `measure > tol` or NaN.
    fn add(&mut self, s: f64, measure: f64) {
        self.seen = true;
        if measure.is_nan() || measure > self.worst {
            self.worst = if measure.is_nan() { f64::INFINITY } else { measure };
        }
        if !(measure <= self.tol) && self.first.is_none() {
            self.first = Some(s);
        }
    }

    fn finish(self) -> InvariantCheck {
        let status = if !self.seen {
            CheckStatus::Skipped
        } else if self.first.is_some() {
            CheckStatus::Fail
        } else {
            CheckStatus::Pass
        };
        InvariantCheck {
            name: self.name,
            status,
            worst: self.worst,
            tol: self.tol,
            first_violation_s: self.first,
            note: None,
        }
    }
}

fn skipped(name: &'static str, tol: f64, note: &str) -> InvariantCheck {
    InvariantCheck {
        name,
        status: CheckStatus::Skipped,
        worst: 0.0,
        tol,
        first_violation_s: None,
        note: Some(note.into()),
    }
}

pub fn check_invariants(trajectory: &Trajectory) -> InvariantReport {
    check_invariants_with(trajectory, DEFAULT_Q_CAP)
}

pub fn check_invariants_with(trajectory: &Trajectory, q_cap: f64) -> InvariantReport {
    let samples: Vec<_> = trajectory
        .samples
        .iter()
        .take_while(|x| x.diag.q <= q_cap)
        .collect();
    let params = &trajectory.params;
    let f0 = trajectory.cfg.f0();
    let r0 = origin_scalar_curvature(params, &trajectory.cfg);
    let rtol = trajectory.controls.rel_tol;
    let n = params.n();
    let two_n = params.two_n();
    let line_bundle = params.branch() == Branch::LineBundle;
    let a1 = params.a1();
    let s_checked = samples.last().map_or(0.0, |x| x.state.s);

    let mut h = Tally::new("first_integral", 100.0 * rtol * (1.0 + f0.abs()));
    let r_scale = r0.abs().max(1.0);
    let mut r_id = Tally::new("curvature_identity", IDENTITY_TOL);
    let mut a_inc = Tally::new("a_increasing", 0.0);
    let mut b_inc = Tally::new("b_increasing_below_sqrt_n1", 0.0);
    let mut f_mono = Tally::new(
        "potential_monotone",
        if f0 < 0.0 { 0.0 } else { 100.0 * rtol * (1.0 + s_checked) },
    );
    let mut r_dec = Tally::new("curvature_decreasing", IDENTITY_TOL * r_scale);
    let mut early = Tally::new("early_q_bound", BOUND_TOL);
    let mut df_bound = Tally::new("f_prime_bound", BOUND_TOL);
    let mut q_grad = Tally::new("q_gradient_bound", BOUND_TOL);

    let sqrt_n1 = (n + 1.0).sqrt();
    let sqrt_r0 = r0.max(0.0).sqrt();
    let mut in_grad_window = line_bundle;
    // the f' lower bound needs a and b increasing up to s
    let mut b_rising = true;
    let mut sign_changes = 0usize;
    let mut last_sign = 0i8;
    let mut first_sign_change_extra = None;

    for (i, x) in samples.iter().enumerate() {
        let st = &x.state;
        let d = &x.diag;
        h.add(st.s, d.h.abs());
        r_id.add(st.s, (d.r - (r0 - st.df * st.df)).abs() / r_scale);
        a_inc.add(st.s, if st.da > 0.0 { 0.0 } else { 1.0 });
        if d.q < sqrt_n1 - 1e-6 {
            b_inc.add(st.s, if st.db > 0.0 { 0.0 } else { 1.0 });
        }
        let sign = if st.db > 0.0 { 1 } else if st.db < 0.0 { -1 } else { 0 };
        if sign != 0 {
            if last_sign != 0 && sign != last_sign {
                sign_changes += 1;
                if sign_changes == 2 {
                    first_sign_change_extra = Some(st.s);
                }
            }
            last_sign = sign;
        }
        if f0 < 0.0 {
            f_mono.add(st.s, if st.df < 0.0 { 0.0 } else { 1.0 });
        } else {
            f_mono.add(st.s, st.f.abs());
        }
        b_rising &= st.db > 0.0;
        if b_rising {
            df_bound.add(st.s, st.df.max(-sqrt_r0 - st.df).max(0.0));
        } else {
            df_bound.add(st.s, st.df.max(0.0));
        }
        if let Some(prev) = i.checked_sub(1).map(|j| samples[j]) {
            a_inc.add(st.s, if st.a > prev.state.a { 0.0 } else { 1.0 });
            if f0 < 0.0 {
                f_mono.add(st.s, if st.f < prev.state.f { 0.0 } else { 1.0 });
                r_dec.add(st.s, (d.r - prev.diag.r).max(0.0));
            }
        }
        if line_bundle && st.s <= 1.0 / a1 {
            early.add(st.s, (d.q - a1 * st.s).max(0.0));
        }
        if in_grad_window {
            if (0.0..=1.0).contains(&d.q) && d.dq > 0.0 {
                let bound = a1 * st.f.exp() / st.b.powf(two_n + 1.0);
                q_grad.add(st.s, (d.dq - bound).max(0.0));
            } else {
                in_grad_window = false;
            }
        }
    }

    let b_changes = InvariantCheck {
        name: "b_prime_sign_changes",
        status: if samples.is_empty() {
            CheckStatus::Skipped
        } else if sign_changes <= 1 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        worst: sign_changes as f64,
        tol: 1.0,
        first_violation_s: first_sign_change_extra,
        note: None,
    };

    let mut checks = vec![
        h.finish(),
        r_id.finish(),
        a_inc.finish(),
        b_inc.finish(),
        b_changes,
        f_mono.finish(),
    ];
    checks.push(if f0 < 0.0 {
        r_dec.finish()
    } else {
        skipped("curvature_decreasing", r_dec.tol, "requires f''(0) < 0")
    });
    checks.push(if line_bundle {
        early.finish()
    } else {
        skipped("early_q_bound", BOUND_TOL, "line-bundle branch only")
    });
    checks.push(df_bound.finish());
    checks.push(if line_bundle {
        q_grad.finish()
    } else {
        skipped("q_gradient_bound", BOUND_TOL, "line-bundle branch only")
    });
    checks.push(q_integral_identity(trajectory, &samples.iter().map(|x| x.state).collect::<Vec<_>>()));
    checks.push(critical_points(trajectory, s_checked));
    checks.push(b_turns_after_sqrt_n1(trajectory));

    InvariantReport {
        checks,
        samples_checked: samples.len(),
        q_cap,
        s_checked,
    }
}

/// Cubic Hermite value on `[s0, s1]` from endpoint values and slopes.
fn hermite(s0: f64, s1: f64, y0: f64, d0: f64, y1: f64, d1: f64, s: f64) -> f64 {
    let h = s1 - s0;
    let t = (s - s0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

const GL3_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Checks the integrated form of the `Q` equation,
/// `[b^{2n+1} e^{−f} Q']' = (2n+2) b^{2n−1} e^{−f} (Q³ − Q)`,
/// from the first sample. Each term is rescaled by `e^{f(s)}/b(s)^{2n+1}` as
/// it goes so nothing overflows on long collapsed runs.
fn q_integral_identity(trajectory: &Trajectory, states: &[SolitonState]) -> InvariantCheck {
    let name = "q_integral_identity";
    if states.len() < 2 {
        return skipped(name, INTEGRAL_IDENTITY_TOL, "fewer than two samples");
    }
    let two_n = trajectory.params.two_n();
    let dq = |st: &SolitonState| (st.da * st.b - st.a * st.db) / (st.b * st.b);
    let mut tally = Tally::new(name, INTEGRAL_IDENTITY_TOL);
    let first = states[0];
    // boundary term of the integrated identity, in units of e^{f(s)}/b(s)^{2n+1}
    let mut boundary = dq(&first);
    // (2n+2) e^{f(s)} b(s)^{-(2n+1)} ∫ b^{2n-1} e^{-f} (Q^3 - Q)
    let mut bulk = 0.0;
    // same integral with |Q^3 - Q|, the scale quadrature error is measured against
    let mut bulk_abs = 0.0;
    for w in states.windows(2) {
        let (p, c) = (&w[0], &w[1]);
        let ratio = (c.f - p.f).exp() * (p.b / c.b).powf(two_n + 1.0);
        boundary *= ratio;
        bulk *= ratio;
        bulk_abs *= ratio;
        let half = 0.5 * (c.s - p.s);
        let mid = 0.5 * (c.s + p.s);
        let mut piece = 0.0;
        let mut piece_abs = 0.0;
        for (x, wt) in GL3_X.iter().zip(GL3_W) {
            let t = mid + half * x;
            let a = hermite(p.s, c.s, p.a, p.da, c.a, c.da, t);
            let b = hermite(p.s, c.s, p.b, p.db, c.b, c.db, t);
            let f = hermite(p.s, c.s, p.f, p.df, c.f, c.df, t);
            let q = a / b;
            let term = wt * (c.f - f).exp() * b.powf(two_n - 1.0) / c.b.powf(two_n + 1.0) * (q * q * q - q);
            piece += term;
            piece_abs += term.abs();
        }
        bulk += (two_n + 2.0) * half * piece;
        bulk_abs += (two_n + 2.0) * half * piece_abs;
        let lhs = dq(c);
        // Q' is a difference of two terms; near Q = 1 it cancels far below either
        let terms = (c.da.abs() * c.b + c.a * c.db.abs()) / (c.b * c.b);
        let scale = lhs.abs().max(boundary.abs()).max(bulk_abs).max(terms).max(f64::MIN_POSITIVE);
        tally.add(c.s, (lhs - boundary - bulk).abs() / scale);
    }
    tally.finish()
}

/// Interior maxima of `Q` lie below 1 and interior minima above 1.
fn critical_points(trajectory: &Trajectory, s_checked: f64) -> InvariantCheck {
    let mut tally = Tally::new("q_critical_points", CRITICAL_POINT_TOL);
    for e in trajectory.events.iter().filter(|e| e.s <= s_checked) {
        match e.kind {
            EventKind::QTurnsDown => tally.add(e.s, (e.q - 1.0).max(0.0)),
            EventKind::QTurnsUp => tally.add(e.s, (1.0 - e.q).max(0.0)),
            _ => {}
        }
    }
    let mut c = tally.finish();
    if c.status == CheckStatus::Skipped {
        c.note = Some("no interior critical points of Q".into());
    }
    c
}

/// With `f''(0) < 0`, entering `Q² > n+1` forces `b' < 0` at finite `s`.
fn b_turns_after_sqrt_n1(trajectory: &Trajectory) -> InvariantCheck {
    let name = "b_turns_after_sqrt_n1";
    let tol = 0.0;
    if !(trajectory.cfg.f0() < 0.0) {
        return skipped(name, tol, "requires f''(0) < 0");
    }
    let Some(enter) = trajectory.first_event(EventKind::QReachesSqrtNp1) else {
        return skipped(name, tol, "Q never reaches sqrt(n+1)");
    };
    let turned = trajectory
        .events_of(EventKind::BPrimeZero)
        .any(|e| e.s >= enter.s && e.dq.is_finite())
        || trajectory.samples.iter().any(|x| x.state.s >= enter.s && x.state.db < 0.0);
    let ran_long = matches!(trajectory.terminal, Terminal::ReachedSMax);
    match (turned, ran_long) {
        (true, _) => InvariantCheck {
            name,
            status: CheckStatus::Pass,
            worst: 0.0,
            tol,
            first_violation_s: None,
            note: None,
        },
        (false, true) => InvariantCheck {
            name,
            status: CheckStatus::Fail,
            worst: 1.0,
            tol,
            first_violation_s: Some(enter.s),
            note: Some("b still increasing at s_max".into()),
        },
        (false, false) => skipped(name, tol, "run ended before b could turn"),
    }
}

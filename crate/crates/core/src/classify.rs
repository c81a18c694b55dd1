//! Regime classification, bisection shooting on `f''(0)` and parameter sweeps.

use serde::Serialize;

use crate::error::{Result, SolitonError};
use crate::exec::{self, Execution};
use crate::integrator::{
    integrate, integrate_with, locate_root, EventKind, EventRecord, Flow, IntegrationControls, StepInfo,
    StepObserver, Terminal, Trajectory,
};
use crate::model::{Branch, ModelParams, ShootConfig, SolitonState};
use crate::series::{build_jet, DEFAULT_ORDER};

pub const DELTA_CROSS: f64 = 1e-9;
pub const DELTA_COL: f64 = 1e-9;
/// Undetermined runs are retried with doubled `s_max` up to this factor.
pub const S_MAX_GROWTH_CAP: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Crossing,
    Collapsed,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Witness {
    Event(EventRecord),
    /// A sample with `Q > 1 + δ`.
    Sample { s: f64, q: f64 },
    /// The turn-down event, confirmed by `Q ≤ 1 − δ` at `s`.
    TurnConfirmed { turn: EventRecord, s: f64, q: f64 },
    Terminal(Terminal),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub label: Regime,
    pub witness: Witness,
    pub q_max_seen: f64,
    /// `s` at which the label was decided.
    pub s_decided: Option<f64>,
}

/// Incremental classifier; the first determination is final.
#[derive(Debug, Clone)]
pub struct RegimeTracker {
    delta_cross: f64,
    delta_col: f64,
    pending_turn: Option<EventRecord>,
    decided: Option<(Regime, Witness, f64)>,
    q_max: f64,
    stop_on_decision: bool,
    terminal: Option<Terminal>,
}

impl Default for RegimeTracker {
    fn default() -> Self {
        Self::new(DELTA_CROSS, DELTA_COL)
    }
}

impl RegimeTracker {
    pub fn new(delta_cross: f64, delta_col: f64) -> Self {
        Self {
            delta_cross,
            delta_col,
            pending_turn: None,
            decided: None,
            q_max: f64::NEG_INFINITY,
            stop_on_decision: false,
            terminal: None,
        }
    }

    /// Ask the integrator to stop as soon as a label is decided.
    pub fn stopping(mut self) -> Self {
        self.stop_on_decision = true;
        self
    }

    pub fn is_decided(&self) -> bool {
        self.decided.is_some()
    }

    fn decide(&mut self, label: Regime, witness: Witness, s: f64) {
        if self.decided.is_none() {
            self.decided = Some((label, witness, s));
        }
    }

    pub fn observe_sample(&mut self, s: f64, q: f64) {
        self.q_max = self.q_max.max(q);
        if self.decided.is_some() {
            return;
        }
        if q > 1.0 + self.delta_cross {
            self.decide(Regime::Crossing, Witness::Sample { s, q }, s);
        } else if let Some(turn) = self.pending_turn {
            if q <= 1.0 - self.delta_col {
                self.decide(Regime::Collapsed, Witness::TurnConfirmed { turn, s, q }, s);
            }
        }
    }

    pub fn observe_event(&mut self, ev: &EventRecord) {
        if self.decided.is_some() {
            self.q_max = self.q_max.max(ev.q);
            return;
        }
        match ev.kind {
            EventKind::QCrossesOne if ev.dq > 0.0 => {
                self.q_max = self.q_max.max(ev.q);
                self.decide(Regime::Crossing, Witness::Event(*ev), ev.s);
                return;
            }
            EventKind::QTurnsDown if ev.q < 1.0 => self.pending_turn = Some(*ev),
            EventKind::QTurnsUp => self.pending_turn = None,
            _ => {}
        }
        self.observe_sample(ev.s, ev.q);
    }

    pub fn classification(&self) -> Classification {
        let q_max_seen = self.q_max;
        match self.decided {
            Some((label, witness, s)) => Classification {
                label,
                witness,
                q_max_seen,
                s_decided: Some(s),
            },
            None => Classification {
                label: Regime::Undetermined,
                witness: Witness::Terminal(self.terminal.unwrap_or(Terminal::ReachedSMax)),
                q_max_seen,
                s_decided: None,
            },
        }
    }
}

impl StepObserver for RegimeTracker {
    fn on_start(&mut self, state: &SolitonState) -> Flow {
        self.observe_sample(state.s, state.a / state.b);
        Flow::Continue
    }

    fn on_step(&mut self, step: &StepInfo<'_>) -> Flow {
        for ev in step.events {
            self.observe_event(ev);
        }
        self.observe_sample(step.end.s, step.end.a / step.end.b);
        if self.stop_on_decision && self.is_decided() {
            Flow::Stop
        } else {
            Flow::Continue
        }
    }

    fn on_finish(&mut self, terminal: Terminal, _last: &SolitonState) {
        self.terminal = Some(terminal);
    }
}

/// Classify a recorded trajectory.
pub fn classify(trajectory: &Trajectory) -> Classification {
    let mut tracker = RegimeTracker::default();
    let mut events = trajectory.events.iter().peekable();
    for sample in &trajectory.samples {
        while let Some(ev) = events.next_if(|e| e.s <= sample.state.s) {
            tracker.observe_event(ev);
        }
        tracker.observe_sample(sample.state.s, sample.diag.q);
    }
    for ev in events {
        tracker.observe_event(ev);
    }
    tracker.terminal = Some(trajectory.terminal);
    tracker.classification()
}

/// Streamed classification of one `f''(0)` value, stopping once decided.
pub fn classify_f0(params: &ModelParams, f0: f64, controls: &IntegrationControls, order: usize) -> Result<Classification> {
    let cfg = ShootConfig::line_bundle(f0)?;
    let jet = build_jet(params, &cfg, order)?;
    let mut tracker = RegimeTracker::default().stopping();
    integrate_with(&jet, params, controls, &mut tracker)?;
    Ok(tracker.classification())
}

/// As [`classify_f0`], doubling `s_max` on `Undetermined` up to the growth cap.
/// Returns the final classification and the `s_max` used.
pub fn classify_f0_growing(
    params: &ModelParams,
    f0: f64,
    controls: &IntegrationControls,
    order: usize,
) -> Result<(Classification, f64)> {
    let mut ctl = *controls;
    loop {
        let c = classify_f0(params, f0, &ctl, order)?;
        if c.label != Regime::Undetermined || ctl.s_max >= S_MAX_GROWTH_CAP * controls.s_max {
            return Ok((c, ctl.s_max));
        }
        ctl.s_max *= 2.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootOptions {
    pub f0_low: f64,
    pub f0_high: f64,
    pub tol_f0: f64,
    pub max_iterations: usize,
    pub series_order: usize,
    /// Half-width of the band `|Q − 1| ≤ band` used for escape distances.
    pub escape_band: f64,
    /// Escape distances are measured up to this `s`; `None` disables them.
    pub escape_s_cap: Option<f64>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            f0_low: -100.0,
            f0_high: 0.0,
            tol_f0: 1e-10,
            max_iterations: 200,
            series_order: DEFAULT_ORDER,
            escape_band: 0.1,
            escape_s_cap: Some(1e7),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub f0_low: f64,
    pub f0_high: f64,
    pub width: f64,
    pub f0_mid: f64,
    pub mid_label: Regime,
    /// Both stored endpoints re-classified as Collapsed and Crossing.
    pub verified: bool,
    /// Where the midpoint trajectory leaves `|Q − 1| ≤ band`.
    pub escape_s: Option<f64>,
    pub s_max_used: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootResult {
    pub f0_low: f64,
    pub f0_high: f64,
    pub f0_star: f64,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    /// Escape distance at `f0_star`, the midpoint of the final bracket.
    pub final_escape_s: Option<f64>,
    pub critical_trajectory: Trajectory,
}

impl ShootResult {
    /// `(bracket width, escape distance of its midpoint)` for every bracket visited.
    pub fn escape_profile(&self) -> Vec<(f64, Option<f64>)> {
        self.log
            .iter()
            .map(|r| (r.width, r.escape_s))
            .chain(std::iter::once((self.f0_high - self.f0_low, self.final_escape_s)))
            .collect()
    }

    /// Escape distance for the first bracket whose width is at most `width`.
    pub fn escape_at_width(&self, width: f64) -> Option<(f64, Option<f64>)> {
        self.escape_profile().into_iter().find(|&(w, _)| w <= width)
    }

    pub fn all_verified(&self) -> bool {
        self.log.iter().all(|r| r.verified)
    }
}

struct EscapeObserver {
    band: f64,
    entered: bool,
    escape: Option<f64>,
    tol: f64,
    tracker: RegimeTracker,
}

impl StepObserver for EscapeObserver {
    fn on_start(&mut self, state: &SolitonState) -> Flow {
        self.entered = (state.a / state.b - 1.0).abs() <= self.band;
        self.tracker.on_start(state)
    }

    fn on_step(&mut self, step: &StepInfo<'_>) -> Flow {
        let dev = |s: &SolitonState| (s.a / s.b - 1.0).abs() - self.band;
        let (g0, g1) = (dev(step.start), dev(step.end));
        if !self.entered {
            self.entered = g1 <= 0.0;
            // decided before ever entering the band: there is nothing to escape from
            if self.tracker.on_step(step) == Flow::Stop && !self.entered {
                return Flow::Stop;
            }
            return Flow::Continue;
        }
        if g1 > 0.0 {
            let s = if g0 < 0.0 {
                locate_root(step.start.s, step.end.s, |t| dev(&step.dense.state(t)), self.tol).unwrap_or(step.end.s)
            } else {
                step.start.s
            };
            self.escape = Some(s);
            return Flow::Stop;
        }
        Flow::Continue
    }
}

/// `s` where the trajectory for `f0` first leaves `|Q − 1| ≤ band` after entering it.
pub fn escape_distance(
    params: &ModelParams,
    f0: f64,
    controls: &IntegrationControls,
    order: usize,
    band: f64,
    s_cap: f64,
) -> Result<Option<f64>> {
    let cfg = ShootConfig::line_bundle(f0)?;
    let jet = build_jet(params, &cfg, order)?;
    let ctl = controls.with_s_max(s_cap);
    let mut obs = EscapeObserver {
        band,
        entered: false,
        escape: None,
        tol: 1e-9,
        tracker: RegimeTracker::default().stopping(),
    };
    integrate_with(&jet, params, &ctl, &mut obs)?;
    Ok(obs.escape)
}

/// Bisect on `f''(0)` between a collapsed and a crossing endpoint.
pub fn shoot_critical(params: &ModelParams, controls: &IntegrationControls, opts: &ShootOptions) -> Result<ShootResult> {
    if params.branch() != Branch::LineBundle || !params.admits_critical_soliton() {
        return Err(SolitonError::NotApplicable(format!(
            "need a line bundle with a'(0) > n + 1, got a'(0) = {} and n = {}",
            params.a1(),
            params.n()
        )));
    }
    if !(opts.f0_low < opts.f0_high && opts.f0_high <= 0.0) {
        return Err(SolitonError::BracketInvalid(format!(
            "need f0_low < f0_high <= 0, got [{}, {}]",
            opts.f0_low, opts.f0_high
        )));
    }
    if !(opts.tol_f0 > 0.0) {
        return Err(SolitonError::InvalidParams("tol_f0 must be positive".into()));
    }
    let order = opts.series_order;
    let classify_at = |f0: f64| classify_f0_growing(params, f0, controls, order);

    let expect = |f0: f64, want: Regime| -> Result<f64> {
        let (c, s_used) = classify_at(f0)?;
        match c.label {
            l if l == want => Ok(s_used),
            Regime::Undetermined => Err(SolitonError::Inconclusive { f0, s_max: s_used }),
            other => Err(SolitonError::BracketInvalid(format!(
                "endpoint f0 = {f0} classifies as {other:?}, expected {want:?}"
            ))),
        }
    };
    expect(opts.f0_low, Regime::Collapsed)?;
    expect(opts.f0_high, Regime::Crossing)?;

    let (mut lo, mut hi) = (opts.f0_low, opts.f0_high);
    let mut log = Vec::new();
    let mut iteration = 0;
    while hi - lo > opts.tol_f0 && iteration < opts.max_iterations {
        iteration += 1;
        let width = hi - lo;
        let mid = lo + 0.5 * width;
        if mid <= lo || mid >= hi {
            break;
        }
        let (c, s_used) = classify_at(mid)?;
        let escape_s = match opts.escape_s_cap {
            Some(cap) => escape_distance(params, mid, controls, order, opts.escape_band, cap)?,
            None => None,
        };
        match c.label {
            Regime::Collapsed => lo = mid,
            Regime::Crossing => hi = mid,
            Regime::Undetermined => return Err(SolitonError::Inconclusive { f0: mid, s_max: s_used }),
        }
        let lo_ok = classify_at(lo)?.0.label == Regime::Collapsed;
        let hi_ok = classify_at(hi)?.0.label == Regime::Crossing;
        let rec = IterationRecord {
            iteration,
            f0_low: lo,
            f0_high: hi,
            width,
            f0_mid: mid,
            mid_label: c.label,
            verified: lo_ok && hi_ok,
            escape_s,
            s_max_used: s_used,
        };
        log::debug!("shoot iteration {iteration}: [{lo}, {hi}] width {width:e} mid {:?} escape {escape_s:?}", c.label);
        log.push(rec);
        if !rec.verified {
            return Err(SolitonError::BracketInvalid(format!(
                "endpoint re-verification failed at iteration {iteration}: [{lo}, {hi}]"
            )));
        }
    }

    let f0_star = 0.5 * (lo + hi);
    let final_escape_s = match opts.escape_s_cap {
        Some(cap) => escape_distance(params, f0_star, controls, order, opts.escape_band, cap)?,
        None => None,
    };
    let cfg = ShootConfig::line_bundle(f0_star)?;
    let jet = build_jet(params, &cfg, order)?;
    let critical_trajectory = integrate(&jet, params, &cfg, controls)?;
    Ok(ShootResult {
        f0_low: lo,
        f0_high: hi,
        f0_star,
        iterations: iteration,
        log,
        final_escape_s,
        critical_trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub f0: f64,
    pub classification: Classification,
    pub s_max_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Consecutive grid pairs `(f0_i, f0_{i+1})` whose decided labels differ.
    pub switches: Vec<(f64, f64)>,
    /// First Crossing → Collapsed switch as `(collapsed f0, crossing f0)`.
    pub boundary: Option<(f64, f64)>,
    /// Observations contradicting a single Crossing-then-Collapsed switch.
    pub violations: Vec<String>,
}

/// Classify every grid point; the grid must be sorted from `0` toward `−∞`.
pub fn sweep(params: &ModelParams, f0_grid: &[f64], controls: &IntegrationControls, order: usize, exec: Execution) -> Result<SweepReport> {
    if f0_grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(SolitonError::InvalidParams("sweep grid must be sorted descending".into()));
    }
    let results = exec::map(exec, f0_grid, |&f0| classify_f0_growing(params, f0, controls, order));
    let mut points = Vec::with_capacity(results.len());
    for (&f0, r) in f0_grid.iter().zip(results) {
        let (classification, s_max_used) = r?;
        points.push(SweepPoint {
            f0,
            classification,
            s_max_used,
        });
    }

    let decided: Vec<&SweepPoint> = points
        .iter()
        .filter(|p| p.classification.label != Regime::Undetermined)
        .collect();
    let mut switches = Vec::new();
    let mut violations = Vec::new();
    let mut boundary = None;
    for w in decided.windows(2) {
        let (x, y) = (w[0], w[1]);
        if x.classification.label == y.classification.label {
            continue;
        }
        switches.push((x.f0, y.f0));
        if x.classification.label == Regime::Crossing && boundary.is_none() {
            boundary = Some((y.f0, x.f0));
        } else {
            violations.push(format!(
                "{:?} at f0 = {} followed by {:?} at f0 = {}",
                x.classification.label, x.f0, y.classification.label, y.f0
            ));
        }
    }
    for p in points.iter().filter(|p| p.classification.label == Regime::Undetermined) {
        violations.push(format!("undetermined at f0 = {}", p.f0));
    }
    for v in &violations {
        log::warn!("sweep: {v}");
    }
    Ok(SweepReport {
        points,
        switches,
        boundary,
        violations,
    })
}

/// Evenly spaced grid from `hi` down to `lo` with `count` points.
pub fn descending_grid(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..count)
            .map(|i| hi + (lo - hi) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

//! Adaptive Dormand–Prince 5(4) integration with dense output and event location.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolitonError};
use crate::model::{diagnostics, eval_rhs, q_ratio, Diagnostics, ModelParams, ShootConfig, SolitonState};
use crate::series::{evaluate_jet, SeriesJet};

const MAX_CONSECUTIVE_REJECTS: usize = 60;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationControls {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub s_max: f64,
    pub max_steps: usize,
    pub blowup_threshold: f64,
    pub event_tol: f64,
    /// Stop with `EventStop` once `Q` reaches this value.
    pub stop_q_above: Option<f64>,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            s_max: 60.0,
            max_steps: 5_000_000,
            blowup_threshold: 1e8,
            event_tol: 1e-12,
            stop_q_above: None,
        }
    }
}

impl IntegrationControls {
    pub fn with_s_max(mut self, s_max: f64) -> Self {
        self.s_max = s_max;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_stop_q_above(mut self, q: f64) -> Self {
        self.stop_q_above = Some(q);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1e-14..=1e-3).contains(&self.rel_tol) || !(1e-20..=1e-3).contains(&self.abs_tol) {
            return Err(SolitonError::InvalidControls(format!(
                "need rtol in [1e-14, 1e-3] and atol in [1e-20, 1e-3], got rtol={} atol={}",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.s_max.is_finite() && self.s_max > 0.0) {
            return Err(SolitonError::InvalidControls(format!("s_max must be positive, got {}", self.s_max)));
        }
        if !(self.blowup_threshold > 1.0) {
            return Err(SolitonError::InvalidControls("blowup threshold must exceed 1".into()));
        }
        if !(self.event_tol > 0.0) || self.max_steps == 0 {
            return Err(SolitonError::InvalidControls("event_tol and max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// `Q − 1` changes sign.
    QCrossesOne,
    /// `Q'` changes sign from positive to negative: an interior maximum of `Q`.
    QTurnsDown,
    /// `Q'` changes sign from negative to positive: an interior minimum of `Q`.
    QTurnsUp,
    /// `b'` changes sign.
    BPrimeZero,
    /// `Q² − (n + 1)` changes sign.
    QReachesSqrtNp1,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::QCrossesOne,
        EventKind::QTurnsDown,
        EventKind::QTurnsUp,
        EventKind::BPrimeZero,
        EventKind::QReachesSqrtNp1,
    ];

    fn trigger(self, y: &[f64; 6], n: f64) -> f64 {
        let [a, da, b, db, _, _] = *y;
        match self {
            EventKind::QCrossesOne => a / b - 1.0,
            EventKind::QTurnsDown | EventKind::QTurnsUp => (da * b - a * db) / (b * b),
            EventKind::BPrimeZero => db,
            EventKind::QReachesSqrtNp1 => (a / b).powi(2) - (n + 1.0),
        }
    }

    fn fires(self, g0: f64, g1: f64) -> bool {
        let strict = g0 != 0.0 && g1 != 0.0 && (g0 < 0.0) != (g1 < 0.0);
        match self {
            EventKind::QTurnsDown => strict && g0 > 0.0,
            EventKind::QTurnsUp => strict && g0 < 0.0,
            _ => strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub s: f64,
    pub state: SolitonState,
    pub q: f64,
    pub dq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    ReachedSMax,
    Blowup,
    EventStop,
    /// Step size collapsed, typically at a finite-distance degeneration.
    StepUnderflow,
    /// An observer ended the run.
    ObserverStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: SolitonState,
    pub diag: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub cfg: ShootConfig,
    pub jet: SeriesJet,
    pub controls: IntegrationControls,
    pub samples: Vec<Sample>,
    pub events: Vec<EventRecord>,
    pub terminal: Terminal,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn s_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|x| x.state.s)
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &EventRecord> + '_ {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn first_event(&self, kind: EventKind) -> Option<&EventRecord> {
        self.events_of(kind).next()
    }

    /// Samples with `s` in `[s_a, s_b]`.
    pub fn window(&self, s_a: f64, s_b: f64) -> impl Iterator<Item = &Sample> + '_ {
        self.samples
            .iter()
            .filter(move |x| x.state.s >= s_a && x.state.s <= s_b)
    }
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep {
    pub s0: f64,
    pub h: f64,
    rcont: [[f64; 6]; 5],
}

impl DenseStep {
    pub fn s1(&self) -> f64 {
        self.s0 + self.h
    }

    pub fn eval(&self, s: f64) -> [f64; 6] {
        let theta = (s - self.s0) / self.h;
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        let mut y = [0.0; 6];
        for i in 0..6 {
            y[i] = r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])));
        }
        y
    }

    pub fn state(&self, s: f64) -> SolitonState {
        SolitonState::from_array(s, &self.eval(s))
    }
}

/// One accepted step as seen by an observer.
pub struct StepInfo<'a> {
    pub dense: &'a DenseStep,
    pub start: &'a SolitonState,
    pub end: &'a SolitonState,
    /// Events inside `(start.s, end.s]`, sorted by `s`.
    pub events: &'a [EventRecord],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

pub trait StepObserver {
    fn on_start(&mut self, _state: &SolitonState) -> Flow {
        Flow::Continue
    }

    fn on_step(&mut self, step: &StepInfo<'_>) -> Flow;

    fn on_finish(&mut self, _terminal: Terminal, _last: &SolitonState) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub terminal: Terminal,
    pub last: SolitonState,
    pub steps: usize,
    pub rejected: usize,
}

fn rhs(s: f64, y: &[f64; 6], params: &ModelParams) -> Option<[f64; 6]> {
    let state = SolitonState::from_array(s, y);
    let d = eval_rhs(&state, params).ok()?;
    let out = [y[1], d.dda, y[3], d.ddb, y[5], d.ddf];
    out.iter().all(|v| v.is_finite()).then_some(out)
}

mod tableau {
    pub const C2: f64 = 1.0 / 5.0;
    pub const C3: f64 = 3.0 / 10.0;
    pub const C4: f64 = 4.0 / 5.0;
    pub const C5: f64 = 8.0 / 9.0;
    pub const A21: f64 = 1.0 / 5.0;
    pub const A31: f64 = 3.0 / 40.0;
    pub const A32: f64 = 9.0 / 40.0;
    pub const A41: f64 = 44.0 / 45.0;
    pub const A42: f64 = -56.0 / 15.0;
    pub const A43: f64 = 32.0 / 9.0;
    pub const A51: f64 = 19372.0 / 6561.0;
    pub const A52: f64 = -25360.0 / 2187.0;
    pub const A53: f64 = 64448.0 / 6561.0;
    pub const A54: f64 = -212.0 / 729.0;
    pub const A61: f64 = 9017.0 / 3168.0;
    pub const A62: f64 = -355.0 / 33.0;
    pub const A63: f64 = 46732.0 / 5247.0;
    pub const A64: f64 = 49.0 / 176.0;
    pub const A65: f64 = -5103.0 / 18656.0;
    pub const A71: f64 = 35.0 / 384.0;
    pub const A73: f64 = 500.0 / 1113.0;
    pub const A74: f64 = 125.0 / 192.0;
    pub const A75: f64 = -2187.0 / 6784.0;
    pub const A76: f64 = 11.0 / 84.0;
    pub const E1: f64 = 71.0 / 57600.0;
    pub const E3: f64 = -71.0 / 16695.0;
    pub const E4: f64 = 71.0 / 1920.0;
    pub const E5: f64 = -17253.0 / 339200.0;
    pub const E6: f64 = 22.0 / 525.0;
    pub const E7: f64 = -1.0 / 40.0;
    pub const D1: f64 = -12715105075.0 / 11282082432.0;
    pub const D3: f64 = 87487479700.0 / 32700410799.0;
    pub const D4: f64 = -10690763975.0 / 1880347072.0;
    pub const D5: f64 = 701980252875.0 / 199316789632.0;
    pub const D6: f64 = -1453857185.0 / 822651844.0;
    pub const D7: f64 = 69997945.0 / 29380423.0;
}

struct Attempt {
    y1: [f64; 6],
    k7: [f64; 6],
    err: f64,
    dense: DenseStep,
}

fn combine(y: &[f64; 6], h: f64, terms: &[(f64, &[f64; 6])]) -> [f64; 6] {
    let mut out = *y;
    for i in 0..6 {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn admissible(y: &[f64; 6]) -> bool {
    y[0] > 0.0 && y[2] > 0.0 && y.iter().all(|v| v.is_finite())
}

fn try_step(
    s: f64,
    y: &[f64; 6],
    k1: &[f64; 6],
    h: f64,
    params: &ModelParams,
    ctl: &IntegrationControls,
) -> Option<Attempt> {
    use tableau::*;
    let stage = |c: f64, yy: [f64; 6]| -> Option<[f64; 6]> {
        if !admissible(&yy) {
            return None;
        }
        rhs(s + c * h, &yy, params)
    };
    let k2 = stage(C2, combine(y, h, &[(A21, k1)]))?;
    let k3 = stage(C3, combine(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = stage(C4, combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = stage(C5, combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = stage(1.0, combine(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
    let y1 = combine(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = stage(1.0, y1)?;

    let mut sq = 0.0;
    for i in 0..6 {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sk = ctl.abs_tol + ctl.rel_tol * y[i].abs().max(y1[i].abs());
        sq += (e / sk).powi(2);
    }
    let err = (sq / 6.0).sqrt();
    if !err.is_finite() {
        return None;
    }

    let mut rcont = [[0.0; 6]; 5];
    for i in 0..6 {
        let ydiff = y1[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        rcont[0][i] = y[i];
        rcont[1][i] = ydiff;
        rcont[2][i] = bspl;
        rcont[3][i] = ydiff - h * k7[i] - bspl;
        rcont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Some(Attempt {
        y1,
        k7,
        err,
        dense: DenseStep { s0: s, h, rcont },
    })
}

fn initial_step(s: f64, y: &[f64; 6], k1: &[f64; 6], params: &ModelParams, ctl: &IntegrationControls, hmax: f64) -> f64 {
    let norm = |v: &[f64; 6]| {
        let sq: f64 = (0..6)
            .map(|i| (v[i] / (ctl.abs_tol + ctl.rel_tol * y[i].abs())).powi(2))
            .sum();
        (sq / 6.0).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(k1);
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    // stay well inside the region a, b > 0
    h0 = h0.min(0.5 * y[0].min(y[2]) / (k1[0].abs() + k1[2].abs() + 1e-300)).min(hmax);
    let y1 = combine(y, h0, &[(1.0, k1)]);
    let d2 = match admissible(&y1).then(|| rhs(s + h0, &y1, params)).flatten() {
        Some(k) => {
            let diff: [f64; 6] = std::array::from_fn(|i| k[i] - k1[i]);
            norm(&diff) / h0
        }
        None => return h0,
    };
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(0.2)
    };
    (100.0 * h0).min(h1).min(hmax)
}

/// Refine a sign change of `g` on `[s0, s1]` to width `tol` by bisection.
pub fn locate_root<G: Fn(f64) -> f64>(s0: f64, s1: f64, g: G, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (s0, s1);
    let mut glo = g(lo);
    let ghi = g(hi);
    if !(glo.is_finite() && ghi.is_finite()) || glo == 0.0 || ghi == 0.0 || (glo < 0.0) == (ghi < 0.0) {
        return Err(SolitonError::NoSignChange { s0, s1 });
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm < 0.0) == (glo < 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Locate an event of `kind` inside an accepted step using its dense output.
pub fn locate_event(step: &DenseStep, kind: EventKind, params: &ModelParams, event_tol: f64) -> Result<EventRecord> {
    let n = params.n();
    let g = |s: f64| kind.trigger(&step.eval(s), n);
    let (s0, s1) = (step.s0, step.s1());
    if !kind.fires(g(s0), g(s1)) {
        return Err(SolitonError::NoSignChange { s0, s1 });
    }
    let s = locate_root(s0, s1, g, event_tol)?;
    let state = step.state(s);
    let (q, dq) = q_ratio(&state)?;
    Ok(EventRecord { kind, s, state, q, dq })
}

/// Run the integrator from the jet's handoff state, streaming steps to `observer`.
pub fn integrate_with<O: StepObserver + ?Sized>(
    jet: &SeriesJet,
    params: &ModelParams,
    controls: &IntegrationControls,
    observer: &mut O,
) -> Result<RunOutcome> {
    controls.validate()?;
    if params.branch() != jet.branch() {
        return Err(SolitonError::InvalidParams("jet and params disagree on the branch".into()));
    }
    let s_start = jet.handoff_radius();
    let start = evaluate_jet(jet, s_start)?;
    let mut s = s_start;
    let mut y = start.to_array();
    let mut k1 = rhs(s, &y, params).ok_or(SolitonError::DegenerateState { s, a: y[0], b: y[2] })?;
    let s_end = controls.s_max;
    let n = params.n();

    if observer.on_start(&start) == Flow::Stop {
        observer.on_finish(Terminal::ObserverStop, &start);
        return Ok(RunOutcome { terminal: Terminal::ObserverStop, last: start, steps: 0, rejected: 0 });
    }
    if s >= s_end {
        observer.on_finish(Terminal::ReachedSMax, &start);
        return Ok(RunOutcome { terminal: Terminal::ReachedSMax, last: start, steps: 0, rejected: 0 });
    }

    let mut h = initial_step(s, &y, &k1, params, controls, s_end - s);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut consecutive = 0usize;
    let mut last_rejected = false;
    let mut events = Vec::new();

    loop {
        if steps >= controls.max_steps {
            return Err(SolitonError::MaxSteps(controls.max_steps));
        }
        if h < 1e-14 * s.abs().max(1.0) || consecutive >= MAX_CONSECUTIVE_REJECTS {
            let last = SolitonState::from_array(s, &y);
            observer.on_finish(Terminal::StepUnderflow, &last);
            return Ok(RunOutcome { terminal: Terminal::StepUnderflow, last, steps, rejected });
        }
        let final_step = s + h >= s_end;
        if final_step {
            h = s_end - s;
        }
        let att = match try_step(s, &y, &k1, h, params, controls) {
            Some(a) if a.err <= 1.0 => a,
            other => {
                rejected += 1;
                consecutive += 1;
                last_rejected = true;
                h *= match other {
                    Some(a) => (SAFETY * a.err.powf(-0.2)).clamp(FAC_MIN, 1.0),
                    None => 0.5,
                };
                continue;
            }
        };
        consecutive = 0;
        steps += 1;
        let dense = att.dense;
        let s_new = if final_step { s_end } else { s + h };
        let start_state = SolitonState::from_array(s, &y);
        let mut end_state = SolitonState::from_array(s_new, &att.y1);

        events.clear();
        for kind in EventKind::ALL {
            if kind.fires(kind.trigger(&y, n), kind.trigger(&att.y1, n)) {
                if let Ok(ev) = locate_event(&dense, kind, params, controls.event_tol) {
                    events.push(ev);
                }
            }
        }
        let mut terminal = None;
        if let Some(qcap) = controls.stop_q_above {
            let g = |yy: &[f64; 6]| yy[0] / yy[2] - qcap;
            if g(&y) < 0.0 && g(&att.y1) >= 0.0 {
                let sc = if g(&att.y1) == 0.0 {
                    s_new
                } else {
                    locate_root(s, s_new, |t| g(&dense.eval(t)), controls.event_tol)?
                };
                events.retain(|e| e.s <= sc);
                end_state = dense.state(sc);
                terminal = Some(Terminal::EventStop);
            }
        }
        events.sort_by(|a, b| a.s.total_cmp(&b.s));

        let big = [end_state.a, end_state.b, end_state.da.abs(), end_state.db.abs(), end_state.df.abs()]
            .into_iter()
            .fold(0.0f64, f64::max);
        if terminal.is_none() && big > controls.blowup_threshold {
            terminal = Some(Terminal::Blowup);
        }
        if terminal.is_none() && final_step {
            terminal = Some(Terminal::ReachedSMax);
        }

        let info = StepInfo {
            dense: &dense,
            start: &start_state,
            end: &end_state,
            events: &events,
        };
        if observer.on_step(&info) == Flow::Stop && terminal.is_none() {
            terminal = Some(Terminal::ObserverStop);
        }
        if let Some(t) = terminal {
            observer.on_finish(t, &end_state);
            return Ok(RunOutcome { terminal: t, last: end_state, steps, rejected });
        }

        let fac = (SAFETY * att.err.max(1e-10).powf(-0.2)).clamp(FAC_MIN, if last_rejected { 1.0 } else { FAC_MAX });
        last_rejected = false;
        s = s_new;
        y = att.y1;
        k1 = att.k7;
        h = (h * fac).min(s_end - s);
    }
}

struct Recorder<'a> {
    params: &'a ModelParams,
    cfg: &'a ShootConfig,
    samples: Vec<Sample>,
    events: Vec<EventRecord>,
    error: Option<SolitonError>,
}

impl Recorder<'_> {
    fn push(&mut self, state: SolitonState) {
        if self.samples.last().is_some_and(|p| state.s <= p.state.s) {
            return;
        }
        match diagnostics(&state, self.params, self.cfg) {
            Ok(diag) => self.samples.push(Sample { state, diag }),
            Err(e) => {
                self.error.get_or_insert(e);
            }
        }
    }
}

impl StepObserver for Recorder<'_> {
    fn on_start(&mut self, state: &SolitonState) -> Flow {
        self.push(*state);
        Flow::Continue
    }

    fn on_step(&mut self, step: &StepInfo<'_>) -> Flow {
        for ev in step.events {
            self.push(ev.state);
            self.events.push(*ev);
        }
        self.push(*step.end);
        Flow::Continue
    }
}

/// Integrate from the handoff radius and record every accepted step and event.
pub fn integrate(
    jet: &SeriesJet,
    params: &ModelParams,
    cfg: &ShootConfig,
    controls: &IntegrationControls,
) -> Result<Trajectory> {
    let mut rec = Recorder {
        params,
        cfg,
        samples: Vec::new(),
        events: Vec::new(),
        error: None,
    };
    let outcome = integrate_with(jet, params, controls, &mut rec)?;
    if let Some(e) = rec.error {
        return Err(e);
    }
    Ok(Trajectory {
        params: *params,
        cfg: *cfg,
        jet: jet.clone(),
        controls: *controls,
        samples: rec.samples,
        events: rec.events,
        terminal: outcome.terminal,
        steps: outcome.steps,
        rejected: outcome.rejected,
    })
}

/// Build the jet for `(params, cfg)` at `order` and integrate it.
pub fn solve(
    params: &ModelParams,
    cfg: &ShootConfig,
    order: usize,
    controls: &IntegrationControls,
) -> Result<Trajectory> {
    let jet = crate::series::build_jet(params, cfg, order)?;
    integrate(&jet, params, cfg, controls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::DEFAULT_ORDER;

    fn lb(n: u32, k: u32, p: u32, f0: f64, ctl: IntegrationControls) -> Trajectory {
        let params = ModelParams::line_bundle(n, k, p).unwrap();
        let cfg = ShootConfig::line_bundle(f0).unwrap();
        solve(&params, &cfg, DEFAULT_ORDER, &ctl).unwrap()
    }

    #[test]
    fn euclidean_run_is_exact() {
        let params = ModelParams::cone(1.0).unwrap();
        let cfg = ShootConfig::cone(1.0, 0.0, 0.0).unwrap();
        let ctl = IntegrationControls::default().with_s_max(10.0);
        let t = solve(&params, &cfg, DEFAULT_ORDER, &ctl).unwrap();
        assert_eq!(t.terminal, Terminal::ReachedSMax);
        assert_eq!(t.last().state.s, 10.0);
        let err = t.samples.iter().map(|x| (x.state.a - x.state.s).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err:e}");
        assert!(t.events.is_empty());
    }

    #[test]
    fn samples_strictly_increase_and_start_at_handoff() {
        let t = lb(1, 3, 2, -1.0, IntegrationControls::default().with_s_max(20.0));
        assert_eq!(t.first().state.s, t.jet.handoff_radius());
        assert!(t.samples.windows(2).all(|w| w[0].state.s < w[1].state.s));
    }

    #[test]
    fn page_pope_parameters_cross() {
        let t = lb(1, 3, 2, 0.0, IntegrationControls::default());
        let cross = t.first_event(EventKind::QCrossesOne).expect("crossing");
        assert!(cross.dq > 0.0);
        assert!(matches!(t.terminal, Terminal::Blowup | Terminal::StepUnderflow | Terminal::ReachedSMax));
        let top = t.first_event(EventKind::BPrimeZero).expect("b maximum");
        assert!((top.q - 2.0).abs() < 1e-6, "Q at b'=0: {}", top.q);
    }

    #[test]
    fn event_stop_truncates_at_cap() {
        let t = lb(1, 3, 2, 0.0, IntegrationControls::default().with_stop_q_above(1.5));
        assert_eq!(t.terminal, Terminal::EventStop);
        assert!((t.last().diag.q - 1.5).abs() < 1e-9);
    }

    #[test]
    fn collapsed_run_turns_down() {
        let t = lb(1, 2, 2, -10.0, IntegrationControls::default());
        assert_eq!(t.terminal, Terminal::ReachedSMax);
        let turn = t.first_event(EventKind::QTurnsDown).expect("turn");
        assert!(turn.q < 1.0);
        assert!(turn.dq.abs() < 1e-8);
        let after: Vec<f64> = t.samples.iter().filter(|x| x.state.s > turn.s).map(|x| x.diag.q).collect();
        assert!(after.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn events_satisfy_trigger_tolerance() {
        let t = lb(1, 3, 2, 0.0, IntegrationControls::default());
        for e in &t.events {
            let g = e.kind.trigger(&e.state.to_array(), 1.0);
            assert!(g.abs() < 1e-9, "{:?}: {g:e}", e.kind);
        }
    }

    #[test]
    fn locate_root_without_sign_change_errors() {
        assert!(matches!(
            locate_root(0.0, 1.0, |s| s + 1.0, 1e-12),
            Err(SolitonError::NoSignChange { .. })
        ));
        let r = locate_root(0.0, 2.0, |s| s * s - 2.0, 1e-13).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn controls_are_validated() {
        assert!(IntegrationControls::default().validate().is_ok());
        assert!(IntegrationControls::default().with_tolerances(1e-2, 1e-10).validate().is_err());
        assert!(IntegrationControls::default().with_s_max(-1.0).validate().is_err());
    }

    #[test]
    fn dense_output_matches_endpoints() {
        struct Probe(f64);
        impl StepObserver for Probe {
            fn on_step(&mut self, step: &StepInfo<'_>) -> Flow {
                let y0 = step.dense.eval(step.dense.s0);
                let y1 = step.dense.eval(step.dense.s1());
                let e0: f64 = y0.iter().zip(step.start.to_array()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                let e1: f64 = y1.iter().zip(step.end.to_array()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                self.0 = self.0.max(e0).max(e1);
                Flow::Continue
            }
        }
        let params = ModelParams::line_bundle(1, 2, 2).unwrap();
        let cfg = ShootConfig::line_bundle(-3.0).unwrap();
        let jet = crate::series::build_jet(&params, &cfg, 10).unwrap();
        let mut p = Probe(0.0);
        integrate_with(&jet, &params, &IntegrationControls::default().with_s_max(5.0), &mut p).unwrap();
        assert!(p.0 < 1e-12, "{:e}", p.0);
    }

    #[test]
    fn observer_can_stop_early() {
        struct StopAt(f64);
        impl StepObserver for StopAt {
            fn on_step(&mut self, step: &StepInfo<'_>) -> Flow {
                if step.end.s > self.0 { Flow::Stop } else { Flow::Continue }
            }
        }
        let params = ModelParams::line_bundle(1, 2, 2).unwrap();
        let cfg = ShootConfig::line_bundle(-3.0).unwrap();
        let jet = crate::series::build_jet(&params, &cfg, 10).unwrap();
        let out = integrate_with(&jet, &params, &IntegrationControls::default(), &mut StopAt(2.0)).unwrap();
        assert_eq!(out.terminal, Terminal::ObserverStop);
        assert!(out.last.s > 2.0 && out.last.s < 60.0);
    }
}

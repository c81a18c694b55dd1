//! Trajectory persistence: CSV for plotting, JSON for structured output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolitonError};
use crate::integrator::{EventRecord, IntegrationControls, Terminal, Trajectory};
use crate::model::{ModelParams, ShootConfig};
use crate::series::JetRecord;

pub const CSV_HEADER: &str = "s,a,da,b,db,f,df,Q,R,H";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = SolitonError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(SolitonError::Parse(format!("unknown format {other:?}"))),
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub s: f64,
    pub a: f64,
    pub da: f64,
    pub b: f64,
    pub db: f64,
    pub f: f64,
    pub df: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

impl Row {
    fn values(&self) -> [f64; 10] {
        [self.s, self.a, self.da, self.b, self.db, self.f, self.df, self.q, self.r, self.h]
    }
}

pub fn rows(trajectory: &Trajectory) -> Vec<Row> {
    trajectory
        .samples
        .iter()
        .map(|x| Row {
            s: x.state.s,
            a: x.state.a,
            da: x.state.da,
            b: x.state.b,
            db: x.state.db,
            f: x.state.f,
            df: x.state.df,
            q: x.diag.q,
            r: x.diag.r,
            h: x.diag.h,
        })
        .collect()
}

/// CSV text with 17 significant digits per value.
pub fn to_csv(trajectory: &Trajectory) -> String {
    let mut out = String::with_capacity(200 * (trajectory.samples.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows(trajectory) {
        for (i, v) in row.values().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<Row>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        Some(h) => return Err(SolitonError::Parse(format!("unexpected header {h:?}"))),
        None => return Err(SolitonError::Parse("empty CSV".into())),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let vals = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| SolitonError::Parse(format!("line {}: {e}", i + 2)))?;
            let [s, a, da, b, db, f, df, q, r, h]: [f64; 10] = vals
                .try_into()
                .map_err(|v: Vec<f64>| SolitonError::Parse(format!("line {}: {} fields, need 10", i + 2, v.len())))?;
            Ok(Row { s, a, da, b, db, f, df, q, r, h })
        })
        .collect()
}

/// JSON mirror of the CSV plus run metadata, events and the terminal reason.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord<'a> {
    pub params: &'a ModelParams,
    pub cfg: &'a ShootConfig,
    pub controls: &'a IntegrationControls,
    pub jet: JetRecord,
    pub terminal: Terminal,
    pub steps: usize,
    pub rejected: usize,
    pub events: &'a [EventRecord],
    pub rows: Vec<Row>,
}

impl<'a> From<&'a Trajectory> for TrajectoryRecord<'a> {
    fn from(t: &'a Trajectory) -> Self {
        Self {
            params: &t.params,
            cfg: &t.cfg,
            controls: &t.controls,
            jet: t.jet.record(),
            terminal: t.terminal,
            steps: t.steps,
            rejected: t.rejected,
            events: &t.events,
            rows: rows(t),
        }
    }
}

pub fn to_json(trajectory: &Trajectory) -> Result<String> {
    serde_json::to_string_pretty(&TrajectoryRecord::from(trajectory)).map_err(|e| SolitonError::Io(e.to_string()))
}

pub fn write_trajectory(trajectory: &Trajectory, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(trajectory),
        Format::Json => to_json(trajectory)?,
    };
    fs::write(path, text).map_err(|e| SolitonError::Io(format!("{}: {e}", path.display())))
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path).map_err(|e| SolitonError::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use soliton_core::asymptotics::{default_window, limit_fprime_in};
use soliton_core::classify::{descending_grid, IterationRecord, ShootOptions};
use soliton_core::{
    bryant_for_dimension, check_invariants, classify, compare_oracle, fit_sqrt_growth, run_cone_case, shoot_critical,
    solve, sweep, write_trajectory, Execution, Format, IntegrationControls, ModelParams, PagePopeSolution,
    ShootConfig, SolitonError, Trajectory,
};

#[derive(Parser)]
#[command(name = "soliton", version, about = "Steady gradient Ricci soliton ODE solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one line-bundle trajectory from the origin.
    Integrate {
        #[command(flatten)]
        bundle: BundleArgs,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        f0: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Bisect f''(0) for the critical non-collapsed solution (needs k > p).
    Shoot {
        #[command(flatten)]
        bundle: BundleArgs,
        #[arg(long, default_value_t = 1e-10)]
        tol_f0: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = -100.0)]
        f0_low: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        f0_high: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Classify a uniform grid of f''(0) values. Parallelism is bounded by SOLITON_THREADS.
    Sweep {
        #[command(flatten)]
        bundle: BundleArgs,
        #[arg(long, allow_hyphen_values = true, default_value_t = -10.0)]
        f0_min: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        f0_max: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare the f0 = 0 run with the closed-form Ricci-flat solution.
    Oracle {
        #[arg(long, default_value_t = 1)]
        n: u32,
        #[arg(long)]
        a1: f64,
        /// Compare samples up to the first with Q above this value.
        #[arg(long, default_value_t = 1.5)]
        q_cap: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Integrate the cone branch from a0 = a'''(0), b0 = b'''(0).
    Cone {
        #[arg(long, default_value_t = 1.0)]
        n: f64,
        #[arg(long, allow_hyphen_values = true)]
        a0: f64,
        #[arg(long, allow_hyphen_values = true)]
        b0: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rotationally symmetric cone run in total dimension d.
    Bryant {
        #[arg(long)]
        d: u32,
        #[arg(long, allow_hyphen_values = true, default_value_t = -1.0)]
        a0: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct BundleArgs {
    #[arg(long, default_value_t = 1)]
    n: u32,
    #[arg(long, requires = "p", conflicts_with = "a1")]
    k: Option<u32>,
    #[arg(long, requires = "k")]
    p: Option<u32>,
    /// a'(0) directly, instead of k and p.
    #[arg(long)]
    a1: Option<f64>,
}

impl BundleArgs {
    fn params(&self) -> Result<ModelParams, SolitonError> {
        match (self.k, self.p, self.a1) {
            (Some(k), Some(p), _) => ModelParams::line_bundle(self.n, k, p),
            (_, _, Some(a1)) => ModelParams::line_bundle_with_slope(self.n, a1),
            _ => Err(SolitonError::InvalidParams("give --k and --p, or --a1".into())),
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-14)]
    atol: f64,
    #[arg(long, default_value_t = 60.0)]
    s_max: f64,
    #[arg(long, default_value_t = 10)]
    series_order: usize,
    /// Output directory; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: Format,
}

impl CommonArgs {
    fn controls(&self) -> Result<IntegrationControls, SolitonError> {
        let c = IntegrationControls::default()
            .with_tolerances(self.rtol, self.atol)
            .with_s_max(self.s_max);
        c.validate()?;
        Ok(c)
    }

    fn settings(&self, controls: &IntegrationControls) -> Value {
        json!({ "controls": controls, "series_order": self.series_order, "format": self.format.extension() })
    }

    fn trajectory_path(&self, stem: &str) -> PathBuf {
        self.out.join(format!("{stem}.{}", self.format.extension()))
    }
}

/// Classification, events, tail fits and the invariant report of one run.
fn run_summary(t: &Trajectory, file: &Path) -> Value {
    let window = default_window(t);
    let tail = fit_sqrt_growth(t, None);
    let fprime = limit_fprime_in(t, window);
    json!({
        "file": file,
        "classification": classify(t),
        "terminal": t.terminal,
        "s_end": t.last().state.s,
        "steps": t.steps,
        "rejected": t.rejected,
        "events": t.events,
        "tail_fit": fallible(tail),
        "fprime_limit": fallible(fprime),
        "invariants": check_invariants(t),
    })
}

fn fallible<T: Serialize>(r: Result<T, SolitonError>) -> Value {
    match r {
        Ok(v) => json!(v),
        Err(e) => json!({ "unavailable": e.to_string() }),
    }
}

fn emit(common: &CommonArgs, t: &Trajectory, stem: &str) -> Result<(PathBuf, Value)> {
    let path = common.trajectory_path(stem);
    write_trajectory(t, &path, common.format)?;
    let summary = run_summary(t, &path);
    Ok((path, summary))
}

fn write_summary(out: &Path, summary: &Value) -> Result<()> {
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(summary)?).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", serde_json::to_string_pretty(summary)?);
    Ok(())
}

#[derive(Serialize)]
struct ShootSummary<'a> {
    f0_low: f64,
    f0_high: f64,
    f0_star: f64,
    width: f64,
    iterations: usize,
    verified: bool,
    final_escape_s: Option<f64>,
    log: &'a [IterationRecord],
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Integrate { bundle, f0, common } => {
            let params = bundle.params()?;
            let controls = common.controls()?;
            fs::create_dir_all(&common.out)?;
            let t = solve(&params, &ShootConfig::line_bundle(f0)?, common.series_order, &controls)?;
            let (_, run) = emit(&common, &t, "trajectory")?;
            write_summary(
                &common.out,
                &json!({ "command": "integrate", "params": params, "f0": f0, "settings": common.settings(&controls), "run": run }),
            )
        }
        Command::Shoot { bundle, tol_f0, f0_low, f0_high, common } => {
            let params = bundle.params()?;
            let controls = common.controls()?;
            fs::create_dir_all(&common.out)?;
            let opts = ShootOptions { f0_low, f0_high, tol_f0, series_order: common.series_order, ..ShootOptions::default() };
            let res = shoot_critical(&params, &controls, &opts)?;
            let (_, run) = emit(&common, &res.critical_trajectory, "critical")?;
            let shoot = ShootSummary {
                f0_low: res.f0_low,
                f0_high: res.f0_high,
                f0_star: res.f0_star,
                width: res.f0_high - res.f0_low,
                iterations: res.iterations,
                verified: res.all_verified(),
                final_escape_s: res.final_escape_s,
                log: &res.log,
            };
            write_summary(
                &common.out,
                &json!({
                    "command": "shoot", "params": params, "options": opts,
                    "settings": common.settings(&controls), "shoot": shoot, "run": run,
                }),
            )
        }
        Command::Sweep { bundle, f0_min, f0_max, points, common } => {
            let params = bundle.params()?;
            let controls = common.controls()?;
            if points < 2 || !(f0_min < f0_max) {
                return Err(SolitonError::InvalidParams("need --points >= 2 and --f0-min < --f0-max".into()).into());
            }
            fs::create_dir_all(&common.out)?;
            let exec = Execution::from_env();
            let grid = descending_grid(f0_max, f0_min, points);
            let report = sweep(&params, &grid, &controls, common.series_order, exec)?;
            let indexed: Vec<_> = report.points.iter().enumerate().collect();
            let runs = soliton_core::exec::map(exec, &indexed, |&(i, pt)| -> Result<Value> {
                let ctl = controls.with_s_max(pt.s_max_used);
                let t = solve(&params, &ShootConfig::line_bundle(pt.f0)?, common.series_order, &ctl)?;
                Ok(emit(&common, &t, &format!("sweep_{i:03}"))?.1)
            });
            let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
            write_summary(
                &common.out,
                &json!({
                    "command": "sweep", "params": params, "grid": grid, "parallel": exec.is_parallel(),
                    "settings": common.settings(&controls), "sweep": report, "runs": runs,
                }),
            )
        }
        Command::Oracle { n, a1, q_cap, common } => {
            let params = ModelParams::line_bundle_with_slope(n, a1)?;
            let controls = common.controls()?.with_stop_q_above(q_cap.max(3.0));
            fs::create_dir_all(&common.out)?;
            let t = solve(&params, &ShootConfig::line_bundle(0.0)?, common.series_order, &controls)?;
            let report = compare_oracle(&t, &PagePopeSolution::from_params(&params)?, q_cap)?;
            let (_, run) = emit(&common, &t, "trajectory")?;
            write_summary(
                &common.out,
                &json!({
                    "command": "oracle", "params": params, "settings": common.settings(&controls),
                    "comparison": report, "run": run,
                }),
            )
        }
        Command::Cone { n, a0, b0, common } => {
            let controls = common.controls()?;
            fs::create_dir_all(&common.out)?;
            let cr = run_cone_case(n, a0, b0, &controls)?;
            let (_, run) = emit(&common, &cr.trajectory, "trajectory")?;
            write_summary(
                &common.out,
                &json!({
                    "command": "cone", "case": cr.case, "settings": common.settings(&controls),
                    "case_report": cr.report, "cone_tail": cr.tail, "run": run,
                }),
            )
        }
        Command::Bryant { d, a0, common } => {
            let controls = common.controls()?;
            fs::create_dir_all(&common.out)?;
            let b = bryant_for_dimension(d, a0, &controls)?;
            let (_, run) = emit(&common, &b.run.trajectory, "trajectory")?;
            write_summary(
                &common.out,
                &json!({
                    "command": "bryant", "dimension": d, "case": b.run.case, "settings": common.settings(&controls),
                    "case_report": b.run.report, "tail": b.tail, "fprime": b.fprime,
                    "prediction_literal": b.literal, "prediction_first_integral": b.first_integral, "run": run,
                }),
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, message) = match e.downcast_ref::<SolitonError>() {
                Some(se) => (se.kind(), se.to_string()),
                None => ("Io", format!("{e:#}")),
            };
            eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
            ExitCode::FAILURE
        }
    }
}

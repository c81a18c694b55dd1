//! Solver and verification harness for the cohomogeneity-one steady gradient
//! Ricci soliton equations.

pub mod asymptotics;
pub mod checks;
pub mod classify;
pub mod cone;
pub mod error;
pub mod exec;
pub mod integrator;
pub mod io;
pub mod model;
pub mod pagepope;
pub mod quadrature;
pub mod series;

pub use error::{Result, SolitonError};
pub use model::{
    diagnostics, eval_rhs, origin_scalar_curvature, q_ratio, scalar_curvature, Branch,
    BundleDegree, ConeData, DerivativeVector, Diagnostics, ModelParams, ShootConfig, SolitonState,
};
pub use series::{build_cone_jet, build_jet, build_line_bundle_jet, evaluate_jet, jet_residual, SeriesJet};
pub use integrator::{
    integrate, integrate_with, locate_event, solve, EventKind, EventRecord, IntegrationControls, Sample,
    Terminal, Trajectory,
};
pub use classify::{classify, shoot_critical, sweep, Classification, Regime, ShootOptions, ShootResult, SweepReport};
pub use exec::Execution;
pub use pagepope::{compare_oracle, OracleReport, PagePopeSolution};
pub use asymptotics::{fit_sqrt_growth, limit_fprime, verify_decay, TailFit};
pub use cone::{bryant_for_dimension, run_cone_case, BryantRun, CaseLabel, CaseReport, ConeCase, ConeRun};
pub use checks::{check_invariants, CheckStatus, InvariantCheck, InvariantReport};
pub use io::{parse_csv, read_csv, to_csv, write_trajectory, Format, Row};

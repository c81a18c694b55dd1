//! Helpers shared by the integration and acceptance targets.

use soliton_core::{eval_rhs, ModelParams, SolitonState};

/// `a''_ode − a''_ansatz` and `b''_ode − b''_ansatz` for the low-order ansatz
/// `a = a1 s + c s³`, `b = 1 + β s²`, `f = f0 s²/2`.
fn defects(params: &ModelParams, f0: f64, beta: f64, c: f64, s: f64) -> (f64, f64) {
    let a1 = params.a1();
    let st = SolitonState {
        s,
        a: a1 * s + c * s * s * s,
        da: a1 + 3.0 * c * s * s,
        b: 1.0 + beta * s * s,
        db: 2.0 * beta * s,
        f: 0.5 * f0 * s * s,
        df: f0 * s,
    };
    let d = eval_rhs(&st, params).unwrap();
    (d.dda - 6.0 * c * s, d.ddb - 2.0 * beta)
}

fn secant(g: impl Fn(f64) -> f64, mut x0: f64, mut x1: f64) -> f64 {
    let (mut g0, mut g1) = (g(x0), g(x1));
    for _ in 0..30 {
        if g1 == g0 {
            break;
        }
        let x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
        x0 = x1;
        g0 = g1;
        x1 = x2;
        g1 = g(x1);
        if (x1 - x0).abs() <= 1e-15 * x1.abs().max(1.0) {
            break;
        }
    }
    x1
}

/// Order-matching oracle for `a₃`: choose `b₂` so the `b` equation balances at
/// order zero, then `a₃` so the `a` equation balances at order one. The
/// `O(s²)` remainders are removed by Richardson extrapolation in `s`.
pub fn matched_a3(params: &ModelParams, f0: f64) -> f64 {
    let at = |s: f64| {
        let beta = secant(|b| defects(params, f0, b, 0.0, s).1, 0.0, 1.0);
        secant(|c| defects(params, f0, beta, c, s).0 / s, 0.0, 1.0)
    };
    let s = 2e-3;
    (4.0 * at(0.5 * s) - at(s)) / 3.0
}

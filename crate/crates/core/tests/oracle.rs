use soliton_core::{
    compare_oracle, diagnostics, integrate, scalar_curvature, series, EventKind, IntegrationControls, ModelParams,
    PagePopeSolution, ShootConfig, Terminal, Trajectory,
};

fn page_pope_run() -> (ModelParams, PagePopeSolution, Trajectory) {
    let params = ModelParams::line_bundle(1, 3, 2).unwrap();
    let cfg = ShootConfig::line_bundle(0.0).unwrap();
    let jet = series::build_jet(&params, &cfg, series::DEFAULT_ORDER).unwrap();
    let ctl = IntegrationControls::default().with_stop_q_above(3.0);
    let traj = integrate(&jet, &params, &cfg, &ctl).unwrap();
    let sol = PagePopeSolution::from_params(&params).unwrap();
    (params, sol, traj)
}

/// Fourth-order central difference with one Richardson step.
fn d1(g: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let c = |h: f64| (g(x - 2.0 * h) - 8.0 * g(x - h) + 8.0 * g(x + h) - g(x + 2.0 * h)) / (12.0 * h);
    (16.0 * c(0.5 * h) - c(h)) / 15.0
}

#[test]
fn closed_form_solves_the_radial_first_order_equation() {
    for (n, a1) in [(1u32, 3.0), (2, 4.5), (3, 5.0)] {
        let sol = PagePopeSolution::new(n, a1).unwrap();
        let (l, rb) = (sol.l, sol.r_b);
        let nn = n as i32;
        let l2 = l * l;
        let lhs = |r: f64| {
            let a2 = sol.profiles(r).unwrap().0;
            a2 * (r * r - l2).powi(nn) / ((2.0 * f64::from(n) + 2.0) * l2 * r)
        };
        for i in 1..20 {
            let r = rb + (l - rb) * f64::from(i) / 20.0;
            if r.abs() < 0.05 || r > l - 0.05 {
                continue;
            }
            let res = d1(lhs, r, 1e-3) + (r * r - l2).powi(nn) / (r * r);
            let scale = ((r * r - l2).powi(nn) / (r * r)).abs().max(1.0);
            assert!(res.abs() <= 1e-9 * scale, "n={n} r={r}: residual {res:e}");
        }
    }
}

#[test]
fn closed_form_states_are_ricci_flat() {
    let params = ModelParams::line_bundle(1, 3, 2).unwrap();
    let cfg = ShootConfig::line_bundle(0.0).unwrap();
    let sol = PagePopeSolution::from_params(&params).unwrap();
    for i in 1..20 {
        let r = sol.r_b + (sol.l - sol.r_b) * f64::from(i) / 21.0;
        let st = sol.state_at_r(r).unwrap();
        // first-order expression, independent of the second-order equations
        let rr = scalar_curvature(&st, &params).unwrap();
        assert!(rr.abs() < 1e-10, "R = {rr:e} at r = {r}");
        let d = diagnostics(&st, &params, &cfg).unwrap();
        for v in [d.ricci00, d.ricci11, d.ricci_fiber] {
            assert!(v.abs() < 1e-10, "{d:?}");
        }
    }
}

#[test]
fn integration_matches_closed_form() {
    let start = std::time::Instant::now();
    let (_, sol, traj) = page_pope_run();
    let rep = compare_oracle(&traj, &sol, 1.5).unwrap();
    assert!(start.elapsed().as_secs_f64() < 2.0);
    assert!(rep.samples_compared > 50);
    assert!(rep.max_rel_err_a <= 1e-6 && rep.max_rel_err_b <= 1e-6, "{rep:?}");
    assert!(rep.max_abs_r <= 1e-7, "{rep:?}");
}

#[test]
fn crossing_certificate() {
    let (params, sol, traj) = page_pope_run();
    assert_eq!(traj.terminal, Terminal::EventStop);
    let cross = traj.first_event(EventKind::QCrossesOne).expect("Q crosses 1");
    assert!(cross.dq > 0.0);

    // a² = b² in the closed form, by bisection in r
    let gap = |r: f64| {
        let (a2, b2, _) = sol.profiles(r).unwrap();
        a2 - b2
    };
    let (mut lo, mut hi) = (sol.r_b + 1e-6, 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s_exact = sol.arclength(0.5 * (lo + hi)).unwrap();
    assert!((cross.s - s_exact).abs() <= 1e-6, "{} vs {s_exact}", cross.s);

    let bmax = traj.first_event(EventKind::BPrimeZero).expect("b attains its maximum");
    let np1 = params.n() + 1.0;
    assert!((bmax.q - (2.0 * np1).sqrt()).abs() <= 1e-6, "Q = {}", bmax.q);
    assert!((bmax.s - sol.arclength(0.0).unwrap()).abs() <= 1e-6);
}

#[test]
fn oracle_rejects_mismatched_runs() {
    let (_, _, traj) = page_pope_run();
    let other = PagePopeSolution::new(1, 4.0).unwrap();
    assert!(compare_oracle(&traj, &other, 1.5).is_err());
}

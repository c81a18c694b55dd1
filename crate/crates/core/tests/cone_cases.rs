use soliton_core::cone::{bryant_for_dimension, run_cone_case, CaseLabel, DIAGONAL_TOL};
use soliton_core::{IntegrationControls, SolitonError};

#[test]
fn euclidean_is_exact_on_the_first_ten_units() {
    let run = run_cone_case(1.0, 0.0, 0.0, &IntegrationControls::default()).unwrap();
    assert_eq!(run.case.label, CaseLabel::Euclidean);
    assert!(run.report.max_abs_a_minus_s <= 1e-10 && run.report.max_abs_b_minus_s <= 1e-10);
}

#[test]
fn taub_nut_keeps_the_potential_flat() {
    let run = run_cone_case(1.0, -2.0, 1.0, &IntegrationControls::default()).unwrap();
    assert_eq!(run.case.label, CaseLabel::TaubNut);
    assert_eq!(run.case.f0(), 0.0);
    assert!(run.report.max_abs_f <= 1e-9, "{}", run.report.max_abs_f);
    assert!(run.report.log_slope_a.unwrap().abs() < 0.05);
    // b grows linearly; its slope tends to twice the slope at the nut
    let db = run.report.db_end;
    assert!(db > 1.9 && db < 2.0, "{db}");
    let first = run.trajectory.first().state;
    assert!((first.db - 1.0).abs() < 1e-3);
}

#[test]
fn taub_nut_like_tail_is_bounded_times_root_s() {
    let run = run_cone_case(1.0, -3.0, 1.0, &IntegrationControls::default()).unwrap();
    assert_eq!(run.case.label, CaseLabel::TaubNutLike);
    assert!(run.report.all_pass(), "{:?}", run.report.checks);
    assert!((run.report.log_slope_b.unwrap() - 0.5).abs() < 0.05);
}

#[test]
fn bryant_in_dimensions_three_and_four() {
    for d in [3, 4] {
        let b = bryant_for_dimension(d, -1.0, &IntegrationControls::default()).unwrap();
        let n = b.n();
        assert_eq!(n, (f64::from(d) - 2.0) / 2.0);
        assert_eq!(b.f0(), (2.0 * n + 1.0) * -1.0);
        assert!(b.run.report.max_diagonal_defect <= DIAGONAL_TOL);
        assert!((b.tail.slope_a - b.tail.slope_b).abs() <= 1e-12 * b.tail.slope_b);
        let fi = b.first_integral;
        assert!((b.fprime.estimate - fi.fprime_limit).abs() <= 1e-3, "d={d}: {:?} vs {fi:?}", b.fprime);
        assert!((b.tail.slope_b - fi.slope).abs() <= 0.05 * fi.slope, "d={d}: {} vs {}", b.tail.slope_b, fi.slope);
    }
}

#[test]
fn inadmissible_cone_data() {
    assert!(matches!(
        run_cone_case(1.0, 1.0, -1.0, &IntegrationControls::default()),
        Err(SolitonError::InvalidCase(_))
    ));
    assert!(matches!(
        run_cone_case(1.0, -1.0, 2.0, &IntegrationControls::default()),
        Err(SolitonError::InvalidCase(_))
    ));
    assert_eq!(
        bryant_for_dimension(2, -1.0, &IntegrationControls::default()).unwrap_err(),
        SolitonError::BadDimension(2)
    );
}

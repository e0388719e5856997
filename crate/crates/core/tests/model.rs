mod common;

use common::{fixture, matrix, num, rel_err, rows, vector};
use pfolio_core::model::{eval_multi_objective, eval_single_objective, risk_matvec};
use pfolio_core::{ExposureConstraints, FactorRiskModel, Matrix, SinglePeriodData, SinglePeriodProblem};
use proptest::prelude::*;

#[test]
fn factor_matvec_matches_dense_assembly() {
    let f = fixture("risk_matvec");
    let model = common::risk(&f["risk"]);
    let got = risk_matvec(&model, &vector(&f["v"])).unwrap();
    for (g, e) in got.iter().zip(vector(&f["expected"])) {
        assert!((g - e).abs() <= 1e-12, "{g} vs {e}");
    }
}

#[test]
fn single_objective_matches_term_by_term_evaluation() {
    let f = fixture("objective_single");
    let p = common::single(&f["instance"]);
    let w = vector(&f["w"]);
    assert!(rel_err(p.normalized_objective(&w).unwrap(), num(&f["normalized"])) <= 1e-12);
    assert!(rel_err(eval_single_objective(&p, &w).unwrap(), num(&f["objective"])) <= 1e-12);
}

#[test]
fn multi_objective_matches_term_by_term_evaluation() {
    let f = fixture("objective_multi");
    let p = common::multi(&f["instance"]);
    let traj = rows(&f["trajectory"]);
    assert!(rel_err(p.normalized_objective(&traj).unwrap(), num(&f["normalized"])) <= 1e-12);
    assert!(rel_err(eval_multi_objective(&p, &traj).unwrap(), num(&f["objective"])) <= 1e-12);
}

#[test]
fn violations_match_row_by_row_check() {
    let f = fixture("violations");
    let ex = ExposureConstraints::new(matrix(&f["a"]), vector(&f["lower"]), vector(&f["upper"])).unwrap();
    let w = vector(&f["w"]);
    let n = w.len();
    let p = SinglePeriodProblem::new(SinglePeriodData {
        gmv: 1.0,
        alpha: vec![0.0; n],
        risk: FactorRiskModel::new(Matrix::zeros(n, 1), Matrix::identity(1), vec![0.0; n]).unwrap(),
        spread: vec![0.0; n],
        impact: vec![0.0; n],
        exponent: 1.5,
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
        exposures: ex,
        w0: vec![0.0; n],
    })
    .unwrap();
    let report = p.check_feasibility(&w, 1e-6).unwrap();
    assert!((report.max_exposure_violation - num(&f["exposure_violation"])).abs() <= 1e-14);
    assert!((report.budget_violation - num(&f["budget_violation"])).abs() <= 1e-14);
}

fn concavity_instance() -> SinglePeriodProblem {
    common::single(&fixture("objective_single")["instance"])
}

fn ball_point(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().map(|v| v.abs()).sum();
    if s > 1.0 {
        raw.iter().map(|v| v / s).collect()
    } else {
        raw
    }
}

proptest! {
    #[test]
    fn objective_is_concave_along_segments(
        a in proptest::collection::vec(-1.0f64..1.0, 4),
        b in proptest::collection::vec(-1.0f64..1.0, 4),
        theta in 0.0f64..=1.0,
    ) {
        let p = concavity_instance();
        let (a, b) = (ball_point(a), ball_point(b));
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| theta * x + (1.0 - theta) * y).collect();
        let f = |w: &[f64]| eval_single_objective(&p, w).unwrap();
        prop_assert!(f(&mid) >= theta * f(&a) + (1.0 - theta) * f(&b) - 1e-9);
    }
}

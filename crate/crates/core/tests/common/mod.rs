#![allow(dead_code)]

use std::path::PathBuf;

use pfolio_core::{
    ExposureConstraints, FactorRiskModel, Matrix, MultiPeriodData, MultiPeriodProblem, SinglePeriodData,
    SinglePeriodProblem,
};
use serde_json::Value;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> Value {
    let text = std::fs::read_to_string(fixture_path(&format!("{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

pub fn vector(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(num).collect()
}

pub fn matrix(v: &Value) -> Matrix {
    let rows: Vec<Vec<f64>> = v.as_array().unwrap().iter().map(vector).collect();
    Matrix::from_rows(&rows).unwrap()
}

pub fn rows(v: &Value) -> Vec<Vec<f64>> {
    v.as_array().unwrap().iter().map(vector).collect()
}

pub fn risk(v: &Value) -> FactorRiskModel {
    FactorRiskModel::new(matrix(&v["beta"]), matrix(&v["factor_cov"]), vector(&v["specific_var"])).unwrap()
}

pub fn exposures(v: &Value) -> ExposureConstraints {
    ExposureConstraints::new(matrix(&v["a"]), vector(&v["lower"]), vector(&v["upper"])).unwrap()
}

pub fn single(v: &Value) -> SinglePeriodProblem {
    SinglePeriodProblem::new(SinglePeriodData {
        gmv: num(&v["gmv"]),
        alpha: vector(&v["alpha"]),
        risk: risk(&v["risk"]),
        spread: vector(&v["spread"]),
        impact: vector(&v["impact"]),
        exponent: num(&v["exponent"]),
        lambda1: num(&v["lambda1"]),
        lambda2: num(&v["lambda2"]),
        lambda3: num(&v["lambda3"]),
        exposures: exposures(v),
        w0: vector(&v["w0"]),
    })
    .unwrap()
}

pub fn multi(v: &Value) -> MultiPeriodProblem {
    MultiPeriodProblem::new(MultiPeriodData {
        horizon: v["horizon"].as_u64().unwrap() as usize,
        gmv: num(&v["gmv"]),
        alpha_t: matrix(&v["alpha_t"]),
        risk: risk(&v["risk"]),
        spread_t: matrix(&v["spread_t"]),
        impact_t: matrix(&v["impact_t"]),
        exponent: num(&v["exponent"]),
        lambda1: num(&v["lambda1"]),
        lambda2: num(&v["lambda2"]),
        lambda3: num(&v["lambda3"]),
        exposures: exposures(v),
        w0: vector(&v["w0"]),
        w_terminal: vector(&v["w_terminal"]),
    })
    .unwrap()
}

/// Single-asset problem with unit variance and no exposure rows.
pub fn scalar_problem(alpha: f64, lambda1: f64, lambda23: f64, w0: f64) -> SinglePeriodProblem {
    SinglePeriodProblem::new(SinglePeriodData {
        gmv: 1.0,
        alpha: vec![alpha],
        risk: FactorRiskModel::new(Matrix::zeros(1, 1), Matrix::identity(1), vec![1.0]).unwrap(),
        spread: vec![1.0],
        impact: vec![1.0],
        exponent: 1.5,
        lambda1,
        lambda2: lambda23,
        lambda3: lambda23,
        exposures: ExposureConstraints::none(1),
        w0: vec![w0],
    })
    .unwrap()
}

pub fn rel_err(actual: f64, expected: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(f64::MIN_POSITIVE)
}

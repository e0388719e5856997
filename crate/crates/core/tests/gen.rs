mod common;

use common::{fixture, vector};
use pfolio_core::gen::{
    build_alpha, build_costs, build_exposures, build_single_instance, cost_profile, daily_vol, extend_multi,
    gen_market_data, u_shape, GeneratorConfig, ALPHA_HORIZON, MARKET_BOUND, STYLE_BOUND,
};
use pfolio_core::linalg::Matrix;
use pfolio_core::oracle::grid_solve;
use pfolio_core::{solve_single, FactorRiskModel, Problem, SolveStatus, SolverConfig};

fn config(seed: u64, n: usize, days: usize) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        n,
        days,
        ..GeneratorConfig::default()
    }
}

#[test]
fn profile_matches_exact_rational_evaluation() {
    let fx = fixture("profile");
    let got = cost_profile(fx["horizon"].as_u64().unwrap() as usize).unwrap();
    for (g, e) in got.iter().zip(vector(&fx["expected"])) {
        assert!((g - e).abs() <= 1e-15, "{g} vs {e}");
    }
}

#[test]
fn profile_endpoints_and_normalization() {
    for horizon in [2usize, 4, 10, 50] {
        assert_eq!(u_shape(0.0, horizon), 1.0);
        assert_eq!(u_shape(horizon as f64 / 2.0, horizon), 0.5);
        assert_eq!(u_shape(horizon as f64, horizon), 1.0);
    }
    for horizon in [2usize, 3, 10] {
        let s: f64 = cost_profile(horizon).unwrap()[..horizon - 1].iter().sum();
        assert!((s - 1.0).abs() <= 1e-12, "T = {horizon}: {s}");
    }
    assert!(cost_profile(1).is_err());
}

#[test]
fn panels_are_deterministic() {
    let a = gen_market_data(&config(4, 12, 150)).unwrap();
    let b = gen_market_data(&config(4, 12, 150)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, gen_market_data(&config(5, 12, 150)).unwrap());
}

#[test]
fn complete_option_data_when_requested() {
    let cfg = GeneratorConfig {
        missing_iv_fraction: 0.0,
        ..config(2, 10, 100)
    };
    let panel = gen_market_data(&cfg).unwrap();
    assert!(panel.implied_vol.data.iter().all(Option::is_some));
}

#[test]
fn realized_vol_tracks_generative_vol() {
    let panel = gen_market_data(&config(11, 40, 600)).unwrap();
    for i in 0..panel.n() {
        let r: Vec<f64> = (0..panel.days() - 1).map(|k| panel.daily_return(k, i)).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        let ratio = sd / panel.true_vol[i];
        assert!((0.75..=1.25).contains(&ratio), "stock {i}: {ratio}");
    }
}

#[test]
fn alpha_noise_has_half_vol_scale() {
    let panel = gen_market_data(&config(12, 400, 300)).unwrap();
    let date = 250;
    let alpha = build_alpha(&panel, date, 99).unwrap();
    let z: Vec<f64> = (0..panel.n())
        .map(|i| {
            let forward = (date..date + ALPHA_HORIZON)
                .map(|k| panel.daily_return(k, i))
                .sum::<f64>()
                / 5.0;
            (alpha[i] - forward) / (0.5 * daily_vol(&panel, date, i).unwrap())
        })
        .collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64).sqrt();
    // Four standard errors on both statistics.
    assert!(mean.abs() <= 4.0 / 20.0, "{mean}");
    assert!((sd - 1.0).abs() <= 4.0 / (2.0 * 400.0f64).sqrt(), "{sd}");
}

#[test]
fn costs_are_positive() {
    let panel = gen_market_data(&config(13, 50, 200)).unwrap();
    let (s, q) = build_costs(&panel, 150, 1e8, 1.5).unwrap();
    assert!(s.iter().chain(&q).all(|v| *v > 0.0 && v.is_finite()));
}

#[test]
fn style_row_of_identity_loadings() {
    let risk = FactorRiskModel::new(Matrix::identity(3), Matrix::identity(3), vec![1e-4; 3]).unwrap();
    let ex = build_exposures(&risk, &config(0, 3, 100)).unwrap();
    let e1 = [1.0, 0.0, 0.0];
    assert_eq!(ex.matrix().matvec(&e1)[1], 1.0);
    assert!(ex.matrix().matvec(&e1)[1] > ex.upper()[1]);
    assert_eq!(ex.upper()[1], STYLE_BOUND);
    // The market row is hit harder: 1 − 0.05.
    assert!((ex.max_violation(&e1) - (1.0 - MARKET_BOUND)).abs() <= 1e-15);
    assert_eq!(ex.max_violation(&[0.0; 3]), 0.0);
}

#[test]
fn solved_instance_respects_exposures() {
    let cfg = config(14, 40, 200);
    let panel = gen_market_data(&cfg).unwrap();
    let p = build_single_instance(&panel, 190, (1e-6, 1.0, 1.0), &cfg).unwrap();
    let out = solve_single(&p, &SolverConfig::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Converged);
    let w = match &out.decision {
        pfolio_core::Decision::Weights(w) => w.clone(),
        _ => unreachable!(),
    };
    let aw = p.exposures().matrix().matvec(&w);
    for ((x, l), u) in aw.iter().zip(p.exposures().lower()).zip(p.exposures().upper()) {
        assert!(*x >= l - 1e-6 && *x <= u + 1e-6, "{x} outside [{l}, {u}]");
    }
}

#[test]
fn builds_are_deterministic_and_well_posed() {
    let cfg = GeneratorConfig {
        p: 1,
        exposure_rows: 1,
        ..config(15, 2, 200)
    };
    let panel = gen_market_data(&cfg).unwrap();
    let a = build_single_instance(&panel, 190, (1e-6, 1.0, 1.0), &cfg).unwrap();
    assert_eq!(a, build_single_instance(&panel, 190, (1e-6, 1.0, 1.0), &cfg).unwrap());
    let grid = grid_solve(&Problem::Single(a.clone()), 401).unwrap();
    assert!(grid.objective.is_finite());
    let out = solve_single(&a, &SolverConfig::default()).unwrap();
    let solved = a.normalized_objective(match &out.decision {
        pfolio_core::Decision::Weights(w) => w,
        _ => unreachable!(),
    });
    assert!(solved.unwrap() >= grid.objective - 1e-12);
}

#[test]
fn extension_spreads_costs_over_the_horizon() {
    let cfg = config(16, 10, 200);
    let panel = gen_market_data(&cfg).unwrap();
    let single = build_single_instance(&panel, 190, (1e-6, 1.0, 1.0), &cfg).unwrap();
    let multi = extend_multi(&single, 6, &[0.0; 10]).unwrap();
    for i in 0..10 {
        let s: f64 = (1..6).map(|t| multi.spread(t)[i]).sum();
        assert!((s - single.spread()[i]).abs() <= 1e-12 * single.spread()[i]);
        assert_eq!(multi.alpha(3), single.alpha());
    }
}

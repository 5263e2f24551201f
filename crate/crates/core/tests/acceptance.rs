//! Acceptance criteria for the pricing and exposure engine.
//!
//! Each test prints one `ACCEPTANCE <n> PASS|FAIL — detail` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` yields a
//! one-line verdict per criterion. Tolerances, path counts and seeds are
//! pinned here and nowhere else; every random quantity is fully determined
//! by the seeds below.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use bermudan::cos::{price_cos, CosConfig, CosEngine};
use bermudan::engine::{price_rlnn, value_at, RlnnFit};
use bermudan::exposure::{
    horizons_with_midpoints, CosModel, ExposureModel, LsmModel, RlnnModel,
};
use bermudan::hedge::{
    grad_strikes, ols_weights, HedgeLayer, TrainingBatch, TrainingConfig, TrainingMode,
};
use bermudan::lsm::{fit_lsm, InterpScheme, LsmStyle, ParamsBoundary};
use bermudan::{black_scholes, simulate_gbm, BermudanSpec, OptionType};
use common::*;

/// Training seed for every headline fit.
const SEED_TRAIN: u64 = 2024;
/// Seed of the held-out validation grids.
const SEED_VALIDATION: u64 = 9001;
/// Seeds of the convergence race (criterion 3).
const RACE_SEEDS: [u64; 5] = [11, 23, 37, 41, 53];
/// Seeds of the interpolation comparison (criterion 7).
const INTERP_SEEDS: [u64; 5] = [101, 211, 307, 401, 503];

fn verdict(n: usize, pass: bool, detail: &str) -> bool {
    println!("ACCEPTANCE {n} {} — {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

/// The headline at-the-money quarterly fit, shared across criteria.
fn atm_fit() -> &'static RlnnFit {
    static FIT: OnceLock<RlnnFit> = OnceLock::new();
    FIT.get_or_init(|| {
        price_rlnn(
            &benchmark_market(),
            &quarterly_put(1.0),
            &TrainingConfig::default(),
            50_000,
            SEED_TRAIN,
        )
        .expect("headline fit")
    })
}

#[test]
fn criterion_1_single_date_european_prices() {
    // M = 1: all three methods against the closed form. Monte Carlo methods
    // at 50,000 paths must land within 5e-4; the transform pricer within
    // 1e-8; everything inside 60 seconds.
    let start = Instant::now();
    let m = benchmark_market();
    let european = BermudanSpec {
        strike: 1.0,
        side: OptionType::Put,
        exercise_times: vec![1.0],
    };
    let bs = black_scholes(1.0, 1.0, 0.06, 0.2, 1.0, OptionType::Put).unwrap();

    let rlnn = price_rlnn(&m, &european, &TrainingConfig::default(), 50_000, SEED_TRAIN)
        .unwrap()
        .t0_price();
    let lsm = fit_lsm(&m, &european, LsmStyle::ValueFunction, 50_000, SEED_TRAIN)
        .unwrap()
        .t0_price;
    let cos = price_cos(&m, &european, &CosConfig::default()).unwrap();

    let (e_rlnn, e_lsm, e_cos) = ((rlnn - bs).abs(), (lsm - bs).abs(), (cos - bs).abs());
    let elapsed = start.elapsed().as_secs_f64();
    let pass = e_rlnn <= 5e-4 && e_lsm <= 5e-4 && e_cos <= 1e-8 && elapsed <= 60.0;
    let pass = verdict(
        1,
        pass,
        &format!(
            "European M=1 vs closed form: |rlnn| {e_rlnn:.2e} (<=5e-4), |lsm| {e_lsm:.2e} \
             (<=5e-4), |cos| {e_cos:.2e} (<=1e-8), {elapsed:.1}s (<=60s)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_bermudan_puts_across_moneyness() {
    // Quarterly puts at K in {0.9, 1.0, 1.1}: the transform pricer against a
    // 20,000-step lattice to 1e-5, and the portfolio fit against the
    // transform to 1e-3 at the default configuration.
    let start = Instant::now();
    let m = benchmark_market();
    let mut detail = String::new();
    let mut pass = true;
    for &strike in &[0.9, 1.0, 1.1] {
        let contract = quarterly_put(strike);
        let cos = price_cos(&m, &contract, &CosConfig::default()).unwrap();
        let tree = binomial_bermudan(&m, &contract, 20_000);
        let rlnn = if (strike - 1.0).abs() < 1e-12 {
            atm_fit().t0_price()
        } else {
            price_rlnn(&m, &contract, &TrainingConfig::default(), 50_000, SEED_TRAIN)
                .unwrap()
                .t0_price()
        };
        let e_tree = (cos - tree).abs();
        let e_rlnn = (rlnn - cos).abs();
        pass &= e_tree <= 1e-5 && e_rlnn <= 1e-3;
        detail.push_str(&format!(
            "K={strike}: |cos-tree| {e_tree:.2e} (<=1e-5), |rlnn-cos| {e_rlnn:.2e} (<=1e-3); "
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed <= 600.0;
    detail.push_str(&format!("{elapsed:.0}s (<=600s)"));
    let pass = verdict(2, pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_3_hybrid_training_converges_in_fewer_epochs() {
    // Epochs-to-threshold race at 20,000 paths: for each seed, the smallest
    // epoch budget whose full training run lands within 1e-3 of the
    // transform price. The hybrid must need at most 10 epochs and must not
    // need more than the joint baseline on at least 4 of 5 seeds; the joint
    // baseline is capped at 12 budgets and recorded as ">12" beyond.
    let m = benchmark_market();
    let contract = quarterly_put(1.0);
    let reference = price_cos(&m, &contract, &CosConfig::default()).unwrap();
    const N: usize = 20_000;
    const CAP: usize = 12;

    let epochs_to_threshold = |mode: TrainingMode, seed: u64| -> Option<usize> {
        for budget in 1..=CAP {
            let config = TrainingConfig { epochs: budget, mode, ..TrainingConfig::default() };
            let fit = price_rlnn(&m, &contract, &config, N, seed).unwrap();
            if (fit.t0_price() - reference).abs() < 1e-3 {
                return Some(budget);
            }
        }
        None
    };

    let mut wins = 0usize;
    let mut hybrid_ok = true;
    let mut detail = String::new();
    for &seed in &RACE_SEEDS {
        let h = epochs_to_threshold(TrainingMode::Hybrid, seed);
        let j = epochs_to_threshold(TrainingMode::JointAdam, seed);
        let h_str = h.map_or(">12".to_string(), |e| e.to_string());
        let j_str = j.map_or(">12".to_string(), |e| e.to_string());
        let win = match (h, j) {
            (Some(he), Some(je)) => he <= je,
            (Some(_), None) => true,
            _ => false,
        };
        hybrid_ok &= h.is_some_and(|e| e <= 10);
        wins += win as usize;
        detail.push_str(&format!("seed {seed}: hybrid {h_str} vs joint {j_str}; "));
    }
    let pass = wins >= 4 && hybrid_ok;
    detail.push_str(&format!("hybrid wins {wins}/5 (need >=4), all hybrid <=10: {hybrid_ok}"));
    let pass = verdict(3, pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_4_strike_gradient_matches_finite_differences() {
    // The analytic strike gradient of the concentrated loss (weights solved
    // exactly at every evaluation) against central differences with
    // h = 1e-6, over 200 random instances constructed to keep every sample
    // at least 1e-4 away from every strike so no activation flips inside the
    // stencil. Envelope theorem: d/db of min_w loss equals the partial
    // derivative at the optimal weights.
    const H: f64 = 1e-6;
    const INSTANCES: usize = 200;
    let mut worst = 0.0f64;
    let mut rng_state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        // splitmix64-style deterministic stream for reproducible instances.
        rng_state = rng_state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = rng_state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        (z ^ (z >> 31)) as f64 / u64::MAX as f64
    };

    // Concentrated sum-of-squares/2 at given strikes: solve weights, then
    // evaluate. The analytic gradient is of this same quantity.
    let half_sse = |batch: &TrainingBatch, strikes: &[f64], cp: &[OptionType]| -> f64 {
        let w = ols_weights(batch, strikes, cp).unwrap();
        let layer = HedgeLayer {
            strikes: strikes.to_vec(),
            weights: w,
            cp: cp.to_vec(),
            exercise_time: 1.0,
        };
        batch
            .spots
            .iter()
            .zip(&batch.targets)
            .map(|(&s, &y)| {
                let r = y - bermudan::hedge::network_value(s, &layer);
                0.5 * r * r
            })
            .sum()
    };

    for _ in 0..INSTANCES {
        let cp = vec![OptionType::Call, OptionType::Call, OptionType::Put, OptionType::Put];
        let strikes: Vec<f64> = (0..4).map(|i| 0.85 + 0.1 * i as f64 + 0.02 * next()).collect();
        let mut spots = Vec::with_capacity(64);
        while spots.len() < 64 {
            let s = 0.7 + 0.7 * next();
            if strikes.iter().all(|&b| (s - b).abs() > 1e-4) {
                spots.push(s);
            }
        }
        let targets: Vec<f64> =
            spots.iter().map(|&s| (1.05 - s).max(0.0) + 0.1 * (3.0 * s).sin()).collect();
        let batch = TrainingBatch { spots, targets };

        let w = ols_weights(&batch, &strikes, &cp).unwrap();
        let layer = HedgeLayer {
            strikes: strikes.clone(),
            weights: w,
            cp: cp.clone(),
            exercise_time: 1.0,
        };
        let grad = grad_strikes(&batch, &layer).unwrap();

        for i in 0..4 {
            let mut up = strikes.clone();
            up[i] += H;
            let mut dn = strikes.clone();
            dn[i] -= H;
            let fd = (half_sse(&batch, &up, &cp) - half_sse(&batch, &dn, &cp)) / (2.0 * H);
            let denom = grad[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((grad[i] - fd).abs() / denom);
        }
    }
    let pass = worst <= 1e-4;
    let pass = verdict(
        4,
        pass,
        &format!("envelope gradient vs central FD over {INSTANCES} instances: max rel err {worst:.2e} (<=1e-4)"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_exposure_profiles_match_the_reference() {
    // Expected exposure and 99% potential future exposure of the headline
    // fit against the transform reference on 5,000 held-out risk-neutral
    // paths over the exercise dates.
    let m = benchmark_market();
    let contract = quarterly_put(1.0);
    let fit = atm_fit();
    let grid = simulate_gbm(&m, None, &contract.exercise_times, 5_000, SEED_VALIDATION).unwrap();

    let rlnn = RlnnModel::new(m, contract.clone(), fit.layers.clone()).unwrap();
    let cos = CosModel::new(m, contract.clone(), CosConfig::default()).unwrap();
    let p_rlnn = rlnn.exposure_on(&grid).unwrap().profile(0.99).unwrap();
    let p_cos = cos.exposure_on(&grid).unwrap().profile(0.99).unwrap();

    let ee_gap = p_rlnn
        .ee
        .iter()
        .zip(&p_cos.ee)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let pfe_gap = p_rlnn
        .pfe
        .iter()
        .zip(&p_cos.pfe)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let pass = ee_gap <= 2e-3 && pfe_gap <= 5e-3;
    let pass = verdict(
        5,
        pass,
        &format!(
            "exposure vs transform on 5000 paths: max |EE gap| {ee_gap:.2e} (<=2e-3), \
             max |PFE gap| {pfe_gap:.2e} (<=5e-3)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_midpoint_revaluation_matches_the_reference() {
    // Per-path values at the four interval midpoints: the fitted portfolio's
    // stub-maturity closed form against the transform, RMS per horizon on
    // 5,000 held-out paths.
    let m = benchmark_market();
    let contract = quarterly_put(1.0);
    let fit = atm_fit();
    let midpoints = [0.125, 0.375, 0.625, 0.875];
    let grid = simulate_gbm(&m, None, &midpoints, 5_000, SEED_VALIDATION).unwrap();
    let engine = CosEngine::with_state_range(
        &m,
        &contract,
        &CosConfig::default(),
        Some(state_range_of(&grid, contract.strike)),
    )
    .unwrap();

    let mut worst = 0.0f64;
    let mut detail = String::new();
    for (i, &t) in midpoints.iter().enumerate() {
        let spots = grid.spots_at(i);
        let v_rlnn = value_at(&fit.layers, &m, &contract, t, &spots).unwrap();
        let v_cos = engine.values_at(t, &spots).unwrap();
        let rms = (v_rlnn
            .iter()
            .zip(&v_cos)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / spots.len() as f64)
            .sqrt();
        worst = worst.max(rms);
        detail.push_str(&format!("t={t}: RMS {rms:.2e}; "));
    }
    let pass = worst <= 2e-3;
    detail.push_str(&format!("max {worst:.2e} (<=2e-3)"));
    let pass = verdict(6, pass, &detail);
    assert!(pass);
}

fn state_range_of(grid: &bermudan::PathGrid, strike: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in grid.values.iter() {
        let x = (s / strike).ln();
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}

#[test]
fn criterion_7_option_value_interpolation_beats_parameter_interpolation() {
    // Between exercise dates the LSM polynomials must be interpolated
    // somehow. Compare the per-path option-value rule against the
    // parameter-blend rule, each judged by its expected-exposure error at
    // the interval midpoints against a per-horizon refit (the "true fit").
    // The option-value rule must win (weakly) on at least 4 of 5 training
    // seeds.
    let m = benchmark_market();
    let contract = quarterly_put(1.0);
    let horizons = horizons_with_midpoints(&contract.exercise_times);
    let grid = simulate_gbm(&m, None, &horizons, 5_000, SEED_VALIDATION).unwrap();
    // Interior (midpoint) columns of the horizon grid.
    let interior: Vec<usize> = (0..horizons.len()).step_by(2).collect();

    let mut wins = 0usize;
    let mut detail = String::new();
    for &seed in &INTERP_SEEDS {
        let fit = fit_lsm(&m, &contract, LsmStyle::ValueFunction, 50_000, seed).unwrap();
        let ee_of = |scheme: InterpScheme| -> Vec<f64> {
            let model = LsmModel::new(m, contract.clone(), fit.clone(), scheme).unwrap();
            model.exposure_on(&grid).unwrap().profile(0.99).unwrap().ee
        };
        let reference = ee_of(InterpScheme::TrueFit);
        let err = |ee: &[f64]| -> f64 {
            interior
                .iter()
                .map(|&i| (ee[i] - reference[i]).abs())
                .fold(0.0f64, f64::max)
        };
        let e_ov = err(&ee_of(InterpScheme::OptionValue));
        let e_par = err(&ee_of(InterpScheme::Params(ParamsBoundary::ValueBlend)));
        let win = e_ov <= e_par;
        wins += win as usize;
        detail.push_str(&format!(
            "seed {seed}: option-value {e_ov:.2e} vs params {e_par:.2e} {}; ",
            if win { "W" } else { "L" }
        ));
    }
    let pass = wins >= 4;
    detail.push_str(&format!("wins {wins}/5 (need >=4)"));
    let pass = verdict(7, pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_8_invariant_suite() {
    let m = benchmark_market();
    let mut failures: Vec<&'static str> = Vec::new();
    let mut check = |name: &'static str, ok: bool| {
        if !ok {
            failures.push(name);
        }
    };

    // Put-call parity across moneyness and maturities.
    let mut parity_ok = true;
    for &k in &[0.8, 1.0, 1.25] {
        for &tau in &[0.25, 1.0, 3.0] {
            let c = black_scholes(1.0, k, 0.06, 0.2, tau, OptionType::Call).unwrap();
            let p = black_scholes(1.0, k, 0.06, 0.2, tau, OptionType::Put).unwrap();
            parity_ok &= (c - p - (1.0 - k * (-0.06f64 * tau).exp())).abs() < 1e-12;
        }
    }
    check("put-call parity", parity_ok);

    // Discounted terminal spot is a martingale (3 standard errors).
    {
        let grid = simulate_gbm(&m, None, &[1.0], 100_000, 7).unwrap();
        let spots = grid.spots_at(0);
        let disc = (-0.06f64).exp();
        let mean = disc * spots.iter().sum::<f64>() / spots.len() as f64;
        let var = spots
            .iter()
            .map(|&s| (disc * s - mean) * (disc * s - mean))
            .sum::<f64>()
            / (spots.len() - 1) as f64;
        let se = (var / spots.len() as f64).sqrt();
        check("martingale", (mean - 1.0).abs() < 3.0 * se);
    }

    // Weight solve optimality: residuals orthogonal to every design column.
    {
        let spots: Vec<f64> = (0..600).map(|i| 0.7 + 0.6 * i as f64 / 599.0).collect();
        let targets: Vec<f64> = spots.iter().map(|&s| (1.0 - s).max(0.0) + 0.02).collect();
        let batch = TrainingBatch { spots: spots.clone(), targets: targets.clone() };
        let strikes = vec![0.85, 0.95, 1.05, 1.15];
        let cp = vec![OptionType::Put, OptionType::Put, OptionType::Call, OptionType::Call];
        let w = ols_weights(&batch, &strikes, &cp).unwrap();
        let layer = HedgeLayer {
            strikes: strikes.clone(),
            weights: w,
            cp: cp.clone(),
            exercise_time: 1.0,
        };
        let design = bermudan::hedge::payoff_matrix(&spots, &layer);
        let mut ok = true;
        for j in 0..4 {
            let dot: f64 = (0..600)
                .map(|i| {
                    (targets[i] - bermudan::hedge::network_value(spots[i], &layer))
                        * design[(i, j)]
                })
                .sum();
            ok &= dot.abs() < 1e-8;
        }
        check("weight-solve optimality", ok);
    }

    // Strike floor: training on spots near zero cannot push strikes below
    // the configured floor.
    {
        let config = TrainingConfig {
            epochs: 5,
            p_call: 2,
            p_put: 2,
            moneyness_lo: 0.2,
            moneyness_hi: 1.0,
            ..TrainingConfig::default()
        };
        let spots: Vec<f64> = (0..256).map(|i| 1e-6 + i as f64 * 1e-6).collect();
        let targets: Vec<f64> = spots.iter().map(|&s| 1.0 - s).collect();
        let batch = TrainingBatch { spots, targets };
        let (layer, _) = bermudan::hedge::fit_layer(&batch, 0.001, 0.5, &config, 3).unwrap();
        check("strike floor", layer.strikes.iter().all(|&b| b >= config.strike_floor));
    }

    // More exercise rights cannot lose value (transform prices are exact).
    {
        let config = CosConfig::default();
        let e = price_cos(
            &m,
            &BermudanSpec { strike: 1.0, side: OptionType::Put, exercise_times: vec![1.0] },
            &config,
        )
        .unwrap();
        let s = price_cos(
            &m,
            &BermudanSpec {
                strike: 1.0,
                side: OptionType::Put,
                exercise_times: vec![0.5, 1.0],
            },
            &config,
        )
        .unwrap();
        let q = price_cos(&m, &quarterly_put(1.0), &config).unwrap();
        check("exercise-right monotonicity", e <= s + 1e-12 && s <= q + 1e-12);
    }

    // Exposure is identically zero strictly after exercise.
    {
        let contract = quarterly_put(1.0);
        let config = TrainingConfig { epochs: 3, ..TrainingConfig::default() };
        let fit = price_rlnn(&m, &contract, &config, 2_000, 5).unwrap();
        let grid = simulate_gbm(&m, None, &contract.exercise_times, 500, 31).unwrap();
        let model = RlnnModel::new(m, contract.clone(), fit.layers).unwrap();
        let cube = model.exposure_on(&grid).unwrap();
        let mut ok = true;
        for j in 0..500 {
            if let Some(tau) = cube.stopping.exercise_time(j) {
                for (i, &t) in cube.times.iter().enumerate() {
                    if t > tau + 1e-12 {
                        ok &= cube.exposures[(j, i)] == 0.0;
                    }
                }
            }
        }
        check("exposure zero after exercise", ok);
    }

    // Transform self-convergence: doubling the series changes nothing.
    {
        let base = price_cos(&m, &quarterly_put(1.0), &CosConfig::default()).unwrap();
        let fine = price_cos(
            &m,
            &quarterly_put(1.0),
            &CosConfig { n_terms: 512, ..CosConfig::default() },
        )
        .unwrap();
        check("transform self-convergence", (base - fine).abs() < 1e-8);
    }

    // Reconstructed transition density integrates to one (Simpson).
    {
        let (a, b) = bermudan::cos::truncation_range(m.r, m.sigma, 1.0, 10.0);
        let l = 256usize;
        let width = b - a;
        let density = |y: f64| {
            let mut acc = 0.0;
            for k in 0..l {
                let omega = k as f64 * std::f64::consts::PI / width;
                let term = (bermudan::cos::char_fn(omega, 0.25, m.r, m.sigma)
                    * num_complex::Complex64::new(0.0, omega * (0.0 - a)).exp())
                .re * (omega * (y - a)).cos();
                acc += if k == 0 { 0.5 * term } else { term };
            }
            acc * 2.0 / width
        };
        let n = 4000;
        let h = width / n as f64;
        let mut total = density(a) + density(b);
        for i in 1..n {
            total += if i % 2 == 1 { 4.0 } else { 2.0 } * density(a + i as f64 * h);
        }
        total *= h / 3.0;
        check("density integral", (total - 1.0).abs() < 1e-6);
    }

    // Seed determinism: identical seeds reproduce prices bit for bit, and
    // the first paths do not depend on how many paths are drawn.
    {
        let config = TrainingConfig { epochs: 2, ..TrainingConfig::default() };
        let a = price_rlnn(&m, &quarterly_put(1.0), &config, 1_000, 9).unwrap();
        let b = price_rlnn(&m, &quarterly_put(1.0), &config, 1_000, 9).unwrap();
        let small = simulate_gbm(&m, None, &[0.5, 1.0], 8, 123).unwrap();
        let large = simulate_gbm(&m, None, &[0.5, 1.0], 64, 123).unwrap();
        let prefix_ok = (0..8).all(|j| {
            (0..2).all(|i| small.values[(j, i)] == large.values[(j, i)])
        });
        check(
            "seed determinism",
            a.t0_price() == b.t0_price() && a.surface.values == b.surface.values && prefix_ok,
        );
    }

    let pass = failures.is_empty();
    let detail = if pass {
        "invariants: parity, martingale, weight-solve optimality, strike floor, \
         exercise-right monotonicity, exposure zeroing, transform self-convergence, \
         density integral, seed determinism"
            .to_string()
    } else {
        format!("failed: {}", failures.join(", "))
    };
    let pass = verdict(8, pass, &detail);
    assert!(pass);
}

//! Independent numerical oracles for the integration tests.
//!
//! Everything here deliberately avoids the library's own numerics: the
//! quadrature is hand-rolled Gauss–Legendre, the lattice pricer is a CRR
//! binomial tree, the regression reference solves the normal equations by
//! Gauss–Jordan elimination, and the Monte Carlo reference uses a different
//! RNG stack (`StdRng` + `rand_distr`) than the engine's ChaCha streams.
//!
//! The module is shared by several test binaries, each of which uses only a
//! subset of it.
#![allow(dead_code)]

use bermudan::{BermudanSpec, MarketParams, OptionType};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre polynomial recurrence.
pub fn gauss_legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi-style initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` via the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Integrate `f` over `[a, b]` with an `n`-point Gauss–Legendre rule.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre_nodes(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// CRR binomial price of the Bermudan contract with `steps` time steps over
/// the full horizon. Exercise is only allowed at steps whose time matches an
/// exercise date, so `steps` must place each date on the lattice (for
/// quarterly dates: any multiple of 4). The time-zero node takes no exercise
/// decision, matching the transform pricer's convention.
pub fn binomial_bermudan(market: &MarketParams, contract: &BermudanSpec, steps: usize) -> f64 {
    let maturity = *contract.exercise_times.last().expect("at least one date");
    let dt = maturity / steps as f64;
    let up = (market.sigma * dt.sqrt()).exp();
    let down = 1.0 / up;
    let disc = (-market.r * dt).exp();
    let q = ((market.r * dt).exp() - down) / (up - down);
    assert!(q > 0.0 && q < 1.0, "lattice probability {q} out of range");

    let is_exercise_step: Vec<bool> = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            contract.exercise_times.iter().any(|&e| (e - t).abs() < 1e-9)
        })
        .collect();

    // Terminal layer.
    let mut values: Vec<f64> = (0..=steps)
        .map(|j| {
            let s = market.s0 * up.powi(j as i32) * down.powi((steps - j) as i32);
            contract.payoff(s)
        })
        .collect();

    for k in (0..steps).rev() {
        for j in 0..=k {
            let cont = disc * (q * values[j + 1] + (1.0 - q) * values[j]);
            values[j] = if is_exercise_step[k] {
                let s = market.s0 * up.powi(j as i32) * down.powi((k - j) as i32);
                contract.payoff(s).max(cont)
            } else {
                cont
            };
        }
        values.truncate(k + 1);
    }
    values[0]
}

/// Binomial value of the contract seen from an arbitrary state `(t, spot)`.
/// The lattice covers the remaining horizon with `steps_per_eighth` steps
/// per eighth of a year, so every benchmark horizon (dates and midpoints are
/// all multiples of 0.125) puts the remaining exercise dates exactly on the
/// lattice. At an exercise date the value includes the immediate-exercise
/// right; strictly between dates it is a pure continuation value.
pub fn binomial_value_at(
    market: &MarketParams,
    contract: &BermudanSpec,
    t: f64,
    spot: f64,
    steps_per_eighth: usize,
) -> f64 {
    let maturity = *contract.exercise_times.last().expect("at least one date");
    let remaining = maturity - t;
    assert!(remaining > 1e-12, "state must lie strictly before maturity");
    let eighths = remaining / 0.125;
    assert!(
        (eighths - eighths.round()).abs() < 1e-9,
        "horizon {t} is not a multiple of an eighth"
    );
    let steps = (eighths.round() as usize) * steps_per_eighth;
    let dt = remaining / steps as f64;
    let up = (market.sigma * dt.sqrt()).exp();
    let down = 1.0 / up;
    let disc = (-market.r * dt).exp();
    let q = ((market.r * dt).exp() - down) / (up - down);
    assert!(q > 0.0 && q < 1.0);

    let is_exercise_step: Vec<bool> = (0..=steps)
        .map(|k| {
            let tk = t + k as f64 * dt;
            contract.exercise_times.iter().any(|&e| (e - tk).abs() < 1e-9)
        })
        .collect();

    let mut values: Vec<f64> = (0..=steps)
        .map(|j| {
            let s = spot * up.powi(j as i32) * down.powi((steps - j) as i32);
            contract.payoff(s)
        })
        .collect();
    for k in (0..steps).rev() {
        for j in 0..=k {
            let cont = disc * (q * values[j + 1] + (1.0 - q) * values[j]);
            values[j] = if is_exercise_step[k] {
                let s = spot * up.powi(j as i32) * down.powi((k - j) as i32);
                contract.payoff(s).max(cont)
            } else {
                cont
            };
        }
        values.truncate(k + 1);
    }
    values[0]
}

/// Solve the normal equations `(X^T X) w = X^T y` by Gauss–Jordan elimination
/// with partial pivoting. Panics on a (numerically) singular system — this
/// reference is only for full-rank cross-checks.
pub fn normal_equations_reference(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let p = x[0].len();
    assert_eq!(n, y.len());
    // Build the augmented [X^T X | X^T y].
    let mut aug = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            aug[i][j] = (0..n).map(|r| x[r][i] * x[r][j]).sum();
        }
        aug[i][p] = (0..n).map(|r| x[r][i] * y[r]).sum();
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())
            .unwrap();
        assert!(aug[pivot][col].abs() > 1e-12, "singular normal equations");
        aug.swap(col, pivot);
        let scale = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= scale;
        }
        for row in 0..p {
            if row != col {
                let factor = aug[row][col];
                for j in 0..=p {
                    aug[row][j] -= factor * aug[col][j];
                }
            }
        }
    }
    (0..p).map(|i| aug[i][p]).collect()
}

/// Plain Monte Carlo European price with an RNG stack unrelated to the
/// engine's. Returns `(price, standard_error)`.
pub fn mc_european_reference(
    market: &MarketParams,
    strike: f64,
    side: OptionType,
    maturity: f64,
    n_paths: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let drift = (market.r - 0.5 * market.sigma * market.sigma) * maturity;
    let vol = market.sigma * maturity.sqrt();
    let disc = (-market.r * maturity).exp();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_paths {
        let z: f64 = rng.sample(StandardNormal);
        let s = market.s0 * (drift + vol * z).exp();
        let pay = disc * (side.sign() * (s - strike)).max(0.0);
        sum += pay;
        sum_sq += pay * pay;
    }
    let mean = sum / n_paths as f64;
    let var = (sum_sq / n_paths as f64 - mean * mean).max(0.0);
    (mean, (var / n_paths as f64).sqrt())
}

/// Standard benchmark market.
pub fn benchmark_market() -> MarketParams {
    MarketParams { s0: 1.0, r: 0.06, sigma: 0.2 }
}

/// Quarterly Bermudan put with the given strike.
pub fn quarterly_put(strike: f64) -> BermudanSpec {
    BermudanSpec {
        strike,
        side: OptionType::Put,
        exercise_times: vec![0.25, 0.5, 0.75, 1.0],
    }
}

//! Market model: geometric Brownian motion paths, discounting and the
//! Black–Scholes formula shared by every pricer in the crate.
//!
//! The underlying follows dS = mu S dt + sigma S dW and is sampled exactly on
//! the requested date grid through the lognormal transition
//!
//! ```text
//! S_{t+dt} = S_t * exp((mu - sigma^2/2) dt + sigma sqrt(dt) Z),   Z ~ N(0,1)
//! ```
//!
//! so there is no discretisation bias regardless of grid spacing. Path `j`
//! draws its normals from RNG stream `j` of a counter-based generator seeded
//! once per grid: a grid is fully determined by `(seed, times, n_paths)`, and
//! any single path can be reproduced in isolation without generating the
//! others.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tolerance used when matching a continuous time against a grid date.
pub(crate) const TIME_EPS: f64 = 1e-12;

/// Risk-neutral market parameters: spot, continuously compounded short rate
/// and lognormal volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub s0: f64,
    pub r: f64,
    pub sigma: f64,
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0.is_finite() && self.s0 > 0.0) {
            return Err(invalid(format!("spot s0 must be finite and > 0, got {}", self.s0)));
        }
        if !self.r.is_finite() {
            return Err(invalid("rate r must be finite"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(invalid(format!("volatility must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Real-world drift and volatility. Exposure scenarios evolve the underlying
/// under these dynamics while valuation stays risk-neutral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealWorldParams {
    pub mu: f64,
    pub sigma_real: f64,
}

impl RealWorldParams {
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(invalid("real-world drift mu must be finite"));
        }
        if !(self.sigma_real.is_finite() && self.sigma_real >= 0.0) {
            return Err(invalid(format!(
                "real-world volatility must be finite and >= 0, got {}",
                self.sigma_real
            )));
        }
        Ok(())
    }
}

/// Probability measure a path grid was simulated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    RiskNeutral,
    RealWorld,
}

/// Call/put flag. `sign()` is the `+1`/`-1` factor in the payoff
/// `max(sign * (S - K), 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionType {
    Call,
    Put,
}

impl OptionType {
    pub fn sign(self) -> f64 {
        match self {
            OptionType::Call => 1.0,
            OptionType::Put => -1.0,
        }
    }
}

/// Monte Carlo paths of the underlying on a fixed time grid. Row `j`, column
/// `i` holds `S_{times[i]}(omega_j)`; times are strictly increasing and
/// strictly positive (the known state at t = 0 is not stored).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathGrid {
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
    pub measure: Measure,
    pub seed: u64,
}

impl PathGrid {
    pub fn n_paths(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Index of the grid date equal to `t` (within a 1e-12 tolerance).
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&u| (u - t).abs() <= TIME_EPS)
    }

    /// Copy of the spot column at date index `i`.
    pub fn spots_at(&self, i: usize) -> Vec<f64> {
        self.values.column(i).iter().copied().collect()
    }
}

/// Standard normal CDF via the complementary error function, accurate in
/// both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Discount factor `exp(-r t)` for a horizon `t >= 0`.
pub fn discount(r: f64, t: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid(format!("discount horizon must be finite and >= 0, got {t}")));
    }
    if !r.is_finite() {
        return Err(invalid("rate r must be finite"));
    }
    Ok((-r * t).exp())
}

/// Signed intrinsic value `sign * (spot - strike)`; negative when out of the
/// money. Exercise tests compare this raw quantity against continuation.
pub fn intrinsic(side: OptionType, spot: f64, strike: f64) -> f64 {
    side.sign() * (spot - strike)
}

/// Exercise payoff `max(intrinsic, 0)`.
pub fn payoff(side: OptionType, spot: f64, strike: f64) -> f64 {
    intrinsic(side, spot, strike).max(0.0)
}

/// European Black–Scholes price of a vanilla call/put.
///
/// At `tau == 0` or `sigma == 0` the price degenerates to the discounted
/// intrinsic value on the forward, which is the continuous limit of the
/// formula, so portfolio values are continuous as expiry approaches.
pub fn black_scholes(
    spot: f64,
    strike: f64,
    r: f64,
    sigma: f64,
    tau: f64,
    side: OptionType,
) -> Result<f64> {
    if !(spot.is_finite() && spot > 0.0) {
        return Err(invalid(format!("black_scholes: spot must be > 0, got {spot}")));
    }
    if !(strike.is_finite() && strike > 0.0) {
        return Err(invalid(format!("black_scholes: strike must be > 0, got {strike}")));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(invalid(format!("black_scholes: tau must be >= 0, got {tau}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid(format!("black_scholes: sigma must be >= 0, got {sigma}")));
    }
    if !r.is_finite() {
        return Err(invalid("black_scholes: rate must be finite"));
    }
    Ok(bs_unchecked(spot, strike, r, sigma, tau, side))
}

/// Black–Scholes kernel without argument validation; callers guarantee
/// `spot > 0`, `strike > 0`, `tau >= 0`, `sigma >= 0`.
pub(crate) fn bs_unchecked(
    spot: f64,
    strike: f64,
    r: f64,
    sigma: f64,
    tau: f64,
    side: OptionType,
) -> f64 {
    let sign = side.sign();
    if tau == 0.0 || sigma == 0.0 {
        return (sign * (spot - strike * (-r * tau).exp())).max(0.0);
    }
    let vol = sigma * tau.sqrt();
    let d1 = ((spot / strike).ln() + (r + 0.5 * sigma * sigma) * tau) / vol;
    let d2 = d1 - vol;
    let df = (-r * tau).exp();
    // sign = +1: S Phi(d1) - K e^{-r tau} Phi(d2); sign = -1 mirrors both terms.
    sign * (spot * norm_cdf(sign * d1) - strike * df * norm_cdf(sign * d2))
}

/// Simulate GBM paths on `times` under the risk-neutral measure, or under
/// `real_world` dynamics when provided. Transitions are exact; normals come
/// from a hand-rolled Box–Muller transform over per-path ChaCha streams.
pub fn simulate_gbm(
    market: &MarketParams,
    real_world: Option<&RealWorldParams>,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<PathGrid> {
    market.validate()?;
    if let Some(rw) = real_world {
        rw.validate()?;
    }
    if n_paths == 0 {
        return Err(invalid("simulate_gbm: n_paths must be >= 1"));
    }
    if times.is_empty() {
        return Err(invalid("simulate_gbm: empty time grid"));
    }
    let mut prev = 0.0;
    for &t in times {
        if !(t.is_finite() && t > prev) {
            return Err(invalid(format!(
                "simulate_gbm: times must be strictly increasing and > 0, got {t} after {prev}"
            )));
        }
        prev = t;
    }

    let (drift, vol) = match real_world {
        Some(rw) => (rw.mu, rw.sigma_real),
        None => (market.r, market.sigma),
    };
    let measure = if real_world.is_some() { Measure::RealWorld } else { Measure::RiskNeutral };

    // Per-interval log-increment coefficients, shared by all paths.
    let mut locs = Vec::with_capacity(times.len());
    let mut scales = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    for &t in times {
        let dt = t - t_prev;
        locs.push((drift - 0.5 * vol * vol) * dt);
        scales.push(vol * dt.sqrt());
        t_prev = t;
    }

    let mut values = DMatrix::zeros(n_paths, times.len());
    let mut normals = vec![0.0; times.len()];
    for j in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        box_muller_fill(&mut rng, &mut normals);
        let mut s = market.s0;
        for (i, z) in normals.iter().enumerate() {
            s *= (locs[i] + scales[i] * z).exp();
            values[(j, i)] = s;
        }
    }

    Ok(PathGrid { times: times.to_vec(), values, measure, seed })
}

/// Fill `out` with independent standard normals drawn by the Box–Muller
/// transform. Uses `1 - U` with `U` in `[0, 1)` so the log argument is in
/// `(0, 1]` and never zero.
fn box_muller_fill(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        out[i] = radius * cos;
        i += 1;
        if i < out.len() {
            out[i] = radius * sin;
            i += 1;
        }
    }
}

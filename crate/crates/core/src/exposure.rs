//! Counterparty exposure profiles for Bermudan options.
//!
//! The holder of an option faces counterparty risk only while the trade is
//! alive: once exercised (or expired) nothing remains at risk. Exposure at a
//! horizon is therefore the option value zeroed on paths that exercised
//! strictly before it. This module separates the three ingredients:
//!
//! * a stopping rule — the first exercise date where intrinsic value beats
//!   the model's continuation value ([`stopping_times`]);
//! * per-horizon model values on a simulated grid (the [`ExposureModel`]
//!   adapters for the portfolio pricer, the Fourier reference and LSM);
//! * profile statistics over paths: expected exposure (mean over *all*
//!   paths, dead ones contributing zero) and potential future exposure (a
//!   nearest-rank upper quantile).
//!
//! Scenario analysis simulates under real-world dynamics while each model
//! keeps valuing under the pricing measure. Every scenario reuses the same
//! seed, so scenarios differ only through their drift and volatility
//! (common random numbers); the scenario with the risk-neutral drift and
//! volatility reproduces the risk-neutral grid exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cos::{CosConfig, CosEngine};
use crate::engine::{continuation_values, value_at, BermudanSpec};
use crate::error::{invalid, Result};
use crate::hedge::HedgeLayer;
use crate::lsm::{lsm_values_on, InterpScheme, LsmResult};
use crate::market::{
    intrinsic, simulate_gbm, MarketParams, PathGrid, RealWorldParams, TIME_EPS,
};

/// Per-path exercise decisions: `tau_idx[j]` is the index into
/// `exercise_times` where path `j` stops, or `None` if it never exercises
/// (worthless at maturity) and stays alive throughout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingTimes {
    pub exercise_times: Vec<f64>,
    pub tau_idx: Vec<Option<usize>>,
}

impl StoppingTimes {
    pub fn n_paths(&self) -> usize {
        self.tau_idx.len()
    }

    /// The trade is alive at horizon `t` if the path has not exercised
    /// strictly before `t` (exercising *at* `t` still counts as alive there:
    /// the value handed over at the exercise date is itself at risk).
    pub fn alive_at(&self, path: usize, t: f64) -> bool {
        match self.tau_idx[path] {
            None => true,
            Some(m) => self.exercise_times[m] >= t - TIME_EPS,
        }
    }

    pub fn exercise_time(&self, path: usize) -> Option<f64> {
        self.tau_idx[path].map(|m| self.exercise_times[m])
    }
}

/// First-passage exercise rule shared by every model: stop at the first date
/// whose intrinsic value strictly beats the model's continuation value
/// there. Intrinsic value is used unclipped, and the continuation at
/// maturity is zero, so a path in the money at maturity always stops while a
/// path out of the money everywhere never does.
///
/// `date_spots` and `continuations` are `n_paths x n_dates` matrices aligned
/// with `contract.exercise_times`.
pub fn stopping_times(
    contract: &BermudanSpec,
    date_spots: &DMatrix<f64>,
    continuations: &DMatrix<f64>,
) -> Result<StoppingTimes> {
    contract.validate()?;
    let m_dates = contract.exercise_times.len();
    if date_spots.ncols() != m_dates || continuations.ncols() != m_dates {
        return Err(invalid("stopping_times: matrices must have one column per exercise date"));
    }
    if date_spots.nrows() != continuations.nrows() {
        return Err(invalid("stopping_times: path counts differ"));
    }
    let tau_idx = (0..date_spots.nrows())
        .map(|j| {
            (0..m_dates).find(|&m| {
                intrinsic(contract.side, date_spots[(j, m)], contract.strike)
                    > continuations[(j, m)]
            })
        })
        .collect();
    Ok(StoppingTimes { exercise_times: contract.exercise_times.clone(), tau_idx })
}

/// Model values with the stopping rule applied: `exposures` equals `values`
/// while a path is alive and zero afterwards.
#[derive(Debug, Clone)]
pub struct ExposureCube {
    pub times: Vec<f64>,
    /// Raw model values at every `(path, horizon)`.
    pub values: DMatrix<f64>,
    /// Values zeroed once the path has exercised.
    pub exposures: DMatrix<f64>,
    pub stopping: StoppingTimes,
    /// Paths still alive per horizon.
    pub n_alive: Vec<usize>,
}

impl ExposureCube {
    pub fn new(times: Vec<f64>, values: DMatrix<f64>, stopping: StoppingTimes) -> Result<Self> {
        if values.ncols() != times.len() {
            return Err(invalid("exposure cube: one value column per horizon required"));
        }
        if values.nrows() != stopping.n_paths() {
            return Err(invalid("exposure cube: path counts differ"));
        }
        let mut exposures = values.clone();
        let mut n_alive = vec![0usize; times.len()];
        for (i, &t) in times.iter().enumerate() {
            for j in 0..values.nrows() {
                if stopping.alive_at(j, t) {
                    n_alive[i] += 1;
                } else {
                    exposures[(j, i)] = 0.0;
                }
            }
        }
        Ok(ExposureCube { times, values, exposures, stopping, n_alive })
    }

    /// Expected exposure and nearest-rank potential future exposure at level
    /// `quantile` per horizon. EE averages over *all* paths — exercised ones
    /// contribute zero — and PFE takes the `ceil(q N)`-th smallest exposure.
    pub fn profile(&self, quantile: f64) -> Result<ExposureProfile> {
        if !(quantile > 0.0 && quantile < 1.0) {
            return Err(invalid(format!("profile: quantile must be in (0,1), got {quantile}")));
        }
        let n = self.exposures.nrows();
        let rank = ((quantile * n as f64).ceil() as usize).clamp(1, n) - 1;
        let mut ee = Vec::with_capacity(self.times.len());
        let mut pfe = Vec::with_capacity(self.times.len());
        for i in 0..self.times.len() {
            let col = self.exposures.column(i);
            ee.push(col.mean());
            let mut sorted: Vec<f64> = col.iter().copied().collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("exposures are finite"));
            pfe.push(sorted[rank]);
        }
        Ok(ExposureProfile {
            times: self.times.clone(),
            ee,
            pfe,
            quantile,
            n_alive: self.n_alive.clone(),
        })
    }
}

/// Per-horizon exposure statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExposureProfile {
    pub times: Vec<f64>,
    pub ee: Vec<f64>,
    pub pfe: Vec<f64>,
    pub quantile: f64,
    pub n_alive: Vec<usize>,
}

/// A pricing model that can value the contract on a simulated grid and
/// decide when each path exercises. Grids must contain every exercise date
/// (stopping is decided there) and may add interior horizons.
pub trait ExposureModel {
    fn name(&self) -> &'static str;

    /// Model value per `(path, horizon)`; horizons must lie in `(0, maturity]`.
    fn values_on(&self, grid: &PathGrid) -> Result<DMatrix<f64>>;

    /// Exercise decisions along each path.
    fn stopping_on(&self, grid: &PathGrid) -> Result<StoppingTimes>;

    /// Values plus stopping rule in one cube.
    fn exposure_on(&self, grid: &PathGrid) -> Result<ExposureCube> {
        let values = self.values_on(grid)?;
        let stopping = self.stopping_on(grid)?;
        ExposureCube::new(grid.times.clone(), values, stopping)
    }
}

/// Extract the spot matrix restricted to the exercise-date columns.
fn date_spot_matrix(grid: &PathGrid, contract: &BermudanSpec) -> Result<DMatrix<f64>> {
    let cols: Vec<usize> = contract
        .exercise_times
        .iter()
        .map(|&t| {
            grid.time_index(t)
                .ok_or_else(|| invalid(format!("grid is missing the exercise date {t}")))
        })
        .collect::<Result<_>>()?;
    let n = grid.n_paths();
    Ok(DMatrix::from_fn(n, cols.len(), |j, m| grid.values[(j, cols[m])]))
}

/// Exposure adapter for the fitted option-portfolio pricer. Between exercise
/// dates values come from the layers' closed-form portfolio prices at stub
/// maturities; on an exercise date the value is max(payoff, continuation),
/// matching the backward recursion and the stopping rule, with the bare
/// payoff at maturity.
pub struct RlnnModel {
    market: MarketParams,
    contract: BermudanSpec,
    layers: Vec<HedgeLayer>,
}

impl RlnnModel {
    pub fn new(
        market: MarketParams,
        contract: BermudanSpec,
        layers: Vec<HedgeLayer>,
    ) -> Result<Self> {
        market.validate()?;
        contract.validate()?;
        if layers.len() != contract.exercise_times.len() {
            return Err(invalid("RlnnModel: one fitted layer per exercise date required"));
        }
        for layer in &layers {
            layer.validate()?;
        }
        Ok(RlnnModel { market, contract, layers })
    }
}

impl ExposureModel for RlnnModel {
    fn name(&self) -> &'static str {
        "rlnn"
    }

    fn values_on(&self, grid: &PathGrid) -> Result<DMatrix<f64>> {
        let n = grid.n_paths();
        let times = &self.contract.exercise_times;
        let mut out = DMatrix::zeros(n, grid.n_times());
        for (i, &t) in grid.times.iter().enumerate() {
            let spots = grid.spots_at(i);
            // At an exercise date the option value is the recursion's own
            // max(payoff, continuation) — the same quantity the stopping
            // rule compares — with the bare payoff at maturity. The stub
            // portfolio valuation applies strictly between dates.
            let date = times.iter().position(|&d| (d - t).abs() <= TIME_EPS);
            let vals = match date {
                Some(m) if m + 1 == times.len() => {
                    spots.iter().map(|&s| self.contract.payoff(s)).collect()
                }
                Some(m) => {
                    let dt = times[m + 1] - times[m];
                    let q = continuation_values(
                        &self.layers[m + 1],
                        &spots,
                        self.market.r,
                        self.market.sigma,
                        dt,
                    )?;
                    spots
                        .iter()
                        .zip(&q)
                        .map(|(&s, &qv)| self.contract.payoff(s).max(qv))
                        .collect::<Vec<f64>>()
                }
                None => value_at(&self.layers, &self.market, &self.contract, t, &spots)?,
            };
            for j in 0..n {
                out[(j, i)] = vals[j];
            }
        }
        Ok(out)
    }

    fn stopping_on(&self, grid: &PathGrid) -> Result<StoppingTimes> {
        let date_spots = date_spot_matrix(grid, &self.contract)?;
        let times = &self.contract.exercise_times;
        let m_dates = times.len();
        let n = grid.n_paths();
        let mut q = DMatrix::zeros(n, m_dates);
        for m in 0..m_dates - 1 {
            let spots: Vec<f64> = date_spots.column(m).iter().copied().collect();
            let dt = times[m + 1] - times[m];
            let vals = continuation_values(
                &self.layers[m + 1],
                &spots,
                self.market.r,
                self.market.sigma,
                dt,
            )?;
            for j in 0..n {
                q[(j, m)] = vals[j];
            }
        }
        stopping_times(&self.contract, &date_spots, &q)
    }
}

/// Exposure adapter for the Fourier reference pricer. Each grid gets its own
/// recursion whose truncation interval is widened to cover every simulated
/// state, so fat-tailed real-world paths stay valid.
pub struct CosModel {
    market: MarketParams,
    contract: BermudanSpec,
    config: CosConfig,
}

impl CosModel {
    pub fn new(market: MarketParams, contract: BermudanSpec, config: CosConfig) -> Result<Self> {
        market.validate()?;
        contract.validate()?;
        config.validate()?;
        Ok(CosModel { market, contract, config })
    }

    fn engine_for(&self, grid: &PathGrid) -> Result<CosEngine> {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        for &s in grid.values.iter() {
            let x = (s / self.contract.strike).ln();
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        CosEngine::with_state_range(
            &self.market,
            &self.contract,
            &self.config,
            Some((x_min, x_max)),
        )
    }
}

impl ExposureModel for CosModel {
    fn name(&self) -> &'static str {
        "cos"
    }

    fn values_on(&self, grid: &PathGrid) -> Result<DMatrix<f64>> {
        let engine = self.engine_for(grid)?;
        let n = grid.n_paths();
        let mut out = DMatrix::zeros(n, grid.n_times());
        for (i, &t) in grid.times.iter().enumerate() {
            let vals = engine.values_at(t, &grid.spots_at(i))?;
            for j in 0..n {
                out[(j, i)] = vals[j];
            }
        }
        Ok(out)
    }

    fn stopping_on(&self, grid: &PathGrid) -> Result<StoppingTimes> {
        let engine = self.engine_for(grid)?;
        let date_spots = date_spot_matrix(grid, &self.contract)?;
        let m_dates = self.contract.exercise_times.len();
        let n = grid.n_paths();
        let mut q = DMatrix::zeros(n, m_dates);
        for m in 0..m_dates {
            let spots: Vec<f64> = date_spots.column(m).iter().copied().collect();
            let vals = engine.continuation_at_date(m, &spots)?;
            for j in 0..n {
                q[(j, m)] = vals[j];
            }
        }
        stopping_times(&self.contract, &date_spots, &q)
    }
}

/// Exposure adapter for an LSM fit; interior horizons follow the chosen
/// interpolation rule.
pub struct LsmModel {
    market: MarketParams,
    contract: BermudanSpec,
    fit: LsmResult,
    scheme: InterpScheme,
}

impl LsmModel {
    pub fn new(
        market: MarketParams,
        contract: BermudanSpec,
        fit: LsmResult,
        scheme: InterpScheme,
    ) -> Result<Self> {
        market.validate()?;
        contract.validate()?;
        if fit.coeffs.len() + 1 != contract.exercise_times.len() {
            return Err(invalid("LsmModel: fit does not match the contract's dates"));
        }
        Ok(LsmModel { market, contract, fit, scheme })
    }

    pub fn scheme(&self) -> InterpScheme {
        self.scheme
    }
}

impl ExposureModel for LsmModel {
    fn name(&self) -> &'static str {
        "lsm"
    }

    fn values_on(&self, grid: &PathGrid) -> Result<DMatrix<f64>> {
        lsm_values_on(&self.fit, &self.market, &self.contract, grid, self.scheme)
    }

    fn stopping_on(&self, grid: &PathGrid) -> Result<StoppingTimes> {
        let date_spots = date_spot_matrix(grid, &self.contract)?;
        let m_dates = self.contract.exercise_times.len();
        let q = DMatrix::from_fn(grid.n_paths(), m_dates, |j, m| {
            self.fit.continuation(m, date_spots[(j, m)])
        });
        stopping_times(&self.contract, &date_spots, &q)
    }
}

/// Real-world dynamics for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mu: f64,
    pub sigma_real: f64,
}

/// The benchmark's scenario set: a calm market, two intermediate stresses
/// and a near-flat drift with high volatility.
pub fn default_scenarios() -> Vec<Scenario> {
    vec![
        Scenario { mu: 0.07, sigma_real: 0.1 },
        Scenario { mu: 0.10, sigma_real: 0.3 },
        Scenario { mu: 0.15, sigma_real: 0.5 },
        Scenario { mu: 0.01, sigma_real: 0.5 },
    ]
}

/// Horizon grid containing every exercise date plus the midpoint of each
/// interval (including the stub from time zero to the first date).
pub fn horizons_with_midpoints(exercise_times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(exercise_times.len() * 2);
    let mut prev = 0.0;
    for &t in exercise_times {
        out.push(0.5 * (prev + t));
        out.push(t);
        prev = t;
    }
    out
}

/// Simulate one grid per scenario — all with the same seed, so scenarios
/// differ only through drift and volatility — and build the model's exposure
/// cube on each. A scenario with the risk-neutral drift and volatility
/// therefore reproduces the risk-neutral exposure run exactly.
pub fn run_scenarios(
    model: &dyn ExposureModel,
    market: &MarketParams,
    horizons: &[f64],
    scenarios: &[Scenario],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ExposureCube>> {
    scenarios
        .iter()
        .map(|sc| {
            let real = RealWorldParams { mu: sc.mu, sigma_real: sc.sigma_real };
            let grid = simulate_gbm(market, Some(&real), horizons, n_paths, seed)?;
            model.exposure_on(&grid)
        })
        .collect()
}

//! Bermudan pricing by backward induction over fitted hedge layers.
//!
//! Working backwards from maturity, each exercise date's value function is
//! fitted as a static option portfolio ([`crate::hedge`]). Because every node
//! is a vanilla payoff, the continuation value one date earlier is the
//! portfolio's Black–Scholes value over the interval — an exact conditional
//! expectation under GBM, with no nested simulation and no regression bias
//! from the conditioning step itself:
//!
//! ```text
//! Q_{t-dt}(S) = sum_i w_i BS(S, b_i, r, sigma, dt, cp_i)
//! ```
//!
//! The recursion sets V_{t_M} = payoff, fits a layer per date, and rolls
//! targets back through `V = max(payoff, Q)`. The t0 price is the portfolio
//! value of the first layer discounted over the first interval (against the
//! immediate payoff, where early exercise at inception is admissible).
//! Intermediate-date values for exposure come from the same closed form with
//! a stub maturity, so a fitted product can be revalued at any horizon and
//! any spot without refitting.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hedge::{
    fit_layer, network_value, HedgeLayer, TrainingBatch, TrainingConfig, TrainingTrace,
};
use crate::market::{
    bs_unchecked, payoff, simulate_gbm, MarketParams, OptionType, PathGrid, TIME_EPS,
};

/// Bermudan contract: strike, side and the exercise schedule. Times are
/// strictly increasing, strictly positive, and the last one is the maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BermudanSpec {
    pub strike: f64,
    pub side: OptionType,
    pub exercise_times: Vec<f64>,
}

impl BermudanSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(invalid(format!("contract: strike must be > 0, got {}", self.strike)));
        }
        if self.exercise_times.is_empty() {
            return Err(invalid("contract: needs at least one exercise date"));
        }
        let mut prev = 0.0;
        for &t in &self.exercise_times {
            if !(t.is_finite() && t > prev) {
                return Err(invalid(format!(
                    "contract: exercise times must be strictly increasing and > 0, got {t} after {prev}"
                )));
            }
            prev = t;
        }
        Ok(())
    }

    pub fn maturity(&self) -> f64 {
        *self.exercise_times.last().expect("validated non-empty")
    }

    /// Number of exercise dates.
    pub fn n_dates(&self) -> usize {
        self.exercise_times.len()
    }

    /// Exercise payoff at `spot`.
    pub fn payoff(&self, spot: f64) -> f64 {
        payoff(self.side, spot, self.strike)
    }
}

/// Per-path value and continuation surfaces over the exercise dates, plus
/// the time-zero price. Column `m` corresponds to `times[m]`; the last
/// continuation column is zero (nothing is continued past maturity).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueSurface {
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
    pub continuation: DMatrix<f64>,
    pub t0_price: f64,
}

/// Result of one full backward-induction fit: the per-date layers (index `m`
/// belongs to `exercise_times[m]`), their training traces, and the surfaces
/// on the training grid.
#[derive(Debug, Clone)]
pub struct RlnnFit {
    pub layers: Vec<HedgeLayer>,
    pub traces: Vec<TrainingTrace>,
    pub surface: ValueSurface,
}

impl RlnnFit {
    pub fn t0_price(&self) -> f64 {
        self.surface.t0_price
    }
}

/// Mix a base seed with a stream index (splitmix64) so that the path
/// simulation and each layer's batch sampler get independent streams from
/// one user-facing seed.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Black–Scholes value of a fitted layer's portfolio at `spot`, `dt` before
/// the layer's expiry. `dt == 0` degenerates to [`network_value`].
pub fn continuation_value(
    layer: &HedgeLayer,
    spot: f64,
    r: f64,
    sigma: f64,
    dt: f64,
) -> Result<f64> {
    layer.validate()?;
    if !(spot.is_finite() && spot > 0.0) {
        return Err(invalid(format!("continuation_value: spot must be > 0, got {spot}")));
    }
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(invalid(format!("continuation_value: dt must be >= 0, got {dt}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) || !r.is_finite() {
        return Err(invalid("continuation_value: bad market parameters"));
    }
    Ok(portfolio_bs(layer, spot, r, sigma, dt))
}

/// Vectorised [`continuation_value`] with the layer validated once.
pub fn continuation_values(
    layer: &HedgeLayer,
    spots: &[f64],
    r: f64,
    sigma: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    layer.validate()?;
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(invalid(format!("continuation_values: dt must be >= 0, got {dt}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) || !r.is_finite() {
        return Err(invalid("continuation_values: bad market parameters"));
    }
    spots
        .iter()
        .map(|&s| {
            if !(s.is_finite() && s > 0.0) {
                return Err(invalid(format!("continuation_values: spot must be > 0, got {s}")));
            }
            Ok(portfolio_bs(layer, s, r, sigma, dt))
        })
        .collect()
}

fn portfolio_bs(layer: &HedgeLayer, spot: f64, r: f64, sigma: f64, dt: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..layer.len() {
        acc += layer.weights[i]
            * bs_unchecked(spot, layer.strikes[i], r, sigma, dt, layer.cp[i]);
    }
    acc
}

/// Fit and price the Bermudan product on a fresh risk-neutral grid of
/// `n_paths` paths. One layer is trained per exercise date, most distant
/// first; regression targets come from the previous layer's closed-form
/// continuation. The `seed` fixes both the path simulation and every
/// mini-batch stream, making the whole fit reproducible.
pub fn price_rlnn(
    market: &MarketParams,
    contract: &BermudanSpec,
    config: &TrainingConfig,
    n_paths: usize,
    seed: u64,
) -> Result<RlnnFit> {
    market.validate()?;
    contract.validate()?;
    config.validate()?;
    let times = &contract.exercise_times;
    let m_dates = times.len();
    let grid = simulate_gbm(market, None, times, n_paths, derive_seed(seed, 0))?;

    let mut values = DMatrix::zeros(n_paths, m_dates);
    let mut continuation = DMatrix::zeros(n_paths, m_dates);
    let mut layers: Vec<Option<HedgeLayer>> = vec![None; m_dates];
    let mut traces: Vec<Option<TrainingTrace>> = vec![None; m_dates];

    // Targets at maturity: the exercise payoff.
    let mut v: Vec<f64> =
        grid.spots_at(m_dates - 1).iter().map(|&s| contract.payoff(s)).collect();

    for m in (0..m_dates).rev() {
        let spots = grid.spots_at(m);
        let batch = TrainingBatch { spots, targets: v.clone() };
        let (layer, trace) =
            fit_layer(&batch, market.s0, times[m], config, derive_seed(seed, 100 + m as u64))?;
        for j in 0..n_paths {
            values[(j, m)] = v[j];
        }
        if m > 0 {
            let dt = times[m] - times[m - 1];
            let prev_spots = grid.spots_at(m - 1);
            let q = continuation_values(&layer, &prev_spots, market.r, market.sigma, dt)?;
            for j in 0..n_paths {
                continuation[(j, m - 1)] = q[j];
                v[j] = contract.payoff(prev_spots[j]).max(q[j]);
            }
        }
        layers[m] = Some(layer);
        traces[m] = Some(trace);
    }

    let layers: Vec<HedgeLayer> = layers.into_iter().map(|l| l.expect("filled")).collect();
    let traces: Vec<TrainingTrace> = traces.into_iter().map(|t| t.expect("filled")).collect();
    let q0 = continuation_value(&layers[0], market.s0, market.r, market.sigma, times[0])?;
    let t0_price = contract.payoff(market.s0).max(q0);

    Ok(RlnnFit {
        layers,
        traces,
        surface: ValueSurface { times: times.clone(), values, continuation, t0_price },
    })
}

/// Re-run the value recursion for already-fitted layers on a new grid (no
/// training): per-date continuation from the closed form, values as
/// `max(payoff, Q)`, and the same t0 rule as [`price_rlnn`]. The grid may
/// carry extra dates (e.g. a finer exposure grid); only the exercise-date
/// columns are read.
pub fn evaluate_on(
    layers: &[HedgeLayer],
    market: &MarketParams,
    contract: &BermudanSpec,
    grid: &PathGrid,
) -> Result<ValueSurface> {
    market.validate()?;
    contract.validate()?;
    let times = &contract.exercise_times;
    if layers.len() != times.len() {
        return Err(invalid(format!(
            "evaluate_on: {} layers for {} exercise dates",
            layers.len(),
            times.len()
        )));
    }
    let cols: Vec<usize> = times
        .iter()
        .map(|&t| {
            grid.time_index(t)
                .ok_or_else(|| invalid(format!("evaluate_on: grid is missing exercise date {t}")))
        })
        .collect::<Result<_>>()?;

    let n = grid.n_paths();
    let m_dates = times.len();
    let mut values = DMatrix::zeros(n, m_dates);
    let mut continuation = DMatrix::zeros(n, m_dates);
    for m in 0..m_dates {
        let spots = grid.spots_at(cols[m]);
        if m + 1 < m_dates {
            let dt = times[m + 1] - times[m];
            let q =
                continuation_values(&layers[m + 1], &spots, market.r, market.sigma, dt)?;
            for j in 0..n {
                continuation[(j, m)] = q[j];
                values[(j, m)] = contract.payoff(spots[j]).max(q[j]);
            }
        } else {
            for j in 0..n {
                values[(j, m)] = contract.payoff(spots[j]);
            }
        }
    }
    let q0 = continuation_value(&layers[0], market.s0, market.r, market.sigma, times[0])?;
    let t0_price = contract.payoff(market.s0).max(q0);
    Ok(ValueSurface { times: times.clone(), values, continuation, t0_price })
}

/// Value the fitted product at an arbitrary horizon `0 < t <= maturity` for
/// each spot: the bracketing layer's portfolio valued over the stub
/// `t_m - t`. At an exercise date itself this is the layer's own payoff
/// value (the left limit in `t`), so the map is continuous on each
/// inter-exercise interval.
pub fn value_at(
    layers: &[HedgeLayer],
    market: &MarketParams,
    contract: &BermudanSpec,
    t: f64,
    spots: &[f64],
) -> Result<Vec<f64>> {
    market.validate()?;
    contract.validate()?;
    let times = &contract.exercise_times;
    if layers.len() != times.len() {
        return Err(invalid("value_at: layer count must match exercise dates"));
    }
    if !(t > TIME_EPS && t <= contract.maturity() + TIME_EPS) {
        return Err(invalid(format!(
            "value_at: horizon {t} outside (0, {}]",
            contract.maturity()
        )));
    }
    let m = times
        .iter()
        .position(|&u| u >= t - TIME_EPS)
        .expect("t <= maturity guarantees a bracketing date");
    let tau = (times[m] - t).max(0.0);
    if tau <= TIME_EPS {
        Ok(spots.iter().map(|&s| network_value(s, &layers[m])).collect())
    } else {
        continuation_values(&layers[m], spots, market.r, market.sigma, tau)
    }
}

/// Serialisable fit: everything needed to revalue the product on new paths
/// without retraining. Version-checked JSON on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub format: String,
    pub version: u32,
    pub market: MarketParams,
    pub contract: BermudanSpec,
    pub layers: Vec<HedgeLayer>,
    pub t0_price: f64,
}

pub const FIT_ARTIFACT_FORMAT: &str = "bermudan-rlnn-fit";
pub const FIT_ARTIFACT_VERSION: u32 = 1;

impl FitArtifact {
    pub fn new(market: MarketParams, contract: BermudanSpec, fit: &RlnnFit) -> Self {
        FitArtifact {
            format: FIT_ARTIFACT_FORMAT.to_string(),
            version: FIT_ARTIFACT_VERSION,
            market,
            contract,
            layers: fit.layers.clone(),
            t0_price: fit.t0_price(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| invalid(format!("artifact serialise: {e}")))?;
        fs::write(path, body)
            .map_err(|e| invalid(format!("artifact write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path)
            .map_err(|e| invalid(format!("artifact read {}: {e}", path.display())))?;
        let artifact: FitArtifact = serde_json::from_str(&body)
            .map_err(|e| invalid(format!("artifact parse {}: {e}", path.display())))?;
        if artifact.format != FIT_ARTIFACT_FORMAT {
            return Err(invalid(format!("artifact format '{}' not recognised", artifact.format)));
        }
        if artifact.version != FIT_ARTIFACT_VERSION {
            return Err(invalid(format!(
                "artifact version {} unsupported (expected {})",
                artifact.version, FIT_ARTIFACT_VERSION
            )));
        }
        for layer in &artifact.layers {
            layer.validate()?;
        }
        Ok(artifact)
    }
}

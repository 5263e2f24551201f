//! Static-hedge regression network for one exercise date.
//!
//! The value function at an exercise date is approximated by a portfolio of
//! `p` vanilla options on the underlying,
//!
//! ```text
//! G(S) = sum_i w_i * max(cp_i * (S - b_i), 0),   cp_i in {+1, -1},
//! ```
//!
//! i.e. a single hidden layer of ReLU nodes whose input weights are frozen to
//! `+1` (calls) and `-1` (puts). The only free parameters are the strikes
//! `b_i` (hidden biases) and the output weights `w_i`. This constraint is
//! what buys the closed-form continuation value in [`crate::engine`]: each
//! node is a traded payoff with a Black–Scholes expectation.
//!
//! Training minimises the mean squared error `L = ||y - X(b) w||^2 / (2n)`
//! over simulated (spot, value) pairs. Two modes are provided:
//!
//! - **Hybrid** (the method of interest): weights are never descended. After
//!   every strike update the weights are recomputed exactly by least squares
//!   on the full training set, so the descent effectively runs on the
//!   concentrated loss `L*(b) = min_w L(w, b)`, whose gradient at the
//!   optimised weights is the envelope gradient implemented by
//!   [`grad_strikes`]. Strikes move by Adam on mini-batch gradients.
//! - **Joint Adam** (baseline): weights and strikes both move by Adam on
//!   mini-batch gradients of the plain loss, as a conventional network would.
//!
//! Both modes floor strikes at a tiny positive bound after every update so
//! that each node remains a valid option, share the same equidistant strike
//! initialisation around spot, and start from exactly solved weights. The
//! stopping rule watches the full-training-set loss after every iteration and
//! stops once its change stays below `stop_tol` for `stop_patience`
//! consecutive iterations.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numerical, Result};
use crate::market::OptionType;
use crate::ols::solve_least_squares;

/// How the layer's parameters are optimised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Adam on strikes, exact least-squares weights after every update.
    Hybrid,
    /// Adam on strikes and weights jointly (no least-squares step).
    JointAdam,
}

/// Hyperparameters for fitting one layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Number of call nodes (input weight +1).
    pub p_call: usize,
    /// Number of put nodes (input weight -1).
    pub p_put: usize,
    /// Lower edge of the initial strike band, as a fraction of spot.
    pub moneyness_lo: f64,
    /// Upper edge of the initial strike band, as a fraction of spot.
    pub moneyness_hi: f64,
    /// Adam learning rate.
    pub lr: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay.
    pub beta2: f64,
    /// Adam denominator offset.
    pub eps: f64,
    /// Maximum number of epochs.
    pub epochs: usize,
    /// Mini-batch size; batches are drawn with replacement.
    pub batch_size: usize,
    /// Lower bound applied to strikes after every update.
    pub strike_floor: f64,
    /// Stopping threshold on the change of the full-set loss.
    pub stop_tol: f64,
    /// Consecutive small-change iterations required to stop.
    pub stop_patience: usize,
    pub mode: TrainingMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            p_call: 8,
            p_put: 8,
            moneyness_lo: 0.90,
            moneyness_hi: 1.10,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            epochs: 30,
            batch_size: 512,
            strike_floor: 1e-8,
            stop_tol: 1e-8,
            stop_patience: 10,
            mode: TrainingMode::Hybrid,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_call + self.p_put == 0 {
            return Err(invalid("training: need at least one node (p_call + p_put >= 1)"));
        }
        if !(self.moneyness_lo > 0.0 && self.moneyness_lo <= self.moneyness_hi) {
            return Err(invalid(format!(
                "training: strike band [{}, {}] must satisfy 0 < lo <= hi",
                self.moneyness_lo, self.moneyness_hi
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("training: lr must be positive"));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(invalid(format!("training: {name} must lie in [0, 1), got {beta}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(invalid("training: eps must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("training: batch_size must be >= 1"));
        }
        if !(self.strike_floor > 0.0) {
            return Err(invalid("training: strike_floor must be positive"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(invalid("training: stop_tol must be >= 0"));
        }
        if self.stop_patience == 0 {
            return Err(invalid("training: stop_patience must be >= 1"));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.p_call + self.p_put
    }
}

/// One fitted layer: the static hedge portfolio standing in for the value
/// function at `exercise_time`. `strikes`, `weights` and `cp` run in parallel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeLayer {
    pub strikes: Vec<f64>,
    pub weights: Vec<f64>,
    pub cp: Vec<OptionType>,
    pub exercise_time: f64,
}

impl HedgeLayer {
    pub fn len(&self) -> usize {
        self.strikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strikes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.strikes.len() != self.weights.len() || self.strikes.len() != self.cp.len() {
            return Err(invalid("hedge layer: strikes, weights and cp must have equal length"));
        }
        if self.strikes.is_empty() {
            return Err(invalid("hedge layer: empty portfolio"));
        }
        if self.strikes.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(invalid("hedge layer: strikes must be finite and positive"));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("hedge layer: weights must be finite"));
        }
        if !(self.exercise_time.is_finite() && self.exercise_time > 0.0) {
            return Err(invalid("hedge layer: exercise_time must be positive"));
        }
        Ok(())
    }
}

/// Adam first/second moment accumulators plus the bias-correction step count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub eta: Vec<f64>,
    pub nu: Vec<f64>,
    pub step: usize,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { eta: vec![0.0; n], nu: vec![0.0; n], step: 0 }
    }
}

/// Training data for one exercise date: per-path spots and target values.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub spots: Vec<f64>,
    pub targets: Vec<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.spots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spots.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.spots.len() != self.targets.len() {
            return Err(invalid("training batch: spots and targets must have equal length"));
        }
        if self.spots.is_empty() {
            return Err(invalid("training batch: empty"));
        }
        if self.spots.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("training batch: spots must be finite and positive"));
        }
        if self.targets.iter().any(|y| !y.is_finite()) {
            return Err(invalid("training batch: targets must be finite"));
        }
        Ok(())
    }
}

/// Loss/timing record at the end of one epoch (plus the initial state at
/// epoch 0). `iteration` counts cumulative mini-batch steps, `loss` is the
/// full-training-set loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub iteration: usize,
    pub loss: f64,
    pub wall_ms: f64,
}

/// Per-epoch loss history of one layer fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    /// Whether the small-change stopping rule fired before the epoch budget.
    pub stopped_early: bool,
}

impl TrainingTrace {
    pub fn epochs_run(&self) -> usize {
        self.rows.last().map_or(0, |r| r.epoch)
    }

    pub fn final_loss(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.loss)
    }
}

/// Equidistant strike initialisation: `p_call` call strikes spanning the
/// moneyness band around `s0`, then `p_put` put strikes spanning the same
/// band. A single node sits at the band midpoint.
pub fn init_strikes(config: &TrainingConfig, s0: f64) -> Result<(Vec<f64>, Vec<OptionType>)> {
    config.validate()?;
    if !(s0.is_finite() && s0 > 0.0) {
        return Err(invalid(format!("init_strikes: s0 must be > 0, got {s0}")));
    }
    let lo = config.moneyness_lo * s0;
    let hi = config.moneyness_hi * s0;
    let band = |p: usize| -> Vec<f64> {
        if p == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..p).map(|i| lo + (hi - lo) * i as f64 / (p - 1) as f64).collect()
        }
    };
    let mut strikes = band(config.p_call);
    strikes.extend(band(config.p_put));
    let mut cp = vec![OptionType::Call; config.p_call];
    cp.extend(vec![OptionType::Put; config.p_put]);
    Ok((strikes, cp))
}

/// Fill `x` (n rows, p columns) with node payoffs `max(cp_i (s_j - b_i), 0)`.
fn fill_design(spots: &[f64], strikes: &[f64], cp: &[OptionType], x: &mut DMatrix<f64>) {
    debug_assert_eq!(x.nrows(), spots.len());
    debug_assert_eq!(x.ncols(), strikes.len());
    for (i, (&b, &side)) in strikes.iter().zip(cp).enumerate() {
        let sign = side.sign();
        let mut col = x.column_mut(i);
        for (j, &s) in spots.iter().enumerate() {
            col[j] = (sign * (s - b)).max(0.0);
        }
    }
}

/// Design matrix of node payoffs for a fitted layer: row `j`, column `i`
/// holds `max(cp_i (spots_j - b_i), 0)`.
pub fn payoff_matrix(spots: &[f64], layer: &HedgeLayer) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(spots.len(), layer.len());
    fill_design(spots, &layer.strikes, &layer.cp, &mut x);
    x
}

/// Portfolio value `sum_i w_i max(cp_i (spot - b_i), 0)` at expiry.
pub fn network_value(spot: f64, layer: &HedgeLayer) -> f64 {
    let mut acc = 0.0;
    for i in 0..layer.len() {
        let phi = (layer.cp[i].sign() * (spot - layer.strikes[i])).max(0.0);
        acc += layer.weights[i] * phi;
    }
    acc
}

/// Exact output weights: least-squares fit of the targets on the node
/// payoffs at the given strikes, with no intercept.
pub fn ols_weights(batch: &TrainingBatch, strikes: &[f64], cp: &[OptionType]) -> Result<Vec<f64>> {
    batch.validate()?;
    if strikes.len() != cp.len() || strikes.is_empty() {
        return Err(invalid("ols_weights: strikes and cp must be non-empty and equal length"));
    }
    let mut x = DMatrix::zeros(batch.len(), strikes.len());
    fill_design(&batch.spots, strikes, cp, &mut x);
    let y = DVector::from_column_slice(&batch.targets);
    Ok(solve_least_squares(&x, &y)?.iter().copied().collect())
}

/// Mini-batch gradient of the squared-error loss in the strikes, holding the
/// output weights fixed (the envelope gradient of the concentrated loss when
/// the weights are at their least-squares optimum).
///
/// Away from the kink, `d/db max(cp (s - b), 0) = -cp` on the active set, so
/// with residual `res_j = y_j - G(s_j)`:
///
/// ```text
/// dL/db_i = sum_j res_j * w_i * cp_i * 1{cp_i (s_j - b_i) > 0}
/// ```
///
/// summed (not averaged) over the batch, matching an Adam step whose scale
/// is controlled by the learning rate alone.
pub fn grad_strikes(batch: &TrainingBatch, layer: &HedgeLayer) -> Result<Vec<f64>> {
    batch.validate()?;
    layer.validate()?;
    let p = layer.len();
    let mut grad = vec![0.0; p];
    for (&s, &y) in batch.spots.iter().zip(&batch.targets) {
        let res = y - network_value(s, layer);
        for i in 0..p {
            let sign = layer.cp[i].sign();
            if sign * (s - layer.strikes[i]) > 0.0 {
                grad[i] += res * layer.weights[i] * sign;
            }
        }
    }
    Ok(grad)
}

/// One Adam update of the strikes in place, followed by the positivity floor.
pub fn adam_step(
    strikes: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    config: &TrainingConfig,
) -> Result<()> {
    if strikes.len() != grad.len() || strikes.len() != state.eta.len() {
        return Err(invalid("adam_step: parameter, gradient and state lengths must agree"));
    }
    state.step += 1;
    adam_update(strikes, grad, state, config, 0);
    for b in strikes.iter_mut() {
        *b = b.max(config.strike_floor);
    }
    Ok(())
}

/// Core Adam recurrence over `params`, reading/writing state entries starting
/// at `offset` (so one state vector can cover several parameter blocks).
/// `state.step` must already count the current iteration.
fn adam_update(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    config: &TrainingConfig,
    offset: usize,
) {
    let l = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(l);
    let bc2 = 1.0 - config.beta2.powi(l);
    for (i, v) in params.iter_mut().enumerate() {
        let k = offset + i;
        let g = grad[i];
        state.eta[k] = config.beta1 * state.eta[k] + (1.0 - config.beta1) * g;
        state.nu[k] = config.beta2 * state.nu[k] + (1.0 - config.beta2) * g * g;
        let eta_hat = state.eta[k] / bc1;
        let nu_hat = state.nu[k] / bc2;
        *v -= eta_hat * config.lr / (nu_hat.sqrt() + config.eps);
    }
}

/// Full-set loss `||y - X w||^2 / (2n)` given a pre-filled design matrix.
fn loss_of(x: &DMatrix<f64>, w: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    let fitted = x * w;
    for j in 0..y.len() {
        let r = y[j] - fitted[j];
        acc += r * r;
    }
    acc / (2.0 * y.len() as f64)
}

/// Fit one layer on `(spot, target)` pairs for the exercise date at
/// `exercise_time`. `seed` drives the mini-batch sampler only; the same
/// `(batch, config, seed)` triple always produces the identical layer.
pub fn fit_layer(
    batch: &TrainingBatch,
    s0: f64,
    exercise_time: f64,
    config: &TrainingConfig,
    seed: u64,
) -> Result<(HedgeLayer, TrainingTrace)> {
    batch.validate()?;
    config.validate()?;
    if !(exercise_time.is_finite() && exercise_time > 0.0) {
        return Err(invalid("fit_layer: exercise_time must be positive"));
    }
    let start = Instant::now();
    let n = batch.len();
    let p = config.nodes();
    let (mut strikes, cp) = init_strikes(config, s0)?;
    let y = DVector::from_column_slice(&batch.targets);
    let mut x = DMatrix::zeros(n, p);
    fill_design(&batch.spots, &strikes, &cp, &mut x);
    let mut w = solve_least_squares(&x, &y)?;
    let mut loss = loss_of(&x, &w, &y);
    check_loss(loss, 0, 0)?;

    let mut trace = TrainingTrace {
        rows: vec![TraceRow { epoch: 0, iteration: 0, loss, wall_ms: ms_since(start) }],
        stopped_early: false,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batches_per_epoch = n.div_ceil(config.batch_size);
    // Joint mode optimises [weights, strikes] as one 2p-vector; hybrid only
    // tracks strike moments.
    let mut adam = match config.mode {
        TrainingMode::Hybrid => AdamState::new(p),
        TrainingMode::JointAdam => AdamState::new(2 * p),
    };
    let mut streak = 0usize;
    let mut iteration = 0usize;
    let mut sub_spots = vec![0.0; config.batch_size];
    let mut sub_targets = vec![0.0; config.batch_size];

    'epochs: for epoch in 1..=config.epochs {
        for _ in 0..batches_per_epoch {
            iteration += 1;
            for k in 0..config.batch_size {
                let j = rng.random_range(0..n);
                sub_spots[k] = batch.spots[j];
                sub_targets[k] = batch.targets[j];
            }
            let sub = TrainingBatch { spots: sub_spots.clone(), targets: sub_targets.clone() };
            let layer = HedgeLayer {
                strikes: strikes.clone(),
                weights: w.iter().copied().collect(),
                cp: cp.clone(),
                exercise_time,
            };
            match config.mode {
                TrainingMode::Hybrid => {
                    let g = grad_strikes(&sub, &layer)?;
                    adam.step += 1;
                    adam_update(&mut strikes, &g, &mut adam, config, 0);
                    floor_strikes(&mut strikes, config.strike_floor);
                    fill_design(&batch.spots, &strikes, &cp, &mut x);
                    w = solve_least_squares(&x, &y)?;
                }
                TrainingMode::JointAdam => {
                    let (gw, gb) = grad_joint(&sub, &layer);
                    adam.step += 1;
                    let mut wv: Vec<f64> = w.iter().copied().collect();
                    adam_update(&mut wv, &gw, &mut adam, config, 0);
                    adam_update(&mut strikes, &gb, &mut adam, config, p);
                    floor_strikes(&mut strikes, config.strike_floor);
                    w = DVector::from_column_slice(&wv);
                    fill_design(&batch.spots, &strikes, &cp, &mut x);
                }
            }
            let new_loss = loss_of(&x, &w, &y);
            check_loss(new_loss, epoch, iteration)?;
            if (new_loss - loss).abs() < config.stop_tol {
                streak += 1;
            } else {
                streak = 0;
            }
            loss = new_loss;
            if streak >= config.stop_patience {
                trace.stopped_early = true;
                trace.rows.push(TraceRow { epoch, iteration, loss, wall_ms: ms_since(start) });
                break 'epochs;
            }
        }
        trace.rows.push(TraceRow { epoch, iteration, loss, wall_ms: ms_since(start) });
    }

    let layer = HedgeLayer {
        strikes,
        weights: w.iter().copied().collect(),
        cp,
        exercise_time,
    };
    Ok((layer, trace))
}

/// Mini-batch gradients of the plain loss in (weights, strikes) for the
/// joint baseline: `dL/dw_i = -sum_j res_j phi_ij`, and the same strike
/// gradient as the hybrid mode.
fn grad_joint(batch: &TrainingBatch, layer: &HedgeLayer) -> (Vec<f64>, Vec<f64>) {
    let p = layer.len();
    let mut gw = vec![0.0; p];
    let mut gb = vec![0.0; p];
    for (&s, &y) in batch.spots.iter().zip(&batch.targets) {
        let res = y - network_value(s, layer);
        for i in 0..p {
            let sign = layer.cp[i].sign();
            let phi = (sign * (s - layer.strikes[i])).max(0.0);
            gw[i] -= res * phi;
            if phi > 0.0 {
                gb[i] += res * layer.weights[i] * sign;
            }
        }
    }
    (gw, gb)
}

fn floor_strikes(strikes: &mut [f64], floor: f64) {
    for b in strikes.iter_mut() {
        *b = b.max(floor);
    }
}

fn check_loss(loss: f64, epoch: usize, iteration: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(numerical(format!(
            "training loss became non-finite at epoch {epoch}, iteration {iteration}"
        )))
    }
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

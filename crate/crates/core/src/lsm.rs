//! Least-squares Monte Carlo pricing with a cubic polynomial basis.
//!
//! Continuation values at each exercise date are fitted by ordinary least
//! squares of the discounted next-date value on `{1, u, u^2, u^3}` with
//! `u = spot / strike`, using every simulated path. The default recursion
//! rolls the fitted *value function* backwards (`V = max(payoff, Q)`), which
//! keeps the per-date value columns pointwise functions of the spot; the
//! classical cashflow-carrying variant (regress on in-the-money paths only,
//! carry realised cashflows) is available behind [`LsmStyle`].
//!
//! Because the fitted polynomials are plain functions of the spot, a fit can
//! be re-applied to fresh validation paths without re-regressing, and —
//! unlike the closed-form portfolio pricer — the polynomials say nothing
//! about dates in between. Values at intermediate horizons therefore require
//! an interpolation rule, and several defensible ones disagree; the
//! [`InterpScheme`] variants implement the candidates so their exposure
//! profiles can be compared against a per-horizon refit ([`InterpScheme::TrueFit`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{derive_seed, BermudanSpec, ValueSurface};
use crate::error::{invalid, Result};
use crate::market::{simulate_gbm, MarketParams, Measure, OptionType, PathGrid, TIME_EPS};
use crate::ols::solve_least_squares;

/// Recursion flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsmStyle {
    /// Regress on all paths and roll `V = max(payoff, Q)` (the default).
    #[default]
    ValueFunction,
    /// Classical variant: regress on in-the-money paths only and carry each
    /// path's realised discounted cashflow instead of the fitted value.
    ClassicalCashflow,
}

/// Fitted continuation polynomial at one exercise date:
/// `Q(S) = c[0] + c[1] u + c[2] u^2 + c[3] u^3` with `u = S * spot_scale`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CubicCoeffs {
    pub time: f64,
    pub c: [f64; 4],
}

impl CubicCoeffs {
    pub fn eval(&self, spot: f64, spot_scale: f64) -> f64 {
        let u = spot * spot_scale;
        self.c[0] + u * (self.c[1] + u * (self.c[2] + u * self.c[3]))
    }
}

/// A complete LSM fit: one continuation polynomial per exercise date except
/// maturity (where nothing is continued), the basis scaling, the time-zero
/// price and the in-sample surfaces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LsmResult {
    /// `coeffs[m]` belongs to `exercise_times[m]`, `m = 0..M-2`.
    pub coeffs: Vec<CubicCoeffs>,
    /// Basis scaling for `u = spot * spot_scale`; `1/strike`.
    pub spot_scale: f64,
    pub t0_price: f64,
    pub surface: ValueSurface,
}

impl LsmResult {
    /// Fitted continuation value at the date with index `m` (zero at
    /// maturity).
    pub fn continuation(&self, m: usize, spot: f64) -> f64 {
        if m < self.coeffs.len() {
            self.coeffs[m].eval(spot, self.spot_scale)
        } else {
            0.0
        }
    }
}

/// Simulate a fresh risk-neutral grid on the exercise dates and fit the
/// recursion. The same `seed` produces the same grid as the portfolio
/// pricer's training run, so the two methods can be compared on identical
/// paths.
pub fn fit_lsm(
    market: &MarketParams,
    contract: &BermudanSpec,
    style: LsmStyle,
    n_paths: usize,
    seed: u64,
) -> Result<LsmResult> {
    market.validate()?;
    contract.validate()?;
    let grid = simulate_gbm(
        market,
        None,
        &contract.exercise_times,
        n_paths,
        derive_seed(seed, 0),
    )?;
    fit_lsm_on(&grid, market, contract, style)
}

/// Fit the recursion on an existing grid whose times are exactly the
/// contract's exercise dates.
pub fn fit_lsm_on(
    grid: &PathGrid,
    market: &MarketParams,
    contract: &BermudanSpec,
    style: LsmStyle,
) -> Result<LsmResult> {
    market.validate()?;
    contract.validate()?;
    check_grid_matches_dates(grid, contract)?;
    if grid.measure != Measure::RiskNeutral {
        return Err(invalid("fit_lsm_on: continuation regression requires risk-neutral paths"));
    }
    let n = grid.n_paths();
    if n < 4 {
        return Err(invalid(format!("fit_lsm_on: need at least 4 paths for a cubic fit, got {n}")));
    }
    let times = &contract.exercise_times;
    let m_dates = times.len();
    let spot_scale = 1.0 / contract.strike;

    let mut values = DMatrix::zeros(n, m_dates);
    let mut continuation = DMatrix::zeros(n, m_dates);
    let mut coeffs = vec![CubicCoeffs { time: 0.0, c: [0.0; 4] }; m_dates.saturating_sub(1)];

    // Terminal values: the exercise payoff.
    let mut v = DVector::from_iterator(
        n,
        grid.spots_at(m_dates - 1).iter().map(|&s| contract.payoff(s)),
    );
    values.set_column(m_dates - 1, &v);

    for m in (0..m_dates.saturating_sub(1)).rev() {
        let dt = times[m + 1] - times[m];
        let df = (-market.r * dt).exp();
        let spots = grid.spots_at(m);
        let y = v.map(|x| df * x);
        let x = design_matrix(&spots, spot_scale);

        let beta = match style {
            LsmStyle::ValueFunction => solve_least_squares(&x, &y)?,
            LsmStyle::ClassicalCashflow => {
                let itm: Vec<usize> = (0..n).filter(|&j| contract.payoff(spots[j]) > 0.0).collect();
                if itm.len() < 4 {
                    // Too few exercisable paths to identify a cubic: treat
                    // the continuation as unknowable and never exercise.
                    DVector::zeros(4)
                } else {
                    let xi = DMatrix::from_fn(itm.len(), 4, |i, k| x[(itm[i], k)]);
                    let yi = DVector::from_iterator(itm.len(), itm.iter().map(|&j| y[j]));
                    solve_least_squares(&xi, &yi)?
                }
            }
        };
        let fitted = CubicCoeffs { time: times[m], c: [beta[0], beta[1], beta[2], beta[3]] };
        coeffs[m] = fitted;

        // Evaluate through the polynomial form (not the design-matrix
        // product) so re-applying the fit reproduces these columns bitwise.
        for j in 0..n {
            let h = contract.payoff(spots[j]);
            let q = fitted.eval(spots[j], spot_scale);
            continuation[(j, m)] = q;
            v[j] = match style {
                LsmStyle::ValueFunction => h.max(q),
                LsmStyle::ClassicalCashflow => {
                    if h > 0.0 && h > q {
                        h
                    } else {
                        y[j]
                    }
                }
            };
        }
        values.set_column(m, &v);
    }

    let df0 = (-market.r * times[0]).exp();
    let t0_price = contract.payoff(market.s0).max(df0 * v.mean());
    let surface =
        ValueSurface { times: times.clone(), values, continuation, t0_price };
    Ok(LsmResult { coeffs, spot_scale, t0_price, surface })
}

/// Re-apply a fit to a fresh grid on the same exercise dates. The fitted
/// polynomials are pointwise functions of the spot, so out-of-sample values
/// are `max(payoff, Q)` per state (payoff at maturity) regardless of the
/// style that produced the fit; the time-zero price is re-estimated from the
/// new paths.
pub fn evaluate_lsm(
    result: &LsmResult,
    market: &MarketParams,
    contract: &BermudanSpec,
    grid: &PathGrid,
) -> Result<ValueSurface> {
    market.validate()?;
    contract.validate()?;
    check_grid_matches_dates(grid, contract)?;
    if result.coeffs.len() + 1 != contract.exercise_times.len() {
        return Err(invalid(format!(
            "evaluate_lsm: fit carries {} polynomials but the contract has {} dates",
            result.coeffs.len(),
            contract.exercise_times.len()
        )));
    }
    let n = grid.n_paths();
    let times = &contract.exercise_times;
    let m_dates = times.len();
    let mut values = DMatrix::zeros(n, m_dates);
    let mut continuation = DMatrix::zeros(n, m_dates);
    for m in 0..m_dates {
        let spots = grid.spots_at(m);
        for j in 0..n {
            let h = contract.payoff(spots[j]);
            let q = result.continuation(m, spots[j]);
            continuation[(j, m)] = q;
            values[(j, m)] = if m == m_dates - 1 { h } else { h.max(q) };
        }
    }
    let df0 = (-market.r * times[0]).exp();
    let t0_price = contract.payoff(market.s0).max(df0 * values.column(0).mean());
    Ok(ValueSurface { times: times.clone(), values, continuation, t0_price })
}

/// How the last interpolation interval (between the final two exercise
/// dates... strictly, between `t_{M-1}` and maturity) bridges the missing
/// terminal polynomial under [`InterpScheme::Params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamsBoundary {
    /// Blend the last polynomial's value at the current spot with the path's
    /// terminal payoff (the default).
    #[default]
    ValueBlend,
    /// Blend the coefficient vector itself with the intrinsic payoff written
    /// as a polynomial in `u` (`K - K u` for a put, `K u - K` for a call) and
    /// evaluate the blend at the current spot.
    PolyBlend,
}

/// Rule for producing values at horizons strictly between exercise dates,
/// where the fitted polynomials carry no information of their own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpScheme {
    /// Per-path linear interpolation of the *option value* between the
    /// bracketing dates (time zero contributes the scalar price, maturity
    /// the payoff).
    OptionValue,
    /// Per-path linear interpolation of the *continuation value* between the
    /// bracketing dates (time zero contributes the scalar price, maturity
    /// the payoff).
    ContinuationValue,
    /// Linear interpolation of the polynomial coefficients themselves,
    /// evaluated at the interior spot. The first interval blends from the
    /// constant polynomial equal to the time-zero price; the last interval
    /// follows the chosen [`ParamsBoundary`].
    Params(ParamsBoundary),
    /// Per-horizon cubic re-regression of the discounted value at the next
    /// exercise date on the interior spots: the reference each cheaper rule
    /// is judged against.
    TrueFit,
}

impl InterpScheme {
    /// Stable identifier used in benchmark output files.
    pub fn label(&self) -> &'static str {
        match self {
            InterpScheme::OptionValue => "option_value",
            InterpScheme::ContinuationValue => "continuation_value",
            InterpScheme::Params(ParamsBoundary::ValueBlend) => "params_value_blend",
            InterpScheme::Params(ParamsBoundary::PolyBlend) => "params_poly_blend",
            InterpScheme::TrueFit => "true_fit",
        }
    }
}

/// Values of a fit on a grid that contains every exercise date and possibly
/// interior horizons. Exercise-date columns are the pointwise
/// `max(payoff, Q)` (payoff at maturity) for every scheme; interior columns
/// follow the scheme. Returns an `n_paths x n_times` matrix aligned with
/// `grid.times`.
pub fn lsm_values_on(
    result: &LsmResult,
    market: &MarketParams,
    contract: &BermudanSpec,
    grid: &PathGrid,
    scheme: InterpScheme,
) -> Result<DMatrix<f64>> {
    market.validate()?;
    contract.validate()?;
    let times = &contract.exercise_times;
    if result.coeffs.len() + 1 != times.len() {
        return Err(invalid("lsm_values_on: fit does not match the contract's dates"));
    }
    // Map every exercise date to its grid column.
    let date_cols: Vec<usize> = times
        .iter()
        .map(|&t| {
            grid.time_index(t).ok_or_else(|| {
                invalid(format!("lsm_values_on: grid is missing the exercise date {t}"))
            })
        })
        .collect::<Result<_>>()?;

    let n = grid.n_paths();
    let n_times = grid.n_times();
    let m_dates = times.len();
    let mut out = DMatrix::zeros(n, n_times);

    // Exercise-date columns: pointwise values.
    for (m, &col) in date_cols.iter().enumerate() {
        let spots = grid.spots_at(col);
        for j in 0..n {
            let h = contract.payoff(spots[j]);
            out[(j, col)] = if m == m_dates - 1 {
                h
            } else {
                h.max(result.continuation(m, spots[j]))
            };
        }
    }

    // Interior columns, interval by interval. Anchor index `m` in
    // 0..=m_dates means: 0 is the virtual time-zero anchor, `m >= 1` is the
    // exercise date `times[m-1]`.
    for col in 0..n_times {
        let t = grid.times[col];
        if date_cols.contains(&col) {
            continue;
        }
        if t > times[m_dates - 1] + TIME_EPS {
            return Err(invalid(format!(
                "lsm_values_on: horizon {t} lies beyond maturity"
            )));
        }
        // Next exercise date strictly after t.
        let nxt = times
            .iter()
            .position(|&u| u > t + TIME_EPS)
            .ok_or_else(|| invalid(format!("lsm_values_on: no exercise date after {t}")))?;
        let (t_lo, t_hi) = if nxt == 0 { (0.0, times[0]) } else { (times[nxt - 1], times[nxt]) };
        let w = (t - t_lo) / (t_hi - t_lo);
        let spots_here = grid.spots_at(col);
        let spots_hi = grid.spots_at(date_cols[nxt]);

        match scheme {
            InterpScheme::OptionValue => {
                for j in 0..n {
                    let v_lo = if nxt == 0 {
                        result.t0_price
                    } else {
                        out[(j, date_cols[nxt - 1])]
                    };
                    let v_hi = out[(j, date_cols[nxt])];
                    out[(j, col)] = (1.0 - w) * v_lo + w * v_hi;
                }
            }
            InterpScheme::ContinuationValue => {
                let spots_lo =
                    if nxt == 0 { Vec::new() } else { grid.spots_at(date_cols[nxt - 1]) };
                for j in 0..n {
                    let q_lo = if nxt == 0 {
                        result.t0_price
                    } else {
                        result.continuation(nxt - 1, spots_lo[j])
                    };
                    let q_hi = if nxt == m_dates - 1 {
                        contract.payoff(spots_hi[j])
                    } else {
                        result.continuation(nxt, spots_hi[j])
                    };
                    out[(j, col)] = (1.0 - w) * q_lo + w * q_hi;
                }
            }
            InterpScheme::Params(boundary) => {
                let c_lo: [f64; 4] = if nxt == 0 {
                    [result.t0_price, 0.0, 0.0, 0.0]
                } else {
                    result.coeffs[nxt - 1].c
                };
                if nxt == m_dates - 1 {
                    match boundary {
                        ParamsBoundary::ValueBlend => {
                            for j in 0..n {
                                let v_lo = CubicCoeffs { time: t_lo, c: c_lo }
                                    .eval(spots_here[j], result.spot_scale);
                                let v_hi = contract.payoff(spots_hi[j]);
                                out[(j, col)] = (1.0 - w) * v_lo + w * v_hi;
                            }
                        }
                        ParamsBoundary::PolyBlend => {
                            let k = contract.strike;
                            let c_hi: [f64; 4] = match contract.side {
                                OptionType::Put => [k, -k, 0.0, 0.0],
                                OptionType::Call => [-k, k, 0.0, 0.0],
                            };
                            let c = blend(c_lo, c_hi, w);
                            for j in 0..n {
                                out[(j, col)] = CubicCoeffs { time: t, c }
                                    .eval(spots_here[j], result.spot_scale);
                            }
                        }
                    }
                } else {
                    let c = blend(c_lo, result.coeffs[nxt].c, w);
                    for j in 0..n {
                        out[(j, col)] =
                            CubicCoeffs { time: t, c }.eval(spots_here[j], result.spot_scale);
                    }
                }
            }
            InterpScheme::TrueFit => {
                // Refit at this horizon: regress the discounted value at the
                // next exercise date on the interior spots.
                let df = (-market.r * (t_hi - t)).exp();
                let y = DVector::from_fn(n, |j, _| df * out[(j, date_cols[nxt])]);
                let x = design_matrix(&spots_here, result.spot_scale);
                let beta = solve_least_squares(&x, &y)?;
                let fitted = &x * &beta;
                for j in 0..n {
                    out[(j, col)] = fitted[j];
                }
            }
        }
    }
    Ok(out)
}

fn blend(lo: [f64; 4], hi: [f64; 4], w: f64) -> [f64; 4] {
    [
        (1.0 - w) * lo[0] + w * hi[0],
        (1.0 - w) * lo[1] + w * hi[1],
        (1.0 - w) * lo[2] + w * hi[2],
        (1.0 - w) * lo[3] + w * hi[3],
    ]
}

fn design_matrix(spots: &[f64], spot_scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(spots.len(), 4, |j, k| {
        let u = spots[j] * spot_scale;
        u.powi(k as i32)
    })
}

fn check_grid_matches_dates(grid: &PathGrid, contract: &BermudanSpec) -> Result<()> {
    let times = &contract.exercise_times;
    if grid.n_times() != times.len()
        || grid
            .times
            .iter()
            .zip(times)
            .any(|(&a, &b)| (a - b).abs() > TIME_EPS)
    {
        return Err(invalid(
            "grid times must be exactly the contract's exercise dates for an LSM fit",
        ));
    }
    Ok(())
}

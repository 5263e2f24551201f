//! Bermudan option pricing and counterparty credit exposure.
//!
//! The crate prices Bermudan equity options by backward induction over a
//! Monte Carlo grid, representing each date's value function as a portfolio
//! of vanilla calls and puts (a shallow network whose hidden nodes are option
//! payoffs). Because the portfolio has a closed-form expectation under
//! lognormal dynamics, continuation values, early-exercise decisions and
//! intermediate-date revaluations all come out analytically once the
//! regression is fitted.
//!
//! Modules:
//! - [`market`]: GBM simulation, discounting, Black–Scholes.
//! - [`hedge`]: the constrained option-portfolio regression and its two
//!   training modes (hybrid strike search with exact weight solves, and a
//!   plain joint gradient baseline).
//! - [`engine`]: backward induction, t0 pricing and intermediate valuation.
//! - [`lsm`]: cubic-polynomial least-squares Monte Carlo benchmark and the
//!   between-date interpolation schemes built on it.
//! - [`cos`]: Fourier-cosine reference pricer with per-state valuation.
//! - [`exposure`]: stopping times, exposure cubes, EE/PFE profiles and
//!   real-world scenario runs.

pub mod cos;
pub mod engine;
pub mod error;
pub mod exposure;
pub mod hedge;
pub mod lsm;
pub mod market;
mod ols;

pub use engine::BermudanSpec;
pub use error::{EngineError, Result};
// Matrices in the public API (path grids, value surfaces, exposure cubes)
// are nalgebra types; re-export the crate so downstream code names the same
// version.
pub use nalgebra;
pub use market::{
    black_scholes, discount, intrinsic, norm_cdf, payoff, simulate_gbm, MarketParams, Measure,
    OptionType, PathGrid, RealWorldParams,
};

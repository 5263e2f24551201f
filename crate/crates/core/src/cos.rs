//! Fourier-cosine reference pricer for Bermudan options under GBM.
//!
//! Works in log-moneyness `x = ln(S/K)`. On a truncation interval `[a, b]`
//! chosen from the cumulants of the terminal log-return, the value function
//! at each exercise date is carried as a cosine series
//!
//! ```text
//! V_t(y) ~ sum'_k V_k(t) cos(k pi (y - a)/(b - a)),
//! ```
//!
//! (the prime halves the k = 0 term). The conditional density of the next
//! log-return enters only through the characteristic function, so the
//! continuation value at any state is a finite series with analytically
//! known coefficients. One backward sweep per exercise date splits `[a, b]`
//! at the early-exercise boundary — found by a safeguarded Newton search —
//! into an exercise part with closed-form payoff coefficients and a
//! continuation part whose coefficients come from a Hankel-plus-Toeplitz
//! product against the current series. The sweep is O(L^2) per date directly,
//! or O(L log L) via FFT convolutions; both paths are exposed and must agree,
//! with the direct one as the default.
//!
//! Because the series is a function of the state, the same fitted recursion
//! values the product at any `(t, spot)` — including horizons between
//! exercise dates — which is what the exposure layer consumes.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::engine::BermudanSpec;
use crate::error::{invalid, numerical, Result};
use crate::market::{MarketParams, OptionType, TIME_EPS};

/// Tuning knobs for the COS pricer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CosConfig {
    /// Number of series terms L.
    pub n_terms: usize,
    /// Truncation half-width in standard deviations of the terminal log-return.
    pub range_mult: f64,
    /// Convergence tolerance of the exercise-boundary search.
    pub newton_tol: f64,
    /// Newton iteration cap before falling back to bisection.
    pub newton_max_iter: usize,
    /// Use the FFT route for continuation coefficients.
    pub use_fft: bool,
}

impl Default for CosConfig {
    fn default() -> Self {
        CosConfig {
            n_terms: 256,
            range_mult: 10.0,
            newton_tol: 1e-12,
            newton_max_iter: 64,
            use_fft: false,
        }
    }
}

impl CosConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_terms < 16 {
            return Err(invalid(format!("cos: n_terms must be >= 16, got {}", self.n_terms)));
        }
        if !(self.range_mult > 0.0 && self.range_mult.is_finite()) {
            return Err(invalid("cos: range_mult must be positive"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(invalid("cos: newton_tol must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(invalid("cos: newton_max_iter must be >= 1"));
        }
        Ok(())
    }
}

/// Characteristic function of the log-return over `dt` under GBM:
/// `E[e^{iu ln(S_{t+dt}/S_t)}] = exp(i u (r - sigma^2/2) dt - sigma^2 u^2 dt / 2)`.
pub fn char_fn(u: f64, dt: f64, r: f64, sigma: f64) -> Complex64 {
    let mu = r - 0.5 * sigma * sigma;
    Complex64::new(-0.5 * sigma * sigma * u * u * dt, mu * u * dt).exp()
}

/// Cumulant-based truncation interval for a horizon `t`:
/// `c1 -/+ mult * sqrt(c2)` with `c1 = (r - sigma^2/2) t`, `c2 = sigma^2 t`.
pub fn truncation_range(r: f64, sigma: f64, t: f64, range_mult: f64) -> (f64, f64) {
    let c1 = (r - 0.5 * sigma * sigma) * t;
    let c2 = sigma * sigma * t;
    let half = range_mult * c2.sqrt();
    (c1 - half, c1 + half)
}

/// Closed-form cosine coefficients of the payoff `sign * K * (e^y - 1)`
/// integrated over `[x1, x2] ⊆ [a, b]`:
///
/// ```text
/// G_k = (2/(b-a)) * sign * K * (chi_k(x1,x2) - psi_k(x1,x2))
/// ```
///
/// with `chi` and `psi` the standard exponential- and plain-cosine integrals.
/// Callers restrict `[x1, x2]` to the region where the option is exercised.
pub fn payoff_coefficients(
    n_terms: usize,
    a: f64,
    b: f64,
    x1: f64,
    x2: f64,
    strike: f64,
    side: OptionType,
) -> Result<Vec<f64>> {
    if !(b > a) {
        return Err(invalid("payoff_coefficients: need b > a"));
    }
    if x1 < a - 1e-12 || x2 > b + 1e-12 || x2 < x1 - 1e-12 {
        return Err(invalid(format!(
            "payoff_coefficients: [{x1}, {x2}] must lie inside [{a}, {b}] with x1 <= x2"
        )));
    }
    let mut g = vec![0.0; n_terms];
    if x2 - x1 <= 0.0 {
        return Ok(g);
    }
    let width = b - a;
    let scale = 2.0 / width * side.sign() * strike;
    for (k, gk) in g.iter_mut().enumerate() {
        let omega = k as f64 * std::f64::consts::PI / width;
        let t2 = omega * (x2 - a);
        let t1 = omega * (x1 - a);
        let chi = (x2.exp() * (t2.cos() + omega * t2.sin())
            - x1.exp() * (t1.cos() + omega * t1.sin()))
            / (1.0 + omega * omega);
        let psi = if k == 0 { x2 - x1 } else { (t2.sin() - t1.sin()) / omega };
        *gk = scale * (chi - psi);
    }
    Ok(g)
}

/// The complex quadrature kernel `m_s` of the exercise-region integrals:
/// `m_0 = i pi (x2 - x1)/(b - a)`, `m_s = (e^{i s th2} - e^{i s th1})/s` with
/// `th_j = pi (x_j - a)/(b - a)`.
fn m_coefficient(s: i64, a: f64, b: f64, x1: f64, x2: f64) -> Complex64 {
    let width = b - a;
    let th1 = std::f64::consts::PI * (x1 - a) / width;
    let th2 = std::f64::consts::PI * (x2 - a) / width;
    if s == 0 {
        Complex64::new(0.0, std::f64::consts::PI * (x2 - x1) / width)
    } else {
        let sf = s as f64;
        (Complex64::new(0.0, sf * th2).exp() - Complex64::new(0.0, sf * th1).exp()) / sf
    }
}

/// Weighted series terms `u_j = phi(omega_j) V_j` with the j = 0 term halved.
fn weighted_terms(vk: &[f64], a: f64, b: f64, r: f64, sigma: f64, dt: f64) -> Vec<Complex64> {
    let width = b - a;
    vk.iter()
        .enumerate()
        .map(|(j, &v)| {
            let omega = j as f64 * std::f64::consts::PI / width;
            let w = char_fn(omega, dt, r, sigma) * v;
            if j == 0 {
                w * 0.5
            } else {
                w
            }
        })
        .collect()
}

/// Cosine coefficients on `[a, b]` of the discounted continuation value
/// restricted to `[x1, x2]`:
///
/// ```text
/// C_k(x1,x2) = (e^{-r dt}/pi) Im{ sum'_j phi(omega_j) V_j (m_{j+k} + m_{j-k}) },
/// ```
///
/// i.e. a Hankel plus a Toeplitz form in the kernel `m_s`. Direct O(L^2)
/// evaluation; the authoritative path.
pub fn continuation_coefficients(
    vk_next: &[f64],
    a: f64,
    b: f64,
    x1: f64,
    x2: f64,
    r: f64,
    sigma: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    check_continuation_args(vk_next, a, b, x1, x2, dt)?;
    let l = vk_next.len();
    let mut c = vec![0.0; l];
    if x2 - x1 <= 0.0 {
        return Ok(c);
    }
    let u = weighted_terms(vk_next, a, b, r, sigma, dt);
    // m_s for s in [-(L-1), 2L-2].
    let lo = -(l as i64 - 1);
    let hi = 2 * l as i64 - 2;
    let ms: Vec<Complex64> = (lo..=hi).map(|s| m_coefficient(s, a, b, x1, x2)).collect();
    let at = |s: i64| ms[(s - lo) as usize];
    let df = (-r * dt).exp() / std::f64::consts::PI;
    for (k, ck) in c.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &uj) in u.iter().enumerate() {
            acc += uj * (at((j + k) as i64) + at(j as i64 - k as i64));
        }
        *ck = df * acc.im;
    }
    Ok(c)
}

/// FFT route for [`continuation_coefficients`]: the Hankel and Toeplitz
/// products are linear convolutions against the reversed term vector,
/// evaluated with two FFT convolutions of length ~3L. Must agree with the
/// direct path to high accuracy; used only when explicitly enabled.
pub fn continuation_coefficients_fft(
    vk_next: &[f64],
    a: f64,
    b: f64,
    x1: f64,
    x2: f64,
    r: f64,
    sigma: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    check_continuation_args(vk_next, a, b, x1, x2, dt)?;
    let l = vk_next.len();
    let mut c = vec![0.0; l];
    if x2 - x1 <= 0.0 {
        return Ok(c);
    }
    let u = weighted_terms(vk_next, a, b, r, sigma, dt);
    let ur: Vec<Complex64> = u.iter().rev().copied().collect();

    // Hankel part: sum_j m_{j+k} u_j = conv(mc, ur)[k + L - 1], mc[l] = m_l.
    let mc: Vec<Complex64> = (0..=2 * l as i64 - 2)
        .map(|s| m_coefficient(s, a, b, x1, x2))
        .collect();
    // Toeplitz part: sum_j m_{j-k} u_j = conv(mt, ur)[2L - 2 - k],
    // mt[l] = m_{l - (L-1)}.
    let mt: Vec<Complex64> = (-(l as i64 - 1)..=(l as i64 - 1))
        .map(|s| m_coefficient(s, a, b, x1, x2))
        .collect();

    let hankel = fft_convolve(&mc, &ur);
    let toeplitz = fft_convolve(&mt, &ur);
    let df = (-r * dt).exp() / std::f64::consts::PI;
    for (k, ck) in c.iter_mut().enumerate() {
        let acc = hankel[k + l - 1] + toeplitz[2 * l - 2 - k];
        *ck = df * acc.im;
    }
    Ok(c)
}

fn check_continuation_args(
    vk_next: &[f64],
    a: f64,
    b: f64,
    x1: f64,
    x2: f64,
    dt: f64,
) -> Result<()> {
    if vk_next.is_empty() {
        return Err(invalid("continuation_coefficients: empty coefficient vector"));
    }
    if !(b > a) {
        return Err(invalid("continuation_coefficients: need b > a"));
    }
    if x1 < a - 1e-12 || x2 > b + 1e-12 || x2 < x1 - 1e-12 {
        return Err(invalid(format!(
            "continuation_coefficients: [{x1}, {x2}] must lie inside [{a}, {b}]"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("continuation_coefficients: dt must be > 0"));
    }
    Ok(())
}

/// Linear convolution of two complex sequences via FFT.
fn fft_convolve(f: &[Complex64], g: &[Complex64]) -> Vec<Complex64> {
    let out_len = f.len() + g.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex64> = f.to_vec();
    fa.resize(size, Complex64::new(0.0, 0.0));
    let mut ga: Vec<Complex64> = g.to_vec();
    ga.resize(size, Complex64::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut ga);
    for (x, y) in fa.iter_mut().zip(&ga) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa.truncate(out_len);
    for x in fa.iter_mut() {
        *x *= scale;
    }
    fa
}

/// Discounted continuation-value series `Q(x)` over one interval, ready for
/// repeated evaluation: `Q(x) = df * sum'_k Re{phi_k V_k e^{i k pi (x-a)/(b-a)}}`.
struct QSeries {
    coef: Vec<Complex64>,
    a: f64,
    b: f64,
    df: f64,
}

impl QSeries {
    fn new(vk: &[f64], a: f64, b: f64, r: f64, sigma: f64, dt: f64) -> Self {
        QSeries { coef: weighted_terms(vk, a, b, r, sigma, dt), a, b, df: (-r * dt).exp() }
    }

    fn value(&self, x: f64) -> f64 {
        let theta = std::f64::consts::PI * (x - self.a) / (self.b - self.a);
        let rot = Complex64::new(0.0, theta).exp();
        let mut e = Complex64::new(1.0, 0.0);
        let mut acc = 0.0;
        for w in &self.coef {
            acc += (w * e).re;
            e *= rot;
        }
        self.df * acc
    }

    fn derivative(&self, x: f64) -> f64 {
        let width = self.b - self.a;
        let theta = std::f64::consts::PI * (x - self.a) / width;
        let rot = Complex64::new(0.0, theta).exp();
        let mut e = Complex64::new(1.0, 0.0);
        let mut acc = 0.0;
        for (k, w) in self.coef.iter().enumerate() {
            let dk = Complex64::new(0.0, k as f64 * std::f64::consts::PI / width);
            acc += (w * dk * e).re;
            e *= rot;
        }
        self.df * acc
    }
}

/// Classification of the early-exercise region at one date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExerciseRegion {
    /// A genuine boundary strictly inside the candidate interval.
    Interior,
    /// No point of the candidate interval exercises (boundary pinned to its
    /// continuation-side end).
    Empty,
    /// The whole candidate interval exercises.
    Full,
}

/// Early-exercise boundary in log-moneyness at one date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExercisePoint {
    pub x: f64,
    pub region: ExerciseRegion,
}

/// Locate the early-exercise boundary: the root of
/// `payoff(x) - Q(x) = 0` inside the candidate region (`[a, min(0,b)]` for
/// puts, `[max(0,a), b]` for calls), where `Q` is the discounted
/// continuation series built from `vk_next` over `dt`. Safeguarded Newton
/// with the supplied guess, falling back to bisection on the verified
/// bracket; if the payoff-continuation difference does not change sign the
/// region is flagged `Empty`/`Full` and the matching endpoint returned.
#[allow(clippy::too_many_arguments)]
pub fn find_exercise_point(
    vk_next: &[f64],
    a: f64,
    b: f64,
    r: f64,
    sigma: f64,
    dt: f64,
    strike: f64,
    side: OptionType,
    config: &CosConfig,
    guess: Option<f64>,
) -> Result<ExercisePoint> {
    config.validate()?;
    if vk_next.is_empty() || !(b > a) || !(dt > 0.0) || !(strike > 0.0) {
        return Err(invalid("find_exercise_point: bad arguments"));
    }
    let q = QSeries::new(vk_next, a, b, r, sigma, dt);
    let payoff = |x: f64| strike * side.sign() * (x.exp() - 1.0);
    let g = |x: f64| payoff(x) - q.value(x);
    let gp = |x: f64| strike * side.sign() * x.exp() - q.derivative(x);

    let (lo, hi) = match side {
        OptionType::Put => (a, b.min(0.0)),
        OptionType::Call => (a.max(0.0), b),
    };
    if hi <= lo {
        // The candidate region has no width inside [a, b].
        return Ok(ExercisePoint { x: lo.max(a).min(b), region: ExerciseRegion::Empty });
    }
    let g_lo = g(lo);
    let g_hi = g(hi);
    // The payoff dominates deep in the money and the continuation dominates
    // at the at-the-money end; orient accordingly.
    let (deep, shallow, deep_val, shallow_val) = match side {
        OptionType::Put => (lo, hi, g_lo, g_hi),
        OptionType::Call => (hi, lo, g_hi, g_lo),
    };
    if deep_val <= 0.0 {
        // Even the deepest in-the-money point prefers continuing.
        return Ok(ExercisePoint { x: shallow, region: ExerciseRegion::Empty });
    }
    if shallow_val >= 0.0 {
        return Ok(ExercisePoint { x: deep, region: ExerciseRegion::Full });
    }

    // Bracket with a sign change: g(deep) > 0 > g(shallow).
    let (mut neg, mut pos) = (shallow, deep);
    let mut x = guess.unwrap_or(0.5 * (lo + hi)).clamp(lo.min(hi), lo.max(hi));
    for _ in 0..config.newton_max_iter {
        let fx = g(x);
        if fx > 0.0 {
            pos = x;
        } else {
            neg = x;
        }
        let dfx = gp(x);
        let step_ok = dfx.abs() > 1e-30;
        let mut next = if step_ok { x - fx / dfx } else { f64::NAN };
        if !next.is_finite() || (next - neg) * (next - pos) > 0.0 {
            // Outside the current bracket: bisect instead.
            next = 0.5 * (neg + pos);
        }
        if (next - x).abs() < config.newton_tol {
            return Ok(ExercisePoint { x: next, region: ExerciseRegion::Interior });
        }
        x = next;
    }
    // Newton budget exhausted: finish with plain bisection on the bracket.
    for _ in 0..200 {
        let mid = 0.5 * (neg + pos);
        if (pos - neg).abs() < config.newton_tol {
            return Ok(ExercisePoint { x: mid, region: ExerciseRegion::Interior });
        }
        if g(mid) > 0.0 {
            pos = mid;
        } else {
            neg = mid;
        }
    }
    Err(numerical("find_exercise_point: boundary search failed to converge"))
}

/// Precomputed COS recursion for one contract: truncation interval, the
/// per-date value-function series `vks[m]` (coefficients of V at
/// `exercise_times[m]`), and the exercise boundaries found on the way.
#[derive(Debug, Clone)]
pub struct CosEngine {
    market: MarketParams,
    contract: BermudanSpec,
    pub a: f64,
    pub b: f64,
    /// `vks[m]` holds the series of the value function at `exercise_times[m]`.
    vks: Vec<Vec<f64>>,
    /// Boundary per date; the entry for maturity is the payoff kink at 0.
    pub x_stars: Vec<ExercisePoint>,
}

impl CosEngine {
    pub fn new(market: &MarketParams, contract: &BermudanSpec, config: &CosConfig) -> Result<Self> {
        Self::with_state_range(market, contract, config, None)
    }

    /// Build the recursion with a truncation interval that additionally
    /// covers log-moneyness states in `[states.0, states.1]` — required when
    /// the engine will value paths simulated under a fatter-tailed measure
    /// than the pricing one.
    pub fn with_state_range(
        market: &MarketParams,
        contract: &BermudanSpec,
        config: &CosConfig,
        states: Option<(f64, f64)>,
    ) -> Result<Self> {
        market.validate()?;
        contract.validate()?;
        config.validate()?;
        if market.sigma <= 0.0 {
            return Err(invalid("cos: requires sigma > 0"));
        }
        let times = &contract.exercise_times;
        let m_dates = times.len();
        let x0 = (market.s0 / contract.strike).ln();
        let (mut lo_anchor, mut hi_anchor) = (x0.min(0.0), x0.max(0.0));
        if let Some((xmin, xmax)) = states {
            if !(xmin.is_finite() && xmax.is_finite() && xmin <= xmax) {
                return Err(invalid("cos: bad state range"));
            }
            lo_anchor = lo_anchor.min(xmin);
            hi_anchor = hi_anchor.max(xmax);
        }
        let (ra, rb) =
            truncation_range(market.r, market.sigma, contract.maturity(), config.range_mult);
        let a = lo_anchor + ra;
        let b = hi_anchor + rb;

        let l = config.n_terms;
        let k = contract.strike;
        let mut vks = vec![Vec::new(); m_dates];
        let mut x_stars = vec![ExercisePoint { x: 0.0, region: ExerciseRegion::Interior }; m_dates];

        // Maturity: the payoff itself, split at the kink.
        let kink = 0.0f64.clamp(a, b);
        x_stars[m_dates - 1] = ExercisePoint { x: kink, region: ExerciseRegion::Interior };
        vks[m_dates - 1] = match contract.side {
            OptionType::Put => payoff_coefficients(l, a, b, a, kink, k, OptionType::Put)?,
            OptionType::Call => payoff_coefficients(l, a, b, kink, b, k, OptionType::Call)?,
        };

        for m in (0..m_dates.saturating_sub(1)).rev() {
            let dt = times[m + 1] - times[m];
            let guess = Some(x_stars[m + 1].x);
            let star = find_exercise_point(
                &vks[m + 1],
                a,
                b,
                market.r,
                market.sigma,
                dt,
                k,
                contract.side,
                config,
                guess,
            )?;
            let cont = |x1: f64, x2: f64| -> Result<Vec<f64>> {
                if config.use_fft {
                    continuation_coefficients_fft(
                        &vks[m + 1], a, b, x1, x2, market.r, market.sigma, dt,
                    )
                } else {
                    continuation_coefficients(
                        &vks[m + 1], a, b, x1, x2, market.r, market.sigma, dt,
                    )
                }
            };
            let vk = match contract.side {
                OptionType::Put => {
                    let h = payoff_coefficients(l, a, b, a, star.x, k, OptionType::Put)?;
                    let c = cont(star.x, b)?;
                    h.iter().zip(&c).map(|(hh, cc)| hh + cc).collect::<Vec<f64>>()
                }
                OptionType::Call => {
                    let c = cont(a, star.x)?;
                    let h = payoff_coefficients(l, a, b, star.x, b, k, OptionType::Call)?;
                    h.iter().zip(&c).map(|(hh, cc)| hh + cc).collect::<Vec<f64>>()
                }
            };
            vks[m] = vk;
            x_stars[m] = star;
        }

        Ok(CosEngine { market: *market, contract: contract.clone(), a, b, vks, x_stars })
    }

    /// Time-zero price: the discounted continuation series over the first
    /// interval, evaluated at the spot (t = 0 is not an exercise date).
    pub fn price(&self) -> f64 {
        let x0 = (self.market.s0 / self.contract.strike).ln();
        let q = QSeries::new(
            &self.vks[0],
            self.a,
            self.b,
            self.market.r,
            self.market.sigma,
            self.contract.exercise_times[0],
        );
        q.value(x0)
    }

    /// Value at `(t, spot)` for `0 <= t <= maturity`. At an exercise date
    /// this is `max(payoff, continuation)` (pure payoff at maturity); between
    /// dates it is the discounted continuation to the next date, which is the
    /// option's fair value while exercise is not admissible.
    pub fn value_at(&self, t: f64, spot: f64) -> Result<f64> {
        Ok(self.values_at(t, std::slice::from_ref(&spot))?[0])
    }

    /// Vectorised [`CosEngine::value_at`] sharing one series per horizon.
    pub fn values_at(&self, t: f64, spots: &[f64]) -> Result<Vec<f64>> {
        let times = &self.contract.exercise_times;
        let maturity = self.contract.maturity();
        if !(t >= -TIME_EPS && t <= maturity + TIME_EPS) {
            return Err(invalid(format!("cos value_at: horizon {t} outside [0, {maturity}]")));
        }
        let xs: Vec<f64> = spots
            .iter()
            .map(|&s| {
                if !(s.is_finite() && s > 0.0) {
                    return Err(invalid(format!("cos value_at: spot must be > 0, got {s}")));
                }
                let x = (s / self.contract.strike).ln();
                if x < self.a || x > self.b {
                    return Err(invalid(format!(
                        "cos value_at: state x = {x:.4} outside the truncation interval \
                         [{:.4}, {:.4}]; rebuild the engine with a wider state range",
                        self.a, self.b
                    )));
                }
                Ok(x)
            })
            .collect::<Result<_>>()?;

        if let Some(m) = times.iter().position(|&u| (u - t).abs() <= TIME_EPS) {
            if m == times.len() - 1 {
                return Ok(spots.iter().map(|&s| self.contract.payoff(s)).collect());
            }
            let q = QSeries::new(
                &self.vks[m + 1],
                self.a,
                self.b,
                self.market.r,
                self.market.sigma,
                times[m + 1] - times[m],
            );
            return Ok(xs
                .iter()
                .zip(spots)
                .map(|(&x, &s)| self.contract.payoff(s).max(q.value(x)))
                .collect());
        }
        let m = times
            .iter()
            .position(|&u| u > t)
            .expect("t < maturity here because maturity matches the date branch");
        let q = QSeries::new(
            &self.vks[m],
            self.a,
            self.b,
            self.market.r,
            self.market.sigma,
            times[m] - t,
        );
        Ok(xs.iter().map(|&x| q.value(x)).collect())
    }

    /// Continuation values `Q_{t_m}` at the date with index `m` for the given
    /// spots (zero at maturity, where nothing remains to continue).
    pub fn continuation_at_date(&self, m: usize, spots: &[f64]) -> Result<Vec<f64>> {
        let times = &self.contract.exercise_times;
        if m >= times.len() {
            return Err(invalid(format!("cos continuation_at_date: no date index {m}")));
        }
        if m == times.len() - 1 {
            return Ok(vec![0.0; spots.len()]);
        }
        let q = QSeries::new(
            &self.vks[m + 1],
            self.a,
            self.b,
            self.market.r,
            self.market.sigma,
            times[m + 1] - times[m],
        );
        spots
            .iter()
            .map(|&s| {
                if !(s.is_finite() && s > 0.0) {
                    return Err(invalid("cos continuation_at_date: spot must be > 0"));
                }
                let x = (s / self.contract.strike).ln();
                if x < self.a || x > self.b {
                    return Err(invalid(format!(
                        "cos continuation_at_date: state {x:.4} outside [{:.4}, {:.4}]",
                        self.a, self.b
                    )));
                }
                Ok(q.value(x))
            })
            .collect()
    }

    /// Series coefficients of the value function at date index `m`
    /// (primarily for tests and diagnostics).
    pub fn coefficients_at(&self, m: usize) -> &[f64] {
        &self.vks[m]
    }
}

/// Time-zero COS price of the Bermudan contract.
pub fn price_cos(market: &MarketParams, contract: &BermudanSpec, config: &CosConfig) -> Result<f64> {
    Ok(CosEngine::new(market, contract, config)?.price())
}

/// Value of the contract at an arbitrary `(t, spot)` state. Builds a
/// recursion whose truncation interval covers the requested state, so any
/// positive spot is admissible.
pub fn value_at_state(
    market: &MarketParams,
    contract: &BermudanSpec,
    config: &CosConfig,
    t: f64,
    spot: f64,
) -> Result<f64> {
    if !(spot.is_finite() && spot > 0.0) {
        return Err(invalid(format!("value_at_state: spot must be > 0, got {spot}")));
    }
    let x = (spot / contract.strike).ln();
    let engine = CosEngine::with_state_range(market, contract, config, Some((x, x)))?;
    engine.value_at(t, spot)
}

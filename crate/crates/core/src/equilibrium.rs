//! Symmetric effort equilibria and welfare for the batch market and the
//! sequential market.
//!
//! Signal arrival in the sequential market follows `F_c(t) = 1 - exp(-lambda c t)`.
//! With an exponential time value every integral below reduces to a finite
//! alternating binomial sum; any other time value falls back to adaptive
//! quadrature.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::info_model::ScoreSequence;
use crate::mvp::TimeValue;
use crate::numeric::{binomial, binomial_pmf, bisect_decreasing, expand_upper};
use crate::pm_baseline::AccessFunction;
use crate::quadrature::{integrate_with_breaks, DEFAULT_TOLERANCE};

/// Exponential signal latency with rate `lambda c` for effort `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyFamily {
    #[serde(rename = "lambda")]
    pub lam: f64,
}

impl LatencyFamily {
    pub fn new(lam: f64) -> Result<Self> {
        if !(lam.is_finite() && lam > 0.0) {
            return input(format!("latency rate must be positive, got {lam}"));
        }
        Ok(Self { lam })
    }

    /// `F_c(t)`
    pub fn cdf(&self, c: f64, t: f64) -> f64 {
        -(-self.lam * c * t).exp_m1()
    }

    /// `dF_c(t) / dc`
    pub fn effort_derivative(&self, c: f64, t: f64) -> f64 {
        self.lam * t * (-self.lam * c * t).exp()
    }
}

/// A symmetric equilibrium effort (or welfare optimum) and how it was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub effort: f64,
    /// First-order condition at `effort`.
    pub residual: f64,
    /// Set when `effort` sits at zero or at the top of the effort domain.
    pub corner: bool,
    pub bracket: (f64, f64),
}

impl EquilibriumResult {
    /// Violation of the optimality conditions: `|residual|` inside the domain,
    /// the wrong-signed part of the derivative at a corner.
    pub fn kkt_residual(&self) -> f64 {
        if !self.corner {
            self.residual.abs()
        } else if self.effort == 0.0 {
            self.residual.max(0.0)
        } else {
            (-self.residual).max(0.0)
        }
    }
}

/// Finds the zero of a decreasing first-order condition on `[0, upper]`.
///
/// Returns the lower corner when the condition is already non-positive at
/// zero and the upper corner when it is still positive at `upper`.
pub(crate) fn solve_decreasing_foc<F>(foc: F, upper: Option<f64>) -> Result<EquilibriumResult>
where
    F: Fn(f64) -> f64,
{
    solve_fallible(|c| Ok(foc(c)), upper)
}

fn solve_fallible<F>(foc: F, upper: Option<f64>) -> Result<EquilibriumResult>
where
    F: Fn(f64) -> Result<f64>,
{
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let f = |c: f64| match foc(c) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let check = |value: f64, at: f64| -> Result<f64> {
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        if value.is_nan() {
            return Err(Error::Numerical(format!("first-order condition is NaN at {at}")));
        }
        Ok(value)
    };

    let at_zero = check(f(0.0), 0.0)?;
    if at_zero <= 0.0 {
        return Ok(EquilibriumResult { effort: 0.0, residual: at_zero, corner: true, bracket: (0.0, 0.0) });
    }
    let hi = match upper {
        Some(u) => {
            let at_upper = check(f(u), u)?;
            if at_upper > 0.0 {
                return Ok(EquilibriumResult { effort: u, residual: at_upper, corner: true, bracket: (0.0, u) });
            }
            u
        }
        None => {
            let hi = expand_upper(&f, 1.0);
            if let Some(e) = failure.borrow_mut().take() {
                return Err(e);
            }
            hi?
        }
    };
    let root = bisect_decreasing(&f, 0.0, hi);
    check(root.value, root.x)?;
    Ok(EquilibriumResult { effort: root.x, residual: root.value, corner: false, bracket: root.bracket })
}

fn check_batch(access: &AccessFunction, v: &ScoreSequence, n: usize, c: f64) -> Result<()> {
    if n == 0 {
        return input("need at least one agent");
    }
    v.require_agents(n)?;
    access.check_domain(c)
}

/// `d/dF` of `sum_k C(n,k) F^k (1-F)^(n-k) v_k`.
fn binomial_value_slope(v: &[f64], n: usize, f: f64) -> f64 {
    let mut total = 0.0;
    for (k, &vk) in v.iter().enumerate().take(n + 1) {
        let mut term = 0.0;
        if k > 0 {
            term += k as f64 * f.powi(k as i32 - 1) * (1.0 - f).powi((n - k) as i32);
        }
        if k < n {
            term -= (n - k) as f64 * f.powi(k as i32) * (1.0 - f).powi((n - k - 1) as i32);
        }
        total += binomial(n, k) * term * vk;
    }
    total
}

/// Best-response condition of the batch market: `d u_i / d c_i` at effort
/// `c_i` when the others invest `c`.
pub fn batch_br_derivative(access: &AccessFunction, v: &ScoreSequence, n: usize, c_i: f64, c: f64) -> Result<f64> {
    check_batch(access, v, n, c)?;
    access.check_domain(c_i)?;
    let inc = v.increments();
    let gain: f64 = binomial_pmf(n - 1, access.value(c)).iter().zip(&inc).map(|(w, d)| w * d).sum();
    Ok(access.derivative(c_i) * gain - 1.0)
}

pub fn batch_equilibrium(access: &AccessFunction, v: &ScoreSequence, n: usize) -> Result<EquilibriumResult> {
    check_batch(access, v, n, 0.0)?;
    let upper = access.domain_max();
    solve_fallible(|c| batch_br_derivative(access, v, n, c, c), upper.is_finite().then_some(upper))
}

/// `W(c) = sum_k C(n,k) F(c)^k (1-F(c))^(n-k) v_k - n c`
pub fn batch_welfare(access: &AccessFunction, v: &ScoreSequence, n: usize, c: f64) -> Result<f64> {
    check_batch(access, v, n, c)?;
    let value: f64 = binomial_pmf(n, access.value(c)).iter().zip(v.values()).map(|(w, vk)| w * vk).sum();
    Ok(value - n as f64 * c)
}

/// `W'(c) / n`, differentiated term by term.
pub fn batch_welfare_foc(access: &AccessFunction, v: &ScoreSequence, n: usize, c: f64) -> Result<f64> {
    check_batch(access, v, n, c)?;
    let slope = binomial_value_slope(v.values(), n, access.value(c));
    Ok(access.derivative(c) * slope / n as f64 - 1.0)
}

pub fn batch_welfare_optimum(access: &AccessFunction, v: &ScoreSequence, n: usize) -> Result<EquilibriumResult> {
    check_batch(access, v, n, 0.0)?;
    let upper = access.domain_max();
    solve_fallible(|c| batch_welfare_foc(access, v, n, c), upper.is_finite().then_some(upper))
}

fn check_mvp(h: &TimeValue, v: &ScoreSequence, n: usize, c_i: f64, c: f64) -> Result<()> {
    if n == 0 {
        return input("need at least one agent");
    }
    v.require_agents(n)?;
    h.validate()?;
    if !(c_i >= 0.0 && c >= 0.0 && c_i.is_finite() && c.is_finite()) {
        return input(format!("efforts must be finite and nonnegative, got {c_i} and {c}"));
    }
    Ok(())
}

fn integrate_time<F: Fn(f64) -> f64>(h: &TimeValue, f: F) -> Result<f64> {
    let end = h.horizon();
    let mut points = vec![0.0];
    points.extend(h.knots().iter().copied().filter(|&t| t > 0.0 && t < end));
    points.push(end);
    Ok(integrate_with_breaks(f, &points, DEFAULT_TOLERANCE)?.value)
}

/// `sum_k C(n-1,k) F^k (1-F)^(n-1-k) (v_{k+1} - v_k)`: the expected marginal
/// value of one more signal when each of `n - 1` others is in with chance `F`.
fn marginal_value(inc: &[f64], n: usize, f: f64) -> f64 {
    binomial_pmf(n - 1, f).iter().zip(inc).map(|(w, d)| w * d).sum()
}

/// Best-response condition of the sequential market at effort `c_i` against
/// others at `c`.
pub fn mvp_br_derivative(
    latency: &LatencyFamily,
    h: &TimeValue,
    v: &ScoreSequence,
    n: usize,
    c_i: f64,
    c: f64,
) -> Result<f64> {
    check_mvp(h, v, n, c_i, c)?;
    match *h {
        TimeValue::Exponential { eta } => {
            let (lam, inc) = (latency.lam, v.increments());
            let mut total = 0.0;
            for k in 0..n {
                let mut inner = 0.0;
                for j in 0..=k {
                    let a = eta + lam * c_i + lam * c * (n - 1 - k + j) as f64;
                    inner += sign(j) * binomial(k, j) / (a * a);
                }
                total += binomial(n - 1, k) * inc[k] * inner;
            }
            Ok(lam * eta * total - 1.0)
        }
        TimeValue::Table { .. } => mvp_br_derivative_quadrature(latency, h, v, n, c_i, c),
    }
}

/// [`mvp_br_derivative`] by quadrature regardless of the time value kind.
pub fn mvp_br_derivative_quadrature(
    latency: &LatencyFamily,
    h: &TimeValue,
    v: &ScoreSequence,
    n: usize,
    c_i: f64,
    c: f64,
) -> Result<f64> {
    check_mvp(h, v, n, c_i, c)?;
    let inc = v.increments();
    let integral = integrate_time(h, |t| {
        latency.effort_derivative(c_i, t) * marginal_value(&inc, n, latency.cdf(c, t)) * h.density(t)
    })?;
    Ok(integral - 1.0)
}

pub fn mvp_equilibrium(latency: &LatencyFamily, h: &TimeValue, v: &ScoreSequence, n: usize) -> Result<EquilibriumResult> {
    check_mvp(h, v, n, 0.0, 0.0)?;
    solve_fallible(|c| mvp_br_derivative(latency, h, v, n, c, c), None)
}

/// `W(c) = ∫ sum_k C(n,k) F_c^k (1-F_c)^(n-k) v_k h(t) dt - n c`
pub fn mvp_welfare(latency: &LatencyFamily, h: &TimeValue, v: &ScoreSequence, n: usize, c: f64) -> Result<f64> {
    check_mvp(h, v, n, c, c)?;
    match *h {
        TimeValue::Exponential { eta } => {
            let lam = latency.lam;
            let mut total = 0.0;
            for (k, &vk) in v.values().iter().enumerate().take(n + 1) {
                let mut inner = 0.0;
                for j in 0..=k {
                    inner += sign(j) * binomial(k, j) * eta / (eta + lam * c * (n - k + j) as f64);
                }
                total += binomial(n, k) * vk * inner;
            }
            Ok(total - n as f64 * c)
        }
        TimeValue::Table { .. } => mvp_welfare_quadrature(latency, h, v, n, c),
    }
}

pub fn mvp_welfare_quadrature(
    latency: &LatencyFamily,
    h: &TimeValue,
    v: &ScoreSequence,
    n: usize,
    c: f64,
) -> Result<f64> {
    check_mvp(h, v, n, c, c)?;
    let values = &v.values()[..=n];
    let integral = integrate_time(h, |t| {
        let w = binomial_pmf(n, latency.cdf(c, t));
        w.iter().zip(values).map(|(a, b)| a * b).sum::<f64>() * h.density(t)
    })?;
    Ok(integral - n as f64 * c)
}

/// `W'(c) / n` for the sequential market.
pub fn mvp_welfare_foc(latency: &LatencyFamily, h: &TimeValue, v: &ScoreSequence, n: usize, c: f64) -> Result<f64> {
    check_mvp(h, v, n, c, c)?;
    match *h {
        TimeValue::Exponential { eta } => {
            let lam = latency.lam;
            let mut total = 0.0;
            for (k, &vk) in v.values().iter().enumerate().take(n + 1) {
                let mut inner = 0.0;
                for j in 0..=k {
                    let m = (n - k + j) as f64;
                    let a = eta + lam * c * m;
                    inner -= sign(j) * binomial(k, j) * eta * lam * m / (a * a);
                }
                total += binomial(n, k) * vk * inner;
            }
            Ok(total / n as f64 - 1.0)
        }
        TimeValue::Table { .. } => mvp_welfare_foc_quadrature(latency, h, v, n, c),
    }
}

pub fn mvp_welfare_foc_quadrature(
    latency: &LatencyFamily,
    h: &TimeValue,
    v: &ScoreSequence,
    n: usize,
    c: f64,
) -> Result<f64> {
    check_mvp(h, v, n, c, c)?;
    let values = v.values();
    let integral = integrate_time(h, |t| {
        latency.effort_derivative(c, t) * binomial_value_slope(values, n, latency.cdf(c, t)) * h.density(t)
    })?;
    Ok(integral / n as f64 - 1.0)
}

pub fn mvp_welfare_optimum(latency: &LatencyFamily, h: &TimeValue, v: &ScoreSequence, n: usize) -> Result<EquilibriumResult> {
    check_mvp(h, v, n, 0.0, 0.0)?;
    solve_fallible(|c| mvp_welfare_foc(latency, h, v, n, c), None)
}

/// Expected reward `E[r_i]` of an agent at effort `c_i` against others at `c`.
pub fn mvp_expected_reward(
    latency: &LatencyFamily,
    h: &TimeValue,
    v: &ScoreSequence,
    n: usize,
    c_i: f64,
    c: f64,
) -> Result<f64> {
    check_mvp(h, v, n, c_i, c)?;
    match *h {
        TimeValue::Exponential { eta } => {
            let (lam, inc) = (latency.lam, v.increments());
            let mut total = 0.0;
            for k in 0..n {
                let mut inner = 0.0;
                for j in 0..=k {
                    let b = lam * c * (n - 1 - k + j) as f64;
                    inner += sign(j) * binomial(k, j) * (eta / (eta + b) - eta / (eta + b + lam * c_i));
                }
                total += binomial(n - 1, k) * inc[k] * inner;
            }
            Ok(total)
        }
        TimeValue::Table { .. } => mvp_expected_reward_quadrature(latency, h, v, n, c_i, c),
    }
}

pub fn mvp_expected_reward_quadrature(
    latency: &LatencyFamily,
    h: &TimeValue,
    v: &ScoreSequence,
    n: usize,
    c_i: f64,
    c: f64,
) -> Result<f64> {
    check_mvp(h, v, n, c_i, c)?;
    let inc = v.increments();
    integrate_time(h, |t| latency.cdf(c_i, t) * marginal_value(&inc, n, latency.cdf(c, t)) * h.density(t))
}

/// Principal utility `U = W + n c - n E[r_i]` at the symmetric profile `c`.
pub fn mvp_principal_utility(
    latency: &LatencyFamily,
    h: &TimeValue,
    v: &ScoreSequence,
    n: usize,
    c: f64,
) -> Result<f64> {
    let w = mvp_welfare(latency, h, v, n, c)?;
    let r = mvp_expected_reward(latency, h, v, n, c, c)?;
    Ok(w + n as f64 * (c - r))
}

fn sign(j: usize) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

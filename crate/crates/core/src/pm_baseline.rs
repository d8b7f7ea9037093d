//! Traditional prediction-market baselines: the single-batch race where the
//! first informed agent takes the whole prize, and the sequential rank race
//! where the `j`-th reporter collects `v_j - v_{j-1}` undiscounted.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_decreasing_foc, EquilibriumResult, LatencyFamily};
use crate::error::{input, Result};
use crate::info_model::ScoreSequence;
use crate::numeric::binomial_pmf;

/// Probability `F(c)` of obtaining a signal with effort `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccessFunction {
    /// `F(c) = lambda c` on `[0, 1 / lambda]`
    Linear {
        #[serde(rename = "lambda")]
        lam: f64,
    },
    /// `F(c) = 1 - exp(-lambda c)`
    Exponential {
        #[serde(rename = "lambda")]
        lam: f64,
    },
}

impl AccessFunction {
    pub fn linear(lam: f64) -> Result<Self> {
        let f = AccessFunction::Linear { lam };
        f.validate()?;
        Ok(f)
    }

    pub fn exponential(lam: f64) -> Result<Self> {
        let f = AccessFunction::Exponential { lam };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let lam = self.lambda();
        if !(lam.is_finite() && lam > 0.0) {
            return input(format!("access rate must be positive, got {lam}"));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            AccessFunction::Linear { lam } | AccessFunction::Exponential { lam } => lam,
        }
    }

    /// Largest admissible effort (infinite for the exponential kind).
    pub fn domain_max(&self) -> f64 {
        match *self {
            AccessFunction::Linear { lam } => 1.0 / lam,
            AccessFunction::Exponential { .. } => f64::INFINITY,
        }
    }

    pub fn check_domain(&self, c: f64) -> Result<()> {
        if !(c >= 0.0 && c <= self.domain_max()) {
            return input(format!("effort {c} outside [0, {}]", self.domain_max()));
        }
        Ok(())
    }

    pub fn value(&self, c: f64) -> f64 {
        match *self {
            AccessFunction::Linear { lam } => (lam * c).min(1.0),
            AccessFunction::Exponential { lam } => -(-lam * c).exp_m1(),
        }
    }

    pub fn derivative(&self, c: f64) -> f64 {
        match *self {
            AccessFunction::Linear { lam } => lam,
            AccessFunction::Exponential { lam } => lam * (-lam * c).exp(),
        }
    }
}

/// `sum_k 1/(k+1) C(n-1, k) F^k (1-F)^(n-1-k)`: the chance of winning a
/// uniform tie-break among the informed agents.
fn win_share(n: usize, f: f64) -> f64 {
    binomial_pmf(n - 1, f).iter().enumerate().map(|(k, w)| w / (k + 1) as f64).sum()
}

fn check_agents(n: usize) -> Result<()> {
    if n == 0 {
        return input("need at least one agent");
    }
    Ok(())
}

/// Utility of an agent investing `x` while everyone else invests `c`.
pub fn pm_batch_utility(access: &AccessFunction, n: usize, x: f64, c: f64) -> Result<f64> {
    check_agents(n)?;
    access.check_domain(x)?;
    access.check_domain(c)?;
    Ok(access.value(x) * win_share(n, access.value(c)) - x)
}

/// `W(c) = 1 - (1 - F(c))^n - c n`
pub fn pm_batch_welfare(access: &AccessFunction, n: usize, c: f64) -> Result<f64> {
    check_agents(n)?;
    access.check_domain(c)?;
    Ok(1.0 - (1.0 - access.value(c)).powi(n as i32) - c * n as f64)
}

/// Symmetric equilibrium of the winner-take-all batch race.
///
/// The linear kind returns the corner `1 / lambda` when even full access
/// leaves a positive marginal utility.
pub fn pm_batch_equilibrium(access: &AccessFunction, n: usize) -> Result<EquilibriumResult> {
    if n < 2 {
        return input(format!("the batch race needs at least two agents, got {n}"));
    }
    if !(access.lambda() > 1.0) {
        return input(format!("the batch race needs lambda > 1, got {}", access.lambda()));
    }
    let foc = |c: f64| access.derivative(c) * win_share(n, access.value(c)) - 1.0;
    let upper = access.domain_max();
    solve_decreasing_foc(foc, upper.is_finite().then_some(upper))
}

/// Probability that an agent with rate `a_i` finishes `r`-th (1-based) among
/// himself and `n - 1` rivals of rate `a`.
fn rank_probabilities(n: usize, a_i: f64, a: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut behind = 1.0;
    for r in 1..=n {
        let rivals = (n - r) as f64 * a;
        out.push(behind * a_i / (a_i + rivals));
        behind *= rivals / (a_i + rivals);
    }
    out
}

/// Expected undiscounted payment of the rank race to an agent of effort `c_i`
/// against rivals of effort `c`.
pub fn pm_race_expected_reward(v: &ScoreSequence, n: usize, c_i: f64, c: f64) -> Result<f64> {
    check_agents(n)?;
    v.require_agents(n)?;
    if !(c_i >= 0.0 && c >= 0.0) {
        return input("efforts must be nonnegative");
    }
    if c_i == 0.0 {
        return Ok(0.0);
    }
    let inc = v.increments();
    Ok(rank_probabilities(n, c_i, c).iter().zip(&inc).map(|(p, dv)| p * dv).sum())
}

/// `d/dc_i` of the rank-race utility, with arrival rates `lambda c_i` and `lambda c`.
pub fn pm_race_br_derivative(
    latency: &LatencyFamily,
    v: &ScoreSequence,
    n: usize,
    c_i: f64,
    c: f64,
) -> Result<f64> {
    check_agents(n)?;
    v.require_agents(n)?;
    if !(c_i > 0.0 && c >= 0.0) {
        return input("the race derivative needs c_i > 0 and c >= 0");
    }
    let lam = latency.lam;
    let (a_i, a) = (lam * c_i, lam * c);
    let inc = v.increments();
    let probs = rank_probabilities(n, a_i, a);
    let mut total = 0.0;
    for r in 1..=n {
        // d log P_r / d a_i
        let mut dlog = 1.0 / a_i;
        for m in 0..r {
            dlog -= 1.0 / (a_i + (n - 1 - m) as f64 * a);
        }
        total += inc[r - 1] * probs[r - 1] * dlog;
    }
    Ok(lam * total - 1.0)
}

/// Symmetric equilibrium of the sequential rank race. Does not depend on the
/// latency scale, since ranks only see effort ratios.
pub fn pm_race_equilibrium(v: &ScoreSequence, n: usize) -> Result<EquilibriumResult> {
    if n < 2 {
        return input(format!("the rank race needs at least two agents, got {n}"));
    }
    pm_race_equilibrium_with(&LatencyFamily { lam: 1.0 }, v, n)
}

pub fn pm_race_equilibrium_with(latency: &LatencyFamily, v: &ScoreSequence, n: usize) -> Result<EquilibriumResult> {
    v.require_agents(n)?;
    // At a symmetric profile the derivative is slope / c - 1.
    let slope = pm_race_br_derivative(latency, v, n, 1.0, 1.0)? + 1.0;
    if slope <= 0.0 {
        return Ok(EquilibriumResult { effort: 0.0, residual: slope, corner: true, bracket: (0.0, 0.0) });
    }
    let foc = |c: f64| pm_race_br_derivative(latency, v, n, c, c).unwrap_or(f64::NAN);
    let lo = slope * 1e-6;
    let hi = crate::numeric::expand_upper(&foc, slope.max(1.0))?;
    let root = crate::numeric::bisect_decreasing(foc, lo, hi);
    Ok(EquilibriumResult { effort: root.x, residual: root.value, corner: false, bracket: root.bracket })
}

//! Conditionally i.i.d. information structures and the expected-score
//! sequence `v_k` they induce under truthful aggregation.

use serde::{Deserialize, Serialize};

use crate::belief::{bayes_likelihood_update, Belief};
use crate::error::{input, Error, Result};
use crate::numeric::binomial;
use crate::scoring::ScoringRule;

/// Largest number of signal tuples exact enumeration will visit.
pub const ENUMERATION_LIMIT: f64 = 1e7;

const ROW_TOLERANCE: f64 = 1e-12;

/// Outcome prior plus the per-signal likelihood table shared by every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationModel {
    prior: Vec<f64>,
    /// `likelihood[y][x] = P(X_i = x | Y = y)`
    likelihood: Vec<Vec<f64>>,
    num_agents: usize,
}

impl InformationModel {
    pub fn new(prior: Vec<f64>, likelihood: Vec<Vec<f64>>, num_agents: usize) -> Result<Self> {
        check_distribution("prior", &prior)?;
        if likelihood.len() != prior.len() {
            return input(format!(
                "likelihood table has {} rows for {} outcomes",
                likelihood.len(),
                prior.len()
            ));
        }
        let m = likelihood[0].len();
        for (y, row) in likelihood.iter().enumerate() {
            if row.len() != m {
                return input("likelihood rows must all have the same number of signals");
            }
            check_distribution(&format!("likelihood row {y}"), row)?;
        }
        if num_agents == 0 {
            return input("a market needs at least one agent");
        }
        Ok(Self { prior, likelihood, num_agents })
    }

    /// Binary outcome with `P(Y = 1) = alpha` and `P(X_i = Y) = 1 - beta`.
    pub fn binary_noisy(alpha: f64, beta: f64, num_agents: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return input(format!("alpha must lie in [0, 1], got {alpha}"));
        }
        if !(0.0..=1.0).contains(&beta) {
            return input(format!("beta must lie in [0, 1], got {beta}"));
        }
        Self::new(
            vec![1.0 - alpha, alpha],
            vec![vec![1.0 - beta, beta], vec![beta, 1.0 - beta]],
            num_agents,
        )
    }

    pub fn num_outcomes(&self) -> usize {
        self.prior.len()
    }

    pub fn num_signals(&self) -> usize {
        self.likelihood[0].len()
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn with_num_agents(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return input("a market needs at least one agent");
        }
        self.num_agents = n;
        Ok(self)
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn prior_belief(&self) -> Belief {
        Belief::from_weights_unchecked(self.prior.clone())
    }

    pub fn signal_prob(&self, y: usize, x: usize) -> f64 {
        self.likelihood[y][x]
    }

    pub fn likelihood_row(&self, y: usize) -> &[f64] {
        &self.likelihood[y]
    }

    /// `(P(x | Y = y))_y`
    pub fn likelihood_column(&self, signal: usize) -> Result<Vec<f64>> {
        if signal >= self.num_signals() {
            return input(format!("signal {signal} out of range (model has {} signals)", self.num_signals()));
        }
        Ok(self.likelihood.iter().map(|row| row[signal]).collect())
    }

    /// `P(Y | signals)`. Order of the signals does not matter.
    pub fn posterior(&self, signals: &[usize]) -> Result<Belief> {
        let mut weights = self.prior.clone();
        for &x in signals {
            let column = self.likelihood_column(x)?;
            for (w, l) in weights.iter_mut().zip(column) {
                *w *= l;
            }
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Inconsistent(format!("signal profile {signals:?} has probability zero")));
        }
        Ok(Belief::from_weights_unchecked(weights))
    }

    /// Folds signals one at a time through the Bayes update.
    pub fn posterior_sequential(&self, signals: &[usize]) -> Result<Belief> {
        signals.iter().try_fold(self.prior_belief(), |p, &x| {
            bayes_likelihood_update(&p, &self.likelihood_column(x)?)
        })
    }

    /// `E_{Y ~ prior} S(prior, Y)`.
    pub fn expected_base_score(&self, rule: &ScoringRule) -> f64 {
        rule.expected_score(&self.prior_belief())
    }

    /// `E S(p_k, Y)` for `k = 0..=n` under truthful aggregation of `k` signals.
    pub fn expected_scores(&self, rule: &ScoringRule, n: usize) -> Result<Vec<f64>> {
        if self.num_signals() == 2 {
            return Ok((0..=n).map(|k| self.expected_score_by_counts(rule, k)).collect());
        }
        let tuples = (self.num_signals() as f64).powi(n as i32);
        if tuples > ENUMERATION_LIMIT {
            return Err(Error::Capacity { profiles: tuples, limit: ENUMERATION_LIMIT });
        }
        Ok((0..=n).map(|k| self.expected_score_by_tuples(rule, k)).collect())
    }

    /// `v_k = E[S(p_k, Y) - S(p_0, Y)]` for `k = 0..=n`.
    pub fn v_sequence(&self, rule: &ScoringRule, n: usize) -> Result<ScoreSequence> {
        let scores = self.expected_scores(rule, n)?;
        let base = scores[0];
        let mut values: Vec<f64> = scores.iter().map(|s| s - base).collect();
        values[0] = 0.0;
        ScoreSequence::new(values)
    }

    /// Binary signals: the number of ones is sufficient, so `k + 1` terms.
    fn expected_score_by_counts(&self, rule: &ScoringRule, k: usize) -> f64 {
        let d = self.num_outcomes();
        let mut total = 0.0;
        for ones in 0..=k {
            let weight = binomial(k, ones);
            let joint: Vec<f64> = (0..d)
                .map(|y| {
                    let row = &self.likelihood[y];
                    self.prior[y] * row[1].powi(ones as i32) * row[0].powi((k - ones) as i32)
                })
                .collect();
            total += weight * self.joint_score(rule, joint);
        }
        total
    }

    fn expected_score_by_tuples(&self, rule: &ScoringRule, k: usize) -> f64 {
        let (d, m) = (self.num_outcomes(), self.num_signals());
        let mut tuple = vec![0usize; k];
        let mut total = 0.0;
        loop {
            let joint: Vec<f64> = (0..d)
                .map(|y| self.prior[y] * tuple.iter().map(|&x| self.likelihood[y][x]).product::<f64>())
                .collect();
            total += self.joint_score(rule, joint);
            // odometer increment
            let mut i = 0;
            loop {
                if i == k {
                    return total;
                }
                tuple[i] += 1;
                if tuple[i] < m {
                    break;
                }
                tuple[i] = 0;
                i += 1;
            }
        }
    }

    /// `sum_y P(y, profile) S(P(Y | profile), y)` given the joint weights.
    fn joint_score(&self, rule: &ScoringRule, joint: Vec<f64>) -> f64 {
        let mass: f64 = joint.iter().sum();
        if mass <= 0.0 {
            return 0.0;
        }
        let post = Belief::from_weights_unchecked(joint.clone());
        joint
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(y, &w)| w * rule.score(&post, y))
            .sum()
    }
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return input(format!("{name} is empty"));
    }
    if p.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return input(format!("{name} has entries outside [0, 1]: {p:?}"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return input(format!("{name} sums to {total}, not 1"));
    }
    Ok(())
}

/// Config representation of an information model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    BinaryNoisy { alpha: f64, beta: f64 },
    Table { prior: Vec<f64>, likelihood: Vec<Vec<f64>> },
}

impl ModelSpec {
    pub fn build(&self, num_agents: usize) -> Result<InformationModel> {
        match self {
            ModelSpec::BinaryNoisy { alpha, beta } => InformationModel::binary_noisy(*alpha, *beta, num_agents),
            ModelSpec::Table { prior, likelihood } => {
                InformationModel::new(prior.clone(), likelihood.clone(), num_agents)
            }
        }
    }
}

/// Expected score gains `v_0 = 0, v_1, ..., v_n` in score units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreSequence(Vec<f64>);

impl ScoreSequence {
    const MONOTONE_SLACK: f64 = 1e-12;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return input(format!("score sequence must start at exactly 0: {values:?}"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return input(format!("score sequence must be finite: {values:?}"));
        }
        if let Some(w) = values.windows(2).find(|w| w[1] < w[0] - Self::MONOTONE_SLACK) {
            return input(format!("score sequence must be nondecreasing: {} then {}", w[0], w[1]));
        }
        Ok(Self(values))
    }

    /// `(0, value, value, ..., value)` with `n + 1` entries.
    pub fn saturating(n: usize, value: f64) -> Result<Self> {
        let mut v = vec![value; n + 1];
        v[0] = 0.0;
        Self::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest `n` this sequence supports.
    pub fn max_agents(&self) -> usize {
        self.0.len() - 1
    }

    /// `v_{k+1} - v_k` for `k = 0..n`.
    pub fn increments(&self) -> Vec<f64> {
        self.0.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn require_agents(&self, n: usize) -> Result<()> {
        if self.0.len() < n + 1 {
            return input(format!("score sequence has {} entries; {n} agents need {}", self.0.len(), n + 1));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for ScoreSequence {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScoreSequence::new(v)
    }
}

impl From<ScoreSequence> for Vec<f64> {
    fn from(s: ScoreSequence) -> Self {
        s.0
    }
}

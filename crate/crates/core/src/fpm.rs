//! The batch mechanism: aggregate every report, then pay each agent the
//! score improvement his report contributes as if he had reported last.

use serde::{Deserialize, Serialize};

use crate::belief::{truthful_report, Belief, Report, UpdateForm};
use crate::error::{input, Error, Result};
use crate::info_model::{InformationModel, ENUMERATION_LIMIT};
use crate::scoring::ScoringRule;

/// One report per agent (absent agents hold the no-signal report) and the
/// realized outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcomeReport {
    pub reports: Vec<Report>,
    pub outcome: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpmResult {
    pub aggregated: Belief,
    pub rewards: Vec<f64>,
}

/// JSON form of a batch: `{"reports": [[...], ...], "outcome": y}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawBatch {
    pub reports: Vec<Vec<f64>>,
    pub outcome: usize,
}

impl RawBatch {
    pub fn parse(self, d: usize) -> Result<BatchOutcomeReport> {
        let reports = self
            .reports
            .into_iter()
            .map(|r| Report::from_raw(r, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(BatchOutcomeReport { reports, outcome: self.outcome })
    }
}

fn fold(prior: &Belief, reports: &[Report], skip: Option<usize>, form: UpdateForm) -> Result<Belief> {
    reports
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != skip)
        .try_fold(prior.clone(), |p, (_, r)| r.apply(&p, form))
}

/// Settles a batch with the canonical likelihood update.
pub fn fpm_run(prior: &Belief, batch: &BatchOutcomeReport, rule: &ScoringRule) -> Result<FpmResult> {
    fpm_run_with(prior, batch, rule, UpdateForm::Likelihood)
}

/// `r_k = S(p_all, y*) - S(p_all_but_k, y*)`.
///
/// Updates commute, so the belief before agent `k`'s report is the same for
/// every ordering that puts `k` last; no permutation is drawn.
pub fn fpm_run_with(
    prior: &Belief,
    batch: &BatchOutcomeReport,
    rule: &ScoringRule,
    form: UpdateForm,
) -> Result<FpmResult> {
    let d = prior.num_outcomes();
    if batch.outcome >= d {
        return input(format!("outcome {} out of range for {d} outcomes", batch.outcome));
    }
    let aggregated = fold(prior, &batch.reports, None, form)?;
    let full_score = rule.score(&aggregated, batch.outcome);
    let rewards = (0..batch.reports.len())
        .map(|k| {
            let without = fold(prior, &batch.reports, Some(k), form)?;
            let reward = full_score - rule.score(&without, batch.outcome);
            if reward.is_finite() {
                Ok(reward)
            } else {
                Err(Error::Numerical(format!("agent {k} reward is not finite under this scoring rule")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FpmResult { aggregated, rewards })
}

/// Exact expected rewards under truthful play when agent `i` holds a signal
/// with probability `q[i]`.
pub fn fpm_expected_reward(model: &InformationModel, rule: &ScoringRule, q: &[f64]) -> Result<Vec<f64>> {
    fpm_expected_reward_with(model, rule, q, |_, x| Ok(truthful_report(model, x)?.report))
}

/// Exact expected rewards when an agent holding signal `x` submits
/// `policy(agent, x)`; agents without a signal submit the no-signal report.
///
/// Enumerates, jointly, which agents hold a signal, the signal values and the
/// outcome.
pub fn fpm_expected_reward_with<P>(
    model: &InformationModel,
    rule: &ScoringRule,
    q: &[f64],
    policy: P,
) -> Result<Vec<f64>>
where
    P: Fn(usize, usize) -> Result<Report>,
{
    let n = q.len();
    let (d, m) = (model.num_outcomes(), model.num_signals());
    if let Some(bad) = q.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return input(format!("signal probabilities must lie in [0, 1], got {bad}"));
    }
    let states = m + 1;
    let profiles = (states as f64).powi(n as i32) * d as f64;
    if profiles > ENUMERATION_LIMIT {
        return Err(Error::Capacity { profiles, limit: ENUMERATION_LIMIT });
    }
    // state 0: no signal; state x + 1: signal x
    let mut table: Vec<Vec<Report>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![Report::no_signal(d)];
        for x in 0..m {
            row.push(policy(i, x)?);
        }
        table.push(row);
    }
    let prior = model.prior_belief();
    let mut expected = vec![0.0; n];
    let mut state = vec![0usize; n];
    loop {
        for y in 0..d {
            let mut weight = model.prior()[y];
            for (i, &s) in state.iter().enumerate() {
                weight *= if s == 0 { 1.0 - q[i] } else { q[i] * model.signal_prob(y, s - 1) };
            }
            if weight > 0.0 {
                let batch = BatchOutcomeReport {
                    reports: state.iter().enumerate().map(|(i, &s)| table[i][s].clone()).collect(),
                    outcome: y,
                };
                let result = fpm_run(&prior, &batch, rule)?;
                for (e, r) in expected.iter_mut().zip(result.rewards) {
                    *e += weight * r;
                }
            }
        }
        let mut i = 0;
        loop {
            if i == n {
                return Ok(expected);
            }
            state[i] += 1;
            if state[i] < states {
                break;
            }
            state[i] = 0;
            i += 1;
        }
    }
}

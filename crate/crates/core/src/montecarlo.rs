//! Agent-based sampling of the full game: effort, signal acquisition,
//! reporting and settlement.
//!
//! Every random draw comes from a ChaCha stream keyed by the master seed, the
//! trial index, the agent and the purpose of the draw. Results therefore do
//! not depend on thread scheduling, and a baseline and a deviant run of the
//! same trial see the same outcome, latencies and signals.

use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{truthful_report, Belief, Report, UpdateForm};
use crate::equilibrium::LatencyFamily;
use crate::error::{input, Error, Result};
use crate::fpm::{fpm_run_with, BatchOutcomeReport};
use crate::info_model::InformationModel;
use crate::mvp::{mvp_run_with, TimeValue, TimedReport};
use crate::numeric::exact_sum;
use crate::pm_baseline::AccessFunction;
use crate::scoring::ScoringRule;

/// Trials per work unit. Fixed so that aggregation order never changes.
const BLOCK: u64 = 1024;

/// Words reserved for each (agent, purpose) substream.
const SUBSTREAM_WORDS: u128 = 1 << 24;

#[derive(Debug, Clone, Copy)]
enum Purpose {
    Outcome = 0,
    Acquire = 1,
    Signal = 2,
    Order = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportPolicy {
    Truthful,
    /// Truthful report with entry `entry` moved by `delta`.
    Perturbed { entry: usize, delta: f64 },
    /// Truthful report submitted `delay` after the signal arrives.
    Delayed { delay: f64 },
    /// Never reports.
    Silent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentStrategy {
    pub effort: f64,
    pub policy: ReportPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub agents: Vec<AgentStrategy>,
}

impl StrategyProfile {
    pub fn symmetric(n: usize, effort: f64, policy: ReportPolicy) -> Self {
        Self { agents: vec![AgentStrategy { effort, policy }; n] }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    fn validate(&self) -> Result<()> {
        for (i, a) in self.agents.iter().enumerate() {
            if !(a.effort.is_finite() && a.effort >= 0.0) {
                return input(format!("agent {i} has invalid effort {}", a.effort));
            }
            match a.policy {
                ReportPolicy::Delayed { delay } if !(delay.is_finite() && delay >= 0.0) => {
                    return input(format!("agent {i} has invalid delay {delay}"));
                }
                ReportPolicy::Perturbed { delta, .. } if !delta.is_finite() => {
                    return input(format!("agent {i} has invalid perturbation {delta}"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Leave-one-out batch market.
    Fpm,
    /// Sequential market with counterfactual rewards.
    Mvp,
    /// Batch market scoring rule, informed agents in random order.
    PmBatch,
    /// Sequential market scoring rule, undiscounted payments.
    PmSequential,
}

impl Mechanism {
    pub fn is_sequential(self) -> bool {
        matches!(self, Mechanism::Mvp | Mechanism::PmSequential)
    }
}

impl FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fpm" => Ok(Mechanism::Fpm),
            "mvp" => Ok(Mechanism::Mvp),
            "pm_batch" | "pm-batch" => Ok(Mechanism::PmBatch),
            "pm_sequential" | "pm-sequential" => Ok(Mechanism::PmSequential),
            other => input(format!("unknown mechanism {other:?}")),
        }
    }
}

/// How effort turns into signals: a probability for batch markets, an
/// arrival time for sequential ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    Access(AccessFunction),
    Latency(LatencyFamily),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: InformationModel,
    pub mechanism: Mechanism,
    pub acquisition: Acquisition,
    /// Required by the sequential mechanisms.
    pub time_value: Option<TimeValue>,
    pub rule: ScoringRule,
    pub update_form: UpdateForm,
    pub profile: StrategyProfile,
    pub trials: u64,
    pub seed: u64,
    pub parallel: bool,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return input("need at least one trial");
        }
        if self.profile.len() != self.model.num_agents() {
            return input(format!(
                "profile has {} agents but the model has {}",
                self.profile.len(),
                self.model.num_agents()
            ));
        }
        self.profile.validate()?;
        self.rule.validate()?;
        match (self.mechanism.is_sequential(), &self.acquisition) {
            (false, Acquisition::Access(f)) => {
                f.validate()?;
                for a in &self.profile.agents {
                    f.check_domain(a.effort)?;
                }
            }
            (true, Acquisition::Latency(l)) => {
                LatencyFamily::new(l.lam)?;
                match &self.time_value {
                    Some(h) => h.validate()?,
                    None => return input("sequential mechanisms need a time value"),
                }
            }
            (false, _) => return input("batch mechanisms need an access function"),
            (true, _) => return input("sequential mechanisms need a latency family"),
        }
        Ok(())
    }
}

/// What happened in one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub outcome: usize,
    /// Signal arrival: `Some(0.0)` for an informed batch agent, the arrival
    /// time in sequential markets, `None` when uninformed.
    pub arrivals: Vec<Option<f64>>,
    pub signals: Vec<Option<usize>>,
    /// `S(final or time-averaged belief) - S(prior)`
    pub value: f64,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub utilities: Vec<f64>,
    pub principal_utility: f64,
    pub welfare: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        if self.count == 0.0 {
            *self = *other;
            return;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count / count;
        self.m2 += other.m2 + delta * delta * self.count * other.count / count;
        self.count = count;
    }

    fn standard_error(&self) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.count - 1.0) / self.count).sqrt()
    }
}

/// Sample means and standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub trials: u64,
    pub reward_mean: Vec<f64>,
    pub reward_se: Vec<f64>,
    pub cost_mean: Vec<f64>,
    pub cost_se: Vec<f64>,
    pub utility_mean: Vec<f64>,
    pub utility_se: Vec<f64>,
    pub principal_utility_mean: f64,
    pub principal_utility_se: f64,
    pub welfare_mean: f64,
    pub welfare_se: f64,
}

/// Paired estimate of how a deviation changes one agent's utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationResult {
    pub utility_delta_mean: f64,
    pub standard_error: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deviation {
    Policy(ReportPolicy),
    Effort(f64),
}

struct Streams {
    rng: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64, trial: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        Self { rng }
    }

    fn uniform(&mut self, slot: usize, purpose: Purpose) -> f64 {
        let index = slot as u128 * 4 + purpose as u128;
        self.rng.set_word_pos(index * SUBSTREAM_WORDS);
        self.rng.gen::<f64>()
    }
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn report_for(model: &InformationModel, signal: usize, policy: ReportPolicy) -> Result<Report> {
    let truthful = truthful_report(model, signal)?.report;
    match policy {
        ReportPolicy::Perturbed { entry, delta } => truthful.perturbed(entry, delta),
        _ => Ok(truthful),
    }
}

fn run_trial(config: &SimConfig, profile: &StrategyProfile, trial: u64) -> Result<TrialRecord> {
    let model = &config.model;
    let n = profile.len();
    let mut streams = Streams::new(config.seed, trial);
    let outcome = sample_index(model.prior(), streams.uniform(0, Purpose::Outcome));
    let prior = model.prior_belief();

    let mut arrivals = Vec::with_capacity(n);
    let mut signals = Vec::with_capacity(n);
    for (i, agent) in profile.agents.iter().enumerate() {
        let u = streams.uniform(i, Purpose::Acquire);
        let arrival = match config.acquisition {
            Acquisition::Access(f) => (u < f.value(agent.effort)).then_some(0.0),
            Acquisition::Latency(l) => {
                let rate = l.lam * agent.effort;
                (rate > 0.0).then(|| -(-u).ln_1p() / rate)
            }
        };
        let x = sample_index(model.likelihood_row(outcome), streams.uniform(i, Purpose::Signal));
        arrivals.push(arrival);
        signals.push(arrival.map(|_| x));
    }
    let reporting = |i: usize| signals[i].filter(|_| profile.agents[i].policy != ReportPolicy::Silent);

    let (value, rewards) = match config.mechanism {
        Mechanism::Fpm => {
            let reports = (0..n)
                .map(|i| match reporting(i) {
                    Some(x) => report_for(model, x, profile.agents[i].policy),
                    None => Ok(Report::no_signal(model.num_outcomes())),
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = BatchOutcomeReport { reports, outcome };
            let result = fpm_run_with(&prior, &batch, &config.rule, config.update_form)?;
            let value = relative_score(&config.rule, &result.aggregated, &prior, outcome);
            (value, result.rewards)
        }
        Mechanism::PmBatch => {
            let mut order: Vec<(f64, usize)> =
                (0..n).filter(|&i| reporting(i).is_some()).map(|i| (streams.uniform(i, Purpose::Order), i)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut rewards = vec![0.0; n];
            let mut belief = prior.clone();
            for &(_, i) in &order {
                let report = report_for(model, signals[i].expect("informed"), profile.agents[i].policy)?;
                let next = report.apply(&belief, config.update_form)?;
                rewards[i] = relative_score(&config.rule, &next, &belief, outcome);
                belief = next;
            }
            (relative_score(&config.rule, &belief, &prior, outcome), rewards)
        }
        Mechanism::Mvp | Mechanism::PmSequential => {
            let h = config.time_value.as_ref().expect("validated");
            let reports = (0..n)
                .filter_map(|i| {
                    let x = reporting(i)?;
                    let delay = match profile.agents[i].policy {
                        ReportPolicy::Delayed { delay } => delay,
                        _ => 0.0,
                    };
                    let time = arrivals[i].expect("informed") + delay;
                    Some(report_for(model, x, profile.agents[i].policy).map(|report| TimedReport { agent: i, time, report }))
                })
                .collect::<Result<Vec<_>>>()?;
            let settlement = mvp_run_with(&prior, &reports, n, outcome, &config.rule, h, config.update_form)?;
            let rewards = if config.mechanism == Mechanism::Mvp {
                settlement.rewards
            } else {
                let trace = &settlement.trace;
                let mut rewards = vec![0.0; n];
                for (j, &agent) in trace.reporters.iter().enumerate() {
                    rewards[agent] = relative_score(&config.rule, &trace.beliefs[j + 1], &trace.beliefs[j], outcome);
                }
                rewards
            };
            (settlement.value_gain, rewards)
        }
    };

    if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::Numerical(format!("trial {trial} produced reward {bad}")));
    }
    let costs: Vec<f64> = profile.agents.iter().map(|a| a.effort).collect();
    let utilities: Vec<f64> = rewards.iter().zip(&costs).map(|(r, c)| r - c).collect();
    let principal_utility = exact_sum(std::iter::once(value).chain(rewards.iter().map(|r| -r)));
    let welfare = exact_sum(std::iter::once(principal_utility).chain(utilities.iter().copied()));
    Ok(TrialRecord { trial, outcome, arrivals, signals, value, rewards, costs, utilities, principal_utility, welfare })
}

fn relative_score(rule: &ScoringRule, p: &Belief, base: &Belief, y: usize) -> f64 {
    if p == base {
        0.0
    } else {
        rule.score(p, y) - rule.score(base, y)
    }
}

/// Runs `per_trial` over all trials in fixed blocks and merges the block
/// results in trial order.
fn run_blocks<T, F>(config: &SimConfig, per_block: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64) -> Result<T> + Sync,
{
    let blocks = config.trials.div_ceil(BLOCK);
    let bounds = |b: u64| (b * BLOCK, ((b + 1) * BLOCK).min(config.trials));
    if config.parallel {
        (0..blocks).into_par_iter().map(|b| {
            let (lo, hi) = bounds(b);
            per_block(lo, hi)
        }).collect()
    } else {
        (0..blocks).map(|b| {
            let (lo, hi) = bounds(b);
            per_block(lo, hi)
        }).collect()
    }
}

/// Samples `config.trials` independent plays of the game.
pub fn simulate(config: &SimConfig) -> Result<SimStats> {
    config.validate()?;
    let n = config.profile.len();
    // rewards, costs, utilities per agent, then principal and welfare
    let width = 3 * n + 2;
    let blocks = run_blocks(config, |lo, hi| {
        let mut acc = vec![Moments::default(); width];
        for t in lo..hi {
            let rec = run_trial(config, &config.profile, t)?;
            for i in 0..n {
                acc[i].push(rec.rewards[i]);
                acc[n + i].push(rec.costs[i]);
                acc[2 * n + i].push(rec.utilities[i]);
            }
            acc[3 * n].push(rec.principal_utility);
            acc[3 * n + 1].push(rec.welfare);
        }
        Ok(acc)
    })?;
    let mut total = vec![Moments::default(); width];
    for block in &blocks {
        for (t, b) in total.iter_mut().zip(block) {
            t.merge(b);
        }
    }
    let means = |r: std::ops::Range<usize>| total[r].iter().map(|m| m.mean).collect::<Vec<_>>();
    let ses = |r: std::ops::Range<usize>| total[r].iter().map(|m| m.standard_error()).collect::<Vec<_>>();
    Ok(SimStats {
        trials: config.trials,
        reward_mean: means(0..n),
        reward_se: ses(0..n),
        cost_mean: means(n..2 * n),
        cost_se: ses(n..2 * n),
        utility_mean: means(2 * n..3 * n),
        utility_se: ses(2 * n..3 * n),
        principal_utility_mean: total[3 * n].mean,
        principal_utility_se: total[3 * n].standard_error(),
        welfare_mean: total[3 * n + 1].mean,
        welfare_se: total[3 * n + 1].standard_error(),
    })
}

/// Every trial record, in trial order.
pub fn simulate_trials(config: &SimConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let blocks = run_blocks(config, |lo, hi| (lo..hi).map(|t| run_trial(config, &config.profile, t)).collect::<Result<Vec<_>>>())?;
    Ok(blocks.into_iter().flatten().collect())
}

/// Replays a single trial; identical to the matching record of [`simulate_trials`].
pub fn simulate_trial(config: &SimConfig, trial: u64) -> Result<TrialRecord> {
    config.validate()?;
    run_trial(config, &config.profile, trial)
}

/// Writes trial records as CSV, one row per trial.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Input(format!("cannot write trial log: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let n = records.first().map_or(0, |r| r.rewards.len());
    let mut header = vec!["trial".to_string(), "outcome".into(), "value".into()];
    for i in 0..n {
        header.extend([format!("arrival_{i}"), format!("signal_{i}"), format!("reward_{i}"), format!("cost_{i}")]);
    }
    header.extend(["principal_utility".into(), "welfare".into()]);
    w.write_record(&header).map_err(io)?;
    for r in records {
        let mut row = vec![r.trial.to_string(), r.outcome.to_string(), r.value.to_string()];
        for i in 0..n {
            row.push(r.arrivals[i].map_or(String::new(), |a| a.to_string()));
            row.push(r.signals[i].map_or(String::new(), |x| x.to_string()));
            row.push(r.rewards[i].to_string());
            row.push(r.costs[i].to_string());
        }
        row.push(r.principal_utility.to_string());
        row.push(r.welfare.to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Input(format!("cannot write trial log: {e}")))?;
    Ok(())
}

/// Paired estimate of the utility change of `deviant` when it switches to
/// `deviation` while everyone else keeps `config.profile`.
pub fn deviation_test(config: &SimConfig, deviant: usize, deviation: &Deviation) -> Result<DeviationResult> {
    config.validate()?;
    if deviant >= config.profile.len() {
        return input(format!("agent {deviant} out of range"));
    }
    let mut deviant_profile = config.profile.clone();
    match *deviation {
        Deviation::Policy(p) => deviant_profile.agents[deviant].policy = p,
        Deviation::Effort(c) => deviant_profile.agents[deviant].effort = c,
    }
    SimConfig { profile: deviant_profile.clone(), ..config.clone() }.validate()?;
    let blocks = run_blocks(config, |lo, hi| {
        let mut acc = Moments::default();
        for t in lo..hi {
            let base = run_trial(config, &config.profile, t)?;
            let dev = run_trial(config, &deviant_profile, t)?;
            acc.push(dev.utilities[deviant] - base.utilities[deviant]);
        }
        Ok(acc)
    })?;
    let mut total = Moments::default();
    for b in &blocks {
        total.merge(b);
    }
    Ok(DeviationResult { utility_delta_mean: total.mean, standard_error: total.standard_error(), trials: config.trials })
}

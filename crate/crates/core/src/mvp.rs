//! The sequential mechanism. Reports update a live market belief in time
//! order; every agent also has a counterfactual belief path that skips his
//! own report, and is paid the `h`-weighted score gap between the two paths.

use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::belief::{truthful_report, Belief, Report, UpdateForm};
use crate::error::{input, Error, Result};
use crate::info_model::{InformationModel, ENUMERATION_LIMIT};
use crate::quadrature::{integrate_with_breaks, DEFAULT_TOLERANCE};
use crate::scoring::ScoringRule;

/// Mass of `h` allowed beyond [`TimeValue::horizon`].
pub const TAIL_MASS: f64 = 1e-13;

/// Time value density `h(t)`: how much belief quality at time `t` is worth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeValue {
    /// `h(t) = eta exp(-eta t)`
    Exponential { eta: f64 },
    /// Piecewise-linear through `(times[i], values[i])`, starting at `t = 0`,
    /// then `values.last() * exp(-tail_rate (t - times.last()))`.
    Table { times: Vec<f64>, values: Vec<f64>, tail_rate: f64 },
}

impl TimeValue {
    pub fn exponential(eta: f64) -> Result<Self> {
        let h = TimeValue::Exponential { eta };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TimeValue::Exponential { eta } => {
                if !(eta.is_finite() && *eta > 0.0) {
                    return input(format!("decay rate must be positive, got {eta}"));
                }
            }
            TimeValue::Table { times, values, tail_rate } => {
                if times.is_empty() || times.len() != values.len() {
                    return input("time value table needs matching, nonempty times and values");
                }
                if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite()) {
                    return input("time value table must start at 0 with strictly increasing times");
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return input("time value table entries must be positive");
                }
                if !(tail_rate.is_finite() && *tail_rate > 0.0) {
                    return input("time value tail rate must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn density(&self, t: f64) -> f64 {
        match self {
            TimeValue::Exponential { eta } => eta * (-eta * t).exp(),
            TimeValue::Table { times, values, tail_rate } => {
                let last = times.len() - 1;
                if t >= times[last] {
                    return values[last] * (-tail_rate * (t - times[last])).exp();
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    /// A time beyond which `h` has less than [`TAIL_MASS`] left.
    pub fn horizon(&self) -> f64 {
        match self {
            TimeValue::Exponential { eta } => (1.0 / TAIL_MASS).ln() / eta,
            TimeValue::Table { times, values, tail_rate } => {
                let (t, v) = (times[times.len() - 1], values[values.len() - 1]);
                t + (v / (tail_rate * TAIL_MASS)).ln().max(0.0) / tail_rate
            }
        }
    }

    /// Knots where the density has kinks, for quadrature.
    pub fn knots(&self) -> &[f64] {
        match self {
            TimeValue::Exponential { .. } => &[],
            TimeValue::Table { times, .. } => times,
        }
    }

    /// `∫_a^b h(t) dt`; `b` may be infinite.
    pub fn mass(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0) || !(b >= a) {
            return input(format!("time value mass needs 0 <= a <= b, got [{a}, {b}]"));
        }
        if a == b {
            return Ok(0.0);
        }
        match self {
            TimeValue::Exponential { eta } => {
                let upper = if b.is_infinite() { 0.0 } else { (-eta * b).exp() };
                Ok((-eta * a).exp() - upper)
            }
            TimeValue::Table { .. } => {
                let end = b.min(self.horizon().max(a));
                let mut points = vec![a];
                points.extend(self.knots().iter().copied().filter(|&t| t > a && t < end));
                points.push(end);
                Ok(integrate_with_breaks(|t| self.density(t), &points, DEFAULT_TOLERANCE)?.value)
            }
        }
    }
}

/// `time_value_mass(h, a, b) = ∫_a^b h`.
pub fn time_value_mass(h: &TimeValue, a: f64, b: f64) -> Result<f64> {
    h.mass(a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedReport {
    pub agent: usize,
    pub time: f64,
    pub report: Report,
}

/// Belief paths produced by one market run.
///
/// `beliefs[j]` is in force after the first `j` reports, on
/// `(breakpoints[j-1], breakpoints[j]]`. Simultaneous reports produce
/// repeated breakpoints (zero-width segments), ordered by agent index.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketTrace {
    pub breakpoints: Vec<f64>,
    pub reporters: Vec<usize>,
    pub beliefs: Vec<Belief>,
    /// `counterfactuals[i][j]`: prior folded through the first `j` reports except agent `i`'s.
    pub counterfactuals: Vec<Vec<Belief>>,
}

impl MarketTrace {
    /// `k(t) = #{j : t_j < t}`
    pub fn reports_before(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&s| s < t)
    }

    pub fn belief_at(&self, t: f64) -> &Belief {
        &self.beliefs[self.reports_before(t)]
    }

    pub fn counterfactual_at(&self, agent: usize, t: f64) -> &Belief {
        &self.counterfactuals[agent][self.reports_before(t)]
    }

    /// `[start, end)` of segment `j`; the last segment runs to infinity.
    pub fn segment(&self, j: usize) -> (f64, f64) {
        let start = if j == 0 { 0.0 } else { self.breakpoints[j - 1] };
        let end = self.breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
        (start, end)
    }

    /// Rows `(time, p_1 .. p_d)`: the prior at time 0, then the belief after each report.
    pub fn dump(&self) -> Vec<(f64, Vec<f64>)> {
        std::iter::once(0.0)
            .chain(self.breakpoints.iter().copied())
            .zip(&self.beliefs)
            .map(|(t, b)| (t, b.probs().to_vec()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvpSettlement {
    pub trace: MarketTrace,
    pub rewards: Vec<f64>,
    /// `∫ (S(p(t), y*) - S(p_0, y*)) h(t) dt`
    pub value_gain: f64,
}

/// Settles a sequential market with the canonical likelihood update.
pub fn mvp_run(
    prior: &Belief,
    reports: &[TimedReport],
    num_agents: usize,
    outcome: usize,
    rule: &ScoringRule,
    h: &TimeValue,
) -> Result<MvpSettlement> {
    mvp_run_with(prior, reports, num_agents, outcome, rule, h, UpdateForm::Likelihood)
}

pub fn mvp_run_with(
    prior: &Belief,
    reports: &[TimedReport],
    num_agents: usize,
    outcome: usize,
    rule: &ScoringRule,
    h: &TimeValue,
    form: UpdateForm,
) -> Result<MvpSettlement> {
    let d = prior.num_outcomes();
    if outcome >= d {
        return input(format!("outcome {outcome} out of range for {d} outcomes"));
    }
    let mut seen = BTreeSet::new();
    for r in reports {
        if r.agent >= num_agents {
            return input(format!("agent {} out of range for {num_agents} agents", r.agent));
        }
        if !(r.time.is_finite() && r.time >= 0.0) {
            return input(format!("agent {} reported at invalid time {}", r.agent, r.time));
        }
        if !seen.insert(r.agent) {
            return Err(Error::Protocol(format!("agent {} reported more than once", r.agent)));
        }
    }
    let mut order: Vec<&TimedReport> = reports.iter().collect();
    order.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.agent.cmp(&b.agent)));

    let mut beliefs = vec![prior.clone()];
    let mut counterfactuals = vec![vec![prior.clone()]; num_agents];
    for r in &order {
        let next = r.report.apply(beliefs.last().expect("nonempty"), form)?;
        beliefs.push(next);
        for (i, path) in counterfactuals.iter_mut().enumerate() {
            let last = path.last().expect("nonempty");
            let next = if i == r.agent { last.clone() } else { r.report.apply(last, form)? };
            path.push(next);
        }
    }
    let trace = MarketTrace {
        breakpoints: order.iter().map(|r| r.time).collect(),
        reporters: order.iter().map(|r| r.agent).collect(),
        beliefs,
        counterfactuals,
    };

    let masses = (0..trace.beliefs.len())
        .map(|j| {
            let (a, b) = trace.segment(j);
            h.mass(a, b)
        })
        .collect::<Result<Vec<_>>>()?;
    let actual: Vec<f64> = trace.beliefs.iter().map(|p| rule.score(p, outcome)).collect();

    let gap = |a: f64, b: f64, same: bool| -> Result<f64> {
        if same {
            return Ok(0.0);
        }
        let g = a - b;
        if g.is_finite() {
            Ok(g)
        } else {
            Err(Error::Numerical("score difference is not finite under this scoring rule".into()))
        }
    };

    let mut rewards = vec![0.0; num_agents];
    for (i, reward) in rewards.iter_mut().enumerate() {
        for (j, mass) in masses.iter().enumerate() {
            let cf = &trace.counterfactuals[i][j];
            let same = cf == &trace.beliefs[j];
            *reward += gap(actual[j], rule.score(cf, outcome), same)? * mass;
        }
    }
    let mut value_gain = 0.0;
    for (j, mass) in masses.iter().enumerate() {
        value_gain += gap(actual[j], actual[0], trace.beliefs[j] == *prior)? * mass;
    }
    Ok(MvpSettlement { trace, rewards, value_gain })
}

/// Exact expected rewards when agent `i` reports at `times[i]` (or never,
/// for `None`) and, holding signal `x`, submits `policy(i, x)`.
///
/// Every reporting agent holds a signal; the expectation runs over the
/// outcome and all signal values.
pub fn mvp_expected_rewards_with<P>(
    model: &InformationModel,
    rule: &ScoringRule,
    h: &TimeValue,
    times: &[Option<f64>],
    policy: P,
) -> Result<Vec<f64>>
where
    P: Fn(usize, usize) -> Result<Report>,
{
    let n = times.len();
    let (d, m) = (model.num_outcomes(), model.num_signals());
    let active: Vec<(usize, f64)> = times.iter().enumerate().filter_map(|(i, t)| t.map(|t| (i, t))).collect();
    let profiles = (m as f64).powi(active.len() as i32) * d as f64;
    if profiles > ENUMERATION_LIMIT {
        return Err(Error::Capacity { profiles, limit: ENUMERATION_LIMIT });
    }
    let table: Vec<Vec<Report>> = active
        .iter()
        .map(|&(i, _)| (0..m).map(|x| policy(i, x)).collect())
        .collect::<Result<_>>()?;
    let prior = model.prior_belief();
    let mut expected = vec![0.0; n];
    let mut signals = vec![0usize; active.len()];
    loop {
        for y in 0..d {
            let weight = model.prior()[y] * signals.iter().map(|&x| model.signal_prob(y, x)).product::<f64>();
            if weight > 0.0 {
                let reports: Vec<TimedReport> = active
                    .iter()
                    .zip(&signals)
                    .enumerate()
                    .map(|(a, (&(agent, time), &x))| TimedReport { agent, time, report: table[a][x].clone() })
                    .collect();
                let s = mvp_run(&prior, &reports, n, y, rule, h)?;
                for (e, r) in expected.iter_mut().zip(s.rewards) {
                    *e += weight * r;
                }
            }
        }
        let mut i = 0;
        loop {
            if i == signals.len() {
                return Ok(expected);
            }
            signals[i] += 1;
            if signals[i] < m {
                break;
            }
            signals[i] = 0;
            i += 1;
        }
    }
}

/// [`mvp_expected_rewards_with`] under truthful reports.
pub fn mvp_expected_rewards(
    model: &InformationModel,
    rule: &ScoringRule,
    h: &TimeValue,
    times: &[Option<f64>],
) -> Result<Vec<f64>> {
    mvp_expected_rewards_with(model, rule, h, times, |_, x| Ok(truthful_report(model, x)?.report))
}

/// Reads a timed report stream: one `agent_id, time, b_1, ..., b_k` record
/// per line. Blank lines, `#` comments and a leading header are skipped.
pub fn read_report_stream<R: Read>(reader: R, num_outcomes: usize) -> Result<Vec<TimedReport>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Input(format!("report stream: {e}")))?;
        let fields: Vec<&str> = record.iter().collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        if line == 0 && fields[0].parse::<usize>().is_err() {
            continue;
        }
        if fields.len() < 3 {
            return input(format!("report stream line {}: expected agent_id, time and report entries", line + 1));
        }
        let agent = fields[0]
            .parse::<usize>()
            .map_err(|e| Error::Input(format!("line {}: bad agent id {:?}: {e}", line + 1, fields[0])))?;
        let nums = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Input(format!("line {}: bad number {f:?}: {e}", line + 1))))
            .collect::<Result<Vec<_>>>()?;
        let report = Report::from_raw(nums[1..].to_vec(), num_outcomes)?;
        out.push(TimedReport { agent, time: nums[0], report });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ReportVector;

    fn exp1() -> TimeValue {
        TimeValue::exponential(1.0).unwrap()
    }

    #[test]
    fn mass_examples() {
        let h = exp1();
        assert_eq!(h.mass(0.0, f64::INFINITY).unwrap(), 1.0);
        assert!((h.mass(1.0, f64::INFINITY).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(h.mass(2.5, 2.5).unwrap(), 0.0);
        assert!(h.mass(2.0, 1.0).is_err());
    }

    #[test]
    fn table_mass_matches_piecewise_area() {
        let h = TimeValue::Table { times: vec![0.0, 1.0, 3.0], values: vec![2.0, 1.0, 0.5], tail_rate: 0.5 };
        h.validate().unwrap();
        // trapezoids 1.5 + 1.5, tail 0.5 / 0.5
        assert!((h.mass(0.0, f64::INFINITY).unwrap() - 4.0).abs() < 1e-9);
        assert!((h.mass(0.5, 2.0).unwrap() - (0.625 + 0.875)).abs() < 1e-10);
        assert_eq!(h.mass(7.0, 7.0).unwrap(), 0.0);
        let bad = TimeValue::Table { times: vec![0.0, 1.0], values: vec![1.0, 0.0], tail_rate: 1.0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_agent_reward() {
        let model = InformationModel::binary_noisy(0.02, 0.2, 1).unwrap();
        let report = truthful_report(&model, 1).unwrap().report;
        let s = mvp_run(
            &model.prior_belief(),
            &[TimedReport { agent: 0, time: 1.0, report }],
            1,
            1,
            &ScoringRule::quadratic(),
            &exp1(),
        )
        .unwrap();
        let p1: f64 = 0.016 / 0.212;
        let gain = (2.0 * p1 - (p1 * p1 + (1.0 - p1) * (1.0 - p1))) - (2.0 * 0.02 - 0.9608);
        assert!((gain - 0.2112948380).abs() < 1e-9);
        assert!((s.rewards[0] - gain * (-1.0f64).exp()).abs() < 1e-14);
        assert!((s.rewards[0] - 0.0777310269).abs() < 1e-9);
        assert_eq!(s.value_gain, s.rewards[0]);
    }

    #[test]
    fn empty_market_pays_nothing() {
        let prior = Belief::new(vec![0.4, 0.6]).unwrap();
        let s = mvp_run(&prior, &[], 3, 0, &ScoringRule::quadratic(), &exp1()).unwrap();
        assert_eq!(s.rewards, vec![0.0; 3]);
        assert_eq!(s.trace.beliefs, vec![prior]);
        assert_eq!(s.value_gain, 0.0);
    }

    #[test]
    fn no_signal_report_is_invisible() {
        let model = InformationModel::binary_noisy(0.3, 0.1, 3).unwrap();
        let prior = model.prior_belief();
        let rule = ScoringRule::quadratic();
        let r = |x| truthful_report(&model, x).unwrap().report;
        let base = vec![
            TimedReport { agent: 0, time: 0.4, report: r(1) },
            TimedReport { agent: 2, time: 1.3, report: r(0) },
        ];
        let mut with = base.clone();
        with.push(TimedReport { agent: 1, time: 0.9, report: Report::Odds(ReportVector::no_signal(2)) });
        let a = mvp_run(&prior, &base, 3, 1, &rule, &exp1()).unwrap();
        let b = mvp_run(&prior, &with, 3, 1, &rule, &exp1()).unwrap();
        assert_eq!(b.rewards[1], 0.0);
        assert!((a.rewards[0] - b.rewards[0]).abs() < 1e-15);
        assert!((a.rewards[2] - b.rewards[2]).abs() < 1e-15);
    }

    #[test]
    fn duplicate_and_bad_reports_rejected() {
        let prior = Belief::uniform(2);
        let rule = ScoringRule::quadratic();
        let r = Report::Odds(ReportVector::new(vec![0.7]).unwrap());
        let dup = vec![
            TimedReport { agent: 0, time: 0.1, report: r.clone() },
            TimedReport { agent: 0, time: 0.2, report: r.clone() },
        ];
        assert!(matches!(mvp_run(&prior, &dup, 2, 0, &rule, &exp1()), Err(Error::Protocol(_))));
        let nan = vec![TimedReport { agent: 0, time: f64::NAN, report: r.clone() }];
        assert!(matches!(mvp_run(&prior, &nan, 2, 0, &rule, &exp1()), Err(Error::Input(_))));
        let neg = vec![TimedReport { agent: 1, time: -1.0, report: r }];
        assert!(mvp_run(&prior, &neg, 2, 0, &rule, &exp1()).is_err());
    }

    #[test]
    fn ties_break_by_agent_index() {
        let prior = Belief::uniform(2);
        let r = |b| Report::Odds(ReportVector::new(vec![b]).unwrap());
        let reports = vec![
            TimedReport { agent: 2, time: 0.5, report: r(0.7) },
            TimedReport { agent: 0, time: 0.5, report: r(0.2) },
        ];
        let s = mvp_run(&prior, &reports, 3, 0, &ScoringRule::quadratic(), &exp1()).unwrap();
        assert_eq!(s.trace.reporters, vec![0, 2]);
        assert_eq!(s.trace.reports_before(0.5), 0);
        assert_eq!(s.trace.reports_before(0.50001), 2);
    }

    #[test]
    fn report_stream_parses() {
        let text = "agent_id,time,b1\n# comment\n0, 0.5, 0.8\n\n1,1.25,0.3\n";
        let reports = read_report_stream(text.as_bytes(), 2).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[1].agent, 1);
        assert_eq!(reports[1].time, 1.25);
        assert!(read_report_stream("0,0.5,1.5\n".as_bytes(), 2).is_err());
        assert!(read_report_stream("0,0.5\n".as_bytes(), 2).is_err());
    }
}

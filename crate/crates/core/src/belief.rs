//! Market beliefs, agent reports and the two update rules that move a
//! belief given a report: the odds-form update on normalized likelihood
//! ratios, and the full Bayes step on a likelihood column.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::info_model::InformationModel;

/// Tolerance on `sum(p) = 1` accepted by [`Belief::new`].
pub const SUM_TOLERANCE: f64 = 1e-10;

/// Clamp applied to report entries whose likelihood ratio is 0 or infinite.
pub const REPORT_CLAMP: f64 = 1e-12;

/// A probability vector over the outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Validates entries and renormalizes.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return input("belief must have at least one outcome");
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return input(format!("belief entries must lie in [0, 1]: {probs:?}"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return input(format!("belief must sum to 1, sums to {total}"));
        }
        Ok(Self::from_weights_unchecked(probs))
    }

    /// Normalizes nonnegative weights. Callers guarantee a positive total.
    pub(crate) fn from_weights_unchecked(weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        Self(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return input(format!("weights must be finite and nonnegative: {weights:?}"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Inconsistent("weights sum to zero".into()));
        }
        Ok(Self::from_weights_unchecked(weights))
    }

    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    pub fn point_mass(d: usize, y: usize) -> Self {
        let mut p = vec![0.0; d];
        p[y] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn num_outcomes(&self) -> usize {
        self.0.len()
    }

    pub fn max_abs_diff(&self, other: &Belief) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for Belief {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Belief::new(v)
    }
}

impl From<Belief> for Vec<f64> {
    fn from(b: Belief) -> Self {
        b.0
    }
}

/// Report entries `b_1 .. b_{d-1}` in the open unit interval.
///
/// Entry `j` is the normalized likelihood ratio `L / (1 + L)` for outcome
/// `j + 1` against the rest; outcome 0 is the residual coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ReportVector(Vec<f64>);

impl ReportVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return input("report vector needs at least one entry");
        }
        if let Some(b) = entries.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return input(format!("report entries must lie strictly inside (0, 1), got {b}"));
        }
        Ok(Self(entries))
    }

    /// The report of an agent without a signal: every entry 1/2.
    pub fn no_signal(d: usize) -> Self {
        Self(vec![0.5; d.saturating_sub(1).max(1)])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ReportVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ReportVector::new(v)
    }
}

impl From<ReportVector> for Vec<f64> {
    fn from(r: ReportVector) -> Self {
        r.0
    }
}

/// What an agent submits to a mechanism.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    /// Odds-form report; only exact for binary outcomes.
    Odds(ReportVector),
    /// Relative likelihood of the agent's evidence under each outcome (any scale).
    Likelihood(Vec<f64>),
}

/// How a mechanism turns a report into a belief update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateForm {
    /// Bayes step on a likelihood column. Exact for every number of outcomes.
    #[default]
    Likelihood,
    /// Coordinate-wise odds update followed by the residual coordinate.
    /// Binary outcomes only.
    OddsLiteral,
}

impl Report {
    pub fn no_signal(d: usize) -> Self {
        if d == 2 {
            Report::Odds(ReportVector::no_signal(2))
        } else {
            Report::Likelihood(vec![1.0; d])
        }
    }

    /// Reads a raw report array: `d - 1` entries for an odds report on a
    /// binary market, `d` entries for a likelihood column.
    pub fn from_raw(raw: Vec<f64>, d: usize) -> Result<Self> {
        if d == 2 && raw.len() == 1 {
            Ok(Report::Odds(ReportVector::new(raw)?))
        } else if raw.len() == d {
            if raw.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || raw.iter().all(|l| *l == 0.0) {
                return input(format!("likelihood report must be nonnegative and not all zero: {raw:?}"));
            }
            Ok(Report::Likelihood(raw))
        } else {
            input(format!(
                "report has {} entries; expected {} (likelihood column){}",
                raw.len(),
                d,
                if d == 2 { " or 1 (odds)" } else { "" }
            ))
        }
    }

    pub fn to_raw(&self) -> Vec<f64> {
        match self {
            Report::Odds(v) => v.entries().to_vec(),
            Report::Likelihood(l) => l.clone(),
        }
    }

    /// The likelihood column this report stands for over `d` outcomes.
    pub fn likelihood_column(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            Report::Likelihood(l) if l.len() == d => Ok(l.clone()),
            Report::Likelihood(l) => input(format!("likelihood report has {} entries for {d} outcomes", l.len())),
            Report::Odds(v) if d == 2 && v.entries().len() == 1 => {
                let b = v.entries()[0];
                Ok(vec![1.0 - b, b])
            }
            Report::Odds(_) => input(format!(
                "odds-form reports are only exact for two outcomes, market has {d}"
            )),
        }
    }

    pub fn apply(&self, p: &Belief, form: UpdateForm) -> Result<Belief> {
        let d = p.num_outcomes();
        match form {
            UpdateForm::Likelihood => bayes_likelihood_update(p, &self.likelihood_column(d)?),
            UpdateForm::OddsLiteral => {
                if d != 2 {
                    return input("the coordinate-wise odds update is only offered for two outcomes");
                }
                let b = match self {
                    Report::Odds(v) => v.entries()[0],
                    Report::Likelihood(l) if l.len() == 2 => {
                        let b = l[1] / (l[0] + l[1]);
                        b.clamp(REPORT_CLAMP, 1.0 - REPORT_CLAMP)
                    }
                    Report::Likelihood(l) => {
                        return input(format!("likelihood report has {} entries for 2 outcomes", l.len()))
                    }
                };
                let p1 = update(p.probs()[1], b)?;
                Ok(Belief(vec![1.0 - p1, p1]))
            }
        }
    }

    /// Shifts one entry by `delta`. Odds entries stay inside the clamp range;
    /// likelihood entries are scaled by `1 + delta` and floored at zero.
    pub fn perturbed(&self, entry: usize, delta: f64) -> Result<Report> {
        match self {
            Report::Odds(v) => {
                let mut e = v.entries().to_vec();
                let Some(slot) = e.get_mut(entry) else {
                    return input(format!("report entry {entry} out of range"));
                };
                *slot = (*slot + delta).clamp(REPORT_CLAMP, 1.0 - REPORT_CLAMP);
                Ok(Report::Odds(ReportVector(e)))
            }
            Report::Likelihood(l) => {
                let mut l = l.clone();
                let Some(slot) = l.get_mut(entry) else {
                    return input(format!("report entry {entry} out of range"));
                };
                *slot = (*slot * (1.0 + delta)).max(0.0);
                Report::from_raw(l.clone(), l.len())
            }
        }
    }
}

/// The odds-form update: multiplies the odds `p / (1 - p)` by `b / (1 - b)`.
pub fn update(p: f64, b: f64) -> Result<f64> {
    if !(b > 0.0 && b < 1.0) {
        return input(format!("report entry must lie strictly inside (0, 1), got {b}"));
    }
    if !(0.0..=1.0).contains(&p) {
        return input(format!("probability must lie in [0, 1], got {p}"));
    }
    let num = p * b;
    Ok(num / ((1.0 - p) * (1.0 - b) + num))
}

/// `p'(y) ∝ p(y) ℓ(y)`.
pub fn bayes_likelihood_update(p: &Belief, likelihood: &[f64]) -> Result<Belief> {
    if likelihood.len() != p.num_outcomes() {
        return input(format!(
            "likelihood column has {} entries for {} outcomes",
            likelihood.len(),
            p.num_outcomes()
        ));
    }
    if likelihood.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return input(format!("likelihood entries must be finite and nonnegative: {likelihood:?}"));
    }
    if likelihood[0] > 0.0 && likelihood.iter().all(|&l| l == likelihood[0]) {
        return Ok(p.clone());
    }
    let weights: Vec<f64> = p.probs().iter().zip(likelihood).map(|(a, l)| a * l).collect();
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Inconsistent(
            "report has zero likelihood under every outcome the market considers possible".into(),
        ));
    }
    Ok(Belief::from_weights_unchecked(weights))
}

/// A truthful report and whether its entries were clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthfulReport {
    pub report: Report,
    pub clamped: bool,
}

/// The report that turns any market belief `P(Y | E)` into `P(Y | E, x)`.
///
/// Binary markets get an odds report `b = L / (1 + L)` with
/// `L = P(x | Y = 1) / P(x | Y = 0)`; ratios of 0 or infinity are clamped to
/// `[REPORT_CLAMP, 1 - REPORT_CLAMP]`. Larger markets get the likelihood column.
pub fn truthful_report(model: &InformationModel, signal: usize) -> Result<TruthfulReport> {
    let column = model.likelihood_column(signal)?;
    if column.iter().all(|l| *l == 0.0) {
        return input(format!("signal {signal} has probability zero under every outcome"));
    }
    if model.num_outcomes() != 2 {
        return Ok(TruthfulReport { report: Report::Likelihood(column), clamped: false });
    }
    let b = column[1] / (column[0] + column[1]);
    let clamped_b = b.clamp(REPORT_CLAMP, 1.0 - REPORT_CLAMP);
    Ok(TruthfulReport {
        report: Report::Odds(ReportVector(vec![clamped_b])),
        clamped: clamped_b != b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BAYES_0_02: f64 = 0.016 / 0.212;

    #[test]
    fn update_examples() {
        for p in [0.0, 0.02, 0.3, 0.999, 1.0] {
            assert!((update(p, 0.5).unwrap() - p).abs() < 1e-15);
        }
        assert!((update(0.02, 0.8).unwrap() - BAYES_0_02).abs() < 1e-15);
        assert_eq!(update(0.0, 0.7).unwrap(), 0.0);
        assert_eq!(update(1.0, 0.7).unwrap(), 1.0);
        assert!(update(0.5, 0.0).is_err());
        assert!(update(0.5, 1.0).is_err());
    }

    #[test]
    fn truthful_report_examples() {
        let m = InformationModel::binary_noisy(0.02, 0.2, 1).unwrap();
        let r = truthful_report(&m, 1).unwrap();
        assert_eq!(r.report, Report::Odds(ReportVector(vec![0.8])));
        assert!(!r.clamped);

        let flat = InformationModel::new(vec![0.3, 0.7], vec![vec![0.4, 0.6], vec![0.4, 0.6]], 2).unwrap();
        for x in 0..2 {
            let Report::Odds(v) = truthful_report(&flat, x).unwrap().report else { panic!() };
            assert!((v.entries()[0] - 0.5).abs() < 1e-15);
        }

        let m = InformationModel::binary_noisy(0.1, 0.05, 1).unwrap();
        let Report::Odds(v) = truthful_report(&m, 0).unwrap().report else { panic!() };
        assert!((v.entries()[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn noiseless_signal_is_clamped_and_flagged() {
        let m = InformationModel::binary_noisy(0.5, 0.0, 2).unwrap();
        let r = truthful_report(&m, 1).unwrap();
        assert!(r.clamped);
        assert_eq!(r.report, Report::Odds(ReportVector(vec![1.0 - REPORT_CLAMP])));
        let r = truthful_report(&m, 0).unwrap();
        assert_eq!(r.report, Report::Odds(ReportVector(vec![REPORT_CLAMP])));
    }

    #[test]
    fn bayes_update_examples() {
        let p = Belief::new(vec![0.98, 0.02]).unwrap();
        let q = bayes_likelihood_update(&p, &[0.2, 0.8]).unwrap();
        assert!((q.probs()[1] - BAYES_0_02).abs() < 1e-15);
        assert!((q.probs()[0] - (1.0 - BAYES_0_02)).abs() < 1e-15);
        assert_eq!(bayes_likelihood_update(&p, &[0.3, 0.3]).unwrap(), p);
        let delta = Belief::point_mass(3, 2);
        assert_eq!(bayes_likelihood_update(&delta, &[0.1, 0.5, 0.2]).unwrap(), delta);
        assert!(matches!(
            bayes_likelihood_update(&delta, &[0.1, 0.5, 0.0]),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn report_vector_rejects_boundary_entries() {
        assert!(ReportVector::new(vec![0.0]).is_err());
        assert!(ReportVector::new(vec![1.0]).is_err());
        assert!(ReportVector::new(vec![0.3, 0.7]).is_ok());
        assert!(serde_json::from_str::<ReportVector>("[1.0]").is_err());
    }

    #[test]
    fn odds_reports_need_binary_markets() {
        let r = Report::Odds(ReportVector(vec![0.4, 0.6]));
        assert!(r.apply(&Belief::uniform(3), UpdateForm::Likelihood).is_err());
        assert!(Report::no_signal(3).apply(&Belief::uniform(3), UpdateForm::OddsLiteral).is_err());
        assert!(Report::from_raw(vec![0.5, 0.5], 3).is_err());
    }

    #[test]
    fn round_trip_through_report_matches_posterior() {
        let m = InformationModel::binary_noisy(0.02, 0.2, 1).unwrap();
        let prior = m.prior_belief();
        for x in 0..2 {
            let r = truthful_report(&m, x).unwrap().report;
            let literal = r.apply(&prior, UpdateForm::OddsLiteral).unwrap();
            let exact = m.posterior(&[x]).unwrap();
            assert!(literal.max_abs_diff(&exact) < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn odds_and_bayes_forms_agree_on_binary(
            p1 in 0.001f64..0.999, l0 in 0.01f64..1.0, l1 in 0.01f64..1.0,
        ) {
            let p = Belief::new(vec![1.0 - p1, p1]).unwrap();
            let model = InformationModel::new(vec![1.0 - p1, p1], vec![vec![1.0 - l0, l0], vec![1.0 - l1, l1]], 1).unwrap();
            for x in 0..2 {
                let report = truthful_report(&model, x).unwrap().report;
                let literal = report.apply(&p, UpdateForm::OddsLiteral).unwrap();
                let bayes = bayes_likelihood_update(&p, &model.likelihood_column(x).unwrap()).unwrap();
                prop_assert!(literal.max_abs_diff(&bayes) < 1e-12);
            }
        }

        #[test]
        fn odds_update_commutes(p in 0.0f64..=1.0, b1 in 0.001f64..0.999, b2 in 0.001f64..0.999) {
            let a = update(update(p, b1).unwrap(), b2).unwrap();
            let b = update(update(p, b2).unwrap(), b1).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

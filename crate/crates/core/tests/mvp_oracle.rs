//! The sequential market: timeliness, truthfulness, counterfactual stability
//! and rewards against direct integration of the reward integrand.

use infomarket::belief::{truthful_report, Report, ReportVector};
use infomarket::mvp::{mvp_expected_rewards, mvp_expected_rewards_with, mvp_run, TimedReport};
use infomarket::quadrature::integrate_with_breaks;
use infomarket::{Belief, InformationModel, ScoringRule, TimeValue};
use proptest::prelude::*;

fn odds(b: f64) -> Report {
    Report::Odds(ReportVector::new(vec![b]).unwrap())
}

#[test]
fn reporting_later_never_pays_more() {
    let model = InformationModel::binary_noisy(0.3, 0.2, 3).unwrap();
    let rule = ScoringRule::quadratic();
    for h in [
        TimeValue::exponential(1.0).unwrap(),
        TimeValue::Table { times: vec![0.0, 1.0, 2.5], values: vec![0.6, 0.4, 0.3], tail_rate: 0.8 },
    ] {
        let mut last = f64::INFINITY;
        for step in 0..=16 {
            let s = step as f64 * 0.25;
            let r = mvp_expected_rewards(&model, &rule, &h, &[Some(s), Some(0.5), Some(1.5)]).unwrap()[0];
            assert!(r < last - 1e-12, "s = {s}: {r} vs {last}");
            last = r;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn delay_lowers_exact_expected_reward(
        alpha in 0.05f64..0.95,
        beta in 0.05f64..0.45,
        t_other in 0.0f64..3.0,
        s in 0.0f64..3.0,
        delay in 0.05f64..2.0,
        eta in 0.3f64..3.0,
    ) {
        let model = InformationModel::binary_noisy(alpha, beta, 2).unwrap();
        let rule = ScoringRule::quadratic();
        let h = TimeValue::exponential(eta).unwrap();
        let early = mvp_expected_rewards(&model, &rule, &h, &[Some(s), Some(t_other)]).unwrap()[0];
        let late = mvp_expected_rewards(&model, &rule, &h, &[Some(s + delay), Some(t_other)]).unwrap()[0];
        prop_assert!(late < early);
    }

    #[test]
    fn misreporting_lowers_exact_expected_reward(
        alpha in 0.05f64..0.95,
        beta in 0.05f64..0.4,
        times in prop::collection::vec(0.0f64..3.0, 3),
        delta in prop::sample::select(vec![-0.05, 0.05]),
        log_rule in prop::bool::ANY,
    ) {
        let model = InformationModel::binary_noisy(alpha, beta, 3).unwrap();
        let rule = if log_rule { ScoringRule::log() } else { ScoringRule::quadratic() };
        let h = TimeValue::exponential(1.0).unwrap();
        let times: Vec<Option<f64>> = times.into_iter().map(Some).collect();
        let truthful = mvp_expected_rewards(&model, &rule, &h, &times).unwrap()[0];
        for target in 0..2 {
            let deviant = mvp_expected_rewards_with(&model, &rule, &h, &times, |agent, x| {
                let r = truthful_report(&model, x)?.report;
                if agent == 0 && x == target { r.perturbed(0, delta) } else { Ok(r) }
            })
            .unwrap()[0];
            prop_assert!(deviant < truthful - 1e-12, "{} vs {}", deviant, truthful);
        }
    }

    #[test]
    fn own_report_never_moves_own_counterfactual(
        prior1 in 0.05f64..0.95,
        reports in prop::collection::vec((0.05f64..0.95, 0.0f64..4.0), 2..6),
        alt in 0.05f64..0.95,
        who in 0usize..6,
    ) {
        let n = reports.len();
        let who = who % n;
        let prior = Belief::new(vec![1.0 - prior1, prior1]).unwrap();
        let rule = ScoringRule::quadratic();
        let h = TimeValue::exponential(1.0).unwrap();
        let timed = |own: Option<f64>| -> Vec<TimedReport> {
            reports
                .iter()
                .enumerate()
                .filter_map(|(i, &(b, t))| {
                    let b = if i == who { own? } else { b };
                    Some(TimedReport { agent: i, time: t, report: odds(b) })
                })
                .collect()
        };
        let with = mvp_run(&prior, &timed(Some(reports[who].0)), n, 1, &rule, &h).unwrap();
        let other = mvp_run(&prior, &timed(Some(alt)), n, 1, &rule, &h).unwrap();
        let without = mvp_run(&prior, &timed(None), n, 1, &rule, &h).unwrap();
        for step in 0..=50 {
            let t = step as f64 * 0.1;
            let cf = with.trace.counterfactual_at(who, t);
            prop_assert_eq!(cf, other.trace.counterfactual_at(who, t));
            prop_assert_eq!(cf, without.trace.belief_at(t));
        }
    }

    #[test]
    fn rewards_equal_integrated_score_gaps(
        prior1 in 0.05f64..0.95,
        reports in prop::collection::vec((0.05f64..0.95, 0.0f64..4.0), 1..5),
        y in 0usize..2,
        table in prop::bool::ANY,
    ) {
        let n = reports.len();
        let prior = Belief::new(vec![1.0 - prior1, prior1]).unwrap();
        let rule = ScoringRule::quadratic();
        let h = if table {
            TimeValue::Table { times: vec![0.0, 0.7, 2.0, 3.1], values: vec![1.0, 0.4, 0.5, 0.2], tail_rate: 1.3 }
        } else {
            TimeValue::exponential(0.8).unwrap()
        };
        let timed: Vec<TimedReport> = reports
            .iter()
            .enumerate()
            .map(|(i, &(b, t))| TimedReport { agent: i, time: t, report: odds(b) })
            .collect();
        let s = mvp_run(&prior, &timed, n, y, &rule, &h).unwrap();
        let end = h.horizon();
        let mut breaks: Vec<f64> = vec![0.0, end];
        breaks.extend(reports.iter().map(|r| r.1));
        breaks.extend(h.knots());
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        for i in 0..n {
            let integrand = |t: f64| {
                (rule.score(s.trace.belief_at(t), y) - rule.score(s.trace.counterfactual_at(i, t), y)) * h.density(t)
            };
            let q = integrate_with_breaks(integrand, &breaks, 1e-11).unwrap();
            prop_assert!((s.rewards[i] - q.value).abs() < 1e-8, "{} vs {}", s.rewards[i], q.value);
        }
    }
}

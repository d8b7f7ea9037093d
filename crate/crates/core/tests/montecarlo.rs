//! Sampled rewards against exact expectations.

use infomarket::equilibrium::mvp_expected_reward;
use infomarket::montecarlo::{simulate, Acquisition, Mechanism, ReportPolicy, SimConfig, StrategyProfile};
use infomarket::{InformationModel, LatencyFamily, ScoringRule, TimeValue, UpdateForm};

fn sequential(model: InformationModel, effort: f64, lam: f64, trials: u64) -> SimConfig {
    let n = model.num_agents();
    SimConfig {
        model,
        mechanism: Mechanism::Mvp,
        acquisition: Acquisition::Latency(LatencyFamily::new(lam).unwrap()),
        time_value: Some(TimeValue::exponential(1.0).unwrap()),
        rule: ScoringRule::quadratic(),
        update_form: UpdateForm::Likelihood,
        profile: StrategyProfile::symmetric(n, effort, ReportPolicy::Truthful),
        trials,
        seed: 11,
        parallel: true,
    }
}

#[test]
fn lone_agent_earns_half_the_score_gain() {
    // Arrival and h are both unit exponentials, so the discounted gain is v1 / 2.
    let (alpha, beta): (f64, f64) = (0.02, 0.2);
    let p1_given = |x_is_one: bool| {
        let (l0, l1) = if x_is_one { (beta, 1.0 - beta) } else { (1.0 - beta, beta) };
        let z = (1.0 - alpha) * l0 + alpha * l1;
        ((1.0 - alpha) * l0 / z, alpha * l1 / z, z)
    };
    let mut e_norm = 0.0;
    for x in [false, true] {
        let (a, b, z) = p1_given(x);
        e_norm += z * (a * a + b * b);
    }
    let v1 = e_norm - ((1.0 - alpha).powi(2) + alpha * alpha);

    let cfg = sequential(InformationModel::binary_noisy(alpha, beta, 1).unwrap(), 1.0, 1.0, 1_000_000);
    let stats = simulate(&cfg).unwrap();
    let want = v1 / 2.0;
    assert!(
        (stats.reward_mean[0] - want).abs() <= 3.0 * stats.reward_se[0],
        "{} vs {} (se {})",
        stats.reward_mean[0],
        want,
        stats.reward_se[0]
    );
}

#[test]
fn sampled_rewards_match_closed_form() {
    let model = InformationModel::binary_noisy(0.3, 0.2, 2).unwrap();
    let v = model.v_sequence(&ScoringRule::quadratic(), 2).unwrap();
    let latency = LatencyFamily::new(2.0).unwrap();
    let h = TimeValue::exponential(1.0).unwrap();
    let want = mvp_expected_reward(&latency, &h, &v, 2, 0.3, 0.3).unwrap();
    let stats = simulate(&sequential(model, 0.3, 2.0, 400_000)).unwrap();
    for i in 0..2 {
        assert!(
            (stats.reward_mean[i] - want).abs() <= 3.0 * stats.reward_se[i],
            "agent {i}: {} vs {want} (se {})",
            stats.reward_mean[i],
            stats.reward_se[i]
        );
    }
}

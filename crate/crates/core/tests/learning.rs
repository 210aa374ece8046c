use agentpomdp::bruteforce::enumerate_stationary_det;
use agentpomdp::eval::performance;
use agentpomdp::learning::{
    asac_fixed_point, asac_td_run, asql_fixed_point, asql_policy, asql_run, initial_value, LearningConfig,
};
use agentpomdp::{fixtures, AgentStateMachine, DecisionRule, Policy};

#[test]
fn fixed_points_have_small_residuals() {
    let mut checked = 0;
    for seed in 0..20 {
        let model = fixtures::random_model(seed, 3, 2, 2, 0.9);
        let m = fixtures::random_machine(seed, 2, 2, 2);
        let mu = fixtures::random_stochastic_rule(seed, 2, 2);
        // machines with an unreachable agent state have no limit
        let Ok(q) = asql_fixed_point(&model, &m, &mu, 1e-12) else { continue };
        assert!(q.residual < 1e-10);
        assert!(asac_fixed_point(&model, &m, &mu, 1e-12).unwrap().residual < 1e-10);
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn asql_error_shrinks_with_more_steps() {
    let model = fixtures::fig2();
    let m = AgentStateMachine::singleton(1, 2);
    let mu = DecisionRule::uniform(1, 2);
    let fp = asql_fixed_point(&model, &m, &mu, 1e-12).unwrap();
    let cfg = LearningConfig {
        steps: 1_000_000,
        eval_stride: 10_000,
        seed: 7,
        ..LearningConfig::default()
    };
    let snaps = asql_run(&model, &m, &mu, &cfg).unwrap();
    let early = snaps.iter().find(|s| s.step >= 10_000).unwrap().q.sup_dist(&fp.q);
    let late = snaps.last().unwrap().q.sup_dist(&fp.q);
    assert!(late < early, "{late} vs {early}");
}

#[test]
fn mdp_limit_does_not_depend_on_behavior() {
    let mdp = fixtures::small_mdp();
    let id = AgentStateMachine::identity(mdp.n_obs(), mdp.n_actions());
    let a = asql_fixed_point(&mdp, &id, &DecisionRule::uniform(3, 2), 1e-12).unwrap();
    for seed in 0..5 {
        let b = asql_fixed_point(&mdp, &id, &fixtures::random_stochastic_rule(seed, 3, 2), 1e-12).unwrap();
        assert!(a.q.sup_dist(&b.q) < 1e-8);
    }
    // greedy policy of the limit is optimal
    let (_, best) = enumerate_stationary_det(&mdp, &id).unwrap();
    let j = performance(&mdp, &id, &Policy::Stationary(asql_policy(&a.q)), 1e-12).unwrap().value;
    assert!((j - best).abs() < 1e-8);
}

#[test]
fn mdp_asql_converges_to_optimal_table() {
    let mdp = fixtures::small_mdp();
    let id = AgentStateMachine::identity(mdp.n_obs(), mdp.n_actions());
    let mu = DecisionRule::uniform(3, 2);
    let fp = asql_fixed_point(&mdp, &id, &mu, 1e-12).unwrap();
    let snaps = asql_run(&mdp, &id, &mu, &LearningConfig::default()).unwrap();
    let d = snaps.last().unwrap().q.sup_dist(&fp.q);
    assert!(d < 0.05, "distance {d}");
}

#[test]
fn asac_td_tracks_its_fixed_point() {
    let model = fixtures::fig2();
    let m = AgentStateMachine::singleton(1, 2);
    let pi = DecisionRule::bernoulli(0.39).unwrap();
    let fp = asac_fixed_point(&model, &m, &pi, 1e-12).unwrap();
    let snaps = asac_td_run(&model, &m, &pi, &LearningConfig::default()).unwrap();
    let d = snaps.last().unwrap().q.sup_dist(&fp.q);
    assert!(d < 0.05, "distance {d}");
    // in an MDP with the identity machine the TD limit is the true value
    let mdp = fixtures::small_mdp();
    let id = AgentStateMachine::identity(3, 2);
    let rule = fixtures::random_stochastic_rule(2, 3, 2);
    let q = asac_fixed_point(&mdp, &id, &rule, 1e-12).unwrap().q;
    let j = performance(&mdp, &id, &Policy::Stationary(rule.clone()), 1e-12).unwrap().value;
    assert!((initial_value(&mdp, &id, &rule, &q) - j).abs() < 1e-8);
}

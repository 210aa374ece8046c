use agentpomdp::bruteforce::enumerate_stationary_det;
use agentpomdp::designer::xi_init;
use agentpomdp::eval::{build_product_chain, policy_evaluate};
use agentpomdp::gradient::{gradient_ascent, sweep_1param, unit_grid, SoftmaxPolicyParams};
use agentpomdp::{fixtures, AgentStateMachine, DecisionRule};
use proptest::prelude::*;

#[test]
fn sweep_agrees_with_policy_evaluation() {
    let model = fixtures::fig2();
    let m = AgentStateMachine::singleton(1, 2);
    let chain = build_product_chain(&model, &m).unwrap();
    let xi = xi_init(&model, &m).unwrap();
    for (p, j) in sweep_1param(&model, &unit_grid(0.05)).unwrap() {
        let rule = DecisionRule::bernoulli(p).unwrap();
        let exact = policy_evaluate(&chain, &rule, &xi, 1e-13).unwrap().j;
        assert!((j - exact).abs() < 1e-10, "p = {p}: {j} vs {exact}");
    }
}

#[test]
fn fig2_ascent_finds_interior_optimum() {
    let model = fixtures::fig2();
    let m = AgentStateMachine::singleton(1, 2);
    let res = gradient_ascent(&model, &m, &SoftmaxPolicyParams::logit_difference(0.0), 0.1, 2000, 1e-10).unwrap();
    assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
    let p = res.params.rule().prob(0, 1);
    assert!((p - 0.387283).abs() < 1e-4, "p = {p}");
    assert!((res.j - -2.870330).abs() < 1e-5, "J = {}", res.j);
}

#[test]
fn mdp_ascent_reaches_optimal_deterministic_value() {
    let mdp = fixtures::small_mdp();
    let id = AgentStateMachine::identity(mdp.n_obs(), mdp.n_actions());
    let (_, best) = enumerate_stationary_det(&mdp, &id).unwrap();
    let res = gradient_ascent(&mdp, &id, &SoftmaxPolicyParams::zeros(3, 2), 0.5, 5000, 1e-12).unwrap();
    assert!(best - res.j < 1e-6, "{} vs {best}", res.j);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ascent_trace_never_decreases(seed in any::<u64>(), nz in 1usize..3) {
        let model = fixtures::random_model(seed, 3, 2, 2, 0.9);
        let m = fixtures::random_machine(seed, nz, 2, 2);
        let res = gradient_ascent(&model, &m, &SoftmaxPolicyParams::zeros(nz, 2), 0.1, 50, 1e-9).unwrap();
        prop_assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn softmax_ignores_row_shifts(theta in prop::collection::vec(-5.0f64..5.0, 6), shift in -10.0f64..10.0) {
        let a = SoftmaxPolicyParams::new(2, 3, theta.clone()).unwrap().rule();
        let mut shifted = theta;
        shifted[3..].iter_mut().for_each(|t| *t += shift);
        let b = SoftmaxPolicyParams::new(2, 3, shifted).unwrap().rule();
        for z in 0..2 {
            for act in 0..3 {
                prop_assert!((a.prob(z, act) - b.prob(z, act)).abs() < 1e-12);
            }
        }
    }
}

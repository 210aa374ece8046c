use std::time::Instant;

use agentpomdp::bruteforce::enumerate_stationary_det;
use agentpomdp::designer::{plan_designer, plan_designer_with, xi_init, xi_reward, xi_update, PlanOptions, RuleClass};
use agentpomdp::eval::build_product_chain;
use agentpomdp::{fixtures, AgentStateMachine, Caps, DecisionRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fig1_plan_reaches_open_loop_value() {
    let model = fixtures::fig1_truncated(0.9);
    let m = AgentStateMachine::identity(2, 2);
    let t = Instant::now();
    let plan = plan_designer(&model, &m, 1e-6, RuleClass::Drd).unwrap();
    eprintln!("fig1 {:?} nodes={} lo={} hi={}", t.elapsed(), plan.nodes, plan.lo, plan.hi);
    assert!((plan.lo - 10.0).abs() <= 1e-6);
    assert!(plan.width() <= 1e-6);
}

#[test]
fn fig2_plan_dominates_stationary() {
    let model = fixtures::fig2();
    let m = AgentStateMachine::singleton(1, 2);
    let t = Instant::now();
    let plan = plan_designer(&model, &m, 1e-4, RuleClass::Drd).unwrap();
    eprintln!("fig2 {:?} nodes={} lo={} hi={} len={}", t.elapsed(), plan.nodes, plan.lo, plan.hi, plan.rules.len());
    assert!(plan.lo >= -5.0);
    assert!(plan.width() <= 1e-4);
}

#[test]
fn xi_rollout_matches_simulated_joint_law() {
    let model = fixtures::random_model(31, 3, 2, 2, 0.9);
    let m = fixtures::random_machine(31, 2, 2, 2);
    let chain = build_product_chain(&model, &m).unwrap();
    let rules: Vec<DecisionRule> = (0..10).map(|t| DecisionRule::from_index(t as u128 % 4, 2, 2)).collect();
    let mut xis = vec![xi_init(&model, &m).unwrap()];
    for rule in &rules[..9] {
        let next = xi_update(&chain, xis.last().unwrap(), rule);
        xis.push(next);
    }
    let episodes = 50_000;
    let mut counts = vec![vec![0usize; 6]; 10];
    let mut reward_sums = vec![0.0; 10];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..episodes {
        let (mut s, y) = model.sample_initial(&mut rng);
        let mut z = m.init(y);
        for (t, rule) in rules.iter().enumerate() {
            counts[t][s * 2 + z] += 1;
            let a = rule.sample(z, &mut rng);
            let (sn, yn, r) = model.sample_step(s, a, &mut rng).unwrap();
            reward_sums[t] += r;
            z = m.step(z, yn, a);
            s = sn;
        }
    }
    for t in [0usize, 4, 9] {
        for (k, c) in counts[t].iter().enumerate() {
            let p = xis[t].as_slice()[k];
            let sigma = (p * (1.0 - p) / episodes as f64).sqrt();
            let freq = *c as f64 / episodes as f64;
            assert!((freq - p).abs() <= 3.0 * sigma + 1e-9, "t={} cell {k}: {freq} vs {p}", t + 1);
        }
        let mean = reward_sums[t] / episodes as f64;
        let expected = xi_reward(&xis[t], &rules[t], &model);
        assert!((mean - expected).abs() < 0.03, "t={}: reward {mean} vs {expected}", t + 1);
    }
}

#[test]
fn plan_is_never_below_best_stationary_rule() {
    for seed in 40..46u64 {
        let model = fixtures::random_model(seed, 3, 2, 2, 0.8);
        let m = fixtures::random_machine(seed, 2, 2, 2);
        let (_, zsd) = enumerate_stationary_det(&model, &m).unwrap();
        let opts = PlanOptions {
            tol: 1e-6,
            anytime: true,
            caps: Caps {
                search_nodes: 200_000,
                ..Caps::default()
            },
            ..PlanOptions::default()
        };
        let plan = plan_designer_with(&model, &m, &opts).unwrap();
        assert!(plan.lo >= zsd - 1e-6, "seed {seed}: {} < {zsd}", plan.lo);
        assert!(plan.lo <= plan.hi);
    }
}

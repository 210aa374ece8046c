use agentpomdp::ais::{
    check_information_state, compute_ais_losses, fit_ais, ipm_distance, minkowski_norm, solve_ais_dp, IpmSpec,
};
use agentpomdp::bruteforce::history_dp;
use agentpomdp::eval::performance;
use agentpomdp::machine::belief_machine;
use agentpomdp::{fixtures, AgentStateMachine, DecisionRule, Policy};
use proptest::prelude::*;

fn distribution(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ipm_dual_bound(w1 in prop::collection::vec(0.01f64..1.0, 4), w2 in prop::collection::vec(0.01f64..1.0, 4), f in prop::collection::vec(-3.0f64..3.0, 4)) {
        let (mu, nu) = (distribution(&w1), distribution(&w2));
        let lhs: f64 = f.iter().zip(mu.iter().zip(&nu)).map(|(x, (a, b))| x * (a - b)).sum::<f64>().abs();
        for spec in [IpmSpec::TotalVariation, IpmSpec::line(4), IpmSpec::discrete(4)] {
            let d = ipm_distance(&spec, &mu, &nu).unwrap();
            let rho = minkowski_norm(&spec, &f).unwrap();
            prop_assert!(lhs <= rho * d + 1e-9, "{spec:?}: {lhs} > {rho} * {d}");
            prop_assert!(ipm_distance(&spec, &mu, &mu).unwrap().abs() < 1e-12);
        }
    }
}

#[test]
fn information_state_has_zero_losses_and_optimal_policy() {
    let mdp = fixtures::small_mdp();
    let id = AgentStateMachine::identity(mdp.n_obs(), mdp.n_actions());
    assert!(check_information_state(&mdp, &id, 6, 1e-12).unwrap().is_info_state);
    let ais = fit_ais(&mdp, &id, &DecisionRule::uniform(3, 2)).unwrap();
    let report = compute_ais_losses(&mdp, &id, &ais, &IpmSpec::TotalVariation, 6).unwrap();
    assert!(report.eps_t.iter().chain(&report.delta_t).all(|x| x.abs() < 1e-12), "{report:?}");
    assert!(report.bound.abs() < 1e-12, "bound {}", report.bound);
    let sol = solve_ais_dp(&ais, mdp.gamma(), 1e-13).unwrap();
    let j = performance(&mdp, &id, &Policy::Stationary(sol.policy), 1e-13).unwrap().value;
    let hnd = history_dp(&mdp, 400, 1e-9).unwrap();
    assert!(j >= hnd.lo - 1e-8 && j <= hnd.hi + 1e-8, "{j} vs [{}, {}]", hnd.lo, hnd.hi);
}

#[test]
fn singleton_on_fig2_is_not_an_information_state() {
    let rep = check_information_state(&fixtures::fig2(), &AgentStateMachine::singleton(1, 2), 4, 1e-9).unwrap();
    assert!(!rep.is_info_state);
}

#[test]
fn loss_bound_covers_the_true_gap() {
    for seed in 1..6u64 {
        let model = fixtures::random_model(seed, 2, 2, 2, 0.8);
        let m = belief_machine(&model, 3).unwrap();
        let mu = DecisionRule::uniform(m.n_agent_states(), 2);
        let Ok(ais) = fit_ais(&model, &m, &mu) else { continue };
        let sol = solve_ais_dp(&ais, model.gamma(), 1e-12).unwrap();
        for spec in [IpmSpec::TotalVariation, IpmSpec::discrete(m.n_agent_states())] {
            let report = compute_ais_losses(&model, &m, &ais, &spec, 6).unwrap();
            let j = performance(&model, &m, &Policy::Stationary(sol.policy.clone()), 1e-12).unwrap().value;
            let hnd = history_dp(&model, 40, 1e-6).unwrap();
            assert!(hnd.hi - j <= report.bound + 1e-9, "seed {seed}: {} > {}", hnd.hi - j, report.bound);
        }
    }
}

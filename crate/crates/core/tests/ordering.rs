use agentpomdp::bruteforce::{enumerate_stationary_det, grid_search_stationary_stoch, verify_ordering, Budgets};
use agentpomdp::{fixtures, AgentStateMachine};

#[test]
fn fig2_classes_are_ordered() {
    let model = fixtures::fig2();
    let m = AgentStateMachine::singleton(1, 2);
    let r = verify_ordering(&model, &m, &Budgets::default()).unwrap();
    assert_eq!(r.violations(), 0, "{r}");
    assert!((r.j_zsd - -5.0).abs() < 1e-9);
    // a stochastic memoryless rule beats every deterministic one
    assert!(r.j_zss.0 > r.j_zsd + 1.0);
    let csv = r.to_csv();
    assert!(csv.lines().count() > 1);
}

#[test]
fn report_agrees_with_independent_oracles() {
    for seed in 50..54u64 {
        let model = fixtures::random_model(seed, 3, 2, 2, 0.8);
        let m = fixtures::random_machine(seed, 2, 2, 2);
        let budgets = Budgets {
            history_horizon: 8,
            designer_nodes: 200_000,
            ..Budgets::default()
        };
        let r = verify_ordering(&model, &m, &budgets).unwrap();
        assert_eq!(r.violations(), 0, "seed {seed}: {r}");
        let (_, zsd) = enumerate_stationary_det(&model, &m).unwrap();
        assert!((r.j_zsd - zsd).abs() < 1e-12);
        let (_, zss) = grid_search_stationary_stoch(&model, &m, budgets.grid_resolution).unwrap();
        assert!(zss >= zsd - 1e-12);
        assert!((r.j_zss.0 - zss).abs() < 1e-12);
    }
}

#[test]
fn mdp_classes_collapse() {
    let mdp = fixtures::small_mdp();
    let id = AgentStateMachine::identity(mdp.n_obs(), mdp.n_actions());
    let r = verify_ordering(&mdp, &id, &Budgets::default()).unwrap();
    assert_eq!(r.violations(), 0);
    assert!(r.j_hnd.1 - r.j_zsd < 1e-5, "{r}");
}

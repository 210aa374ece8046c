use agentpomdp::io::{parse_cassandra, parse_native, parse_policy, serialize_native, serialize_policy, ModelDocument};
use agentpomdp::machine::window_machine;
use agentpomdp::{fixtures, AgentStateMachine, DecisionRule, Error, Policy};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn documents_round_trip(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, ny in 1usize..4, gamma in 0.01f64..0.999) {
        let model = fixtures::random_model_sparse(seed, ns, na, ny, gamma, 0.4);
        let mut doc = ModelDocument::new(model);
        doc.machines.push(("w".into(), window_machine(1, ny, na).unwrap().with_label("w")));
        doc.machines.push(("t".into(), fixtures::random_machine(seed, 3, ny, na).with_label("t")));
        doc.metadata.push(("seed".into(), seed.to_string()));
        let text = serialize_native(&doc);
        let back = parse_native(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(serialize_native(&back), text);
    }

    #[test]
    fn policies_round_trip(seed in any::<u64>(), nz in 1usize..4, na in 1usize..4, horizon in 0usize..4) {
        let m = fixtures::random_machine(seed, nz, 2, na).with_label("m");
        let rules: Vec<DecisionRule> = (0..horizon)
            .map(|t| if t % 2 == 0 { DecisionRule::from_index(seed as u128 + t as u128, nz, na) } else { fixtures::random_stochastic_rule(seed + t as u64, nz, na) })
            .collect();
        let tail = fixtures::random_stochastic_rule(seed, nz, na);
        let policy = if horizon == 0 { Policy::Stationary(tail) } else { Policy::non_stationary(rules, tail).unwrap() };
        let (back, name) = parse_policy(&serialize_policy(&policy, &m)).unwrap();
        prop_assert_eq!(back, policy);
        prop_assert_eq!(name, "m");
    }
}

#[test]
fn cassandra_marginals_recover_transition_and_observation_tables() {
    let text = "discount: 0.9
values: reward
states: 2
actions: 1
observations: 2
start: 0.25 0.75
T: 0
0.3 0.7
0.6 0.4
O: 0
0.9 0.1
0.2 0.8
R: 0 : * : * : * 2
";
    let model = parse_cassandra(text).unwrap();
    let t = [[0.3, 0.7], [0.6, 0.4]];
    let o = [[0.9, 0.1], [0.2, 0.8]];
    for s in 0..2 {
        for sn in 0..2 {
            assert!((model.state_transition(s, 0, sn) - t[s][sn]).abs() < 1e-15);
            for y in 0..2 {
                assert!((model.kernel(s, 0, sn, y) / t[s][sn] - o[sn][y]).abs() < 1e-12);
            }
        }
        assert!((model.reward(s, 0) - 2.0).abs() < 1e-12);
    }
    assert_eq!(model.init_state(), &[0.25, 0.75]);
}

#[test]
fn malformed_input_reports_position() {
    let bad = "[model]\nstates 2\nactions 1\nobservations 1\ngamma 0.9\n[kernel]\n0 0 -> 0 0 banana\n";
    match parse_native(bad) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
        other => panic!("unexpected {other:?}"),
    }
    let doc = ModelDocument::new(fixtures::fig2());
    let text = serialize_native(&doc);
    assert!(parse_native(&text.replace("gamma", "gama")).is_err());
    let id = AgentStateMachine::identity(1, 2);
    assert!(parse_policy(&serialize_policy(&Policy::Stationary(DecisionRule::uniform(1, 2)), &id).replace("end", "")).is_err());
}

use fmlab_core::discovery::{
    collect_evidence, compare_partitions, discover_partition, distinct_families, greedy_partition, recovery_preconditions,
    row_families, separation_matrix, KVisibility, Refinement,
};
use fmlab_core::gallery::{
    compose, gridworld_env, make_exo_cycle, make_fj_counterexample, make_fj_counterexample_observed, random_case,
    EmissionRule,
};
use fmlab_core::model::{diameter, AgentDynamics, Emission, ExoDynamics, FmPomdp, Labels, ObsSymbol, Policy};
use fmlab_core::objective::Objective;
use fmlab_core::prob::Probability;
use fmlab_core::trajectory::Budget;

const HIDDEN: KVisibility = KVisibility::Hidden;

fn observed_chain(table: Vec<Vec<usize>>, horizon: usize) -> FmPomdp {
    let ns = table.len();
    let na = table[0].len();
    FmPomdp {
        name: "chain".into(),
        agent: AgentDynamics::from_table(table),
        exo: ExoDynamics::trivial(),
        emission: Emission::deterministic(ns, 1, ns, |s, _| ObsSymbol::Content(s.0)),
        m: 0,
        n: 0,
        horizon,
        initial: (0..ns).map(|_| vec![Probability::uniform(ns)]).collect(),
        block: true,
        labels: Labels::numeric(na, ns, 1, ns),
    }
}

/// Entry-wise: nothing separated at `k_max` is unseparated at `k_max + 1`.
fn assert_monotone(model: &FmPomdp, objective: Objective, t: usize, k_hi: usize) {
    let policy = Policy::uniform(model);
    let mut prev = None;
    for k in 1..=k_hi {
        let d = discover_partition(model, &policy, objective, k, t, HIDDEN, Budget::default()).unwrap();
        if let Some((sep, part)) = &prev {
            let sep: &Vec<Vec<bool>> = sep;
            for (i, row) in sep.iter().enumerate() {
                for (j, was) in row.iter().enumerate() {
                    assert!(!was || d.separation.separated[i][j], "{objective} K={k} lost separation of {i},{j}");
                }
            }
            let v = compare_partitions(&d.state_partition, part).unwrap();
            assert!(matches!(v.refinement, Refinement::Finer | Refinement::Equal), "{objective} K={k}: {:?}", v.refinement);
        }
        prev = Some((d.separation.separated.clone(), d.state_partition.clone()));
    }
}

#[test]
fn larger_offsets_never_coarsen_on_the_counterexample() {
    // room for offsets past the diameter
    let mut model = make_fj_counterexample();
    model.horizon = 4 + 6 + model.n;
    assert_monotone(&model, Objective::MikA, 4, 6);
    assert_monotone(&model, Objective::FjA, 4, 6);
    let mut observed = make_fj_counterexample_observed();
    observed.horizon = model.horizon;
    assert_monotone(&observed, Objective::Fj, 4, 6);
}

#[test]
fn larger_offsets_never_coarsen_on_generated_models() {
    let mut tried = 0;
    for seed in 0..60 {
        let model = random_case(seed).model;
        let Ok(d) = diameter(&model.agent) else { continue };
        let policy = Policy::uniform(&model);
        if !recovery_preconditions(&model, &policy, d, Budget::default()).unwrap().hold() {
            continue;
        }
        assert_monotone(&model, Objective::MikA, model.m + 1, d);
        tried += 1;
    }
    assert!(tried >= 10, "only {tried} generated models met the preconditions");
}

#[test]
fn gridworld_discovery_discards_the_exogenous_counter() {
    let env = gridworld_env(3, 3);
    let mut reference = None;
    for period in [4, 2, 1] {
        let model = compose(&env, make_exo_cycle(period), EmissionRule::StateOnly);
        let policy = Policy::uniform(&model);
        let k = diameter(&model.agent).unwrap();
        let d = discover_partition(&model, &policy, Objective::MikA, k, 1, HIDDEN, Budget::default()).unwrap();
        assert_eq!(d.state_partition.class_count, 9, "period {period}");
        assert!(d.verdict.isomorphic);
        let key = (d.state_partition.clone(), d.separation.clone(), d.informative_ks.clone());
        match &reference {
            None => reference = Some(key),
            Some(r) => assert_eq!(r, &key, "period {period}"),
        }
    }
}

#[test]
fn windows_of_one_state_are_never_split() {
    let masked = make_fj_counterexample();
    let observed = make_fj_counterexample_observed();
    let runs = [
        (&masked, Objective::MikA),
        (&masked, Objective::FjA),
        (&masked, Objective::AhA),
        (&observed, Objective::Ah),
        (&observed, Objective::Fj),
        (&observed, Objective::Mik),
    ];
    for (model, objective) in runs {
        let policy = Policy::uniform(model);
        for k in 1..=3 {
            let d = discover_partition(model, &policy, objective, k, 4, HIDDEN, Budget::default()).unwrap();
            assert!(
                matches!(d.verdict.refinement, Refinement::Coarser | Refinement::Equal),
                "{objective} K={k}: {:?}",
                d.verdict.refinement
            );
            assert!(d.verdict.split_pairs.is_empty());
        }
    }
}

#[test]
fn single_state_model_has_an_empty_separation_matrix() {
    let model = observed_chain(vec![vec![0, 0]], 4);
    let policy = Policy::uniform(&model);
    let sep = separation_matrix(&model, &policy, Objective::MikA, 1, 1, HIDDEN, Budget::default()).unwrap();
    assert_eq!(sep.states.len(), 1);
    assert!(sep.unseparated_pairs().is_empty());
    assert_eq!(sep.separated, vec![vec![false]]);
}

#[test]
fn one_action_rows_are_point_masses() {
    let model = observed_chain(vec![vec![1], vec![2], vec![0]], 5);
    let policy = Policy::uniform(&model);
    let ev = collect_evidence(&model, &policy, Objective::MikA, 2, 1, HIDDEN, Budget::default()).unwrap();
    for rel in &ev.relations {
        assert!(rel.rows.values().all(|d| d.len() == 1 && d[0].is_one()));
    }
    // forward and backward rows name different partner states, so compare the
    // row values only
    let values: std::collections::BTreeSet<Vec<_>> = row_families(&ev)
        .values()
        .map(|f| f.iter().flat_map(|g| g.forward.iter().chain(&g.backward).map(|(_, d)| d.clone())).collect())
        .collect();
    assert_eq!(values.len(), 1);
    assert_eq!(greedy_partition(&ev).class_count, 1);
}

#[test]
fn inert_actions_fail_the_preconditions() {
    // every action leads to the same successor: no inverse model sees anything
    let model = observed_chain(vec![vec![1, 1], vec![0, 0]], 4);
    let policy = Policy::uniform(&model);
    let pre = recovery_preconditions(&model, &policy, 1, Budget::default()).unwrap();
    assert!(!pre.actions_effective && !pre.hold());
    let d = discover_partition(&model, &policy, Objective::MikA, 1, 1, HIDDEN, Budget::default()).unwrap();
    assert_eq!(d.state_partition.class_count, 1);
}

#[test]
fn counterexample_preconditions_hold() {
    let model = make_fj_counterexample();
    let pre = recovery_preconditions(&model, &Policy::uniform(&model), 3, Budget::default()).unwrap();
    assert!(pre.hold(), "{pre:?}");
    assert_eq!(pre.diameter, Some(3));
    let ev = collect_evidence(&model, &Policy::uniform(&model), Objective::MikA, 3, 4, HIDDEN, Budget::default()).unwrap();
    assert_eq!(distinct_families(&ev), 8);
}

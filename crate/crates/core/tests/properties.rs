use std::collections::BTreeSet;

use fmlab_core::decode::{check_decodability, DecodeQuery};
use fmlab_core::discovery::{compare_partitions, Partition, Refinement};
use fmlab_core::gallery::{dump_ik_examples, random_case};
use fmlab_core::inference::{latent_inverse, verify_decoupling};
use fmlab_core::io::{model_hash, read_model, write_model};
use fmlab_core::model::{
    diameter, reachable_latents, validate_model, validate_policy, ActionId, AgentDynamics, ExoStateId,
    FmPomdp, Policy,
};
use fmlab_core::prob::{support, Dist, Probability};
use fmlab_core::trajectory::Budget;
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 40, ..ProptestConfig::default() }
}

fn weights_to_dist(w: &[u8]) -> Dist {
    let total: i64 = w.iter().map(|&x| i64::from(x)).sum();
    w.iter().map(|&x| Probability::new(i64::from(x), total)).collect()
}

/// Endogenous policy from raw weights; a zero weight removes the action but
/// every row keeps at least one action.
fn policy_from(model: &FmPomdp, raw: &[u8]) -> Policy {
    let na = model.action_count();
    let rows = (0..model.agent_count())
        .map(|s| {
            let mut w: Vec<u8> = (0..na).map(|a| raw[(s * na + a) % raw.len()] % 4).collect();
            if w.iter().all(|&x| x == 0) {
                w[s % na] = 1;
            }
            weights_to_dist(&w)
        })
        .collect();
    Policy::endogenous(rows, model.exo_count())
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn generated_models_validate(seed in 0u64..10_000) {
        let model = random_case(seed).model;
        prop_assert!(validate_model(&model).is_valid());
        prop_assert!(validate_policy(&model, &Policy::uniform(&model)).is_valid());
    }

    #[test]
    fn diameter_ignores_state_names(seed in 0u64..10_000, perm_seed in any::<u64>()) {
        let model = random_case(seed).model;
        let ns = model.agent_count();
        // rotate-and-reflect relabelling driven by the second seed
        let shift = (perm_seed % ns as u64) as usize;
        let flip = perm_seed % 2 == 0;
        let perm: Vec<usize> = (0..ns).map(|s| {
            let r = (s + shift) % ns;
            if flip { ns - 1 - r } else { r }
        }).collect();
        let table = model.agent.table();
        let mut relabelled = vec![Vec::new(); ns];
        for s in 0..ns {
            relabelled[perm[s]] = table[s].iter().map(|&t| perm[t]).collect();
        }
        let a = diameter(&model.agent);
        let b = diameter(&AgentDynamics::from_table(relabelled));
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn ik_dump_matches_the_count_formula(seed in 0u64..10_000, k_hi in 1usize..4) {
        let model = random_case(seed).model;
        let dump = dump_ik_examples(&model, 1, k_hi, Budget::default()).unwrap();
        let ns = model.agent_count() as u64;
        let na = model.action_count() as u64;
        let expected: u64 = (1..=k_hi as u32).map(|k| ns * na.pow(k)).sum();
        prop_assert_eq!(dump.total, expected);
        prop_assert_eq!(dump.lines.lines().count() as u64, expected);
    }

    #[test]
    fn reachable_sets_follow_one_step_images(seed in 0u64..10_000, raw in prop::collection::vec(0u8..4, 1..18)) {
        let model = random_case(seed).model;
        let policy = policy_from(&model, &raw);
        for t in 1..model.horizon {
            let now = reachable_latents(&model, &policy, t).unwrap();
            let next = reachable_latents(&model, &policy, t + 1).unwrap();
            let mut image = BTreeSet::new();
            for &(s, x) in &now {
                for a in support(policy.row(s, x)) {
                    let s2 = model.agent.step(s, ActionId(a));
                    for x2 in support(model.exo.row(x)) {
                        image.insert((s2, ExoStateId(x2)));
                    }
                }
            }
            prop_assert_eq!(&next, &image);
        }
    }

    #[test]
    fn longer_windows_never_lose_decodability(seed in 0u64..10_000) {
        let model = random_case(seed).model;
        let policy = Policy::uniform(&model);
        let mut held = false;
        for span in 0..=3 {
            let q = DecodeQuery::past(&model, span).anchored(1, model.horizon);
            let holds = check_decodability(&model, &policy, q, Budget::default()).unwrap().holds;
            prop_assert!(!held || holds, "span {} lost decodability", span);
            held = holds;
        }
    }

    #[test]
    fn inverse_rows_satisfy_the_flow_equations(seed in 0u64..10_000, raw in prop::collection::vec(0u8..4, 1..18)) {
        let model = random_case(seed).model;
        let policy = policy_from(&model, &raw);
        let li = latent_inverse(&model, &policy, 3).unwrap();
        for row in &li.rows {
            prop_assert_eq!(&row.reach, &li.kernel[row.k][row.from.0][row.to.0]);
            prop_assert!(row.dist.iter().sum::<Probability>().is_one());
            for a in model.actions() {
                let lhs = &row.dist[a.0] * &row.reach;
                let next = model.agent.step(row.from, a);
                let rhs = &policy.agent_row(row.from)[a.0] * &li.kernel[row.k - 1][next.0][row.to.0];
                prop_assert_eq!(lhs, rhs);
            }
        }
        // kernels are stochastic
        for k in 0..=3 {
            for s in 0..model.agent_count() {
                prop_assert!(li.kernel[k][s].iter().sum::<Probability>().is_one());
            }
        }
    }

    #[test]
    fn endogenous_policies_decouple(seed in 0u64..10_000, raw in prop::collection::vec(0u8..4, 1..18), h in 1usize..4) {
        let model = random_case(seed).model;
        let policy = policy_from(&model, &raw);
        let r = verify_decoupling(&model, &policy, h).unwrap();
        prop_assert!(r.passed);
        prop_assert!(r.max_residual.is_zero());
    }

    #[test]
    fn interchange_round_trips(seed in 0u64..10_000) {
        let model = random_case(seed).model;
        let text = write_model(&model);
        let back = read_model(&text).unwrap();
        prop_assert_eq!(model_hash(&back), model_hash(&model));
        prop_assert_eq!(back, model);
    }

    #[test]
    fn partition_verdicts_ignore_labels(labels in prop::collection::vec(0usize..5, 1..12), relabel in 0usize..5) {
        let truth = Partition::from_keys(labels.iter().enumerate().map(|(i, l)| (i, *l)));
        let renamed = Partition::from_keys(labels.iter().enumerate().map(|(i, l)| (i, (l + relabel) * 7)));
        let v = compare_partitions(&renamed, &truth).unwrap();
        prop_assert!(v.isomorphic);
        prop_assert_eq!(v.refinement, Refinement::Equal);
        prop_assert!(v.accuracy.is_one());
        // ids are dense and in first-occurrence order
        let mut next = 0;
        for &l in &truth.labels {
            prop_assert!(l <= next);
            if l == next {
                next += 1;
            }
        }
        prop_assert_eq!(next, truth.class_count);
        // merging two classes gives a coarser partition
        if truth.class_count >= 2 {
            let merged = Partition::from_keys(truth.labels.iter().enumerate().map(|(i, l)| (i, (*l).max(1))));
            let v = compare_partitions(&merged, &truth).unwrap();
            prop_assert_eq!(v.refinement, Refinement::Coarser);
            prop_assert!(!v.merged_pairs.is_empty());
            prop_assert!(v.split_pairs.is_empty());
        }
    }
}

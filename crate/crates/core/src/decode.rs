//! Past / future decodability checks and the tabular ground-truth decoders
//! they certify.
//!
//! Checks range over the windows reachable under the given policy and
//! initial distribution. Past windows are checked at anchors `m+1..=H`
//! (full-length windows); future windows at anchors `2..=H-n`, since the
//! first augmented observation carries no previous action.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AgentStateId, FmPomdp, Policy};
use crate::segment::{run_segment, SegmentSpec};
use crate::trajectory::{future_range, past_range, AugObs, Budget, WindowKind};

const MAX_REPORTED_CONFLICTS: usize = 64;

/// Which windows to check or tabulate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodeQuery {
    pub direction: WindowKind,
    pub span: usize,
    pub with_actions: bool,
    /// Inclusive anchor range; empty when `lo > hi`.
    pub anchors: (usize, usize),
}

impl DecodeQuery {
    pub fn past(model: &FmPomdp, m: usize) -> Self {
        Self { direction: WindowKind::Past, span: m, with_actions: true, anchors: (m + 1, model.horizon) }
    }

    pub fn future(model: &FmPomdp, n: usize) -> Self {
        Self {
            direction: WindowKind::Future,
            span: n,
            with_actions: true,
            anchors: (2, model.horizon.saturating_sub(n)),
        }
    }

    /// Full observation prefixes `o_{1:h}` (the all-history objectives).
    pub fn prefix(model: &FmPomdp, with_actions: bool, anchors: (usize, usize)) -> Self {
        Self { direction: WindowKind::Past, span: model.horizon, with_actions, anchors }
    }

    pub fn anchored(mut self, lo: usize, hi: usize) -> Self {
        self.anchors = (lo, hi);
        self
    }

    pub fn actions(mut self, with_actions: bool) -> Self {
        self.with_actions = with_actions;
        self
    }

    pub fn range(&self, h: usize, horizon: usize) -> (usize, usize) {
        match self.direction {
            WindowKind::Past => past_range(h, self.span),
            WindowKind::Future => future_range(h, self.span, horizon),
        }
    }
}

/// Two reachable windows with identical payloads anchored at different
/// agent states.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodeWitness {
    pub payload: Vec<AugObs>,
    pub first: AgentStateId,
    pub first_anchor: usize,
    pub second: AgentStateId,
    pub second_anchor: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodabilityVerdict {
    pub query: DecodeQuery,
    pub holds: bool,
    pub windows_checked: usize,
    pub witness: Option<DecodeWitness>,
    pub conflict_count: usize,
    /// Up to 64 conflicting payloads, in payload order.
    pub conflicts: Vec<DecodeWitness>,
}

type WindowSupport = BTreeMap<Vec<AugObs>, BTreeMap<AgentStateId, usize>>;

/// Every reachable payload with the agent states it is anchored at (and the
/// first anchor time where each pairing occurs).
fn window_support(model: &FmPomdp, policy: &Policy, query: &DecodeQuery, budget: Budget) -> Result<WindowSupport> {
    let mut out: WindowSupport = BTreeMap::new();
    let (lo, hi) = query.anchors;
    for h in lo.max(1)..=hi.min(model.horizon) {
        let (start, end) = query.range(h, model.horizon);
        let spec = SegmentSpec {
            start,
            end,
            record: (start..=end).collect(),
            with_actions: query.with_actions,
            action_time: None,
            mark_times: vec![h],
        };
        for (outcome, p) in run_segment(model, policy, &spec, budget)? {
            if p.is_positive() {
                out.entry(outcome.payload).or_default().entry(outcome.marks[0]).or_insert(h);
            }
        }
    }
    Ok(out)
}

pub fn check_decodability(model: &FmPomdp, policy: &Policy, query: DecodeQuery, budget: Budget) -> Result<DecodabilityVerdict> {
    let support = window_support(model, policy, &query, budget)?;
    let mut conflicts = Vec::new();
    let mut conflict_count = 0;
    for (payload, states) in &support {
        if states.len() > 1 {
            conflict_count += 1;
            if conflicts.len() < MAX_REPORTED_CONFLICTS {
                let mut it = states.iter();
                let (first, first_anchor) = it.next().map(|(s, h)| (*s, *h)).unwrap_or((AgentStateId(0), 0));
                let (second, second_anchor) = it.next().map(|(s, h)| (*s, *h)).unwrap_or((AgentStateId(0), 0));
                conflicts.push(DecodeWitness { payload: payload.clone(), first, first_anchor, second, second_anchor });
            }
        }
    }
    Ok(DecodabilityVerdict {
        query,
        holds: conflict_count == 0,
        windows_checked: support.len(),
        witness: conflicts.first().cloned(),
        conflict_count,
        conflicts,
    })
}

/// Whether an `m`-step augmented past window determines the agent state.
pub fn check_past_decodability(model: &FmPomdp, policy: &Policy, m: usize, budget: Budget) -> Result<DecodabilityVerdict> {
    check_decodability(model, policy, DecodeQuery::past(model, m), budget)
}

/// Whether an `n`-step augmented future window determines the agent state.
pub fn check_future_decodability(model: &FmPomdp, policy: &Policy, n: usize, budget: Budget) -> Result<DecodabilityVerdict> {
    check_decodability(model, policy, DecodeQuery::future(model, n), budget)
}

/// A total lookup table from reachable window payloads to agent states.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decoder {
    pub query: DecodeQuery,
    #[serde(serialize_with = "serialize_table")]
    pub table: BTreeMap<Vec<AugObs>, AgentStateId>,
}

fn serialize_table<S: serde::Serializer>(
    table: &BTreeMap<Vec<AugObs>, AgentStateId>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Entry<'a> {
        window: &'a [AugObs],
        state: usize,
    }
    serializer.collect_seq(table.iter().map(|(w, s)| Entry { window: w, state: s.0 }))
}

impl Decoder {
    pub fn decode(&self, payload: &[AugObs]) -> Option<AgentStateId> {
        self.table.get(payload).copied()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn states(&self) -> BTreeSet<AgentStateId> {
        self.table.values().copied().collect()
    }
}

pub fn derive_decoder_for(model: &FmPomdp, policy: &Policy, query: DecodeQuery, budget: Budget) -> Result<Decoder> {
    let support = window_support(model, policy, &query, budget)?;
    let mut table = BTreeMap::new();
    for (payload, states) in support {
        if states.len() > 1 {
            let labels: Vec<String> = states.keys().map(|s| model.agent_label(*s)).collect();
            let window: Vec<String> = payload.iter().map(|o| o.to_string()).collect();
            return Err(Error::NotDecodable(format!(
                "{:?} window [{}] is anchored at states {}",
                query.direction,
                window.join(" "),
                labels.join(", ")
            )));
        }
        if let Some((s, _)) = states.into_iter().next() {
            table.insert(payload, s);
        }
    }
    Ok(Decoder { query, table })
}

/// The ground-truth decoder for augmented windows of the given span and
/// direction, at the default anchor range.
pub fn derive_decoder(model: &FmPomdp, policy: &Policy, span: usize, direction: WindowKind, budget: Budget) -> Result<Decoder> {
    let query = match direction {
        WindowKind::Past => DecodeQuery::past(model, span),
        WindowKind::Future => DecodeQuery::future(model, span),
    };
    derive_decoder_for(model, policy, query, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{compose, counterexample_env, gridworld_env, make_exo_cycle, make_fj_counterexample, EmissionRule};
    use crate::model::ObsSymbol;
    use crate::trajectory::{enumerate_trajectories, past_window, PrevAction};

    #[test]
    fn fully_observed_decodes_from_current_observation() {
        let model = compose(&gridworld_env(2, 2), make_exo_cycle(1), EmissionRule::StateOnly);
        let policy = Policy::uniform(&model);
        assert!(check_past_decodability(&model, &policy, 0, Budget::default()).unwrap().holds);
        assert!(check_future_decodability(&model, &policy, 0, Budget::default()).unwrap().holds);
        let dec = derive_decoder(&model, &policy, 0, WindowKind::Past, Budget::default()).unwrap();
        for (payload, s) in &dec.table {
            assert_eq!(payload.len(), 1);
            assert_eq!(payload[0].obs, ObsSymbol::Content(s.0));
        }
    }

    #[test]
    fn counterexample_needs_three_steps_of_history() {
        let model = make_fj_counterexample();
        let policy = Policy::uniform(&model);
        assert!(check_past_decodability(&model, &policy, 3, Budget::default()).unwrap().holds);
        let v = check_past_decodability(&model, &policy, 2, Budget::default()).unwrap();
        assert!(!v.holds);
        let w = v.witness.unwrap();
        assert!(w.payload.iter().all(|o| o.obs == ObsSymbol::Blank));
        assert_ne!(w.first, w.second);
    }

    #[test]
    fn decoder_reproduces_latent_states() {
        let model = make_fj_counterexample();
        let policy = Policy::uniform(&model);
        let dec = derive_decoder(&model, &policy, 3, WindowKind::Past, Budget::default()).unwrap();
        for tr in enumerate_trajectories(&model, &policy, model.horizon, Budget::default()).unwrap() {
            for h in 4..=model.horizon {
                let w = past_window(&tr, h, 3, true);
                assert_eq!(dec.decode(&w.payload), Some(tr.at(h).s));
            }
        }
        assert!(matches!(
            derive_decoder(&model, &policy, 2, WindowKind::Past, Budget::default()),
            Err(Error::NotDecodable(_))
        ));
    }

    #[test]
    fn decoders_ignore_exogenous_labels() {
        let env = counterexample_env(4);
        let policy_for = |m: &FmPomdp| Policy::uniform(m);
        let a = compose(&env, make_exo_cycle(4), EmissionRule::MaskUnlessPhaseZero);
        // relabel the counter: phase p becomes (p + 2) mod 4 with the mask following phase 0 of the original
        let mut b = a.clone();
        let perm = [2usize, 3, 0, 1];
        let mut matrix = b.exo.matrix.clone();
        for x in 0..4 {
            for y in 0..4 {
                matrix[perm[x]][perm[y]] = a.exo.matrix[x][y].clone();
            }
        }
        b.exo.matrix = matrix;
        b.emission = crate::model::Emission::deterministic(8, 4, 8, |s, x| {
            if x.0 == perm[0] {
                ObsSymbol::Content(s.0)
            } else {
                ObsSymbol::Blank
            }
        });
        let da = derive_decoder(&a, &policy_for(&a), 3, WindowKind::Past, Budget::default()).unwrap();
        let db = derive_decoder(&b, &policy_for(&b), 3, WindowKind::Past, Budget::default()).unwrap();
        assert_eq!(da.table, db.table);
    }

    #[test]
    fn first_future_element_keeps_its_action() {
        let model = make_fj_counterexample();
        let policy = Policy::uniform(&model);
        let dec = derive_decoder(&model, &policy, 3, WindowKind::Future, Budget::default()).unwrap();
        assert!(dec.table.keys().all(|w| matches!(w[0].prev, PrevAction::Taken(_))));
        assert_eq!(dec.states().len(), 8);
    }
}

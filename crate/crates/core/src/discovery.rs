//! Multi-step-inverse state discovery and partition diagnostics.
//!
//! An objective's usable information at anchor `t` is a set of relations
//! over the offsets `k` whose classifier is not constant: rows
//! `P(a_t | first argument, s')` where `s'` is `s_{t+k}` (multi-step) or
//! `s_{t+1}` (one-step), read through ground-truth decoders. By default the
//! classifier does not see `k`, so each relation pools the offsets sharing a
//! semantics, weighted by how likely each offset makes the pair. A partition `φ`
//! of the agent states is *consistent* when every relation factors through
//! `(φ(s_t), φ(s'))`, the same encoder serving both sides. Refinements of a
//! consistent partition are consistent, so two states are separated exactly
//! when merging just that pair breaks some relation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::Serialize;

use crate::decode::{check_future_decodability, check_past_decodability, derive_decoder_for, DecodeQuery, Decoder};
use crate::error::{Error, Result};
use crate::inference::KeyDecoders;
use crate::model::{diameter, ActionId, AgentStateId, FmPomdp, Policy};
use crate::objective::{k_semantics, KSemantics, Objective};
use crate::prob::{Dist, Probability};
use crate::segment::{latent_marginals, run_segment, SegmentSpec};
use crate::trajectory::{AugObs, Budget};

/// Equivalence classes over a sorted element domain. Class ids are dense and
/// assigned by first occurrence in element order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Partition<K> {
    pub elements: Vec<K>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl<K: Ord + Clone> Partition<K> {
    /// Builds a partition from arbitrary class keys; elements are sorted and
    /// deduplicated (the first key seen for an element wins).
    pub fn from_keys<C: Ord>(pairs: impl IntoIterator<Item = (K, C)>) -> Self {
        let map: BTreeMap<K, C> = pairs.into_iter().fold(BTreeMap::new(), |mut acc, (k, c)| {
            acc.entry(k).or_insert(c);
            acc
        });
        let mut ids: BTreeMap<&C, usize> = BTreeMap::new();
        let mut labels = Vec::with_capacity(map.len());
        for c in map.values() {
            let next = ids.len();
            labels.push(*ids.entry(c).or_insert(next));
        }
        let class_count = ids.len();
        Self { elements: map.into_keys().collect(), labels, class_count }
    }

    pub fn discrete(elements: impl IntoIterator<Item = K>) -> Self {
        Self::from_keys(elements.into_iter().enumerate().map(|(i, k)| (k, i)))
    }

    pub fn class_of(&self, element: &K) -> Option<usize> {
        self.elements.binary_search(element).ok().map(|i| self.labels[i])
    }

    pub fn classes(&self) -> Vec<Vec<K>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (e, &c) in self.elements.iter().zip(&self.labels) {
            out[c].push(e.clone());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Refinement {
    /// Found merges truth classes and splits none.
    Coarser,
    /// Found splits truth classes and merges none.
    Finer,
    Equal,
    Incomparable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionVerdict {
    pub isomorphic: bool,
    pub refinement: Refinement,
    /// Truth class pairs sharing a found class.
    pub merged_pairs: Vec<(usize, usize)>,
    /// Found class pairs sharing a truth class.
    pub split_pairs: Vec<(usize, usize)>,
    /// Fraction of elements grouped correctly under the best class bijection.
    pub accuracy: Probability,
    /// `confusion[found][truth]` element counts.
    pub confusion: Vec<Vec<usize>>,
}

fn co_occurring_pairs(confusion: &[Vec<usize>], by_row: bool) -> Vec<(usize, usize)> {
    let (rows, cols) = (confusion.len(), confusion.first().map_or(0, Vec::len));
    let cell = |outer: usize, inner: usize| if by_row { confusion[outer][inner] } else { confusion[inner][outer] };
    let (n_outer, n_inner) = if by_row { (rows, cols) } else { (cols, rows) };
    let mut pairs = BTreeSet::new();
    for outer in 0..n_outer {
        let hit: Vec<usize> = (0..n_inner).filter(|&i| cell(outer, i) > 0).collect();
        for (x, &i) in hit.iter().enumerate() {
            for &j in &hit[x + 1..] {
                pairs.insert((i, j));
            }
        }
    }
    pairs.into_iter().collect()
}

pub fn compare_partitions<K: Ord + Clone>(found: &Partition<K>, truth: &Partition<K>) -> Result<PartitionVerdict> {
    if found.elements != truth.elements {
        return Err(Error::DomainMismatch(format!(
            "{} found elements against {} truth elements",
            found.elements.len(),
            truth.elements.len()
        )));
    }
    let mut confusion = vec![vec![0usize; truth.class_count]; found.class_count];
    for (f, t) in found.labels.iter().zip(&truth.labels) {
        confusion[*f][*t] += 1;
    }
    let merged_pairs = co_occurring_pairs(&confusion, true);
    let split_pairs = co_occurring_pairs(&confusion, false);
    let refinement = match (merged_pairs.is_empty(), split_pairs.is_empty()) {
        (true, true) => Refinement::Equal,
        (false, true) => Refinement::Coarser,
        (true, false) => Refinement::Finer,
        (false, false) => Refinement::Incomparable,
    };
    let size = found.class_count.max(truth.class_count);
    let accuracy = if found.elements.is_empty() {
        Probability::one()
    } else {
        let weights: Vec<Vec<i64>> = (0..size)
            .map(|f| (0..size).map(|t| confusion.get(f).and_then(|r| r.get(t)).map_or(0, |&c| c as i64)).collect())
            .collect();
        let matrix = Matrix::from_rows(weights).expect("square confusion matrix");
        let (best, _) = kuhn_munkres(&matrix);
        Probability::new(best, found.elements.len() as i64)
    };
    Ok(PartitionVerdict {
        isomorphic: refinement == Refinement::Equal,
        refinement,
        merged_pairs,
        split_pairs,
        accuracy,
        confusion,
    })
}

/// Confusion matrix as CSV: one row per found class, one column per truth
/// class.
pub fn confusion_csv(verdict: &PartitionVerdict) -> String {
    let cols = verdict.confusion.first().map_or(0, Vec::len);
    let mut out = String::from("found");
    for t in 0..cols {
        let _ = write!(out, ",truth_{t}");
    }
    out.push('\n');
    for (f, row) in verdict.confusion.iter().enumerate() {
        let _ = write!(out, "{f}");
        for c in row {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// Whether the classifier is told the offset `k`.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KVisibility {
    /// `k ~ U(1, K_max)` is drawn per example and not shown to the
    /// classifier; rows pool the offsets that share a semantics.
    #[default]
    Hidden,
    /// One relation per offset.
    Given,
}

/// Rows `P(a_t | s_t, s')` an objective's classifier provides, indexed by
/// `(s_t, s')`, pooled over `ks`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Relation {
    pub ks: Vec<usize>,
    pub semantics: KSemantics,
    #[serde(serialize_with = "serialize_rows")]
    pub rows: BTreeMap<(AgentStateId, AgentStateId), Dist>,
}

fn serialize_rows<S: serde::Serializer>(
    rows: &BTreeMap<(AgentStateId, AgentStateId), Dist>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Row<'a> {
        from: usize,
        to: usize,
        dist: &'a Dist,
    }
    serializer.collect_seq(rows.iter().map(|((a, b), d)| Row { from: a.0, to: b.0, dist: d }))
}

/// Decoder query for the objective's first argument.
fn first_query(model: &FmPomdp, objective: Objective, t: usize) -> DecodeQuery {
    let q = if objective.is_all_history() {
        DecodeQuery::prefix(model, objective.with_actions(), (t, t))
    } else {
        DecodeQuery::past(model, model.m).actions(objective.with_actions())
    };
    q.anchored(t, t)
}

/// Everything discovery needs about one objective at one anchor.
#[derive(Clone, Debug)]
pub struct Evidence {
    pub objective: Objective,
    pub t: usize,
    pub k_max: usize,
    pub visibility: KVisibility,
    /// Agent states reachable at `t` or appearing in a relation.
    pub states: Vec<AgentStateId>,
    pub relations: Vec<Relation>,
    /// Ground-truth decoder of the first argument at `t`.
    pub decoder: Decoder,
}

/// Collects the relations of `objective` for `k = 1..=k_max` at anchor `t`.
/// Offsets with constant classifiers contribute nothing. Fails with
/// `AssumptionViolated` when a decoder the objective relies on does not
/// exist or a row is not a function of the decoded states.
pub fn collect_evidence(
    model: &FmPomdp,
    policy: &Policy,
    objective: Objective,
    k_max: usize,
    t: usize,
    visibility: KVisibility,
    budget: Budget,
) -> Result<Evidence> {
    model.agent.ensure_deterministic()?;
    policy.ensure_endogenous()?;
    // both arguments must be decodable
    KeyDecoders::new(model, policy, objective, t, k_max, budget)?;
    let decoder = derive_decoder_for(model, policy, first_query(model, objective, t), budget).map_err(|e| match e {
        Error::NotDecodable(msg) => Error::AssumptionViolated(format!("{objective}: {msg}")),
        other => other,
    })?;
    let marginals = latent_marginals(model, policy, t)?;
    let mut states: BTreeSet<AgentStateId> = marginals[t - 1].keys().map(|(s, _, _)| *s).collect();

    let mut groups: Vec<(KSemantics, Vec<usize>)> = Vec::new();
    for k in 1..=k_max {
        let semantics = k_semantics(objective, k, model.m);
        if semantics == KSemantics::Constant {
            continue;
        }
        match groups.iter_mut().find(|(sem, _)| visibility == KVisibility::Hidden && *sem == semantics) {
            Some((_, ks)) => ks.push(k),
            None => groups.push((semantics, vec![k])),
        }
    }

    let mut relations = Vec::new();
    for (semantics, ks) in groups {
        let mut grouped: BTreeMap<(Vec<AugObs>, AgentStateId), (AgentStateId, Dist)> = BTreeMap::new();
        for &k in &ks {
            let second_time = if semantics == KSemantics::MultiStep { t + k } else { t + 1 };
            let ((a0, a1), _) = objective.ranges(t, k, model.m, model.n, model.horizon)?;
            let spec = SegmentSpec {
                start: a0,
                end: second_time,
                record: (a0..=a1).collect(),
                with_actions: objective.with_actions(),
                action_time: Some(t),
                mark_times: vec![t, second_time],
            };
            for (outcome, p) in run_segment(model, policy, &spec, budget)? {
                let a: ActionId = outcome.action.expect("action time inside segment");
                let entry = grouped
                    .entry((outcome.payload, outcome.marks[1]))
                    .or_insert_with(|| (outcome.marks[0], vec![Probability::zero(); model.action_count()]));
                entry.1[a.0] += p;
            }
        }
        let mut rows: BTreeMap<(AgentStateId, AgentStateId), Dist> = BTreeMap::new();
        for ((window, second), (first, weights)) in grouped {
            let mass: Probability = weights.iter().sum();
            if !mass.is_positive() {
                continue;
            }
            if decoder.decode(&window) != Some(first) {
                return Err(Error::AssumptionViolated(format!("{objective}: first argument does not decode at t = {t}")));
            }
            let dist: Dist = weights.iter().map(|w| w / &mass).collect();
            match rows.get(&(first, second)) {
                Some(existing) if *existing != dist => {
                    return Err(Error::AssumptionViolated(format!(
                        "{objective}, k in {ks:?}: rows at ({}, {}) depend on more than the agent states",
                        model.agent_label(first),
                        model.agent_label(second)
                    )));
                }
                Some(_) => {}
                None => {
                    rows.insert((first, second), dist);
                }
            }
            states.insert(first);
            states.insert(second);
        }
        relations.push(Relation { ks, semantics, rows });
    }
    Ok(Evidence { objective, t, k_max, visibility, states: states.into_iter().collect(), relations, decoder })
}

impl Evidence {
    /// Whether every relation factors through the class map.
    pub fn consistent(&self, class: &BTreeMap<AgentStateId, usize>) -> bool {
        self.relations.iter().all(|rel| {
            let mut seen: HashMap<(usize, usize), &Dist> = HashMap::new();
            rel.rows.iter().all(|((s, s2), d)| {
                let key = (class[s], class[s2]);
                match seen.get(&key) {
                    Some(prev) => *prev == d,
                    None => {
                        seen.insert(key, d);
                        true
                    }
                }
            })
        })
    }

    fn identity_classes(&self) -> BTreeMap<AgentStateId, usize> {
        self.states.iter().enumerate().map(|(i, s)| (*s, i)).collect()
    }

    pub fn separated(&self, a: AgentStateId, b: AgentStateId) -> bool {
        let mut class = self.identity_classes();
        let ca = class[&a];
        class.insert(b, ca);
        !self.consistent(&class)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SeparationMatrix {
    pub states: Vec<AgentStateId>,
    pub labels: Vec<String>,
    /// `separated[i][j]`: merging only `states[i]` and `states[j]` breaks a
    /// relation.
    pub separated: Vec<Vec<bool>>,
}

impl SeparationMatrix {
    pub fn from_evidence(model: &FmPomdp, ev: &Evidence) -> Self {
        let n = ev.states.len();
        let mut separated = vec![vec![false; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let s = ev.separated(ev.states[i], ev.states[j]);
                separated[i][j] = s;
                separated[j][i] = s;
            }
        }
        Self { states: ev.states.clone(), labels: ev.states.iter().map(|s| model.agent_label(*s)).collect(), separated }
    }

    pub fn all_separated(&self) -> bool {
        self.unseparated_pairs().is_empty()
    }

    pub fn unseparated_pairs(&self) -> Vec<(AgentStateId, AgentStateId)> {
        let n = self.states.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if !self.separated[i][j] {
                    out.push((self.states[i], self.states[j]));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("state");
        for l in &self.labels {
            let _ = write!(out, ",\"{l}\"");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.separated) {
            let _ = write!(out, "\"{l}\"");
            for b in row {
                out.push_str(if *b { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

pub fn separation_matrix(
    model: &FmPomdp,
    policy: &Policy,
    objective: Objective,
    k_max: usize,
    t: usize,
    visibility: KVisibility,
    budget: Budget,
) -> Result<SeparationMatrix> {
    let ev = collect_evidence(model, policy, objective, k_max, t, visibility, budget)?;
    Ok(SeparationMatrix::from_evidence(model, &ev))
}

/// Forward rows `s' ↦ P(a_t | s, s')` and backward columns
/// `s_0 ↦ P(a_t | s_0, s)` of one state under one relation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct RowGroup {
    pub ks: Vec<usize>,
    pub forward: Vec<(AgentStateId, Dist)>,
    pub backward: Vec<(AgentStateId, Dist)>,
}

pub type RowFamily = Vec<RowGroup>;

/// The canonical row family of every agent state.
pub fn row_families(ev: &Evidence) -> BTreeMap<AgentStateId, RowFamily> {
    ev.states
        .iter()
        .map(|&s| {
            let family = ev
                .relations
                .iter()
                .map(|rel| RowGroup {
                    ks: rel.ks.clone(),
                    forward: rel.rows.iter().filter(|((a, _), _)| *a == s).map(|((_, b), d)| (*b, d.clone())).collect(),
                    backward: rel.rows.iter().filter(|((_, b), _)| *b == s).map(|((a, _), d)| (*a, d.clone())).collect(),
                })
                .collect();
            (s, family)
        })
        .collect()
}

/// The row family of a first-argument window at `t`, through the
/// ground-truth decoder.
pub fn ik_row_family(
    model: &FmPomdp,
    policy: &Policy,
    objective: Objective,
    k_max: usize,
    t: usize,
    window: &[AugObs],
    visibility: KVisibility,
    budget: Budget,
) -> Result<RowFamily> {
    let ev = collect_evidence(model, policy, objective, k_max, t, visibility, budget)?;
    let s = ev
        .decoder
        .decode(window)
        .ok_or_else(|| Error::AssumptionViolated(format!("window is not reachable at t = {t}")))?;
    Ok(row_families(&ev).remove(&s).unwrap_or_default())
}

/// Number of distinct row families over the states of `ev`.
pub fn distinct_families(ev: &Evidence) -> usize {
    row_families(ev).into_values().collect::<BTreeSet<_>>().len()
}

#[derive(Clone, Debug, Serialize)]
pub struct Discovery {
    pub objective: Objective,
    pub t: usize,
    pub k_max: usize,
    pub visibility: KVisibility,
    /// Offsets that contributed a relation, grouped as pooled.
    pub informative_ks: Vec<(Vec<usize>, KSemantics)>,
    pub state_partition: Partition<AgentStateId>,
    pub window_partition: Partition<Vec<AugObs>>,
    pub truth: Partition<Vec<AugObs>>,
    pub verdict: PartitionVerdict,
    pub separation: SeparationMatrix,
}

/// Greedy merging in lexicographic pair order, keeping every merge that
/// stays consistent.
pub fn greedy_partition(ev: &Evidence) -> Partition<AgentStateId> {
    let mut class = ev.identity_classes();
    for (i, &a) in ev.states.iter().enumerate() {
        for &b in &ev.states[i + 1..] {
            let (ca, cb) = (class[&a], class[&b]);
            if ca == cb {
                continue;
            }
            let mut trial = class.clone();
            for c in trial.values_mut() {
                if *c == cb {
                    *c = ca;
                }
            }
            if ev.consistent(&trial) {
                class = trial;
            }
        }
    }
    Partition::from_keys(class)
}

/// Discovers a state abstraction from the objective's usable information,
/// lifts it to the first-argument windows reachable at `t` and compares it
/// with the ground-truth agent state of each window.
pub fn discover_partition(
    model: &FmPomdp,
    policy: &Policy,
    objective: Objective,
    k_max: usize,
    t: usize,
    visibility: KVisibility,
    budget: Budget,
) -> Result<Discovery> {
    let ev = collect_evidence(model, policy, objective, k_max, t, visibility, budget)?;
    let state_partition = greedy_partition(&ev);
    let window_partition = Partition::from_keys(
        ev.decoder.table.iter().map(|(w, s)| (w.clone(), state_partition.class_of(s).unwrap_or(usize::MAX))),
    );
    let truth = Partition::from_keys(ev.decoder.table.iter().map(|(w, s)| (w.clone(), *s)));
    let verdict = compare_partitions(&window_partition, &truth)?;
    Ok(Discovery {
        objective,
        t,
        k_max,
        visibility,
        informative_ks: ev.relations.iter().map(|r| (r.ks.clone(), r.semantics)).collect(),
        separation: SeparationMatrix::from_evidence(model, &ev),
        state_partition,
        window_partition,
        truth,
        verdict,
    })
}

/// The conditions under which MIK+A discovery is expected to recover the
/// agent states exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RecoveryPreconditions {
    pub deterministic: bool,
    /// `None` when some state cannot reach another.
    pub diameter: Option<usize>,
    pub past_decodable: bool,
    pub future_decodable: bool,
    /// Some state has two actions with different successors; without it no
    /// inverse model carries information.
    pub actions_effective: bool,
    pub policy_endogenous: bool,
    pub k_max_covers_diameter: bool,
    pub horizon_sufficient: bool,
}

impl RecoveryPreconditions {
    pub fn hold(&self) -> bool {
        self.deterministic
            && self.diameter.is_some()
            && self.past_decodable
            && self.future_decodable
            && self.actions_effective
            && self.policy_endogenous
            && self.k_max_covers_diameter
            && self.horizon_sufficient
    }
}

pub fn recovery_preconditions(model: &FmPomdp, policy: &Policy, k_max: usize, budget: Budget) -> Result<RecoveryPreconditions> {
    let deterministic = model.agent.ensure_deterministic().is_ok();
    let d = diameter(&model.agent).ok();
    let actions_effective = model.agent_states().any(|s| {
        let succ: BTreeSet<&[AgentStateId]> = model.actions().map(|a| model.agent.successors(s, a)).collect();
        succ.len() > 1
    });
    Ok(RecoveryPreconditions {
        deterministic,
        diameter: d,
        past_decodable: check_past_decodability(model, policy, model.m, budget)?.holds,
        future_decodable: check_future_decodability(model, policy, model.n, budget)?.holds,
        actions_effective,
        policy_endogenous: policy.is_endogenous(),
        k_max_covers_diameter: d.is_some_and(|d| k_max >= d),
        horizon_sufficient: model.horizon > model.m + model.n + k_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{make_fj_counterexample, make_fj_counterexample_observed};

    fn p(labels: &[usize]) -> Partition<usize> {
        Partition::from_keys(labels.iter().enumerate().map(|(i, l)| (i, *l)))
    }

    #[test]
    fn labels_are_dense_by_first_occurrence() {
        let q = p(&[7, 3, 7, 9]);
        assert_eq!(q.labels, vec![0, 1, 0, 2]);
        assert_eq!(q.class_count, 3);
        assert_eq!(q.classes(), vec![vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn verdicts_on_constructed_partitions() {
        let truth = p(&[0, 1, 2, 3, 4, 5, 6, 7]);
        let v = compare_partitions(&truth, &truth).unwrap();
        assert!(v.isomorphic && v.accuracy.is_one());
        let relabeled = p(&[5, 4, 3, 2, 1, 0, 7, 6]);
        assert!(compare_partitions(&relabeled, &truth).unwrap().isomorphic);
        let halves = p(&[0, 0, 1, 1, 2, 2, 3, 3]);
        let v = compare_partitions(&halves, &truth).unwrap();
        assert_eq!(v.refinement, Refinement::Coarser);
        assert_eq!(v.merged_pairs.len(), 4);
        assert_eq!(v.accuracy, Probability::new(1, 2));
        let v = compare_partitions(&truth, &halves).unwrap();
        assert_eq!(v.refinement, Refinement::Finer);
        assert_eq!(v.split_pairs.len(), 4);
        let crossed = p(&[0, 1, 1, 2, 2, 3, 3, 0]);
        assert_eq!(compare_partitions(&crossed, &halves).unwrap().refinement, Refinement::Incomparable);
        let short = p(&[0, 1]);
        assert!(matches!(compare_partitions(&short, &truth), Err(Error::DomainMismatch(_))));
    }

    #[test]
    fn accuracy_uses_the_best_bijection() {
        let truth = p(&[0, 0, 0, 1, 1, 2]);
        let found = p(&[0, 0, 1, 1, 1, 1]);
        // best: found 0 -> truth 0 (2), found 1 -> truth 1 (2)
        assert_eq!(compare_partitions(&found, &truth).unwrap().accuracy, Probability::new(4, 6));
        let csv = confusion_csv(&compare_partitions(&found, &truth).unwrap());
        assert_eq!(csv, "found,truth_0,truth_1,truth_2\n0,2,0,0\n1,1,2,1\n");
    }

    const H: KVisibility = KVisibility::Hidden;

    #[test]
    fn mik_a_separates_all_counterexample_states() {
        let model = make_fj_counterexample();
        let policy = Policy::uniform(&model);
        let ev = collect_evidence(&model, &policy, Objective::MikA, 3, 4, H, Budget::default()).unwrap();
        assert_eq!(ev.relations.len(), 1);
        assert_eq!(ev.relations[0].ks, vec![1, 2, 3]);
        assert_eq!(distinct_families(&ev), 8);
        let d = discover_partition(&model, &policy, Objective::MikA, 3, 4, H, Budget::default()).unwrap();
        assert_eq!(d.state_partition.class_count, 8);
        assert!(d.verdict.isomorphic && d.separation.all_separated());
    }

    #[test]
    fn mik_a_with_one_step_keeps_same_action_states_together() {
        // at k = 1 the row only reveals which a_t moved s_t to s_{t+1}; states
        // whose successor sets coincide stay merged
        let model = make_fj_counterexample();
        let policy = Policy::uniform(&model);
        let d = discover_partition(&model, &policy, Objective::MikA, 1, 4, H, Budget::default()).unwrap();
        assert!(d.state_partition.class_count < 8);
        assert!(!d.separation.all_separated());
        assert_eq!(d.verdict.refinement, Refinement::Coarser);
    }

    #[test]
    fn given_offsets_admit_a_parity_abstraction() {
        // with k shown, pairs at a fixed k have displacement parity of k, so
        // (floor(s_A / 2), s_B) is consistent
        let model = make_fj_counterexample();
        let policy = Policy::uniform(&model);
        let ev = collect_evidence(&model, &policy, Objective::MikA, 3, 4, KVisibility::Given, Budget::default()).unwrap();
        assert_eq!(ev.relations.len(), 3);
        let class: BTreeMap<AgentStateId, usize> = ev
            .states
            .iter()
            .map(|&s| {
                let (a, b) = crate::gallery::counterexample_state(4, s);
                (s, a / 2 * 2 + usize::from(b > 0))
            })
            .collect();
        assert!(ev.consistent(&class));
        assert!(!ev.consistent(&ev.identity_classes().into_iter().map(|(s, _)| (s, 0)).collect()));
    }

    #[test]
    fn forward_jump_with_actions_learns_nothing() {
        let model = make_fj_counterexample();
        let policy = Policy::uniform(&model);
        let ev = collect_evidence(&model, &policy, Objective::FjA, 3, 4, H, Budget::default()).unwrap();
        assert!(ev.relations.is_empty());
        assert_eq!(distinct_families(&ev), 1);
        let d = discover_partition(&model, &policy, Objective::FjA, 3, 4, H, Budget::default()).unwrap();
        assert_eq!(d.state_partition.class_count, 1);
        assert_eq!(d.verdict.refinement, Refinement::Coarser);
    }

    #[test]
    fn one_step_objectives_stay_coarser() {
        let model = make_fj_counterexample_observed();
        let policy = Policy::uniform(&model);
        for objective in [Objective::Ah, Objective::Fj] {
            let d = discover_partition(&model, &policy, objective, 3, 4, H, Budget::default()).unwrap();
            assert_eq!(d.verdict.refinement, Refinement::Coarser, "{objective}");
            assert!(!d.separation.all_separated());
        }
    }
}

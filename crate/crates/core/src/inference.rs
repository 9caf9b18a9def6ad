//! Exact Bayes-optimal classifiers, latent multi-step inverse models and the
//! checks that tie them together.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::decode::{derive_decoder_for, DecodeQuery, Decoder};
use crate::error::{Error, Result};
use crate::model::{ActionId, AgentStateId, ExoStateId, FmPomdp, ObsSymbol, Policy};
use crate::objective::{k_semantics, ConditioningKey, KSemantics, Objective};
use crate::prob::{support, Dist, Probability};
use crate::segment::{latent_marginals, run_segment, SegmentSpec};
use crate::trajectory::{past_range, Budget, PrevAction};

const MAX_REPORTED: usize = 64;

/// `P_π(a_t = · | s_t = from, s_{t+k} = to)` on one reachable triple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InverseRow {
    pub k: usize,
    pub from: AgentStateId,
    pub to: AgentStateId,
    /// `P_π(s_{t+k} = to | s_t = from)`.
    pub reach: Probability,
    pub dist: Dist,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatentInverse {
    pub k_max: usize,
    /// `kernel[k][s][s']` for `k = 0..=k_max`.
    pub kernel: Vec<Vec<Dist>>,
    /// Reachable triples sorted by `(k, from, to)`.
    pub rows: Vec<InverseRow>,
}

impl LatentInverse {
    pub fn get(&self, from: AgentStateId, to: AgentStateId, k: usize) -> Option<&Dist> {
        self.rows
            .binary_search_by(|r| (r.k, r.from, r.to).cmp(&(k, from, to)))
            .ok()
            .map(|i| &self.rows[i].dist)
    }

    pub fn rows_for(&self, k: usize) -> impl Iterator<Item = &InverseRow> {
        self.rows.iter().filter(move |r| r.k == k)
    }
}

/// Multi-step inverse models of the agent chain alone. The exogenous chain
/// never enters; the policy must be endogenous.
pub fn latent_inverse(model: &FmPomdp, policy: &Policy, k_max: usize) -> Result<LatentInverse> {
    if k_max == 0 {
        return Err(Error::OutOfRange("k_max must be at least 1".into()));
    }
    model.agent.ensure_deterministic()?;
    policy.ensure_endogenous()?;
    let ns = model.agent_count();
    let mut kernel: Vec<Vec<Dist>> = Vec::with_capacity(k_max + 1);
    kernel.push(
        (0..ns)
            .map(|s| (0..ns).map(|j| if j == s { Probability::one() } else { Probability::zero() }).collect())
            .collect(),
    );
    for k in 1..=k_max {
        let prev = &kernel[k - 1];
        let next: Vec<Dist> = model
            .agent_states()
            .map(|s| {
                let mut row = vec![Probability::zero(); ns];
                let pi = policy.agent_row(s);
                for a in support(pi).map(ActionId) {
                    let ns1 = model.agent.step(s, a);
                    for (j, p) in prev[ns1.0].iter().enumerate() {
                        if p.is_positive() {
                            row[j] += &pi[a.0] * p;
                        }
                    }
                }
                row
            })
            .collect();
        kernel.push(next);
    }
    let mut rows = Vec::new();
    for k in 1..=k_max {
        for s in model.agent_states() {
            for to in model.agent_states() {
                let reach = kernel[k][s.0][to.0].clone();
                if !reach.is_positive() {
                    continue;
                }
                let pi = policy.agent_row(s);
                let dist = model
                    .actions()
                    .map(|a| {
                        let via = &kernel[k - 1][model.agent.step(s, a).0][to.0];
                        &(&pi[a.0] * via) / &reach
                    })
                    .collect();
                rows.push(InverseRow { k, from: s, to, reach, dist });
            }
        }
    }
    Ok(LatentInverse { k_max, kernel, rows })
}

/// One conditioning key with its probability mass and the exact action
/// distribution given the key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KeyedDist {
    pub key: ConditioningKey,
    pub mass: Probability,
    pub dist: Dist,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionalActionDist {
    pub objective: Objective,
    /// `0` for the pooled diagnostic.
    pub t: usize,
    pub k: usize,
    /// Sorted by key; zero-mass keys are absent.
    pub entries: Vec<KeyedDist>,
}

impl ConditionalActionDist {
    pub fn get(&self, key: &ConditioningKey) -> Option<&KeyedDist> {
        self.entries.binary_search_by(|e| e.key.cmp(key)).ok().map(|i| &self.entries[i])
    }

    pub fn total_mass(&self) -> Probability {
        self.entries.iter().map(|e| &e.mass).sum()
    }
}

fn normalize(weights: Vec<Probability>) -> (Probability, Dist) {
    let mass: Probability = weights.iter().sum();
    let dist = weights.iter().map(|w| w / &mass).collect();
    (mass, dist)
}

/// Exact `P_π(a_t | key)` for every reachable key of `objective` at `(t, k)`.
pub fn bayes_classifier(
    model: &FmPomdp,
    policy: &Policy,
    objective: Objective,
    t: usize,
    k: usize,
    budget: Budget,
) -> Result<ConditionalActionDist> {
    let times = ConditioningKey::union_times(objective, t, k, model)?;
    let spec = SegmentSpec {
        start: times[0],
        end: *times.last().unwrap_or(&t),
        record: times.clone(),
        with_actions: objective.with_actions(),
        action_time: Some(t),
        mark_times: vec![],
    };
    let joint = run_segment(model, policy, &spec, budget)?;
    let mut grouped: BTreeMap<Vec<_>, Vec<Probability>> = BTreeMap::new();
    for (outcome, p) in joint {
        let a = outcome.action.expect("action time inside segment");
        grouped.entry(outcome.payload).or_insert_with(|| vec![Probability::zero(); model.action_count()])[a.0] += p;
    }
    let mut entries = Vec::with_capacity(grouped.len());
    for (payload, weights) in grouped {
        let (mass, dist) = normalize(weights);
        if mass.is_positive() {
            let key = ConditioningKey::from_union(objective, t, k, model, &times, &payload)?;
            entries.push(KeyedDist { key, mass, dist });
        }
    }
    entries.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(ConditionalActionDist { objective, t, k, entries })
}

/// Diagnostic: keys from every valid anchor `t`, with anchor positions
/// erased and masses averaged uniformly over anchors.
pub fn bayes_classifier_pooled(
    model: &FmPomdp,
    policy: &Policy,
    objective: Objective,
    k: usize,
    budget: Budget,
) -> Result<ConditionalActionDist> {
    let anchors: Vec<usize> = (1..=model.horizon)
        .filter(|&t| objective.ranges(t, k, model.m, model.n, model.horizon).is_ok())
        .collect();
    if anchors.is_empty() {
        return Err(Error::OutOfRange(format!("no anchor admits k = {k} for {objective}")));
    }
    let share = Probability::new(1, anchors.len() as i64);
    let mut pooled: BTreeMap<ConditioningKey, Vec<Probability>> = BTreeMap::new();
    for t in anchors {
        for e in bayes_classifier(model, policy, objective, t, k, budget)?.entries {
            let key = ConditioningKey { t: 0, first_start: 0, second_start: 0, ..e.key };
            let slot = pooled.entry(key).or_insert_with(|| vec![Probability::zero(); model.action_count()]);
            let w = &e.mass * &share;
            for (s, p) in slot.iter_mut().zip(&e.dist) {
                *s += &w * p;
            }
        }
    }
    let entries = pooled
        .into_iter()
        .map(|(key, weights)| {
            let (mass, dist) = normalize(weights);
            KeyedDist { key, mass, dist }
        })
        .collect();
    Ok(ConditionalActionDist { objective, t: 0, k, entries })
}

/// Ground-truth decoders for the two arguments of an objective's keys.
pub(crate) struct KeyDecoders {
    pub first: Decoder,
    /// Future decoder for the masked objectives; the first-argument decoder
    /// is reused otherwise.
    pub future: Option<Decoder>,
}

impl KeyDecoders {
    pub fn new(
        model: &FmPomdp,
        policy: &Policy,
        objective: Objective,
        t: usize,
        k_max: usize,
        budget: Budget,
    ) -> Result<Self> {
        let wa = objective.with_actions();
        let hi = (t + k_max).min(model.horizon);
        let (first, future) = if objective.is_all_history() {
            (DecodeQuery::prefix(model, wa, (t, hi)), None)
        } else if objective.is_forward_jump() {
            (DecodeQuery::past(model, model.m).actions(wa).anchored(t, hi), None)
        } else {
            let fut_hi = hi.min(model.horizon.saturating_sub(model.n));
            (
                DecodeQuery::past(model, model.m).actions(wa).anchored(t, t),
                Some(DecodeQuery::future(model, model.n).actions(wa).anchored(t + 1, fut_hi)),
            )
        };
        let wrap = |e: Error| match e {
            Error::NotDecodable(msg) => Error::AssumptionViolated(format!("{objective}: {msg}")),
            other => other,
        };
        let first = derive_decoder_for(model, policy, first, budget).map_err(wrap)?;
        let future = match future {
            Some(q) => Some(derive_decoder_for(model, policy, q, budget).map_err(wrap)?),
            None => None,
        };
        Ok(Self { first, future })
    }

    fn first_state(&self, key: &ConditioningKey) -> Option<AgentStateId> {
        self.first.decode(&key.first)
    }

    /// The state the closed form pairs with `s_t`: `s_{t+k}` for multi-step
    /// semantics, `s_{t+1}` for one-step semantics.
    fn second_state(&self, key: &ConditioningKey, semantics: KSemantics, m: usize) -> Option<AgentStateId> {
        match semantics {
            KSemantics::Constant => None,
            KSemantics::MultiStep => match &self.future {
                Some(f) => f.decode(&key.second),
                None => self.first.decode(&key.second),
            },
            KSemantics::OneStep => {
                let window = if key.objective.is_all_history() {
                    key.span(1, key.t + 1)?
                } else {
                    let (lo, hi) = past_range(key.t + 1, m);
                    key.span(lo, hi)?
                };
                self.first.decode(&window)
            }
        }
    }
}

/// The action `a_t` carried by a key, if any argument covers `t + 1` with
/// actions.
fn key_action(key: &ConditioningKey) -> Option<ActionId> {
    match key.obs_at(key.t + 1)?.prev {
        PrevAction::Taken(a) => Some(a),
        _ => None,
    }
}

fn point_mass(len: usize, a: ActionId) -> Dist {
    (0..len).map(|i| if i == a.0 { Probability::one() } else { Probability::zero() }).collect()
}

fn max_abs_diff(a: &[Probability], b: &[Probability]) -> Probability {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(y)).max().unwrap_or_else(Probability::zero)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IdentityViolation {
    pub key: ConditioningKey,
    pub first_state: Option<AgentStateId>,
    pub second_state: Option<AgentStateId>,
    pub observed: Dist,
    pub expected: Option<Dist>,
    pub discrepancy: Probability,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IdentityCheck {
    pub k: usize,
    pub semantics: KSemantics,
    pub keys: usize,
    pub max_discrepancy: Probability,
    pub violation_count: usize,
    /// At most 64, in key order.
    pub violations: Vec<IdentityViolation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IdentityReport {
    pub objective: Objective,
    pub t: usize,
    pub k_max: usize,
    pub checks: Vec<IdentityCheck>,
    pub max_discrepancy: Probability,
    pub passed: bool,
}

/// Compares every Bayes classifier row of `objective` at anchor `t`,
/// `k = 1..=k_max`, with its closed form evaluated through ground-truth
/// decoders: the multi-step inverse `I(s_t, s_{t+k}, k)`, the one-step
/// inverse `I(s_t, s_{t+1}, 1)`, or the point mass on the `a_t` the key
/// already contains.
pub fn verify_identity(
    model: &FmPomdp,
    policy: &Policy,
    objective: Objective,
    k_max: usize,
    t: usize,
    budget: Budget,
) -> Result<IdentityReport> {
    let decoders = KeyDecoders::new(model, policy, objective, t, k_max, budget)?;
    let li = latent_inverse(model, policy, k_max)?;
    let na = model.action_count();
    let mut checks = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let semantics = k_semantics(objective, k, model.m);
        let cad = bayes_classifier(model, policy, objective, t, k, budget)?;
        let mut check = IdentityCheck {
            k,
            semantics,
            keys: cad.entries.len(),
            max_discrepancy: Probability::zero(),
            violation_count: 0,
            violations: Vec::new(),
        };
        for e in &cad.entries {
            let first = decoders.first_state(&e.key);
            let second = decoders.second_state(&e.key, semantics, model.m);
            let expected: Option<Dist> = match semantics {
                KSemantics::Constant => key_action(&e.key).map(|a| point_mass(na, a)),
                KSemantics::MultiStep => first.zip(second).and_then(|(s, s2)| li.get(s, s2, k).cloned()),
                KSemantics::OneStep => first.zip(second).and_then(|(s, s2)| li.get(s, s2, 1).cloned()),
            };
            let discrepancy = match &expected {
                Some(x) => max_abs_diff(&e.dist, x),
                None => Probability::one(),
            };
            if discrepancy.is_positive() {
                check.violation_count += 1;
                if check.violations.len() < MAX_REPORTED {
                    check.violations.push(IdentityViolation {
                        key: e.key.clone(),
                        first_state: first,
                        second_state: second,
                        observed: e.dist.clone(),
                        expected,
                        discrepancy: discrepancy.clone(),
                    });
                }
            }
            if discrepancy > check.max_discrepancy {
                check.max_discrepancy = discrepancy;
            }
        }
        checks.push(check);
    }
    let max_discrepancy = checks.iter().map(|c| c.max_discrepancy.clone()).max().unwrap_or_else(Probability::zero);
    Ok(IdentityReport { objective, t, k_max, passed: max_discrepancy.is_zero(), max_discrepancy, checks })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecouplingWitness {
    pub s: AgentStateId,
    pub xi: ExoStateId,
    pub a: ActionId,
    pub s_next: AgentStateId,
    pub xi_next: ExoStateId,
    pub obs: ObsSymbol,
    pub lhs: Probability,
    pub rhs: Probability,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecouplingReport {
    pub h: usize,
    pub policy_endogenous: bool,
    pub initial_factorized: bool,
    /// Conditioning triples `(s, ξ, a)` examined.
    pub cases: usize,
    pub max_residual: Probability,
    pub witness: Option<DecouplingWitness>,
    pub passed: bool,
}

fn initial_factorized(model: &FmPomdp) -> bool {
    let (ms, mx) = (model.mu_s(), model.mu_xi());
    model
        .agent_states()
        .all(|s| model.exo_states().all(|x| model.initial[s.0][x.0] == &ms[s.0] * &mx[x.0]))
}

/// For every reachable latent `(s, ξ)` and supported action `a`, compares the
/// exact `h`-step joint of `(s', ξ', o')` with
/// `q(o' | s', ξ') P(s' | s, ξ, a, h) P(ξ' | s, ξ, a, h)`, both marginals taken
/// from the same joint. The residual vanishes exactly when `s'` and `ξ'` are
/// conditionally independent.
pub fn verify_decoupling(model: &FmPomdp, policy: &Policy, h: usize) -> Result<DecouplingReport> {
    if h == 0 {
        return Err(Error::OutOfRange("h must be at least 1".into()));
    }
    Ok(verify_decoupling_upto(model, policy, h)?.pop().expect("h >= 1"))
}

/// `verify_decoupling` for every `h` in `1..=h_max`, propagating each case
/// once.
pub fn verify_decoupling_upto(model: &FmPomdp, policy: &Policy, h_max: usize) -> Result<Vec<DecouplingReport>> {
    model.agent.ensure_deterministic()?;
    let mut latents: BTreeSet<(AgentStateId, ExoStateId)> = BTreeSet::new();
    for marginal in latent_marginals(model, policy, model.horizon)? {
        latents.extend(marginal.keys().map(|(s, x, _)| (*s, *x)));
    }
    let endogenous = policy.is_endogenous();
    let factorized = initial_factorized(model);
    let mut reports: Vec<DecouplingReport> = (1..=h_max)
        .map(|h| DecouplingReport {
            h,
            policy_endogenous: endogenous,
            initial_factorized: factorized,
            cases: 0,
            max_residual: Probability::zero(),
            witness: None,
            passed: true,
        })
        .collect();
    for (s, xi) in latents {
        let row = policy.row(s, xi);
        for a in support(row).map(ActionId) {
            let mut joint: BTreeMap<(AgentStateId, ExoStateId), Probability> = BTreeMap::new();
            let s1 = model.agent.step(s, a);
            for x1 in support(model.exo.row(xi)) {
                joint.insert((s1, ExoStateId(x1)), model.exo.row(xi)[x1].clone());
            }
            for (step, report) in reports.iter_mut().enumerate() {
                if step > 0 {
                    let mut next: BTreeMap<(AgentStateId, ExoStateId), Probability> = BTreeMap::new();
                    for ((s0, x0), p) in &joint {
                        let pi = policy.row(*s0, *x0);
                        let xrow = model.exo.row(*x0);
                        for b in support(pi).map(ActionId) {
                            let sn = model.agent.step(*s0, b);
                            for xn in support(xrow) {
                                *next.entry((sn, ExoStateId(xn))).or_default() += &(p * &pi[b.0]) * &xrow[xn];
                            }
                        }
                    }
                    joint = next;
                }
                report.cases += 1;
                residual_into(model, &joint, (s, xi, a), report);
            }
        }
    }
    for r in &mut reports {
        r.passed = r.max_residual.is_zero();
    }
    Ok(reports)
}

fn residual_into(
    model: &FmPomdp,
    joint: &BTreeMap<(AgentStateId, ExoStateId), Probability>,
    (s, xi, a): (AgentStateId, ExoStateId, ActionId),
    report: &mut DecouplingReport,
) {
    let mut ms: BTreeMap<AgentStateId, Probability> = BTreeMap::new();
    let mut mx: BTreeMap<ExoStateId, Probability> = BTreeMap::new();
    for ((sn, xn), p) in joint {
        *ms.entry(*sn).or_default() += p;
        *mx.entry(*xn).or_default() += p;
    }
    for (sn, ps) in &ms {
        for (xn, px) in &mx {
            let pj = joint.get(&(*sn, *xn)).cloned().unwrap_or_default();
            let product = ps * px;
            for (o, q) in model.emission.support(*sn, *xn) {
                let lhs = &pj * q;
                let rhs = &product * q;
                let r = lhs.abs_diff(&rhs);
                if r > report.max_residual {
                    report.max_residual = r;
                    report.witness = Some(DecouplingWitness { s, xi, a, s_next: *sn, xi_next: *xn, obs: o, lhs, rhs });
                }
            }
        }
    }
}

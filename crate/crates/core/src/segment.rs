//! Exact forward dynamic programme over trajectory segments.
//!
//! Bayes classifiers and decodability checks only depend on the observations
//! inside a few windows, the action at one time step and the agent state at
//! a few anchors. Instead of enumerating whole trajectories, the engine
//! starts from the exact latent marginal at the first time it needs and
//! carries "particles" `(recorded outcome so far, s, ξ, previous action)`,
//! merging equal particles after every step. The result is the exact joint
//! distribution of the recorded outcome.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::model::{ActionId, AgentStateId, ExoStateId, FmPomdp, Policy};
use crate::prob::{support, Probability};
use crate::trajectory::{AugObs, Budget, PrevAction};

pub(crate) type LatentKey = (AgentStateId, ExoStateId, PrevAction);

/// Exact marginals over `(s, ξ, a_{t-1})` for `t = 1..=upto`.
pub(crate) fn latent_marginals(
    model: &FmPomdp,
    policy: &Policy,
    upto: usize,
) -> Result<Vec<BTreeMap<LatentKey, Probability>>> {
    model.agent.ensure_deterministic()?;
    let mut out = Vec::with_capacity(upto);
    let mut cur = BTreeMap::new();
    for s in model.agent_states() {
        for x in model.exo_states() {
            let p = &model.initial[s.0][x.0];
            if p.is_positive() {
                cur.insert((s, x, PrevAction::Start), p.clone());
            }
        }
    }
    for t in 1..=upto {
        if t > 1 {
            let mut next: BTreeMap<LatentKey, Probability> = BTreeMap::new();
            for ((s, x, _), p) in &cur {
                let row = policy.row(*s, *x);
                for a in support(row).map(ActionId) {
                    let pa = p * &row[a.0];
                    let ns = model.agent.step(*s, a);
                    let xrow = model.exo.row(*x);
                    for nx in support(xrow).map(ExoStateId) {
                        *next.entry((ns, nx, PrevAction::Taken(a))).or_default() += &pa * &xrow[nx.0];
                    }
                }
            }
            cur = next;
        }
        out.push(cur.clone());
    }
    Ok(out)
}

/// What to record along a segment `[start, end]` (1-based, inclusive).
#[derive(Clone, Debug)]
pub(crate) struct SegmentSpec {
    pub start: usize,
    pub end: usize,
    /// Times whose augmented observation is appended to the payload.
    pub record: Vec<usize>,
    pub with_actions: bool,
    /// Time whose action is recorded (must be `< end`).
    pub action_time: Option<usize>,
    /// Times whose agent state is recorded.
    pub mark_times: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub(crate) struct Outcome {
    pub payload: Vec<AugObs>,
    pub action: Option<ActionId>,
    pub marks: Vec<AgentStateId>,
}

pub(crate) fn run_segment(
    model: &FmPomdp,
    policy: &Policy,
    spec: &SegmentSpec,
    budget: Budget,
) -> Result<BTreeMap<Outcome, Probability>> {
    if spec.start == 0 || spec.end < spec.start || spec.end > model.horizon {
        return Err(Error::OutOfRange(format!(
            "segment [{}, {}] outside 1..={}",
            spec.start, spec.end, model.horizon
        )));
    }
    let recorded = |t: usize| spec.record.contains(&t);
    let keeps_prev = |t: usize| spec.with_actions && recorded(t);

    let marginals = latent_marginals(model, policy, spec.start)?;
    let mut particles: HashMap<(Outcome, AgentStateId, ExoStateId, PrevAction), Probability> = HashMap::new();
    for ((s, x, prev), p) in &marginals[spec.start - 1] {
        let prev = if keeps_prev(spec.start) { *prev } else { PrevAction::Hidden };
        *particles.entry((Outcome::default(), *s, *x, prev)).or_default() += p;
    }

    for t in spec.start..=spec.end {
        if recorded(t) || spec.mark_times.contains(&t) {
            let mut next = HashMap::with_capacity(particles.len());
            for ((outcome, s, x, prev), p) in particles {
                if recorded(t) {
                    for (o, q) in model.emission.support(s, x) {
                        let mut oc = outcome.clone();
                        oc.payload.push(AugObs { obs: o, prev: prev.strip(spec.with_actions) });
                        if spec.mark_times.contains(&t) {
                            oc.marks.push(s);
                        }
                        *next.entry((oc, s, x, prev)).or_insert_with(Probability::zero) += &p * q;
                    }
                } else {
                    let mut oc = outcome;
                    oc.marks.push(s);
                    *next.entry((oc, s, x, prev)).or_insert_with(Probability::zero) += p;
                }
            }
            particles = next;
        }
        if t == spec.end {
            break;
        }
        let mut next = HashMap::with_capacity(particles.len());
        for ((outcome, s, x, _), p) in particles {
            let row = policy.row(s, x);
            for a in support(row).map(ActionId) {
                let pa = &p * &row[a.0];
                let ns = model.agent.step(s, a);
                let mut oc = outcome.clone();
                if spec.action_time == Some(t) {
                    oc.action = Some(a);
                }
                let prev = if keeps_prev(t + 1) { PrevAction::Taken(a) } else { PrevAction::Hidden };
                let xrow = model.exo.row(x);
                for nx in support(xrow).map(ExoStateId) {
                    *next.entry((oc.clone(), ns, nx, prev)).or_insert_with(Probability::zero) += &pa * &xrow[nx.0];
                }
            }
        }
        particles = next;
        budget.check(particles.len() as u128)?;
    }

    let mut out: BTreeMap<Outcome, Probability> = BTreeMap::new();
    for ((outcome, _, _, _), p) in particles {
        *out.entry(outcome).or_default() += p;
    }
    Ok(out)
}

//! Trajectories, augmented observations and clamped windows.

use std::fmt;
use std::fmt::Write as _;

use num_bigint::BigInt;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionId, AgentStateId, ExoStateId, FmPomdp, ObsSymbol, Policy};
use crate::prob::{support, Probability};

/// Default cap on enumerated paths / DP particles.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Budget(pub u128);

impl Default for Budget {
    fn default() -> Self {
        Budget(DEFAULT_BUDGET)
    }
}

impl Budget {
    pub fn check(self, estimated: u128) -> Result<()> {
        if estimated > self.0 {
            Err(Error::BudgetExceeded { estimated, budget: self.0 })
        } else {
            Ok(())
        }
    }
}

/// The previous-action slot of an augmented observation.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrevAction {
    Taken(ActionId),
    /// `t = 1`: there is no previous action.
    Start,
    /// Stripped for the action-free objectives.
    Hidden,
}

impl PrevAction {
    pub const START_CODE: u16 = u16::MAX;
    pub const HIDDEN_CODE: u16 = u16::MAX - 1;

    pub fn code(self) -> u16 {
        match self {
            PrevAction::Taken(a) => a.0 as u16,
            PrevAction::Start => Self::START_CODE,
            PrevAction::Hidden => Self::HIDDEN_CODE,
        }
    }

    pub fn from_code(code: u16) -> Self {
        match code {
            Self::START_CODE => PrevAction::Start,
            Self::HIDDEN_CODE => PrevAction::Hidden,
            a => PrevAction::Taken(ActionId(a as usize)),
        }
    }

    pub fn strip(self, with_actions: bool) -> Self {
        if with_actions {
            self
        } else {
            PrevAction::Hidden
        }
    }
}

/// `õ_t = (o_t, a_{t-1})`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AugObs {
    pub obs: ObsSymbol,
    pub prev: PrevAction,
}

impl AugObs {
    /// Fixed-width canonical code: high 16 bits observation, low 16 bits
    /// previous action.
    pub fn code(self) -> u32 {
        ((self.obs.code() as u32) << 16) | self.prev.code() as u32
    }

    pub fn from_code(code: u32) -> Self {
        Self {
            obs: ObsSymbol::from_code((code >> 16) as u16),
            prev: PrevAction::from_code((code & 0xFFFF) as u16),
        }
    }

    pub fn stripped(self, with_actions: bool) -> Self {
        Self { obs: self.obs, prev: self.prev.strip(with_actions) }
    }
}

impl fmt::Display for AugObs {
    /// `obs:prev`, with `-` for a blank observation, `^` for the missing
    /// first action and `*` for a stripped one.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.prev {
            PrevAction::Taken(a) => write!(f, "{}:{}", self.obs, a.0),
            PrevAction::Start => write!(f, "{}:^", self.obs),
            PrevAction::Hidden => write!(f, "{}:*", self.obs),
        }
    }
}

impl Serialize for AugObs {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub s: AgentStateId,
    pub xi: ExoStateId,
    pub o: ObsSymbol,
    /// Absent at the final step.
    pub a: Option<ActionId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub weight: Probability,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The step at 1-based time `t`.
    pub fn at(&self, t: usize) -> &Step {
        &self.steps[t - 1]
    }

    pub fn aug(&self, t: usize, with_actions: bool) -> AugObs {
        let prev = if t == 1 {
            PrevAction::Start
        } else {
            PrevAction::Taken(self.steps[t - 2].a.expect("non-final step carries an action"))
        };
        AugObs { obs: self.steps[t - 1].o, prev: prev.strip(with_actions) }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Past,
    Future,
}

/// Inclusive 1-based index range of the past window anchored at `h`.
pub fn past_range(h: usize, m: usize) -> (usize, usize) {
    (h.saturating_sub(m).max(1), h)
}

/// Inclusive 1-based index range of the future window anchored at `h`: the
/// `n`-step suffix starting at `h`, clamped at the horizon.
pub fn future_range(h: usize, n: usize, horizon: usize) -> (usize, usize) {
    (h, (h + n).min(horizon))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Window {
    pub kind: WindowKind,
    pub anchor: usize,
    pub span: usize,
    pub start: usize,
    pub payload: Vec<AugObs>,
}

pub fn past_window(traj: &Trajectory, h: usize, m: usize, with_actions: bool) -> Window {
    assert!(h >= 1 && h <= traj.len(), "anchor {h} outside 1..={}", traj.len());
    let (start, end) = past_range(h, m);
    Window {
        kind: WindowKind::Past,
        anchor: h,
        span: m,
        start,
        payload: (start..=end).map(|t| traj.aug(t, with_actions)).collect(),
    }
}

pub fn future_window(traj: &Trajectory, h: usize, n: usize, with_actions: bool) -> Window {
    assert!(h >= 1 && h <= traj.len(), "anchor {h} outside 1..={}", traj.len());
    let (start, end) = future_range(h, n, traj.len());
    Window {
        kind: WindowKind::Future,
        anchor: h,
        span: n,
        start,
        payload: (start..=end).map(|t| traj.aug(t, with_actions)).collect(),
    }
}

/// Upper bound on the number of weighted paths of the given length.
pub fn estimate_paths(model: &FmPomdp, policy: &Policy, length: usize) -> u128 {
    let init = model.initial.iter().flatten().filter(|p| p.is_positive()).count() as u128;
    let mut a_branch = 1u128;
    let mut o_branch = 1u128;
    for s in model.agent_states() {
        for x in model.exo_states() {
            a_branch = a_branch.max(support(policy.row(s, x)).count() as u128);
            o_branch = o_branch.max(model.emission.support(s, x).count() as u128);
        }
    }
    let x_branch = model
        .exo
        .matrix
        .iter()
        .map(|r| support(r).count() as u128)
        .max()
        .unwrap_or(1);
    let per_step = a_branch.saturating_mul(x_branch).saturating_mul(o_branch);
    let mut est = init.saturating_mul(o_branch);
    for _ in 1..length {
        est = est.saturating_mul(per_step);
    }
    est
}

/// Every positive-weight trajectory of `length` steps, in lexicographic
/// `(s, ξ, o, a, ...)` order. Weights sum to exactly one.
pub fn enumerate_trajectories(
    model: &FmPomdp,
    policy: &Policy,
    length: usize,
    budget: Budget,
) -> Result<Vec<Trajectory>> {
    if length == 0 || length > model.horizon {
        return Err(Error::OutOfRange(format!("length {length} not in 1..={}", model.horizon)));
    }
    model.agent.ensure_deterministic()?;
    budget.check(estimate_paths(model, policy, length))?;

    let mut out = Vec::new();
    let mut steps = Vec::with_capacity(length);
    for s in model.agent_states() {
        for x in model.exo_states() {
            let p = &model.initial[s.0][x.0];
            if p.is_positive() {
                extend(model, policy, length, s, x, p.clone(), &mut steps, &mut out);
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn extend(
    model: &FmPomdp,
    policy: &Policy,
    length: usize,
    s: AgentStateId,
    xi: ExoStateId,
    weight: Probability,
    steps: &mut Vec<Step>,
    out: &mut Vec<Trajectory>,
) {
    for (o, q) in model.emission.support(s, xi) {
        let w = &weight * q;
        if steps.len() + 1 == length {
            steps.push(Step { s, xi, o, a: None });
            out.push(Trajectory { steps: steps.clone(), weight: w });
            steps.pop();
            continue;
        }
        let row = policy.row(s, xi);
        for a in support(row).map(ActionId) {
            let wa = &w * &row[a.0];
            let next_s = model.agent.step(s, a);
            let exo_row = model.exo.row(xi);
            for nx in support(exo_row).map(ExoStateId) {
                steps.push(Step { s, xi, o, a: Some(a) });
                extend(model, policy, length, next_s, nx, &wa * &exo_row[nx.0], steps, out);
                steps.pop();
            }
        }
    }
}

/// Draws an index from `dist` using one `u64` from `rng`, comparing exactly
/// against the rational cumulative mass.
fn sample_index(dist: &[Probability], rng: &mut impl RngCore) -> usize {
    let draw = BigInt::from(rng.next_u64());
    let scale = BigInt::from(1u8) << 64u32;
    let mut cum = Probability::zero();
    let mut last = 0;
    for (i, p) in dist.iter().enumerate() {
        if !p.is_positive() {
            continue;
        }
        last = i;
        cum += p;
        // draw / 2^64 < cum  <=>  draw * den < num * 2^64
        if &draw * cum.denom() < cum.numer() * &scale {
            return i;
        }
    }
    last
}

/// One sampled trajectory. Bit-reproducible for a given seed.
pub fn simulate(model: &FmPomdp, policy: &Policy, length: usize, seed: u64) -> Result<Trajectory> {
    if length == 0 {
        return Err(Error::OutOfRange("simulation length must be positive".into()));
    }
    model.agent.ensure_deterministic()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = model.exo_count();
    let flat: Vec<Probability> = model.initial.iter().flatten().cloned().collect();
    let z = sample_index(&flat, &mut rng);
    let (mut s, mut xi) = (AgentStateId(z / nx), ExoStateId(z % nx));
    let mut weight = flat[z].clone();
    let mut steps = Vec::with_capacity(length);
    for t in 1..=length {
        let erow = model.emission.row(s, xi);
        let oc = sample_index(erow, &mut rng);
        weight = weight * &erow[oc];
        let o = model.emission.symbol_at(oc);
        if t == length {
            steps.push(Step { s, xi, o, a: None });
            break;
        }
        let prow = policy.row(s, xi);
        let a = ActionId(sample_index(prow, &mut rng));
        weight = weight * &prow[a.0];
        steps.push(Step { s, xi, o, a: Some(a) });
        let xrow = model.exo.row(xi);
        let nxi = sample_index(xrow, &mut rng);
        weight = weight * &xrow[nxi];
        s = model.agent.step(s, a);
        xi = ExoStateId(nxi);
    }
    Ok(Trajectory { steps, weight })
}

/// Tab-separated dump: a `#` header with the model hash and seed, a column
/// line, then one `t s ξ o a` line per step (`-` for blank / absent).
pub fn dump_trajectory(model_hash: &str, seed: u64, traj: &Trajectory) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# model {model_hash} seed {seed}");
    out.push_str("t\ts\txi\to\ta\n");
    for (i, step) in traj.steps.iter().enumerate() {
        let a = step.a.map_or_else(|| "-".to_string(), |a| a.0.to_string());
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", i + 1, step.s.0, step.xi.0, step.o, a);
    }
    out
}

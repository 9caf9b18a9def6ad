//! The agent-centric FM-POMDP data model.
//!
//! A model is a deterministic agent-centric chain `T(s, a)`, an autonomous
//! exogenous chain `P(ξ' | ξ)`, an emission `q(o | s, ξ)` and an initial
//! distribution over `(s, ξ)`. Time indices are 1-based throughout the crate:
//! a trajectory of horizon `H` visits `t = 1..=H`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{support, total, Dist, Probability};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentStateId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExoStateId(pub usize);

/// An emitted symbol. `Blank` is a reserved sentinel that never collides with
/// a content symbol.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObsSymbol {
    Content(usize),
    Blank,
}

impl ObsSymbol {
    /// Fixed-width code used by canonical key encodings.
    pub const BLANK_CODE: u16 = u16::MAX;

    pub fn code(self) -> u16 {
        match self {
            ObsSymbol::Content(i) => i as u16,
            ObsSymbol::Blank => Self::BLANK_CODE,
        }
    }

    pub fn from_code(code: u16) -> Self {
        if code == Self::BLANK_CODE {
            ObsSymbol::Blank
        } else {
            ObsSymbol::Content(code as usize)
        }
    }
}

impl Serialize for ObsSymbol {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl fmt::Display for ObsSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObsSymbol::Content(i) => write!(f, "{i}"),
            ObsSymbol::Blank => write!(f, "-"),
        }
    }
}

/// Agent-centric transition table. Stored as successor sets so that a model
/// read from disk can carry a non-deterministic entry for the validator to
/// report; every computation goes through [`AgentDynamics::step`], which
/// assumes determinism has been checked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentDynamics {
    successors: Vec<Vec<Vec<AgentStateId>>>,
    action_count: usize,
}

impl AgentDynamics {
    /// Deterministic table `table[s][a] = s'`.
    pub fn from_table(table: Vec<Vec<usize>>) -> Self {
        let action_count = table.first().map_or(0, Vec::len);
        let successors = table
            .into_iter()
            .map(|row| row.into_iter().map(|s| vec![AgentStateId(s)]).collect())
            .collect();
        Self { successors, action_count }
    }

    pub fn from_successor_sets(sets: Vec<Vec<Vec<usize>>>) -> Self {
        let action_count = sets.first().map_or(0, Vec::len);
        let successors = sets
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|set| set.into_iter().map(AgentStateId).collect())
                    .collect()
            })
            .collect();
        Self { successors, action_count }
    }

    pub fn state_count(&self) -> usize {
        self.successors.len()
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn successors(&self, s: AgentStateId, a: ActionId) -> &[AgentStateId] {
        &self.successors[s.0][a.0]
    }

    pub fn step(&self, s: AgentStateId, a: ActionId) -> AgentStateId {
        let next = &self.successors[s.0][a.0];
        debug_assert_eq!(next.len(), 1, "step() on non-deterministic entry");
        next[0]
    }

    pub fn ensure_deterministic(&self) -> Result<()> {
        for (s, row) in self.successors.iter().enumerate() {
            if row.len() != self.action_count {
                return Err(Error::InvalidModel(format!(
                    "agent state {s} has {} actions, expected {}",
                    row.len(),
                    self.action_count
                )));
            }
            for (a, set) in row.iter().enumerate() {
                if set.len() != 1 || set[0].0 >= self.successors.len() {
                    return Err(Error::NonDeterministic { state: s, action: a });
                }
            }
        }
        Ok(())
    }

    /// The table as `table[s][a]`. Only meaningful for deterministic dynamics.
    pub fn table(&self) -> Vec<Vec<usize>> {
        self.successors
            .iter()
            .map(|row| row.iter().map(|set| set.first().map_or(usize::MAX, |s| s.0)).collect())
            .collect()
    }

    pub(crate) fn successor_sets(&self) -> &[Vec<Vec<AgentStateId>>] {
        &self.successors
    }
}

/// Autonomous exogenous chain `P(ξ' | ξ)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExoDynamics {
    pub matrix: Vec<Dist>,
}

impl ExoDynamics {
    pub fn new(matrix: Vec<Dist>) -> Self {
        Self { matrix }
    }

    /// The single-state chain.
    pub fn trivial() -> Self {
        Self::cycle(1)
    }

    /// Deterministic counter `ξ' = (ξ + 1) mod period`.
    pub fn cycle(period: usize) -> Self {
        assert!(period >= 1, "cycle period must be positive");
        let matrix = (0..period)
            .map(|x| {
                (0..period)
                    .map(|y| if y == (x + 1) % period { Probability::one() } else { Probability::zero() })
                    .collect()
            })
            .collect();
        Self { matrix }
    }

    pub fn state_count(&self) -> usize {
        self.matrix.len()
    }

    pub fn row(&self, xi: ExoStateId) -> &[Probability] {
        &self.matrix[xi.0]
    }

    /// `P(ξ' | ξ, h)` as a dense matrix.
    pub fn power(&self, h: usize) -> Vec<Dist> {
        let n = self.state_count();
        let mut acc: Vec<Dist> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { Probability::one() } else { Probability::zero() }).collect())
            .collect();
        for _ in 0..h {
            acc = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).map(|l| &acc[i][l] * &self.matrix[l][j]).sum())
                        .collect()
                })
                .collect();
        }
        acc
    }
}

/// Emission `q(o | s, ξ)`. Each `(s, ξ)` row is dense over the content
/// symbols followed by one trailing column for `Blank`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Emission {
    rows: Vec<Vec<Dist>>,
    content_count: usize,
}

impl Emission {
    pub fn new(rows: Vec<Vec<Dist>>, content_count: usize) -> Self {
        Self { rows, content_count }
    }

    /// Builds a deterministic emission from a symbol function.
    pub fn deterministic(
        agent_count: usize,
        exo_count: usize,
        content_count: usize,
        symbol: impl Fn(AgentStateId, ExoStateId) -> ObsSymbol,
    ) -> Self {
        let rows = (0..agent_count)
            .map(|s| {
                (0..exo_count)
                    .map(|x| {
                        let mut row = vec![Probability::zero(); content_count + 1];
                        let idx = match symbol(AgentStateId(s), ExoStateId(x)) {
                            ObsSymbol::Content(i) => i,
                            ObsSymbol::Blank => content_count,
                        };
                        row[idx] = Probability::one();
                        row
                    })
                    .collect()
            })
            .collect();
        Self { rows, content_count }
    }

    pub fn content_count(&self) -> usize {
        self.content_count
    }

    pub fn row(&self, s: AgentStateId, xi: ExoStateId) -> &[Probability] {
        &self.rows[s.0][xi.0]
    }

    pub fn symbol_at(&self, column: usize) -> ObsSymbol {
        if column == self.content_count {
            ObsSymbol::Blank
        } else {
            ObsSymbol::Content(column)
        }
    }

    pub fn prob(&self, s: AgentStateId, xi: ExoStateId, o: ObsSymbol) -> Probability {
        let col = match o {
            ObsSymbol::Content(i) if i < self.content_count => i,
            ObsSymbol::Content(_) => return Probability::zero(),
            ObsSymbol::Blank => self.content_count,
        };
        self.rows[s.0][xi.0][col].clone()
    }

    /// `(symbol, probability)` pairs with positive mass.
    pub fn support(&self, s: AgentStateId, xi: ExoStateId) -> impl Iterator<Item = (ObsSymbol, &Probability)> + '_ {
        let row = &self.rows[s.0][xi.0];
        support(row).map(move |c| (self.symbol_at(c), &row[c]))
    }

    pub(crate) fn rows(&self) -> &[Vec<Dist>] {
        &self.rows
    }
}

/// Display names for the alphabets. Only used for dumps and reports.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Labels {
    pub actions: Vec<String>,
    pub agent_states: Vec<String>,
    pub exo_states: Vec<String>,
    pub observations: Vec<String>,
}

impl Labels {
    pub fn numeric(actions: usize, agent: usize, exo: usize, obs: usize) -> Self {
        let nums = |n: usize| (0..n).map(|i| i.to_string()).collect();
        Self {
            actions: nums(actions),
            agent_states: nums(agent),
            exo_states: nums(exo),
            observations: nums(obs),
        }
    }
}

/// The full model bundle. Reward is intentionally absent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FmPomdp {
    pub name: String,
    pub agent: AgentDynamics,
    pub exo: ExoDynamics,
    pub emission: Emission,
    /// Past-memory length.
    pub m: usize,
    /// Future-memory length.
    pub n: usize,
    pub horizon: usize,
    /// Joint initial distribution `initial[s][ξ]`.
    pub initial: Vec<Dist>,
    /// Whether the block (disjoint emission support) property is claimed.
    pub block: bool,
    pub labels: Labels,
}

impl FmPomdp {
    pub fn agent_count(&self) -> usize {
        self.agent.state_count()
    }

    pub fn action_count(&self) -> usize {
        self.agent.action_count()
    }

    pub fn exo_count(&self) -> usize {
        self.exo.state_count()
    }

    pub fn factored_initial(mu_s: &[Probability], mu_xi: &[Probability]) -> Vec<Dist> {
        mu_s.iter().map(|ps| mu_xi.iter().map(|px| ps * px).collect()).collect()
    }

    pub fn mu_s(&self) -> Dist {
        self.initial.iter().map(|row| total(row)).collect()
    }

    pub fn mu_xi(&self) -> Dist {
        (0..self.exo_count())
            .map(|x| self.initial.iter().map(|row| &row[x]).sum())
            .collect()
    }

    /// The same model with a different exogenous chain; the initial
    /// exogenous distribution becomes uniform over the new chain.
    pub fn with_exo(&self, exo: ExoDynamics, emission: Emission) -> Self {
        let mu_s = self.mu_s();
        let mu_xi = vec![Probability::uniform(exo.state_count()); exo.state_count()];
        let mut out = self.clone();
        out.labels.exo_states = (0..exo.state_count()).map(|i| i.to_string()).collect();
        out.initial = Self::factored_initial(&mu_s, &mu_xi);
        out.exo = exo;
        out.emission = emission;
        out
    }

    pub fn agent_label(&self, s: AgentStateId) -> String {
        self.labels.agent_states.get(s.0).cloned().unwrap_or_else(|| s.0.to_string())
    }

    pub fn action_label(&self, a: ActionId) -> String {
        self.labels.actions.get(a.0).cloned().unwrap_or_else(|| a.0.to_string())
    }

    pub fn agent_states(&self) -> impl Iterator<Item = AgentStateId> {
        (0..self.agent_count()).map(AgentStateId)
    }

    pub fn exo_states(&self) -> impl Iterator<Item = ExoStateId> {
        (0..self.exo_count()).map(ExoStateId)
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> {
        (0..self.action_count()).map(ActionId)
    }

    /// Errors unless the model passes [`validate_model`].
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_model(self);
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidModel(format!("{v:?}"))),
        }
    }
}

/// Action distribution conditioned on the latent state. An endogenous policy
/// has identical rows across `ξ` for every agent state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    /// `rows[s][ξ][a]`
    rows: Vec<Vec<Dist>>,
}

impl Policy {
    pub fn uniform(model: &FmPomdp) -> Self {
        let row = vec![Probability::uniform(model.action_count()); model.action_count()];
        Self::endogenous(vec![row; model.agent_count()], model.exo_count())
    }

    /// `rows[s][a]`, replicated across exogenous states.
    pub fn endogenous(rows: Vec<Dist>, exo_count: usize) -> Self {
        Self {
            rows: rows.into_iter().map(|r| vec![r; exo_count]).collect(),
        }
    }

    /// Fully general `rows[s][ξ][a]`; may depend on the exogenous state.
    pub fn latent(rows: Vec<Vec<Dist>>) -> Self {
        Self { rows }
    }

    pub fn row(&self, s: AgentStateId, xi: ExoStateId) -> &[Probability] {
        &self.rows[s.0][xi.0]
    }

    /// The row used by agent-only computations. Requires endogeneity.
    pub fn agent_row(&self, s: AgentStateId) -> &[Probability] {
        &self.rows[s.0][0]
    }

    pub fn ensure_endogenous(&self) -> Result<()> {
        for (s, per_exo) in self.rows.iter().enumerate() {
            if per_exo.windows(2).any(|w| w[0] != w[1]) {
                return Err(Error::NonEndogenousPolicy { state: s });
            }
        }
        Ok(())
    }

    pub fn is_endogenous(&self) -> bool {
        self.ensure_endogenous().is_ok()
    }

    pub(crate) fn rows(&self) -> &[Vec<Dist>] {
        &self.rows
    }
}

/// A single invariant violation with its witness.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { detail: String },
    NonDeterministic { agent_state: usize, action: usize, successors: Vec<usize> },
    ExoEntryRange { row: usize, column: usize, value: Probability },
    ExoRowSum { row: usize, sum: Probability },
    EmissionEntryRange { agent_state: usize, exo_state: usize, column: usize, value: Probability },
    EmissionRowSum { agent_state: usize, exo_state: usize, sum: Probability },
    InitialEntryRange { agent_state: usize, exo_state: usize, value: Probability },
    InitialSum { sum: Probability },
    InitialNotFactorized { agent_state: usize, exo_state: usize, joint: Probability, product: Probability },
    BlockViolation { first: (usize, usize), second: (usize, usize), symbol: String },
    HorizonZero,
    PolicyRowSum { agent_state: usize, exo_state: usize, sum: Probability },
    PolicyEntryRange { agent_state: usize, exo_state: usize, action: usize, value: Probability },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant and reports each violation with a
/// witness. Never aborts.
pub fn validate_model(model: &FmPomdp) -> ValidationReport {
    let mut v = Vec::new();
    let ns = model.agent_count();
    let na = model.action_count();
    let nx = model.exo_count();
    let no = model.emission.content_count() + 1;

    if model.horizon == 0 {
        v.push(Violation::HorizonZero);
    }
    if na == 0 || ns == 0 || nx == 0 {
        v.push(Violation::Shape { detail: format!("empty alphabet: |S|={ns} |A|={na} |Ξ|={nx}") });
        return ValidationReport { violations: v };
    }

    for (s, row) in model.agent.successor_sets().iter().enumerate() {
        if row.len() != na {
            v.push(Violation::Shape { detail: format!("agent state {s} has {} action entries, expected {na}", row.len()) });
            continue;
        }
        for (a, set) in row.iter().enumerate() {
            if set.len() != 1 || set.iter().any(|t| t.0 >= ns) {
                v.push(Violation::NonDeterministic {
                    agent_state: s,
                    action: a,
                    successors: set.iter().map(|t| t.0).collect(),
                });
            }
        }
    }

    for (r, row) in model.exo.matrix.iter().enumerate() {
        if row.len() != nx {
            v.push(Violation::Shape { detail: format!("exogenous row {r} has {} entries, expected {nx}", row.len()) });
            continue;
        }
        for (c, p) in row.iter().enumerate() {
            if !p.is_probability() {
                v.push(Violation::ExoEntryRange { row: r, column: c, value: p.clone() });
            }
        }
        let sum = total(row);
        if !sum.is_one() {
            v.push(Violation::ExoRowSum { row: r, sum });
        }
    }

    let rows = model.emission.rows();
    if rows.len() != ns || rows.iter().any(|r| r.len() != nx) {
        v.push(Violation::Shape { detail: "emission table is not |S| x |Ξ|".into() });
    } else {
        for (s, per_exo) in rows.iter().enumerate() {
            for (x, row) in per_exo.iter().enumerate() {
                if row.len() != no {
                    v.push(Violation::Shape { detail: format!("emission row ({s}, {x}) has {} entries, expected {no}", row.len()) });
                    continue;
                }
                for (c, p) in row.iter().enumerate() {
                    if !p.is_probability() {
                        v.push(Violation::EmissionEntryRange { agent_state: s, exo_state: x, column: c, value: p.clone() });
                    }
                }
                let sum = total(row);
                if !sum.is_one() {
                    v.push(Violation::EmissionRowSum { agent_state: s, exo_state: x, sum });
                }
            }
        }
        if model.block {
            check_block(model, &mut v);
        }
    }

    if model.initial.len() != ns || model.initial.iter().any(|r| r.len() != nx) {
        v.push(Violation::Shape { detail: "initial distribution is not |S| x |Ξ|".into() });
    } else {
        for (s, row) in model.initial.iter().enumerate() {
            for (x, p) in row.iter().enumerate() {
                if !p.is_probability() {
                    v.push(Violation::InitialEntryRange { agent_state: s, exo_state: x, value: p.clone() });
                }
            }
        }
        let sum: Probability = model.initial.iter().flatten().sum();
        if !sum.is_one() {
            v.push(Violation::InitialSum { sum });
        } else {
            let mu_s = model.mu_s();
            let mu_xi = model.mu_xi();
            'outer: for s in 0..ns {
                for x in 0..nx {
                    let product = &mu_s[s] * &mu_xi[x];
                    if product != model.initial[s][x] {
                        v.push(Violation::InitialNotFactorized {
                            agent_state: s,
                            exo_state: x,
                            joint: model.initial[s][x].clone(),
                            product,
                        });
                        break 'outer;
                    }
                }
            }
        }
    }

    ValidationReport { violations: v }
}

fn check_block(model: &FmPomdp, v: &mut Vec<Violation>) {
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; model.emission.content_count() + 1];
    for s in model.agent_states() {
        for x in model.exo_states() {
            for (o, _) in model.emission.support(s, x) {
                let col = match o {
                    ObsSymbol::Content(i) => i,
                    ObsSymbol::Blank => model.emission.content_count(),
                };
                match owner[col] {
                    None => owner[col] = Some((s.0, x.0)),
                    Some(first) => v.push(Violation::BlockViolation {
                        first,
                        second: (s.0, x.0),
                        symbol: o.to_string(),
                    }),
                }
            }
        }
    }
}

/// Checks that a policy's rows are distributions over the model's actions.
pub fn validate_policy(model: &FmPomdp, policy: &Policy) -> ValidationReport {
    let mut v = Vec::new();
    let rows = policy.rows();
    if rows.len() != model.agent_count() || rows.iter().any(|r| r.len() != model.exo_count()) {
        v.push(Violation::Shape { detail: "policy table is not |S| x |Ξ|".into() });
        return ValidationReport { violations: v };
    }
    for (s, per_exo) in rows.iter().enumerate() {
        for (x, row) in per_exo.iter().enumerate() {
            if row.len() != model.action_count() {
                v.push(Violation::Shape { detail: format!("policy row ({s}, {x}) has wrong length") });
                continue;
            }
            for (a, p) in row.iter().enumerate() {
                if !p.is_probability() {
                    v.push(Violation::PolicyEntryRange { agent_state: s, exo_state: x, action: a, value: p.clone() });
                }
            }
            let sum = total(row);
            if !sum.is_one() {
                v.push(Violation::PolicyRowSum { agent_state: s, exo_state: x, sum });
            }
        }
    }
    ValidationReport { violations: v }
}

/// All-pairs breadth-first search over the agent-centric graph.
pub fn shortest_paths(agent: &AgentDynamics) -> Result<Vec<Vec<Option<usize>>>> {
    agent.ensure_deterministic()?;
    let n = agent.state_count();
    let dist = (0..n)
        .map(|src| {
            let mut d = vec![None; n];
            d[src] = Some(0);
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                let du = d[u].unwrap_or(0);
                for a in 0..agent.action_count() {
                    let w = agent.step(AgentStateId(u), ActionId(a)).0;
                    if d[w].is_none() {
                        d[w] = Some(du + 1);
                        queue.push_back(w);
                    }
                }
            }
            d
        })
        .collect();
    Ok(dist)
}

/// Maximum over ordered pairs of the shortest action-path length.
pub fn diameter(agent: &AgentDynamics) -> Result<usize> {
    let dist = shortest_paths(agent)?;
    let mut best = 0;
    for (from, row) in dist.iter().enumerate() {
        for (to, d) in row.iter().enumerate() {
            match d {
                Some(d) => best = best.max(*d),
                None => return Err(Error::Unreachable { from, to }),
            }
        }
    }
    Ok(best)
}

/// Exact support of the time-`t` latent marginal.
pub fn reachable_latents(
    model: &FmPomdp,
    policy: &Policy,
    t: usize,
) -> Result<BTreeSet<(AgentStateId, ExoStateId)>> {
    if t == 0 || t > model.horizon {
        return Err(Error::OutOfRange(format!("t = {t} not in 1..={}", model.horizon)));
    }
    let marginals = crate::segment::latent_marginals(model, policy, t)?;
    Ok(marginals[t - 1]
        .iter()
        .filter(|(_, p)| p.is_positive())
        .map(|((s, x, _), _)| (*s, *x))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state() -> FmPomdp {
        FmPomdp {
            name: "unit".into(),
            agent: AgentDynamics::from_table(vec![vec![0]]),
            exo: ExoDynamics::trivial(),
            emission: Emission::deterministic(1, 1, 1, |_, _| ObsSymbol::Content(0)),
            m: 0,
            n: 0,
            horizon: 3,
            initial: vec![vec![Probability::one()]],
            block: true,
            labels: Labels::numeric(1, 1, 1, 1),
        }
    }

    fn four_cycle_forward() -> AgentDynamics {
        AgentDynamics::from_table((0..4).map(|s| vec![(s + 1) % 4]).collect())
    }

    #[test]
    fn identity_model_is_valid() {
        assert!(validate_model(&one_state()).is_valid());
    }

    #[test]
    fn short_exo_row_is_reported() {
        let mut m = one_state();
        m.exo = ExoDynamics::new(vec![vec![Probability::new(9, 10)]]);
        let report = validate_model(&m);
        assert_eq!(
            report.violations,
            vec![Violation::ExoRowSum { row: 0, sum: Probability::new(9, 10) }]
        );
    }

    #[test]
    fn nondeterminism_and_correlated_initial_are_reported() {
        let mut m = one_state();
        m.agent = AgentDynamics::from_successor_sets(vec![vec![vec![0, 0]]]);
        let report = validate_model(&m);
        assert!(matches!(report.violations[0], Violation::NonDeterministic { agent_state: 0, action: 0, .. }));

        let mut m = one_state();
        m.agent = AgentDynamics::from_table(vec![vec![1], vec![0]]);
        m.exo = ExoDynamics::cycle(2);
        m.emission = Emission::deterministic(2, 2, 2, |s, _| ObsSymbol::Content(s.0));
        m.block = false;
        let h = Probability::new(1, 2);
        let z = Probability::zero();
        m.initial = vec![vec![h.clone(), z.clone()], vec![z, h]];
        let report = validate_model(&m);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::InitialNotFactorized { .. }));
    }

    #[test]
    fn block_checked_only_when_flagged() {
        let mut m = one_state();
        m.exo = ExoDynamics::cycle(2);
        m.emission = Emission::deterministic(1, 2, 1, |_, _| ObsSymbol::Content(0));
        m.initial = FmPomdp::factored_initial(&[Probability::one()], &[Probability::new(1, 2), Probability::new(1, 2)]);
        let report = validate_model(&m);
        assert!(matches!(report.violations[..], [Violation::BlockViolation { first: (0, 0), second: (0, 1), .. }]));
        m.block = false;
        assert!(validate_model(&m).is_valid());
    }

    #[test]
    fn diameter_small_cases() {
        assert_eq!(diameter(&AgentDynamics::from_table(vec![vec![0]])).unwrap(), 0);
        assert_eq!(diameter(&four_cycle_forward()).unwrap(), 3);
        let stuck = AgentDynamics::from_table(vec![vec![1], vec![1]]);
        assert_eq!(diameter(&stuck), Err(Error::Unreachable { from: 1, to: 0 }));
    }

    #[test]
    fn exo_power_of_cycle() {
        let c = ExoDynamics::cycle(4);
        let p2 = c.power(2);
        assert!(p2[1][3].is_one());
        assert!(c.power(4)[2][2].is_one());
    }

    #[test]
    fn reachable_single_path() {
        let mut m = one_state();
        m.agent = AgentDynamics::from_table(vec![vec![1], vec![2], vec![2]]);
        m.emission = Emission::deterministic(3, 1, 3, |s, _| ObsSymbol::Content(s.0));
        m.initial = vec![vec![Probability::one()], vec![Probability::zero()], vec![Probability::zero()]];
        let policy = Policy::uniform(&m);
        let r = reachable_latents(&m, &policy, 3).unwrap();
        assert_eq!(r.into_iter().collect::<Vec<_>>(), vec![(AgentStateId(2), ExoStateId(0))]);
        assert!(reachable_latents(&m, &policy, 4).is_err());
    }
}

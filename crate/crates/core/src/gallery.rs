//! Built-in environments: the forward-jump counterexample, a discretised
//! 1-D navigation task, a small gridworld, exogenous-chain composition, and
//! a seeded generator of random decodable models.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{
    diameter, ActionId, AgentDynamics, AgentStateId, Emission, ExoDynamics, FmPomdp, Labels,
    ObsSymbol,
};
use crate::prob::{Dist, Probability};
use crate::trajectory::Budget;

/// Agent-centric half of an environment, before an exogenous chain and an
/// emission rule are attached.
#[derive(Clone, Debug)]
pub struct AgentEnv {
    pub name: String,
    pub dynamics: AgentDynamics,
    pub action_labels: Vec<String>,
    pub state_labels: Vec<String>,
    /// Symbol emitted by each agent state when it is visible.
    pub symbol: Vec<ObsSymbol>,
    pub symbol_labels: Vec<String>,
    pub mu_s: Dist,
    pub m: usize,
    pub n: usize,
}

/// How the exogenous state shapes the emission.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EmissionRule {
    /// Emit the agent symbol regardless of `ξ`.
    StateOnly,
    /// Emit the agent symbol when `ξ = 0`, `Blank` otherwise.
    MaskUnlessPhaseZero,
}

pub fn make_exo_cycle(period: usize) -> ExoDynamics {
    ExoDynamics::cycle(period)
}

pub fn emission_for(env: &AgentEnv, exo_count: usize, rule: EmissionRule) -> Emission {
    Emission::deterministic(env.dynamics.state_count(), exo_count, env.symbol_labels.len(), |s, x| {
        match rule {
            EmissionRule::MaskUnlessPhaseZero if x.0 != 0 => ObsSymbol::Blank,
            _ => env.symbol[s.0],
        }
    })
}

/// Attaches an exogenous chain (uniform initial phase) and an emission rule.
/// The horizon is set to `m + n + D + 1` when the diameter is defined.
pub fn compose(env: &AgentEnv, exo: ExoDynamics, rule: EmissionRule) -> FmPomdp {
    let nx = exo.state_count();
    let mu_xi = vec![Probability::uniform(nx); nx];
    let d = diameter(&env.dynamics).unwrap_or(env.dynamics.state_count());
    let emission = emission_for(env, nx, rule);
    let block = rule == EmissionRule::StateOnly && nx == 1 && {
        let mut seen = env.symbol.clone();
        seen.sort();
        seen.dedup();
        seen.len() == env.symbol.len()
    };
    FmPomdp {
        name: env.name.clone(),
        agent: env.dynamics.clone(),
        initial: FmPomdp::factored_initial(&env.mu_s, &mu_xi),
        exo,
        emission,
        m: env.m,
        n: env.n,
        horizon: env.m + env.n + d + 1,
        block,
        labels: Labels {
            actions: env.action_labels.clone(),
            agent_states: env.state_labels.clone(),
            exo_states: (0..nx).map(|i| i.to_string()).collect(),
            observations: env.symbol_labels.clone(),
        },
    }
}

/// Parameters of the counterexample family: a controllable cycle `s^A`, a
/// record `s^B` of the previous action, and an exogenous counter that hides
/// the state except on phase 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterexampleSpec {
    pub cycle_len: usize,
    pub exo_period: usize,
    pub masked: bool,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        Self { cycle_len: 4, exo_period: 4, masked: true }
    }
}

/// Action index 0 is `-1`, index 1 is `+1`.
pub fn counterexample_action(a: ActionId) -> i64 {
    if a.0 == 0 {
        -1
    } else {
        1
    }
}

/// Agent state `(s^A, s^B)` has index `2 s^A + [s^B = +1]`.
pub fn counterexample_state(cycle_len: usize, s: AgentStateId) -> (usize, i64) {
    assert!(s.0 < 2 * cycle_len);
    (s.0 / 2, if s.0 % 2 == 0 { -1 } else { 1 })
}

pub fn counterexample_env(cycle_len: usize) -> AgentEnv {
    let count = 2 * cycle_len;
    let table = (0..count)
        .map(|s| {
            let sa = s / 2;
            vec![2 * ((sa + cycle_len - 1) % cycle_len), 2 * ((sa + 1) % cycle_len) + 1]
        })
        .collect();
    let state_labels: Vec<String> = (0..count)
        .map(|s| {
            let (sa, sb) = counterexample_state(cycle_len, AgentStateId(s));
            format!("({sa}, {sb})")
        })
        .collect();
    let m = cycle_len - 1;
    AgentEnv {
        name: "fj-counterexample".into(),
        dynamics: AgentDynamics::from_table(table),
        action_labels: vec!["-1".into(), "1".into()],
        symbol: (0..count).map(ObsSymbol::Content).collect(),
        symbol_labels: state_labels.clone(),
        state_labels,
        mu_s: vec![Probability::uniform(count); count],
        m,
        n: m,
    }
}

pub fn make_counterexample(spec: &CounterexampleSpec) -> FmPomdp {
    let env = counterexample_env(spec.cycle_len);
    let rule = if spec.masked { EmissionRule::MaskUnlessPhaseZero } else { EmissionRule::StateOnly };
    let mut model = compose(&env, make_exo_cycle(spec.exo_period), rule);
    if !spec.masked {
        model.name = "fj-counterexample-observed".into();
    }
    model
}

/// The 8-state counterexample: `m = n = 3`, `H = 10`, uniform `μ` over
/// `(s, c)`, blank observation unless the counter is 0.
pub fn make_fj_counterexample() -> FmPomdp {
    make_counterexample(&CounterexampleSpec::default())
}

/// Same agent dynamics and counter, but the state is emitted at every step.
pub fn make_fj_counterexample_observed() -> FmPomdp {
    make_counterexample(&CounterexampleSpec { masked: false, ..Default::default() })
}

/// A 1-D point mass: position in `0..length`, velocity in `{-1, 0, +1}`,
/// acceleration actions. Only the position is emitted, and it is blank in
/// curtain cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NavSpec {
    pub length: usize,
    pub curtains: Vec<usize>,
}

impl NavSpec {
    pub fn state(&self, s: AgentStateId) -> (usize, i64) {
        (s.0 / 3, (s.0 % 3) as i64 - 1)
    }

    pub fn index(&self, p: usize, v: i64) -> AgentStateId {
        AgentStateId(p * 3 + (v + 1) as usize)
    }

    /// `v' = clip(v + a)`, `p' = p + v'`; leaving the line clamps the position
    /// and zeroes the velocity.
    pub fn step(&self, p: usize, v: i64, accel: i64) -> (usize, i64) {
        let v2 = (v + accel).clamp(-1, 1);
        let target = p as i64 + v2;
        if target < 0 || target >= self.length as i64 {
            (target.clamp(0, self.length as i64 - 1) as usize, 0)
        } else {
            (target as usize, v2)
        }
    }

    /// Whether two anchor states differ only by a velocity that is about to
    /// be zeroed by the wall.
    pub fn is_collision_pair(&self, a: AgentStateId, b: AgentStateId) -> bool {
        let (pa, va) = self.state(a);
        let (pb, vb) = self.state(b);
        let last = self.length - 1;
        let into_wall = |p: usize, v: i64| (p == last && v == 1) || (p == 0 && v == -1);
        pa == pb && (pa == 0 || pa == last) && (into_wall(pa, va) || into_wall(pb, vb))
    }
}

pub fn navigation_env(spec: &NavSpec) -> AgentEnv {
    assert!(spec.length >= 2, "navigation needs at least two cells");
    let count = spec.length * 3;
    let table = (0..count)
        .map(|s| {
            let (p, v) = spec.state(AgentStateId(s));
            (-1..=1)
                .map(|acc| {
                    let (p2, v2) = spec.step(p, v, acc);
                    spec.index(p2, v2).0
                })
                .collect()
        })
        .collect();
    AgentEnv {
        name: "navigation".into(),
        dynamics: AgentDynamics::from_table(table),
        action_labels: vec!["-1".into(), "0".into(), "1".into()],
        state_labels: (0..count)
            .map(|s| {
                let (p, v) = spec.state(AgentStateId(s));
                format!("({p}, {v})")
            })
            .collect(),
        symbol: (0..count)
            .map(|s| {
                let p = s / 3;
                if spec.curtains.contains(&p) {
                    ObsSymbol::Blank
                } else {
                    ObsSymbol::Content(p)
                }
            })
            .collect(),
        symbol_labels: (0..spec.length).map(|p| p.to_string()).collect(),
        mu_s: vec![Probability::uniform(count); count],
        m: 2,
        n: 2,
    }
}

pub fn make_navigation(spec: &NavSpec) -> FmPomdp {
    compose(&navigation_env(spec), ExoDynamics::trivial(), EmissionRule::StateOnly)
}

/// A `width x height` grid with up/down/left/right moves clamped at the
/// border. Fully observed, so `m = n = 0`.
pub fn gridworld_env(width: usize, height: usize) -> AgentEnv {
    let count = width * height;
    let moves: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
    let table = (0..count)
        .map(|s| {
            let (x, y) = ((s % width) as i64, (s / width) as i64);
            moves
                .iter()
                .map(|(dx, dy)| {
                    let nx = (x + dx).clamp(0, width as i64 - 1);
                    let ny = (y + dy).clamp(0, height as i64 - 1);
                    (ny * width as i64 + nx) as usize
                })
                .collect()
        })
        .collect();
    let labels: Vec<String> = (0..count).map(|s| format!("({}, {})", s % width, s / width)).collect();
    AgentEnv {
        name: format!("gridworld-{width}x{height}"),
        dynamics: AgentDynamics::from_table(table),
        action_labels: vec!["up".into(), "down".into(), "left".into(), "right".into()],
        state_labels: labels.clone(),
        symbol: (0..count).map(ObsSymbol::Content).collect(),
        symbol_labels: labels,
        mu_s: vec![Probability::uniform(count); count],
        m: 0,
        n: 0,
    }
}

/// One multi-step inverse kinematics example: start state, action sequence,
/// and the state it leads to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct IkExample {
    pub k: usize,
    pub start: AgentStateId,
    pub end: AgentStateId,
    pub actions: Vec<ActionId>,
}

/// Every `(start, action sequence)` for `k` in `[k_lo, k_hi]`, sorted by
/// `(k, start, end, actions)`.
pub fn ik_examples(model: &FmPomdp, k_lo: usize, k_hi: usize, budget: Budget) -> Result<Vec<IkExample>> {
    model.agent.ensure_deterministic()?;
    let ns = model.agent_count() as u128;
    let na = model.action_count() as u128;
    let total: u128 = (k_lo..=k_hi).map(|k| ns.saturating_mul(na.saturating_pow(k as u32))).sum();
    budget.check(total)?;
    let mut out = Vec::with_capacity(total as usize);
    for k in k_lo..=k_hi {
        let mut block = Vec::new();
        let combos = model.action_count().pow(k as u32);
        for start in model.agent_states() {
            for code in 0..combos {
                // most significant digit first, so codes run in lexicographic order
                let actions: Vec<ActionId> = (0..k)
                    .rev()
                    .map(|i| ActionId(code / model.action_count().pow(i as u32) % model.action_count()))
                    .collect();
                let end = actions.iter().fold(start, |s, a| model.agent.step(s, *a));
                block.push(IkExample { k, start, end, actions });
            }
        }
        block.sort();
        out.extend(block);
    }
    Ok(out)
}

/// `(0, -1)->(0, -1) via a:(1, -1)`
pub fn format_ik_example(model: &FmPomdp, ex: &IkExample) -> String {
    let actions: Vec<String> = ex.actions.iter().map(|a| model.action_label(*a)).collect();
    format!(
        "{}->{} via a:({})",
        model.agent_label(ex.start),
        model.agent_label(ex.end),
        actions.join(", ")
    )
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IkDump {
    pub lines: String,
    pub total: u64,
}

pub fn dump_ik_examples(model: &FmPomdp, k_lo: usize, k_hi: usize, budget: Budget) -> Result<IkDump> {
    let examples = ik_examples(model, k_lo, k_hi, budget)?;
    let mut lines = String::with_capacity(examples.len() * 40);
    for ex in &examples {
        let _ = writeln!(lines, "{}", format_ik_example(model, ex));
    }
    Ok(IkDump { lines, total: examples.len() as u64 })
}

/// A generated model together with the settings it was generated for.
#[derive(Clone, Debug)]
pub struct RandomCase {
    pub seed: u64,
    pub model: FmPomdp,
    pub description: String,
}

fn random_dist(rng: &mut ChaCha8Rng, len: usize, max_support: usize) -> Dist {
    let support = rng.gen_range(1..=max_support.min(len));
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..support {
        let j = rng.gen_range(i..len);
        idx.swap(i, j);
    }
    let weights: Vec<i64> = (0..support).map(|_| rng.gen_range(1..=3)).collect();
    let total: i64 = weights.iter().sum();
    let mut dist = vec![Probability::zero(); len];
    for (i, w) in idx[..support].iter().zip(weights) {
        dist[*i] = Probability::new(w, total);
    }
    dist
}

/// A random deterministic agent chain (`|S| <= 6`, `|A| <= 3`) with a random
/// exogenous chain and an emission that is decodable by construction:
/// either private per-state symbols with `ξ`-dependent noise (`m = n = 0`),
/// or a periodic mask that hides the state except on phase 0
/// (`m = n = period - 1`). Strong connectivity is not guaranteed; callers
/// check the preconditions they need.
pub fn random_case(seed: u64) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.gen_range(2..=6usize);
    let na = rng.gen_range(2..=3usize);
    let table: Vec<Vec<usize>> = (0..ns).map(|_| (0..na).map(|_| rng.gen_range(0..ns)).collect()).collect();
    let dynamics = AgentDynamics::from_table(table);
    let masked = rng.gen_bool(0.4);
    let (exo, m, emission, content, description);
    if masked {
        let period = rng.gen_range(1..=3usize);
        exo = ExoDynamics::cycle(period);
        m = period - 1;
        content = ns;
        emission = Emission::deterministic(ns, period, ns, |s, x| {
            if x.0 == 0 {
                ObsSymbol::Content(s.0)
            } else {
                ObsSymbol::Blank
            }
        });
        description = format!("|S|={ns} |A|={na} masked period {period}");
    } else {
        let nx = rng.gen_range(1..=3usize);
        exo = ExoDynamics::new((0..nx).map(|_| random_dist(&mut rng, nx, nx)).collect());
        m = 0;
        // state s owns symbols 2s and 2s+1
        content = 2 * ns;
        let rows = (0..ns)
            .map(|s| {
                (0..nx)
                    .map(|_| {
                        let mut row = vec![Probability::zero(); content + 1];
                        let d = random_dist(&mut rng, 2, 2);
                        row[2 * s] = d[0].clone();
                        row[2 * s + 1] = d[1].clone();
                        row
                    })
                    .collect()
            })
            .collect();
        emission = Emission::new(rows, content);
        description = format!("|S|={ns} |A|={na} |Ξ|={nx} private symbols");
    }
    let nx = exo.state_count();
    let d = diameter(&dynamics).unwrap_or(ns);
    let mu_s = vec![Probability::uniform(ns); ns];
    let mu_xi = vec![Probability::uniform(nx); nx];
    let model = FmPomdp {
        name: format!("random-{seed}"),
        initial: FmPomdp::factored_initial(&mu_s, &mu_xi),
        agent: dynamics,
        exo,
        emission,
        m,
        n: m,
        horizon: 2 * m + d + 1,
        block: false,
        labels: Labels::numeric(na, ns, nx, content),
    };
    RandomCase { seed, model, description }
}

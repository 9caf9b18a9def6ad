//! Report-producing front end over `fmlab-core`.
//!
//! [`run`] turns a [`RunConfig`] into a [`Report`] plus any text artifacts
//! (dumps, CSV matrices, decoder tables); [`execute`] writes them and maps
//! the outcome to an exit status.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use fmlab_core::decode::{check_decodability, derive_decoder_for, DecodeQuery};
use fmlab_core::discovery::{confusion_csv, discover_partition, recovery_preconditions, KVisibility};
use fmlab_core::error::Error as CoreError;
use fmlab_core::gallery::{
    compose, dump_ik_examples, gridworld_env, make_fj_counterexample, make_fj_counterexample_observed, make_navigation,
    navigation_env, random_case, EmissionRule, NavSpec,
};
use fmlab_core::inference::{verify_decoupling, verify_decoupling_upto, verify_identity};
use fmlab_core::io::{model_hash, read_model, read_policy, text_hash, write_decoder};
use fmlab_core::model::{diameter, shortest_paths, validate_model, validate_policy, ExoDynamics, FmPomdp, Policy};
use fmlab_core::objective::Objective;
use fmlab_core::prob::Probability;
use fmlab_core::trajectory::{dump_trajectory, simulate, Budget, DEFAULT_BUDGET};
use serde::Serialize;
use serde_json::{json, Value};

pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

pub const BUILTIN_MODELS: [&str; 5] =
    ["fj-counterexample", "fj-counterexample-observed", "navigation", "navigation-exo", "gridworld-exo"];

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Diameter,
    Decodability,
    Identities,
    Decoupling,
    Discover,
    DumpIk,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Diameter => "diameter",
            Command::Decodability => "decodability",
            Command::Identities => "identities",
            Command::Decoupling => "decoupling",
            Command::Discover => "discover",
            Command::DumpIk => "dump-ik",
            Command::Simulate => "simulate",
        }
    }
}

/// Inclusive `lo..hi` offset range, written `1..10` or just `3`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct KRange {
    pub lo: usize,
    pub hi: usize,
}

impl FromStr for KRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("bad offset range {s:?}"));
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let k = parse(s)?;
                (k, k)
            }
        };
        if lo == 0 || lo > hi {
            return Err(format!("offset range {s:?} must satisfy 1 <= lo <= hi"));
        }
        Ok(KRange { lo, hi })
    }
}

impl fmt::Display for KRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

impl Serialize for KRange {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    /// Builtin name, `random-<seed>`, or a path to a model document.
    pub model: String,
    /// `uniform` or a path to a policy document.
    pub policy: String,
    pub objectives: Vec<Objective>,
    pub k_max: Option<usize>,
    pub k_range: Option<KRange>,
    /// Anchor `t*`; defaults to `m + 1`.
    pub t: Option<usize>,
    pub seed: u64,
    pub budget: u128,
    /// Overrides of the model's window spans for `decodability`.
    pub m: Option<usize>,
    pub n: Option<usize>,
    /// Decoupling step count; every `h` in `1..H` when absent.
    pub h: Option<usize>,
    pub length: Option<usize>,
    pub k_visibility: KVisibility,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub artifact: Option<PathBuf>,
    #[serde(skip)]
    pub decimal: bool,
    #[serde(skip)]
    pub timing: bool,
}

impl RunConfig {
    pub fn new(command: Command, model: &str) -> Self {
        Self {
            command,
            model: model.to_string(),
            policy: "uniform".into(),
            objectives: Vec::new(),
            k_max: None,
            k_range: None,
            t: None,
            seed: 0,
            budget: DEFAULT_BUDGET,
            m: None,
            n: None,
            h: None,
            length: None,
            k_visibility: KVisibility::Hidden,
            output: None,
            artifact: None,
            decimal: false,
            timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelInfo {
    pub name: String,
    pub hash: String,
    pub agent_states: usize,
    pub exo_states: usize,
    pub actions: usize,
    pub observations: usize,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub block: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub details: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
    pub all_passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub model: ModelInfo,
    pub checks: Vec<Check>,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

impl Report {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// Pretty JSON with a trailing newline; fractions stay exact unless
    /// `decimal` is set.
    pub fn render(&self, decimal: bool) -> String {
        let mut v = self.to_value();
        if decimal {
            decimalize(&mut v);
        }
        serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
    }
}

/// A text file produced alongside the report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub path: PathBuf,
    pub contents: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

/// Problems with the configuration or inputs, as opposed to failed checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    pub kind: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&json!({ "error": self })).expect("error serializes") + "\n"
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for ConfigError {}

impl From<CoreError> for ConfigError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::BudgetExceeded { .. } => "budget_exceeded",
            CoreError::Parse(_) => "parse",
            CoreError::InvalidModel(_) | CoreError::NonDeterministic { .. } => "invalid_model",
            CoreError::NonEndogenousPolicy { .. } => "invalid_policy",
            CoreError::OutOfRange(_) => "out_of_range",
            _ => "core",
        };
        ConfigError::new(kind, e.to_string())
    }
}

/// Resolves a builtin name or reads a model document.
pub fn load_model(source: &str) -> Result<FmPomdp, ConfigError> {
    let nav = NavSpec { length: 5, curtains: vec![] };
    let model = match source {
        "fj-counterexample" => make_fj_counterexample(),
        "fj-counterexample-observed" => make_fj_counterexample_observed(),
        "navigation" => make_navigation(&nav),
        "navigation-exo" => {
            let mut m = compose(&navigation_env(&nav), ExoDynamics::cycle(4), EmissionRule::StateOnly);
            m.name = "navigation-exo".into();
            m
        }
        "gridworld-exo" => {
            let mut m = compose(&gridworld_env(3, 3), ExoDynamics::cycle(4), EmissionRule::StateOnly);
            m.name = "gridworld-exo".into();
            m
        }
        other => {
            if let Some(seed) = other.strip_prefix("random-").and_then(|s| s.parse::<u64>().ok()) {
                random_case(seed).model
            } else {
                let path = Path::new(other);
                if !path.is_file() {
                    return Err(ConfigError::new(
                        "unknown_model",
                        format!("{other:?} is neither a builtin ({}, random-<seed>) nor a file", BUILTIN_MODELS.join(", ")),
                    ));
                }
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError::new("io", format!("reading {other}: {e}")))?;
                read_model(&text)?
            }
        }
    };
    Ok(model)
}

pub fn load_policy(model: &FmPomdp, source: &str) -> Result<Policy, ConfigError> {
    if source == "uniform" {
        return Ok(Policy::uniform(model));
    }
    let text = std::fs::read_to_string(source).map_err(|e| ConfigError::new("io", format!("reading policy {source}: {e}")))?;
    Ok(read_policy(model, &text)?)
}

fn model_info(model: &FmPomdp) -> ModelInfo {
    ModelInfo {
        name: model.name.clone(),
        hash: model_hash(model),
        agent_states: model.agent_count(),
        exo_states: model.exo_count(),
        actions: model.action_count(),
        observations: model.emission.content_count(),
        m: model.m,
        n: model.n,
        horizon: model.horizon,
        block: model.block,
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn check(name: impl Into<String>, passed: bool, details: Value) -> Check {
    Check { name: name.into(), passed, details }
}

/// A check that could not be evaluated because its premises fail.
fn failed_premise(name: impl Into<String>, e: &CoreError) -> Result<Check, ConfigError> {
    match e {
        CoreError::AssumptionViolated(_) | CoreError::NotDecodable(_) | CoreError::NonDeterministic { .. } | CoreError::NonEndogenousPolicy { .. } | CoreError::Unreachable { .. } => {
            Ok(check(name, false, json!({ "error": e.to_string() })))
        }
        _ => Err(e.clone().into()),
    }
}

fn artifact_path(config: &RunConfig, suffix: &str) -> Option<PathBuf> {
    config.artifact.as_ref().map(|p| {
        if suffix.is_empty() {
            p.clone()
        } else {
            let mut s = p.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        }
    })
}

fn require_valid(model: &FmPomdp, policy: &Policy) -> Result<(), ConfigError> {
    let v = validate_model(model);
    if let Some(first) = v.violations.first() {
        return Err(ConfigError::new("invalid_model", format!("{first:?}")));
    }
    let v = validate_policy(model, policy);
    if let Some(first) = v.violations.first() {
        return Err(ConfigError::new("invalid_policy", format!("{first:?}")));
    }
    Ok(())
}

fn default_k_max(model: &FmPomdp) -> Result<usize, ConfigError> {
    diameter(&model.agent).map_err(|e| ConfigError::new("diameter_undefined", format!("{e}; pass --kmax")))
}

/// Runs one command without touching the file system (beyond reading the
/// model and policy).
pub fn run(config: &RunConfig) -> Result<Outcome, ConfigError> {
    if config.budget == 0 {
        return Err(ConfigError::new("invalid_config", "budget must be positive"));
    }
    let started = Instant::now();
    let model = load_model(&config.model)?;
    let policy = load_policy(&model, &config.policy)?;
    let budget = Budget(config.budget);
    let mut checks = Vec::new();
    let mut artifacts = Vec::new();
    let t = config.t.unwrap_or(model.m + 1);

    if config.command != Command::Validate {
        require_valid(&model, &policy)?;
    }

    match config.command {
        Command::Validate => {
            let mv = validate_model(&model);
            checks.push(check("model_valid", mv.is_valid(), to_value(&mv)));
            if mv.is_valid() {
                let pv = validate_policy(&model, &policy);
                checks.push(check("policy_valid", pv.is_valid(), to_value(&pv)));
            }
        }
        Command::Diameter => match shortest_paths(&model.agent).and_then(|dist| Ok((diameter(&model.agent)?, dist))) {
            Ok((d, dist)) => {
                let needed = model.m + model.n + d + 1;
                checks.push(check("diameter_defined", true, json!({ "diameter": d, "distances": dist })));
                checks.push(check(
                    "horizon_covers_discovery",
                    model.horizon >= needed,
                    json!({ "H": model.horizon, "required": needed }),
                ));
                if let Some(path) = artifact_path(config, "") {
                    artifacts.push(Artifact { path, contents: distance_csv(&model, &dist) });
                }
            }
            Err(e) => checks.push(failed_premise("diameter_defined", &e)?),
        },
        Command::Decodability => {
            let m = config.m.unwrap_or(model.m);
            let n = config.n.unwrap_or(model.n);
            for (name, query, suffix) in [
                ("past_decodable", DecodeQuery::past(&model, m), ".past.json"),
                ("future_decodable", DecodeQuery::future(&model, n), ".future.json"),
            ] {
                let verdict = check_decodability(&model, &policy, query.clone(), budget)?;
                let holds = verdict.holds;
                let mut details = to_value(&verdict);
                details["witness_labels"] = match &verdict.witness {
                    Some(w) => json!([model.agent_label(w.first), model.agent_label(w.second)]),
                    None => Value::Null,
                };
                checks.push(check(name, holds, details));
                if holds {
                    if let Some(path) = artifact_path(config, suffix) {
                        let decoder = derive_decoder_for(&model, &policy, query, budget)?;
                        artifacts.push(Artifact { path, contents: write_decoder(&model, &decoder) });
                    }
                }
            }
        }
        Command::Identities => {
            let k_max = match config.k_max {
                Some(k) => k,
                None => default_k_max(&model)?,
            };
            for objective in objectives_or(config, &[Objective::MikA]) {
                let name = format!("identity_{objective}");
                match verify_identity(&model, &policy, objective, k_max, t, budget) {
                    Ok(r) => checks.push(check(name, r.passed, to_value(&r))),
                    Err(e) => checks.push(failed_premise(name, &e)?),
                }
            }
        }
        Command::Decoupling => {
            let reports = match config.h {
                Some(h) => vec![verify_decoupling(&model, &policy, h)?],
                None => verify_decoupling_upto(&model, &policy, model.horizon - 1)?,
            };
            for r in reports {
                checks.push(check(format!("decoupling_h{}", r.h), r.passed, to_value(&r)));
            }
        }
        Command::Discover => {
            let k_max = match config.k_max {
                Some(k) => k,
                None => default_k_max(&model)?,
            };
            let pre = recovery_preconditions(&model, &policy, k_max, budget)?;
            for objective in objectives_or(config, &[Objective::MikA]) {
                let name = format!("recovers_{objective}");
                match discover_partition(&model, &policy, objective, k_max, t, config.k_visibility, budget) {
                    Ok(d) => {
                        let mut details = to_value(&d);
                        details["merged_state_pairs"] = json!(d
                            .separation
                            .unseparated_pairs()
                            .iter()
                            .filter(|(a, b)| d.state_partition.class_of(a) == d.state_partition.class_of(b))
                            .map(|(a, b)| [model.agent_label(*a), model.agent_label(*b)])
                            .collect::<Vec<_>>());
                        details["preconditions"] = to_value(&pre);
                        checks.push(check(name, d.verdict.isomorphic, details));
                        let tag = objective.name().to_ascii_lowercase();
                        if let Some(path) = artifact_path(config, &format!(".{tag}.confusion.csv")) {
                            artifacts.push(Artifact { path, contents: confusion_csv(&d.verdict) });
                        }
                        if let Some(path) = artifact_path(config, &format!(".{tag}.separation.csv")) {
                            artifacts.push(Artifact { path, contents: d.separation.to_csv() });
                        }
                    }
                    Err(e) => checks.push(failed_premise(name, &e)?),
                }
            }
        }
        Command::DumpIk => {
            let range = config.k_range.unwrap_or(KRange { lo: 1, hi: default_k_max(&model)? });
            let dump = dump_ik_examples(&model, range.lo, range.hi, budget)?;
            let ns = model.agent_count() as u128;
            let na = model.action_count() as u128;
            let expected: u128 = (range.lo..=range.hi).map(|k| ns * na.pow(k as u32)).sum();
            let lines = dump.lines.lines().count() as u128;
            checks.push(check(
                "line_count_formula",
                lines == expected && u128::from(dump.total) == expected,
                json!({ "lines": lines as u64, "expected": expected as u64, "sha256": text_hash(&dump.lines) }),
            ));
            if let Some(path) = artifact_path(config, "") {
                artifacts.push(Artifact { path, contents: dump.lines });
            }
        }
        Command::Simulate => {
            let length = config.length.unwrap_or(model.horizon);
            let traj = simulate(&model, &policy, length, config.seed)?;
            let hash = model_hash(&model);
            let text = dump_trajectory(&hash, config.seed, &traj);
            let consistent = traj.steps.windows(2).all(|w| match w[0].a {
                Some(a) => model.agent.step(w[0].s, a) == w[1].s,
                None => false,
            });
            checks.push(check(
                "trajectory_consistent",
                consistent && traj.weight.is_positive() && traj.len() == length,
                json!({
                    "length": traj.len(),
                    "weight": traj.weight,
                    "states": traj.steps.iter().map(|s| model.agent_label(s.s)).collect::<Vec<_>>(),
                    "observations": traj.steps.iter().map(|s| s.o.to_string()).collect::<Vec<_>>(),
                    "actions": traj.steps.iter().map(|s| s.a.map(|a| model.action_label(a))).collect::<Vec<_>>(),
                    "sha256": text_hash(&text),
                }),
            ));
            if let Some(path) = artifact_path(config, "") {
                artifacts.push(Artifact { path, contents: text });
            }
        }
    }

    let passed = checks.iter().filter(|c| c.passed).count();
    let summary = Summary { checks: checks.len(), passed, failed: checks.len() - passed, all_passed: passed == checks.len() };
    let report = Report {
        tool: "fmlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: config.command.name().into(),
        config: config.clone(),
        model: model_info(&model),
        checks,
        summary,
        wall_time_ms: config.timing.then(|| started.elapsed().as_millis() as u64),
    };
    Ok(Outcome { report, artifacts })
}

fn objectives_or(config: &RunConfig, default: &[Objective]) -> Vec<Objective> {
    if config.objectives.is_empty() {
        default.to_vec()
    } else {
        config.objectives.clone()
    }
}

fn distance_csv(model: &FmPomdp, dist: &[Vec<Option<usize>>]) -> String {
    let mut out = String::from("from");
    for s in model.agent_states() {
        out.push_str(&format!(",\"{}\"", model.agent_label(s)));
    }
    out.push('\n');
    for (s, row) in model.agent_states().zip(dist) {
        out.push_str(&format!("\"{}\"", model.agent_label(s)));
        for d in row {
            match d {
                Some(d) => out.push_str(&format!(",{d}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Replaces every exact-fraction string with a six-significant-digit
/// decimal.
pub fn decimalize(v: &mut Value) {
    match v {
        Value::String(s) => {
            if let Some(p) = parse_fraction(s) {
                *s = p.to_decimal_string();
            }
        }
        Value::Array(xs) => xs.iter_mut().for_each(decimalize),
        Value::Object(map) => map.values_mut().for_each(decimalize),
        _ => {}
    }
}

fn parse_fraction(s: &str) -> Option<Probability> {
    let (a, b) = s.split_once('/')?;
    let digits = |x: &str| !x.is_empty() && x.trim_start_matches('-').bytes().all(|c| c.is_ascii_digit());
    if digits(a) && digits(b) {
        s.parse().ok()
    } else {
        None
    }
}

/// Runs, writes the report and artifacts, and returns the exit status:
/// 0 when every check passed, 1 when some check failed, 2 on a
/// configuration error (reported as a JSON error object on stdout).
pub fn execute(config: &RunConfig) -> i32 {
    match run(config).and_then(|outcome| write_outcome(config, &outcome).map(|()| outcome)) {
        Ok(outcome) => {
            if outcome.report.summary.all_passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            emit(&e.to_json());
            2
        }
    }
}

fn write_outcome(config: &RunConfig, outcome: &Outcome) -> Result<(), ConfigError> {
    let write = |path: &Path, contents: &str| {
        std::fs::write(path, contents).map_err(|e| ConfigError::new("io", format!("writing {}: {e}", path.display())))
    };
    for a in &outcome.artifacts {
        write(&a.path, &a.contents)?;
    }
    match &config.output {
        Some(path) => {
            write(path, &outcome.report.render(false))?;
            if config.decimal {
                emit(&outcome.report.render(true));
            }
        }
        None => emit(&outcome.report.render(config.decimal)),
    }
    Ok(())
}

/// Writes to stdout; a closed pipe is not an error.
pub fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_ranges_parse() {
        assert_eq!("1..10".parse::<KRange>().unwrap(), KRange { lo: 1, hi: 10 });
        assert_eq!("1..=3".parse::<KRange>().unwrap(), KRange { lo: 1, hi: 3 });
        assert_eq!("4".parse::<KRange>().unwrap(), KRange { lo: 4, hi: 4 });
        assert!("0..2".parse::<KRange>().is_err());
        assert!("3..2".parse::<KRange>().is_err());
        assert!("x".parse::<KRange>().is_err());
    }

    #[test]
    fn decimal_rendering_only_touches_fractions() {
        let mut v = json!({ "p": "1/3", "label": "(0, -1)", "xs": ["2/4", "a/b", "-1/2"], "n": 3 });
        decimalize(&mut v);
        assert_eq!(v, json!({ "p": "0.333333", "label": "(0, -1)", "xs": ["0.500000", "a/b", "-0.500000"], "n": 3 }));
    }

    #[test]
    fn unknown_builtin_is_a_config_error() {
        let err = load_model("no-such-model").unwrap_err();
        assert_eq!(err.kind, "unknown_model");
        let parsed: Value = serde_json::from_str(&err.to_json()).unwrap();
        assert_eq!(parsed["error"]["kind"], "unknown_model");
    }

    #[test]
    fn every_builtin_loads_and_validates() {
        for name in BUILTIN_MODELS {
            let m = load_model(name).unwrap();
            assert!(validate_model(&m).is_valid(), "{name}");
        }
        assert_eq!(load_model("random-7").unwrap(), random_case(7).model);
    }

    #[test]
    fn zero_budget_is_rejected() {
        let mut c = RunConfig::new(Command::Diameter, "fj-counterexample");
        c.budget = 0;
        assert_eq!(run(&c).unwrap_err().kind, "invalid_config");
    }
}

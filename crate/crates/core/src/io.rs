//! The JSON model interchange format, policy files, decoder export and the
//! model hash.
//!
//! A model document carries integer alphabet sizes, the agent transition
//! table as a dense `[s][a]` array (an entry is a successor index, or a list
//! of indices for a non-deterministic entry the validator should see), and
//! exact `"p/q"` fractions for the exogenous matrix, the emission rows
//! `[s][ξ][o]` (content symbols, then one trailing column for the blank
//! symbol) and the initial distribution `[s][ξ]`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decode::Decoder;
use crate::error::{Error, Result};
use crate::model::{AgentDynamics, AgentStateId, Emission, ExoDynamics, FmPomdp, Labels, Policy};
use crate::prob::Dist;

pub const MODEL_FORMAT: &str = "fmlab-model/1";
pub const POLICY_FORMAT: &str = "fmlab-policy/1";
pub const DECODER_FORMAT: &str = "fmlab-decoder/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Successors {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: String,
    pub name: String,
    pub actions: usize,
    pub agent_states: usize,
    pub exo_states: usize,
    /// Content symbols; the blank symbol is implicit.
    pub observations: usize,
    pub dynamics: Vec<Vec<Successors>>,
    pub exo: Vec<Dist>,
    pub emission: Vec<Vec<Dist>>,
    pub initial: Vec<Dist>,
    pub block: bool,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
}

impl ModelDocument {
    pub fn from_model(model: &FmPomdp) -> Self {
        let dynamics = model
            .agent
            .successor_sets()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|set| match set.as_slice() {
                        [one] => Successors::One(one.0),
                        many => Successors::Many(many.iter().map(|s| s.0).collect()),
                    })
                    .collect()
            })
            .collect();
        Self {
            format: MODEL_FORMAT.to_string(),
            name: model.name.clone(),
            actions: model.action_count(),
            agent_states: model.agent_count(),
            exo_states: model.exo_count(),
            observations: model.emission.content_count(),
            dynamics,
            exo: model.exo.matrix.clone(),
            emission: model.emission.rows().to_vec(),
            initial: model.initial.clone(),
            block: model.block,
            m: model.m,
            n: model.n,
            horizon: model.horizon,
            labels: Some(model.labels.clone()),
        }
    }

    /// Checks every array shape and index, then builds the model. Row sums
    /// and the other semantic invariants are left to the validator.
    pub fn into_model(self) -> Result<FmPomdp> {
        let shape = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Parse(format!("{what}: expected {want} entries, found {got}")))
            }
        };
        if self.format != MODEL_FORMAT {
            return Err(Error::Parse(format!("unknown model format {:?}", self.format)));
        }
        let (ns, na, nx, no) = (self.agent_states, self.actions, self.exo_states, self.observations);
        if ns == 0 || na == 0 || nx == 0 {
            return Err(Error::Parse("alphabets must be non-empty".into()));
        }
        if no >= usize::from(crate::model::ObsSymbol::Blank.code()) {
            return Err(Error::Parse(format!("too many observation symbols: {no}")));
        }
        shape("dynamics", self.dynamics.len(), ns)?;
        let mut sets = Vec::with_capacity(ns);
        for (s, row) in self.dynamics.into_iter().enumerate() {
            shape(&format!("dynamics[{s}]"), row.len(), na)?;
            let row: Vec<Vec<usize>> = row
                .into_iter()
                .map(|e| match e {
                    Successors::One(x) => vec![x],
                    Successors::Many(xs) => xs,
                })
                .collect();
            if let Some(bad) = row.iter().flatten().find(|&&x| x >= ns) {
                return Err(Error::Parse(format!("dynamics[{s}] names agent state {bad} of {ns}")));
            }
            sets.push(row);
        }
        shape("exo", self.exo.len(), nx)?;
        for (x, row) in self.exo.iter().enumerate() {
            shape(&format!("exo[{x}]"), row.len(), nx)?;
        }
        shape("emission", self.emission.len(), ns)?;
        for (s, per_exo) in self.emission.iter().enumerate() {
            shape(&format!("emission[{s}]"), per_exo.len(), nx)?;
            for (x, row) in per_exo.iter().enumerate() {
                shape(&format!("emission[{s}][{x}]"), row.len(), no + 1)?;
            }
        }
        shape("initial", self.initial.len(), ns)?;
        for (s, row) in self.initial.iter().enumerate() {
            shape(&format!("initial[{s}]"), row.len(), nx)?;
        }
        let labels = match self.labels {
            Some(l) => {
                shape("labels.actions", l.actions.len(), na)?;
                shape("labels.agent_states", l.agent_states.len(), ns)?;
                shape("labels.exo_states", l.exo_states.len(), nx)?;
                shape("labels.observations", l.observations.len(), no)?;
                l
            }
            None => Labels::numeric(na, ns, nx, no),
        };
        if self.horizon == 0 {
            return Err(Error::Parse("H must be positive".into()));
        }
        Ok(FmPomdp {
            name: self.name,
            agent: AgentDynamics::from_successor_sets(sets),
            exo: ExoDynamics::new(self.exo),
            emission: Emission::new(self.emission, no),
            m: self.m,
            n: self.n,
            horizon: self.horizon,
            initial: self.initial,
            block: self.block,
            labels,
        })
    }
}

pub fn write_model(model: &FmPomdp) -> String {
    let mut out = serde_json::to_string_pretty(&ModelDocument::from_model(model)).expect("model document serializes");
    out.push('\n');
    out
}

pub fn read_model(text: &str) -> Result<FmPomdp> {
    serde_json::from_str::<ModelDocument>(text)?.into_model()
}

/// First 16 hex digits of the SHA-256 of the compact model document.
pub fn model_hash(model: &FmPomdp) -> String {
    let canonical = serde_json::to_vec(&ModelDocument::from_model(model)).expect("model document serializes");
    let digest = Sha256::digest(&canonical);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Full SHA-256 hex digest of a text artifact.
pub fn text_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// A policy file: `rows[s][a]` for an endogenous policy, or
/// `latent_rows[s][ξ][a]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Dist>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_rows: Option<Vec<Vec<Dist>>>,
}

pub fn read_policy(model: &FmPomdp, text: &str) -> Result<Policy> {
    let doc: PolicyDocument = serde_json::from_str(text)?;
    if doc.format != POLICY_FORMAT {
        return Err(Error::Parse(format!("unknown policy format {:?}", doc.format)));
    }
    let (ns, nx, na) = (model.agent_count(), model.exo_count(), model.action_count());
    let bad = |what: String| Error::Parse(format!("policy {what} does not match the model"));
    match (doc.rows, doc.latent_rows) {
        (Some(rows), None) => {
            if rows.len() != ns || rows.iter().any(|r| r.len() != na) {
                return Err(bad("rows".into()));
            }
            Ok(Policy::endogenous(rows, nx))
        }
        (None, Some(rows)) => {
            if rows.len() != ns || rows.iter().any(|r| r.len() != nx || r.iter().any(|d| d.len() != na)) {
                return Err(bad("latent_rows".into()));
            }
            Ok(Policy::latent(rows))
        }
        _ => Err(Error::Parse("policy needs exactly one of rows, latent_rows".into())),
    }
}

pub fn write_policy(policy: &Policy) -> String {
    let doc = if policy.is_endogenous() {
        PolicyDocument {
            format: POLICY_FORMAT.into(),
            rows: Some(policy.rows().iter().map(|per_exo| per_exo[0].clone()).collect()),
            latent_rows: None,
        }
    } else {
        PolicyDocument { format: POLICY_FORMAT.into(), rows: None, latent_rows: Some(policy.rows().to_vec()) }
    };
    serde_json::to_string_pretty(&doc).expect("policy serializes") + "\n"
}

#[derive(Serialize)]
struct DecoderDocument<'a> {
    format: &'static str,
    model: String,
    model_hash: String,
    decoder: &'a Decoder,
    state_labels: Vec<String>,
}

/// A decoder table for audit, tied to the model it was derived from.
pub fn write_decoder(model: &FmPomdp, decoder: &Decoder) -> String {
    let states: Vec<AgentStateId> = model.agent_states().collect();
    let doc = DecoderDocument {
        format: DECODER_FORMAT,
        model: model.name.clone(),
        model_hash: model_hash(model),
        decoder,
        state_labels: states.iter().map(|s| model.agent_label(*s)).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("decoder serializes") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{make_fj_counterexample, make_navigation, random_case, NavSpec};
    use crate::model::validate_model;

    #[test]
    fn round_trip_preserves_models() {
        let models = [
            make_fj_counterexample(),
            make_navigation(&NavSpec { length: 5, curtains: vec![] }),
            random_case(3).model,
            random_case(11).model,
        ];
        for model in models {
            let text = write_model(&model);
            let back = read_model(&text).unwrap();
            assert_eq!(back, model);
            assert_eq!(write_model(&back), text);
            assert_eq!(model_hash(&back), model_hash(&model));
        }
    }

    #[test]
    fn fractions_are_strings() {
        let text = write_model(&make_fj_counterexample());
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["exo"][0][1], "1/1");
        assert_eq!(v["initial"][0][0], "1/32");
        assert_eq!(v["H"], 10);
        assert_eq!(v["dynamics"][0], serde_json::json!([6, 3]));
    }

    #[test]
    fn hash_tracks_content() {
        let a = make_fj_counterexample();
        assert_eq!(model_hash(&a).len(), 16);
        let mut b = a.clone();
        b.horizon += 1;
        assert_ne!(model_hash(&a), model_hash(&b));
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut v: serde_json::Value = serde_json::from_str(&write_model(&make_fj_counterexample())).unwrap();
        v["dynamics"][3] = serde_json::json!([0]);
        let err = read_model(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("dynamics[3]"), "{err}");
        v["dynamics"][3] = serde_json::json!([0, 99]);
        assert!(read_model(&v.to_string()).is_err());
    }

    #[test]
    fn nondeterministic_entries_reach_the_validator() {
        let mut v: serde_json::Value = serde_json::from_str(&write_model(&make_fj_counterexample())).unwrap();
        v["dynamics"][0][0] = serde_json::json!([1, 2]);
        let model = read_model(&v.to_string()).unwrap();
        assert!(!validate_model(&model).is_valid());
        let again: serde_json::Value = serde_json::from_str(&write_model(&model)).unwrap();
        assert_eq!(again["dynamics"][0][0], serde_json::json!([1, 2]));
    }

    #[test]
    fn policies_round_trip() {
        let model = make_fj_counterexample();
        let p = Policy::uniform(&model);
        assert_eq!(read_policy(&model, &write_policy(&p)).unwrap(), p);
        let bad = r#"{"format": "fmlab-policy/1", "rows": [["1/2", "1/2"]]}"#;
        assert!(read_policy(&model, bad).is_err());
    }
}

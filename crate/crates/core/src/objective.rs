//! The six inverse-kinematics objectives and their conditioning keys.
//!
//! | objective | first argument       | second argument          |
//! |-----------|----------------------|--------------------------|
//! | `AH`      | `o_{1:t}`            | `o_{1:t+k}`              |
//! | `AH_A`    | `õ_{1:t}`            | `õ_{1:t+k}`              |
//! | `FJ`      | past window at `t`   | past window at `t+k`     |
//! | `FJ_A`    | (same, augmented)    | (same, augmented)        |
//! | `MIK`     | past window at `t`   | future window at `t+k`   |
//! | `MIK_A`   | (same, augmented)    | (same, augmented)        |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FmPomdp;
use crate::trajectory::{future_range, past_range, AugObs, Trajectory};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "AH")]
    Ah,
    #[serde(rename = "AH_A")]
    AhA,
    #[serde(rename = "FJ")]
    Fj,
    #[serde(rename = "FJ_A")]
    FjA,
    #[serde(rename = "MIK")]
    Mik,
    #[serde(rename = "MIK_A")]
    MikA,
}

impl Objective {
    pub const ALL: [Objective; 6] = [
        Objective::Ah,
        Objective::AhA,
        Objective::Fj,
        Objective::FjA,
        Objective::Mik,
        Objective::MikA,
    ];

    pub fn with_actions(self) -> bool {
        matches!(self, Objective::AhA | Objective::FjA | Objective::MikA)
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Ah => "AH",
            Objective::AhA => "AH_A",
            Objective::Fj => "FJ",
            Objective::FjA => "FJ_A",
            Objective::Mik => "MIK",
            Objective::MikA => "MIK_A",
        }
    }

    fn tag_byte(self) -> u8 {
        Objective::ALL.iter().position(|o| *o == self).unwrap_or(0) as u8
    }

    pub fn is_all_history(self) -> bool {
        matches!(self, Objective::Ah | Objective::AhA)
    }

    pub fn is_forward_jump(self) -> bool {
        matches!(self, Objective::Fj | Objective::FjA)
    }

    pub fn is_masked(self) -> bool {
        matches!(self, Objective::Mik | Objective::MikA)
    }

    /// Inclusive index ranges of the two arguments at `(t, k)`.
    pub fn ranges(self, t: usize, k: usize, m: usize, n: usize, horizon: usize) -> Result<((usize, usize), (usize, usize))> {
        if t == 0 || k == 0 || t + k > horizon {
            return Err(Error::OutOfRange(format!("need 1 <= t, 1 <= k, t + k <= H; got t={t} k={k} H={horizon}")));
        }
        if self.is_masked() && t + k + n > horizon {
            return Err(Error::OutOfRange(format!(
                "{self} needs t + k + n <= H; got t={t} k={k} n={n} H={horizon}"
            )));
        }
        Ok(match self {
            Objective::Ah | Objective::AhA => ((1, t), (1, t + k)),
            Objective::Fj | Objective::FjA => (past_range(t, m), past_range(t + k, m)),
            Objective::Mik | Objective::MikA => (past_range(t, m), future_range(t + k, n, horizon)),
        })
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('+', "_");
        Objective::ALL
            .iter()
            .copied()
            .find(|o| o.name() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown objective {s:?}")))
    }
}

/// What the Bayes-optimal classifier at offset `k` is a function of.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KSemantics {
    /// `P(a_t | s_t, s_{t+k})`.
    MultiStep,
    /// `P(a_t | s_t, s_{t+1})`.
    OneStep,
    /// The key contains `a_t` itself; the classifier is a point mass and
    /// constrains no state.
    Constant,
}

pub fn k_semantics(objective: Objective, k: usize, m: usize) -> KSemantics {
    match objective {
        Objective::Mik | Objective::MikA => KSemantics::MultiStep,
        Objective::Fj | Objective::FjA if k > m => KSemantics::MultiStep,
        Objective::Fj | Objective::Ah => KSemantics::OneStep,
        Objective::FjA | Objective::AhA => KSemantics::Constant,
    }
}

/// The offsets in `1..=D` whose classifier is the multi-step inverse model.
pub fn usable_ks(objective: Objective, m: usize, _n: usize, diameter: usize) -> Vec<usize> {
    (1..=diameter)
        .filter(|&k| k_semantics(objective, k, m) == KSemantics::MultiStep)
        .collect()
}

/// Canonical conditioning information of one training example.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ConditioningKey {
    pub objective: Objective,
    pub t: usize,
    pub k: usize,
    pub first_start: usize,
    pub first: Vec<AugObs>,
    pub second_start: usize,
    pub second: Vec<AugObs>,
}

impl ConditioningKey {
    /// Assembles a key from the augmented observations over the union of
    /// both argument ranges, in increasing time order.
    pub fn from_union(
        objective: Objective,
        t: usize,
        k: usize,
        model: &FmPomdp,
        union_times: &[usize],
        union: &[AugObs],
    ) -> Result<Self> {
        let ((a0, a1), (b0, b1)) = objective.ranges(t, k, model.m, model.n, model.horizon)?;
        let pick = |lo: usize, hi: usize| -> Vec<AugObs> {
            union_times
                .iter()
                .zip(union)
                .filter(|(tt, _)| (lo..=hi).contains(*tt))
                .map(|(_, o)| o.stripped(objective.with_actions()))
                .collect()
        };
        Ok(Self { objective, t, k, first_start: a0, first: pick(a0, a1), second_start: b0, second: pick(b0, b1) })
    }

    /// Sorted union of the argument ranges.
    pub fn union_times(objective: Objective, t: usize, k: usize, model: &FmPomdp) -> Result<Vec<usize>> {
        let ((a0, a1), (b0, b1)) = objective.ranges(t, k, model.m, model.n, model.horizon)?;
        let mut times: Vec<usize> = (a0..=a1).chain(b0..=b1).collect();
        times.sort_unstable();
        times.dedup();
        Ok(times)
    }

    /// The augmented observation at absolute time `time`, if either argument
    /// covers it.
    pub fn obs_at(&self, time: usize) -> Option<AugObs> {
        let from = |start: usize, v: &[AugObs]| time.checked_sub(start).and_then(|i| v.get(i).copied());
        from(self.first_start, &self.first).or_else(|| from(self.second_start, &self.second))
    }

    /// Consecutive observations `lo..=hi`, if all are covered.
    pub fn span(&self, lo: usize, hi: usize) -> Option<Vec<AugObs>> {
        (lo..=hi).map(|t| self.obs_at(t)).collect()
    }

    /// Byte layout (little endian): `tag:u8 t:u16 k:u16`, then for each
    /// argument `start:u16 len:u16` followed by `len` codes `obs:u16 prev:u16`
    /// packed as `u32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.objective.tag_byte()];
        out.extend((self.t as u16).to_le_bytes());
        out.extend((self.k as u16).to_le_bytes());
        for (start, arg) in [(self.first_start, &self.first), (self.second_start, &self.second)] {
            out.extend((start as u16).to_le_bytes());
            out.extend((arg.len() as u16).to_le_bytes());
            for o in arg {
                out.extend(o.code().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Parse("truncated conditioning key".into());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(bad)?;
            pos += n;
            Ok(s)
        };
        let tag = take(1)?[0] as usize;
        let objective = *Objective::ALL.get(tag).ok_or_else(|| Error::Parse(format!("bad objective tag {tag}")))?;
        let u16_at = |s: &[u8]| u16::from_le_bytes([s[0], s[1]]) as usize;
        let t = u16_at(take(2)?);
        let k = u16_at(take(2)?);
        let mut args = Vec::with_capacity(2);
        for _ in 0..2 {
            let start = u16_at(take(2)?);
            let len = u16_at(take(2)?);
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                let c = take(4)?;
                v.push(AugObs::from_code(u32::from_le_bytes([c[0], c[1], c[2], c[3]])));
            }
            args.push((start, v));
        }
        let (second_start, second) = args.pop().ok_or_else(bad)?;
        let (first_start, first) = args.pop().ok_or_else(bad)?;
        Ok(Self { objective, t, k, first_start, first, second_start, second })
    }
}

/// Builds the key of `objective` at `(t, k)` from a trajectory.
pub fn make_key(model: &FmPomdp, objective: Objective, traj: &Trajectory, t: usize, k: usize) -> Result<ConditioningKey> {
    if traj.len() < model.horizon {
        return Err(Error::OutOfRange(format!("trajectory has {} steps, horizon is {}", traj.len(), model.horizon)));
    }
    let times = ConditioningKey::union_times(objective, t, k, model)?;
    let union: Vec<AugObs> = times.iter().map(|&tt| traj.aug(tt, objective.with_actions())).collect();
    ConditioningKey::from_union(objective, t, k, model, &times, &union)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::make_fj_counterexample;
    use crate::model::Policy;
    use crate::trajectory::{simulate, PrevAction};

    #[test]
    fn parse_names() {
        assert_eq!("MIK+A".parse::<Objective>().unwrap(), Objective::MikA);
        assert_eq!("fj_a".parse::<Objective>().unwrap(), Objective::FjA);
        assert!("XYZ".parse::<Objective>().is_err());
    }

    #[test]
    fn table_ranges() {
        assert_eq!(Objective::Ah.ranges(2, 1, 3, 3, 10).unwrap(), ((1, 2), (1, 3)));
        assert_eq!(Objective::MikA.ranges(4, 2, 1, 1, 10).unwrap(), ((3, 4), (6, 7)));
        assert_eq!(Objective::FjA.ranges(4, 2, 3, 3, 10).unwrap(), ((1, 4), (3, 6)));
        assert!(Objective::Mik.ranges(4, 3, 3, 4, 10).is_err());
        assert!(Objective::Fj.ranges(9, 2, 3, 3, 10).is_err());
        assert!(Objective::Fj.ranges(0, 1, 3, 3, 10).is_err());
    }

    #[test]
    fn usable_offsets() {
        assert_eq!(usable_ks(Objective::MikA, 3, 3, 3), vec![1, 2, 3]);
        assert_eq!(usable_ks(Objective::FjA, 3, 3, 3), Vec::<usize>::new());
        assert_eq!(usable_ks(Objective::Fj, 1, 1, 3), vec![2, 3]);
        assert!(usable_ks(Objective::AhA, 0, 0, 5).is_empty());
        assert!(usable_ks(Objective::Ah, 0, 0, 5).is_empty());
    }

    #[test]
    fn ah_keys_ignore_actions() {
        let model = make_fj_counterexample();
        let policy = Policy::uniform(&model);
        let mut a = simulate(&model, &policy, 10, 1).unwrap();
        let mut b = a.clone();
        for step in b.steps.iter_mut() {
            if let Some(act) = step.a.as_mut() {
                act.0 = 1 - act.0;
            }
        }
        // observations coincide by construction
        let ka = make_key(&model, Objective::Ah, &a, 2, 1).unwrap();
        let kb = make_key(&model, Objective::Ah, &b, 2, 1).unwrap();
        assert_eq!(ka, kb);
        assert_eq!((ka.first.len(), ka.second.len()), (2, 3));
        let ka = make_key(&model, Objective::AhA, &a, 2, 1).unwrap();
        let kb = make_key(&model, Objective::AhA, &b, 2, 1).unwrap();
        assert_ne!(ka, kb);
        a.steps.truncate(3);
        assert!(make_key(&model, Objective::Ah, &a, 2, 1).is_err());
    }

    #[test]
    fn mik_key_layout() {
        let mut model = make_fj_counterexample();
        model.m = 1;
        model.n = 1;
        let policy = Policy::uniform(&model);
        let tr = simulate(&model, &policy, 10, 9).unwrap();
        let key = make_key(&model, Objective::MikA, &tr, 4, 2).unwrap();
        assert_eq!((key.first_start, key.first.len()), (3, 2));
        assert_eq!((key.second_start, key.second.len()), (6, 2));
        assert_eq!(key.obs_at(6), Some(tr.aug(6, true)));
        assert_eq!(key.obs_at(5), None);
        assert!(matches!(key.second[0].prev, PrevAction::Taken(_)));
        assert_eq!(ConditioningKey::from_bytes(&key.to_bytes()).unwrap(), key);
    }
}

//! Text file formats: models and planned solutions as TOML documents.
//!
//! The model format is strict: unknown fields are rejected (the parse error
//! carries the offending line), all probability tables are written in full,
//! and the optional reward-normalization map travels with the instance. Table
//! layouts follow the in-memory convention:
//!
//! * `transitions[h-1][s * A + a]` is the next-state row at step `h`,
//! * `emissions[h-1][s]` is the joint-observation row at step `h` (H+1 tables),
//! * `rewards[i][h-2]` is agent `i`'s per-observation table for `h in 2..=H+1`.

use crate::approx::KeySpace;
use crate::equilibrium::{MixedProfile, Prescription, SolveKind};
use crate::info::SharingPattern;
use crate::model::{PosgModel, RewardMap};
use crate::planning::{CommonInfoPolicy, EquilibriumSolution};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("inconsistent file: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub horizon: usize,
    pub action_counts: Vec<usize>,
    pub obs_counts: Vec<usize>,
    pub initial: Vec<f64>,
    /// `[h-1][s * A + a][s']` for `h in 1..=H`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `[h-1][s][o]` for `h in 1..=H+1`.
    pub emissions: Vec<Vec<Vec<f64>>>,
    /// `[i][h-2][o]` for `h in 2..=H+1`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_map: Option<RewardMapFile>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardMapFile {
    pub scale: f64,
    pub offset: f64,
}

impl ModelFile {
    pub fn from_model(model: &PosgModel) -> ModelFile {
        let states = model.num_states;
        let a_total = model.num_joint_actions();
        let transitions = (1..=model.horizon)
            .map(|h| {
                (0..states * a_total)
                    .map(|row| model.transition_row(h, row / a_total, row % a_total).to_vec())
                    .collect()
            })
            .collect();
        let emissions = (1..=model.horizon + 1)
            .map(|h| (0..states).map(|s| model.emission_row(h, s).to_vec()).collect())
            .collect();
        let rewards = (0..model.num_agents)
            .map(|i| {
                (2..=model.horizon + 1)
                    .map(|h| model.reward_table(i, h).to_vec())
                    .collect()
            })
            .collect();
        ModelFile {
            name: model.name.clone(),
            horizon: model.horizon,
            action_counts: model.action_counts.clone(),
            obs_counts: model.obs_counts.clone(),
            initial: model.initial.clone(),
            transitions,
            emissions,
            rewards,
            reward_map: model.reward_map.map(|m| RewardMapFile {
                scale: m.scale,
                offset: m.offset,
            }),
        }
    }

    pub fn into_model(self) -> Result<PosgModel, FileError> {
        let states = self.initial.len();
        let a_total: usize = self.action_counts.iter().product();
        let o_total: usize = self.obs_counts.iter().product();
        if self.transitions.len() != self.horizon {
            return Err(FileError::Inconsistent(format!(
                "expected {} transition tables, found {}",
                self.horizon,
                self.transitions.len()
            )));
        }
        if self.emissions.len() != self.horizon + 1 {
            return Err(FileError::Inconsistent(format!(
                "expected {} emission tables, found {}",
                self.horizon + 1,
                self.emissions.len()
            )));
        }
        if self.rewards.len() != self.action_counts.len() {
            return Err(FileError::Inconsistent(format!(
                "expected {} reward blocks, found {}",
                self.action_counts.len(),
                self.rewards.len()
            )));
        }
        let mut transitions = Vec::with_capacity(self.horizon);
        for (t, table) in self.transitions.iter().enumerate() {
            if table.len() != states * a_total {
                return Err(FileError::Inconsistent(format!(
                    "transition table {} has {} rows, expected {}",
                    t + 1,
                    table.len(),
                    states * a_total
                )));
            }
            let mut flat = Vec::with_capacity(states * a_total * states);
            for row in table {
                if row.len() != states {
                    return Err(FileError::Inconsistent(
                        "transition row has wrong length".into(),
                    ));
                }
                flat.extend(row.iter().copied());
            }
            transitions.push(flat);
        }
        let mut emissions = Vec::with_capacity(self.horizon + 1);
        for (t, table) in self.emissions.iter().enumerate() {
            if table.len() != states {
                return Err(FileError::Inconsistent(format!(
                    "emission table {} has {} rows, expected {}",
                    t + 1,
                    table.len(),
                    states
                )));
            }
            let mut flat = Vec::with_capacity(states * o_total);
            for row in table {
                if row.len() != o_total {
                    return Err(FileError::Inconsistent(
                        "emission row has wrong length".into(),
                    ));
                }
                flat.extend(row.iter().copied());
            }
            emissions.push(flat);
        }
        let mut rewards = Vec::with_capacity(self.rewards.len() * self.horizon * o_total);
        for block in &self.rewards {
            if block.len() != self.horizon {
                return Err(FileError::Inconsistent(format!(
                    "reward block has {} steps, expected {}",
                    block.len(),
                    self.horizon
                )));
            }
            for row in block {
                if row.len() != o_total {
                    return Err(FileError::Inconsistent("reward row has wrong length".into()));
                }
                rewards.extend(row.iter().copied());
            }
        }
        Ok(PosgModel::from_parts(
            self.name,
            self.horizon,
            self.action_counts,
            self.obs_counts,
            self.initial,
            transitions,
            emissions,
            rewards,
            self.reward_map.map(|m| RewardMap {
                scale: m.scale,
                offset: m.offset,
            }),
        ))
    }
}

pub fn model_to_toml(model: &PosgModel) -> Result<String, FileError> {
    Ok(toml::to_string(&ModelFile::from_model(model))?)
}

pub fn model_from_toml(text: &str) -> Result<PosgModel, FileError> {
    let file: ModelFile = toml::from_str(text)?;
    file.into_model()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub pattern: SharingPattern,
    pub key_space: KeySpace,
    pub kind: SolveKind,
    pub steps: Vec<StepFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFile {
    pub h: usize,
    pub entries: Vec<EntryFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryFile {
    pub key: u64,
    /// Per-agent value at this key; empty when the dump carries only a policy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    pub atoms: Vec<AtomFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomFile {
    pub prescriptions: Vec<PrescriptionFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescriptionFile {
    pub num_private: usize,
    pub num_actions: usize,
    pub probs: Vec<f64>,
}

impl SolutionFile {
    pub fn from_solution(solution: &EquilibriumSolution) -> SolutionFile {
        let steps = solution
            .policy
            .steps
            .iter()
            .enumerate()
            .map(|(idx, profiles)| StepFile {
                h: idx + 1,
                entries: profiles
                    .iter()
                    .map(|(key, mixed)| EntryFile {
                        key: *key,
                        values: solution.values[idx].get(key).cloned().unwrap_or_default(),
                        gap: solution.stage_gaps[idx].get(key).copied(),
                        atoms: mixed
                            .atoms
                            .iter()
                            .map(|atom| AtomFile {
                                prescriptions: atom
                                    .iter()
                                    .map(|p| PrescriptionFile {
                                        num_private: p.num_private,
                                        num_actions: p.num_actions,
                                        probs: p.probs.clone(),
                                    })
                                    .collect(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        SolutionFile {
            pattern: solution.policy.pattern,
            key_space: solution.policy.key_space,
            kind: solution.kind,
            steps,
        }
    }

    pub fn into_policy(self) -> Result<CommonInfoPolicy, FileError> {
        let mut steps = Vec::with_capacity(self.steps.len());
        for (idx, step) in self.steps.into_iter().enumerate() {
            if step.h != idx + 1 {
                return Err(FileError::Inconsistent(format!(
                    "steps out of order: found h = {}, expected {}",
                    step.h,
                    idx + 1
                )));
            }
            let mut map = BTreeMap::new();
            for entry in step.entries {
                let atoms = entry
                    .atoms
                    .into_iter()
                    .map(|atom| {
                        atom.prescriptions
                            .into_iter()
                            .map(|p| {
                                if p.probs.len() != p.num_private * p.num_actions {
                                    return Err(FileError::Inconsistent(
                                        "prescription table has wrong size".into(),
                                    ));
                                }
                                Ok(Prescription {
                                    probs: p.probs,
                                    num_private: p.num_private,
                                    num_actions: p.num_actions,
                                })
                            })
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if atoms.is_empty() {
                    return Err(FileError::Inconsistent("entry without atoms".into()));
                }
                map.insert(entry.key, MixedProfile { atoms });
            }
            steps.push(map);
        }
        Ok(CommonInfoPolicy {
            pattern: self.pattern,
            key_space: self.key_space,
            steps,
        })
    }
}

pub fn solution_to_toml(solution: &EquilibriumSolution) -> Result<String, FileError> {
    Ok(toml::to_string(&SolutionFile::from_solution(solution))?)
}

pub fn policy_from_toml(text: &str) -> Result<CommonInfoPolicy, FileError> {
    let file: SolutionFile = toml::from_str(text)?;
    file.into_policy()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::BuildOptions;
    use crate::bench::dectiger;
    use crate::equilibrium::SolveOptions;
    use crate::planning::vi_common_info;
    use std::sync::Arc;

    #[test]
    fn model_round_trip() {
        let model = dectiger(2);
        let text = model_to_toml(&model).unwrap();
        let parsed = model_from_toml(&text).unwrap();
        assert_eq!(parsed.name, model.name);
        assert_eq!(parsed.horizon, model.horizon);
        assert_eq!(parsed.initial, model.initial);
        assert!(parsed.validate().is_empty());
        for h in 1..=model.horizon {
            for s in 0..model.num_states {
                for a in 0..model.num_joint_actions() {
                    assert_eq!(parsed.transition_row(h, s, a), model.transition_row(h, s, a));
                }
            }
        }
        for i in 0..2 {
            for h in 2..=model.horizon + 1 {
                assert_eq!(parsed.reward_table(i, h), model.reward_table(i, h));
            }
        }
        assert_eq!(parsed.reward_map.unwrap().scale, 120.0);
    }

    #[test]
    fn unknown_fields_rejected_with_location() {
        let model = dectiger(1);
        let mut text = model_to_toml(&model).unwrap();
        text.push_str("\nnot_a_field = 3\n");
        let err = model_from_toml(&text).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("not_a_field"), "{message}");
        // toml errors carry the line of the offending key.
        assert!(message.contains("line"), "{message}");
    }

    #[test]
    fn missing_required_field_named() {
        let err = model_from_toml("name = \"x\"\n").unwrap_err();
        let message = err.to_string();
        assert!(message.contains("horizon"), "{message}");
    }

    #[test]
    fn solution_round_trip() {
        let model = Arc::new(dectiger(2));
        let (solution, _) = vi_common_info(
            Arc::clone(&model),
            SharingPattern::OneStepDelay,
            SolveKind::NashCooperative,
            &SolveOptions {
                eps: 0.01,
                ..Default::default()
            },
            &BuildOptions::default(),
        )
        .unwrap();
        let text = solution_to_toml(&solution).unwrap();
        let policy = policy_from_toml(&text).unwrap();
        assert_eq!(policy.pattern, solution.policy.pattern);
        assert_eq!(policy.key_space, solution.policy.key_space);
        for h in 1..=model.horizon {
            assert_eq!(policy.steps[h - 1].len(), solution.policy.steps[h - 1].len());
            for (key, mixed) in &solution.policy.steps[h - 1] {
                assert_eq!(policy.steps[h - 1][key], *mixed);
            }
        }
    }
}

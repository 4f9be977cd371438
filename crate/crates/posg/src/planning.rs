//! Backward-induction planners over exact and compressed common information,
//! best responses, and exact policy evaluation on micro instances.
//!
//! The planners run one stage game per reachable common-information state,
//! backward from the horizon: continuation values feed each stage through the
//! increment map, and the per-stage equilibrium subroutine certifies its own
//! gap. Within one step, stage games are independent and solved in parallel;
//! results are reduced in key order so the output is identical regardless of
//! worker count.

use crate::approx::{
    enumerate_space, parts_from_belief, ApproxError, BeliefSource, BuildOptions, CommonInfoGame,
    EnumeratedSpace, KeySpace, StageParts,
};
use crate::equilibrium::{
    best_response_value, best_swap, prescription_best_response, solve_stage, stage_q_mixed,
    MixedProfile, SolveError, SolveKind, SolveOptions, StageGame,
};
use crate::info::{InfoError, InfoStructure, PatternError, SharingPattern};
use crate::model::{enumerate_histories, JointPolicy, ModelError, PosgModel};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("stage solve failed at step {h}, key {key}: {source}")]
    Stage {
        h: usize,
        key: u64,
        source: SolveError,
    },
    #[error("policy keyed on {policy:?} cannot be read through game keyed on {game:?}")]
    KeySpaceMismatch { policy: KeySpace, game: KeySpace },
    #[error("policy has no entry for key {key} at step {h}")]
    MissingKey { h: usize, key: u64 },
}

/// A joint policy keyed on (possibly compressed) common information: one
/// mixture of prescription profiles per reachable key per step.
#[derive(Debug, Clone)]
pub struct CommonInfoPolicy {
    pub pattern: SharingPattern,
    pub key_space: KeySpace,
    /// `steps[h - 1]`: profile per key, `h in 1..=H`.
    pub steps: Vec<BTreeMap<u64, MixedProfile>>,
}

impl CommonInfoPolicy {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn profile(&self, h: usize, key: u64) -> Option<&MixedProfile> {
        self.steps[h - 1].get(&key)
    }

    /// Executable view of the policy: maps full joint histories to joint
    /// action distributions by splitting, compressing and looking up.
    pub fn executor<'a>(&'a self, info: &'a InfoStructure) -> PolicyExecutor<'a> {
        PolicyExecutor { policy: self, info }
    }
}

/// [`JointPolicy`] adapter for a [`CommonInfoPolicy`]. Unreachable keys fall
/// back to uniform play; they are hit only with probability zero.
pub struct PolicyExecutor<'a> {
    policy: &'a CommonInfoPolicy,
    info: &'a InfoStructure,
}

impl JointPolicy for PolicyExecutor<'_> {
    fn joint_action_dist(&self, h: usize, actions: &[usize], observations: &[usize]) -> Vec<f64> {
        let split = self.info.split_history(h, actions, observations);
        let memory = self.policy.key_space.memory();
        let values = match memory {
            None => split.common.clone(),
            Some(l) => self.info.compress(h, l, &split.common),
        };
        let key = self
            .info
            .common_layout(h, memory)
            .encode(&values)
            .expect("history values fit their layout");
        let action_counts = self.info.action_radices();
        match self.policy.profile(h, key) {
            Some(mixed) => {
                let p_comps: Vec<usize> = split
                    .private
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        self.info.private_layout(i, h).encode(v).expect("in range") as usize
                    })
                    .collect();
                mixed.joint_action_dist(&p_comps, action_counts)
            }
            None => {
                let total: usize = action_counts.iter().product();
                vec![1.0 / total as f64; total]
            }
        }
    }
}

/// A planned equilibrium: the policy, all stage values, and per-stage
/// certified gaps.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub policy: CommonInfoPolicy,
    /// `values[h - 1][key]`: per-agent `V_{i,h}`, `h in 1..=H`.
    pub values: Vec<BTreeMap<u64, Vec<f64>>>,
    pub stage_gaps: Vec<BTreeMap<u64, f64>>,
    pub kind: SolveKind,
    /// Stages downgraded from zero-sum to CCE by the antagonism check.
    pub downgraded_stages: usize,
}

impl EquilibriumSolution {
    /// `V_{i,1}` at the root (empty common information).
    pub fn root_values(&self) -> &[f64] {
        self.values[0]
            .values()
            .next()
            .expect("root key always present")
    }

    pub fn max_stage_gap(&self) -> f64 {
        self.stage_gaps
            .iter()
            .flat_map(|m| m.values())
            .fold(0.0f64, |acc, &g| acc.max(g))
    }
}

/// The exact common-information game of a model under a sharing pattern:
/// reachable `c_h` with their strategy-independent beliefs.
pub struct ExactCommonGame {
    model: Arc<PosgModel>,
    info: InfoStructure,
    space: EnumeratedSpace,
}

impl ExactCommonGame {
    pub fn build(
        model: Arc<PosgModel>,
        pattern: SharingPattern,
        opts: &BuildOptions,
    ) -> Result<Self, PlanError> {
        let info = InfoStructure::new(pattern, &model)?;
        let space = enumerate_space(&model, &info, None, BeliefSource::UniformPrior, opts)?;
        Ok(ExactCommonGame { model, info, space })
    }

    pub fn model(&self) -> &PosgModel {
        &self.model
    }

    pub fn belief(&self, h: usize, key: u64) -> Option<&[f64]> {
        let idx = self.space.key_index[h - 1].get(&key)?;
        Some(&self.space.beliefs[h - 1][*idx])
    }
}

impl CommonInfoGame for ExactCommonGame {
    fn horizon(&self) -> usize {
        self.model.horizon
    }

    fn num_agents(&self) -> usize {
        self.model.num_agents
    }

    fn action_counts(&self) -> &[usize] {
        &self.model.action_counts
    }

    fn num_obs(&self) -> usize {
        self.model.num_joint_obs()
    }

    fn info(&self) -> &InfoStructure {
        &self.info
    }

    fn key_space(&self) -> KeySpace {
        KeySpace::Exact
    }

    fn keys(&self, h: usize) -> &[u64] {
        &self.space.keys[h - 1]
    }

    fn num_z(&self, h: usize) -> usize {
        self.info.z_layout(h).space_size() as usize
    }

    fn private_counts(&self, h: usize) -> Vec<usize> {
        self.info.private_sizes(h)
    }

    fn next_key_index(&self, h: usize, key_idx: usize, z: usize) -> Option<usize> {
        self.space.evolution[h - 1][key_idx][z]
    }

    fn reward_table(&self, i: usize, next_h: usize) -> &[f64] {
        self.model.reward_table(i, next_h)
    }

    fn stage_parts(&self, h: usize, key_idx: usize) -> StageParts {
        parts_from_belief(
            &self.model,
            &self.info,
            h,
            &self.space.beliefs[h - 1][key_idx],
        )
        .expect("stage parts from stored belief")
    }
}

fn stage_game_at<G: CommonInfoGame + ?Sized>(
    game: &G,
    h: usize,
    key_idx: usize,
    next_values: &[Vec<f64>],
) -> StageGame {
    let n = game.num_agents();
    let num_z = game.num_z(h);
    let cont: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..num_z)
                .map(|z| match game.next_key_index(h, key_idx, z) {
                    Some(next_idx) => next_values[next_idx][i],
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    let rewards: Vec<Vec<f64>> = (0..n).map(|i| game.reward_table(i, h + 1).to_vec()).collect();
    let kernel = game.stage_parts(h, key_idx).into_kernel(
        game.private_counts(h),
        game.action_counts().to_vec(),
        game.num_obs(),
        num_z,
        rewards,
        cont,
    );
    StageGame::new(kernel)
}

/// Value iteration over the game's common-information states: solves one
/// stage game per reachable key, backward in time. Works for both the exact
/// game and compressed models.
pub fn backward_induction<G: CommonInfoGame + ?Sized>(
    game: &G,
    kind: SolveKind,
    opts: &SolveOptions,
) -> Result<EquilibriumSolution, PlanError> {
    let horizon = game.horizon();
    let n = game.num_agents();
    let mut steps: Vec<BTreeMap<u64, MixedProfile>> = vec![BTreeMap::new(); horizon];
    let mut values: Vec<BTreeMap<u64, Vec<f64>>> = vec![BTreeMap::new(); horizon];
    let mut stage_gaps: Vec<BTreeMap<u64, f64>> = vec![BTreeMap::new(); horizon];
    let mut downgraded = 0usize;
    // Values at step h+1 indexed by key position; zero at the horizon end.
    let mut next_values: Vec<Vec<f64>> = vec![vec![0.0; n]; game.keys(horizon + 1).len()];
    for h in (1..=horizon).rev() {
        let keys = game.keys(h);
        let solved: Vec<Result<_, PlanError>> = keys
            .par_iter()
            .enumerate()
            .map(|(idx, &key)| {
                let stage = stage_game_at(game, h, idx, &next_values);
                let solution = solve_stage(&stage, kind, opts).map_err(|source| {
                    PlanError::Stage { h, key, source }
                })?;
                let vals: Vec<f64> = (0..n)
                    .map(|i| stage_q_mixed(&stage, &solution.profile, i))
                    .collect();
                Ok((key, solution, vals))
            })
            .collect();
        let mut step_values = Vec::with_capacity(keys.len());
        for result in solved {
            let (key, solution, vals) = result?;
            if solution.kind_used != kind {
                downgraded += 1;
            }
            steps[h - 1].insert(key, solution.profile);
            stage_gaps[h - 1].insert(key, solution.gap);
            values[h - 1].insert(key, vals.clone());
            step_values.push(vals);
        }
        next_values = step_values;
    }
    Ok(EquilibriumSolution {
        policy: CommonInfoPolicy {
            pattern: game.info().pattern(),
            key_space: game.key_space(),
            steps,
        },
        values,
        stage_gaps,
        kind,
        downgraded_stages: downgraded,
    })
}

/// Plans on the exact common-information game of `model` under `pattern`.
pub fn vi_common_info(
    model: Arc<PosgModel>,
    pattern: SharingPattern,
    kind: SolveKind,
    solve_opts: &SolveOptions,
    build_opts: &BuildOptions,
) -> Result<(EquilibriumSolution, ExactCommonGame), PlanError> {
    let game = ExactCommonGame::build(model, pattern, build_opts)?;
    let solution = backward_induction(&game, kind, solve_opts)?;
    Ok((solution, game))
}

/// Plans on a compressed (or empirical) common-information game.
pub fn vi_approx<G: CommonInfoGame + ?Sized>(
    game: &G,
    kind: SolveKind,
    opts: &SolveOptions,
) -> Result<EquilibriumSolution, PlanError> {
    backward_induction(game, kind, opts)
}

/// How a deviation is constructed per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviationMode {
    /// Unilateral best response, independent of the correlation device.
    Unilateral,
    /// Best per-key strategy modification of the recommended action.
    Swap,
}

impl DeviationMode {
    pub fn for_kind(kind: SolveKind) -> DeviationMode {
        match kind {
            SolveKind::Ce => DeviationMode::Swap,
            _ => DeviationMode::Unilateral,
        }
    }
}

/// A best response of one agent against a fixed joint policy, evaluated on a
/// common-information game.
#[derive(Debug, Clone)]
pub struct BestResponse {
    /// The full composed policy (deviator's play substituted into the base).
    pub composed: CommonInfoPolicy,
    /// Deviator's value at the root under the composition, in the game.
    pub root_value: f64,
}

fn translate_key(
    info: &InfoStructure,
    h: usize,
    from: KeySpace,
    to: KeySpace,
    key: u64,
) -> Result<u64, PlanError> {
    match (from, to) {
        (a, b) if a == b => Ok(key),
        (KeySpace::Exact, KeySpace::Compressed { memory }) => {
            let values = info.common_layout(h, None).decode(key);
            let compressed = info.compress(h, memory, &values);
            Ok(info.common_layout(h, Some(memory)).encode(&compressed)?)
        }
        (from, to) => Err(PlanError::KeySpaceMismatch {
            policy: to,
            game: from,
        }),
    }
}

/// Exact best response of agent `i` against `policy`, by backward induction
/// over the game's keys. Each stage reduces to a per-row argmax (or a greedy
/// best swap), which is exact, so no tolerance is needed.
pub fn best_response_policy<G: CommonInfoGame + ?Sized>(
    game: &G,
    policy: &CommonInfoPolicy,
    i: usize,
    mode: DeviationMode,
) -> Result<BestResponse, PlanError> {
    let horizon = game.horizon();
    let info = game.info();
    let mut steps: Vec<BTreeMap<u64, MixedProfile>> = vec![BTreeMap::new(); horizon];
    let mut next_values: Vec<f64> = vec![0.0; game.keys(horizon + 1).len()];
    let mut root_value = 0.0;
    for h in (1..=horizon).rev() {
        let keys = game.keys(h);
        let mut step_values = Vec::with_capacity(keys.len());
        for (idx, &key) in keys.iter().enumerate() {
            let policy_key = translate_key(info, h, game.key_space(), policy.key_space, key)?;
            let base = policy
                .profile(h, policy_key)
                .ok_or(PlanError::MissingKey { h, key: policy_key })?;
            // Build a single-agent view: continuation values only for i.
            let n = game.num_agents();
            let num_z = game.num_z(h);
            let cont_i: Vec<f64> = (0..num_z)
                .map(|z| match game.next_key_index(h, idx, z) {
                    Some(next_idx) => next_values[next_idx],
                    None => 0.0,
                })
                .collect();
            let rewards: Vec<Vec<f64>> = (0..n)
                .map(|_| game.reward_table(i, h + 1).to_vec())
                .collect();
            let cont: Vec<Vec<f64>> = (0..n).map(|_| cont_i.clone()).collect();
            let kernel = game.stage_parts(h, idx).into_kernel(
                game.private_counts(h),
                game.action_counts().to_vec(),
                game.num_obs(),
                num_z,
                rewards,
                cont,
            );
            let stage = StageGame::new(kernel);
            let (composed_atoms, value) = match mode {
                DeviationMode::Unilateral => {
                    let br = prescription_best_response(&stage, base, i);
                    let value = best_response_value(&stage, base, i);
                    let atoms = base
                        .atoms
                        .iter()
                        .map(|atom| {
                            let mut composed = atom.clone();
                            composed[i] = br.clone();
                            composed
                        })
                        .collect();
                    (atoms, value)
                }
                DeviationMode::Swap => {
                    let (swap, value) = best_swap(&stage, base, i);
                    let atoms = base
                        .atoms
                        .iter()
                        .map(|atom| {
                            let mut composed = atom.clone();
                            composed[i] = swap.apply(&atom[i]);
                            composed
                        })
                        .collect();
                    (atoms, value)
                }
            };
            steps[h - 1].insert(
                key,
                MixedProfile {
                    atoms: composed_atoms,
                },
            );
            step_values.push(value);
            if h == 1 {
                root_value = value;
            }
        }
        next_values = step_values;
    }
    Ok(BestResponse {
        composed: CommonInfoPolicy {
            pattern: info.pattern(),
            key_space: game.key_space(),
            steps,
        },
        root_value,
    })
}

/// Evaluates a fixed common-information policy inside a game (a backward pass
/// with the profiles pinned).
pub fn policy_value_in_game<G: CommonInfoGame + ?Sized>(
    game: &G,
    policy: &CommonInfoPolicy,
    i: usize,
) -> Result<f64, PlanError> {
    let horizon = game.horizon();
    let info = game.info();
    let n = game.num_agents();
    let mut next_values: Vec<Vec<f64>> = vec![vec![0.0; n]; game.keys(horizon + 1).len()];
    let mut root = 0.0;
    for h in (1..=horizon).rev() {
        let keys = game.keys(h);
        let mut step_values = Vec::with_capacity(keys.len());
        for (idx, &key) in keys.iter().enumerate() {
            let policy_key = translate_key(info, h, game.key_space(), policy.key_space, key)?;
            let base = policy
                .profile(h, policy_key)
                .ok_or(PlanError::MissingKey { h, key: policy_key })?;
            let stage = stage_game_at(game, h, idx, &next_values);
            let vals: Vec<f64> = (0..n).map(|j| stage_q_mixed(&stage, base, j)).collect();
            if h == 1 {
                root = vals[i];
            }
            step_values.push(vals);
        }
        next_values = step_values;
    }
    Ok(root)
}

/// Exact expected return of an arbitrary joint policy for one agent, by
/// exhaustive history enumeration.
pub fn policy_value_exact(
    model: &PosgModel,
    policy: &dyn JointPolicy,
    i: usize,
    max_histories: usize,
) -> Result<f64, PlanError> {
    let histories = enumerate_histories(model, policy, model.horizon + 1, max_histories)?;
    let mut value = 0.0;
    for hist in &histories {
        let mut reward = 0.0;
        for (k, &o) in hist.observations.iter().enumerate() {
            reward += model.reward(i, k + 2, o);
        }
        value += hist.prob * reward;
    }
    Ok(value)
}

/// Exact equilibrium gap of a common-information policy on the true model:
/// the largest value improvement any agent can secure by best-responding (or,
/// for correlated equilibria, by modifying its recommendations).
pub fn policy_gap(
    model: Arc<PosgModel>,
    pattern: SharingPattern,
    policy: &CommonInfoPolicy,
    kind: SolveKind,
    build_opts: &BuildOptions,
    max_histories: usize,
) -> Result<f64, PlanError> {
    let game = ExactCommonGame::build(Arc::clone(&model), pattern, build_opts)?;
    let info = InfoStructure::new(pattern, &model)?;
    let mode = DeviationMode::for_kind(kind);
    let mut gap = f64::NEG_INFINITY;
    for i in 0..model.num_agents {
        let value = policy_value_exact(&model, &policy.executor(&info), i, max_histories)?;
        let response = best_response_policy(&game, policy, i, mode)?;
        let deviated =
            policy_value_exact(&model, &response.composed.executor(&info), i, max_histories)?;
        gap = gap.max(deviated - value);
    }
    Ok(gap)
}

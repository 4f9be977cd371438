//! Compressed common-information Markov games built consistently from a
//! belief, plus measurement of their reward- and transition-prediction errors
//! against the true model.
//!
//! An [`ApproxCommonModel`] enumerates the reachable compressed states
//! `hat c_h` step by step, stores one belief table `P(s, p | hat c_h)` per
//! state, and derives its increment and observation predictions *on demand*
//! through the consistency marginalization
//!
//! ```text
//! P(z | c, gamma) = sum_{s,p,a,o: chi(p,a,o) = z} P(s,p|c) prod_j gamma_j T(s'|s,a) O(o|s')
//! ```
//!
//! so the single source of truth is the belief table. The degenerate
//! compression `L = H` reproduces the exact common-information game.

use crate::beliefs::Belief;
use crate::equilibrium::{Prescription, StageKernel};
use crate::info::{BeliefPrior, CompressionScheme, InfoError, InfoStructure, SharingPattern};
use crate::model::{enumerate_histories, JointPolicy, ModelError, PosgModel};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("pattern rejected: {0}")]
    Pattern(#[from] crate::info::PatternError),
    #[error("state space at step {h} needs {required} keys, budget is {budget}")]
    Capacity {
        h: usize,
        required: usize,
        budget: usize,
    },
    #[error("unknown key {key} at step {h}")]
    UnknownKey { h: usize, key: u64 },
    #[error("increment {z} is unreachable from key {key} at step {h}")]
    UnreachablePair { h: usize, key: u64, z: usize },
    #[error("prescription grid needs {required} profiles, budget is {budget}")]
    GridCapacity { required: u128, budget: usize },
}

/// Which prior seeds the truncated filter behind each belief table.
#[derive(Debug, Clone, Copy)]
pub enum BeliefSource<'a> {
    /// Uniform prior: the planning construction.
    UniformPrior,
    /// Per-step state occupancy (indexed by window start step): the
    /// policy-dependent construction used when learning.
    OccupancyPrior(&'a [Belief]),
}

impl<'a> BeliefSource<'a> {
    fn as_prior(&self) -> BeliefPrior<'a> {
        match self {
            BeliefSource::UniformPrior => BeliefPrior::Uniform,
            BeliefSource::OccupancyPrior(b) => BeliefPrior::PerStep(b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Largest admitted number of reachable keys at any step.
    pub max_keys_per_step: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_keys_per_step: 500_000,
        }
    }
}

/// Whether a game is keyed on exact or finite-memory common information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KeySpace {
    Exact,
    Compressed { memory: usize },
}

impl KeySpace {
    pub fn memory(&self) -> Option<usize> {
        match self {
            KeySpace::Exact => None,
            KeySpace::Compressed { memory } => Some(*memory),
        }
    }
}

/// The factored environment of one stage before rewards and continuation
/// values are attached: `q(p)`, `kappa(o|p,a)` and the increment map `chi`.
#[derive(Debug, Clone)]
pub struct StageParts {
    pub q: Vec<f64>,
    pub kappa: Vec<f64>,
    pub chi: Vec<usize>,
}

/// Common interface of the games the backward-induction planners run on: the
/// exact common-information game, belief-consistent compressed models, and
/// count-based empirical models.
pub trait CommonInfoGame: Sync {
    fn horizon(&self) -> usize;
    fn num_agents(&self) -> usize;
    fn action_counts(&self) -> &[usize];
    fn num_obs(&self) -> usize;
    fn info(&self) -> &InfoStructure;
    fn key_space(&self) -> KeySpace;
    /// Reachable keys at step `h in 1..=H+1`, sorted ascending.
    fn keys(&self, h: usize) -> &[u64];
    /// Syntactic size of the increment space at step `h`.
    fn num_z(&self, h: usize) -> usize;
    fn private_counts(&self, h: usize) -> Vec<usize>;
    /// Index (into `keys(h + 1)`) of the successor of `(key index, z)`, if
    /// reachable.
    fn next_key_index(&self, h: usize, key_idx: usize, z: usize) -> Option<usize>;
    /// Reward table of agent `i` for step `next_h in 2..=H+1`, indexed by
    /// joint observation.
    fn reward_table(&self, i: usize, next_h: usize) -> &[f64];
    fn stage_parts(&self, h: usize, key_idx: usize) -> StageParts;
}

/// Shared enumeration result: reachable keys with their belief tables and the
/// tabulated evolution.
pub(crate) struct EnumeratedSpace {
    /// Per `h in 1..=H+1`: sorted reachable keys.
    pub keys: Vec<Vec<u64>>,
    pub key_index: Vec<BTreeMap<u64, usize>>,
    /// Per `h in 1..=H`: belief table per key (`S * P_h`).
    pub beliefs: Vec<Vec<Vec<f64>>>,
    /// Per `h in 1..=H`: `[key][z] -> next key index`.
    pub evolution: Vec<Vec<Vec<Option<usize>>>>,
}

/// Enumerates the reachable (possibly compressed) common-information states by
/// a forward pass: successors are the increments with positive probability
/// under the uniform prescription, whose support covers every action.
pub(crate) fn enumerate_space(
    model: &PosgModel,
    info: &InfoStructure,
    memory: Option<usize>,
    source: BeliefSource<'_>,
    opts: &BuildOptions,
) -> Result<EnumeratedSpace, ApproxError> {
    let horizon = model.horizon;
    let mut keys: Vec<Vec<u64>> = vec![Vec::new(); horizon + 1];
    let mut key_index: Vec<BTreeMap<u64, usize>> = vec![BTreeMap::new(); horizon + 1];
    let mut beliefs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); horizon];
    let mut evolution: Vec<Vec<Vec<Option<usize>>>> = vec![Vec::new(); horizon];

    let root = info.common_layout(1, memory).encode(&[])?;
    keys[0].push(root);
    key_index[0].insert(root, 0);

    for h in 1..=horizon {
        let layout = info.common_layout(h, memory);
        let next_layout = info.common_layout(h + 1, memory);
        let z_layout = info.z_layout(h);
        let num_z = z_layout.space_size() as usize;
        let uniform: Vec<Prescription> = (0..model.num_agents)
            .map(|i| {
                Prescription::uniform(
                    info.private_layout(i, h).space_size() as usize,
                    model.action_counts[i],
                )
            })
            .collect();
        let current: Vec<u64> = keys[h - 1].clone();
        for &key in &current {
            let values = layout.decode(key);
            let belief = match memory {
                None => info.exact_common_belief(model, h, &values)?,
                Some(l) => info.approx_common_belief(model, l, h, &values, source.as_prior())?,
            };
            let parts = parts_from_belief(model, info, h, &belief)?;
            let kernel = parts.clone().into_kernel(
                info.private_sizes(h),
                model.action_counts.clone(),
                model.num_joint_obs(),
                num_z,
                vec![vec![0.0; model.num_joint_obs()]; model.num_agents],
                vec![vec![0.0; num_z]; model.num_agents],
            );
            let (z_dist, _) = kernel.step_distributions(&uniform);
            let mut row: Vec<Option<usize>> = vec![None; num_z];
            for (z, &mass) in z_dist.iter().enumerate() {
                if mass <= 0.0 {
                    continue;
                }
                let z_values = z_layout.decode(z as u64);
                let next_values = info.evolve_common(h, memory, &values, &z_values)?;
                let next_key = next_layout.encode(&next_values)?;
                let idx = match key_index[h].get(&next_key) {
                    Some(&idx) => idx,
                    None => {
                        if keys[h].len() >= opts.max_keys_per_step {
                            return Err(ApproxError::Capacity {
                                h: h + 1,
                                required: keys[h].len() + 1,
                                budget: opts.max_keys_per_step,
                            });
                        }
                        keys[h].push(next_key);
                        key_index[h].insert(next_key, keys[h].len() - 1);
                        keys[h].len() - 1
                    }
                };
                row[z] = Some(idx);
            }
            beliefs[h - 1].push(belief);
            evolution[h - 1].push(row);
        }
        // Re-sort the next step's keys into canonical ascending order and
        // remap the evolution rows accordingly.
        let mut order: Vec<usize> = (0..keys[h].len()).collect();
        order.sort_by_key(|&i| keys[h][i]);
        let mut rank = vec![0usize; order.len()];
        for (new_pos, &old_pos) in order.iter().enumerate() {
            rank[old_pos] = new_pos;
        }
        keys[h].sort_unstable();
        key_index[h] = keys[h]
            .iter()
            .enumerate()
            .map(|(idx, &k)| (k, idx))
            .collect();
        for row in &mut evolution[h - 1] {
            for slot in row.iter_mut().flatten() {
                *slot = rank[*slot];
            }
        }
    }
    Ok(EnumeratedSpace {
        keys,
        key_index,
        beliefs,
        evolution,
    })
}

impl StageParts {
    /// Attaches rewards and continuation values, producing a full kernel.
    pub(crate) fn into_kernel(
        self,
        private_counts: Vec<usize>,
        action_counts: Vec<usize>,
        num_obs: usize,
        num_z: usize,
        rewards: Vec<Vec<f64>>,
        cont: Vec<Vec<f64>>,
    ) -> StageKernel {
        StageKernel {
            private_counts,
            action_counts,
            num_obs,
            num_z,
            q: self.q,
            kappa: self.kappa,
            rewards,
            cont,
            chi: self.chi,
        }
    }
}

/// `q`, `kappa` and `chi` for one stage from a belief table over
/// `(state, private info)`.
pub(crate) fn parts_from_belief(
    model: &PosgModel,
    info: &InfoStructure,
    h: usize,
    belief: &[f64],
) -> Result<StageParts, ApproxError> {
    let p_sizes = info.private_sizes(h);
    let p_total: usize = p_sizes.iter().product();
    let a_total = model.num_joint_actions();
    let num_obs = model.num_joint_obs();
    let s_count = model.num_states;
    let mut q = vec![0.0; p_total];
    for s in 0..s_count {
        for p in 0..p_total {
            q[p] += belief[s * p_total + p];
        }
    }
    let z_layout = info.z_layout(h);
    let mut kappa = vec![0.0; p_total * a_total * num_obs];
    let mut chi = vec![0usize; p_total * a_total * num_obs];
    for p in 0..p_total {
        let private = info.decode_private(h, p);
        for a in 0..a_total {
            let base = (p * a_total + a) * num_obs;
            if q[p] > 0.0 {
                for s in 0..s_count {
                    let w = belief[s * p_total + p] / q[p];
                    if w == 0.0 {
                        continue;
                    }
                    for (sp, &t) in model.transition_row(h, s, a).iter().enumerate() {
                        if t == 0.0 {
                            continue;
                        }
                        for (o, &e) in model.emission_row(h + 1, sp).iter().enumerate() {
                            kappa[base + o] += w * t * e;
                        }
                    }
                }
            } else {
                for o in 0..num_obs {
                    kappa[base + o] = 1.0 / num_obs as f64;
                }
            }
            for o in 0..num_obs {
                let z_values = info.z_values(h, &private, a, o);
                chi[base + o] = z_layout.encode(&z_values)? as usize;
            }
        }
    }
    Ok(StageParts { q, kappa, chi })
}

/// A compressed common-information Markov game consistent with a belief: the
/// state space is the reachable set of `hat c_h`, actions are prescription
/// profiles, and transitions/rewards derive from the stored belief tables and
/// the generating model's kernels.
pub struct ApproxCommonModel {
    model: Arc<PosgModel>,
    info: InfoStructure,
    scheme: CompressionScheme,
    space: EnumeratedSpace,
    /// `rewards[i][h - 2][o]` for `h in 2..=H+1`.
    rewards: Vec<Vec<Vec<f64>>>,
}

impl ApproxCommonModel {
    /// Builds the model by forward enumeration. `rewards` overrides the
    /// generating model's reward tables (used by learning); `None` keeps them.
    pub fn build(
        model: Arc<PosgModel>,
        pattern: SharingPattern,
        scheme: CompressionScheme,
        source: BeliefSource<'_>,
        rewards: Option<Vec<Vec<Vec<f64>>>>,
        opts: &BuildOptions,
    ) -> Result<Self, ApproxError> {
        let info = InfoStructure::new(pattern, &model)?;
        let space = enumerate_space(&model, &info, Some(scheme.memory), source, opts)?;
        let rewards = rewards.unwrap_or_else(|| {
            (0..model.num_agents)
                .map(|i| {
                    (2..=model.horizon + 1)
                        .map(|h| model.reward_table(i, h).to_vec())
                        .collect()
                })
                .collect()
        });
        Ok(ApproxCommonModel {
            model,
            info,
            scheme,
            space,
            rewards,
        })
    }

    pub fn model(&self) -> &PosgModel {
        &self.model
    }

    pub fn scheme(&self) -> CompressionScheme {
        self.scheme
    }

    pub fn key_index(&self, h: usize, key: u64) -> Option<usize> {
        self.space.key_index[h - 1].get(&key).copied()
    }

    /// Stored belief table `P(s, p | hat c_h)` for a reachable key.
    pub fn belief(&self, h: usize, key: u64) -> Result<&[f64], ApproxError> {
        let idx = self
            .key_index(h, key)
            .ok_or(ApproxError::UnknownKey { h, key })?;
        Ok(&self.space.beliefs[h - 1][idx])
    }

    /// Exact one-step predictions under a prescription profile: distributions
    /// over the increment `z_{h+1}` and the next joint observation, derived
    /// from the belief table through the consistency equations.
    pub fn model_step(
        &self,
        h: usize,
        key: u64,
        profile: &[Prescription],
    ) -> Result<(Vec<f64>, Vec<f64>), ApproxError> {
        let idx = self
            .key_index(h, key)
            .ok_or(ApproxError::UnknownKey { h, key })?;
        let num_z = self.num_z(h);
        let kernel = self.stage_parts(h, idx).into_kernel(
            self.info.private_sizes(h),
            self.model.action_counts.clone(),
            self.model.num_joint_obs(),
            num_z,
            vec![vec![0.0; self.model.num_joint_obs()]; self.model.num_agents],
            vec![vec![0.0; num_z]; self.model.num_agents],
        );
        Ok(kernel.step_distributions(profile))
    }

    /// Evolution lookup `hat c_{h+1} = hat phi(hat c_h, z)`.
    pub fn evolve(&self, h: usize, key: u64, z: usize) -> Result<u64, ApproxError> {
        let idx = self
            .key_index(h, key)
            .ok_or(ApproxError::UnknownKey { h, key })?;
        match self.space.evolution[h - 1][idx].get(z) {
            Some(Some(next_idx)) => Ok(self.space.keys[h][*next_idx]),
            _ => Err(ApproxError::UnreachablePair { h, key, z }),
        }
    }
}

impl CommonInfoGame for ApproxCommonModel {
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
        KeySpace::Compressed {
            memory: self.scheme.memory,
        }
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
        &self.rewards[i][next_h - 2]
    }

    fn stage_parts(&self, h: usize, key_idx: usize) -> StageParts {
        let belief = &self.space.beliefs[h - 1][key_idx];
        parts_from_belief(&self.model, &self.info, h, belief)
            .expect("stage parts from stored belief")
    }
}

/// How the expectation over histories is taken when measuring model errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    /// Exhaustive enumeration of all positive-probability histories.
    Exact { max_histories: usize },
    /// Monte Carlo over sampled trajectories.
    MonteCarlo { samples: usize, seed: u64 },
}

/// Measured prediction errors of a compressed model against the true model.
#[derive(Debug, Clone)]
pub struct ModelErrors {
    pub eps_r: f64,
    pub eps_z: f64,
    pub num_policies: usize,
    pub mode: ErrorMode,
}

#[derive(Debug, Clone, Copy)]
pub struct GridOptions {
    /// Budget on the number of deterministic prescription profiles per step.
    pub max_deterministic: usize,
    /// Extra random stochastic profiles added to the grid.
    pub num_random: usize,
    pub seed: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            max_deterministic: 65_536,
            num_random: 20,
            seed: 7,
        }
    }
}

/// All deterministic prescription profiles plus seeded random stochastic ones.
/// The error expressions are multilinear in each agent's prescription, so
/// their suprema over the product polytope are attained at the deterministic
/// vertices; the random profiles are a safety net.
fn prescription_grid(
    private_counts: &[usize],
    action_counts: &[usize],
    opts: &GridOptions,
) -> Result<Vec<Vec<Prescription>>, ApproxError> {
    let n = private_counts.len();
    let per_agent: Vec<u128> = (0..n)
        .map(|i| (action_counts[i] as u128).pow(private_counts[i] as u32))
        .collect();
    let total: u128 = per_agent.iter().product();
    if total > opts.max_deterministic as u128 {
        return Err(ApproxError::GridCapacity {
            required: total,
            budget: opts.max_deterministic,
        });
    }
    let mut grid = Vec::with_capacity(total as usize + opts.num_random);
    for idx in 0..total {
        let mut rest = idx;
        let mut profile = Vec::with_capacity(n);
        for i in 0..n {
            let mut code = (rest % per_agent[i]) as usize;
            rest /= per_agent[i];
            let choices: Vec<usize> = (0..private_counts[i])
                .map(|_| {
                    let c = code % action_counts[i];
                    code /= action_counts[i];
                    c
                })
                .collect();
            profile.push(Prescription::deterministic(&choices, action_counts[i]));
        }
        grid.push(profile);
    }
    let mut seed = opts.seed;
    for _ in 0..opts.num_random {
        let mut profile = Vec::with_capacity(n);
        for i in 0..n {
            let mut probs = vec![0.0; private_counts[i] * action_counts[i]];
            for p in 0..private_counts[i] {
                let mut sum = 0.0;
                for a in 0..action_counts[i] {
                    seed = crate::model::derive_seed(seed, 1);
                    let v = 0.05 + (seed % 1000) as f64 / 1000.0;
                    probs[p * action_counts[i] + a] = v;
                    sum += v;
                }
                for a in 0..action_counts[i] {
                    probs[p * action_counts[i] + a] /= sum;
                }
            }
            profile.push(Prescription {
                probs,
                num_private: private_counts[i],
                num_actions: action_counts[i],
            });
        }
        grid.push(profile);
    }
    Ok(grid)
}

/// Measures how well the compressed model predicts one-step rewards (`eps_r`)
/// and increments (`eps_z`): the maxima over steps, supplied policies, agents
/// and a prescription grid of the expected absolute prediction differences,
/// with the expectation over histories drawn from each policy.
pub fn measure_model_errors(
    model: &PosgModel,
    approx: &ApproxCommonModel,
    policies: &[&dyn JointPolicy],
    grid_opts: &GridOptions,
    mode: ErrorMode,
) -> Result<ModelErrors, ApproxError> {
    let info = approx.info();
    let memory = approx.scheme().memory;
    let mut eps_r: f64 = 0.0;
    let mut eps_z: f64 = 0.0;

    for h in 1..=model.horizon {
        let layout = info.common_layout(h, None);
        let num_z = approx.num_z(h);
        let grid = prescription_grid(&info.private_sizes(h), &model.action_counts, grid_opts)?;

        // Weight of each exact common-information realization under each
        // policy, enumerated or sampled.
        let mut policy_weights: Vec<BTreeMap<u64, f64>> = Vec::with_capacity(policies.len());
        match mode {
            ErrorMode::Exact { max_histories } => {
                for policy in policies {
                    let histories = enumerate_histories(model, *policy, h, max_histories)?;
                    let mut weights = BTreeMap::new();
                    for hist in &histories {
                        let split = info.split_history(h, &hist.actions, &hist.observations);
                        let key = layout.encode(&split.common)?;
                        *weights.entry(key).or_insert(0.0) += hist.prob;
                    }
                    policy_weights.push(weights);
                }
            }
            ErrorMode::MonteCarlo { samples, seed } => {
                for (pi, policy) in policies.iter().enumerate() {
                    let mut weights = BTreeMap::new();
                    for k in 0..samples {
                        let traj = crate::model::sample_trajectory(
                            model,
                            *policy,
                            crate::model::derive_seed(seed, (pi * samples + k) as u64),
                        )?;
                        let (acts, obs) = traj.history_at(h);
                        let split = info.split_history(h, acts, obs);
                        let key = layout.encode(&split.common)?;
                        *weights.entry(key).or_insert(0.0) += 1.0 / samples as f64;
                    }
                    policy_weights.push(weights);
                }
            }
        }

        // Per distinct c_h: prediction differences for every grid profile.
        let mut all_keys: Vec<u64> = policy_weights
            .iter()
            .flat_map(|w| w.keys().copied())
            .collect();
        all_keys.sort_unstable();
        all_keys.dedup();

        let mut diff_r: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        let mut diff_z: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for &key in &all_keys {
            let values = layout.decode(key);
            let exact_belief = info.exact_common_belief(model, h, &values)?;
            let exact_parts = parts_from_belief(model, info, h, &exact_belief)?;
            let compressed = info.compress(h, memory, &values);
            let comp_key = info.common_layout(h, Some(memory)).encode(&compressed)?;
            let comp_idx = approx
                .key_index(h, comp_key)
                .ok_or(ApproxError::UnknownKey { h, key: comp_key })?;
            let comp_parts = approx.stage_parts(h, comp_idx);
            let zeros_r = vec![vec![0.0; model.num_joint_obs()]; model.num_agents];
            let zeros_c = vec![vec![0.0; num_z]; model.num_agents];
            let exact_kernel = exact_parts.into_kernel(
                info.private_sizes(h),
                model.action_counts.clone(),
                model.num_joint_obs(),
                num_z,
                zeros_r.clone(),
                zeros_c.clone(),
            );
            let comp_kernel = comp_parts.into_kernel(
                info.private_sizes(h),
                model.action_counts.clone(),
                model.num_joint_obs(),
                num_z,
                zeros_r,
                zeros_c,
            );
            let mut rs = Vec::with_capacity(grid.len());
            let mut zs = Vec::with_capacity(grid.len());
            for profile in &grid {
                let (z_true, o_true) = exact_kernel.step_distributions(profile);
                let (z_apx, o_apx) = comp_kernel.step_distributions(profile);
                let mut worst_r: f64 = 0.0;
                for i in 0..model.num_agents {
                    let true_r: f64 = o_true
                        .iter()
                        .enumerate()
                        .map(|(o, &w)| w * model.reward(i, h + 1, o))
                        .sum();
                    let apx_r: f64 = o_apx
                        .iter()
                        .enumerate()
                        .map(|(o, &w)| w * approx.reward_table(i, h + 1)[o])
                        .sum();
                    worst_r = worst_r.max((true_r - apx_r).abs());
                }
                rs.push(worst_r);
                zs.push(
                    z_true
                        .iter()
                        .zip(&z_apx)
                        .map(|(x, y)| (x - y).abs())
                        .sum::<f64>(),
                );
            }
            diff_r.insert(key, rs);
            diff_z.insert(key, zs);
        }

        for weights in &policy_weights {
            for g in 0..grid.len() {
                let mut r_acc = 0.0;
                let mut z_acc = 0.0;
                for (key, &w) in weights {
                    r_acc += w * diff_r[key][g];
                    z_acc += w * diff_z[key][g];
                }
                eps_r = eps_r.max(r_acc);
                eps_z = eps_z.max(z_acc);
            }
        }
    }

    Ok(ModelErrors {
        eps_r,
        eps_z,
        num_policies: policies.len(),
        mode,
    })
}

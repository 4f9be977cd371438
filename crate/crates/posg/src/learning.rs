//! Sample-based construction of empirical compressed-information models,
//! policy selection by rollout, and the end-to-end learning loop.
//!
//! The learner never reads the true kernels: it draws trajectories through a
//! [`TrajectorySampler`], counts private-information and next-observation
//! frequencies per compressed state, and normalizes the visited cells into the
//! two estimated tables
//!
//! ```text
//! P(p | hat c_h)            and       P(o_{h+1} | hat c_h, p_h, a_h).
//! ```
//!
//! Those tables already factor the one-step predictions of a compressed
//! Markov game, so the planners run on the estimate unchanged. Exploration
//! policies must take uniform actions over the trailing reconstruction window
//! (the last `L_hat` steps); that is what makes the estimated conditionals
//! match the policy-dependent model exactly in expectation. Unvisited cells
//! fall back to uniform distributions and are reported in a coverage mask
//! rather than being guessed.

use crate::approx::{ApproxError, CommonInfoGame, KeySpace, StageParts};
use crate::beliefs::Belief;
use crate::equilibrium::SolveKind;
use crate::info::{CompressionScheme, InfoError, InfoStructure, PatternError, SharingPattern};
use crate::model::{
    derive_seed, enumerate_histories, sample_trajectory, GeneralPolicy, JointPolicy, ModelError,
    PosgModel, Trajectory,
};
use rayon::prelude::*;
use crate::planning::{
    best_response_policy, vi_approx, CommonInfoPolicy, DeviationMode, EquilibriumSolution,
    PlanError,
};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("exploration policy {h} is not uniform over its reconstruction window (step {step})")]
    NotUniformSuffix { h: usize, step: usize },
    #[error("compressed space at step {h} has {required} states, budget is {budget}")]
    Capacity {
        h: usize,
        required: u128,
        budget: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Sample sizes, concentration parameters, and the stage tolerance for the
/// learning pipeline.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LearnConfig {
    /// Trajectories per step for model estimation.
    pub n0: usize,
    /// Trajectories per rollout during policy selection.
    pub n2: usize,
    pub zeta1: f64,
    pub zeta2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub delta1: f64,
    /// Stage-game tolerance handed to the planner.
    pub eps_e: f64,
    /// Occupancy threshold below which a state counts as under-explored.
    pub phi: f64,
    /// The universal constant in the sample-size bound; 1 unless calibrated.
    pub constant_c: f64,
    pub seed: u64,
    /// Safety budget on the enumerated compressed space.
    pub max_keys_per_step: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            n0: 10_000,
            n2: 2_000,
            zeta1: 0.1,
            zeta2: 0.01,
            theta1: 0.1,
            theta2: 0.1,
            delta1: 0.1,
            eps_e: 0.01,
            phi: 0.05,
            constant_c: 1.0,
            seed: 0,
            max_keys_per_step: 200_000,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.n0 == 0 {
            return Err(LearnError::Config("n0 must be positive".into()));
        }
        if self.n2 == 0 {
            return Err(LearnError::Config("n2 must be positive".into()));
        }
        for (name, v) in [
            ("zeta1", self.zeta1),
            ("zeta2", self.zeta2),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("delta1", self.delta1),
            ("eps_e", self.eps_e),
            ("phi", self.phi),
            ("constant_c", self.constant_c),
        ] {
            if !(v > 0.0) {
                return Err(LearnError::Config(format!("{name} must be positive")));
            }
        }
        if self.zeta2 > self.zeta1 {
            return Err(LearnError::Config("zeta2 must not exceed zeta1".into()));
        }
        Ok(())
    }
}

/// Trajectory access to the environment. Learners consume only dimensions and
/// samples; the kernels stay behind this interface.
pub trait TrajectorySampler: Sync {
    fn model(&self) -> &PosgModel;
    fn sample(&self, policy: &dyn JointPolicy, seed: u64) -> Result<Trajectory, ModelError>;
}

/// Sampling from an in-memory model.
pub struct PosgSampler<'a> {
    pub model: &'a PosgModel,
}

impl TrajectorySampler for PosgSampler<'_> {
    fn model(&self) -> &PosgModel {
        self.model
    }

    fn sample(&self, policy: &dyn JointPolicy, seed: u64) -> Result<Trajectory, ModelError> {
        sample_trajectory(self.model, policy, seed)
    }
}

/// One exploration policy per step; the policy used when estimating step `h`
/// must act uniformly from step `h - L_hat` onward.
#[derive(Debug, Clone)]
pub struct ExplorationPolicySet {
    pub policies: Vec<GeneralPolicy>,
    pub l_hat: usize,
}

impl ExplorationPolicySet {
    /// Structural check of the uniform-window requirement.
    pub fn validate(&self) -> Result<(), LearnError> {
        for (idx, policy) in self.policies.iter().enumerate() {
            let h = idx + 1;
            let first = h.saturating_sub(self.l_hat).max(1);
            for step in first..=h {
                if !policy.is_uniform_at(step) {
                    return Err(LearnError::NotUniformSuffix { h, step });
                }
            }
        }
        Ok(())
    }
}

/// Fully uniform exploration: one uniform policy per step, which satisfies the
/// window requirement for any reconstruction length.
pub fn make_uniform_exploration(model: &PosgModel, l_hat: usize) -> ExplorationPolicySet {
    ExplorationPolicySet {
        policies: (0..model.horizon)
            .map(|_| GeneralPolicy::uniform(model))
            .collect(),
        l_hat,
    }
}

/// The trajectory count per step sufficient for the per-cell concentration
/// guarantees:
///
/// ```text
/// N0 = ceil max{ C (P + ln(4 H C_hat / delta1)) / (zeta1 theta1^2),
///                C A (O + ln(4 H C_hat P A / delta1)) / (zeta2 theta2^2) }
/// ```
pub fn n0_bound(
    config: &LearnConfig,
    max_private: usize,
    max_compressed: usize,
    num_actions: usize,
    num_obs: usize,
    horizon: usize,
) -> usize {
    let c = config.constant_c;
    let branch1 = c * (max_private as f64
        + (4.0 * horizon as f64 * max_compressed as f64 / config.delta1).ln())
        / (config.zeta1 * config.theta1 * config.theta1);
    let branch2 = c * num_actions as f64
        * (num_obs as f64
            + (4.0 * horizon as f64 * max_compressed as f64 * max_private as f64
                * num_actions as f64
                / config.delta1)
                .ln())
        / (config.zeta2 * config.theta2 * config.theta2);
    branch1.max(branch2).ceil() as usize
}

/// Visited-cell bookkeeping for one estimation run.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    /// Per step `h in 1..=H`: visited / total compressed states.
    pub state_cells: Vec<(usize, usize)>,
    /// Per step: visited / total `(state, private, action)` cells.
    pub transition_cells: Vec<(usize, usize)>,
    /// Per step `h in 2..=H+1`: visited / total observation reward cells.
    pub reward_cells: Vec<(usize, usize)>,
}

/// A count-based estimate of the compressed-information game: estimated
/// private and next-observation conditionals per compressed state, visit
/// counts, and a mask of unvisited cells (which fall back to uniform).
pub struct EmpiricalModel {
    info: InfoStructure,
    scheme: CompressionScheme,
    horizon: usize,
    action_counts: Vec<usize>,
    num_obs: usize,
    /// Per `h in 1..=H+1`: the full syntactic compressed space, sorted.
    keys: Vec<Vec<u64>>,
    key_index: Vec<BTreeMap<u64, usize>>,
    /// Per `h in 1..=H`: `[key][p]` estimated `P(p | hat c)`.
    p_hat: Vec<Vec<Vec<f64>>>,
    /// Per `h in 1..=H`: visits per key.
    key_visits: Vec<Vec<u64>>,
    /// Per `h in 1..=H`: `[key][(p * A + a) * O + o]` estimated next-obs tables.
    o_hat: Vec<Vec<Vec<f64>>>,
    /// Per `h in 1..=H`: visits per `(key, p, a)` cell.
    cell_visits: Vec<Vec<Vec<u64>>>,
    /// Per `h in 1..=H`: `[key][z] -> next index` (total on the syntactic space).
    evolution: Vec<Vec<Vec<Option<usize>>>>,
    /// Per `h in 1..=H`: `chi[(p * A + a) * O + o]`.
    chi: Vec<Vec<usize>>,
    /// `rewards[i][h - 2][o]`, estimated or supplied.
    rewards: Vec<Vec<Vec<f64>>>,
    reward_seen: Vec<Vec<bool>>,
    pub coverage: CoverageReport,
}

impl EmpiricalModel {
    pub fn scheme(&self) -> CompressionScheme {
        self.scheme
    }

    pub fn key_visits(&self, h: usize, key: u64) -> u64 {
        match self.key_index[h - 1].get(&key) {
            Some(&idx) => self.key_visits[h - 1][idx],
            None => 0,
        }
    }

    pub fn estimated_private_dist(&self, h: usize, key: u64) -> Option<&[f64]> {
        let idx = self.key_index[h - 1].get(&key)?;
        Some(&self.p_hat[h - 1][*idx])
    }

    pub fn estimated_obs_dist(&self, h: usize, key: u64, p: usize, a: usize) -> Option<&[f64]> {
        let idx = self.key_index[h - 1].get(&key)?;
        let a_total: usize = self.action_counts.iter().product();
        let base = (p * a_total + a) * self.num_obs;
        Some(&self.o_hat[h - 1][*idx][base..base + self.num_obs])
    }

    /// Whether a reward cell was ever observed (unobserved cells fall back
    /// to the midpoint value 0.5).
    pub fn reward_cell_seen(&self, next_h: usize, o: usize) -> bool {
        self.reward_seen[next_h - 2][o]
    }

    pub fn cell_visit_count(&self, h: usize, key: u64, p: usize, a: usize) -> u64 {
        match self.key_index[h - 1].get(&key) {
            Some(&idx) => {
                let a_total: usize = self.action_counts.iter().product();
                self.cell_visits[h - 1][idx][p * a_total + a]
            }
            None => 0,
        }
    }
}

impl CommonInfoGame for EmpiricalModel {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_agents(&self) -> usize {
        self.action_counts.len()
    }

    fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    fn num_obs(&self) -> usize {
        self.num_obs
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
        &self.keys[h - 1]
    }

    fn num_z(&self, h: usize) -> usize {
        self.info.z_layout(h).space_size() as usize
    }

    fn private_counts(&self, h: usize) -> Vec<usize> {
        self.info.private_sizes(h)
    }

    fn next_key_index(&self, h: usize, key_idx: usize, z: usize) -> Option<usize> {
        self.evolution[h - 1][key_idx][z]
    }

    fn reward_table(&self, i: usize, next_h: usize) -> &[f64] {
        &self.rewards[i][next_h - 2]
    }

    fn stage_parts(&self, h: usize, key_idx: usize) -> StageParts {
        StageParts {
            q: self.p_hat[h - 1][key_idx].clone(),
            kappa: self.o_hat[h - 1][key_idx].clone(),
            chi: self.chi[h - 1].clone(),
        }
    }
}

/// Estimates the compressed game from `config.n0` trajectories per step drawn
/// under the exploration policies. `rewards` overrides the reward estimate
/// when the exploration generator supplies one; otherwise rewards are the
/// empirical values observed per `(step, observation)` (a single visit pins
/// each cell because rewards are deterministic in the observation).
pub fn construct_empirical(
    sampler: &dyn TrajectorySampler,
    exploration: &ExplorationPolicySet,
    pattern: SharingPattern,
    scheme: CompressionScheme,
    rewards: Option<Vec<Vec<Vec<f64>>>>,
    config: &LearnConfig,
) -> Result<EmpiricalModel, LearnError> {
    config.validate()?;
    exploration.validate()?;
    let model = sampler.model();
    let info = InfoStructure::new(pattern, model)?;
    let horizon = model.horizon;
    let n = model.num_agents;
    let a_total = model.num_joint_actions();
    let num_obs = model.num_joint_obs();

    // Syntactic enumeration of the compressed space per step.
    let mut keys: Vec<Vec<u64>> = Vec::with_capacity(horizon + 1);
    let mut key_index: Vec<BTreeMap<u64, usize>> = Vec::with_capacity(horizon + 1);
    for h in 1..=horizon + 1 {
        let layout = info.common_layout(h, Some(scheme.memory));
        let size = layout.space_size();
        if size > config.max_keys_per_step as u128 {
            return Err(LearnError::Capacity {
                h,
                required: size,
                budget: config.max_keys_per_step,
            });
        }
        let step_keys: Vec<u64> = (0..size as u64).collect();
        key_index.push(step_keys.iter().map(|&k| (k, k as usize)).collect());
        keys.push(step_keys);
    }

    // Counting pass.
    let mut p_counts: Vec<Vec<Vec<u64>>> = (1..=horizon)
        .map(|h| vec![vec![0u64; info.joint_private_size(h)]; keys[h - 1].len()])
        .collect();
    let mut o_counts: Vec<Vec<Vec<u64>>> = (1..=horizon)
        .map(|h| {
            vec![vec![0u64; info.joint_private_size(h) * a_total * num_obs]; keys[h - 1].len()]
        })
        .collect();
    let mut reward_sum: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| vec![vec![0.0; num_obs]; horizon])
        .collect();
    let mut reward_count: Vec<Vec<u64>> = vec![vec![0u64; num_obs]; horizon];

    for h in 1..=horizon {
        let policy = &exploration.policies[h - 1];
        let layout = info.common_layout(h, Some(scheme.memory));
        // Trajectories are drawn in parallel from per-index derived seeds and
        // merged in index order, so results do not depend on worker count.
        let samples: Vec<Result<_, LearnError>> = (0..config.n0)
            .into_par_iter()
            .map(|k| {
                let tseed = derive_seed(config.seed, (h * config.n0 + k) as u64);
                let traj = sampler.sample(policy, tseed)?;
                let (acts, obs) = traj.history_at(h);
                let split = info.split_history(h, acts, obs);
                let compressed = info.compress(h, scheme.memory, &split.common);
                let key = layout.encode(&compressed)? as usize;
                let p = info.encode_private(h, &split.private);
                Ok((key, p, traj))
            })
            .collect();
        for sample in samples {
            let (key, p, traj) = sample?;
            let a = traj.actions[h - 1];
            let o_next = traj.observations[h - 1];
            p_counts[h - 1][key][p] += 1;
            o_counts[h - 1][key][(p * a_total + a) * num_obs + o_next] += 1;
            // Every step of the trajectory reveals reward cells.
            for (t, &o_t) in traj.observations.iter().enumerate() {
                reward_count[t][o_t] += 1;
                for i in 0..n {
                    reward_sum[i][t][o_t] += traj.rewards[i][t];
                }
            }
        }
    }

    // Normalization with uniform fallback on unvisited cells.
    let mut p_hat = Vec::with_capacity(horizon);
    let mut o_hat = Vec::with_capacity(horizon);
    let mut key_visits = Vec::with_capacity(horizon);
    let mut cell_visits = Vec::with_capacity(horizon);
    let mut state_cells = Vec::with_capacity(horizon);
    let mut transition_cells = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        let p_total = info.joint_private_size(h);
        let mut step_p = Vec::with_capacity(keys[h - 1].len());
        let mut step_o = Vec::with_capacity(keys[h - 1].len());
        let mut step_kv = Vec::with_capacity(keys[h - 1].len());
        let mut step_cv = Vec::with_capacity(keys[h - 1].len());
        let mut visited_states = 0usize;
        let mut visited_cells = 0usize;
        for key_idx in 0..keys[h - 1].len() {
            let counts = &p_counts[h - 1][key_idx];
            let total: u64 = counts.iter().sum();
            step_kv.push(total);
            if total > 0 {
                visited_states += 1;
                step_p.push(counts.iter().map(|&c| c as f64 / total as f64).collect());
            } else {
                step_p.push(vec![1.0 / p_total as f64; p_total]);
            }
            let mut table = vec![0.0; p_total * a_total * num_obs];
            let mut cells = vec![0u64; p_total * a_total];
            for p in 0..p_total {
                for a in 0..a_total {
                    let base = (p * a_total + a) * num_obs;
                    let cell_total: u64 = (0..num_obs)
                        .map(|o| o_counts[h - 1][key_idx][base + o])
                        .sum();
                    cells[p * a_total + a] = cell_total;
                    if cell_total > 0 {
                        visited_cells += 1;
                        for o in 0..num_obs {
                            table[base + o] =
                                o_counts[h - 1][key_idx][base + o] as f64 / cell_total as f64;
                        }
                    } else {
                        for o in 0..num_obs {
                            table[base + o] = 1.0 / num_obs as f64;
                        }
                    }
                }
            }
            step_o.push(table);
            step_cv.push(cells);
        }
        state_cells.push((visited_states, keys[h - 1].len()));
        transition_cells.push((visited_cells, keys[h - 1].len() * p_total * a_total));
        p_hat.push(step_p);
        o_hat.push(step_o);
        key_visits.push(step_kv);
        cell_visits.push(step_cv);
    }

    // Reward estimate: supplied tables win, otherwise empirical means with a
    // midpoint fallback on never-observed cells.
    let mut reward_cells = Vec::with_capacity(horizon);
    let mut reward_seen = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let seen: Vec<bool> = (0..num_obs).map(|o| reward_count[t][o] > 0).collect();
        reward_cells.push((seen.iter().filter(|&&s| s).count(), num_obs));
        reward_seen.push(seen);
    }
    let rewards = match rewards {
        Some(tables) => tables,
        None => (0..n)
            .map(|i| {
                (0..horizon)
                    .map(|t| {
                        (0..num_obs)
                            .map(|o| {
                                if reward_count[t][o] > 0 {
                                    reward_sum[i][t][o] / reward_count[t][o] as f64
                                } else {
                                    0.5
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    };

    // Evolution is structural: total on the syntactic space.
    let mut evolution = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        let layout = info.common_layout(h, Some(scheme.memory));
        let next_layout = info.common_layout(h + 1, Some(scheme.memory));
        let z_layout = info.z_layout(h);
        let num_z = z_layout.space_size() as usize;
        let mut rows = Vec::with_capacity(keys[h - 1].len());
        for &key in &keys[h - 1] {
            let values = layout.decode(key);
            let mut row = Vec::with_capacity(num_z);
            for z in 0..num_z {
                let z_values = z_layout.decode(z as u64);
                let next_values = info.evolve_common(h, Some(scheme.memory), &values, &z_values)?;
                let next_key = next_layout.encode(&next_values)? as usize;
                row.push(Some(next_key));
            }
            rows.push(row);
        }
        evolution.push(rows);
    }

    // Increment map per step (key-independent).
    let mut chi = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        let p_total = info.joint_private_size(h);
        let z_layout = info.z_layout(h);
        let mut table = vec![0usize; p_total * a_total * num_obs];
        for p in 0..p_total {
            let private = info.decode_private(h, p);
            for a in 0..a_total {
                for o in 0..num_obs {
                    let zv = info.z_values(h, &private, a, o);
                    table[(p * a_total + a) * num_obs + o] = z_layout.encode(&zv)? as usize;
                }
            }
        }
        chi.push(table);
    }

    Ok(EmpiricalModel {
        info,
        scheme,
        horizon,
        action_counts: model.action_counts.clone(),
        num_obs,
        keys,
        key_index,
        p_hat,
        key_visits,
        o_hat,
        cell_visits,
        evolution,
        chi,
        rewards,
        reward_seen,
        coverage: CoverageReport {
            state_cells,
            transition_cells,
            reward_cells,
        },
    })
}

/// Exact state occupancies `d_{S,t}` under each step's exploration policy at
/// that step's truncation-window start; the priors that make the compressed
/// beliefs policy-dependent. Entries for steps no window starts at are
/// uniform placeholders.
pub fn policy_dependent_priors(
    model: &PosgModel,
    exploration: &ExplorationPolicySet,
    pattern: SharingPattern,
    scheme: CompressionScheme,
    max_histories: usize,
) -> Result<Vec<Belief>, LearnError> {
    let info = InfoStructure::new(pattern, model)?;
    let mut priors = vec![Belief::uniform(model.num_states); model.horizon + 1];
    for h in 1..=model.horizon {
        let start = window_start(&info, pattern, scheme.memory, h);
        if start <= 1 {
            continue; // the filter uses mu_1 there
        }
        let occ = occupancy(model, &exploration.policies[h - 1], start, max_histories)?;
        priors[start - 1] = occ;
    }
    Ok(priors)
}

fn window_start(
    info: &InfoStructure,
    pattern: SharingPattern,
    memory: usize,
    h: usize,
) -> usize {
    let _ = info;
    let anchor = match pattern {
        SharingPattern::AsymmetricDelay { delay } | SharingPattern::UncontrolledDelay { delay } => {
            (h as i64 - delay as i64).max(1) as usize
        }
        _ => h,
    };
    (anchor as i64 - memory as i64).max(1) as usize
}

/// Exact state occupancy `d_{S,h}` under a policy.
pub fn occupancy(
    model: &PosgModel,
    policy: &dyn JointPolicy,
    h: usize,
    max_histories: usize,
) -> Result<Belief, LearnError> {
    let histories = enumerate_histories(model, policy, h, max_histories)?;
    let mut dist = vec![0.0; model.num_states];
    for hist in &histories {
        for (s, &w) in hist.alpha.iter().enumerate() {
            dist[s] += w;
        }
    }
    let sum: f64 = dist.iter().sum();
    for v in &mut dist {
        *v /= sum;
    }
    Ok(Belief::new(dist).expect("normalized occupancy"))
}

/// Probability mass of states whose occupancy at step `h` under `policy`
/// falls below `phi`.
pub fn underexplored_mass(
    model: &PosgModel,
    policy: &dyn JointPolicy,
    h: usize,
    phi: f64,
    max_histories: usize,
) -> Result<f64, LearnError> {
    let occ = occupancy(model, policy, h, max_histories)?;
    Ok(occ
        .probs()
        .iter()
        .filter(|&&d| d < phi)
        .sum())
}

/// Outcome of rollout-based policy selection.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub selected: usize,
    /// `scores[j] = max_{i,m} (R_i^{j,m} - R_i^j)`.
    pub scores: Vec<f64>,
}

fn rollout_mean(
    sampler: &dyn TrajectorySampler,
    policy: &dyn JointPolicy,
    agent: usize,
    n: usize,
    seed: u64,
) -> Result<f64, LearnError> {
    let mut total = 0.0;
    for k in 0..n {
        let traj = sampler.sample(policy, derive_seed(seed, k as u64))?;
        total += traj.total_reward(agent);
    }
    Ok(total / n as f64)
}

/// Selects among candidate equilibria by estimating each one's worst
/// deviation: for every agent and every model, the deviator best-responds in
/// that model and the composition is rolled out in the environment; the
/// candidate with the smallest estimated deviation benefit wins (ties to the
/// smallest index).
pub fn policy_selection(
    models: &[&dyn CommonInfoGame],
    candidates: &[CommonInfoPolicy],
    kind: SolveKind,
    n2: usize,
    sampler: &dyn TrajectorySampler,
    seed: u64,
) -> Result<SelectionOutcome, LearnError> {
    assert_eq!(models.len(), candidates.len());
    assert!(!candidates.is_empty());
    let mode = DeviationMode::for_kind(kind);
    let env_model = sampler.model();
    let n_agents = env_model.num_agents;
    let info = InfoStructure::new(candidates[0].pattern, env_model)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for (j, candidate) in candidates.iter().enumerate() {
        // Base rollouts.
        let mut base = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            base.push(rollout_mean(
                sampler,
                &candidate.executor(&info),
                i,
                n2,
                derive_seed(seed, (j * n_agents + i) as u64),
            )?);
        }
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n_agents {
            for (m, model_m) in models.iter().enumerate() {
                let response = best_response_policy(*model_m, candidate, i, mode)?;
                let deviated = rollout_mean(
                    sampler,
                    &response.composed.executor(&info),
                    i,
                    n2,
                    derive_seed(seed, 1_000_003 * (1 + i) as u64 + (j * models.len() + m) as u64),
                )?;
                worst = worst.max(deviated - base[i]);
            }
        }
        scores.push(worst);
    }
    let mut selected = 0;
    for (j, &score) in scores.iter().enumerate() {
        if score < scores[selected] {
            selected = j;
        }
    }
    Ok(SelectionOutcome { selected, scores })
}

/// One group of exploration policies with an optional reward estimate.
pub struct ExplorationGroup {
    pub policies: ExplorationPolicySet,
    pub rewards: Option<Vec<Vec<Vec<f64>>>>,
}

/// Produces candidate exploration groups. The baseline emits `K` copies of
/// fully uniform exploration with empirical rewards; richer generators can
/// plug in targeted exploration without touching the pipeline.
pub trait ExplorationGenerator {
    fn groups(&self, model: &PosgModel, l_hat: usize) -> Vec<ExplorationGroup>;
}

/// The default generator: `K` identical uniform groups.
pub struct UniformExploration {
    pub num_groups: usize,
}

impl Default for UniformExploration {
    fn default() -> Self {
        UniformExploration { num_groups: 1 }
    }
}

impl ExplorationGenerator for UniformExploration {
    fn groups(&self, model: &PosgModel, l_hat: usize) -> Vec<ExplorationGroup> {
        (0..self.num_groups.max(1))
            .map(|_| ExplorationGroup {
                policies: make_uniform_exploration(model, l_hat),
                rewards: None,
            })
            .collect()
    }
}

/// Everything the learning loop produced, for reporting.
pub struct LaciOutcome {
    pub policy: CommonInfoPolicy,
    pub selected: usize,
    pub candidates: Vec<EquilibriumSolution>,
    pub coverage: Vec<CoverageReport>,
    pub selection_scores: Vec<f64>,
}

/// The full learning loop: for each exploration group, estimate an empirical
/// model and plan on it; then select among the candidates by rollouts.
pub fn laci(
    sampler: &dyn TrajectorySampler,
    pattern: SharingPattern,
    scheme: CompressionScheme,
    kind: SolveKind,
    config: &LearnConfig,
    generator: &dyn ExplorationGenerator,
) -> Result<LaciOutcome, LearnError> {
    config.validate()?;
    let model = sampler.model();
    let info = InfoStructure::new(pattern, model)?;
    let l_hat = info.l_hat(scheme.memory);
    let groups = generator.groups(model, l_hat);
    assert!(!groups.is_empty(), "generator produced no groups");

    let mut empirical = Vec::with_capacity(groups.len());
    let mut candidates = Vec::with_capacity(groups.len());
    let mut solutions = Vec::with_capacity(groups.len());
    let mut coverage = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        let mut group_config = config.clone();
        group_config.seed = derive_seed(config.seed, 7_700 + g as u64);
        let estimate = construct_empirical(
            sampler,
            &group.policies,
            pattern,
            scheme,
            group.rewards.clone(),
            &group_config,
        )?;
        let solve_opts = crate::equilibrium::SolveOptions {
            eps: config.eps_e,
            ..Default::default()
        };
        let solution = vi_approx(&estimate, kind, &solve_opts)?;
        coverage.push(estimate.coverage.clone());
        candidates.push(solution.policy.clone());
        solutions.push(solution);
        empirical.push(estimate);
    }
    let model_refs: Vec<&dyn CommonInfoGame> = empirical
        .iter()
        .map(|m| m as &dyn CommonInfoGame)
        .collect();
    let outcome = policy_selection(
        &model_refs,
        &candidates,
        kind,
        config.n2,
        sampler,
        derive_seed(config.seed, 31_337),
    )?;
    Ok(LaciOutcome {
        policy: candidates[outcome.selected].clone(),
        selected: outcome.selected,
        candidates: solutions,
        coverage,
        selection_scores: outcome.scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{ApproxCommonModel, BeliefSource, BuildOptions};
    use crate::equilibrium::Prescription;
    use crate::planning::policy_value_exact;
    use std::sync::Arc;

    fn fuzzy(seed: u64, horizon: usize) -> Arc<PosgModel> {
        let action_counts = vec![2usize, 2];
        let obs_counts = vec![2usize, 2];
        let states = 2usize;
        let num_actions: usize = action_counts.iter().product();
        let num_obs: usize = obs_counts.iter().product();
        let mut counter = seed;
        let mut next = move || {
            counter = derive_seed(counter, 1);
            0.2 + (counter % 1000) as f64 / 1000.0
        };
        let simplex = |w: Vec<f64>| {
            let sum: f64 = w.iter().sum();
            w.into_iter().map(|v| v / sum).collect::<Vec<f64>>()
        };
        let mut transitions = Vec::new();
        for _h in 0..horizon {
            let mut table = Vec::new();
            for _s in 0..states {
                for _a in 0..num_actions {
                    table.extend(simplex((0..states).map(|_| next()).collect()));
                }
            }
            transitions.push(table);
        }
        let mut emissions = Vec::new();
        for _h in 0..=horizon {
            let mut table = Vec::new();
            for _s in 0..states {
                table.extend(simplex((0..num_obs).map(|_| next()).collect()));
            }
            emissions.push(table);
        }
        let rewards: Vec<f64> = (0..2 * horizon * num_obs).map(|_| next().min(1.0)).collect();
        let initial = simplex((0..states).map(|_| next()).collect());
        Arc::new(PosgModel::from_parts(
            "fuzzy",
            horizon,
            action_counts,
            obs_counts,
            initial,
            transitions,
            emissions,
            rewards,
            None,
        ))
    }

    #[test]
    fn uniform_exploration_passes_validation_and_samples_uniformly() {
        let model = fuzzy(3, 3);
        let exploration = make_uniform_exploration(&model, 2);
        assert_eq!(exploration.policies.len(), 3);
        exploration.validate().unwrap();
        // Empirical joint-action frequency under the first policy.
        let mut counts = vec![0usize; model.num_joint_actions()];
        let n = 10_000;
        for k in 0..n {
            let t = sample_trajectory(&model, &exploration.policies[0], derive_seed(9, k)).unwrap();
            counts[t.actions[0]] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.02, "freq {freq}");
        }
        // A non-uniform suffix is rejected.
        let bad = ExplorationPolicySet {
            policies: vec![
                GeneralPolicy::fixed(&model, 0),
                GeneralPolicy::uniform(&model),
                GeneralPolicy::uniform(&model),
            ],
            l_hat: 1,
        };
        assert!(matches!(
            bad.validate(),
            Err(LearnError::NotUniformSuffix { h: 1, step: 1 })
        ));
    }

    #[test]
    fn n0_bound_arithmetic() {
        let config = LearnConfig {
            constant_c: 1.0,
            delta1: 0.1,
            zeta1: 0.1,
            theta1: 0.1,
            zeta2: 0.01,
            theta2: 0.1,
            ..Default::default()
        };
        let n0 = n0_bound(&config, 2, 4, 2, 2, 2);
        // Second branch dominates: 2 (2 + ln(1280)) / (0.01 * 0.01) ~ 1.83e5.
        assert!(
            (182_000..=184_000).contains(&n0),
            "n0 = {n0}"
        );
        let branch1_only = {
            let b1 = (2.0 + (4.0f64 * 2.0 * 4.0 / 0.1).ln()) / (0.1 * 0.01);
            b1
        };
        assert!(n0 as f64 > branch1_only, "second branch must dominate");

        // Doubling the compressed-space size increases the bound.
        assert!(n0_bound(&config, 2, 8, 2, 2, 2) > n0);

        // Halving theta1 multiplies the first branch by 4 (checked where the
        // first branch dominates: large P).
        let config_p = LearnConfig {
            zeta2: 0.1,
            ..config.clone()
        };
        let base = n0_bound(&config_p, 500, 4, 2, 2, 2);
        let halved = n0_bound(
            &LearnConfig {
                theta1: 0.05,
                ..config_p.clone()
            },
            500,
            4,
            2,
            2,
            2,
        );
        assert!(
            (halved as f64 / base as f64 - 4.0).abs() < 0.05,
            "ratio {}",
            halved as f64 / base as f64
        );
    }

    #[test]
    fn deterministic_model_estimated_exactly() {
        // Point-mass kernels: every estimated cell is exact after one visit.
        let horizon = 2;
        let mut emission = Vec::new();
        for s in 0..2 {
            let mut row = vec![0.0; 4];
            row[crate::model::encode_joint(&[s, s], &[2, 2]).unwrap()] = 1.0;
            emission.extend(row);
        }
        let mut t_table = Vec::new();
        for s in 0..2 {
            for a in 0..4 {
                let mut row = vec![0.0, 0.0];
                row[(s + a) % 2] = 1.0;
                t_table.extend(row);
            }
        }
        let model = PosgModel::from_parts(
            "det",
            horizon,
            vec![2, 2],
            vec![2, 2],
            vec![1.0, 0.0],
            vec![t_table.clone(), t_table],
            vec![emission.clone(), emission.clone(), emission],
            vec![0.25; 2 * horizon * 4],
            None,
        );
        let sampler = PosgSampler { model: &model };
        let exploration = make_uniform_exploration(&model, 1);
        let config = LearnConfig {
            n0: 2000,
            ..Default::default()
        };
        let estimate = construct_empirical(
            &sampler,
            &exploration,
            SharingPattern::OneStepDelay,
            CompressionScheme::new(1),
            None,
            &config,
        )
        .unwrap();
        // Compare against exact conditionals wherever cells were visited.
        for h in 1..=horizon {
            for &key in estimate.keys(h).iter() {
                if estimate.key_visits(h, key) == 0 {
                    continue;
                }
                let p_total = estimate.info().joint_private_size(h);
                for p in 0..p_total {
                    for a in 0..model.num_joint_actions() {
                        if estimate.cell_visit_count(h, key, p, a) == 0 {
                            continue;
                        }
                        let dist = estimate.estimated_obs_dist(h, key, p, a).unwrap();
                        // Deterministic kernels put all mass on one symbol.
                        let max = dist.iter().cloned().fold(0.0f64, f64::max);
                        assert!((max - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn fair_coin_cells_concentrate() {
        // Two states never left, fair-coin joint emission: estimated
        // next-observation cells near 0.5 wherever visited enough.
        let horizon = 2;
        let model = PosgModel::from_parts(
            "coin",
            horizon,
            vec![2, 1],
            vec![2, 1],
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]; horizon],
            vec![vec![0.5, 0.5, 0.5, 0.5]; horizon + 1],
            vec![0.25; 2 * horizon * 2],
            None,
        );
        let sampler = PosgSampler { model: &model };
        let exploration = make_uniform_exploration(&model, 1);
        let config = LearnConfig {
            n0: 10_000,
            seed: 5,
            ..Default::default()
        };
        let estimate = construct_empirical(
            &sampler,
            &exploration,
            SharingPattern::OneStepDelay,
            CompressionScheme::new(1),
            None,
            &config,
        )
        .unwrap();
        for h in 1..=horizon {
            for &key in estimate.keys(h) {
                let p_total = estimate.info().joint_private_size(h);
                for p in 0..p_total {
                    for a in 0..2 {
                        if estimate.cell_visit_count(h, key, p, a) < 100 {
                            continue;
                        }
                        let dist = estimate.estimated_obs_dist(h, key, p, a).unwrap();
                        assert!(
                            (dist[0] - 0.5).abs() <= 0.05,
                            "h={h} key={key} p={p} a={a}: {dist:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn policy_dependent_model_matches_trajectory_statistics() {
        // The compressed model seeded with exact occupancy priors reproduces
        // the conditional trajectory statistics of its exploration policy.
        let model = fuzzy(29, 3);
        let memory = 1usize;
        let pattern = SharingPattern::OneStepDelay;
        let info = InfoStructure::new(pattern, &model).unwrap();
        let exploration = make_uniform_exploration(&model, memory);
        let priors = policy_dependent_priors(
            &model,
            &exploration,
            pattern,
            CompressionScheme::new(memory),
            1_000_000,
        )
        .unwrap();
        let approx = ApproxCommonModel::build(
            Arc::clone(&model),
            pattern,
            CompressionScheme::new(memory),
            BeliefSource::OccupancyPrior(&priors),
            None,
            &BuildOptions::default(),
        )
        .unwrap();

        for h in 1..=model.horizon {
            // Exact conditional statistics under the exploration policy.
            let histories =
                enumerate_histories(&model, &exploration.policies[h - 1], h, 1_000_000).unwrap();
            let layout = info.common_layout(h, Some(memory));
            let p_total = info.joint_private_size(h);
            let a_total = model.num_joint_actions();
            let num_obs = model.num_joint_obs();
            // P(key, p) and P(key, p, a, o') under uniform action at h.
            let mut joint_p: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            let mut joint_o: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for hist in &histories {
                let split = info.split_history(h, &hist.actions, &hist.observations);
                let compressed = info.compress(h, memory, &split.common);
                let key = layout.encode(&compressed).unwrap();
                let p = info.encode_private(h, &split.private);
                joint_p
                    .entry(key)
                    .or_insert_with(|| vec![0.0; p_total])[p] += hist.prob;
                let cell = joint_o
                    .entry(key)
                    .or_insert_with(|| vec![0.0; p_total * a_total * num_obs]);
                for a in 0..a_total {
                    for (sp, o_row) in (0..model.num_states).map(|s| {
                        (s, model.emission_row(h + 1, s))
                    }) {
                        let _ = o_row;
                        let _ = sp;
                    }
                    // P(o' | hist, a) from the history's state distribution.
                    let mut pushed = vec![0.0; model.num_states];
                    for (s, &w) in hist.alpha.iter().enumerate() {
                        for (sp, &t) in model.transition_row(h, s, a).iter().enumerate() {
                            pushed[sp] += w * t;
                        }
                    }
                    for o in 0..num_obs {
                        let mut mass = 0.0;
                        for (sp, &w) in pushed.iter().enumerate() {
                            mass += w * model.emission_row(h + 1, sp)[o];
                        }
                        cell[(p * a_total + a) * num_obs + o] += mass / a_total as f64;
                    }
                }
            }
            // Compare against the model's step distributions under a random
            // prescription profile, for every visited key.
            let mut seed = 55u64;
            for (key, p_vec) in &joint_p {
                let key_mass: f64 = p_vec.iter().sum();
                if key_mass <= 1e-12 {
                    continue;
                }
                let profile: Vec<Prescription> = (0..2)
                    .map(|i| {
                        let pi = info.private_sizes(h)[i];
                        let mut probs = vec![0.0; pi * 2];
                        for p in 0..pi {
                            seed = derive_seed(seed, 1);
                            let x = 0.2 + (seed % 600) as f64 / 1000.0;
                            probs[p * 2] = x;
                            probs[p * 2 + 1] = 1.0 - x;
                        }
                        Prescription {
                            probs,
                            num_private: pi,
                            num_actions: 2,
                        }
                    })
                    .collect();
                let (z_model, o_model) = approx.model_step(h, *key, &profile).unwrap();
                // Conditional statistics assembled for the same profile.
                let cell = &joint_o[key];
                let mut z_stat = vec![0.0; approx.num_z(h)];
                let mut o_stat = vec![0.0; num_obs];
                for p in 0..p_total {
                    let p_cond = p_vec[p] / key_mass;
                    if p_cond == 0.0 {
                        continue;
                    }
                    let private = info.decode_private(h, p);
                    let p_comps: Vec<usize> = private
                        .iter()
                        .enumerate()
                        .map(|(i, v)| info.private_layout(i, h).encode(v).unwrap() as usize)
                        .collect();
                    for a in 0..a_total {
                        let a_comps = crate::model::decode_joint(a, &model.action_counts);
                        let mut gamma = 1.0;
                        for (i, pres) in profile.iter().enumerate() {
                            gamma *= pres.prob(p_comps[i], a_comps[i]);
                        }
                        if gamma == 0.0 {
                            continue;
                        }
                        // o-condit便 P(o' | key, p, a): the uniform action
                        // factor cancels in the conditional.
                        let base = (p * a_total + a) * num_obs;
                        let cell_mass: f64 =
                            (0..num_obs).map(|o| cell[base + o]).sum();
                        let p_key_p: f64 = p_vec[p];
                        if cell_mass <= 0.0 || p_key_p <= 0.0 {
                            continue;
                        }
                        for o in 0..num_obs {
                            let cond_o = cell[base + o] / cell_mass;
                            let w = p_cond * gamma * cond_o;
                            o_stat[o] += w;
                            let zv = info.z_values(h, &private, a, o);
                            let z = info.z_layout(h).encode(&zv).unwrap() as usize;
                            z_stat[z] += w;
                        }
                    }
                }
                for (x, y) in z_model.iter().zip(&z_stat) {
                    assert!((x - y).abs() <= 1e-9, "h={h} key={key}: z {x} vs {y}");
                }
                for (x, y) in o_model.iter().zip(&o_stat) {
                    assert!((x - y).abs() <= 1e-9, "h={h} key={key}: o {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn underexplored_mass_edges() {
        let model = fuzzy(31, 2);
        let uniform = GeneralPolicy::uniform(&model);
        assert_eq!(
            underexplored_mass(&model, &uniform, 2, 0.0, 1_000_000).unwrap(),
            0.0
        );
        assert!(
            (underexplored_mass(&model, &uniform, 2, 1.5, 1_000_000).unwrap() - 1.0).abs()
                < 1e-12
        );
        // Symmetric two-state chain: occupancy (0.5, 0.5).
        let chain = PosgModel::from_parts(
            "chain",
            2,
            vec![2, 1],
            vec![2, 1],
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]; 2],
            vec![vec![0.5, 0.5, 0.5, 0.5]; 3],
            vec![0.5; 2 * 2 * 2],
            None,
        );
        let uniform = GeneralPolicy::uniform(&chain);
        assert_eq!(
            underexplored_mass(&chain, &uniform, 2, 0.4, 1_000_000).unwrap(),
            0.0
        );
    }

    #[test]
    fn selection_single_candidate_trivial() {
        let model = fuzzy(37, 2);
        let sampler = PosgSampler { model: &model };
        let config = LearnConfig {
            n0: 500,
            n2: 200,
            ..Default::default()
        };
        let exploration = make_uniform_exploration(&model, 1);
        let estimate = construct_empirical(
            &sampler,
            &exploration,
            SharingPattern::OneStepDelay,
            CompressionScheme::new(1),
            None,
            &config,
        )
        .unwrap();
        let solution = vi_approx(
            &estimate,
            SolveKind::Cce,
            &crate::equilibrium::SolveOptions {
                eps: 0.05,
                ..Default::default()
            },
        )
        .unwrap();
        let outcome = policy_selection(
            &[&estimate as &dyn CommonInfoGame],
            &[solution.policy.clone()],
            SolveKind::Cce,
            100,
            &sampler,
            9,
        )
        .unwrap();
        assert_eq!(outcome.selected, 0);
    }

    #[test]
    fn laci_end_to_end_small_gap() {
        let model = fuzzy(41, 2);
        let sampler = PosgSampler { model: &model };
        let config = LearnConfig {
            n0: 20_000,
            n2: 500,
            eps_e: 0.01,
            seed: 13,
            ..Default::default()
        };
        let outcome = laci(
            &sampler,
            SharingPattern::OneStepDelay,
            CompressionScheme::new(model.horizon),
            SolveKind::Cce,
            &config,
            &UniformExploration::default(),
        )
        .unwrap();
        let gap = crate::planning::policy_gap(
            Arc::clone(&model),
            SharingPattern::OneStepDelay,
            &outcome.policy,
            SolveKind::Cce,
            &BuildOptions::default(),
            1_000_000,
        )
        .unwrap();
        assert!(
            gap <= model.horizon as f64 * config.eps_e + 0.05,
            "gap {gap}"
        );
    }

    #[test]
    fn laci_on_deterministic_model_reaches_tight_gap() {
        // Point-mass kernels: one visit pins every estimated cell, so the
        // learned equilibrium's exact gap is limited by the stage tolerance.
        let horizon = 2;
        let mut emission = Vec::new();
        for s in 0..2 {
            let mut row = vec![0.0; 4];
            row[crate::model::encode_joint(&[s, s], &[2, 2]).unwrap()] = 1.0;
            emission.extend(row);
        }
        let mut t_table = Vec::new();
        for s in 0..2 {
            for a in 0..4 {
                let mut row = vec![0.0, 0.0];
                row[(s + a) % 2] = 1.0;
                t_table.extend(row);
            }
        }
        let rewards: Vec<f64> = (0..2 * horizon * 4)
            .map(|k| ((k * 13 + 5) % 7) as f64 / 7.0)
            .collect();
        let model = Arc::new(PosgModel::from_parts(
            "det-laci",
            horizon,
            vec![2, 2],
            vec![2, 2],
            vec![1.0, 0.0],
            vec![t_table.clone(), t_table],
            vec![emission.clone(), emission.clone(), emission],
            rewards,
            None,
        ));
        let sampler = PosgSampler { model: &model };
        let config = LearnConfig {
            n0: 3000,
            n2: 300,
            eps_e: 0.01,
            seed: 99,
            ..Default::default()
        };
        let outcome = laci(
            &sampler,
            SharingPattern::OneStepDelay,
            CompressionScheme::new(horizon),
            SolveKind::Cce,
            &config,
            &UniformExploration::default(),
        )
        .unwrap();
        let gap = crate::planning::policy_gap(
            Arc::clone(&model),
            SharingPattern::OneStepDelay,
            &outcome.policy,
            SolveKind::Cce,
            &crate::approx::BuildOptions::default(),
            1_000_000,
        )
        .unwrap();
        assert!(gap <= horizon as f64 * config.eps_e + 0.05, "gap {gap}");
    }

    #[test]
    fn laci_rejects_zero_samples() {
        let model = fuzzy(43, 2);
        let sampler = PosgSampler { model: &model };
        let config = LearnConfig {
            n0: 0,
            ..Default::default()
        };
        assert!(matches!(
            laci(
                &sampler,
                SharingPattern::OneStepDelay,
                CompressionScheme::new(1),
                SolveKind::Cce,
                &config,
                &UniformExploration::default(),
            ),
            Err(LearnError::Config(_))
        ));
    }

    #[test]
    fn pipeline_deterministic_per_seed() {
        let model = fuzzy(47, 2);
        let sampler = PosgSampler { model: &model };
        let config = LearnConfig {
            n0: 1000,
            n2: 200,
            eps_e: 0.02,
            seed: 21,
            ..Default::default()
        };
        let run = || {
            laci(
                &sampler,
                SharingPattern::OneStepDelay,
                CompressionScheme::new(1),
                SolveKind::Cce,
                &config,
                &UniformExploration::default(),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.selected, b.selected);
        let info = InfoStructure::new(SharingPattern::OneStepDelay, &model).unwrap();
        for i in 0..2 {
            let va = policy_value_exact(&model, &a.policy.executor(&info), i, 1_000_000).unwrap();
            let vb = policy_value_exact(&model, &b.policy.executor(&info), i, 1_000_000).unwrap();
            assert_eq!(va, vb);
        }
    }

    #[test]
    fn empirical_estimates_converge_to_truth() {
        // Visited-cell conditionals approach the exact ones as N0 grows.
        let model = fuzzy(53, 2);
        let sampler = PosgSampler { model: &model };
        let pattern = SharingPattern::OneStepDelay;
        let memory = 1usize;
        let info = InfoStructure::new(pattern, &model).unwrap();
        let exploration = make_uniform_exploration(&model, memory);
        let config = LearnConfig {
            n0: 100_000,
            seed: 3,
            ..Default::default()
        };
        let estimate = construct_empirical(
            &sampler,
            &exploration,
            pattern,
            CompressionScheme::new(memory),
            None,
            &config,
        )
        .unwrap();
        // Exact conditionals from exhaustive enumeration.
        for h in 1..=model.horizon {
            let histories =
                enumerate_histories(&model, &exploration.policies[h - 1], h, 1_000_000).unwrap();
            let layout = info.common_layout(h, Some(memory));
            let p_total = info.joint_private_size(h);
            let mut truth: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for hist in &histories {
                let split = info.split_history(h, &hist.actions, &hist.observations);
                let compressed = info.compress(h, memory, &split.common);
                let key = layout.encode(&compressed).unwrap();
                let p = info.encode_private(h, &split.private);
                truth.entry(key).or_insert_with(|| vec![0.0; p_total])[p] += hist.prob;
            }
            for (key, dist) in &truth {
                let mass: f64 = dist.iter().sum();
                if mass < 0.05 {
                    continue;
                }
                let est = estimate.estimated_private_dist(h, *key).unwrap();
                let tv: f64 = dist
                    .iter()
                    .zip(est)
                    .map(|(t, e)| (t / mass - e).abs())
                    .sum::<f64>()
                    / 2.0;
                assert!(tv <= 0.02, "h={h} key={key} tv={tv}");
            }
        }
    }
}

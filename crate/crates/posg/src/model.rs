//! Canonical tabular POSG representation, validation, joint-index arithmetic,
//! and trajectory sampling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Tolerance used when checking that probability rows sum to one.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model failed validation: {0}")]
    Invalid(ValidationReport),
    #[error("joint index component {index} out of range at position {position} (radix {radix})")]
    IndexOutOfRange {
        position: usize,
        index: usize,
        radix: usize,
    },
    #[error("policy returned a distribution of length {got}, expected {expected}")]
    PolicyDimension { got: usize, expected: usize },
    #[error("policy returned an unnormalized distribution (sum {sum})")]
    PolicyNotNormalized { sum: f64 },
    #[error("enumeration needs {required} nodes, budget is {budget}")]
    Capacity { required: usize, budget: usize },
}

/// Mixed-radix encoding of a per-agent index tuple into a single joint index.
/// Agent 0 is the most significant digit, so `encode_joint(&[1, 0], &[2, 3]) == 3`.
pub fn encode_joint(indices: &[usize], radices: &[usize]) -> Result<usize, ModelError> {
    assert_eq!(indices.len(), radices.len());
    let mut code = 0usize;
    for (position, (&ix, &radix)) in indices.iter().zip(radices).enumerate() {
        if ix >= radix {
            return Err(ModelError::IndexOutOfRange {
                position,
                index: ix,
                radix,
            });
        }
        code = code * radix + ix;
    }
    Ok(code)
}

/// Inverse of [`encode_joint`].
pub fn decode_joint(code: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; radices.len()];
    let mut rest = code;
    for (slot, &radix) in out.iter_mut().zip(radices).rev() {
        *slot = rest % radix;
        rest /= radix;
    }
    debug_assert_eq!(rest, 0, "joint code out of range");
    out
}

/// Product of radices, i.e. the size of the joint space.
pub fn joint_size(radices: &[usize]) -> usize {
    radices.iter().product()
}

/// Derives an independent per-trajectory seed from a base seed, so batches of
/// trajectories can be sampled in parallel with reproducible results.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 over the pair
    let mut z = base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Affine map recording how raw benchmark rewards were normalized into [0, 1]:
/// `raw = scale * normalized + offset`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RewardMap {
    pub scale: f64,
    pub offset: f64,
}

impl RewardMap {
    pub fn to_raw(&self, normalized: f64) -> f64 {
        self.scale * normalized + self.offset
    }

    pub fn to_normalized(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }
}

/// One invariant violation found by [`PosgModel::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TransitionRow { h: usize, s: usize, a: usize, sum: f64 },
    TransitionEntry { h: usize, s: usize, a: usize, next: usize, value: f64 },
    EmissionRow { h: usize, s: usize, sum: f64 },
    EmissionEntry { h: usize, s: usize, o: usize, value: f64 },
    InitialSum { sum: f64 },
    InitialEntry { s: usize, value: f64 },
    RewardRange { i: usize, h: usize, o: usize, value: f64 },
    Shape { what: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TransitionRow { h, s, a, sum } => {
                write!(f, "transition row (h={h}, s={s}, a={a}) sums to {sum}")
            }
            Violation::TransitionEntry { h, s, a, next, value } => {
                write!(f, "transition entry (h={h}, s={s}, a={a}, s'={next}) = {value} < 0")
            }
            Violation::EmissionRow { h, s, sum } => {
                write!(f, "emission row (h={h}, s={s}) sums to {sum}")
            }
            Violation::EmissionEntry { h, s, o, value } => {
                write!(f, "emission entry (h={h}, s={s}, o={o}) = {value} < 0")
            }
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::InitialEntry { s, value } => {
                write!(f, "initial entry (s={s}) = {value} < 0")
            }
            Violation::RewardRange { i, h, o, value } => {
                write!(f, "reward (i={i}, h={h}, o={o}) = {value} outside [0, 1]")
            }
            Violation::Shape { what } => write!(f, "shape mismatch: {what}"),
        }
    }
}

/// Complete list of invariant violations; empty iff the model is valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        if let Some(first) = self.violations.first() {
            write!(f, "; first: {first}")?;
        }
        Ok(())
    }
}

/// A finite-horizon tabular POSG.
///
/// The episode starts with the first joint action: `s_1 ~ mu_1`, then for each
/// `h in 1..=H` the agents act, the state transitions through `T_h`, the joint
/// observation `o_{h+1}` is emitted from `O_{h+1}`, and reward `r_{i,h+1}(o_{h+1})`
/// is collected. There is no reward at step 1 and no step-1 observation in any
/// history. The emission table for step 1 is stored for completeness but never
/// contributes a reward or an entry to a history.
#[derive(Clone)]
pub struct PosgModel {
    pub name: String,
    pub horizon: usize,
    pub num_agents: usize,
    pub num_states: usize,
    pub action_counts: Vec<usize>,
    pub obs_counts: Vec<usize>,
    /// `mu_1`, length `num_states`.
    pub initial: Vec<f64>,
    /// Per step `h in 1..=H`: row-major `[s][a][s']`, each `(s, a)` row a distribution.
    transitions: Vec<Vec<f64>>,
    /// Per step `h in 1..=H+1`: row-major `[s][o]`, each `s` row a distribution.
    emissions: Vec<Vec<f64>>,
    /// Flattened `[(i * H + (h - 2)) * O + o]` for `h in 2..=H+1`.
    rewards: Vec<f64>,
    pub reward_map: Option<RewardMap>,
    valid: bool,
}

impl fmt::Debug for PosgModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PosgModel")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("num_agents", &self.num_agents)
            .field("num_states", &self.num_states)
            .field("action_counts", &self.action_counts)
            .field("obs_counts", &self.obs_counts)
            .finish_non_exhaustive()
    }
}

impl PosgModel {
    /// Assembles a model from raw tables without rejecting invalid data; the
    /// validation verdict is cached and consulted by operations that require a
    /// valid model. Use [`PosgModel::validate`] to inspect violations.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        name: impl Into<String>,
        horizon: usize,
        action_counts: Vec<usize>,
        obs_counts: Vec<usize>,
        initial: Vec<f64>,
        transitions: Vec<Vec<f64>>,
        emissions: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        reward_map: Option<RewardMap>,
    ) -> Self {
        assert!(horizon >= 1, "horizon must be positive");
        assert!(!action_counts.is_empty(), "need at least one agent");
        assert_eq!(action_counts.len(), obs_counts.len());
        let mut model = PosgModel {
            name: name.into(),
            horizon,
            num_agents: action_counts.len(),
            num_states: initial.len(),
            action_counts,
            obs_counts,
            initial,
            transitions,
            emissions,
            rewards,
            reward_map,
            valid: false,
        };
        model.valid = model.validate().is_empty();
        model
    }

    pub fn num_joint_actions(&self) -> usize {
        joint_size(&self.action_counts)
    }

    pub fn num_joint_obs(&self) -> usize {
        joint_size(&self.obs_counts)
    }

    pub fn is_valid(&self) -> bool {
        self.valid
    }

    /// Transition row `T_h(.|s, a)` for `h in 1..=H`.
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let states = self.num_states;
        let base = (s * self.num_joint_actions() + a) * states;
        &self.transitions[h - 1][base..base + states]
    }

    /// Full transition table for step `h`, row-major `[s][a][s']`.
    pub fn transition_table(&self, h: usize) -> &[f64] {
        &self.transitions[h - 1]
    }

    /// Full emission table for step `h`, row-major `[s][o]`.
    pub fn emission_table(&self, h: usize) -> &[f64] {
        &self.emissions[h - 1]
    }

    /// Emission row `O_h(.|s)` for `h in 1..=H+1`.
    pub fn emission_row(&self, h: usize, s: usize) -> &[f64] {
        let obs = self.num_joint_obs();
        &self.emissions[h - 1][s * obs..(s + 1) * obs]
    }

    /// Marginal emission for one agent: `O_{i,h}(y|s) = sum_{o: o_i = y} O_h(o|s)`.
    pub fn emission_marginal(&self, h: usize, s: usize, agent: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.obs_counts[agent]];
        for (o, &p) in self.emission_row(h, s).iter().enumerate() {
            out[self.obs_component(o, agent)] += p;
        }
        out
    }

    /// Reward `r_{i,h}(o)` for `h in 2..=H+1`.
    pub fn reward(&self, i: usize, h: usize, o: usize) -> f64 {
        debug_assert!((2..=self.horizon + 1).contains(&h));
        self.rewards[(i * self.horizon + (h - 2)) * self.num_joint_obs() + o]
    }

    /// Full reward table for agent `i` at step `h in 2..=H+1`, indexed by joint observation.
    pub fn reward_table(&self, i: usize, h: usize) -> &[f64] {
        let obs = self.num_joint_obs();
        let base = (i * self.horizon + (h - 2)) * obs;
        &self.rewards[base..base + obs]
    }

    /// Agent component of a joint observation index.
    pub fn obs_component(&self, o: usize, agent: usize) -> usize {
        decode_joint(o, &self.obs_counts)[agent]
    }

    /// Agent component of a joint action index.
    pub fn action_component(&self, a: usize, agent: usize) -> usize {
        decode_joint(a, &self.action_counts)[agent]
    }

    /// Checks every invariant and reports all violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let states = self.num_states;
        let actions = self.num_joint_actions();
        let obs = self.num_joint_obs();

        if self.transitions.len() != self.horizon {
            violations.push(Violation::Shape {
                what: format!(
                    "expected {} transition tables, found {}",
                    self.horizon,
                    self.transitions.len()
                ),
            });
        }
        if self.emissions.len() != self.horizon + 1 {
            violations.push(Violation::Shape {
                what: format!(
                    "expected {} emission tables, found {}",
                    self.horizon + 1,
                    self.emissions.len()
                ),
            });
        }
        if self.rewards.len() != self.num_agents * self.horizon * obs {
            violations.push(Violation::Shape {
                what: format!(
                    "expected {} reward entries, found {}",
                    self.num_agents * self.horizon * obs,
                    self.rewards.len()
                ),
            });
        }
        for (t, table) in self.transitions.iter().enumerate() {
            if table.len() != states * actions * states {
                violations.push(Violation::Shape {
                    what: format!("transition table at h={} has wrong size", t + 1),
                });
            }
        }
        for (t, table) in self.emissions.iter().enumerate() {
            if table.len() != states * obs {
                violations.push(Violation::Shape {
                    what: format!("emission table at h={} has wrong size", t + 1),
                });
            }
        }
        if !violations.is_empty() {
            return ValidationReport { violations };
        }

        let mut sum = 0.0;
        for (s, &p) in self.initial.iter().enumerate() {
            if p < 0.0 {
                violations.push(Violation::InitialEntry { s, value: p });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_TOL {
            violations.push(Violation::InitialSum { sum });
        }

        for h in 1..=self.horizon {
            for s in 0..states {
                for a in 0..actions {
                    let row = self.transition_row(h, s, a);
                    let mut sum = 0.0;
                    for (next, &p) in row.iter().enumerate() {
                        if p < 0.0 {
                            violations.push(Violation::TransitionEntry { h, s, a, next, value: p });
                        }
                        sum += p;
                    }
                    if (sum - 1.0).abs() > PROB_TOL {
                        violations.push(Violation::TransitionRow { h, s, a, sum });
                    }
                }
            }
        }

        for h in 1..=self.horizon + 1 {
            for s in 0..states {
                let row = self.emission_row(h, s);
                let mut sum = 0.0;
                for (o, &p) in row.iter().enumerate() {
                    if p < 0.0 {
                        violations.push(Violation::EmissionEntry { h, s, o, value: p });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    violations.push(Violation::EmissionRow { h, s, sum });
                }
            }
        }

        for i in 0..self.num_agents {
            for h in 2..=self.horizon + 1 {
                for o in 0..obs {
                    let value = self.reward(i, h, o);
                    if !(0.0..=1.0).contains(&value) || value.is_nan() {
                        violations.push(Violation::RewardRange { i, h, o, value });
                    }
                }
            }
        }

        ValidationReport { violations }
    }
}

/// A sampled episode. `states[k] = s_{k+1}`, `actions[k] = a_{k+1}`,
/// `observations[k] = o_{k+2}` and `rewards[i][k] = r_{i,k+2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
    pub rewards: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Total reward collected by one agent.
    pub fn total_reward(&self, agent: usize) -> f64 {
        self.rewards[agent].iter().sum()
    }

    /// The joint history `(a_{1:h-1}, o_{2:h})` available at step `h`.
    pub fn history_at(&self, h: usize) -> (&[usize], &[usize]) {
        (&self.actions[..h - 1], &self.observations[..h.saturating_sub(1)])
    }
}

/// Anything that maps a full joint history to a distribution over joint actions.
///
/// `actions` and `observations` follow the crate-wide history convention:
/// `actions[k] = a_{k+1}`, `observations[k] = o_{k+2}`, so at step `h` the
/// slices have lengths `h - 1` and `h - 1`.
pub trait JointPolicy: Send + Sync {
    fn joint_action_dist(&self, h: usize, actions: &[usize], observations: &[usize]) -> Vec<f64>;
}

/// Per-step behavior for [`GeneralPolicy::PerStep`].
#[derive(Debug, Clone)]
pub enum StepRule {
    Uniform,
    Fixed(usize),
    /// A fixed distribution over joint actions, ignoring history.
    Dist(Vec<f64>),
}

/// History-dependent joint policies in the few representations the toolkit needs.
#[derive(Clone)]
pub enum GeneralPolicy {
    /// Uniform over joint actions at every step.
    Uniform { num_joint_actions: usize },
    /// Always the same joint action.
    Fixed { action: usize, num_joint_actions: usize },
    /// An independent rule per step, ignoring history content.
    PerStep { steps: Vec<StepRule>, num_joint_actions: usize },
    /// Arbitrary callback on the full history.
    Callback(Arc<dyn Fn(usize, &[usize], &[usize]) -> Vec<f64> + Send + Sync>),
}

impl fmt::Debug for GeneralPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneralPolicy::Uniform { .. } => write!(f, "GeneralPolicy::Uniform"),
            GeneralPolicy::Fixed { action, .. } => write!(f, "GeneralPolicy::Fixed({action})"),
            GeneralPolicy::PerStep { .. } => write!(f, "GeneralPolicy::PerStep"),
            GeneralPolicy::Callback(_) => write!(f, "GeneralPolicy::Callback"),
        }
    }
}

impl GeneralPolicy {
    pub fn uniform(model: &PosgModel) -> Self {
        GeneralPolicy::Uniform {
            num_joint_actions: model.num_joint_actions(),
        }
    }

    pub fn fixed(model: &PosgModel, action: usize) -> Self {
        GeneralPolicy::Fixed {
            action,
            num_joint_actions: model.num_joint_actions(),
        }
    }

    /// A deterministic pseudo-random history-dependent policy: the action
    /// distribution at each history is derived by hashing `(seed, history)`.
    /// Useful for exercising strategy-independence properties.
    pub fn random_history_dependent(model: &PosgModel, seed: u64) -> Self {
        let num = model.num_joint_actions();
        GeneralPolicy::Callback(Arc::new(move |h, actions, observations| {
            let mut acc = derive_seed(seed, h as u64);
            for &a in actions {
                acc = derive_seed(acc, a as u64 + 1);
            }
            for &o in observations {
                acc = derive_seed(acc, (o as u64) << 20);
            }
            let mut weights = Vec::with_capacity(num);
            let mut sum = 0.0;
            for k in 0..num {
                let u = derive_seed(acc, 7 + k as u64) as f64 / u64::MAX as f64;
                let w = 0.05 + u;
                weights.push(w);
                sum += w;
            }
            for w in &mut weights {
                *w /= sum;
            }
            weights
        }))
    }

    /// True when this policy is structurally uniform at step `h` regardless of
    /// history. Callback policies are never considered structurally uniform.
    pub fn is_uniform_at(&self, h: usize) -> bool {
        match self {
            GeneralPolicy::Uniform { .. } => true,
            GeneralPolicy::Fixed { .. } => false,
            GeneralPolicy::PerStep { steps, .. } => {
                matches!(steps.get(h - 1), Some(StepRule::Uniform))
            }
            GeneralPolicy::Callback(_) => false,
        }
    }
}

impl JointPolicy for GeneralPolicy {
    fn joint_action_dist(&self, h: usize, actions: &[usize], observations: &[usize]) -> Vec<f64> {
        match self {
            GeneralPolicy::Uniform { num_joint_actions } => {
                vec![1.0 / *num_joint_actions as f64; *num_joint_actions]
            }
            GeneralPolicy::Fixed { action, num_joint_actions } => {
                let mut dist = vec![0.0; *num_joint_actions];
                dist[*action] = 1.0;
                dist
            }
            GeneralPolicy::PerStep { steps, num_joint_actions } => match &steps[h - 1] {
                StepRule::Uniform => vec![1.0 / *num_joint_actions as f64; *num_joint_actions],
                StepRule::Fixed(a) => {
                    let mut dist = vec![0.0; *num_joint_actions];
                    dist[*a] = 1.0;
                    dist
                }
                StepRule::Dist(d) => d.clone(),
            },
            GeneralPolicy::Callback(f) => f(h, actions, observations),
        }
    }
}

/// One positive-probability history prefix `(a_{1:h-1}, o_{2:h})` under a
/// policy, with `alpha[s] = P(s_h = s, history)` and `prob` its total mass.
#[derive(Debug, Clone)]
pub struct WeightedHistory {
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
    pub alpha: Vec<f64>,
    pub prob: f64,
}

/// Enumerates every history with positive probability at step `h` under
/// `policy`, exactly. Fails with a capacity error once more than `max_nodes`
/// histories have been expanded.
pub fn enumerate_histories(
    model: &PosgModel,
    policy: &dyn JointPolicy,
    h: usize,
    max_nodes: usize,
) -> Result<Vec<WeightedHistory>, ModelError> {
    struct Node {
        h: usize,
        actions: Vec<usize>,
        observations: Vec<usize>,
        alpha: Vec<f64>,
    }
    let mut out = Vec::new();
    let mut stack = vec![Node {
        h: 1,
        actions: Vec::new(),
        observations: Vec::new(),
        alpha: model.initial.clone(),
    }];
    let mut visited = 0usize;
    while let Some(node) = stack.pop() {
        visited += 1;
        if visited > max_nodes {
            return Err(ModelError::Capacity {
                required: visited,
                budget: max_nodes,
            });
        }
        if node.h == h {
            let prob = node.alpha.iter().sum();
            out.push(WeightedHistory {
                actions: node.actions,
                observations: node.observations,
                alpha: node.alpha,
                prob,
            });
            continue;
        }
        let dist = policy.joint_action_dist(node.h, &node.actions, &node.observations);
        for (a, &pa) in dist.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let mut pushed = vec![0.0; model.num_states];
            for (s, &w) in node.alpha.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (sp, &tr) in model.transition_row(node.h, s, a).iter().enumerate() {
                    pushed[sp] += w * pa * tr;
                }
            }
            for o in 0..model.num_joint_obs() {
                let next: Vec<f64> = pushed
                    .iter()
                    .enumerate()
                    .map(|(sp, &w)| w * model.emission_row(node.h + 1, sp)[o])
                    .collect();
                if next.iter().sum::<f64>() <= 0.0 {
                    continue;
                }
                let mut actions = node.actions.clone();
                actions.push(a);
                let mut observations = node.observations.clone();
                observations.push(o);
                stack.push(Node {
                    h: node.h + 1,
                    actions,
                    observations,
                    alpha: next,
                });
            }
        }
    }
    Ok(out)
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    WeightedIndex::new(weights)
        .expect("non-negative weights with positive sum")
        .sample(rng)
}

/// Samples one episode. A pure function of `(model, policy, seed)`: the same
/// inputs always produce the same trajectory.
pub fn sample_trajectory(
    model: &PosgModel,
    policy: &dyn JointPolicy,
    seed: u64,
) -> Result<Trajectory, ModelError> {
    if !model.is_valid() {
        return Err(ModelError::Invalid(model.validate()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_actions = model.num_joint_actions();

    let mut states = Vec::with_capacity(model.horizon + 1);
    let mut actions = Vec::with_capacity(model.horizon);
    let mut observations = Vec::with_capacity(model.horizon);
    let mut rewards = vec![Vec::with_capacity(model.horizon); model.num_agents];

    let mut s = sample_index(&mut rng, &model.initial);
    states.push(s);
    for h in 1..=model.horizon {
        let dist = policy.joint_action_dist(h, &actions, &observations);
        if dist.len() != num_actions {
            return Err(ModelError::PolicyDimension {
                got: dist.len(),
                expected: num_actions,
            });
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(ModelError::PolicyNotNormalized { sum });
        }
        let a = sample_index(&mut rng, &dist);
        actions.push(a);
        s = sample_index(&mut rng, model.transition_row(h, s, a));
        states.push(s);
        let o = sample_index(&mut rng, model.emission_row(h + 1, s));
        observations.push(o);
        for (i, per_agent) in rewards.iter_mut().enumerate() {
            per_agent.push(model.reward(i, h + 1, o));
        }
    }

    Ok(Trajectory {
        seed,
        states,
        actions,
        observations,
        rewards,
    })
}

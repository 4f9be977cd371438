//! Information-sharing structures: history splitting into common and private
//! parts, incremental evolution, finite-memory compression, and the
//! strategy-independent common-information beliefs.
//!
//! Five structures are supported. Writing `o_t` for the joint observation at
//! step `t`, `o_{i,t}` for agent `i`'s component and `a_t` for the joint
//! action, their history splits are:
//!
//! | pattern                  | common `c_h`                                  | private `p_{i,h}`        |
//! |--------------------------|-----------------------------------------------|--------------------------|
//! | one-step delay           | `a_{1:h-1}, o_{2:h-1}`                        | `o_{i,h}`                |
//! | asymmetric delay `d`     | `o_{1,2:h}, o_{2,2:h-d}, a_{1,1:h-1}`         | `p_1 = {}`, `p_2 = o_{2,h-d+1:h}` |
//! | one-directional one-step | `a_{1:h-1}, o_{2:h-1}, o_{1,h}`               | `p_1 = {}`, `p_2 = o_{2,h}` |
//! | uncontrolled delay `d`   | `o_{2:h-d}`                                   | `o_{i,h-d+1:h}`          |
//! | symmetric                | `a_{1:h-1}, o_{2:h}`                          | `{}`                     |
//!
//! All ranges clip to the episode start; there is never a step-1 observation.
//! Finite-memory compression truncates each stream of `c_h` to its most recent
//! `L` steps; the delayed patterns keep windows anchored `d` steps back, so
//! their reconstruction length is `L + d`.
//!
//! Every common/private tuple is canonically encoded as a mixed-radix integer
//! over its defining streams, which makes space enumeration and hashing exact.

use crate::beliefs::{self, approx_filter, exact_filter, Belief, BeliefError, FilterMode};
use crate::model::{decode_joint, encode_joint, PosgModel};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("{pattern} requires exactly two agents, model has {agents}")]
    RequiresTwoAgents { pattern: &'static str, agents: usize },
    #[error("asymmetric delay requires transitions independent of agent 2's action; (h={h}, s={s}) differs by {diff}")]
    ControllerViolation { h: usize, s: usize, diff: f64 },
    #[error("uncontrolled delay requires action-independent transitions; (h={h}, s={s}) differs by {diff}")]
    UncontrolledViolation { h: usize, s: usize, diff: f64 },
    #[error("delay must be at least 1")]
    ZeroDelay,
    #[error("asymmetric delay case B is not supported: no closed-form belief exists for it")]
    CaseBUnsupported,
}

#[derive(Debug, Error)]
pub enum InfoError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("information state space too large: {required} exceeds budget {budget}")]
    Capacity { required: u128, budget: u128 },
    #[error("cannot reconstruct {item:?} at step {h} from the compressed state and increment")]
    EvolutionGap { item: StreamItem, h: usize },
    #[error("value {value} out of range for {item:?} (radix {radix})")]
    ValueOutOfRange { item: StreamItem, value: usize, radix: usize },
}

/// Which side of the asymmetric-delay structure is requested. Only case A
/// (the controller's observations shared instantly) has a closed-form belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymmetricCase {
    A,
    B,
}

/// The five supported sharing structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum SharingPattern {
    OneStepDelay,
    /// State controlled by agent 0, whose observations and actions are public;
    /// agent 1's observations are shared with delay `d` (case A).
    AsymmetricDelay { delay: usize },
    /// Agent 0's observations are public immediately, agent 1's with one step
    /// of delay.
    OneDirectional,
    /// Action-independent state process, observations shared with delay `d`.
    UncontrolledDelay { delay: usize },
    Symmetric,
}

impl SharingPattern {
    /// Constructor for the asymmetric-delay structure that rejects case B.
    pub fn asymmetric(delay: usize, case: AsymmetricCase) -> Result<Self, PatternError> {
        if case == AsymmetricCase::B {
            return Err(PatternError::CaseBUnsupported);
        }
        if delay == 0 {
            return Err(PatternError::ZeroDelay);
        }
        Ok(SharingPattern::AsymmetricDelay { delay })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SharingPattern::OneStepDelay => "one-step-delay",
            SharingPattern::AsymmetricDelay { .. } => "asymmetric-delay",
            SharingPattern::OneDirectional => "one-directional",
            SharingPattern::UncontrolledDelay { .. } => "uncontrolled-delay",
            SharingPattern::Symmetric => "symmetric",
        }
    }
}

/// Finite-memory truncation length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CompressionScheme {
    pub memory: usize,
}

impl CompressionScheme {
    pub fn new(memory: usize) -> Self {
        CompressionScheme { memory }
    }
}

/// One element of an information tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StreamItem {
    /// Joint action `a_t`.
    JointAction { step: usize },
    /// Joint observation `o_t`.
    JointObs { step: usize },
    /// One agent's action component `a_{i,t}`.
    AgentAction { agent: usize, step: usize },
    /// One agent's observation component `o_{i,t}`.
    AgentObs { agent: usize, step: usize },
}

impl StreamItem {
    /// The time step this item belongs to.
    pub fn step(&self) -> usize {
        match *self {
            StreamItem::JointAction { step }
            | StreamItem::JointObs { step }
            | StreamItem::AgentAction { step, .. }
            | StreamItem::AgentObs { step, .. } => step,
        }
    }
}

/// An ordered list of stream items with their radices; the canonical encoding
/// of a tuple is the mixed-radix integer over the item values (first item
/// most significant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub items: Vec<StreamItem>,
    pub radices: Vec<usize>,
}

impl Layout {
    fn new(items: Vec<StreamItem>, dims: &Dims) -> Layout {
        let radices = items.iter().map(|item| dims.radix(item)).collect();
        Layout { items, radices }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Size of the full (syntactic) product space.
    pub fn space_size(&self) -> u128 {
        self.radices.iter().map(|&r| r as u128).product()
    }

    pub fn encode(&self, values: &[usize]) -> Result<u64, InfoError> {
        debug_assert_eq!(values.len(), self.items.len());
        let mut code: u128 = 0;
        for ((&value, &radix), &item) in values.iter().zip(&self.radices).zip(&self.items) {
            if value >= radix {
                return Err(InfoError::ValueOutOfRange { item, value, radix });
            }
            code = code * radix as u128 + value as u128;
        }
        Ok(code as u64)
    }

    pub fn decode(&self, code: u64) -> Vec<usize> {
        let mut out = vec![0usize; self.items.len()];
        let mut rest = code as u128;
        for (slot, &radix) in out.iter_mut().zip(&self.radices).rev() {
            *slot = (rest % radix as u128) as usize;
            rest /= radix as u128;
        }
        debug_assert_eq!(rest, 0);
        out
    }
}

#[derive(Debug, Clone)]
struct Dims {
    num_agents: usize,
    action_counts: Vec<usize>,
    obs_counts: Vec<usize>,
    horizon: usize,
}

impl Dims {
    fn radix(&self, item: &StreamItem) -> usize {
        match *item {
            StreamItem::JointAction { .. } => self.action_counts.iter().product(),
            StreamItem::JointObs { .. } => self.obs_counts.iter().product(),
            StreamItem::AgentAction { agent, .. } => self.action_counts[agent],
            StreamItem::AgentObs { agent, .. } => self.obs_counts[agent],
        }
    }
}

/// The values carried by an information tuple, aligned with its [`Layout`].
pub type Values = Vec<usize>;

/// A history split into the common part and the per-agent private parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitHistory {
    pub common: Values,
    pub private: Vec<Values>,
}

/// Resolves stream items from a pool of known components; used to evolve
/// compressed states and to assemble increments.
#[derive(Debug, Default)]
struct ItemPool {
    actions: std::collections::BTreeMap<(usize, usize), usize>, // (agent, step) -> value
    obs: std::collections::BTreeMap<(usize, usize), usize>,     // (agent, step) -> value
}

impl ItemPool {
    fn insert(&mut self, item: StreamItem, value: usize, dims: &Dims) {
        match item {
            StreamItem::JointAction { step } => {
                for (agent, comp) in decode_joint(value, &dims.action_counts).into_iter().enumerate()
                {
                    self.actions.insert((agent, step), comp);
                }
            }
            StreamItem::JointObs { step } => {
                for (agent, comp) in decode_joint(value, &dims.obs_counts).into_iter().enumerate() {
                    self.obs.insert((agent, step), comp);
                }
            }
            StreamItem::AgentAction { agent, step } => {
                self.actions.insert((agent, step), value);
            }
            StreamItem::AgentObs { agent, step } => {
                self.obs.insert((agent, step), value);
            }
        }
    }

    fn resolve(&self, item: StreamItem, dims: &Dims) -> Option<usize> {
        match item {
            StreamItem::JointAction { step } => {
                let comps: Option<Vec<usize>> = (0..dims.num_agents)
                    .map(|agent| self.actions.get(&(agent, step)).copied())
                    .collect();
                comps.map(|c| encode_joint(&c, &dims.action_counts).expect("components in range"))
            }
            StreamItem::JointObs { step } => {
                let comps: Option<Vec<usize>> = (0..dims.num_agents)
                    .map(|agent| self.obs.get(&(agent, step)).copied())
                    .collect();
                comps.map(|c| encode_joint(&c, &dims.obs_counts).expect("components in range"))
            }
            StreamItem::AgentAction { agent, step } => self.actions.get(&(agent, step)).copied(),
            StreamItem::AgentObs { agent, step } => self.obs.get(&(agent, step)).copied(),
        }
    }
}

/// A sharing pattern bound to the dimensions of a concrete model, exposing
/// layouts, splitting, evolution, compression, and the common-information
/// beliefs.
#[derive(Debug, Clone)]
pub struct InfoStructure {
    pattern: SharingPattern,
    dims: Dims,
}

/// Prior used by the approximate common-information belief: the planning
/// variant starts every truncated window from the uniform distribution, the
/// learning variant from a per-step state-occupancy distribution (indexed by
/// the window's start step).
#[derive(Debug, Clone, Copy)]
pub enum BeliefPrior<'a> {
    Uniform,
    PerStep(&'a [Belief]),
}

impl BeliefPrior<'_> {
    fn at(&self, step: usize, num_states: usize) -> Belief {
        match self {
            BeliefPrior::Uniform => Belief::uniform(num_states),
            BeliefPrior::PerStep(beliefs) => beliefs[step - 1].clone(),
        }
    }
}

impl InfoStructure {
    pub fn new(pattern: SharingPattern, model: &PosgModel) -> Result<Self, PatternError> {
        let dims = Dims {
            num_agents: model.num_agents,
            action_counts: model.action_counts.clone(),
            obs_counts: model.obs_counts.clone(),
            horizon: model.horizon,
        };
        match pattern {
            SharingPattern::AsymmetricDelay { delay } => {
                if delay == 0 {
                    return Err(PatternError::ZeroDelay);
                }
                if model.num_agents != 2 {
                    return Err(PatternError::RequiresTwoAgents {
                        pattern: "asymmetric delay",
                        agents: model.num_agents,
                    });
                }
                validate_controller_independence(model)?;
            }
            SharingPattern::OneDirectional => {
                if model.num_agents != 2 {
                    return Err(PatternError::RequiresTwoAgents {
                        pattern: "one-directional sharing",
                        agents: model.num_agents,
                    });
                }
            }
            SharingPattern::UncontrolledDelay { delay } => {
                if delay == 0 {
                    return Err(PatternError::ZeroDelay);
                }
                validate_action_independence(model)?;
            }
            SharingPattern::OneStepDelay | SharingPattern::Symmetric => {}
        }
        Ok(InfoStructure { pattern, dims })
    }

    pub fn pattern(&self) -> SharingPattern {
        self.pattern
    }

    pub fn num_agents(&self) -> usize {
        self.dims.num_agents
    }

    pub fn horizon(&self) -> usize {
        self.dims.horizon
    }

    /// Per-agent action counts of the bound model.
    pub fn action_radices(&self) -> &[usize] {
        &self.dims.action_counts
    }

    /// Layout of the common information at step `h` (1..=H+1). With
    /// `memory = Some(L)` each stream is truncated to its most recent `L`
    /// steps; `None` keeps the full streams.
    pub fn common_layout(&self, h: usize, memory: Option<usize>) -> Layout {
        let mut items = Vec::new();
        let big = self.dims.horizon + 2; // effectively "no truncation"
        let l = memory.unwrap_or(big);
        match self.pattern {
            SharingPattern::OneStepDelay => {
                // actions a_{h-L:h-1}, observations o_{h-L+1:h-1}, chronological
                let a_lo = clamp_lo(h as i64 - l as i64, 1);
                for t in a_lo..h {
                    items.push(StreamItem::JointAction { step: t });
                    if t + 1 <= h - 1 && t + 1 >= 2 {
                        items.push(StreamItem::JointObs { step: t + 1 });
                    }
                }
            }
            SharingPattern::Symmetric => {
                let a_lo = clamp_lo(h as i64 - l as i64, 1);
                for t in a_lo..h {
                    items.push(StreamItem::JointAction { step: t });
                    if t + 1 >= 2 {
                        items.push(StreamItem::JointObs { step: t + 1 });
                    }
                }
            }
            SharingPattern::OneDirectional => {
                let a_lo = clamp_lo(h as i64 - l as i64, 1);
                for t in a_lo..h {
                    items.push(StreamItem::JointAction { step: t });
                    if t + 1 <= h - 1 && t + 1 >= 2 {
                        items.push(StreamItem::JointObs { step: t + 1 });
                    }
                }
                if h >= 2 {
                    items.push(StreamItem::AgentObs { agent: 0, step: h });
                }
            }
            SharingPattern::AsymmetricDelay { delay } => {
                // o_{1,h-d-L+1:h}, o_{2,h-d-L+1:h-d}, a_{1,h-d-L:h-1}
                let lo = clamp_lo(h as i64 - delay as i64 - l as i64, 1);
                for t in lo..h {
                    items.push(StreamItem::AgentAction { agent: 0, step: t });
                }
                for t in clamp_lo(lo as i64 + 1, 2)..=h {
                    items.push(StreamItem::AgentObs { agent: 0, step: t });
                }
                let o2_hi = h as i64 - delay as i64;
                let o2_lo = clamp_lo(lo as i64 + 1, 2);
                if o2_hi >= o2_lo as i64 {
                    for t in o2_lo..=o2_hi as usize {
                        items.push(StreamItem::AgentObs { agent: 1, step: t });
                    }
                }
            }
            SharingPattern::UncontrolledDelay { delay } => {
                let hi = h as i64 - delay as i64;
                let lo = clamp_lo(hi - l as i64 + 1, 2);
                if hi >= lo as i64 {
                    for t in lo..=hi as usize {
                        items.push(StreamItem::JointObs { step: t });
                    }
                }
            }
        }
        Layout::new(items, &self.dims)
    }

    /// Layout of agent `agent`'s private information at step `h`.
    pub fn private_layout(&self, agent: usize, h: usize) -> Layout {
        let mut items = Vec::new();
        match self.pattern {
            SharingPattern::OneStepDelay => {
                if h >= 2 {
                    items.push(StreamItem::AgentObs { agent, step: h });
                }
            }
            SharingPattern::Symmetric => {}
            SharingPattern::OneDirectional => {
                if agent == 1 && h >= 2 {
                    items.push(StreamItem::AgentObs { agent, step: h });
                }
            }
            SharingPattern::AsymmetricDelay { delay } => {
                if agent == 1 {
                    for t in clamp_lo(h as i64 - delay as i64 + 1, 2)..=h {
                        items.push(StreamItem::AgentObs { agent, step: t });
                    }
                }
            }
            SharingPattern::UncontrolledDelay { delay } => {
                for t in clamp_lo(h as i64 - delay as i64 + 1, 2)..=h {
                    items.push(StreamItem::AgentObs { agent, step: t });
                }
            }
        }
        Layout::new(items, &self.dims)
    }

    /// Per-agent private space sizes at step `h`.
    pub fn private_sizes(&self, h: usize) -> Vec<usize> {
        (0..self.dims.num_agents)
            .map(|i| self.private_layout(i, h).space_size() as usize)
            .collect()
    }

    pub fn joint_private_size(&self, h: usize) -> usize {
        self.private_sizes(h).iter().product()
    }

    /// Layout of the increment `z_{h+1}` revealed between steps `h` and `h+1`.
    pub fn z_layout(&self, h: usize) -> Layout {
        let mut items = Vec::new();
        match self.pattern {
            SharingPattern::OneStepDelay => {
                if h >= 2 {
                    items.push(StreamItem::JointObs { step: h });
                }
                items.push(StreamItem::JointAction { step: h });
            }
            SharingPattern::Symmetric => {
                items.push(StreamItem::JointAction { step: h });
                items.push(StreamItem::JointObs { step: h + 1 });
            }
            SharingPattern::OneDirectional => {
                if h >= 2 {
                    items.push(StreamItem::AgentObs { agent: 1, step: h });
                }
                items.push(StreamItem::JointAction { step: h });
                items.push(StreamItem::AgentObs { agent: 0, step: h + 1 });
            }
            SharingPattern::AsymmetricDelay { delay } => {
                items.push(StreamItem::AgentAction { agent: 0, step: h });
                items.push(StreamItem::AgentObs { agent: 0, step: h + 1 });
                let t = h as i64 + 1 - delay as i64;
                if t >= 2 {
                    items.push(StreamItem::AgentObs { agent: 1, step: t as usize });
                }
            }
            SharingPattern::UncontrolledDelay { delay } => {
                let t = h as i64 + 1 - delay as i64;
                if t >= 2 {
                    items.push(StreamItem::JointObs { step: t as usize });
                }
            }
        }
        Layout::new(items, &self.dims)
    }

    /// Minimum trailing-history length from which the compressed common
    /// information can be reconstructed.
    pub fn l_hat(&self, memory: usize) -> usize {
        match self.pattern {
            SharingPattern::OneStepDelay
            | SharingPattern::Symmetric
            | SharingPattern::OneDirectional => memory,
            SharingPattern::AsymmetricDelay { delay }
            | SharingPattern::UncontrolledDelay { delay } => memory + delay,
        }
    }

    /// Splits a full joint history `(a_{1:h-1}, o_{2:h})` into the common and
    /// per-agent private parts at step `h`.
    pub fn split_history(&self, h: usize, actions: &[usize], observations: &[usize]) -> SplitHistory {
        assert_eq!(actions.len(), h - 1, "history length mismatch");
        assert_eq!(observations.len(), h - 1, "history length mismatch");
        let read = |item: &StreamItem| -> usize {
            match *item {
                StreamItem::JointAction { step } => actions[step - 1],
                StreamItem::JointObs { step } => observations[step - 2],
                StreamItem::AgentAction { agent, step } => {
                    decode_joint(actions[step - 1], &self.dims.action_counts)[agent]
                }
                StreamItem::AgentObs { agent, step } => {
                    decode_joint(observations[step - 2], &self.dims.obs_counts)[agent]
                }
            }
        };
        let common = self.common_layout(h, None).items.iter().map(read).collect();
        let private = (0..self.dims.num_agents)
            .map(|i| self.private_layout(i, h).items.iter().map(read).collect())
            .collect();
        SplitHistory { common, private }
    }

    /// The increment `z_{h+1} = chi_{h+1}(p_h, a_h, o_{h+1})`, assembled from
    /// the joint private information, the joint action and the next joint
    /// observation.
    pub fn z_values(&self, h: usize, private: &[Values], a: usize, o_next: usize) -> Values {
        let pool = self.pool_from_parts(h, private, a, o_next);
        self.z_layout(h)
            .items
            .iter()
            .map(|item| {
                pool.resolve(*item, &self.dims)
                    .expect("increment must be a function of (p_h, a_h, o_{h+1})")
            })
            .collect()
    }

    /// Private evolution `p_{i,h+1} = xi_{i,h+1}(p_{i,h}, a_{i,h}, o_{i,h+1})`.
    pub fn evolve_private(
        &self,
        h: usize,
        private: &[Values],
        a: usize,
        o_next: usize,
    ) -> Vec<Values> {
        let pool = self.pool_from_parts(h, private, a, o_next);
        (0..self.dims.num_agents)
            .map(|i| {
                self.private_layout(i, h + 1)
                    .items
                    .iter()
                    .map(|item| {
                        pool.resolve(*item, &self.dims)
                            .expect("private info must evolve from (p, a, o)")
                    })
                    .collect()
            })
            .collect()
    }

    fn pool_from_parts(&self, h: usize, private: &[Values], a: usize, o_next: usize) -> ItemPool {
        let mut pool = ItemPool::default();
        for (agent, values) in private.iter().enumerate() {
            let layout = self.private_layout(agent, h);
            for (item, &value) in layout.items.iter().zip(values) {
                pool.insert(*item, value, &self.dims);
            }
        }
        pool.insert(StreamItem::JointAction { step: h }, a, &self.dims);
        pool.insert(StreamItem::JointObs { step: h + 1 }, o_next, &self.dims);
        pool
    }

    /// Truncates exact common information to its compressed form.
    pub fn compress(&self, h: usize, memory: usize, common: &[usize]) -> Values {
        let exact = self.common_layout(h, None);
        let mut pool = ItemPool::default();
        for (item, &value) in exact.items.iter().zip(common) {
            pool.insert(*item, value, &self.dims);
        }
        self.common_layout(h, Some(memory))
            .items
            .iter()
            .map(|item| {
                pool.resolve(*item, &self.dims)
                    .expect("compressed items are a subset of the exact tuple")
            })
            .collect()
    }

    /// Recursive evolution of the (possibly compressed) common information:
    /// the step-`h+1` tuple assembled from the step-`h` tuple and the
    /// increment. Total for every legal pair by construction of the layouts.
    pub fn evolve_common(
        &self,
        h: usize,
        memory: Option<usize>,
        common: &[usize],
        z: &[usize],
    ) -> Result<Values, InfoError> {
        let mut pool = ItemPool::default();
        for (item, &value) in self.common_layout(h, memory).items.iter().zip(common) {
            pool.insert(*item, value, &self.dims);
        }
        for (item, &value) in self.z_layout(h).items.iter().zip(z) {
            pool.insert(*item, value, &self.dims);
        }
        self.common_layout(h + 1, memory)
            .items
            .iter()
            .map(|item| {
                pool.resolve(*item, &self.dims)
                    .ok_or(InfoError::EvolutionGap { item: *item, h: h + 1 })
            })
            .collect()
    }

    /// Joint private index from per-agent values (agent 0 most significant).
    pub fn encode_private(&self, h: usize, private: &[Values]) -> usize {
        let sizes = self.private_sizes(h);
        let per_agent: Vec<usize> = private
            .iter()
            .enumerate()
            .map(|(i, values)| {
                self.private_layout(i, h)
                    .encode(values)
                    .expect("private values in range") as usize
            })
            .collect();
        encode_joint(&per_agent, &sizes).expect("private index in range")
    }

    pub fn decode_private(&self, h: usize, code: usize) -> Vec<Values> {
        let sizes = self.private_sizes(h);
        decode_joint(code, &sizes)
            .into_iter()
            .enumerate()
            .map(|(i, c)| self.private_layout(i, h).decode(c as u64))
            .collect()
    }

    /// The strategy-independent belief `P(s_h, p_h | c_h)` as a dense table of
    /// length `S * P_h`, indexed `s * P_h + p`.
    pub fn exact_common_belief(
        &self,
        model: &PosgModel,
        h: usize,
        common: &[usize],
    ) -> Result<Vec<f64>, InfoError> {
        self.common_belief_impl(model, h, common, None, BeliefPrior::Uniform)
    }

    /// The compressed-information belief: the same closed forms with the exact
    /// filter replaced by the finite-memory filter seeded with `prior`.
    pub fn approx_common_belief(
        &self,
        model: &PosgModel,
        memory: usize,
        h: usize,
        compressed: &[usize],
        prior: BeliefPrior<'_>,
    ) -> Result<Vec<f64>, InfoError> {
        self.common_belief_impl(model, h, compressed, Some(memory), prior)
    }

    fn common_belief_impl(
        &self,
        model: &PosgModel,
        h: usize,
        common: &[usize],
        memory: Option<usize>,
        prior: BeliefPrior<'_>,
    ) -> Result<Vec<f64>, InfoError> {
        let layout = self.common_layout(h, memory);
        assert_eq!(layout.len(), common.len(), "values do not match layout");
        let mut pool = ItemPool::default();
        for (item, &value) in layout.items.iter().zip(common) {
            pool.insert(*item, value, &self.dims);
        }
        let s_count = model.num_states;
        let p_sizes = self.private_sizes(h);
        let p_total: usize = p_sizes.iter().product();
        let mut out = vec![0.0; s_count * p_total];
        let window = memory.unwrap_or(self.dims.horizon + 2) as i64;

        // Runs the state filter over the (possibly truncated) streams in the
        // pool from step `first` to `target`. `fill_missing_actions` patches
        // action components the common information does not carry, which is
        // legal only when transitions do not depend on them (validated at
        // construction for the patterns that need it).
        let filter = |target: usize,
                      first: usize,
                      mode: FilterMode,
                      fill_missing_actions: bool|
         -> Result<Belief, BeliefError> {
            let mut actions = Vec::new();
            let mut observations = Vec::new();
            let last_obs_step = match mode {
                FilterMode::PostObs => target,
                _ => target.saturating_sub(1),
            };
            for t in first..target {
                let a = if fill_missing_actions {
                    let comps: Vec<usize> = (0..self.dims.num_agents)
                        .map(|agent| pool.actions.get(&(agent, t)).copied().unwrap_or(0))
                        .collect();
                    encode_joint(&comps, &self.dims.action_counts).expect("in range")
                } else {
                    pool.resolve(StreamItem::JointAction { step: t }, &self.dims)
                        .expect("missing action in common information")
                };
                actions.push(a);
                if t + 1 <= last_obs_step && t + 1 >= 2 {
                    let o = pool
                        .resolve(StreamItem::JointObs { step: t + 1 }, &self.dims)
                        .expect("missing observation in common information");
                    observations.push(o);
                }
            }
            match memory {
                None => exact_filter(model, &actions, &observations, mode),
                Some(_) => {
                    let start = target - actions.len();
                    let base = prior.at(start, s_count);
                    approx_filter(model, target, &actions, &observations, &base, mode)
                }
            }
        };

        match self.pattern {
            SharingPattern::OneStepDelay => {
                if h == 1 {
                    out.copy_from_slice(&model.initial);
                    return Ok(out);
                }
                let first = clamp_lo(h as i64 - window, 1);
                let b = filter(h, first, FilterMode::PreObs, false)?;
                for s in 0..s_count {
                    let row = model.emission_row(h, s);
                    for (o, &e) in row.iter().enumerate() {
                        let private: Vec<Values> = decode_joint(o, &self.dims.obs_counts)
                            .into_iter()
                            .map(|c| vec![c])
                            .collect();
                        let p = self.encode_private(h, &private);
                        out[s * p_total + p] = b.probs()[s] * e;
                    }
                }
            }
            SharingPattern::Symmetric => {
                if h == 1 {
                    out.copy_from_slice(&model.initial);
                    return Ok(out);
                }
                let first = clamp_lo(h as i64 - window, 1);
                let b = filter(h, first, FilterMode::PostObs, false)?;
                out.copy_from_slice(b.probs());
            }
            SharingPattern::OneDirectional => {
                if h == 1 {
                    out.copy_from_slice(&model.initial);
                    return Ok(out);
                }
                let o1 = pool
                    .resolve(StreamItem::AgentObs { agent: 0, step: h }, &self.dims)
                    .expect("agent 0 observation is common at its own step");
                let first = clamp_lo(h as i64 - window, 1);
                let b = filter(h, first, FilterMode::Individual { agent: 0, obs: o1 }, false)?;
                // P(o_2 | s, o_1) from the joint emission row.
                let o2_count = self.dims.obs_counts[1];
                for s in 0..s_count {
                    let row = model.emission_row(h, s);
                    let mut denom = 0.0;
                    for o2 in 0..o2_count {
                        denom += row[encode_joint(&[o1, o2], &self.dims.obs_counts).unwrap()];
                    }
                    for o2 in 0..o2_count {
                        let cond = if denom > 0.0 {
                            row[encode_joint(&[o1, o2], &self.dims.obs_counts).unwrap()] / denom
                        } else {
                            // (s, o1) is impossible, so the belief must put no
                            // mass on s; split uniformly to keep rows total.
                            debug_assert!(b.probs()[s] < 1e-12);
                            1.0 / o2_count as f64
                        };
                        let private = vec![vec![], vec![o2]];
                        let p = self.encode_private(h, &private);
                        out[s * p_total + p] = b.probs()[s] * cond;
                    }
                }
            }
            SharingPattern::UncontrolledDelay { delay } => {
                let anchor = clamp_lo(h as i64 - delay as i64, 1);
                let first = clamp_lo(anchor as i64 - window, 1);
                let b = filter(anchor, first, FilterMode::PostObs, true)?;
                for p in 0..p_total {
                    let private = self.decode_private(h, p);
                    let obs_seq: Vec<usize> = (anchor + 1..=h)
                        .map(|t| self.joint_obs_from_private(h, &private, t))
                        .collect();
                    for (s_anchor, &w) in b.probs().iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let beta = self.forward_kernel(model, anchor, s_anchor, &obs_seq, None);
                        for s in 0..s_count {
                            out[s * p_total + p] += w * beta[s];
                        }
                    }
                }
            }
            SharingPattern::AsymmetricDelay { delay } => {
                let anchor = clamp_lo(h as i64 - delay as i64, 1);
                let first = clamp_lo(anchor as i64 - window, 1);
                let b = filter(anchor, first, FilterMode::PostObs, true)?;
                // Controller actions and public observations after the anchor.
                let f_a: Vec<usize> = (anchor..h)
                    .map(|t| {
                        pool.actions
                            .get(&(0, t))
                            .copied()
                            .expect("controller action is common")
                    })
                    .collect();
                let f_o: Vec<usize> = (anchor + 1..=h)
                    .map(|t| {
                        pool.obs
                            .get(&(0, t))
                            .copied()
                            .expect("controller observation is common")
                    })
                    .collect();
                // q(f_o | s_anchor): likelihood of the public observation
                // sequence given the anchor state and controller actions.
                let q: Vec<f64> = (0..s_count)
                    .map(|s0| {
                        self.asym_public_likelihood(model, anchor, s0, &f_a, &f_o)
                            .iter()
                            .sum()
                    })
                    .collect();
                let posterior = beliefs::bayes_reweight(b.probs(), &q, anchor, 0)?;
                for p in 0..p_total {
                    let private = self.decode_private(h, p);
                    // Joint observations over the window: public part from the
                    // common information, agent 1's part from p.
                    let obs_seq: Vec<usize> = (anchor + 1..=h)
                        .map(|t| {
                            let o1 = pool.obs.get(&(0, t)).copied().expect("public obs");
                            let o2 = self.agent_obs_from_private(h, &private, 1, t);
                            encode_joint(&[o1, o2], &self.dims.obs_counts).unwrap()
                        })
                        .collect();
                    for s_anchor in 0..s_count {
                        if posterior[s_anchor] == 0.0 || q[s_anchor] == 0.0 {
                            continue;
                        }
                        let beta =
                            self.forward_kernel(model, anchor, s_anchor, &obs_seq, Some(&f_a));
                        for s in 0..s_count {
                            out[s * p_total + p] += posterior[s_anchor] * beta[s] / q[s_anchor];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `P(s_h, o_seq | s_anchor)`: forward product of transitions and joint
    /// emissions from the anchor step. `controller_actions`, when given, fixes
    /// agent 0's action per step (agent 1's component is irrelevant under the
    /// validated independence); otherwise the whole joint action is irrelevant
    /// and index 0 is used.
    fn forward_kernel(
        &self,
        model: &PosgModel,
        anchor: usize,
        s_anchor: usize,
        obs_seq: &[usize],
        controller_actions: Option<&[usize]>,
    ) -> Vec<f64> {
        let s_count = model.num_states;
        let mut beta = vec![0.0; s_count];
        beta[s_anchor] = 1.0;
        for (k, &o) in obs_seq.iter().enumerate() {
            let t = anchor + k;
            let a = match controller_actions {
                Some(actions) => encode_joint(&[actions[k], 0], &self.dims.action_counts).unwrap(),
                None => 0,
            };
            let mut next = vec![0.0; s_count];
            for (s, &w) in beta.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (sp, &tr) in model.transition_row(t, s, a).iter().enumerate() {
                    next[sp] += w * tr * model.emission_row(t + 1, sp)[o];
                }
            }
            beta = next;
        }
        beta
    }

    /// `alpha(s_h) = P(f_o, s_h | s_anchor, f_a)` using agent 0's marginal
    /// emissions.
    fn asym_public_likelihood(
        &self,
        model: &PosgModel,
        anchor: usize,
        s_anchor: usize,
        f_a: &[usize],
        f_o: &[usize],
    ) -> Vec<f64> {
        let s_count = model.num_states;
        let mut alpha = vec![0.0; s_count];
        alpha[s_anchor] = 1.0;
        for (k, &o1) in f_o.iter().enumerate() {
            let t = anchor + k;
            let a = encode_joint(&[f_a[k], 0], &self.dims.action_counts).unwrap();
            let mut next = vec![0.0; s_count];
            for (s, &w) in alpha.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (sp, &tr) in model.transition_row(t, s, a).iter().enumerate() {
                    if tr == 0.0 {
                        continue;
                    }
                    next[sp] += w * tr * model.emission_marginal(t + 1, sp, 0)[o1];
                }
            }
            alpha = next;
        }
        alpha
    }

    fn joint_obs_from_private(&self, h: usize, private: &[Values], step: usize) -> usize {
        let comps: Vec<usize> = (0..self.dims.num_agents)
            .map(|agent| self.agent_obs_from_private(h, private, agent, step))
            .collect();
        encode_joint(&comps, &self.dims.obs_counts).unwrap()
    }

    fn agent_obs_from_private(
        &self,
        h: usize,
        private: &[Values],
        agent: usize,
        step: usize,
    ) -> usize {
        let layout = self.private_layout(agent, h);
        for (item, &value) in layout.items.iter().zip(&private[agent]) {
            if let StreamItem::AgentObs { step: s, .. } = item {
                if *s == step {
                    return value;
                }
            }
        }
        panic!("step-{step} observation of agent {agent} not in its private information")
    }
}

/// Reachable-space cardinalities under finite-memory compression.
#[derive(Debug, Clone)]
pub struct CompressionStats {
    pub l_hat: usize,
    /// `|hat C_h|` for `h in 1..=H+1`, by exact enumeration of reachable encodings.
    pub compressed_sizes: Vec<usize>,
    /// `|C_h|` (uncompressed) for `h in 1..=H+1`.
    pub common_sizes: Vec<usize>,
    /// `|P_h|` for `h in 1..=H+1`.
    pub private_sizes: Vec<usize>,
    /// `|Z_{h+1}|` for `h in 1..=H`.
    pub z_sizes: Vec<usize>,
}

/// Enumerates reachable information states by exhaustive history enumeration
/// (histories with positive probability under some policy). Budget-guarded.
pub fn compression_stats(
    info: &InfoStructure,
    scheme: CompressionScheme,
    model: &PosgModel,
    max_histories: usize,
) -> Result<CompressionStats, InfoError> {
    let horizon = model.horizon;
    let mut compressed: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); horizon + 1];
    let mut common: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); horizon + 1];
    let mut private: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); horizon + 1];
    let mut z: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); horizon];

    struct Node {
        h: usize,
        actions: Vec<usize>,
        observations: Vec<usize>,
        alpha: Vec<f64>,
    }
    let mut stack = vec![Node {
        h: 1,
        actions: Vec::new(),
        observations: Vec::new(),
        alpha: model.initial.clone(),
    }];
    let mut visited = 0usize;
    while let Some(node) = stack.pop() {
        visited += 1;
        if visited > max_histories {
            return Err(InfoError::Capacity {
                required: visited as u128,
                budget: max_histories as u128,
            });
        }
        let split = info.split_history(node.h, &node.actions, &node.observations);
        let code = info.common_layout(node.h, None).encode(&split.common)?;
        common[node.h - 1].insert(code);
        let comp = info.compress(node.h, scheme.memory, &split.common);
        compressed[node.h - 1]
            .insert(info.common_layout(node.h, Some(scheme.memory)).encode(&comp)?);
        private[node.h - 1].insert(info.encode_private(node.h, &split.private) as u64);
        if node.h > horizon {
            continue;
        }
        let h = node.h;
        for a in 0..model.num_joint_actions() {
            let mut pushed = vec![0.0; model.num_states];
            for (s, &w) in node.alpha.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (sp, &tr) in model.transition_row(h, s, a).iter().enumerate() {
                    pushed[sp] += w * tr;
                }
            }
            for o in 0..model.num_joint_obs() {
                let mut next = vec![0.0; model.num_states];
                let mut mass = 0.0;
                for (sp, &w) in pushed.iter().enumerate() {
                    let e = model.emission_row(h + 1, sp)[o];
                    next[sp] = w * e;
                    mass += w * e;
                }
                if mass <= 0.0 {
                    continue;
                }
                let zv = info.z_values(h, &split.private, a, o);
                z[h - 1].insert(info.z_layout(h).encode(&zv)?);
                let mut actions = node.actions.clone();
                actions.push(a);
                let mut observations = node.observations.clone();
                observations.push(o);
                stack.push(Node {
                    h: h + 1,
                    actions,
                    observations,
                    alpha: next,
                });
            }
        }
    }

    Ok(CompressionStats {
        l_hat: info.l_hat(scheme.memory),
        compressed_sizes: compressed.iter().map(BTreeSet::len).collect(),
        common_sizes: common.iter().map(BTreeSet::len).collect(),
        private_sizes: private.iter().map(BTreeSet::len).collect(),
        z_sizes: z.iter().map(BTreeSet::len).collect(),
    })
}

fn clamp_lo(value: i64, lo: i64) -> usize {
    value.max(lo) as usize
}

fn validate_controller_independence(model: &PosgModel) -> Result<(), PatternError> {
    let a2_count = model.action_counts[1];
    for h in 1..=model.horizon {
        for s in 0..model.num_states {
            for a1 in 0..model.action_counts[0] {
                let base =
                    model.transition_row(h, s, encode_joint(&[a1, 0], &model.action_counts).unwrap());
                for a2 in 1..a2_count {
                    let row = model.transition_row(
                        h,
                        s,
                        encode_joint(&[a1, a2], &model.action_counts).unwrap(),
                    );
                    let diff: f64 = base
                        .iter()
                        .zip(row)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max);
                    if diff > 1e-9 {
                        return Err(PatternError::ControllerViolation { h, s, diff });
                    }
                }
            }
        }
    }
    Ok(())
}

fn validate_action_independence(model: &PosgModel) -> Result<(), PatternError> {
    for h in 1..=model.horizon {
        for s in 0..model.num_states {
            let base = model.transition_row(h, s, 0);
            for a in 1..model.num_joint_actions() {
                let row = model.transition_row(h, s, a);
                let diff: f64 = base
                    .iter()
                    .zip(row)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                if diff > 1e-9 {
                    return Err(PatternError::UncontrolledViolation { h, s, diff });
                }
            }
        }
    }
    Ok(())
}

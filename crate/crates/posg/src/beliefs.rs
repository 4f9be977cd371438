//! Exact and finite-memory belief filtering, posterior operators, the
//! 2-Renyi divergence, and an observability diagnostic.
//!
//! The filtering state is a distribution over hidden states. Three flavors of
//! the filter are exposed through [`FilterMode`]:
//!
//! * `PreObs` — the belief `b_h(a_{1:h-1}, o_{2:h-1})` before seeing `o_h`,
//! * `PostObs` — the belief `b_h(a_{1:h-1}, o_{2:h})` after the joint
//!   observation at step `h`,
//! * `Individual` — the belief after updating only on one agent's marginal
//!   observation at step `h`.
//!
//! The recursion alternates a transition push `b -> T_h(a) . b` with a Bayes
//! update against the step-`(h+1)` emission. The approximate filter runs the
//! same recursion over only the most recent `L` steps, starting from a caller
//! supplied prior (uniform for planning, a state-occupancy distribution for
//! learning). When the window reaches back to step 1 the prior is replaced by
//! the true initial distribution, so a full window reproduces the exact filter
//! bit for bit.

use crate::model::{PosgModel, PROB_TOL};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("observation has zero likelihood under the prior (step {step}, outcome {outcome})")]
    ZeroLikelihood { step: usize, outcome: usize },
    #[error("absolute continuity violated: q({at}) = 0 but p({at}) > 0")]
    AbsoluteContinuity { at: usize },
    #[error("dimension mismatch: {what}")]
    Dimension { what: String },
    #[error("belief entries must be nonnegative and sum to 1 (sum {sum})")]
    NotADistribution { sum: f64 },
}

/// A distribution over hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self, BeliefError> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > PROB_TOL {
            return Err(BeliefError::NotADistribution { sum });
        }
        Ok(Belief(probs))
    }

    pub fn uniform(num_states: usize) -> Self {
        Belief(vec![1.0 / num_states as f64; num_states])
    }

    pub fn point_mass(state: usize, num_states: usize) -> Self {
        let mut v = vec![0.0; num_states];
        v[state] = 1.0;
        Belief(v)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// L1 distance to another belief.
    pub fn l1(&self, other: &Belief) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// A conditional probability table `q(y|x)`, rows indexed by `x`.
#[derive(Debug, Clone)]
pub struct PosteriorKernel {
    rows: Vec<Vec<f64>>,
}

impl PosteriorKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, BeliefError> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        for row in &rows {
            if row.len() != width {
                return Err(BeliefError::Dimension {
                    what: "kernel rows have differing lengths".into(),
                });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > PROB_TOL {
                return Err(BeliefError::NotADistribution { sum });
            }
        }
        Ok(PosteriorKernel { rows })
    }

    pub fn num_inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn num_outcomes(&self) -> usize {
        self.rows.first().map(Vec::len).unwrap_or(0)
    }

    pub fn likelihood(&self, x: usize, y: usize) -> f64 {
        self.rows[x][y]
    }

    /// Marginal outcome distribution `(q . p)(y) = sum_x p(x) q(y|x)`.
    pub fn push(&self, prior: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_outcomes()];
        for (x, row) in self.rows.iter().enumerate() {
            for (y, &q) in row.iter().enumerate() {
                out[y] += prior[x] * q;
            }
        }
        out
    }
}

/// Bayes reweighting of a prior by a per-state likelihood vector. This is the
/// core of every posterior operator: `out(x) = prior(x) l(x) / sum_x' prior(x') l(x')`.
pub fn bayes_reweight(prior: &[f64], likelihood: &[f64], step: usize, outcome: usize) -> Result<Vec<f64>, BeliefError> {
    debug_assert_eq!(prior.len(), likelihood.len());
    let mut out: Vec<f64> = prior
        .iter()
        .zip(likelihood)
        .map(|(&p, &l)| p * l)
        .collect();
    let z: f64 = out.iter().sum();
    if z <= 0.0 {
        return Err(BeliefError::ZeroLikelihood { step, outcome });
    }
    for v in &mut out {
        *v /= z;
    }
    Ok(out)
}

/// The posterior update `F^q(prior; y)(x) = prior(x) q(y|x) / sum_x' prior(x') q(y|x')`.
pub fn posterior_update(
    prior: &[f64],
    kernel: &PosteriorKernel,
    y: usize,
) -> Result<Vec<f64>, BeliefError> {
    if prior.len() != kernel.num_inputs() {
        return Err(BeliefError::Dimension {
            what: format!(
                "prior has {} entries, kernel has {} inputs",
                prior.len(),
                kernel.num_inputs()
            ),
        });
    }
    let likelihood: Vec<f64> = (0..kernel.num_inputs())
        .map(|x| kernel.likelihood(x, y))
        .collect();
    bayes_reweight(prior, &likelihood, 0, y)
}

/// Transition push `T_h(a) . b`: the state distribution after acting.
pub fn transition_push(model: &PosgModel, h: usize, belief: &[f64], a: usize) -> Vec<f64> {
    let n = model.num_states;
    let mut out = vec![0.0; n];
    for (s, &b) in belief.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for (next, &t) in model.transition_row(h, s, a).iter().enumerate() {
            out[next] += b * t;
        }
    }
    out
}

/// One full belief update `U_h(b; a, o) = B_{h+1}(T_h(a) . b; o)`.
pub fn belief_step(
    model: &PosgModel,
    h: usize,
    belief: &Belief,
    a: usize,
    o: usize,
) -> Result<Belief, BeliefError> {
    let pushed = transition_push(model, h, belief.probs(), a);
    let likelihood: Vec<f64> = (0..model.num_states)
        .map(|s| model.emission_row(h + 1, s)[o])
        .collect();
    bayes_reweight(&pushed, &likelihood, h + 1, o).map(Belief)
}

/// Which belief the filter should return at the target step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    PreObs,
    PostObs,
    /// Update on a single agent's marginal observation at the target step.
    Individual { agent: usize, obs: usize },
}

fn run_filter(
    model: &PosgModel,
    start_step: usize,
    base: Vec<f64>,
    actions: &[usize],
    observations: &[usize],
    mode: FilterMode,
) -> Result<Belief, BeliefError> {
    let expected_obs = match mode {
        FilterMode::PostObs => actions.len(),
        FilterMode::PreObs | FilterMode::Individual { .. } => actions.len().saturating_sub(1),
    };
    if observations.len() != expected_obs {
        return Err(BeliefError::Dimension {
            what: format!(
                "{} actions require {} observations, got {}",
                actions.len(),
                expected_obs,
                observations.len()
            ),
        });
    }
    let mut b = base;
    for (k, &a) in actions.iter().enumerate() {
        let step = start_step + k;
        b = transition_push(model, step, &b, a);
        if let Some(&o) = observations.get(k) {
            let likelihood: Vec<f64> = (0..model.num_states)
                .map(|s| model.emission_row(step + 1, s)[o])
                .collect();
            b = bayes_reweight(&b, &likelihood, step + 1, o)?;
        }
    }
    if let FilterMode::Individual { agent, obs } = mode {
        let target = start_step + actions.len();
        let likelihood: Vec<f64> = (0..model.num_states)
            .map(|s| model.emission_marginal(target, s, agent)[obs])
            .collect();
        b = bayes_reweight(&b, &likelihood, target, obs)?;
    }
    Belief::new(b)
}

/// Exact forward filter from the start of the episode. The target step is
/// `h = actions.len() + 1`; observation slice lengths are checked against the
/// mode. With empty inputs this returns `mu_1`.
pub fn exact_filter(
    model: &PosgModel,
    actions: &[usize],
    observations: &[usize],
    mode: FilterMode,
) -> Result<Belief, BeliefError> {
    run_filter(model, 1, model.initial.clone(), actions, observations, mode)
}

/// Finite-memory filter over a trailing window of the history ending at step
/// `h`. `actions` holds `a_{h-W:h-1}` for a window of length `W <= h - 1`;
/// the filter starts at step `h - W` from `prior`, except that a window
/// covering the whole episode starts from `mu_1` instead.
pub fn approx_filter(
    model: &PosgModel,
    h: usize,
    actions: &[usize],
    observations: &[usize],
    prior: &Belief,
    mode: FilterMode,
) -> Result<Belief, BeliefError> {
    if actions.len() + 1 > h {
        return Err(BeliefError::Dimension {
            what: format!("window of {} actions does not fit before step {h}", actions.len()),
        });
    }
    let start = h - actions.len();
    let base = if start == 1 {
        model.initial.clone()
    } else {
        if prior.len() != model.num_states {
            return Err(BeliefError::Dimension {
                what: "prior has wrong number of states".into(),
            });
        }
        prior.probs().to_vec()
    };
    run_filter(model, start, base, actions, observations, mode)
}

/// The 2-Renyi divergence `D_2(p || q) = ln sum_x p(x)^2 / q(x)`, requiring
/// `p` absolutely continuous with respect to `q`.
pub fn renyi2(p: &[f64], q: &[f64]) -> Result<f64, BeliefError> {
    if p.len() != q.len() {
        return Err(BeliefError::Dimension {
            what: "distributions have different lengths".into(),
        });
    }
    let mut acc = 0.0;
    for (x, (&pp, &qq)) in p.iter().zip(q).enumerate() {
        if pp > 0.0 {
            if qq <= 0.0 {
                return Err(BeliefError::AbsoluteContinuity { at: x });
            }
            acc += pp * pp / qq;
        }
    }
    Ok(acc.ln())
}

/// Pairwise observability diagnostic for the step-`h` emission:
/// `min_{s != s'} ||O_h(.|s) - O_h(.|s')||_1 / 2`.
///
/// This minimizes only over one-hot belief differences (the vertices of the
/// difference set), so it is an *upper bound* on the expansion constant over
/// all belief pairs, suitable as a diagnostic rather than a certificate. A
/// single-state model trivially satisfies every expansion constant, so 1.0 is
/// returned.
pub fn observability_estimate(model: &PosgModel, h: usize) -> f64 {
    let n = model.num_states;
    if n < 2 {
        return 1.0;
    }
    let mut best = f64::INFINITY;
    for s in 0..n {
        for t in (s + 1)..n {
            let d: f64 = model
                .emission_row(h, s)
                .iter()
                .zip(model.emission_row(h, t))
                .map(|(a, b)| (a - b).abs())
                .sum();
            best = best.min(d / 2.0);
        }
    }
    best
}

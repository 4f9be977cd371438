//! Stage games in prescription space: multilinear payoff evaluation,
//! gradients, best responses, strategy modifications, and NE/CE/CCE solvers
//! built on no-regret dynamics.
//!
//! A stage game is played at one step of the backward pass, conditioned on one
//! realization of (compressed) common information. Each agent picks a
//! *prescription*: a map from its private information to a distribution over
//! its actions. The payoff to agent `i` is
//!
//! ```text
//! Q_i(gamma) = sum_{p,a} q(p) prod_j gamma_j(a_j | p_j)
//!              sum_o kappa(o | p, a) [ r_i(o) + V_i(chi(p, a, o)) ]
//! ```
//!
//! which is affine in each agent's prescription block. Solvers exploit that
//! structure: best responses are per-row argmaxes of the gradient, zero-sum
//! and coarse-correlated equilibria come from Hedge-style dynamics with one
//! expert set per `(agent, private info)` block, and correlated equilibria
//! from per-block swap-regret dynamics. Every returned solution carries a gap
//! certified after the fact by [`stage_gap`].

use crate::model::{decode_joint, joint_size};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no equilibrium within {max_iters} iterations: achieved gap {achieved}, required {required}")]
    IterationLimit {
        max_iters: usize,
        achieved: f64,
        required: f64,
    },
    #[error("cooperative solving requires identical payoffs; agents differ by {diff}")]
    CooperativeMismatch { diff: f64 },
    #[error("zero-sum solving requires exactly two agents, game has {agents}")]
    ZeroSumRequiresTwoAgents { agents: usize },
}

/// A map from one agent's private information to action distributions,
/// row-major `[private][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prescription {
    pub probs: Vec<f64>,
    pub num_private: usize,
    pub num_actions: usize,
}

impl Prescription {
    pub fn uniform(num_private: usize, num_actions: usize) -> Self {
        Prescription {
            probs: vec![1.0 / num_actions as f64; num_private * num_actions],
            num_private,
            num_actions,
        }
    }

    /// Deterministic prescription selecting `choices[p]` at private info `p`.
    pub fn deterministic(choices: &[usize], num_actions: usize) -> Self {
        let mut probs = vec![0.0; choices.len() * num_actions];
        for (p, &a) in choices.iter().enumerate() {
            probs[p * num_actions + a] = 1.0;
        }
        Prescription {
            probs,
            num_private: choices.len(),
            num_actions,
        }
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.probs[p * self.num_actions..(p + 1) * self.num_actions]
    }

    pub fn prob(&self, p: usize, a: usize) -> f64 {
        self.probs[p * self.num_actions + a]
    }

    /// Convex combination `alpha * self + (1 - alpha) * other`.
    pub fn blend(&self, other: &Prescription, alpha: f64) -> Prescription {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
            .collect();
        Prescription {
            probs,
            num_private: self.num_private,
            num_actions: self.num_actions,
        }
    }
}

/// One prescription per agent.
pub type Profile = Vec<Prescription>;

/// A uniform mixture over prescription profiles: the correlation device draws
/// one atom per stage with equal probability, shared by all agents. Product
/// (Nash) solutions are mixtures of size one.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedProfile {
    pub atoms: Vec<Profile>,
}

impl MixedProfile {
    pub fn pure(profile: Profile) -> Self {
        MixedProfile {
            atoms: vec![profile],
        }
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Joint action distribution of the mixture at one joint private info,
    /// given per-agent private components.
    pub fn joint_action_dist(&self, p_comps: &[usize], action_counts: &[usize]) -> Vec<f64> {
        let total = joint_size(action_counts);
        let mut out = vec![0.0; total];
        let weight = 1.0 / self.atoms.len() as f64;
        for atom in &self.atoms {
            for (a, slot) in out.iter_mut().enumerate() {
                let comps = decode_joint(a, action_counts);
                let mut prob = weight;
                for (j, pres) in atom.iter().enumerate() {
                    prob *= pres.prob(p_comps[j], comps[j]);
                }
                *slot += prob;
            }
        }
        out
    }
}

/// A per-private-info remapping of one agent's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapModification {
    /// `maps[p][a]` is the action played when `a` is recommended at `p`.
    pub maps: Vec<Vec<usize>>,
}

impl SwapModification {
    pub fn identity(num_private: usize, num_actions: usize) -> Self {
        SwapModification {
            maps: vec![(0..num_actions).collect(); num_private],
        }
    }

    /// The composed prescription: `(u . gamma)(a|p) = sum_{a': u(p,a') = a} gamma(a'|p)`.
    pub fn apply(&self, gamma: &Prescription) -> Prescription {
        let mut probs = vec![0.0; gamma.probs.len()];
        for p in 0..gamma.num_private {
            for a in 0..gamma.num_actions {
                probs[p * gamma.num_actions + self.maps[p][a]] += gamma.prob(p, a);
            }
        }
        Prescription {
            probs,
            num_private: gamma.num_private,
            num_actions: gamma.num_actions,
        }
    }
}

/// The environment of one stage game in factored form: a distribution over
/// joint private information, a next-observation kernel, reward tables, and
/// continuation values indexed by the common-information increment.
#[derive(Debug, Clone)]
pub struct StageKernel {
    pub private_counts: Vec<usize>,
    pub action_counts: Vec<usize>,
    pub num_obs: usize,
    pub num_z: usize,
    /// `q(p)`, length `P`.
    pub q: Vec<f64>,
    /// `kappa(o | p, a)`, row-major `[p][a][o]`.
    pub kappa: Vec<f64>,
    /// Per agent: reward per observation.
    pub rewards: Vec<Vec<f64>>,
    /// Per agent: continuation value per increment `z`.
    pub cont: Vec<Vec<f64>>,
    /// `chi(p, a, o)`: increment index, row-major `[p][a][o]`.
    pub chi: Vec<usize>,
}

impl StageKernel {
    pub fn num_private(&self) -> usize {
        joint_size(&self.private_counts)
    }

    pub fn num_actions(&self) -> usize {
        joint_size(&self.action_counts)
    }

    pub fn num_agents(&self) -> usize {
        self.private_counts.len()
    }

    /// Builds the factored kernel from a belief over `(state, private info)`
    /// and dense transition/emission tensors: `q(p)` is the private marginal
    /// and `kappa(o|p,a) = sum_s mu(s|p) sum_s' T(s'|s,a) O(o|s')`. Cells with
    /// `q(p) = 0` get a uniform kernel; they carry no payoff weight.
    #[allow(clippy::too_many_arguments)]
    pub fn from_state_belief(
        belief: &[f64],
        num_states: usize,
        private_counts: Vec<usize>,
        action_counts: Vec<usize>,
        transition: &[f64],
        emission: &[f64],
        num_obs: usize,
        rewards: Vec<Vec<f64>>,
        cont: Vec<Vec<f64>>,
        num_z: usize,
        chi: impl Fn(usize, usize, usize) -> usize,
    ) -> StageKernel {
        let p_total: usize = private_counts.iter().product();
        let a_total: usize = action_counts.iter().product();
        assert_eq!(belief.len(), num_states * p_total);
        let mut q = vec![0.0; p_total];
        for s in 0..num_states {
            for p in 0..p_total {
                q[p] += belief[s * p_total + p];
            }
        }
        let mut kappa = vec![0.0; p_total * a_total * num_obs];
        let mut chi_table = vec![0usize; p_total * a_total * num_obs];
        for p in 0..p_total {
            for a in 0..a_total {
                let base = (p * a_total + a) * num_obs;
                if q[p] > 0.0 {
                    for s in 0..num_states {
                        let w = belief[s * p_total + p] / q[p];
                        if w == 0.0 {
                            continue;
                        }
                        for sp in 0..num_states {
                            let t = transition[(s * a_total + a) * num_states + sp];
                            if t == 0.0 {
                                continue;
                            }
                            for o in 0..num_obs {
                                kappa[base + o] += w * t * emission[sp * num_obs + o];
                            }
                        }
                    }
                } else {
                    for o in 0..num_obs {
                        kappa[base + o] = 1.0 / num_obs as f64;
                    }
                }
                for o in 0..num_obs {
                    chi_table[base + o] = chi(p, a, o);
                }
            }
        }
        StageKernel {
            private_counts,
            action_counts,
            num_obs,
            num_z,
            q,
            kappa,
            rewards,
            cont,
            chi: chi_table,
        }
    }

    /// Distributions over the increment `z` and the next observation induced
    /// by a prescription profile: the two marginalizations of
    /// `q(p) prod_j gamma_j kappa(o|p,a)` grouped by `chi` and by `o`.
    pub fn step_distributions(&self, profile: &[Prescription]) -> (Vec<f64>, Vec<f64>) {
        let p_total = self.num_private();
        let a_total = self.num_actions();
        let mut z_dist = vec![0.0; self.num_z];
        let mut o_dist = vec![0.0; self.num_obs];
        for p in 0..p_total {
            if self.q[p] == 0.0 {
                continue;
            }
            let p_comps = decode_joint(p, &self.private_counts);
            for a in 0..a_total {
                let a_comps = decode_joint(a, &self.action_counts);
                let mut w = self.q[p];
                for (j, pres) in profile.iter().enumerate() {
                    w *= pres.prob(p_comps[j], a_comps[j]);
                }
                if w == 0.0 {
                    continue;
                }
                let base = (p * a_total + a) * self.num_obs;
                for o in 0..self.num_obs {
                    let mass = w * self.kappa[base + o];
                    o_dist[o] += mass;
                    z_dist[self.chi[base + o]] += mass;
                }
            }
        }
        (z_dist, o_dist)
    }
}

/// A stage game with its multilinear payoff tensors precomputed.
#[derive(Debug, Clone)]
pub struct StageGame {
    pub kernel: StageKernel,
    /// Per agent: `W_i(p, a)`, row-major `[p][a]`, such that
    /// `Q_i(gamma) = sum_{p,a} W_i(p,a) prod_j gamma_j(a_j|p_j)`.
    w: Vec<Vec<f64>>,
    /// Joint private index -> per-agent components.
    p_comps: Vec<Vec<usize>>,
    /// Joint action index -> per-agent components.
    a_comps: Vec<Vec<usize>>,
    payoff_scale: f64,
}

impl StageGame {
    pub fn new(kernel: StageKernel) -> StageGame {
        let n = kernel.num_agents();
        let p_total = kernel.num_private();
        let a_total = kernel.num_actions();
        let mut w = vec![vec![0.0; p_total * a_total]; n];
        for p in 0..p_total {
            for a in 0..a_total {
                let base = (p * a_total + a) * kernel.num_obs;
                for (i, w_i) in w.iter_mut().enumerate() {
                    let mut v = 0.0;
                    for o in 0..kernel.num_obs {
                        let k = kernel.kappa[base + o];
                        if k == 0.0 {
                            continue;
                        }
                        v += k * (kernel.rewards[i][o] + kernel.cont[i][kernel.chi[base + o]]);
                    }
                    w_i[p * a_total + a] = kernel.q[p] * v;
                }
            }
        }
        let p_comps = (0..p_total)
            .map(|p| decode_joint(p, &kernel.private_counts))
            .collect();
        let a_comps = (0..a_total)
            .map(|a| decode_joint(a, &kernel.action_counts))
            .collect();
        let cont_max = kernel
            .cont
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        let reward_max = kernel
            .rewards
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        StageGame {
            kernel,
            w,
            p_comps,
            a_comps,
            payoff_scale: (reward_max + cont_max).max(1.0),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.kernel.num_agents()
    }

    pub fn uniform_profile(&self) -> Profile {
        (0..self.num_agents())
            .map(|i| {
                Prescription::uniform(self.kernel.private_counts[i], self.kernel.action_counts[i])
            })
            .collect()
    }

    /// Scale of a single-stage payoff; used to normalize no-regret updates.
    pub fn payoff_scale(&self) -> f64 {
        self.payoff_scale
    }
}

/// Expected payoff of agent `i` under a product prescription profile.
pub fn stage_q(game: &StageGame, profile: &[Prescription], i: usize) -> f64 {
    let a_total = game.kernel.num_actions();
    let mut total = 0.0;
    for (p, pc) in game.p_comps.iter().enumerate() {
        for (a, ac) in game.a_comps.iter().enumerate() {
            let w = game.w[i][p * a_total + a];
            if w == 0.0 {
                continue;
            }
            let mut prob = 1.0;
            for (j, pres) in profile.iter().enumerate() {
                prob *= pres.prob(pc[j], ac[j]);
            }
            total += w * prob;
        }
    }
    total
}

/// Expected payoff of a mixture: the average of its atoms' payoffs.
pub fn stage_q_mixed(game: &StageGame, mixed: &MixedProfile, i: usize) -> f64 {
    mixed
        .atoms
        .iter()
        .map(|atom| stage_q(game, atom, i))
        .sum::<f64>()
        / mixed.atoms.len() as f64
}

/// Gradient of `Q_i` with respect to agent `i`'s block: the coefficient table
/// `c(p_i, a_i)` with `Q_i = sum gamma_i(a_i|p_i) c(p_i, a_i)`. Independent of
/// `gamma_i` itself.
pub fn stage_q_gradient(game: &StageGame, profile: &[Prescription], i: usize) -> Vec<f64> {
    let ai = game.kernel.action_counts[i];
    let pi = game.kernel.private_counts[i];
    let a_total = game.kernel.num_actions();
    let mut grad = vec![0.0; pi * ai];
    for (p, pc) in game.p_comps.iter().enumerate() {
        for (a, ac) in game.a_comps.iter().enumerate() {
            let w = game.w[i][p * a_total + a];
            if w == 0.0 {
                continue;
            }
            let mut prob = 1.0;
            for (j, pres) in profile.iter().enumerate() {
                if j != i {
                    prob *= pres.prob(pc[j], ac[j]);
                }
            }
            grad[pc[i] * ai + ac[i]] += w * prob;
        }
    }
    grad
}

/// Gradient of agent `i` against a mixture of opponent profiles (averaged over
/// atoms). Agent `i`'s own component in the atoms is ignored.
pub fn stage_q_gradient_mixed(game: &StageGame, opponents: &MixedProfile, i: usize) -> Vec<f64> {
    let ai = game.kernel.action_counts[i];
    let pi = game.kernel.private_counts[i];
    let mut grad = vec![0.0; pi * ai];
    for atom in &opponents.atoms {
        let g = stage_q_gradient(game, atom, i);
        for (slot, v) in grad.iter_mut().zip(&g) {
            *slot += v / opponents.atoms.len() as f64;
        }
    }
    grad
}

/// Exact best response for agent `i` against a mixture of opponents: the
/// objective is linear over the product of simplices, so a deterministic
/// per-row argmax of the averaged gradient attains the maximum. Ties break
/// toward the smallest action index.
pub fn prescription_best_response(
    game: &StageGame,
    opponents: &MixedProfile,
    i: usize,
) -> Prescription {
    let grad = stage_q_gradient_mixed(game, opponents, i);
    let ai = game.kernel.action_counts[i];
    let pi = game.kernel.private_counts[i];
    let choices: Vec<usize> = (0..pi).map(|p| argmax(&grad[p * ai..(p + 1) * ai])).collect();
    Prescription::deterministic(&choices, ai)
}

/// Value attained by the best response of agent `i` against the mixture.
pub fn best_response_value(game: &StageGame, opponents: &MixedProfile, i: usize) -> f64 {
    let grad = stage_q_gradient_mixed(game, opponents, i);
    let ai = game.kernel.action_counts[i];
    (0..game.kernel.private_counts[i])
        .map(|p| {
            grad[p * ai..(p + 1) * ai]
                .iter()
                .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
        })
        .sum()
}

/// Best strategy modification of agent `i` against a correlated mixture and
/// its value. The objective decomposes per `(p_i, recommended action)`, so a
/// greedy per-cell argmax is exact. Ties break toward the smallest index.
pub fn best_swap(game: &StageGame, solution: &MixedProfile, i: usize) -> (SwapModification, f64) {
    let ai = game.kernel.action_counts[i];
    let pi = game.kernel.private_counts[i];
    // d[p][a_rec][a_play] = (1/T) sum_t gamma_i^t(a_rec|p) grad_i^t(p, a_play)
    let mut d = vec![0.0; pi * ai * ai];
    for atom in &solution.atoms {
        let grad = stage_q_gradient(game, atom, i);
        for p in 0..pi {
            for a_rec in 0..ai {
                let gp = atom[i].prob(p, a_rec) / solution.atoms.len() as f64;
                if gp == 0.0 {
                    continue;
                }
                for a_play in 0..ai {
                    d[(p * ai + a_rec) * ai + a_play] += gp * grad[p * ai + a_play];
                }
            }
        }
    }
    let mut maps = Vec::with_capacity(pi);
    let mut value = 0.0;
    for p in 0..pi {
        let mut row = Vec::with_capacity(ai);
        for a_rec in 0..ai {
            let cell = &d[(p * ai + a_rec) * ai..(p * ai + a_rec + 1) * ai];
            let best = argmax(cell);
            row.push(best);
            value += cell[best];
        }
        maps.push(row);
    }
    (SwapModification { maps }, value)
}

/// Equilibrium notions solvable per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveKind {
    NashZeroSum,
    NashCooperative,
    Cce,
    Ce,
}

/// Certified deviation benefit of a candidate solution.
///
/// For NE and CCE this is the largest unilateral best-response improvement;
/// for CE the largest strategy-modification improvement. Nonnegative up to
/// numerical noise.
pub fn stage_gap(game: &StageGame, solution: &MixedProfile, kind: SolveKind) -> f64 {
    let mut gap: f64 = 0.0;
    for i in 0..game.num_agents() {
        let current = stage_q_mixed(game, solution, i);
        let deviation = match kind {
            SolveKind::Ce => best_swap(game, solution, i).1,
            _ => best_response_value(game, solution, i),
        };
        gap = gap.max(deviation - current);
    }
    gap
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub eps: f64,
    pub max_iters: usize,
    pub check_every: usize,
    /// Overrides the payoff normalization used by the no-regret updates.
    pub payoff_scale: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            eps: 1e-2,
            max_iters: 100_000,
            check_every: 25,
            payoff_scale: None,
        }
    }
}

/// A solved stage with its certified gap. `kind_used` differs from the request
/// only when a zero-sum solve was downgraded to CCE because the payoffs are
/// not antagonistic.
#[derive(Debug, Clone)]
pub struct StageSolution {
    pub profile: MixedProfile,
    pub gap: f64,
    pub kind_used: SolveKind,
    pub iterations: usize,
}

/// Detects two-agent constant-sum structure: `W_1(p, .) + W_2(p, .)` must be
/// constant within each private row, which makes the payoffs antagonistic up
/// to a constant over all product profiles.
fn is_zero_sum(game: &StageGame, tol: f64) -> bool {
    if game.num_agents() != 2 {
        return false;
    }
    let a_total = game.kernel.num_actions();
    for p in 0..game.kernel.num_private() {
        let base = p * a_total;
        let first = game.w[0][base] + game.w[1][base];
        for a in 1..a_total {
            if (game.w[0][base + a] + game.w[1][base + a] - first).abs() > tol {
                return false;
            }
        }
    }
    true
}

fn agents_identical_interest(game: &StageGame, tol: f64) -> Result<(), SolveError> {
    let mut diff: f64 = 0.0;
    for i in 1..game.num_agents() {
        for (x, y) in game.w[0].iter().zip(&game.w[i]) {
            diff = diff.max((x - y).abs());
        }
    }
    if diff > tol {
        return Err(SolveError::CooperativeMismatch { diff });
    }
    Ok(())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

fn hedge_dist(cum: &[f64], eta: f64, scale: f64) -> Vec<f64> {
    let m = cum.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out: Vec<f64> = cum.iter().map(|&v| (eta * (v - m) / scale).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Solves one stage game to the requested equilibrium notion within
/// `opts.eps`, returning the solution and its certified gap.
pub fn solve_stage(
    game: &StageGame,
    kind: SolveKind,
    opts: &SolveOptions,
) -> Result<StageSolution, SolveError> {
    match kind {
        SolveKind::NashZeroSum => {
            if game.num_agents() != 2 {
                return Err(SolveError::ZeroSumRequiresTwoAgents {
                    agents: game.num_agents(),
                });
            }
            let tol = 1e-7 * game.payoff_scale();
            if !is_zero_sum(game, tol) {
                // Antagonism violated: downgrade to CCE rather than silently
                // returning an uncertified product profile.
                let mut solution = solve_no_regret(game, SolveKind::Cce, opts)?;
                solution.kind_used = SolveKind::Cce;
                return Ok(solution);
            }
            solve_zero_sum(game, opts)
        }
        SolveKind::NashCooperative => {
            agents_identical_interest(game, 1e-7 * game.payoff_scale())?;
            solve_cooperative(game, opts)
        }
        SolveKind::Cce | SolveKind::Ce => solve_no_regret(game, kind, opts),
    }
}

/// Hedge self-play per `(agent, private)` block; the time-averaged product
/// profile approaches the minimax solution in two-agent zero-sum games.
fn solve_zero_sum(game: &StageGame, opts: &SolveOptions) -> Result<StageSolution, SolveError> {
    let scale = opts.payoff_scale.unwrap_or(game.payoff_scale());
    let n = game.num_agents();
    let mut cum: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![0.0; game.kernel.private_counts[i] * game.kernel.action_counts[i]])
        .collect();
    let mut sums: Vec<Vec<f64>> = cum.clone();
    let mut best: Option<StageSolution> = None;
    for t in 1..=opts.max_iters {
        let profile: Profile = (0..n)
            .map(|i| {
                let ai = game.kernel.action_counts[i];
                let eta = (f64::ln(ai.max(2) as f64) / t as f64).sqrt();
                let mut probs = Vec::with_capacity(cum[i].len());
                for p in 0..game.kernel.private_counts[i] {
                    probs.extend(hedge_dist(&cum[i][p * ai..(p + 1) * ai], eta, scale));
                }
                Prescription {
                    probs,
                    num_private: game.kernel.private_counts[i],
                    num_actions: ai,
                }
            })
            .collect();
        for i in 0..n {
            let grad = stage_q_gradient(game, &profile, i);
            for (slot, g) in cum[i].iter_mut().zip(&grad) {
                *slot += g;
            }
            for (slot, v) in sums[i].iter_mut().zip(&profile[i].probs) {
                *slot += v;
            }
        }
        if t % opts.check_every == 0 || t == opts.max_iters {
            let averaged: Profile = (0..n)
                .map(|i| Prescription {
                    probs: sums[i].iter().map(|v| v / t as f64).collect(),
                    num_private: game.kernel.private_counts[i],
                    num_actions: game.kernel.action_counts[i],
                })
                .collect();
            let mixed = MixedProfile::pure(averaged);
            let gap = stage_gap(game, &mixed, SolveKind::NashZeroSum);
            if best.as_ref().map_or(true, |b| gap < b.gap) {
                best = Some(StageSolution {
                    profile: mixed,
                    gap,
                    kind_used: SolveKind::NashZeroSum,
                    iterations: t,
                });
            }
            if gap <= opts.eps {
                return Ok(best.unwrap());
            }
        }
    }
    let achieved = best.map(|b| b.gap).unwrap_or(f64::INFINITY);
    Err(SolveError::IterationLimit {
        max_iters: opts.max_iters,
        achieved,
        required: opts.eps,
    })
}

/// Alternating exact best responses on the common payoff; terminates when a
/// full sweep improves by at most `eps / 2`, then certifies the gap.
fn solve_cooperative(game: &StageGame, opts: &SolveOptions) -> Result<StageSolution, SolveError> {
    let n = game.num_agents();
    let mut profile = game.uniform_profile();
    let mut value = stage_q(game, &profile, 0);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut sweep_gain = 0.0;
        for i in 0..n {
            let br = prescription_best_response(game, &MixedProfile::pure(profile.clone()), i);
            let mut candidate = profile.clone();
            candidate[i] = br;
            let new_value = stage_q(game, &candidate, 0);
            if new_value > value {
                sweep_gain += new_value - value;
                profile = candidate;
                value = new_value;
            }
        }
        if sweep_gain <= opts.eps / 2.0 || iterations >= opts.max_iters {
            let mixed = MixedProfile::pure(profile.clone());
            let gap = stage_gap(game, &mixed, SolveKind::NashCooperative);
            if gap <= opts.eps {
                return Ok(StageSolution {
                    profile: mixed,
                    gap,
                    kind_used: SolveKind::NashCooperative,
                    iterations,
                });
            }
            if iterations >= opts.max_iters {
                return Err(SolveError::IterationLimit {
                    max_iters: opts.max_iters,
                    achieved: gap,
                    required: opts.eps,
                });
            }
        }
    }
}

/// Per-block no-regret dynamics; external regret (Hedge) for CCE, internal
/// regret (per-action expert reduction) for CE. The uniform mixture of
/// iterates is the candidate solution.
fn solve_no_regret(
    game: &StageGame,
    kind: SolveKind,
    opts: &SolveOptions,
) -> Result<StageSolution, SolveError> {
    let scale = opts.payoff_scale.unwrap_or(game.payoff_scale());
    let n = game.num_agents();
    // External state: cumulative payoff per (agent, p, action).
    let mut cum_ext: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![0.0; game.kernel.private_counts[i] * game.kernel.action_counts[i]])
        .collect();
    // Internal state: cumulative payoff per (agent, p, recommending expert, action).
    let mut cum_int: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let ai = game.kernel.action_counts[i];
            vec![0.0; game.kernel.private_counts[i] * ai * ai]
        })
        .collect();
    // Running statistics that certify the mixture of iterates in O(1) per
    // check: `cum_value[i]` accumulates agent i's per-iterate payoff, and for
    // CCE the cumulative external gradients double as the deviation value
    // (likewise `cum_int` for CE swaps). Both identities hold because each
    // iterate's gradient is taken against that iterate's opponents.
    let mut cum_value = vec![0.0; n];
    let mut atoms: Vec<Profile> = Vec::new();
    let mut best: Option<StageSolution> = None;
    for t in 1..=opts.max_iters {
        let profile: Profile = (0..n)
            .map(|i| {
                let ai = game.kernel.action_counts[i];
                let pi = game.kernel.private_counts[i];
                let eta = (f64::ln(ai.max(2) as f64) / t as f64).sqrt();
                let mut probs = Vec::with_capacity(pi * ai);
                for p in 0..pi {
                    match kind {
                        SolveKind::Cce => {
                            probs.extend(hedge_dist(&cum_ext[i][p * ai..(p + 1) * ai], eta, scale));
                        }
                        SolveKind::Ce => {
                            // Expert distributions, then their stationary mix.
                            let experts: Vec<Vec<f64>> = (0..ai)
                                .map(|rec| {
                                    let base = (p * ai + rec) * ai;
                                    hedge_dist(&cum_int[i][base..base + ai], eta, scale)
                                })
                                .collect();
                            probs.extend(stationary_distribution(&experts));
                        }
                        _ => unreachable!(),
                    }
                }
                Prescription {
                    probs,
                    num_private: pi,
                    num_actions: ai,
                }
            })
            .collect();
        for i in 0..n {
            let grad = stage_q_gradient(game, &profile, i);
            let ai = game.kernel.action_counts[i];
            cum_value[i] += profile[i]
                .probs
                .iter()
                .zip(&grad)
                .map(|(x, y)| x * y)
                .sum::<f64>();
            for p in 0..game.kernel.private_counts[i] {
                for rec in 0..ai {
                    let weight = profile[i].prob(p, rec);
                    if weight == 0.0 {
                        continue;
                    }
                    let base = (p * ai + rec) * ai;
                    for a in 0..ai {
                        cum_int[i][base + a] += weight * grad[p * ai + a];
                    }
                }
            }
            for (slot, g) in cum_ext[i].iter_mut().zip(&grad) {
                *slot += g;
            }
        }
        atoms.push(profile);
        if t % opts.check_every == 0 || t == opts.max_iters {
            let mut gap: f64 = 0.0;
            for i in 0..n {
                let ai = game.kernel.action_counts[i];
                let deviation: f64 = match kind {
                    SolveKind::Cce => (0..game.kernel.private_counts[i])
                        .map(|p| {
                            cum_ext[i][p * ai..(p + 1) * ai]
                                .iter()
                                .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
                        })
                        .sum(),
                    SolveKind::Ce => (0..game.kernel.private_counts[i] * ai)
                        .map(|cell| {
                            cum_int[i][cell * ai..(cell + 1) * ai]
                                .iter()
                                .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
                        })
                        .sum(),
                    _ => unreachable!(),
                };
                gap = gap.max((deviation - cum_value[i]) / t as f64);
            }
            if best.as_ref().map_or(true, |b| gap < b.gap) {
                best = Some(StageSolution {
                    profile: MixedProfile {
                        atoms: atoms.clone(),
                    },
                    gap,
                    kind_used: kind,
                    iterations: t,
                });
            }
            if gap <= opts.eps {
                return Ok(best.unwrap());
            }
        }
    }
    let achieved = best.map(|b| b.gap).unwrap_or(f64::INFINITY);
    Err(SolveError::IterationLimit {
        max_iters: opts.max_iters,
        achieved,
        required: opts.eps,
    })
}

/// Stationary distribution of the row-stochastic matrix whose row `rec` is the
/// recommending expert's distribution; fixed-point iteration (rows stay
/// strictly positive under Hedge, so the chain is ergodic).
fn stationary_distribution(experts: &[Vec<f64>]) -> Vec<f64> {
    let k = experts.len();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..200 {
        let mut next = vec![0.0; k];
        for (rec, row) in experts.iter().enumerate() {
            for (a, &q) in row.iter().enumerate() {
                next[a] += pi[rec] * q;
            }
        }
        let diff: f64 = next
            .iter()
            .zip(&pi)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        pi = next;
        if diff < 1e-14 {
            break;
        }
    }
    let sum: f64 = pi.iter().sum();
    for v in &mut pi {
        *v /= sum;
    }
    pi
}

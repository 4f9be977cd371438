//! Shared fixtures and independent oracles for the integration suites.

use posg::info::InfoStructure;
use posg::model::{decode_joint, derive_seed, JointPolicy, PosgModel};
use std::collections::BTreeMap;

/// Dense random-ish model with no zero kernel entries. `action_independent`
/// makes transitions ignore actions; `controller_only` makes them ignore
/// agent 1's action component.
pub fn fuzzy_model(
    horizon: usize,
    states: usize,
    action_counts: Vec<usize>,
    obs_counts: Vec<usize>,
    seed: u64,
    action_independent: bool,
    controller_only: bool,
) -> PosgModel {
    let num_actions: usize = action_counts.iter().product();
    let num_obs: usize = obs_counts.iter().product();
    let mut counter = seed;
    let mut next = move || {
        counter = derive_seed(counter, 1);
        0.2 + (counter % 1000) as f64 / 1000.0
    };
    let simplex = |weights: Vec<f64>| {
        let sum: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / sum).collect::<Vec<f64>>()
    };
    let mut transitions = Vec::new();
    for _h in 0..horizon {
        let mut table = Vec::new();
        for _s in 0..states {
            let shared = simplex((0..states).map(|_| next()).collect());
            let mut per_a1: Vec<Vec<f64>> = Vec::new();
            for a in 0..num_actions {
                let row = if action_independent {
                    shared.clone()
                } else if controller_only {
                    let a1 = decode_joint(a, &action_counts)[0];
                    while per_a1.len() <= a1 {
                        per_a1.push(simplex((0..states).map(|_| next()).collect()));
                    }
                    per_a1[a1].clone()
                } else {
                    simplex((0..states).map(|_| next()).collect())
                };
                table.extend(row);
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
    let n_agents = action_counts.len();
    let rewards: Vec<f64> = (0..n_agents * horizon * num_obs)
        .map(|_| next().min(1.0))
        .collect();
    let initial = simplex((0..states).map(|_| next()).collect());
    PosgModel::from_parts(
        "fuzzy",
        horizon,
        action_counts,
        obs_counts,
        initial,
        transitions,
        emissions,
        rewards,
        None,
    )
}

/// Brute-force conditional `P(s_h, p_h | c_h)` by exhaustive enumeration of
/// all joint histories under a policy; independent of the library's belief
/// machinery (uses it only for history splitting and canonical encoding).
pub fn brute_force_belief(
    model: &PosgModel,
    info: &InfoStructure,
    policy: &dyn JointPolicy,
    h: usize,
) -> BTreeMap<u64, Vec<f64>> {
    let p_total = info.joint_private_size(h);
    let mut tables: BTreeMap<u64, Vec<f64>> = BTreeMap::new();

    struct Node {
        h: usize,
        actions: Vec<usize>,
        observations: Vec<usize>,
        alpha: Vec<f64>,
    }
    let mut stack = vec![Node {
        h: 1,
        actions: vec![],
        observations: vec![],
        alpha: model.initial.clone(),
    }];
    while let Some(node) = stack.pop() {
        if node.h == h {
            let split = info.split_history(h, &node.actions, &node.observations);
            let code = info.common_layout(h, None).encode(&split.common).unwrap();
            let p = info.encode_private(h, &split.private);
            let entry = tables
                .entry(code)
                .or_insert_with(|| vec![0.0; model.num_states * p_total]);
            for (s, &w) in node.alpha.iter().enumerate() {
                entry[s * p_total + p] += w;
            }
            continue;
        }
        let dist = policy.joint_action_dist(node.h, &node.actions, &node.observations);
        for (a, &pa) in dist.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let mut pushed = vec![0.0; model.num_states];
            for (s, &w) in node.alpha.iter().enumerate() {
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
    for table in tables.values_mut() {
        let sum: f64 = table.iter().sum();
        for v in table.iter_mut() {
            *v /= sum;
        }
    }
    tables
}

/// A one-shot matching-pennies environment: joint actions map one-to-one to
/// next observations; agent 0 wins on a match. Normalized rewards put the
/// game value at 0.5.
pub fn pennies_model() -> PosgModel {
    let horizon = 1;
    let states = 5;
    let mut t_table = Vec::new();
    for s in 0..states {
        for a in 0..4 {
            let mut row = vec![0.0; states];
            if s == 0 {
                row[1 + a] = 1.0;
            } else {
                row[s] = 1.0;
            }
            t_table.extend(row);
        }
    }
    let mut e_table = Vec::new();
    for s in 0..states {
        let mut row = vec![0.0; 5];
        row[s] = 1.0;
        e_table.extend(row);
    }
    let r0 = vec![0.5, 1.0, 0.0, 0.0, 1.0];
    let r1: Vec<f64> = r0.iter().map(|v| 1.0 - v).collect();
    let mut rewards = Vec::new();
    rewards.extend(r0);
    rewards.extend(r1);
    PosgModel::from_parts(
        "pennies",
        horizon,
        vec![2, 2],
        vec![5, 1],
        {
            let mut mu = vec![0.0; states];
            mu[0] = 1.0;
            mu
        },
        vec![t_table],
        vec![e_table.clone(), e_table],
        rewards,
        None,
    )
}

/// Deterministic pseudo-uniform draw in [lo, hi) from a counter.
pub fn jitter(counter: &mut u64, lo: f64, hi: f64) -> f64 {
    *counter = derive_seed(*counter, 1);
    lo + (*counter % 100_000) as f64 / 100_000.0 * (hi - lo)
}

/// Random distribution with strictly positive entries.
pub fn random_dist(counter: &mut u64, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| jitter(counter, 0.05, 1.05)).collect();
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (run with `-- --nocapture` to see them).

mod common;

use common::{brute_force_belief, fuzzy_model, jitter, pennies_model, random_dist};
use posg::approx::{
    measure_model_errors, ApproxCommonModel, BeliefSource, BuildOptions, CommonInfoGame,
    ErrorMode, GridOptions, KeySpace,
};
use posg::bench::{dectiger, random_observable_posg, RewardStructure};
use posg::beliefs::{posterior_update, renyi2, Belief, PosteriorKernel};
use posg::equilibrium::{
    best_swap, solve_stage, stage_gap, stage_q, stage_q_mixed, MixedProfile, Prescription,
    SolveKind, SolveOptions, StageGame, StageKernel, SwapModification,
};
use posg::info::{compression_stats, CompressionScheme, InfoStructure, SharingPattern};
use posg::learning::{
    construct_empirical, make_uniform_exploration, n0_bound, policy_selection, LearnConfig,
    PosgSampler, UniformExploration,
};
use posg::model::{
    decode_joint, derive_seed, enumerate_histories, GeneralPolicy, JointPolicy, PosgModel,
};
use posg::planning::{
    best_response_policy, policy_gap, policy_value_exact, policy_value_in_game, vi_approx,
    vi_common_info, CommonInfoPolicy, DeviationMode,
};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

fn observable_instance() -> Arc<PosgModel> {
    Arc::new(
        random_observable_posg(2024, 2, &[2, 2], &[2, 2], 3, 0.2, RewardStructure::GeneralSum)
            .unwrap(),
    )
}

/// Criterion 1: with the full-memory compression, planning on the compressed
/// model reproduces the exact planner's values key for key.
#[test]
fn criterion_1_identity_compression_equivalence() {
    let start = Instant::now();
    let model = observable_instance();
    let opts = SolveOptions {
        eps: 0.01,
        ..Default::default()
    };
    let (exact, _) = vi_common_info(
        Arc::clone(&model),
        SharingPattern::OneStepDelay,
        SolveKind::Cce,
        &opts,
        &BuildOptions::default(),
    )
    .unwrap();
    let approx = ApproxCommonModel::build(
        Arc::clone(&model),
        SharingPattern::OneStepDelay,
        CompressionScheme::new(model.horizon),
        BeliefSource::UniformPrior,
        None,
        &BuildOptions::default(),
    )
    .unwrap();
    let compressed = vi_approx(&approx, SolveKind::Cce, &opts).unwrap();
    let mut max_diff: f64 = 0.0;
    for h in 1..=model.horizon {
        assert_eq!(exact.values[h - 1].len(), compressed.values[h - 1].len());
        for (key, vals) in &exact.values[h - 1] {
            for (x, y) in vals.iter().zip(&compressed.values[h - 1][key]) {
                max_diff = max_diff.max((x - y).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(max_diff <= 1e-9, "max value difference {max_diff}");
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "PASS criterion 1: identity-compression equivalence (max diff {max_diff:.2e}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

fn matrix_game(action_counts: &[usize], payoffs: &[Vec<f64>]) -> StageGame {
    let a_total: usize = action_counts.iter().product();
    let n = action_counts.len();
    let kernel = StageKernel {
        private_counts: vec![1; n],
        action_counts: action_counts.to_vec(),
        num_obs: a_total,
        num_z: 1,
        q: vec![1.0],
        kappa: {
            let mut k = vec![0.0; a_total * a_total];
            for a in 0..a_total {
                k[a * a_total + a] = 1.0;
            }
            k
        },
        rewards: payoffs.to_vec(),
        cont: vec![vec![0.0]; n],
        chi: vec![0; a_total * a_total],
    };
    StageGame::new(kernel)
}

/// Criterion 2: per-stage equilibrium certification on canonical games.
#[test]
fn criterion_2_equilibrium_certification() {
    let start = Instant::now();
    // Matching pennies: zero-sum NE value within 0.01 of 0.
    let p1 = vec![1.0, -1.0, -1.0, 1.0];
    let p2: Vec<f64> = p1.iter().map(|v| -v).collect();
    let pennies = matrix_game(&[2, 2], &[p1, p2]);
    let solution = solve_stage(
        &pennies,
        SolveKind::NashZeroSum,
        &SolveOptions {
            eps: 0.01,
            ..Default::default()
        },
    )
    .unwrap();
    let value = stage_q_mixed(&pennies, &solution.profile, 0);
    assert!(value.abs() <= 0.01, "pennies value {value}");

    // Cooperative coordination: pure brute-force optimum reached.
    let payoff = vec![0.9, 0.1, 0.2, 1.0];
    let coordination = matrix_game(&[2, 2], &[payoff.clone(), payoff.clone()]);
    let solution = solve_stage(
        &coordination,
        SolveKind::NashCooperative,
        &SolveOptions {
            eps: 0.01,
            ..Default::default()
        },
    )
    .unwrap();
    let reached = stage_q_mixed(&coordination, &solution.profile, 0);
    let brute = payoff.iter().cloned().fold(f64::MIN, f64::max);
    assert!((reached - brute).abs() <= 1e-9, "coordination {reached} vs {brute}");

    // Greedy best swap equals brute force over all modifications.
    let mut counter = 99u64;
    for trial in 0..10 {
        let kernel = StageKernel {
            private_counts: vec![2, 2],
            action_counts: vec![2, 2],
            num_obs: 3,
            num_z: 1,
            q: random_dist(&mut counter, 4),
            kappa: {
                let mut k = Vec::new();
                for _ in 0..16 {
                    k.extend(random_dist(&mut counter, 3));
                }
                k
            },
            rewards: vec![
                (0..3).map(|_| jitter(&mut counter, 0.0, 1.0)).collect(),
                (0..3).map(|_| jitter(&mut counter, 0.0, 1.0)).collect(),
            ],
            cont: vec![vec![0.0]; 2],
            chi: vec![0; 48],
        };
        let game = StageGame::new(kernel);
        let atoms = (0..3)
            .map(|_| {
                (0..2)
                    .map(|_| {
                        let mut probs = Vec::new();
                        for _ in 0..2 {
                            probs.extend(random_dist(&mut counter, 2));
                        }
                        Prescription {
                            probs,
                            num_private: 2,
                            num_actions: 2,
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        let mixture = MixedProfile { atoms };
        for i in 0..2 {
            let (_, greedy) = best_swap(&game, &mixture, i);
            let mut brute = f64::NEG_INFINITY;
            for mask in 0..16usize {
                let maps = vec![
                    vec![mask & 1, (mask >> 1) & 1],
                    vec![(mask >> 2) & 1, (mask >> 3) & 1],
                ];
                let swap = SwapModification { maps };
                let mut value = 0.0;
                for atom in &mixture.atoms {
                    let mut modified = atom.clone();
                    modified[i] = swap.apply(&atom[i]);
                    value += stage_q(&game, &modified, i) / mixture.atoms.len() as f64;
                }
                brute = brute.max(value);
            }
            assert!((greedy - brute).abs() <= 1e-10, "trial {trial} agent {i}");
        }
    }

    // Rock-paper-scissors: CCE gap within 0.01.
    let mut r1 = vec![0.0; 9];
    for (r, c, v) in [
        (0usize, 1usize, -1.0),
        (0, 2, 1.0),
        (1, 0, 1.0),
        (1, 2, -1.0),
        (2, 0, -1.0),
        (2, 1, 1.0),
    ] {
        r1[r * 3 + c] = v;
    }
    let r2: Vec<f64> = r1.iter().map(|v| -v).collect();
    let rps = matrix_game(&[3, 3], &[r1, r2]);
    let solution = solve_stage(
        &rps,
        SolveKind::Cce,
        &SolveOptions {
            eps: 0.01,
            ..Default::default()
        },
    )
    .unwrap();
    let rps_gap = stage_gap(&rps, &solution.profile, SolveKind::Cce);
    assert!(rps_gap <= 0.01, "rps gap {rps_gap}");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "PASS criterion 2: equilibrium certification (pennies value {value:.4}, rps gap {rps_gap:.4}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 3: the exact gap of the compressed-model planner obeys the
/// error-propagation bound, and the measured prediction errors shrink as the
/// memory grows.
#[test]
fn criterion_3_planner_gap_bound() {
    let start = Instant::now();
    let model = observable_instance();
    let info = InfoStructure::new(SharingPattern::OneStepDelay, &model).unwrap();
    let eps_e = 0.01;
    let h_f = model.horizon as f64;
    let fixed_policies: Vec<GeneralPolicy> = vec![
        GeneralPolicy::uniform(&model),
        GeneralPolicy::random_history_dependent(&model, 501),
        GeneralPolicy::random_history_dependent(&model, 502),
    ];
    let mut fixed_eps = Vec::new();
    let mut report = String::new();
    for memory in [0usize, 1, 2] {
        let approx = ApproxCommonModel::build(
            Arc::clone(&model),
            SharingPattern::OneStepDelay,
            CompressionScheme::new(memory),
            BeliefSource::UniformPrior,
            None,
            &BuildOptions::default(),
        )
        .unwrap();
        let solution = vi_approx(
            &approx,
            SolveKind::Cce,
            &SolveOptions {
                eps: eps_e,
                ..Default::default()
            },
        )
        .unwrap();
        let gap = policy_gap(
            Arc::clone(&model),
            SharingPattern::OneStepDelay,
            &solution.policy,
            SolveKind::Cce,
            &BuildOptions::default(),
            5_000_000,
        )
        .unwrap();
        // Error measurement under the policies the bound's proof evaluates:
        // the planned policy and each agent's composed best response.
        let exact_game = vi_common_info(
            Arc::clone(&model),
            SharingPattern::OneStepDelay,
            SolveKind::Cce,
            &SolveOptions {
                eps: eps_e,
                ..Default::default()
            },
            &BuildOptions::default(),
        )
        .unwrap()
        .1;
        let mut composed = Vec::new();
        for i in 0..model.num_agents {
            composed.push(
                best_response_policy(&exact_game, &solution.policy, i, DeviationMode::Unilateral)
                    .unwrap()
                    .composed,
            );
        }
        let planned_exec = solution.policy.executor(&info);
        let composed_execs: Vec<_> = composed.iter().map(|c| c.executor(&info)).collect();
        let mut policies: Vec<&dyn JointPolicy> = vec![&planned_exec];
        for exec in &composed_execs {
            policies.push(exec);
        }
        let errors = measure_model_errors(
            &model,
            &approx,
            &policies,
            &GridOptions::default(),
            ErrorMode::Exact {
                max_histories: 5_000_000,
            },
        )
        .unwrap();
        let bound = 2.0 * h_f * errors.eps_r + h_f * h_f * errors.eps_z + h_f * eps_e + 1e-6;
        assert!(
            gap <= bound,
            "L={memory}: gap {gap} exceeds bound {bound} (eps_r {}, eps_z {})",
            errors.eps_r,
            errors.eps_z
        );
        // Fixed policy set for the monotonicity comparison.
        let fixed_refs: Vec<&dyn JointPolicy> =
            fixed_policies.iter().map(|p| p as &dyn JointPolicy).collect();
        let fixed = measure_model_errors(
            &model,
            &approx,
            &fixed_refs,
            &GridOptions::default(),
            ErrorMode::Exact {
                max_histories: 5_000_000,
            },
        )
        .unwrap();
        report.push_str(&format!(
            "L={memory}: gap {gap:.4} <= {bound:.4}, eps_r {:.4}, eps_z {:.4}; ",
            fixed.eps_r, fixed.eps_z
        ));
        fixed_eps.push((fixed.eps_r, fixed.eps_z));
    }
    for w in fixed_eps.windows(2) {
        assert!(w[1].0 <= w[0].0 + 1e-9, "eps_r not monotone: {fixed_eps:?}");
        assert!(w[1].1 <= w[0].1 + 1e-9, "eps_z not monotone: {fixed_eps:?}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "PASS criterion 3: planner gap bound ({report}{:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 4: divergence inequalities and filter equivalences.
#[test]
fn criterion_4_belief_analytics() {
    let start = Instant::now();
    let mut counter = 44u64;

    // Total-variation bound through the 2-Renyi divergence, 1000 pairs.
    let mut tv_violations = 0;
    for _ in 0..1000 {
        let q = random_dist(&mut counter, 4);
        let p = random_dist(&mut counter, 4);
        let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        let d2 = renyi2(&p, &q).unwrap();
        if l1 > 4.0 * ((d2 / 4.0).exp() - 1.0).sqrt() + 1e-9 {
            tv_violations += 1;
        }
    }
    assert_eq!(tv_violations, 0);

    // Non-expansiveness of the posterior update, 200 triples, exact
    // enumeration over outcomes.
    let phi = |d2: f64| ((d2 / 4.0).exp() - 1.0).sqrt();
    for trial in 0..200 {
        let states = 2 + (trial % 3);
        let outcomes = 2 + (trial % 4);
        let b = random_dist(&mut counter, states);
        let b_prime = random_dist(&mut counter, states);
        let kernel = PosteriorKernel::new(
            (0..states).map(|_| random_dist(&mut counter, outcomes)).collect(),
        )
        .unwrap();
        let marginal = kernel.push(&b);
        let mut lhs = 0.0;
        for (y, &py) in marginal.iter().enumerate() {
            if py == 0.0 {
                continue;
            }
            let post = posterior_update(&b, &kernel, y).unwrap();
            let post_prime = posterior_update(&b_prime, &kernel, y).unwrap();
            lhs += py * phi(renyi2(&post, &post_prime).unwrap());
        }
        let rhs = phi(renyi2(&b, &b_prime).unwrap());
        assert!(lhs <= rhs + 1e-9, "trial {trial}: {lhs} > {rhs}");
    }

    // Contraction under an informative emission with known expansion
    // constant: rows (1 - eta) onehot + eta uniform have gamma = 1 - eta.
    let eta = 0.2;
    let gamma: f64 = 1.0 - eta;
    let factor = 1.0 - gamma.powi(4) / 2f64.powi(40);
    for trial in 0..200 {
        let states = 2 + (trial % 3);
        let outcomes = states + (trial % 2);
        let rows: Vec<Vec<f64>> = (0..states)
            .map(|s| {
                (0..outcomes)
                    .map(|o| if o == s { 1.0 - eta } else { 0.0 } + eta / outcomes as f64)
                    .collect()
            })
            .collect();
        let kernel = PosteriorKernel::new(rows).unwrap();
        let b = random_dist(&mut counter, states);
        let b_prime = random_dist(&mut counter, states);
        let marginal = kernel.push(&b);
        let mut lhs = 0.0;
        for (y, &py) in marginal.iter().enumerate() {
            if py == 0.0 {
                continue;
            }
            let post = posterior_update(&b, &kernel, y).unwrap();
            let post_prime = posterior_update(&b_prime, &kernel, y).unwrap();
            lhs += py * phi(renyi2(&post, &post_prime).unwrap());
        }
        let rhs = factor * phi(renyi2(&b, &b_prime).unwrap());
        assert!(lhs <= rhs + 1e-9, "trial {trial}: {lhs} > {rhs}");
    }

    // Full-window truncated filter reproduces the exact filter bit-level.
    let model = observable_instance();
    let junk_prior = Belief::point_mass(0, 2);
    for k in 0..200u64 {
        let policy = GeneralPolicy::uniform(&model);
        let traj = posg::model::sample_trajectory(&model, &policy, derive_seed(777, k)).unwrap();
        for h in 1..=model.horizon + 1 {
            let (acts, obs) = traj.history_at(h);
            let exact =
                posg::beliefs::exact_filter(&model, acts, obs, posg::beliefs::FilterMode::PostObs)
                    .unwrap();
            let approx = posg::beliefs::approx_filter(
                &model,
                h,
                acts,
                obs,
                &junk_prior,
                posg::beliefs::FilterMode::PostObs,
            )
            .unwrap();
            assert!(exact.l1(&approx) <= 1e-12);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "PASS criterion 4: belief analytics (0/1000 TV violations, contraction factor {factor:.12}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 5: closed-form common-information beliefs match brute-force
/// history conditionals on every pattern and are strategy independent.
#[test]
fn criterion_5_strategy_independence_and_belief_oracle() {
    let start = Instant::now();
    let patterns = [
        SharingPattern::OneStepDelay,
        SharingPattern::AsymmetricDelay { delay: 1 },
        SharingPattern::OneDirectional,
        SharingPattern::UncontrolledDelay { delay: 1 },
        SharingPattern::Symmetric,
    ];
    let mut worst_tv: f64 = 0.0;
    for pattern in patterns {
        let model = match pattern {
            SharingPattern::UncontrolledDelay { .. } => {
                fuzzy_model(3, 2, vec![2, 2], vec![2, 2], 811, true, false)
            }
            SharingPattern::AsymmetricDelay { .. } => {
                fuzzy_model(3, 2, vec![2, 2], vec![2, 2], 812, false, true)
            }
            _ => fuzzy_model(3, 2, vec![2, 2], vec![2, 2], 813, false, false),
        };
        let info = InfoStructure::new(pattern, &model).unwrap();
        let policies: Vec<GeneralPolicy> = (0..5)
            .map(|k| GeneralPolicy::random_history_dependent(&model, 2000 + k))
            .collect();
        for h in 1..=model.horizon + 1 {
            let reference = brute_force_belief(&model, &info, &policies[0], h);
            for policy in &policies[1..] {
                let other = brute_force_belief(&model, &info, policy, h);
                for (code, table) in &reference {
                    let tv: f64 = table
                        .iter()
                        .zip(&other[code])
                        .map(|(x, y)| (x - y).abs())
                        .sum::<f64>()
                        / 2.0;
                    worst_tv = worst_tv.max(tv);
                    assert!(tv <= 1e-9, "{pattern:?} h={h}: strategy dependence {tv}");
                }
            }
            for (code, table) in &reference {
                let values = info.common_layout(h, None).decode(*code);
                let ours = info.exact_common_belief(&model, h, &values).unwrap();
                let tv: f64 = table
                    .iter()
                    .zip(&ours)
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>()
                    / 2.0;
                worst_tv = worst_tv.max(tv);
                assert!(tv <= 1e-9, "{pattern:?} h={h}: oracle mismatch {tv}");
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "PASS criterion 5: strategy independence + belief oracle (worst TV {worst_tv:.2e}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 6: the concentration bounds hold on well-visited cells with the
/// prescribed sample size, in at least 18 of 20 seeds.
#[test]
fn criterion_6_concentration() {
    let start = Instant::now();
    let model = fuzzy_model(2, 2, vec![2, 1], vec![2, 1], 606, false, false);
    let pattern = SharingPattern::OneStepDelay;
    let memory = 1usize;
    let info = InfoStructure::new(pattern, &model).unwrap();
    let config = LearnConfig {
        constant_c: 1.0,
        theta1: 0.1,
        theta2: 0.1,
        zeta1: 0.1,
        zeta2: 0.01,
        delta1: 0.1,
        ..Default::default()
    };
    let max_private = (1..=model.horizon)
        .map(|h| info.joint_private_size(h))
        .max()
        .unwrap();
    let max_compressed = (1..=model.horizon)
        .map(|h| info.common_layout(h, Some(memory)).space_size() as usize)
        .max()
        .unwrap();
    let n0 = n0_bound(
        &config,
        max_private,
        max_compressed,
        model.num_joint_actions(),
        model.num_joint_obs(),
        model.horizon,
    );

    // Exact conditionals under the uniform exploration policy.
    let uniform = GeneralPolicy::uniform(&model);
    let a_total = model.num_joint_actions();
    let num_obs = model.num_joint_obs();
    struct Truth {
        key_mass: BTreeMap<u64, f64>,
        p_given_key: BTreeMap<u64, Vec<f64>>,
        cell_mass: BTreeMap<(u64, usize), f64>,
        obs_given_cell: BTreeMap<(u64, usize, usize), Vec<f64>>,
    }
    let mut truths = Vec::new();
    for h in 1..=model.horizon {
        let histories = enumerate_histories(&model, &uniform, h, 1_000_000).unwrap();
        let layout = info.common_layout(h, Some(memory));
        let p_total = info.joint_private_size(h);
        let mut truth = Truth {
            key_mass: BTreeMap::new(),
            p_given_key: BTreeMap::new(),
            cell_mass: BTreeMap::new(),
            obs_given_cell: BTreeMap::new(),
        };
        for hist in &histories {
            let split = info.split_history(h, &hist.actions, &hist.observations);
            let compressed = info.compress(h, memory, &split.common);
            let key = layout.encode(&compressed).unwrap();
            let p = info.encode_private(h, &split.private);
            *truth.key_mass.entry(key).or_insert(0.0) += hist.prob;
            truth
                .p_given_key
                .entry(key)
                .or_insert_with(|| vec![0.0; p_total])[p] += hist.prob;
            *truth.cell_mass.entry((key, p)).or_insert(0.0) += hist.prob;
            for a in 0..a_total {
                let mut pushed = vec![0.0; model.num_states];
                for (s, &w) in hist.alpha.iter().enumerate() {
                    for (sp, &t) in model.transition_row(h, s, a).iter().enumerate() {
                        pushed[sp] += w * t;
                    }
                }
                let entry = truth
                    .obs_given_cell
                    .entry((key, p, a))
                    .or_insert_with(|| vec![0.0; num_obs]);
                for o in 0..num_obs {
                    let mut mass = 0.0;
                    for (sp, &w) in pushed.iter().enumerate() {
                        mass += w * model.emission_row(h + 1, sp)[o];
                    }
                    entry[o] += mass;
                }
            }
        }
        for dist in truth.p_given_key.values_mut() {
            let sum: f64 = dist.iter().sum();
            dist.iter_mut().for_each(|v| *v /= sum);
        }
        for dist in truth.obs_given_cell.values_mut() {
            let sum: f64 = dist.iter().sum();
            if sum > 0.0 {
                dist.iter_mut().for_each(|v| *v /= sum);
            }
        }
        truths.push(truth);
    }

    let sampler = PosgSampler { model: &model };
    let exploration = make_uniform_exploration(&model, info.l_hat(memory));
    let mut ok_seeds = 0;
    for seed in 0..20u64 {
        let estimate = construct_empirical(
            &sampler,
            &exploration,
            pattern,
            CompressionScheme::new(memory),
            None,
            &LearnConfig {
                n0,
                seed: derive_seed(4242, seed),
                ..config.clone()
            },
        )
        .unwrap();
        let mut seed_ok = true;
        for h in 1..=model.horizon {
            let truth = &truths[h - 1];
            let p_total = info.joint_private_size(h);
            for (&key, &mass) in &truth.key_mass {
                if mass < config.zeta1 {
                    continue;
                }
                let est = estimate.estimated_private_dist(h, key).unwrap();
                let tv: f64 = truth.p_given_key[&key]
                    .iter()
                    .zip(est)
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>()
                    / 2.0;
                if tv > config.theta1 {
                    seed_ok = false;
                }
            }
            for p in 0..p_total {
                for (&key, _) in &truth.key_mass {
                    let cell = truth.cell_mass.get(&(key, p)).copied().unwrap_or(0.0);
                    if cell < config.zeta2 {
                        continue;
                    }
                    for a in 0..a_total {
                        let est = estimate.estimated_obs_dist(h, key, p, a).unwrap();
                        let tv: f64 = truth.obs_given_cell[&(key, p, a)]
                            .iter()
                            .zip(est)
                            .map(|(x, y)| (x - y).abs())
                            .sum::<f64>()
                            / 2.0;
                        if tv > config.theta2 {
                            seed_ok = false;
                        }
                    }
                }
            }
        }
        if seed_ok {
            ok_seeds += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(ok_seeds >= 18, "only {ok_seeds}/20 seeds concentrated");
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "PASS criterion 6: concentration (N0 = {n0}, {ok_seeds}/20 seeds, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 7: rollout-based selection identifies the exact-model
/// equilibrium, and the selected gap obeys the selection bound.
#[test]
fn criterion_7_policy_selection() {
    let start = Instant::now();
    let model = Arc::new(pennies_model());
    let pattern = SharingPattern::OneStepDelay;
    let memory = model.horizon; // 1
    let eps_e = 0.005;
    let n2 = 10_000usize;

    // Exact compressed model and its zero-sum equilibrium.
    let exact_model = ApproxCommonModel::build(
        Arc::clone(&model),
        pattern,
        CompressionScheme::new(memory),
        BeliefSource::UniformPrior,
        None,
        &BuildOptions::default(),
    )
    .unwrap();
    let equilibrium = vi_approx(
        &exact_model,
        SolveKind::NashZeroSum,
        &SolveOptions {
            eps: eps_e,
            ..Default::default()
        },
    )
    .unwrap();
    // Garbage empirical competitor built from a handful of samples.
    let sampler = PosgSampler { model: &model };
    let info = InfoStructure::new(pattern, &model).unwrap();
    let noisy = construct_empirical(
        &sampler,
        &make_uniform_exploration(&model, info.l_hat(memory)),
        pattern,
        CompressionScheme::new(memory),
        None,
        &LearnConfig {
            n0: 25,
            seed: 7,
            ..Default::default()
        },
    )
    .unwrap();
    // Pure-suboptimal candidate: both agents always play action 0.
    let root_key = exact_model.keys(1)[0];
    let pure = CommonInfoPolicy {
        pattern,
        key_space: KeySpace::Compressed { memory },
        steps: vec![{
            let mut map = BTreeMap::new();
            map.insert(
                root_key,
                MixedProfile::pure(vec![
                    Prescription::deterministic(&[0], 2),
                    Prescription::deterministic(&[0], 2),
                ]),
            );
            map
        }],
    };
    let candidates = vec![equilibrium.policy.clone(), pure];
    // The exact model's values coincide with the environment's for both
    // candidates, so its value-approximation error is zero here.
    for candidate in &candidates {
        for i in 0..2 {
            let v_true =
                policy_value_exact(&model, &candidate.executor(&info), i, 1_000_000).unwrap();
            let v_model = policy_value_in_game(&exact_model, candidate, i).unwrap();
            assert!((v_true - v_model).abs() <= 1e-9);
        }
    }

    let models: Vec<&dyn CommonInfoGame> = vec![&exact_model, &noisy];
    let mut picked_first = 0;
    let mut last_selected = 0;
    for seed in 0..20u64 {
        let outcome = policy_selection(
            &models,
            &candidates,
            SolveKind::NashZeroSum,
            n2,
            &sampler,
            derive_seed(909, seed),
        )
        .unwrap();
        if outcome.selected == 0 {
            picked_first += 1;
        }
        last_selected = outcome.selected;
    }
    assert!(picked_first >= 19, "selected the equilibrium {picked_first}/20");

    // Selection bound with the exact model's approximation error zero:
    // gap(selected) <= gap(best) + 6 * 3SE + H * eps_e.
    let gap_best = policy_gap(
        Arc::clone(&model),
        pattern,
        &candidates[0],
        SolveKind::NashZeroSum,
        &BuildOptions::default(),
        1_000_000,
    )
    .unwrap();
    let gap_selected = policy_gap(
        Arc::clone(&model),
        pattern,
        &candidates[last_selected],
        SolveKind::NashZeroSum,
        &BuildOptions::default(),
        1_000_000,
    )
    .unwrap();
    // Returns live in [0, 1] here, so the rollout standard error is at most
    // 0.5 / sqrt(N2).
    let se = 0.5 / (n2 as f64).sqrt();
    let bound = gap_best + 6.0 * 3.0 * se + model.horizon as f64 * eps_e;
    assert!(
        gap_selected <= bound,
        "selected gap {gap_selected} exceeds {bound}"
    );
    let elapsed = start.elapsed();
    println!(
        "PASS criterion 7: policy selection ({picked_first}/20 correct, selected gap {gap_selected:.4} <= {bound:.4}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 8: learning on the tiger benchmark recovers the planning value.
#[test]
fn criterion_8_end_to_end_learning() {
    let start = Instant::now();
    let model = Arc::new(dectiger(2));
    let pattern = SharingPattern::OneStepDelay;
    let scheme = CompressionScheme::new(1);
    let eps_e = 0.01;
    let (plan, _) = vi_common_info(
        Arc::clone(&model),
        pattern,
        SolveKind::NashCooperative,
        &SolveOptions {
            eps: eps_e,
            ..Default::default()
        },
        &BuildOptions::default(),
    )
    .unwrap();
    let plan_value = plan.root_values()[0];

    let info = InfoStructure::new(pattern, &model).unwrap();
    let sampler = PosgSampler { model: &model };
    let mut learned_values = Vec::new();
    let mut max_seed_time = 0.0f64;
    for seed in 0..20u64 {
        let seed_start = Instant::now();
        let outcome = posg::learning::laci(
            &sampler,
            pattern,
            scheme,
            SolveKind::NashCooperative,
            &LearnConfig {
                n0: 4000,
                n2: 1000,
                eps_e,
                seed: derive_seed(8080, seed),
                ..Default::default()
            },
            &UniformExploration::default(),
        )
        .unwrap();
        let value =
            policy_value_exact(&model, &outcome.policy.executor(&info), 0, 1_000_000).unwrap();
        learned_values.push(value);
        max_seed_time = max_seed_time.max(seed_start.elapsed().as_secs_f64());
    }
    learned_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = (learned_values[9] + learned_values[10]) / 2.0;
    let tolerance = 0.1 * model.horizon as f64;
    assert!(
        (median - plan_value).abs() <= tolerance,
        "median learned value {median} vs planned {plan_value}"
    );
    assert!(max_seed_time < 180.0, "slowest seed {max_seed_time}s");
    let elapsed = start.elapsed();
    let map = model.reward_map.unwrap();
    let raw_plan: f64 = plan_value * map.scale + 2.0 * map.offset; // two reward steps
    println!(
        "PASS criterion 8: end-to-end learning (median {median:.4} vs plan {plan_value:.4} (classic {raw_plan:.2}), slowest seed {max_seed_time:.1}s, total {:.1}s)",
        elapsed.as_secs_f64()
    );
}

/// Criterion 9: perfect-recall cardinality growth.
#[test]
fn criterion_9_cardinality_lemma() {
    let start = Instant::now();
    let model = fuzzy_model(3, 2, vec![2, 1], vec![2, 1], 911, false, false);
    let oa = (model.num_joint_actions() * model.num_joint_obs()) as u128;
    let mut report = String::new();
    for pattern in [
        SharingPattern::OneStepDelay,
        SharingPattern::Symmetric,
        SharingPattern::OneDirectional,
    ] {
        let info = InfoStructure::new(pattern, &model).unwrap();
        let stats = compression_stats(
            &info,
            CompressionScheme::new(model.horizon),
            &model,
            1_000_000,
        )
        .unwrap();
        for h in 1..=3usize {
            let product = stats.common_sizes[h - 1] as u128 * stats.private_sizes[h - 1] as u128;
            assert!(
                product >= oa.pow(h as u32 - 1),
                "{pattern:?} h={h}: {product} < {}",
                oa.pow(h as u32 - 1)
            );
        }
        report.push_str(&format!(
            "{}: C3*P3 = {}; ",
            pattern.name(),
            stats.common_sizes[2] * stats.private_sizes[2]
        ));
    }
    let elapsed = start.elapsed();
    println!(
        "PASS criterion 9: cardinality lemma ({report}bound {} at h=3, {:.2}s)",
        oa.pow(2),
        elapsed.as_secs_f64()
    );
}

/// The compressed-policy executors used above must agree with the increments
/// the environment actually produces; checked once here over sampled runs.
#[test]
fn executor_consistency_smoke() {
    let model = observable_instance();
    let approx = ApproxCommonModel::build(
        Arc::clone(&model),
        SharingPattern::OneStepDelay,
        CompressionScheme::new(1),
        BeliefSource::UniformPrior,
        None,
        &BuildOptions::default(),
    )
    .unwrap();
    let solution = vi_approx(
        &approx,
        SolveKind::Cce,
        &SolveOptions {
            eps: 0.05,
            ..Default::default()
        },
    )
    .unwrap();
    let info = InfoStructure::new(SharingPattern::OneStepDelay, &model).unwrap();
    let exec = solution.policy.executor(&info);
    for k in 0..50u64 {
        let traj = posg::model::sample_trajectory(&model, &exec, derive_seed(31, k)).unwrap();
        assert_eq!(traj.actions.len(), model.horizon);
        for &a in &traj.actions {
            assert!(decode_joint(a, &model.action_counts).len() == 2);
        }
    }
}

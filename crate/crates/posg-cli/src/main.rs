//! Config-driven experiment runner: plans or learns equilibria on a
//! configured instance and writes metric tables plus a structured summary.
//!
//! All result files are deterministic for a fixed `(config, seed)` pair
//! regardless of `--threads`; wall-clock timings go to a separate
//! `timing.csv` that is exempt from that guarantee.

mod config;

use clap::{Parser, Subcommand};
use config::{internal, user, CliError, ExperimentConfig, Mode};
use posg::approx::{
    measure_model_errors, ApproxCommonModel, BeliefSource, BuildOptions, ErrorMode, GridOptions,
};
use posg::equilibrium::SolveOptions;
use posg::fileio::{model_to_toml, policy_from_toml, solution_to_toml};
use posg::info::{CompressionScheme, InfoStructure};
use posg::learning::{laci, LearnConfig, PosgSampler, UniformExploration};
use posg::model::{GeneralPolicy, JointPolicy, PosgModel};
use posg::planning::{policy_gap, policy_value_exact, vi_approx};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "posg", about = "Planning and learning in POSGs with information sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the experiment configuration file.
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for metric files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; does not change any result file.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Backward-induction planning on exact and compressed common information.
    Plan,
    /// Sample-based model estimation, planning on the estimate, and selection.
    Learn,
    /// Exact equilibrium gap of a stored policy.
    Evaluate,
    /// Planning across memory lengths, tabulating prediction errors and gaps.
    #[command(name = "sweep-l")]
    SweepL,
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Plan => Mode::Plan,
            Command::Learn => Mode::Learn,
            Command::Evaluate => Mode::Evaluate,
            Command::SweepL => Mode::SweepL,
        }
    }
}

struct Timing {
    rows: Vec<(String, u128)>,
}

impl Timing {
    fn new() -> Timing {
        Timing { rows: Vec::new() }
    }

    fn record<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.rows.push((phase.to_string(), start.elapsed().as_millis()));
        out
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = String::from("phase,wall_ms\n");
        for (phase, ms) in &self.rows {
            let _ = writeln!(text, "{phase},{ms}");
        }
        std::fs::write(dir.join("timing.csv"), text).map_err(internal)
    }
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("{err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(internal)?;
    }
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let mode = cli.command.mode();
    if let Some(declared) = config.mode {
        if declared != mode {
            return Err(CliError::User(format!(
                "config declares mode {declared} but the {mode} subcommand was invoked"
            )));
        }
    }
    std::fs::create_dir_all(&cli.out).map_err(user)?;
    let base_dir = cli
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let model = Arc::new(config.build_model(&base_dir)?);
    std::fs::write(
        cli.out.join("instance.toml"),
        model_to_toml(&model).map_err(internal)?,
    )
    .map_err(internal)?;

    let mut timing = Timing::new();
    let result = match mode {
        Mode::Plan => run_plan(&config, &model, &cli.out, &mut timing),
        Mode::Learn => run_learn(&config, &model, &cli.out, &mut timing),
        Mode::Evaluate => run_evaluate(&config, &model, &base_dir, &cli.out, &mut timing),
        Mode::SweepL => run_sweep(&config, &model, &cli.out, &mut timing),
    };
    timing.write(&cli.out)?;
    result
}

fn solve_options(config: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        eps: config.eps_e,
        ..Default::default()
    }
}

fn write_summary(dir: &Path, summary: &toml::value::Table) -> Result<(), CliError> {
    let text = toml::to_string(summary).map_err(internal)?;
    std::fs::write(dir.join("summary.toml"), text).map_err(internal)
}

fn run_plan(
    config: &ExperimentConfig,
    model: &Arc<PosgModel>,
    out: &Path,
    timing: &mut Timing,
) -> Result<(), CliError> {
    let pattern = config.pattern()?;
    let scheme = config.scheme();
    let kind = config.kind.to_solve_kind();
    let opts = solve_options(config);
    let approx = timing
        .record("build-model", || {
            ApproxCommonModel::build(
                Arc::clone(model),
                pattern,
                scheme,
                BeliefSource::UniformPrior,
                None,
                &BuildOptions::default(),
            )
        })
        .map_err(user)?;
    let approx = &approx;
    let solution = timing
        .record("plan", || vi_approx(approx, kind, &opts))
        .map_err(user)?;

    let mut table = String::from("step,key_count,max_gap");
    for i in 0..model.num_agents {
        let _ = write!(table, ",value_{i}");
    }
    table.push('\n');
    for h in 1..=model.horizon {
        let key_count = solution.values[h - 1].len();
        let max_gap = solution.stage_gaps[h - 1]
            .values()
            .fold(0.0f64, |acc, &g| acc.max(g));
        // Root-weighted per-agent values are only defined at h = 1; report the
        // per-step value averaged over keys for the table.
        let mut means = vec![0.0; model.num_agents];
        for vals in solution.values[h - 1].values() {
            for (i, v) in vals.iter().enumerate() {
                means[i] += v / key_count as f64;
            }
        }
        let _ = write!(table, "{h},{key_count},{max_gap}");
        for v in &means {
            let _ = write!(table, ",{v}");
        }
        table.push('\n');
    }
    std::fs::write(out.join("plan_stages.csv"), table).map_err(internal)?;
    std::fs::write(
        out.join("solution.toml"),
        solution_to_toml(&solution).map_err(internal)?,
    )
    .map_err(internal)?;

    let mut summary = toml::value::Table::new();
    summary.insert("mode".into(), "plan".into());
    summary.insert("instance".into(), model.name.clone().into());
    summary.insert("pattern".into(), pattern.name().into());
    summary.insert("memory".into(), (scheme.memory as i64).into());
    summary.insert("eps_e".into(), config.eps_e.into());
    summary.insert(
        "root_values".into(),
        toml::Value::Array(solution.root_values().iter().map(|&v| v.into()).collect()),
    );
    summary.insert("max_stage_gap".into(), solution.max_stage_gap().into());
    summary.insert(
        "downgraded_stages".into(),
        (solution.downgraded_stages as i64).into(),
    );
    if solution.downgraded_stages > 0 {
        eprintln!(
            "warning: {} stage(s) were not antagonistic and were solved as CCE",
            solution.downgraded_stages
        );
    }
    if let Some(map) = model.reward_map {
        let raw: Vec<toml::Value> = solution
            .root_values()
            .iter()
            .map(|&v| (map.scale * v + model.horizon as f64 * map.offset).into())
            .collect();
        summary.insert("root_values_raw".into(), toml::Value::Array(raw));
    }
    write_summary(out, &summary)?;
    println!(
        "plan: root values {:?}, max stage gap {}",
        solution.root_values(),
        solution.max_stage_gap()
    );
    Ok(())
}

fn run_learn(
    config: &ExperimentConfig,
    model: &Arc<PosgModel>,
    out: &Path,
    timing: &mut Timing,
) -> Result<(), CliError> {
    let pattern = config.pattern()?;
    let scheme = config.scheme();
    let kind = config.kind.to_solve_kind();
    let learn = config
        .learn
        .as_ref()
        .ok_or_else(|| CliError::User("learn mode needs a [learn] section".into()))?;
    let learn_config = LearnConfig {
        n0: learn.n0,
        n2: learn.n2,
        zeta1: learn.zeta1,
        zeta2: learn.zeta2,
        theta1: learn.theta1,
        theta2: learn.theta2,
        delta1: learn.delta1,
        eps_e: config.eps_e,
        phi: learn.phi,
        constant_c: learn.constant_c,
        seed: config.seed,
        ..Default::default()
    };
    let sampler = PosgSampler { model };
    let generator = UniformExploration {
        num_groups: learn.groups,
    };
    let outcome = timing
        .record("learn", || {
            laci(&sampler, pattern, scheme, kind, &learn_config, &generator)
        })
        .map_err(user)?;

    let mut coverage = String::from(
        "group,step,visited_states,total_states,visited_cells,total_cells,visited_reward_cells,total_reward_cells\n",
    );
    for (g, report) in outcome.coverage.iter().enumerate() {
        for h in 1..=model.horizon {
            let (vs, ts) = report.state_cells[h - 1];
            let (vc, tc) = report.transition_cells[h - 1];
            let (vr, tr) = report.reward_cells[h - 1];
            let _ = writeln!(coverage, "{g},{h},{vs},{ts},{vc},{tc},{vr},{tr}");
        }
    }
    std::fs::write(out.join("coverage.csv"), coverage).map_err(internal)?;
    std::fs::write(
        out.join("learned_solution.toml"),
        solution_to_toml(&outcome.candidates[outcome.selected]).map_err(internal)?,
    )
    .map_err(internal)?;

    let mut summary = toml::value::Table::new();
    summary.insert("mode".into(), "learn".into());
    summary.insert("instance".into(), model.name.clone().into());
    summary.insert("selected_group".into(), (outcome.selected as i64).into());
    summary.insert(
        "selection_scores".into(),
        toml::Value::Array(outcome.selection_scores.iter().map(|&v| v.into()).collect()),
    );
    summary.insert(
        "model_root_values".into(),
        toml::Value::Array(
            outcome.candidates[outcome.selected]
                .root_values()
                .iter()
                .map(|&v| v.into())
                .collect(),
        ),
    );
    summary.insert(
        "max_stage_gap_in_model".into(),
        outcome.candidates[outcome.selected].max_stage_gap().into(),
    );
    write_summary(out, &summary)?;
    println!(
        "learn: selected group {}, model-side root values {:?}",
        outcome.selected,
        outcome.candidates[outcome.selected].root_values()
    );
    Ok(())
}

fn run_evaluate(
    config: &ExperimentConfig,
    model: &Arc<PosgModel>,
    base_dir: &Path,
    out: &Path,
    timing: &mut Timing,
) -> Result<(), CliError> {
    let pattern = config.pattern()?;
    let kind = config.kind.to_solve_kind();
    let section = config
        .evaluate
        .as_ref()
        .ok_or_else(|| CliError::User("evaluate mode needs an [evaluate] section".into()))?;
    let path = if section.policy.is_absolute() {
        section.policy.clone()
    } else {
        base_dir.join(&section.policy)
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::User(format!("cannot read {}: {e}", path.display())))?;
    let policy = policy_from_toml(&text).map_err(user)?;
    if policy.pattern != pattern {
        return Err(CliError::User(format!(
            "policy was planned for pattern {} but the config requests {}",
            policy.pattern.name(),
            pattern.name()
        )));
    }
    let info = InfoStructure::new(pattern, model).map_err(user)?;
    let gap = timing
        .record("evaluate-gap", || {
            policy_gap(
                Arc::clone(model),
                pattern,
                &policy,
                kind,
                &BuildOptions::default(),
                10_000_000,
            )
        })
        .map_err(user)?;
    let mut values = Vec::new();
    for i in 0..model.num_agents {
        values.push(
            policy_value_exact(model, &policy.executor(&info), i, 10_000_000).map_err(user)?,
        );
    }

    let mut summary = toml::value::Table::new();
    summary.insert("mode".into(), "evaluate".into());
    summary.insert("instance".into(), model.name.clone().into());
    summary.insert("gap".into(), gap.into());
    summary.insert(
        "values".into(),
        toml::Value::Array(values.iter().map(|&v| v.into()).collect()),
    );
    write_summary(out, &summary)?;
    println!("evaluate: gap {gap}, values {values:?}");
    Ok(())
}

fn run_sweep(
    config: &ExperimentConfig,
    model: &Arc<PosgModel>,
    out: &Path,
    timing: &mut Timing,
) -> Result<(), CliError> {
    let pattern = config.pattern()?;
    let kind = config.kind.to_solve_kind();
    let opts = solve_options(config);
    let uniform = GeneralPolicy::uniform(model);
    let random = GeneralPolicy::random_history_dependent(model, config.seed);
    let policies: Vec<&dyn JointPolicy> = vec![&uniform, &random];

    let mut table = String::from("memory,eps_r,eps_z,gap\n");
    let mut rows = Vec::new();
    for memory in 0..=model.horizon {
        let label = format!("sweep-l-{memory}");
        let row: Result<(f64, f64, f64), CliError> = timing.record(&label, || {
            let approx = ApproxCommonModel::build(
                Arc::clone(model),
                pattern,
                CompressionScheme::new(memory),
                BeliefSource::UniformPrior,
                None,
                &BuildOptions::default(),
            )
            .map_err(user)?;
            let solution = vi_approx(&approx, kind, &opts).map_err(user)?;
            let errors = measure_model_errors(
                model,
                &approx,
                &policies,
                &GridOptions::default(),
                ErrorMode::Exact {
                    max_histories: 10_000_000,
                },
            )
            .map_err(user)?;
            let gap = policy_gap(
                Arc::clone(model),
                pattern,
                &solution.policy,
                kind,
                &BuildOptions::default(),
                10_000_000,
            )
            .map_err(user)?;
            Ok((errors.eps_r, errors.eps_z, gap))
        });
        let (eps_r, eps_z, gap) = row?;
        let _ = writeln!(table, "{memory},{eps_r},{eps_z},{gap}");
        rows.push((memory, eps_r, eps_z, gap));
    }
    std::fs::write(out.join("sweep.csv"), table).map_err(internal)?;

    let mut summary = toml::value::Table::new();
    summary.insert("mode".into(), "sweep-l".into());
    summary.insert("instance".into(), model.name.clone().into());
    summary.insert(
        "memories".into(),
        toml::Value::Array(rows.iter().map(|r| (r.0 as i64).into()).collect()),
    );
    summary.insert(
        "gaps".into(),
        toml::Value::Array(rows.iter().map(|r| r.3.into()).collect()),
    );
    write_summary(out, &summary)?;
    println!("sweep-l: {} rows written", rows.len());
    Ok(())
}

//! Experiment configuration: a strict TOML document describing the instance,
//! the sharing pattern, the compression, the solver, and mode-specific
//! parameters. Unknown keys are rejected with their line numbers.

use posg::bench::{dectiger, random_observable_posg, RewardStructure};
use posg::equilibrium::SolveKind;
use posg::fileio::model_from_toml;
use posg::info::{CompressionScheme, SharingPattern};
use posg::model::PosgModel;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Plan,
    Learn,
    Evaluate,
    SweepL,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Mode::Plan => "plan",
            Mode::Learn => "learn",
            Mode::Evaluate => "evaluate",
            Mode::SweepL => "sweep-l",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    /// Optional; when present it must match the invoked subcommand.
    pub mode: Option<Mode>,
    pub kind: KindConfig,
    pub eps_e: f64,
    pub seed: u64,
    pub instance: InstanceConfig,
    pub pattern: PatternConfig,
    pub compression: CompressionConfig,
    #[serde(default)]
    pub learn: Option<LearnSection>,
    #[serde(default)]
    pub evaluate: Option<EvaluateSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindConfig {
    ZeroSum,
    Cooperative,
    Cce,
    Ce,
}

impl KindConfig {
    pub fn to_solve_kind(self) -> SolveKind {
        match self {
            KindConfig::ZeroSum => SolveKind::NashZeroSum,
            KindConfig::Cooperative => SolveKind::NashCooperative,
            KindConfig::Cce => SolveKind::Cce,
            KindConfig::Ce => SolveKind::Ce,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "source")]
pub enum InstanceConfig {
    Dectiger {
        horizon: usize,
    },
    RandomObservable {
        horizon: usize,
        states: usize,
        action_counts: Vec<usize>,
        obs_counts: Vec<usize>,
        eta: f64,
        seed: u64,
        structure: StructureConfig,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureConfig {
    GeneralSum,
    ZeroSum,
    Cooperative,
}

impl StructureConfig {
    fn to_structure(self) -> RewardStructure {
        match self {
            StructureConfig::GeneralSum => RewardStructure::GeneralSum,
            StructureConfig::ZeroSum => RewardStructure::ZeroSum,
            StructureConfig::Cooperative => RewardStructure::Cooperative,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PatternConfig {
    pub variant: PatternVariant,
    #[serde(default)]
    pub delay: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternVariant {
    OneStepDelay,
    AsymmetricDelay,
    OneDirectional,
    UncontrolledDelay,
    Symmetric,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionConfig {
    pub memory: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct LearnSection {
    pub n0: usize,
    pub n2: usize,
    #[serde(default = "default_small")]
    pub zeta1: f64,
    #[serde(default = "default_tiny")]
    pub zeta2: f64,
    #[serde(default = "default_small")]
    pub theta1: f64,
    #[serde(default = "default_small")]
    pub theta2: f64,
    #[serde(default = "default_small")]
    pub delta1: f64,
    #[serde(default = "default_small")]
    pub phi: f64,
    #[serde(default = "default_one")]
    pub constant_c: f64,
    #[serde(default = "default_one_usize")]
    pub groups: usize,
}

fn default_small() -> f64 {
    0.1
}

fn default_tiny() -> f64 {
    0.01
}

fn default_one() -> f64 {
    1.0
}

fn default_one_usize() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateSection {
    pub policy: PathBuf,
}

/// User-facing errors carry exit code 1; internal failures exit 2.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::User(msg) => write!(f, "error: {msg}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

pub fn user<E: std::fmt::Display>(err: E) -> CliError {
    CliError::User(err.to_string())
}

pub fn internal<E: std::fmt::Display>(err: E) -> CliError {
    CliError::Internal(err.to_string())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(user)?;
        Ok(config)
    }

    pub fn pattern(&self) -> Result<SharingPattern, CliError> {
        let need_delay = || {
            self.pattern.delay.ok_or_else(|| {
                CliError::User("this pattern variant requires a `delay` field".into())
            })
        };
        Ok(match self.pattern.variant {
            PatternVariant::OneStepDelay => SharingPattern::OneStepDelay,
            PatternVariant::AsymmetricDelay => SharingPattern::AsymmetricDelay {
                delay: need_delay()?,
            },
            PatternVariant::OneDirectional => SharingPattern::OneDirectional,
            PatternVariant::UncontrolledDelay => SharingPattern::UncontrolledDelay {
                delay: need_delay()?,
            },
            PatternVariant::Symmetric => SharingPattern::Symmetric,
        })
    }

    pub fn scheme(&self) -> CompressionScheme {
        CompressionScheme::new(self.compression.memory)
    }

    pub fn build_model(&self, base_dir: &Path) -> Result<PosgModel, CliError> {
        let model = match &self.instance {
            InstanceConfig::Dectiger { horizon } => {
                if *horizon == 0 {
                    return Err(CliError::User("horizon must be positive".into()));
                }
                dectiger(*horizon)
            }
            InstanceConfig::RandomObservable {
                horizon,
                states,
                action_counts,
                obs_counts,
                eta,
                seed,
                structure,
            } => random_observable_posg(
                *seed,
                *states,
                action_counts,
                obs_counts,
                *horizon,
                *eta,
                structure.to_structure(),
            )
            .map_err(user)?,
            InstanceConfig::File { path } => {
                let resolved = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let text = std::fs::read_to_string(&resolved).map_err(|e| {
                    CliError::User(format!("cannot read {}: {e}", resolved.display()))
                })?;
                model_from_toml(&text).map_err(user)?
            }
        };
        let report = model.validate();
        if !report.is_empty() {
            return Err(CliError::User(format!("instance fails validation: {report}")));
        }
        // Semantic cross-checks between kind and instance.
        if self.kind == KindConfig::ZeroSum && model.num_agents != 2 {
            return Err(CliError::User(format!(
                "kind zero-sum requires exactly 2 agents, instance has {}",
                model.num_agents
            )));
        }
        if self.compression.memory > model.horizon {
            return Err(CliError::User(format!(
                "compression memory {} exceeds horizon {}",
                self.compression.memory, model.horizon
            )));
        }
        Ok(model)
    }
}

//! Experiment configuration files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::environment::{EnvConfig, ModelParams};
use crate::error::{Error, Result};
use crate::homog::{EvalPoint, LbarConfig};
use crate::solver::{Datum, SolverConfig, YGridConfig};
use crate::verify::Scope;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: String,
    pub environment: EnvConfig,
    pub model: ModelParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub task: Option<TaskConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), plot: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskConfig {
    Action {
        epsilon: f64,
        start: Vec<f64>,
        target: Vec<f64>,
        horizon: f64,
        #[serde(default = "default_pieces")]
        n_pieces: usize,
    },
    Mu {
        q: Vec<f64>,
        a: f64,
        b: f64,
        #[serde(default = "default_pieces")]
        n_pieces: usize,
    },
    EffectiveLagrangian {
        #[serde(default)]
        lbar: LbarConfig,
    },
    LimitSolve {
        #[serde(default)]
        lbar: LbarConfig,
        /// Precomputed table; estimated from scratch when absent.
        #[serde(default)]
        table: Option<PathBuf>,
        #[serde(default = "default_datum")]
        datum: Datum,
        /// Defaults to five space points at two times.
        #[serde(default)]
        points: Option<Vec<EvalPoint>>,
        #[serde(default)]
        ygrid: YGridConfig,
    },
    Converge {
        #[serde(default)]
        lbar: LbarConfig,
        #[serde(default)]
        table: Option<PathBuf>,
        #[serde(default = "default_datum")]
        datum: Datum,
        #[serde(default)]
        points: Option<Vec<EvalPoint>>,
        #[serde(default = "default_epsilons")]
        epsilons: Vec<f64>,
        #[serde(default = "default_seeds")]
        n_seeds: usize,
        #[serde(default)]
        ygrid: YGridConfig,
    },
    Verify {
        #[serde(default = "default_scope")]
        scope: Scope,
    },
}

fn default_pieces() -> usize {
    16
}
fn default_datum() -> Datum {
    Datum::ClippedHorizontalNorm { cap: 1.0 }
}
fn default_epsilons() -> Vec<f64> {
    vec![1.0, 0.5, 0.25, 0.125]
}
fn default_seeds() -> usize {
    20
}
fn default_scope() -> Scope {
    Scope::All
}

impl TaskConfig {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskConfig::Action { .. } => TaskKind::Action,
            TaskConfig::Mu { .. } => TaskKind::Mu,
            TaskConfig::EffectiveLagrangian { .. } => TaskKind::EffectiveLagrangian,
            TaskConfig::LimitSolve { .. } => TaskKind::LimitSolve,
            TaskConfig::Converge { .. } => TaskKind::Converge,
            TaskConfig::Verify { .. } => TaskKind::Verify,
        }
    }

    /// Parameters used when the file has no task block.
    pub fn default_for(kind: TaskKind) -> Option<Self> {
        match kind {
            TaskKind::Action | TaskKind::Mu => None,
            TaskKind::EffectiveLagrangian => Some(TaskConfig::EffectiveLagrangian { lbar: LbarConfig::default() }),
            TaskKind::LimitSolve => Some(TaskConfig::LimitSolve {
                lbar: LbarConfig::default(),
                table: None,
                datum: default_datum(),
                points: None,
                ygrid: YGridConfig::default(),
            }),
            TaskKind::Converge => Some(TaskConfig::Converge {
                lbar: LbarConfig::default(),
                table: None,
                datum: default_datum(),
                points: None,
                epsilons: default_epsilons(),
                n_seeds: default_seeds(),
                ygrid: YGridConfig::default(),
            }),
            TaskKind::Verify => Some(TaskConfig::Verify { scope: Scope::All }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Action,
    Mu,
    EffectiveLagrangian,
    LimitSolve,
    Converge,
    Verify,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Action => "action",
            TaskKind::Mu => "mu",
            TaskKind::EffectiveLagrangian => "effective-lagrangian",
            TaskKind::LimitSolve => "limit-solve",
            TaskKind::Converge => "converge",
            TaskKind::Verify => "verify",
        }
    }
}

impl ExperimentConfig {
    /// Parse JSON, reporting the path of the first offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().to_string();
            // A missing field is reported at its parent; name it in full.
            let path = match missing_field(&message) {
                Some(f) if path == "." => f.to_string(),
                Some(f) => format!("{path}.{f}"),
                None => path,
            };
            Error::Schema { path, message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_json(&text)
    }

    /// Semantic checks beyond the schema, reported with field paths.
    pub fn validate(&self) -> Result<()> {
        let schema = |path: &str, e: Error| Error::Schema { path: path.into(), message: e.to_string() };
        crate::group::GroupSpec::by_name(&self.group).map_err(|e| schema("group", e))?;
        ModelParams::new(self.model.beta).map_err(|e| schema("model.beta", e))?;
        self.solver.validate().map_err(|e| schema("solver", e))?;
        match &self.task {
            Some(TaskConfig::EffectiveLagrangian { lbar })
            | Some(TaskConfig::LimitSolve { lbar, .. })
            | Some(TaskConfig::Converge { lbar, .. }) => lbar.validate().map_err(|e| schema("task.lbar", e))?,
            _ => {}
        }
        if let Some(TaskConfig::LimitSolve { datum, .. }) | Some(TaskConfig::Converge { datum, .. }) = &self.task {
            datum.validate().map_err(|e| schema("task.datum", e))?;
        }
        Ok(())
    }

    /// Canonical JSON with every default written out.
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable config")
    }

    /// Content hash of everything that affects results; the output block
    /// is left out so moving the outputs does not change the stamp.
    pub fn hash(&self) -> String {
        crate::homog::content_hash(&(&self.group, &self.environment, &self.model, &self.solver, &self.task))
    }
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    Some(&rest[..rest.find('`')?])
}

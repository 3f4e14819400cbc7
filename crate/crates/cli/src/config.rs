//! Experiment configuration files (JSON, one experiment per file).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use urnflow::analysis::AttractorSpec;
use urnflow::mean_field::{derive_system, MeanLimitSystem};
use urnflow::models::{
    build_replicator, build_selection_mutation, cyclic_mutation_example, ReplicatorParams, SelectionMutationParams,
};
use urnflow::urn::{MoveVector, RuleModel, TransitionRule, UrnModel};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A matrix given row by row, or by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Preset(MatrixPreset),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixPreset {
    /// `1` where `j ≡ i - 1 (mod k)`.
    Hypercycle,
    Zero,
    Identity,
}

impl MatrixSpec {
    pub fn build(&self, k: usize, name: &str) -> Result<DMatrix<f64>, CliError> {
        match self {
            MatrixSpec::Preset(MatrixPreset::Hypercycle) => {
                Ok(DMatrix::from_fn(
                    k,
                    k,
                    |i, j| if j == (i + k - 1) % k { 1.0 } else { 0.0 },
                ))
            }
            MatrixSpec::Preset(MatrixPreset::Zero) => Ok(DMatrix::zeros(k, k)),
            MatrixSpec::Preset(MatrixPreset::Identity) => Ok(DMatrix::identity(k, k)),
            MatrixSpec::Rows(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(CliError::Config(format!("model.{name}: expected a {k}x{k} matrix")));
                }
                Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyclicMutation {
    pub f: f64,
    pub s: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// One linear transition rule `p_w(x) = constant + Σ coef_i x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRule {
    #[serde(rename = "move")]
    pub movement: Vec<i32>,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Replicator {
        k: usize,
        b: f64,
        d: f64,
        nu: f64,
        birth: MatrixSpec,
        death: MatrixSpec,
    },
    SelectionMutation {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
        d: f64,
        nu: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fitness: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mutation: Option<MatrixSpec>,
        /// Three-allele preset; replaces `k`, `fitness` and `mutation`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cyclic: Option<CyclicMutation>,
    },
    Custom {
        k: usize,
        max_jump: u32,
        rules: Vec<LinearRule>,
    },
}

/// A model ready to run, with its mean-limit system.
pub struct BuiltModel {
    pub model: Arc<dyn UrnModel>,
    pub system: MeanLimitSystem,
    /// Payoff matrix, for replicator models.
    pub payoff: Option<DMatrix<f64>>,
    pub replicator: Option<ReplicatorParams>,
    pub selection_mutation: Option<SelectionMutationParams>,
}

impl BuiltModel {
    pub fn dim(&self) -> usize {
        self.model.dim()
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<BuiltModel, CliError> {
        match self {
            ModelConfig::Replicator {
                k,
                b,
                d,
                nu,
                birth,
                death,
            } => {
                let params = ReplicatorParams {
                    k: *k,
                    b: *b,
                    d: *d,
                    nu: *nu,
                    birth: birth.build(*k, "birth")?,
                    death: death.build(*k, "death")?,
                };
                let (model, system, payoff) = build_replicator(params.clone()).map_err(CliError::config)?;
                Ok(BuiltModel {
                    model,
                    system,
                    payoff: Some(payoff),
                    replicator: Some(params),
                    selection_mutation: None,
                })
            }
            ModelConfig::SelectionMutation {
                k,
                d,
                nu,
                fitness,
                mutation,
                cyclic,
            } => {
                let params = match (cyclic, fitness, mutation) {
                    (Some(c), None, None) => {
                        if k.is_some_and(|k| k != 3) {
                            return Err(CliError::Config("model.cyclic: the cyclic preset has k = 3".into()));
                        }
                        cyclic_mutation_example(c.f, c.s, c.mu1, c.mu2, *nu, *d).map_err(CliError::config)?
                    }
                    (None, Some(f), Some(m)) => {
                        let k = k.ok_or_else(|| CliError::Config("model.k: required with explicit matrices".into()))?;
                        SelectionMutationParams::with_default_offspring(
                            *d,
                            *nu,
                            f.build(k, "fitness")?,
                            m.build(k, "mutation")?,
                        )
                    }
                    _ => {
                        return Err(CliError::Config(
                            "model: give either `cyclic` or both `fitness` and `mutation`".into(),
                        ))
                    }
                };
                let (model, system) = build_selection_mutation(params.clone()).map_err(CliError::config)?;
                Ok(BuiltModel {
                    model,
                    system,
                    payoff: None,
                    replicator: None,
                    selection_mutation: Some(params),
                })
            }
            ModelConfig::Custom { k, max_jump, rules } => {
                let mut built = Vec::with_capacity(rules.len());
                for (idx, r) in rules.iter().enumerate() {
                    if r.movement.len() != *k || !(r.coef.is_empty() || r.coef.len() == *k) {
                        return Err(CliError::Config(format!(
                            "model.rules[{idx}]: expected vectors of length {k}"
                        )));
                    }
                    let constant = r.constant;
                    let coef = r.coef.clone();
                    built.push(TransitionRule::new(MoveVector::new(r.movement.clone()), move |x| {
                        constant + coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
                    }));
                }
                let model: Arc<dyn UrnModel> =
                    Arc::new(RuleModel::new(*k, *max_jump, built).map_err(CliError::config)?);
                let system = derive_system(model.clone());
                Ok(BuiltModel {
                    model,
                    system,
                    payoff: None,
                    replicator: None,
                    selection_mutation: None,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttractorConfig {
    Point {
        x: Vec<f64>,
    },
    /// The interior equilibrium of a replicator model.
    Interior,
    /// Periodic orbit detected from `x0`.
    Orbit {
        x0: Vec<f64>,
        t_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub x0: Vec<f64>,
    pub t_max: f64,
    #[serde(default = "default_orbit_tol")]
    pub tol: f64,
}

fn default_orbit_tol() -> f64 {
    1e-6
}

fn default_seed() -> u64 {
    1
}

fn default_thin() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunConfig {
    Simulate {
        z0: Vec<u64>,
        #[serde(default = "default_seed")]
        seed: u64,
        max_steps: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        population_at_least: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_tau: Option<f64>,
    },
    Ode {
        x0: Vec<f64>,
        t_end: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<f64>,
        /// Also write the equilibrium analysis.
        #[serde(default)]
        analysis: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        orbit: Option<OrbitConfig>,
    },
    Ensemble {
        z0: Vec<u64>,
        replicates: usize,
        #[serde(default = "default_seed")]
        seed: u64,
        max_steps: u64,
        survival_threshold: u64,
        #[serde(default)]
        checkpoints: Vec<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attractor: Option<AttractorConfig>,
    },
    Analyze {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        permanence_weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        orbit: Option<OrbitConfig>,
    },
    Verify {
        #[serde(default)]
        targets: Vec<String>,
    },
}

impl RunConfig {
    pub fn mode(&self) -> &'static str {
        match self {
            RunConfig::Simulate { .. } => "simulate",
            RunConfig::Ode { .. } => "ode",
            RunConfig::Ensemble { .. } => "ensemble",
            RunConfig::Analyze { .. } => "analyze",
            RunConfig::Verify { .. } => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default = "default_thin")]
    pub thin: u64,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: default_formats(),
            thin: 1,
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.output.thin == 0 {
            return Err(CliError::Config("output.thin: must be at least 1".into()));
        }
        if cfg.output.formats.is_empty() {
            return Err(CliError::Config("output.formats: must not be empty".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Resolve the experiment's attractor.
pub fn resolve_attractor(cfg: &AttractorConfig, built: &BuiltModel) -> Result<AttractorSpec, CliError> {
    use urnflow::analysis::{detect_periodic_orbit, interior_equilibrium};
    match cfg {
        AttractorConfig::Point { x } => Ok(AttractorSpec::Point(x.clone())),
        AttractorConfig::Interior => {
            let a = built
                .payoff
                .as_ref()
                .ok_or_else(|| CliError::Config("run.attractor: `interior` needs a replicator model".into()))?;
            match interior_equilibrium(a).map_err(CliError::runtime)?.positive() {
                Some(x) => Ok(AttractorSpec::Point(x.to_vec())),
                None => Err(CliError::Runtime("no positive interior equilibrium".into())),
            }
        }
        AttractorConfig::Orbit { x0, t_max } => detect_periodic_orbit(&built.system, x0, *t_max, 1e-6)
            .map_err(CliError::runtime)?
            .ok_or_else(|| CliError::Runtime("no stable periodic orbit found".into())),
    }
}

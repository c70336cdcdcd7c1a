//! TOML run configuration and its translation into library objects.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::env::{EnvironmentModel, FiniteIidEnv, FiniteMarkovEnv, GaussianAr1Env};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianProblem, GaussianSensingStrategy};
use crate::genealogy::HereditaryGenealogyKernel;
use crate::model::{FiniteLandscape, GaussianLandscape, GaussianStrategy, HereditaryKernel, OffspringFamily, Strategy};
use crate::optimize::SolverOptions;
use crate::simulate::DEFAULT_CAP;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub environment: EnvSpec,
    pub landscape: LandscapeSpec,
    pub strategy: Option<StrategySpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub optimize: OptimizeSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub growth: GrowthSpec,
    #[serde(default)]
    pub genealogy: GenealogySpec,
    pub scan: Option<ScanSpec>,
    /// Directory that relative paths in the file are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    FiniteIid {
        states: Option<Vec<String>>,
        marginal: Vec<f64>,
    },
    FiniteMarkov {
        states: Option<Vec<String>>,
        transition: Option<Vec<Vec<f64>>>,
        q1: Option<f64>,
        q2: Option<f64>,
    },
    GaussianAr1 {
        mean: f64,
        variance: f64,
        #[serde(default)]
        correlation: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LandscapeSpec {
    Matrix {
        traits: Option<Vec<String>>,
        mean: Vec<Vec<f64>>,
    },
    Csv {
        path: PathBuf,
    },
    Gaussian {
        c: f64,
        sigma1_sq: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    NoSensing {
        p: Vec<f64>,
        initial: Option<Vec<f64>>,
    },
    Sensing {
        p: Vec<Vec<f64>>,
        initial: Option<Vec<f64>>,
    },
    Hereditary {
        kernel: Vec<Vec<Vec<f64>>>,
        initial: Vec<f64>,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
    GaussianSensing {
        slope: f64,
        intercept: f64,
        variance: f64,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub support_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            support_tol: d.support_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMode {
    #[default]
    NoSensing,
    Sensing,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSpec {
    pub mode: OptimizeMode,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub generations: usize,
    pub replicates: usize,
    pub roots: u64,
    pub cap: u64,
    pub family: OffspringFamily,
    /// Lineages sampled from each surviving replicate.
    pub lineages: usize,
    /// Composition-given-size test level.
    pub level: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            generations: 10,
            replicates: 100,
            roots: 1,
            cap: DEFAULT_CAP,
            family: OffspringFamily::Poisson,
            lineages: 0,
            level: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthMethodSpec {
    #[default]
    Exact,
    Ergodic,
    Hereditary,
    Enumerate,
    Jensen,
    Importance,
}

/// Fixed environment path given by state index or label.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PathSpec {
    Indices(Vec<usize>),
    Labels(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthSpec {
    pub method: GrowthMethodSpec,
    pub horizon: usize,
    pub samples: usize,
    pub path: Option<PathSpec>,
}

impl Default for GrowthSpec {
    fn default() -> Self {
        Self {
            method: GrowthMethodSpec::Exact,
            horizon: 100_000,
            samples: 100_000,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianKernelSpec {
    pub env_values: Vec<f64>,
    pub intercept: Vec<f64>,
    pub slope: Vec<f64>,
    pub theta_sq: Vec<f64>,
    pub mu0: f64,
    pub s0_sq: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenealogySpec {
    pub n: usize,
    pub path: Option<PathSpec>,
    pub samples: usize,
    /// Root counts for the simulated-lineage comparison; empty disables it.
    pub compare_roots: Vec<u64>,
    pub kernel: Option<GaussianKernelSpec>,
}

impl Default for GenealogySpec {
    fn default() -> Self {
        Self {
            n: 4,
            path: None,
            samples: 100_000,
            compare_roots: Vec::new(),
            kernel: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub parameter: String,
    pub values: Option<Vec<f64>>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub step: Option<f64>,
}

impl ScanSpec {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if let Some(v) = &self.values {
            return Ok(v.clone());
        }
        match (self.from, self.to, self.step) {
            (Some(a), Some(b), Some(h)) if h > 0.0 && b >= a => {
                let n = ((b - a) / h + 1e-9).floor() as usize;
                Ok((0..=n).map(|i| ((a + i as f64 * h) * 1e12).round() / 1e12).collect())
            }
            (None, None, None) => Ok(Vec::new()),
            _ => Err(config_err("scan needs `values` or a valid `from`/`to`/`step` triple")),
        }
    }
}

/// Landscape after resolving files and labels.
#[derive(Debug, Clone)]
pub enum Landscape {
    Finite(FiniteLandscape),
    Gaussian(GaussianLandscape),
}

impl Config {
    pub fn from_str_in(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str_in(&text, base)
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            support_tol: self.solver.support_tol,
        }
    }

    pub fn environment(&self) -> Result<EnvironmentModel> {
        build_env(&self.environment)
    }

    pub fn landscape(&self) -> Result<Landscape> {
        let env = self.environment()?;
        match &self.landscape {
            LandscapeSpec::Gaussian { c, sigma1_sq } => Ok(Landscape::Gaussian(GaussianLandscape::new(*c, *sigma1_sq)?)),
            LandscapeSpec::Matrix { traits, mean } => {
                let labels = env
                    .state_labels()
                    .ok_or_else(|| config_err("a matrix landscape needs a finite environment"))?;
                if mean.first().map_or(0, Vec::len) != labels.len() {
                    return Err(config_err(format!(
                        "landscape has {} columns, environment has {} states",
                        mean.first().map_or(0, Vec::len),
                        labels.len()
                    )));
                }
                let traits = traits
                    .clone()
                    .unwrap_or_else(|| (1..=mean.len()).map(|i| format!("t{i}")).collect());
                Ok(Landscape::Finite(FiniteLandscape::new(traits, labels.to_vec(), mean.clone())?))
            }
            LandscapeSpec::Csv { path } => {
                let full = self.base_dir.join(path);
                if !full.exists() {
                    return Err(config_err(format!("landscape file {} does not exist", full.display())));
                }
                let raw = FiniteLandscape::from_csv_path(&full)?;
                let labels = env
                    .state_labels()
                    .ok_or_else(|| config_err("a CSV landscape needs a finite environment"))?;
                align_columns(raw, labels, self.env_labels_given())
            }
        }
    }

    fn env_labels_given(&self) -> bool {
        matches!(
            &self.environment,
            EnvSpec::FiniteIid { states: Some(_), .. } | EnvSpec::FiniteMarkov { states: Some(_), .. }
        )
    }

    pub fn finite(&self) -> Result<(FiniteLandscape, EnvironmentModel)> {
        match self.landscape()? {
            Landscape::Finite(l) => Ok((l, self.environment()?)),
            Landscape::Gaussian(_) => Err(config_err("this command needs a finite landscape")),
        }
    }

    pub fn gaussian_problem(&self) -> Result<GaussianProblem> {
        let landscape = match self.landscape()? {
            Landscape::Gaussian(l) => l,
            Landscape::Finite(_) => return Err(config_err("this command needs a gaussian landscape")),
        };
        match self.environment()? {
            EnvironmentModel::GaussianAr1(env) => Ok(GaussianProblem { landscape, env }),
            _ => Err(config_err("a gaussian landscape needs a gaussian_ar1 environment")),
        }
    }

    /// Finite strategy from the `[strategy]` table.
    pub fn strategy(&self, num_traits: usize) -> Result<Strategy> {
        let spec = self
            .strategy
            .as_ref()
            .ok_or_else(|| config_err("missing [strategy] table"))?;
        let s = match spec {
            StrategySpec::NoSensing { p, initial } => {
                let mut s = Strategy::no_sensing(p.clone())?;
                if let Some(i) = initial {
                    s = Strategy {
                        initial: i.clone(),
                        ..s
                    };
                    crate::env::check_probability(&s.initial, "initial law")?;
                }
                s
            }
            StrategySpec::Sensing { p, initial } => {
                let init = initial.clone().unwrap_or_else(|| vec![1.0 / num_traits as f64; num_traits]);
                Strategy::sensing(p.clone(), init)?
            }
            StrategySpec::Hereditary { kernel, initial } => {
                Strategy::hereditary(HereditaryKernel::new(kernel.clone())?, initial.clone())?
            }
            StrategySpec::Gaussian { .. } | StrategySpec::GaussianSensing { .. } => {
                return Err(config_err("gaussian strategies need a gaussian landscape"))
            }
        };
        if s.num_traits() != num_traits {
            return Err(config_err(format!(
                "strategy has {} traits, landscape has {num_traits}",
                s.num_traits()
            )));
        }
        Ok(s)
    }

    pub fn gaussian_strategy(&self) -> Result<GaussianStrategyChoice> {
        match self.strategy.as_ref() {
            Some(StrategySpec::Gaussian { mean, variance }) => {
                Ok(GaussianStrategyChoice::NoSensing(GaussianStrategy::new(*mean, *variance)?))
            }
            Some(StrategySpec::GaussianSensing {
                slope,
                intercept,
                variance,
            }) => Ok(GaussianStrategyChoice::Sensing(GaussianSensingStrategy::new(
                *slope, *intercept, *variance,
            )?)),
            _ => Err(config_err("expected a gaussian or gaussian_sensing [strategy]")),
        }
    }

    pub fn gaussian_kernel(&self) -> Result<Option<HereditaryGenealogyKernel>> {
        self.genealogy
            .kernel
            .as_ref()
            .map(|k| {
                HereditaryGenealogyKernel::new(
                    k.env_values.clone(),
                    k.intercept.clone(),
                    k.slope.clone(),
                    k.theta_sq.clone(),
                    k.mu0,
                    k.s0_sq,
                )
            })
            .transpose()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum GaussianStrategyChoice {
    NoSensing(GaussianStrategy),
    Sensing(GaussianSensingStrategy),
}

pub(crate) fn build_env(spec: &EnvSpec) -> Result<EnvironmentModel> {
    Ok(match spec {
        EnvSpec::FiniteIid { states, marginal } => match states {
            Some(s) => FiniteIidEnv::new(s.clone(), marginal.clone())?.into(),
            None => FiniteIidEnv::with_marginal(marginal.clone())?.into(),
        },
        EnvSpec::FiniteMarkov {
            states,
            transition,
            q1,
            q2,
        } => {
            let m = match (transition, q1, q2) {
                (Some(t), None, None) => FiniteMarkovEnv::with_transition(t.clone())?,
                (None, Some(a), Some(b)) => FiniteMarkovEnv::two_state(*a, *b)?,
                (None, Some(a), None) => FiniteMarkovEnv::two_state(*a, *a)?,
                _ => return Err(config_err("finite_markov needs either `transition` or `q1` (and optionally `q2`)")),
            };
            match states {
                Some(s) => FiniteMarkovEnv::new(s.clone(), m.transition().to_vec())?.into(),
                None => m.into(),
            }
        }
        EnvSpec::GaussianAr1 {
            mean,
            variance,
            correlation,
        } => GaussianAr1Env::new(*mean, *variance, *correlation)?.into(),
    })
}

/// Reorders CSV columns to the environment's state order.
fn align_columns(raw: FiniteLandscape, labels: &[String], labels_given: bool) -> Result<Landscape> {
    if raw.envs() == labels {
        return Ok(Landscape::Finite(raw));
    }
    if raw.num_envs() != labels.len() {
        return Err(config_err(format!(
            "landscape has {} environment columns, environment has {} states",
            raw.num_envs(),
            labels.len()
        )));
    }
    let order: Option<Vec<usize>> = labels
        .iter()
        .map(|l| raw.envs().iter().position(|c| c == l))
        .collect();
    match order {
        Some(order) => {
            let mean = raw.rows().iter().map(|r| order.iter().map(|&j| r[j]).collect()).collect();
            Ok(Landscape::Finite(FiniteLandscape::new(raw.traits().to_vec(), labels.to_vec(), mean)?))
        }
        None if !labels_given => Ok(Landscape::Finite(FiniteLandscape::new(
            raw.traits().to_vec(),
            labels.to_vec(),
            raw.rows().to_vec(),
        )?)),
        None => Err(config_err("landscape columns do not match the environment state labels")),
    }
}

/// Resolves a path spec against state labels.
pub fn resolve_path(spec: &PathSpec, labels: &[String]) -> Result<Vec<usize>> {
    match spec {
        PathSpec::Indices(v) => {
            if let Some(&e) = v.iter().find(|&&e| e >= labels.len()) {
                return Err(config_err(format!("path index {e} is out of range")));
            }
            Ok(v.clone())
        }
        PathSpec::Labels(v) => v
            .iter()
            .map(|l| {
                labels
                    .iter()
                    .position(|s| s == l)
                    .ok_or_else(|| config_err(format!("unknown environment state `{l}`")))
            })
            .collect(),
    }
}

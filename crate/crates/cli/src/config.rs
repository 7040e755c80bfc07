//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use qclt_core::diagnostics::ConditionId;
use qclt_core::kernel::{
    build_kernel, lazy_random_walk_kernel, metropolis_kernel, random_walk_kernel, KernelFile, MarkovKernel,
};
use qclt_core::operator::{center, Observable};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; required.
    pub seed: u64,
    pub kernel: KernelSource,
    pub observable: ObservableSource,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

/// Exactly one of `rows`, `file` or `builder`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSource {
    #[serde(default)]
    pub rows: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub states: Option<Vec<String>>,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub builder: Option<KernelBuilder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelBuilder {
    RandomWalk {
        weights: Vec<Vec<f64>>,
        #[serde(default)]
        hold: Option<f64>,
    },
    Metropolis {
        target: Vec<f64>,
        proposal: Vec<Vec<f64>>,
    },
}

/// Exactly one of `values` or `builder`. Values are centered under `π`
/// unless `center = false`, in which case they must already be centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSource {
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub builder: Option<ObservableBuilder>,
    #[serde(default = "yes")]
    pub center: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableBuilder {
    /// `1{x = state}`.
    Indicator { state: usize },
    /// `f(x) = x`.
    StateIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_grid: Vec<usize>,
    pub count: usize,
    /// Start states for quenched ensembles; all states when omitted.
    #[serde(default)]
    pub starts: Option<Vec<usize>>,
    #[serde(default = "yes")]
    pub quenched: bool,
    #[serde(default)]
    pub annealed: bool,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
}

fn default_grid() -> Vec<f64> {
    qclt_core::simulator::DEFAULT_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub conditions: Vec<String>,
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<usize>,
    /// `n` grid of the negligibility probes.
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub start: usize,
    /// Conjugate exponent pair for COBOUNDARY/LQ_GF; `q = p/(p−1)`.
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_j_max")]
    pub k_max: usize,
}

fn default_m_grid() -> Vec<usize> {
    vec![1, 10, 100, 1000, 10_000]
}

fn default_n_grid() -> Vec<usize> {
    vec![100, 1000]
}

fn default_eps() -> Vec<f64> {
    vec![0.5]
}

fn default_count() -> usize {
    1000
}

fn default_p() -> f64 {
    2.0
}

fn default_levels() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}

fn default_j_max() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(file) = config.kernel.file.as_mut() {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(config)
    }

    /// SHA-256 over the configuration re-serialized as key-sorted JSON.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let k = &self.kernel;
        let sources = [k.rows.is_some(), k.file.is_some(), k.builder.is_some()].iter().filter(|&&b| b).count();
        if sources != 1 {
            return Err(CliError::Config("kernel needs exactly one of rows, file, builder".into()));
        }
        if let Some(file) = &k.file {
            if !file.exists() {
                return Err(CliError::Config(format!("kernel file {} does not exist", file.display())));
            }
        }
        let o = &self.observable;
        if o.values.is_some() == o.builder.is_some() {
            return Err(CliError::Config("observable needs exactly one of values, builder".into()));
        }
        if let Some(s) = &self.simulate {
            if s.n_grid.is_empty() || s.n_grid.contains(&0) {
                return Err(CliError::Config("simulate.n_grid must be nonempty and positive".into()));
            }
            if s.count == 0 {
                return Err(CliError::Config("simulate.count must be positive".into()));
            }
            if !s.quenched && !s.annealed {
                return Err(CliError::Config("simulate needs quenched or annealed".into()));
            }
            if s.starts.as_ref().is_some_and(Vec::is_empty) {
                return Err(CliError::Config("simulate.starts must be nonempty".into()));
            }
        }
        if let Some(d) = &self.diagnose {
            if d.conditions.is_empty() {
                return Err(CliError::Config("diagnose.conditions is empty".into()));
            }
            self.condition_ids()?;
            if d.m_grid.is_empty() || d.m_grid.contains(&0) {
                return Err(CliError::Config("diagnose.m_grid must be nonempty and positive".into()));
            }
            if d.n_grid.is_empty() || d.n_grid.contains(&0) || d.eps.is_empty() || d.count == 0 {
                return Err(CliError::Config("diagnose.n_grid, eps and count must be nonempty/positive".into()));
            }
            if !(d.p >= 2.0) {
                return Err(CliError::Config(format!("diagnose.p = {} must be at least 2", d.p)));
            }
        }
        Ok(())
    }

    pub fn condition_ids(&self) -> Result<Vec<ConditionId>, CliError> {
        let Some(d) = &self.diagnose else {
            return Err(CliError::Config("missing [diagnose] section".into()));
        };
        let mut ids = Vec::new();
        for c in &d.conditions {
            let id: ConditionId = c.parse().map_err(|e: qclt_core::Error| CliError::Config(e.to_string()))?;
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        if ids.is_empty() {
            return Err(CliError::Config("diagnose.conditions is empty".into()));
        }
        Ok(ids)
    }

    pub fn build_kernel(&self) -> Result<MarkovKernel, CliError> {
        let k = &self.kernel;
        let kernel = if let Some(rows) = &k.rows {
            match &k.states {
                Some(states) => MarkovKernel::with_labels(states.clone(), rows.clone()),
                None => build_kernel(rows.clone()),
            }
        } else if let Some(path) = &k.file {
            return load_kernel_file(path);
        } else {
            match k.builder.as_ref().expect("validated") {
                KernelBuilder::RandomWalk { weights, hold: None } => random_walk_kernel(weights.clone()),
                KernelBuilder::RandomWalk { weights, hold: Some(h) } => lazy_random_walk_kernel(weights.clone(), *h),
                KernelBuilder::Metropolis { target, proposal } => metropolis_kernel(target, proposal.clone()),
            }
        };
        kernel.map_err(CliError::Kernel)
    }

    pub fn build_observable(&self, kernel: &MarkovKernel) -> Result<Observable, CliError> {
        let o = &self.observable;
        let raw = match (&o.values, &o.builder) {
            (Some(v), _) => v.clone(),
            (None, Some(ObservableBuilder::Indicator { state })) => {
                if *state >= kernel.len() {
                    return Err(CliError::Config(format!("indicator state {state} out of range")));
                }
                (0..kernel.len()).map(|x| if x == *state { 1.0 } else { 0.0 }).collect()
            }
            (None, Some(ObservableBuilder::StateIndex)) => (0..kernel.len()).map(|x| x as f64).collect(),
            (None, None) => return Err(CliError::Config("observable needs values or builder".into())),
        };
        let obs = Observable::new(raw, kernel).map_err(|e| CliError::Config(e.to_string()))?;
        if obs.is_centered() {
            Ok(obs)
        } else if o.center {
            Ok(center(&obs, kernel))
        } else {
            Err(CliError::Config(format!("observable is not centered (mean {})", obs.mean_under_pi())))
        }
    }

    pub fn output_dir(&self) -> Option<&Path> {
        self.output.as_ref().map(|o| o.dir.as_path())
    }
}

pub fn load_kernel_file(path: &Path) -> Result<MarkovKernel, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: KernelFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    MarkovKernel::from_file(file).map_err(CliError::Kernel)
}

//! JSON run configuration. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{DiagnosticConfig, ExperimentConfig};
use crate::netgen::{BlockDegreeMatrix, GeneratorOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    /// Population size `N_r`.
    #[serde(default, alias = "N", skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    /// Sampling proportion `p_r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Expected observed sample size; checked against the data when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub groups: Vec<GroupConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree_laws: Option<BlockDegreeMatrix>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_mc_subsamples")]
    pub mc_subsamples: usize,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<f64>>,
    /// Distance threshold `c` for `dist2edges`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default = "default_true")]
    pub fresh_population: bool,
    #[serde(default = "default_balance")]
    pub stub_balance_tolerance: f64,
    #[serde(default)]
    pub exact: bool,
    /// Relative median bias above which a diagnostic grid point is flagged.
    #[serde(default = "default_flag")]
    pub flag_threshold: f64,
}

fn default_replicates() -> usize {
    500
}
fn default_mc_subsamples() -> usize {
    2000
}
fn default_ci_level() -> f64 {
    0.95
}
fn default_true() -> bool {
    true
}
fn default_balance() -> f64 {
    GeneratorOptions::default().stub_balance_tolerance
}
fn default_flag() -> f64 {
    0.05
}

impl Default for Config {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults parse")
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn generator_options(&self) -> GeneratorOptions {
        GeneratorOptions {
            stub_balance_tolerance: self.stub_balance_tolerance,
            ..GeneratorOptions::default()
        }
    }

    fn laws(&self) -> Result<&BlockDegreeMatrix> {
        self.degree_laws
            .as_ref()
            .ok_or_else(|| Error::Config("degree_laws is required".into()))
    }

    /// Group names and population sizes for generation.
    pub fn population(&self) -> Result<(Vec<String>, Vec<usize>)> {
        let w = self.laws()?.num_groups();
        if self.groups.len() != w {
            return Err(Error::Config(format!(
                "{} groups listed for {w}x{w} degree_laws",
                self.groups.len()
            )));
        }
        let sizes = self
            .groups
            .iter()
            .map(|g| {
                g.size
                    .ok_or_else(|| Error::Config(format!("group {}: size (N) is required", g.name)))
            })
            .collect::<Result<_>>()?;
        Ok((self.groups.iter().map(|g| g.name.clone()).collect(), sizes))
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let (group_names, sizes) = self.population()?;
        let proportions = self
            .groups
            .iter()
            .map(|g| g.p.ok_or_else(|| Error::Config(format!("group {}: p is required", g.name))))
            .collect::<Result<_>>()?;
        let cfg = ExperimentConfig {
            group_names,
            sizes,
            laws: self.laws()?.clone(),
            proportions,
            replicates: self.replicates,
            mc_subsamples: self.mc_subsamples,
            ci_level: self.ci_level,
            seed: self.seed,
            fresh_population: self.fresh_population,
            exact: self.exact,
            generator: self.generator_options(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn diagnostic(&self) -> Result<DiagnosticConfig> {
        let laws = self.laws()?;
        if laws.num_groups() != 1 || self.groups.len() != 1 {
            return Err(Error::Config("diagnose needs exactly one group and a 1x1 degree_laws".into()));
        }
        let population = self.groups[0]
            .size
            .ok_or_else(|| Error::Config("group size (N) is required".into()))?;
        let cfg = DiagnosticConfig {
            population,
            law: laws.get(0, 0).clone(),
            p_grid: self
                .p_grid
                .clone()
                .ok_or_else(|| Error::Config("p_grid is required".into()))?,
            replicates: self.replicates,
            mc_subsamples: self.mc_subsamples,
            seed: self.seed,
            threshold: self.flag_threshold,
            exact: self.exact,
            generator: self.generator_options(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

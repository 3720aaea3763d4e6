//! The run-configuration file: a single JSON document shared by all
//! subcommands. Unknown keys are rejected everywhere; command-line flags
//! override file values; every JSON report echoes the effective config.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crn_queues::ctmc;
use crn_queues::model::{ImperfectionConfig, NetworkModel, SensingConfig};
use crn_queues::sim::{CoupledSpec, SimConfig, Topology};
use crn_queues::synthesis::Thresholds;

/// Truncation overrides for the stationary solve. With both bounds given the
/// lattice is fixed; otherwise it grows adaptively until the tail tolerance
/// is met.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tolerance: Option<f64>,
}

/// Primary-load sweep: `points` equally spaced utilizations; the swept
/// arrival rate is `rho_pu * mu_pu` with everything else fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub rho_pu_start: f64,
    pub rho_pu_end: f64,
    pub points: usize,
}

/// Simulation block with defaults: warmup defaults to 20% of the measured
/// window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_topology")]
    pub topology: Topology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_departures: Option<u64>,
    #[serde(default = "default_measured")]
    pub measured_departures: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,
}

fn default_seed() -> u64 {
    42
}

fn default_topology() -> Topology {
    Topology::Decoupled
}

fn default_measured() -> u64 {
    100_000
}

fn default_replications() -> u32 {
    10
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            topology: default_topology(),
            warmup_departures: None,
            measured_departures: default_measured(),
            replications: default_replications(),
            max_events: None,
        }
    }
}

impl SimulationConfig {
    pub fn resolve(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            topology: self.topology,
            warmup_departures: self
                .warmup_departures
                .unwrap_or(self.measured_departures / 5),
            measured_departures: self.measured_departures,
            replications: self.replications,
            max_events: self.max_events,
        }
    }
}

/// Target waiting-time vector for the unique-alpha query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub w_pu: f64,
    pub w_su: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: NetworkModel<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing: Option<SensingConfig<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imperfections: Option<ImperfectionConfig<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled: Option<CoupledSpec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        config.model.validate()?;
        Ok(config)
    }

    /// Applies the optional sensing and imperfection refinements, in that
    /// order, and returns the model every command operates on.
    pub fn effective_model(&self) -> crn_queues::Result<NetworkModel<f64>> {
        let mut model = self.model;
        if let Some(sensing) = &self.sensing {
            model = model.apply_sensing(sensing)?;
        }
        if let Some(imperfections) = &self.imperfections {
            model = model.apply_imperfections(imperfections)?;
        }
        Ok(model)
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.truncation
            .and_then(|t| t.tail_tolerance)
            .unwrap_or(ctmc::DEFAULT_TAIL_TOLERANCE)
    }

    pub fn residual_tolerance(&self) -> f64 {
        self.truncation
            .and_then(|t| t.residual_tolerance)
            .unwrap_or(ctmc::DEFAULT_RESIDUAL_TOLERANCE)
    }

    /// Solves the stationary distribution under the configured truncation
    /// policy.
    pub fn solve_pmf(&self, model: &NetworkModel<f64>) -> crn_queues::Result<ctmc::JointPmf<f64>> {
        let (tail, residual) = (self.tail_tolerance(), self.residual_tolerance());
        match self.truncation {
            Some(TruncationConfig {
                i_max: Some(i_max),
                j_max: Some(j_max),
                ..
            }) => ctmc::stationary_distribution(
                model,
                &ctmc::TruncationSpec {
                    i_max,
                    j_max,
                    tail_tolerance: tail,
                },
                residual,
            ),
            _ => ctmc::solve_adaptive(model, tail, residual),
        }
    }
}

//! TOML run configuration. The `[experiment]` table is required; the other
//! sections only matter for their subcommand and fall back to defaults.

use fbd_core::analysis::SweepConfig;
use fbd_core::experiment::ExperimentConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub decompose: DecomposeSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub kernelcheck: KernelSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeSection {
    /// Split times; the experiment's snapshot times when absent.
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub eps2_list: Vec<f64>,
    pub gamma: f64,
    pub comparison_times: Option<Vec<f64>>,
    pub heat_time: f64,
    pub probe_factor: f64,
    pub holder_pairs: usize,
    pub seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::depinning_default(fbd_core::experiment::preset_depinning());
        Self {
            eps2_list: d.eps2_list,
            gamma: d.gamma,
            comparison_times: d.comparison_times,
            heat_time: d.heat_time,
            probe_factor: d.probe_factor,
            holder_pairs: d.holder_pairs,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub eps: f64,
    pub n_list: Vec<usize>,
    pub cauchy_n_list: Vec<usize>,
    /// Grid points per `eps`.
    pub points_per_eps: f64,
    /// Also convolve the gap with the experiment's initial `p`.
    pub data_gap: bool,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            eps: 0.1,
            n_list: vec![1, 4, 16, 64, 256, 1024],
            cauchy_n_list: vec![1, 10, 100, 1000],
            points_per_eps: 40.0,
            data_gap: true,
        }
    }
}

impl RunConfig {
    pub fn preset() -> Self {
        Self {
            experiment: fbd_core::experiment::preset_depinning(),
            decompose: DecomposeSection::default(),
            sweep: SweepSection::default(),
            kernelcheck: KernelSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let s = &self.sweep;
        SweepConfig {
            base: self.experiment.clone(),
            eps2_list: s.eps2_list.clone(),
            gamma: s.gamma,
            comparison_times: s.comparison_times.clone(),
            heat_time: s.heat_time,
            probe_factor: s.probe_factor,
            holder_pairs: s.holder_pairs,
            seed: s.seed,
        }
    }
}

//! JSON run configuration for the CLI.
//!
//! A config document holds independent sections; each subcommand validates
//! the sections it needs. Unknown keys are rejected and every random draw
//! requires an explicit seed (no entropy from the environment).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dynamics::{ObservableKind, ObservableSpec, SystemKind, SystemSpec};
use crate::experiments::{Method, SpectrumSampler, SweepAxis, SweepPlan};
use crate::kernel::BaseKernelSpec;
use crate::model::{KKRConfig, Realify};
use crate::{Error, Result};

/// Fixed RK4 substeps per output sample for all generated data.
pub const INTEGRATOR_SUBSTEPS: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kkr: Option<KkrSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edmd: Option<EdmdSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub io: Option<IoSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kind: SystemKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Axis-aligned initial-condition box, one `[lo, hi]` pair per state
    /// dimension.
    pub init_box: Vec<[f64; 2]>,
    /// Defaults to the first state coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableKind>,
}

impl SystemSection {
    pub fn system(&self) -> Result<SystemSpec> {
        let spec = match self.kind {
            SystemKind::Bistable => {
                let a = *self.params.get("a").ok_or_else(|| {
                    Error::InvalidConfig("bistable system requires parameter 'a'".into())
                })?;
                let b = *self.params.get("b").ok_or_else(|| {
                    Error::InvalidConfig("bistable system requires parameter 'b'".into())
                })?;
                SystemSpec::bistable(a, b)
            }
            SystemKind::VanDerPol => SystemSpec::van_der_pol(),
            SystemKind::Custom => {
                return Err(Error::InvalidConfig(
                    "custom systems cannot be configured from JSON".into(),
                ))
            }
        };
        spec.validate()?;
        if self.init_box.len() != spec.state_dim {
            return Err(Error::InvalidConfig(format!(
                "init_box has {} intervals, system needs {}",
                self.init_box.len(),
                spec.state_dim
            )));
        }
        Ok(spec)
    }

    pub fn observable(&self) -> Result<ObservableSpec> {
        let spec = match self.observable {
            None => ObservableSpec::coordinate(0),
            Some(ObservableKind::Coordinate { index }) => ObservableSpec::coordinate(index),
            Some(ObservableKind::Norm) => ObservableSpec::norm(),
            Some(ObservableKind::Custom) => {
                return Err(Error::InvalidConfig(
                    "custom observables cannot be configured from JSON".into(),
                ))
            }
        };
        Ok(spec)
    }

    pub fn init_box(&self) -> Vec<(f64, f64)> {
        self.init_box.iter().map(|b| (b[0], b[1])).collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n: usize,
    pub dt: f64,
    pub h: usize,
    pub seed: u64,
}

impl DataSection {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidConfig("data.n must be >= 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig("data.dt must be > 0".into()));
        }
        if self.h < 1 {
            return Err(Error::InvalidConfig("data.h must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<f64>,
    /// Unit-norm pullback weights (default) versus the raw printed form.
    #[serde(default = "default_true")]
    pub normalized: bool,
}

fn default_true() -> bool {
    true
}

impl KernelSection {
    pub fn base(&self) -> Result<BaseKernelSpec> {
        let base = match self.kind {
            KernelKind::Rbf => {
                let length_scale = self.length_scale.ok_or_else(|| {
                    Error::InvalidConfig("kernel.length_scale is required for rbf".into())
                })?;
                BaseKernelSpec::Rbf { length_scale }
            }
            KernelKind::Linear => BaseKernelSpec::Linear,
        };
        base.validate()?;
        Ok(base)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub sampler: SpectrumSampler,
    pub d: usize,
    pub seed: u64,
    /// Request a conjugate-closed eigenvalue set. Must agree with the
    /// sampler: `uniform_disk` does not close its draws.
    #[serde(default)]
    pub conjugate_closed: bool,
}

impl SpectrumSection {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidConfig("spectrum.d must be >= 1".into()));
        }
        if self.conjugate_closed && self.sampler == SpectrumSampler::UniformDisk {
            return Err(Error::InvalidConfig(
                "spectrum.conjugate_closed requires the conjugate_pairs or structured sampler"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KkrSection {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
    #[serde(default = "default_realify")]
    pub realify: Realify,
}

fn default_realify() -> Realify {
    Realify::RealPart
}

impl KkrSection {
    pub fn config(&self) -> Result<KKRConfig> {
        let config = KKRConfig {
            gamma: self.gamma,
            jitter: self.jitter,
            realify: self.realify,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdmdSection {
    pub rank: usize,
    pub ridge: f64,
}

impl EdmdSection {
    pub fn validate(&self) -> Result<()> {
        if self.rank < 1 {
            return Err(Error::InvalidConfig("edmd.rank must be >= 1".into()));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::InvalidConfig("edmd.ridge must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub axis: SweepAxis,
    pub grid: Vec<usize>,
    pub repetitions: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    pub master_seed: u64,
    /// Methods to run; defaults to both.
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Baseline spectrum size for the kernel-convergence study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_base: Option<usize>,
    /// Kernel-convergence runs (falls back to `repetitions` when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
}

fn default_n_test() -> usize {
    200
}

fn default_methods() -> Vec<Method> {
    vec![Method::Kkr, Method::Edmd]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("missing config section '{name}'")))
    }

    pub fn system_section(&self) -> Result<&SystemSection> {
        Self::require(&self.system, "system")
    }

    pub fn data_section(&self) -> Result<&DataSection> {
        let data = Self::require(&self.data, "data")?;
        data.validate()?;
        Ok(data)
    }

    pub fn kernel_section(&self) -> Result<&KernelSection> {
        Self::require(&self.kernel, "kernel")
    }

    pub fn spectrum_section(&self) -> Result<&SpectrumSection> {
        let s = Self::require(&self.spectrum, "spectrum")?;
        s.validate()?;
        Ok(s)
    }

    pub fn kkr_section(&self) -> Result<&KkrSection> {
        Self::require(&self.kkr, "kkr")
    }

    pub fn edmd_section(&self) -> Result<&EdmdSection> {
        let e = Self::require(&self.edmd, "edmd")?;
        e.validate()?;
        Ok(e)
    }

    pub fn experiment_section(&self) -> Result<&ExperimentSection> {
        Self::require(&self.experiment, "experiment")
    }

    /// Resolves the sections required by the `sweep` subcommand into a
    /// concrete plan.
    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        let system_section = self.system_section()?;
        let data = self.data_section()?;
        let kernel = self.kernel_section()?;
        let spectrum = self.spectrum_section()?;
        let kkr = self.kkr_section()?;
        let experiment = self.experiment_section()?;
        let needs_edmd = experiment.methods.contains(&Method::Edmd);
        let edmd = if needs_edmd {
            Some(self.edmd_section()?)
        } else {
            None
        };
        if experiment.repetitions < 2 {
            return Err(Error::InvalidConfig(
                "experiment.repetitions must be >= 2".into(),
            ));
        }
        Ok(SweepPlan {
            axis: experiment.axis,
            grid: experiment.grid.clone(),
            system: system_section.system()?,
            observable: system_section.observable()?,
            init_box: system_section.init_box(),
            dt: data.dt,
            horizon: data.h,
            n_train: data.n,
            d: spectrum.d,
            edmd_rank: edmd.map(|e| e.rank).unwrap_or(1),
            base: kernel.base()?,
            normalized: kernel.normalized,
            sampler: spectrum.sampler,
            kkr: kkr.config()?,
            edmd_ridge: edmd.map(|e| e.ridge).unwrap_or(1e-8),
            n_test: experiment.n_test,
            repetitions: experiment.repetitions,
            master_seed: experiment.master_seed,
            methods: experiment.methods.clone(),
            substeps: INTEGRATOR_SUBSTEPS,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"{
        "system": {"kind": "bistable", "params": {"a": 4.0, "b": -16.0}, "init_box": [[-1.0, 1.0]]},
        "data": {"n": 50, "dt": 0.07142857142857142, "h": 14, "seed": 7},
        "kernel": {"kind": "rbf", "length_scale": 0.05, "normalized": true},
        "spectrum": {"sampler": "uniform_disk", "d": 100, "seed": 11},
        "kkr": {"gamma": 1e-6},
        "edmd": {"rank": 10, "ridge": 1e-8},
        "experiment": {"axis": "N", "grid": [8, 16, 32], "repetitions": 4, "n_test": 20, "master_seed": 3},
        "io": {"out_dir": "/tmp/out"}
    }"#;

    #[test]
    fn full_config_parses_and_resolves() {
        let config = RunConfig::from_json(FULL).unwrap();
        let plan = config.sweep_plan().unwrap();
        assert_eq!(plan.grid, vec![8, 16, 32]);
        assert_eq!(plan.n_train, 50);
        assert_eq!(plan.d, 100);
        assert_eq!(plan.edmd_rank, 10);
        assert_eq!(plan.n_test, 20);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = FULL.replace("\"io\"", "\"oops\"");
        assert!(matches!(
            RunConfig::from_json(&bad),
            Err(Error::InvalidConfig(_))
        ));
        let bad_nested = FULL.replace("\"gamma\"", "\"gama\"");
        assert!(matches!(
            RunConfig::from_json(&bad_nested),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn seeds_are_mandatory() {
        let missing = FULL.replace("\"seed\": 7", "\"seed\": 7, \"h\": 14");
        // removing the seed key entirely must fail to parse
        let no_seed = FULL.replace(", \"seed\": 7", "");
        assert!(RunConfig::from_json(&no_seed).is_err());
        // duplicate key is also rejected by serde
        assert!(RunConfig::from_json(&missing).is_err());
    }

    #[test]
    fn conjugate_closed_requires_matching_sampler() {
        let bad = FULL.replace(
            "\"sampler\": \"uniform_disk\", \"d\": 100",
            "\"sampler\": \"uniform_disk\", \"conjugate_closed\": true, \"d\": 100",
        );
        let config = RunConfig::from_json(&bad).unwrap();
        assert!(config.spectrum_section().is_err());
    }

    #[test]
    fn custom_system_rejected_from_json() {
        let bad = FULL.replace("\"bistable\"", "\"custom\"");
        let config = RunConfig::from_json(&bad).unwrap();
        assert!(config.system_section().unwrap().system().is_err());
    }

    #[test]
    fn config_echo_round_trips() {
        let config = RunConfig::from_json(FULL).unwrap();
        let echoed = config.to_json().unwrap();
        let reparsed = RunConfig::from_json(&echoed).unwrap();
        assert_eq!(
            config.data_section().unwrap().seed,
            reparsed.data_section().unwrap().seed
        );
        assert_eq!(
            config.experiment_section().unwrap().master_seed,
            reparsed.experiment_section().unwrap().master_seed
        );
    }
}

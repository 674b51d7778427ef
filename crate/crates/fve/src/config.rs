//! Run configuration: one TOML file describes an experiment, its kernel,
//! model parameters, initial law, and ensemble settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initial::InitialLaw;
use crate::kernel::KernelSpec;
use crate::lookdown::ResamplingModel;
use crate::stats::fnv1a;
use crate::testfn::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Lookdown,
    Moran,
    Dual,
    Spde,
    Sdsm,
    Diagnose,
    Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Lookdown => "lookdown",
            Experiment::Moran => "moran",
            Experiment::Dual => "dual",
            Experiment::Spde => "spde",
            Experiment::Sdsm => "sdsm",
            Experiment::Diagnose => "diagnose",
            Experiment::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSection {
    Gaussian {
        amplitude: f64,
        bandwidth: f64,
        epsilon: f64,
    },
    Tabulated {
        xs: Vec<f64>,
        hs: Vec<f64>,
        epsilon: f64,
    },
}

impl KernelSection {
    pub fn to_spec(&self) -> KernelSpec {
        match self {
            KernelSection::Gaussian {
                amplitude,
                bandwidth,
                epsilon,
            } => KernelSpec::gaussian(*amplitude, *bandwidth, *epsilon),
            KernelSection::Tabulated { xs, hs, epsilon } => {
                KernelSpec::tabulated(xs.clone(), hs.clone(), *epsilon)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    /// Particle count: lookdown/moran levels, branching n0, or the dual start
    /// level. Unused by spde/diagnose/verify.
    #[serde(default)]
    pub m: Option<usize>,
    pub gamma: f64,
    pub horizon: f64,
    pub dt_max: f64,
    #[serde(default)]
    pub record_times: Vec<f64>,
    /// spde grid half-width L (domain [-L, L)).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_dx: Option<f64>,
    /// spde time step; defaults to half the stability bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// sdsm conditioning band half-width; absent means unconditioned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// dual evaluations per replicate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_reps: Option<usize>,
    /// verify suite name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    /// diagnose input CSV (columns time,position,mass).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<TestFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSection {
    pub n_reps: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub kernel: KernelSection,
    pub model: ModelSection,
    pub initial: InitialLaw,
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Stable fingerprint of the canonical serialized form.
    pub fn hash(&self) -> u64 {
        fnv1a(self.to_toml_string().as_bytes())
    }

    pub fn resampling_model(&self) -> ResamplingModel {
        match self.experiment {
            Experiment::Moran => ResamplingModel::Moran,
            _ => ResamplingModel::Lookdown,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        self.kernel.to_spec().validate()?;
        self.initial.validate()?;
        if m.gamma < 0.0 {
            return Err(Error::Config("model.gamma must be >= 0".into()));
        }
        if !(m.horizon >= 0.0) {
            return Err(Error::Config("model.horizon must be >= 0".into()));
        }
        if !(m.dt_max > 0.0) {
            return Err(Error::Config("model.dt_max must be > 0".into()));
        }
        if m.record_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("model.record_times must be sorted".into()));
        }
        if m
            .record_times
            .iter()
            .any(|&t| t < 0.0 || t > m.horizon)
        {
            return Err(Error::Config(
                "model.record_times must lie in [0, horizon]".into(),
            ));
        }
        match self.experiment {
            Experiment::Lookdown | Experiment::Moran => {
                if m.m.is_none_or(|v| v < 2) {
                    return Err(Error::Config("model.m must be >= 2".into()));
                }
                if m.record_times.is_empty() {
                    return Err(Error::Config("model.record_times must be nonempty".into()));
                }
            }
            Experiment::Dual => {
                if m.m.is_none_or(|v| v < 1) {
                    return Err(Error::Config("model.m must be >= 1".into()));
                }
                if m.inner_reps == Some(0) {
                    return Err(Error::Config("model.inner_reps must be >= 1".into()));
                }
            }
            Experiment::Spde => {
                let l = m
                    .grid_half_width
                    .ok_or_else(|| Error::Config("spde needs model.grid_half_width".into()))?;
                let dx = m
                    .grid_dx
                    .ok_or_else(|| Error::Config("spde needs model.grid_dx".into()))?;
                if !(l > 0.0 && dx > 0.0 && dx < l) {
                    return Err(Error::Config("need 0 < grid_dx < grid_half_width".into()));
                }
                if m.record_times.is_empty() {
                    return Err(Error::Config("model.record_times must be nonempty".into()));
                }
            }
            Experiment::Sdsm => {
                if m.m.is_none_or(|v| v < 2) {
                    return Err(Error::Config("model.m (n0) must be >= 2".into()));
                }
                if m.record_times.is_empty() {
                    return Err(Error::Config("model.record_times must be nonempty".into()));
                }
                if let Some(d) = m.delta {
                    if !(d > 0.0) {
                        return Err(Error::Config("model.delta must be > 0".into()));
                    }
                }
            }
            Experiment::Diagnose => {
                if m.input.is_none() {
                    return Err(Error::Config("diagnose needs model.input".into()));
                }
            }
            Experiment::Verify => {}
        }
        if self.ensemble.n_reps == 0 && self.experiment != Experiment::Verify
            && self.experiment != Experiment::Diagnose
        {
            return Err(Error::Config("ensemble.n_reps must be >= 1".into()));
        }
        Ok(())
    }
}

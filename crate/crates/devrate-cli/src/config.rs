//! Serializable run descriptions, one per subcommand.
//!
//! Every run is driven by a single JSON config file; command-line flags only
//! choose the output directory, override the seed and set verbosity. The
//! structs here mirror the library's own serializable types (`ModelSpec`,
//! `KernelSpec`, `ScheduleSpec`, `Variant`, `QuadSettings`) and add the few
//! fields that describe what to evaluate. Unknown fields are rejected so
//! typos fail loudly instead of silently running a default.

use std::fs;
use std::path::Path;

use devrate::kernels::{from_spec, KernelSpec};
use devrate::models::{build_model, ModelSpec};
use devrate::ratefn::{CumulantContext, QuadSettings, Variant};
use devrate::schedules::ScheduleSpec;
use devrate::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Reads and parses a JSON config file; all failures are configuration
/// errors (exit code 1).
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
}

/// Model, kernel, evaluation point and variant: everything needed to build a
/// [`CumulantContext`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextConfig {
    pub model: ModelSpec,
    pub kernel: KernelSpec,
    pub x: Vec<f64>,
    pub variant: Variant,
    #[serde(default)]
    pub quad: QuadSettings,
}

impl ContextConfig {
    pub fn build(&self) -> Result<CumulantContext> {
        CumulantContext::new(
            build_model(&self.model)?,
            from_spec(&self.kernel)?,
            self.x.clone(),
            self.variant,
            self.quad.clone(),
        )
    }
}

/// A one-dimensional family of regression targets `s = r(x) + offset · direction`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub direction: Vec<f64>,
    pub offsets: Vec<f64>,
}

/// `rate`: the regression rate `J` along a slice through `r(x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub context: ContextConfig,
    pub slice: SliceConfig,
}

/// `mdp`: the moderate-deviation quadratic rate `G` on explicit targets.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpConfig {
    pub context: ContextConfig,
    pub targets: Vec<Vec<f64>>,
}

/// One argument of the finite-`n` cumulant.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UvPoint {
    pub u: Vec<f64>,
    pub v: f64,
}

/// `lambda`: the finite-`n` cumulant against its limit across sample sizes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaConfig {
    pub context: ContextConfig,
    pub schedule: ScheduleSpec,
    pub ns: Vec<u64>,
    pub points: Vec<UvPoint>,
}

/// `verify-kernel`: moment checks for a claimed kernel order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyKernelConfig {
    pub kernel: KernelSpec,
    pub order: u32,
    #[serde(default = "default_moment_tol")]
    pub tol: f64,
}

fn default_moment_tol() -> f64 {
    1e-9
}

/// Candidate targets for the zero-target condition: either an explicit list
/// or a tensor grid centered at `r(x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Explicit { targets: Vec<Vec<f64>> },
    Span { radius: f64, per_axis: usize },
}

impl Default for GridConfig {
    fn default() -> GridConfig {
        GridConfig::Span {
            radius: 2.0,
            per_axis: 9,
        }
    }
}

/// `condition-c`: grid refutation check for the zero-target condition.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub context: ContextConfig,
    #[serde(default)]
    pub grid: GridConfig,
}

/// `bias`: smoothing bias along a bandwidth schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasConfig {
    pub model: ModelSpec,
    pub kernel: KernelSpec,
    pub schedule: ScheduleSpec,
    pub x: Vec<f64>,
    pub ns: Vec<u64>,
}

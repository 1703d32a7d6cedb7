//! JSON configuration schema. Unknown keys are rejected everywhere so typos
//! surface as config errors instead of silently picking defaults.

use blue_design::basis::{Interval, RegressionBasis};
use blue_design::design::Design;
use blue_design::kernel::TriangularKernel;
use blue_design::search::PsoConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    Polynomial { powers: Vec<u32> },
    Trig { frequencies: Vec<u32> },
    AffineShift { base: Box<BasisSpec>, offset: f64 },
}

impl BasisSpec {
    pub fn build(&self) -> Result<RegressionBasis<f64>, CliError> {
        match self {
            BasisSpec::Polynomial { powers } => {
                RegressionBasis::polynomial(powers).map_err(CliError::numeric)
            }
            BasisSpec::Trig { frequencies } => {
                RegressionBasis::trig(frequencies).map_err(CliError::numeric)
            }
            BasisSpec::AffineShift { base, offset } => {
                Ok(RegressionBasis::affine_shift(base.build()?, *offset))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Brownian,
    Exponential { lambda: f64 },
}

impl KernelSpec {
    pub fn build(&self) -> Result<TriangularKernel<f64>, CliError> {
        match self {
            KernelSpec::Brownian => Ok(TriangularKernel::brownian()),
            KernelSpec::Exponential { lambda } => {
                TriangularKernel::exponential(*lambda).map_err(CliError::numeric)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub basis: BasisSpec,
    /// [a, b]
    pub interval: [f64; 2],
}

impl ModelSpec {
    pub fn interval(&self) -> Result<Interval<f64>, CliError> {
        Interval::new(self.interval[0], self.interval[1]).map_err(CliError::config)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    Uniform,
    Explicit { points: Vec<f64> },
    Optimize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveSpec {
    MseStar,
    Wlse,
}

impl ObjectiveSpec {
    pub fn to_core(self) -> blue_design::search::DesignObjective {
        match self {
            ObjectiveSpec::MseStar => blue_design::search::DesignObjective::MseStar,
            ObjectiveSpec::Wlse => blue_design::search::DesignObjective::WlseTrace,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsoSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swarm: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cognitive: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub social: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
}

impl PsoSpec {
    pub fn build(&self) -> PsoConfig {
        let mut cfg = PsoConfig::default();
        if let Some(v) = self.swarm {
            cfg.swarm_size = v;
        }
        if let Some(v) = self.iters {
            cfg.iterations = v;
        }
        if let Some(v) = self.inertia {
            cfg.inertia = v;
        }
        if let Some(v) = self.cognitive {
            cfg.cognitive = v;
        }
        if let Some(v) = self.social {
            cfg.social = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        cfg
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
    #[default]
    Table,
}

/// Top-level run configuration shared by the estimation commands.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_design")]
    pub design: DesignSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pso: Option<PsoSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputFormat>,
}

fn default_kernel() -> KernelSpec {
    KernelSpec::Brownian
}

fn default_design() -> DesignSpec {
    DesignSpec::Uniform
}

impl RunConfig {
    pub fn n(&self) -> usize {
        self.n.unwrap_or(5)
    }

    /// The concrete design for the uniform and explicit variants; `Optimize`
    /// must go through the search command.
    pub fn fixed_design(&self, interval: &Interval<f64>) -> Result<Design<f64>, CliError> {
        match &self.design {
            DesignSpec::Uniform => {
                Design::equidistant(interval, self.n()).map_err(CliError::config)
            }
            DesignSpec::Explicit { points } => {
                let d = Design::new(points.clone()).map_err(CliError::config)?;
                d.check_spans(interval).map_err(CliError::config)?;
                Ok(d)
            }
            DesignSpec::Optimize => Err(CliError::Config(
                "this command needs a concrete design; use the design command for optimization"
                    .into(),
            )),
        }
    }
}

/// Monte Carlo plan configuration for the simulate command.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatePlanConfig {
    pub model: ModelSpec,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_design")]
    pub design: DesignSpec,
    pub theta: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_replicates() -> usize {
    100_000
}

/// Parses JSON with field-path diagnostics on failure.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Config(format!(
            "{what}: field `{}`: {}",
            e.path(),
            e.inner()
        ))
    })
}

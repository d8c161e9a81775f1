//! The JSON run configuration shared by every subcommand.

use std::path::Path;

use kolmogorov::bench::BenchConfig;
use kolmogorov::density::DEFAULT_KNN;
use kolmogorov::dynamics::{EvolutionConfig, SourceTerm, VelocityField};
use kolmogorov::gradient::DEFAULT_TENSOR_CAP;
use kolmogorov::pipeline::{DensityConfig, OperatorConfig, PipelineConfig};
use kolmogorov::sampling::Distribution;
use kolmogorov::spectra::SpectraConfig;
use kolmogorov::tuning::TuningConfig;
use kolmogorov::PointCloud;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub tuning: TuningConfig,
    pub density: DensityConfig,
    pub operator: OperatorSection,
    pub spectra: SpectraSection,
    pub solver: SolverSection,
    pub gradient: GradientSection,
    pub dynamics: DynamicsSection,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSection::default(),
            tuning: TuningConfig::default(),
            density: DensityConfig {
                knn: DEFAULT_KNN,
                eps: None,
                dim: None,
            },
            operator: OperatorSection::default(),
            spectra: SpectraSection::default(),
            solver: SolverSection::default(),
            gradient: GradientSection::default(),
            dynamics: DynamicsSection::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Whether the samples file starts with a header row; detected when absent.
    pub header: Option<bool>,
    /// Distribution drawn from when no samples file is given.
    pub distribution: Distribution,
    pub n: usize,
    /// Number of k-d trees; `⌈5 ln n⌉` when absent.
    pub tree_count: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            header: None,
            distribution: Distribution::standard_gaussian(2),
            n: 10_000,
            tree_count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorSection {
    pub c: f64,
    pub beta: f64,
    pub eps: Option<f64>,
    /// Write the normalized kernel as Matrix Market and the diagonals as CSV.
    pub export_matrix: bool,
}

impl Default for OperatorSection {
    fn default() -> Self {
        let d = OperatorConfig::default();
        Self {
            c: d.c,
            beta: d.beta,
            eps: d.eps,
            export_matrix: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectraSection {
    pub ell: Option<usize>,
    pub rtol: f64,
    pub matvecs_per_pair: usize,
    pub basis_size: Option<usize>,
}

impl Default for SpectraSection {
    fn default() -> Self {
        let d = SpectraConfig::default();
        Self {
            ell: d.ell,
            rtol: d.rtol,
            matvecs_per_pair: d.matvecs_per_pair,
            basis_size: d.basis_size,
        }
    }
}

/// A scalar function of position evaluated at the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField {
    /// `x_axis` (zero-based).
    Coordinate { axis: usize },
    /// `x·r`.
    Linear { r: Vec<f64> },
    /// `x·r` with `x` centered on the sample mean.
    CenteredLinear { r: Vec<f64> },
}

impl ScalarField {
    pub fn evaluate(&self, cloud: &PointCloud) -> Result<Vec<f64>, CliError> {
        let m = cloud.dim();
        let dot = |r: &[f64], shift: &[f64]| -> Result<Vec<f64>, CliError> {
            if r.len() != m {
                return Err(CliError::Validation(format!(
                    "field direction has {} entries but the samples have {m} columns",
                    r.len()
                )));
            }
            Ok(cloud
                .points()
                .map(|p| p.iter().zip(shift).zip(r).map(|((x, s), r)| (x - s) * r).sum())
                .collect())
        };
        match self {
            ScalarField::Coordinate { axis } => {
                if *axis >= m {
                    return Err(CliError::Validation(format!("axis {axis} out of range for {m} columns")));
                }
                Ok(cloud.coordinate(*axis))
            }
            ScalarField::Linear { r } => dot(r, &vec![0.0; m]),
            ScalarField::CenteredLinear { r } => dot(r, &cloud.mean()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Right-hand side `g` of `L f = g`.
    pub g: ScalarField,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            g: ScalarField::Coordinate { axis: 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradientTarget {
    /// The solution `f` of `L f = g` with `g` from the solver section.
    Solution,
    Coordinate { axis: usize },
    Linear { r: Vec<f64> },
    CenteredLinear { r: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientSection {
    pub target: GradientTarget,
    pub tensor_cap: usize,
}

impl Default for GradientSection {
    fn default() -> Self {
        Self {
            target: GradientTarget::Solution,
            tensor_cap: DEFAULT_TENSOR_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub velocity: VelocityField,
    pub sigma: Option<Vec<f64>>,
    pub source: SourceTerm,
    pub dt: f64,
    pub steps: usize,
    pub t0: f64,
    pub retune_every: usize,
    pub min_samples: usize,
    /// Write a snapshot CSV every this many steps; the last state is always written.
    pub snapshot_every: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        let d = EvolutionConfig::default();
        Self {
            velocity: d.velocity,
            sigma: d.sigma,
            source: d.source,
            dt: d.dt,
            steps: d.steps,
            t0: d.t0,
            retune_every: d.retune_every,
            min_samples: d.min_samples,
            snapshot_every: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            tree_count: self.data.tree_count,
            delta_tol: self.tuning.delta_tol,
            tuning: self.tuning,
            density: self.density.clone(),
            operator: OperatorConfig {
                c: self.operator.c,
                beta: self.operator.beta,
                eps: self.operator.eps,
            },
            spectra: SpectraConfig {
                ell: self.spectra.ell,
                rtol: self.spectra.rtol,
                matvecs_per_pair: self.spectra.matvecs_per_pair,
                basis_size: self.spectra.basis_size,
                seed: self.seed,
            },
        }
    }

    pub fn evolution(&self) -> EvolutionConfig {
        let d = &self.dynamics;
        EvolutionConfig {
            velocity: d.velocity.clone(),
            sigma: d.sigma.clone(),
            source: d.source.clone(),
            dt: d.dt,
            steps: d.steps,
            t0: d.t0,
            retune_every: d.retune_every,
            min_samples: d.min_samples,
            tensor_cap: self.gradient.tensor_cap,
            seed: self.seed,
            pipeline: self.pipeline(),
        }
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            seed: self.seed,
            ..self.bench.clone()
        }
    }
}

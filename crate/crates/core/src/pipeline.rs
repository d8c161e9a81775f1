//! End-to-end construction: bandwidths, density tuning, density, operator
//! tuning, operator, eigenbasis.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::density::{bandwidth_function, estimate_density, DensityEstimate, DEFAULT_KNN};
use crate::error::{Error, Result};
use crate::kernelmat::DEFAULT_DELTA_TOL;
use crate::neighbors::TreeSequence;
use crate::operator::{assemble_operator, operator_bandwidths, KolmogorovOperator};
use crate::spectra::{leading_eigs, EigenBasis, SpectraConfig};
use crate::tuning::{tune_bandwidth, TuningConfig, TuningResult};

/// `⌈5 ln n⌉`, clamped to a valid tree count.
pub fn default_tree_count(n: usize) -> usize {
    let t = (5.0 * (n.max(2) as f64).ln()).ceil() as usize;
    t.clamp(1, n.saturating_sub(1).max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub knn: usize,
    /// Fixed `ε` for the density kernel; tuned when absent.
    pub eps: Option<f64>,
    /// Manifold dimension; the rounded tuning estimate when absent.
    pub dim: Option<usize>,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            knn: DEFAULT_KNN,
            eps: None,
            dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorConfig {
    pub c: f64,
    pub beta: f64,
    /// Fixed operator `ε`; tuned when absent.
    pub eps: Option<f64>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            beta: -0.25,
            eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// `t`; `⌈5 ln n⌉` when absent.
    pub tree_count: Option<usize>,
    pub delta_tol: f64,
    pub tuning: TuningConfig,
    pub density: DensityConfig,
    pub operator: OperatorConfig,
    pub spectra: SpectraConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tree_count: None,
            delta_tol: DEFAULT_DELTA_TOL,
            tuning: TuningConfig::default(),
            density: DensityConfig::default(),
            operator: OperatorConfig::default(),
            spectra: SpectraConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DensityStage {
    pub seq: TreeSequence,
    pub tuning: Option<TuningResult>,
    pub density: DensityEstimate,
}

#[derive(Debug, Clone)]
pub struct OperatorStage {
    pub tuning: Option<TuningResult>,
    pub op: KolmogorovOperator,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub density: DensityStage,
    pub operator: OperatorStage,
    pub basis: EigenBasis,
}

pub fn build_tree_sequence(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<TreeSequence> {
    match cfg.tree_count {
        Some(t) => TreeSequence::build(cloud, t),
        None => Ok(TreeSequence::build_clamped(cloud, default_tree_count(cloud.len()))),
    }
}

pub fn run_density(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<DensityStage> {
    if cloud.len() < 2 {
        return Err(Error::DegenerateInput("the pipeline needs at least two samples".into()));
    }
    let seq = build_tree_sequence(cloud, cfg)?;
    let knn = cfg.density.knn.min(cloud.len() - 1);
    let b = bandwidth_function(cloud, &seq, knn)?;
    let tuning = match cfg.density.eps {
        Some(_) => None,
        None => Some(tune_bandwidth(cloud, &seq, &b, &TuningConfig {
            delta_tol: cfg.delta_tol,
            ..cfg.tuning
        })?),
    };
    let eps = cfg.density.eps.or(tuning.as_ref().map(|t| t.eps)).expect("either fixed or tuned");
    let dim = match (cfg.density.dim, &tuning) {
        (Some(d), _) => d,
        (None, Some(t)) => t.rounded_dim(),
        (None, None) => {
            return Err(Error::Parameter(
                "a fixed density ε needs an explicit manifold dimension".into(),
            ))
        }
    };
    let density = estimate_density(cloud, &seq, &b, eps, dim, cfg.delta_tol, knn)?;
    Ok(DensityStage { seq, tuning, density })
}

pub fn run_operator(cloud: &PointCloud, stage: &DensityStage, cfg: &PipelineConfig) -> Result<OperatorStage> {
    let oc = &cfg.operator;
    let tuning = match oc.eps {
        Some(_) => None,
        None => {
            let rho = operator_bandwidths(&stage.density.psi, oc.beta)?;
            Some(tune_bandwidth(cloud, &stage.seq, &rho, &TuningConfig {
                delta_tol: cfg.delta_tol,
                ..cfg.tuning
            })?)
        }
    };
    let eps = oc.eps.or(tuning.as_ref().map(|t| t.eps)).expect("either fixed or tuned");
    let op = assemble_operator(cloud, &stage.seq, &stage.density, eps, oc.c, oc.beta, cfg.delta_tol)?;
    Ok(OperatorStage { tuning, op })
}

pub fn run_pipeline(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<Pipeline> {
    let density = run_density(cloud, cfg)?;
    let operator = run_operator(cloud, &density, cfg)?;
    let basis = leading_eigs(&operator.op, &cfg.spectra)?;
    Ok(Pipeline {
        density,
        operator,
        basis,
    })
}

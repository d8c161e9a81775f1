//! Particle evolution for `∂ₜμ + ∇·(uμ) − D_σ μ = μ g′`.
//!
//! Each step solves `ℒ_{ψ,1} f = g′ − ḡ` on the current samples, moves them
//! with the effective drift `u′ = u − ∇f` plus Brownian noise, and advances the
//! normalization `M ← M exp(ḡ Δt)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::gradient::{build_triple_tensor, spectral_gradient, DEFAULT_TENSOR_CAP};
use crate::pipeline::{run_density, run_operator, PipelineConfig};
use crate::solver::solve_kolmogorov;
use crate::spectra::leading_eigs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityField {
    Zero,
    Constant { v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceTerm {
    Zero,
    /// `(x − x̄)·r` with `x̄` the current sample mean.
    Linear { r: Vec<f64> },
    /// `A sin(2π ν t) exp(−‖x − center‖²/w)`.
    Well {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
        frequency: f64,
    },
}

impl SourceTerm {
    pub fn well() -> Self {
        SourceTerm::Well {
            amplitude: 35.0,
            center: vec![1.0, 0.0],
            width: 20.0,
            frequency: 1.0,
        }
    }

    /// `g′` at every sample at time `t`.
    pub fn evaluate(&self, cloud: &PointCloud, t: f64) -> Result<Vec<f64>> {
        let m = cloud.dim();
        let check = |v: &[f64], what: &str| {
            if v.len() == m {
                Ok(())
            } else {
                Err(Error::Structural(format!("{what} has {} entries for dimension {m}", v.len())))
            }
        };
        Ok(match self {
            SourceTerm::Zero => vec![0.0; cloud.len()],
            SourceTerm::Linear { r } => {
                check(r, "source direction")?;
                let mean = cloud.mean();
                cloud
                    .points()
                    .map(|p| p.iter().zip(&mean).zip(r).map(|((x, m), r)| (x - m) * r).sum())
                    .collect()
            }
            SourceTerm::Well {
                amplitude,
                center,
                width,
                frequency,
            } => {
                check(center, "source center")?;
                let a = amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin();
                cloud
                    .points()
                    .map(|p| a * (-crate::cloud::dist2(p, center) / width).exp())
                    .collect()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub velocity: VelocityField,
    /// Row-major `m × m` diffusion matrix; identity when absent.
    pub sigma: Option<Vec<f64>>,
    pub source: SourceTerm,
    pub dt: f64,
    pub steps: usize,
    pub t0: f64,
    /// Re-tune both bandwidths every this many steps.
    pub retune_every: usize,
    /// Smallest cloud on which the pipeline is run.
    pub min_samples: usize,
    pub tensor_cap: usize,
    pub seed: u64,
    /// `operator.c` is forced to 1.
    pub pipeline: PipelineConfig,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            velocity: VelocityField::Zero,
            sigma: None,
            source: SourceTerm::Zero,
            dt: 0.01,
            steps: 100,
            t0: 0.0,
            retune_every: 1,
            min_samples: 50,
            tensor_cap: DEFAULT_TENSOR_CAP,
            seed: 0,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl EvolutionConfig {
    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Parameter(format!("Δt = {} must be positive", self.dt)));
        }
        if !self.t0.is_finite() {
            return Err(Error::Parameter("start time must be finite".into()));
        }
        if self.retune_every == 0 {
            return Err(Error::Parameter("retune_every must be at least 1".into()));
        }
        if let Some(s) = &self.sigma {
            if s.len() != dim * dim || s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "σ must be a finite {dim}×{dim} matrix ({} entries given)",
                    s.len()
                )));
            }
        }
        if let VelocityField::Constant { v } = &self.velocity {
            if v.len() != dim {
                return Err(Error::Structural(format!("velocity has {} entries for dimension {dim}", v.len())));
            }
        }
        Ok(())
    }

    fn velocity_into(&self, out: &mut [f64]) {
        match &self.velocity {
            VelocityField::Zero => out.fill(0.0),
            VelocityField::Constant { v } => out.copy_from_slice(v),
        }
    }
}

/// Bandwidths and dimension carried between steps when not re-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TunedParams {
    pub eps_density: f64,
    pub dim: usize,
    pub eps_operator: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub cloud: PointCloud,
    pub time: f64,
    pub mass: f64,
    pub step: usize,
    pub tuned: Option<TunedParams>,
}

impl EvolutionState {
    pub fn new(cloud: PointCloud, time: f64) -> Self {
        Self {
            cloud,
            time,
            mass: 1.0,
            step: 0,
            tuned: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EffectiveVelocity {
    /// Row-major `n × m`.
    pub u_prime: Vec<f64>,
    /// Row-major `n × m`; zero when the solve was skipped.
    pub grad_f: Vec<f64>,
    pub f: Vec<f64>,
    /// Centered source `g′ − ḡ`.
    pub g: Vec<f64>,
    pub g_bar: f64,
    pub tuned: Option<TunedParams>,
}

/// `u′ = u − ∇f` with `ℒ_{ψ,1} f = g′ − ḡ` solved on the current samples.
pub fn effective_velocity(state: &EvolutionState, cfg: &EvolutionConfig) -> Result<EffectiveVelocity> {
    let cloud = &state.cloud;
    let (n, m) = (cloud.len(), cloud.dim());
    cfg.validate(m)?;
    let g_prime = cfg.source.evaluate(cloud, state.time)?;
    let g_bar = g_prime.iter().sum::<f64>() / n as f64;
    let g: Vec<f64> = g_prime.iter().map(|v| v - g_bar).collect();

    let mut u = vec![0.0; n * m];
    u.par_chunks_mut(m).for_each(|out| cfg.velocity_into(out));

    if g_prime.iter().all(|&v| v == 0.0) {
        return Ok(EffectiveVelocity {
            u_prime: u,
            grad_f: vec![0.0; n * m],
            f: vec![0.0; n],
            g,
            g_bar,
            tuned: state.tuned,
        });
    }
    if n < cfg.min_samples.max(3) {
        return Err(Error::DegenerateInput(format!(
            "{n} samples are too few for the operator (minimum {})",
            cfg.min_samples.max(3)
        )));
    }

    let mut pc = cfg.pipeline.clone();
    pc.operator.c = 1.0;
    let reuse = state.tuned.filter(|_| !state.step.is_multiple_of(cfg.retune_every));
    if let Some(t) = reuse {
        pc.density.eps = Some(t.eps_density);
        pc.density.dim = Some(t.dim);
        pc.operator.eps = Some(t.eps_operator);
    }
    let dens = run_density(cloud, &pc)?;
    let opst = run_operator(cloud, &dens, &pc)?;
    let basis = leading_eigs(&opst.op, &pc.spectra)?;
    let sol = solve_kolmogorov(&basis, &g)?;
    let tensor = build_triple_tensor(&basis, cfg.tensor_cap)?;
    let grad = spectral_gradient(&basis, &tensor, &sol.full_coeffs(), cloud)?;
    let u_prime: Vec<f64> = u.iter().zip(&grad.grads).map(|(a, b)| a - b).collect();
    Ok(EffectiveVelocity {
        u_prime,
        grad_f: grad.grads,
        f: sol.f,
        g,
        g_bar,
        tuned: Some(TunedParams {
            eps_density: dens.density.eps,
            dim: dens.density.dim,
            eps_operator: opst.op.eps,
        }),
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the noise stream for sample `i` at step `step`.
pub fn sample_stream_seed(seed: u64, step: usize, i: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ step as u64) ^ i as u64)
}

/// `x ← x + Δt u′ + √Δt σ W`, `M ← M exp(ḡ Δt)`, `t ← t + Δt`.
pub fn step_euler_maruyama(
    state: &EvolutionState,
    cfg: &EvolutionConfig,
    vel: &EffectiveVelocity,
) -> Result<EvolutionState> {
    let m = state.cloud.dim();
    cfg.validate(m)?;
    crate::error::check_len(state.cloud.len() * m, vel.u_prime.len())?;
    let sqrt_dt = cfg.dt.sqrt();
    let mut coords = state.cloud.coords().to_vec();
    coords.par_chunks_mut(m).enumerate().for_each(|(i, x)| {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_stream_seed(cfg.seed, state.step, i));
        let w: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        for a in 0..m {
            let noise = match &cfg.sigma {
                None => w[a],
                Some(s) => (0..m).map(|b| s[a * m + b] * w[b]).sum(),
            };
            x[a] += cfg.dt * vel.u_prime[i * m + a] + sqrt_dt * noise;
        }
    });
    Ok(EvolutionState {
        cloud: PointCloud::new(coords, m)?,
        time: state.time + cfg.dt,
        mass: state.mass * (vel.g_bar * cfg.dt).exp(),
        step: state.step + 1,
        tuned: vel.tuned,
    })
}

/// One state of a trajectory. `f` and `u_prime` are the fields used to leave
/// this state and are absent for the final one.
pub struct Snapshot<'a> {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub cloud: &'a PointCloud,
    pub f: Option<&'a [f64]>,
    pub u_prime: Option<&'a [f64]>,
}

/// Alternates [`effective_velocity`] and [`step_euler_maruyama`] for
/// `cfg.steps` steps, reporting each state to `observe`.
pub fn run_evolution(
    cfg: &EvolutionConfig,
    initial: PointCloud,
    mut observe: impl FnMut(&Snapshot<'_>) -> Result<()>,
) -> Result<EvolutionState> {
    cfg.validate(initial.dim())?;
    let mut state = EvolutionState::new(initial, cfg.t0);
    for _ in 0..cfg.steps {
        let wrap = |e: Error, s: &EvolutionState| Error::Evolution {
            step: s.step,
            time: s.time,
            source: Box::new(e),
        };
        let vel = effective_velocity(&state, cfg).map_err(|e| wrap(e, &state))?;
        observe(&Snapshot {
            step: state.step,
            time: state.time,
            mass: state.mass,
            cloud: &state.cloud,
            f: Some(&vel.f),
            u_prime: Some(&vel.u_prime),
        })?;
        state = step_euler_maruyama(&state, cfg, &vel).map_err(|e| wrap(e, &state))?;
    }
    observe(&Snapshot {
        step: state.step,
        time: state.time,
        mass: state.mass,
        cloud: &state.cloud,
        f: None,
        u_prime: None,
    })?;
    Ok(state)
}

//! Seeded sample generators for the validation distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    /// Normal with diagonal covariance `diag_cov` (variances, not deviations).
    Gaussian { mean: Vec<f64>, diag_cov: Vec<f64> },
    /// Uniform on the unit sphere in `ℝ^dim`.
    SphereUniform { dim: usize },
    /// Density proportional to `exp(κ u·x)` on the unit sphere, `u` normalized internally.
    VonMisesFisher { kappa: f64, mu: Vec<f64> },
}

impl Distribution {
    pub fn standard_gaussian(dim: usize) -> Self {
        Distribution::Gaussian {
            mean: vec![0.0; dim],
            diag_cov: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Distribution::Gaussian { mean, .. } => mean.len(),
            Distribution::SphereUniform { dim } => *dim,
            Distribution::VonMisesFisher { mu, .. } => mu.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Distribution::Gaussian { mean, diag_cov } => {
                if mean.is_empty() || mean.len() != diag_cov.len() {
                    return Err(Error::Parameter(format!(
                        "gaussian mean has {} entries and covariance {}",
                        mean.len(),
                        diag_cov.len()
                    )));
                }
                if mean.iter().any(|v| !v.is_finite()) || diag_cov.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::Parameter("gaussian needs finite mean and nonnegative variances".into()));
                }
            }
            Distribution::SphereUniform { dim } => {
                if *dim < 2 {
                    return Err(Error::Parameter("sphere needs ambient dimension at least 2".into()));
                }
            }
            Distribution::VonMisesFisher { kappa, mu } => {
                let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
                if mu.len() < 2 || !(norm.is_finite() && norm > 0.0) {
                    return Err(Error::Parameter("von Mises–Fisher needs a nonzero finite mean direction".into()));
                }
                if !(kappa.is_finite() && *kappa > 0.0) {
                    return Err(Error::Parameter(format!("κ = {kappa} must be positive")));
                }
            }
        }
        Ok(())
    }
}

fn unit_gaussian_direction(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

/// Draws `n` samples from `dist` using a single ChaCha stream seeded by `seed`.
pub fn sample(dist: &Distribution, n: usize, seed: u64) -> Result<PointCloud> {
    dist.validate()?;
    if n == 0 {
        return Err(Error::Parameter("sample count must be positive".into()));
    }
    let m = dist.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = vec![0.0; n * m];
    match dist {
        Distribution::Gaussian { mean, diag_cov } => {
            let sd: Vec<f64> = diag_cov.iter().map(|v| v.sqrt()).collect();
            for p in coords.chunks_exact_mut(m) {
                for ((x, mu), s) in p.iter_mut().zip(mean).zip(&sd) {
                    let z: f64 = rng.sample(StandardNormal);
                    *x = mu + s * z;
                }
            }
        }
        Distribution::SphereUniform { .. } => {
            for p in coords.chunks_exact_mut(m) {
                unit_gaussian_direction(&mut rng, p);
            }
        }
        Distribution::VonMisesFisher { kappa, mu } => {
            let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u: Vec<f64> = mu.iter().map(|v| v / norm).collect();
            // Uniform proposals; the target-to-proposal ratio exp(κ u·x) is
            // bounded by exp(κ), so accept with probability exp(κ(u·x − 1)).
            for p in coords.chunks_exact_mut(m) {
                loop {
                    unit_gaussian_direction(&mut rng, p);
                    let ux: f64 = p.iter().zip(&u).map(|(a, b)| a * b).sum();
                    if rng.random::<f64>() < (kappa * (ux - 1.0)).exp() {
                        break;
                    }
                }
            }
        }
    }
    PointCloud::new(coords, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let d = Distribution::Gaussian {
            mean: vec![1.0, -2.0],
            diag_cov: vec![1.0, 4.0],
        };
        let c = sample(&d, 100_000, 1).unwrap();
        let mean = c.mean();
        let cov = c.covariance();
        assert!((mean[0] - 1.0).abs() < 0.02 && (mean[1] + 2.0).abs() < 0.04);
        assert!((cov[0] - 1.0).abs() < 0.02 && (cov[3] - 4.0).abs() < 0.08);
        assert!(cov[1].abs() < 0.03);
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        let c = sample(&Distribution::SphereUniform { dim: 3 }, 1000, 2).unwrap();
        for p in c.points() {
            let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-15);
        }
        let m = c.mean();
        assert!(m.iter().all(|v| v.abs() < 0.1));
    }

    #[test]
    fn von_mises_fisher_mean_direction_and_concentration() {
        let mu = vec![0.5, -0.5, 1.0];
        let kappa = 10.0;
        let c = sample(&Distribution::VonMisesFisher { kappa, mu: mu.clone() }, 10_000, 3).unwrap();
        let m = c.mean();
        let mn = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        let un = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cos = m.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / (mn * un);
        assert!(cos.clamp(-1.0, 1.0).acos().to_degrees() < 2.0);
        // Mean resultant length on S² is coth κ − 1/κ.
        let want = 1.0 / kappa.tanh() - 1.0 / kappa;
        assert!((mn - want).abs() < 0.01, "{mn} vs {want}");
    }

    #[test]
    fn seeded_and_validated() {
        let d = Distribution::standard_gaussian(2);
        assert_eq!(sample(&d, 50, 7).unwrap(), sample(&d, 50, 7).unwrap());
        assert_ne!(sample(&d, 50, 7).unwrap(), sample(&d, 50, 8).unwrap());
        assert!(sample(&Distribution::SphereUniform { dim: 1 }, 5, 0).is_err());
        assert!(sample(&Distribution::VonMisesFisher { kappa: 0.0, mu: vec![1.0, 0.0] }, 5, 0).is_err());
        assert!(sample(&d, 0, 0).is_err());
        let bad = Distribution::Gaussian {
            mean: vec![0.0],
            diag_cov: vec![-1.0],
        };
        assert!(sample(&bad, 5, 0).is_err());
    }
}

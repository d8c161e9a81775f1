//! Bandwidth selection by maximizing the log-log slope of the kernel sum.
//!
//! With `ε_ξ² = 2^ξ` and `χ_ξ = Σᵢⱼ K⁽ⁱʲ⁾_{ε_ξ}`, the slope
//! `χ′_ξ = (log χ_{ξ+δ} − log χ_ξ)/(δ log 2)` peaks at the operating bandwidth,
//! and twice the peak estimates the intrinsic dimension.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::kernelmat::{kernel_sum, BandwidthVector, KernelParams, DEFAULT_DELTA_TOL};
use crate::neighbors::{Query, TreeSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningConfig {
    pub xi_min: f64,
    pub xi_max: f64,
    /// Coarse grid size before golden-section refinement.
    pub grid_points: usize,
    /// Slope step `δ`.
    pub delta: f64,
    /// Bracket width at which golden-section refinement stops.
    pub xi_tol: f64,
    pub delta_tol: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            xi_min: -40.0,
            xi_max: 40.0,
            grid_points: 33,
            delta: 1.0,
            xi_tol: 0.02,
            delta_tol: DEFAULT_DELTA_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningSample {
    pub xi: f64,
    pub eps: f64,
    pub chi: f64,
    pub chi_prime: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuningResult {
    pub eps: f64,
    pub xi: f64,
    pub chi_prime_max: f64,
    pub dim_estimate: f64,
    pub delta: f64,
    /// Every `(ξ, χ, χ′)` evaluated, sorted by `ξ`.
    pub curve: Vec<TuningSample>,
}

impl TuningResult {
    /// Dimension estimate rounded to the nearest integer, at least 1.
    pub fn rounded_dim(&self) -> usize {
        (self.dim_estimate.round() as usize).max(1)
    }
}

#[inline]
pub fn eps_from_xi(xi: f64) -> f64 {
    (xi / 2.0).exp2()
}

/// `χ_ξ`: total of the kernel matrix at `ε = 2^{ξ/2}`.
pub fn chi(cloud: &PointCloud, seq: &TreeSequence, rho: &BandwidthVector, xi: f64, delta_tol: f64) -> Result<f64> {
    if !xi.is_finite() {
        return Err(Error::Parameter(format!("ξ = {xi} must be finite")));
    }
    kernel_sum(cloud, seq, rho, KernelParams::new(eps_from_xi(xi), delta_tol)?)
}

pub fn chi_prime(chi_lo: f64, chi_hi: f64, delta: f64) -> f64 {
    (chi_hi.ln() - chi_lo.ln()) / (delta * std::f64::consts::LN_2)
}

struct ChiCache<'a> {
    cloud: &'a PointCloud,
    seq: &'a TreeSequence,
    rho: &'a BandwidthVector,
    delta_tol: f64,
    rho_max: f64,
    /// Smallest squared distance between distinct samples.
    min_pair_d2: f64,
    values: HashMap<u64, f64>,
}

impl ChiCache<'_> {
    fn get(&mut self, xi: f64) -> Result<f64> {
        if let Some(&v) = self.values.get(&xi.to_bits()) {
            return Ok(v);
        }
        let params = KernelParams::new(eps_from_xi(xi), self.delta_tol)?;
        // Below the smallest pair distance nothing but the diagonal survives.
        let v = if self.delta_tol > 0.0 && params.critical_radius2(self.rho_max) <= self.min_pair_d2 {
            self.cloud.len() as f64
        } else {
            kernel_sum(self.cloud, self.seq, self.rho, params)?
        };
        self.values.insert(xi.to_bits(), v);
        Ok(v)
    }

    fn slope(&mut self, xi: f64, delta: f64) -> Result<f64> {
        let lo = self.get(xi)?;
        let hi = self.get(xi + delta)?;
        Ok(chi_prime(lo, hi, delta))
    }
}

/// Grid search over `[xi_min, xi_max]` followed by golden-section refinement
/// around the best grid point.
pub fn tune_bandwidth(
    cloud: &PointCloud,
    seq: &TreeSequence,
    rho: &BandwidthVector,
    cfg: &TuningConfig,
) -> Result<TuningResult> {
    if !(cfg.xi_min.is_finite() && cfg.xi_max.is_finite() && cfg.xi_min < cfg.xi_max) {
        return Err(Error::Parameter(format!(
            "ξ range [{}, {}] must be a finite nonempty interval",
            cfg.xi_min, cfg.xi_max
        )));
    }
    if !(cfg.delta > 0.0) || cfg.grid_points < 3 {
        return Err(Error::Parameter("tuning needs δ > 0 and at least 3 grid points".into()));
    }
    seq.check_cloud(cloud)?;
    let n = cloud.len();
    let min_pair_d2 = if n > 1 {
        (0..n)
            .map(|i| seq.k_nearest(cloud, Query::Sample(i), 1).map(|h| h[0].dist2))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::INFINITY
    };
    let mut cache = ChiCache {
        cloud,
        seq,
        rho,
        delta_tol: cfg.delta_tol,
        rho_max: rho.max(),
        min_pair_d2,
        values: HashMap::new(),
    };

    let ceiling = (n as f64).powi(2);
    let step = (cfg.xi_max - cfg.xi_min) / (cfg.grid_points - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..cfg.grid_points {
        let xi = cfg.xi_min + step * k as f64;
        let s = cache.slope(xi, cfg.delta)?;
        if s > best.1 {
            best = (k, s);
        }
        // χ never decreases in ξ and never exceeds n², so no later grid point
        // can have a slope above this bound.
        let bound = chi_prime(cache.get(xi + cfg.delta)?, ceiling, cfg.delta);
        if bound <= best.1 {
            break;
        }
    }

    let (k_best, s_best) = best;
    if !(s_best > 1e-3) {
        return Err(Error::Tuning(format!(
            "kernel-sum slope is flat (max {s_best:.3e}) over ξ ∈ [{}, {}]; widen the range",
            cfg.xi_min, cfg.xi_max
        )));
    }

    let xi_grid = cfg.xi_min + step * k_best as f64;
    let mut lo = (xi_grid - step).max(cfg.xi_min);
    let mut hi = (xi_grid + step).min(cfg.xi_max);
    let mut best_xi = xi_grid;
    let mut best_slope = s_best;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = cache.slope(a, cfg.delta)?;
    let mut fb = cache.slope(b, cfg.delta)?;
    while hi - lo > cfg.xi_tol {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = cache.slope(a, cfg.delta)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = cache.slope(b, cfg.delta)?;
        }
    }
    for (x, f) in [(a, fa), (b, fb)] {
        if f > best_slope {
            best_xi = x;
            best_slope = f;
        }
    }

    let mut curve: Vec<TuningSample> = Vec::new();
    let mut xs: Vec<f64> = cache.values.keys().map(|&bits| f64::from_bits(bits)).collect();
    xs.sort_by(f64::total_cmp);
    for &xi in &xs {
        if let Some(&hi) = cache.values.get(&(xi + cfg.delta).to_bits()) {
            let lo = cache.values[&xi.to_bits()];
            curve.push(TuningSample {
                xi,
                eps: eps_from_xi(xi),
                chi: lo,
                chi_prime: chi_prime(lo, hi, cfg.delta),
            });
        }
    }

    Ok(TuningResult {
        eps: eps_from_xi(best_xi),
        xi: best_xi,
        chi_prime_max: best_slope,
        dim_estimate: 2.0 * best_slope,
        delta: cfg.delta,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::dist2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, m: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new((0..n * m).map(|_| rng.random::<f64>()).collect(), m).unwrap()
    }

    #[test]
    fn chi_limits() {
        let c = random_cloud(100, 2, 1);
        let seq = TreeSequence::build(&c, 4).unwrap();
        let rho = BandwidthVector::constant(100, 0.5).unwrap();
        assert_eq!(chi(&c, &seq, &rho, -60.0, 1e-2).unwrap(), 100.0);
        let full = chi(&c, &seq, &rho, 60.0, 1e-2).unwrap();
        assert!((full - 1e4).abs() < 1e-6);
        assert!(chi(&c, &seq, &rho, f64::NAN, 1e-2).is_err());
    }

    #[test]
    fn chi_matches_dense_double_sum() {
        let c = random_cloud(300, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho: Vec<f64> = (0..300).map(|_| 0.5 + rng.random::<f64>()).collect();
        let seq = TreeSequence::build(&c, 10).unwrap();
        let xi = -5.0;
        let eps2 = 2f64.powf(xi);
        let mut want = 0.0;
        for i in 0..300 {
            for j in 0..300 {
                let k = (-dist2(c.point(i), c.point(j)) / (eps2 * rho[i] * rho[j])).exp();
                if k > 1e-2 {
                    want += k;
                }
            }
        }
        let got = chi(&c, &seq, &BandwidthVector::new(rho).unwrap(), xi, 1e-2).unwrap();
        assert!((got - want).abs() < 1e-9 * want);
    }

    #[test]
    fn chi_is_nondecreasing_and_slope_nonnegative_without_threshold() {
        let c = random_cloud(200, 3, 4);
        let seq = TreeSequence::build(&c, 5).unwrap();
        let rho = BandwidthVector::constant(200, 0.2).unwrap();
        let xs: Vec<f64> = (-20..=10).map(|k| k as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| chi(&c, &seq, &rho, x, 0.0).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0]);
            assert!(chi_prime(w[0], w[1], 1.0) >= 0.0);
        }
    }

    #[test]
    fn recovers_dimension_of_a_uniform_square() {
        let c = random_cloud(2000, 2, 5);
        let seq = TreeSequence::build(&c, 20).unwrap();
        let rho = BandwidthVector::constant(2000, 1.0).unwrap();
        let res = tune_bandwidth(&c, &seq, &rho, &TuningConfig::default()).unwrap();
        assert!((res.dim_estimate - 2.0).abs() < 0.5, "{}", res.dim_estimate);
        assert!(res.eps > 0.0);
        assert!((res.eps - eps_from_xi(res.xi)).abs() < 1e-15);
        assert!(res.curve.windows(2).all(|w| w[0].xi < w[1].xi));
    }

    #[test]
    fn grid_pruning_keeps_the_grid_argmax() {
        let c = random_cloud(300, 2, 6);
        let seq = TreeSequence::build(&c, 5).unwrap();
        let rho = BandwidthVector::constant(300, 1.0).unwrap();
        let cfg = TuningConfig::default();
        let res = tune_bandwidth(&c, &seq, &rho, &cfg).unwrap();
        let step = (cfg.xi_max - cfg.xi_min) / 32.0;
        let full: Vec<f64> = (0..33)
            .map(|k| {
                let xi = cfg.xi_min + step * k as f64;
                chi_prime(
                    chi(&c, &seq, &rho, xi, cfg.delta_tol).unwrap(),
                    chi(&c, &seq, &rho, xi + 1.0, cfg.delta_tol).unwrap(),
                    1.0,
                )
            })
            .collect();
        let grid_max = full.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(res.chi_prime_max >= grid_max - 1e-12);
        let k_best = full.iter().position(|&s| s == grid_max).unwrap();
        assert!((res.xi - (cfg.xi_min + step * k_best as f64)).abs() <= step);
    }

    #[test]
    fn flat_range_is_a_tuning_failure() {
        let c = random_cloud(50, 2, 7);
        let seq = TreeSequence::build(&c, 2).unwrap();
        let rho = BandwidthVector::constant(50, 1.0).unwrap();
        let cfg = TuningConfig {
            xi_min: -80.0,
            xi_max: -60.0,
            ..TuningConfig::default()
        };
        assert!(matches!(tune_bandwidth(&c, &seq, &rho, &cfg), Err(Error::Tuning(_))));
        let bad = TuningConfig {
            xi_min: 1.0,
            xi_max: 0.0,
            ..TuningConfig::default()
        };
        assert!(matches!(tune_bandwidth(&c, &seq, &rho, &bad), Err(Error::Parameter(_))));
    }
}

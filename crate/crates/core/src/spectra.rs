//! Leading eigenpairs of `L̂` by thick-restart Lanczos, mapped back to the
//! `S`-orthonormal eigenbasis of `L`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operator::KolmogorovOperator;

/// `⟨f, g⟩_S = fᵀ S² g / n`.
pub fn s_inner(s: &[f64], f: &[f64], g: &[f64]) -> Result<f64> {
    check_len(s.len(), f.len())?;
    check_len(s.len(), g.len())?;
    let sum: f64 = s.iter().zip(f).zip(g).map(|((w, a), b)| w * w * a * b).sum();
    Ok(sum / s.len() as f64)
}

/// `⌈3 ln n⌉`.
pub fn default_ell(n: usize) -> usize {
    (3.0 * (n.max(2) as f64).ln()).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectraConfig {
    /// Nonconstant pairs to keep; `None` means `⌈3 ln n⌉`.
    pub ell: Option<usize>,
    pub rtol: f64,
    /// Operator applications allowed per wanted pair, counted as at least 20 pairs.
    pub matvecs_per_pair: usize,
    /// Krylov basis size; `None` means `2(ℓ+1) + 20`.
    pub basis_size: Option<usize>,
    pub seed: u64,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self {
            ell: None,
            rtol: 1e-8,
            matvecs_per_pair: 30,
            basis_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub ell: usize,
    /// `λ̂₀ ≥ λ̂₁ ≥ … ≥ λ̂_ℓ`.
    pub lambda: Vec<f64>,
    /// `φⱼ = S⁻¹ φ̂ⱼ`, one vector per eigenvalue.
    pub phi: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    /// Operator applications used.
    pub matvecs: usize,
}

impl EigenBasis {
    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        s_inner(&self.s, f, g)
    }

    /// `g̃ⱼ = ⟨φⱼ, g⟩_S` for `j = 0..=ℓ`.
    pub fn project(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), g.len())?;
        let weighted: Vec<f64> = self.s.iter().zip(g).map(|(s, v)| s * s * v).collect();
        let n = self.n() as f64;
        Ok(self
            .phi
            .par_iter()
            .map(|p| p.iter().zip(&weighted).map(|(a, b)| a * b).sum::<f64>() / n)
            .collect())
    }

    /// `Σⱼ cⱼ φⱼ` over the leading `coeffs.len()` modes.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() > self.phi.len() {
            return Err(Error::LengthMismatch {
                expected: self.phi.len(),
                got: coeffs.len(),
            });
        }
        Ok(combine(&self.phi[..coeffs.len()], coeffs, self.n()))
    }

    /// Keeps only the leading `ell` nonconstant pairs.
    pub fn truncated(&self, ell: usize) -> Result<Self> {
        if ell > self.ell {
            return Err(Error::Parameter(format!("cannot extend a basis of ℓ = {} to {ell}", self.ell)));
        }
        Ok(Self {
            ell,
            lambda: self.lambda[..=ell].to_vec(),
            phi: self.phi[..=ell].to_vec(),
            s: self.s.clone(),
            matvecs: self.matvecs,
        })
    }
}

/// `Σᵢ cᵢ vᵢ`, parallel over entries with a fixed summation order per entry.
fn combine(vs: &[Vec<f64>], c: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .map(|r| vs.iter().zip(c).map(|(v, ci)| ci * v[r]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two passes of classical Gram–Schmidt of `w` against `basis`; returns the
/// accumulated coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut total = vec![0.0; basis.len()];
    for _ in 0..2 {
        let h: Vec<f64> = basis.par_iter().map(|v| dot(v, w)).collect();
        w.par_iter_mut().enumerate().for_each(|(r, wr)| {
            *wr -= basis.iter().zip(&h).map(|(v, hi)| hi * v[r]).sum::<f64>();
        });
        total.iter_mut().zip(&h).for_each(|(t, hi)| *t += hi);
    }
    total
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, against: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(against, &mut v);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Largest algebraic eigenpairs of the symmetric map `apply`.
///
/// Returns eigenvalues in decreasing order with unit-norm eigenvectors.
pub fn lanczos_largest(
    n: usize,
    want: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    cfg: &SpectraConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    if want == 0 || want > n {
        return Err(Error::Parameter(format!("cannot compute {want} eigenpairs of an {n}×{n} operator")));
    }
    let m = cfg.basis_size.unwrap_or(2 * want + 20).max(want + 1).min(n);
    let max_matvecs = cfg.matvecs_per_pair.max(1) * want.max(20);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    basis.push(random_unit(n, &mut rng, &[]));
    let mut t = DMatrix::<f64>::zeros(m, m);
    let mut kept = 0usize;
    let mut matvecs = 0usize;
    let mut w = vec![0.0; n];

    loop {
        // Extend the basis from `kept` to `m` columns.
        let mut beta = 0.0;
        for j in kept..m {
            apply(&basis[j], &mut w);
            matvecs += 1;
            let h = orthogonalize(&basis, &mut w);
            for (i, &hi) in h.iter().enumerate() {
                t[(i, j)] = hi;
                t[(j, i)] = hi;
            }
            beta = norm(&w);
            let scale = h.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
            if j + 1 == m {
                if beta > 1e-14 * scale {
                    basis.push(w.iter().map(|x| x / beta).collect());
                } else {
                    beta = 0.0;
                }
                break;
            }
            if beta > 1e-14 * scale {
                basis.push(w.iter().map(|x| x / beta).collect());
                t[(j + 1, j)] = beta;
                t[(j, j + 1)] = beta;
            } else {
                // Invariant subspace: continue with a fresh orthogonal direction.
                basis.push(random_unit(n, &mut rng, &basis));
                t[(j + 1, j)] = 0.0;
                t[(j, j + 1)] = 0.0;
            }
        }

        let eig = SymmetricEigen::new(t.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let theta: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let residual: Vec<f64> = order.iter().map(|&k| (beta * eig.eigenvectors[(m - 1, k)]).abs()).collect();
        let ref_scale = theta[..want]
            .iter()
            .map(|v| v.abs())
            .nth(1)
            .unwrap_or(theta[0].abs())
            .max(f64::MIN_POSITIVE);
        let converged = (0..want)
            .take_while(|&i| residual[i] <= cfg.rtol * theta[i].abs().max(ref_scale))
            .count();

        let ritz = |cols: &[usize]| -> Vec<Vec<f64>> {
            cols.iter()
                .map(|&k| {
                    let z: Vec<f64> = (0..m).map(|r| eig.eigenvectors[(r, k)]).collect();
                    combine(&basis[..m], &z, n)
                })
                .collect()
        };

        if converged == want {
            let vecs = ritz(&order[..want]);
            return Ok((theta[..want].to_vec(), vecs, matvecs));
        }
        if matvecs >= max_matvecs {
            let worst = (0..want)
                .map(|i| residual[i] / theta[i].abs().max(ref_scale))
                .fold(0.0f64, f64::max);
            return Err(Error::NoConvergence {
                iterations: matvecs,
                converged,
                wanted: want,
                residual: worst,
            });
        }

        // Thick restart on the leading Ritz vectors plus the residual direction.
        let keep = (want + (m - want) / 2).min(m - 1);
        let mut next = ritz(&order[..keep]);
        t.fill(0.0);
        for i in 0..keep {
            t[(i, i)] = theta[i];
        }
        let residual_dir = if beta > 0.0 {
            let coupling: Vec<f64> = order[..keep].iter().map(|&k| beta * eig.eigenvectors[(m - 1, k)]).collect();
            for (i, c) in coupling.iter().enumerate() {
                t[(keep, i)] = *c;
                t[(i, keep)] = *c;
            }
            basis.pop().expect("residual vector present")
        } else {
            random_unit(n, &mut rng, &next)
        };
        next.push(residual_dir);
        basis = next;
        kept = keep;
    }
}

/// The `ℓ+1` eigenpairs of `L` closest to zero, `S`-orthonormal.
pub fn leading_eigs(op: &KolmogorovOperator, cfg: &SpectraConfig) -> Result<EigenBasis> {
    let n = op.len();
    let ell = cfg.ell.unwrap_or_else(|| default_ell(n));
    if ell + 1 > n {
        return Err(Error::Parameter(format!("ℓ + 1 = {} exceeds n = {n}", ell + 1)));
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        op.apply_lhat_into(x, y).expect("lengths fixed by construction");
    };
    let (lambda, vecs, matvecs) = lanczos_largest(n, ell + 1, apply, cfg)?;
    let root_n = (n as f64).sqrt();
    let phi: Vec<Vec<f64>> = vecs
        .into_par_iter()
        .map(|mut v| {
            let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let lead = v.iter().find(|x| x.abs() > 1e-12 * vmax).copied().unwrap_or(1.0);
            let sign = if lead < 0.0 { -1.0 } else { 1.0 };
            let nv = norm(&v);
            v.iter_mut()
                .zip(&op.s)
                .for_each(|(x, s)| *x = sign * root_n * *x / nv / s);
            v
        })
        .collect();
    Ok(EigenBasis {
        ell,
        lambda,
        phi,
        s: op.s.clone(),
        matvecs,
    })
}

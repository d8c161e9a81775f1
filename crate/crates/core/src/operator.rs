//! The discrete Kolmogorov operator `L = ε⁻² P⁻² (D⁻¹ K_α − I)` and its
//! symmetric conjugate `L̂ = S L S⁻¹ = ε⁻² (S⁻¹ K_α S⁻¹ − P⁻²)`.

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::density::DensityEstimate;
use crate::error::{check_len, Error, Result};
use crate::kernelmat::{assemble_tree_sweep, BandwidthVector, KernelParams, SparseSymMatrix};
use crate::neighbors::TreeSequence;

/// Largest `n` for which [`KolmogorovOperator::dense_l`] will materialize `L`.
pub const DENSE_ORACLE_MAX_N: usize = 500;

/// `α = (2 + dβ + 2β − c)/2`, the inverse of `c = 2 − 2α + dβ + 2β`.
pub fn alpha_from_c(c: f64, beta: f64, dim: usize) -> f64 {
    (2.0 + dim as f64 * beta + 2.0 * beta - c) / 2.0
}

/// `ρ = 2 ψ̂^β`, the bandwidths of the operator kernel.
pub fn operator_bandwidths(psi: &[f64], beta: f64) -> Result<BandwidthVector> {
    BandwidthVector::new(psi.iter().map(|p| 2.0 * p.powf(beta)).collect())
}

#[derive(Debug, Clone)]
pub struct KolmogorovOperator {
    /// `K_{ε,β,α}`.
    pub kba: SparseSymMatrix,
    /// `S⁻¹ K_{ε,β,α} S⁻¹`, kept for the symmetric mat-vec.
    sym: SparseSymMatrix,
    pub p: Vec<f64>,
    pub d: Vec<f64>,
    pub s: Vec<f64>,
    pub eps: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dim: usize,
}

impl KolmogorovOperator {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `L f`.
    pub fn apply_l(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), f.len())?;
        let mut kf = self.kba.mul_vec(f)?;
        let inv_e2 = 1.0 / (self.eps * self.eps);
        kf.par_iter_mut().enumerate().for_each(|(i, g)| {
            *g = inv_e2 * (*g / self.d[i] - f[i]) / (self.p[i] * self.p[i]);
        });
        Ok(kf)
    }

    /// `L̂ f`.
    pub fn apply_lhat(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.apply_lhat_into(f, &mut out)?;
        Ok(out)
    }

    pub fn apply_lhat_into(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.len(), f.len())?;
        check_len(self.len(), out.len())?;
        self.sym.mul_vec_into(f, out);
        let inv_e2 = 1.0 / (self.eps * self.eps);
        out.par_iter_mut().enumerate().for_each(|(i, g)| {
            *g = inv_e2 * (*g - f[i] / (self.p[i] * self.p[i]));
        });
        Ok(())
    }

    /// Dense row-major `L`, for oracles on small instances.
    pub fn dense_l(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n > DENSE_ORACLE_MAX_N {
            return Err(Error::MemoryGuard(format!(
                "dense operator requested for n = {n} > {DENSE_ORACLE_MAX_N}"
            )));
        }
        let mut l = self.kba.to_dense();
        let inv_e2 = 1.0 / (self.eps * self.eps);
        for i in 0..n {
            let scale = inv_e2 / (self.p[i] * self.p[i]);
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                l[i * n + j] = scale * (l[i * n + j] / self.d[i] - id);
            }
        }
        Ok(l)
    }

    /// Dense row-major `L̂`, same size guard as [`Self::dense_l`].
    pub fn dense_lhat(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n > DENSE_ORACLE_MAX_N {
            return Err(Error::MemoryGuard(format!(
                "dense operator requested for n = {n} > {DENSE_ORACLE_MAX_N}"
            )));
        }
        let mut l = self.sym.to_dense();
        let inv_e2 = 1.0 / (self.eps * self.eps);
        for i in 0..n {
            for j in 0..n {
                l[i * n + j] *= inv_e2;
            }
            l[i * n + i] -= inv_e2 / (self.p[i] * self.p[i]);
        }
        Ok(l)
    }
}

/// Builds `L` from a density estimate on the same cloud.
pub fn assemble_operator(
    cloud: &PointCloud,
    seq: &TreeSequence,
    dens: &DensityEstimate,
    eps_op: f64,
    c: f64,
    beta: f64,
    delta_tol: f64,
) -> Result<KolmogorovOperator> {
    if dens.len() != cloud.len() {
        return Err(Error::Structural(format!(
            "density has {} values for {} samples",
            dens.len(),
            cloud.len()
        )));
    }
    if !(c.is_finite() && beta.is_finite()) {
        return Err(Error::Parameter(format!("c = {c} and β = {beta} must be finite")));
    }
    let dim = dens.dim;
    let alpha = alpha_from_c(c, beta, dim);
    let rho = operator_bandwidths(&dens.psi, beta)?;
    let k = assemble_tree_sweep(cloud, seq, &rho, KernelParams::new(eps_op, delta_tol)?)?;

    let exponent = -beta * dim as f64;
    let q: Vec<f64> = k
        .row_sums()
        .iter()
        .zip(&dens.psi)
        .map(|(s, p)| p.powf(exponent) * s)
        .collect();
    let qa: Vec<f64> = q.iter().map(|v| v.powf(-alpha)).collect();
    if let Some(i) = qa.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::DegenerateInput(format!(
            "α-normalization at sample {i} is {} (q = {:e}, α = {alpha})",
            qa[i], q[i]
        )));
    }
    let kba = k.scale_symmetric(&qa)?;
    let d = kba.row_sums();
    let p: Vec<f64> = dens.psi.iter().map(|v| v.powf(beta)).collect();
    let s: Vec<f64> = p.iter().zip(&d).map(|(p, d)| p * d.sqrt()).collect();
    if let Some(i) = s.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::DegenerateInput(format!("operator weight S at sample {i} is {}", s[i])));
    }
    let inv_s: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    let sym = kba.scale_symmetric(&inv_s)?;
    Ok(KolmogorovOperator {
        kba,
        sym,
        p,
        d,
        s,
        eps: eps_op,
        c,
        alpha,
        beta,
        dim,
    })
}

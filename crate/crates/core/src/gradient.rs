//! Gradients from operator actions via the carré du champ identity
//! `2∇u·∇v = ℒ(uv) − uℒv − vℒu`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cloud::PointCloud;
use crate::error::{check_len, Error, Result};
use crate::operator::KolmogorovOperator;
use crate::spectra::EigenBasis;

/// Default cap on the number of triple-product entries, about 400 MB.
pub const DEFAULT_TENSOR_CAP: usize = 50_000_000;

/// `(L(uv) − u Lv − v Lu)/2`, the direct estimate of `∇u·∇v` at the samples.
pub fn carre_du_champ(op: &KolmogorovOperator, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len(op.len(), u.len())?;
    check_len(op.len(), v.len())?;
    let uv: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
    let luv = op.apply_l(&uv)?;
    let lu = op.apply_l(u)?;
    let lv = op.apply_l(v)?;
    Ok((0..u.len())
        .map(|i| 0.5 * (luv[i] - u[i] * lv[i] - v[i] * lu[i]))
        .collect())
}

/// `Ĉ_ljk = ⟨φ_l, φⱼ ∗ φ_k⟩_S` stored densely, index `(l·(ℓ+1) + j)·(ℓ+1) + k`.
#[derive(Debug, Clone)]
pub struct TripleTensor {
    pub ell: usize,
    pub c: Vec<f64>,
}

impl TripleTensor {
    #[inline]
    pub fn get(&self, l: usize, j: usize, k: usize) -> f64 {
        let m = self.ell + 1;
        self.c[(l * m + j) * m + k]
    }
}

pub fn build_triple_tensor(basis: &EigenBasis, cap: usize) -> Result<TripleTensor> {
    let m = basis.ell + 1;
    let size = m.checked_pow(3).unwrap_or(usize::MAX);
    if size > cap {
        return Err(Error::MemoryGuard(format!(
            "triple tensor for ℓ = {} needs {size} entries, cap is {cap}",
            basis.ell
        )));
    }
    let n = basis.n() as f64;
    let w: Vec<f64> = basis.s.iter().map(|s| s * s / n).collect();
    // Column (j, k) for j ≤ k, as a vector over l.
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|j| (j..m).map(move |k| (j, k))).collect();
    let cols: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let prod: Vec<f64> = basis.phi[j]
                .iter()
                .zip(&basis.phi[k])
                .zip(&w)
                .map(|((a, b), w)| a * b * w)
                .collect();
            basis
                .phi
                .iter()
                .map(|pl| pl.iter().zip(&prod).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let mut c = vec![0.0; size];
    for (&(j, k), col) in pairs.iter().zip(&cols) {
        for (l, &v) in col.iter().enumerate() {
            c[(l * m + j) * m + k] = v;
            c[(l * m + k) * m + j] = v;
        }
    }
    Ok(TripleTensor { ell: basis.ell, c })
}

/// Coefficients `a_l = Σⱼₖ uⱼ vₖ Ĉ_ljk (λ_l − λⱼ − λₖ)/2` of `∇u·∇v` in the basis.
pub fn gradient_pairing_coeffs(basis: &EigenBasis, tensor: &TripleTensor, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if tensor.ell != basis.ell {
        return Err(Error::Structural(format!(
            "tensor built for ℓ = {} used with a basis of ℓ = {}",
            tensor.ell, basis.ell
        )));
    }
    let m = basis.ell + 1;
    check_len(m, u.len())?;
    check_len(m, v.len())?;
    let lam = &basis.lambda;
    Ok((0..m)
        .into_par_iter()
        .map(|l| {
            let mut a = 0.0;
            for j in 0..m {
                if u[j] == 0.0 {
                    continue;
                }
                let row = &tensor.c[(l * m + j) * m..(l * m + j + 1) * m];
                let inner: f64 = (0..m).map(|k| v[k] * row[k] * (lam[l] - lam[j] - lam[k])).sum();
                a += u[j] * inner;
            }
            0.5 * a
        })
        .collect())
}

/// Spectral estimate of `∇u·∇v` at the samples.
pub fn gradient_pairing(basis: &EigenBasis, tensor: &TripleTensor, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    basis.reconstruct(&gradient_pairing_coeffs(basis, tensor, u, v)?)
}

/// Ambient gradient components at every sample, row-major `n × m`.
#[derive(Debug, Clone, Serialize)]
pub struct GradientField {
    pub dim: usize,
    pub grads: Vec<f64>,
}

impl GradientField {
    pub fn at(&self, i: usize) -> &[f64] {
        &self.grads[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.grads.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// `∂u/∂x_s` for every ambient coordinate `s`, from the coefficients of `u`.
pub fn spectral_gradient(
    basis: &EigenBasis,
    tensor: &TripleTensor,
    u_coeff: &[f64],
    cloud: &PointCloud,
) -> Result<GradientField> {
    check_len(basis.n(), cloud.len())?;
    let dim = cloud.dim();
    let n = cloud.len();
    let mut grads = vec![0.0; n * dim];
    for s in 0..dim {
        let coord_coeff = basis.project(&cloud.coordinate(s))?;
        let col = gradient_pairing(basis, tensor, u_coeff, &coord_coeff)?;
        for (i, v) in col.into_iter().enumerate() {
            grads[i * dim + s] = v;
        }
    }
    Ok(GradientField { dim, grads })
}

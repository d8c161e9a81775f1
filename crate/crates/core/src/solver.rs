//! Spectral least-squares solution of `L f = g` in the span of the leading
//! nonconstant eigenvectors.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::operator::KolmogorovOperator;
use crate::spectra::{s_inner, EigenBasis};

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSolution {
    /// `f̃ⱼ` for `j = 1..=ℓ`.
    pub f_coeff: Vec<f64>,
    /// `g̃ⱼ` for `j = 1..=ℓ`.
    pub g_coeff: Vec<f64>,
    /// `f = Σⱼ f̃ⱼ φⱼ` at the samples.
    pub f: Vec<f64>,
}

impl SpectralSolution {
    /// Coefficients over the full basis, with zero on the constant mode.
    pub fn full_coeffs(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.f_coeff.len() + 1);
        c.push(0.0);
        c.extend_from_slice(&self.f_coeff);
        c
    }
}

/// `f̃ⱼ = g̃ⱼ / λ̂ⱼ`; the constant mode is never inverted.
pub fn solve_kolmogorov(basis: &EigenBasis, g: &[f64]) -> Result<SpectralSolution> {
    if basis.ell < 1 {
        return Err(Error::Parameter("the solve needs at least one nonconstant mode".into()));
    }
    check_len(basis.n(), g.len())?;
    let lam1 = basis.lambda[1].abs();
    if let Some(j) = (1..=basis.ell).find(|&j| !(basis.lambda[j].abs() >= 1e-12 * lam1) || basis.lambda[j] == 0.0) {
        return Err(Error::IllConditioned(format!(
            "eigenvalue λ̂_{j} = {:e} is negligible against λ̂_1 = {:e}; reduce ℓ",
            basis.lambda[j], basis.lambda[1]
        )));
    }
    let coeffs = basis.project(g)?;
    let g_coeff = coeffs[1..].to_vec();
    let f_coeff: Vec<f64> = g_coeff.iter().zip(&basis.lambda[1..]).map(|(g, l)| g / l).collect();
    let mut full = vec![0.0];
    full.extend_from_slice(&f_coeff);
    let f = basis.reconstruct(&full)?;
    Ok(SpectralSolution { f_coeff, g_coeff, f })
}

/// `‖L f − g‖_S`.
pub fn residual_norm(op: &KolmogorovOperator, f: &[f64], g: &[f64]) -> Result<f64> {
    check_len(op.len(), g.len())?;
    let r: Vec<f64> = op.apply_l(f)?.iter().zip(g).map(|(a, b)| a - b).collect();
    Ok(s_inner(&op.s, &r, &r)?.sqrt())
}

//! Thresholded sparse symmetric kernel matrices
//! `K⁽ⁱʲ⁾ = exp(−‖x⁽ⁱ⁾ − x⁽ʲ⁾‖² / (ε² ρ⁽ⁱ⁾ ρ⁽ʲ⁾))`, keeping only entries `> δ_tol`.
//!
//! Two assembly routes produce bit-identical matrices: an all-pairs sweep
//! ([`assemble_brute_force`]) and a row sweep over suffix k-d trees restricted
//! to the critical radius ([`assemble_tree_sweep`]).

use std::io::{self, Write};

use rayon::prelude::*;

use crate::cloud::{dist2, PointCloud};
use crate::error::{check_len, Error, Result};
use crate::neighbors::{NeighborHit, TreeSequence};

/// Default sparsity tolerance.
pub const DEFAULT_DELTA_TOL: f64 = 1e-2;

/// Per-sample kernel bandwidths `ρ⁽ⁱ⁾`, all positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthVector(Vec<f64>);

impl BandwidthVector {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if let Some((i, r)) = rho.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Parameter(format!("bandwidth {i} is {r}, must be positive and finite")));
        }
        Ok(Self(rho))
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Bandwidth parameter and sparsity tolerance of one assembly.
///
/// `delta_tol = 0` is accepted and disables thresholding (dense assembly).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub eps: f64,
    pub delta_tol: f64,
}

impl KernelParams {
    pub fn new(eps: f64, delta_tol: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Parameter(format!("bandwidth parameter eps = {eps} must be positive")));
        }
        if !(0.0..1.0).contains(&delta_tol) {
            return Err(Error::Parameter(format!("sparsity tolerance {delta_tol} must lie in [0, 1)")));
        }
        Ok(Self { eps, delta_tol })
    }

    /// Squared radius `−ε² ρ_max² log δ_tol` outside of which no entry survives.
    pub fn critical_radius2(&self, rho_max: f64) -> f64 {
        if self.delta_tol == 0.0 {
            f64::INFINITY
        } else {
            -self.eps * self.eps * rho_max * rho_max * self.delta_tol.ln()
        }
    }

    fn evaluator(&self) -> EntryEval {
        let log_cut = if self.delta_tol == 0.0 {
            f64::NEG_INFINITY
        } else {
            let l = self.delta_tol.ln();
            l - 1e-9 * (1.0 + l.abs())
        };
        EntryEval {
            eps2: self.eps * self.eps,
            delta_tol: self.delta_tol,
            log_cut,
        }
    }
}

#[derive(Clone, Copy)]
struct EntryEval {
    eps2: f64,
    delta_tol: f64,
    /// Exponents at or below this are certainly under `delta_tol`; skip `exp`.
    log_cut: f64,
}

impl EntryEval {
    #[inline]
    fn entry(&self, d2: f64, rho_i: f64, rho_j: f64) -> Option<f64> {
        let arg = -d2 / (self.eps2 * rho_i * rho_j);
        if arg <= self.log_cut {
            return None;
        }
        let k = arg.exp();
        (k > self.delta_tol).then_some(k)
    }
}

/// Symmetric matrix in compressed sparse row layout (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from per-row upper-triangle entries (`col ≥ row`, strictly
    /// increasing) by mirroring each off-diagonal entry.
    pub(crate) fn from_upper_rows(upper: Vec<Vec<(u32, f64)>>) -> Self {
        let n = upper.len();
        let mut lower_count = vec![0usize; n];
        for (i, row) in upper.iter().enumerate() {
            for &(j, _) in row {
                if j as usize > i {
                    lower_count[j as usize] += 1;
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for i in 0..n {
            row_ptr.push(row_ptr[i] + lower_count[i] + upper[i].len());
        }
        let nnz = row_ptr[n];
        let mut cols = vec![0u32; nnz];
        let mut vals = vec![0.0; nnz];
        let mut cursor: Vec<usize> = row_ptr[..n].to_vec();
        for (i, row) in upper.iter().enumerate() {
            let tail = row_ptr[i] + lower_count[i];
            for (k, &(j, v)) in row.iter().enumerate() {
                cols[tail + k] = j;
                vals[tail + k] = v;
                let j = j as usize;
                if j > i {
                    cols[cursor[j]] = i as u32;
                    vals[cursor[j]] = v;
                    cursor[j] += 1;
                }
            }
        }
        Self { n, row_ptr, cols, vals }
    }

    /// Dense symmetric input, keeping entries whose value is nonzero.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        check_len(n * n, dense.len())?;
        for i in 0..n {
            for j in 0..i {
                if dense[i * n + j] != dense[j * n + i] {
                    return Err(Error::Structural(format!("entry ({i},{j}) breaks symmetry")));
                }
            }
        }
        let upper = (0..n)
            .map(|i| {
                (i..n)
                    .filter(|&j| dense[i * n + j] != 0.0)
                    .map(|j| (j as u32, dense[i * n + j]))
                    .collect()
            })
            .collect();
        Ok(Self::from_upper_rows(upper))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored `(row, col, value)` triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j as usize, v))
        })
    }

    /// `sᵢ = Σⱼ K⁽ⁱʲ⁾`, diagonal included.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn total_sum(&self) -> f64 {
        self.row_sums().iter().sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    /// `y ← K x`. Rows run in parallel; each row sums sequentially, so the
    /// result does not depend on the worker count.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j as usize]).sum();
        });
    }

    /// `diag(d) · K · diag(d)`, same sparsity pattern.
    pub fn scale_symmetric(&self, d: &[f64]) -> Result<Self> {
        check_len(self.n, d.len())?;
        let mut out = self.clone();
        for i in 0..self.n {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            for k in r {
                out.vals[k] = self.vals[k] * (d[i] * d[self.cols[k] as usize]);
            }
        }
        Ok(out)
    }

    /// Applies `f(v_ij, i, j)` to every stored value; the result must stay symmetric.
    pub fn map_values(&self, f: impl Fn(f64, usize, usize) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.vals[k] = f(self.vals[k], i, self.cols[k] as usize);
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for (i, j, v) in self.triplets() {
            d[i * self.n + j] = v;
        }
        d
    }

    /// Matrix Market coordinate export, `real symmetric`, lower triangle, 1-based.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        let lower: Vec<(usize, usize, f64)> = self.triplets().filter(|&(i, j, _)| j <= i).collect();
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.n, self.n, lower.len())?;
        // Column-major order of the lower triangle, as the format conventionally lists it.
        let mut lower = lower;
        lower.sort_by_key(|&(i, j, _)| (j, i));
        for (i, j, v) in lower {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

fn check_inputs(cloud: &PointCloud, rho: &BandwidthVector) -> Result<()> {
    if rho.len() != cloud.len() {
        return Err(Error::Structural(format!(
            "{} bandwidths for {} samples",
            rho.len(),
            cloud.len()
        )));
    }
    Ok(())
}

/// All-pairs assembly: every pair `j ≥ i` is evaluated. Θ(m n²).
pub fn assemble_brute_force(cloud: &PointCloud, rho: &BandwidthVector, params: KernelParams) -> Result<SparseSymMatrix> {
    check_inputs(cloud, rho)?;
    let eval = params.evaluator();
    let rho = rho.as_slice();
    let n = cloud.len();
    let upper = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = cloud.point(i);
            (i..n)
                .filter_map(|j| eval.entry(dist2(xi, cloud.point(j)), rho[i], rho[j]).map(|k| (j as u32, k)))
                .collect()
        })
        .collect();
    Ok(SparseSymMatrix::from_upper_rows(upper))
}

/// Row sweep over the suffix trees: row `i` only searches columns `j ≥ i`
/// inside the critical radius, then applies the same threshold test as
/// [`assemble_brute_force`].
pub fn assemble_tree_sweep(
    cloud: &PointCloud,
    seq: &TreeSequence,
    rho: &BandwidthVector,
    params: KernelParams,
) -> Result<SparseSymMatrix> {
    check_inputs(cloud, rho)?;
    seq.check_cloud(cloud)?;
    let eval = params.evaluator();
    let r2 = params.critical_radius2(rho.max());
    let rho = rho.as_slice();
    let upper = (0..cloud.len())
        .into_par_iter()
        .map_init(Vec::new, |hits: &mut Vec<NeighborHit>, i| {
            seq.suffix_into(cloud, i, r2, hits);
            hits.iter()
                .filter_map(|h| eval.entry(h.dist2, rho[i], rho[h.index]).map(|k| (h.index as u32, k)))
                .collect()
        })
        .collect();
    Ok(SparseSymMatrix::from_upper_rows(upper))
}

/// `Σᵢⱼ K⁽ⁱʲ⁾` without storing the matrix. Per-row partial sums are combined
/// sequentially in row order.
///
/// Row `i` searches the radius `−ε² ρ⁽ⁱ⁾ ρ_max log δ_tol`, which still contains
/// every surviving entry of the row. Entries are added in tree traversal
/// order, so the result matches the matrix total up to rounding and does not
/// depend on the worker count.
pub fn kernel_sum(cloud: &PointCloud, seq: &TreeSequence, rho: &BandwidthVector, params: KernelParams) -> Result<f64> {
    check_inputs(cloud, rho)?;
    seq.check_cloud(cloud)?;
    let eval = params.evaluator();
    let rho_max = rho.max();
    let rho = rho.as_slice();
    let partial: Vec<f64> = (0..cloud.len())
        .into_par_iter()
        .map_init(Vec::new, |hits: &mut Vec<NeighborHit>, i| {
            let r2 = params.critical_radius2((rho[i] * rho_max).sqrt()) * (1.0 + 1e-12);
            seq.suffix_unsorted_into(cloud, i, r2, hits);
            let off: f64 = hits
                .iter()
                .filter(|h| h.index > i)
                .filter_map(|h| eval.entry(h.dist2, rho[i], rho[h.index]))
                .sum();
            1.0 + 2.0 * off
        })
        .collect();
    Ok(partial.iter().sum())
}

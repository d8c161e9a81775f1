use crate::error::{Error, Result};

/// `n` samples in ambient dimension `m`, stored row-major.
///
/// Sample order is fixed at construction; index `i` always names the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
}

impl PointCloud {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("ambient dimension must be at least 1".into()));
        }
        if coords.is_empty() {
            return Err(Error::Parameter("point cloud must hold at least one sample".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::Structural(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::Parameter(format!(
                "sample {} has a non-finite coordinate",
                pos / dim
            )));
        }
        Ok(Self { coords, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Structural(format!(
                    "sample {i} has {} coordinates, expected {dim}",
                    row.len()
                )));
            }
            coords.extend_from_slice(row);
        }
        Self::new(coords, dim)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Column `s` as an n-vector.
    pub fn coordinate(&self, s: usize) -> Vec<f64> {
        self.points().map(|p| p[s]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for p in self.points() {
            for (acc, x) in mean.iter_mut().zip(p) {
                *acc += x;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|x| *x /= n);
        mean
    }

    /// Unbiased sample covariance, row-major `m × m`.
    pub fn covariance(&self) -> Vec<f64> {
        let m = self.dim;
        let mean = self.mean();
        let mut cov = vec![0.0; m * m];
        for p in self.points() {
            for a in 0..m {
                let da = p[a] - mean[a];
                for b in 0..m {
                    cov[a * m + b] += da * (p[b] - mean[b]);
                }
            }
        }
        let denom = (self.len().max(2) - 1) as f64;
        cov.iter_mut().for_each(|c| *c /= denom);
        cov
    }

    pub fn map_points(&self, mut f: impl FnMut(usize, &[f64], &mut [f64])) -> Self {
        let mut coords = self.coords.clone();
        for (i, out) in coords.chunks_exact_mut(self.dim).enumerate() {
            f(i, self.point(i), out);
        }
        Self {
            coords,
            dim: self.dim,
        }
    }
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

//! Error metrics for comparing computed fields with analytic references.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::spectra::s_inner;

/// Rescales `f` to unit `S`-norm.
pub fn s_normalize(s: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let nrm = s_inner(s, f, f)?.sqrt();
    if !(nrm > 0.0) {
        return Err(Error::DegenerateInput("cannot normalize a zero vector".into()));
    }
    Ok(f.iter().map(|v| v / nrm).collect())
}

/// `e² = (1/n) ‖a − b‖²`.
pub fn empirical_sq_error(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `ẽ² = ‖f − f̌‖² / ‖f̌‖²`.
pub fn normalized_sq_error(f: &[f64], exact: &[f64]) -> Result<f64> {
    check_len(exact.len(), f.len())?;
    let den: f64 = exact.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return Err(Error::DegenerateInput("reference field is identically zero".into()));
    }
    Ok(f.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / den)
}

/// `min_θ (1/n)‖target − cos θ·a − sin θ·b‖²` and the minimizing angle.
///
/// The objective is a trigonometric polynomial of degree two in `θ`; a fine
/// scan followed by golden-section refinement locates the global minimum.
pub fn rotation_fit(target: &[f64], a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    check_len(target.len(), a.len())?;
    check_len(target.len(), b.len())?;
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let (tt, ta, tb) = (dot(target, target), dot(target, a), dot(target, b));
    let (aa, bb, ab) = (dot(a, a), dot(b, b), dot(a, b));
    let n = target.len() as f64;
    let obj = |th: f64| {
        let (c, s) = (th.cos(), th.sin());
        (tt - 2.0 * (c * ta + s * tb) + c * c * aa + s * s * bb + 2.0 * c * s * ab) / n
    };
    let grid = 720;
    let step = 2.0 * std::f64::consts::PI / grid as f64;
    let k = (0..grid)
        .min_by(|&i, &j| obj(i as f64 * step).total_cmp(&obj(j as f64 * step)))
        .expect("nonempty grid");
    let (mut lo, mut hi) = ((k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let (x1, x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if obj(x1) <= obj(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let th = 0.5 * (lo + hi);
    let (c, s) = (th.cos(), th.sin());
    let e2 = target
        .iter()
        .zip(a)
        .zip(b)
        .map(|((t, x), y)| (t - c * x - s * y).powi(2))
        .sum::<f64>()
        / n;
    Ok((e2, th))
}

/// Principal angles in radians between `span(u)` and `span(v)` under the
/// `S`-inner product, ascending.
pub fn principal_angles(s: &[f64], u: &[Vec<f64>], v: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = s.len();
    let to_mat = |vs: &[Vec<f64>]| -> Result<DMatrix<f64>> {
        for x in vs {
            check_len(n, x.len())?;
        }
        let m = DMatrix::from_fn(n, vs.len(), |r, c| vs[c][r] * s[r] / (n as f64).sqrt());
        Ok(m.qr().q())
    };
    let (qu, qv) = (to_mat(u)?, to_mat(v)?);
    let svd = (qu.transpose() * qv).svd(false, false);
    let mut angles: Vec<f64> = svd.singular_values.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateInput("correlation of a constant vector".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len())?;
    if x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Parameter("slope fit needs at least two positive points".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("slope fit needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Indices whose value lies strictly above the median, the "bulk" of a sample.
pub fn above_median(values: &[f64]) -> Vec<usize> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = sorted[sorted.len() / 2];
    (0..values.len()).filter(|&i| values[i] > med).collect()
}

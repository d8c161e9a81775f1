//! Wall-clock scaling of kernel assembly.
//!
//! The workload is a 2-D standard Gaussian with unit bandwidths and
//! `ε = (κ/n)^{1/2}`, so the expected row population stays fixed as `n` grows
//! and only the search cost varies.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernelmat::{assemble_brute_force, assemble_tree_sweep, BandwidthVector, KernelParams, DEFAULT_DELTA_TOL};
use crate::neighbors::TreeSequence;
use crate::sampling::{sample, Distribution};
use crate::validate::loglog_slope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeCountRule {
    Fixed(usize),
    /// `⌈5 ln n⌉`.
    FiveLogN,
    /// `n/5`.
    NOver5,
}

impl TreeCountRule {
    pub fn resolve(self, n: usize) -> usize {
        let t = match self {
            TreeCountRule::Fixed(t) => t,
            TreeCountRule::FiveLogN => (5.0 * (n as f64).ln()).ceil() as usize,
            TreeCountRule::NOver5 => n / 5,
        };
        t.clamp(1, n.saturating_sub(1).max(1))
    }

    pub fn label(self) -> String {
        match self {
            TreeCountRule::Fixed(t) => format!("t={t}"),
            TreeCountRule::FiveLogN => "t=5logn".into(),
            TreeCountRule::NOver5 => "t=n/5".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub tree_counts: Vec<TreeCountRule>,
    /// Largest `n` for the `n/5` rule, whose tree memory grows quadratically.
    pub n_over_5_max: usize,
    pub brute_force: bool,
    pub brute_force_max: usize,
    /// Expected neighbors scale `κ` in `ε² = κ/n`.
    pub kappa: f64,
    pub delta_tol: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1_000, 4_000, 16_000, 64_000],
            tree_counts: vec![
                TreeCountRule::Fixed(1),
                TreeCountRule::Fixed(100),
                TreeCountRule::FiveLogN,
                TreeCountRule::NOver5,
            ],
            n_over_5_max: 16_000,
            brute_force: true,
            brute_force_max: 64_000,
            kappa: 20.0,
            delta_tol: DEFAULT_DELTA_TOL,
            repeats: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub n: usize,
    pub method: String,
    pub tree_count: usize,
    pub build_seconds: f64,
    pub assemble_seconds: f64,
    pub total_seconds: f64,
    pub nnz: usize,
}

/// Best-of-`repeats` timings for every size and method.
pub fn run_bench(cfg: &BenchConfig, mut progress: impl FnMut(&BenchRecord)) -> Result<Vec<BenchRecord>> {
    if cfg.sizes.iter().any(|&n| n < 2) || !(cfg.kappa > 0.0) {
        return Err(Error::Parameter("bench sizes must be at least 2 and κ positive".into()));
    }
    let reps = cfg.repeats.max(1);
    let mut out = Vec::new();
    for &n in &cfg.sizes {
        let cloud = sample(&Distribution::standard_gaussian(2), n, cfg.seed)?;
        let rho = BandwidthVector::constant(n, 1.0)?;
        let params = KernelParams::new((cfg.kappa / n as f64).sqrt(), cfg.delta_tol)?;
        for &rule in &cfg.tree_counts {
            if rule == TreeCountRule::NOver5 && n > cfg.n_over_5_max {
                continue;
            }
            let t = rule.resolve(n);
            let mut best: Option<BenchRecord> = None;
            for _ in 0..reps {
                let t0 = Instant::now();
                let seq = TreeSequence::build_clamped(&cloud, t);
                let build = t0.elapsed().as_secs_f64();
                let t1 = Instant::now();
                let k = assemble_tree_sweep(&cloud, &seq, &rho, params)?;
                let asm = t1.elapsed().as_secs_f64();
                let rec = BenchRecord {
                    n,
                    method: format!("tree {}", rule.label()),
                    tree_count: seq.tree_count(),
                    build_seconds: build,
                    assemble_seconds: asm,
                    total_seconds: build + asm,
                    nnz: k.nnz(),
                };
                if best.as_ref().is_none_or(|b| rec.total_seconds < b.total_seconds) {
                    best = Some(rec);
                }
            }
            let rec = best.expect("at least one repeat");
            progress(&rec);
            out.push(rec);
        }
        if cfg.brute_force && n <= cfg.brute_force_max {
            let mut best: Option<BenchRecord> = None;
            for _ in 0..reps {
                let t0 = Instant::now();
                let k = assemble_brute_force(&cloud, &rho, params)?;
                let asm = t0.elapsed().as_secs_f64();
                let rec = BenchRecord {
                    n,
                    method: "brute".into(),
                    tree_count: 0,
                    build_seconds: 0.0,
                    assemble_seconds: asm,
                    total_seconds: asm,
                    nnz: k.nnz(),
                };
                if best.as_ref().is_none_or(|b| rec.total_seconds < b.total_seconds) {
                    best = Some(rec);
                }
            }
            let rec = best.expect("at least one repeat");
            progress(&rec);
            out.push(rec);
        }
    }
    Ok(out)
}

/// Fitted log-log slope of total time against `n` for each method.
pub fn fit_slopes(records: &[BenchRecord]) -> Vec<(String, f64)> {
    let mut methods: Vec<&str> = records.iter().map(|r| r.method.as_str()).collect();
    methods.dedup();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .filter_map(|m| {
            let (x, y): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter(|r| r.method == m)
                .map(|r| (r.n as f64, r.total_seconds.max(1e-9)))
                .unzip();
            loglog_slope(&x, &y).ok().map(|s| (m.to_string(), s))
        })
        .collect()
}

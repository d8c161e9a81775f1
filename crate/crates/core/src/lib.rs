//! Sample-driven approximation of the elliptic Kolmogorov operator
//! `ℒf = Δf + c ∇f·∇ψ/ψ` on a manifold, from point samples of `ψ` alone.
//!
//! The pipeline runs bottom-up:
//!
//! | module | role |
//! |--------|------|
//! | [`neighbors`] | exact k-d tree search over suffix subsets |
//! | [`kernelmat`] | sparse symmetric kernel assembly |
//! | [`density`] | variable-bandwidth kernel density estimate |
//! | [`tuning`] | bandwidth selection and dimension estimate |
//! | [`operator`] | the discrete operator in factored form |
//! | [`spectra`] | leading eigenpairs via thick-restart Lanczos |
//! | [`solver`] | spectral least-squares solve of `L f = g` |
//! | [`gradient`] | gradient fields via the carré du champ identity |
//! | [`dynamics`] | particle evolution under a sourced Fokker–Planck equation |
//!
//! [`pipeline`] chains the stages with tuned defaults, [`sampling`] draws the
//! validation distributions, [`validate`] holds the error metrics and
//! [`bench`] times kernel assembly.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cloud;
pub mod density;
pub mod dynamics;
pub mod error;
pub mod gradient;
pub mod kernelmat;
pub mod neighbors;
pub mod operator;
pub mod pipeline;
pub mod sampling;
pub mod solver;
pub mod spectra;
pub mod tuning;
pub mod validate;

pub use cloud::PointCloud;
pub use error::{Error, Result};

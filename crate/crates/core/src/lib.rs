//! Near-field multiuser beam training for extremely large ULAs.
//!
//! The crate is organised along the processing chain of the three-phase scheme:
//!
//! - [`geometry`] and [`scenario`]: spherical-wavefront steering vectors and
//!   synthetic correlated multiuser channels.
//! - [`codebook`]: far-field wide-beam and near-field polar codebooks, index
//!   arithmetic and optimal-codeword labels.
//! - [`pilot`]: the three uplink pilot rounds and pilot accounting.
//! - [`gnn`]: the dual angle/distance graph networks, exact gradients and Adam
//!   training.
//! - [`alloc`]: candidate selection and conflict-free beam allocation.
//! - [`precoder`]: hybrid ZF/MMSE precoding, sum rate and accuracy metrics.
//! - [`baselines`]: exhaustive search, FC ablation and OMP with MRC.
//! - [`config`], [`dataset`], [`experiment`]: the experiment harness used by the
//!   command-line tool.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Single-scenario batches pass one group range.
#![allow(clippy::single_range_in_vec_init)]

pub mod alloc;
pub mod baselines;
pub mod codebook;
pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod gnn;
pub mod pilot;
pub mod precoder;
pub mod scenario;
pub mod seed;

pub use num_complex::Complex64 as C64;

pub use codebook::{CodewordIndex, NearFieldCodebook, WideBeamCodebook};
pub use error::{Error, Result};
pub use geometry::{ArrayGeometry, PathComponent};
pub use pilot::{GainMatrix, PilotConfig, Scheme};
pub use scenario::{NearFieldChannel, Scenario, ScenarioConfig};

/// `h · f` without conjugation: the beamforming gain convention used throughout
/// (the downlink channel row times a beamforming column).
#[inline]
pub fn dot(h: &[C64], f: &[C64]) -> C64 {
    debug_assert_eq!(h.len(), f.len());
    h.iter().zip(f).fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
}

/// Euclidean norm of a complex vector.
pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Power in watts from dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

//! Spectral and partial-spectral analysis of multitype spatio-temporal point
//! patterns, and the dependence graphs obtained by thresholding the absolute
//! rescaled inverse spectral density.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod classical;
pub mod error;
pub mod fmt;
pub mod graph;
pub mod ingest;
pub mod inverse;
pub mod linalg;
pub mod partial;
pub mod simulate;
pub mod spectra;

pub use analysis::{DftMethod, SpectralSettings};
pub use error::{Error, Freq, Result};
pub use graph::{DependenceGraph, PairStatistic, Provenance};
pub use ingest::{CoordSystem, Event, MultiPattern, Window};
pub use inverse::{LagField, LagGrid};
pub use partial::{PartialField, RidgePolicy};
pub use simulate::{SimSpec, Simulation};
pub use spectra::{FrequencyGrid, Normalisation, SpectralField};

//! Workbench for measuring how violations of HMM assumptions affect
//! recognition: training, decoding, simulation, resampling and diagnostics.

pub mod dists;
pub mod error;
pub(crate) mod numeric;

pub use error::{Error, Result};
pub mod corpus;
pub mod hmm;
pub mod decoder;
pub mod mmi;
pub mod diagnostics;
pub mod regions;
pub mod synth;
pub mod resample;
pub mod io;
pub mod config;
pub mod pipeline;
pub mod repro;
pub mod report;

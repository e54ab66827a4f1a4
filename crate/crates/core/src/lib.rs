//! Sensor-layout-aware EEG classification.
//!
//! Recordings are referenced, normalized and cut into windows; each window is
//! decomposed with a 4-level db4 wavelet packet tree into frequency bands whose
//! energy and entropy become features. Features are presented to classifiers
//! either as a channel-by-feature matrix (model 1) or as a stack of
//! interpolated scalp images laid out by electrode position (model 2).

pub mod augment;
pub mod cnn;
pub mod error;
pub mod experiment;
pub mod features;
pub mod io;
pub mod mlcore;
pub mod preprocess;
pub mod sample;
pub mod selftest;
pub mod synth;
pub mod topomap;
pub mod wavelet;

pub use error::{Error, Result};

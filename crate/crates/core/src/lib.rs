//! Simulation and analysis of multi-photon correlations in chaotic light.
//!
//! The pipeline mirrors a three-detector intensity-interferometry experiment:
//!
//! 1. [`field`] synthesizes the complex envelope of a chaotic source as a sum
//!    of randomly phased spectral modes.
//! 2. [`detection`] splits the intensity over three detectors and samples
//!    picosecond time tags from it.
//! 3. [`correlator`] counts two- and three-fold coincidences, normalizes them
//!    into `g2`/`g3` estimates and scores peak contrast.
//! 4. [`analytic`] gives the closed-form predictions, including `gN` as a
//!    matrix permanent.
//!
//! [`pipeline`] chains the stages with streaming synthesis for long runs and
//! [`io`] holds the file formats shared with the command-line tool.

pub mod analytic;
pub mod correlator;
pub mod detection;
pub mod error;
pub mod field;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod stats;

pub use analytic::{
    expected_contrast_with_binning, g2, g3, g_n, gamma, permanent, CoherenceMatrix,
};
pub use correlator::{
    contrast_of_profile, contrast_of_surface, histogram_g2, histogram_g2_partitioned, histogram_g3,
    histogram_g3_partitioned, normalize_g2, normalize_g3, slice_antidiagonal,
    CoincidenceHistogram2D, ContrastReport, Histogram1D, HistogramAxis, NormalizedSurface, Profile,
};
pub use detection::{
    apply_dead_time, sample_time_tags, split_intensity, DetectorConfig, TimeTagStream,
};
pub use error::{Error, Result};
pub use field::{
    coherence_time, generate_field, intensity, FieldConfig, FieldTrace, IntensityTrace,
};
pub use pipeline::{simulate_streams, AxisPair, RunConfig};

//! End-to-end run configuration and the streaming simulate-and-detect path.
//!
//! [`simulate_streams`] produces exactly the tags of
//! `generate_field → intensity → split_intensity → sample_time_tags` without
//! holding the trace in memory: each chunk's intensity is synthesized, split
//! and thinned on the spot, then dropped.

use std::f64::consts::PI;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlator::{
    histogram_g2, histogram_g3, normalize_g2, normalize_g3, CoincidenceHistogram2D, Histogram1D,
    HistogramAxis, NormalizedSurface, Profile,
};
use crate::detection::{
    validate_ratios, ChannelSampler, DetectorConfig, TimeTagStream, EQUAL_SPLIT,
};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldSynthesizer, SpectrumShape, CHUNK_LEN};

const PS_PER_S: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisPair {
    pub axis13: HistogramAxis,
    pub axis23: HistogramAxis,
}

impl AxisPair {
    pub fn square(axis: HistogramAxis) -> Self {
        AxisPair {
            axis13: axis,
            axis23: axis,
        }
    }
}

fn equal_split() -> [f64; 3] {
    EQUAL_SPLIT
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub field: FieldConfig,
    pub detectors: [DetectorConfig; 3],
    #[serde(default = "equal_split")]
    pub split_ratios: [f64; 3],
    pub duration_s: f64,
    pub axes: AxisPair,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Reference desk-scale run: 0.2 µs coherence time, 256 modes, 2·10⁶
    /// counts/s per channel for 10 s, ±2 µs axes with 20 ns bins.
    ///
    /// Detector rates are quoted at the source's mean intensity, so each of
    /// the three equal paths registers a third of `mean_rate_hz`.
    pub fn desk_scale() -> Self {
        let detector = |channel_id| DetectorConfig {
            channel_id,
            mean_rate_hz: 6.0e6,
            dead_time_s: 0.0,
            jitter_sigma_s: 0.0,
            delay_s: 0.0,
        };
        let axis = HistogramAxis {
            bin_width_ps: 20_000,
            half_range_ps: 2_000_000,
        };
        RunConfig {
            field: FieldConfig {
                bandwidth_rad_per_s: 2.0 * PI * 5.0e6,
                num_modes: 256,
                mean_intensity: 1.0,
                spectrum_shape: SpectrumShape::Rectangular,
            },
            detectors: [detector(1), detector(2), detector(3)],
            split_ratios: EQUAL_SPLIT,
            duration_s: 10.0,
            axes: AxisPair::square(axis),
            seed: 1,
            output_dir: default_output_dir(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.field.check_duration(self.duration_s)?;
        validate_ratios(self.split_ratios)?;
        let mut seen = [false; 3];
        for det in &self.detectors {
            det.validate()?;
            let slot = &mut seen[usize::from(det.channel_id) - 1];
            if *slot {
                return Err(Error::config(format!(
                    "channel {} configured twice",
                    det.channel_id
                )));
            }
            *slot = true;
        }
        self.axes.axis13.validate()?;
        self.axes.axis23.validate()?;
        Ok(())
    }

    pub fn coherence_time_ps(&self) -> f64 {
        self.field.coherence_time_s() * PS_PER_S
    }

    /// Position of the detector for channel `id`.
    fn detector_index(&self, id: u8) -> usize {
        self.detectors
            .iter()
            .position(|d| d.channel_id == id)
            .expect("validated channel set")
    }
}

/// Chunked synthesis, split and thinning for all three channels.
///
/// Streams are returned ordered by channel id.
pub fn simulate_streams(config: &RunConfig) -> Result<[TimeTagStream; 3]> {
    config.validate()?;
    let synth = FieldSynthesizer::new(&config.field, config.seed)?;
    let n = config.field.num_samples(config.duration_s);
    let chunks = n.saturating_sub(1).div_ceil(CHUNK_LEN).max(1);
    let order = [1u8, 2, 3].map(|id| config.detector_index(id));
    if order.iter().any(|&k| config.split_ratios[k] == 0.0) {
        return Err(Error::DarkInput);
    }
    let samplers = order.map(|k| {
        ChannelSampler::new(
            &config.detectors[k],
            config.seed,
            synth.sample_interval_s(),
            config.field.mean_intensity,
            config.duration_s,
            Some(config.field.coherence_time_s()),
        )
    });
    let [a, b, c] = samplers;
    let samplers = [a?, b?, c?];
    let ratios = order.map(|k| config.split_ratios[k]);

    let per_chunk: Vec<[Vec<u64>; 3]> = (0..chunks)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(intensity, scaled): &mut (Vec<f64>, Vec<f64>), chunk| {
                synth.intensity_chunk(chunk, n, intensity);
                let mut out: [Vec<u64>; 3] = Default::default();
                for ch in 0..3 {
                    scaled.clear();
                    scaled.extend(intensity.iter().map(|&v| ratios[ch] * v));
                    samplers[ch].sample_chunk(chunk, scaled, &mut out[ch]);
                }
                out
            },
        )
        .collect();

    let mut merged: [Vec<u64>; 3] = Default::default();
    for ch in 0..3 {
        let total = per_chunk.iter().map(|c| c[ch].len()).sum();
        merged[ch].reserve_exact(total);
    }
    for chunk in per_chunk {
        for (dst, src) in merged.iter_mut().zip(chunk) {
            dst.extend_from_slice(&src);
        }
    }
    let [t1, t2, t3] = merged;
    Ok([
        samplers[0].finish(t1),
        samplers[1].finish(t2),
        samplers[2].finish(t3),
    ])
}

#[derive(Debug, Clone)]
pub struct PairCorrelation {
    pub channels: (u8, u8),
    pub histogram: Histogram1D,
    pub profile: Profile,
}

#[derive(Debug, Clone)]
pub struct Correlation {
    pub histogram: CoincidenceHistogram2D,
    pub surface: NormalizedSurface,
    pub pairs: Vec<PairCorrelation>,
}

/// Three-fold histogram and surface plus the three pairwise `g2` profiles on
/// the `t13` axis. Streams must be ordered by channel id.
pub fn correlate(streams: &[TimeTagStream; 3], axes: AxisPair) -> Result<Correlation> {
    let [s1, s2, s3] = streams;
    let histogram = histogram_g3(s1, s2, s3, axes.axis13, axes.axis23)?;
    let surface = normalize_g3(&histogram)?;
    let mut pairs = Vec::with_capacity(3);
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let histogram = histogram_g2(&streams[a], &streams[b], axes.axis13)?;
        let profile = normalize_g2(&histogram)?;
        pairs.push(PairCorrelation {
            channels: (streams[a].channel_id, streams[b].channel_id),
            histogram,
            profile,
        });
    }
    Ok(Correlation {
        histogram,
        surface,
        pairs,
    })
}

//! Semiclassical photodetection.
//!
//! A detector fires as an inhomogeneous Poisson process with instantaneous
//! rate `λ(t) = mean_rate_hz · I(t) / I_ref`, where `I(t)` is the linearly
//! interpolated intensity reaching it and `I_ref` the source reference
//! intensity. Sampling is by thinning: within blocks of [`THINNING_BLOCK`]
//! grid intervals, candidates are drawn from a homogeneous process at the
//! block's peak rate and accepted with probability `λ(t)/λ_max`. Linear
//! interpolation never exceeds the larger endpoint, so the block ceiling is a
//! true majorant. Candidates come from per-chunk substreams keyed by channel,
//! which keeps channels conditionally independent given the intensity and
//! makes the output independent of scheduling.
//!
//! Registration times are smeared by Gaussian jitter, shifted by the path
//! delay, quantized to integer picoseconds, sorted, and only then thinned by
//! the dead time.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{IntensityTrace, CHUNK_LEN};
use crate::rng::{substream, Domain};

/// Grid intervals sharing one rate ceiling.
pub const THINNING_BLOCK: usize = 16;

/// Upper bound on mean detections per coherence time.
pub const MAX_COUNTS_PER_COHERENCE_TIME: f64 = 10.0;

pub const EQUAL_SPLIT: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

const PS_PER_S: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub channel_id: u8,
    /// Singles rate when the detector sees the reference intensity.
    pub mean_rate_hz: f64,
    #[serde(default)]
    pub dead_time_s: f64,
    #[serde(default)]
    pub jitter_sigma_s: f64,
    /// Path-length offset added to every registration time.
    #[serde(default)]
    pub delay_s: f64,
}

impl DetectorConfig {
    pub fn new(channel_id: u8, mean_rate_hz: f64) -> Result<Self> {
        let det = DetectorConfig {
            channel_id,
            mean_rate_hz,
            dead_time_s: 0.0,
            jitter_sigma_s: 0.0,
            delay_s: 0.0,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.channel_id) {
            return Err(Error::config(format!(
                "channel id must be 1..=3, got {}",
                self.channel_id
            )));
        }
        if !(self.mean_rate_hz > 0.0 && self.mean_rate_hz.is_finite()) {
            return Err(Error::config(format!(
                "channel {}: mean_rate_hz must be positive",
                self.channel_id
            )));
        }
        if !(self.dead_time_s >= 0.0 && self.dead_time_s.is_finite()) {
            return Err(Error::config(format!(
                "channel {}: dead_time_s must be non-negative",
                self.channel_id
            )));
        }
        if !(self.jitter_sigma_s >= 0.0 && self.jitter_sigma_s.is_finite()) {
            return Err(Error::config(format!(
                "channel {}: jitter_sigma_s must be non-negative",
                self.channel_id
            )));
        }
        if !self.delay_s.is_finite() {
            return Err(Error::config(format!(
                "channel {}: delay_s must be finite",
                self.channel_id
            )));
        }
        Ok(())
    }

    pub fn dead_time_ps(&self) -> u64 {
        (self.dead_time_s * PS_PER_S).round() as u64
    }
}

/// Sorted picosecond registration times of one channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagStream {
    pub channel_id: u8,
    pub tags: Vec<u64>,
    pub origin_duration_ps: u64,
}

impl TimeTagStream {
    pub fn new(channel_id: u8, tags: Vec<u64>, origin_duration_ps: u64) -> Result<Self> {
        if tags.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::format("time-tag stream", "tags are not sorted"));
        }
        if let Some(&last) = tags.last() {
            if last >= origin_duration_ps {
                return Err(Error::format(
                    "time-tag stream",
                    format!("tag {last} ps is outside the {origin_duration_ps} ps acquisition"),
                ));
            }
        }
        Ok(TimeTagStream {
            channel_id,
            tags,
            origin_duration_ps,
        })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn mean_rate_hz(&self) -> f64 {
        self.tags.len() as f64 / (self.origin_duration_ps as f64 / PS_PER_S)
    }

    /// Singles in consecutive bins of `width_ps`; a trailing partial bin is
    /// dropped.
    pub fn macro_bin_counts(&self, width_ps: u64) -> Vec<u64> {
        let bins = (self.origin_duration_ps / width_ps) as usize;
        let mut counts = vec![0u64; bins];
        for &t in &self.tags {
            let b = (t / width_ps) as usize;
            if b < bins {
                counts[b] += 1;
            }
        }
        counts
    }
}

/// Beam-splitter network: channel `k` receives `ratios[k]` of the input.
pub fn split_intensity(
    intensity: &IntensityTrace,
    ratios: [f64; 3],
) -> Result<[IntensityTrace; 3]> {
    validate_ratios(ratios)?;
    Ok(ratios.map(|r| IntensityTrace {
        samples: intensity.samples.iter().map(|&v| r * v).collect(),
        ..intensity.clone()
    }))
}

pub fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(Error::config(format!(
            "split ratios must be non-negative, got {ratios:?}"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Per-channel thinning state shared by the whole-trace and streaming paths.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    det: DetectorConfig,
    seed: u64,
    rate_per_intensity_interval: f64,
    sample_interval_s: f64,
    duration_s: f64,
    duration_ps: u64,
}

impl ChannelSampler {
    pub fn new(
        det: &DetectorConfig,
        seed: u64,
        sample_interval_s: f64,
        reference_intensity: f64,
        duration_s: f64,
        coherence_time_s: Option<f64>,
    ) -> Result<Self> {
        det.validate()?;
        if let Some(tau) = coherence_time_s {
            let per_coherence = det.mean_rate_hz * tau;
            if per_coherence > MAX_COUNTS_PER_COHERENCE_TIME {
                return Err(Error::config(format!(
                    "channel {}: {per_coherence:.3} counts per coherence time exceeds {MAX_COUNTS_PER_COHERENCE_TIME}",
                    det.channel_id
                )));
            }
        }
        if duration_s.is_nan() || duration_s <= 0.0 {
            return Err(Error::config("detection duration must be positive"));
        }
        Ok(ChannelSampler {
            det: *det,
            seed,
            rate_per_intensity_interval: det.mean_rate_hz / reference_intensity * sample_interval_s,
            sample_interval_s,
            duration_s,
            duration_ps: (duration_s * PS_PER_S).round() as u64,
        })
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    /// Draw registrations for chunk `chunk`. `intensity` holds the chunk's
    /// grid values followed by the next chunk's first value, if any; tags are
    /// appended to `out` unsorted.
    pub fn sample_chunk(&self, chunk: usize, intensity: &[f64], out: &mut Vec<u64>) {
        let intervals = intensity.len().saturating_sub(1);
        if intervals == 0 {
            return;
        }
        let ch = self.det.channel_id;
        let mut rng = substream(self.seed, Domain::Thinning(ch), chunk as u64);
        let mut jitter_rng = substream(self.seed, Domain::Jitter(ch), chunk as u64);
        let base = (chunk * CHUNK_LEN) as f64;

        for block_start in (0..intervals).step_by(THINNING_BLOCK) {
            let block_end = (block_start + THINNING_BLOCK).min(intervals);
            let ceiling = intensity[block_start..=block_end]
                .iter()
                .fold(0.0f64, |m, &v| m.max(v));
            if ceiling <= 0.0 {
                continue;
            }
            let candidates_per_interval = self.rate_per_intensity_interval * ceiling;
            let mut x = block_start as f64;
            loop {
                let gap: f64 = rng.sample(Exp1);
                x += gap / candidates_per_interval;
                if x >= block_end as f64 {
                    break;
                }
                let i = x as usize;
                let frac = x - i as f64;
                let level = intensity[i] + frac * (intensity[i + 1] - intensity[i]);
                if rng.random::<f64>() * ceiling >= level {
                    continue;
                }
                let mut t = (base + x) * self.sample_interval_s + self.det.delay_s;
                if self.det.jitter_sigma_s > 0.0 {
                    let z: f64 = jitter_rng.sample(StandardNormal);
                    t += self.det.jitter_sigma_s * z;
                }
                if !(0.0..self.duration_s).contains(&t) {
                    continue;
                }
                let ps = (t * PS_PER_S).floor() as u64;
                if ps < self.duration_ps {
                    out.push(ps);
                }
            }
        }
    }

    /// Sort the collected registrations and impose the dead time.
    pub fn finish(&self, mut tags: Vec<u64>) -> TimeTagStream {
        tags.par_sort_unstable();
        let stream = TimeTagStream {
            channel_id: self.det.channel_id,
            tags,
            origin_duration_ps: self.duration_ps,
        };
        apply_dead_time(&stream, self.det.dead_time_ps())
    }
}

/// Photodetection events for one channel driven by `intensity`.
pub fn sample_time_tags(
    intensity: &IntensityTrace,
    det: &DetectorConfig,
    seed: u64,
) -> Result<TimeTagStream> {
    if intensity.samples.is_empty() {
        return Err(Error::config("intensity trace is empty"));
    }
    if intensity.samples.iter().all(|&v| v == 0.0) {
        return Err(Error::DarkInput);
    }
    let sampler = ChannelSampler::new(
        det,
        seed,
        intensity.sample_interval_s,
        intensity.reference_intensity,
        intensity.duration_s,
        intensity.coherence_time_s,
    )?;
    let n = intensity.samples.len();
    let chunks = n.saturating_sub(1).div_ceil(CHUNK_LEN).max(1);
    let per_chunk: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK_LEN;
            let end = (start + CHUNK_LEN + 1).min(n);
            let mut out = Vec::new();
            sampler.sample_chunk(c, &intensity.samples[start..end], &mut out);
            out
        })
        .collect();
    Ok(sampler.finish(per_chunk.concat()))
}

/// Greedy hold-off: keep a tag iff it is at least `dead_time_ps` after the
/// previously kept tag.
pub fn apply_dead_time(stream: &TimeTagStream, dead_time_ps: u64) -> TimeTagStream {
    if dead_time_ps == 0 {
        return stream.clone();
    }
    let mut kept = Vec::with_capacity(stream.tags.len());
    let mut last: Option<u64> = None;
    for &t in &stream.tags {
        if last.is_none_or(|l| t - l >= dead_time_ps) {
            kept.push(t);
            last = Some(t);
        }
    }
    TimeTagStream {
        channel_id: stream.channel_id,
        tags: kept,
        origin_duration_ps: stream.origin_duration_ps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(tags: &[u64]) -> TimeTagStream {
        TimeTagStream::new(1, tags.to_vec(), 1000).unwrap()
    }

    #[test]
    fn dead_time_rules() {
        let s = stream(&[0, 5, 11]);
        assert_eq!(apply_dead_time(&s, 0), s);
        assert_eq!(apply_dead_time(&s, 10).tags, vec![0, 11]);
        assert_eq!(apply_dead_time(&stream(&[0, 5, 10]), 10).tags, vec![0, 10]);
        assert_eq!(apply_dead_time(&stream(&[]), 10).tags, Vec::<u64>::new());
    }

    #[test]
    fn stream_validation() {
        assert!(TimeTagStream::new(1, vec![3, 2], 10).is_err());
        assert!(TimeTagStream::new(1, vec![2, 10], 10).is_err());
        assert!(TimeTagStream::new(1, vec![2, 2, 9], 10).is_ok());
    }

    #[test]
    fn split_examples() {
        let input = IntensityTrace::new(1.0, vec![3.0, 1.5, 0.0, 7.25]).unwrap();
        let [a, b, c] = split_intensity(&input, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(a.samples, input.samples);
        assert!(b.samples.iter().chain(&c.samples).all(|&v| v == 0.0));

        let constant = IntensityTrace::new(1.0, vec![3.0; 8]).unwrap();
        for ch in split_intensity(&constant, EQUAL_SPLIT).unwrap() {
            assert!(ch.samples.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        }

        let parts = split_intensity(&input, [0.2, 0.3, 0.5]).unwrap();
        for (i, &v) in input.samples.iter().enumerate() {
            let sum: f64 = parts.iter().map(|p| p.samples[i]).sum();
            assert!((sum - v).abs() <= 1e-12 * v.abs().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let input = IntensityTrace::new(1.0, vec![1.0]).unwrap();
        assert!(split_intensity(&input, [0.5, 0.6, -0.1]).is_err());
        assert!(split_intensity(&input, [0.5, 0.4, 0.0]).is_err());
        assert!(split_intensity(&input, [0.5, 0.5, 1e-12]).is_ok());
    }

    #[test]
    fn dark_and_empty_inputs_rejected() {
        let det = DetectorConfig::new(1, 1e3).unwrap();
        let dark = IntensityTrace::new(1e-3, vec![0.0; 100]).unwrap();
        assert!(matches!(
            sample_time_tags(&dark, &det, 1),
            Err(Error::DarkInput)
        ));
        let empty = IntensityTrace::new(1e-3, vec![]).unwrap();
        assert!(matches!(
            sample_time_tags(&empty, &det, 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn rate_ceiling_per_coherence_time_enforced() {
        let det = DetectorConfig::new(1, 1e8).unwrap();
        let trace = IntensityTrace::new(1e-8, vec![1.0; 100])
            .unwrap()
            .with_coherence_time(2e-7);
        assert!(matches!(
            sample_time_tags(&trace, &det, 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn detector_config_validation() {
        assert!(DetectorConfig::new(0, 1.0).is_err());
        assert!(DetectorConfig::new(4, 1.0).is_err());
        assert!(DetectorConfig::new(1, 0.0).is_err());
        let mut det = DetectorConfig::new(2, 1.0).unwrap();
        det.dead_time_s = -1.0;
        assert!(det.validate().is_err());
    }

    #[test]
    fn constant_intensity_count_is_poisson() {
        let det = DetectorConfig::new(1, 1e4).unwrap();
        let trace = IntensityTrace::new(1e-3, vec![1.0; 100_001]).unwrap();
        let s = sample_time_tags(&trace, &det, 42).unwrap();
        let n = s.len() as f64;
        assert!((n - 1e6).abs() <= 3e3, "count {n}");
        assert_eq!(s.origin_duration_ps, 100_000_000_000_000);
        assert!(s.tags.windows(2).all(|w| w[0] <= w[1]));
        assert!(*s.tags.last().unwrap() < s.origin_duration_ps);
    }

    #[test]
    fn dead_time_leaves_gaps() {
        let mut det = DetectorConfig::new(1, 1e6).unwrap();
        det.dead_time_s = 2e-7;
        let trace = IntensityTrace::new(1e-6, vec![1.0; 20_001]).unwrap();
        let s = sample_time_tags(&trace, &det, 3).unwrap();
        assert!(s.tags.windows(2).all(|w| w[1] - w[0] >= 200_000));
    }

    #[test]
    fn delay_shifts_registrations() {
        let det = DetectorConfig::new(1, 1e5).unwrap();
        let delayed = DetectorConfig {
            delay_s: 1e-6,
            ..det
        };
        let trace = IntensityTrace::new(1e-5, vec![1.0; 1001]).unwrap();
        let a = sample_time_tags(&trace, &det, 9).unwrap();
        let b = sample_time_tags(&trace, &delayed, 9).unwrap();
        let shifted: Vec<u64> = a
            .tags
            .iter()
            .map(|t| t + 1_000_000)
            .filter(|&t| t < a.origin_duration_ps)
            .collect();
        // floor() of a shifted float can differ by one picosecond
        assert_eq!(shifted.len(), b.tags.len());
        for (x, y) in shifted.iter().zip(&b.tags) {
            assert!(x.abs_diff(*y) <= 1);
        }
    }
}

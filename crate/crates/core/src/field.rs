//! Chaotic-field synthesis.
//!
//! The complex envelope is a sum of `M` equal-amplitude modes with detunings
//! drawn uniformly over the band `[-Δω/2, Δω/2]` and independent uniform
//! phases:
//!
//! ```text
//! E(t) = sqrt(I0 / M) · Σ_k exp(i(δω_k·t + φ_k))
//! ```
//!
//! The carrier is dropped; only the detunings matter for intensity
//! correlations. Samples are produced on a grid of ten points per coherence
//! time in chunks of [`CHUNK_LEN`]. Each chunk starts from freshly evaluated
//! phasors and advances them by a fixed per-mode rotation, so any chunk can be
//! computed independently and the trace does not depend on how chunks are
//! distributed across threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::sinc;
use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

pub const DEFAULT_NUM_MODES: usize = 256;

/// Grid points per coherence time.
pub const SAMPLES_PER_COHERENCE_TIME: usize = 10;

/// Samples per synthesis chunk.
pub const CHUNK_LEN: usize = 4096;

/// Shortest accepted trace, in coherence times.
pub const MIN_DURATION_COHERENCE_TIMES: f64 = 100.0;

const LANES: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumShape {
    #[default]
    Rectangular,
}

fn default_mean_intensity() -> f64 {
    1.0
}

fn default_num_modes() -> usize {
    DEFAULT_NUM_MODES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Full angular-frequency width of the spectrum.
    pub bandwidth_rad_per_s: f64,
    #[serde(default = "default_num_modes")]
    pub num_modes: usize,
    #[serde(default = "default_mean_intensity")]
    pub mean_intensity: f64,
    #[serde(default)]
    pub spectrum_shape: SpectrumShape,
}

impl FieldConfig {
    pub fn new(bandwidth_rad_per_s: f64, num_modes: usize) -> Result<Self> {
        let config = FieldConfig {
            bandwidth_rad_per_s,
            num_modes,
            mean_intensity: 1.0,
            spectrum_shape: SpectrumShape::Rectangular,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_mean_intensity(mut self, mean_intensity: f64) -> Result<Self> {
        self.mean_intensity = mean_intensity;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_rad_per_s > 0.0 && self.bandwidth_rad_per_s.is_finite()) {
            return Err(Error::config(format!(
                "bandwidth must be positive and finite, got {}",
                self.bandwidth_rad_per_s
            )));
        }
        if self.num_modes == 0 {
            return Err(Error::config("num_modes must be at least 1"));
        }
        if !(self.mean_intensity > 0.0 && self.mean_intensity.is_finite()) {
            return Err(Error::config(format!(
                "mean_intensity must be positive and finite, got {}",
                self.mean_intensity
            )));
        }
        Ok(())
    }

    pub fn coherence_time_s(&self) -> f64 {
        coherence_time(self)
    }

    /// Grid spacing: a tenth of the coherence time, well inside the envelope
    /// Nyquist limit `π/Δω`.
    pub fn sample_interval_s(&self) -> f64 {
        self.coherence_time_s() / SAMPLES_PER_COHERENCE_TIME as f64
    }

    /// Number of grid samples needed to cover `[0, duration_s]`.
    pub fn num_samples(&self, duration_s: f64) -> usize {
        (duration_s / self.sample_interval_s()).ceil() as usize + 1
    }

    pub fn check_duration(&self, duration_s: f64) -> Result<()> {
        let minimum = MIN_DURATION_COHERENCE_TIMES * self.coherence_time_s();
        if !(duration_s.is_finite() && duration_s >= minimum) {
            return Err(Error::config(format!(
                "duration {duration_s} s is shorter than {MIN_DURATION_COHERENCE_TIMES} coherence times ({minimum} s)"
            )));
        }
        Ok(())
    }
}

/// Coherence time `2π/Δω`: the first zero of the field's sinc coherence.
pub fn coherence_time(config: &FieldConfig) -> f64 {
    2.0 * PI / config.bandwidth_rad_per_s
}

type Lanes = [f64; LANES];

fn advance_portable(
    z_re: &mut [Lanes],
    z_im: &mut [Lanes],
    rot_re: &[Lanes],
    rot_im: &[Lanes],
    amplitude: f64,
    out: &mut [Complex64],
) {
    for slot in out.iter_mut() {
        let mut acc_re = [0.0; LANES];
        let mut acc_im = [0.0; LANES];
        for (((zr, zi), c), s) in z_re.iter_mut().zip(z_im.iter_mut()).zip(rot_re).zip(rot_im) {
            for l in 0..LANES {
                let (x, y) = (zr[l], zi[l]);
                acc_re[l] += x;
                acc_im[l] += y;
                zr[l] = x * c[l] - y * s[l];
                zi[l] = x * s[l] + y * c[l];
            }
        }
        let re: f64 = acc_re.iter().sum();
        let im: f64 = acc_im.iter().sum();
        *slot = Complex64::new(amplitude * re, amplitude * im);
    }
}

// Same operations in the same order as the portable loop, so both paths are
// bit-identical.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn advance_avx512(
    z_re: &mut [Lanes],
    z_im: &mut [Lanes],
    rot_re: &[Lanes],
    rot_im: &[Lanes],
    amplitude: f64,
    out: &mut [Complex64],
) {
    use std::arch::x86_64::*;
    let blocks = z_re.len();
    for slot in out.iter_mut() {
        let mut acc_re = _mm512_setzero_pd();
        let mut acc_im = _mm512_setzero_pd();
        for j in 0..blocks {
            let zr = z_re.as_mut_ptr().add(j) as *mut f64;
            let zi = z_im.as_mut_ptr().add(j) as *mut f64;
            let x = _mm512_loadu_pd(zr);
            let y = _mm512_loadu_pd(zi);
            let c = _mm512_loadu_pd(rot_re.as_ptr().add(j) as *const f64);
            let s = _mm512_loadu_pd(rot_im.as_ptr().add(j) as *const f64);
            acc_re = _mm512_add_pd(acc_re, x);
            acc_im = _mm512_add_pd(acc_im, y);
            _mm512_storeu_pd(zr, _mm512_sub_pd(_mm512_mul_pd(x, c), _mm512_mul_pd(y, s)));
            _mm512_storeu_pd(zi, _mm512_add_pd(_mm512_mul_pd(x, s), _mm512_mul_pd(y, c)));
        }
        let mut lanes_re = [0.0; LANES];
        let mut lanes_im = [0.0; LANES];
        _mm512_storeu_pd(lanes_re.as_mut_ptr(), acc_re);
        _mm512_storeu_pd(lanes_im.as_mut_ptr(), acc_im);
        let re: f64 = lanes_re.iter().sum();
        let im: f64 = lanes_im.iter().sum();
        *slot = Complex64::new(amplitude * re, amplitude * im);
    }
}

fn advance(
    z_re: &mut [Lanes],
    z_im: &mut [Lanes],
    rot_re: &[Lanes],
    rot_im: &[Lanes],
    amplitude: f64,
    out: &mut [Complex64],
) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx512f") {
        // SAFETY: the feature is present and all four slices have the same length.
        return unsafe { advance_avx512(z_re, z_im, rot_re, rot_im, amplitude, out) };
    }
    advance_portable(z_re, z_im, rot_re, rot_im, amplitude, out)
}

/// Drawn mode set plus the per-sample rotations used to advance it.
#[derive(Debug, Clone)]
pub struct FieldSynthesizer {
    amplitude: f64,
    sample_interval_s: f64,
    detuning: Vec<f64>,
    phase: Vec<f64>,
    rot_re: Vec<[f64; LANES]>,
    rot_im: Vec<[f64; LANES]>,
}

impl FieldSynthesizer {
    pub fn new(config: &FieldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(seed, Domain::Modes, 0);
        let m = config.num_modes;
        let mut detuning = Vec::with_capacity(m);
        let mut phase = Vec::with_capacity(m);
        for _ in 0..m {
            detuning.push((rng.random::<f64>() - 0.5) * config.bandwidth_rad_per_s);
            phase.push(2.0 * PI * rng.random::<f64>());
        }
        let dt = config.sample_interval_s();
        let blocks = m.div_ceil(LANES);
        let mut rot_re = vec![[1.0; LANES]; blocks];
        let mut rot_im = vec![[0.0; LANES]; blocks];
        for (k, w) in detuning.iter().enumerate() {
            let (s, c) = (w * dt).sin_cos();
            rot_re[k / LANES][k % LANES] = c;
            rot_im[k / LANES][k % LANES] = s;
        }
        Ok(FieldSynthesizer {
            amplitude: (config.mean_intensity / m as f64).sqrt(),
            sample_interval_s: dt,
            detuning,
            phase,
            rot_re,
            rot_im,
        })
    }

    pub fn sample_interval_s(&self) -> f64 {
        self.sample_interval_s
    }

    /// Mode detunings in rad/s.
    pub fn detunings(&self) -> &[f64] {
        &self.detuning
    }

    /// Counting excess of this particular mode set over windows of
    /// `window_s`: the time-averaged relative variance of the integrated
    /// intensity, `(1/M²)·Σ_{k≠l} sinc²((ω_k − ω_l)·T/2)`.
    ///
    /// Its mean over mode draws is `(1 − 1/M)` times the ensemble value from
    /// [`crate::analytic::counting_excess`].
    pub fn counting_excess(&self, window_s: f64) -> f64 {
        let m = self.detuning.len();
        let mut sum = 0.0;
        for (k, wk) in self.detuning.iter().enumerate() {
            for wl in &self.detuning[k + 1..] {
                let s = sinc((wk - wl) * window_s / 2.0);
                sum += s * s;
            }
        }
        2.0 * sum / (m * m) as f64
    }

    /// Envelope at grid indices `start, start + 1, ...` written into `out`.
    ///
    /// Callers keep `start` chunk-aligned and `out.len() <= CHUNK_LEN`; the
    /// value at a given index then never depends on who computed it.
    pub fn fill(&self, start: u64, out: &mut [Complex64]) {
        let blocks = self.rot_re.len();
        let t0 = start as f64 * self.sample_interval_s;
        let mut z_re = vec![[0.0; LANES]; blocks];
        let mut z_im = vec![[0.0; LANES]; blocks];
        for (k, (w, phi)) in self.detuning.iter().zip(&self.phase).enumerate() {
            let (s, c) = (w * t0 + phi).sin_cos();
            z_re[k / LANES][k % LANES] = c;
            z_im[k / LANES][k % LANES] = s;
        }
        advance(
            &mut z_re,
            &mut z_im,
            &self.rot_re,
            &self.rot_im,
            self.amplitude,
            out,
        );
    }

    /// Intensity for chunk `chunk` of a grid with `num_samples` points, plus
    /// the first sample of the following chunk when one exists. The result
    /// holds every grid value needed to interpolate across the chunk's
    /// intervals.
    pub fn intensity_chunk(&self, chunk: usize, num_samples: usize, out: &mut Vec<f64>) {
        let start = chunk * CHUNK_LEN;
        let end = (start + CHUNK_LEN).min(num_samples);
        let mut buf = vec![Complex64::new(0.0, 0.0); end - start];
        self.fill(start as u64, &mut buf);
        out.clear();
        out.extend(buf.iter().map(|e| modulus_squared(*e)));
        if end < num_samples {
            let mut next = [Complex64::new(0.0, 0.0)];
            self.fill(end as u64, &mut next);
            out.push(modulus_squared(next[0]));
        }
    }
}

#[inline]
pub(crate) fn modulus_squared(e: Complex64) -> f64 {
    e.re * e.re + e.im * e.im
}

/// A sampled complex envelope on a uniform grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrace {
    pub sample_interval_s: f64,
    pub samples: Vec<Complex64>,
    pub config: FieldConfig,
    pub seed: u64,
    pub duration_s: f64,
}

impl FieldTrace {
    pub fn time_s(&self, index: usize) -> f64 {
        index as f64 * self.sample_interval_s
    }
}

/// Synthesize the envelope over `[0, duration_s]`.
pub fn generate_field(config: &FieldConfig, duration_s: f64, seed: u64) -> Result<FieldTrace> {
    config.validate()?;
    config.check_duration(duration_s)?;
    let synth = FieldSynthesizer::new(config, seed)?;
    let n = config.num_samples(duration_s);
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    samples
        .par_chunks_mut(CHUNK_LEN)
        .enumerate()
        .for_each(|(c, buf)| synth.fill((c * CHUNK_LEN) as u64, buf));
    Ok(FieldTrace {
        sample_interval_s: synth.sample_interval_s(),
        samples,
        config: *config,
        seed,
        duration_s,
    })
}

/// Non-negative intensity on a uniform grid.
///
/// `reference_intensity` is the intensity at which a detector fires at its
/// nominal rate; traces derived from a field use the source's mean intensity
/// and keep it through beam splitting. `duration_s` bounds the detection
/// window and must not exceed the span of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTrace {
    pub sample_interval_s: f64,
    pub samples: Vec<f64>,
    pub reference_intensity: f64,
    pub duration_s: f64,
    pub coherence_time_s: Option<f64>,
}

impl IntensityTrace {
    /// Trace with unit reference intensity spanning the whole grid.
    pub fn new(sample_interval_s: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_interval_s > 0.0 && sample_interval_s.is_finite()) {
            return Err(Error::config("sample interval must be positive"));
        }
        if samples.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::config(
                "intensity samples must be finite and non-negative",
            ));
        }
        let duration_s = samples.len().saturating_sub(1) as f64 * sample_interval_s;
        Ok(IntensityTrace {
            sample_interval_s,
            samples,
            reference_intensity: 1.0,
            duration_s,
            coherence_time_s: None,
        })
    }

    pub fn with_reference_intensity(mut self, reference: f64) -> Result<Self> {
        if !(reference > 0.0 && reference.is_finite()) {
            return Err(Error::config("reference intensity must be positive"));
        }
        self.reference_intensity = reference;
        Ok(self)
    }

    pub fn with_duration(mut self, duration_s: f64) -> Result<Self> {
        let span = self.samples.len().saturating_sub(1) as f64 * self.sample_interval_s;
        if !(duration_s > 0.0 && duration_s <= span * (1.0 + 1e-12)) {
            return Err(Error::config(format!(
                "duration {duration_s} s outside the grid span {span} s"
            )));
        }
        self.duration_s = duration_s;
        Ok(self)
    }

    pub fn with_coherence_time(mut self, coherence_time_s: f64) -> Self {
        self.coherence_time_s = Some(coherence_time_s);
        self
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// Pointwise `|E|²` on the field's grid.
pub fn intensity(trace: &FieldTrace) -> IntensityTrace {
    IntensityTrace {
        sample_interval_s: trace.sample_interval_s,
        samples: trace.samples.iter().map(|e| modulus_squared(*e)).collect(),
        reference_intensity: trace.config.mean_intensity,
        duration_s: trace.duration_s,
        coherence_time_s: Some(trace.config.coherence_time_s()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(m: usize) -> FieldConfig {
        FieldConfig::new(2.0 * PI * 5.0e6, m).unwrap()
    }

    #[test]
    fn simd_and_portable_paths_agree_bitwise() {
        let synth = FieldSynthesizer::new(&config(37), 9).unwrap();
        let blocks = synth.rot_re.len();
        let mut z_re = vec![[0.0; LANES]; blocks];
        let mut z_im = vec![[0.0; LANES]; blocks];
        for k in 0..37 {
            let (s, c) = synth.phase[k].sin_cos();
            z_re[k / LANES][k % LANES] = c;
            z_im[k / LANES][k % LANES] = s;
        }
        let (mut re2, mut im2) = (z_re.clone(), z_im.clone());
        let mut a = vec![Complex64::new(0.0, 0.0); 500];
        let mut b = a.clone();
        advance(
            &mut z_re,
            &mut z_im,
            &synth.rot_re,
            &synth.rot_im,
            synth.amplitude,
            &mut a,
        );
        advance_portable(
            &mut re2,
            &mut im2,
            &synth.rot_re,
            &synth.rot_im,
            synth.amplitude,
            &mut b,
        );
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn coherence_time_conventions() {
        assert!((config(1).coherence_time_s() - 0.2e-6).abs() < 1e-20);
        let unit = FieldConfig::new(2.0 * PI, 1).unwrap();
        assert!((coherence_time(&unit) - 1.0).abs() < 1e-15);
        let double = FieldConfig::new(4.0 * PI * 5.0e6, 1).unwrap();
        assert!((coherence_time(&double) * 2.0 - coherence_time(&config(1))).abs() < 1e-20);
    }

    #[test]
    fn config_invariants_enforced() {
        assert!(FieldConfig::new(0.0, 4).is_err());
        assert!(FieldConfig::new(-1.0, 4).is_err());
        assert!(FieldConfig::new(1.0, 0).is_err());
        assert!(config(4).with_mean_intensity(0.0).is_err());
        assert!(config(4).with_mean_intensity(2.5).is_ok());
    }

    #[test]
    fn duration_below_minimum_rejected() {
        let c = config(8);
        let tau = c.coherence_time_s();
        assert!(generate_field(&c, 99.0 * tau, 1).is_err());
        assert!(generate_field(&c, 100.0 * tau, 1).is_ok());
    }

    #[test]
    fn sampling_satisfies_nyquist() {
        let c = config(8);
        assert!(c.sample_interval_s() * c.bandwidth_rad_per_s <= PI);
        assert_eq!(
            (c.coherence_time_s() / c.sample_interval_s()).round() as usize,
            SAMPLES_PER_COHERENCE_TIME
        );
    }

    #[test]
    fn single_mode_has_constant_modulus() {
        let c = config(1).with_mean_intensity(2.0).unwrap();
        let trace = generate_field(&c, 200.0 * c.coherence_time_s(), 9).unwrap();
        for i in intensity(&trace).samples {
            assert!((i - 2.0).abs() < 1e-9, "{i}");
        }
    }

    #[test]
    fn intensity_is_modulus_squared() {
        let make = |samples: Vec<Complex64>| FieldTrace {
            sample_interval_s: 1.0,
            samples,
            config: config(1),
            seed: 0,
            duration_s: 1.0,
        };
        let zeros = intensity(&make(vec![Complex64::new(0.0, 0.0); 4]));
        assert!(zeros.samples.iter().all(|&v| v == 0.0));
        assert_eq!(
            intensity(&make(vec![Complex64::new(1.0, 0.0)])).samples,
            vec![1.0]
        );
        assert_eq!(
            intensity(&make(vec![Complex64::new(3.0, 4.0)])).samples,
            vec![25.0]
        );
    }

    #[test]
    fn generation_is_deterministic_and_seed_dependent() {
        let c = config(32);
        let d = 150.0 * c.coherence_time_s();
        let a = generate_field(&c, d, 5).unwrap();
        let b = generate_field(&c, d, 5).unwrap();
        assert_eq!(a.samples, b.samples);
        let other = generate_field(&c, d, 6).unwrap();
        assert_ne!(a.samples, other.samples);
    }

    #[test]
    fn chunked_intensity_matches_full_trace() {
        let c = config(16);
        let d = 1000.0 * c.coherence_time_s();
        let trace = generate_field(&c, d, 11).unwrap();
        let full = intensity(&trace);
        let synth = FieldSynthesizer::new(&c, 11).unwrap();
        let n = full.samples.len();
        let mut buf = Vec::new();
        for chunk in 0..n.div_ceil(CHUNK_LEN) {
            synth.intensity_chunk(chunk, n, &mut buf);
            let start = chunk * CHUNK_LEN;
            let end = (start + CHUNK_LEN + 1).min(n);
            assert_eq!(&buf[..], &full.samples[start..end]);
        }
    }

    #[test]
    fn intensity_trace_validation() {
        assert!(IntensityTrace::new(1.0, vec![1.0, -0.5]).is_err());
        assert!(IntensityTrace::new(0.0, vec![1.0]).is_err());
        let t = IntensityTrace::new(0.5, vec![1.0; 5]).unwrap();
        assert_eq!(t.duration_s, 2.0);
        assert!(t.clone().with_duration(2.5).is_err());
        assert!(t.with_reference_intensity(0.0).is_err());
    }
}

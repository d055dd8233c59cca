//! Coincidence counting over time-tag streams.
//!
//! Delays are measured on a cell grid: each tag is assigned the cell
//! `(t − origin) / bin_width`, where `origin` is the earliest tag among the
//! correlated streams, and a coincidence lands in the bin given by the
//! difference of cell indices. Bin `k` of an axis therefore holds delays whose
//! cells differ by `k` and is reported at coordinate `k · bin_width`. The
//! central bin collects events registered in the same cell, which is how a
//! time tagger with finite resolution sees simultaneity.
//!
//! Both histograms sweep the anchor stream (`b` for two-fold, `s3` for
//! three-fold) with monotone cursors into the other streams. Every coincidence
//! belongs to exactly one anchor tag, so the anchor stream can be cut into
//! partitions that are counted independently and summed; the result does not
//! depend on how many partitions or threads were used.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::TimeTagStream;
use crate::error::{Error, Result};

/// Anchor tags per parallel work item.
const PARTITION_LEN: usize = 1 << 15;

/// Background bins must be further than this many coherence times from every
/// peak ridge.
pub const BACKGROUND_COHERENCE_MULTIPLE: f64 = 5.0;

/// Minimum number of background bins for a contrast estimate.
pub const MIN_BACKGROUND_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramAxis {
    pub bin_width_ps: u64,
    pub half_range_ps: u64,
}

impl HistogramAxis {
    pub fn new(bin_width_ps: u64, half_range_ps: u64) -> Result<Self> {
        let axis = HistogramAxis {
            bin_width_ps,
            half_range_ps,
        };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_width_ps == 0 || self.half_range_ps == 0 {
            return Err(Error::config(
                "histogram bin width and half range must be positive",
            ));
        }
        if !self.half_range_ps.is_multiple_of(self.bin_width_ps) {
            return Err(Error::config(format!(
                "half range {} ps is not a multiple of bin width {} ps",
                self.half_range_ps, self.bin_width_ps
            )));
        }
        Ok(())
    }

    pub fn bins_per_side(&self) -> i64 {
        (self.half_range_ps / self.bin_width_ps) as i64
    }

    pub fn num_bins(&self) -> usize {
        2 * self.bins_per_side() as usize
    }

    /// Cell differences covered by the axis, ascending.
    pub fn bin_offsets(&self) -> std::ops::Range<i64> {
        let n = self.bins_per_side();
        -n..n
    }

    pub fn coordinate_ps(&self, offset: i64) -> i64 {
        offset * self.bin_width_ps as i64
    }

    pub fn index_of(&self, offset: i64) -> Option<usize> {
        let n = self.bins_per_side();
        (-n..n).contains(&offset).then(|| (offset + n) as usize)
    }
}

/// Acquisition bookkeeping carried by histograms for normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acquisition {
    pub duration_ps: u64,
    pub channel_ids: Vec<u8>,
    pub singles: Vec<u64>,
}

impl Acquisition {
    fn from_streams(streams: &[&TimeTagStream]) -> Result<Self> {
        let duration_ps = streams[0].origin_duration_ps;
        if let Some(other) = streams.iter().find(|s| s.origin_duration_ps != duration_ps) {
            return Err(Error::AcquisitionMismatch(format!(
                "channel {} spans {} ps but channel {} spans {} ps",
                streams[0].channel_id, duration_ps, other.channel_id, other.origin_duration_ps
            )));
        }
        Ok(Acquisition {
            duration_ps,
            channel_ids: streams.iter().map(|s| s.channel_id).collect(),
            singles: streams.iter().map(|s| s.tags.len() as u64).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub axis: HistogramAxis,
    pub counts: Vec<u64>,
    pub total_pairs: u64,
    pub acquisition: Acquisition,
}

impl Histogram1D {
    pub fn count(&self, offset: i64) -> Option<u64> {
        self.axis.index_of(offset).map(|i| self.counts[i])
    }
}

/// Three-fold coincidences over `(t1 − t3, t2 − t3)`; `counts` is row-major
/// with the `t13` axis as rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceHistogram2D {
    pub axis13: HistogramAxis,
    pub axis23: HistogramAxis,
    pub counts: Vec<u64>,
    pub total_triples: u64,
    pub acquisition: Acquisition,
}

impl CoincidenceHistogram2D {
    pub fn count(&self, k13: i64, k23: i64) -> Option<u64> {
        let row = self.axis13.index_of(k13)?;
        let col = self.axis23.index_of(k23)?;
        Some(self.counts[row * self.axis23.num_bins() + col])
    }

    pub fn validate(&self) -> Result<()> {
        self.axis13.validate()?;
        self.axis23.validate()?;
        if self.counts.len() != self.axis13.num_bins() * self.axis23.num_bins() {
            return Err(Error::format("histogram", "grid size does not match axes"));
        }
        if self.counts.iter().sum::<u64>() != self.total_triples {
            return Err(Error::format(
                "histogram",
                "counts do not sum to total_triples",
            ));
        }
        if self.acquisition.singles.len() != 3 {
            return Err(Error::format(
                "histogram",
                "expected singles for three channels",
            ));
        }
        Ok(())
    }
}

/// Estimated `g3` per bin with propagated Poisson standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSurface {
    pub axis13: HistogramAxis,
    pub axis23: HistogramAxis,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl NormalizedSurface {
    pub fn new(
        axis13: HistogramAxis,
        axis23: HistogramAxis,
        values: Vec<f64>,
        stderr: Vec<f64>,
    ) -> Result<Self> {
        let n = axis13.num_bins() * axis23.num_bins();
        if values.len() != n || stderr.len() != n {
            return Err(Error::format("surface", "grid size does not match axes"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("surface", "non-finite value"));
        }
        if stderr.iter().any(|e| e.is_nan() || *e < 0.0) {
            return Err(Error::format("surface", "negative or NaN standard error"));
        }
        Ok(NormalizedSurface {
            axis13,
            axis23,
            values,
            stderr,
        })
    }

    fn flat_index(&self, k13: i64, k23: i64) -> Option<usize> {
        let row = self.axis13.index_of(k13)?;
        let col = self.axis23.index_of(k23)?;
        Some(row * self.axis23.num_bins() + col)
    }

    pub fn value(&self, k13: i64, k23: i64) -> Option<f64> {
        self.flat_index(k13, k23).map(|i| self.values[i])
    }

    pub fn stderr_at(&self, k13: i64, k23: i64) -> Option<f64> {
        self.flat_index(k13, k23).map(|i| self.stderr[i])
    }

    /// Iterates `(k13, k23, value, stderr)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, i64, f64, f64)> + '_ {
        let cols = self.axis23.num_bins();
        let n13 = self.axis13.bins_per_side();
        let n23 = self.axis23.bins_per_side();
        self.values
            .iter()
            .zip(&self.stderr)
            .enumerate()
            .map(move |(i, (&v, &e))| ((i / cols) as i64 - n13, (i % cols) as i64 - n23, v, e))
    }
}

/// A one-dimensional estimate: `g2` against delay, or a slice of a surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub coordinate_ps: Vec<i64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Profile {
    pub fn value_at(&self, coordinate_ps: i64) -> Option<f64> {
        self.coordinate_ps
            .iter()
            .position(|&c| c == coordinate_ps)
            .map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub peak_value: f64,
    pub background_value: f64,
    pub contrast_ratio: f64,
    pub visibility: f64,
    pub peak_stderr: f64,
    pub background_stderr: f64,
    pub peak_t13_ps: i64,
    pub peak_t23_ps: i64,
    pub background_bins: usize,
}

impl ContrastReport {
    pub fn from_levels(
        peak: f64,
        peak_stderr: f64,
        background: f64,
        background_stderr: f64,
    ) -> Result<Self> {
        if !(peak > 0.0 && background > 0.0) {
            return Err(Error::Normalization(format!(
                "contrast needs positive peak and background, got {peak} and {background}"
            )));
        }
        Ok(ContrastReport {
            peak_value: peak,
            background_value: background,
            contrast_ratio: peak / background,
            visibility: (peak - background) / (peak + background),
            peak_stderr,
            background_stderr,
            peak_t13_ps: 0,
            peak_t23_ps: 0,
            background_bins: 0,
        })
    }
}

/// Cell index of every tag relative to `origin`.
#[inline]
fn cell(tag: u64, origin: u64, width: u64) -> i64 {
    ((tag - origin) / width) as i64
}

fn common_origin(streams: &[&TimeTagStream]) -> Option<u64> {
    streams.iter().filter_map(|s| s.tags.first().copied()).min()
}

/// First index in `tags` whose cell is `>= target_cell`.
fn lower_bound_cell(tags: &[u64], origin: u64, width: u64, target_cell: i64) -> usize {
    if target_cell <= 0 {
        return 0;
    }
    let threshold = origin.saturating_add((target_cell as u64).saturating_mul(width));
    tags.partition_point(|&t| t < threshold)
}

/// Monotone window of tags whose cell lies in `[lo_cell, hi_cell)`.
struct CellWindow<'a> {
    tags: &'a [u64],
    origin: u64,
    width: u64,
    lo: usize,
    hi: usize,
}

impl<'a> CellWindow<'a> {
    fn new(tags: &'a [u64], origin: u64, width: u64) -> Self {
        CellWindow {
            tags,
            origin,
            width,
            lo: 0,
            hi: 0,
        }
    }

    fn seek(&mut self, lo_cell: i64, hi_cell: i64) {
        self.lo = lower_bound_cell(self.tags, self.origin, self.width, lo_cell);
        self.hi = lower_bound_cell(self.tags, self.origin, self.width, hi_cell).max(self.lo);
    }

    /// Advance to a later window; cells never move backwards.
    fn advance(&mut self, lo_cell: i64, hi_cell: i64) {
        while self.lo < self.tags.len()
            && cell(self.tags[self.lo], self.origin, self.width) < lo_cell
        {
            self.lo += 1;
        }
        if self.hi < self.lo {
            self.hi = self.lo;
        }
        while self.hi < self.tags.len()
            && cell(self.tags[self.hi], self.origin, self.width) < hi_cell
        {
            self.hi += 1;
        }
    }

    fn slice(&self) -> &'a [u64] {
        &self.tags[self.lo..self.hi]
    }
}

/// Two-fold coincidence histogram of delays `t_a − t_b`.
pub fn histogram_g2(
    a: &TimeTagStream,
    b: &TimeTagStream,
    axis: HistogramAxis,
) -> Result<Histogram1D> {
    histogram_g2_partitioned(a, b, axis, PARTITION_LEN)
}

/// [`histogram_g2`] with anchors of `b` split into runs of `partition_len`
/// counted independently. The result does not depend on `partition_len`.
pub fn histogram_g2_partitioned(
    a: &TimeTagStream,
    b: &TimeTagStream,
    axis: HistogramAxis,
    partition_len: usize,
) -> Result<Histogram1D> {
    axis.validate()?;
    let partition_len = check_partition(partition_len)?;
    let acquisition = Acquisition::from_streams(&[a, b])?;
    let nbins = axis.num_bins();
    let width = axis.bin_width_ps;
    let side = axis.bins_per_side();

    let counts = match common_origin(&[a, b]) {
        None => vec![0; nbins],
        Some(origin) => b
            .tags
            .par_chunks(partition_len)
            .map(|anchors| {
                let mut counts = vec![0u64; nbins];
                let mut window = CellWindow::new(&a.tags, origin, width);
                let first = cell(anchors[0], origin, width);
                window.seek(first - side, first + side);
                for &tb in anchors {
                    let cb = cell(tb, origin, width);
                    window.advance(cb - side, cb + side);
                    for &ta in window.slice() {
                        let k = cell(ta, origin, width) - cb;
                        counts[(k + side) as usize] += 1;
                    }
                }
                counts
            })
            .reduce(|| vec![0u64; nbins], add_counts),
    };
    let total_pairs = counts.iter().sum();
    Ok(Histogram1D {
        axis,
        counts,
        total_pairs,
        acquisition,
    })
}

/// Three-fold coincidence histogram over `(t1 − t3, t2 − t3)`.
pub fn histogram_g3(
    s1: &TimeTagStream,
    s2: &TimeTagStream,
    s3: &TimeTagStream,
    axis13: HistogramAxis,
    axis23: HistogramAxis,
) -> Result<CoincidenceHistogram2D> {
    histogram_g3_partitioned(s1, s2, s3, axis13, axis23, PARTITION_LEN)
}

/// [`histogram_g3`] with the anchors of `s3` split into runs of
/// `partition_len` counted independently and summed. Each anchor owns its
/// triples, so nothing is counted twice and the result does not depend on
/// `partition_len`.
pub fn histogram_g3_partitioned(
    s1: &TimeTagStream,
    s2: &TimeTagStream,
    s3: &TimeTagStream,
    axis13: HistogramAxis,
    axis23: HistogramAxis,
    partition_len: usize,
) -> Result<CoincidenceHistogram2D> {
    axis13.validate()?;
    let partition_len = check_partition(partition_len)?;
    axis23.validate()?;
    let acquisition = Acquisition::from_streams(&[s1, s2, s3])?;
    let rows = axis13.num_bins();
    let cols = axis23.num_bins();
    let (w13, w23) = (axis13.bin_width_ps, axis23.bin_width_ps);
    let (side13, side23) = (axis13.bins_per_side(), axis23.bins_per_side());

    let counts = match common_origin(&[s1, s2, s3]) {
        None => vec![0; rows * cols],
        Some(origin) => s3
            .tags
            .par_chunks(partition_len)
            .map(|anchors| {
                let mut counts = vec![0u64; rows * cols];
                let mut win1 = CellWindow::new(&s1.tags, origin, w13);
                let mut win2 = CellWindow::new(&s2.tags, origin, w23);
                let c13 = cell(anchors[0], origin, w13);
                let c23 = cell(anchors[0], origin, w23);
                win1.seek(c13 - side13, c13 + side13);
                win2.seek(c23 - side23, c23 + side23);
                let mut columns: Vec<usize> = Vec::new();
                for &t3 in anchors {
                    let c13 = cell(t3, origin, w13);
                    let c23 = cell(t3, origin, w23);
                    win1.advance(c13 - side13, c13 + side13);
                    win2.advance(c23 - side23, c23 + side23);
                    let (near1, near2) = (win1.slice(), win2.slice());
                    if near1.is_empty() || near2.is_empty() {
                        continue;
                    }
                    columns.clear();
                    columns.extend(
                        near2
                            .iter()
                            .map(|&t2| (cell(t2, origin, w23) - c23 + side23) as usize),
                    );
                    for &t1 in near1 {
                        let row = (cell(t1, origin, w13) - c13 + side13) as usize;
                        let row = &mut counts[row * cols..(row + 1) * cols];
                        for &col in &columns {
                            row[col] += 1;
                        }
                    }
                }
                counts
            })
            .reduce(|| vec![0u64; rows * cols], add_counts),
    };
    let total_triples = counts.iter().sum();
    Ok(CoincidenceHistogram2D {
        axis13,
        axis23,
        counts,
        total_triples,
        acquisition,
    })
}

fn check_partition(partition_len: usize) -> Result<usize> {
    if partition_len == 0 {
        return Err(Error::config("partition length must be positive"));
    }
    Ok(partition_len)
}

fn add_counts(mut acc: Vec<u64>, other: Vec<u64>) -> Vec<u64> {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
    acc
}

fn singles_and_duration(acq: &Acquisition, expected_channels: usize) -> Result<(Vec<f64>, f64)> {
    if acq.duration_ps == 0 {
        return Err(Error::Normalization("acquisition duration is zero".into()));
    }
    if acq.singles.len() != expected_channels {
        return Err(Error::Normalization(format!(
            "expected singles for {expected_channels} channels, found {}",
            acq.singles.len()
        )));
    }
    if let Some(pos) = acq.singles.iter().position(|&s| s == 0) {
        return Err(Error::Normalization(format!(
            "channel {} registered no singles",
            acq.channel_ids.get(pos).copied().unwrap_or(0)
        )));
    }
    Ok((
        acq.singles.iter().map(|&s| s as f64).collect(),
        acq.duration_ps as f64,
    ))
}

/// Poisson standard error of a count; an empty bin is assigned one count.
fn count_stderr(count: u64) -> f64 {
    (count.max(1) as f64).sqrt()
}

/// Divide each bin by the accidental expectation `R1·R2·R3·T·Δ13·Δ23`.
pub fn normalize_g3(hist: &CoincidenceHistogram2D) -> Result<NormalizedSurface> {
    let (singles, duration) = singles_and_duration(&hist.acquisition, 3)?;
    let rates: f64 = singles.iter().map(|s| s / duration).product();
    let expected =
        rates * duration * hist.axis13.bin_width_ps as f64 * hist.axis23.bin_width_ps as f64;
    let values = hist.counts.iter().map(|&c| c as f64 / expected).collect();
    let stderr = hist
        .counts
        .iter()
        .map(|&c| count_stderr(c) / expected)
        .collect();
    NormalizedSurface::new(hist.axis13, hist.axis23, values, stderr)
}

/// Divide each bin by the accidental expectation `Ra·Rb·T·Δ`.
pub fn normalize_g2(hist: &Histogram1D) -> Result<Profile> {
    let (singles, duration) = singles_and_duration(&hist.acquisition, 2)?;
    let expected =
        singles[0] / duration * singles[1] / duration * duration * hist.axis.bin_width_ps as f64;
    Ok(Profile {
        coordinate_ps: hist
            .axis
            .bin_offsets()
            .map(|k| hist.axis.coordinate_ps(k))
            .collect(),
        values: hist.counts.iter().map(|&c| c as f64 / expected).collect(),
        stderr: hist
            .counts
            .iter()
            .map(|&c| count_stderr(c) / expected)
            .collect(),
    })
}

/// Values along `t13 = −t23`, from the top-left to the bottom-right corner,
/// with coordinate `s = t13`.
pub fn slice_antidiagonal(surface: &NormalizedSurface) -> Result<Profile> {
    if surface.axis13 != surface.axis23 {
        return Err(Error::AxisMismatch(
            "anti-diagonal slice needs identical t13 and t23 axes".into(),
        ));
    }
    let side = surface.axis13.bins_per_side();
    let mut profile = Profile {
        coordinate_ps: Vec::new(),
        values: Vec::new(),
        stderr: Vec::new(),
    };
    for k in (-side + 1)..side {
        let i = surface.flat_index(k, -k).expect("offset within axis");
        profile.coordinate_ps.push(surface.axis13.coordinate_ps(k));
        profile.values.push(surface.values[i]);
        profile.stderr.push(surface.stderr[i]);
    }
    Ok(profile)
}

fn background_threshold_ps(coherence_time_ps: f64) -> f64 {
    BACKGROUND_COHERENCE_MULTIPLE * coherence_time_ps
}

/// Peak and background of a `g3` surface.
///
/// The peak is the largest bin, ties going to the bin nearest the origin in
/// `|t13| + |t23|`. The background averages every bin whose `|t13|`, `|t23|`
/// and `|t13 − t23|` all exceed five coherence times.
pub fn contrast_of_surface(
    surface: &NormalizedSurface,
    coherence_time_ps: f64,
) -> Result<ContrastReport> {
    let threshold = background_threshold_ps(coherence_time_ps);
    let mut peak: Option<(f64, i64, i64, f64)> = None;
    let mut bg_sum = 0.0;
    let mut bg_var = 0.0;
    let mut bg_bins = 0usize;
    for (k13, k23, value, err) in surface.iter() {
        let t13 = surface.axis13.coordinate_ps(k13);
        let t23 = surface.axis23.coordinate_ps(k23);
        let better = match peak {
            None => true,
            Some((best, b13, b23, _)) => {
                value > best || (value == best && t13.abs() + t23.abs() < b13.abs() + b23.abs())
            }
        };
        if better {
            peak = Some((value, t13, t23, err));
        }
        let (a, b, c) = (t13.abs() as f64, t23.abs() as f64, (t13 - t23).abs() as f64);
        if a > threshold && b > threshold && c > threshold {
            bg_sum += value;
            bg_var += err * err;
            bg_bins += 1;
        }
    }
    finish_contrast(peak, bg_sum, bg_var, bg_bins)
}

/// Peak and background of a one-dimensional profile; background bins are
/// those with `|coordinate|` beyond five coherence times.
pub fn contrast_of_profile(profile: &Profile, coherence_time_ps: f64) -> Result<ContrastReport> {
    let threshold = background_threshold_ps(coherence_time_ps);
    let mut peak: Option<(f64, i64, i64, f64)> = None;
    let mut bg_sum = 0.0;
    let mut bg_var = 0.0;
    let mut bg_bins = 0usize;
    for ((&s, &value), &err) in profile
        .coordinate_ps
        .iter()
        .zip(&profile.values)
        .zip(&profile.stderr)
    {
        let better = match peak {
            None => true,
            Some((best, b, _, _)) => value > best || (value == best && s.abs() < b.abs()),
        };
        if better {
            peak = Some((value, s, -s, err));
        }
        if s.abs() as f64 > threshold {
            bg_sum += value;
            bg_var += err * err;
            bg_bins += 1;
        }
    }
    finish_contrast(peak, bg_sum, bg_var, bg_bins)
}

fn finish_contrast(
    peak: Option<(f64, i64, i64, f64)>,
    bg_sum: f64,
    bg_var: f64,
    bg_bins: usize,
) -> Result<ContrastReport> {
    if bg_bins < MIN_BACKGROUND_BINS {
        return Err(Error::InsufficientBackground {
            found: bg_bins,
            required: MIN_BACKGROUND_BINS,
        });
    }
    let (peak_value, t13, t23, peak_err) = peak.expect("background bins imply a non-empty grid");
    let n = bg_bins as f64;
    let mut report =
        ContrastReport::from_levels(peak_value, peak_err, bg_sum / n, bg_var.sqrt() / n)?;
    report.peak_t13_ps = t13;
    report.peak_t23_ps = t23;
    report.background_bins = bg_bins;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(ch: u8, tags: &[u64], duration: u64) -> TimeTagStream {
        TimeTagStream::new(ch, tags.to_vec(), duration).unwrap()
    }

    #[test]
    fn axis_validation() {
        assert!(HistogramAxis::new(10, 50).is_ok());
        assert!(HistogramAxis::new(10, 55).is_err());
        assert!(HistogramAxis::new(0, 50).is_err());
        let axis = HistogramAxis::new(10, 50).unwrap();
        assert_eq!(axis.num_bins(), 10);
        assert_eq!(axis.index_of(-5), Some(0));
        assert_eq!(axis.index_of(5), None);
        assert_eq!(axis.coordinate_ps(-3), -30);
    }

    #[test]
    fn single_pair_lands_in_zero_bin() {
        let axis = HistogramAxis::new(10, 50).unwrap();
        let h = histogram_g2(&stream(1, &[100], 1000), &stream(2, &[100], 1000), axis).unwrap();
        assert_eq!(h.total_pairs, 1);
        assert_eq!(h.count(0), Some(1));
    }

    #[test]
    fn single_triple_lands_in_origin_bin() {
        let axis = HistogramAxis::new(10, 50).unwrap();
        let s = |ch| stream(ch, &[100], 1000);
        let h = histogram_g3(&s(1), &s(2), &s(3), axis, axis).unwrap();
        assert_eq!(h.total_triples, 1);
        assert_eq!(h.count(0, 0), Some(1));
    }

    #[test]
    fn empty_stream_gives_empty_histogram() {
        let axis = HistogramAxis::new(10, 50).unwrap();
        let h = histogram_g3(
            &stream(1, &[100, 200], 1000),
            &stream(2, &[], 1000),
            &stream(3, &[105], 1000),
            axis,
            axis,
        )
        .unwrap();
        assert_eq!(h.total_triples, 0);
        assert!(h.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn mismatched_durations_rejected() {
        let axis = HistogramAxis::new(10, 50).unwrap();
        let err = histogram_g2(&stream(1, &[1], 1000), &stream(2, &[1], 999), axis).unwrap_err();
        assert!(matches!(err, Error::AcquisitionMismatch(_)));
    }

    #[test]
    fn cell_differences_follow_sign_convention() {
        let axis = HistogramAxis::new(10, 50).unwrap();
        // origin 100: a in cell 2, b in cell 0 -> +2
        let h = histogram_g2(&stream(1, &[125], 1000), &stream(2, &[100], 1000), axis).unwrap();
        assert_eq!(h.count(2), Some(1));
        let h = histogram_g2(&stream(1, &[100], 1000), &stream(2, &[125], 1000), axis).unwrap();
        assert_eq!(h.count(-2), Some(1));
        // out of range on either side is dropped
        let h = histogram_g2(&stream(1, &[150], 1000), &stream(2, &[100], 1000), axis).unwrap();
        assert_eq!(h.total_pairs, 0);
        let h = histogram_g2(&stream(1, &[100], 1000), &stream(2, &[150], 1000), axis).unwrap();
        assert_eq!(h.count(-5), Some(1));
    }

    #[test]
    fn flat_accidental_histogram_normalizes_to_one() {
        let axis = HistogramAxis::new(10, 20).unwrap();
        // R^3 * T * w^2 = (10/100)^3 * 100 * 100 = 10 accidentals per bin
        let hist = CoincidenceHistogram2D {
            axis13: axis,
            axis23: axis,
            counts: vec![10; 16],
            total_triples: 160,
            acquisition: Acquisition {
                duration_ps: 100,
                channel_ids: vec![1, 2, 3],
                singles: vec![10, 10, 10],
            },
        };
        let surface = normalize_g3(&hist).unwrap();
        assert!(surface.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(surface
            .stderr
            .iter()
            .all(|&e| (e - 10f64.sqrt() / 10.0).abs() < 1e-12));
    }

    #[test]
    fn normalization_errors() {
        let axis = HistogramAxis::new(10, 20).unwrap();
        let mut hist = CoincidenceHistogram2D {
            axis13: axis,
            axis23: axis,
            counts: vec![0; 16],
            total_triples: 0,
            acquisition: Acquisition {
                duration_ps: 1000,
                channel_ids: vec![1, 2, 3],
                singles: vec![10, 0, 10],
            },
        };
        assert!(matches!(normalize_g3(&hist), Err(Error::Normalization(_))));
        hist.acquisition.singles = vec![10, 10, 10];
        hist.acquisition.duration_ps = 0;
        assert!(matches!(normalize_g3(&hist), Err(Error::Normalization(_))));
    }

    fn constant_surface(axis: HistogramAxis, value: f64) -> NormalizedSurface {
        let n = axis.num_bins() * axis.num_bins();
        NormalizedSurface::new(axis, axis, vec![value; n], vec![0.01; n]).unwrap()
    }

    #[test]
    fn slice_of_constant_surface_is_constant() {
        let axis = HistogramAxis::new(10, 50).unwrap();
        let profile = slice_antidiagonal(&constant_surface(axis, 1.0)).unwrap();
        assert_eq!(profile.values.len(), 9);
        assert!(profile.values.iter().all(|&v| v == 1.0));
        assert_eq!(profile.coordinate_ps.first(), Some(&-40));
        assert_eq!(profile.coordinate_ps.last(), Some(&40));
    }

    #[test]
    fn slice_rejects_non_square_axes() {
        let a = HistogramAxis::new(10, 50).unwrap();
        let b = HistogramAxis::new(10, 40).unwrap();
        let n = a.num_bins() * b.num_bins();
        let s = NormalizedSurface::new(a, b, vec![1.0; n], vec![0.0; n]).unwrap();
        assert!(matches!(
            slice_antidiagonal(&s),
            Err(Error::AxisMismatch(_))
        ));
    }

    #[test]
    fn contrast_from_levels_matches_reference_visibilities() {
        let r = ContrastReport::from_levels(6.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(r.contrast_ratio, 6.0);
        assert!((r.visibility - 5.0 / 7.0).abs() < 1e-15);
        let r = ContrastReport::from_levels(4.9, 0.0, 1.0, 0.0).unwrap();
        assert!((r.visibility - 0.661).abs() < 5e-4);
        let r = ContrastReport::from_levels(2.0, 0.0, 1.0, 0.0).unwrap();
        assert!((r.visibility - 1.0 / 3.0).abs() < 1e-15);
        assert!(ContrastReport::from_levels(1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn surface_contrast_uses_max_bin_and_far_background() {
        let axis = HistogramAxis::new(10, 400).unwrap();
        let mut surface = constant_surface(axis, 1.0);
        let centre = surface.flat_index(0, 0).unwrap();
        surface.values[centre] = 6.0;
        // equal value further out loses the tie
        let other = surface.flat_index(1, 1).unwrap();
        surface.values[other] = 6.0;
        let report = contrast_of_surface(&surface, 10.0).unwrap();
        assert_eq!(report.peak_value, 6.0);
        assert_eq!((report.peak_t13_ps, report.peak_t23_ps), (0, 0));
        assert_eq!(report.background_value, 1.0);
        assert!(report.background_bins >= MIN_BACKGROUND_BINS);
    }

    #[test]
    fn small_grid_lacks_background() {
        let axis = HistogramAxis::new(10, 50).unwrap();
        let err = contrast_of_surface(&constant_surface(axis, 1.0), 10.0).unwrap_err();
        assert!(matches!(err, Error::InsufficientBackground { .. }));
    }
}

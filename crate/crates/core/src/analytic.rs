//! Closed-form correlation functions of chaotic light with a rectangular
//! spectrum of angular width `bandwidth` (rad/s).
//!
//! The first-order coherence is the sinc kernel `γ(τ) = sin(x)/x`,
//! `x = bandwidth·τ/2`. For a Gaussian (chaotic) field every normalized
//! N-th order intensity correlation is the permanent of the matrix
//! `γ(tᵢ − tⱼ)`; `g3` is the expanded N = 3 case and serves as a cross-check
//! for [`g_n`].

use crate::correlator::{HistogramAxis, NormalizedSurface, Profile};
use crate::error::{Error, Result};

/// Largest matrix order accepted by [`permanent`] (Ryser cost is `2^N · N`).
pub const MAX_PERMANENT_ORDER: usize = 20;

const SINC_SERIES_THRESHOLD: f64 = 1e-4;

/// Gauss–Legendre points per panel used by the binning quadratures.
const QUADRATURE_POINTS: usize = 16;

/// `sin(x)/x` with the removable singularity at zero handled by its series.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < SINC_SERIES_THRESHOLD {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Degree of first-order coherence at delay `tau_s`.
pub fn gamma(tau_s: f64, bandwidth_rad_per_s: f64) -> f64 {
    sinc(0.5 * bandwidth_rad_per_s * tau_s)
}

/// Normalized second-order correlation, `1 + γ(τ)²`.
pub fn g2(tau_s: f64, bandwidth_rad_per_s: f64) -> f64 {
    let g = gamma(tau_s, bandwidth_rad_per_s);
    1.0 + g * g
}

/// Normalized third-order correlation at detection times `t1, t2, t3`.
pub fn g3(t1_s: f64, t2_s: f64, t3_s: f64, bandwidth_rad_per_s: f64) -> f64 {
    let g12 = gamma(t1_s - t2_s, bandwidth_rad_per_s);
    let g23 = gamma(t2_s - t3_s, bandwidth_rad_per_s);
    let g31 = gamma(t3_s - t1_s, bandwidth_rad_per_s);
    1.0 + g12 * g12 + g23 * g23 + g31 * g31 + 2.0 * g12 * g23 * g31
}

/// Symmetric matrix of pairwise coherences `γ(tᵢ − tⱼ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl CoherenceMatrix {
    pub fn from_times(times_s: &[f64], bandwidth_rad_per_s: f64) -> Self {
        let order = times_s.len();
        let mut entries = vec![0.0; order * order];
        for i in 0..order {
            entries[i * order + i] = 1.0;
            for j in (i + 1)..order {
                let g = gamma(times_s[i] - times_s[j], bandwidth_rad_per_s);
                entries[i * order + j] = g;
                entries[j * order + i] = g;
            }
        }
        CoherenceMatrix { order, entries }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.order + col]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn permanent(&self) -> Result<f64> {
        permanent(&self.entries, self.order)
    }
}

/// Permanent of a row-major `order × order` matrix.
///
/// Ryser's inclusion–exclusion formula, visiting column subsets in Gray-code
/// order so each step adds or removes a single column from the running row
/// sums. The alternating outer sum is accumulated with Neumaier compensation.
pub fn permanent(entries: &[f64], order: usize) -> Result<f64> {
    if order > MAX_PERMANENT_ORDER {
        return Err(Error::OrderTooLarge(order));
    }
    if entries.len() != order * order {
        return Err(Error::config(format!(
            "permanent: expected {} entries for order {order}, got {}",
            order * order,
            entries.len()
        )));
    }
    if order == 0 {
        return Ok(1.0);
    }

    let mut row_sums = vec![0.0f64; order];
    let mut in_subset = vec![false; order];
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    let mut subset_size = 0usize;

    for step in 1u64..(1u64 << order) {
        let col = step.trailing_zeros() as usize;
        let sign = if in_subset[col] { -1.0 } else { 1.0 };
        in_subset[col] = !in_subset[col];
        if in_subset[col] {
            subset_size += 1;
        } else {
            subset_size -= 1;
        }
        for (row, acc) in row_sums.iter_mut().enumerate() {
            *acc += sign * entries[row * order + col];
        }
        let product: f64 = row_sums.iter().product();
        let term = if subset_size.is_multiple_of(2) {
            product
        } else {
            -product
        };

        let t = sum + term;
        if sum.abs() >= term.abs() {
            compensation += (sum - t) + term;
        } else {
            compensation += (term - t) + sum;
        }
        sum = t;
    }

    let total = sum + compensation;
    Ok(if order.is_multiple_of(2) {
        total
    } else {
        -total
    })
}

/// Normalized N-th order correlation at the given detection times.
pub fn g_n(times_s: &[f64], bandwidth_rad_per_s: f64) -> Result<f64> {
    if times_s.is_empty() {
        return Err(Error::config("g_n needs at least one detection time"));
    }
    CoherenceMatrix::from_times(times_s, bandwidth_rad_per_s).permanent()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule over `[lo, hi]` with panels no wider than
/// `max_panel`. Returns `(nodes, weights)`.
fn composite_rule(
    lo: f64,
    hi: f64,
    max_panel: f64,
    base: &(Vec<f64>, Vec<f64>),
) -> (Vec<f64>, Vec<f64>) {
    let span = hi - lo;
    if span <= 0.0 {
        return (Vec::new(), Vec::new());
    }
    let panels = (span / max_panel).ceil().max(1.0) as usize;
    let width = span / panels as f64;
    let mut nodes = Vec::with_capacity(panels * base.0.len());
    let mut weights = Vec::with_capacity(panels * base.0.len());
    for p in 0..panels {
        let a = lo + p as f64 * width;
        let mid = a + 0.5 * width;
        for (x, w) in base.0.iter().zip(&base.1) {
            nodes.push(mid + 0.5 * width * x);
            weights.push(0.5 * width * w);
        }
    }
    (nodes, weights)
}

/// Coherence time `2π/bandwidth`, the first zero of the sinc kernel.
fn kernel_coherence_time(bandwidth_rad_per_s: f64) -> f64 {
    2.0 * std::f64::consts::PI / bandwidth_rad_per_s
}

/// Mean of `g3` when each of the three detection times is uniformly
/// uncertain within a common cell of width `bin_width_s`: the value the
/// central bin of a cell-quantized three-fold histogram converges to.
///
/// Uses the permutation symmetry of `g3` to reduce the cube average to
/// `1 + 3·P + 2·C`, where `P` is the triangular-weighted mean of `γ²` and
/// `C` the mean of the three-way product over the ordered simplex. The
/// cross term is negligible beyond 64 coherence times and is truncated there.
pub fn expected_contrast_with_binning(bin_width_s: f64, bandwidth_rad_per_s: f64) -> f64 {
    let width = bin_width_s;
    let tau_c = kernel_coherence_time(bandwidth_rad_per_s);
    let panel = tau_c / 4.0;
    let base = gauss_legendre(QUADRATURE_POINTS);
    let gam = |t: f64| gamma(t, bandwidth_rad_per_s);

    let (nodes, weights) = composite_rule(0.0, width, panel, &base);
    let pair: f64 = nodes
        .iter()
        .zip(&weights)
        .map(|(&t, &w)| {
            let g = gam(t);
            w * 2.0 * (width - t) / (width * width) * g * g
        })
        .sum();

    let outer_limit = width.min(64.0 * tau_c);
    let (outer_nodes, outer_weights) = composite_rule(0.0, outer_limit, panel, &base);
    let mut cross = 0.0;
    for (&a, &wa) in outer_nodes.iter().zip(&outer_weights) {
        let (inner_nodes, inner_weights) = composite_rule(0.0, a, panel, &base);
        let inner: f64 = inner_nodes
            .iter()
            .zip(&inner_weights)
            .map(|(&b, &wb)| wb * gam(a - b) * gam(b))
            .sum();
        cross += wa * (width - a) * gam(a) * inner;
    }
    cross *= 6.0 / (width * width * width);

    1.0 + 3.0 * pair + 2.0 * cross
}

/// Mean of `g3(t13 + u1 − u3, t23 + u2 − u3)` over independent cell offsets
/// `u1, u2, u3` uniform in `[-w/2, w/2]`, by tensor Gauss–Legendre.
///
/// This is the expected value of the cell-quantized histogram bin centred at
/// `(t13, t23)`. At `(0, 0)` it equals [`expected_contrast_with_binning`].
pub fn cell_averaged_g3(t13_s: f64, t23_s: f64, bin_width_s: f64, bandwidth_rad_per_s: f64) -> f64 {
    let tau_c = kernel_coherence_time(bandwidth_rad_per_s);
    let base = gauss_legendre(8);
    let half = 0.5 * bin_width_s;
    let (nodes, weights) = composite_rule(-half, half, tau_c / 2.0, &base);
    let scale = 1.0 / (bin_width_s * bin_width_s * bin_width_s);
    let mut total = 0.0;
    for (&u1, &w1) in nodes.iter().zip(&weights) {
        for (&u2, &w2) in nodes.iter().zip(&weights) {
            for (&u3, &w3) in nodes.iter().zip(&weights) {
                let value = g3(t13_s + u1 - u3, t23_s + u2 - u3, 0.0, bandwidth_rad_per_s);
                total += w1 * w2 * w3 * value;
            }
        }
    }
    total * scale
}

/// How analytic surfaces are sampled on a histogram grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinModel {
    /// Evaluate `g3` at the bin coordinate.
    Point,
    /// Average over the cell quantization of each detection time.
    CellAveraged,
}

/// Analytic `g3` on the grid of a pair of histogram axes; stderr is zero.
pub fn analytic_surface(
    axis13: HistogramAxis,
    axis23: HistogramAxis,
    bandwidth_rad_per_s: f64,
    model: BinModel,
) -> Result<NormalizedSurface> {
    if model == BinModel::CellAveraged && axis13.bin_width_ps != axis23.bin_width_ps {
        return Err(Error::AxisMismatch(
            "cell-averaged surfaces need equal bin widths".into(),
        ));
    }
    let width_s = axis13.bin_width_ps as f64 * 1e-12;
    let mut values = Vec::with_capacity(axis13.num_bins() * axis23.num_bins());
    for k in axis13.bin_offsets() {
        let t13 = axis13.coordinate_ps(k) as f64 * 1e-12;
        for l in axis23.bin_offsets() {
            let t23 = axis23.coordinate_ps(l) as f64 * 1e-12;
            values.push(match model {
                BinModel::Point => g3(t13, t23, 0.0, bandwidth_rad_per_s),
                BinModel::CellAveraged => cell_averaged_g3(t13, t23, width_s, bandwidth_rad_per_s),
            });
        }
    }
    let stderr = vec![0.0; values.len()];
    NormalizedSurface::new(axis13, axis23, values, stderr)
}

/// Analytic `g2` on a one-dimensional histogram axis.
pub fn analytic_g2_profile(axis: HistogramAxis, bandwidth_rad_per_s: f64) -> Profile {
    let coordinate_ps: Vec<i64> = axis.bin_offsets().map(|k| axis.coordinate_ps(k)).collect();
    let values = coordinate_ps
        .iter()
        .map(|&t| g2(t as f64 * 1e-12, bandwidth_rad_per_s))
        .collect();
    let stderr = vec![0.0; coordinate_ps.len()];
    Profile {
        coordinate_ps,
        values,
        stderr,
    }
}

/// Lags beyond this many coherence times use the averaged `1/(2x²)` tail.
const EXCESS_TAIL_START: f64 = 4096.0;

/// Counting-statistics excess of a chaotic source: the Mandel factor
/// `(2/T)·∫₀ᵀ (1 − τ/T)·γ(τ)² dτ`, so that photon counts in a window of
/// length `T` have variance `μ·(1 + μ·excess)`.
pub fn counting_excess(window_s: f64, bandwidth_rad_per_s: f64) -> f64 {
    let tau_c = kernel_coherence_time(bandwidth_rad_per_s);
    let cut = window_s.min(EXCESS_TAIL_START * tau_c);
    let base = gauss_legendre(QUADRATURE_POINTS);
    let (nodes, weights) = composite_rule(0.0, cut, tau_c / 4.0, &base);
    let near: f64 = nodes
        .iter()
        .zip(&weights)
        .map(|(&t, &w)| {
            let g = gamma(t, bandwidth_rad_per_s);
            w * (1.0 - t / window_s) * g * g
        })
        .sum();
    let tail = if window_s > cut {
        let a = bandwidth_rad_per_s / 2.0;
        ((1.0 / cut - 1.0 / window_s) - (window_s / cut).ln() / window_s) / (2.0 * a * a)
    } else {
        0.0
    };
    2.0 * (near + tail) / window_s
}

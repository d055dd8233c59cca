use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "chaoscorr",
    version,
    about = "Three-photon correlations of simulated chaotic light"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; flags below override individual keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker thread cap; results do not depend on it.
    #[arg(long, global = true, value_name = "N", env = "CHAOSCORR_WORKERS")]
    pub workers: Option<usize>,
    /// Histogram bin width on both delay axes.
    #[arg(long, global = true, value_name = "U64")]
    pub bin_ps: Option<u64>,
    /// Histogram half range on both delay axes.
    #[arg(long, global = true, value_name = "U64")]
    pub range_ps: Option<u64>,
    /// Acquisition duration in seconds.
    #[arg(long, global = true, value_name = "SECONDS")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the field and write `field.csv`, `intensity.csv`.
    Simulate,
    /// Produce three TTAG1 files, from an intensity file or by streaming synthesis.
    Detect(DetectArgs),
    /// Histogram, normalize, slice and score three TTAG1 files.
    Correlate(CorrelateArgs),
    /// Closed-form surface, slice and g2 on the configured axes.
    Analytic(AnalyticArgs),
    /// Bin-by-bin comparison of a measured and an analytic surface.
    Compare(CompareArgs),
    /// Simulate, detect, correlate, evaluate and compare in one run.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Directory written by `simulate`; without it the field is synthesized on the fly.
    #[arg(long, value_name = "DIR")]
    pub input: Option<PathBuf>,
    /// Also write `channel_<id>.csv` tag lists.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Directory written by `detect`.
    #[arg(long, value_name = "DIR", required_unless_present = "tags")]
    pub input: Option<PathBuf>,
    /// Explicit TTAG1 files for channels 1, 2 and 3.
    #[arg(long, num_args = 3, value_names = ["CH1", "CH2", "CH3"])]
    pub tags: Option<Vec<PathBuf>>,
    /// Acquisition length; read from `tags.json` when omitted.
    #[arg(long, value_name = "U64")]
    pub duration_ps: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Model {
    /// Average over each bin's cell quantization, matching measured histograms.
    #[default]
    Cell,
    /// Evaluate at the bin coordinate.
    Point,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[arg(long, value_enum, default_value_t)]
    pub model: Model,
    /// Detection times in seconds; prints gN for them.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        value_name = "T1,T2,..."
    )]
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, value_name = "CSV")]
    pub measured: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub analytic: PathBuf,
    /// Largest accepted RMS residual as a fraction of the analytic peak.
    #[arg(long, default_value_t = 0.05, value_name = "FRACTION")]
    pub max_rel_rms: f64,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, value_enum, default_value_t)]
    pub model: Model,
    #[arg(long, default_value_t = 0.05, value_name = "FRACTION")]
    pub max_rel_rms: f64,
    /// Also write `channel_<id>.csv` tag lists.
    #[arg(long)]
    pub csv: bool,
}

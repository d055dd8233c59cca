use std::fs;
use std::path::{Path, PathBuf};

use chaoscorr_core::analytic::{analytic_g2_profile, analytic_surface, BinModel};
use chaoscorr_core::io::{
    load_ttag, read_intensity_csv, read_surface_csv, save_ttag, write_field_csv, write_g2_csv,
    write_histogram_csv, write_intensity_csv, write_json, write_profile_csv, write_rows,
    write_surface_csv, write_tags_csv,
};
use chaoscorr_core::pipeline::{correlate, Correlation};
use chaoscorr_core::{
    contrast_of_surface, expected_contrast_with_binning, g_n, generate_field, intensity,
    sample_time_tags, simulate_streams, slice_antidiagonal, split_intensity, ContrastReport, Error,
    IntensityTrace, NormalizedSurface, Profile, RunConfig, TimeTagStream,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    AnalyticArgs, Cli, Command, Common, CompareArgs, CorrelateArgs, DetectArgs, Model, PipelineArgs,
};
use crate::config::{config_hash, read_metadata, resolve, Metadata};
use crate::failure::{CliResult, Failure};

pub fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.common.workers {
        if n == 0 {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start worker pool: {e}")))?;
    }
    let common = &cli.common;
    match cli.command {
        Command::Simulate => simulate(common),
        Command::Detect(args) => detect(common, &args),
        Command::Correlate(args) => correlate_cmd(common, &args),
        Command::Analytic(args) => analytic(common, &args),
        Command::Compare(args) => compare(common, &args),
        Command::Pipeline(args) => pipeline(common, &args),
    }
}

/// Files written into one output directory plus their metadata document.
struct Outputs {
    dir: PathBuf,
    meta: Metadata,
}

impl Outputs {
    fn new(command: &str, config: &RunConfig) -> CliResult<Self> {
        let dir = config.output_dir.clone();
        fs::create_dir_all(&dir).map_err(|source| Error::File {
            path: dir.clone(),
            source,
        })?;
        Ok(Outputs {
            dir,
            meta: Metadata::new(command, config),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.meta.files.push(name.to_string());
        self.dir.join(name)
    }

    fn finish(self, name: &str) -> CliResult {
        write_json(&self.dir.join(name), &self.meta)?;
        Ok(())
    }
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("serializable")
}

fn model_of(model: Model) -> BinModel {
    match model {
        Model::Cell => BinModel::CellAveraged,
        Model::Point => BinModel::Point,
    }
}

fn simulate(common: &Common) -> CliResult {
    let config = resolve(common, None)?;
    let trace = generate_field(&config.field, config.duration_s, config.seed)?;
    let inten = intensity(&trace);
    let mut out = Outputs::new("simulate", &config)?;
    write_field_csv(&out.path("field.csv"), &trace)?;
    write_intensity_csv(&out.path("intensity.csv"), &inten)?;
    out.meta.details = json!({
        "sample_interval_s": trace.sample_interval_s,
        "num_samples": trace.samples.len(),
        "duration_s": trace.duration_s,
        "coherence_time_s": config.field.coherence_time_s(),
        "reference_intensity": inten.reference_intensity,
        "realized_mean_intensity": inten.mean(),
    });
    out.finish("field.json")
}

fn detect(common: &Common, args: &DetectArgs) -> CliResult {
    let (config, streams, lineage) = match &args.input {
        Some(dir) => {
            let upstream = read_metadata(&dir.join("field.json"))?;
            let mut config = resolve(common, Some(&upstream.config))?;
            if config.field != upstream.config.field
                || config.duration_s != upstream.config.duration_s
            {
                eprintln!(
                    "warning: field and duration are taken from {}",
                    dir.display()
                );
            }
            config.field = upstream.config.field;
            config.duration_s = upstream.config.duration_s;
            config.validate()?;
            let samples = read_intensity_csv(&dir.join("intensity.csv"))?;
            if samples.is_empty() {
                return Err(Error::InvalidConfig("intensity file holds no samples".into()).into());
            }
            let trace = IntensityTrace {
                sample_interval_s: config.field.sample_interval_s(),
                samples,
                reference_intensity: config.field.mean_intensity,
                duration_s: config.duration_s,
                coherence_time_s: Some(config.field.coherence_time_s()),
            };
            let split = split_intensity(&trace, config.split_ratios)?;
            let mut streams = Vec::with_capacity(3);
            for (det, part) in config.detectors.iter().zip(&split) {
                streams.push(sample_time_tags(part, det, config.seed)?);
            }
            streams.sort_by_key(|s| s.channel_id);
            let lineage = json!({
                "field_seed": upstream.seed,
                "field_config_hash": upstream.config_hash,
                "intensity_file": dir.join("intensity.csv"),
            });
            (config, streams, lineage)
        }
        None => {
            let config = resolve(common, None)?;
            let streams = simulate_streams(&config)?.to_vec();
            let lineage = json!({
                "field_seed": config.seed,
                "field_config_hash": config_hash(&config),
                "intensity_file": Value::Null,
            });
            (config, streams, lineage)
        }
    };
    let mut out = Outputs::new("detect", &config)?;
    write_streams(&mut out, &streams, args.csv)?;
    out.meta.lineage = lineage;
    out.finish("tags.json")
}

#[derive(Serialize)]
struct ChannelSummary {
    channel_id: u8,
    file: String,
    count: usize,
    origin_duration_ps: u64,
    mean_rate_hz: f64,
}

fn write_streams(out: &mut Outputs, streams: &[TimeTagStream], csv: bool) -> CliResult {
    let mut channels = Vec::new();
    for s in streams {
        let file = format!("channel_{}.ttag", s.channel_id);
        save_ttag(&out.path(&file), s)?;
        if csv {
            write_tags_csv(&out.path(&format!("channel_{}.csv", s.channel_id)), s)?;
        }
        channels.push(ChannelSummary {
            channel_id: s.channel_id,
            file,
            count: s.len(),
            origin_duration_ps: s.origin_duration_ps,
            mean_rate_hz: s.mean_rate_hz(),
        });
    }
    out.meta.details = json!({ "channels": channels });
    Ok(())
}

fn duration_from_metadata(meta: &Metadata) -> Option<u64> {
    let channels = meta.details.get("channels")?.as_array()?;
    let durations: Vec<u64> = channels
        .iter()
        .filter_map(|c| c.get("origin_duration_ps")?.as_u64())
        .collect();
    let first = *durations.first()?;
    durations.iter().all(|&d| d == first).then_some(first)
}

fn correlate_cmd(common: &Common, args: &CorrelateArgs) -> CliResult {
    let (paths, meta_path): (Vec<PathBuf>, PathBuf) = match (&args.tags, &args.input) {
        (Some(tags), _) => {
            let parent = tags[0].parent().unwrap_or(Path::new("."));
            (tags.clone(), parent.join("tags.json"))
        }
        (None, Some(dir)) => (
            (1..=3)
                .map(|k| dir.join(format!("channel_{k}.ttag")))
                .collect(),
            dir.join("tags.json"),
        ),
        (None, None) => {
            return Err(Failure::Usage(
                "pass --input DIR or --tags CH1 CH2 CH3".into(),
            ))
        }
    };
    if let Some(dir) = &args.input {
        fs::metadata(dir).map_err(|source| Error::File {
            path: dir.clone(),
            source,
        })?;
    }
    let upstream = if meta_path.exists() {
        Some(read_metadata(&meta_path)?)
    } else {
        None
    };
    let config = resolve(common, upstream.as_ref().map(|m| &m.config))?;
    let duration_ps = args
        .duration_ps
        .or_else(|| upstream.as_ref().and_then(duration_from_metadata))
        .ok_or_else(|| {
            Failure::Usage(format!(
                "acquisition duration unknown: {} not found, pass --duration-ps",
                meta_path.display()
            ))
        })?;
    let mut streams = Vec::with_capacity(3);
    for (k, path) in paths.iter().enumerate() {
        let stream = load_ttag(path)?.into_stream(duration_ps)?;
        if usize::from(stream.channel_id) != k + 1 {
            return Err(Error::Format {
                what: "TTAG1 file",
                detail: format!(
                    "{} holds channel {}, expected channel {}",
                    path.display(),
                    stream.channel_id,
                    k + 1
                ),
            }
            .into());
        }
        streams.push(stream);
    }
    let streams: [TimeTagStream; 3] = streams.try_into().expect("three streams");
    let correlation = correlate(&streams, config.axes)?;
    let mut out = Outputs::new("correlate", &config)?;
    out.meta.lineage = json!({
        "tags_metadata": upstream.as_ref().map(|m| json!({
            "config_hash": m.config_hash,
            "seed": m.seed,
            "lineage": m.lineage,
        })),
        "tag_files": paths,
    });
    let outcome = write_correlation(&mut out, &config, &correlation);
    out.finish("correlate.json")?;
    outcome.map(|_| ())
}

#[derive(Serialize)]
struct PairSummary {
    channels: (u8, u8),
    total_pairs: u64,
    g2_zero: Option<f64>,
    g2_zero_stderr: Option<f64>,
    far_mean: Option<f64>,
    far_bins: usize,
}

fn far_mean(profile: &Profile, threshold_ps: f64) -> (Option<f64>, usize) {
    let far: Vec<f64> = profile
        .coordinate_ps
        .iter()
        .zip(&profile.values)
        .filter(|(s, _)| (**s as f64).abs() > threshold_ps)
        .map(|(_, v)| *v)
        .collect();
    let n = far.len();
    ((n > 0).then(|| far.iter().sum::<f64>() / n as f64), n)
}

/// Write histogram, surface, slice, pair and contrast files; the contrast
/// report is returned after everything else is on disk.
fn write_correlation(
    out: &mut Outputs,
    config: &RunConfig,
    correlation: &Correlation,
) -> CliResult<ContrastReport> {
    let tau_ps = config.coherence_time_ps();
    write_histogram_csv(&out.path("histogram_g3.csv"), &correlation.histogram)?;
    write_surface_csv(&out.path("surface_g3.csv"), &correlation.surface, "g3")?;
    let profile = slice_antidiagonal(&correlation.surface).ok();
    if let Some(profile) = &profile {
        write_profile_csv(&out.path("profile_g3.csv"), profile, ["s_ps", "g3"])?;
    }
    let mut pairs = Vec::new();
    for pair in &correlation.pairs {
        let name = format!("g2_{}{}.csv", pair.channels.0, pair.channels.1);
        write_g2_csv(&out.path(&name), &pair.histogram, &pair.profile)?;
        let zero = pair.profile.coordinate_ps.iter().position(|&c| c == 0);
        let (far, far_bins) = far_mean(&pair.profile, 5.0 * tau_ps);
        pairs.push(PairSummary {
            channels: pair.channels,
            total_pairs: pair.histogram.total_pairs,
            g2_zero: zero.map(|i| pair.profile.values[i]),
            g2_zero_stderr: zero.map(|i| pair.profile.stderr[i]),
            far_mean: far,
            far_bins,
        });
    }
    let report = contrast_of_surface(&correlation.surface, tau_ps);
    if let Ok(report) = &report {
        write_json(&out.path("contrast.json"), report)?;
    }
    let hist = &correlation.histogram;
    out.meta.details = json!({
        "total_triples": hist.total_triples,
        "acquisition": hist.acquisition,
        "axes": config.axes,
        "central_bin_g3": correlation.surface.value(0, 0),
        "contrast": report.as_ref().ok(),
        "contrast_error": report.as_ref().err().map(|e| e.to_string()),
        "expected_central_g3": expected_contrast_with_binning(
            config.axes.axis13.bin_width_ps as f64 * 1e-12,
            config.field.bandwidth_rad_per_s,
        ),
        "pairs": pairs,
    });
    Ok(report?)
}

struct AnalyticOutputs {
    surface: NormalizedSurface,
}

fn write_analytic(
    out: &mut Outputs,
    config: &RunConfig,
    model: Model,
    times: Option<&[f64]>,
) -> CliResult<AnalyticOutputs> {
    let bw = config.field.bandwidth_rad_per_s;
    let surface = analytic_surface(config.axes.axis13, config.axes.axis23, bw, model_of(model))?;
    write_surface_csv(&out.path("analytic_surface_g3.csv"), &surface, "g3")?;
    if let Ok(profile) = slice_antidiagonal(&surface) {
        write_profile_csv(
            &out.path("analytic_profile_g3.csv"),
            &profile,
            ["s_ps", "g3"],
        )?;
    }
    let g2 = analytic_g2_profile(config.axes.axis13, bw);
    write_profile_csv(&out.path("analytic_g2.csv"), &g2, ["tau_ps", "g2"])?;
    let g_n_value = match times {
        Some(t) => Some(g_n(t, bw)?),
        None => None,
    };
    let report = contrast_of_surface(&surface, config.coherence_time_ps());
    out.meta.details = json!({
        "model": format!("{model:?}").to_lowercase(),
        "axes": config.axes,
        "expected_central_g3": expected_contrast_with_binning(
            config.axes.axis13.bin_width_ps as f64 * 1e-12,
            bw,
        ),
        "contrast": report.as_ref().ok(),
        "contrast_error": report.as_ref().err().map(|e| e.to_string()),
        "times_s": times,
        "g_n": g_n_value,
    });
    if let Some(v) = g_n_value {
        println!("{v}");
    }
    Ok(AnalyticOutputs { surface })
}

fn analytic(common: &Common, args: &AnalyticArgs) -> CliResult {
    let config = resolve(common, None)?;
    let mut out = Outputs::new("analytic", &config)?;
    write_analytic(&mut out, &config, args.model, args.times.as_deref())?;
    out.finish("analytic.json")
}

#[derive(Serialize)]
struct ComparisonSummary {
    bins: usize,
    rms_residual: f64,
    relative_rms: f64,
    max_abs_residual: f64,
    chi_square: f64,
    chi_square_bins: usize,
    slice_rms_residual: Option<f64>,
    slice_relative_rms: Option<f64>,
    measured_contrast: Option<ContrastReport>,
    analytic_contrast: Option<ContrastReport>,
    max_rel_rms: f64,
    passed: bool,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n.max(1) as f64).sqrt()
}

/// Bin-by-bin residuals `measured − analytic`; RMS figures are relative to
/// the analytic peak.
fn write_comparison(
    out: &mut Outputs,
    config: &RunConfig,
    measured: &NormalizedSurface,
    reference: &NormalizedSurface,
    max_rel_rms: f64,
) -> CliResult {
    if measured.axis13 != reference.axis13 || measured.axis23 != reference.axis23 {
        return Err(Error::AxisMismatch(format!(
            "measured axes {:?}/{:?} differ from analytic axes {:?}/{:?}",
            measured.axis13, measured.axis23, reference.axis13, reference.axis23
        ))
        .into());
    }
    let peak = reference.values.iter().cloned().fold(f64::MIN, f64::max);
    let residuals: Vec<f64> = measured
        .values
        .iter()
        .zip(&reference.values)
        .map(|(m, a)| m - a)
        .collect();
    let rms_residual = rms(residuals.iter().copied());
    let (mut chi_square, mut chi_square_bins) = (0.0, 0usize);
    for (r, e) in residuals.iter().zip(&measured.stderr) {
        if *e > 0.0 {
            chi_square += (r / e) * (r / e);
            chi_square_bins += 1;
        }
    }
    let slice_rms = match (slice_antidiagonal(measured), slice_antidiagonal(reference)) {
        (Ok(m), Ok(a)) => Some(rms(m.values.iter().zip(&a.values).map(|(x, y)| x - y))),
        _ => None,
    };
    let tau_ps = config.coherence_time_ps();
    let relative_rms = rms_residual / peak;
    let slice_relative_rms = slice_rms.map(|r| r / peak);
    let passed = relative_rms <= max_rel_rms && slice_relative_rms.is_none_or(|r| r <= max_rel_rms);
    let summary = ComparisonSummary {
        bins: residuals.len(),
        rms_residual,
        relative_rms,
        max_abs_residual: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        chi_square,
        chi_square_bins,
        slice_rms_residual: slice_rms,
        slice_relative_rms,
        measured_contrast: contrast_of_surface(measured, tau_ps).ok(),
        analytic_contrast: contrast_of_surface(reference, tau_ps).ok(),
        max_rel_rms,
        passed,
    };
    let rows = measured
        .iter()
        .zip(&reference.values)
        .map(|((k13, k23, m, e), a)| {
            let r = m - a;
            let z = if e > 0.0 {
                (r / e).to_string()
            } else {
                String::new()
            };
            vec![
                measured.axis13.coordinate_ps(k13).to_string(),
                measured.axis23.coordinate_ps(k23).to_string(),
                m.to_string(),
                a.to_string(),
                r.to_string(),
                z,
            ]
        });
    write_rows(
        &out.path("residuals.csv"),
        &["t13_ps", "t23_ps", "measured", "analytic", "residual", "z"],
        rows,
    )?;
    out.meta.details = to_value(&summary);
    if passed {
        Ok(())
    } else {
        Err(Failure::Comparison(format!(
            "relative RMS {relative_rms:.4} (slice {}) exceeds {max_rel_rms}",
            slice_relative_rms.map_or("n/a".to_string(), |r| format!("{r:.4}"))
        )))
    }
}

fn compare(common: &Common, args: &CompareArgs) -> CliResult {
    let config = resolve(common, None)?;
    let measured = read_surface_csv(&args.measured)?;
    let reference = read_surface_csv(&args.analytic)?;
    let mut out = Outputs::new("compare", &config)?;
    out.meta.lineage = json!({ "measured": args.measured, "analytic": args.analytic });
    let outcome = write_comparison(&mut out, &config, &measured, &reference, args.max_rel_rms);
    out.finish("compare.json")?;
    outcome
}

fn pipeline(common: &Common, args: &PipelineArgs) -> CliResult {
    let config = resolve(common, None)?;
    let streams = simulate_streams(&config)?;

    let mut out = Outputs::new("pipeline:detect", &config)?;
    write_streams(&mut out, &streams, args.csv)?;
    out.meta.lineage = json!({
        "field_seed": config.seed,
        "field_config_hash": config_hash(&config),
        "intensity_file": Value::Null,
    });
    out.finish("tags.json")?;

    let correlation = correlate(&streams, config.axes)?;
    let mut out = Outputs::new("pipeline:correlate", &config)?;
    let report = write_correlation(&mut out, &config, &correlation);
    out.finish("correlate.json")?;
    report?;

    let mut out = Outputs::new("pipeline:analytic", &config)?;
    let reference = write_analytic(&mut out, &config, args.model, None)?;
    out.finish("analytic.json")?;

    let mut out = Outputs::new("pipeline:compare", &config)?;
    let outcome = write_comparison(
        &mut out,
        &config,
        &correlation.surface,
        &reference.surface,
        args.max_rel_rms,
    );
    out.finish("compare.json")?;
    outcome
}

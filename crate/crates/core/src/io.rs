//! File formats: TTAG1 time-tag files, CSV tables and JSON documents.
//!
//! Configs carry seconds and hertz; tag files carry integer picoseconds.
//! Floating-point columns are written in shortest round-trip form, so a value
//! read back is bit-identical to the value written.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::correlator::{
    CoincidenceHistogram2D, Histogram1D, HistogramAxis, NormalizedSurface, Profile,
};
use crate::detection::TimeTagStream;
use crate::error::{Error, Result};
use crate::field::{FieldTrace, IntensityTrace};

pub const TTAG_MAGIC: [u8; 8] = *b"TTAG1\0\0\0";

const TTAG_HEADER_LEN: usize = 8 + 4 + 8;

/// Tags and channel id as stored in a TTAG1 file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagFile {
    pub channel_id: u32,
    pub tags: Vec<u64>,
}

impl TagFile {
    pub fn into_stream(self, origin_duration_ps: u64) -> Result<TimeTagStream> {
        let channel = u8::try_from(self.channel_id).map_err(|_| {
            Error::format(
                "TTAG1 file",
                format!("channel id {} out of range", self.channel_id),
            )
        })?;
        TimeTagStream::new(channel, self.tags, origin_duration_ps)
    }
}

fn with_path<T>(path: &Path, result: Result<T>) -> Result<T> {
    result.map_err(|err| match err {
        Error::Io(source) => Error::File {
            path: path.to_path_buf(),
            source,
        },
        Error::Format { what, detail } => Error::Format {
            what,
            detail: format!("{}: {detail}", path.display()),
        },
        other => other,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })
}

pub fn write_ttag<W: Write>(mut w: W, channel_id: u32, tags: &[u64]) -> Result<()> {
    w.write_all(&TTAG_MAGIC)?;
    w.write_all(&channel_id.to_le_bytes())?;
    w.write_all(&(tags.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * 8192);
    for block in tags.chunks(8192) {
        buf.clear();
        for t in block {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ttag<R: Read>(mut r: R) -> Result<TagFile> {
    let mut header = [0u8; TTAG_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::format("TTAG1 file", "truncated header"))?;
    if header[..8] != TTAG_MAGIC {
        return Err(Error::format("TTAG1 file", "bad magic, not a TTAG1 file"));
    }
    let channel_id = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let count = u64::from_le_bytes(header[12..20].try_into().unwrap());
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let expected = count
        .checked_mul(8)
        .ok_or_else(|| Error::format("TTAG1 file", "record count overflows"))?;
    if body.len() as u64 != expected {
        return Err(Error::format(
            "TTAG1 file",
            format!(
                "header declares {count} records but payload holds {} bytes",
                body.len()
            ),
        ));
    }
    let tags: Vec<u64> = body
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if let Some(i) = tags.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::format(
            "TTAG1 file",
            format!("record {} is out of order", i + 1),
        ));
    }
    Ok(TagFile { channel_id, tags })
}

pub fn save_ttag(path: &Path, stream: &TimeTagStream) -> Result<()> {
    with_path(
        path,
        write_ttag(create(path)?, u32::from(stream.channel_id), &stream.tags),
    )
}

pub fn load_ttag(path: &Path) -> Result<TagFile> {
    with_path(path, read_ttag(open(path)?))
}

/// Single-column `tag_ps` export.
pub fn write_tags_csv(path: &Path, stream: &TimeTagStream) -> Result<()> {
    with_path(
        path,
        (|| {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(["tag_ps"])?;
            for t in &stream.tags {
                w.write_record([t.to_string()])?;
            }
            w.flush()?;
            Ok(())
        })(),
    )
}

pub fn read_tags_csv(path: &Path) -> Result<Vec<u64>> {
    with_path(
        path,
        (|| {
            let mut r = csv::Reader::from_reader(open(path)?);
            expect_header(&mut r, &["tag_ps"])?;
            r.records()
                .map(|rec| parse_field::<u64>(&rec?, 0))
                .collect()
        })(),
    )
}

fn expect_header<R: Read>(r: &mut csv::Reader<R>, columns: &[&str]) -> Result<()> {
    let header = r.headers()?;
    if header.iter().ne(columns.iter().copied()) {
        return Err(Error::format(
            "csv",
            format!(
                "expected header `{}`, found `{}`",
                columns.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| {
        Error::format(
            "csv",
            format!("line {}: missing column {}", line_of(rec), i + 1),
        )
    })?;
    raw.trim().parse().map_err(|_| {
        Error::format(
            "csv",
            format!("line {}: cannot parse `{raw}`", line_of(rec)),
        )
    })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Envelope export with columns `t_s,re,im`.
pub fn write_field_csv(path: &Path, trace: &FieldTrace) -> Result<()> {
    with_path(
        path,
        (|| {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(["t_s", "re", "im"])?;
            for (i, e) in trace.samples.iter().enumerate() {
                w.write_record([
                    trace.time_s(i).to_string(),
                    e.re.to_string(),
                    e.im.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })(),
    )
}

pub fn read_field_csv(path: &Path) -> Result<Vec<Complex64>> {
    with_path(
        path,
        (|| {
            let mut r = csv::Reader::from_reader(open(path)?);
            expect_header(&mut r, &["t_s", "re", "im"])?;
            r.records()
                .map(|rec| {
                    let rec = rec?;
                    Ok(Complex64::new(parse_field(&rec, 1)?, parse_field(&rec, 2)?))
                })
                .collect()
        })(),
    )
}

/// Intensity export with columns `t_s,intensity`.
pub fn write_intensity_csv(path: &Path, trace: &IntensityTrace) -> Result<()> {
    with_path(
        path,
        (|| {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(["t_s", "intensity"])?;
            for (i, v) in trace.samples.iter().enumerate() {
                w.write_record([
                    (i as f64 * trace.sample_interval_s).to_string(),
                    v.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })(),
    )
}

pub fn read_intensity_csv(path: &Path) -> Result<Vec<f64>> {
    with_path(
        path,
        (|| {
            let mut r = csv::Reader::from_reader(open(path)?);
            expect_header(&mut r, &["t_s", "intensity"])?;
            let samples: Vec<f64> = r
                .records()
                .map(|rec| parse_field(&rec?, 1))
                .collect::<Result<_>>()?;
            if let Some(v) = samples.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::format(
                    "intensity csv",
                    format!("invalid intensity {v}"),
                ));
            }
            Ok(samples)
        })(),
    )
}

/// Raw counts with columns `t13_ps,t23_ps,count`.
pub fn write_histogram_csv(path: &Path, hist: &CoincidenceHistogram2D) -> Result<()> {
    with_path(
        path,
        (|| {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(["t13_ps", "t23_ps", "count"])?;
            let cols = hist.axis23.num_bins();
            for (i, count) in hist.counts.iter().enumerate() {
                let k13 = (i / cols) as i64 - hist.axis13.bins_per_side();
                let k23 = (i % cols) as i64 - hist.axis23.bins_per_side();
                w.write_record([
                    hist.axis13.coordinate_ps(k13).to_string(),
                    hist.axis23.coordinate_ps(k23).to_string(),
                    count.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })(),
    )
}

/// Surface with columns `t13_ps,t23_ps,<value>,stderr`.
pub fn write_surface_csv(
    path: &Path,
    surface: &NormalizedSurface,
    value_column: &str,
) -> Result<()> {
    with_path(
        path,
        (|| {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(["t13_ps", "t23_ps", value_column, "stderr"])?;
            for (k13, k23, v, e) in surface.iter() {
                w.write_record([
                    surface.axis13.coordinate_ps(k13).to_string(),
                    surface.axis23.coordinate_ps(k23).to_string(),
                    v.to_string(),
                    e.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })(),
    )
}

/// Recover an axis from the sorted distinct bin coordinates it produced.
fn axis_from_coordinates(coords: &[i64]) -> Result<HistogramAxis> {
    if coords.len() < 2 || !coords.len().is_multiple_of(2) {
        return Err(Error::format(
            "surface csv",
            "axis needs an even number of at least two bins",
        ));
    }
    let width = coords[1] - coords[0];
    if width <= 0 || coords.windows(2).any(|w| w[1] - w[0] != width) {
        return Err(Error::format(
            "surface csv",
            "bin coordinates are not evenly spaced",
        ));
    }
    let axis = HistogramAxis::new(width as u64, (coords.len() as u64 / 2) * width as u64)?;
    if coords[0] != -(axis.half_range_ps as i64) {
        return Err(Error::format("surface csv", "axis is not centred on zero"));
    }
    Ok(axis)
}

pub fn read_surface_csv(path: &Path) -> Result<NormalizedSurface> {
    with_path(
        path,
        (|| {
            let mut r = csv::Reader::from_reader(open(path)?);
            let header = r.headers()?.clone();
            if header.len() != 4
                || &header[0] != "t13_ps"
                || &header[1] != "t23_ps"
                || &header[3] != "stderr"
            {
                return Err(Error::format(
                    "surface csv",
                    "expected header `t13_ps,t23_ps,<value>,stderr`",
                ));
            }
            let mut rows = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                rows.push((
                    parse_field::<i64>(&rec, 0)?,
                    parse_field::<i64>(&rec, 1)?,
                    parse_field::<f64>(&rec, 2)?,
                    parse_field::<f64>(&rec, 3)?,
                ));
            }
            let distinct = |f: fn(&(i64, i64, f64, f64)) -> i64| {
                let mut v: Vec<i64> = rows.iter().map(f).collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            let axis13 = axis_from_coordinates(&distinct(|r| r.0))?;
            let axis23 = axis_from_coordinates(&distinct(|r| r.1))?;
            let cols = axis23.num_bins();
            let n = axis13.num_bins() * cols;
            if rows.len() != n {
                return Err(Error::format(
                    "surface csv",
                    format!("expected {n} rows, found {}", rows.len()),
                ));
            }
            let mut values = vec![f64::NAN; n];
            let mut stderr = vec![f64::NAN; n];
            for (t13, t23, v, e) in rows {
                let i = (t13 / axis13.bin_width_ps as i64 + axis13.bins_per_side()) as usize;
                let j = (t23 / axis23.bin_width_ps as i64 + axis23.bins_per_side()) as usize;
                let at = i * cols + j;
                if !values[at].is_nan() {
                    return Err(Error::format(
                        "surface csv",
                        format!("duplicate bin ({t13}, {t23})"),
                    ));
                }
                values[at] = v;
                stderr[at] = e;
            }
            NormalizedSurface::new(axis13, axis23, values, stderr)
        })(),
    )
}

/// Profile with columns `<coordinate>,<value>,stderr`.
pub fn write_profile_csv(path: &Path, profile: &Profile, columns: [&str; 2]) -> Result<()> {
    with_path(
        path,
        (|| {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record([columns[0], columns[1], "stderr"])?;
            for ((s, v), e) in profile
                .coordinate_ps
                .iter()
                .zip(&profile.values)
                .zip(&profile.stderr)
            {
                w.write_record([s.to_string(), v.to_string(), e.to_string()])?;
            }
            w.flush()?;
            Ok(())
        })(),
    )
}

pub fn read_profile_csv(path: &Path) -> Result<Profile> {
    with_path(
        path,
        (|| {
            let mut r = csv::Reader::from_reader(open(path)?);
            if r.headers()?.len() != 3 {
                return Err(Error::format("profile csv", "expected three columns"));
            }
            let mut profile = Profile {
                coordinate_ps: Vec::new(),
                values: Vec::new(),
                stderr: Vec::new(),
            };
            for rec in r.records() {
                let rec = rec?;
                profile.coordinate_ps.push(parse_field(&rec, 0)?);
                profile.values.push(parse_field(&rec, 1)?);
                profile.stderr.push(parse_field(&rec, 2)?);
            }
            Ok(profile)
        })(),
    )
}

/// Pair histogram with its normalization: `tau_ps,count,g2,stderr`.
pub fn write_g2_csv(path: &Path, hist: &Histogram1D, profile: &Profile) -> Result<()> {
    with_path(
        path,
        (|| {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(["tau_ps", "count", "g2", "stderr"])?;
            for (i, count) in hist.counts.iter().enumerate() {
                w.write_record([
                    profile.coordinate_ps[i].to_string(),
                    count.to_string(),
                    profile.values[i].to_string(),
                    profile.stderr[i].to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })(),
    )
}

/// Generic CSV table.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    with_path(
        path,
        (|| {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(header)?;
            for row in rows {
                w.write_record(row)?;
            }
            w.flush()?;
            Ok(())
        })(),
    )
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    with_path(
        path,
        (|| {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
            w.flush()?;
            Ok(())
        })(),
    )
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    with_path(path, (|| Ok(serde_json::from_reader(open(path)?)?))())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn ttag_layout_is_little_endian() {
        let mut buf = Vec::new();
        write_ttag(&mut buf, 2, &[1, 256]).unwrap();
        assert_eq!(&buf[..8], b"TTAG1\0\0\0");
        assert_eq!(&buf[8..12], &[2, 0, 0, 0]);
        assert_eq!(&buf[12..20], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&buf[20..28], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&buf[28..36], &[0, 1, 0, 0, 0, 0, 0, 0]);
        let back = read_ttag(Cursor::new(buf)).unwrap();
        assert_eq!(
            back,
            TagFile {
                channel_id: 2,
                tags: vec![1, 256]
            }
        );
    }

    #[test]
    fn ttag_rejects_corruption() {
        let mut buf = Vec::new();
        write_ttag(&mut buf, 1, &[5, 9]).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_ttag(Cursor::new(bad_magic)).is_err());
        assert!(read_ttag(Cursor::new(&buf[..buf.len() - 1])).is_err());
        assert!(read_ttag(Cursor::new(&buf[..10])).is_err());
        let mut unsorted = Vec::new();
        write_ttag(&mut unsorted, 1, &[9, 5]).unwrap();
        assert!(read_ttag(Cursor::new(unsorted)).is_err());
    }

    #[test]
    fn axis_recovery() {
        let axis = axis_from_coordinates(&[-20, -10, 0, 10]).unwrap();
        assert_eq!(axis, HistogramAxis::new(10, 20).unwrap());
        assert!(axis_from_coordinates(&[-10, 0, 10]).is_err());
        assert!(axis_from_coordinates(&[-30, -10, 0, 10]).is_err());
        assert!(axis_from_coordinates(&[-10, 0, 10, 20]).is_err());
    }
}

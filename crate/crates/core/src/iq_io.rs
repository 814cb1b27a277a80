//! IQ captures and result tables on disk.
//!
//! A capture is a raw payload of interleaved little-endian `(I, Q)` pairs
//! plus a mandatory JSON sidecar at `<payload>.json`. Concurrent writers to
//! one path are not supported.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::{IqSignal, C64};

const CI16_SCALE: f64 = 32768.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    Cf32le,
    Ci16le,
}

impl SampleFormat {
    pub fn bytes_per_sample(self) -> usize {
        match self {
            SampleFormat::Cf32le => 8,
            SampleFormat::Ci16le => 4,
        }
    }

    fn decode(self, bytes: &[u8]) -> C64 {
        match self {
            SampleFormat::Cf32le => C64::new(
                f32::from_le_bytes(bytes[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(bytes[4..8].try_into().unwrap()) as f64,
            ),
            SampleFormat::Ci16le => C64::new(
                i16::from_le_bytes(bytes[0..2].try_into().unwrap()) as f64 / CI16_SCALE,
                i16::from_le_bytes(bytes[2..4].try_into().unwrap()) as f64 / CI16_SCALE,
            ),
        }
    }

    fn encode(self, v: C64, out: &mut Vec<u8>) {
        match self {
            SampleFormat::Cf32le => {
                out.extend_from_slice(&(v.re as f32).to_le_bytes());
                out.extend_from_slice(&(v.im as f32).to_le_bytes());
            }
            SampleFormat::Ci16le => {
                let q = |x: f64| {
                    (x * CI16_SCALE)
                        .round()
                        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
                };
                out.extend_from_slice(&q(v.re).to_le_bytes());
                out.extend_from_slice(&q(v.im).to_le_bytes());
            }
        }
    }
}

impl fmt::Display for SampleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleFormat::Cf32le => "cf32le",
            SampleFormat::Ci16le => "ci16le",
        })
    }
}

impl FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cf32le" => Ok(SampleFormat::Cf32le),
            "ci16le" => Ok(SampleFormat::Ci16le),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqFileHeader {
    pub sample_rate_hz: f64,
    pub center_frequency_hz: f64,
    pub sample_format: SampleFormat,
    pub num_samples: u64,
    #[serde(default)]
    pub description: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_header(path: &Path) -> Result<IqFileHeader> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| Error::Sidecar {
            path: side.clone(),
            source,
        })?;
    if let Some(fmt) = value.get("sample_format").and_then(|v| v.as_str()) {
        fmt.parse::<SampleFormat>()?;
    }
    let header: IqFileHeader =
        serde_json::from_value(value).map_err(|source| Error::Sidecar { path: side, source })?;
    if !(header.sample_rate_hz.is_finite() && header.sample_rate_hz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample rate {} Hz must be positive",
            header.sample_rate_hz
        )));
    }
    Ok(header)
}

/// Chunked reader over a capture whose payload length has been checked
/// against its sidecar.
pub struct IqReader {
    header: IqFileHeader,
    inner: BufReader<File>,
    remaining: u64,
    scratch: Vec<u8>,
}

impl IqReader {
    pub fn open(path: &Path) -> Result<Self> {
        let header = read_header(path)?;
        let file = File::open(path)?;
        let bytes = file.metadata()?.len();
        let bps = header.sample_format.bytes_per_sample() as u64;
        if bytes % bps != 0 || bytes / bps != header.num_samples {
            return Err(Error::PayloadLength {
                path: path.to_path_buf(),
                declared: header.num_samples,
                actual: bytes / bps,
            });
        }
        Ok(IqReader {
            remaining: header.num_samples,
            header,
            inner: BufReader::with_capacity(1 << 20, file),
            scratch: Vec::new(),
        })
    }

    pub fn header(&self) -> &IqFileHeader {
        &self.header
    }

    /// Fills `out` from the front; returns the count written, 0 at the end.
    pub fn read_chunk(&mut self, out: &mut [C64]) -> Result<usize> {
        let n = (out.len() as u64).min(self.remaining) as usize;
        let bps = self.header.sample_format.bytes_per_sample();
        self.scratch.resize(n * bps, 0);
        self.inner.read_exact(&mut self.scratch)?;
        for (dst, src) in out[..n].iter_mut().zip(self.scratch.chunks_exact(bps)) {
            *dst = self.header.sample_format.decode(src);
        }
        self.remaining -= n as u64;
        Ok(n)
    }
}

pub fn read_iq_with_header(path: &Path) -> Result<(IqSignal, IqFileHeader)> {
    let mut reader = IqReader::open(path)?;
    let mut samples = vec![C64::new(0.0, 0.0); reader.header.num_samples as usize];
    let mut filled = 0;
    while filled < samples.len() {
        filled += reader.read_chunk(&mut samples[filled..])?;
    }
    let header = reader.header.clone();
    Ok((IqSignal::new(samples, header.sample_rate_hz)?, header))
}

pub fn read_iq(path: &Path) -> Result<IqSignal> {
    Ok(read_iq_with_header(path)?.0)
}

/// Streams a payload to disk; the sidecar is written by [`IqWriter::finish`].
pub struct IqWriter {
    path: PathBuf,
    out: BufWriter<File>,
    header: IqFileHeader,
    scratch: Vec<u8>,
}

impl IqWriter {
    pub fn create(
        path: &Path,
        format: SampleFormat,
        sample_rate_hz: f64,
        center_frequency_hz: f64,
        description: &str,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate {sample_rate_hz} Hz must be positive"
            )));
        }
        Ok(IqWriter {
            path: path.to_path_buf(),
            out: BufWriter::with_capacity(1 << 20, File::create(path)?),
            header: IqFileHeader {
                sample_rate_hz,
                center_frequency_hz,
                sample_format: format,
                num_samples: 0,
                description: description.to_string(),
            },
            scratch: Vec::new(),
        })
    }

    /// ci16le saturates outside [-1, 1).
    pub fn write(&mut self, samples: &[C64]) -> Result<()> {
        let format = self.header.sample_format;
        for chunk in samples.chunks(4096) {
            self.scratch.clear();
            for &v in chunk {
                format.encode(v, &mut self.scratch);
            }
            self.out.write_all(&self.scratch)?;
        }
        self.header.num_samples += samples.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<IqFileHeader> {
        self.out.flush()?;
        let side = sidecar_path(&self.path);
        let json = serde_json::to_string_pretty(&self.header).map_err(|source| Error::Sidecar {
            path: side.clone(),
            source,
        })?;
        std::fs::write(&side, json + "\n")?;
        Ok(self.header)
    }
}

/// Writes the payload and its sidecar. ci16le saturates outside [-1, 1).
pub fn write_iq(
    signal: &IqSignal,
    path: &Path,
    format: SampleFormat,
    center_frequency_hz: f64,
    description: &str,
) -> Result<()> {
    let mut w = IqWriter::create(
        path,
        format,
        signal.sample_rate(),
        center_frequency_hz,
        description,
    )?;
    w.write(signal.samples())?;
    w.finish()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(v) => Some(v as f64),
            Cell::Float(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Cell::Int(v) => Some(v),
            _ => None,
        }
    }

    fn parse(field: &str) -> Cell {
        if let Ok(v) = field.parse::<i64>() {
            Cell::Int(v)
        } else if let Ok(v) = field.parse::<f64>() {
            Cell::Float(v)
        } else if let Ok(v) = field.parse::<bool>() {
            Cell::Bool(v)
        } else {
            Cell::Text(field.to_string())
        }
    }
}

/// Floats use 17 significant digits in exponent form, so parsing a written
/// value recovers it bit for bit and no locale can change the separator.
impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v:.16e}"),
            Cell::Bool(v) => write!(f, "{v}"),
            Cell::Text(v) => f.write_str(v),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidParameter(format!(
                "row has {} cells, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.columns)?;
        let mut fields = Vec::with_capacity(self.columns.len());
        for row in &self.rows {
            fields.clear();
            fields.extend(row.iter().map(Cell::to_string));
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    table.write_to(BufWriter::new(File::create(path)?))
}

pub fn read_csv(path: &Path) -> Result<Table> {
    read_csv_from(File::open(path)?)
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Table> {
    let mut r = csv::Reader::from_reader(input);
    let columns = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(Cell::parse).collect());
    }
    Ok(Table { columns, rows })
}

//! On-disk feature containers.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! "GSTD" | u16 version = 1 | u8 flags | u64 N | u32 d | u32 C
//! N*d f32 features (row-major) | N u32 labels
//! [N f32 reference losses]   if flags & 1
//! [N u64 ids]                if flags & 2, otherwise ids are 0..N
//! ```
//!
//! CSV: header `id,label[,loss],f0,...,f{d-1}`, one sample per row. The class
//! count is one past the largest label.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gstds_core::data::FeatureSet;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"GSTD";
pub const VERSION: u16 = 1;
const FLAG_LOSSES: u8 = 1;
const FLAG_IDS: u8 = 2;
const HEADER_LEN: usize = 4 + 2 + 1 + 8 + 4 + 4;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("{0} trailing bytes after the last section")]
    TrailingBytes(usize),
    #[error("row {row}: expected {expected} columns, found {found}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Parse { row: usize, column: String, value: String },
    #[error("row {row}: {source}")]
    Csv { row: usize, source: csv::Error },
    #[error("unknown format `{0}` (expected binary or csv)")]
    UnknownFormat(String),
    #[error(transparent)]
    Invalid(#[from] gstds_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` means CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Format::Binary => "binary",
            Format::Csv => "csv",
        }
    }
}

impl FromStr for Format {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" | "gstd" => Ok(Format::Binary),
            "csv" => Ok(Format::Csv),
            _ => Err(FormatError::UnknownFormat(s.to_owned())),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_owned(), source }
}

pub fn load_featureset(path: &Path, format: Format) -> Result<FeatureSet> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match format {
        Format::Binary => decode_binary(&bytes),
        Format::Csv => decode_csv(&bytes),
    }
}

pub fn save_featureset(fs: &FeatureSet, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Binary => encode_binary(fs),
        Format::Csv => encode_csv(fs)?,
    };
    fs::write(path, bytes).map_err(io_err(path))
}

fn has_default_ids(fs: &FeatureSet) -> bool {
    fs.ids().iter().enumerate().all(|(i, &id)| id == i as u64)
}

pub fn encode_binary(fs: &FeatureSet) -> Vec<u8> {
    let n = fs.len();
    let mut flags = 0;
    if fs.ref_losses().is_some() {
        flags |= FLAG_LOSSES;
    }
    let explicit_ids = !has_default_ids(fs);
    if explicit_ids {
        flags |= FLAG_IDS;
    }
    let mut out = Vec::with_capacity(HEADER_LEN + n * (fs.dim() * 4 + 16));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(flags);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(fs.dim() as u32).to_le_bytes());
    out.extend_from_slice(&fs.class_count().to_le_bytes());
    for v in fs.features() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for l in fs.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    if let Some(losses) = fs.ref_losses() {
        for l in losses {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    if explicit_ids {
        for id in fs.ids() {
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            FormatError::Truncated(format!(
                "{what} needs {len} bytes at offset {}, file has {}",
                self.at,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<FeatureSet> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let mut r = Reader { bytes, at: 4 };
    let version = u16::from_le_bytes(r.array("version")?);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let flags = r.array::<1>("flags")?[0];
    if flags & !(FLAG_LOSSES | FLAG_IDS) != 0 {
        return Err(FormatError::MalformedHeader(format!("unknown flag bits {flags:#04x}")));
    }
    let n = u64::from_le_bytes(r.array("sample count")?);
    let dim = u32::from_le_bytes(r.array("dimension")?) as usize;
    let classes = u32::from_le_bytes(r.array("class count")?);
    let n = usize::try_from(n).map_err(|_| FormatError::MalformedHeader(format!("sample count {n} too large")))?;
    if n == 0 || dim == 0 || classes == 0 {
        return Err(FormatError::MalformedHeader(format!(
            "N, d and C must be positive, got N={n}, d={dim}, C={classes}"
        )));
    }
    let cells = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| FormatError::MalformedHeader(format!("N*d overflows for N={n}, d={dim}")))?;

    let features: Vec<f32> = r
        .take(cells, "features")?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels: Vec<u32> = r
        .take(n * 4, "labels")?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let losses = if flags & FLAG_LOSSES != 0 {
        Some(
            r.take(n * 4, "reference losses")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    } else {
        None
    };
    let ids: Vec<u64> = if flags & FLAG_IDS != 0 {
        r.take(n * 8, "ids")?
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    } else {
        (0..n as u64).collect()
    };
    if r.at != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - r.at));
    }
    Ok(FeatureSet::new(ids, features, dim, labels, losses, classes)?)
}

pub fn encode_csv(fs: &FeatureSet) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_owned(), "label".to_owned()];
    if fs.ref_losses().is_some() {
        header.push("loss".to_owned());
    }
    header.extend((0..fs.dim()).map(|k| format!("f{k}")));
    let csv_err = |source| FormatError::Csv { row: 0, source };
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..fs.len() {
        let mut rec = vec![fs.ids()[i].to_string(), fs.labels()[i].to_string()];
        if let Some(l) = fs.ref_losses() {
            rec.push(l[i].to_string());
        }
        // Display prints the shortest string that parses back to the same f32
        rec.extend(fs.row(i).iter().map(f32::to_string));
        w.write_record(&rec).map_err(|source| FormatError::Csv { row: i, source })?;
    }
    w.into_inner().map_err(|e| FormatError::Io { path: PathBuf::from("<memory>"), source: e.into_error() })
}

pub fn decode_csv(bytes: &[u8]) -> Result<FeatureSet> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let header: Vec<String> = r
        .headers()
        .map_err(|source| FormatError::Csv { row: 0, source })?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if header.len() < 3 || header[0] != "id" || header[1] != "label" {
        return Err(FormatError::MalformedHeader(format!(
            "expected `id,label[,loss],f0..`, got `{}`",
            header.join(",")
        )));
    }
    let with_loss = header[2] == "loss";
    let first_feature = if with_loss { 3 } else { 2 };
    let dim = header.len() - first_feature;
    if dim == 0 {
        return Err(FormatError::MalformedHeader("no feature columns".to_owned()));
    }
    for (k, name) in header[first_feature..].iter().enumerate() {
        if *name != format!("f{k}") {
            return Err(FormatError::MalformedHeader(format!("column {} is `{name}`, expected `f{k}`", first_feature + k)));
        }
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut losses = Vec::new();
    let mut features = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| FormatError::Csv { row, source })?;
        if rec.len() != header.len() {
            return Err(FormatError::DimensionMismatch { row, expected: header.len(), found: rec.len() });
        }
        let parse_err = |col: usize| FormatError::Parse {
            row,
            column: header[col].clone(),
            value: rec[col].to_owned(),
        };
        ids.push(rec[0].trim().parse::<u64>().map_err(|_| parse_err(0))?);
        labels.push(rec[1].trim().parse::<u32>().map_err(|_| parse_err(1))?);
        if with_loss {
            losses.push(rec[2].trim().parse::<f32>().map_err(|_| parse_err(2))?);
        }
        for col in first_feature..header.len() {
            features.push(rec[col].trim().parse::<f32>().map_err(|_| parse_err(col))?);
        }
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let losses = with_loss.then_some(losses);
    Ok(FeatureSet::new(ids, features, dim, labels, losses, classes)?)
}

/// Writes `bytes` to `path`, or to stdout when `path` is `-`.
pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if path == Path::new("-") {
        let mut out = io::stdout().lock();
        out.write_all(bytes).and_then(|_| out.flush()).map_err(io_err(path))
    } else {
        fs::write(path, bytes).map_err(io_err(path))
    }
}

//! CSV ingestion: respondent-level ("long") files and aggregated counts files.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use ordinal_transport::ObservedSample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Codes treated as nonresponse when none are given.
pub const DEFAULT_MISSING_CODES: [&str; 5] = ["*", "NA", "", "98", "99"];

/// Label of the nonresponse row in a counts file.
pub const MISSING_LABEL: &str = "missing";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// One respondent per row under a `value` header.
    Long,
    /// `category,count` rows plus a `missing,count` row.
    Counts,
    /// Decide from the header row.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub format: InputFormat,
    pub path: PathBuf,
    pub k: usize,
    pub missing_codes: Vec<String>,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>, k: usize) -> Self {
        Self {
            format: InputFormat::Auto,
            path: path.into(),
            k,
            missing_codes: DEFAULT_MISSING_CODES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),

    #[error("{path}: parse error at row {row}, column {column}: {message}")]
    Parse { path: PathBuf, row: u64, column: usize, message: String },

    #[error("{path}: row {row}: category {value} is outside 1..={k}")]
    OutOfRangeCategory { path: PathBuf, row: u64, value: String, k: usize },

    #[error("{path}: {source}")]
    Sample { path: PathBuf, source: ordinal_transport::Error },
}

/// Reads `spec.path` into counts and a nonresponse tally.
pub fn ingest(spec: &DatasetSpec) -> Result<ObservedSample, IngestError> {
    let path = spec.path.as_path();
    if spec.k < 2 {
        return Err(IngestError::Sample {
            path: path.to_path_buf(),
            source: ordinal_transport::Error::TooFewCategories(spec.k),
        });
    }
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(IngestError::EmptyFile(path.to_path_buf()));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').trim().to_ascii_lowercase())
        .collect();
    let format = match (spec.format, header.as_slice()) {
        (InputFormat::Long | InputFormat::Auto, [v]) if v == "value" => InputFormat::Long,
        (InputFormat::Counts | InputFormat::Auto, [c, n]) if c == "category" && n == "count" => {
            InputFormat::Counts
        }
        (InputFormat::Long, _) => return Err(bad_header(path, "expected header `value`")),
        (InputFormat::Counts, _) => {
            return Err(bad_header(path, "expected header `category,count`"))
        }
        (InputFormat::Auto, _) => {
            return Err(bad_header(path, "expected header `value` or `category,count`"))
        }
    };

    let (counts, missing) = match format {
        InputFormat::Long => read_long(path, spec, &mut reader)?,
        _ => read_counts(path, spec.k, &mut reader)?,
    };
    ObservedSample::new(counts, missing)
        .map_err(|source| IngestError::Sample { path: path.to_path_buf(), source })
}

fn bad_header(path: &Path, message: &str) -> IngestError {
    IngestError::Parse { path: path.to_path_buf(), row: 1, column: 1, message: message.into() }
}

fn csv_error(path: &Path, e: csv::Error) -> IngestError {
    let row = e.position().map(|p| p.line()).unwrap_or(0);
    let column = match e.kind() {
        csv::ErrorKind::Utf8 { err, .. } => err.field() + 1,
        _ => 1,
    };
    IngestError::Parse { path: path.to_path_buf(), row, column, message: e.to_string() }
}

fn row_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn read_long(
    path: &Path,
    spec: &DatasetSpec,
    reader: &mut csv::Reader<&[u8]>,
) -> Result<(Vec<u64>, u64), IngestError> {
    let mut counts = vec![0u64; spec.k];
    let mut missing = 0u64;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = row_of(&record);
        if record.len() != 1 {
            return Err(IngestError::Parse {
                path: path.to_path_buf(),
                row,
                column: 2,
                message: format!("expected 1 field, found {}", record.len()),
            });
        }
        rows += 1;
        let value = record[0].trim();
        if spec.missing_codes.iter().any(|c| c.trim() == value) {
            missing += 1;
            continue;
        }
        let category = parse_category(path, row, value, spec.k)?;
        counts[category - 1] += 1;
    }
    if rows == 0 {
        return Err(IngestError::EmptyFile(path.to_path_buf()));
    }
    Ok((counts, missing))
}

fn parse_category(path: &Path, row: u64, value: &str, k: usize) -> Result<usize, IngestError> {
    let category: i64 = value.parse().map_err(|_| IngestError::Parse {
        path: path.to_path_buf(),
        row,
        column: 1,
        message: format!("`{value}` is neither a category nor a missing code"),
    })?;
    if category < 1 || category as u64 > k as u64 {
        return Err(IngestError::OutOfRangeCategory {
            path: path.to_path_buf(),
            row,
            value: value.to_string(),
            k,
        });
    }
    Ok(category as usize)
}

fn read_counts(
    path: &Path,
    k: usize,
    reader: &mut csv::Reader<&[u8]>,
) -> Result<(Vec<u64>, u64), IngestError> {
    let mut counts: Vec<Option<u64>> = vec![None; k];
    let mut missing: Option<u64> = None;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = row_of(&record);
        let parse_err = |column, message: String| IngestError::Parse {
            path: path.to_path_buf(),
            row,
            column,
            message,
        };
        if record.len() != 2 {
            return Err(parse_err(1, format!("expected 2 fields, found {}", record.len())));
        }
        rows += 1;
        let label = record[0].trim();
        let count: u64 = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(2, format!("`{}` is not a nonnegative count", &record[1])))?;
        let slot = if label.eq_ignore_ascii_case(MISSING_LABEL) {
            &mut missing
        } else {
            &mut counts[parse_category(path, row, label, k)? - 1]
        };
        if slot.replace(count).is_some() {
            return Err(parse_err(1, format!("duplicate row for `{label}`")));
        }
    }
    if rows == 0 {
        return Err(IngestError::EmptyFile(path.to_path_buf()));
    }
    let counts: Vec<u64> = counts.into_iter().map(|c| c.unwrap_or(0)).collect();
    let missing = missing.unwrap_or(0);
    let total = counts.iter().try_fold(missing, |acc, c| acc.checked_add(*c));
    if total.is_none() {
        return Err(IngestError::Parse {
            path: path.to_path_buf(),
            row: 0,
            column: 2,
            message: "total count overflows".into(),
        });
    }
    Ok((counts, missing))
}

/// Counts-format CSV text for `sample`.
pub fn counts_csv(sample: &ObservedSample) -> String {
    let mut out = String::from("category,count\n");
    for (i, c) in sample.counts().iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, c));
    }
    out.push_str(&format!("{MISSING_LABEL},{}\n", sample.missing()));
    out
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

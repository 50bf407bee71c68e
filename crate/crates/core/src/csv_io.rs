//! Cohort CSV: header `id,entry_age,exit_age,event,<covariates...>`, event
//! coded 0/1, every field required.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::cohort::{validate_cohort, Cohort, CohortError, RawRecord};

const FIXED_COLUMNS: [&str; 4] = ["id", "entry_age", "exit_age", "event"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header must start with id,entry_age,exit_age,event (got {0:?})")]
    BadHeader(Vec<String>),
    #[error("line {line}: expected {expected} fields, found {found}")]
    MissingField { line: u64, expected: usize, found: usize },
    #[error("line {line}: column '{column}' is empty")]
    EmptyField { line: u64, column: String },
    #[error("line {line}: column '{column}' is not a number: '{value}'")]
    BadNumber { line: u64, column: String, value: String },
    #[error("line {line}: event must be 0 or 1, got '{value}'")]
    BadEvent { line: u64, value: String },
    #[error(transparent)]
    Invalid(#[from] CohortError),
}

/// Parses and validates a cohort from CSV text.
pub fn read_cohort<R: Read>(reader: R, name: &str) -> Result<Cohort, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    if header.len() < FIXED_COLUMNS.len() || header[..4] != FIXED_COLUMNS {
        return Err(IngestError::BadHeader(header));
    }
    let covariate_names = header[4..].to_vec();

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(IngestError::MissingField { line, expected: header.len(), found: record.len() });
        }
        let field = |i: usize| -> Result<&str, IngestError> {
            let v = record[i].trim();
            if v.is_empty() {
                Err(IngestError::EmptyField { line, column: header[i].clone() })
            } else {
                Ok(v)
            }
        };
        let number = |i: usize| -> Result<f64, IngestError> {
            let v = field(i)?;
            v.parse::<f64>().map_err(|_| IngestError::BadNumber {
                line,
                column: header[i].clone(),
                value: v.to_owned(),
            })
        };
        let event = match field(3)? {
            "0" => false,
            "1" => true,
            other => return Err(IngestError::BadEvent { line, value: other.to_owned() }),
        };
        rows.push(RawRecord {
            id: field(0)?.to_owned(),
            entry_age: number(1)?,
            exit_age: number(2)?,
            event,
            covariates: (4..header.len()).map(number).collect::<Result<_, _>>()?,
        });
    }
    Ok(validate_cohort(name, rows, covariate_names)?)
}

/// Reads a cohort file; the cohort is named after the file stem.
pub fn read_cohort_file(path: &Path) -> Result<Cohort, IngestError> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_cohort(File::open(path)?, &name)
}

/// Writes a cohort in the ingestion format. Values use shortest round-trip
/// formatting, so reading the file back reproduces the cohort exactly.
pub fn write_cohort<W: Write>(cohort: &Cohort, writer: W) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(cohort.covariate_names().iter().map(String::as_str));
    w.write_record(&header)?;
    for s in cohort.subjects() {
        let mut rec = vec![
            s.id().to_owned(),
            s.entry_age().to_string(),
            s.exit_age().to_string(),
            if s.event() { "1" } else { "0" }.to_owned(),
        ];
        rec.extend(s.covariates().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cohort_file(cohort: &Cohort, path: &Path) -> Result<(), IngestError> {
    write_cohort(cohort, File::create(path)?)
}

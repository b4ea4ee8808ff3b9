//! Trace files: JSON Lines, one task per line, optionally preceded by a
//! header line identifying the schema and echoing the generator settings.
//!
//! ```text
//! {"schema":"echo-sched-trace","version":1,"generator":{...}}
//! {"id":"t000000","user_id":"u07","app":"ocr","arrival":0.41,"profile":{...},"offloadable":true}
//! ```

mod generate;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_trace, ModelError, Task, Warning};

pub use generate::{generate, AppCatalog, AppClass, AppSpec, MixSpec};

pub const SCHEMA_NAME: &str = "echo-sched-trace";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: unsupported trace schema `{schema}` version {version}")]
    Schema { line: usize, schema: String, version: u32 },
    #[error("invalid trace: {0}")]
    Invalid(#[from] ModelError),
    #[error("invalid generator setting: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl Default for TraceHeader {
    fn default() -> Self {
        TraceHeader { schema: SCHEMA_NAME.to_string(), version: SCHEMA_VERSION, generator: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceFile {
    pub header: Option<TraceHeader>,
    pub tasks: Vec<Task>,
}

impl TraceFile {
    pub fn new(tasks: Vec<Task>) -> Self {
        TraceFile { header: Some(TraceHeader::default()), tasks }
    }

    /// Duplicate ids are an error; violated cost orderings are warnings.
    pub fn validate(&self) -> Result<Vec<Warning>, ModelError> {
        validate_trace(&self.tasks)
    }
}

/// Parses a trace. Blank lines are skipped; a first line carrying a
/// `schema` key is read as the header.
pub fn read_from(reader: impl Read) -> Result<TraceFile, TraceError> {
    let mut trace = TraceFile::default();
    let mut first = true;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && line.contains("\"schema\"") {
            let header: TraceHeader =
                serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: line_no, source })?;
            if header.schema != SCHEMA_NAME || header.version != SCHEMA_VERSION {
                return Err(TraceError::Schema { line: line_no, schema: header.schema, version: header.version });
            }
            trace.header = Some(header);
            continue;
        }
        let task: Task = serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: line_no, source })?;
        trace.tasks.push(task);
    }
    Ok(trace)
}

pub fn write_to(trace: &TraceFile, writer: impl Write) -> Result<(), TraceError> {
    let mut w = BufWriter::new(writer);
    if let Some(header) = &trace.header {
        serde_json::to_writer(&mut w, header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    for task in &trace.tasks {
        serde_json::to_writer(&mut w, task).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<TraceFile, TraceError> {
    read_from(File::open(path)?)
}

pub fn save(trace: &TraceFile, path: impl AsRef<Path>) -> Result<(), TraceError> {
    write_to(trace, File::create(path)?)
}

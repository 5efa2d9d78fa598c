//! Per-episode training metrics as CSV, one record per line after a header.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIELDS: [&str; 7] = ["episode", "steps", "return", "mean_abs_td", "grad_norm", "epsilon_or_beta", "wall_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub steps: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub mean_abs_td: f64,
    pub grad_norm: f64,
    pub epsilon_or_beta: f64,
    pub wall_ms: f64,
}

/// Streaming writer; the header is written on construction so a run with no
/// episodes still leaves a well-formed file.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
        inner.write_record(FIELDS)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &EpisodeMetrics) -> Result<()> {
        self.inner.serialize(record)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_all<W: Write>(sink: W, records: &[EpisodeMetrics]) -> Result<()> {
    let mut w = MetricsWriter::new(sink)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

/// Parses a metrics file. Errors name the 1-based line of the bad record.
pub fn read_all<R: Read>(source: R) -> Result<Vec<EpisodeMetrics>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader.headers()?.clone();
    if header.iter().ne(FIELDS) {
        return Err(Error::InvalidArgument(format!(
            "line 1: expected header {}, found {}",
            FIELDS.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<EpisodeMetrics>().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::InvalidArgument(format!("line {line}: malformed metrics record: {e}")))?;
        let values = [rec.ret, rec.mean_abs_td, rec.grad_norm, rec.epsilon_or_beta, rec.wall_ms];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("line {line}: non-finite value")));
        }
        out.push(rec);
    }
    Ok(out)
}

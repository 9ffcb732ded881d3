//! CSV reading and writing.
//!
//! Files are UTF-8 with a header row and `.` decimal points. A missing
//! outcome is an empty field on output; on input, empty or `NA` (any case)
//! both count as missing.

use std::io::Write;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Read a whole CSV file into (headers, string rows).
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| Error::Input(format!("bad header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("row {}: {e}", i + 1)))?;
        rows.push(rec.iter().map(|c| c.to_string()).collect());
    }
    Ok((headers, rows))
}

/// Write a dataset as CSV: covariate columns, then the outcome column `y`
/// (empty where missing), then the indicator `s`. When `full_y` is given, a
/// trailing `y_full` column carries the pre-missingness outcome.
pub fn write_dataset<W: Write>(out: W, d: &Dataset, full_y: Option<&[u8]>) -> Result<()> {
    if let Some(fy) = full_y {
        if fy.len() != d.n() {
            return Err(Error::Input(format!(
                "full outcome has {} entries for {} rows",
                fy.len(),
                d.n()
            )));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = d.names().to_vec();
    header.push("y".into());
    header.push("s".into());
    if full_y.is_some() {
        header.push("y_full".into());
    }
    w.write_record(&header).map_err(|e| Error::Input(format!("csv write: {e}")))?;
    for i in 0..d.n() {
        let mut rec: Vec<String> = (0..d.p()).map(|j| format!("{}", d.x()[[i, j]])).collect();
        rec.push(match d.y()[i] {
            Some(v) => format!("{v}"),
            None => String::new(),
        });
        rec.push(format!("{}", d.s()[i]));
        if let Some(fy) = full_y {
            rec.push(format!("{}", fy[i]));
        }
        w.write_record(&rec).map_err(|e| Error::Input(format!("csv write: {e}")))?;
    }
    w.flush().map_err(|e| Error::Input(format!("csv flush: {e}")))?;
    Ok(())
}

/// [`write_dataset`] to an in-memory string (used by tests and the CLI).
pub fn dataset_to_csv_string(d: &Dataset, full_y: Option<&[u8]>) -> Result<String> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, d, full_y)?;
    String::from_utf8(buf).map_err(|e| Error::Input(format!("non-utf8 csv: {e}")))
}

/// Parse CSV text (with header) into (headers, rows) without touching disk.
pub fn parse_table(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let headers: Vec<String> =
        reader.headers().map_err(|e| Error::Input(format!("bad header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("row {}: {e}", i + 1)))?;
        rows.push(rec.iter().map(|c| c.to_string()).collect());
    }
    Ok((headers, rows))
}

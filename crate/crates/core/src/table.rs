//! Header-plus-rows numeric CSV shared by dataset, draws and measure files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub(crate) fn read(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, 0, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Parse {
            path: path.into(),
            row: 0,
            reason: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: path.into(),
                row,
                reason: format!("expected {} columns, found {}", header.len(), record.len()),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        path: path.into(),
                        row,
                        reason: format!("column `{}`: `{field}` is not a finite number", header[c]),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok(Table { header, rows })
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.into(),
            row,
            reason: format!("{other:?}"),
        },
    }
}

/// Renders a table; floats use the shortest representation that parses
/// back to the same bits.
pub(crate) fn render<S: AsRef<str>>(header: &[S], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    out.push_str(&header.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

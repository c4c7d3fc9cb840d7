use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;

use super::Dataset;
use crate::error::{Error, Result};

/// Write `x1,…,y1,…` with shortest round-trip decimal formatting.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = (1..=data.dim_x())
        .map(|j| format!("x{j}"))
        .chain((1..=data.dim_y()).map(|j| format!("y{j}")))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let row: Vec<String> = data
            .x
            .row(i)
            .iter()
            .chain(data.y.row(i).iter())
            .map(|v| format!("{v:?}"))
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Load a CSV with one header line and `d_x + d_y` numeric columns.
pub fn load_csv(path: impl AsRef<Path>, dx: usize, dy: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);
    let width = rdr.headers().map_err(csv_err)?.len();
    if width != dx + dy {
        return Err(Error::arg(format!(
            "{} has {width} columns, expected {} inputs + {} outputs",
            path.display(),
            dx,
            dy
        )));
    }
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: "non-finite value".into(),
                });
            }
            values.push(v);
        }
    }
    let n = values.len() / width.max(1);
    let all = DMatrix::from_row_slice(n, width, &values);
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(all.columns(0, dx).into_owned(), all.columns(dx, dy).into_owned(), name)
}

/// Load a CSV whose header names inputs `x*` and outputs `y*`.
pub fn load_csv_auto(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let dx = header.iter().filter(|h| h.starts_with('x')).count();
    let dy = header.iter().filter(|h| h.starts_with('y')).count();
    let ordered = header
        .iter()
        .enumerate()
        .all(|(i, h)| if i < dx { h.starts_with('x') } else { h.starts_with('y') });
    if dx == 0 || dy == 0 || dx + dy != header.len() || !ordered {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be x1,…,xd,y1,…,ym".into(),
        });
    }
    load_csv(path, dx, dy)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            msg: format!("{other:?}"),
        },
    }
}

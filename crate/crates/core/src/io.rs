//! Field dumps, tables, and JSON reports.
//!
//! Stationary fields are CSV with header `x[,y],value`; trajectories use
//! `k,t,x[,y],value`. Floats are written in shortest round-trip form, so a
//! written field reads back bitwise.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{FieldTrajectory, Grid, ScalarField, TimeGrid};
use crate::scenarios::Table;

const COORD_TOL: f64 = 1e-9;

/// Shortest round-trip text, in exponent form for very small or large
/// magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) || !v.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn coord_header(grid: &Grid) -> Vec<&'static str> {
    if grid.dim() == 1 {
        vec!["x"]
    } else {
        vec!["x", "y"]
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    let grid = field.grid();
    let mut w = writer(path)?;
    let mut header = coord_header(grid);
    header.push("value");
    w.write_record(&header)?;
    for (i, v) in field.values().iter().enumerate() {
        let c = grid.coords(i);
        let mut rec: Vec<String> = (0..grid.dim()).map(|k| fmt_f64(c[k])).collect();
        rec.push(fmt_f64(*v));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trajectory(path: &Path, traj: &FieldTrajectory) -> Result<()> {
    let grid = traj.grid();
    let tg = traj.timegrid();
    let mut w = writer(path)?;
    let mut header = vec!["k", "t"];
    header.extend(coord_header(grid));
    header.push("value");
    w.write_record(&header)?;
    for (k, s) in traj.slices().iter().enumerate() {
        for (i, v) in s.values().iter().enumerate() {
            let c = grid.coords(i);
            let mut rec = vec![k.to_string(), fmt_f64(tg.time(k))];
            rec.extend((0..grid.dim()).map(|d| fmt_f64(c[d])));
            rec.push(fmt_f64(*v));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path, expected_header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != expected_header {
        return Err(Error::InvalidInput(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            expected_header.join(","),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), line + 2)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

fn check_coords(path: &Path, grid: &Grid, i: usize, coords: &[f64], row: usize) -> Result<()> {
    let c = grid.coords(i);
    for (k, x) in coords.iter().enumerate() {
        if (x - c[k]).abs() > COORD_TOL {
            return Err(Error::InvalidInput(format!(
                "{}:{}: coordinate {x} does not match grid node {:?}",
                path.display(),
                row + 2,
                &c[..grid.dim()]
            )));
        }
    }
    Ok(())
}

/// Reads a field and checks it against the grid (shape and coordinates).
pub fn read_field(path: &Path, grid: &Grid) -> Result<ScalarField> {
    let mut header = coord_header(grid);
    header.push("value");
    let rows = read_rows(path, &header)?;
    if rows.len() != grid.len() {
        return Err(Error::Shape {
            expected: grid.len(),
            got: rows.len(),
        });
    }
    let d = grid.dim();
    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        check_coords(path, grid, i, &row[..d], i)?;
        values.push(row[d]);
    }
    ScalarField::new(*grid, values)
}

pub fn read_trajectory(path: &Path, grid: &Grid, timegrid: &TimeGrid) -> Result<FieldTrajectory> {
    let mut header = vec!["k", "t"];
    header.extend(coord_header(grid));
    header.push("value");
    let rows = read_rows(path, &header)?;
    let n = grid.len();
    let expected = n * (timegrid.n_steps() + 1);
    if rows.len() != expected {
        return Err(Error::Shape {
            expected,
            got: rows.len(),
        });
    }
    let d = grid.dim();
    let mut slices = Vec::with_capacity(timegrid.n_steps() + 1);
    for (k, chunk) in rows.chunks(n).enumerate() {
        let mut values = Vec::with_capacity(n);
        for (i, row) in chunk.iter().enumerate() {
            if row[0] != k as f64 || (row[1] - timegrid.time(k)).abs() > COORD_TOL {
                return Err(Error::InvalidInput(format!(
                    "{}:{}: expected slice {k} at t = {}",
                    path.display(),
                    k * n + i + 2,
                    timegrid.time(k)
                )));
            }
            check_coords(path, grid, i, &row[2..2 + d], k * n + i)?;
            values.push(row[2 + d]);
        }
        slices.push(ScalarField::new(*grid, values)?);
    }
    FieldTrajectory::new(*timegrid, slices)
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `key = value` lines for a flat JSON object, one per field.
pub fn report_text<T: Serialize>(title: &str, report: &T) -> Result<String> {
    let value = serde_json::to_value(report)?;
    let mut out = format!("[{title}]\n");
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            if !v.is_object() {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
    }
    Ok(out)
}

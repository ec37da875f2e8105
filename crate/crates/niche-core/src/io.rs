//! CSV and JSON artifacts.
//!
//! Histogram snapshots: columns `x[,y],count,density`, one file per
//! snapshot. Field snapshots: columns `x[,y],value` plus a JSON sidecar
//! with mass, residual norms, the step size and grid metadata. Floats are
//! printed in shortest round-trip form, so identical runs produce identical
//! bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::GridField;
use crate::particle::HistogramEstimate;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed CSV at {path}: {reason}")]
    MalformedCsv { path: String, reason: String },
}

pub fn write_histogram_csv(path: &Path, hist: &HistogramEstimate) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let dim = hist.grid.domain.dim();
    writeln!(w, "{},count,density", coord_header(dim))?;
    for i in 0..hist.counts.len() {
        let c = hist.grid.cell_center(i);
        for k in 0..dim {
            write!(w, "{},", c.coord(k))?;
        }
        writeln!(w, "{},{}", hist.counts[i], hist.density[i])?;
    }
    Ok(())
}

pub fn write_field_csv(path: &Path, field: &GridField) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let dim = field.grid.dim();
    writeln!(w, "{},value", coord_header(dim))?;
    for (i, c) in field.grid.interior_centers.iter().enumerate() {
        for k in 0..dim {
            write!(w, "{},", c.coord(k))?;
        }
        writeln!(w, "{}", field.interior[i])?;
    }
    Ok(())
}

fn coord_header(dim: usize) -> &'static str {
    match dim {
        1 => "x",
        _ => "x,y",
    }
}

/// Sidecar metadata for a field snapshot.
#[derive(Debug, Serialize, Deserialize)]
pub struct FieldMeta {
    pub time: f64,
    pub step: u64,
    pub mass: f64,
    pub dt: f64,
    pub neumann_local_max: f64,
    pub neumann_nonlocal_max: f64,
    pub grid: GridMeta,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GridMeta {
    pub dx: f64,
    pub interior_cells: usize,
    pub exterior_cells: usize,
    pub r_trunc: f64,
    pub domain: crate::geometry::Domain,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// A density read back from CSV: coordinate columns plus the last value
/// column (`density` for histograms, `value` for fields).
#[derive(Debug, Clone)]
pub struct DensityTable {
    pub centers: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

pub fn read_density_csv(path: &Path) -> Result<DensityTable, IoError> {
    let f = BufReader::new(File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| IoError::MalformedCsv {
            path: path.display().to_string(),
            reason: "empty file".into(),
        })??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    let n_coords = cols.iter().take_while(|c| **c == "x" || **c == "y").count();
    if n_coords == 0 {
        return Err(IoError::MalformedCsv {
            path: path.display().to_string(),
            reason: "no coordinate columns".into(),
        });
    }
    let value_col = cols.len() - 1;
    let mut centers = Vec::new();
    let mut values = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(IoError::MalformedCsv {
                path: path.display().to_string(),
                reason: format!("row {} has {} fields, expected {}", ln + 2, fields.len(), cols.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, IoError> {
            s.parse().map_err(|_| IoError::MalformedCsv {
                path: path.display().to_string(),
                reason: format!("bad number {s:?} at row {}", ln + 2),
            })
        };
        let mut c = Vec::with_capacity(n_coords);
        for f in &fields[..n_coords] {
            c.push(parse(f)?);
        }
        centers.push(c);
        values.push(parse(fields[value_col])?);
    }
    Ok(DensityTable { centers, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, Point};
    use crate::particle::{estimate_density, HistGrid, ParticleEnsemble};

    #[test]
    fn histogram_roundtrip_through_csv() {
        let domain = Domain::interval(0.0, 1.0).unwrap();
        let grid = HistGrid::new(domain, vec![4]).unwrap();
        let e = ParticleEnsemble {
            positions: vec![Point::x1(0.1), Point::x1(0.6), Point::x1(0.61)],
            time: 0.0,
            step_count: 0,
        };
        let h = estimate_density(&e, &grid).unwrap();
        let tmp = std::env::temp_dir().join("niche_hist_roundtrip.csv");
        write_histogram_csv(&tmp, &h).unwrap();
        let t = read_density_csv(&tmp).unwrap();
        assert_eq!(t.values.len(), 4);
        assert_eq!(t.centers[0], vec![0.125]);
        assert!((t.values[2] - h.density[2]).abs() < 1e-15);
        std::fs::remove_file(&tmp).ok();
    }

    #[test]
    fn identical_runs_identical_bytes() {
        let domain = Domain::interval(0.0, 1.0).unwrap();
        let grid = HistGrid::new(domain, vec![8]).unwrap();
        let e = ParticleEnsemble {
            positions: (0..100).map(|i| Point::x1((i as f64 + 0.5) / 101.0)).collect(),
            time: 0.25,
            step_count: 3,
        };
        let h = estimate_density(&e, &grid).unwrap();
        let t1 = std::env::temp_dir().join("niche_bytes_1.csv");
        let t2 = std::env::temp_dir().join("niche_bytes_2.csv");
        write_histogram_csv(&t1, &h).unwrap();
        write_histogram_csv(&t2, &h).unwrap();
        assert_eq!(std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap());
        std::fs::remove_file(&t1).ok();
        std::fs::remove_file(&t2).ok();
    }
}

//! CSV writers for decision-value grids and per-run tables.

use crate::error::CliError;
use std::path::Path;
use tep_core::boundary::Grid;

/// Write `x1, x2` followed by one column per named surface.
pub fn write_grid(path: &Path, grid: &Grid, surfaces: &[(String, Vec<Vec<f64>>)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x1".to_string(), "x2".to_string()];
    header.extend(surfaces.iter().map(|(name, _)| name.clone()));
    w.write_record(&header)?;
    for i in 0..grid.n {
        for j in 0..grid.n {
            let mut row = vec![grid.coord(i).to_string(), grid.coord(j).to_string()];
            row.extend(surfaces.iter().map(|(_, vals)| vals[i][j].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write a header and rows of already formatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

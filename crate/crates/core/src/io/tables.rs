//! Branch tables, event records, diagram data and trajectory tables.
//!
//! Branch CSV columns:
//!
//! | column | meaning |
//! |---|---|
//! | `arclength` | pseudo-arclength from the first point |
//! | `lambda` | resource level |
//! | `l2_norm_u`, `l2_norm_v` | grid-weighted L² norms `sqrt(h Σ w_i²)` |
//! | `sup_u`, `sup_v` | maxima of `|u|`, `|v|` |
//! | `morse_index` | eigenvalues with real part below `-tol_zero` |
//! | `critical_flag` | an eigenvalue lies in the zero band |
//! | `overlap_ratio` | `∫min(u,v) / ∫max(u,v)`, empty for the zero state |
//!
//! Diagram CSV columns: `branch, lambda, l2_norm, morse_index, color`, with
//! `l2_norm = sqrt(‖u‖² + ‖v‖²)` and colors `blue` (index 0), `red` (1),
//! `green` (2), `light_blue` (3) and `other` above.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continuation::{segregation_measure, BifurcationEvent, Branch};
use crate::error::{Result, SktError};
use crate::evolution::Trajectory;
use crate::model::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub arclength: f64,
    pub lambda: f64,
    pub l2_norm_u: f64,
    pub l2_norm_v: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    pub morse_index: usize,
    pub critical_flag: bool,
    pub overlap_ratio: Option<f64>,
}

pub fn branch_rows(branch: &Branch) -> Vec<BranchRow> {
    let grid = &branch.grid;
    branch
        .points
        .iter()
        .map(|p| BranchRow {
            arclength: p.arclength,
            lambda: p.lambda,
            l2_norm_u: grid.l2_norm(&p.state.u),
            l2_norm_v: grid.l2_norm(&p.state.v),
            sup_u: p.state.u.amax(),
            sup_v: p.state.v.amax(),
            morse_index: p.morse_index,
            critical_flag: p.critical_flag,
            overlap_ratio: segregation_measure(&p.state).ok(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub branch: String,
    pub lambda_star: f64,
    pub crossing_direction: i8,
    pub eigenvalue: f64,
    pub approximate: bool,
    pub index_before: usize,
    pub index_after: usize,
}

impl EventRecord {
    pub fn new(branch: &str, event: &BifurcationEvent) -> Self {
        Self {
            branch: branch.to_string(),
            lambda_star: event.lambda_star,
            crossing_direction: event.crossing_direction,
            eigenvalue: event.eigenvalue,
            approximate: event.approximate,
            index_before: event.index_before,
            index_after: event.index_after,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramRow {
    pub branch: String,
    pub lambda: f64,
    pub l2_norm: f64,
    pub morse_index: usize,
    pub color: String,
}

pub fn color_class(morse_index: usize) -> &'static str {
    match morse_index {
        0 => "blue",
        1 => "red",
        2 => "green",
        3 => "light_blue",
        _ => "other",
    }
}

pub fn diagram_rows(name: &str, branch: &Branch) -> Vec<DiagramRow> {
    branch
        .points
        .iter()
        .map(|p| DiagramRow {
            branch: name.to_string(),
            lambda: p.lambda,
            l2_norm: branch.grid.l2_norm(&p.state.stacked()),
            morse_index: p.morse_index,
            color: color_class(p.morse_index).to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub probe: Option<f64>,
    pub l2_norm_u: f64,
    pub l2_norm_v: f64,
}

pub fn trajectory_rows(trajectory: &Trajectory, grid: &Grid) -> Vec<TrajectoryRow> {
    trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .enumerate()
        .map(|(k, (&time, s))| TrajectoryRow {
            time,
            probe: trajectory.probe.as_ref().map(|p| p[k]),
            l2_norm_u: grid.l2_norm(&s.u),
            l2_norm_v: grid.l2_norm(&s.v),
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Read rows written by [`write_csv`]; errors carry the 1-based file line.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .map(|row| row.map_err(csv_parse_error))
        .collect()
}

pub(crate) fn csv_parse_error(e: csv::Error) -> SktError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    SktError::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| SktError::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let rows = vec![
            BranchRow {
                arclength: 0.0,
                lambda: 9.869,
                l2_norm_u: 0.0,
                l2_norm_v: 0.0,
                sup_u: 0.0,
                sup_v: 0.0,
                morse_index: 0,
                critical_flag: true,
                overlap_ratio: None,
            },
            BranchRow {
                arclength: 0.1 + 0.2,
                lambda: 1.0 / 3.0,
                l2_norm_u: 1e-300,
                l2_norm_v: 2.5,
                sup_u: 7.0,
                sup_v: f64::MIN_POSITIVE,
                morse_index: 3,
                critical_flag: false,
                overlap_ratio: Some(0.123_456_789_012_345_68),
            },
        ];
        write_csv(&path, &rows).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with(
            "arclength,lambda,l2_norm_u,l2_norm_v,sup_u,sup_v,morse_index,critical_flag,overlap_ratio\n"
        ));
        assert_eq!(read_csv::<BranchRow>(&path).unwrap(), rows);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(
            &path,
            "branch,lambda,l2_norm,morse_index,color\nx,1.0,2.0,1,red\nx,oops,2.0,1,red\n",
        )
        .unwrap();
        match read_csv::<DiagramRow>(&path) {
            Err(SktError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn colors() {
        assert_eq!(color_class(0), "blue");
        assert_eq!(color_class(3), "light_blue");
        assert_eq!(color_class(6), "other");
    }
}

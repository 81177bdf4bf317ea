//! Solution snapshots: a CSV with header `x,u,v` and a JSON sidecar at the
//! same path with `.json` appended. Values are written in shortest
//! round-trip form, so a save/load cycle is bit-exact.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::tables::{csv_parse_error, read_json, write_json};
use crate::error::{Result, SktError};
use crate::model::{BranchTag, Grid, ModelParams, SteadyState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub params: ModelParams,
    pub n: usize,
    pub branch_tag: BranchTag,
    pub morse_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: SteadyState,
    pub meta: SnapshotMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    x: f64,
    u: f64,
    v: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn snapshot(
    state: &SteadyState,
    params: &ModelParams,
    morse_index: Option<usize>,
    path: &Path,
) -> Result<()> {
    let grid = Grid::new(state.n(), params.ell)?;
    let mut writer = csv::Writer::from_path(path)?;
    for i in 0..state.n() {
        writer.serialize(Row {
            x: grid.node(i),
            u: state.u[i],
            v: state.v[i],
        })?;
    }
    writer.flush()?;
    let meta = SnapshotMeta {
        params: *params,
        n: state.n(),
        branch_tag: state.tag,
        morse_index,
    };
    write_json(&sidecar_path(path), &meta)
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let sidecar = sidecar_path(path);
    for p in [path, sidecar.as_path()] {
        if !p.is_file() {
            return Err(SktError::Input(format!(
                "snapshot file {} not found",
                p.display()
            )));
        }
    }
    let meta: SnapshotMeta = read_json(&sidecar)?;
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers().map_err(csv_parse_error)?;
    if headers.iter().collect::<Vec<_>>() != ["x", "u", "v"] {
        return Err(SktError::Parse {
            line: 1,
            message: format!("expected header x,u,v, found {headers:?}"),
        });
    }
    let (mut u, mut v) = (Vec::with_capacity(meta.n), Vec::with_capacity(meta.n));
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(csv_parse_error)?;
        u.push(row.u);
        v.push(row.v);
    }
    if u.len() != meta.n {
        return Err(SktError::Parse {
            line: u.len() + 1,
            message: format!("sidecar declares {} nodes, file has {}", meta.n, u.len()),
        });
    }
    let state = SteadyState::new(DVector::from_vec(u), DVector::from_vec(v), meta.branch_tag)?;
    Ok(Snapshot { state, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(-1e6f64..1e6, 6..40)) {
            let n = values.len() / 2;
            let u = DVector::from_fn(n, |i, _| values[i]);
            let v = DVector::from_fn(n, |i, _| values[n + i] * 1e-9);
            let state = SteadyState::new(u, v, BranchTag::SegregationMinus).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.csv");
            let params = ModelParams::benchmark(1.0 / 3.0);
            snapshot(&state, &params, Some(2), &path).unwrap();
            let back = load_snapshot(&path).unwrap();
            for (a, b) in state.stacked().iter().zip(back.state.stacked().iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back.meta.params, params);
            prop_assert_eq!(back.meta.branch_tag, BranchTag::SegregationMinus);
            prop_assert_eq!(back.meta.morse_index, Some(2));
        }
    }

    #[test]
    fn bad_value_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let state = SteadyState::zeros(4);
        snapshot(&state, &ModelParams::default(), None, &path).unwrap();
        let mut lines: Vec<String> = std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        let x = lines[2].split(',').next().unwrap().to_string();
        lines[2] = format!("{x},zero,0.0");
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        match load_snapshot(&path) {
            Err(SktError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header_and_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        snapshot(&SteadyState::zeros(4), &ModelParams::default(), None, &path).unwrap();
        let good = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, good.replacen("x,u,v", "x,u,w", 1)).unwrap();
        assert!(matches!(
            load_snapshot(&path),
            Err(SktError::Parse { line: 1, .. })
        ));
        let short: String = good.lines().take(4).map(|l| format!("{l}\n")).collect();
        std::fs::write(&path, short).unwrap();
        assert!(matches!(
            load_snapshot(&path),
            Err(SktError::Parse { line: 4, .. })
        ));
        std::fs::write(sidecar_path(&path), "{ \"params\": 3 }").unwrap();
        assert!(matches!(
            load_snapshot(&path),
            Err(SktError::Parse { line: 1, .. })
        ));
    }
}

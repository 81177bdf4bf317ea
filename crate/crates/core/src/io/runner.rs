//! Tracing of the branch families and the full diagram run.
//!
//! Output directory layout of [`run_diagram`]:
//!
//! - `branch_<name>.csv`: one table per branch (see [`super::tables`])
//! - `events.json`: every detected crossing
//! - `diagram.csv`: every point with its Morse-index color
//! - `run.json`: seed, configuration and per-branch summary
//! - `errors.json`: one record per failed branch (empty array on success)

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BranchKind, ContinuationConfig, RunConfig};
use super::tables::{branch_rows, diagram_rows, write_csv, write_json, DiagramRow, EventRecord};
use crate::continuation::{
    coexistence_start, continue_branch, continue_branch_along, detect_bifurcations,
    semitrivial_start, switch_branch, trivial_start, Branch, BranchPoint, StopCriteria, StopReason,
    SwitchSettings,
};
use crate::error::{Result, SktError};
use crate::limits::{laplacian_eigenvalue, Orientation};
use crate::model::{BranchTag, Grid, ModelParams};

/// Environment variable capping the number of branches traced in parallel.
pub const THREADS_ENV: &str = "SKT_MORSE_THREADS";

/// Offset above `λ_1^h` where the semi-trivial and coexistence branches start.
pub const START_OFFSET: f64 = 0.3;

/// First λ of a branch family; segregation families have no fixed start.
pub fn start_lambda(kind: BranchKind, grid: &Grid, cont: &ContinuationConfig) -> Option<f64> {
    match kind {
        BranchKind::Trivial => Some(cont.lambda_start),
        BranchKind::SemitrivialU | BranchKind::SemitrivialV | BranchKind::Coexistence => {
            Some(laplacian_eigenvalue(grid, 1) + START_OFFSET)
        }
        BranchKind::Segregation2 | BranchKind::Segregation3 => None,
    }
}

fn stop_criteria(cont: &ContinuationConfig) -> StopCriteria {
    StopCriteria {
        lambda_max: cont.lambda_max,
        lambda_min: cont.lambda_start,
        max_points: cont.max_points,
    }
}

fn with_events(mut branch: Branch, cont: &ContinuationConfig) -> Result<Branch> {
    if branch.points.len() >= 2 {
        branch.events = detect_bifurcations(&branch, &cont.controls())?;
    }
    Ok(branch)
}

/// Trace a trivial, semi-trivial or coexistence branch towards
/// `lambda_max`, with its crossings attached.
pub fn trace_branch(
    kind: BranchKind,
    params: &ModelParams,
    grid: &Grid,
    cont: &ContinuationConfig,
) -> Result<Branch> {
    let controls = cont.controls();
    let lambda = start_lambda(kind, grid, cont).ok_or_else(|| {
        SktError::Input(format!("{} branches start from a crossing", kind.as_str()))
    })?;
    if lambda >= cont.lambda_max {
        return Err(SktError::Input(format!(
            "{} branch starts at lambda = {lambda:.6}, not below lambda_max = {}",
            kind.as_str(),
            cont.lambda_max
        )));
    }
    let start = match kind {
        BranchKind::Trivial => trivial_start(params, grid, lambda, controls.m)?,
        BranchKind::SemitrivialU => {
            semitrivial_start(params, grid, lambda, BranchTag::SemitrivialU, controls.m)?
        }
        BranchKind::SemitrivialV => {
            semitrivial_start(params, grid, lambda, BranchTag::SemitrivialV, controls.m)?
        }
        _ => coexistence_start(params, grid, &controls.newton, controls.m)?,
    };
    let branch = continue_branch(params, grid, start, 1.0, &controls, &stop_criteria(cont))?;
    with_events(branch, cont)
}

/// Switch onto the mode-`mode` segregation branch at the matching crossing of
/// `parent` and trace it in both λ directions' admissible range.
pub fn trace_segregation(
    params: &ModelParams,
    grid: &Grid,
    parent: &Branch,
    mode: usize,
    orientation: Orientation,
    cont: &ContinuationConfig,
    switching: &SwitchSettings,
) -> Result<Branch> {
    let event = parent
        .events
        .iter()
        .find(|e| e.index_before.min(e.index_after) + 1 == mode)
        .ok_or_else(|| SktError::Input(format!("parent branch has no crossing for mode {mode}")))?;
    let parent_point = nearest_point(&parent.points, event.lambda_star)
        .ok_or_else(|| SktError::Input("parent branch has no points".into()))?;
    let reference = event.state.as_ref().unwrap_or(&parent_point.state);
    let amplitude = orientation.sign() * switching.default_amplitude(reference);
    let child = switch_branch(params, grid, event, parent_point, amplitude, switching)?;
    let hint = (&event.kernel_vector * orientation.sign(), 0.0);
    let controls = cont.controls();
    let branch = continue_branch_along(params, grid, child, hint, &controls, &stop_criteria(cont))?;
    with_events(branch, cont)
}

fn nearest_point(points: &[BranchPoint], lambda: f64) -> Option<&BranchPoint> {
    points.iter().min_by(|a, b| {
        (a.lambda - lambda)
            .abs()
            .total_cmp(&(b.lambda - lambda).abs())
    })
}

/// Output name of a traced branch, e.g. `segregation2_plus`.
pub fn branch_name(kind: BranchKind, orientation: Option<Orientation>) -> String {
    match orientation {
        Some(Orientation::Plus) => format!("{}_plus", kind.as_str()),
        Some(Orientation::Minus) => format!("{}_minus", kind.as_str()),
        None => kind.as_str().to_string(),
    }
}

/// Point of a branch family exactly at `lambda`, traced from its start.
/// Segregation families need `orientation`.
pub fn branch_point_at(
    config: &RunConfig,
    kind: BranchKind,
    orientation: Orientation,
    lambda: f64,
) -> Result<BranchPoint> {
    let grid = config.grid()?;
    let params = config.model.params(lambda)?;
    let cont = ContinuationConfig {
        lambda_max: lambda,
        ..config.continuation
    };
    let branch = match kind.mode() {
        None => trace_branch(kind, &params, &grid, &cont)?,
        Some(mode) => {
            let parent = trace_branch(BranchKind::Coexistence, &params, &grid, &cont)?;
            trace_segregation(
                &params,
                &grid,
                &parent,
                mode,
                orientation,
                &cont,
                &config.switching,
            )?
        }
    };
    let point = nearest_point(&branch.points, lambda)
        .cloned()
        .expect("a traced branch has points");
    if (point.lambda - lambda).abs() > 1e-9 * lambda.abs().max(1.0) {
        return Err(SktError::Input(format!(
            "{} branch does not reach lambda = {lambda} (closest point {:.6})",
            kind.as_str(),
            point.lambda
        )));
    }
    Ok(point)
}

/// Record of a branch that failed, written to `errors.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub branch: String,
    /// `stall`, `no_switch` or `numerical`.
    pub kind: String,
    pub message: String,
    /// λ where a stall happened.
    pub lambda: Option<f64>,
    /// Points written before the failure.
    pub points_written: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchSummary {
    pub name: String,
    pub file: String,
    pub points: usize,
    pub events: usize,
    pub stop_reason: Option<StopReason>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub threads: usize,
    pub config: RunConfig,
    pub branches: Vec<BranchSummary>,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct TracedBranch {
    pub name: String,
    /// Complete branch, or the partial one after a stall.
    pub branch: Option<Branch>,
}

#[derive(Debug, Clone)]
pub struct DiagramReport {
    pub output_dir: PathBuf,
    pub branches: Vec<TracedBranch>,
    pub failures: Vec<ErrorRecord>,
}

impl DiagramReport {
    pub fn branch(&self, name: &str) -> Option<&Branch> {
        self.branches
            .iter()
            .find(|b| b.name == name)
            .and_then(|b| b.branch.as_ref())
    }

    /// 0 on success, 2 if any branch stalled, 4 for other failures.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else if self.failures.iter().any(|f| f.kind == "stall") {
            2
        } else {
            4
        }
    }
}

/// Worker count from `SKT_MORSE_THREADS`, or rayon's default.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn split_outcome(name: String, outcome: Result<Branch>) -> (TracedBranch, Option<ErrorRecord>) {
    match outcome {
        Ok(branch) => (
            TracedBranch {
                name,
                branch: Some(branch),
            },
            None,
        ),
        Err(SktError::Stall {
            lambda, partial, ..
        }) => {
            let record = ErrorRecord {
                branch: name.clone(),
                kind: "stall".into(),
                message: format!("continuation stalled at lambda = {lambda:.6}"),
                lambda: Some(lambda),
                points_written: partial.points.len(),
            };
            (
                TracedBranch {
                    name,
                    branch: Some(*partial),
                },
                Some(record),
            )
        }
        Err(e) => {
            let kind = if matches!(e, SktError::NoSwitch { .. }) {
                "no_switch"
            } else {
                "numerical"
            };
            let record = ErrorRecord {
                branch: name.clone(),
                kind: kind.into(),
                message: e.to_string(),
                lambda: None,
                points_written: 0,
            };
            (TracedBranch { name, branch: None }, Some(record))
        }
    }
}

/// Trace the configured branches and write every output file. Branch-level
/// failures are recorded in the report, not returned as errors.
pub fn run_diagram(config: &RunConfig) -> Result<DiagramReport> {
    config.validate()?;
    let grid = config.grid()?;
    let params = config.model.params(config.continuation.lambda_start)?;
    let cont = config.continuation;
    let threads = thread_count();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SktError::Config(format!("cannot build thread pool: {e}")))?;

    let wants = |k: BranchKind| config.branches.contains(&k);
    let needs_parent = wants(BranchKind::Segregation2) || wants(BranchKind::Segregation3);
    let mut primary: Vec<BranchKind> = [
        BranchKind::Trivial,
        BranchKind::SemitrivialU,
        BranchKind::SemitrivialV,
        BranchKind::Coexistence,
    ]
    .into_iter()
    .filter(|&k| wants(k) || (k == BranchKind::Coexistence && needs_parent))
    .collect();
    primary.retain(|&k| {
        let start = start_lambda(k, &grid, &cont).unwrap_or(f64::INFINITY);
        let exists = start < cont.lambda_max;
        if !exists {
            log::info!("{} branch starts above lambda_max; skipped", k.as_str());
        }
        exists
    });

    let first: Vec<(BranchKind, Result<Branch>)> = pool.install(|| {
        primary
            .par_iter()
            .map(|&k| (k, trace_branch(k, &params, &grid, &cont)))
            .collect()
    });

    let parent = first
        .iter()
        .find(|(k, _)| *k == BranchKind::Coexistence)
        .and_then(|(_, r)| match r {
            Ok(b) => Some(b.clone()),
            Err(SktError::Stall { partial, .. }) => Some((**partial).clone()),
            Err(_) => None,
        });
    let mut second_tasks = Vec::new();
    if let Some(parent) = &parent {
        for kind in [BranchKind::Segregation2, BranchKind::Segregation3]
            .into_iter()
            .filter(|&k| wants(k))
        {
            let mode = kind.mode().expect("segregation kinds have a mode");
            if !parent
                .events
                .iter()
                .any(|e| e.index_before.min(e.index_after) + 1 == mode)
            {
                log::info!("no mode-{mode} crossing on the coexistence branch below lambda_max; {} skipped", kind.as_str());
                continue;
            }
            second_tasks.push((kind, Orientation::Plus));
            second_tasks.push((kind, Orientation::Minus));
        }
    }
    let second: Vec<(String, Result<Branch>)> = match &parent {
        Some(parent) => pool.install(|| {
            second_tasks
                .par_iter()
                .map(|&(kind, o)| {
                    let mode = kind.mode().expect("segregation kinds have a mode");
                    let r = trace_segregation(
                        &params,
                        &grid,
                        parent,
                        mode,
                        o,
                        &cont,
                        &config.switching,
                    );
                    (branch_name(kind, Some(o)), r)
                })
                .collect()
        }),
        None => Vec::new(),
    };

    let mut branches = Vec::new();
    let mut failures = Vec::new();
    let outcomes = first
        .into_iter()
        .filter(|(k, _)| wants(*k))
        .map(|(k, r)| (branch_name(k, None), r))
        .chain(second);
    for (name, outcome) in outcomes {
        let (traced, failure) = split_outcome(name, outcome);
        if let Some(f) = failure {
            log::warn!("branch {}: {}", f.branch, f.message);
            failures.push(f);
        }
        branches.push(traced);
    }

    let report = DiagramReport {
        output_dir: config.output_dir.clone(),
        branches,
        failures,
    };
    write_outputs(&report, config, threads)?;
    Ok(report)
}

pub fn branch_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("branch_{name}.csv"))
}

fn write_outputs(report: &DiagramReport, config: &RunConfig, threads: usize) -> Result<()> {
    let dir = &report.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut events = Vec::new();
    let mut diagram: Vec<DiagramRow> = Vec::new();
    let mut summaries = Vec::new();
    for traced in &report.branches {
        let Some(branch) = &traced.branch else {
            continue;
        };
        let path = branch_file(dir, &traced.name);
        write_csv(&path, &branch_rows(branch))?;
        events.extend(
            branch
                .events
                .iter()
                .map(|e| EventRecord::new(&traced.name, e)),
        );
        diagram.extend(diagram_rows(&traced.name, branch));
        summaries.push(BranchSummary {
            name: traced.name.clone(),
            file: path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            points: branch.points.len(),
            events: branch.events.len(),
            stop_reason: branch.stop_reason,
        });
    }
    write_json(&dir.join("events.json"), &events)?;
    write_csv(&dir.join("diagram.csv"), &diagram)?;
    write_json(&dir.join("errors.json"), &report.failures)?;
    let record = RunRecord {
        seed: config.seed,
        threads,
        config: config.clone(),
        branches: summaries,
        failures: report.failures.len(),
    };
    write_json(&dir.join("run.json"), &record)
}

//! Configuration, output files and the diagram runner.

mod config;
mod runner;
mod snapshot;
mod tables;

pub use config::{
    parse_branch_list, BranchKind, ContinuationConfig, GridConfig, ModelConfig, RunConfig,
};
pub use runner::{
    branch_file, branch_name, branch_point_at, run_diagram, start_lambda, thread_count,
    trace_branch, trace_segregation, BranchSummary, DiagramReport, ErrorRecord, RunRecord,
    TracedBranch, START_OFFSET, THREADS_ENV,
};
pub use snapshot::{load_snapshot, sidecar_path, snapshot, Snapshot, SnapshotMeta};
pub use tables::{
    branch_rows, color_class, diagram_rows, read_csv, read_json, trajectory_rows, write_csv,
    write_json, BranchRow, DiagramRow, EventRecord, TrajectoryRow,
};

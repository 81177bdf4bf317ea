use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use skt_morse::continuation::segregation_measure;
use skt_morse::evolution::{evolve, growth_rate};
use skt_morse::io::{
    branch_file, branch_name, branch_point_at, load_snapshot, parse_branch_list, run_diagram,
    snapshot, trace_branch, trace_segregation, trajectory_rows, write_csv, write_json, BranchKind,
    BranchRow, EventRecord, RunConfig,
};
use skt_morse::limits::{
    decoupling_check, limiting_eigen_decomposition, scalar_limit_morse, sign_changes, solve_ls1,
    solve_ls2, Orientation,
};
use skt_morse::solvers::eigen_spectrum;
use skt_morse::{assemble_linearization, Result, SktError, SteadyState};

#[derive(Parser)]
#[command(
    name = "skt-morse",
    version,
    about = "Branches, bifurcations and Morse indices of the 1-D SKT competition model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Interior grid nodes.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated branch list, e.g. `trivial,coexistence,segregation2`.
    #[arg(long)]
    branches: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.lambda_max {
            config.continuation.lambda_max = v;
        }
        if let Some(v) = self.n {
            config.grid.n = v;
        }
        if let Some(v) = self.alpha {
            config.model.alpha = v;
        }
        if let Some(v) = &self.out {
            config.output_dir = v.clone();
        }
        if let Some(v) = &self.branches {
            config.branches = parse_branch_list(v)?;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Plus,
    Minus,
}

impl From<Side> for Orientation {
    fn from(s: Side) -> Self {
        match s {
            Side::Plus => Orientation::Plus,
            Side::Minus => Orientation::Minus,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LimitKind {
    /// Limit profile U of the coexistence branch.
    Ls1,
    /// Sign-changing limit profile of a segregation branch.
    Ls2,
    /// Spectrum of the limiting linearization split into its two families.
    Decomposition,
    /// Off-block size of the limiting operator after the change of variables.
    Decoupling,
}

/// A steady state given by a snapshot file or by a branch and λ.
#[derive(Args, Clone)]
struct StateSource {
    /// Load the state from a snapshot instead of tracing a branch.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long, default_value = "coexistence")]
    branch: String,
    #[arg(long, value_enum, default_value = "plus")]
    side: Side,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Trace all configured branches and write tables, events and diagram data.
    Diagram(Common),
    /// Trace a single branch family and write its table and events.
    Continue {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        branch: String,
        #[arg(long, value_enum, default_value = "plus")]
        side: Side,
    },
    /// Eigenvalues of smallest real part at a steady state, as JSON.
    Eig {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: StateSource,
        #[arg(long, default_value_t = 8)]
        m: usize,
    },
    /// Limiting problems for large cross-diffusion, as JSON.
    Limit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: LimitKind,
        #[arg(long)]
        lambda: f64,
        /// Mode of the sign-changing profile.
        #[arg(long, default_value_t = 2)]
        mode: usize,
        #[arg(long, value_enum, default_value = "plus")]
        side: Side,
    },
    /// Time integration from a perturbed steady state.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: StateSource,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        /// Size of the random perturbation, relative to the state 2-norm.
        #[arg(long, default_value_t = 1e-3)]
        perturbation: f64,
        /// Probe window for the growth-rate fit, `LO,HI`.
        #[arg(long)]
        window: Option<String>,
    },
    /// Write a solution snapshot for a branch at a given λ.
    Snapshot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        branch: String,
        #[arg(long, value_enum, default_value = "plus")]
        side: Side,
        #[arg(long)]
        lambda: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Diagram(common) => {
            let config = common.config()?;
            let report = run_diagram(&config)?;
            for f in &report.failures {
                eprintln!("branch {} failed ({}): {}", f.branch, f.kind, f.message);
            }
            println!("wrote {}", report.output_dir.display());
            Ok(report.exit_code())
        }
        Command::Continue {
            common,
            branch,
            side,
        } => continue_one(&common.config()?, &branch, side.into()),
        Command::Eig { common, source, m } => {
            let config = common.config()?;
            let (state, params) = resolve_state(&config, &source)?;
            let grid = skt_morse::Grid::new(state.n(), params.ell)?;
            let lin = assemble_linearization(&params, &grid, &state)?;
            let spectrum = eigen_spectrum(&lin, m.min(2 * grid.n))?;
            let values: Vec<_> = spectrum
                .eigenvalues
                .iter()
                .map(|mu| json!([mu.re, mu.im]))
                .collect();
            print_json(&json!({
                "lambda": params.lambda,
                "branch_tag": state.tag,
                "eigenvalues": values,
                "morse_index": spectrum.morse_index,
                "tol_zero": spectrum.tol_zero,
                "norm_inf": spectrum.norm_inf,
            }))
        }
        Command::Limit {
            common,
            kind,
            lambda,
            mode,
            side,
        } => limit(&common.config()?, kind, lambda, mode, side.into()),
        Command::Evolve {
            common,
            source,
            t_end,
            dt,
            perturbation,
            window,
        } => {
            let config = common.config()?;
            let (reference, params) = resolve_state(&config, &source)?;
            let grid = skt_morse::Grid::new(reference.n(), params.ell)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let z = reference.stacked();
            let noise: DVector<f64> = DVector::from_fn(z.len(), |_, _| rng.random_range(-1.0..1.0));
            let scale = perturbation * z.norm().max(1.0) / noise.norm();
            let perturbed = (&z + noise * scale).map(|x| x.max(0.0));
            let initial = SteadyState::from_stacked(&perturbed, reference.tag);
            let traj = evolve(&params, &grid, &initial, t_end, dt, Some(&reference))?;
            std::fs::create_dir_all(&config.output_dir)?;
            let path = config.output_dir.join("trajectory.csv");
            write_csv(&path, &trajectory_rows(&traj, &grid))?;
            if let Some(last) = traj.last() {
                snapshot(
                    last,
                    &params,
                    None,
                    &config.output_dir.join("final_state.csv"),
                )?;
            }
            let rate = match window {
                Some(w) => Some(growth_rate(&traj, parse_window(&w)?)?),
                None => None,
            };
            let probe = traj.probe.as_ref().and_then(|p| p.last().copied());
            print_json(&json!({
                "seed": config.seed,
                "snapshots": traj.times.len(),
                "final_probe": probe,
                "growth_rate": rate,
                "trajectory": path,
            }))
        }
        Command::Snapshot {
            common,
            branch,
            side,
            lambda,
        } => {
            let config = common.config()?;
            let kind: BranchKind = branch.parse()?;
            let point = branch_point_at(&config, kind, side.into(), lambda)?;
            let params = config.model.params(lambda)?;
            std::fs::create_dir_all(&config.output_dir)?;
            let name = branch_name(kind, kind.mode().map(|_| side.into()));
            let path = config
                .output_dir
                .join(format!("snapshot_{name}_{lambda}.csv"));
            snapshot(&point.state, &params, Some(point.morse_index), &path)?;
            print_json(&json!({
                "path": path,
                "lambda": point.lambda,
                "morse_index": point.morse_index,
                "overlap_ratio": segregation_measure(&point.state).ok(),
            }))
        }
    }
}

fn print_json(value: &serde_json::Value) -> Result<i32> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(0)
}

fn parse_window(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| SktError::Input(format!("bad window '{text}': {e}")))?;
    match parts[..] {
        [lo, hi] => Ok((lo, hi)),
        _ => Err(SktError::Input(format!(
            "window needs two values, got '{text}'"
        ))),
    }
}

fn resolve_state(
    config: &RunConfig,
    source: &StateSource,
) -> Result<(SteadyState, skt_morse::ModelParams)> {
    if let Some(path) = &source.snapshot {
        let snap = load_snapshot(path)?;
        let params = match source.lambda {
            Some(l) => snap.meta.params.with_lambda(l),
            None => snap.meta.params,
        };
        return Ok((snap.state, params));
    }
    let lambda = source
        .lambda
        .ok_or_else(|| SktError::Input("--lambda is required without --snapshot".into()))?;
    let kind: BranchKind = source.branch.parse()?;
    let point = branch_point_at(config, kind, source.side.into(), lambda)?;
    Ok((point.state, config.model.params(lambda)?))
}

fn continue_one(config: &RunConfig, branch: &str, side: Orientation) -> Result<i32> {
    let kind: BranchKind = branch.parse()?;
    let grid = config.grid()?;
    let params = config.model.params(config.continuation.lambda_start)?;
    let cont = &config.continuation;
    let outcome = match kind.mode() {
        None => trace_branch(kind, &params, &grid, cont),
        Some(mode) => {
            let parent = trace_branch(BranchKind::Coexistence, &params, &grid, cont)?;
            trace_segregation(&params, &grid, &parent, mode, side, cont, &config.switching)
        }
    };
    let name = branch_name(kind, kind.mode().map(|_| side));
    std::fs::create_dir_all(&config.output_dir)?;
    let (branch, code) = match outcome {
        Ok(b) => (b, 0),
        Err(SktError::Stall {
            lambda, partial, ..
        }) => {
            eprintln!("branch {name} stalled at lambda = {lambda:.6}; writing partial table");
            write_json(
                &config.output_dir.join("errors.json"),
                &json!([{ "branch": name, "kind": "stall", "lambda": lambda }]),
            )?;
            (*partial, 2)
        }
        Err(e) => return Err(e),
    };
    let rows: Vec<BranchRow> = skt_morse::io::branch_rows(&branch);
    write_csv(&branch_file(&config.output_dir, &name), &rows)?;
    let events: Vec<EventRecord> = branch
        .events
        .iter()
        .map(|e| EventRecord::new(&name, e))
        .collect();
    write_json(&config.output_dir.join("events.json"), &events)?;
    println!(
        "{name}: {} points, {} events",
        branch.points.len(),
        events.len()
    );
    Ok(code)
}

fn limit(
    config: &RunConfig,
    kind: LimitKind,
    lambda: f64,
    mode: usize,
    side: Orientation,
) -> Result<i32> {
    let grid = config.grid()?;
    let params = config.model.params(lambda)?;
    std::fs::create_dir_all(&config.output_dir)?;
    match kind {
        LimitKind::Ls1 => match solve_ls1(lambda, &grid)? {
            Some(p) => {
                let zeros = DVector::zeros(grid.n);
                let path = config.output_dir.join(format!("ls1_{lambda}.csv"));
                write_profile(&path, &p.u, &zeros, &params)?;
                print_json(&json!({ "lambda": lambda, "sup_u": p.u.amax(), "profile": path }))
            }
            None => print_json(&json!({ "lambda": lambda, "solution": null })),
        },
        LimitKind::Ls2 => match solve_ls2(&params, mode, side, &grid)? {
            Some(p) => {
                let path = config.output_dir.join(format!("ls2_{mode}_{lambda}.csv"));
                write_profile(&path, &p.positive_part(), &p.negative_part(), &params)?;
                let morse = scalar_limit_morse(&params, &p.w, &grid)?;
                print_json(&json!({
                    "lambda": lambda,
                    "mode": mode,
                    "sign_changes": sign_changes(&p.w),
                    "scalar_morse_index": morse,
                    "profile": path,
                }))
            }
            None => print_json(&json!({ "lambda": lambda, "mode": mode, "solution": null })),
        },
        LimitKind::Decomposition => {
            let d = limiting_eigen_decomposition(lambda, &grid)?;
            print_json(&json!({
                "lambda": lambda,
                "negative_eigenvalues": d.negative_eigenvalues(),
                "smallest_of_second_family": d.set_b.first(),
                "max_mismatch": d.max_mismatch,
            }))
        }
        LimitKind::Decoupling => {
            let r = decoupling_check(lambda, &grid)?;
            print_json(&serde_json::to_value(r)?)
        }
    }
}

fn write_profile(
    path: &Path,
    u: &DVector<f64>,
    v: &DVector<f64>,
    params: &skt_morse::ModelParams,
) -> Result<()> {
    let state = SteadyState::new(u.clone(), v.clone(), skt_morse::BranchTag::Coexistence)?;
    snapshot(&state, params, None, path)
}

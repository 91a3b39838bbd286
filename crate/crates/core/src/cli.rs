//! Command-line front end of the `grape` binary.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ProblemKind, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{gate_time_grid, speed_limit_sweep};
use crate::io::{self, PulseTable, RunSummary};
use crate::operators::{basis_index, basis_vector, BasisLabel};
use crate::optimizer::{check_gradient, initial_guess, optimize};
use crate::propagation::trajectory;

/// Overrides the output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "GRAPE_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_TARGET_MISSED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "grape",
    version,
    about = "Pulse synthesis for a bus-coupled three-qubit register"
)]
pub struct Cli {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [env: GRAPE_OUT_DIR].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Gate time in ns, buffers included.
    #[arg(long, global = true)]
    pub gate_time: Option<f64>,
    #[arg(long, global = true, value_parser = ProblemKind::NAMES)]
    pub problem: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimise a pulse and write it with its fidelity trace.
    Optimize,
    /// Record populations along the evolution under a stored pulse.
    Trajectory(TrajectoryArgs),
    /// Optimise over a range of gate times.
    Sweep(SweepArgs),
    /// Compare the analytic gradient with central finite differences.
    Checkgrad,
    /// Print the target gate matrix.
    PrintTarget,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    /// Pulse CSV on the coarse or the fine grid.
    #[arg(long)]
    pub pulse: PathBuf,
    /// Initial basis state, e.g. `0|110`.
    #[arg(long)]
    pub initial: Option<String>,
    /// Comma-separated labels plus `leak` and `other`.
    #[arg(long, value_delimiter = ',')]
    pub watch: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub t_step: Option<f64>,
    #[arg(long)]
    pub no_warm_start: bool,
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
}

fn context(cli: &Cli) -> Result<Context> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.optimizer.seed = s;
    }
    if let Some(t) = cli.gate_time {
        cfg.schedule.gate_time_ns = t;
    }
    if let Some(p) = &cli.problem {
        cfg.run.problem = p.parse()?;
    }
    cfg.validate()
        .map_err(|(section, e)| Error::Config(format!("[{section}] {e}")))?;
    let out = cli
        .out
        .clone()
        .or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| cfg.run.out_dir.clone());
    Ok(Context { cfg, out })
}

fn out_dir(ctx: &Context) -> Result<&Path> {
    fs::create_dir_all(&ctx.out)?;
    Ok(&ctx.out)
}

fn cmd_optimize(ctx: &Context) -> Result<i32> {
    let problem = ctx.cfg.problem()?;
    let opts = &ctx.cfg.optimizer;
    let result = optimize(&problem, opts)?;
    let dir = out_dir(ctx)?;
    let spec = &problem.spec;
    PulseTable::from_coarse(&result.best_pulse, spec).write(&dir.join("pulse_coarse.csv"))?;
    PulseTable::from_fine(&problem.fine_pulse(&result.best_x)?, spec)
        .write(&dir.join("pulse_fine.csv"))?;
    io::write_trace(&dir.join("fidelity_trace.csv"), &result.trace)?;
    io::write_log(&dir.join("optimize.log"), &result.trace)?;
    let summary = RunSummary::new(&problem, &result, opts.target_fidelity, opts.seed);
    summary.write(&dir.join("result.json"))?;
    println!(
        "{}: fidelity {:.8} (infidelity {:.3e}) at t_g = {} ns, restart {} of {}, {:?}",
        ctx.cfg.run.problem,
        result.best_fidelity,
        1.0 - result.best_fidelity,
        spec.gate_time_ns,
        result.restart,
        result.restarts_run,
        result.termination
    );
    Ok(if summary.reached_target {
        EXIT_OK
    } else {
        EXIT_TARGET_MISSED
    })
}

fn cmd_trajectory(ctx: &Context, args: &TrajectoryArgs) -> Result<i32> {
    let problem = ctx.cfg.problem()?;
    let dims = &problem.params.dims;
    let initial = args
        .initial
        .as_deref()
        .unwrap_or(&ctx.cfg.trajectory.initial);
    let label: BasisLabel = initial.parse()?;
    let psi0 = basis_vector(basis_index(&label, dims)?, dims.total());
    let watch = match &args.watch {
        Some(w) => w
            .iter()
            .map(|s| crate::propagation::Watch::parse(s))
            .collect::<Result<Vec<_>>>()?,
        None => ctx.cfg.watch()?,
    };
    for w in &watch {
        if let crate::propagation::Watch::State(l) = w {
            basis_index(l, dims)?;
        }
    }
    let fine = PulseTable::read(&args.pulse)?.to_fine(&problem.spec, problem.idle())?;
    let traj = trajectory(problem.hamiltonian(), &fine, &problem.spec, &psi0, &watch)?;
    let dir = out_dir(ctx)?;
    io::write_trajectory(&dir.join("trajectory.csv"), &traj)?;
    let last = traj.populations.last().expect("trajectory has t = 0");
    let finals: Vec<String> = traj
        .columns
        .iter()
        .zip(last)
        .map(|(c, p)| format!("{c}={p:.6}"))
        .collect();
    println!("final populations from {label}: {}", finals.join(" "));
    Ok(EXIT_OK)
}

fn cmd_sweep(ctx: &Context, args: &SweepArgs) -> Result<i32> {
    let s = &ctx.cfg.sweep;
    let grid = gate_time_grid(
        args.t_min.unwrap_or(s.t_min_ns),
        args.t_max.unwrap_or(s.t_max_ns),
        args.t_step.unwrap_or(s.t_step_ns),
    )?;
    let template = ctx.cfg.problem()?;
    let warm = ctx.cfg.run.warm_start && !args.no_warm_start;
    let sweep = speed_limit_sweep(&template, &grid, &ctx.cfg.optimizer, warm)?;
    let dir = out_dir(ctx)?;
    io::write_sweep(&dir.join("sweep.csv"), &sweep.rows())?;
    let meta = serde_json::json!({
        "schema": 1,
        "problem": ctx.cfg.run.problem.to_string(),
        "controls": template.controlled.iter().map(|&q| crate::device::QUBIT_NAMES[q]).collect::<Vec<_>>(),
        "target_fidelity": sweep.target_fidelity,
        "warm_start": warm,
        "seed": ctx.cfg.optimizer.seed,
        "minimal_feasible_t_g_ns": sweep.minimal_feasible(),
    });
    fs::write(
        dir.join("sweep.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    for r in sweep.rows() {
        println!("t_g {:>6.2} ns  fidelity {:.8}", r.t_g_ns, r.best_fidelity);
    }
    match sweep.minimal_feasible() {
        Some(t) => {
            println!("minimal feasible gate time: {t} ns");
            Ok(EXIT_OK)
        }
        None => {
            println!("minimal feasible gate time: none in range");
            Ok(EXIT_TARGET_MISSED)
        }
    }
}

fn cmd_checkgrad(ctx: &Context) -> Result<i32> {
    let problem = ctx.cfg.problem()?;
    let c = &ctx.cfg.checkgrad;
    let x = initial_guess(&problem, &ctx.cfg.optimizer, 0);
    let check = check_gradient(&problem, &x, c.probes, c.fd_step_ghz, c.seed)?;
    println!(
        "max relative gradient error {:.3e} over {} probes (fd step {:e} GHz)",
        check.max_relative_error, c.probes, c.fd_step_ghz
    );
    Ok(if check.max_relative_error < c.tolerance {
        EXIT_OK
    } else {
        EXIT_TARGET_MISSED
    })
}

fn cmd_print_target(ctx: &Context) -> Result<i32> {
    let problem = ctx.cfg.problem()?;
    let t = &problem.target;
    let names: Vec<&str> = t
        .qubits
        .iter()
        .map(|&q| crate::device::QUBIT_NAMES[q])
        .collect();
    println!("{} on ({})", t.name, names.join(", "));
    for row in t.matrix.row_iter() {
        let cells: Vec<String> = row
            .iter()
            .map(|z| match (z.re, z.im) {
                (re, 0.0) => format!("{re:>3}"),
                (0.0, 1.0) => "  i".into(),
                (0.0, -1.0) => " -i".into(),
                (re, im) => format!("{re}{im:+}i"),
            })
            .collect();
        println!("{}", cells.join(" "));
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Optimize => cmd_optimize(&ctx),
        Command::Trajectory(a) => cmd_trajectory(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Checkgrad => cmd_checkgrad(&ctx),
        Command::PrintTarget => cmd_print_target(&ctx),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_TARGET_MISSED
            }
        }
    }
}

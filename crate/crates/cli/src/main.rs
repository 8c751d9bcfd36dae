use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use haptogrow::diagnostics::{check_bounds, compute_record};
use haptogrow::initial::generate_initial_state;
use haptogrow::integrate::{run_simulation, RunOptions, SnapshotKind};
use haptogrow::snapshot::{list_csv_snapshots, load_csv_snapshot, DiagnosticsWriter, SnapshotWriter};
use haptogrow::study::{imex_self_convergence, reaction_order_study, RefinementRow};
use haptogrow::{Error, Grid, InitialConditionSpec, ModelParams, RunConfig};

/// Degenerate haptotaxis go-or-grow tumor invasion simulator.
#[derive(Parser)]
#[command(name = "haptogrow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write snapshots plus diagnostics.csv.
    Run(RunArgs),
    /// Check bounds and consistency of snapshots in a directory.
    Check(CheckArgs),
    /// Time-step refinement studies.
    Convergence(ConvergenceArgs),
}

// Values stay strings so that parse errors go through RunConfig::set and
// name the offending field.
#[derive(Args)]
struct RunArgs {
    /// Plain-text `key = value` file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    nx: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    ny: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t_end: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_parser = ["continuous", "numerics"])]
    taxis_variant: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eps1: Option<String>,
    /// Snapshot interval in time units.
    #[arg(long, allow_hyphen_values = true)]
    snapshot_every: Option<String>,
    #[arg(long, value_parser = ["csv_grid", "vtk_legacy", "csv", "vtk"])]
    format: Option<String>,
    /// Also write PGM heatmaps of every field.
    #[arg(long)]
    heatmaps: bool,
    /// Print one line per snapshot.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Directory holding csv_grid snapshots.
    dir: PathBuf,
    /// Config whose model parameters define the bounds.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Logistic,
    Imex,
    All,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, value_enum, default_value = "all")]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Check(args) => check(args),
        Command::Convergence(args) => convergence(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            let kind = if f.code() == 2 { "configuration error" } else { "error" };
            eprintln!("{kind}: {e}");
            ExitCode::from(f.code())
        }
    }
}

fn load_config(file: Option<&Path>, overrides: &[(&str, Option<&String>)]) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        cfg.apply_file(path)?;
    }
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let heat = args.heatmaps.then(|| "true".to_string());
    let overrides = [
        ("seed", args.seed.as_ref()),
        ("nx", args.nx.as_ref()),
        ("ny", args.ny.as_ref()),
        ("dt", args.dt.as_ref()),
        ("t_end", args.t_end.as_ref()),
        ("out", args.out.as_ref()),
        ("taxis_variant", args.taxis_variant.as_ref()),
        ("eps1", args.eps1.as_ref()),
        ("snapshot_every", args.snapshot_every.as_ref()),
        ("format", args.format.as_ref()),
        ("emit_heatmaps", heat.as_ref()),
    ];
    let cfg = load_config(args.config.as_deref(), &overrides).map_err(|e| Failure::Config(e.into()))?;
    let grid = Grid::new(cfg.nx, cfg.ny).map_err(|e| Failure::Config(e.into()))?;

    let setup = || -> anyhow::Result<(SnapshotWriter, DiagnosticsWriter)> {
        let writer = SnapshotWriter::new(&cfg.output_dir, cfg.output_format, cfg.emit_heatmaps)?;
        let cfg_path = cfg.output_dir.join("run.cfg");
        std::fs::write(&cfg_path, cfg.to_text()).with_context(|| format!("writing {}", cfg_path.display()))?;
        let diag = DiagnosticsWriter::create(cfg.output_dir.join("diagnostics.csv"))?;
        Ok((writer, diag))
    };
    let (writer, mut diag) = setup().map_err(Failure::Runtime)?;

    let init = generate_initial_state(&grid, &InitialConditionSpec::default(), cfg.rng_seed);
    let options = RunOptions { snapshot_every: cfg.snapshot_steps() };
    let verbose = args.verbose;
    let outcome = run_simulation(init, &grid, &cfg.params, &cfg.time, &options, |snap| {
        writer.write(snap.index, snap.time, snap.state, &grid)?;
        diag.append(snap.record)?;
        if verbose || snap.kind == SnapshotKind::Failure {
            let r = snap.record;
            println!(
                "snapshot {:>5} step {:>7} t={:<10} mass m={:.6e} p={:.6e} v={:.6e} newton={}",
                snap.index, snap.step, snap.time, r.mass_m, r.mass_p, r.mass_v, r.newton_iters
            );
        }
        Ok(())
    });
    diag.finish().map_err(|e| Failure::Runtime(e.into()))?;
    let summary = outcome.map_err(|e| Failure::Runtime(e.into()))?;

    let iters: Vec<usize> = summary.step_log.iter().map(|s| s.newton_iterations).collect();
    let max_iter = iters.iter().copied().max().unwrap_or(0);
    let x = &summary.extremes;
    println!(
        "{} steps to t={} on {}x{}; max newton iterations {max_iter}",
        summary.steps, summary.final_time, cfg.nx, cfg.ny
    );
    println!(
        "ranges: m [{:.3e}, {:.3e}] p [{:.3e}, {:.3e}] v [{:.3e}, {:.3e}]",
        x.min_m, x.max_m, x.min_p, x.max_p, x.min_v, x.max_v
    );
    println!("output in {}", cfg.output_dir.display());
    Ok(())
}

/// Relative tolerance on the per-step mass balance recorded in diagnostics.
const BALANCE_TOL: f64 = 1e-10;

fn check(args: CheckArgs) -> Result<(), Failure> {
    let params = match &args.config {
        Some(path) => load_config(Some(path), &[]).map_err(|e| Failure::Config(e.into()))?.params,
        None => ModelParams::default(),
    };
    let indices = list_csv_snapshots(&args.dir).map_err(|e| Failure::Runtime(e.into()))?;
    if indices.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!("no csv_grid snapshots in {}", args.dir.display())));
    }
    let mut problems = 0usize;
    let mut p0_max = None;
    for idx in indices {
        let snap = load_csv_snapshot(&args.dir, idx).map_err(|e| Failure::Runtime(e.into()))?;
        let p0 = *p0_max.get_or_insert_with(|| snap.state.p.iter().copied().fold(0.0, f64::max));
        let violations = check_bounds(&snap.state, &params, p0);
        let c_mismatch = match &snap.c {
            Some(c) => (0..c.len()).filter(|&i| c[i] != snap.state.m[i] + snap.state.p[i]).count(),
            None => 0,
        };
        let r = compute_record(&snap.state, &snap.grid, snap.time, None);
        let status = if violations.is_empty() && c_mismatch == 0 { "ok" } else { "FAIL" };
        println!(
            "{idx:05} t={:<10} mass m={:.6e} p={:.6e} v={:.6e} entropy={:.3e} grad={:.3e} bound violations={} c mismatches={c_mismatch} {status}",
            snap.time,
            r.mass_m,
            r.mass_p,
            r.mass_v,
            r.entropy_m,
            r.grad_energy_v,
            violations.len()
        );
        for v in violations.iter().take(5) {
            println!("  cell {} {} = {:e}", v.cell, v.field, v.value);
        }
        problems += violations.len() + c_mismatch;
    }

    let diag_path = args.dir.join("diagnostics.csv");
    if diag_path.exists() {
        let bad = check_balance(&diag_path).map_err(Failure::Runtime)?;
        println!("diagnostics.csv: {bad} rows with mass balance residual above {BALANCE_TOL:e} relative");
        problems += bad;
    }
    if problems > 0 {
        return Err(Failure::Runtime(anyhow::anyhow!("{problems} problems found")));
    }
    Ok(())
}

fn check_balance(path: &Path) -> anyhow::Result<usize> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).with_context(|| format!("no `{name}` column"));
    let (mass, resid) = (col("mass_m")?, col("mass_balance_residual")?);
    let mut bad = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> anyhow::Result<f64> {
            fields.get(i).context("short row")?.parse().with_context(|| format!("bad number in `{line}`"))
        };
        let (m, r) = (get(mass)?, get(resid)?);
        if !(r <= BALANCE_TOL * m || r <= 1e-14) {
            bad += 1;
        }
    }
    Ok(bad)
}

fn print_rows(title: &str, rows: &[RefinementRow]) {
    println!("{title}");
    println!("{:>10} {:>14} {:>10} {:>8}", "dt", "error", "ratio", "order");
    for r in rows {
        let ratio = r.ratio.map_or("-".into(), |x| format!("{x:.3}"));
        let order = r.order.map_or("-".into(), |x| format!("{x:.3}"));
        println!("{:>10} {:>14.6e} {:>10} {:>8}", r.dt, r.error, ratio, order);
    }
}

fn convergence(args: ConvergenceArgs) -> Result<(), Failure> {
    let params = ModelParams::default();
    if matches!(args.preset, Preset::Logistic | Preset::All) {
        let rows = reaction_order_study(&params, 0.5, 1.0, &[0.04, 0.02, 0.01, 0.005])
            .map_err(|e| Failure::Runtime(e.into()))?;
        print_rows("RK4 on the tissue logistic (m = p = 0, v0 = 0.5, t = 1), error vs closed form", &rows);
    }
    if matches!(args.preset, Preset::Imex | Preset::All) {
        let grid = Grid::new(20, 20).map_err(|e| Failure::Config(e.into()))?;
        let init = generate_initial_state(&grid, &InitialConditionSpec::default(), args.seed);
        let rows = imex_self_convergence(&init, &grid, &params, 1.0, &[0.04, 0.02, 0.01, 0.005])
            .map_err(|e| Failure::Runtime(e.into()))?;
        print_rows("IMEX on 20x20 to t = 1, difference to the next halved step", &rows);
    }
    Ok(())
}

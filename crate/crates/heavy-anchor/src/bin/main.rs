//! Scenario-driven command line: analyze operator constants, synthesize
//! certified gains, simulate, verify run properties, and reproduce the
//! published parameter table.
//!
//! Exit codes: 0 success, 1 usage or runtime error, 2 infeasible synthesis,
//! 3 verification failure.

use clap::{Args, Parser, Subcommand};
use heavy_anchor::dynamics::{DynamicsKind, InfoMode};
use heavy_anchor::game_model::Benchmark;
use heavy_anchor::scenario::{
    analyze, build_context, compare_tables, computed_table, default_config_toml, execute,
    format_table, prepare, reference_table, run_synthesis, verify_run, GameSpec, GraphSpec,
    Outputs, Overrides, ScenarioConfig, ScenarioContext, ScenarioError, TableComparison,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "heavy-anchor",
    version,
    about = "Nash equilibrium seeking with anchored gradient-play dynamics"
)]
struct Cli {
    /// Print a scenario template with every default spelled out, then exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Operator moduli and the resolvent feasibility window of a game.
    Analyze(TargetArgs),
    /// Certified (alpha, beta, c) for the scenario's governing theorem.
    Synth(TargetArgs),
    /// Integrate a scenario; write trajectory CSV, summary JSON, plot data.
    Simulate(RunArgs),
    /// Run a scenario and check its expected properties; exit 3 on failure.
    Verify(RunArgs),
    /// Recompute the published parameter table and diff every cell.
    ReproduceTable(TableArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// Scenario file (TOML).
    scenario: Option<PathBuf>,
    /// Benchmark fixture shortcut (harmonic|g1|g2|g3|sine) instead of a file.
    #[arg(long, conflicts_with = "scenario")]
    fixture: Option<String>,
    /// Information mode: full | partial.
    #[arg(long)]
    info: Option<String>,
    /// Dynamics: gradient | anchor.
    #[arg(long)]
    dynamics: Option<String>,
    /// Governing theorem tag (full-mono|full-hypo|full-quad|dist-general|dist-quad).
    #[arg(long)]
    theorem: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Consensus gain (partial information).
    #[arg(long)]
    c: Option<f64>,
    /// Certificate tuning in (0, 1).
    #[arg(long)]
    d: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Integration horizon T.
    #[arg(long)]
    t_final: Option<f64>,
    /// Integrator step h.
    #[arg(long)]
    step: Option<f64>,
    /// Output directory for CSV/JSON/plot files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also emit gnuplot data files and a plotting script.
    #[arg(long)]
    plot: bool,
    /// Take out-of-range gain overrides as given, without a certificate.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TableArgs {
    /// Write computed rows and the per-cell diff as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not usage errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    if cli.print_config {
        print!("{}", default_config_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: give a command or --print-config (see --help)");
        return ExitCode::from(1);
    };
    match dispatch(command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, ScenarioError> {
    match command {
        Command::Analyze(args) => {
            let ctx = build_context(resolve_config(&args)?)?;
            let report = analyze(&ctx);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth(args) => {
            let ctx = build_context(resolve_config(&args)?)?;
            let synthesis = run_synthesis(&ctx)?;
            println!("{}", serde_json::to_string_pretty(&synthesis)?);
            Ok(if synthesis.is_feasible() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Simulate(args) => {
            let (_ctx, artifacts) = run_scenario(&args)?;
            if let Some(t) = artifacts.summary.diverged_at {
                eprintln!("warning: state left bounds at t = {t}; trajectory truncated");
            }
            println!("{}", serde_json::to_string_pretty(&artifacts.summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => {
            let (ctx, artifacts) = run_scenario(&args)?;
            let run = prepare(&ctx, args.force)?;
            let report = verify_run(&run, &artifacts);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::ReproduceTable(args) => {
            let computed = computed_table()?;
            let reference = reference_table();
            let comparison = compare_tables(&computed, &reference);
            print!("{}", format_table(&computed));
            print_diffs(&comparison);
            if let Some(path) = args.json {
                let payload = serde_json::json!({
                    "computed": computed,
                    "reference": reference,
                    "comparison": comparison,
                });
                std::fs::write(path, serde_json::to_string_pretty(&payload)?)?;
            }
            Ok(if comparison.all_within { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}

/// Load the scenario file or build one from the fixture shortcut, then layer
/// the command-line overrides on top.
fn resolve_config(args: &TargetArgs) -> Result<ScenarioConfig, ScenarioError> {
    let mut config = match (&args.scenario, &args.fixture) {
        (Some(path), None) => ScenarioConfig::load(path)?,
        (None, Some(fixture)) => fixture_config(args, fixture)?,
        (None, None) => {
            return Err(ScenarioError::Validation(
                "give a scenario file or --fixture".to_string(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if let Some(info) = &args.info {
        config.info = info.parse()?;
    }
    if let Some(dynamics) = &args.dynamics {
        let kind: DynamicsKind = dynamics.parse()?;
        if kind == DynamicsKind::GradientPlay {
            // gradient play carries no certificate; drop the anchored fields
            config.theorem = None;
            config.overrides.alpha = None;
            config.overrides.beta = None;
            config.overrides.c = None;
        }
        config.dynamics = kind;
    }
    if let Some(theorem) = &args.theorem {
        config.theorem = Some(theorem.parse()?);
    }
    for (slot, value) in [
        (&mut config.overrides.alpha, args.alpha),
        (&mut config.overrides.beta, args.beta),
        (&mut config.overrides.c, args.c),
        (&mut config.overrides.d, args.d),
    ] {
        if value.is_some() {
            *slot = value;
        }
    }
    config.validate()?;
    Ok(config)
}

/// Minimal scenario for `--fixture`: anchored dynamics, and a ring graph
/// sized to the game when run in partial information.
fn fixture_config(args: &TargetArgs, fixture: &str) -> Result<ScenarioConfig, ScenarioError> {
    let benchmark: Benchmark = fixture.parse()?;
    let info: InfoMode = match &args.info {
        Some(s) => s.parse()?,
        None => InfoMode::Full,
    };
    let n_agents = heavy_anchor::game_model::build_benchmark(benchmark).n_agents();
    Ok(ScenarioConfig {
        name: fixture.to_string(),
        info,
        dynamics: DynamicsKind::HeavyAnchor,
        theorem: None,
        equilibrium: None,
        expect_converged: None,
        game: GameSpec::fixture(fixture),
        graph: (info == InfoMode::Distributed).then(|| GraphSpec::ring(n_agents)),
        constants: None,
        overrides: Overrides::default(),
        outputs: Outputs::default(),
    })
}

fn run_scenario(
    args: &RunArgs,
) -> Result<(ScenarioContext, heavy_anchor::scenario::RunArtifacts), ScenarioError> {
    let mut config = resolve_config(&args.target)?;
    if let Some(seed) = args.seed {
        config.overrides.seed = Some(seed);
    }
    if let Some(t) = args.t_final {
        config.overrides.t_final = Some(t);
    }
    if let Some(h) = args.step {
        config.overrides.h = Some(h);
    }
    if let Some(dir) = &args.out {
        config.outputs.dir = Some(dir.clone());
    }
    if args.plot {
        config.outputs.plot = true;
    }
    config.validate()?;
    let ctx = build_context(config)?;
    let run = prepare(&ctx, args.force)?;
    let artifacts = execute(&run)?;

    let dir = ctx.config.outputs.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let name = &ctx.config.name;
    heavy_anchor::scenario::write_trajectory_csv_path(
        &artifacts.trajectory,
        &dir.join(format!("{name}.csv")),
    )?;
    heavy_anchor::scenario::write_summary_json(
        &artifacts.summary,
        &dir.join(format!("{name}-summary.json")),
    )?;
    if ctx.config.outputs.plot {
        heavy_anchor::scenario::write_plot_data(&artifacts.trajectory, &dir, name)?;
    }
    Ok((ctx, artifacts))
}

fn print_diffs(comparison: &TableComparison) {
    for row in &comparison.rows {
        let tag = format!("{} {}", row.game, row.theorem);
        if !row.feasibility_match {
            println!("MISMATCH {tag}: feasibility differs from the reference");
            continue;
        }
        for cell in &row.cells {
            match (cell.computed, cell.reference) {
                (Some(c), Some(r)) => {
                    let rel = if r != 0.0 { (c - r).abs() / r.abs() } else { (c - r).abs() };
                    let status = if cell.ok { "ok" } else { "DEVIATES" };
                    println!(
                        "{status:>8} {tag:<18} {:<9} computed {c:<12.6} reference {r:<12.6} rel {rel:.2e}",
                        cell.cell
                    );
                }
                (None, None) => {}
                _ => println!("DEVIATES {tag:<18} {:<9} present on one side only", cell.cell),
            }
        }
    }
    println!(
        "table {}",
        if comparison.all_within { "matches the reference" } else { "DEVIATES from the reference" }
    );
}

// the theorem/benchmark parse errors funnel through ScenarioError::Synth and
// ScenarioError::Game; both are usage-class (exit 1)

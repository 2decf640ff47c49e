use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ddopt::bench::{run_and_export, Experiment, ScenarioConfig, WorldName};

#[derive(Parser)]
#[command(name = "ddopt", about = "Motion-state trajectory planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML or JSON scenario config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    world: Option<WorldArg>,
    /// Map file in the plain-text grid format; implies a file world.
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    /// Start pose `x,y,theta`.
    #[arg(long, global = true, value_parser = parse_triple)]
    start: Option<[f64; 3]>,
    /// Goal position `x,y`.
    #[arg(long, global = true, value_parser = parse_pair)]
    goal: Option<[f64; 2]>,
    /// Write the optimizer iteration trace of `plan` to this CSV.
    #[arg(long, global = true)]
    dump_iterations: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve one start/goal query.
    Plan,
    /// Success-rate and trajectory-quality benchmark.
    Bench,
    /// Integration-error experiment.
    Integral,
    /// Closed-loop replanning simulation.
    Sim,
}

#[derive(ValueEnum, Clone, Copy)]
enum WorldArg {
    Sparse,
    Dense,
    Spiral,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    parse_floats(s)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_floats(s)
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(w) = cli.world {
        cfg.world.kind = match w {
            WorldArg::Sparse => WorldName::Sparse,
            WorldArg::Dense => WorldName::Dense,
            WorldArg::Spiral => WorldName::Spiral,
        };
        cfg.integral.worlds = vec![cfg.world.kind];
    }
    if let Some(m) = cli.map {
        cfg.world.kind = WorldName::File;
        cfg.world.map = Some(m);
    }
    if cli.start.is_some() {
        cfg.plan.start = cli.start;
    }
    if cli.goal.is_some() {
        cfg.plan.goal = cli.goal;
    }
    cfg.validate()?;
    let experiment = match cli.command {
        Command::Plan => Experiment::Plan,
        Command::Bench => Experiment::Bench,
        Command::Integral => Experiment::Integral,
        Command::Sim => Experiment::Sim,
    };
    let written = run_and_export(&cfg, experiment, &cfg.out, cli.dump_iterations.as_deref())?;
    for name in written {
        println!("{}", cfg.out.join(name).display());
    }
    if let (Command::Plan, Some(p)) = (cli.command, &cli.dump_iterations) {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

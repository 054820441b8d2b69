use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use consensus_forge::export::{state_plots, write_trajectory_csv, Trajectory};
use consensus_forge::report::{EXIT_INPUT, EXIT_OK};
use consensus_forge::{run, Command, Outcome, Report, RunOptions, Scenario};

/// Spanning-tree consensus analysis, gain design and simulation for linear
/// multi-agent systems.
#[derive(Parser)]
#[command(name = "consensus-forge", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Cmd {
    /// Spanning tree and fixed-mode consensus criterion.
    Analyze { scenario: PathBuf },
    /// Synthesize gains (triangular or root-feedback design).
    Design { scenario: PathBuf },
    /// Closed-loop spectrum and circle tests for the scenario's gains.
    Check { scenario: PathBuf },
    /// Integrate the closed loop and write the trajectory CSV.
    Simulate { scenario: PathBuf },
    /// Run everything on a built-in fixture.
    Demo { fixture: Fixture },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    Example1,
    Example2,
    #[value(name = "example2-k6zero")]
    Example2K6zero,
}

impl Fixture {
    fn name(self) -> &'static str {
        match self {
            Fixture::Example1 => "example1",
            Fixture::Example2 => "example2",
            Fixture::Example2K6zero => "example2-k6zero",
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Default, PartialEq)]
enum Format {
    Json,
    #[default]
    Text,
}

#[derive(Args)]
struct Flags {
    /// Directory for CSV and SVG output.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Also write one SVG plot per state component.
    #[arg(long, global = true)]
    svg: bool,
    /// Seed for the sampled fixed-mode estimate.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulation horizon.
    #[arg(long = "T", global = true)]
    horizon: Option<f64>,
    /// Consensus tolerance: pass when ε(T) <= tol (1 + ε(0)).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Evaluate every bipartition instead of stopping at the first failure.
    #[arg(long, global = true)]
    exhaustive: bool,
}

fn load(path: &Path, command: Command) -> Result<Scenario, Box<Report>> {
    let source = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| {
        Box::new(Report::input_error(
            command,
            &source,
            &consensus_forge::scenario::ScenarioError {
                path: String::new(),
                line: None,
                column: None,
                message: format!("cannot read {source}: {e}"),
            },
        ))
    })?;
    Scenario::parse(&text).map_err(|e| {
        eprintln!("error: {source}: {e}");
        Box::new(Report::input_error(command, &source, &e))
    })
}

fn write_artifacts(outcome: &Outcome, flags: &Flags) -> io::Result<()> {
    let (Some(sim), Some(tree)) = (&outcome.simulation, &outcome.tree) else {
        return Ok(());
    };
    fs::create_dir_all(&flags.out)?;
    let name = &outcome.report.scenario;
    let csv_path = flags.out.join(format!("{name}.csv"));
    let file = BufWriter::new(fs::File::create(&csv_path)?);
    write_trajectory_csv(file, &Trajectory::from_result(sim, tree)).map_err(io::Error::other)?;
    eprintln!("wrote {}", csv_path.display());
    if flags.svg {
        for (stem, svg) in state_plots(sim, name) {
            let path = flags.out.join(format!("{stem}.svg"));
            fs::write(&path, svg)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let flags = &cli.flags;
    let (command, scenario) = match &cli.command {
        Cmd::Analyze { scenario } => (Command::Analyze, load(scenario, Command::Analyze)),
        Cmd::Design { scenario } => (Command::Design, load(scenario, Command::Design)),
        Cmd::Check { scenario } => (Command::Check, load(scenario, Command::Check)),
        Cmd::Simulate { scenario } => (Command::Simulate, load(scenario, Command::Simulate)),
        Cmd::Demo { fixture } => (
            Command::Demo,
            Ok(Scenario::builtin(fixture.name()).expect("fixture exists")),
        ),
    };
    let opts = RunOptions {
        seed: flags.seed,
        dt: flags.dt,
        horizon: flags.horizon,
        tol: flags.tol,
        exhaustive: flags.exhaustive,
    };
    let mut report = match scenario {
        Ok(s) => {
            let outcome = run(command, &s, &opts);
            if let Err(e) = write_artifacts(&outcome, flags) {
                eprintln!("error: writing output to {}: {e}", flags.out.display());
                let mut r = outcome.report;
                r.notes.push(format!("output not written: {e}"));
                r.exit_code = EXIT_INPUT;
                r.status = "io-error";
                r
            } else {
                outcome.report
            }
        }
        Err(r) => *r,
    };
    if let Some(e) = &report.error {
        if report.exit_code != EXIT_INPUT || e.kind != "InvalidScenario" {
            eprintln!("error: {}", e.message);
        }
    }
    report.notes.dedup();
    let text = match flags.format {
        Format::Json => report.to_json(),
        Format::Text => report.to_text(),
    };
    let mut out = io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
    ExitCode::from(report.exit_code as u8)
}

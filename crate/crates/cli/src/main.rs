use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tactile_nav::costmap::pgm::{encode_pgm, sidecar_header};
use tactile_nav::scenario::{bundled_names, replay_log, resolve_scenario, Outcome, RunReport, Session};
use tactile_nav_server::{serve, ServeConfig};

#[derive(Parser)]
#[command(name = "tactile-nav", version, about = "Run, serve and replay tactile-nav scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless and print its report as JSON.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_ticks: Option<u64>,
        /// Write the event log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Export the composite costmap as PGM every N ticks.
        #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
        snapshot_every: Option<u64>,
        #[arg(long, default_value = "snapshots")]
        snapshot_dir: PathBuf,
    },
    /// Serve a live session over WebSocket.
    Serve {
        scenario: String,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        paused: bool,
    },
    /// Re-execute an event log and check it reproduces itself.
    Replay { log: PathBuf },
    /// List bundled scenarios.
    ListScenarios,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn outcome_code(report: &RunReport) -> ExitCode {
    match report.outcome {
        Outcome::GoalReached => ExitCode::SUCCESS,
        Outcome::Timeout | Outcome::Stuck => ExitCode::from(2),
    }
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { scenario, seed, max_ticks, log, snapshot_every, snapshot_dir } => {
            let mut sc = resolve_scenario(&scenario)?;
            if let Some(seed) = seed {
                sc = sc.with_seed(seed);
            }
            if let Some(n) = max_ticks {
                sc = sc.with_max_ticks(n);
            }
            if snapshot_every.is_some() {
                fs::create_dir_all(&snapshot_dir)?;
            }
            let mut log = log.map(|p| File::create(p).map(BufWriter::new)).transpose()?;
            let mut session = Session::new(sc)?;
            loop {
                let more = session.tick();
                if let Some(f) = log.as_mut() {
                    for line in session.take_log() {
                        writeln!(f, "{line}")?;
                    }
                }
                let tick = session.tick_count();
                if snapshot_every.is_some_and(|n| tick % n == 0) {
                    write_snapshot(&session, &snapshot_dir, tick)?;
                }
                if !more {
                    break;
                }
            }
            if let Some(mut f) = log {
                f.flush()?;
            }
            let report = session.report().expect("finished runs have a report");
            println!("{}", serde_json::to_string_pretty(report)?);
            Ok(outcome_code(report))
        }
        Command::Serve { scenario, port, host, speed, log, paused } => {
            let sc = resolve_scenario(&scenario)?;
            let cfg = ServeConfig { speed, log_path: log, start_paused: paused, ..ServeConfig::default() };
            let handle = serve(sc, (host.as_str(), port), cfg)?;
            println!("listening on ws://{}", handle.local_addr());
            handle.wait()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { log } => {
            let text = fs::read_to_string(&log)?;
            let replay = replay_log(&text)?;
            if let Some(line) = replay.first_difference {
                return Err(format!("replay diverges from the log at line {}", line + 1).into());
            }
            eprintln!("replay identical ({} lines)", replay.log.len());
            match &replay.report {
                Some(r) => {
                    println!("{}", serde_json::to_string_pretty(r)?);
                    Ok(outcome_code(r))
                }
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::ListScenarios => {
            for (name, description) in bundled_names() {
                println!("{name:<20} {description}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_snapshot(session: &Session, dir: &Path, tick: u64) -> Result<()> {
    let composite = session.composite();
    let stem = dir.join(format!("composite_{tick:06}"));
    fs::write(stem.with_extension("pgm"), encode_pgm(composite))?;
    fs::write(stem.with_extension("txt"), sidecar_header(composite.spec(), "composite", tick))?;
    Ok(())
}

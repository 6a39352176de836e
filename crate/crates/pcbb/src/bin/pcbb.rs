use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcbb::config::{load_file, parse_seeds, Overrides};
use pcbb::experiment::{run_experiment, RunOptions};
use pcbb::inspect::{fleet_at, progress_list_at};
use pcbb::output::{fleet_table, progress_table};
use pcbb::{compare, Error};
use pcbb_core::protocols::ProtocolKind;
use pcbb_core::{SimTime, VehicleId};

#[derive(Parser)]
#[command(
    name = "pcbb",
    version,
    about = "Emergency broadcast experiments on a simulated highway"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured protocol and seed; write per-run CSVs and summary.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this protocol.
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<ProtocolKind>,
        /// Seeds such as `42`, `1,2,3` or `0..20`.
        #[arg(long, alias = "seed", value_parser = parse_seed_list)]
        seeds: Option<SeedList>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write trace.csv in each run directory.
        #[arg(long)]
        trace: bool,
        /// Worker threads (default: all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Compare summary.csv files from the same scenario.
    Compare {
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
    },
    /// Print the fleet snapshot CSV for one seed.
    Fleet {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        at_ms: u64,
    },
    /// Print the progress list one vehicle would build.
    Segments {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        at_ms: u64,
        #[arg(long)]
        vehicle: u32,
    },
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_seed_list(s: &str) -> Result<SeedList, String> {
    parse_seeds(s).map(SeedList)
}

fn parse_protocol(s: &str) -> Result<ProtocolKind, String> {
    ProtocolKind::parse(s).ok_or_else(|| format!("unknown protocol `{s}`; expected pcbb, cbb or emdv"))
}

fn load_any(config: &std::path::Path) -> Result<pcbb::config::Experiment, Error> {
    // inspection commands do not need a protocol
    let o = Overrides {
        protocol: Some(ProtocolKind::Pcbb),
        ..Overrides::default()
    };
    load_file(config, &o)
}

fn execute(cmd: Command) -> Result<(), Error> {
    let stdout = io::stdout();
    match cmd {
        Command::Run {
            config,
            protocol,
            seeds,
            out,
            trace,
            jobs,
            quiet,
        } => {
            let o = Overrides {
                protocol,
                seeds: seeds.map(|s| s.0),
                output_dir: out,
            };
            let exp = load_file(&config, &o)?;
            let report = run_experiment(&exp, &RunOptions { trace, jobs })?;
            if !quiet {
                println!(
                    "{} runs, scenario {}, summary at {}",
                    report.runs.len(),
                    report.scenario_hash,
                    report.summary_path.display()
                );
            }
        }
        Command::Compare { summaries } => {
            let c = compare::compare(&summaries)?;
            print!("{}", c.render());
        }
        Command::Fleet { config, seed, at_ms } => {
            let exp = load_any(&config)?;
            let fleet = fleet_at(&exp.scenario, seed, SimTime::from_ms(at_ms))?;
            fleet_table(&fleet)
                .write_csv(stdout.lock())
                .map_err(Error::io("<stdout>"))?;
        }
        Command::Segments {
            config,
            seed,
            at_ms,
            vehicle,
        } => {
            let exp = load_any(&config)?;
            match progress_list_at(&exp.scenario, seed, SimTime::from_ms(at_ms), VehicleId(vehicle))? {
                Some(pl) => progress_table(&pl)
                    .write_csv(stdout.lock())
                    .map_err(Error::io("<stdout>"))?,
                None => return Err(Error::UnknownVehicle(vehicle)),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io { source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pcbb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

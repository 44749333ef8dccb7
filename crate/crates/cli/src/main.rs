//! `mixsim` command line: run a scenario, sweep one parameter, or search a
//! knob for an entropy objective. Results are written as CSV.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixsim::harness::{
    run_point, run_sweep, search, write_csv, CsvRow, Profile, ScenarioConfig, SearchConfig, SweepConfig,
};
use mixsim::{ConfigError, Error};

#[derive(Parser)]
#[command(name = "mixsim", version, about = "Mix-network anonymity simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one scenario.
    Run(Common),
    /// Run a base scenario at each value of one axis.
    Sweep(Common),
    /// Bisect a knob for the smallest value meeting an entropy objective.
    Search(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(short, long)]
    config: PathBuf,
    /// CSV output path.
    #[arg(short, long)]
    out: PathBuf,
    /// Replace the config's seed list.
    #[arg(long, value_delimiter = ',')]
    seed_override: Option<Vec<u64>>,
    /// Worker threads. Output does not depend on this.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Parameter profile for defaults the config leaves out.
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Full,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Full => Profile::Full,
        }
    }
}

fn read_config(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Config(ConfigError::new(
            "config",
            format!("cannot read {}: {e}", path.display()),
        ))
    })
}

fn write_rows(path: &Path, rows: &[CsvRow]) -> Result<(), Error> {
    write_csv(BufWriter::new(File::create(path)?), rows)
}

fn override_seeds(base: &mut ScenarioConfig, seeds: &Option<Vec<u64>>) {
    if let Some(seeds) = seeds {
        base.run.seeds = seeds.clone();
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = ScenarioConfig::from_json(&read_config(&args.config)?)?;
            override_seeds(&mut cfg, &args.seed_override);
            let scenario = cfg.resolve(args.profile.map(Into::into))?;
            let point = run_point(&scenario, None, args.parallel)?;
            write_rows(&args.out, &CsvRow::from_point(&point))?;
            if let Some(h) = point.entropy_mean() {
                eprintln!("entropy {h:.4} bits over {} samples", point.entropy_samples().len());
            }
            if let Some(eps) = point.epsilon_hat() {
                eprintln!("eps_hat {eps:.5} nats");
            }
            if let Some(lat) = point.latency() {
                eprintln!("latency mean {:.4}s p95 {:.4}s", lat.mean, lat.p95);
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let mut cfg = SweepConfig::from_json(&read_config(&args.config)?)?;
            override_seeds(&mut cfg.base, &args.seed_override);
            let outcome = run_sweep(&cfg, args.profile.map(Into::into), args.parallel)?;
            let rows: Vec<CsvRow> = outcome.points.iter().flat_map(CsvRow::from_point).collect();
            write_rows(&args.out, &rows)?;
            for (x, e) in &outcome.failures {
                eprintln!("{} = {x}: {e}", cfg.axis.path);
            }
            match outcome.failures.into_iter().next() {
                Some((_, e)) => Err(e),
                None => Ok(()),
            }
        }
        Command::Search(args) => {
            let mut cfg = SearchConfig::from_json(&read_config(&args.config)?)?;
            override_seeds(&mut cfg.base, &args.seed_override);
            let outcome = search(&cfg, args.profile.map(Into::into), args.parallel)?;
            let rows: Vec<CsvRow> = outcome.probes.iter().flat_map(CsvRow::from_point).collect();
            write_rows(&args.out, &rows)?;
            println!(
                "{} = {} ({:.4} bits{})",
                cfg.knob.path(),
                outcome.value,
                outcome.entropy_bits,
                if outcome.converged {
                    ""
                } else {
                    ", iteration budget exhausted"
                }
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors are configuration errors; help and version are not errors
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

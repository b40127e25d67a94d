use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cashsim_core::experiment::{compare, load_bundle, run_experiment, Summary};
use cashsim_core::scenario::{
    preset_description, preset_scenario, scenario_from_toml, Scenario, PRESET_NAMES,
};

#[derive(Parser)]
#[command(name = "cashsim", version, about = "Credit-aware cluster scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its output bundle.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario file and report every problem found.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Compare two output bundles of the same workload.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Print the comparison as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// List built-in presets, or print one as a scenario file.
    Presets {
        /// Print this preset's scenario file instead of the list.
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
    },
}

#[derive(Args)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Source {
    fn load(&self) -> Result<Scenario> {
        let mut sc = match (&self.scenario, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                scenario_from_toml(&text).with_context(|| path.display().to_string())?
            }
            (None, Some(name)) => preset_scenario(name)?,
            (None, None) => bail!("one of --scenario or --preset is required"),
        };
        if let Some(seed) = self.seed {
            sc.seed = Some(seed);
        }
        sc.validate()?;
        Ok(sc)
    }
}

fn run(source: &Source, out: &Path) -> Result<()> {
    let sc = source.load()?;
    let (output, manifest) = run_experiment(&sc, out)?;
    let summary = Summary::of(&output);
    println!("scenario   {}", manifest.scenario_name);
    println!("seed       {}", manifest.seed);
    println!("complete   {}", manifest.complete);
    for key in ["makespan_s", "cumulative_elapsed_s", "avg_granted_iops", "total_cost"] {
        if let Some(v) = summary.metrics.get(key) {
            println!("{key:<20} {v:.4}");
        }
    }
    println!("event log  {}", manifest.event_log_digest);
    println!("bundle     {}", out.display());
    Ok(())
}

fn presets(show: Option<&str>) -> Result<()> {
    if let Some(name) = show {
        print!("{}", preset_scenario(name)?.to_toml());
        return Ok(());
    }
    for name in PRESET_NAMES {
        println!("{name:<20} {}", preset_description(name).unwrap_or(""));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { source, out } => run(&source, &out),
        Command::Validate { source } => {
            let sc = source.load()?;
            println!("ok: {} ({} nodes)", sc.name, sc.node_count());
            Ok(())
        }
        Command::Compare { a, b, json } => {
            let ba = load_bundle(&a)?;
            let bb = load_bundle(&b)?;
            let cmp = compare(&ba, &bb)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&cmp)?);
            } else {
                print!("{}", cmp.to_table());
            }
            Ok(())
        }
        Command::Presets { show } => presets(show.as_deref()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

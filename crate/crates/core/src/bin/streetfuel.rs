use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use streetfuel::config::PipelineConfig;
use streetfuel::pipeline::{Pipeline, Stage};
use streetfuel::synthetic::{City, CitySpec};

/// Street-level fuel consumption pipeline.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Clean raw GPS trips.
    Clean,
    /// Map-match cleaned trips to the network.
    Match,
    /// Build per-edge speed profiles and features.
    Profiles,
    /// Calibrate the fuel model for every fuel-economy bin.
    Calibrate,
    /// Incremental traffic assignment per window.
    Assign,
    /// Per-edge fuel rates and GeoJSON maps.
    Fuelmap,
    /// Trip simulation and trip-reduction curves.
    Scenario,
    /// Every stage in order.
    All,
    /// Write the synthetic city dataset into --out.
    Synth {
        #[arg(long, default_value_t = CitySpec::default().trips)]
        trips: usize,
    },
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Clean => vec![Stage::Clean],
            Command::Match => vec![Stage::Match],
            Command::Profiles => vec![Stage::Profiles],
            Command::Calibrate => vec![Stage::Calibrate],
            Command::Assign => vec![Stage::Assign],
            Command::Fuelmap => vec![Stage::FuelMap],
            Command::Scenario => vec![Stage::Scenario],
            Command::All => Stage::ALL.to_vec(),
            Command::Synth { .. } => Vec::new(),
        }
    }
}

fn run(cli: Cli) -> streetfuel::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| streetfuel::Error::Config(format!("--threads: {e}")))?;
    }
    if let Command::Synth { trips } = cli.command {
        let out = cli.out.ok_or_else(|| streetfuel::Error::Config("synth needs --out".into()))?;
        let mut spec = CitySpec { trips, ..CitySpec::default() };
        if let Some(seed) = cli.seed {
            spec.seed = seed;
        }
        let city = City::generate(&spec)?;
        city.write(&out)?;
        log::info!("wrote {} trips on {} edges to {}", city.trips.len(), city.network.edge_count(), out.display());
        return Ok(());
    }
    let path = cli.config.ok_or_else(|| streetfuel::Error::Config("--config is required".into()))?;
    let mut config = PipelineConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = Some(out);
    }
    let pipeline = Pipeline::new(config);
    cli.command.stages().into_iter().try_for_each(|s| pipeline.run(s))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

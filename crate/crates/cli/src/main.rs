use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use trafficdet_cli::{
    cmd_figure6, cmd_rates, cmd_selfcheck, cmd_simulate, cmd_validate, embedded_records,
    parse_constants, CommandError, Constants, OutputFormat, EXIT_OK, EXIT_USAGE,
};
use trafficdet_core::selfcheck::DEFAULT_SEED;

#[derive(Parser)]
#[command(
    name = "trafficdet",
    version,
    about = "Grid-cell detector math plus the staged traffic-scene benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format for report commands
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Write output to this file instead of standard output
    #[arg(long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,

    /// Constants file overriding scene, grid, and threshold defaults
    /// (flat `key = value` lines; unknown keys are rejected)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for the selfcheck suites
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every dataset integrity check (507 photos, slice cardinalities,
    /// rate bounds, overlap correlation)
    Validate,
    /// Success rates per camera distance for one experiment
    Rates {
        /// Experiment number (1-4)
        #[arg(long, short = 'e')]
        experiment: u8,
    },
    /// Experiments 3 and 4 compared per distance, with discrepancy notes
    Figure6,
    /// Project one experiment's trials into image boxes and run the
    /// synthetic encode -> detect pipeline on them
    Simulate {
        /// Experiment number (1-4)
        #[arg(long, short = 'e')]
        experiment: u8,
        /// Camera distance in feet
        #[arg(long, short = 'd', value_name = "FT")]
        distance: u32,
    },
    /// Run the IOU, NMS, and gradient oracle suites with a fixed seed
    Selfcheck,
}

fn load_constants(path: Option<&Path>) -> Result<Constants, String> {
    let Some(path) = path else {
        return Ok(Constants::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse_constants(&text).map_err(|e| format!("config {}: {e}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), String> {
    match path {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| format!("cannot write to stdout: {e}"))
        }
    }
}

fn run(cli: &Cli, constants: &Constants) -> Result<String, CommandError> {
    let format = OutputFormat::from(cli.format);
    match cli.command {
        Command::Validate => cmd_validate(&embedded_records()),
        Command::Rates { experiment } => cmd_rates(&embedded_records(), experiment, format),
        Command::Figure6 => cmd_figure6(&embedded_records(), format),
        Command::Simulate {
            experiment,
            distance,
        } => cmd_simulate(experiment, distance, format, constants),
        Command::Selfcheck => cmd_selfcheck(cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let constants = match load_constants(cli.config.as_deref()) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(&cli, &constants) {
        Ok(text) => match write_output(cli.output.as_deref(), &text) {
            Ok(()) => ExitCode::from(EXIT_OK),
            Err(msg) => {
                eprintln!("{msg}");
                ExitCode::from(EXIT_USAGE)
            }
        },
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}

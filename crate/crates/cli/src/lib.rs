//! The `famous` command-line driver.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod parse;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use attn_accel_core::corpus::Amplitude;
use attn_accel_core::perf::MEASURED;
use attn_accel_core::{DesignParams, ResourceVector, RunParams};
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Format, GenRequest};
use error::{CliError, EXIT_INVALID, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "famous", version, about = "Fixed-point multi-head attention simulator and performance model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded input and weight corpus plus a manifest
    Gen(GenArgs),
    /// Run the fixed-point engine on a manifest
    Simulate(SimulateArgs),
    /// Measure fixed-point error against the float reference
    Compare(CompareArgs),
    /// Cycle, latency, throughput and resource estimates
    Perf(PerfArgs),
    /// Sweep tile size and head count under a resource budget
    Dse(DseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Csv,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Table => Format::Table,
            OutputFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AmplitudeArg {
    /// Every tensor uniform over the full signed 8-bit range
    Full,
    /// Weights scaled down by about sqrt(d_model), biases by 4
    UnitGain,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Design parameters (TOML); defaults to the U55C build
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Override the design's tile size
    #[arg(long)]
    pub tile_size: Option<u32>,
}

impl DesignArgs {
    fn resolve(&self) -> Result<DesignParams, CliError> {
        let mut design = match &self.design {
            Some(p) => commands::load_design(p)?,
            None => DesignParams::default(),
        };
        if let Some(ts) = self.tile_size {
            design.tile_size = ts;
            design.validate()?;
        }
        Ok(design)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Run parameters, e.g. `h=8,d_model=768,seq_len=64,mask=1`
    #[arg(long, value_parser = parse::parse_run, conflicts_with = "commands")]
    pub run: Option<RunParams>,
    /// Command stream that selects the run; copied next to the manifest
    #[arg(long)]
    pub commands: Option<PathBuf>,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum, default_value_t = AmplitudeArg::Full)]
    pub amplitude: AmplitudeArg,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Replace the manifest's design
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Replace the manifest's run with a command stream
    #[arg(long)]
    pub commands: Option<PathBuf>,
    /// Output tensor path instead of the manifest's
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[arg(long)]
    pub commands: Option<PathBuf>,
    /// Largest acceptable |fixed - float| per element
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PerfArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Calibration file replacing the cycle constants and resource model
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Base run; defaults to h=8,d_model=768,seq_len=64
    #[arg(long, value_parser = parse::parse_run)]
    pub run: Option<RunParams>,
    /// Take the run from a command stream
    #[arg(long, conflicts_with = "run")]
    pub commands: Option<PathBuf>,
    /// Sweep head counts
    #[arg(long, value_delimiter = ',')]
    pub heads: Vec<u32>,
    /// Sweep model widths
    #[arg(long, value_delimiter = ',')]
    pub d_models: Vec<u32>,
    /// Sweep sequence lengths
    #[arg(long, value_delimiter = ',')]
    pub seq_lens: Vec<u32>,
    /// One row per configuration of the measured results table
    #[arg(long, conflicts_with_all = ["run", "commands", "heads", "d_models", "seq_lens"])]
    pub measured: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
    /// Write the report to a file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DseArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Workload; its head count is replaced by each candidate
    #[arg(long, value_parser = parse::parse_run)]
    pub run: Option<RunParams>,
    /// Tile-size candidates
    #[arg(long, value_delimiter = ',', default_value = "32,64,96,128,192,256,384,768")]
    pub ts: Vec<u32>,
    /// Head-count candidates
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub heads: Vec<u32>,
    /// Resource budget, e.g. `dsp=4500,bram18k=4032`; omitted kinds use the U55C capacity
    #[arg(long, value_parser = parse::parse_budget)]
    pub budget: Option<ResourceVector>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn amplitude(arg: AmplitudeArg, d_model: u32) -> Amplitude {
    match arg {
        AmplitudeArg::Full => Amplitude::default(),
        AmplitudeArg::UnitGain => Amplitude::unit_gain(d_model),
    }
}

fn perf_runs(args: &PerfArgs, design: &DesignParams) -> Result<Vec<RunParams>, CliError> {
    if args.measured {
        return Ok(MEASURED.iter().map(|r| r.run).collect());
    }
    let base = match &args.commands {
        Some(p) => manifest::run_from_commands(design, p)?,
        None => args.run.unwrap_or(RunParams::new(8, 768, 64)),
    };
    let or_base = |v: &[u32], b: u32| if v.is_empty() { vec![b] } else { v.to_vec() };
    let mut runs = Vec::new();
    for d in or_base(&args.d_models, base.d_model) {
        for sl in or_base(&args.seq_lens, base.seq_len) {
            for h in or_base(&args.heads, base.h) {
                runs.push(RunParams { h, d_model: d, seq_len: sl, causal_mask: base.causal_mask });
            }
        }
    }
    Ok(runs)
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => {
            let design = a.design.resolve()?;
            let d_model = match &a.commands {
                Some(p) => manifest::run_from_commands(&design, p)?.d_model,
                None => a.run.map_or(768, |r| r.d_model),
            };
            let req = GenRequest {
                seed: a.seed,
                run: a.run,
                commands: a.commands,
                amplitude: amplitude(a.amplitude, d_model),
                design,
                out_dir: a.out,
            };
            commands::cmd_gen(&req, out).map(drop)
        }
        Command::Simulate(a) => {
            let req =
                commands::SimulateRequest { manifest: a.manifest, design: a.design, commands: a.commands, out: a.out };
            commands::cmd_simulate(&req, out).map(drop)
        }
        Command::Compare(a) => {
            let req = commands::CompareRequest {
                manifest: a.manifest,
                design: a.design,
                commands: a.commands,
                threshold: a.threshold,
            };
            commands::cmd_compare(&req, out).map(drop)
        }
        Command::Perf(a) => {
            let design = a.design.resolve()?;
            let runs = perf_runs(&a, &design)?;
            let req =
                commands::PerfRequest { design, calibration: a.calibration, runs, format: a.format.into(), out: a.out };
            commands::cmd_perf(&req, out).map(drop)
        }
        Command::Dse(a) => {
            let req = commands::DseRequest {
                design: a.design.resolve()?,
                calibration: a.calibration,
                run: a.run.unwrap_or(RunParams::new(8, 768, 64)),
                tile_sizes: a.ts,
                heads: a.heads,
                budget: a.budget.unwrap_or(ResourceVector::U55C),
                format: a.format.into(),
                out: a.out,
            };
            commands::cmd_dse(&req, out).map(drop)
        }
    }
}

/// Parse `args`, run the command, report errors on `err`, and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

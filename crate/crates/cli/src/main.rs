//! `promptquant` command-line tool.
//!
//! Data goes to files or standard output; diagnostics (`--verbose`) and
//! error records go to standard error. Errors are a single line,
//! `error kind=<Kind> msg="..."`; exit status is 2 for usage errors and 1 for
//! everything else.

mod analyze;
mod blob;
mod quantize;
mod toy;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use promptquant::packing::{fp16_baseline_bits, storage_bits};
use promptquant::Bits;

#[derive(Debug, Parser)]
#[command(name = "promptquant", version, about = "K-means weight quantization toolkit for prompt tensors")]
pub struct Cli {
    /// Seed for everything randomized (k-means jitter, toy tasks, noise).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print diagnostics to standard error.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a codebook to a weight file and write a QPRM blob.
    Quantize(quantize::QuantizeArgs),
    /// Reconstruct weights from a QPRM blob.
    Dequantize(quantize::DequantizeArgs),
    /// Build a QPRM blob from an index list and a codebook record.
    Pack(blob::PackArgs),
    /// Split a QPRM blob into an index list and a codebook record.
    Unpack(blob::UnpackArgs),
    /// Print the header, codebook and index histogram of a QPRM blob.
    Inspect(blob::InspectArgs),
    /// Train on the synthetic prompt-tuning task and write per-epoch CSVs.
    TrainToy(toy::TrainToyArgs),
    /// Variance, adjacent-epoch divergence and outlier traces for a snapshot CSV.
    Analyze(analyze::AnalyzeArgs),
    /// Print the storage cost of N indices at b bits plus the codebook.
    Storage(StorageArgs),
}

#[derive(Debug, Args)]
pub struct StorageArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long, value_parser = parse_bits)]
    pub bits: Bits,
}

/// On-disk weight encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Raw f32 for a path with a `.meta` sidecar (input) or a `.f32`/`.bin` extension (output), text otherwise.
    Auto,
    F32le,
    Text,
}

pub fn parse_bits(s: &str) -> Result<Bits, String> {
    let b: u32 = s.parse().map_err(|e| format!("{e}"))?;
    Bits::new(b).map_err(|e| e.to_string())
}

/// Failure of a subcommand, classified for the exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Lib(promptquant::Error),
}

impl From<promptquant::Error> for Failure {
    fn from(e: promptquant::Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

/// Shared context handed to every subcommand.
pub struct Ctx {
    pub seed: u64,
    pub verbose: bool,
}

impl Ctx {
    pub fn diag(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// File helpers whose errors name the path.
pub mod files {
    use std::fs;
    use std::path::Path;

    use promptquant::Error;

    fn io(path: &Path, e: std::io::Error) -> Error {
        Error::Io(format!("{}: {e}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Vec<u8>, Error> {
        fs::read(path).map_err(|e| io(path, e))
    }

    pub fn read_text(path: &Path) -> Result<String, Error> {
        fs::read_to_string(path).map_err(|e| io(path, e))
    }

    pub fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), Error> {
        fs::write(path, data).map_err(|e| io(path, e))
    }

    pub fn create_dir(path: &Path) -> Result<(), Error> {
        fs::create_dir_all(path).map_err(|e| io(path, e))
    }
}

fn error_record(kind: &str, msg: &str) {
    eprintln!("error kind={kind} msg={msg:?}");
}

fn storage(args: &StorageArgs, ctx: &Ctx) -> CmdResult {
    let bits = storage_bits(args.n, args.bits);
    println!("{bits} bits ({} bytes)", bits.div_ceil(8));
    ctx.diag(format!("fp16 baseline {} bits, ratio {:.4}", fp16_baseline_bits(args.n), fp16_baseline_bits(args.n) as f64 / bits as f64));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let detail = e.to_string();
            let first = match e.kind() {
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => "missing subcommand; see --help",
                _ => detail.lines().next().unwrap_or_default().trim_start_matches("error: "),
            };
            error_record("Usage", first);
            return ExitCode::from(2);
        }
    };
    let ctx = Ctx { seed: cli.seed, verbose: cli.verbose };
    let result = match &cli.command {
        Command::Quantize(a) => quantize::quantize(a, &ctx),
        Command::Dequantize(a) => quantize::dequantize(a, &ctx),
        Command::Pack(a) => blob::pack(a, &ctx),
        Command::Unpack(a) => blob::unpack(a, &ctx),
        Command::Inspect(a) => blob::inspect(a, &ctx),
        Command::TrainToy(a) => toy::train_toy(a, &ctx),
        Command::Analyze(a) => analyze::analyze(a, &ctx),
        Command::Storage(a) => storage(a, &ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            error_record("Usage", &msg);
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            error_record(e.kind(), &e.to_string());
            ExitCode::from(1)
        }
    }
}

//! Argument definitions and subcommand implementations.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssmcodec_core::codec::Codec;
use ssmcodec_core::entropy::LAMBDA_LADDER;
use ssmcodec_core::transforms::{Model, TransformConfig};
use ssmcodec_core::weights::{init_weights, WeightStore};

use crate::analyze::{self, Metric, ALL_METRICS};
use crate::archive;
use crate::bench;
use crate::container;
use crate::error::{CodecError, Result};
use crate::image_io::{self, Format};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(
    name = "ssmcodec",
    version,
    about = "Learned image codec built on selective state-space scans"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for image-level parallelism.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Compact,
    Full,
    Tiny,
}

impl ModelKind {
    pub fn config(self) -> TransformConfig {
        match self {
            ModelKind::Compact => TransformConfig::compact(),
            ModelKind::Full => TransformConfig::full(),
            ModelKind::Tiny => TransformConfig::tiny(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Weight archive; without it weights are initialized from --seed.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Architecture used when no weight archive is given.
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a PNG or PPM image into a bitstream file.
    Encode {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Position on the quality ladder, 0 (lowest rate) to 4.
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..LAMBDA_LADDER.len() as i64))]
        lambda_index: u8,
    },
    /// Reconstruct an image from a bitstream file.
    Decode {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Output format; defaults to the extension of --out, then PNG.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Write a seeded weight archive.
    InitWeights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value = "compact")]
        model: ModelKind,
    },
    /// Report per-stage MAC estimates and wall time per input size as CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIZES)]
        sizes: Vec<usize>,
        #[command(flatten)]
        model: ModelArgs,
        /// Only count operations; skip the timed encode / decode.
        #[arg(long)]
        macs_only: bool,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run metrics and latent diagnostics over a directory of images.
    Analyze {
        dir: PathBuf,
        /// Directory for analyze.csv, correlation.csv and deviation maps.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = ALL_METRICS)]
        metrics: Vec<Metric>,
        #[arg(long, default_value_t = 2)]
        max_offset: usize,
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..LAMBDA_LADDER.len() as i64))]
        lambda_index: u8,
    },
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CodecError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Loads the archive named by `--weights`, or initializes from the seed.
pub fn resolve_weights(args: &ModelArgs) -> Result<WeightStore> {
    match &args.weights {
        Some(path) => {
            require_file(path, "weight file")?;
            let store = archive::load(path)?;
            if let Some(kind) = args.model {
                if kind.config() != store.config {
                    return Err(CodecError::Usage(format!(
                        "--model {kind:?} does not match the architecture stored in {}",
                        path.display()
                    )));
                }
            }
            Ok(store)
        }
        None => Ok(init_weights(
            &args.model.unwrap_or(ModelKind::Compact).config(),
            args.seed,
        )?),
    }
}

fn codec_for(args: &ModelArgs) -> Result<Codec> {
    let store = resolve_weights(args)?;
    Ok(Codec::new(Model::from_store(&store)?)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(CodecError::io(path))
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads as usize)
        .build()
        .map_err(|e| CodecError::Usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| run_command(cli.command))
}

fn run_command(command: Command) -> Result<()> {
    let mut stdout = io::stdout().lock();
    let report = |e: io::Error| CodecError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match command {
        Command::Encode {
            input,
            out,
            model,
            lambda_index,
        } => {
            require_file(&input, "input image")?;
            let codec = codec_for(&model)?;
            let image = image_io::load(&input)?;
            let start = Instant::now();
            let (enc, trace) = codec.encode_traced(&image, lambda_index)?;
            let elapsed = start.elapsed();
            let bytes = container::to_bytes(&enc)?;
            write_file(&out, &bytes)?;
            let pixels = enc.height as f64 * enc.width as f64;
            writeln!(stdout, "size {}x{}", enc.width, enc.height).map_err(report)?;
            writeln!(stdout, "bpp {:.6}", 8.0 * bytes.len() as f64 / pixels).map_err(report)?;
            writeln!(stdout, "file_bytes {}", bytes.len()).map_err(report)?;
            writeln!(stdout, "z_bytes {}", enc.z_stream.len()).map_err(report)?;
            for (i, s) in enc.slice_streams.iter().enumerate() {
                writeln!(stdout, "slice{i}_bytes {}", s.len()).map_err(report)?;
            }
            writeln!(
                stdout,
                "estimated_bits {:.1}",
                trace.bits_z + trace.bits_y.iter().sum::<f64>()
            )
            .map_err(report)?;
            writeln!(stdout, "saturated {}", trace.saturated).map_err(report)?;
            writeln!(stdout, "seconds {:.3}", elapsed.as_secs_f64()).map_err(report)?;
        }
        Command::Decode {
            input,
            out,
            model,
            format,
        } => {
            require_file(&input, "bitstream")?;
            let codec = codec_for(&model)?;
            let bytes = std::fs::read(&input).map_err(CodecError::io(&input))?;
            let enc = container::from_bytes(&bytes)?;
            let start = Instant::now();
            let image = codec.decode(&enc)?;
            let elapsed = start.elapsed();
            let format = format.or_else(|| Format::from_path(&out)).unwrap_or(Format::Png);
            image_io::save(&out, &image, format)?;
            let pixels = enc.height as f64 * enc.width as f64;
            writeln!(stdout, "size {}x{}", enc.width, enc.height).map_err(report)?;
            writeln!(stdout, "bpp {:.6}", 8.0 * bytes.len() as f64 / pixels).map_err(report)?;
            writeln!(stdout, "file_bytes {}", bytes.len()).map_err(report)?;
            writeln!(stdout, "seconds {:.3}", elapsed.as_secs_f64()).map_err(report)?;
        }
        Command::InitWeights { out, seed, model } => {
            let store = init_weights(&model.config(), seed)?;
            archive::save(&store, &out)?;
            writeln!(stdout, "parameters {}", store.parameter_count()).map_err(report)?;
            writeln!(stdout, "tensors {}", store.len()).map_err(report)?;
        }
        Command::Bench {
            sizes,
            model,
            macs_only,
            out,
        } => {
            if sizes.contains(&0) {
                return Err(CodecError::Usage("sizes must be positive".into()));
            }
            let codec = codec_for(&model)?;
            let rows = bench::run(&codec, &sizes, model.seed, !macs_only)?;
            match out {
                Some(path) => bench::write_csv(&rows, File::create(&path).map_err(CodecError::io(&path))?)?,
                None => bench::write_csv(&rows, &mut stdout)?,
            }
        }
        Command::Analyze {
            dir,
            out,
            model,
            metrics,
            max_offset,
            lambda_index,
        } => {
            if !dir.is_dir() {
                return Err(CodecError::Usage(format!(
                    "image directory {} does not exist",
                    dir.display()
                )));
            }
            let codec = codec_for(&model)?;
            let a = analyze::analyze_dir(&codec, &dir, &out, &metrics, max_offset, lambda_index)?;
            for r in &a.reports {
                let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
                writeln!(
                    stdout,
                    "{}: bpp {:.4} psnr {} kl {} deviation {}",
                    r.name,
                    r.bpp,
                    fmt(r.psnr),
                    fmt(r.kl),
                    fmt(r.deviation_mean)
                )
                .map_err(report)?;
            }
        }
    }
    Ok(())
}

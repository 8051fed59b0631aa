mod bdrate;
mod failure;
mod pipeline;
mod sweep;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inr_codec::metrics::{bd_rate, bpp, mac_per_pixel, psnr};
use inr_codec::rqat::DEFAULT_LAMBDA_GRID;
use inr_codec::train::DEFAULT_LR;
use inr_codec::{decode_image, deserialize, Image};

use failure::{CliResult, Failure};
use pipeline::{format_dims, parse_dims, Dims, EncodeSettings, Init};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "INRCODEC_THREADS";

/// Image codec that stores each picture as the quantized weights of a small
/// sine-activated network.
#[derive(Debug, Parser)]
#[command(name = "inrcodec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress an image into a stream file.
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Layer sizes such as 2x32x32x3.
        #[arg(long, value_parser = parse_dims, default_value = "2x32x32x32x3")]
        dims: Dims,
        /// Bits per quantized parameter.
        #[arg(short, long, default_value_t = 8)]
        q: u32,
        #[arg(long, default_value_t = 5000)]
        iters_fp: usize,
        #[arg(long, default_value_t = 2000)]
        iters_qat: usize,
        /// Distillation weights to try; the best decoded PSNR wins.
        #[arg(long = "lambda", value_delimiter = ',', default_values_t = DEFAULT_LAMBDA_GRID)]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_LR)]
        lr: f64,
        #[arg(long, default_value_t = 30.0)]
        w0: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Init::Fit)]
        init: Init,
        /// Also write the decoded reconstruction here.
        #[arg(long)]
        recon: Option<PathBuf>,
    },
    /// Reconstruct an image from a stream file.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Frequency scale the stream was trained with (not stored in it).
        #[arg(long, default_value_t = 30.0)]
        w0: f64,
        /// Report PSNR against this image.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Encode a grid of images and rate points described by a TOML file.
    Sweep {
        config: PathBuf,
        /// CSV destination; standard output when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Average rate difference of a test curve against an anchor curve.
    Bdrate {
        anchor: PathBuf,
        test: PathBuf,
        /// Use only rows for this image instead of the averages.
        #[arg(long)]
        image: Option<String>,
    },
    /// Multiply-accumulates per decoded pixel, in thousands.
    Macs {
        #[arg(required = true, value_parser = parse_dims)]
        dims: Vec<Dims>,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot configure {n} threads: {e}")))
}

fn data_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Encode { input, output, dims, q, iters_fp, iters_qat, lambdas, lr, w0, seed, init, recon } => {
            let settings = EncodeSettings { dims: dims.0, q, iters_fp, iters_qat, lambdas, lr, w0, seed, init };
            settings.validate()?;
            let image = Image::load(&input)?;
            let out = pipeline::encode(&image, &settings)?;
            std::fs::write(&output, &out.encoded.bytes).map_err(data_error)?;
            if let Some(path) = recon {
                decode_image::<f64>(&out.encoded.bytes, w0)?.save(path)?;
            }
            let (w, h) = (image.width(), image.height());
            println!("dims={} q={q} lambda={}", format_dims(&settings.dims), out.lambda);
            println!("bytes={} bpp={:.4}", out.encoded.bytes.len(), bpp(out.encoded.bytes.len(), w, h)?);
            println!("psnr_fp={:.3} psnr_quant={:.3} seconds={:.1}", out.psnr_fp, out.psnr_quant, out.seconds);
        }
        Command::Decode { input, output, w0, reference } => {
            if !(w0.is_finite() && w0 > 0.0) {
                return Err(Failure::usage("w0 must be positive"));
            }
            let bytes = std::fs::read(&input).map_err(data_error)?;
            let stream = deserialize(&bytes)?;
            let image: Image = decode_image(&bytes, w0)?;
            image.save(&output)?;
            println!(
                "{}x{} dims={} q={} bpp={:.4}",
                stream.width,
                stream.height,
                format_dims(stream.qnet.layer_dims()),
                stream.qnet.q(),
                bpp(bytes.len(), stream.width, stream.height)?
            );
            if let Some(path) = reference {
                let reference = Image::load(path)?;
                println!("psnr={:.3}", psnr(&image, &reference)?);
            }
        }
        Command::Sweep { config, output } => {
            let cfg = sweep::SweepConfig::load(&config)?;
            let sink: Box<dyn Write> = match &output {
                Some(path) => Box::new(std::fs::File::create(path).map_err(data_error)?),
                None => Box::new(std::io::stdout()),
            };
            let mut writer = csv::Writer::from_writer(sink);
            let mut write_err = None;
            let mut write = |row: &sweep::SweepRow| {
                if let Err(e) = writer.serialize(row).and_then(|_| writer.flush().map_err(Into::into)) {
                    write_err.get_or_insert(e);
                }
            };
            let rows = sweep::run(&cfg, &mut write)?;
            for avg in sweep::averages(&rows) {
                write(&avg);
            }
            if let Some(e) = write_err {
                return Err(data_error(e));
            }
        }
        Command::Bdrate { anchor, test, image } => {
            let a = bdrate::read_curve(&anchor, image.as_deref())?;
            let t = bdrate::read_curve(&test, image.as_deref())?;
            println!("bd_rate_percent={:.4}", bd_rate(&a, &t)?);
        }
        Command::Macs { dims } => {
            for Dims(d) in dims {
                println!("{} {:.3}", format_dims(&d), mac_per_pixel(&d));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(failure::EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("inrcodec: {f}");
            f.exit_code()
        }
    }
}

//! The encoder pipeline shared by `encode` and `sweep`.

use std::time::Instant;

use inr_codec::bitstream::EncodedImage;
use inr_codec::quantizer::{MAX_BITS, MIN_BITS};
use inr_codec::rqat::select_lambda;
use inr_codec::siren::validate_layer_dims;
use inr_codec::{decode_image, fit_full_precision, make_grid, psnr, serialize, FitConfig, Image, Network, RqatConfig};

use crate::failure::{CliResult, Failure};

/// How the network that quantization-aware training refines is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Overfit a full-precision network first; it also acts as the teacher.
    Fit,
    /// Start from the seeded random network; no teacher exists.
    Random,
}

#[derive(Clone, Debug)]
pub struct EncodeSettings {
    pub dims: Vec<usize>,
    pub q: u32,
    pub iters_fp: usize,
    pub iters_qat: usize,
    pub lambdas: Vec<f64>,
    pub lr: f64,
    pub w0: f64,
    pub seed: u64,
    pub init: Init,
}

impl EncodeSettings {
    /// Rejects settings that cannot describe a run, before any work starts.
    pub fn validate(&self) -> CliResult<()> {
        validate_layer_dims(&self.dims).map_err(|e| Failure::usage(e.to_string()))?;
        if !(MIN_BITS..=MAX_BITS).contains(&self.q) {
            return Err(Failure::usage(format!("q must be in {MIN_BITS}..={MAX_BITS}, got {}", self.q)));
        }
        if self.iters_qat == 0 {
            return Err(Failure::usage("iters-qat must be positive"));
        }
        if self.init == Init::Fit && self.iters_fp == 0 {
            return Err(Failure::usage("iters-fp must be positive unless --init random"));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Failure::usage("lambdas must be a nonempty list of finite nonnegative values"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || !(self.w0.is_finite() && self.w0 > 0.0) {
            return Err(Failure::usage("lr and w0 must be positive"));
        }
        Ok(())
    }
}

pub struct EncodeOutcome {
    pub encoded: EncodedImage,
    pub psnr_fp: f64,
    /// Measured on the image decoded back from the stream.
    pub psnr_quant: f64,
    pub lambda: f64,
    pub rate_bits: f64,
    pub seconds: f64,
}

pub fn format_dims(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

/// Layer sizes given on the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dims(pub Vec<usize>);

/// Accepts `2x32x32x3` or `2,32,32,3`.
pub fn parse_dims(text: &str) -> Result<Dims, String> {
    let dims = text
        .split(['x', ','])
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad layer size {t:?} in {text:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    validate_layer_dims(&dims).map_err(|e| e.to_string())?;
    Ok(Dims(dims))
}

pub fn encode(image: &Image, settings: &EncodeSettings) -> CliResult<EncodeOutcome> {
    settings.validate()?;
    let start = Instant::now();
    let grid = make_grid(image.width(), image.height())?;
    let (start_net, lambdas): (Network, Vec<f64>) = match settings.init {
        Init::Fit => {
            let cfg = FitConfig {
                layer_dims: settings.dims.clone(),
                w0: settings.w0,
                lr: settings.lr,
                iterations: settings.iters_fp,
                seed: settings.seed,
            };
            (fit_full_precision(image, &cfg)?.network, settings.lambdas.clone())
        }
        // Without a trained teacher the distillation term has nothing to
        // pull towards, so only plain quantization-aware training runs.
        Init::Random => (Network::random(settings.dims.clone(), settings.w0, settings.seed)?, vec![0.0]),
    };
    let fp = Image::from_predictions(image.width(), image.height(), &start_net.forward(&grid)?)?;
    let psnr_fp = psnr(&fp, image)?;

    let base = RqatConfig { lambda: 0.0, q: settings.q, iterations: settings.iters_qat, lr: settings.lr, seed: settings.seed };
    let selection = select_lambda(image, &start_net, &start_net, &base, &lambdas)?;
    let encoded = serialize(&selection.best.qnet, image.width(), image.height())?;
    let decoded: Image = decode_image(&encoded.bytes, settings.w0)?;
    let psnr_quant = psnr(&decoded, image)?;
    Ok(EncodeOutcome {
        psnr_fp,
        psnr_quant,
        lambda: selection.best_lambda,
        rate_bits: selection.best.rate_bits,
        encoded,
        seconds: start.elapsed().as_secs_f64(),
    })
}

//! Rate-distortion sweeps driven by a TOML file.
//!
//! ```toml
//! images = ["kodim23.png"]        # relative to this file
//! iters_fp = 5000
//! iters_qat = 2000
//! lambdas = [0.005, 0.01, 0.05, 0.1]
//! stream_dir = "streams"          # optional; keeps every encoded stream
//!
//! [[points]]
//! dims = [2, 32, 32, 32, 3]
//! q = 8
//! ```

use std::path::{Path, PathBuf};

use inr_codec::metrics::bpp;
use inr_codec::rqat::DEFAULT_LAMBDA_GRID;
use inr_codec::train::DEFAULT_LR;
use inr_codec::Image;
use serde::{Deserialize, Serialize};

use crate::failure::{CliResult, Failure};
use crate::pipeline::{encode, format_dims, EncodeSettings, Init};

pub const AVERAGE_LABEL: &str = "average";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub images: Vec<PathBuf>,
    pub points: Vec<RatePoint>,
    #[serde(default = "defaults::iters_fp")]
    pub iters_fp: usize,
    #[serde(default = "defaults::iters_qat")]
    pub iters_qat: usize,
    #[serde(default = "defaults::lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::w0")]
    pub w0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::init")]
    pub init: Init,
    pub stream_dir: Option<PathBuf>,
}

mod defaults {
    use super::*;

    pub fn iters_fp() -> usize {
        5000
    }
    pub fn iters_qat() -> usize {
        2000
    }
    pub fn lambdas() -> Vec<f64> {
        DEFAULT_LAMBDA_GRID.to_vec()
    }
    pub fn lr() -> f64 {
        DEFAULT_LR
    }
    pub fn w0() -> f64 {
        30.0
    }
    pub fn init() -> Init {
        Init::Fit
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatePoint {
    pub dims: Vec<usize>,
    pub q: u32,
}

/// One CSV line; column order is part of the output contract.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub image: String,
    pub dims: String,
    pub q: u32,
    pub lambda: f64,
    pub bpp_total: f64,
    pub bpp_payload: f64,
    pub psnr_fp: f64,
    pub psnr_quant: f64,
    pub rate_bits_eq3: f64,
    pub seconds: f64,
}

impl SweepConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| Failure::usage(format!("bad config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for img in &mut cfg.images {
            if img.is_relative() {
                *img = base.join(&*img);
            }
        }
        if let Some(dir) = &mut cfg.stream_dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        if cfg.images.is_empty() || cfg.points.is_empty() {
            return Err(Failure::usage("config needs at least one image and one point"));
        }
        for p in &cfg.points {
            cfg.settings(p).validate()?;
        }
        Ok(cfg)
    }

    fn settings(&self, point: &RatePoint) -> EncodeSettings {
        EncodeSettings {
            dims: point.dims.clone(),
            q: point.q,
            iters_fp: self.iters_fp,
            iters_qat: self.iters_qat,
            lambdas: self.lambdas.clone(),
            lr: self.lr,
            w0: self.w0,
            seed: self.seed,
            init: self.init,
        }
    }
}

fn image_label(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Runs every point on every image; `on_row` sees each row as it finishes.
pub fn run(cfg: &SweepConfig, mut on_row: impl FnMut(&SweepRow)) -> CliResult<Vec<SweepRow>> {
    let images = cfg
        .images
        .iter()
        .map(|p| Image::load(p).map_err(|e| Failure::Data(anyhow::anyhow!("{}: {e}", p.display()))))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(dir) = &cfg.stream_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Data(e.into()))?;
    }
    let mut rows = Vec::new();
    for point in &cfg.points {
        let settings = cfg.settings(point);
        for (path, image) in cfg.images.iter().zip(&images) {
            let out = encode(image, &settings)?;
            let (w, h) = (image.width(), image.height());
            let row = SweepRow {
                image: image_label(path),
                dims: format_dims(&point.dims),
                q: point.q,
                lambda: out.lambda,
                bpp_total: bpp(out.encoded.bytes.len(), w, h)?,
                bpp_payload: out.encoded.payload_bits() as f64 / (w * h) as f64,
                psnr_fp: out.psnr_fp,
                psnr_quant: out.psnr_quant,
                rate_bits_eq3: out.rate_bits,
                seconds: out.seconds,
            };
            if let Some(dir) = &cfg.stream_dir {
                let name = format!("{}_{}_q{}.rqat", row.image, row.dims, row.q);
                std::fs::write(dir.join(name), &out.encoded.bytes).map_err(|e| Failure::Data(e.into()))?;
            }
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Per-point means over images, labelled [`AVERAGE_LABEL`].
pub fn averages(rows: &[SweepRow]) -> Vec<SweepRow> {
    let mut keys: Vec<(String, u32)> = Vec::new();
    for r in rows {
        if r.image != AVERAGE_LABEL && !keys.contains(&(r.dims.clone(), r.q)) {
            keys.push((r.dims.clone(), r.q));
        }
    }
    keys.into_iter()
        .map(|(dims, q)| {
            let group: Vec<&SweepRow> =
                rows.iter().filter(|r| r.image != AVERAGE_LABEL && r.dims == dims && r.q == q).collect();
            let mean = |f: fn(&SweepRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / group.len() as f64;
            SweepRow {
                image: AVERAGE_LABEL.into(),
                dims,
                q,
                lambda: mean(|r| r.lambda),
                bpp_total: mean(|r| r.bpp_total),
                bpp_payload: mean(|r| r.bpp_payload),
                psnr_fp: mean(|r| r.psnr_fp),
                psnr_quant: mean(|r| r.psnr_quant),
                rate_bits_eq3: mean(|r| r.rate_bits_eq3),
                seconds: mean(|r| r.seconds),
            }
        })
        .collect()
}

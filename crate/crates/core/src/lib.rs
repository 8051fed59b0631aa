//! Lossy image codec built on coordinate networks.
//!
//! An image is overfitted by a small sine-activated MLP, the network is
//! refined with quantization-aware training, and its integer weights are
//! entropy-coded into a compact stream. Decoding evaluates the restored
//! network on the pixel grid.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the codec uses throughout.

pub mod bitstream;
pub mod entropy_model;
pub mod error;
pub mod half_float;
pub mod metrics;
pub mod optim;
pub mod quantizer;
pub mod range_coder;
pub mod raster;
pub mod rqat;
pub mod scalar;
pub mod siren;
pub mod train;

pub use bitstream::{decode_image, deserialize, serialize, DecodedStream, EncodedImage};
pub use entropy_model::{build_frequency_table, BorderAwareModel, FrequencyTable};
pub use error::{CodecError, Result};
pub use metrics::{bd_rate, bpp, mac_per_pixel, psnr, RdPoint};
pub use quantizer::{dequantize_network, k_of, quantize_network, QuantizedNetwork};
pub use rqat::{rqat_loss, select_lambda, train_rqat, train_rqat_with_teacher, RqatConfig, RqatResult};
pub use scalar::Scalar;
pub use siren::{gradients, make_grid, mse_loss, CoordinateGrid, SirenNetwork};
pub use train::{fit_full_precision, FitConfig, FitResult};

pub type Network = siren::SirenNetwork<f64>;
pub type Image = raster::ImageBuffer<f64>;
pub type Grid = siren::CoordinateGrid<f64>;
pub type Params = siren::ParamSet<f64>;

//! RGB images held as interleaved reals in `[0, 1]`, plus 8-bit file I/O.

use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Interleaved RGB pixels in row-major order, every channel in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer<F> {
    width: usize,
    height: usize,
    pixels: Vec<F>,
}

impl<F: Scalar> ImageBuffer<F> {
    pub fn new(width: usize, height: usize, pixels: Vec<F>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if pixels.len() != width * height * 3 {
            return Err(invalid(format!(
                "expected {} channel values for {width}x{height}, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(**v >= F::zero() && **v <= F::one())) {
            return Err(invalid(format!("channel value {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [F; 3]) -> Result<Self> {
        let pixels = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, pixels)
    }

    /// Clamps arbitrary network predictions into a valid image.
    pub fn from_predictions(width: usize, height: usize, predictions: &[F]) -> Result<Self> {
        let pixels = predictions
            .iter()
            .map(|&v| if v.is_nan() { F::zero() } else { v.max(F::zero()).min(F::one()) })
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let scale = F::lit(255.0);
        let pixels = img.as_raw().iter().map(|&b| F::lit(f64::from(b)) / scale).collect();
        Self::new(img.width() as usize, img.height() as usize, pixels)
    }

    /// Rounds every channel to the nearest of 256 levels.
    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self
            .pixels
            .iter()
            .map(|v| (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// Loads a PNG or binary PPM (any 8-bit layout is converted to RGB).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        Self::from_rgb8(&img)
    }

    /// Writes an 8-bit file; the format follows the extension (`.png`, `.ppm`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = ImageFormat::from_path(path)?;
        if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
            return Err(invalid(format!("unsupported output format for {}", path.display())));
        }
        self.to_rgb8().save_with_format(path, format)?;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn pixels(&self) -> &[F] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [F; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Copies a `w`x`h` window starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(invalid("crop window exceeds image bounds"));
        }
        let mut pixels = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + w * 3]);
        }
        Self::new(w, h, pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_channels() {
        assert!(ImageBuffer::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(ImageBuffer::new(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(ImageBuffer::<f64>::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn predictions_are_clamped() {
        let img = ImageBuffer::from_predictions(1, 1, &[-0.5, 0.25, 3.0]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.25, 1.0]);
    }

    #[test]
    fn eight_bit_round_trip_is_lossless() {
        let raw: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 37 % 256) as u8).collect();
        let src = RgbImage::from_raw(4, 3, raw).unwrap();
        let buf = ImageBuffer::<f64>::from_rgb8(&src).unwrap();
        assert_eq!(buf.to_rgb8(), src);

        let dir = tempfile::tempdir().unwrap();
        for name in ["a.png", "a.ppm"] {
            let path = dir.path().join(name);
            buf.save(&path).unwrap();
            let back = ImageBuffer::<f64>::load(&path).unwrap();
            assert_eq!(back, buf, "{name}");
        }
    }

    #[test]
    fn crop_takes_requested_window() {
        let pixels: Vec<f64> = (0..4 * 4 * 3).map(|i| i as f64 / 100.0).collect();
        let img = ImageBuffer::new(4, 4, pixels).unwrap();
        let c = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.pixel(0, 0), img.pixel(1, 2));
        assert_eq!(c.pixel(1, 1), img.pixel(2, 3));
        assert!(img.crop(3, 3, 2, 2).is_err());
    }
}

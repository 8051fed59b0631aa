//! Sinusoidal coordinate network: parameters, forward evaluation, MSE loss and
//! exact reverse-mode gradients.
//!
//! Hidden layer `l` computes `sin(w0 * (W_l h + b_l))`; the last layer is a
//! plain affine map. Pixels are processed in fixed-size chunks which may run
//! on several threads. Chunk boundaries never depend on the thread count, so
//! every result (including gradient sums, which are reduced chunk by chunk in
//! order) is bit-identical from run to run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, CodecError, Result};
use crate::raster::ImageBuffer;
use crate::scalar::Scalar;

/// Frequency scale used when none is given.
pub const DEFAULT_W0: f64 = 30.0;

const PIXEL_CHUNK: usize = 128;

/// Normalized pixel-centre coordinates, `(x, y)` interleaved in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateGrid<F> {
    width: usize,
    height: usize,
    coords: Vec<F>,
}

fn axis<F: Scalar>(n: usize) -> Vec<F> {
    if n == 1 {
        return vec![F::zero()];
    }
    let span = F::from_usize_lossy(n - 1);
    let two = F::lit(2.0);
    (0..n).map(|i| -F::one() + two * F::from_usize_lossy(i) / span).collect()
}

/// Maps a `width`x`height` raster onto `[-1, 1]^2` with both endpoints included.
pub fn make_grid<F: Scalar>(width: usize, height: usize) -> Result<CoordinateGrid<F>> {
    if width == 0 || height == 0 {
        return Err(invalid(format!("grid dimensions must be positive, got {width}x{height}")));
    }
    let xs = axis::<F>(width);
    let ys = axis::<F>(height);
    let mut coords = Vec::with_capacity(width * height * 2);
    for &y in &ys {
        for &x in &xs {
            coords.push(x);
            coords.push(y);
        }
    }
    Ok(CoordinateGrid { width, height, coords })
}

impl<F: Scalar> CoordinateGrid<F> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_points(&self) -> usize {
        self.width * self.height
    }

    pub fn coords(&self) -> &[F] {
        &self.coords
    }

    pub fn point(&self, index: usize) -> (F, F) {
        (self.coords[2 * index], self.coords[2 * index + 1])
    }
}

/// Weights (row-major, `out x in`) and biases of every layer.
///
/// Also used for gradients and optimizer moments, which share the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<F> {
    pub weights: Vec<Vec<F>>,
    pub biases: Vec<Vec<F>>,
}

impl<F: Scalar> ParamSet<F> {
    pub fn zeros(layer_dims: &[usize]) -> Self {
        let weights = layer_dims.windows(2).map(|d| vec![F::zero(); d[0] * d[1]]).collect();
        let biases = layer_dims.windows(2).map(|d| vec![F::zero(); d[1]]).collect();
        Self { weights, biases }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| vec![F::zero(); w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![F::zero(); b.len()]).collect(),
        }
    }

    /// All weight groups in layer order, then all bias groups in layer order.
    pub fn groups(&self) -> impl Iterator<Item = &[F]> {
        self.weights.iter().chain(self.biases.iter()).map(Vec::as_slice)
    }

    pub fn groups_mut(&mut self) -> impl Iterator<Item = &mut Vec<F>> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    pub fn values(&self) -> impl Iterator<Item = F> + '_ {
        self.groups().flat_map(|g| g.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.groups().map(<[F]>::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn add_assign(&mut self, other: &Self) {
        for (dst, src) in self.groups_mut().zip(other.groups()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }
}

/// Full-precision sine-activated MLP mapping `(x, y)` to RGB.
#[derive(Clone, Debug, PartialEq)]
pub struct SirenNetwork<F> {
    layer_dims: Vec<usize>,
    params: ParamSet<F>,
    w0: F,
}

/// Checks the `[2, ..., 3]` shape contract.
pub fn validate_layer_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(invalid("layer_dims needs at least an input and an output size"));
    }
    if layer_dims[0] != 2 || layer_dims[layer_dims.len() - 1] != 3 {
        return Err(invalid(format!(
            "layer_dims must start at 2 and end at 3, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(invalid("layer sizes must be positive"));
    }
    Ok(())
}

impl<F: Scalar> SirenNetwork<F> {
    pub fn new(layer_dims: Vec<usize>, params: ParamSet<F>, w0: F) -> Result<Self> {
        validate_layer_dims(&layer_dims)?;
        if !(w0.is_finite() && w0 > F::zero()) {
            return Err(invalid(format!("w0 must be positive and finite, got {w0}")));
        }
        let n_layers = layer_dims.len() - 1;
        if params.weights.len() != n_layers || params.biases.len() != n_layers {
            return Err(invalid("parameter layer count does not match layer_dims"));
        }
        for (l, d) in layer_dims.windows(2).enumerate() {
            if params.weights[l].len() != d[0] * d[1] || params.biases[l].len() != d[1] {
                return Err(invalid(format!("layer {l} parameter shape does not match {d:?}")));
            }
        }
        if params.values().any(|v| !v.is_finite()) {
            return Err(invalid("network parameters must be finite"));
        }
        Ok(Self { layer_dims, params, w0 })
    }

    pub fn zeros(layer_dims: Vec<usize>, w0: F) -> Result<Self> {
        validate_layer_dims(&layer_dims)?;
        let params = ParamSet::zeros(&layer_dims);
        Self::new(layer_dims, params, w0)
    }

    /// Seeded sine-network initialization.
    ///
    /// First layer: `U(-1/fan_in, 1/fan_in)`. Later layers:
    /// `U(-sqrt(6/fan_in)/w0, sqrt(6/fan_in)/w0)`. Biases use their layer's
    /// weight bound.
    pub fn random(layer_dims: Vec<usize>, w0: F, seed: u64) -> Result<Self> {
        validate_layer_dims(&layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w0_f = w0.to_f64_lossy();
        let mut params = ParamSet::zeros(&layer_dims);
        for (l, d) in layer_dims.windows(2).enumerate() {
            let fan_in = d[0] as f64;
            let bound = if l == 0 { 1.0 / fan_in } else { (6.0 / fan_in).sqrt() / w0_f };
            for v in params.weights[l].iter_mut().chain(params.biases[l].iter_mut()) {
                *v = F::lit(rng.gen_range(-bound..=bound));
            }
        }
        Self::new(layer_dims, params, w0)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Number of affine layers (weight matrices).
    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn w0(&self) -> F {
        self.w0
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn into_params(self) -> ParamSet<F> {
        self.params
    }

    /// Replaces the parameters, keeping dims and `w0`.
    pub fn with_params(&self, params: ParamSet<F>) -> Result<Self> {
        Self::new(self.layer_dims.clone(), params, self.w0)
    }

    pub fn cast<G: Scalar>(&self) -> SirenNetwork<G> {
        let conv = |g: &Vec<F>| g.iter().map(|v| G::lit(v.to_f64_lossy())).collect();
        SirenNetwork {
            layer_dims: self.layer_dims.clone(),
            params: ParamSet {
                weights: self.params.weights.iter().map(conv).collect(),
                biases: self.params.biases.iter().map(conv).collect(),
            },
            w0: G::lit(self.w0.to_f64_lossy()),
        }
    }

    /// Evaluates the network at every grid point; returns `3 * n_points`
    /// unclamped values.
    pub fn forward(&self, grid: &CoordinateGrid<F>) -> Result<Vec<F>> {
        let chunks: Vec<Result<Vec<F>>> = grid
            .coords
            .par_chunks(2 * PIXEL_CHUNK)
            .map(|coords| self.run_chunk(coords, false).map(|t| t.output))
            .collect();
        let mut out = Vec::with_capacity(grid.n_points() * 3);
        for chunk in chunks {
            out.extend(chunk?);
        }
        Ok(out)
    }

    fn run_chunk(&self, coords: &[F], keep: bool) -> Result<ChunkTrace<F>> {
        let n = coords.len() / 2;
        let last = self.n_layers() - 1;
        let mut inputs = Vec::new();
        let mut phases = Vec::new();
        let mut h = coords.to_vec();
        for (l, d) in self.layer_dims.windows(2).enumerate() {
            let (n_in, n_out) = (d[0], d[1]);
            let z = affine(&h, n, n_in, n_out, &self.params.weights[l], &self.params.biases[l]);
            if l == last {
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(non_finite(l, "output"));
                }
                if keep {
                    inputs.push(h);
                }
                return Ok(ChunkTrace { inputs, phases, output: z });
            }
            let phase: Vec<F> = z.into_iter().map(|v| self.w0 * v).collect();
            if phase.iter().any(|v| !v.is_finite()) {
                return Err(non_finite(l, "pre-activation"));
            }
            let next = phase.iter().map(|p| p.sin()).collect();
            if keep {
                inputs.push(std::mem::replace(&mut h, next));
                phases.push(phase);
            } else {
                h = next;
            }
        }
        unreachable!("layer_dims has at least one layer")
    }

    fn backward_chunk(&self, trace: &ChunkTrace<F>, d_out: Vec<F>) -> ParamSet<F> {
        let n = trace.output.len() / 3;
        let mut grads = self.params.zeros_like();
        let mut delta = d_out;
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let h = &trace.inputs[l];
            let w = &self.params.weights[l];
            let dw = &mut grads.weights[l];
            let db = &mut grads.biases[l];
            for p in 0..n {
                let hp = &h[p * n_in..(p + 1) * n_in];
                for o in 0..n_out {
                    let d = delta[p * n_out + o];
                    db[o] += d;
                    for (g, &x) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(hp) {
                        *g += d * x;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let phase = &trace.phases[l - 1];
            let mut prev = vec![F::zero(); n * n_in];
            for p in 0..n {
                let row = &mut prev[p * n_in..(p + 1) * n_in];
                for o in 0..n_out {
                    let d = delta[p * n_out + o];
                    for (g, &wv) in row.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *g += d * wv;
                    }
                }
                for (g, &ph) in row.iter_mut().zip(&phase[p * n_in..(p + 1) * n_in]) {
                    *g = *g * self.w0 * ph.cos();
                }
            }
            delta = prev;
        }
        grads
    }
}

struct ChunkTrace<F> {
    /// Input activations of every layer.
    inputs: Vec<Vec<F>>,
    /// `w0 * z` of every hidden layer.
    phases: Vec<Vec<F>>,
    output: Vec<F>,
}

fn non_finite(layer: usize, what: &str) -> CodecError {
    CodecError::Numeric { layer, detail: format!("non-finite {what}") }
}

/// `z[p] = b + W h[p]` for each of `n` rows, accumulated input by input.
fn affine<F: Scalar>(h: &[F], n: usize, n_in: usize, n_out: usize, w: &[F], b: &[F]) -> Vec<F> {
    let mut wt = vec![F::zero(); n_in * n_out];
    for o in 0..n_out {
        for i in 0..n_in {
            wt[i * n_out + o] = w[o * n_in + i];
        }
    }
    let mut z = Vec::with_capacity(n * n_out);
    for p in 0..n {
        z.extend_from_slice(b);
        let row = &mut z[p * n_out..];
        for (i, &x) in h[p * n_in..(p + 1) * n_in].iter().enumerate() {
            for (acc, &wv) in row.iter_mut().zip(&wt[i * n_out..(i + 1) * n_out]) {
                *acc += x * wv;
            }
        }
    }
    z
}

/// Mean of squared differences over all elements.
pub fn mse<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    if a.len() != b.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(invalid("mse of empty input"));
    }
    let sum = a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    Ok(sum / F::from_usize_lossy(a.len()))
}

/// Per-pixel MSE averaged over the image: sum of squared channel errors over
/// `W * H * 3`.
pub fn mse_loss<F: Scalar>(predictions: &[F], image: &ImageBuffer<F>) -> Result<F> {
    if predictions.len() != image.pixels().len() {
        return Err(invalid(format!(
            "{} predictions for a {}x{} image",
            predictions.len() / 3,
            image.width(),
            image.height()
        )));
    }
    mse(predictions, image.pixels())
}

/// Loss, predictions and parameter gradients from one forward/backward pass.
#[derive(Clone, Debug)]
pub struct Evaluation<F> {
    pub loss: F,
    pub predictions: Vec<F>,
    pub grads: ParamSet<F>,
}

/// Gradient of `mse(pred, image) + lambda * mse(pred, extra_target)`.
///
/// With `lambda == 0` the second term is skipped entirely and `extra_target`
/// is ignored.
pub fn gradients<F: Scalar>(
    net: &SirenNetwork<F>,
    grid: &CoordinateGrid<F>,
    image: &ImageBuffer<F>,
    extra_target: Option<&[F]>,
    lambda: F,
) -> Result<Evaluation<F>> {
    if grid.width() != image.width() || grid.height() != image.height() {
        return Err(invalid("grid and image dimensions differ"));
    }
    if !(lambda >= F::zero() && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let regularizer = if lambda > F::zero() {
        let target = extra_target.ok_or_else(|| invalid("lambda > 0 requires an extra target"))?;
        if target.len() != image.pixels().len() {
            return Err(invalid("extra target shape does not match the image"));
        }
        Some(target)
    } else {
        None
    };

    let scale = F::lit(2.0) / F::from_usize_lossy(image.pixels().len());
    let chunk_len = 3 * PIXEL_CHUNK;
    let parts: Vec<Result<(Vec<F>, ParamSet<F>)>> = grid
        .coords
        .par_chunks(2 * PIXEL_CHUNK)
        .enumerate()
        .map(|(c, coords)| {
            let trace = net.run_chunk(coords, true)?;
            let start = c * chunk_len;
            let target = &image.pixels()[start..start + trace.output.len()];
            let d_out = trace
                .output
                .iter()
                .enumerate()
                .map(|(j, &y)| {
                    let mut r = y - target[j];
                    if let Some(extra) = regularizer {
                        r += lambda * (y - extra[start + j]);
                    }
                    scale * r
                })
                .collect();
            let grads = net.backward_chunk(&trace, d_out);
            Ok((trace.output, grads))
        })
        .collect();

    let mut predictions = Vec::with_capacity(image.pixels().len());
    let mut grads = net.params.zeros_like();
    for part in parts {
        let (out, g) = part?;
        predictions.extend(out);
        grads.add_assign(&g);
    }
    for (l, (w, b)) in grads.weights.iter().zip(&grads.biases).enumerate() {
        if w.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(non_finite(l, "gradient"));
        }
    }
    let mut loss = mse_loss(&predictions, image)?;
    if let Some(extra) = regularizer {
        loss += lambda * mse(&predictions, extra)?;
    }
    Ok(Evaluation { loss, predictions, grads })
}

//! Regularized quantization-aware training.
//!
//! Full-precision shadow parameters are fake-quantized at every step (scales
//! recomputed each time), the quantized network is evaluated, and the loss
//!
//! ```text
//! mse(image, f_quant) + lambda * mse(f_teacher, f_quant)
//! ```
//!
//! is back-propagated straight through the quantizer onto the shadow
//! parameters. The teacher predictions come from a fixed full-precision
//! network and are computed once.

use rayon::prelude::*;

use crate::entropy_model::BorderAwareModel;
use crate::error::{invalid, CodecError, Result};
use crate::metrics::psnr;
use crate::optim::AdamState;
use crate::quantizer::{dequantize_network, fake_quantize_params, k_of, quantize_network, QuantizedNetwork};
use crate::raster::ImageBuffer;
use crate::scalar::Scalar;
use crate::siren::{gradients, make_grid, mse, mse_loss, CoordinateGrid, Evaluation, ParamSet, SirenNetwork};
use crate::train::{diverged, DEFAULT_LR};

/// Regularization weights tried when no grid is given.
pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.005, 0.05, 0.01, 0.1];

#[derive(Clone, Debug, PartialEq)]
pub struct RqatConfig {
    pub lambda: f64,
    pub q: u32,
    pub iterations: usize,
    pub lr: f64,
    /// Seed for a random starting network; unused when training starts from
    /// a given network.
    pub seed: u64,
}

impl RqatConfig {
    pub fn new(q: u32, lambda: f64, iterations: usize) -> Self {
        Self { lambda, q, iterations, lr: DEFAULT_LR, seed: 0 }
    }

    fn validate(&self) -> Result<()> {
        k_of(self.q)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.iterations == 0 {
            return Err(invalid("quantization-aware training needs at least one iteration"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RqatResult<F> {
    pub qnet: QuantizedNetwork,
    /// Loss of the returned quantized network.
    pub final_loss: F,
    pub final_psnr_quantized: f64,
    /// Loss seen by each step's forward pass, before that step's update.
    pub loss_trace: Vec<F>,
    /// Unclamped predictions of the returned quantized network.
    pub predictions: Vec<F>,
    /// Ideal code length of the symbols under the border-aware model.
    pub rate_bits: f64,
    pub lambda: f64,
}

/// `mse(pred_quantized, image) + lambda * mse(pred_quantized, pred_full_precision)`.
///
/// The second term is not evaluated at all when `lambda == 0`.
pub fn rqat_loss<F: Scalar>(
    image: &ImageBuffer<F>,
    pred_quantized: &[F],
    pred_full_precision: &[F],
    lambda: F,
) -> Result<F> {
    if pred_full_precision.len() != pred_quantized.len() {
        return Err(invalid("full-precision and quantized predictions differ in length"));
    }
    if !(lambda >= F::zero()) {
        return Err(invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    let distortion = mse_loss(pred_quantized, image)?;
    if lambda == F::zero() {
        return Ok(distortion);
    }
    Ok(distortion + lambda * mse(pred_quantized, pred_full_precision)?)
}

/// Step-by-step training state.
pub struct RqatSession<'a, F> {
    image: &'a ImageBuffer<F>,
    grid: CoordinateGrid<F>,
    teacher: Vec<F>,
    template: SirenNetwork<F>,
    shadow: ParamSet<F>,
    adam: AdamState<F>,
    cfg: RqatConfig,
    loss_trace: Vec<F>,
}

impl<'a, F: Scalar> RqatSession<'a, F> {
    /// Starts from `init`, regularizing toward `teacher`'s predictions.
    pub fn new(
        image: &'a ImageBuffer<F>,
        init: &SirenNetwork<F>,
        teacher: &SirenNetwork<F>,
        cfg: RqatConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if init.layer_dims() != teacher.layer_dims() {
            return Err(invalid("initial and teacher networks differ in shape"));
        }
        let grid = make_grid(image.width(), image.height())?;
        let teacher = teacher.forward(&grid)?;
        Ok(Self {
            image,
            grid,
            teacher,
            template: init.clone(),
            shadow: init.params().clone(),
            adam: AdamState::new(init.params()),
            loss_trace: Vec::with_capacity(cfg.iterations),
            cfg,
        })
    }

    pub fn teacher_predictions(&self) -> &[F] {
        &self.teacher
    }

    pub fn shadow(&self) -> &ParamSet<F> {
        &self.shadow
    }

    pub fn loss_trace(&self) -> &[F] {
        &self.loss_trace
    }

    fn lambda(&self) -> F {
        F::lit(self.cfg.lambda)
    }

    /// Loss and gradients at the fake-quantized point. The gradient is the
    /// straight-through estimate for the shadow parameters.
    pub fn evaluate(&self) -> Result<Evaluation<F>> {
        let quantized = self.template.with_params(fake_quantize_params(&self.shadow, self.cfg.q)?)?;
        let regularizer = (self.cfg.lambda > 0.0).then_some(self.teacher.as_slice());
        gradients(&quantized, &self.grid, self.image, regularizer, self.lambda())
    }

    /// One optimization step; returns the loss before the update.
    pub fn step(&mut self) -> Result<F> {
        let iteration = self.loss_trace.len();
        let eval = self.evaluate().map_err(|e| diverged(iteration, e))?;
        if !eval.loss.is_finite() {
            return Err(CodecError::Training { iteration, detail: "loss is not finite".into() });
        }
        self.adam
            .step(&mut self.shadow, &eval.grads, F::lit(self.cfg.lr))
            .map_err(|e| diverged(iteration, e))?;
        if self.shadow.values().any(|v| !v.is_finite()) {
            return Err(CodecError::Training { iteration, detail: "shadow parameters became non-finite".into() });
        }
        self.loss_trace.push(eval.loss);
        Ok(eval.loss)
    }

    /// Quantizes the current shadow parameters and scores the result.
    pub fn finish(self) -> Result<RqatResult<F>> {
        let lambda = self.lambda();
        let shadow_net = self.template.with_params(self.shadow)?;
        let qnet = quantize_network(&shadow_net, self.cfg.q)?;
        let decoded = dequantize_network(&qnet, self.template.w0())?;
        let predictions = decoded.forward(&self.grid)?;
        let final_loss = rqat_loss(self.image, &predictions, &self.teacher, lambda)?;
        let reconstruction = ImageBuffer::from_predictions(self.image.width(), self.image.height(), &predictions)?;
        let final_psnr_quantized = psnr(&reconstruction, self.image)?;
        let symbols = qnet.symbol_stream();
        let rate_bits = BorderAwareModel::estimate(&symbols, qnet.n_layers(), qnet.k())?.rate(&symbols)?;
        Ok(RqatResult {
            qnet,
            final_loss,
            final_psnr_quantized,
            loss_trace: self.loss_trace,
            predictions,
            rate_bits,
            lambda: self.cfg.lambda,
        })
    }
}

/// Trains with `init` serving as both the starting point and the fixed
/// full-precision teacher.
pub fn train_rqat<F: Scalar>(image: &ImageBuffer<F>, init: &SirenNetwork<F>, cfg: &RqatConfig) -> Result<RqatResult<F>> {
    train_rqat_with_teacher(image, init, init, cfg)
}

pub fn train_rqat_with_teacher<F: Scalar>(
    image: &ImageBuffer<F>,
    init: &SirenNetwork<F>,
    teacher: &SirenNetwork<F>,
    cfg: &RqatConfig,
) -> Result<RqatResult<F>> {
    let mut session = RqatSession::new(image, init, teacher, cfg.clone())?;
    for _ in 0..cfg.iterations {
        session.step()?;
    }
    session.finish()
}

/// Outcome of a lambda sweep.
#[derive(Clone, Debug)]
pub struct LambdaSelection<F> {
    pub best_lambda: f64,
    pub best: RqatResult<F>,
    /// `(lambda, quantized PSNR, rate bits)` for every distinct lambda, ascending.
    pub trials: Vec<(f64, f64, f64)>,
}

/// Runs one training per distinct lambda (in parallel) and keeps the highest
/// quantized PSNR, preferring the smaller lambda on ties. `base.lambda` is
/// ignored.
pub fn select_lambda<F: Scalar>(
    image: &ImageBuffer<F>,
    init: &SirenNetwork<F>,
    teacher: &SirenNetwork<F>,
    base: &RqatConfig,
    lambdas: &[f64],
) -> Result<LambdaSelection<F>> {
    let mut grid: Vec<f64> = if lambdas.is_empty() { DEFAULT_LAMBDA_GRID.to_vec() } else { lambdas.to_vec() };
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let runs: Vec<Result<RqatResult<F>>> = grid
        .par_iter()
        .map(|&lambda| train_rqat_with_teacher(image, init, teacher, &RqatConfig { lambda, ..base.clone() }))
        .collect();
    let mut best: Option<RqatResult<F>> = None;
    let mut trials = Vec::with_capacity(runs.len());
    for run in runs {
        let run = run?;
        trials.push((run.lambda, run.final_psnr_quantized, run.rate_bits));
        if best.as_ref().map_or(true, |b| run.final_psnr_quantized > b.final_psnr_quantized) {
            best = Some(run);
        }
    }
    let best = best.expect("grid is nonempty");
    Ok(LambdaSelection { best_lambda: best.lambda, best, trials })
}

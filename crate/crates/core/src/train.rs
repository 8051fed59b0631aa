//! Full-precision overfitting of a network to a single image.

use crate::error::{invalid, CodecError, Result};
use crate::optim::AdamState;
use crate::raster::ImageBuffer;
use crate::scalar::Scalar;
use crate::siren::{gradients, make_grid, mse_loss, SirenNetwork, DEFAULT_W0};

/// Learning rate used by every training loop unless overridden.
pub const DEFAULT_LR: f64 = 2e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub layer_dims: Vec<usize>,
    pub w0: f64,
    pub lr: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(layer_dims: Vec<usize>, iterations: usize, seed: u64) -> Self {
        Self { layer_dims, w0: DEFAULT_W0, lr: DEFAULT_LR, iterations, seed }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult<F> {
    pub network: SirenNetwork<F>,
    /// Loss seen by each step's forward pass, before that step's update.
    pub loss_trace: Vec<F>,
    /// Loss of the returned network.
    pub final_loss: F,
}

/// Full-batch Adam on the per-pixel MSE, starting from a seeded random init.
pub fn fit_full_precision<F: Scalar>(image: &ImageBuffer<F>, config: &FitConfig) -> Result<FitResult<F>> {
    if config.iterations == 0 {
        return Err(invalid("fit needs at least one iteration"));
    }
    let init = SirenNetwork::random(config.layer_dims.clone(), F::lit(config.w0), config.seed)?;
    fit_from(image, init, config.lr, config.iterations)
}

/// Continues full-precision training from an existing network.
pub fn fit_from<F: Scalar>(
    image: &ImageBuffer<F>,
    init: SirenNetwork<F>,
    lr: f64,
    iterations: usize,
) -> Result<FitResult<F>> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(invalid(format!("learning rate must be positive, got {lr}")));
    }
    let grid = make_grid::<F>(image.width(), image.height())?;
    let lr = F::lit(lr);
    let mut net = init;
    let mut params = net.params().clone();
    let mut adam = AdamState::new(&params);
    let mut loss_trace = Vec::with_capacity(iterations);
    for iteration in 0..iterations {
        let eval = gradients(&net, &grid, image, None, F::zero()).map_err(|e| diverged(iteration, e))?;
        if !eval.loss.is_finite() {
            return Err(CodecError::Training { iteration, detail: "loss is not finite".into() });
        }
        loss_trace.push(eval.loss);
        adam.step(&mut params, &eval.grads, lr).map_err(|e| diverged(iteration, e))?;
        net = net.with_params(params.clone()).map_err(|_| CodecError::Training {
            iteration,
            detail: "parameters became non-finite".into(),
        })?;
    }
    let final_loss = mse_loss(&net.forward(&grid)?, image)?;
    Ok(FitResult { network: net, loss_trace, final_loss })
}

pub(crate) fn diverged(iteration: usize, err: CodecError) -> CodecError {
    match err {
        CodecError::Numeric { layer, detail } => {
            CodecError::Training { iteration, detail: format!("layer {layer}: {detail}") }
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    #[test]
    fn constant_image_is_fit_precisely() {
        let img = ImageBuffer::filled(8, 8, [0.2, 0.5, 0.8]).unwrap();
        let cfg = FitConfig { lr: 1e-3, ..FitConfig::new(vec![2, 16, 16, 3], 500, 11) };
        let fit = fit_full_precision(&img, &cfg).unwrap();
        assert!(fit.final_loss <= fit.loss_trace[0]);
        let grid = make_grid(8, 8).unwrap();
        let out = ImageBuffer::from_predictions(8, 8, &fit.network.forward(&grid).unwrap()).unwrap();
        let p = psnr(&out, &img).unwrap();
        assert!(p >= 40.0, "psnr {p}");
    }

    #[test]
    fn loss_keeps_falling_late_in_training() {
        let img = ImageBuffer::filled(6, 6, [0.9, 0.1, 0.4]).unwrap();
        let fit = fit_full_precision(&img, &FitConfig::new(vec![2, 16, 16, 3], 800, 4)).unwrap();
        let trace = &fit.loss_trace;
        for t in 400..trace.len() - 100 {
            assert!(trace[t + 100] <= trace[t] + 1e-6, "window at {t}");
        }
    }

    #[test]
    fn fit_is_reproducible() {
        let img = ImageBuffer::filled(5, 4, [0.3, 0.3, 0.6]).unwrap();
        let cfg = FitConfig::new(vec![2, 8, 3], 30, 77);
        let a = fit_full_precision(&img, &cfg).unwrap();
        let b = fit_full_precision(&img, &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn zero_iterations_rejected() {
        let img = ImageBuffer::filled(2, 2, [0.3; 3]).unwrap();
        assert!(fit_full_precision(&img, &FitConfig::new(vec![2, 4, 3], 0, 1)).is_err());
    }

    #[test]
    fn divergence_reports_iteration() {
        let img = ImageBuffer::filled(4, 4, [0.3; 3]).unwrap();
        let init = SirenNetwork::<f64>::random(vec![2, 4, 3], 30.0, 1).unwrap();
        let err = fit_from(&img, init, 1e300, 5).unwrap_err();
        assert!(matches!(err, CodecError::Training { .. }), "{err}");
    }
}

//! Reverse-mode gradients against central finite differences.

use inr_codec::siren::{gradients, make_grid, ParamSet, SirenNetwork};
use inr_codec::{Image, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;
/// Below this size both derivatives count as zero.
const ABS_FLOOR: f64 = 1e-9;

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(w, h, (0..w * h * 3).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn loss_at(net: &Network, params: ParamSet<f64>, image: &Image, extra: Option<&[f64]>, lambda: f64) -> f64 {
    let grid = make_grid(image.width(), image.height()).unwrap();
    let net = net.with_params(params).unwrap();
    gradients(&net, &grid, image, extra, lambda).unwrap().loss
}

fn check(seed: u64, lambda: f64) -> (usize, f64) {
    let image = random_image(5, 4, 100 + seed);
    let grid = make_grid(5, 4).unwrap();
    let net = SirenNetwork::<f64>::random(vec![2, 8, 8, 3], 30.0, seed).unwrap();
    let extra: Vec<f64> = random_image(5, 4, 200 + seed).pixels().to_vec();
    let extra = (lambda > 0.0).then_some(extra.as_slice());
    let analytic = gradients(&net, &grid, &image, extra, lambda).unwrap().grads;

    let mut checked = 0;
    let mut worst = 0.0f64;
    let base = net.params().clone();
    let n_groups = base.weights.len();
    for g in 0..2 * n_groups {
        let len = if g < n_groups { base.weights[g].len() } else { base.biases[g - n_groups].len() };
        for i in 0..len {
            let shifted = |delta: f64| {
                let mut p = base.clone();
                let slot = if g < n_groups { &mut p.weights[g][i] } else { &mut p.biases[g - n_groups][i] };
                *slot += delta;
                p
            };
            let fd = (loss_at(&net, shifted(STEP), &image, extra, lambda)
                - loss_at(&net, shifted(-STEP), &image, extra, lambda))
                / (2.0 * STEP);
            let an = if g < n_groups { analytic.weights[g][i] } else { analytic.biases[g - n_groups][i] };
            let scale = fd.abs().max(an.abs());
            if scale > ABS_FLOOR {
                let rel = (fd - an).abs() / scale;
                assert!(rel <= REL_TOL, "seed {seed} group {g} index {i}: fd {fd} vs analytic {an}");
                worst = worst.max(rel);
            }
            checked += 1;
        }
    }
    (checked, worst)
}

#[test]
fn every_parameter_matches_finite_differences() {
    for seed in 0..5 {
        let (checked, _) = check(seed, 0.0);
        assert_eq!(checked, 2 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
    }
}

#[test]
fn distillation_term_matches_finite_differences() {
    check(11, 0.1);
}

#[test]
fn f32_gradients_track_f64() {
    let image = random_image(6, 6, 3);
    let net = SirenNetwork::<f64>::random(vec![2, 8, 3], 30.0, 3).unwrap();
    let g64 = gradients(&net, &make_grid(6, 6).unwrap(), &image, None, 0.0).unwrap();
    let img32 = inr_codec::raster::ImageBuffer::<f32>::new(6, 6, image.pixels().iter().map(|&v| v as f32).collect())
        .unwrap();
    let g32 = gradients(&net.cast::<f32>(), &make_grid(6, 6).unwrap(), &img32, None, 0.0).unwrap();
    for (a, b) in g64.grads.values().zip(g32.grads.values()) {
        assert!((a - f64::from(b)).abs() <= 1e-3 * a.abs().max(1e-2), "{a} vs {b}");
    }
}

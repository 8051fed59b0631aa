//! Adam with bias correction.

use crate::error::{CodecError, Result};
use crate::scalar::Scalar;
use crate::siren::ParamSet;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AdamState<F> {
    m: ParamSet<F>,
    v: ParamSet<F>,
    step: u64,
}

impl<F: Scalar> AdamState<F> {
    /// Zero moments shaped like `params`.
    pub fn new(params: &ParamSet<F>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. The parameters are left untouched when an
    /// error is returned.
    pub fn step(&mut self, params: &mut ParamSet<F>, grads: &ParamSet<F>, lr: F) -> Result<()> {
        for (l, g) in grads.groups().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                let n_layers = grads.weights.len();
                return Err(CodecError::Numeric {
                    layer: l % n_layers,
                    detail: "non-finite gradient passed to optimizer".into(),
                });
            }
        }
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let (b1, b2, eps) = (F::lit(BETA1), F::lit(BETA2), F::lit(EPSILON));
        let one = F::one();
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        let groups = params.groups_mut().zip(grads.groups()).zip(self.m.groups_mut().zip(self.v.groups_mut()));
        for ((p, g), (m, v)) in groups {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

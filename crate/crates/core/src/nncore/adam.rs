use serde::{Deserialize, Serialize};

use super::param::{Param, Parameterized};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self::with_lr(1e-3)
    }
}

/// One bias-corrected Adam step on a single tensor; `step` counts from 1.
pub fn adam_update<T: Real>(p: &mut Param<T>, h: &AdamHyper, step: u64) {
    let b1 = T::lit(h.beta1);
    let b2 = T::lit(h.beta2);
    let one = T::one();
    let c1 = one - T::lit(h.beta1.powf(step as f64));
    let c2 = one - T::lit(h.beta2.powf(step as f64));
    let lr = T::lit(h.lr);
    let eps = T::lit(h.eps);
    ndarray::Zip::from(&mut p.value)
        .and(&p.grad)
        .and(&mut p.m)
        .and(&mut p.v)
        .for_each(|w, &g, m, v| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        });
}

/// Adam over every tensor of a model, with the step counter kept here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub hyper: AdamHyper,
    pub step: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            hyper: AdamHyper::with_lr(lr),
            step: 0,
        }
    }

    pub fn apply<T: Real>(&mut self, model: &mut (impl Parameterized<T> + ?Sized)) {
        self.step += 1;
        let (h, t) = (self.hyper, self.step);
        model.visit_mut(&mut |_, p| adam_update(p, &h, t));
    }
}

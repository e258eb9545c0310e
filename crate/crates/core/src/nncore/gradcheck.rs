//! Central finite-difference checks for the hand-written backward passes.

use ndarray::Array2;

use super::param::{Param, Parameterized};
use crate::numerics::RngStream;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor; below this magnitude gradients are compared absolutely.
const REL_FLOOR: f64 = 1e-2;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.normal())
}

fn nudge<M: Parameterized<f64> + ?Sized>(model: &mut M, index: usize, delta: f64) {
    let mut offset = 0;
    model.visit_mut(&mut |_, p: &mut Param<f64>| {
        let n = p.len();
        if index >= offset && index < offset + n {
            let slot = p.value.iter_mut().nth(index - offset).expect("in range");
            *slot += delta;
        }
        offset += n;
    });
}

/// Largest relative error between the gradients currently stored in `model`
/// and central differences of `loss`.
pub fn check_params<M: Parameterized<f64> + ?Sized>(
    model: &mut M,
    loss: impl Fn(&M) -> f64,
) -> f64 {
    let mut analytic = Vec::new();
    model.visit(&mut |_, p| analytic.extend(p.grad.iter().copied()));
    let mut worst = 0.0f64;
    for (k, &g) in analytic.iter().enumerate() {
        nudge(model, k, FD_STEP);
        let up = loss(model);
        nudge(model, k, -2.0 * FD_STEP);
        let down = loss(model);
        nudge(model, k, FD_STEP);
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(g, numeric));
    }
    worst
}

/// Same check for the gradient with respect to an input matrix.
pub fn check_input(
    x: &Array2<f64>,
    analytic: &Array2<f64>,
    loss: impl Fn(&Array2<f64>) -> f64,
) -> f64 {
    assert_eq!(x.dim(), analytic.dim(), "gradient shape");
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for (idx, &g) in analytic.indexed_iter() {
        let orig = probe[idx];
        probe[idx] = orig + FD_STEP;
        let up = loss(&probe);
        probe[idx] = orig - FD_STEP;
        let down = loss(&probe);
        probe[idx] = orig;
        worst = worst.max(relative_error(g, (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

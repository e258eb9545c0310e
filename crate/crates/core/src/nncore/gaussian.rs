//! Tanh-squashed diagonal Gaussian policy head.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::scalar::Real;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const TANH_EPS: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GaussianCache<T: Real> {
    noise: Array2<T>,
    std: Array2<T>,
    pre_squash: Array2<T>,
    action: Array2<T>,
    clamped: Array2<bool>,
}

impl<T: Real> GaussianCache<T> {
    pub fn pre_squash(&self) -> &Array2<T> {
        &self.pre_squash
    }
}

#[derive(Clone, Debug)]
pub struct PolicySample<T: Real> {
    /// `tanh(mean + std * noise)`, strictly inside `(-1, 1)` up to rounding.
    pub action: Array2<T>,
    /// Per-row log-density of `action`.
    pub log_prob: Array1<T>,
    pub cache: GaussianCache<T>,
}

pub fn normal_matrix<T: Real>(rows: usize, cols: usize, rng: &mut RngStream) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| T::lit(rng.normal()))
}

/// Reparameterized sample with explicit standard-normal `noise`.
pub fn gaussian_head_sample<T: Real>(
    mean: &Array2<T>,
    log_std_raw: &Array2<T>,
    noise: &Array2<T>,
) -> Result<PolicySample<T>> {
    if mean.dim() != log_std_raw.dim() || mean.dim() != noise.dim() {
        return Err(Error::shape(
            "gaussian head",
            format!("{:?}", mean.dim()),
            format!("{:?}/{:?}", log_std_raw.dim(), noise.dim()),
        ));
    }
    let lo = T::lit(LOG_STD_MIN);
    let hi = T::lit(LOG_STD_MAX);
    let clamped = log_std_raw.mapv(|v| v < lo || v > hi);
    let log_std = log_std_raw.mapv(|v| v.max(lo).min(hi));
    let std = log_std.mapv(T::exp);
    let pre_squash = mean + &(&std * noise);
    let action = pre_squash.mapv(T::tanh);

    let half_log_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let half = T::lit(0.5);
    let eps = T::lit(TANH_EPS);
    let mut log_prob = Array1::zeros(mean.nrows());
    for r in 0..mean.nrows() {
        let mut acc = T::zero();
        for c in 0..mean.ncols() {
            let n = noise[(r, c)];
            let a = action[(r, c)];
            acc += -half * n * n - log_std[(r, c)] - half_log_2pi - (T::one() - a * a + eps).ln();
        }
        log_prob[r] = acc;
    }
    let cache = GaussianCache {
        noise: noise.clone(),
        std,
        pre_squash,
        action: action.clone(),
        clamped,
    };
    Ok(PolicySample {
        action,
        log_prob,
        cache,
    })
}

/// Log-density of a squashed sample computed from its pre-squash value.
pub fn gaussian_log_prob<T: Real>(
    pre_squash: &Array2<T>,
    mean: &Array2<T>,
    log_std: &Array2<T>,
) -> Array1<T> {
    let half_log_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let eps = T::lit(TANH_EPS);
    let mut out = Array1::zeros(mean.nrows());
    for r in 0..mean.nrows() {
        let mut acc = T::zero();
        for c in 0..mean.ncols() {
            let ls = log_std[(r, c)]
                .max(T::lit(LOG_STD_MIN))
                .min(T::lit(LOG_STD_MAX));
            let z = (pre_squash[(r, c)] - mean[(r, c)]) / ls.exp();
            let a = pre_squash[(r, c)].tanh();
            acc += -T::lit(0.5) * z * z - ls - half_log_2pi - (T::one() - a * a + eps).ln();
        }
        out[r] = acc;
    }
    out
}

/// Gradients with respect to `mean` and the raw (unclamped) `log_std`, given
/// upstream gradients on the action and on the per-row log-probability.
pub fn gaussian_head_backward<T: Real>(
    cache: &GaussianCache<T>,
    d_action: &Array2<T>,
    d_log_prob: &Array1<T>,
) -> (Array2<T>, Array2<T>) {
    let eps = T::lit(TANH_EPS);
    let two = T::lit(2.0);
    let (rows, cols) = cache.action.dim();
    let mut d_mean = Array2::zeros((rows, cols));
    let mut d_log_std = Array2::zeros((rows, cols));
    for r in 0..rows {
        let dlp = d_log_prob[r];
        for c in 0..cols {
            let a = cache.action[(r, c)];
            let sech2 = T::one() - a * a;
            let g_u = d_action[(r, c)] * sech2 + dlp * two * a * sech2 / (sech2 + eps);
            d_mean[(r, c)] = g_u;
            if !cache.clamped[(r, c)] {
                d_log_std[(r, c)] = g_u * cache.std[(r, c)] * cache.noise[(r, c)] - dlp;
            }
        }
    }
    (d_mean, d_log_std)
}

//! Closed-form secret-key and data rates, and the weighted reward.
//!
//! Key rates are Gaussian (conditional) mutual informations written as ratios
//! of covariance determinants. They are evaluated here in normalized form,
//! e.g. `rks = -log2(1 - (rho^delta Oa / (Oa + s2))^2)`, which is the same
//! quantity as `2 log2(Oa + s2) - log2((Oa + s2)^2 - |rho^delta Oa|^2)` but
//! exact at the memoryless limit and well conditioned at high SNR.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::{equivalent_channels, BeamPair, ChannelState, EveMode};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// System constants the rate formulas need besides the channel gains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateContext<T: Real> {
    pub rho: T,
    pub delta: u32,
    /// `sigma_z2 + sigma_zeta2`
    pub sigma2: T,
    pub sigma_z2: T,
    pub bandwidth: T,
    pub lambda_k: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateInputs<T: Real> {
    /// Lag-0 legitimate autocorrelation (power).
    pub omega_a0: T,
    /// Lag-0 eavesdropping autocorrelation (power).
    pub omega_e0: T,
    /// Legitimate/eavesdropping cross-correlation.
    pub omega_ae0: Complex<T>,
    pub ctx: RateContext<T>,
}

impl<T: Real> RateInputs<T> {
    pub fn new(omega_a0: T, omega_e0: T, omega_ae0: Complex<T>, ctx: RateContext<T>) -> Self {
        Self {
            omega_a0,
            omega_e0,
            omega_ae0,
            ctx,
        }
    }

    fn describe(&self) -> String {
        format!(
            "omega_a0={}, omega_e0={}, omega_ae0={}, rho={}, delta={}, sigma2={}, sigma_z2={}",
            self.omega_a0,
            self.omega_e0,
            self.omega_ae0,
            self.ctx.rho,
            self.ctx.delta,
            self.ctx.sigma2,
            self.ctx.sigma_z2
        )
    }

    /// `rho^delta * omega_a0 / (omega_a0 + sigma2)`.
    fn lag_ratio(&self) -> T {
        let lagged = self.ctx.rho.powi(self.ctx.delta as i32) * self.omega_a0;
        lagged / (self.omega_a0 + self.ctx.sigma2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateReport<T: Real> {
    /// Key rate with the eavesdropper asleep, bits per slot.
    pub rks: T,
    /// Key rate under eavesdropping; only evaluated in that mode.
    pub rke: Option<T>,
    /// Data rate, bits/s/Hz at unit bandwidth.
    pub rd: T,
    /// The key rate that entered the reward.
    pub key_rate: T,
    pub reward: T,
    /// Whether `rke` had to be clamped at zero.
    pub clamped: bool,
    pub mode: EveMode,
}

/// Single-realization plug-in estimates of the correlations for given beams.
///
/// The cross term is shrunk onto the Cauchy-Schwarz boundary if rounding
/// pushes it past `omega_a0 * omega_e0`.
pub fn instantaneous_gains<T: Real>(
    state: &ChannelState<T>,
    beams: &BeamPair<T>,
    pa: T,
    ctx: RateContext<T>,
) -> Result<RateInputs<T>> {
    // equivalent_channels already carries sqrt(pa); products of two carry pa.
    let eq = equivalent_channels(state, beams, pa)?;
    let omega_a0 = eq.ab.norm_sqr();
    let omega_e0 = eq.ae.norm_sqr();
    let mut omega_ae0 = eq.ab * eq.ae.conj();
    let bound = omega_a0 * omega_e0;
    let cross = omega_ae0.norm_sqr();
    if cross > bound {
        omega_ae0 = if cross > T::zero() {
            omega_ae0 * (bound / cross).sqrt()
        } else {
            Complex::new(T::zero(), T::zero())
        };
    }
    Ok(RateInputs::new(omega_a0, omega_e0, omega_ae0, ctx))
}

/// Secret-key rate with the eavesdropper asleep.
pub fn rks<T: Real>(inp: &RateInputs<T>) -> Result<T> {
    if !(inp.ctx.sigma2 > T::zero()) || !(inp.omega_a0 >= T::zero()) {
        return Err(Error::NumericalDomain {
            op: "rks",
            detail: inp.describe(),
        });
    }
    let r = inp.lag_ratio();
    let det = T::one() - r * r;
    if !(det > T::zero()) {
        return Err(Error::NumericalDomain {
            op: "rks",
            detail: format!("non-positive determinant; {}", inp.describe()),
        });
    }
    // ln_1p(-0) is -0; adding zero normalizes the sign.
    Ok(-(-r * r).ln_1p() / T::LN_2() + T::zero())
}

/// Secret-key rate conditioned on the eavesdropper's observation, before
/// clamping at zero.
pub fn rke_raw<T: Real>(inp: &RateInputs<T>) -> Result<T> {
    let c = inp.ctx;
    if !(c.sigma2 > T::zero()) || !(c.sigma_z2 > T::zero()) {
        return Err(Error::NumericalDomain {
            op: "rke",
            detail: inp.describe(),
        });
    }
    let a = inp.omega_a0 + c.sigma2;
    let f = inp.omega_e0 + c.sigma_z2;
    let leak = inp.omega_ae0.norm_sqr();
    let r = inp.lag_ratio();
    // det_ae / (a f) and det_abe / (a^2 f)
    let ae = T::one() - leak / (a * f);
    let abe = (T::one() - r * r) - T::lit(2.0) * c.sigma2 * leak / (a * a * f);
    if !(ae > T::zero()) || !(abe > T::zero()) {
        return Err(Error::NumericalDomain {
            op: "rke",
            detail: format!(
                "non-positive determinant (det_ae/af={ae}, det_abe/a2f={abe}); {}",
                inp.describe()
            ),
        });
    }
    Ok((T::lit(2.0) * ae.ln() - abe.ln()) / T::LN_2() + T::zero())
}

/// [`rke_raw`] clamped at zero from below.
pub fn rke<T: Real>(inp: &RateInputs<T>) -> Result<T> {
    Ok(rke_raw(inp)?.max(T::zero()))
}

/// Shannon rate of the beamformed legitimate link.
pub fn rd<T: Real>(inp: &RateInputs<T>) -> T {
    inp.ctx.bandwidth * (inp.omega_a0 / inp.ctx.sigma2).ln_1p() / T::LN_2()
}

/// Weighted reward: the key rate matching the eavesdropper's mode mixed with
/// the data rate by `lambda_k`.
pub fn reward<T: Real>(inp: &RateInputs<T>, mode: EveMode) -> Result<RateReport<T>> {
    let rks_v = rks(inp)?;
    let rd_v = rd(inp);
    let (rke_v, key, clamped) = match mode {
        EveMode::Sleeping => (None, rks_v, false),
        EveMode::Eavesdropping => {
            let raw = rke_raw(inp)?;
            let clamped = raw < T::zero();
            let v = raw.max(T::zero());
            (Some(v), v, clamped)
        }
    };
    let lk = inp.ctx.lambda_k;
    Ok(RateReport {
        rks: rks_v,
        rke: rke_v,
        rd: rd_v,
        key_rate: key,
        reward: lk * key + (T::one() - lk) * rd_v,
        clamped,
        mode,
    })
}

//! Channel realizations for the legitimate link, the eavesdropper, and the
//! helper node near her, plus the eavesdropper's two-mode behavior.
//!
//! All links evolve as first-order autoregressive processes driven by the same
//! coefficient. The helper ("Fred") links are regenerated each slot as a
//! Gauss-Markov spatial mixture of the eavesdropper's links, so they carry
//! information about her channel without ever revealing it exactly (unless
//! `kappa == 1`).

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cgauss_matrix, cgauss_vector, CMat, CVec, RngStream};
use crate::scalar::Real;

/// Tolerance on `| ||w|| - 1 |` accepted by [`equivalent_channels`].
pub const BEAM_NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams<T: Real> {
    pub n_antennas: usize,
    /// AR(1) coefficient.
    pub rho: T,
    /// Innovation variance of the AR(1) recursion.
    pub sigma_zeta2: T,
    /// Receiver noise variance.
    pub sigma_z2: T,
    /// Eavesdropper activation threshold on the channel amplitude.
    pub tau: T,
    /// Correlation between the helper node's links and the eavesdropper's.
    pub kappa: T,
    /// Duplex lag in slots.
    pub delta: u32,
}

impl<T: Real> ChannelParams<T> {
    /// Unit-power stationary process: `sigma_zeta2 = 1 - rho^2`.
    pub fn stationary(n_antennas: usize, rho: T, tau: T, kappa: T) -> Self {
        Self {
            n_antennas,
            rho,
            sigma_zeta2: T::one() - rho * rho,
            sigma_z2: T::one(),
            tau,
            kappa,
            delta: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        if self.n_antennas == 0 {
            return Err(Error::param("n_antennas", "must be at least 1"));
        }
        if !unit(self.rho) {
            return Err(Error::param(
                "rho",
                format!("must lie in [0,1], got {}", self.rho),
            ));
        }
        if !(self.sigma_zeta2 >= T::zero()) || !self.sigma_zeta2.is_finite() {
            return Err(Error::param("sigma_zeta2", "must be non-negative"));
        }
        if !(self.sigma_z2 > T::zero()) || !self.sigma_z2.is_finite() {
            return Err(Error::param("sigma_z2", "must be positive"));
        }
        if !(self.tau >= T::zero()) || !self.tau.is_finite() {
            return Err(Error::param("tau", "must be non-negative"));
        }
        if !unit(self.kappa) {
            return Err(Error::param(
                "kappa",
                format!("must lie in [0,1], got {}", self.kappa),
            ));
        }
        Ok(())
    }

    /// Combined noise seen by the key-rate formulas.
    pub fn sigma2(&self) -> T {
        self.sigma_z2 + self.sigma_zeta2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveMode {
    Eavesdropping,
    Sleeping,
}

impl EveMode {
    pub fn is_eavesdropping(self) -> bool {
        matches!(self, EveMode::Eavesdropping)
    }

    pub fn flag(self) -> f64 {
        if self.is_eavesdropping() {
            1.0
        } else {
            0.0
        }
    }
}

/// Transmit (Alice) and receive (Bob) beamforming vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamPair<T: Real> {
    pub w_a: CVec<T>,
    pub w_b: CVec<T>,
}

impl<T: Real> BeamPair<T> {
    pub fn new(w_a: CVec<T>, w_b: CVec<T>) -> Self {
        Self { w_a, w_b }
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(CVec::uniform(n), CVec::uniform(n))
    }

    pub fn check_unit_norm(&self, tol: f64) -> Result<()> {
        for (name, w) in [("w_a", &self.w_a), ("w_b", &self.w_b)] {
            let dev = (w.norm().to_f64_lossy() - 1.0).abs();
            if !(dev <= tol) {
                return Err(Error::Contract(format!(
                    "{name} must be unit norm (|norm - 1| = {dev:e})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelState<T: Real> {
    pub h_ab: CMat<T>,
    pub h_ae: CVec<T>,
    pub h_be: CVec<T>,
    pub h_af: CVec<T>,
    pub h_bf: CVec<T>,
    pub mode: EveMode,
    pub slot: u64,
}

/// Eavesdrops iff both of her links are at least `tau` in norm.
pub fn eve_mode<T: Real>(h_ae: &CVec<T>, h_be: &CVec<T>, tau: T) -> EveMode {
    if h_ae.norm().min(h_be.norm()) >= tau {
        EveMode::Eavesdropping
    } else {
        EveMode::Sleeping
    }
}

/// Helper-node links: `kappa * h_e + sqrt(1 - kappa^2) * g`, `g` fresh.
pub fn fred_channels<T: Real>(
    h_ae: &CVec<T>,
    h_be: &CVec<T>,
    kappa: T,
    rng: &mut RngStream,
) -> Result<(CVec<T>, CVec<T>)> {
    if !(kappa >= T::zero() && kappa <= T::one()) {
        return Err(Error::param(
            "kappa",
            format!("must lie in [0,1], got {kappa}"),
        ));
    }
    let spread = (T::one() - kappa * kappa).max(T::zero()).sqrt();
    let mix = |h: &CVec<T>, rng: &mut RngStream| -> Result<CVec<T>> {
        let g = cgauss_vector::<T>(h.len(), 1.0, rng)?;
        CVec::new(
            h.as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(e, n)| e * kappa + n * spread)
                .collect(),
        )
    };
    let af = mix(h_ae, rng)?;
    let bf = mix(h_be, rng)?;
    Ok((af, bf))
}

/// Fresh i.i.d. unit-variance realizations of every link.
pub fn init_channels<T: Real>(
    params: &ChannelParams<T>,
    rng: &mut RngStream,
) -> Result<ChannelState<T>> {
    params.validate()?;
    let n = params.n_antennas;
    let h_ab = cgauss_matrix(n, 1.0, rng)?;
    let h_ae = cgauss_vector(n, 1.0, rng)?;
    let h_be = cgauss_vector(n, 1.0, rng)?;
    let (h_af, h_bf) = fred_channels(&h_ae, &h_be, params.kappa, rng)?;
    let mode = eve_mode(&h_ae, &h_be, params.tau);
    Ok(ChannelState {
        h_ab,
        h_ae,
        h_be,
        h_af,
        h_bf,
        mode,
        slot: 0,
    })
}

fn ar1_step<T: Real>(x: &mut [Complex<T>], rho: T, innovation: f64, rng: &mut RngStream) {
    if innovation > 0.0 {
        for z in x.iter_mut() {
            *z = *z * rho + rng.cgauss::<T>(innovation);
        }
    } else {
        for z in x.iter_mut() {
            *z *= rho;
        }
    }
}

/// Advances every link by one slot.
///
/// The legitimate matrix and both eavesdropper vectors follow
/// `x <- rho x + zeta` with innovation variance `sigma_zeta2`; the helper links
/// are then redrawn from the updated eavesdropper links.
pub fn evolve_ar1<T: Real>(
    mut state: ChannelState<T>,
    params: &ChannelParams<T>,
    rng: &mut RngStream,
) -> Result<ChannelState<T>> {
    let innovation = params.sigma_zeta2.to_f64_lossy();
    ar1_step(state.h_ab.as_mut_slice(), params.rho, innovation, rng);
    ar1_step(state.h_ae.as_mut_slice(), params.rho, innovation, rng);
    ar1_step(state.h_be.as_mut_slice(), params.rho, innovation, rng);
    let (af, bf) = fred_channels(&state.h_ae, &state.h_be, params.kappa, rng)?;
    state.h_af = af;
    state.h_bf = bf;
    state.mode = eve_mode(&state.h_ae, &state.h_be, params.tau);
    state.slot += 1;
    Ok(state)
}

/// Scalar channels seen after beamforming.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivalentChannels<T: Real> {
    /// `sqrt(Pa) w_b^H H_ab w_a`
    pub ab: Complex<T>,
    /// `sqrt(Pa) h_ae^H w_a`
    pub ae: Complex<T>,
    /// `sqrt(Pa) h_af^H w_a`
    pub af: Complex<T>,
    /// `sqrt(Pa) h_bf^H w_b`
    pub bf: Complex<T>,
}

pub fn equivalent_channels<T: Real>(
    state: &ChannelState<T>,
    beams: &BeamPair<T>,
    pa: T,
) -> Result<EquivalentChannels<T>> {
    beams.check_unit_norm(BEAM_NORM_TOL)?;
    let amp = pa.sqrt();
    let ab = crate::numerics::bilinear_form(&beams.w_b, &state.h_ab, &beams.w_a)?;
    Ok(EquivalentChannels {
        ab: ab * amp,
        ae: state.h_ae.dot_h(&beams.w_a) * amp,
        af: state.h_af.dot_h(&beams.w_a) * amp,
        bf: state.h_bf.dot_h(&beams.w_b) * amp,
    })
}

/// Threshold `tau` at which the eavesdropper is active in roughly
/// `target_fraction` of slots, by Monte-Carlo over i.i.d. unit-variance links.
pub fn calibrate_tau(
    n_antennas: usize,
    target_fraction: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if n_antennas == 0 {
        return Err(Error::param("n_antennas", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&target_fraction) {
        return Err(Error::param("target_fraction", "must lie in [0,1]"));
    }
    if samples == 0 {
        return Err(Error::param("samples", "must be positive"));
    }
    let mut mins: Vec<f64> = (0..samples)
        .map(|_| {
            let a = cgauss_vector::<f64>(n_antennas, 1.0, rng).map(|v| v.norm());
            let b = cgauss_vector::<f64>(n_antennas, 1.0, rng).map(|v| v.norm());
            a.and_then(|a| b.map(|b| a.min(b)))
        })
        .collect::<Result<_>>()?;
    mins.sort_by(f64::total_cmp);
    // P(min >= tau) = target  =>  tau is the (1 - target) quantile.
    let q = ((1.0 - target_fraction) * (samples as f64 - 1.0)).round() as usize;
    Ok(mins[q.min(samples - 1)])
}

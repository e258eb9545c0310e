//! The decision process the learners interact with.
//!
//! Each slot the agents emit a joint raw action (real/imaginary pairs for both
//! beamformers). The action is projected onto unit-norm beams, the rates are
//! evaluated on the current channel with those beams, the channel advances one
//! slot, and the next observation reports the equivalent channels of the
//! beams just used on the new realization.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use crate::channel::BeamPair;
use crate::channel::{
    equivalent_channels, evolve_ar1, init_channels, ChannelParams, ChannelState, EveMode,
};
use crate::error::{Error, Result};
use crate::numerics::{CVec, RngStream};
use crate::rates::{instantaneous_gains, reward, RateContext, RateReport};
use crate::scalar::Real;

/// Agents' state dimension.
pub const OBS_DIM: usize = 5;
/// Helper-node features per slot: Re/Im of both of its equivalent channels.
pub const FRED_FEATURES: usize = 4;
/// Norm below which a raw action is treated as degenerate.
const PROJECTION_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationMode {
    /// True eavesdropping channel and mode.
    Full,
    /// Eavesdropper fields blanked.
    PartialNaive,
    /// Eavesdropper fields replaced by a predictor's estimate.
    PartialPredicted,
}

impl ObservationMode {
    pub const ALL: [ObservationMode; 3] = [
        ObservationMode::Full,
        ObservationMode::PartialNaive,
        ObservationMode::PartialPredicted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObservationMode::Full => "full",
            ObservationMode::PartialNaive => "partial-naive",
            ObservationMode::PartialPredicted => "partial-predicted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for ObservationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(Re h_ab, Im h_ab, Re h_ae, Im h_ae, xi)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn h_ab(&self) -> Complex64 {
        Complex64::new(self.0[0], self.0[1])
    }

    pub fn h_ae(&self) -> Complex64 {
        Complex64::new(self.0[2], self.0[3])
    }

    /// 0/1 mode flag, or the predicted eavesdropping probability.
    pub fn xi(&self) -> f64 {
        self.0[4]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    /// Raw joint action, `4N` reals: Alice's `2N` then Bob's `2N`.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub channel: ChannelParams<f64>,
    /// Transmit power of both ends (`Pa = Pb`), linear, relative to unit noise.
    pub power: f64,
    pub p_max: f64,
    pub lambda_k: f64,
    pub bandwidth: f64,
    pub episode_len: usize,
    pub observation_mode: ObservationMode,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if !(self.p_max > 0.0) || !self.p_max.is_finite() {
            return Err(Error::param("p_max", "must be positive"));
        }
        if !(self.power >= 0.0 && self.power <= self.p_max) {
            return Err(Error::param(
                "power",
                format!("must lie in [0, p_max={}], got {}", self.p_max, self.power),
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda_k) {
            return Err(Error::param("lambda_k", "must lie in [0,1]"));
        }
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::param("bandwidth", "must be positive"));
        }
        if self.episode_len == 0 {
            return Err(Error::param("episode_len", "must be positive"));
        }
        Ok(())
    }

    pub fn n_antennas(&self) -> usize {
        self.channel.n_antennas
    }

    /// Per-agent raw action length, `2N`.
    pub fn agent_action_dim(&self) -> usize {
        2 * self.channel.n_antennas
    }

    /// Joint raw action length, `4N`.
    pub fn action_dim(&self) -> usize {
        4 * self.channel.n_antennas
    }

    pub fn rate_context(&self) -> RateContext<f64> {
        RateContext {
            rho: self.channel.rho,
            delta: self.channel.delta,
            sigma2: self.channel.sigma2(),
            sigma_z2: self.channel.sigma_z2,
            bandwidth: self.bandwidth,
            lambda_k: self.lambda_k,
        }
    }
}

/// Estimates the eavesdropper's equivalent channel and activity from a window
/// of helper-node measurements.
pub trait EvePredictor: Send + Sync {
    fn seq_len(&self) -> usize;

    /// Returns `(h_ae estimate, probability of eavesdropping)`.
    fn predict(&self, window: &[[f64; FRED_FEATURES]]) -> Result<(Complex64, f64)>;
}

/// Pairs consecutive reals into complex entries and normalizes. Degenerate
/// input maps to the uniform beam.
pub fn project_action<T: Real>(raw: &[T]) -> Result<CVec<T>> {
    if raw.is_empty() || !raw.len().is_multiple_of(2) {
        return Err(Error::shape(
            "project_action",
            "even, nonzero length",
            raw.len(),
        ));
    }
    let n = raw.len() / 2;
    let v: Vec<_> = raw
        .chunks_exact(2)
        .map(|p| num_complex::Complex::new(p[0], p[1]))
        .collect();
    let v = CVec::new(v)?;
    Ok(v.normalized(T::lit(PROJECTION_FLOOR))
        .unwrap_or_else(|| CVec::uniform(n)))
}

/// Splits a joint action into Alice's and Bob's beams.
pub fn project_joint_action(raw: &[f64], n_antennas: usize) -> Result<BeamPair<f64>> {
    if raw.len() != 4 * n_antennas {
        return Err(Error::shape("joint action", 4 * n_antennas, raw.len()));
    }
    let (a, b) = raw.split_at(2 * n_antennas);
    Ok(BeamPair::new(project_action(a)?, project_action(b)?))
}

/// Helper-node features of the beams in force on a realization.
pub fn fred_features(
    state: &ChannelState<f64>,
    beams: &BeamPair<f64>,
    power: f64,
) -> Result<[f64; FRED_FEATURES]> {
    let eq = equivalent_channels(state, beams, power)?;
    Ok([eq.af.re, eq.af.im, eq.bf.re, eq.bf.im])
}

pub fn assemble_observation(
    state: &ChannelState<f64>,
    beams: &BeamPair<f64>,
    power: f64,
    mode: ObservationMode,
    predictor: Option<(&dyn EvePredictor, &[[f64; FRED_FEATURES]])>,
) -> Result<Observation> {
    let eq = equivalent_channels(state, beams, power)?;
    let obs = match mode {
        ObservationMode::Full => [eq.ab.re, eq.ab.im, eq.ae.re, eq.ae.im, state.mode.flag()],
        ObservationMode::PartialNaive => [eq.ab.re, eq.ab.im, 0.0, 0.0, 0.5],
        ObservationMode::PartialPredicted => {
            let (p, window) = predictor.ok_or_else(|| {
                Error::config(
                    "observation_mode",
                    "partial-predicted requires a trained predictor",
                )
            })?;
            let (hae, xi) = p.predict(window)?;
            [eq.ab.re, eq.ab.im, hae.re, hae.im, xi]
        }
    };
    if obs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract(format!("non-finite observation {obs:?}")));
    }
    Ok(Observation(obs))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Slots whose conditional key rate was clamped at zero.
    pub clamp_count: u64,
    /// Slots whose rates could not be evaluated; these earn zero reward.
    pub domain_errors: u64,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub report: RateReport<f64>,
    /// Set when the rates were not evaluable and the slot was zeroed.
    pub flagged: bool,
}

pub struct Environment {
    config: EnvConfig,
    rng: RngStream,
    state: Option<ChannelState<f64>>,
    beams: BeamPair<f64>,
    steps: usize,
    fred_history: VecDeque<[f64; FRED_FEATURES]>,
    predictor: Option<Arc<dyn EvePredictor>>,
    diagnostics: Diagnostics,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("config", &self.config)
            .field("steps", &self.steps)
            .field("has_predictor", &self.predictor.is_some())
            .finish()
    }
}

impl Environment {
    /// `rng` drives the channel process only; policies keep their own streams.
    pub fn new(
        config: EnvConfig,
        rng: RngStream,
        predictor: Option<Arc<dyn EvePredictor>>,
    ) -> Result<Self> {
        config.validate()?;
        if config.observation_mode == ObservationMode::PartialPredicted && predictor.is_none() {
            return Err(Error::config(
                "observation_mode",
                "partial-predicted requires a trained predictor",
            ));
        }
        let n = config.n_antennas();
        Ok(Self {
            config,
            rng,
            state: None,
            beams: BeamPair::uniform(n),
            steps: 0,
            fred_history: VecDeque::new(),
            predictor,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    pub fn state(&self) -> Option<&ChannelState<f64>> {
        self.state.as_ref()
    }

    pub fn beams(&self) -> &BeamPair<f64> {
        &self.beams
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn reset(&mut self) -> Result<Observation> {
        let state = init_channels(&self.config.channel, &mut self.rng)?;
        self.beams = BeamPair::uniform(self.config.n_antennas());
        self.steps = 0;
        self.fred_history.clear();
        self.state = Some(state);
        self.observe()
    }

    /// Applies a raw joint action of length `4N`.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let beams = project_joint_action(action, self.config.n_antennas())?;
        self.step_beams(beams)
    }

    /// Applies explicit unit-norm beams; used by the baselines.
    pub fn step_beams(&mut self, beams: BeamPair<f64>) -> Result<StepOutcome> {
        let state = self
            .state
            .take()
            .ok_or_else(|| Error::Contract("step called before reset".into()))?;
        let ctx = self.config.rate_context();
        let inputs = instantaneous_gains(&state, &beams, self.config.power, ctx)?;
        let (report, flagged) = match reward(&inputs, state.mode) {
            Ok(r) => (r, false),
            Err(Error::NumericalDomain { .. }) => {
                self.diagnostics.domain_errors += 1;
                let zero = RateReport {
                    rks: 0.0,
                    rke: None,
                    rd: 0.0,
                    key_rate: 0.0,
                    reward: 0.0,
                    clamped: false,
                    mode: state.mode,
                };
                (zero, true)
            }
            Err(e) => return Err(e),
        };
        if report.clamped {
            self.diagnostics.clamp_count += 1;
        }
        let next = evolve_ar1(state, &self.config.channel, &mut self.rng)?;
        self.state = Some(next);
        self.beams = beams;
        self.steps += 1;
        let obs = self.observe()?;
        Ok(StepOutcome {
            obs,
            reward: report.reward,
            done: self.steps >= self.config.episode_len,
            report,
            flagged,
        })
    }

    fn observe(&mut self) -> Result<Observation> {
        let state = self.state.as_ref().expect("observe after reset");
        let fred = fred_features(state, &self.beams, self.config.power)?;
        self.fred_history.push_back(fred);
        let keep = self.predictor.as_ref().map_or(1, |p| p.seq_len().max(1));
        while self.fred_history.len() > keep {
            self.fred_history.pop_front();
        }
        let window = self.padded_window(keep);
        let predictor = self.predictor.as_deref().map(|p| (p, window.as_slice()));
        assemble_observation(
            state,
            &self.beams,
            self.config.power,
            self.config.observation_mode,
            predictor,
        )
    }

    /// Last `len` helper-node measurements, left-padded with the oldest one
    /// at the start of an episode.
    fn padded_window(&self, len: usize) -> Vec<[f64; FRED_FEATURES]> {
        let first = self.fred_history.front().copied().unwrap_or_default();
        let pad = len.saturating_sub(self.fred_history.len());
        std::iter::repeat_n(first, pad)
            .chain(self.fred_history.iter().copied())
            .collect()
    }
}

/// Whether the eavesdropper is active on a realization; convenience for logs.
pub fn is_eavesdropping(state: &ChannelState<f64>) -> bool {
    state.mode == EveMode::Eavesdropping
}

//! Joint beamforming for physical-layer secret-key generation and data
//! transmission over a TDD MIMO link with an intelligent eavesdropper.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod env;
pub mod error;
pub mod experiment;
pub mod nncore;
pub mod numerics;
pub mod predictor;
pub mod rates;
pub mod sac;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CVec64 = numerics::CVec<f64>;
pub type CMat64 = numerics::CMat<f64>;
pub type TopPair64 = numerics::TopPair<f64>;
pub type ChannelParams64 = channel::ChannelParams<f64>;
pub type ChannelState64 = channel::ChannelState<f64>;
pub type BeamPair64 = channel::BeamPair<f64>;
pub type EquivalentChannels64 = channel::EquivalentChannels<f64>;
pub type RateContext64 = rates::RateContext<f64>;
pub type RateInputs64 = rates::RateInputs<f64>;
pub type RateReport64 = rates::RateReport<f64>;

pub type CVec32 = numerics::CVec<f32>;
pub type CMat32 = numerics::CMat<f32>;
pub type ChannelParams32 = channel::ChannelParams<f32>;
pub type ChannelState32 = channel::ChannelState<f32>;
pub type BeamPair32 = channel::BeamPair<f32>;

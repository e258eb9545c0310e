//! LSTM estimate of the eavesdropper's equivalent channel and activity from
//! the helper node's recent measurements.
//!
//! Trained offline on random-beam rollouts, then frozen and plugged into the
//! environment through [`EvePredictor`].

use std::path::Path;

use ndarray::{s, Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baselines::random_action;
use crate::channel::{equivalent_channels, evolve_ar1, init_channels, ChannelParams};
use crate::env::{EvePredictor, FRED_FEATURES};
use crate::error::{Error, Result};
use crate::nncore::{sigmoid, zero_grads, Adam, Checkpoint, Dense, Lstm, Param, Parameterized};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub seq_len: usize,
    pub hidden: usize,
    pub lr: f64,
    pub w_mse: f64,
    pub w_bce: f64,
    pub pretrain_steps: usize,
    pub batch_size: usize,
    /// Length of the random-beam rollout the dataset is cut from.
    pub rollout_slots: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            seq_len: 8,
            hidden: 64,
            lr: 1e-3,
            w_mse: 1.0,
            w_bce: 1.0,
            pretrain_steps: 50_000,
            batch_size: 32,
            rollout_slots: 20_000,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 {
            return Err(Error::param("seq_len", "must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(Error::param("hidden", "must be positive"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::param("lr", "must be positive"));
        }
        if !(self.w_mse >= 0.0 && self.w_bce >= 0.0) || self.w_mse + self.w_bce == 0.0 {
            return Err(Error::param(
                "w_mse/w_bce",
                "must be non-negative and not both zero",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if self.rollout_slots < self.seq_len {
            return Err(Error::param("rollout_slots", "shorter than one window"));
        }
        Ok(())
    }
}

/// One logged slot of a random-beam rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutSlot {
    pub slot: u64,
    pub af_re: f64,
    pub af_im: f64,
    pub bf_re: f64,
    pub bf_im: f64,
    pub hae_re: f64,
    pub hae_im: f64,
    pub xi: u8,
}

impl RolloutSlot {
    pub fn features(&self) -> [f64; FRED_FEATURES] {
        [self.af_re, self.af_im, self.bf_re, self.bf_im]
    }
}

/// Simulates `slots` slots under fresh isotropic beams each slot and logs the
/// helper-node measurements with the eavesdropper ground truth.
pub fn collect_rollout(
    params: &ChannelParams<f64>,
    power: f64,
    slots: usize,
    channel_rng: &mut RngStream,
    beam_rng: &mut RngStream,
) -> Result<Vec<RolloutSlot>> {
    let mut state = init_channels(params, channel_rng)?;
    let mut out = Vec::with_capacity(slots);
    for _ in 0..slots {
        let beams = random_action(params.n_antennas, beam_rng)?;
        let eq = equivalent_channels(&state, &beams, power)?;
        out.push(RolloutSlot {
            slot: state.slot,
            af_re: eq.af.re,
            af_im: eq.af.im,
            bf_re: eq.bf.re,
            bf_im: eq.bf.im,
            hae_re: eq.ae.re,
            hae_im: eq.ae.im,
            xi: state.mode.is_eavesdropping() as u8,
        });
        state = evolve_ar1(state, params, channel_rng)?;
    }
    Ok(out)
}

pub fn write_rollout_csv(rollout: &[RolloutSlot], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rollout {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rollout_csv(path: impl AsRef<Path>) -> Result<Vec<RolloutSlot>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorSample {
    pub inputs: Vec<[f64; FRED_FEATURES]>,
    pub target_hae: [f64; 2],
    pub target_xi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<PredictorSample>,
    pub val: Vec<PredictorSample>,
}

/// Slots dropped on each side of the validation block beyond the window
/// overlap; the AR(1) labels decorrelate over this horizon (0.9^64 < 1e-3).
const PURGE_SLOTS: usize = 32;

/// Sliding windows of length `seq_len`, labelled at their last slot, split
/// 90/10. The validation set is one contiguous block placed by `seed`.
/// Neighbouring windows share inputs and carry correlated labels, so a
/// shuffled split would leak; windows within `seq_len - 1 + PURGE_SLOTS` of
/// the block are left out of both sets.
pub fn build_dataset(rollout: &[RolloutSlot], seq_len: usize, seed: u64) -> Result<Dataset> {
    if seq_len == 0 {
        return Err(Error::param("seq_len", "must be at least 1"));
    }
    if rollout.len() < seq_len {
        return Err(Error::param(
            "rollout",
            format!(
                "{} slots is shorter than the window length {seq_len}",
                rollout.len()
            ),
        ));
    }
    let windows: Vec<PredictorSample> = rollout
        .windows(seq_len)
        .map(|w| {
            let last = &w[seq_len - 1];
            PredictorSample {
                inputs: w.iter().map(RolloutSlot::features).collect(),
                target_hae: [last.hae_re, last.hae_im],
                target_xi: last.xi as f64,
            }
        })
        .collect();
    let total = windows.len();
    let n_val = ((total as f64) * 0.1).round() as usize;
    let start = RngStream::new(seed, 0x5917).index(total - n_val + 1);
    let end = start + n_val;
    let gap = seq_len - 1 + PURGE_SLOTS;
    let mut train = Vec::with_capacity(total - n_val);
    let mut val = Vec::with_capacity(n_val);
    for (i, w) in windows.into_iter().enumerate() {
        if (start..end).contains(&i) {
            val.push(w);
        } else if i + gap < start || i >= end + gap {
            train.push(w);
        }
    }
    Ok(Dataset { train, val })
}

/// LSTM over the window followed by a linear head giving
/// `(Re h_ae, Im h_ae, logit xi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    lstm: Lstm<f64>,
    head: Dense<f64>,
    seq_len: usize,
    /// Divides the inputs before the LSTM.
    input_scale: f64,
    /// Multiplies the channel outputs of the head.
    target_scale: f64,
}

struct Forward {
    xs: Vec<Array2<f64>>,
    last_h: Array2<f64>,
    out: Array2<f64>,
    lstm_cache: crate::nncore::LstmCache<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorMetrics {
    pub train_samples: usize,
    pub val_samples: usize,
    /// Per real component, in the environment's units.
    pub val_mse: f64,
    /// Same error for the all-zero channel estimate.
    pub zero_mse: f64,
    pub val_r2: f64,
    pub val_accuracy: f64,
    /// Accuracy of always predicting the majority training label.
    pub base_rate: f64,
    pub val_bce: f64,
}

fn bce_from_logit(z: f64, y: f64) -> f64 {
    // softplus(z) - y z, stable for large |z|.
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

impl Predictor {
    pub fn new(config: &PredictorConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            lstm: Lstm::new(FRED_FEATURES, config.hidden, rng),
            head: Dense::new(config.hidden, 3, rng),
            seq_len: config.seq_len,
            input_scale: 1.0,
            target_scale: 1.0,
        })
    }

    /// All parameters zero: predicts `h_ae = 0` and probability one half.
    pub fn zeroed(seq_len: usize, hidden: usize) -> Self {
        Self {
            lstm: Lstm::zeroed(FRED_FEATURES, hidden),
            head: Dense {
                w: Param::zeros(hidden, 3),
                b: Param::zeros(1, 3),
            },
            seq_len,
            input_scale: 1.0,
            target_scale: 1.0,
        }
    }

    pub fn scales(&self) -> (f64, f64) {
        (self.input_scale, self.target_scale)
    }

    /// Sets the normalization from training data: RMS input and RMS target.
    pub fn fit_scales(&mut self, samples: &[PredictorSample]) {
        let (mut si, mut ni, mut st, mut nt) = (0.0, 0usize, 0.0, 0usize);
        for s in samples {
            for x in s.inputs.iter().flatten() {
                si += x * x;
                ni += 1;
            }
            st += s.target_hae[0].powi(2) + s.target_hae[1].powi(2);
            nt += 2;
        }
        let rms = |s: f64, n: usize| {
            if n > 0 && s > 0.0 {
                (s / n as f64).sqrt()
            } else {
                1.0
            }
        };
        self.input_scale = rms(si, ni);
        self.target_scale = rms(st, nt);
    }

    fn stack(&self, samples: &[&PredictorSample]) -> Result<Vec<Array2<f64>>> {
        let b = samples.len();
        let mut xs = vec![Array2::zeros((b, FRED_FEATURES)); self.seq_len];
        for (r, s) in samples.iter().enumerate() {
            if s.inputs.len() != self.seq_len {
                return Err(Error::shape(
                    "predictor window",
                    self.seq_len,
                    s.inputs.len(),
                ));
            }
            for (t, x) in s.inputs.iter().enumerate() {
                for (c, v) in x.iter().enumerate() {
                    xs[t][(r, c)] = v / self.input_scale;
                }
            }
        }
        Ok(xs)
    }

    fn forward(&self, samples: &[&PredictorSample]) -> Result<Forward> {
        let xs = self.stack(samples)?;
        let (hs, lstm_cache) = self.lstm.forward(&xs)?;
        let last_h = hs.last().cloned().unwrap_or_else(|| Array2::zeros((0, 0)));
        let out = self.head.forward(&last_h)?;
        Ok(Forward {
            xs,
            last_h,
            out,
            lstm_cache,
        })
    }

    /// Channel estimates (environment units) and eavesdropping probabilities.
    pub fn predict_batch(
        &self,
        samples: &[&PredictorSample],
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let f = self.forward(samples)?;
        let hae = f.out.slice(s![.., 0..2]).mapv(|v| v * self.target_scale);
        let xi = f.out.column(2).mapv(sigmoid);
        Ok((hae, xi))
    }

    fn targets(&self, samples: &[&PredictorSample]) -> (Array2<f64>, Array1<f64>) {
        let b = samples.len();
        let mut y = Array2::zeros((b, 2));
        let mut xi = Array1::zeros(b);
        for (r, s) in samples.iter().enumerate() {
            y[(r, 0)] = s.target_hae[0] / self.target_scale;
            y[(r, 1)] = s.target_hae[1] / self.target_scale;
            xi[r] = s.target_xi;
        }
        (y, xi)
    }

    /// Weighted joint loss on normalized targets:
    /// `w_mse * mean squared error per component + w_bce * mean BCE`.
    pub fn loss(&self, samples: &[&PredictorSample], w_mse: f64, w_bce: f64) -> Result<f64> {
        let f = self.forward(samples)?;
        let (y, xi) = self.targets(samples);
        let b = samples.len() as f64;
        let mut mse = 0.0;
        let mut bce = 0.0;
        for r in 0..samples.len() {
            mse += (f.out[(r, 0)] - y[(r, 0)]).powi(2) + (f.out[(r, 1)] - y[(r, 1)]).powi(2);
            bce += bce_from_logit(f.out[(r, 2)], xi[r]);
        }
        Ok(w_mse * mse / (2.0 * b) + w_bce * bce / b)
    }

    /// Accumulates gradients of [`Predictor::loss`] and returns its value.
    pub fn loss_backward(
        &mut self,
        samples: &[&PredictorSample],
        w_mse: f64,
        w_bce: f64,
    ) -> Result<f64> {
        let f = self.forward(samples)?;
        let (y, xi) = self.targets(samples);
        let n = samples.len();
        let b = n as f64;
        let mut d_out = Array2::zeros((n, 3));
        let mut mse = 0.0;
        let mut bce = 0.0;
        for r in 0..n {
            for c in 0..2 {
                let e = f.out[(r, c)] - y[(r, c)];
                mse += e * e;
                d_out[(r, c)] = w_mse * e / b;
            }
            let z = f.out[(r, 2)];
            bce += bce_from_logit(z, xi[r]);
            d_out[(r, 2)] = w_bce * (sigmoid(z) - xi[r]) / b;
        }
        let dh = self.head.backward(&f.last_h, &d_out, true);
        let mut dhs = vec![Array2::zeros(dh.raw_dim()); f.xs.len()];
        if let Some(last) = dhs.last_mut() {
            *last = dh;
        }
        self.lstm.backward(&f.lstm_cache, &dhs);
        Ok(w_mse * mse / (2.0 * b) + w_bce * bce / b)
    }

    pub fn evaluate(
        &self,
        train: &[PredictorSample],
        val: &[PredictorSample],
    ) -> Result<PredictorMetrics> {
        if val.is_empty() {
            return Err(Error::param("validation set", "is empty"));
        }
        let refs: Vec<&PredictorSample> = val.iter().collect();
        let (hae, xi) = self.predict_batch(&refs)?;
        let n = val.len() as f64;
        let mut sse = 0.0;
        let mut zero = 0.0;
        let mut correct = 0usize;
        let mean = [0, 1].map(|c| val.iter().map(|s| s.target_hae[c]).sum::<f64>() / n);
        let mut sst = 0.0;
        for (r, s) in val.iter().enumerate() {
            for c in 0..2 {
                sse += (hae[(r, c)] - s.target_hae[c]).powi(2);
                zero += s.target_hae[c].powi(2);
                sst += (s.target_hae[c] - mean[c]).powi(2);
            }
            correct += ((xi[r] >= 0.5) == (s.target_xi >= 0.5)) as usize;
        }
        let train_pos = train.iter().filter(|s| s.target_xi >= 0.5).count();
        let majority = if 2 * train_pos >= train.len() {
            1.0
        } else {
            0.0
        };
        let base = val.iter().filter(|s| s.target_xi == majority).count() as f64 / n;
        let val_bce = val
            .iter()
            .zip(xi.iter())
            .map(|(s, &p)| {
                let p = p.clamp(1e-12, 1.0 - 1e-12);
                -(s.target_xi * p.ln() + (1.0 - s.target_xi) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        Ok(PredictorMetrics {
            train_samples: train.len(),
            val_samples: val.len(),
            val_mse: sse / (2.0 * n),
            zero_mse: zero / (2.0 * n),
            val_r2: 1.0 - sse / sst,
            val_accuracy: correct as f64 / n,
            base_rate: base,
            val_bce,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.capture("lstm", &self.lstm);
        ck.capture("head", &self.head);
        ck.insert(
            "scales",
            vec![1, 2],
            vec![self.input_scale, self.target_scale],
        )
        .expect("two values");
        ck.insert("seq_len", vec![1], vec![self.seq_len as f64])
            .expect("one value");
        ck
    }

    /// Rebuilds a predictor from a checkpoint written by [`Predictor::checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let hidden = ck
            .get("lstm.w_h")
            .map(|(d, _)| d[0])
            .ok_or_else(|| Error::Checkpoint("missing tensor `lstm.w_h`".into()))?;
        let seq_len = ck
            .get("seq_len")
            .map(|(_, v)| v[0] as usize)
            .ok_or_else(|| Error::Checkpoint("missing tensor `seq_len`".into()))?;
        let mut p = Self::zeroed(seq_len, hidden);
        ck.restore("lstm", &mut p.lstm)?;
        ck.restore("head", &mut p.head)?;
        let (_, sc) = ck
            .get("scales")
            .ok_or_else(|| Error::Checkpoint("missing tensor `scales`".into()))?;
        p.input_scale = sc[0];
        p.target_scale = sc[1];
        Ok(p)
    }
}

impl Parameterized<f64> for Predictor {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<f64>)) {
        self.lstm.visit(&mut |n, p| f(&format!("lstm.{n}"), p));
        self.head.visit(&mut |n, p| f(&format!("head.{n}"), p));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<f64>)) {
        self.lstm.visit_mut(&mut |n, p| f(&format!("lstm.{n}"), p));
        self.head.visit_mut(&mut |n, p| f(&format!("head.{n}"), p));
    }
}

impl EvePredictor for Predictor {
    fn seq_len(&self) -> usize {
        self.seq_len
    }

    fn predict(&self, window: &[[f64; FRED_FEATURES]]) -> Result<(Complex64, f64)> {
        if window.len() != self.seq_len {
            return Err(Error::shape("predictor window", self.seq_len, window.len()));
        }
        let sample = PredictorSample {
            inputs: window.to_vec(),
            target_hae: [0.0; 2],
            target_xi: 0.0,
        };
        let (hae, xi) = self.predict_batch(&[&sample])?;
        Ok((Complex64::new(hae[(0, 0)], hae[(0, 1)]), xi[0]))
    }
}

/// Fits a fresh predictor by Adam on uniformly drawn minibatches.
pub fn train_predictor(
    dataset: &Dataset,
    config: &PredictorConfig,
    rng: &mut RngStream,
) -> Result<(Predictor, PredictorMetrics)> {
    if dataset.train.is_empty() {
        return Err(Error::param("training set", "is empty"));
    }
    let mut model = Predictor::new(config, rng)?;
    model.fit_scales(&dataset.train);
    let mut opt = Adam::new(config.lr);
    for step in 0..config.pretrain_steps {
        let batch: Vec<&PredictorSample> = (0..config.batch_size)
            .map(|_| &dataset.train[rng.index(dataset.train.len())])
            .collect();
        zero_grads(&mut model);
        let loss = model.loss_backward(&batch, config.w_mse, config.w_bce)?;
        if !loss.is_finite() {
            let dump = batch
                .iter()
                .map(|s| format!("{:?} -> {:?} {}", s.inputs, s.target_hae, s.target_xi))
                .collect::<Vec<_>>()
                .join("\n");
            return Err(Error::Divergence {
                what: format!("predictor loss at step {step}"),
                dump,
            });
        }
        opt.apply(&mut model);
    }
    let metrics = model.evaluate(&dataset.train, &dataset.val)?;
    Ok((model, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck;

    fn params(kappa: f64) -> ChannelParams<f64> {
        ChannelParams::stationary(4, 0.9, 1.6, kappa)
    }

    fn rollout(kappa: f64, slots: usize, seed: u64) -> Vec<RolloutSlot> {
        collect_rollout(
            &params(kappa),
            100.0,
            slots,
            &mut RngStream::new(seed, 0),
            &mut RngStream::new(seed, 1),
        )
        .unwrap()
    }

    #[test]
    fn window_count_and_split() {
        let r = rollout(0.9, 1000, 1);
        let d = build_dataset(&r, 8, 7).unwrap();
        assert_eq!(d.val.len(), 99);
        let gap = 7 + PURGE_SLOTS;
        assert!(
            d.train.len() >= 993 - 99 - 2 * gap && d.train.len() <= 993 - 99 - gap,
            "{}",
            d.train.len()
        );
        assert_eq!(d, build_dataset(&r, 8, 7).unwrap());
        assert_ne!(d, build_dataset(&r, 8, 8).unwrap());
        assert!(build_dataset(&r[..5], 8, 7).is_err());
    }

    #[test]
    fn validation_block_shares_no_slot_with_training() {
        let r = rollout(0.9, 600, 3);
        let d = build_dataset(&r, 8, 11).unwrap();
        let key = |f: &[f64; FRED_FEATURES]| f.map(f64::to_bits);
        let val_slots: std::collections::HashSet<_> = d
            .val
            .iter()
            .flat_map(|s| s.inputs.iter().map(key))
            .collect();
        for s in &d.train {
            assert!(s.inputs.iter().all(|f| !val_slots.contains(&key(f))));
        }
    }

    #[test]
    fn perfect_correlation_exposes_target() {
        let r = rollout(1.0, 50, 2);
        for s in &r {
            assert!((s.af_re - s.hae_re).abs() < 1e-12 && (s.af_im - s.hae_im).abs() < 1e-12);
        }
        let d = build_dataset(&r, 4, 0).unwrap();
        for s in d.train.iter().chain(&d.val) {
            let last = s.inputs[3];
            assert!((last[0] - s.target_hae[0]).abs() < 1e-12);
            assert!((last[1] - s.target_hae[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_model_is_uninformative() {
        let p = Predictor::zeroed(8, 16);
        let (h, xi) = p.predict(&[[1.0, -2.0, 3.0, 0.5]; 8]).unwrap();
        assert_eq!(h, Complex64::new(0.0, 0.0));
        assert_eq!(xi, 0.5);
        assert!(p.predict(&[[0.0; 4]; 7]).is_err());
    }

    #[test]
    fn constant_half_bce_is_log_two() {
        let samples: Vec<PredictorSample> = (0..6)
            .map(|i| PredictorSample {
                inputs: vec![[0.0; 4]; 3],
                target_hae: [0.0, 0.0],
                target_xi: (i % 2) as f64,
            })
            .collect();
        let refs: Vec<&PredictorSample> = samples.iter().collect();
        let p = Predictor::zeroed(3, 4);
        let l = p.loss(&refs, 0.0, 1.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn predictions_are_deterministic() {
        let mut rng = RngStream::new(3, 0);
        let p = Predictor::new(
            &PredictorConfig {
                hidden: 8,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        let w = [[0.3, -0.1, 2.0, 1.0]; 8];
        assert_eq!(p.predict(&w).unwrap(), p.predict(&w).unwrap());
    }

    #[test]
    fn joint_loss_gradients_match_finite_differences() {
        let mut rng = RngStream::new(4, 0);
        let cfg = PredictorConfig {
            seq_len: 3,
            hidden: 4,
            ..Default::default()
        };
        let mut p = Predictor::new(&cfg, &mut rng).unwrap();
        let samples: Vec<PredictorSample> = (0..5)
            .map(|i| PredictorSample {
                inputs: (0..3)
                    .map(|_| [rng.normal(), rng.normal(), rng.normal(), rng.normal()])
                    .collect(),
                target_hae: [rng.normal(), rng.normal()],
                target_xi: (i % 2) as f64,
            })
            .collect();
        p.fit_scales(&samples);
        let refs: Vec<&PredictorSample> = samples.iter().collect();
        zero_grads(&mut p);
        p.loss_backward(&refs, 0.7, 1.3).unwrap();
        let err = gradcheck::check_params(&mut p, |m| m.loss(&refs, 0.7, 1.3).unwrap());
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn short_training_beats_zero_predictor() {
        let r = rollout(0.9, 3000, 5);
        let d = build_dataset(&r, 4, 5).unwrap();
        let cfg = PredictorConfig {
            seq_len: 4,
            hidden: 16,
            pretrain_steps: 1500,
            ..Default::default()
        };
        let (_, m) = train_predictor(&d, &cfg, &mut RngStream::new(5, 2)).unwrap();
        assert!(m.val_mse < m.zero_mse, "{m:?}");
        assert!(m.val_r2 > 0.3, "{m:?}");
    }

    #[test]
    fn csv_and_checkpoint_round_trip() {
        let r = rollout(0.5, 30, 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rollout.csv");
        write_rollout_csv(&r, &path).unwrap();
        assert_eq!(read_rollout_csv(&path).unwrap(), r);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("slot,af_re,af_im,bf_re,bf_im,hae_re,hae_im,xi\n"));

        let mut p = Predictor::new(
            &PredictorConfig {
                hidden: 5,
                ..Default::default()
            },
            &mut RngStream::new(1, 0),
        )
        .unwrap();
        p.fit_scales(&build_dataset(&r, 8, 0).unwrap().train);
        let back = Predictor::from_checkpoint(
            &Checkpoint::from_bytes(&p.checkpoint().to_bytes()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, p);
    }
}

//! Two-agent soft actor-critic.
//!
//! Alice and Bob each own a squashed-Gaussian actor over their `2N` beam
//! coordinates. Both actors read the same 5-dimensional observation and share
//! a pair of critics over `(observation, joint action)` with slowly tracking
//! target copies. The entropy temperature is learned through `log alpha`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::env::{Environment, Observation, Transition, OBS_DIM};
use crate::error::{Error, Result};
use crate::nncore::{
    copy_params, gaussian_head_backward, gaussian_head_sample, normal_matrix, soft_update,
    zero_grads, Adam, Checkpoint, Mlp, MlpCache, Param, Parameterized, PolicySample,
};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau_target: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub alpha_init: f64,
    /// `None` selects minus the joint action dimension.
    pub target_entropy: Option<f64>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    /// Widths of the hidden layers of every actor and critic.
    pub hidden: Vec<usize>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau_target: 0.005,
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            lr_alpha: 1e-4,
            alpha_init: 0.02,
            target_entropy: None,
            batch_size: 256,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            updates_per_step: 1,
            hidden: vec![64, 64],
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::param("gamma", "must lie in (0,1)"));
        }
        if !(self.tau_target > 0.0 && self.tau_target <= 1.0) {
            return Err(Error::param("tau_target", "must lie in (0,1]"));
        }
        for (name, lr) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_alpha", self.lr_alpha),
        ] {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if !(self.alpha_init > 0.0) || !self.alpha_init.is_finite() {
            return Err(Error::param("alpha_init", "must be positive"));
        }
        if self.target_entropy.is_some_and(|h| !h.is_finite()) {
            return Err(Error::param("target_entropy", "must be finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::param(
                "buffer_capacity",
                "must hold at least one batch",
            ));
        }
        if self.updates_per_step == 0 {
            return Err(Error::param("updates_per_step", "must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h < 2) {
            return Err(Error::param(
                "hidden",
                "need at least one layer of width >= 2",
            ));
        }
        Ok(())
    }

    pub fn entropy_target(&self, joint_action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(joint_action_dim as f64))
    }
}

/// Ring buffer of joint transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let b = items.len();
        let a = items.first().map_or(0, |t| t.action.len());
        let mut batch = Batch {
            obs: Array2::zeros((b, OBS_DIM)),
            actions: Array2::zeros((b, a)),
            rewards: Array1::zeros(b),
            next_obs: Array2::zeros((b, OBS_DIM)),
            done: Array1::zeros(b),
        };
        for (r, t) in items.iter().enumerate() {
            if t.action.len() != a {
                return Err(Error::shape("batch action", a, t.action.len()));
            }
            batch
                .obs
                .row_mut(r)
                .assign(&ndarray::aview1(t.obs.as_slice()));
            batch.actions.row_mut(r).assign(&ndarray::aview1(&t.action));
            batch.rewards[r] = t.reward;
            batch
                .next_obs
                .row_mut(r)
                .assign(&ndarray::aview1(t.next_obs.as_slice()));
            batch.done[r] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(batch)
    }

    /// Text dump used in divergence reports.
    pub fn dump(&self) -> String {
        let mut s = String::from("row,reward,done,obs,action,next_obs\n");
        for r in 0..self.len() {
            let _ = writeln!(
                s,
                "{r},{},{},{:?},{:?},{:?}",
                self.rewards[r],
                self.done[r],
                self.obs.row(r).to_vec(),
                self.actions.row(r).to_vec(),
                self.next_obs.row(r).to_vec()
            );
        }
        s
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Overwrites the oldest record once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut RngStream) -> Vec<usize> {
        (0..n).map(|_| rng.index(self.items.len())).collect()
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Batch> {
        if self.items.is_empty() {
            return Err(Error::Contract(
                "sampling from an empty replay buffer".into(),
            ));
        }
        let idx = self.sample_indices(n, rng);
        let refs: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Batch::from_transitions(&refs)
    }
}

/// One agent's policy network. Its output holds the means followed by the
/// raw log standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    net: Mlp<f64>,
    action_dim: usize,
}

pub struct ActorPass {
    pub sample: PolicySample<f64>,
    cache: MlpCache<f64>,
}

impl Actor {
    pub fn new(hidden: &[usize], action_dim: usize, rng: &mut RngStream) -> Result<Self> {
        Ok(Self {
            net: Mlp::new(OBS_DIM, hidden, 2 * action_dim, rng)?,
            action_dim,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn mean_log_std(
        &self,
        obs: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>, MlpCache<f64>)> {
        let (out, cache) = self.net.forward(obs)?;
        let d = self.action_dim;
        let mean = out.slice(s![.., ..d]).to_owned();
        let log_std = out.slice(s![.., d..]).to_owned();
        Ok((mean, log_std, cache))
    }

    pub fn sample(&self, obs: &Array2<f64>, noise: &Array2<f64>) -> Result<ActorPass> {
        let (mean, log_std, cache) = self.mean_log_std(obs)?;
        Ok(ActorPass {
            sample: gaussian_head_sample(&mean, &log_std, noise)?,
            cache,
        })
    }

    /// `tanh(mean)`, used for evaluation.
    pub fn deterministic(&self, obs: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.mean_log_std(obs)?.0.mapv(f64::tanh))
    }

    pub fn backward(&mut self, pass: &ActorPass, d_action: &Array2<f64>, d_log_prob: &Array1<f64>) {
        let (dm, dl) = gaussian_head_backward(&pass.sample.cache, d_action, d_log_prob);
        let d_out = concatenate![Axis(1), dm, dl];
        self.net.backward(&pass.cache, &d_out, true);
    }
}

impl Parameterized<f64> for Actor {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<f64>)) {
        self.net.visit(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<f64>)) {
        self.net.visit_mut(f)
    }
}

struct LogAlpha(Param<f64>);

impl Parameterized<f64> for LogAlpha {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<f64>)) {
        f("log_alpha", &self.0)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<f64>)) {
        f("log_alpha", &mut self.0)
    }
}

/// Bellman targets `r + gamma (1 - done) (min(q1, q2) - alpha logp')`.
pub fn critic_targets(
    rewards: &Array1<f64>,
    done: &Array1<f64>,
    q1_next: &Array1<f64>,
    q2_next: &Array1<f64>,
    log_prob_next: &Array1<f64>,
    gamma: f64,
    alpha: f64,
) -> Array1<f64> {
    let mut y = rewards.clone();
    for i in 0..y.len() {
        let soft = q1_next[i].min(q2_next[i]) - alpha * log_prob_next[i];
        y[i] += gamma * (1.0 - done[i]) * soft;
    }
    y
}

/// `mean(0.5 (q - y)^2)` and its gradient with respect to `q`.
pub fn critic_loss(q: &Array1<f64>, y: &Array1<f64>) -> (f64, Array1<f64>) {
    let b = q.len().max(1) as f64;
    let diff = q - y;
    (0.5 * diff.mapv(|d| d * d).sum() / b, diff / b)
}

/// Temperature loss `-alpha (mean logp + H0)` and its gradient with respect
/// to `alpha`.
pub fn alpha_loss(alpha: f64, mean_log_prob: f64, target_entropy: f64) -> (f64, f64) {
    let g = -(mean_log_prob + target_entropy);
    (alpha * g, g)
}

fn critic_input(obs: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    concatenate![Axis(1), obs.view(), actions.view()]
}

fn column(q: Array2<f64>) -> Array1<f64> {
    q.index_axis_move(Axis(1), 0)
}

/// Fresh standard-normal draws for both actors.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorNoise {
    pub alice: Array2<f64>,
    pub bob: Array2<f64>,
}

impl ActorNoise {
    pub fn draw(rows: usize, action_dim: usize, rng: &mut RngStream) -> Self {
        Self {
            alice: normal_matrix(rows, action_dim, rng),
            bob: normal_matrix(rows, action_dim, rng),
        }
    }
}

/// Mean `alpha logp(a|s) - min_j Q_j(s, a)` with `a` the concatenation of
/// both agents' reparameterized samples.
pub fn actor_loss_value(
    actors: [&Actor; 2],
    critics: [&Mlp<f64>; 2],
    alpha: f64,
    obs: &Array2<f64>,
    noise: &ActorNoise,
) -> Result<f64> {
    let pa = actors[0].sample(obs, &noise.alice)?;
    let pb = actors[1].sample(obs, &noise.bob)?;
    let joint = concatenate![Axis(1), pa.sample.action, pb.sample.action];
    let x = critic_input(obs, &joint);
    let q1 = column(critics[0].predict(&x)?);
    let q2 = column(critics[1].predict(&x)?);
    let logp = &pa.sample.log_prob + &pb.sample.log_prob;
    let b = obs.nrows() as f64;
    Ok((0..obs.nrows())
        .map(|i| alpha * logp[i] - q1[i].min(q2[i]))
        .sum::<f64>()
        / b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActorStep {
    pub loss: f64,
    /// Mean joint log-probability of the fresh samples.
    pub mean_log_prob: f64,
}

/// Accumulates actor gradients of [`actor_loss_value`]. The critics are only
/// differentiated through; their stored gradients stay untouched.
pub fn actor_loss_backward(
    actors: [&mut Actor; 2],
    critics: [&mut Mlp<f64>; 2],
    alpha: f64,
    obs: &Array2<f64>,
    noise: &ActorNoise,
) -> Result<ActorStep> {
    let [alice, bob] = actors;
    let [c1, c2] = critics;
    let pa = alice.sample(obs, &noise.alice)?;
    let pb = bob.sample(obs, &noise.bob)?;
    let d = alice.action_dim();
    let joint = concatenate![Axis(1), pa.sample.action, pb.sample.action];
    let x = critic_input(obs, &joint);
    let (q1, cache1) = c1.forward(&x)?;
    let (q2, cache2) = c2.forward(&x)?;
    let n = obs.nrows();
    let b = n as f64;
    let logp = &pa.sample.log_prob + &pb.sample.log_prob;

    let mut dq1 = Array2::zeros((n, 1));
    let mut dq2 = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        // Ties go to the first critic; the minimum is not differentiable there anyway.
        if q1[(i, 0)] <= q2[(i, 0)] {
            dq1[(i, 0)] = -1.0 / b;
            loss += alpha * logp[i] - q1[(i, 0)];
        } else {
            dq2[(i, 0)] = -1.0 / b;
            loss += alpha * logp[i] - q2[(i, 0)];
        }
    }
    let dx = c1.backward(&cache1, &dq1, false) + c2.backward(&cache2, &dq2, false);
    let da = dx.slice(s![.., OBS_DIM..]);
    let dlogp = Array1::from_elem(n, alpha / b);
    alice.backward(&pa, &da.slice(s![.., ..d]).to_owned(), &dlogp);
    bob.backward(&pb, &da.slice(s![.., d..]).to_owned(), &dlogp);
    Ok(ActorStep {
        loss: loss / b,
        mean_log_prob: logp.mean().unwrap_or(0.0),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
}

pub struct Sac {
    config: SacConfig,
    n_antennas: usize,
    actors: [Actor; 2],
    critics: [Mlp<f64>; 2],
    targets: [Mlp<f64>; 2],
    log_alpha: LogAlpha,
    opt_actors: [Adam; 2],
    opt_critics: [Adam; 2],
    opt_alpha: Adam,
    target_entropy: f64,
    rng: RngStream,
}

impl Sac {
    /// `rng` drives initialization, exploration noise and batch sampling.
    pub fn new(config: SacConfig, n_antennas: usize, mut rng: RngStream) -> Result<Self> {
        config.validate()?;
        if n_antennas == 0 {
            return Err(Error::param("n_antennas", "must be at least 1"));
        }
        let d = 2 * n_antennas;
        let h = config.hidden.clone();
        let actors = [Actor::new(&h, d, &mut rng)?, Actor::new(&h, d, &mut rng)?];
        let critics = [
            Mlp::new(OBS_DIM + 2 * d, &h, 1, &mut rng)?,
            Mlp::new(OBS_DIM + 2 * d, &h, 1, &mut rng)?,
        ];
        let targets = critics.clone();
        let target_entropy = config.entropy_target(2 * d);
        let log_alpha = LogAlpha(Param::filled(1, 1, config.alpha_init.ln()));
        Ok(Self {
            opt_actors: [Adam::new(config.lr_actor), Adam::new(config.lr_actor)],
            opt_critics: [Adam::new(config.lr_critic), Adam::new(config.lr_critic)],
            opt_alpha: Adam::new(config.lr_alpha),
            config,
            n_antennas,
            actors,
            critics,
            targets,
            log_alpha,
            target_entropy,
            rng,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn agent_action_dim(&self) -> usize {
        2 * self.n_antennas
    }

    pub fn joint_action_dim(&self) -> usize {
        4 * self.n_antennas
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.0.value[(0, 0)].exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn actors(&self) -> [&Actor; 2] {
        [&self.actors[0], &self.actors[1]]
    }

    pub fn critics(&self) -> [&Mlp<f64>; 2] {
        [&self.critics[0], &self.critics[1]]
    }

    pub fn targets(&self) -> [&Mlp<f64>; 2] {
        [&self.targets[0], &self.targets[1]]
    }

    pub fn rng_mut(&mut self) -> &mut RngStream {
        &mut self.rng
    }

    /// Joint raw action for one observation; sampled when exploring,
    /// `tanh(mean)` otherwise.
    pub fn act(&mut self, obs: &Observation, explore: bool) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, OBS_DIM), obs.as_slice().to_vec()).expect("5 wide");
        let d = self.agent_action_dim();
        let mut out = Vec::with_capacity(2 * d);
        for k in 0..2 {
            let a = if explore {
                let noise = normal_matrix(1, d, &mut self.rng);
                self.actors[k].sample(&x, &noise)?.sample.action
            } else {
                self.actors[k].deterministic(&x)?
            };
            out.extend(a.iter().copied());
        }
        Ok(out)
    }

    pub fn random_action(&mut self) -> Vec<f64> {
        (0..self.joint_action_dim())
            .map(|_| self.rng.uniform_in(-1.0, 1.0))
            .collect()
    }

    /// Targets `y` for a batch, sampling next actions from the current actors.
    pub fn bellman_targets(&self, batch: &Batch, noise: &ActorNoise) -> Result<Array1<f64>> {
        let pa = self.actors[0].sample(&batch.next_obs, &noise.alice)?;
        let pb = self.actors[1].sample(&batch.next_obs, &noise.bob)?;
        let joint = concatenate![Axis(1), pa.sample.action, pb.sample.action];
        let x = critic_input(&batch.next_obs, &joint);
        let q1 = column(self.targets[0].predict(&x)?);
        let q2 = column(self.targets[1].predict(&x)?);
        let logp = &pa.sample.log_prob + &pb.sample.log_prob;
        Ok(critic_targets(
            &batch.rewards,
            &batch.done,
            &q1,
            &q2,
            &logp,
            self.config.gamma,
            self.alpha(),
        ))
    }

    /// One gradient step on both critics toward fixed targets `y`.
    /// Returns the mean of the two critic losses.
    pub fn update_critics(&mut self, batch: &Batch, y: &Array1<f64>) -> Result<f64> {
        let x = critic_input(&batch.obs, &batch.actions);
        let mut total = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(self.opt_critics.iter_mut()) {
            zero_grads(critic);
            let (q, cache) = critic.forward(&x)?;
            let (loss, dq) = critic_loss(&column(q), y);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    what: "critic loss".into(),
                    dump: batch.dump(),
                });
            }
            critic.backward(&cache, &dq.insert_axis(Axis(1)), true);
            opt.apply(critic);
            total += loss;
        }
        Ok(0.5 * total)
    }

    pub fn update_actors(&mut self, batch: &Batch, noise: &ActorNoise) -> Result<ActorStep> {
        let alpha = self.alpha();
        let [a0, a1] = &mut self.actors;
        zero_grads(a0);
        zero_grads(a1);
        let [c0, c1] = &mut self.critics;
        let step = actor_loss_backward([a0, a1], [c0, c1], alpha, &batch.obs, noise)?;
        if !step.loss.is_finite() {
            return Err(Error::Divergence {
                what: "actor loss".into(),
                dump: batch.dump(),
            });
        }
        for (actor, opt) in self.actors.iter_mut().zip(self.opt_actors.iter_mut()) {
            opt.apply(actor);
        }
        Ok(step)
    }

    /// Adjusts the temperature given the (detached) mean joint log-probability.
    pub fn update_alpha(&mut self, mean_log_prob: f64) -> Result<f64> {
        let alpha = self.alpha();
        let (loss, d_alpha) = alpha_loss(alpha, mean_log_prob, self.target_entropy);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                what: "alpha loss".into(),
                dump: format!("alpha={alpha} mean_log_prob={mean_log_prob}"),
            });
        }
        let p = &mut self.log_alpha.0;
        p.grad[(0, 0)] = d_alpha * alpha;
        self.opt_alpha.apply(&mut self.log_alpha);
        Ok(loss)
    }

    pub fn update_targets(&mut self) -> Result<()> {
        let tau = self.config.tau_target;
        for (t, c) in self.targets.iter_mut().zip(self.critics.iter()) {
            soft_update(t, c, tau)?;
        }
        Ok(())
    }

    /// Full update from one sampled batch.
    pub fn update(&mut self, buffer: &ReplayBuffer) -> Result<UpdateStats> {
        let batch = buffer.sample(self.config.batch_size, &mut self.rng)?;
        let b = batch.len();
        let d = self.agent_action_dim();
        let next_noise = ActorNoise::draw(b, d, &mut self.rng);
        let y = self.bellman_targets(&batch, &next_noise)?;
        let critic_loss = self.update_critics(&batch, &y)?;
        let noise = ActorNoise::draw(b, d, &mut self.rng);
        let step = self.update_actors(&batch, &noise)?;
        let alpha_loss = self.update_alpha(step.mean_log_prob)?;
        self.update_targets()?;
        Ok(UpdateStats {
            critic_loss,
            actor_loss: step.loss,
            alpha_loss,
            alpha: self.alpha(),
            mean_log_prob: step.mean_log_prob,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.capture("actor_alice", &self.actors[0]);
        ck.capture("actor_bob", &self.actors[1]);
        ck.capture("critic1", &self.critics[0]);
        ck.capture("critic2", &self.critics[1]);
        ck.capture("target1", &self.targets[0]);
        ck.capture("target2", &self.targets[1]);
        ck.capture("temperature", &self.log_alpha);
        ck
    }

    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.restore("actor_alice", &mut self.actors[0])?;
        ck.restore("actor_bob", &mut self.actors[1])?;
        ck.restore("critic1", &mut self.critics[0])?;
        ck.restore("critic2", &mut self.critics[1])?;
        ck.restore("target1", &mut self.targets[0])?;
        ck.restore("target2", &mut self.targets[1])?;
        ck.restore("temperature", &mut self.log_alpha)
    }

    /// Re-syncs the targets with the online critics.
    pub fn hard_sync_targets(&mut self) -> Result<()> {
        for (t, c) in self.targets.iter_mut().zip(self.critics.iter()) {
            copy_params(t, c)?;
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_rk: f64,
    pub mean_rd: f64,
    pub eavesdrop_frac: f64,
    pub alpha: f64,
    /// Empty while still in warmup.
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha_loss: Option<f64>,
    pub clamp_count: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    /// Means of reward, key rate and data rate over the last `window` episodes.
    pub fn converged(&self, window: usize) -> (f64, f64, f64) {
        let tail = &self.episodes[self.episodes.len().saturating_sub(window.max(1))..];
        if tail.is_empty() {
            return (f64::NAN, f64::NAN, f64::NAN);
        }
        let n = tail.len() as f64;
        let sum = |f: fn(&EpisodeLog) -> f64| tail.iter().map(f).sum::<f64>() / n;
        (
            sum(|e| e.mean_reward),
            sum(|e| e.mean_rk),
            sum(|e| e.mean_rd),
        )
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.episodes {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let episodes = r.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Self { episodes })
    }
}

#[derive(Default)]
struct EpisodeAcc {
    steps: usize,
    reward: f64,
    rk: f64,
    rd: f64,
    eaves: usize,
    updates: usize,
    critic: f64,
    actor: f64,
    alpha: f64,
}

/// Runs `episodes` episodes of interaction and learning.
pub fn train(env: &mut Environment, agent: &mut Sac, episodes: usize) -> Result<TrainingLog> {
    train_with(env, agent, episodes, |_| {})
}

/// As [`train`], calling `on_episode` after each logged episode.
pub fn train_with(
    env: &mut Environment,
    agent: &mut Sac,
    episodes: usize,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<TrainingLog> {
    if env.config().n_antennas() != agent.n_antennas {
        return Err(Error::shape(
            "agent antennas",
            env.config().n_antennas(),
            agent.n_antennas,
        ));
    }
    let mut buffer = ReplayBuffer::new(agent.config.buffer_capacity);
    let mut log = TrainingLog::default();
    let mut total_steps = 0usize;
    for episode in 0..episodes {
        let clamps_before = env.diagnostics().clamp_count;
        let mut obs = env.reset()?;
        let mut acc = EpisodeAcc::default();
        loop {
            let action = if total_steps < agent.config.warmup_steps {
                agent.random_action()
            } else {
                agent.act(&obs, true)?
            };
            let out = env.step(&action)?;
            acc.steps += 1;
            acc.reward += out.reward;
            acc.rk += out.report.key_rate;
            acc.rd += out.report.rd;
            acc.eaves += out.report.mode.is_eavesdropping() as usize;
            buffer.push(Transition {
                obs,
                action,
                reward: out.reward,
                next_obs: out.obs,
                done: out.done,
            });
            total_steps += 1;
            if total_steps >= agent.config.warmup_steps && buffer.len() >= agent.config.batch_size {
                for _ in 0..agent.config.updates_per_step {
                    let st = agent.update(&buffer)?;
                    acc.updates += 1;
                    acc.critic += st.critic_loss;
                    acc.actor += st.actor_loss;
                    acc.alpha += st.alpha_loss;
                }
            }
            obs = out.obs;
            if out.done {
                break;
            }
        }
        let n = acc.steps as f64;
        let u = acc.updates as f64;
        let avg = |x: f64| (acc.updates > 0).then(|| x / u);
        let row = EpisodeLog {
            episode,
            mean_reward: acc.reward / n,
            mean_rk: acc.rk / n,
            mean_rd: acc.rd / n,
            eavesdrop_frac: acc.eaves as f64 / n,
            alpha: agent.alpha(),
            critic_loss: avg(acc.critic),
            actor_loss: avg(acc.actor),
            alpha_loss: avg(acc.alpha),
            clamp_count: env.diagnostics().clamp_count - clamps_before,
        };
        on_episode(&row);
        log.episodes.push(row);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelParams;
    use crate::env::{EnvConfig, ObservationMode};
    use crate::nncore::{flat_values, gradcheck};

    fn tiny_config() -> SacConfig {
        SacConfig {
            batch_size: 8,
            buffer_capacity: 64,
            warmup_steps: 16,
            hidden: vec![6, 6],
            ..SacConfig::default()
        }
    }

    fn env_config(n: usize) -> EnvConfig {
        EnvConfig {
            channel: ChannelParams::stationary(n, 0.9, 1.5, 0.9),
            power: 100.0,
            p_max: 100.0,
            lambda_k: 0.5,
            bandwidth: 1.0,
            episode_len: 20,
            observation_mode: ObservationMode::Full,
        }
    }

    fn random_batch(b: usize, a: usize, rng: &mut RngStream) -> Batch {
        Batch {
            obs: gradcheck::random_matrix(b, OBS_DIM, rng),
            actions: gradcheck::random_matrix(b, a, rng).mapv(f64::tanh),
            rewards: Array1::from_shape_fn(b, |_| rng.uniform_in(0.0, 5.0)),
            next_obs: gradcheck::random_matrix(b, OBS_DIM, rng),
            done: Array1::from_shape_fn(b, |i| (i % 3 == 0) as u8 as f64),
        }
    }

    fn bits<M: Parameterized<f64>>(m: &M) -> Vec<u64> {
        flat_values(m).iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn bellman_target_hand_values() {
        let y = critic_targets(
            &Array1::from(vec![1.0, 1.0, 1.0]),
            &Array1::from(vec![0.0, 0.0, 1.0]),
            &Array1::from(vec![0.0, 2.0, 2.0]),
            &Array1::from(vec![0.0, 3.0, 3.0]),
            &Array1::from(vec![0.0, 0.0, 0.0]),
            0.99,
            0.2,
        );
        assert_eq!(y[0], 1.0);
        assert!((y[1] - (1.0 + 0.99 * 2.0)).abs() < 1e-15);
        assert_eq!(y[2], 1.0);
    }

    #[test]
    fn critic_loss_hand_values() {
        let y = Array1::from(vec![1.0, 2.0]);
        assert_eq!(critic_loss(&y, &y).0, 0.0);
        assert_eq!(
            critic_loss(&Array1::from(vec![0.0]), &Array1::from(vec![1.0])).0,
            0.5
        );
    }

    #[test]
    fn alpha_gradient_hand_values() {
        let (_, g) = alpha_loss(0.02, -10.0, -16.0);
        assert_eq!(g, 26.0);
        // Equilibrium: the entropy estimate -mean(logp) equals the target.
        let (l, g) = alpha_loss(0.02, 16.0, -16.0);
        assert_eq!((l, g), (0.0, 0.0));
    }

    #[test]
    fn alpha_direction_and_positivity() {
        let h0 = -8.0;
        // Entropy estimate above the target: the temperature never rises.
        let mut agent = Sac::new(tiny_config(), 2, RngStream::new(0, 0)).unwrap();
        assert_eq!(agent.target_entropy(), h0);
        let mut prev = agent.alpha();
        for _ in 0..200 {
            agent.update_alpha(-h0 - 5.0).unwrap();
            assert!(agent.alpha() <= prev);
            prev = agent.alpha();
        }
        assert!(prev < 0.02);
        // Below the target: it never falls.
        let mut agent = Sac::new(tiny_config(), 2, RngStream::new(0, 0)).unwrap();
        let mut prev = agent.alpha();
        for _ in 0..200 {
            agent.update_alpha(-h0 + 5.0).unwrap();
            assert!(agent.alpha() >= prev);
            prev = agent.alpha();
        }
        assert!(prev > 0.02);
        let mut big = Sac::new(
            SacConfig {
                lr_alpha: 0.1,
                ..tiny_config()
            },
            2,
            RngStream::new(0, 0),
        )
        .unwrap();
        for _ in 0..100_000 {
            big.update_alpha(100.0).unwrap();
        }
        assert!(big.alpha() > 0.0);
    }

    #[test]
    fn soft_update_endpoints_and_rate() {
        let mut rng = RngStream::new(2, 0);
        let online = Mlp::<f64>::new(3, &[4], 1, &mut rng).unwrap();
        let start = Mlp::<f64>::new(3, &[4], 1, &mut rng).unwrap();

        let mut t = start.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(bits(&t), bits(&start));
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(bits(&t), bits(&online));

        let dist = |a: &Mlp<f64>| {
            flat_values(a)
                .iter()
                .zip(flat_values(&online))
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut t = start.clone();
        let mut prev = dist(&t);
        for _ in 0..50 {
            soft_update(&mut t, &online, 0.005).unwrap();
            let d = dist(&t);
            assert!((d / prev - 0.995).abs() < 1e-9);
            prev = d;
        }
        let wrong = Mlp::<f64>::new(3, &[5], 1, &mut rng).unwrap();
        assert!(soft_update(&mut t, &wrong, 0.5).is_err());
    }

    #[test]
    fn replay_is_a_ring_and_uniform() {
        let mut buf = ReplayBuffer::new(4);
        let t = |r: f64| Transition {
            obs: Observation::default(),
            action: vec![0.0; 4],
            reward: r,
            next_obs: Observation::default(),
            done: false,
        };
        for k in 0..6 {
            buf.push(t(k as f64));
        }
        assert_eq!(buf.len(), 4);
        let rewards: Vec<f64> = (0..4).map(|i| buf.get(i).unwrap().reward).collect();
        assert_eq!(rewards, vec![4.0, 5.0, 2.0, 3.0]);

        let mut buf = ReplayBuffer::new(50);
        for k in 0..50 {
            buf.push(t(k as f64));
        }
        let n = 100_000;
        let mut counts = [0usize; 50];
        for i in buf.sample_indices(n, &mut RngStream::new(8, 0)) {
            counts[i] += 1;
        }
        let e = n as f64 / 50.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99th percentile of chi-square with 49 degrees of freedom.
        assert!(chi2 < 74.92, "chi2 {chi2}");
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        let mut rng = RngStream::new(3, 0);
        let agent = Sac::new(tiny_config(), 2, RngStream::new(3, 1)).unwrap();
        let batch = random_batch(5, 8, &mut rng);
        let y = Array1::from_shape_fn(5, |_| rng.normal());
        let x = critic_input(&batch.obs, &batch.actions);
        let mut critic = agent.critics[0].clone();
        zero_grads(&mut critic);
        let (q, cache) = critic.forward(&x).unwrap();
        let (_, dq) = critic_loss(&column(q), &y);
        critic.backward(&cache, &dq.insert_axis(Axis(1)), true);
        let err = gradcheck::check_params(&mut critic, |c| {
            critic_loss(&column(c.predict(&x).unwrap()), &y).0
        });
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        let mut rng = RngStream::new(4, 0);
        let agent = Sac::new(tiny_config(), 2, RngStream::new(4, 1)).unwrap();
        let obs = gradcheck::random_matrix(6, OBS_DIM, &mut rng);
        let noise = ActorNoise::draw(6, 4, &mut rng);
        let alpha = 0.3;
        let mut actors = agent.actors.clone();
        let mut critics = agent.critics.clone();
        for a in actors.iter_mut() {
            zero_grads(a);
        }
        {
            let [a0, a1] = &mut actors;
            let [c0, c1] = &mut critics;
            actor_loss_backward([a0, a1], [c0, c1], alpha, &obs, &noise).unwrap();
        }
        let cr = [&critics[0], &critics[1]];
        let bob = actors[1].clone();
        let mut alice = actors[0].clone();
        let e0 = gradcheck::check_params(&mut alice, |a| {
            actor_loss_value([a, &bob], cr, alpha, &obs, &noise).unwrap()
        });
        let alice = actors[0].clone();
        let mut bob = actors[1].clone();
        let e1 = gradcheck::check_params(&mut bob, |b| {
            actor_loss_value([&alice, b], cr, alpha, &obs, &noise).unwrap()
        });
        assert!(e0 <= 1e-4 && e1 <= 1e-4, "{e0} {e1}");
    }

    #[test]
    fn flat_critic_and_zero_alpha_give_no_actor_gradient() {
        let mut rng = RngStream::new(5, 0);
        let agent = Sac::new(tiny_config(), 2, RngStream::new(5, 1)).unwrap();
        let mut critics = agent.critics.clone();
        for c in critics.iter_mut() {
            c.visit_mut(&mut |_, p| p.value.fill(0.0));
            c.output_layer_mut().b.value.fill(1.5);
        }
        let mut actors = agent.actors.clone();
        for a in actors.iter_mut() {
            zero_grads(a);
        }
        let obs = gradcheck::random_matrix(4, OBS_DIM, &mut rng);
        let noise = ActorNoise::draw(4, 4, &mut rng);
        let [a0, a1] = &mut actors;
        let [c0, c1] = &mut critics;
        actor_loss_backward([a0, a1], [c0, c1], 0.0, &obs, &noise).unwrap();
        for a in &actors {
            a.visit(&mut |_, p| assert!(p.grad.iter().all(|&g| g == 0.0)));
        }
    }

    #[test]
    fn actor_follows_increasing_critic() {
        // One hidden block whose first unit sees z = (a, 1, 0, ..) with `a`
        // Alice's first action coordinate. After the norm that unit reads
        // (5a - 1) / sqrt(5a^2 - 2a + 5), strictly increasing in `a`.
        let mut rng = RngStream::new(6, 0);
        let cfg = SacConfig {
            lr_actor: 1e-2,
            hidden: vec![6],
            ..tiny_config()
        };
        let mut agent = Sac::new(cfg, 2, RngStream::new(6, 1)).unwrap();
        for c in agent.critics.iter_mut() {
            c.visit_mut(&mut |name, p| {
                p.value.fill(0.0);
                match name {
                    "dense0.w" => p.value[(OBS_DIM, 0)] = 1.0,
                    "dense0.b" => p.value[(0, 1)] = 1.0,
                    "norm0.gain" => p.value.fill(1.0),
                    "norm0.offset" => p.value[(0, 0)] = 5.0,
                    "out.w" => p.value[(0, 0)] = 1.0,
                    _ => {}
                }
            });
        }
        let obs = gradcheck::random_matrix(32, OBS_DIM, &mut rng);
        let probe = obs.clone();
        let before = agent.actors[0]
            .mean_log_std(&probe)
            .unwrap()
            .0
            .column(0)
            .mean()
            .unwrap();
        let batch = Batch {
            obs,
            actions: Array2::zeros((32, 8)),
            rewards: Array1::zeros(32),
            next_obs: Array2::zeros((32, OBS_DIM)),
            done: Array1::zeros(32),
        };
        let noise = ActorNoise::draw(32, 4, &mut rng);
        agent.update_actors(&batch, &noise).unwrap();
        let after = agent.actors[0]
            .mean_log_std(&probe)
            .unwrap()
            .0
            .column(0)
            .mean()
            .unwrap();
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn updates_do_not_leak() {
        let mut rng = RngStream::new(7, 0);
        let mut agent = Sac::new(tiny_config(), 2, RngStream::new(7, 1)).unwrap();
        let batch = random_batch(8, 8, &mut rng);
        let noise = ActorNoise::draw(8, 4, &mut rng);

        let actors_before = (bits(&agent.actors[0]), bits(&agent.actors[1]));
        let y = agent.bellman_targets(&batch, &noise).unwrap();
        agent.update_critics(&batch, &y).unwrap();
        assert_eq!(
            (bits(&agent.actors[0]), bits(&agent.actors[1])),
            actors_before
        );

        let critics_before = (bits(&agent.critics[0]), bits(&agent.critics[1]));
        let alpha_before = agent.alpha();
        let step = agent.update_actors(&batch, &noise).unwrap();
        assert_eq!(
            (bits(&agent.critics[0]), bits(&agent.critics[1])),
            critics_before
        );
        assert_eq!(agent.alpha(), alpha_before);

        let actors_before = (bits(&agent.actors[0]), bits(&agent.actors[1]));
        agent.update_alpha(step.mean_log_prob).unwrap();
        assert_eq!(
            (bits(&agent.actors[0]), bits(&agent.actors[1])),
            actors_before
        );
        assert_eq!(
            (bits(&agent.critics[0]), bits(&agent.critics[1])),
            critics_before
        );
    }

    #[test]
    fn bootstrap_uses_the_smaller_target() {
        let mut rng = RngStream::new(9, 0);
        let mut agent = Sac::new(tiny_config(), 2, RngStream::new(9, 1)).unwrap();
        // Make target 2 read uniformly higher than target 1.
        agent.targets[1] = agent.targets[0].clone();
        agent.targets[1].output_layer_mut().b.value[(0, 0)] += 10.0;
        let mut batch = random_batch(16, 8, &mut rng);
        batch.done.fill(0.0);
        let noise = ActorNoise::draw(16, 4, &mut rng);
        let y = agent.bellman_targets(&batch, &noise).unwrap();
        let mut swapped = Sac::new(tiny_config(), 2, RngStream::new(9, 1)).unwrap();
        swapped.targets = [agent.targets[1].clone(), agent.targets[0].clone()];
        swapped.actors = agent.actors.clone();
        let y2 = swapped.bellman_targets(&batch, &noise).unwrap();
        assert_eq!(y, y2);
        let pa = agent.actors[0]
            .sample(&batch.next_obs, &noise.alice)
            .unwrap();
        let pb = agent.actors[1].sample(&batch.next_obs, &noise.bob).unwrap();
        let joint = concatenate![Axis(1), pa.sample.action, pb.sample.action];
        let q1 = column(
            agent.targets[0]
                .predict(&critic_input(&batch.next_obs, &joint))
                .unwrap(),
        );
        let logp = &pa.sample.log_prob + &pb.sample.log_prob;
        for i in 0..16 {
            let expect = batch.rewards[i] + 0.99 * (q1[i] - agent.alpha() * logp[i]);
            assert!((y[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn dims_for_eight_antennas() {
        let agent = Sac::new(tiny_config(), 8, RngStream::new(0, 0)).unwrap();
        assert_eq!(agent.agent_action_dim(), 16);
        assert_eq!(agent.joint_action_dim(), 32);
        assert_eq!(agent.target_entropy(), -32.0);
    }

    #[test]
    fn smoke_training_is_deterministic() {
        let run = || {
            let mut env = Environment::new(env_config(2), RngStream::new(1, 0), None).unwrap();
            let mut agent = Sac::new(tiny_config(), 2, RngStream::new(1, 1)).unwrap();
            train(&mut env, &mut agent, 3).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.episodes.len(), 3);
        assert!(a.episodes[2].critic_loss.is_some());
        let dir = tempfile::tempdir().unwrap();
        a.write_csv(dir.path().join("a.csv")).unwrap();
        b.write_csv(dir.path().join("b.csv")).unwrap();
        let fa = std::fs::read(dir.path().join("a.csv")).unwrap();
        assert_eq!(fa, std::fs::read(dir.path().join("b.csv")).unwrap());
        let back = TrainingLog::read_csv(dir.path().join("a.csv")).unwrap();
        assert_eq!(back.episodes.len(), 3);
    }

    #[test]
    fn checkpoint_round_trip() {
        let agent = Sac::new(tiny_config(), 2, RngStream::new(1, 0)).unwrap();
        let ck = agent.checkpoint();
        let mut other = Sac::new(tiny_config(), 2, RngStream::new(2, 0)).unwrap();
        other
            .restore(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap())
            .unwrap();
        assert_eq!(other.checkpoint(), ck);
    }

    #[test]
    fn divergence_is_reported_with_batch() {
        let mut rng = RngStream::new(3, 0);
        let mut agent = Sac::new(tiny_config(), 2, RngStream::new(3, 1)).unwrap();
        let batch = random_batch(4, 8, &mut rng);
        let y = Array1::from_elem(4, f64::NAN);
        match agent.update_critics(&batch, &y) {
            Err(Error::Divergence { dump, .. }) => assert!(dump.lines().count() == 5),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}

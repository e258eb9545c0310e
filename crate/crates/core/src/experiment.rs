//! Configuration, seeded runs, sweeps and metrics export.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{evaluate_baseline, tail_means, BaselineKind, EpisodeStats};
use crate::channel::{calibrate_tau, ChannelParams};
use crate::env::{EnvConfig, Environment, EvePredictor, ObservationMode};
use crate::error::{Error, Result};
use crate::numerics::{mix_seed, RngStream};
use crate::predictor::{
    build_dataset, collect_rollout, train_predictor, write_rollout_csv, Predictor, PredictorConfig,
    PredictorMetrics,
};
use crate::sac::{train, Sac, SacConfig, TrainingLog};

/// Episodes averaged for the converged figures.
pub const CONVERGED_WINDOW: usize = 50;
/// Monte-Carlo draws behind the eavesdropping threshold.
const TAU_SAMPLES: usize = 200_000;
const TAU_SEED: u64 = 0x7a0;

const STREAM_CHANNEL: u64 = 1;
const STREAM_AGENT: u64 = 2;
const STREAM_BASELINE: u64 = 3;
const SALT_PREDICTOR: u64 = 0x9ed1c7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub n_antennas: usize,
    pub rho: f64,
    /// `None` keeps the process stationary at unit variance, `1 - rho^2`.
    pub sigma_zeta2: Option<f64>,
    pub sigma_z2: f64,
    /// `None` calibrates the threshold to `eve_target_fraction`.
    pub tau: Option<f64>,
    pub eve_target_fraction: f64,
    pub kappa: f64,
    pub delta: u32,
    pub power: f64,
    pub p_max: f64,
    pub lambda_k: f64,
    pub bandwidth: f64,
    pub episode_len: usize,
    pub observation_mode: ObservationMode,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            n_antennas: 4,
            rho: 0.9,
            sigma_zeta2: None,
            sigma_z2: 1.0,
            tau: None,
            eve_target_fraction: 0.5,
            kappa: 0.9,
            delta: 1,
            power: 100.0,
            p_max: 100.0,
            lambda_k: 0.5,
            bandwidth: 1.0,
            episode_len: 200,
            observation_mode: ObservationMode::Full,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub episodes: usize,
    pub output_dir: PathBuf,
    /// Episodes for each reference policy; `None` matches `episodes`.
    pub baseline_episodes: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 200,
            output_dir: PathBuf::from("runs/default"),
            baseline_episodes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambda_k: Vec<f64>,
    pub n_antennas: Vec<usize>,
    pub power: Vec<f64>,
    pub observation_mode: Vec<ObservationMode>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lambda_k: vec![0.0, 0.25, 0.5, 0.75, 0.9, 1.0],
            n_antennas: vec![2, 4, 8],
            power: vec![10.0, 100.0],
            observation_mode: ObservationMode::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub sac: SacConfig,
    pub predictor: PredictorConfig,
    pub run: RunSection,
    pub sweep: SweepSection,
}

fn field_err(section: &str, e: Error) -> Error {
    match e {
        Error::Parameter { name, reason } => Error::config(format!("{section}.{name}"), reason),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." {
                    "<document>".into()
                } else {
                    path
                },
                e.inner().to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.env;
        if e.n_antennas == 0 {
            return Err(Error::config("env.n_antennas", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&e.eve_target_fraction) {
            return Err(Error::config(
                "env.eve_target_fraction",
                "must lie in [0,1]",
            ));
        }
        if let Some(tau) = e.tau {
            if !(tau >= 0.0) || !tau.is_finite() {
                return Err(Error::config(
                    "env.tau",
                    "must be a finite non-negative number",
                ));
            }
        }
        self.env_config_with_tau(e.tau.unwrap_or(0.0))
            .validate()
            .map_err(|err| field_err("env", err))?;
        self.sac.validate().map_err(|err| field_err("sac", err))?;
        self.predictor
            .validate()
            .map_err(|err| field_err("predictor", err))?;
        if self.run.episodes == 0 {
            return Err(Error::config("run.episodes", "must be positive"));
        }
        if self.run.baseline_episodes == Some(0) {
            return Err(Error::config("run.baseline_episodes", "must be positive"));
        }
        if self.sweep.lambda_k.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::config("sweep.lambda_k", "values must lie in [0,1]"));
        }
        if self.sweep.n_antennas.contains(&0) {
            return Err(Error::config(
                "sweep.n_antennas",
                "values must be at least 1",
            ));
        }
        if self
            .sweep
            .power
            .iter()
            .any(|&p| !(p >= 0.0 && p <= e.p_max))
        {
            return Err(Error::config(
                "sweep.power",
                "values must lie in [0, p_max]",
            ));
        }
        Ok(())
    }

    fn env_config_with_tau(&self, tau: f64) -> EnvConfig {
        let e = &self.env;
        EnvConfig {
            channel: ChannelParams {
                n_antennas: e.n_antennas,
                rho: e.rho,
                sigma_zeta2: e.sigma_zeta2.unwrap_or(1.0 - e.rho * e.rho),
                sigma_z2: e.sigma_z2,
                tau,
                kappa: e.kappa,
                delta: e.delta,
            },
            power: e.power,
            p_max: e.p_max,
            lambda_k: e.lambda_k,
            bandwidth: e.bandwidth,
            episode_len: e.episode_len,
            observation_mode: e.observation_mode,
        }
    }

    /// Fills in every derived value (the calibrated threshold).
    pub fn resolve(&mut self) -> Result<()> {
        if self.env.tau.is_none() {
            let tau = calibrate_tau(
                self.env.n_antennas,
                self.env.eve_target_fraction,
                TAU_SAMPLES,
                &mut RngStream::new(TAU_SEED, self.env.n_antennas as u64),
            )?;
            self.env.tau = Some(tau);
        }
        Ok(())
    }

    /// Environment configuration; requires [`ExperimentConfig::resolve`].
    pub fn env_config(&self) -> Result<EnvConfig> {
        let tau = self
            .env
            .tau
            .ok_or_else(|| Error::config("env.tau", "unresolved; call resolve() first"))?;
        Ok(self.env_config_with_tau(tau))
    }

    pub fn converged_window(&self) -> usize {
        CONVERGED_WINDOW.min(self.run.episodes)
    }

    fn baseline_episodes(&self) -> usize {
        self.run.baseline_episodes.unwrap_or(self.run.episodes)
    }
}

/// Reads, validates and resolves a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    cfg.resolve()?;
    Ok(cfg)
}

/// Applies `PLKG_SEED` / `PLKG_OUT` if set.
pub fn apply_env_overrides(cfg: &mut ExperimentConfig) -> Result<()> {
    if let Ok(s) = std::env::var("PLKG_SEED") {
        cfg.run.seed = s
            .trim()
            .parse()
            .map_err(|_| Error::config("PLKG_SEED", format!("not an unsigned integer: {s:?}")))?;
    }
    if let Ok(o) = std::env::var("PLKG_OUT") {
        if !o.is_empty() {
            cfg.run.output_dir = PathBuf::from(o);
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_stats_csv(path: &Path, stats: &[EpisodeStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in stats {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Converged averages of one policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeans {
    pub reward: f64,
    pub rk: f64,
    pub rd: f64,
}

impl PolicyMeans {
    fn from_tuple((reward, rk, rd): (f64, f64, f64)) -> Self {
        Self { reward, rk, rd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub episodes: usize,
    pub window: usize,
    pub tau: f64,
    pub observation_mode: ObservationMode,
    /// Absent for baseline-only runs.
    pub sac: Option<PolicyMeans>,
    pub random: Option<PolicyMeans>,
    pub oracle: Option<PolicyMeans>,
    pub eavesdrop_frac: Option<f64>,
    pub clamp_count: Option<u64>,
    pub predictor: Option<PredictorMetrics>,
}

fn predictor_rngs(seed: u64) -> (RngStream, RngStream, RngStream) {
    let s = mix_seed(seed, SALT_PREDICTOR);
    (
        RngStream::new(s, 0),
        RngStream::new(s, 1),
        RngStream::new(s, 2),
    )
}

/// Pretrains the adversary predictor for the configured channel. Writes the
/// rollout CSV, the checkpoint and the metrics into `out` when given.
pub fn pretrain_predictor(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<(Predictor, PredictorMetrics)> {
    let env = cfg.env_config()?;
    let p = &cfg.predictor;
    let (mut ch, mut beams, mut train_rng) = predictor_rngs(cfg.run.seed);
    let rollout = collect_rollout(
        &env.channel,
        env.power,
        p.rollout_slots,
        &mut ch,
        &mut beams,
    )?;
    let data = build_dataset(&rollout, p.seq_len, cfg.run.seed)?;
    let (model, metrics) = train_predictor(&data, p, &mut train_rng)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_rollout_csv(&rollout, dir.join("predictor_rollout.csv"))?;
        model.checkpoint().save(dir.join("predictor.ckpt"))?;
        write_json(&dir.join("predictor_metrics.json"), &metrics)?;
    }
    Ok((model, metrics))
}

fn baseline_means(
    cfg: &ExperimentConfig,
    env: &EnvConfig,
    kind: BaselineKind,
    out: &Path,
) -> Result<PolicyMeans> {
    let mut e = Environment::new(
        EnvConfig {
            observation_mode: ObservationMode::Full,
            ..env.clone()
        },
        RngStream::new(cfg.run.seed, STREAM_CHANNEL),
        None,
    )?;
    let mut rng = RngStream::new(cfg.run.seed, STREAM_BASELINE);
    let stats = evaluate_baseline(&mut e, kind, cfg.baseline_episodes(), &mut rng)?;
    write_stats_csv(&out.join(format!("baseline_{kind}.csv")), &stats)?;
    let window = CONVERGED_WINDOW.min(stats.len());
    Ok(PolicyMeans::from_tuple(tail_means(&stats, window)))
}

/// Everything a training run produced, for callers that keep going in-process.
pub struct RunOutput {
    pub summary: RunSummary,
    pub log: TrainingLog,
    pub agent: Sac,
    pub env: Environment,
}

/// Trains the agents and evaluates both reference policies on the same
/// channel stream. Writes `config.json`, `training_log.csv`,
/// `baseline_*.csv`, `agent.ckpt` and `summary.json` into `out`.
///
/// In partial-predicted mode `predictor` is used if given; otherwise one is
/// pretrained first.
pub fn run_training(
    cfg: &ExperimentConfig,
    out: &Path,
    predictor: Option<Arc<Predictor>>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let env_cfg = cfg.env_config()?;
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;

    let mut metrics = None;
    let eve: Option<Arc<dyn EvePredictor>> = match env_cfg.observation_mode {
        ObservationMode::PartialPredicted => {
            let model = match predictor {
                Some(m) => m,
                None => {
                    let (m, met) = pretrain_predictor(cfg, Some(out))?;
                    metrics = Some(met);
                    Arc::new(m)
                }
            };
            Some(model)
        }
        _ => None,
    };

    let mut env = Environment::new(
        env_cfg.clone(),
        RngStream::new(cfg.run.seed, STREAM_CHANNEL),
        eve,
    )?;
    let mut agent = Sac::new(
        cfg.sac.clone(),
        env_cfg.n_antennas(),
        RngStream::new(cfg.run.seed, STREAM_AGENT),
    )?;
    let log = train(&mut env, &mut agent, cfg.run.episodes)?;
    log.write_csv(out.join("training_log.csv"))?;
    agent.checkpoint().save(out.join("agent.ckpt"))?;

    let window = cfg.converged_window();
    let tail = &log.episodes[log.episodes.len() - window..];
    let random = baseline_means(cfg, &env_cfg, BaselineKind::Random, out)?;
    let oracle = baseline_means(cfg, &env_cfg, BaselineKind::OracleSvd, out)?;
    let summary = RunSummary {
        seed: cfg.run.seed,
        episodes: cfg.run.episodes,
        window,
        tau: env_cfg.channel.tau,
        observation_mode: env_cfg.observation_mode,
        sac: Some(PolicyMeans::from_tuple(log.converged(window))),
        random: Some(random),
        oracle: Some(oracle),
        eavesdrop_frac: Some(tail.iter().map(|e| e.eavesdrop_frac).sum::<f64>() / window as f64),
        clamp_count: Some(log.episodes.iter().map(|e| e.clamp_count).sum()),
        predictor: metrics,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(RunOutput {
        summary,
        log,
        agent,
        env,
    })
}

/// Pretrains the predictor into `run.output_dir` alongside the resolved config.
pub fn predict_train(cfg: &ExperimentConfig) -> Result<PredictorMetrics> {
    cfg.validate()?;
    let out = &cfg.run.output_dir;
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    pretrain_predictor(cfg, Some(out)).map(|(_, m)| m)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run_training(cfg, &cfg.run.output_dir, None).map(|o| o.summary)
}

/// Evaluates one reference policy without any training.
pub fn run_baseline(cfg: &ExperimentConfig, kind: BaselineKind) -> Result<RunSummary> {
    cfg.validate()?;
    let env_cfg = cfg.env_config()?;
    let out = &cfg.run.output_dir;
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let means = baseline_means(cfg, &env_cfg, kind, out)?;
    let (random, oracle) = match kind {
        BaselineKind::Random => (Some(means), None),
        BaselineKind::OracleSvd => (None, Some(means)),
    };
    let summary = RunSummary {
        seed: cfg.run.seed,
        episodes: cfg.baseline_episodes(),
        window: CONVERGED_WINDOW.min(cfg.baseline_episodes()),
        tau: env_cfg.channel.tau,
        observation_mode: ObservationMode::Full,
        sac: None,
        random,
        oracle,
        eavesdrop_frac: None,
        clamp_count: None,
        predictor: None,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    LambdaK,
    NAntennas,
    Power,
    ObservationMode,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::LambdaK => "lambda_k",
            SweepAxis::NAntennas => "n_antennas",
            SweepAxis::Power => "power",
            SweepAxis::ObservationMode => "observation_mode",
        }
    }

    /// Accepts the field names plus the short forms `N` and `P`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lambda_k" | "lambda" => Some(SweepAxis::LambdaK),
            "n_antennas" | "N" => Some(SweepAxis::NAntennas),
            "power" | "P" => Some(SweepAxis::Power),
            "observation_mode" | "mode" => Some(SweepAxis::ObservationMode),
            _ => None,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepValue {
    Number(f64),
    Mode(ObservationMode),
}

impl SweepValue {
    fn sort_key(&self) -> f64 {
        match self {
            SweepValue::Number(x) => *x,
            SweepValue::Mode(m) => ObservationMode::ALL
                .iter()
                .position(|x| x == m)
                .unwrap_or(0) as f64,
        }
    }
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Number(x) => write!(f, "{x}"),
            SweepValue::Mode(m) => write!(f, "{m}"),
        }
    }
}

/// Parses a comma-separated value list for `axis`.
pub fn parse_sweep_values(axis: SweepAxis, text: &str) -> Result<Vec<SweepValue>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match axis {
            SweepAxis::ObservationMode => ObservationMode::parse(s)
                .map(SweepValue::Mode)
                .ok_or_else(|| Error::config("values", format!("unknown observation mode {s:?}"))),
            SweepAxis::NAntennas => s
                .parse::<usize>()
                .map(|n| SweepValue::Number(n as f64))
                .map_err(|_| Error::config("values", format!("not an antenna count: {s:?}"))),
            _ => s
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(SweepValue::Number)
                .ok_or_else(|| Error::config("values", format!("not a number: {s:?}"))),
        })
        .collect()
}

pub fn default_sweep_values(cfg: &ExperimentConfig, axis: SweepAxis) -> Vec<SweepValue> {
    match axis {
        SweepAxis::LambdaK => cfg
            .sweep
            .lambda_k
            .iter()
            .map(|&x| SweepValue::Number(x))
            .collect(),
        SweepAxis::NAntennas => cfg
            .sweep
            .n_antennas
            .iter()
            .map(|&n| SweepValue::Number(n as f64))
            .collect(),
        SweepAxis::Power => cfg
            .sweep
            .power
            .iter()
            .map(|&x| SweepValue::Number(x))
            .collect(),
        SweepAxis::ObservationMode => cfg
            .sweep
            .observation_mode
            .iter()
            .map(|&m| SweepValue::Mode(m))
            .collect(),
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}

/// Configuration of one sweep point: axis value applied, seed derived from
/// the base seed and the point, output in its own subdirectory.
pub fn sweep_point(
    base: &ExperimentConfig,
    axis: SweepAxis,
    value: SweepValue,
) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match (axis, value) {
        (SweepAxis::LambdaK, SweepValue::Number(x)) => cfg.env.lambda_k = x,
        (SweepAxis::Power, SweepValue::Number(x)) => cfg.env.power = x,
        (SweepAxis::NAntennas, SweepValue::Number(x)) => {
            cfg.env.n_antennas = x as usize;
            // The threshold is a quantile of a norm over N antennas.
            if base.env.n_antennas != cfg.env.n_antennas {
                cfg.env.tau = None;
            }
        }
        (SweepAxis::ObservationMode, SweepValue::Mode(m)) => cfg.env.observation_mode = m,
        _ => {
            return Err(Error::config(
                "values",
                format!("{value} does not fit axis {axis}"),
            ))
        }
    }
    let tag = format!("{axis}={value}");
    cfg.run.seed = mix_seed(base.run.seed, fnv1a(&tag));
    cfg.run.output_dir = base.run.output_dir.join(&tag);
    cfg.validate()?;
    cfg.resolve()?;
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub mean_reward: Option<f64>,
    pub mean_rk: Option<f64>,
    pub mean_rd: Option<f64>,
    pub random_reward: Option<f64>,
    pub oracle_reward: Option<f64>,
    pub status: String,
}

/// Runs every point (sorted by axis value), recording failures instead of
/// stopping, and writes the merged table `sweep_<axis>.csv`.
pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[SweepValue],
) -> Result<Vec<SweepRow>> {
    sweep_with(base, axis, values, run_experiment)
}

/// As [`sweep`] with a custom per-point runner.
pub fn sweep_with(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[SweepValue],
    mut runner: impl FnMut(&ExperimentConfig) -> Result<RunSummary>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::config("values", "empty sweep"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.sort_key().total_cmp(&b.sort_key()));
    sorted.dedup();
    fs::create_dir_all(&base.run.output_dir)?;
    write_json(&base.run.output_dir.join("config.json"), base)?;
    let mut rows = Vec::with_capacity(sorted.len());
    for v in sorted {
        let result = sweep_point(base, axis, v).and_then(|cfg| runner(&cfg));
        rows.push(match result {
            Ok(s) => SweepRow {
                value: v.to_string(),
                mean_reward: s.sac.map(|m| m.reward),
                mean_rk: s.sac.map(|m| m.rk),
                mean_rd: s.sac.map(|m| m.rd),
                random_reward: s.random.map(|m| m.reward),
                oracle_reward: s.oracle.map(|m| m.reward),
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                value: v.to_string(),
                mean_reward: None,
                mean_rk: None,
                mean_rd: None,
                random_reward: None,
                oracle_reward: None,
                status: format!("error: {e}"),
            },
        });
    }
    let mut w = csv::Writer::from_path(base.run.output_dir.join(format!("sweep_{axis}.csv")))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

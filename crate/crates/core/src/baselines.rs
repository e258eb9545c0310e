//! Reference policies: isotropic random beams and a full-CSI oracle that
//! steers along the dominant singular pair of the legitimate channel.
//!
//! The oracle maximizes the legitimate gain only. It bounds the data-rate
//! term, not the mixed objective, since it ignores leakage to the eavesdropper.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{BeamPair, ChannelState};
use crate::env::{Environment, Observation};
use crate::error::{Error, Result};
use crate::numerics::{
    cgauss_vector, power_iteration_top_pair, CMat, CVec, RngStream, TopPair, DEFAULT_POWER_ITERS,
    DEFAULT_POWER_TOL,
};

/// Seed of the oracle's private start-vector stream, so that the oracle is a
/// pure function of the channel.
const ORACLE_SEED: u64 = 0x5EED_0AC1E;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Random,
    OracleSvd,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::OracleSvd => "oracle-svd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [BaselineKind::Random, BaselineKind::OracleSvd]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn isotropic(n: usize, rng: &mut RngStream) -> Result<CVec<f64>> {
    loop {
        if let Some(v) = cgauss_vector::<f64>(n, 1.0, rng)?.normalized(1e-300) {
            return Ok(v);
        }
    }
}

/// Two independent beams uniformly distributed on the complex unit sphere.
pub fn random_action(n: usize, rng: &mut RngStream) -> Result<BeamPair<f64>> {
    if n == 0 {
        return Err(Error::param("n_antennas", "must be at least 1"));
    }
    let w_a = isotropic(n, rng)?;
    let w_b = isotropic(n, rng)?;
    Ok(BeamPair::new(w_a, w_b))
}

/// The power-iteration result the oracle steers with.
pub fn oracle_top_pair(h_ab: &CMat<f64>) -> Result<TopPair<f64>> {
    let mut rng = RngStream::new(ORACLE_SEED, 0);
    power_iteration_top_pair(h_ab, DEFAULT_POWER_ITERS * 5, DEFAULT_POWER_TOL, &mut rng)
}

/// Dominant singular pair of `h_ab`: `w_a` right, `w_b` left.
pub fn oracle_action(h_ab: &CMat<f64>) -> Result<BeamPair<f64>> {
    let top = oracle_top_pair(h_ab)?;
    Ok(BeamPair::new(top.wa, top.wb))
}

/// Per-episode averages of a policy rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_rk: f64,
    pub mean_rd: f64,
    pub eavesdrop_frac: f64,
    pub clamp_count: u64,
}

/// Plays `episodes` episodes with beams chosen by `policy`, which sees the
/// observation and (for the oracle) the true channel.
pub fn run_policy(
    env: &mut Environment,
    episodes: usize,
    mut policy: impl FnMut(&Observation, &ChannelState<f64>) -> Result<BeamPair<f64>>,
) -> Result<Vec<EpisodeStats>> {
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let clamps = env.diagnostics().clamp_count;
        let mut obs = env.reset()?;
        let (mut steps, mut r, mut rk, mut rd, mut eaves) = (0usize, 0.0, 0.0, 0.0, 0usize);
        loop {
            let state = env.state().expect("reset was called");
            let beams = policy(&obs, state)?;
            let step = env.step_beams(beams)?;
            steps += 1;
            r += step.reward;
            rk += step.report.key_rate;
            rd += step.report.rd;
            eaves += step.report.mode.is_eavesdropping() as usize;
            obs = step.obs;
            if step.done {
                break;
            }
        }
        let n = steps as f64;
        out.push(EpisodeStats {
            episode,
            mean_reward: r / n,
            mean_rk: rk / n,
            mean_rd: rd / n,
            eavesdrop_frac: eaves as f64 / n,
            clamp_count: env.diagnostics().clamp_count - clamps,
        });
    }
    Ok(out)
}

/// Runs one of the reference policies. `rng` feeds the random policy only.
pub fn evaluate_baseline(
    env: &mut Environment,
    kind: BaselineKind,
    episodes: usize,
    rng: &mut RngStream,
) -> Result<Vec<EpisodeStats>> {
    let n = env.config().n_antennas();
    match kind {
        BaselineKind::Random => run_policy(env, episodes, |_, _| random_action(n, rng)),
        BaselineKind::OracleSvd => run_policy(env, episodes, |_, s| oracle_action(&s.h_ab)),
    }
}

/// Mean of `mean_reward`, `mean_rk`, `mean_rd` over the last `window` episodes.
pub fn tail_means(stats: &[EpisodeStats], window: usize) -> (f64, f64, f64) {
    let tail = &stats[stats.len().saturating_sub(window.max(1))..];
    if tail.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = tail.len() as f64;
    (
        tail.iter().map(|e| e.mean_reward).sum::<f64>() / n,
        tail.iter().map(|e| e.mean_rk).sum::<f64>() / n,
        tail.iter().map(|e| e.mean_rd).sum::<f64>() / n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{equivalent_channels, ChannelParams};
    use crate::env::{EnvConfig, ObservationMode};
    use crate::numerics::{bilinear_form, cgauss_matrix};
    use num_complex::Complex64;

    fn env(n: usize, lambda: f64) -> Environment {
        let cfg = EnvConfig {
            channel: ChannelParams::stationary(n, 0.9, 1.5, 0.9),
            power: 100.0,
            p_max: 100.0,
            lambda_k: lambda,
            bandwidth: 1.0,
            episode_len: 50,
            observation_mode: ObservationMode::Full,
        };
        Environment::new(cfg, RngStream::new(12, 0), None).unwrap()
    }

    #[test]
    fn random_beams_are_unit_and_seeded() {
        let mut rng = RngStream::new(1, 0);
        for _ in 0..1000 {
            let b = random_action(5, &mut rng).unwrap();
            assert!((b.w_a.norm() - 1.0).abs() < 1e-12);
            assert!((b.w_b.norm() - 1.0).abs() < 1e-12);
        }
        let a = random_action(4, &mut RngStream::new(3, 3)).unwrap();
        assert_eq!(a, random_action(4, &mut RngStream::new(3, 3)).unwrap());
    }

    #[test]
    fn random_gain_matches_isotropic_identity() {
        let n = 4;
        let mut rng = RngStream::new(2, 0);
        let h = cgauss_matrix::<f64>(n, 1.0, &mut rng).unwrap();
        let draws = 100_000;
        let mean = (0..draws)
            .map(|_| {
                let b = random_action(n, &mut rng).unwrap();
                bilinear_form(&b.w_b, &h, &b.w_a).unwrap().norm_sqr()
            })
            .sum::<f64>()
            / draws as f64;
        let expected = h.frobenius_sqr() / (n * n) as f64;
        assert!((mean / expected - 1.0).abs() < 0.03, "{mean} vs {expected}");
    }

    #[test]
    fn oracle_on_diagonal_picks_largest_axis() {
        let d = [1.0, 4.0, 2.0].map(|x| Complex64::new(x, 0.0));
        let b = oracle_action(&CMat::diag(&d)).unwrap();
        assert!((b.w_a.as_slice()[1].norm() - 1.0).abs() < 1e-9);
        assert!((b.w_b.as_slice()[1].norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_dominates_random_and_matches_closed_form() {
        let mut rng = RngStream::new(4, 0);
        for _ in 0..200 {
            let h = cgauss_matrix::<f64>(4, 1.0, &mut rng).unwrap();
            let o = oracle_action(&h).unwrap();
            let go = bilinear_form(&o.w_b, &h, &o.w_a).unwrap().norm_sqr();
            for _ in 0..20 {
                let r = random_action(4, &mut rng).unwrap();
                assert!(bilinear_form(&r.w_b, &h, &r.w_a).unwrap().norm_sqr() <= go + 1e-9);
            }
            let top = oracle_top_pair(&h).unwrap();
            let (p, s2) = (100.0, 0.19);
            let rd = (1.0 + p * go / s2).log2();
            assert!((rd - (1.0 + p * top.sigma * top.sigma / s2).log2()).abs() < 1e-9);
            // An independent, longer run lands on the same singular value.
            let long =
                power_iteration_top_pair(&h, 20_000, 0.0, &mut RngStream::new(9, 9)).unwrap();
            assert!((long.sigma / top.sigma - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn oracle_reward_bounds_random_when_lambda_zero() {
        let mut e = env(4, 0.0);
        e.reset().unwrap();
        let mut rng = RngStream::new(5, 0);
        let cfg = e.config().clone();
        for _ in 0..200 {
            let state = e.state().unwrap().clone();
            let o = oracle_action(&state.h_ab).unwrap();
            let r = random_action(4, &mut rng).unwrap();
            let go = equivalent_channels(&state, &o, cfg.power)
                .unwrap()
                .ab
                .norm_sqr();
            let gr = equivalent_channels(&state, &r, cfg.power)
                .unwrap()
                .ab
                .norm_sqr();
            assert!(go + 1e-9 >= gr);
            e.step_beams(r).unwrap();
        }
    }

    #[test]
    fn evaluation_runs_both_kinds() {
        let mut rng = RngStream::new(6, 0);
        let random =
            evaluate_baseline(&mut env(3, 0.0), BaselineKind::Random, 3, &mut rng).unwrap();
        let oracle =
            evaluate_baseline(&mut env(3, 0.0), BaselineKind::OracleSvd, 3, &mut rng).unwrap();
        assert_eq!(random.len(), 3);
        assert!(tail_means(&oracle, 3).2 > tail_means(&random, 3).2);
        assert_eq!(
            BaselineKind::parse("oracle-svd"),
            Some(BaselineKind::OracleSvd)
        );
        assert_eq!(BaselineKind::parse("svd"), None);
    }
}

//! Episodic SAC training loop.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, Transition};
use crate::sac::SacAgent;
use crate::sim::TerminalReason;
use crate::task::Environment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub total_steps: u64,
    /// Uniform random actions (and no updates) for this many initial steps.
    pub warmup_steps: u64,
    pub seed: u64,
    /// Curve sampling period, agent steps.
    pub curve_every: u64,
    /// Number of recent episodes averaged in the curve.
    pub window: usize,
}

impl TrainOptions {
    pub fn new(total_steps: u64, warmup_steps: u64, seed: u64) -> Self {
        Self { total_steps, warmup_steps, seed, curve_every: 1000, window: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub mean_episode_reward: f64,
    /// Percent of successful episodes in the window.
    pub success_rate_window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// Global agent step at which the episode ended.
    pub end_step: u64,
    pub steps: u64,
    pub reward: f64,
    pub reason: TerminalReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    pub episodes: Vec<EpisodeLog>,
}

impl TrainReport {
    /// First agent step at which the last `window` episodes reach
    /// `threshold` percent success, if ever.
    pub fn first_step_reaching(&self, window: usize, threshold: f64) -> Option<u64> {
        first_step_reaching(&self.episodes, window, threshold)
    }
}

pub fn first_step_reaching(episodes: &[EpisodeLog], window: usize, threshold: f64) -> Option<u64> {
    if window == 0 || episodes.len() < window {
        return None;
    }
    episodes.windows(window).find_map(|w| {
        let wins = w.iter().filter(|e| e.reason == TerminalReason::Success).count();
        (100.0 * wins as f64 / window as f64 >= threshold).then(|| w[window - 1].end_step)
    })
}

/// Runs `opts.total_steps` agent steps of SAC on `env`, starting from the
/// current weights of `agent` and a fresh replay buffer.
///
/// Timeouts bootstrap (`done_mask = 0`); success and collision do not.
pub fn train<E: Environment>(agent: &mut SacAgent, env: &mut E, opts: &TrainOptions) -> Result<TrainReport> {
    train_with_hook(agent, env, opts, |_, _| Ok(()))
}

/// [`train`], calling `hook(step, agent)` after every agent step's updates.
pub fn train_with_hook<E: Environment>(
    agent: &mut SacAgent,
    env: &mut E,
    opts: &TrainOptions,
    mut hook: impl FnMut(u64, &SacAgent) -> Result<()>,
) -> Result<TrainReport> {
    if opts.total_steps == 0 {
        return Err(Error::Validation("total_steps must be positive".into()));
    }
    if env.obs_dim() != agent.obs_dim || env.action_dim() != agent.act_dim {
        return Err(Error::Shape("environment and agent dimensions differ".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut episode_seeds = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5EED_0F_E915_0DE5);
    let mut buffer = ReplayBuffer::new(agent.obs_dim, agent.act_dim, agent.hp.buffer_capacity);
    let mut report = TrainReport::default();
    let mut recent: VecDeque<EpisodeLog> = VecDeque::with_capacity(opts.window.max(1));

    let mut obs = env.reset(episode_seeds.gen())?;
    let mut ep_reward = 0.0;
    let mut ep_steps = 0;
    for step in 1..=opts.total_steps {
        let raw: Vec<f64> = if step <= opts.warmup_steps {
            (0..agent.act_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        } else {
            agent.sample_action(&obs, &mut rng)?.0
        };
        let out = env.step(&raw)?;
        ep_reward += out.reward;
        ep_steps += 1;
        let done_mask = match out.reason {
            TerminalReason::Success | TerminalReason::Collision => 1.0,
            TerminalReason::Timeout | TerminalReason::Running => 0.0,
        };
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            raw_action: raw,
            reward: out.reward,
            next_obs: out.obs.clone(),
            done_mask,
        })?;

        if out.reason.is_terminal() {
            let log = EpisodeLog { end_step: step, steps: ep_steps, reward: ep_reward, reason: out.reason };
            report.episodes.push(log);
            if recent.len() == opts.window.max(1) {
                recent.pop_front();
            }
            recent.push_back(log);
            obs = env.reset(episode_seeds.gen())?;
            ep_reward = 0.0;
            ep_steps = 0;
        } else {
            obs = out.obs;
        }

        if step > opts.warmup_steps {
            for _ in 0..agent.hp.updates_per_env_step {
                agent.update_step(&buffer, &mut rng)?;
            }
        }

        if opts.curve_every > 0 && step % opts.curve_every == 0 && !recent.is_empty() {
            let n = recent.len() as f64;
            let wins = recent.iter().filter(|e| e.reason == TerminalReason::Success).count() as f64;
            report.curve.push(CurvePoint {
                step,
                mean_episode_reward: recent.iter().map(|e| e.reward).sum::<f64>() / n,
                success_rate_window: 100.0 * wins / n,
            });
        }
        hook(step, agent)?;
    }
    Ok(report)
}

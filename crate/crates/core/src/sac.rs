//! Soft actor-critic: squashed-Gaussian actor, twin critics with Polyak
//! targets and an automatically tuned entropy temperature.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{polyak_update, Adam, AdamConfig, Mlp, MlpSpec, ScalarAdam};
use crate::replay::{Batch, ReplayBuffer};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacHyperparams {
    pub gamma: f64,
    pub polyak_tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_temp: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: u64,
    /// Defaults to `-action_dim` when unset.
    pub entropy_target: Option<f64>,
    pub updates_per_env_step: usize,
    pub init_log_temp: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for SacHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            polyak_tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_temp: 3e-4,
            batch_size: 256,
            buffer_capacity: 200_000,
            warmup_steps: 1000,
            entropy_target: None,
            updates_per_env_step: 1,
            init_log_temp: 0.0,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![300, 400],
        }
    }
}

impl SacHyperparams {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let ok = open_unit(self.gamma)
            && open_unit(self.polyak_tau)
            && self.lr_actor > 0.0
            && self.lr_critic > 0.0
            && self.lr_temp > 0.0
            && self.batch_size > 0
            && self.batch_size <= self.buffer_capacity
            && self.updates_per_env_step > 0
            && !self.actor_hidden.is_empty()
            && !self.critic_hidden.is_empty();
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid SAC hyperparameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub critic: f64,
    pub actor: f64,
    pub temp: f64,
}

/// One reparameterized draw from the squashed Gaussian.
#[derive(Debug, Clone)]
struct Squashed {
    action: Vec<f64>,
    log_prob: f64,
    std: Vec<f64>,
    /// 1 where the log-std was inside its clamp range, 0 otherwise.
    log_std_live: Vec<f64>,
}

fn log_one_minus_tanh_sq(u: f64) -> f64 {
    // log(1 − tanh²u) = 2(log 2 − u − softplus(−2u))
    let x = -2.0 * u;
    let softplus = if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

fn squash(head: &[f64], noise: &[f64]) -> Squashed {
    let dim = noise.len();
    let (mu, log_std_raw) = head.split_at(dim);
    let mut out = Squashed {
        action: Vec::with_capacity(dim),
        log_prob: 0.0,
        std: Vec::with_capacity(dim),
        log_std_live: Vec::with_capacity(dim),
    };
    for k in 0..dim {
        let raw = log_std_raw[k];
        let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
        let std = log_std.exp();
        let u = mu[k] + std * noise[k];
        out.action.push(u.tanh());
        out.log_prob += -0.5 * noise[k] * noise[k] - log_std - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        out.std.push(std);
        out.log_std_live.push(if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) { 1.0 } else { 0.0 });
    }
    out
}

fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Rows `[obs | action]` for the critics.
fn concat_rows(obs: &[f64], obs_dim: usize, act: &[f64], act_dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(obs.len() + act.len());
    for (o, a) in obs.chunks_exact(obs_dim).zip(act.chunks_exact(act_dim)) {
        out.extend_from_slice(o);
        out.extend_from_slice(a);
    }
    out
}

/// Stochastic action for `obs` and its log-density under the squashed Gaussian.
pub fn sample_action(actor: &Mlp, obs: &[f64], rng: &mut impl Rng) -> Result<(Vec<f64>, f64)> {
    let dim = actor.output_dim() / 2;
    let head = actor.predict(obs)?;
    let xi = normals(rng, dim);
    let s = squash(&head, &xi);
    Ok((s.action, s.log_prob))
}

/// Policy mean pushed through tanh (evaluation mode).
pub fn deterministic_action(actor: &Mlp, obs: &[f64]) -> Result<Vec<f64>> {
    let dim = actor.output_dim() / 2;
    let head = actor.predict(obs)?;
    Ok(head[..dim].iter().map(|m| m.tanh()).collect())
}

/// Squashed-Gaussian log-density of `action` given a raw actor head `[μ | log σ]`.
pub fn log_prob_of(head: &[f64], action: &[f64]) -> f64 {
    let dim = action.len();
    let (mu, log_std_raw) = head.split_at(dim);
    let mut lp = 0.0;
    for k in 0..dim {
        let log_std = log_std_raw[k].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let u = action[k].atanh();
        let z = (u - mu[k]) / log_std.exp();
        lp += -0.5 * z * z - log_std - HALF_LN_2PI - log_one_minus_tanh_sq(u);
    }
    lp
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hp: SacHyperparams,
    pub actor: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_temp: f64,
    pub actor_opt: Adam,
    pub q1_opt: Adam,
    pub q2_opt: Adam,
    pub temp_opt: ScalarAdam,
}

impl SacAgent {
    pub fn new(obs_dim: usize, act_dim: usize, hp: SacHyperparams, rng: &mut impl Rng) -> Result<Self> {
        hp.validate()?;
        let actor = Mlp::init_with_rng(&MlpSpec::new(obs_dim, &hp.actor_hidden, 2 * act_dim), rng)?;
        let critic_spec = MlpSpec::new(obs_dim + act_dim, &hp.critic_hidden, 1);
        let q1 = Mlp::init_with_rng(&critic_spec, rng)?;
        let q2 = Mlp::init_with_rng(&critic_spec, rng)?;
        Ok(Self {
            obs_dim,
            act_dim,
            actor_opt: Adam::new(&actor, AdamConfig::with_lr(hp.lr_actor)),
            q1_opt: Adam::new(&q1, AdamConfig::with_lr(hp.lr_critic)),
            q2_opt: Adam::new(&q2, AdamConfig::with_lr(hp.lr_critic)),
            temp_opt: ScalarAdam::new(AdamConfig::with_lr(hp.lr_temp)),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            log_temp: hp.init_log_temp,
            actor,
            q1,
            q2,
            hp,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.log_temp.exp()
    }

    pub fn entropy_target(&self) -> f64 {
        self.hp.entropy_target.unwrap_or(-(self.act_dim as f64))
    }

    /// Fresh Adam moments for every network (used when fine-tuning without
    /// carried-over optimizer state).
    pub fn reset_optimizers(&mut self) {
        self.actor_opt = Adam::new(&self.actor, AdamConfig::with_lr(self.hp.lr_actor));
        self.q1_opt = Adam::new(&self.q1, AdamConfig::with_lr(self.hp.lr_critic));
        self.q2_opt = Adam::new(&self.q2, AdamConfig::with_lr(self.hp.lr_critic));
        self.temp_opt = ScalarAdam::new(AdamConfig::with_lr(self.hp.lr_temp));
    }

    /// Re-initializes both critics and their targets.
    pub fn reset_critics(&mut self, rng: &mut impl Rng) -> Result<()> {
        let spec = self.q1.spec();
        self.q1 = Mlp::init_with_rng(&spec, rng)?;
        self.q2 = Mlp::init_with_rng(&spec, rng)?;
        self.q1_target = self.q1.clone();
        self.q2_target = self.q2.clone();
        self.q1_opt = Adam::new(&self.q1, AdamConfig::with_lr(self.hp.lr_critic));
        self.q2_opt = Adam::new(&self.q2, AdamConfig::with_lr(self.hp.lr_critic));
        Ok(())
    }

    pub fn sample_action(&self, obs: &[f64], rng: &mut impl Rng) -> Result<(Vec<f64>, f64)> {
        sample_action(&self.actor, obs, rng)
    }

    pub fn deterministic_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        deterministic_action(&self.actor, obs)
    }

    /// Soft Bellman targets `r + γ(1 − d)(min Q'(s', a') − α log π(a'|s'))`.
    ///
    /// Noise is drawn sample-major, `act_dim` standard normals per row.
    pub fn critic_target(&self, batch: &Batch, temp: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
        if batch.n == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        let n = batch.n;
        let a = self.act_dim;
        let heads = self.actor.forward_batch(&batch.next_obs, n)?;
        let noise = normals(rng, n * a);
        let mut next_actions = Vec::with_capacity(n * a);
        let mut log_probs = Vec::with_capacity(n);
        for i in 0..n {
            let s = squash(&heads.output()[i * 2 * a..(i + 1) * 2 * a], &noise[i * a..(i + 1) * a]);
            next_actions.extend_from_slice(&s.action);
            log_probs.push(s.log_prob);
        }
        let input = concat_rows(&batch.next_obs, self.obs_dim, &next_actions, a);
        let t1 = self.q1_target.forward_batch(&input, n)?;
        let t2 = self.q2_target.forward_batch(&input, n)?;
        Ok((0..n)
            .map(|i| {
                let q = t1.output()[i].min(t2.output()[i]);
                batch.rewards[i] + self.hp.gamma * (1.0 - batch.done[i]) * (q - temp * log_probs[i])
            })
            .collect())
    }

    /// `0.5 · Σ_j mean((Q_j(s, a) − y)²)` without touching parameters.
    pub fn critic_loss(&self, batch: &Batch, targets: &[f64]) -> Result<f64> {
        let input = concat_rows(&batch.obs, self.obs_dim, &batch.actions, self.act_dim);
        let mut loss = 0.0;
        for q in [&self.q1, &self.q2] {
            let out = q.forward_batch(&input, batch.n)?;
            loss += 0.5 * out.output().iter().zip(targets).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / batch.n as f64;
        }
        Ok(loss)
    }

    fn update_critics(&mut self, batch: &Batch, targets: &[f64]) -> Result<f64> {
        let n = batch.n;
        let input = concat_rows(&batch.obs, self.obs_dim, &batch.actions, self.act_dim);
        let mut loss = 0.0;
        for (q, opt) in [(&mut self.q1, &mut self.q1_opt), (&mut self.q2, &mut self.q2_opt)] {
            let cache = q.forward_batch(&input, n)?;
            let diff: Vec<f64> = cache.output().iter().zip(targets).map(|(q, y)| q - y).collect();
            loss += 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
            let dq: Vec<f64> = diff.iter().map(|d| d / n as f64).collect();
            let (grads, _) = q.backward_batch(&cache, &dq, true)?;
            opt.step(q, &grads.expect("requested parameter gradients"))?;
        }
        Ok(loss)
    }

    /// Actor and temperature losses plus the actor gradient, for the given noise.
    ///
    /// Returns `(actor_loss, mean_log_prob, gradients)`.
    pub fn actor_loss_and_grad(&self, obs: &[f64], n: usize, noise: &[f64]) -> Result<(f64, f64, Mlp)> {
        let a = self.act_dim;
        let temp = self.temperature();
        let heads = self.actor.forward_batch(obs, n)?;
        let draws: Vec<Squashed> = (0..n)
            .map(|i| squash(&heads.output()[i * 2 * a..(i + 1) * 2 * a], &noise[i * a..(i + 1) * a]))
            .collect();
        let actions: Vec<f64> = draws.iter().flat_map(|d| d.action.iter().copied()).collect();
        let input = concat_rows(obs, self.obs_dim, &actions, a);
        let c1 = self.q1.forward_batch(&input, n)?;
        let c2 = self.q2.forward_batch(&input, n)?;

        // Route dQmin/da through whichever critic is smaller per sample.
        let scale = 1.0 / n as f64;
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        let mut loss = 0.0;
        let mut mean_lp = 0.0;
        for i in 0..n {
            let (q1, q2) = (c1.output()[i], c2.output()[i]);
            if q1 <= q2 {
                d1[i] = 1.0;
            } else {
                d2[i] = 1.0;
            }
            loss += scale * (temp * draws[i].log_prob - q1.min(q2));
            mean_lp += scale * draws[i].log_prob;
        }
        let (_, g1) = self.q1.backward_batch(&c1, &d1, false)?;
        let (_, g2) = self.q2.backward_batch(&c2, &d2, false)?;
        let width = self.obs_dim + a;

        let mut d_head = vec![0.0; n * 2 * a];
        for (i, d) in draws.iter().enumerate() {
            for k in 0..a {
                let dq_da = g1[i * width + self.obs_dim + k] + g2[i * width + self.obs_dim + k];
                let act = d.action[k];
                let du = 1.0 - act * act;
                let sigma_xi = d.std[k] * noise[i * a + k];
                let d_mu = temp * 2.0 * act - dq_da * du;
                let d_log_std = temp * (-1.0 + 2.0 * act * sigma_xi) - dq_da * du * sigma_xi;
                d_head[i * 2 * a + k] = scale * d_mu;
                d_head[i * 2 * a + a + k] = scale * d_log_std * d.log_std_live[k];
            }
        }
        let (grads, _) = self.actor.backward_batch(&heads, &d_head, true)?;
        Ok((loss, mean_lp, grads.expect("requested parameter gradients")))
    }

    /// One SAC update from a minibatch of `buffer`; `None` when the buffer holds
    /// fewer than `batch_size` transitions.
    pub fn update_step(&mut self, buffer: &ReplayBuffer, rng: &mut impl Rng) -> Result<Option<Losses>> {
        if buffer.len() < self.hp.batch_size {
            return Ok(None);
        }
        let batch = buffer.sample(self.hp.batch_size, rng);
        let targets = self.critic_target(&batch, self.temperature(), rng)?;
        let critic = self.update_critics(&batch, &targets)?;

        let noise = normals(rng, batch.n * self.act_dim);
        let (actor, mean_lp, grads) = self.actor_loss_and_grad(&batch.obs, batch.n, &noise)?;
        self.actor_opt.step(&mut self.actor, &grads)?;

        let gap = mean_lp + self.entropy_target();
        let temp_loss = -self.log_temp * gap;
        self.temp_opt.step(&mut self.log_temp, -gap);

        polyak_update(&mut self.q1_target, &self.q1, self.hp.polyak_tau)?;
        polyak_update(&mut self.q2_target, &self.q2, self.hp.polyak_tau)?;
        Ok(Some(Losses { critic, actor, temp: temp_loss }))
    }
}

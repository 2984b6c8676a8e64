//! Episodic task wrappers consumed by the SAC training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{map_action, ActionBounds, PhysicalAction, ACTION_DIM};
use crate::control::{compose_command, hybrid_command, reset_controller, ControlErrors, ControllerState, SelectionMatrix};
use crate::error::{Error, Result};
use crate::sim::{
    compute_reward, EmbodimentSpec, Observation, PegEnv, PegHoleGeometry, RewardWeights, SimParams, TerminalReason,
    OBS_DIM, SUBSTEP_DT,
};
use crate::vec3::Vec3;

#[derive(Debug, Clone)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub reason: TerminalReason,
}

/// Minimal episodic interface for continuous-control tasks with actions in `[-1, 1]^n`.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Starts a new episode; `seed` fixes the start state and any sensor noise.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, raw_action: &[f64]) -> Result<Step>;
}

/// Fixed scales turning SI observations into O(1) network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsScale {
    /// m
    pub pos: f64,
    /// m/s
    pub vel: f64,
    /// N
    pub force: f64,
}

impl Default for ObsScale {
    fn default() -> Self {
        Self { pos: 0.01, vel: 0.1, force: 10.0 }
    }
}

impl ObsScale {
    pub fn apply(&self, obs: &Observation) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBS_DIM);
        v.extend(obs.pos_err.to_array().iter().map(|p| p / self.pos));
        v.extend(obs.vel.to_array().iter().map(|p| p / self.vel));
        v.extend(obs.force.to_array().iter().map(|p| p / self.force));
        v
    }
}

/// Region of start positions: a square patch at a fixed height above the hole,
/// without the hole mouth itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPatch {
    /// Height above the hole center, m.
    pub height: f64,
    /// Side length of the square patch, m.
    pub side: f64,
    /// Starts closer than this (laterally) to the hole axis are excluded, m.
    pub exclude_radius: f64,
}

impl Default for StartPatch {
    fn default() -> Self {
        Self { height: 0.03, side: 0.04, exclude_radius: 0.006 }
    }
}

impl StartPatch {
    /// Pushes a lateral offset out of the excluded disc, radially.
    fn project(&self, dx: f64, dy: f64) -> (f64, f64) {
        let r = dx.hypot(dy);
        if r >= self.exclude_radius {
            (dx, dy)
        } else if r == 0.0 {
            (self.exclude_radius, 0.0)
        } else {
            (dx * self.exclude_radius / r, dy * self.exclude_radius / r)
        }
    }

    /// Uniform draw over the patch, rejecting the excluded disc.
    pub fn sample(&self, hole: Vec3, rng: &mut impl Rng) -> Vec3 {
        let h = 0.5 * self.side;
        loop {
            let dx = rng.gen_range(-h..h);
            let dy = rng.gen_range(-h..h);
            if dx.hypot(dy) >= self.exclude_radius {
                return hole + Vec3::new(dx, dy, self.height);
            }
        }
    }

    /// Cell-centered `n × n` grid over the patch, row-major in y then x.
    pub fn grid(&self, hole: Vec3, n: usize) -> Vec<Vec3> {
        let h = 0.5 * self.side;
        let coord = |i: usize| -h + self.side * (i as f64 + 0.5) / n as f64;
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let (dx, dy) = self.project(coord(i), coord(j));
                out.push(hole + Vec3::new(dx, dy, self.height));
            }
        }
        out
    }
}

/// Everything defining the peg task apart from the embodiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub geometry: PegHoleGeometry,
    pub sim: SimParams,
    pub reward: RewardWeights,
    pub bounds: ActionBounds,
    pub selection: SelectionMatrix,
    pub obs_scale: ObsScale,
    pub start: StartPatch,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            geometry: PegHoleGeometry::default(),
            sim: SimParams::default(),
            reward: RewardWeights::default(),
            bounds: ActionBounds::default(),
            selection: SelectionMatrix::default(),
            obs_scale: ObsScale::default(),
            start: StartPatch::default(),
        }
    }
}

/// Controller errors for one substep.
///
/// The wrist sensor reports the force the tool applies to the environment,
/// which is the negated contact force on the peg; with a zero force goal the
/// force error is therefore the contact force itself.
pub fn control_errors(exact: &Observation, hole: Vec3, x_hat_a: Vec3) -> ControlErrors {
    let x_m = exact.pos_err + hole;
    let applied = -exact.force;
    ControlErrors { x_e: x_hat_a - x_m, x_dot_e: -exact.vel, f_e: Vec3::ZERO - applied }
}

/// The peg-in-hole task: policy action → hybrid controller → 60 Hz servo.
#[derive(Debug, Clone)]
pub struct PegTask {
    pub config: TaskConfig,
    env: PegEnv,
    ctl: ControllerState,
    fixed_start: Option<Vec3>,
    last_action: Option<PhysicalAction>,
}

impl PegTask {
    pub fn new(config: TaskConfig, embodiment: EmbodimentSpec) -> Result<Self> {
        config.reward.validate()?;
        config.bounds.validate()?;
        let env = PegEnv::new(config.geometry.clone(), embodiment, config.sim.clone())?;
        Ok(Self { config, env, ctl: reset_controller(), fixed_start: None, last_action: None })
    }

    pub fn embodiment(&self) -> &EmbodimentSpec {
        &self.env.embodiment
    }

    pub fn env(&self) -> &PegEnv {
        &self.env
    }

    pub fn last_action(&self) -> Option<&PhysicalAction> {
        self.last_action.as_ref()
    }

    /// Resets to an explicit start position (evaluation grids).
    pub fn reset_at(&mut self, start: Vec3, seed: u64) -> Result<Vec<f64>> {
        self.ctl = reset_controller();
        self.last_action = None;
        let obs = self.env.reset(start, seed)?;
        Ok(self.config.obs_scale.apply(&obs))
    }

    /// Pins every subsequent `reset` to one start position.
    pub fn set_fixed_start(&mut self, start: Option<Vec3>) {
        self.fixed_start = start;
    }
}

impl Environment for PegTask {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let start = match self.fixed_start {
            Some(s) => s,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                self.config.start.sample(self.config.geometry.hole_center, &mut rng)
            }
        };
        self.reset_at(start, seed)
    }

    fn step(&mut self, raw_action: &[f64]) -> Result<Step> {
        let hole = self.config.geometry.hole_center;
        let action = map_action(raw_action, &self.config.bounds, hole)?;
        let sel = self.config.selection;
        let mut ctl = self.ctl;
        let (obs, reason) = self.env.agent_step(|exact| {
            let errors = control_errors(exact, hole, action.x_hat_a);
            let (u, next) = hybrid_command(&errors, &action.gains, &sel, &ctl, SUBSTEP_DT);
            ctl = next;
            compose_command(action.x_hat_a, u)
        })?;
        self.ctl = ctl;
        self.last_action = Some(action);
        let reward = compute_reward(&obs, reason, &self.config.reward);
        Ok(Step { obs: self.config.obs_scale.apply(&obs), reward, reason })
    }
}

/// One-dimensional regulator: a point moved by bounded velocity commands,
/// penalized by its squared distance to the origin.
#[derive(Debug, Clone)]
pub struct Regulator1d {
    /// Displacement per step at full action.
    pub gain: f64,
    pub horizon: u64,
    /// Start positions are drawn from `[-start_range, start_range]`.
    pub start_range: f64,
    x: f64,
    t: u64,
    fixed_start: Option<f64>,
}

impl Regulator1d {
    pub fn new(gain: f64, horizon: u64, start_range: f64) -> Self {
        Self { gain, horizon, start_range, x: 0.0, t: 0, fixed_start: None }
    }

    pub fn set_fixed_start(&mut self, x0: Option<f64>) {
        self.fixed_start = x0;
    }

    /// Return of the best possible policy from `x0`: move toward the origin
    /// at full speed, then hold. Every future |x_t| is individually minimal,
    /// so no other action sequence scores higher.
    pub fn optimal_return(&self, x0: f64) -> f64 {
        let mut x = x0;
        let mut total = 0.0;
        for _ in 0..self.horizon {
            let a = (-x / self.gain).clamp(-1.0, 1.0);
            x += self.gain * a;
            total -= x * x;
        }
        total
    }
}

impl Environment for Regulator1d {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.x = match self.fixed_start {
            Some(x) => x,
            None => ChaCha8Rng::seed_from_u64(seed).gen_range(-self.start_range..=self.start_range),
        };
        self.t = 0;
        Ok(vec![self.x])
    }

    fn step(&mut self, raw_action: &[f64]) -> Result<Step> {
        if raw_action.len() != 1 {
            return Err(Error::Shape("regulator takes a single action".into()));
        }
        let a = raw_action[0].clamp(-1.0, 1.0);
        self.x += self.gain * a;
        self.t += 1;
        let reason = if self.t >= self.horizon { TerminalReason::Timeout } else { TerminalReason::Running };
        Ok(Step { obs: vec![self.x], reward: -self.x * self.x, reason })
    }
}

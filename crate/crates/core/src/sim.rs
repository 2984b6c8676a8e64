//! Cartesian 3-DOF peg-in-hole world.
//!
//! The peg tip is a point driven by a position servo (second-order tracking of
//! a commanded position) and pushed around by penalty contact forces from the
//! table surface, the hole walls and the hole floor. The agent acts at 20 Hz;
//! every agent step spans three 60 Hz controller substeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Controller substep period (60 Hz).
pub const SUBSTEP_DT: f64 = 1.0 / 60.0;
/// Controller substeps per agent step (60 Hz control / 20 Hz learning).
pub const SUBSTEPS_PER_AGENT_STEP: u64 = 3;
/// Length of the agent-visible state vector.
pub const OBS_DIM: usize = 9;

/// Dynamic signature of one robot platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentSpec {
    pub id: String,
    /// Servo time constant, s.
    pub tau: f64,
    /// Servo damping ratio.
    pub zeta: f64,
    /// Per-axis speed limit, m/s.
    pub v_max: f64,
    pub workspace_lo: Vec3,
    pub workspace_hi: Vec3,
    /// Wrist force sensor noise, N.
    pub force_noise_sigma: f64,
    /// Position sensing noise, m.
    pub pos_noise_sigma: f64,
}

impl EmbodimentSpec {
    /// Compliant, slower platform (source embodiment).
    pub fn a() -> Self {
        Self {
            id: "A".into(),
            tau: 0.09,
            zeta: 1.0,
            v_max: 0.3,
            workspace_lo: Vec3::new(0.30, -0.10, 0.0),
            workspace_hi: Vec3::new(0.50, 0.10, 0.20),
            force_noise_sigma: 0.5,
            pos_noise_sigma: 0.0005,
        }
    }

    /// Stiffer, faster platform with twice the sensor noise (target
    /// embodiment). For the same commanded depth it presses
    /// `(tau_a / tau_b)^2` times harder into a contact.
    pub fn b() -> Self {
        Self {
            id: "B".into(),
            tau: 0.06,
            v_max: 0.4,
            force_noise_sigma: 1.0,
            pos_noise_sigma: 0.001,
            ..Self::a()
        }
    }

    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            "A" => Ok(Self::a()),
            "B" => Ok(Self::b()),
            other => Err(Error::Validation(format!("unknown embodiment {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tau > 0.0
            && self.zeta > 0.0
            && self.v_max > 0.0
            && self.workspace_lo.all_lt(self.workspace_hi)
            && self.force_noise_sigma >= 0.0
            && self.pos_noise_sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid embodiment {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PegHoleGeometry {
    /// Hole axis at full insertion depth; the position goal.
    pub hole_center: Vec3,
    pub hole_radius: f64,
    pub peg_radius: f64,
    pub surface_z: f64,
    pub insert_depth: f64,
    /// Penalty stiffness, N/m.
    pub contact_stiffness: f64,
    /// Penalty damping, N·s/m.
    pub contact_damping: f64,
    /// Contact force magnitude above which the episode ends in a collision, N.
    pub collision_force_limit: f64,
}

impl Default for PegHoleGeometry {
    fn default() -> Self {
        Self {
            hole_center: Vec3::new(0.40, 0.0, 0.03),
            hole_radius: 0.006,
            peg_radius: 0.005,
            surface_z: 0.05,
            insert_depth: 0.020,
            contact_stiffness: 5000.0,
            contact_damping: 50.0,
            collision_force_limit: 50.0,
        }
    }
}

impl PegHoleGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = self.hole_radius > self.peg_radius
            && self.peg_radius > 0.0
            && self.insert_depth > 0.0
            && self.contact_stiffness > 0.0
            && self.contact_damping >= 0.0
            && self.collision_force_limit > 0.0
            && self.hole_center.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid geometry {self:?}")))
        }
    }

    /// Radial play of the peg axis inside the hole.
    pub fn clearance(&self) -> f64 {
        self.hole_radius - self.peg_radius
    }

    pub fn floor_z(&self) -> f64 {
        self.surface_z - self.insert_depth
    }

    /// Geometric insertion test: deep enough and laterally inside the clearance.
    pub fn is_inserted(&self, pos: Vec3) -> bool {
        let lateral = (pos - self.hole_center).norm_xy();
        self.surface_z - pos.z >= self.insert_depth && lateral <= self.clearance()
    }
}

/// Simulation settings that are neither geometry nor embodiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Episode length limit in agent steps.
    pub max_steps: u64,
    /// Effective mass seen by contact forces, kg.
    pub effective_mass: f64,
    /// Add Gaussian sensor noise to the agent observation.
    pub noise: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self { max_steps: 300, effective_mass: 2.0, noise: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalReason {
    Running,
    Success,
    Collision,
    Timeout,
}

impl TerminalReason {
    pub fn is_terminal(self) -> bool {
        self != TerminalReason::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TerminalReason::Running => "running",
            TerminalReason::Success => "success",
            TerminalReason::Collision => "collision",
            TerminalReason::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "running" => TerminalReason::Running,
            "success" => TerminalReason::Success,
            "collision" => TerminalReason::Collision,
            "timeout" => TerminalReason::Timeout,
            _ => return None,
        })
    }
}

/// Agent-visible state: position error to the goal, velocity, wrist force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// x_m − x_g, m.
    pub pos_err: Vec3,
    pub vel: Vec3,
    /// Contact force acting on the peg as read at the wrist, N.
    pub force: Vec3,
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBS_DIM);
        v.extend_from_slice(&self.pos_err.to_array());
        v.extend_from_slice(&self.vel.to_array());
        v.extend_from_slice(&self.force.to_array());
        v
    }

    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out.copy_from_slice(&self.to_vec());
        out
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub pos: Vec3,
    pub vel: Vec3,
    pub contact_force: Vec3,
    pub substep_count: u64,
    pub agent_step_count: u64,
    pub terminal: TerminalReason,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Dense position weight, 1/m.
    pub alpha1: f64,
    /// Dense force weight, 1/N.
    pub alpha2: f64,
    pub r_success: f64,
    pub r_collision: f64,
    pub r_timeout: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { alpha1: -1.0, alpha2: -0.1, r_success: 100.0, r_collision: -5.0, r_timeout: -5.0 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha1 < 0.0
            && self.alpha2 < 0.0
            && self.r_success > 0.0
            && self.r_collision < 0.0
            && self.r_timeout < 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid reward weights {self:?}")))
        }
    }
}

/// Penalty contact force on the peg tip and whether it exceeds the collision limit.
pub fn contact_forces(pos: Vec3, vel: Vec3, geometry: &PegHoleGeometry) -> (Vec3, bool) {
    let g = geometry;
    if pos.z >= g.surface_z {
        return (Vec3::ZERO, false);
    }
    let k = g.contact_stiffness;
    let push = |penetration: f64| (k * penetration - g.contact_damping * vel.z).max(0.0);

    let offset = Vec3::new(pos.x - g.hole_center.x, pos.y - g.hole_center.y, 0.0);
    let lateral = offset.norm_xy();
    let mut force = Vec3::ZERO;
    if lateral >= g.hole_radius {
        // Flat surface outside the hole mouth.
        force.z = push(g.surface_z - pos.z);
    } else {
        let overlap = lateral - g.clearance();
        if overlap > 0.0 {
            // Wall pushes the peg back toward the hole axis.
            force = force + offset * (-k * overlap / lateral);
        }
        if pos.z < g.floor_z() {
            force.z = push(g.floor_z() - pos.z);
        }
    }
    let collided = force.norm() > g.collision_force_limit;
    (force, collided)
}

/// Servo model integrated semi-implicitly over one controller period.
///
/// Returns the new state and whether the contact force at the new position
/// exceeded the collision limit.
pub fn servo_substep(
    state: &SimState,
    x_c: Vec3,
    embodiment: &EmbodimentSpec,
    geometry: &PegHoleGeometry,
    effective_mass: f64,
    dt: f64,
) -> (SimState, bool) {
    let e = embodiment;
    let target = x_c.clamp(e.workspace_lo, e.workspace_hi);
    let acc = (target - state.pos) * (1.0 / (e.tau * e.tau)) - state.vel * (2.0 * e.zeta / e.tau)
        + state.contact_force * (1.0 / effective_mass);

    let mut vel = (state.vel + acc * dt).map(|v| v.clamp(-e.v_max, e.v_max));
    let unclamped = state.pos + vel * dt;
    let pos = unclamped.clamp(e.workspace_lo, e.workspace_hi);
    // Stop motion into a workspace limit.
    vel = vel.zip_map(pos - unclamped, |v, d| if d != 0.0 { 0.0 } else { v });

    let (contact_force, collided) = contact_forces(pos, vel, geometry);
    let next = SimState {
        pos,
        vel,
        contact_force,
        substep_count: state.substep_count + 1,
        agent_step_count: state.agent_step_count,
        terminal: state.terminal,
        rng: state.rng.clone(),
    };
    (next, collided)
}

/// Per-step reward: dense distance/force penalty plus the sparse terminal bonus.
pub fn compute_reward(obs: &Observation, reason: TerminalReason, weights: &RewardWeights) -> f64 {
    // x_g − x_m = −pos_err and F_g − F_m = −force have the same norms.
    let dense = weights.alpha1 * obs.pos_err.norm() + weights.alpha2 * obs.force.norm();
    let sparse = match reason {
        TerminalReason::Running => 0.0,
        TerminalReason::Success => weights.r_success,
        TerminalReason::Collision => weights.r_collision,
        TerminalReason::Timeout => weights.r_timeout,
    };
    dense + sparse
}

/// Stand-alone reset: validates inputs and builds the initial state and observation.
pub fn reset(
    geometry: &PegHoleGeometry,
    embodiment: &EmbodimentSpec,
    start_pos: Vec3,
    seed: u64,
) -> Result<(SimState, Observation)> {
    let mut env = PegEnv::new(geometry.clone(), embodiment.clone(), SimParams::default())?;
    let obs = env.reset(start_pos, seed)?;
    Ok((env.state.clone(), obs))
}

/// One peg-in-hole environment instance.
#[derive(Debug, Clone)]
pub struct PegEnv {
    pub geometry: PegHoleGeometry,
    pub embodiment: EmbodimentSpec,
    pub params: SimParams,
    state: SimState,
}

impl PegEnv {
    pub fn new(geometry: PegHoleGeometry, embodiment: EmbodimentSpec, params: SimParams) -> Result<Self> {
        geometry.validate()?;
        embodiment.validate()?;
        let state = SimState {
            pos: geometry.hole_center,
            vel: Vec3::ZERO,
            contact_force: Vec3::ZERO,
            substep_count: 0,
            agent_step_count: 0,
            terminal: TerminalReason::Running,
            rng: ChaCha8Rng::seed_from_u64(0),
        };
        Ok(Self { geometry, embodiment, params, state })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn reset(&mut self, start_pos: Vec3, seed: u64) -> Result<Observation> {
        let e = &self.embodiment;
        if !start_pos.is_finite() || !start_pos.within(e.workspace_lo, e.workspace_hi) {
            return Err(Error::Bounds {
                what: "start",
                detail: format!("{start_pos:?} outside [{:?}, {:?}]", e.workspace_lo, e.workspace_hi),
            });
        }
        if start_pos.z < self.geometry.surface_z {
            return Err(Error::Bounds {
                what: "start",
                detail: format!("z={} below surface {}", start_pos.z, self.geometry.surface_z),
            });
        }
        self.state = SimState {
            pos: start_pos,
            vel: Vec3::ZERO,
            contact_force: Vec3::ZERO,
            substep_count: 0,
            agent_step_count: 0,
            terminal: TerminalReason::Running,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        Ok(self.observe_noisy())
    }

    /// Observation without sensor noise, as seen by the inner controller.
    pub fn observe_exact(&self) -> Observation {
        Observation {
            pos_err: self.state.pos - self.geometry.hole_center,
            vel: self.state.vel,
            force: self.state.contact_force,
        }
    }

    fn observe_noisy(&mut self) -> Observation {
        let mut obs = self.observe_exact();
        if !self.params.noise {
            return obs;
        }
        let e = &self.embodiment;
        let rng = &mut self.state.rng;
        if e.pos_noise_sigma > 0.0 {
            let n = Normal::new(0.0, e.pos_noise_sigma).expect("validated sigma");
            obs.pos_err += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        }
        if e.force_noise_sigma > 0.0 {
            let n = Normal::new(0.0, e.force_noise_sigma).expect("validated sigma");
            obs.force += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        }
        obs
    }

    /// Advance one agent step: three controller substeps, each asking
    /// `x_c_provider` for a fresh command from the noiseless observation.
    pub fn agent_step(
        &mut self,
        mut x_c_provider: impl FnMut(&Observation) -> Vec3,
    ) -> Result<(Observation, TerminalReason)> {
        if self.state.terminal.is_terminal() {
            return Err(Error::Protocol(format!(
                "agent_step after terminal state {:?}",
                self.state.terminal
            )));
        }
        let mut collided = false;
        for _ in 0..SUBSTEPS_PER_AGENT_STEP {
            let x_c = x_c_provider(&self.observe_exact());
            let x_c = if x_c.is_finite() { x_c } else { self.state.pos };
            let (next, hit) = servo_substep(
                &self.state,
                x_c,
                &self.embodiment,
                &self.geometry,
                self.params.effective_mass,
                SUBSTEP_DT,
            );
            self.state = next;
            collided |= hit;
        }
        self.state.agent_step_count += 1;

        let reason = if collided {
            TerminalReason::Collision
        } else if self.geometry.is_inserted(self.state.pos) {
            TerminalReason::Success
        } else if self.state.agent_step_count >= self.params.max_steps {
            TerminalReason::Timeout
        } else {
            TerminalReason::Running
        };
        self.state.terminal = reason;
        Ok((self.observe_noisy(), reason))
    }
}

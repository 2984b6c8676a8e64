//! Hybrid motion-force control.
//!
//! Each Cartesian axis blends a PD position loop and a PI force loop through
//! the diagonal selection matrix `S`:
//!
//! ```text
//! u = S (Kp_x x_e + Kd_x ẋ_e) + (I − S) (Kp_f F_e + Ki_f ∫F_e dt)
//! x_c = x̂_a + u
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Ratio between derivative and proportional motion gains.
pub const KD_RATIO: f64 = 0.5;
/// Ratio between integral and proportional force gains.
pub const KI_RATIO: f64 = 0.001;
/// Default clamp on the force integral, N·s.
pub const DEFAULT_INTEGRAL_LIMIT: f64 = 10.0;

/// Diagonal selection matrix: 1 = motion-controlled axis, 0 = force-controlled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMatrix([f64; 3]);

impl SelectionMatrix {
    pub fn new(s: [f64; 3]) -> Result<Self> {
        if s.iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(Self(s))
        } else {
            Err(Error::Domain(format!("selection entries must lie in [0, 1], got {s:?}")))
        }
    }

    /// Motion control in x and y, force control along z.
    pub fn motion_xy_force_z() -> Self {
        Self([1.0, 1.0, 0.0])
    }

    pub fn identity() -> Self {
        Self([1.0; 3])
    }

    pub fn diag(&self) -> [f64; 3] {
        self.0
    }
}

impl Default for SelectionMatrix {
    fn default() -> Self {
        Self::motion_xy_force_z()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub kp_x: Vec3,
    pub kd_x: Vec3,
    pub kp_f: Vec3,
    pub ki_f: Vec3,
}

/// Expands the two policy-chosen gain vectors into the full PD/PI set.
pub fn derive_gains(kp_x: Vec3, kp_f: Vec3) -> Result<ControllerGains> {
    let valid = |v: Vec3| v.to_array().iter().all(|g| g.is_finite() && *g >= 0.0);
    if !valid(kp_x) || !valid(kp_f) {
        return Err(Error::Domain(format!(
            "gains must be finite and non-negative: kp_x={kp_x:?} kp_f={kp_f:?}"
        )));
    }
    Ok(ControllerGains { kp_x, kd_x: kp_x * KD_RATIO, kp_f, ki_f: kp_f * KI_RATIO })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    /// ∫F_e dt, N·s.
    pub force_integral: Vec3,
    pub integral_limit: f64,
}

impl Default for ControllerState {
    fn default() -> Self {
        reset_controller()
    }
}

pub fn reset_controller() -> ControllerState {
    ControllerState { force_integral: Vec3::ZERO, integral_limit: DEFAULT_INTEGRAL_LIMIT }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlErrors {
    /// Position error, m.
    pub x_e: Vec3,
    /// Velocity error, m/s.
    pub x_dot_e: Vec3,
    /// Force error, N.
    pub f_e: Vec3,
}

/// Evaluates the hybrid law and returns the correction `u` with the updated integral.
///
/// The integral only accumulates on axes with `s_i < 1`; pure motion axes keep it frozen.
pub fn hybrid_command(
    errors: &ControlErrors,
    gains: &ControllerGains,
    sel: &SelectionMatrix,
    ctl: &ControllerState,
    dt: f64,
) -> (Vec3, ControllerState) {
    debug_assert!(dt > 0.0);
    let s = sel.diag();
    let lim = ctl.integral_limit;
    let mut u = [0.0; 3];
    let mut integral = ctl.force_integral.to_array();
    for i in 0..3 {
        if s[i] < 1.0 {
            integral[i] = (integral[i] + errors.f_e[i] * dt).clamp(-lim, lim);
        }
        let motion = gains.kp_x[i] * errors.x_e[i] + gains.kd_x[i] * errors.x_dot_e[i];
        let force = gains.kp_f[i] * errors.f_e[i] + gains.ki_f[i] * integral[i];
        u[i] = s[i] * motion + (1.0 - s[i]) * force;
    }
    let next = ControllerState { force_integral: Vec3::from_slice(&integral), integral_limit: lim };
    (Vec3::from_slice(&u), next)
}

/// Position command sent to the servo: the policy target plus the hybrid correction.
pub fn compose_command(x_hat_a: Vec3, u: Vec3) -> Vec3 {
    x_hat_a + u
}

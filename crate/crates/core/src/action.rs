//! Mapping from the squashed policy output in `[-1, 1]^9` to the physical
//! action `[x̂_a, Kp_x, Kp_f]` and its derived controller gains.

use serde::{Deserialize, Serialize};

use crate::control::{derive_gains, ControllerGains};
use crate::error::{Error, Result};
use crate::vec3::Vec3;

pub const ACTION_DIM: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    /// Half-width of the target box around the hole estimate, m.
    pub target_half_width: Vec3,
    pub kp_x_lo: f64,
    pub kp_x_hi: f64,
    /// m/N
    pub kp_f_lo: f64,
    pub kp_f_hi: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self { target_half_width: Vec3::new(0.02, 0.02, 0.03), kp_x_lo: 0.0, kp_x_hi: 1.0, kp_f_lo: 0.0, kp_f_hi: 0.02 }
    }
}

impl ActionBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.target_half_width.all_lt(Vec3::splat(f64::INFINITY))
            && Vec3::ZERO.all_lt(self.target_half_width)
            && self.kp_x_lo < self.kp_x_hi
            && self.kp_f_lo < self.kp_f_hi
            && self.kp_x_lo >= 0.0
            && self.kp_f_lo >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid action bounds {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalAction {
    pub x_hat_a: Vec3,
    pub kp_x: Vec3,
    pub kp_f: Vec3,
    pub gains: ControllerGains,
}

fn affine(r: f64, lo: f64, hi: f64) -> f64 {
    lo + 0.5 * (r + 1.0) * (hi - lo)
}

pub fn map_action(raw: &[f64], bounds: &ActionBounds, hole_estimate: Vec3) -> Result<PhysicalAction> {
    if raw.len() != ACTION_DIM {
        return Err(Error::Shape(format!("raw action length {} != {ACTION_DIM}", raw.len())));
    }
    if let Some(bad) = raw.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
        return Err(Error::Range(format!("raw action component {bad} outside [-1, 1]")));
    }
    let lo = hole_estimate - bounds.target_half_width;
    let hi = hole_estimate + bounds.target_half_width;
    let x_hat_a = Vec3::new(
        affine(raw[0], lo.x, hi.x),
        affine(raw[1], lo.y, hi.y),
        affine(raw[2], lo.z, hi.z),
    );
    let kp_x = Vec3::from_slice(&raw[3..6]).map(|r| affine(r, bounds.kp_x_lo, bounds.kp_x_hi));
    let kp_f = Vec3::from_slice(&raw[6..9]).map(|r| affine(r, bounds.kp_f_lo, bounds.kp_f_hi));
    let gains = derive_gains(kp_x, kp_f)?;
    Ok(PhysicalAction { x_hat_a, kp_x, kp_f, gains })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HOLE: Vec3 = Vec3::new(0.4, 0.0, 0.05);

    fn wide() -> ActionBounds {
        ActionBounds { target_half_width: Vec3::splat(0.05), kp_x_hi: 8.0, ..ActionBounds::default() }
    }

    #[test]
    fn midpoint_and_endpoints() {
        let b = wide();
        let mid = map_action(&[0.0; 9], &b, HOLE).unwrap();
        assert_eq!(mid.x_hat_a, HOLE);
        assert_eq!(mid.kp_x, Vec3::splat(4.0));
        assert_eq!(mid.kp_f, Vec3::splat(0.01));
        let top = map_action(&[1.0; 9], &b, HOLE).unwrap();
        assert_eq!(top.x_hat_a, HOLE + Vec3::splat(0.05));
        assert_eq!(top.kp_x, Vec3::splat(8.0));
        assert_eq!(top.kp_f, Vec3::splat(0.02));
    }

    #[test]
    fn zero_kp_gives_zero_kd() {
        let mut raw = [0.0; 9];
        raw[3] = -1.0;
        let a = map_action(&raw, &wide(), HOLE).unwrap();
        assert_eq!(a.kp_x.x, 0.0);
        assert_eq!(a.gains.kd_x.x, 0.0);
        assert_eq!(a.gains.kd_x.y, 2.0);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut raw = [0.0; 9];
        raw[4] = 1.0001;
        assert!(matches!(map_action(&raw, &ActionBounds::default(), HOLE), Err(Error::Range(_))));
        assert!(matches!(map_action(&raw[..8], &ActionBounds::default(), HOLE), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn physical_action_within_bounds(raw in proptest::collection::vec(-1.0..=1.0f64, 9)) {
            let b = ActionBounds::default();
            let a = map_action(&raw, &b, HOLE).unwrap();
            prop_assert!(a.x_hat_a.within(HOLE - b.target_half_width, HOLE + b.target_half_width));
            for i in 0..3 {
                prop_assert!((b.kp_x_lo..=b.kp_x_hi).contains(&a.kp_x[i]));
                prop_assert!((b.kp_f_lo..=b.kp_f_hi).contains(&a.kp_f[i]));
                prop_assert_eq!(a.gains.kd_x[i], 0.5 * a.kp_x[i]);
                prop_assert_eq!(a.gains.ki_f[i], 0.001 * a.kp_f[i]);
            }
        }
    }
}

//! One-dimensional walking dynamics along links.
//!
//! Each pedestrian relaxes toward a desired speed and brakes under an
//! exponential repulsion from the pedestrian ahead in its lane:
//!
//! ```text
//! a = (v0 - v) / tau - A * exp((2r - h) / B)
//! ```
//!
//! where `h` is the centre-to-centre headway. Positions are capped so the gap
//! to the leader never falls below one body diameter.

use serde::{Deserialize, Serialize};

/// Headways beyond this distance are treated as open road.
pub const LOOKAHEAD_M: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkParams {
    /// m/s
    pub desired_speed: f64,
    /// s
    pub relaxation_time: f64,
    /// m/s²
    pub repulsion_strength: f64,
    /// m
    pub repulsion_range: f64,
    /// m
    pub body_radius: f64,
    /// m/s
    pub max_speed: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            desired_speed: 1.33,
            relaxation_time: 0.5,
            repulsion_strength: 2.0,
            repulsion_range: 1.0,
            body_radius: 0.25,
            max_speed: 2.0,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("desired_speed", self.desired_speed),
            ("relaxation_time", self.relaxation_time),
            ("repulsion_strength", self.repulsion_strength),
            ("repulsion_range", self.repulsion_range),
            ("body_radius", self.body_radius),
            ("max_speed", self.max_speed),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.desired_speed > self.max_speed {
            return Err(format!(
                "desired_speed {} exceeds max_speed {}",
                self.desired_speed, self.max_speed
            ));
        }
        Ok(())
    }

    /// Minimum centre-to-centre spacing.
    pub fn diameter(&self) -> f64 {
        2.0 * self.body_radius
    }

    /// Number of single-file lanes a link of `width` metres holds.
    pub fn lanes_for_width(&self, width: f64) -> usize {
        ((width / self.diameter()).floor() as usize).max(1)
    }

    /// Upper bound on sustained outflow of a link, persons per second:
    /// lanes × max speed × jam density per lane.
    pub fn max_outflow(&self, width: f64) -> f64 {
        self.lanes_for_width(width) as f64 * self.max_speed / self.diameter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentKinematics {
    pub link: usize,
    /// Metres from the link start.
    pub offset: f64,
    /// m/s
    pub speed: f64,
}

/// Distance from a follower at `offset` to its leader.
///
/// `leader_on_link` is the offset of the nearest agent strictly ahead on the
/// same link (and lane); otherwise `rear_on_next_link` is the offset of the
/// rearmost agent on the next link of the follower's route. `None` means open
/// road within [`LOOKAHEAD_M`].
pub fn headway(offset: f64, link_length: f64, leader_on_link: Option<f64>, rear_on_next_link: Option<f64>) -> Option<f64> {
    let h = match (leader_on_link, rear_on_next_link) {
        (Some(leader), _) => leader - offset,
        (None, Some(rear)) => (link_length - offset) + rear,
        (None, None) => return None,
    };
    (h <= LOOKAHEAD_M).then_some(h)
}

/// [`headway`] over unsorted occupant offsets of the current and next link.
pub fn headway_among(offset: f64, link_length: f64, this_link: &[f64], next_link: &[f64]) -> Option<f64> {
    let leader = this_link.iter().copied().filter(|&o| o > offset).min_by(f64::total_cmp);
    let rear = next_link.iter().copied().min_by(f64::total_cmp);
    headway(offset, link_length, leader, rear)
}

/// Acceleration for the current speed and headway.
pub fn acceleration(speed: f64, headway: Option<f64>, params: &WalkParams) -> f64 {
    let drive = (params.desired_speed - speed) / params.relaxation_time;
    let repulsion = headway.map_or(0.0, |h| {
        params.repulsion_strength * ((params.diameter() - h) / params.repulsion_range).exp()
    });
    drive - repulsion
}

/// Explicit Euler step with speed clamping and no-pass position capping.
/// The returned offset may run past the end of the link; the caller hands
/// the agent over to its next link.
pub fn step_kinematics(kin: AgentKinematics, headway: Option<f64>, params: &WalkParams, dt: f64) -> AgentKinematics {
    let a = acceleration(kin.speed, headway, params);
    let mut speed = (kin.speed + a * dt).clamp(0.0, params.max_speed);
    let mut offset = kin.offset + speed * dt;
    if let Some(h) = headway {
        let limit = kin.offset + (h - params.diameter()).max(0.0);
        if offset > limit {
            offset = limit;
            speed = (limit - kin.offset) / dt;
        }
    }
    AgentKinematics {
        link: kin.link,
        offset,
        speed,
    }
}

/// Clamps a proposed move at an active stop line.
///
/// Returns the (possibly) clamped kinematics and whether the agent is now
/// being held at the line.
pub fn stop_hold(previous_offset: f64, proposed: AgentKinematics, stop_offset: f64) -> (AgentKinematics, bool) {
    if previous_offset <= stop_offset && proposed.offset > stop_offset {
        (
            AgentKinematics {
                link: proposed.link,
                offset: stop_offset,
                speed: 0.0,
            },
            true,
        )
    } else {
        (proposed, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn at(offset: f64, speed: f64) -> AgentKinematics {
        AgentKinematics { link: 0, offset, speed }
    }

    #[test]
    fn headway_examples() {
        assert_eq!(headway_among(3.0, 10.0, &[3.0], &[]), None);
        assert_eq!(headway_among(3.0, 10.0, &[5.0, 3.0], &[]), Some(2.0));
        assert_abs_diff_eq!(headway_among(9.5, 10.0, &[9.5], &[1.5, 4.0]).unwrap(), 2.0, epsilon = 1e-12);
        // beyond the lookahead
        assert_eq!(headway_among(0.0, 50.0, &[20.0], &[]), None);
        assert_eq!(headway_among(0.0, 50.0, &[10.0], &[]), Some(10.0));
    }

    #[test]
    fn equilibrium_speed_is_kept() {
        let p = WalkParams::default();
        let next = step_kinematics(at(0.0, p.desired_speed), None, &p, 0.1);
        assert_eq!(next.speed, p.desired_speed);
        assert_abs_diff_eq!(next.offset, 0.133, epsilon = 1e-12);
    }

    #[test]
    fn start_from_rest() {
        let p = WalkParams::default();
        let next = step_kinematics(at(0.0, 0.0), None, &p, 0.1);
        assert_abs_diff_eq!(next.speed, 1.33 / 0.5 * 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(next.speed, 0.266, epsilon = 1e-12);
    }

    #[test]
    fn contact_brakes_hard() {
        let p = WalkParams::default();
        let h = p.diameter();
        assert_abs_diff_eq!(acceleration(p.desired_speed, Some(h), &p), -p.repulsion_strength, epsilon = 1e-12);
        let next = step_kinematics(at(4.0, 0.1), Some(h), &p, 0.1);
        assert_eq!(next.speed, 0.0);
        assert_eq!(next.offset, 4.0);
    }

    #[test]
    fn overshoot_is_capped_behind_leader() {
        let p = WalkParams::default();
        let next = step_kinematics(at(0.0, 2.0), Some(0.6), &p, 0.1);
        assert_abs_diff_eq!(next.offset, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(next.speed, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn free_flow_converges_within_five_tau() {
        let p = WalkParams::default();
        let dt = 0.1;
        let mut kin = at(0.0, 0.0);
        let steps = (5.0 * p.relaxation_time / dt).round() as usize;
        for _ in 0..steps {
            let next = step_kinematics(kin, None, &p, dt);
            assert!(next.speed >= kin.speed && next.speed <= p.desired_speed);
            kin = next;
        }
        assert!((p.desired_speed - kin.speed) / p.desired_speed < 0.01);
    }

    #[test]
    fn stop_line_holds() {
        let (k, held) = stop_hold(9.9, at(10.2, 1.3), 10.0);
        assert!(held);
        assert_eq!((k.offset, k.speed), (10.0, 0.0));
        let (k, held) = stop_hold(10.0, at(10.1, 0.5), 10.0);
        assert!(held);
        assert_eq!(k.offset, 10.0);
        let (k, held) = stop_hold(10.5, at(10.6, 1.0), 10.0);
        assert!(!held);
        assert_eq!(k.offset, 10.6);
    }

    #[test]
    fn parameter_validation() {
        assert!(WalkParams::default().validate().is_ok());
        let bad = WalkParams {
            desired_speed: 3.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = WalkParams {
            body_radius: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn lanes_and_outflow_bound() {
        let p = WalkParams::default();
        assert_eq!(p.lanes_for_width(0.3), 1);
        assert_eq!(p.lanes_for_width(2.0), 4);
        assert_abs_diff_eq!(p.max_outflow(2.0), 4.0 * 2.0 / 0.5, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn step_respects_bounds_and_spacing(
            offset in 0.0f64..100.0,
            speed in 0.0f64..2.0,
            gap in 0.5f64..10.0,
            leader_moves in proptest::bool::ANY,
        ) {
            let p = WalkParams::default();
            let h = if leader_moves { Some(gap) } else { None };
            let next = step_kinematics(at(offset, speed), h, &p, 0.1);
            prop_assert!(next.speed >= 0.0 && next.speed <= p.max_speed);
            prop_assert!(next.offset >= offset);
            if let Some(h) = h {
                prop_assert!(offset + h - next.offset >= p.diameter() - 1e-9);
            }
        }
    }
}

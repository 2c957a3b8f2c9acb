use crate::env::Vec2;
use crate::math;

/// Planar pose; `theta` stays in `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: math::wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Unicycle step using the heading held before the step.
    pub fn integrate(&self, v: f64, omega: f64, dt: f64) -> Self {
        Self {
            x: self.x + v * math::cos(self.theta) * dt,
            y: self.y + v * math::sin(self.theta) * dt,
            theta: math::wrap_angle(self.theta + omega * dt),
        }
    }
}

/// Differential-drive constants and controller gains.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DriveParams {
    pub wheel_base: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Largest magnitude either wheel may be commanded.
    pub wheel_max: f64,
    pub k_v: f64,
    pub k_omega: f64,
    pub dt: f64,
    pub deadband: f64,
}

impl Default for DriveParams {
    fn default() -> Self {
        Self {
            wheel_base: 0.02,
            v_max: 0.1,
            omega_max: 6.0,
            wheel_max: 0.1,
            k_v: 2.0,
            k_omega: 4.0,
            dt: 0.02,
            deadband: 0.01,
        }
    }
}

impl DriveParams {
    /// Proportional waypoint law, returning `(v, ω)` before wheel limits.
    pub fn control(&self, believed: &Pose, waypoint: Vec2) -> (f64, f64) {
        let dx = waypoint.x - believed.x;
        let dy = waypoint.y - believed.y;
        let d = math::hypot(dx, dy);
        if d < self.deadband {
            return (0.0, 0.0);
        }
        let alpha = math::wrap_angle(math::atan2(dy, dx) - believed.theta);
        let v = if alpha.abs() > math::PI / 2.0 {
            0.0
        } else {
            (self.k_v * d * math::cos(alpha)).clamp(0.0, self.v_max)
        };
        let omega = (self.k_omega * alpha).clamp(-self.omega_max, self.omega_max);
        (v, omega)
    }

    /// `[left, right] = v ∓ ωL/2`, scaled down together when either exceeds `wheel_max`.
    pub fn wheel_speeds(&self, v: f64, omega: f64) -> [f64; 2] {
        let half = omega * self.wheel_base / 2.0;
        let (l, r) = (v - half, v + half);
        let peak = l.abs().max(r.abs());
        if peak > self.wheel_max {
            let k = self.wheel_max / peak;
            [l * k, r * k]
        } else {
            [l, r]
        }
    }

    /// `(v, ω)` realized by a wheel pair.
    pub fn body_rates(&self, wheels: [f64; 2]) -> (f64, f64) {
        ((wheels[0] + wheels[1]) / 2.0, (wheels[1] - wheels[0]) / self.wheel_base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deadband_stops() {
        let p = DriveParams::default();
        let (v, w) = p.control(&Pose::new(0.3, 0.2, 1.0), Vec2::new(0.305, 0.2));
        assert_eq!(p.wheel_speeds(v, w), [0.0, 0.0]);
    }

    #[test]
    fn dead_ahead_drives_straight() {
        let p = DriveParams::default();
        let (v, w) = p.control(&Pose::new(0.0, 0.0, 0.0), Vec2::new(1.0, 0.0));
        assert_eq!((v, w), (0.1, 0.0));
        let wheels = p.wheel_speeds(v, w);
        assert_eq!(wheels, [0.1, 0.1]);
        let next = Pose::default().integrate(v, w, p.dt);
        assert_eq!((next.y, next.theta), (0.0, 0.0));
        assert!((next.x - 0.002).abs() < 1e-15);
    }

    #[test]
    fn behind_rotates_in_place_and_heading_error_shrinks() {
        let p = DriveParams::default();
        let target = Vec2::new(-0.5, 0.0);
        let mut pose = Pose::new(0.0, 0.0, 0.01);
        let bearing = |pose: &Pose| math::wrap_angle(math::PI - pose.theta).abs();
        let (v, w) = p.control(&pose, target);
        assert_eq!(v, 0.0);
        assert_eq!(w.abs(), p.omega_max);
        let mut prev = bearing(&pose);
        for _ in 0..60 {
            let (v, w) = p.control(&pose, target);
            let (v, w) = p.body_rates(p.wheel_speeds(v, w));
            pose = pose.integrate(v, w, p.dt);
            let now = bearing(&pose);
            if prev > 1e-9 {
                assert!(now < prev, "{now} !< {prev}");
            }
            prev = now;
        }
    }

    #[test]
    fn rescaling_keeps_ratio() {
        let p = DriveParams::default();
        let [l, r] = p.wheel_speeds(0.1, 6.0);
        assert!(l.abs().max(r.abs()) <= p.wheel_max + 1e-15);
        let (v, w) = p.body_rates([l, r]);
        assert!((w / v - 60.0).abs() < 1e-9);
    }
}

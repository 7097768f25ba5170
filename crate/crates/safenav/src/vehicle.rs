//! Kinematic vehicle models and their turning geometry.

use crate::error::{invalid, Result};
use crate::geom::{closest_on_segment, perp, wrap_angle, Circle2, Point3, Pose2};

pub type UnicycleState = Pose2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnicycleParams {
    pub v: f64,
    pub u_max: f64,
}

impl UnicycleParams {
    pub fn new(v: f64, u_max: f64) -> Result<Self> {
        if !(v > 0.0) || !(u_max > 0.0) {
            return Err(invalid(format!("speed and turn-rate bound must be positive (v={v}, u_max={u_max})")));
        }
        Ok(UnicycleParams { v, u_max })
    }
}

/// Outcome of a step: the new state and whether the input had to be corrected.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stepped<S> {
    pub state: S,
    pub corrected: bool,
}

/// Advances the unicycle by `dt` with turn rate `u` held constant, integrating the arc exactly.
pub fn step_unicycle(state: &UnicycleState, params: &UnicycleParams, u: f64, dt: f64) -> Result<Stepped<UnicycleState>> {
    if !(dt > 0.0) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let clamped = u.clamp(-params.u_max, params.u_max);
    let corrected = clamped != u;
    let v = params.v;
    let th = state.theta;
    let (x, y, theta) = if clamped.abs() < 1e-12 {
        (state.x + v * dt * th.cos(), state.y + v * dt * th.sin(), th)
    } else {
        let th1 = th + clamped * dt;
        let r = v / clamped;
        (state.x + r * (th1.sin() - th.sin()), state.y - r * (th1.cos() - th.cos()), th1)
    };
    Ok(Stepped { state: Pose2 { x, y, theta: wrap_angle(theta) }, corrected })
}

pub fn min_turn_radius(params: &UnicycleParams) -> f64 {
    params.v / params.u_max
}

/// The two minimum-radius circles tangent to the heading at the robot position: `(left, right)`.
pub fn initial_circles(pose: &Pose2, r_min: f64) -> (Circle2, Circle2) {
    let n = perp(&pose.heading());
    let p = pose.position();
    (Circle2 { center: p + n * r_min, radius: r_min }, Circle2 { center: p - n * r_min, radius: r_min })
}

/// Flying-robot state: position and unit velocity direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vehicle3State {
    pub s: Point3,
    pub i: Point3,
}

impl Vehicle3State {
    pub fn new(s: Point3, i: Point3) -> Self {
        Vehicle3State { s, i: i.normalize() }
    }
}

/// Euler step of `i̇ = u` with `u` forced perpendicular to `i` and `i` renormalised;
/// the position advances along the mean of the old and new heading.
pub fn step_vehicle3(state: &Vehicle3State, v: f64, u: &Point3, u_max: f64, dt: f64) -> Result<Stepped<Vehicle3State>> {
    if !(dt > 0.0) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let i = state.i;
    let mut u = *u;
    let mut corrected = false;
    let along = u.dot(&i);
    if along.abs() > 1e-6 {
        corrected = true;
    }
    u -= i * along;
    let n = u.norm();
    if n > u_max * (1.0 + 1e-12) {
        u *= u_max / n;
        corrected = true;
    }
    let i1 = (i + u * dt).normalize();
    let s = state.s + (i + i1) * (0.5 * v * dt);
    Ok(Stepped { state: Vehicle3State { s, i: i1 }, corrected })
}

/// Torus swept by all minimum-radius turning circles tangent to `i` at `s`.
///
/// Its base circle `B` has centre `s`, radius `R_min` and lies in the plane normal to `i`;
/// the tube radius equals the base radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialTorus {
    pub center: Point3,
    pub normal: Point3,
    pub radius: f64,
}

impl InitialTorus {
    pub fn new(state: &Vehicle3State, r_min: f64) -> Self {
        InitialTorus { center: state.s, normal: state.i, radius: r_min }
    }

    /// Nearest point of the base circle to `p` (a fixed fallback on the axis).
    pub fn nearest_on_base(&self, p: &Point3) -> Point3 {
        let d = p - self.center;
        let mut radial = d - self.normal * d.dot(&self.normal);
        if radial.norm() < 1e-12 {
            radial = any_perpendicular(&self.normal);
        }
        self.center + radial.normalize() * self.radius
    }

    /// Whether `p` lies strictly inside the tube.
    pub fn contains(&self, p: &Point3) -> bool {
        (p - self.nearest_on_base(p)).norm() < self.radius
    }
}

/// A unit vector perpendicular to `n`.
pub fn any_perpendicular(n: &Point3) -> Point3 {
    let a = if n.x.abs() < 0.9 { Point3::x() } else { Point3::y() };
    n.cross(&a).normalize()
}

/// Closest point of a polyline and the index of its segment.
pub fn closest_on_polyline<const D: usize>(
    pts: &[nalgebra::SVector<f64, D>],
    p: &nalgebra::SVector<f64, D>,
) -> (nalgebra::SVector<f64, D>, usize, f64) {
    if pts.len() == 1 {
        return (pts[0], 0, (pts[0] - p).norm());
    }
    let mut best = (pts[0], 0, f64::INFINITY);
    for k in 0..pts.len() - 1 {
        let (q, _) = closest_on_segment(&pts[k], &pts[k + 1], p);
        let d = (q - p).norm();
        if d < best.2 {
            best = (q, k, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::geom::Point2;

    #[test]
    fn straight_step() {
        let p = UnicycleParams::new(1.0, 1.0).unwrap();
        let s = step_unicycle(&Pose2::new(0.0, 0.0, 0.0), &p, 0.0, 0.1).unwrap().state;
        assert!((s.x - 0.1).abs() < 1e-15 && s.y.abs() < 1e-15 && s.theta == 0.0);
    }

    #[test]
    fn circle_closes() {
        let p = UnicycleParams::new(0.5, 2.0).unwrap();
        let s0 = Pose2::new(1.0, -2.0, 0.3);
        let s = step_unicycle(&s0, &p, 2.0, PI).unwrap().state;
        assert!((s.x - s0.x).abs() < 1e-9 && (s.y - s0.y).abs() < 1e-9);
        assert!(wrap_angle(s.theta - s0.theta).abs() < 1e-9);
    }

    #[test]
    fn clamps_and_rejects() {
        let p = UnicycleParams::new(1.0, 1.0).unwrap();
        let st = step_unicycle(&Pose2::new(0.0, 0.0, 0.0), &p, 5.0, 0.1).unwrap();
        assert!(st.corrected);
        assert!(step_unicycle(&Pose2::new(0.0, 0.0, 0.0), &p, 0.0, 0.0).is_err());
        assert!(UnicycleParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn turn_radius_values() {
        assert_eq!(min_turn_radius(&UnicycleParams::new(0.5, 2.0).unwrap()), 0.25);
        assert_eq!(min_turn_radius(&UnicycleParams::new(1.0, 1.0).unwrap()), 1.0);
        assert!((min_turn_radius(&UnicycleParams::new(0.15, 0.4).unwrap()) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn circles_of_origin_pose() {
        let (l, r) = initial_circles(&Pose2::new(0.0, 0.0, 0.0), 1.0);
        assert!((l.center - Point2::new(0.0, 1.0)).norm() < 1e-15);
        assert!((r.center - Point2::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn vehicle3_keeps_unit_heading() {
        let mut s = Vehicle3State::new(Point3::zeros(), Point3::new(1.0, 0.0, 0.0));
        for _ in 0..100_000 {
            let u = s.i.cross(&Point3::z()) * 2.0;
            s = step_vehicle3(&s, 0.7, &u, 2.0, 1e-4).unwrap().state;
        }
        assert!((s.i.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn torus_base_circle() {
        let t = InitialTorus::new(&Vehicle3State::new(Point3::zeros(), Point3::z()), 1.0);
        let q = t.nearest_on_base(&Point3::new(3.0, 0.0, 5.0));
        assert!((q - Point3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(t.contains(&Point3::new(1.2, 0.0, 0.3)));
        assert!(!t.contains(&Point3::new(0.0, 0.0, 1.5)));
    }
}

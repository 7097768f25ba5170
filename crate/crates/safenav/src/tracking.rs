//! Sliding-mode path tracking for the unicycle and the flying robot.

use std::f64::consts::FRAC_PI_2;

use crate::geom::{Point2, Point3, Pose2};
use crate::vehicle::{
    any_perpendicular, closest_on_polyline, step_unicycle, step_vehicle3, UnicycleParams, Vehicle3State,
};

/// Three-valued sign; `sgn(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Saturated linear function: `λz` for `|z| ≤ σ`, else `λσ·sgn(z)`.
pub fn saturation_x(z: f64, lambda: f64, sigma: f64) -> f64 {
    if z.abs() <= sigma {
        lambda * z
    } else {
        lambda * sigma * sgn(z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains2D {
    pub lambda: f64,
    pub sigma: f64,
}

impl Default for Gains2D {
    fn default() -> Self {
        Gains2D { lambda: 2.0, sigma: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains3D {
    pub lambda_d: f64,
    pub sigma_d: f64,
    pub lambda_a: f64,
    pub sigma_a: f64,
    pub w_d: f64,
    pub w_a: f64,
}

impl Default for Gains3D {
    fn default() -> Self {
        Gains3D { lambda_d: 2.0, sigma_d: 1.0, lambda_a: 3.0, sigma_a: 1.0, w_d: 1.0, w_a: 1.0 }
    }
}

/// How the switching function is realised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Switching {
    /// Pure sign function, bang-bang output.
    Sign,
    /// `clamp(slope·z, -1, 1)`, which trades tracking stiffness for less chatter.
    Smooth { slope: f64 },
}

impl Switching {
    /// Smooth switching with the default slope `10/σ`.
    pub fn smooth_for(sigma: f64) -> Self {
        Switching::Smooth { slope: 10.0 / sigma }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Switching::Sign => sgn(z),
            Switching::Smooth { slope } => (slope * z).clamp(-1.0, 1.0),
        }
    }
}

/// Cross-track error: distance to the polyline, positive when the closest point is
/// in the robot's left (upper) half-plane.
pub fn signed_cross_track(pose: &Pose2, path: &[Point2]) -> (f64, usize) {
    signed_cross_track_in(pose, path, 0, path.len())
}

fn signed_cross_track_in(pose: &Pose2, path: &[Point2], lo: usize, hi: usize) -> (f64, usize) {
    let p = pose.position();
    let (q, k, d) = closest_on_polyline(&path[lo..hi], &p);
    let side = pose.to_local(&q).y;
    (d * sgn(side), k + lo)
}

/// Path law `u = u_max·sgn(ė + X(e))`.
pub fn smc2d(e: f64, e_dot: f64, gains: &Gains2D, u_max: f64) -> f64 {
    smc2d_with(e, e_dot, gains, u_max, Switching::Sign)
}

pub fn smc2d_with(e: f64, e_dot: f64, gains: &Gains2D, u_max: f64, sw: Switching) -> f64 {
    u_max * sw.apply(e_dot + saturation_x(e, gains.lambda, gains.sigma))
}

/// Boundary-following law `Γ·sgn(ḋ + X(d − d₀))·u_max`; `Γ = +1` keeps the boundary on the left.
pub fn boundary_law(gamma: f64, d: f64, d_dot: f64, d0: f64, gains: &Gains2D, u_max: f64, sw: Switching) -> f64 {
    gamma * u_max * sw.apply(d_dot + saturation_x(d - d0, gains.lambda, gains.sigma))
}

/// Closed-loop tracker for the unicycle with finite-difference error rate.
#[derive(Clone, Debug)]
pub struct PathTracker2 {
    pub gains: Gains2D,
    pub switching: Switching,
    prev_e: Option<f64>,
    hint: usize,
}

impl PathTracker2 {
    pub fn new(gains: Gains2D, switching: Switching) -> Self {
        PathTracker2 { gains, switching, prev_e: None, hint: 0 }
    }

    /// Forgets the progress hint; call when the tracked path is replaced.
    pub fn new_path(&mut self) {
        self.hint = 0;
    }

    /// Closed-loop control over `interval` with substep `dt`.
    ///
    /// Returns the state after each substep; empty for a zero interval.
    pub fn track_step(
        &mut self,
        robot: &Pose2,
        params: &UnicycleParams,
        path: &[Point2],
        interval: f64,
        dt: f64,
    ) -> Vec<Pose2> {
        let steps = (interval / dt - 1e-9).ceil().max(0.0) as usize;
        let mut out = Vec::with_capacity(steps);
        if steps == 0 || path.is_empty() {
            return out;
        }
        let h = interval / steps as f64;
        let mut state = *robot;
        for _ in 0..steps {
            let u = self.control(&state, params, path, h);
            state = step_unicycle(&state, params, u, h).expect("positive substep").state;
            out.push(state);
        }
        out
    }

    /// Turn rate for the current state.
    pub fn control(&mut self, state: &Pose2, params: &UnicycleParams, path: &[Point2], h: f64) -> f64 {
        let lo = self.hint.saturating_sub(3).min(path.len() - 1);
        let hi = (self.hint + 40).min(path.len()).max(lo + 1);
        let (e, k) = signed_cross_track_in(state, path, lo, hi);
        self.hint = k;
        let e_dot = self.prev_e.map_or(0.0, |p| (e - p) / h);
        self.prev_e = Some(e);
        smc2d_with(e, e_dot, &self.gains, params.u_max, self.switching)
    }
}

/// Distance and orientation errors of the flying robot relative to a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Errors3 {
    pub e_d: f64,
    pub e_a: f64,
    /// Unit vector from the robot toward the closest path point.
    pub nu_d: Point3,
    /// Normal of the plane through the robot containing the local path tangent.
    pub nu_a: Point3,
    /// Robot sits on the path; the plane was chosen by the fallback rule.
    pub degenerate: bool,
    pub index: usize,
}

pub fn errors3d(state: &Vehicle3State, path: &[Point3]) -> Errors3 {
    errors3d_in(state, path, 0, path.len())
}

fn errors3d_in(state: &Vehicle3State, path: &[Point3], lo: usize, hi: usize) -> Errors3 {
    let (q, k0, e_d) = closest_on_polyline(&path[lo..hi], &state.s);
    let k = k0 + lo;
    let tangent = if path.len() > 1 {
        let a = k.min(path.len() - 2);
        (path[a + 1] - path[a]).normalize()
    } else {
        state.i
    };
    let i = state.i;
    let mut degenerate = false;
    let (nu_d, nu_a) = if e_d > 1e-9 {
        let nu_d = (q - state.s) / e_d;
        let n = tangent.cross(&nu_d);
        if n.norm() > 1e-9 {
            (nu_d, n.normalize())
        } else {
            degenerate = true;
            (nu_d, any_perpendicular(&nu_d))
        }
    } else {
        degenerate = true;
        let dev = i - tangent * i.dot(&tangent);
        let nu_a = if dev.norm() > 1e-12 { dev.normalize() } else { any_perpendicular(&tangent) };
        (Point3::zeros(), nu_a)
    };
    let e_a = i.dot(&nu_a).clamp(-1.0, 1.0).acos() - FRAC_PI_2;
    Errors3 { e_d, e_a, nu_d, nu_a, degenerate, index: k }
}

/// Two-error sliding-mode law; the output is perpendicular to `i` with norm 0 or `u_max`.
pub fn smc3d(
    state: &Vehicle3State,
    errors: &Errors3,
    rates: (f64, f64),
    gains: &Gains3D,
    u_max: f64,
    sw: Switching,
) -> Point3 {
    let u_d = sw.apply(rates.0 + saturation_x(errors.e_d, gains.lambda_d, gains.sigma_d));
    let u_a = sw.apply(rates.1 + saturation_x(errors.e_a, gains.lambda_a, gains.sigma_a));
    let u_s = errors.nu_d * (gains.w_d * u_d) + errors.nu_a * (gains.w_a * u_a);
    let i = state.i;
    let proj = i.cross(&u_s).cross(&i);
    let n = proj.norm();
    if n < 1e-12 {
        return Point3::zeros();
    }
    let scale = match sw {
        Switching::Sign => 1.0,
        Switching::Smooth { .. } => (u_s.norm()).min(1.0),
    };
    let u = proj * (u_max * scale / n);
    // remove round-off along i
    u - i * u.dot(&i)
}

/// Closed-loop tracker for the flying robot.
#[derive(Clone, Debug)]
pub struct PathTracker3 {
    pub gains: Gains3D,
    pub switching: Switching,
    prev: Option<(f64, f64)>,
    hint: usize,
}

impl PathTracker3 {
    pub fn new(gains: Gains3D, switching: Switching) -> Self {
        PathTracker3 { gains, switching, prev: None, hint: 0 }
    }

    pub fn new_path(&mut self) {
        self.hint = 0;
    }

    pub fn control(&mut self, state: &Vehicle3State, path: &[Point3], u_max: f64, h: f64) -> (Point3, Errors3) {
        let lo = self.hint.saturating_sub(3).min(path.len() - 1);
        let hi = (self.hint + 40).min(path.len()).max(lo + 1);
        let err = errors3d_in(state, path, lo, hi);
        self.hint = err.index;
        let rates = self.prev.map_or((0.0, 0.0), |(d, a)| ((err.e_d - d) / h, (err.e_a - a) / h));
        self.prev = Some((err.e_d, err.e_a));
        (smc3d(state, &err, rates, &self.gains, u_max, self.switching), err)
    }

    pub fn track_step(
        &mut self,
        state: &Vehicle3State,
        v: f64,
        u_max: f64,
        path: &[Point3],
        interval: f64,
        dt: f64,
    ) -> Vec<Vehicle3State> {
        let steps = (interval / dt - 1e-9).ceil().max(0.0) as usize;
        let mut out = Vec::with_capacity(steps);
        if steps == 0 || path.is_empty() {
            return out;
        }
        let h = interval / steps as f64;
        let mut s = *state;
        for _ in 0..steps {
            let (u, _) = self.control(&s, path, u_max, h);
            s = step_vehicle3(&s, v, &u, u_max, h).expect("positive substep").state;
            out.push(s);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_and_saturation() {
        assert_eq!(sgn(2.5), 1.0);
        assert_eq!(sgn(0.0), 0.0);
        assert_eq!(sgn(-1e-12), -1.0);
        assert_eq!(saturation_x(0.5, 2.0, 1.0), 1.0);
        assert_eq!(saturation_x(1.0, 2.0, 1.0), 2.0);
        assert_eq!(saturation_x(-3.0, 2.0, 1.0), -2.0);
    }

    #[test]
    fn cross_track_sign() {
        let path = vec![Point2::new(-5.0, 0.0), Point2::new(5.0, 0.0)];
        let (e, _) = signed_cross_track(&Pose2::new(0.0, -1.0, 0.0), &path);
        assert!((e - 1.0).abs() < 1e-12);
        let (e2, _) = signed_cross_track(&Pose2::new(0.0, 1.0, 0.0), &path);
        assert!((e2 + 1.0).abs() < 1e-12);
        assert_eq!(signed_cross_track(&Pose2::new(1.0, 0.0, 0.0), &path).0, 0.0);
    }

    #[test]
    fn law_values() {
        let g = Gains2D::default();
        assert_eq!(smc2d(0.0, 0.0, &g, 2.0), 0.0);
        assert_eq!(smc2d(1.5, 0.0, &g, 2.0), 2.0);
        let e = 0.3;
        assert_eq!(smc2d(e, -saturation_x(e, g.lambda, g.sigma), &g, 2.0), 0.0);
    }

    #[test]
    fn smc3d_on_path_is_zero() {
        let path: Vec<Point3> = (0..20).map(|k| Point3::new(k as f64 * 0.1, 0.0, 0.0)).collect();
        let s = Vehicle3State::new(Point3::new(0.55, 0.0, 0.0), Point3::x());
        let err = errors3d(&s, &path);
        let u = smc3d(&s, &err, (0.0, 0.0), &Gains3D::default(), 2.0, Switching::Sign);
        assert_eq!(u, Point3::zeros());
    }

    #[test]
    fn smc3d_steers_toward_path() {
        let path: Vec<Point3> = (0..20).map(|k| Point3::new(k as f64 * 0.1, 0.0, 0.0)).collect();
        let s = Vehicle3State::new(Point3::new(0.5, 1.0, 0.0), Point3::x());
        let err = errors3d(&s, &path);
        let u = smc3d(&s, &err, (0.0, 0.0), &Gains3D::default(), 2.0, Switching::Sign);
        assert!(u.dot(&err.nu_d) > 0.0);
        assert!(u.y < 0.0);
        assert!(u.dot(&s.i).abs() < 1e-9);
        assert!((u.norm() - 2.0).abs() < 1e-9);
    }
}

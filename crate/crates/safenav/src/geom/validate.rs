use std::f64::consts::PI;

use super::{cross2, Point2, Pose2, Shape2, World2};

/// Parameters a planar scene is checked against.
#[derive(Clone, Debug)]
pub struct ValidationInput {
    pub d_s: f64,
    pub r_min: f64,
    pub v_r: f64,
    /// Upper bound on obstacle speed.
    pub v_max: f64,
    /// Tighten the curvature bound to `1/((1+β)R_min)` with `β = v_max/v_r`.
    pub speed_scaled_curvature: bool,
    pub starts: Vec<Pose2>,
    pub targets: Vec<Point2>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Two enlarged obstacles (or an obstacle and the wall) overlap.
    Overlap { a: Option<usize>, b: usize, gap: f64 },
    /// An initial circle of robot `robot` leaves the reduced free space.
    InitialCircle { robot: usize, clearance: f64 },
    /// Offset boundary of obstacle `obstacle` bends tighter than allowed near `at`.
    Curvature { obstacle: usize, at: Point2, curvature: f64, limit: f64 },
    /// Obstacles may move as fast as the robot.
    SpeedBound { v_max: f64, v_r: f64 },
    StartBlocked { robot: usize, clearance: f64 },
    TargetBlocked { robot: usize, clearance: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Overlap { a: Some(a), b, gap } => write!(f, "obstacles {a} and {b} are only {gap:.3} m apart"),
            Violation::Overlap { a: None, b, gap } => write!(f, "obstacle {b} is only {gap:.3} m from the wall"),
            Violation::InitialCircle { robot, clearance } => {
                write!(f, "robot {robot}: initial circle clearance {clearance:.3} m below the margin")
            }
            Violation::Curvature { obstacle, at, curvature, limit } => write!(
                f,
                "obstacle {obstacle}: offset boundary curvature {curvature:.3} exceeds {limit:.3} near ({:.2}, {:.2})",
                at.x, at.y
            ),
            Violation::SpeedBound { v_max, v_r } => write!(f, "obstacle speed {v_max} not below robot speed {v_r}"),
            Violation::StartBlocked { robot, clearance } => {
                write!(f, "robot {robot}: start clearance {clearance:.3} m below the margin")
            }
            Violation::TargetBlocked { robot, clearance } => {
                write!(f, "robot {robot}: target clearance {clearance:.3} m below the margin")
            }
        }
    }
}

/// Checks a planar scene against the planner's standing assumptions.
///
/// Returns an empty list for a compliant scene.
pub fn validate_scenario(world: &World2, input: &ValidationInput) -> Vec<Violation> {
    let mut out = Vec::new();
    let d_s = input.d_s;
    let shapes: Vec<&Shape2> = world.obstacles.iter().map(|o| &o.shape).collect();
    for (j, s) in shapes.iter().enumerate() {
        let (lo, hi) = s.aabb();
        let wall = (lo.x - world.min.x).min(lo.y - world.min.y).min(world.max.x - hi.x).min(world.max.y - hi.y);
        let moving = world.obstacles[j].velocity != Point2::zeros();
        if !moving && wall < 2.0 * d_s {
            out.push(Violation::Overlap { a: None, b: j, gap: wall.max(0.0) });
        }
        for i in 0..j {
            let gap = shapes[i].distance_to(s);
            let both_static =
                world.obstacles[i].velocity == Point2::zeros() && world.obstacles[j].velocity == Point2::zeros();
            if both_static && gap <= 2.0 * d_s {
                out.push(Violation::Overlap { a: Some(i), b: j, gap });
            }
        }
    }
    for (r, pose) in input.starts.iter().enumerate() {
        let c0 = world.clearance(&pose.position(), 0.0);
        if c0 < d_s {
            out.push(Violation::StartBlocked { robot: r, clearance: c0 });
        }
        let (a, b) = crate::vehicle::initial_circles(pose, input.r_min);
        let mut worst = f64::INFINITY;
        for circle in [a, b] {
            for k in 0..64 {
                let ang = 2.0 * PI * k as f64 / 64.0;
                let p = circle.center + Point2::new(ang.cos(), ang.sin()) * circle.radius;
                worst = worst.min(world.clearance(&p, 0.0));
            }
        }
        if worst < d_s {
            out.push(Violation::InitialCircle { robot: r, clearance: worst });
        }
    }
    for (r, t) in input.targets.iter().enumerate() {
        let c = world.clearance(t, 0.0);
        if c < d_s {
            out.push(Violation::TargetBlocked { robot: r, clearance: c });
        }
    }
    let beta = if input.v_r > 0.0 { input.v_max / input.v_r } else { 0.0 };
    let r_eff = if input.speed_scaled_curvature { (1.0 + beta) * input.r_min } else { input.r_min };
    let limit = 1.0 / r_eff;
    for (j, s) in shapes.iter().enumerate() {
        if let Some((at, k)) = max_offset_curvature(s, d_s, r_eff.min(d_s) / 4.0) {
            if k > limit * (1.0 + 1e-6) {
                out.push(Violation::Curvature { obstacle: j, at, curvature: k, limit });
            }
        }
    }
    if input.v_max >= input.v_r {
        out.push(Violation::SpeedBound { v_max: input.v_max, v_r: input.v_r });
    }
    out
}

/// Samples the `d`-offset boundary of a shape at spacing about `h`.
pub(crate) fn offset_boundary(shape: &Shape2, d: f64, h: f64) -> Vec<Point2> {
    match shape {
        Shape2::Disk { center, radius } => {
            let r = radius + d;
            let n = ((2.0 * PI * r / h).ceil() as usize).max(16);
            (0..n)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n as f64;
                    center + Point2::new(a.cos(), a.sin()) * r
                })
                .collect()
        }
        Shape2::Polygon(v) => {
            let n = v.len();
            let normal = |i: usize| {
                let e = v[(i + 1) % n] - v[i];
                Point2::new(e.y, -e.x).normalize()
            };
            // per vertex: (entry, exit, arc?) of the offset curve
            let mut joints: Vec<(Point2, Point2, bool)> = Vec::with_capacity(n);
            for j in 0..n {
                let prev = (j + n - 1) % n;
                let e0 = v[j] - v[prev];
                let e1 = v[(j + 1) % n] - v[j];
                let n0 = normal(prev);
                let n1 = normal(j);
                if cross2(&e0, &e1) >= 0.0 {
                    joints.push((v[j] + n0 * d, v[j] + n1 * d, true));
                } else {
                    let p0 = v[j] + n0 * d;
                    let p1 = v[j] + n1 * d;
                    let den = cross2(&e0, &e1);
                    let t = cross2(&(p1 - p0), &e1) / den;
                    let x = p0 + e0 * t;
                    joints.push((x, x, false));
                }
            }
            let mut pts = Vec::new();
            for j in 0..n {
                let (entry, exit, arc) = joints[j];
                if arc {
                    let a0 = (entry - v[j]).y.atan2((entry - v[j]).x);
                    let mut a1 = (exit - v[j]).y.atan2((exit - v[j]).x);
                    while a1 < a0 {
                        a1 += 2.0 * PI;
                    }
                    let m = (((a1 - a0) * d / h).ceil() as usize).max(1);
                    for k in 0..m {
                        let a = a0 + (a1 - a0) * k as f64 / m as f64;
                        pts.push(v[j] + Point2::new(a.cos(), a.sin()) * d);
                    }
                } else {
                    pts.push(entry);
                }
                let next_entry = joints[(j + 1) % n].0;
                let seg = next_entry - exit;
                let m = ((seg.norm() / h).ceil() as usize).max(1);
                for k in 0..m {
                    pts.push(exit + seg * (k as f64 / m as f64));
                }
            }
            pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
            pts
        }
    }
}

/// Menger curvature of three points.
pub(crate) fn menger_curvature(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    let area2 = cross2(&(b - a), &(c - a)).abs();
    let den = (b - a).norm() * (c - b).norm() * (a - c).norm();
    if den <= 0.0 {
        0.0
    } else {
        2.0 * area2 / den
    }
}

fn max_offset_curvature(shape: &Shape2, d: f64, h: f64) -> Option<(Point2, f64)> {
    let pts = offset_boundary(shape, d, h);
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let mut best: Option<(Point2, f64)> = None;
    for i in 0..n {
        let k = menger_curvature(&pts[(i + n - 1) % n], &pts[i], &pts[(i + 1) % n]);
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((pts[i], k));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Obstacle2;

    fn input(d_s: f64) -> ValidationInput {
        ValidationInput {
            d_s,
            r_min: 0.25,
            v_r: 0.5,
            v_max: 0.0,
            speed_scaled_curvature: false,
            starts: vec![Pose2::new(1.0, 1.0, 0.0)],
            targets: vec![Point2::new(9.0, 9.0)],
        }
    }

    fn arena() -> World2 {
        World2::new(Point2::new(-1.0, -1.0), Point2::new(11.0, 11.0))
    }

    #[test]
    fn compliant_scene() {
        let w = arena().with(Obstacle2::fixed(Shape2::Disk { center: Point2::new(5.0, 5.0), radius: 1.0 }));
        assert!(validate_scenario(&w, &input(0.6)).is_empty());
    }

    #[test]
    fn close_obstacles_flagged() {
        let d_s = 0.6;
        let w = arena()
            .with(Obstacle2::fixed(Shape2::rect(Point2::new(3.0, 4.0), Point2::new(4.0, 6.0))))
            .with(Obstacle2::fixed(Shape2::rect(Point2::new(4.0 + 1.5 * d_s, 4.0), Point2::new(6.0, 6.0))));
        let v = validate_scenario(&w, &input(d_s));
        assert!(v.iter().any(|x| matches!(x, Violation::Overlap { a: Some(0), b: 1, .. })), "{v:?}");
    }

    #[test]
    fn notch_curvature_flagged() {
        let notch = Shape2::polygon(vec![
            Point2::new(3.0, 3.0),
            Point2::new(7.0, 3.0),
            Point2::new(7.0, 7.0),
            Point2::new(5.0, 7.0),
            Point2::new(5.0, 5.0),
            Point2::new(3.0, 5.0),
        ]);
        let w = arena().with(Obstacle2::fixed(notch));
        let v = validate_scenario(&w, &input(0.3));
        assert!(v.iter().any(|x| matches!(x, Violation::Curvature { .. })), "{v:?}");
    }

    #[test]
    fn disk_offset_curvature_exact() {
        let s = Shape2::Disk { center: Point2::zeros(), radius: 1.0 };
        let (_, k) = max_offset_curvature(&s, 0.5, 0.05).unwrap();
        assert!((k - 1.0 / 1.5).abs() < 1e-9);
    }
}

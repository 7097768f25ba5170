//! Geometry primitives, obstacle worlds and grid regions.

mod grid;
mod validate;

pub use grid::{
    box_closest, mark_balls, segment_meets_box, Cell, GridSpec, LabelGrid, Nearest, RegionGrid, RegionGrid2,
    RegionGrid3,
};
pub use validate::{validate_scenario, ValidationInput, Violation};

use std::f64::consts::PI;

pub type Point2 = nalgebra::Vector2<f64>;
pub type Point3 = nalgebra::Vector3<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Planar pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Point2 {
        Point2::new(self.theta.cos(), self.theta.sin())
    }

    /// Expresses a world point in the pose's local frame.
    pub fn to_local(&self, p: &Point2) -> Point2 {
        let d = p - self.position();
        let (s, c) = self.theta.sin_cos();
        Point2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn to_world(&self, p: &Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }
}

pub fn cross2(a: &Point2, b: &Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Left-hand normal of `v`.
pub fn perp(v: &Point2) -> Point2 {
    Point2::new(-v.y, v.x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle2 {
    pub center: Point2,
    pub radius: f64,
}

impl Circle2 {
    pub fn contains(&self, p: &Point2) -> bool {
        (p - self.center).norm() < self.radius
    }
}

/// Closest point of segment `a b` to `p`.
pub fn closest_on_segment<const D: usize>(
    a: &nalgebra::SVector<f64, D>,
    b: &nalgebra::SVector<f64, D>,
    p: &nalgebra::SVector<f64, D>,
) -> (nalgebra::SVector<f64, D>, f64) {
    let d = b - a;
    let l2 = d.norm_squared();
    let t = if l2 > 0.0 { ((p - a).dot(&d) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (a + d * t, t)
}

fn segments_intersect(a: &Point2, b: &Point2, c: &Point2, d: &Point2) -> bool {
    let o1 = cross2(&(b - a), &(c - a));
    let o2 = cross2(&(b - a), &(d - a));
    let o3 = cross2(&(d - c), &(a - c));
    let o4 = cross2(&(d - c), &(b - c));
    o1 * o2 <= 0.0 && o3 * o4 <= 0.0 && !(o1 == 0.0 && o2 == 0.0 && o3 == 0.0 && o4 == 0.0)
}

/// Distance between segments `a b` and `c d`.
pub fn segment_distance(a: &Point2, b: &Point2, c: &Point2, d: &Point2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    let d1 = (closest_on_segment(c, d, a).0 - a).norm();
    let d2 = (closest_on_segment(c, d, b).0 - b).norm();
    let d3 = (closest_on_segment(a, b, c).0 - c).norm();
    let d4 = (closest_on_segment(a, b, d).0 - d).norm();
    d1.min(d2).min(d3).min(d4)
}

/// Ray `o + t·dir` against segment `a b`; returns `t ≥ 0`.
pub fn ray_segment(o: &Point2, dir: &Point2, a: &Point2, b: &Point2) -> Option<f64> {
    let e = b - a;
    let den = cross2(dir, &e);
    if den.abs() < 1e-15 {
        return None;
    }
    let w = a - o;
    let t = cross2(&w, &e) / den;
    let s = cross2(&w, dir) / den;
    (t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s)).then_some(t)
}

/// Planar obstacle shape.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape2 {
    /// Closed simple loop; orientation is normalised to counter-clockwise.
    Polygon(Vec<Point2>),
    Disk { center: Point2, radius: f64 },
}

impl Shape2 {
    pub fn polygon(mut pts: Vec<Point2>) -> Self {
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        Shape2::Polygon(pts)
    }

    pub fn rect(min: Point2, max: Point2) -> Self {
        Shape2::Polygon(vec![min, Point2::new(max.x, min.y), max, Point2::new(min.x, max.y)])
    }

    pub fn translated(&self, d: &Point2) -> Shape2 {
        match self {
            Shape2::Polygon(p) => Shape2::Polygon(p.iter().map(|q| q + d).collect()),
            Shape2::Disk { center, radius } => Shape2::Disk { center: center + d, radius: *radius },
        }
    }

    pub fn contains(&self, p: &Point2) -> bool {
        match self {
            Shape2::Polygon(v) => point_in_polygon(v, p),
            Shape2::Disk { center, radius } => (p - center).norm() <= *radius,
        }
    }

    /// Distance to the shape (0 inside) and the closest boundary point.
    pub fn nearest(&self, p: &Point2) -> (f64, Point2) {
        match self {
            Shape2::Polygon(v) => {
                let mut best = (f64::INFINITY, *p);
                for i in 0..v.len() {
                    let (q, _) = closest_on_segment(&v[i], &v[(i + 1) % v.len()], p);
                    let d = (q - p).norm();
                    if d < best.0 {
                        best = (d, q);
                    }
                }
                if point_in_polygon(v, p) {
                    (0.0, best.1)
                } else {
                    best
                }
            }
            Shape2::Disk { center, radius } => {
                let d = p - center;
                let n = d.norm();
                let q = if n > 0.0 { center + d * (*radius / n) } else { center + Point2::new(*radius, 0.0) };
                ((n - radius).max(0.0), q)
            }
        }
    }

    pub fn distance(&self, p: &Point2) -> f64 {
        self.nearest(p).0
    }

    pub fn ray_hit(&self, o: &Point2, dir: &Point2) -> Option<f64> {
        match self {
            Shape2::Polygon(v) => {
                let mut best: Option<f64> = None;
                for i in 0..v.len() {
                    if let Some(t) = ray_segment(o, dir, &v[i], &v[(i + 1) % v.len()]) {
                        best = Some(best.map_or(t, |b: f64| b.min(t)));
                    }
                }
                best
            }
            Shape2::Disk { center, radius } => {
                let w = o - center;
                let b = w.dot(dir);
                let c = w.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t0 = -b - s;
                let t1 = -b + s;
                if t0 >= 0.0 {
                    Some(t0)
                } else if t1 >= 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape2::Polygon(v) => signed_area(v).abs(),
            Shape2::Disk { radius, .. } => PI * radius * radius,
        }
    }

    pub fn aabb(&self) -> (Point2, Point2) {
        match self {
            Shape2::Polygon(v) => {
                let mut lo = v[0];
                let mut hi = v[0];
                for p in v {
                    lo = lo.inf(p);
                    hi = hi.sup(p);
                }
                (lo, hi)
            }
            Shape2::Disk { center, radius } => (center.add_scalar(-radius), center.add_scalar(*radius)),
        }
    }

    /// Distance between two shapes (0 when they touch or overlap).
    pub fn distance_to(&self, other: &Shape2) -> f64 {
        match (self, other) {
            (Shape2::Disk { center: c1, radius: r1 }, Shape2::Disk { center: c2, radius: r2 }) => {
                ((c1 - c2).norm() - r1 - r2).max(0.0)
            }
            (Shape2::Disk { center, radius }, o) | (o, Shape2::Disk { center, radius }) => {
                (o.distance(center) - radius).max(0.0)
            }
            (Shape2::Polygon(a), Shape2::Polygon(b)) => {
                if point_in_polygon(a, &b[0]) || point_in_polygon(b, &a[0]) {
                    return 0.0;
                }
                let mut best = f64::INFINITY;
                for i in 0..a.len() {
                    for j in 0..b.len() {
                        let d = segment_distance(&a[i], &a[(i + 1) % a.len()], &b[j], &b[(j + 1) % b.len()]);
                        best = best.min(d);
                    }
                }
                best
            }
        }
    }
}

pub fn signed_area(v: &[Point2]) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        s += cross2(&v[i], &v[(i + 1) % v.len()]);
    }
    0.5 * s
}

pub fn point_in_polygon(v: &[Point2], p: &Point2) -> bool {
    let mut inside = false;
    let n = v.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// An obstacle moving with constant velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct Obstacle2 {
    pub shape: Shape2,
    pub velocity: Point2,
}

impl Obstacle2 {
    pub fn fixed(shape: Shape2) -> Self {
        Obstacle2 { shape, velocity: Point2::zeros() }
    }

    pub fn at(&self, t: f64) -> Shape2 {
        if self.velocity == Point2::zeros() {
            self.shape.clone()
        } else {
            self.shape.translated(&(self.velocity * t))
        }
    }
}

/// What a nearest-obstacle query hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hit {
    Wall,
    Obstacle(usize),
}

/// Rectangular arena with obstacles. The arena boundary acts as a wall.
#[derive(Clone, Debug, PartialEq)]
pub struct World2 {
    pub min: Point2,
    pub max: Point2,
    pub obstacles: Vec<Obstacle2>,
}

impl World2 {
    pub fn new(min: Point2, max: Point2) -> Self {
        World2 { min, max, obstacles: Vec::new() }
    }

    pub fn with(mut self, o: Obstacle2) -> Self {
        self.obstacles.push(o);
        self
    }

    pub fn inside_bounds(&self, p: &Point2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    fn wall_nearest(&self, p: &Point2) -> (f64, Point2) {
        let cands = [
            (p.x - self.min.x, Point2::new(self.min.x, p.y)),
            (self.max.x - p.x, Point2::new(self.max.x, p.y)),
            (p.y - self.min.y, Point2::new(p.x, self.min.y)),
            (self.max.y - p.y, Point2::new(p.x, self.max.y)),
        ];
        let mut best = cands[0];
        for c in &cands[1..] {
            if c.0 < best.0 {
                best = *c;
            }
        }
        (best.0.max(0.0), best.1)
    }

    /// Nearest non-free point at time `t`.
    pub fn nearest(&self, p: &Point2, t: f64) -> (f64, Point2, Hit) {
        let (mut d, mut q) = self.wall_nearest(p);
        let mut hit = Hit::Wall;
        for (i, o) in self.obstacles.iter().enumerate() {
            let (di, qi) = o.at(t).nearest(p);
            if di < d {
                d = di;
                q = qi;
                hit = Hit::Obstacle(i);
            }
        }
        (d, q, hit)
    }

    /// Ground-truth clearance at time `t` (0 inside obstacles or outside the arena).
    pub fn clearance(&self, p: &Point2, t: f64) -> f64 {
        if !self.inside_bounds(p) {
            return 0.0;
        }
        self.nearest(p, t).0
    }

    pub fn occupied(&self, p: &Point2, t: f64) -> bool {
        !self.inside_bounds(p) || self.obstacles.iter().any(|o| o.at(t).contains(p))
    }

    /// Distance along the unit direction `dir` to the first obstacle or wall.
    pub fn raycast(&self, o: &Point2, dir: &Point2, t: f64) -> f64 {
        let mut best = f64::INFINITY;
        for (span, lo, hi) in [(dir.x, self.min.x - o.x, self.max.x - o.x), (dir.y, self.min.y - o.y, self.max.y - o.y)] {
            if span > 0.0 {
                best = best.min(hi / span);
            } else if span < 0.0 {
                best = best.min(lo / span);
            }
        }
        for ob in &self.obstacles {
            if let Some(h) = ob.at(t).ray_hit(o, dir) {
                best = best.min(h);
            }
        }
        best.max(0.0)
    }

    pub fn rasterize(&self, t: f64, spec: &GridSpec<2>) -> RegionGrid2 {
        let shapes: Vec<Shape2> = self.obstacles.iter().map(|o| o.at(t)).collect();
        RegionGrid::from_fn(spec.clone(), |c| {
            if !self.inside_bounds(&c) || shapes.iter().any(|s| s.contains(&c)) {
                Cell::Occupied
            } else {
                Cell::Free
            }
        })
    }

    pub fn spec(&self, cell: f64) -> GridSpec<2> {
        GridSpec::covering(self.min, self.max, cell).expect("world bounds are non-empty")
    }
}

/// Spatial obstacle shape.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape3 {
    Cuboid { min: Point3, max: Point3 },
    Sphere { center: Point3, radius: f64 },
}

impl Shape3 {
    pub fn translated(&self, d: &Point3) -> Shape3 {
        match self {
            Shape3::Cuboid { min, max } => Shape3::Cuboid { min: min + d, max: max + d },
            Shape3::Sphere { center, radius } => Shape3::Sphere { center: center + d, radius: *radius },
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        match self {
            Shape3::Cuboid { min, max } => (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]),
            Shape3::Sphere { center, radius } => (p - center).norm() <= *radius,
        }
    }

    pub fn nearest(&self, p: &Point3) -> (f64, Point3) {
        match self {
            Shape3::Cuboid { min, max } => {
                let q = box_closest(min, max, p);
                ((q - p).norm(), q)
            }
            Shape3::Sphere { center, radius } => {
                let d = p - center;
                let n = d.norm();
                let q = if n > 0.0 { center + d * (*radius / n) } else { center + Point3::new(*radius, 0.0, 0.0) };
                ((n - radius).max(0.0), q)
            }
        }
    }

    pub fn ray_hit(&self, o: &Point3, dir: &Point3) -> Option<f64> {
        match self {
            Shape3::Cuboid { min, max } => {
                let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
                for a in 0..3 {
                    if dir[a].abs() < 1e-300 {
                        if o[a] < min[a] || o[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let mut ta = (min[a] - o[a]) / dir[a];
                    let mut tb = (max[a] - o[a]) / dir[a];
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    t0 = t0.max(ta);
                    t1 = t1.min(tb);
                    if t0 > t1 {
                        return None;
                    }
                }
                Some(t0)
            }
            Shape3::Sphere { center, radius } => {
                let w = o - center;
                let b = w.dot(dir);
                let c = w.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                if -b - s >= 0.0 {
                    Some(-b - s)
                } else if -b + s >= 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Obstacle3 {
    pub shape: Shape3,
    pub velocity: Point3,
}

impl Obstacle3 {
    pub fn fixed(shape: Shape3) -> Self {
        Obstacle3 { shape, velocity: Point3::zeros() }
    }

    pub fn at(&self, t: f64) -> Shape3 {
        self.shape.translated(&(self.velocity * t))
    }
}

/// Box-shaped room with obstacles; floor, ceiling and walls bound it.
#[derive(Clone, Debug, PartialEq)]
pub struct World3 {
    pub min: Point3,
    pub max: Point3,
    pub obstacles: Vec<Obstacle3>,
}

impl World3 {
    pub fn new(min: Point3, max: Point3) -> Self {
        World3 { min, max, obstacles: Vec::new() }
    }

    pub fn with(mut self, o: Obstacle3) -> Self {
        self.obstacles.push(o);
        self
    }

    pub fn inside_bounds(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] > self.min[a] && p[a] < self.max[a])
    }

    pub fn nearest(&self, p: &Point3, t: f64) -> (f64, Point3) {
        let mut d = f64::INFINITY;
        let mut q = *p;
        for a in 0..3 {
            let lo = p[a] - self.min[a];
            if lo < d {
                d = lo;
                q = *p;
                q[a] = self.min[a];
            }
            let hi = self.max[a] - p[a];
            if hi < d {
                d = hi;
                q = *p;
                q[a] = self.max[a];
            }
        }
        for o in &self.obstacles {
            let (di, qi) = o.at(t).nearest(p);
            if di < d {
                d = di;
                q = qi;
            }
        }
        (d.max(0.0), q)
    }

    pub fn clearance(&self, p: &Point3, t: f64) -> f64 {
        if !self.inside_bounds(p) {
            return 0.0;
        }
        self.nearest(p, t).0
    }

    pub fn occupied(&self, p: &Point3, t: f64) -> bool {
        !self.inside_bounds(p) || self.obstacles.iter().any(|o| o.at(t).contains(p))
    }

    pub fn raycast(&self, o: &Point3, dir: &Point3, t: f64) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..3 {
            if dir[a] > 0.0 {
                best = best.min((self.max[a] - o[a]) / dir[a]);
            } else if dir[a] < 0.0 {
                best = best.min((self.min[a] - o[a]) / dir[a]);
            }
        }
        for ob in &self.obstacles {
            if let Some(h) = ob.at(t).ray_hit(o, dir) {
                best = best.min(h);
            }
        }
        best.max(0.0)
    }

    pub fn spec(&self, cell: f64) -> GridSpec<3> {
        GridSpec::covering(self.min, self.max, cell).expect("world bounds are non-empty")
    }

    pub fn rasterize(&self, t: f64, spec: &GridSpec<3>) -> RegionGrid3 {
        let shapes: Vec<Shape3> = self.obstacles.iter().map(|o| o.at(t)).collect();
        RegionGrid::from_fn(spec.clone(), |c| {
            if !self.inside_bounds(&c) || shapes.iter().any(|s| s.contains(&c)) {
                Cell::Occupied
            } else {
                Cell::Free
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn polygon_queries() {
        let sq = Shape2::rect(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0));
        assert!(sq.contains(&Point2::new(0.5, 0.5)));
        assert!((sq.distance(&Point2::new(2.0, 0.5)) - 1.0).abs() < 1e-12);
        let t = sq.ray_hit(&Point2::new(-1.0, 0.5), &Point2::new(1.0, 0.0)).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        let other = Shape2::rect(Point2::new(2.5, 0.0), Point2::new(3.0, 1.0));
        assert!((sq.distance_to(&other) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn world_raycast_wall() {
        let w = World2::new(Point2::new(-10.0, -10.0), Point2::new(5.0, 10.0));
        let r = w.raycast(&Point2::zeros(), &Point2::new(1.0, 0.0), 0.0);
        assert!((r - 5.0).abs() < 1e-12);
    }

    #[test]
    fn pose_frames_roundtrip() {
        let p = Pose2::new(1.0, 2.0, 0.7);
        let q = Point2::new(-3.0, 0.4);
        let back = p.to_world(&p.to_local(&q));
        assert!((back - q).norm() < 1e-12);
    }
}

//! Potential-field path relaxation, prolongation and homotopy branching.
//!
//! A path is a chain of points `p₀ … pₙ` spaced roughly `L = v·δ` apart, where `p_k`
//! stands for the robot position `k` sampling intervals ahead. Points other than `p₀`
//! are moved by a damped momentum iteration in the superposition of four fields:
//! spacing `F_I`, obstacle repulsion `F_R`, pull `F_P` on the last point and the
//! initial-circle push `F_C`.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geom::{
    closest_on_segment, cross2, perp, segment_distance, Cell, LabelGrid, Point2, Pose2, RegionGrid2, Shape2, World2,
};
use crate::sensing::ShrinkParams;
use crate::vehicle::initial_circles;

/// Equally spaced waypoints.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPolyline {
    pub points: Vec<Point2>,
    pub spacing: f64,
}

impl PathPolyline {
    pub fn new(points: Vec<Point2>, spacing: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("a path needs at least its start point"));
        }
        if !(spacing > 0.0) {
            return Err(invalid(format!("path spacing must be positive, got {spacing}")));
        }
        Ok(PathPolyline { points, spacing })
    }

    pub fn start(p0: Point2, spacing: f64) -> Self {
        PathPolyline { points: vec![p0], spacing }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Point2 {
        *self.points.last().expect("non-empty path")
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Smallest and largest successive spacing.
    pub fn spacing_range(&self) -> (f64, f64) {
        self.points
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .fold((f64::INFINITY, 0.0), |(lo, hi), l| (lo.min(l), hi.max(l)))
    }

    /// Smallest circumradius over consecutive point triples.
    pub fn min_circumradius(&self) -> f64 {
        self.points
            .windows(3)
            .map(|w| circumradius(&w[0], &w[1], &w[2]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Rows `k,x,y` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,x,y\n");
        for (k, p) in self.points.iter().enumerate() {
            s.push_str(&format!("{k},{:.6},{:.6}\n", p.x, p.y));
        }
        s
    }
}

/// Radius of the circle through three points (infinite when collinear).
pub fn circumradius(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    let area2 = cross2(&(b - a), &(c - a)).abs();
    if area2 < 1e-15 {
        return f64::INFINITY;
    }
    (b - a).norm() * (c - b).norm() * (a - c).norm() / (2.0 * area2)
}

/// Field gains and iteration controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldGains {
    pub g_i: f64,
    pub g_r: f64,
    /// Magnitude of the pull on the last point, in metres.
    pub g_p: f64,
    pub g_c: f64,
    pub g_n: f64,
    pub f_th: f64,
    pub l_under: f64,
    pub l_over: f64,
    /// Scale applied to the resultant force before it enters the velocity.
    pub step: f64,
    pub max_iters: usize,
}

impl FieldGains {
    /// Defaults for spacing `l`.
    pub fn for_spacing(l: f64) -> Self {
        FieldGains {
            g_i: 1.0,
            g_r: 2.0,
            g_p: 0.05 * l,
            g_c: 2.0,
            g_n: 0.7,
            f_th: 1e-3 * l,
            l_under: 0.4 * l,
            l_over: 1.6 * l,
            step: 0.35,
            max_iters: 10_000,
        }
    }

    pub fn validate(&self, l: f64) -> Result<()> {
        let pos = [self.g_i, self.g_r, self.g_p, self.g_c, self.f_th, self.step];
        if pos.iter().any(|g| !(*g > 0.0)) {
            return Err(invalid("field gains, threshold and step must be positive"));
        }
        if !(self.g_n > 0.0 && self.g_n < 1.0) {
            return Err(invalid(format!("attenuation must lie in (0,1), got {}", self.g_n)));
        }
        if !(self.l_under > 0.0 && self.l_under < l && self.l_over > l && self.l_over < 2.0 * l) {
            return Err(invalid("add/remove thresholds must satisfy 0 < L_under < L < L_over < 2L"));
        }
        Ok(())
    }
}

/// Velocity estimate of one obstacle from two snapshots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityEstimate {
    pub velocity: Point2,
    /// Shape mismatch after removing the translation (0 for a pure translate).
    pub residual: f64,
    pub reliable: bool,
}

fn moments(g: &LabelGrid<2>) -> Option<(f64, Point2, [f64; 3])> {
    let spec = &g.spec;
    let mut n = 0.0;
    let mut c = Point2::zeros();
    for (i, cell) in g.cells.iter().enumerate() {
        if *cell == Cell::Occupied {
            n += 1.0;
            c += spec.center(spec.unindex(i));
        }
    }
    if n == 0.0 {
        return None;
    }
    c /= n;
    let mut m = [0.0; 3];
    for (i, cell) in g.cells.iter().enumerate() {
        if *cell == Cell::Occupied {
            let d = spec.center(spec.unindex(i)) - c;
            m[0] += d.x * d.x;
            m[1] += d.x * d.y;
            m[2] += d.y * d.y;
        }
    }
    Some((n, c, m.map(|v| v / n)))
}

/// Centroid displacement of the occupied cells over `delta`, with a shape check.
pub fn estimate_obstacle_velocity(at_0: &LabelGrid<2>, at_delta: &LabelGrid<2>, delta: f64, tolerance: f64) -> Result<VelocityEstimate> {
    if !(delta > 0.0) {
        return Err(invalid("sampling interval must be positive"));
    }
    let (Some((na, ca, ma)), Some((nb, cb, mb))) = (moments(at_0), moments(at_delta)) else {
        return Err(Error::EmptyRegion);
    };
    let h2 = at_0.spec.cell * at_0.spec.cell;
    let scale = ma[0] + ma[2] + h2;
    let dm = ((ma[0] - mb[0]).powi(2) + 2.0 * (ma[1] - mb[1]).powi(2) + (ma[2] - mb[2]).powi(2)).sqrt();
    let residual = dm / scale + (na - nb).abs() / na;
    Ok(VelocityEstimate { velocity: (cb - ca) / delta, residual, reliable: residual <= tolerance })
}

/// Obstacles with their initial shapes and estimated velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedWorld {
    pub world: World2,
    pub delta: f64,
}

impl PredictedWorld {
    pub fn new(world: World2, delta: f64) -> Self {
        PredictedWorld { world, delta }
    }

    /// `D_i(k) = D_i(0) + v_i·kδ`.
    pub fn predict_obstacle(&self, i: usize, k: usize) -> Shape2 {
        self.world.obstacles[i].at(k as f64 * self.delta)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.delta
    }
}

/// Nearest-obstacle answer used by the repulsion field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub dist: f64,
    /// Unit vector toward the nearest obstacle point, or the outward escape direction when inside.
    pub dir: Point2,
    pub inside: bool,
    pub obstacle: Option<usize>,
}

/// Anything that can answer clearance queries per future time index.
pub trait Environment: Sync {
    fn probe(&self, p: &Point2, k: usize) -> Probe;

    /// Query against a single obstacle (prolongation mode R2).
    fn probe_obstacle(&self, _p: &Point2, _k: usize, _id: usize) -> Option<Probe> {
        None
    }

    /// Minimum over segment `a b` of the distance to obstacle `id` at index `k`.
    fn segment_clearance(&self, _a: &Point2, _b: &Point2, _k: usize, _id: usize) -> f64 {
        f64::INFINITY
    }

    fn obstacle_count(&self) -> usize {
        0
    }
}

fn unit_or(v: Point2, fallback: Point2) -> Point2 {
    let n = v.norm();
    if n > 1e-12 {
        v / n
    } else {
        fallback
    }
}

fn shape_probe(shape: &Shape2, p: &Point2) -> Probe {
    let (d, q) = shape.nearest(p);
    if d > 0.0 {
        Probe { dist: d, dir: (q - p) / d, inside: false, obstacle: None }
    } else {
        let c = match shape {
            Shape2::Disk { center, .. } => *center,
            Shape2::Polygon(v) => v.iter().sum::<Point2>() / v.len() as f64,
        };
        let out = unit_or(q - p, unit_or(p - c, Point2::x()));
        Probe { dist: 0.0, dir: out, inside: true, obstacle: None }
    }
}

/// Distance from segment `a b` to a shape (0 when they meet).
pub fn segment_shape_distance(a: &Point2, b: &Point2, shape: &Shape2) -> f64 {
    match shape {
        Shape2::Disk { center, radius } => ((closest_on_segment(a, b, center).0 - center).norm() - radius).max(0.0),
        Shape2::Polygon(v) => {
            if shape.contains(a) || shape.contains(b) {
                return 0.0;
            }
            (0..v.len())
                .map(|i| segment_distance(a, b, &v[i], &v[(i + 1) % v.len()]))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

impl Environment for PredictedWorld {
    fn probe(&self, p: &Point2, k: usize) -> Probe {
        let w = &self.world;
        let t = self.time(k);
        let walls = [
            (p.x - w.min.x, Point2::new(-1.0, 0.0)),
            (w.max.x - p.x, Point2::new(1.0, 0.0)),
            (p.y - w.min.y, Point2::new(0.0, -1.0)),
            (w.max.y - p.y, Point2::new(0.0, 1.0)),
        ];
        let (wd, wdir) = walls.iter().copied().fold((f64::INFINITY, Point2::x()), |b, c| if c.0 < b.0 { c } else { b });
        let mut best = if wd <= 0.0 {
            Probe { dist: 0.0, dir: -wdir, inside: true, obstacle: None }
        } else {
            Probe { dist: wd, dir: wdir, inside: false, obstacle: None }
        };
        for (i, o) in w.obstacles.iter().enumerate() {
            let pr = shape_probe(&o.at(t), p);
            if pr.dist < best.dist || (pr.inside && !best.inside) {
                best = Probe { obstacle: Some(i), ..pr };
            }
        }
        best
    }

    fn probe_obstacle(&self, p: &Point2, k: usize, id: usize) -> Option<Probe> {
        let o = self.world.obstacles.get(id)?;
        Some(Probe { obstacle: Some(id), ..shape_probe(&o.at(self.time(k)), p) })
    }

    fn segment_clearance(&self, a: &Point2, b: &Point2, k: usize, id: usize) -> f64 {
        self.world
            .obstacles
            .get(id)
            .map_or(f64::INFINITY, |o| segment_shape_distance(a, b, &o.at(self.time(k))))
    }

    fn obstacle_count(&self) -> usize {
        self.world.obstacles.len()
    }
}

/// A static region (for instance an unoccupied area) with escape directions for points inside.
#[derive(Clone, Debug)]
pub struct GridEnvironment {
    pub region: RegionGrid2,
    complement: RegionGrid2,
}

impl GridEnvironment {
    pub fn new(region: RegionGrid2) -> Self {
        let labels = region.labels();
        let flipped = LabelGrid {
            spec: labels.spec.clone(),
            cells: labels.cells.iter().map(|c| if c.is_free() { Cell::Occupied } else { Cell::Free }).collect(),
        };
        GridEnvironment { region, complement: RegionGrid2::new(flipped) }
    }
}

impl Environment for GridEnvironment {
    fn probe(&self, p: &Point2, _k: usize) -> Probe {
        let n = self.region.nearest(p);
        if n.dist > 0.0 {
            return Probe { dist: n.dist, dir: (n.point - p) / n.dist, inside: false, obstacle: None };
        }
        let m = self.complement.nearest(p);
        Probe { dist: 0.0, dir: unit_or(m.point - p, Point2::x()), inside: true, obstacle: None }
    }
}

/// Clearance each path index must keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// `d_s + min(k,T)·δ·V_max`.
    Shrinking(ShrinkParams),
}

impl Threshold {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            Threshold::Fixed(d) => *d,
            Threshold::Shrinking(p) => p.threshold(k),
        }
    }

    pub fn base(&self) -> f64 {
        match self {
            Threshold::Fixed(d) => *d,
            Threshold::Shrinking(p) => p.d_s,
        }
    }
}

/// Prolongation mode of the pull field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProlongMode {
    R1,
    /// Bypass obstacle `obstacle`; `gamma = +1` keeps it on the left (counter-clockwise).
    R2 { gamma: i8, obstacle: usize },
}

/// How the spacing and repulsion terms are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FieldForm {
    /// `(l − L)·ĉ` and `(d − d_s)·r̂`.
    #[default]
    Distance,
    /// `(1 − L/‖l⃗‖)·l⃗` and `(1 − d̂/‖r⃗‖)·r⃗`.
    Ratio,
}

/// Everything the fields depend on besides the path itself.
pub struct RelaxContext<'a> {
    pub env: &'a dyn Environment,
    pub threshold: Threshold,
    pub target: Point2,
    pub mode: ProlongMode,
    /// Start pose and minimum turning radius for `F_C`.
    pub initial: Option<(Pose2, f64)>,
    /// Add or remove the last point against the target distance while relaxing.
    pub adjust_end: bool,
    pub form: FieldForm,
}

impl<'a> RelaxContext<'a> {
    pub fn new(env: &'a dyn Environment, threshold: Threshold, target: Point2) -> Self {
        RelaxContext { env, threshold, target, mode: ProlongMode::R1, initial: None, adjust_end: false, form: FieldForm::Distance }
    }
}

/// Flags raised while evaluating a field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FieldFlags {
    pub degenerate: bool,
    pub inside: bool,
}

/// Spacing field `F_I` at index `k ≥ 1`.
pub fn field_interval(points: &[Point2], k: usize, l: f64, gains: &FieldGains, form: FieldForm) -> (Point2, FieldFlags) {
    let mut flags = FieldFlags::default();
    let n = points.len() - 1;
    let mut term = |j: usize| -> Point2 {
        let lv = points[j - 1] - points[j];
        let len = lv.norm();
        if len < 1e-12 {
            flags.degenerate = true;
            return Point2::zeros();
        }
        match form {
            FieldForm::Distance => lv / len * (len - l),
            FieldForm::Ratio => lv * (1.0 - l / len),
        }
    };
    let mut f = term(k);
    if k != n {
        f -= term(k + 1);
    }
    (f * gains.g_i, flags)
}

/// Repulsion `F_R` for a point with the given probe and clearance threshold.
pub fn field_repulsion(probe: &Probe, threshold: f64, gains: &FieldGains, form: FieldForm) -> (Point2, FieldFlags) {
    if probe.inside {
        return (probe.dir * (gains.g_r * threshold), FieldFlags { inside: true, degenerate: false });
    }
    if probe.dist > threshold {
        return (Point2::zeros(), FieldFlags::default());
    }
    let f = match form {
        FieldForm::Distance => probe.dir * (gains.g_r * (probe.dist - threshold)),
        FieldForm::Ratio => probe.dir * probe.dist * (gains.g_r * (1.0 - threshold / probe.dist)),
    };
    (f, FieldFlags::default())
}

/// Pull `F_P` on the last point.
///
/// In R2, `probe` describes the tracked obstacle and `d_s` the base margin.
pub fn field_pull(last: &Point2, target: &Point2, mode: ProlongMode, probe: Option<&Probe>, d_s: f64, gains: &FieldGains) -> Point2 {
    match (mode, probe) {
        (ProlongMode::R2 { gamma, .. }, Some(pr)) => {
            let e = if pr.inside { -pr.dir } else { pr.dir };
            let h = if pr.inside { 0.0 } else { pr.dist };
            let b = perp(&(-e));
            e * (gains.g_r * (h - d_s)) + b * (gamma as f64 * gains.g_p)
        }
        _ => {
            let a = target - last;
            let n = a.norm();
            if n < 1e-12 {
                Point2::zeros()
            } else {
                a / n * gains.g_p
            }
        }
    }
}

/// Push `F_C` out of the initial circle on the side of `p₁`.
pub fn field_initial_circle(point: &Point2, start: &Pose2, p1: &Point2, r_min: f64, gains: &FieldGains) -> (Point2, FieldFlags) {
    let (left, right) = initial_circles(start, r_min);
    let side = cross2(&start.heading(), &(p1 - start.position()));
    let c = if side >= 0.0 { left } else { right };
    let h = c.center - point;
    let n = h.norm();
    if n > r_min {
        return (Point2::zeros(), FieldFlags::default());
    }
    if n < 1e-12 {
        let out = if side >= 0.0 { -perp(&start.heading()) } else { perp(&start.heading()) };
        return (out * (gains.g_c * r_min), FieldFlags { degenerate: true, inside: false });
    }
    (h * (gains.g_c * (1.0 - r_min / n)), FieldFlags::default())
}

/// Resultant field on every point; entry 0 is always zero.
pub fn resultant_fields(path: &PathPolyline, ctx: &RelaxContext, gains: &FieldGains) -> (Vec<Point2>, FieldFlags) {
    let pts = &path.points;
    let n = pts.len() - 1;
    let mut flags = FieldFlags::default();
    let mut out = vec![Point2::zeros(); pts.len()];
    for k in 1..=n {
        let (fi, f1) = field_interval(pts, k, path.spacing, gains, ctx.form);
        let probe = ctx.env.probe(&pts[k], k);
        let (fr, f2) = field_repulsion(&probe, ctx.threshold.at(k), gains, ctx.form);
        let mut f = fi + fr;
        flags.degenerate |= f1.degenerate;
        flags.inside |= f2.inside;
        if k == n {
            let tracked = match ctx.mode {
                ProlongMode::R2 { obstacle, .. } => ctx.env.probe_obstacle(&pts[k], k, obstacle),
                ProlongMode::R1 => None,
            };
            f += field_pull(&pts[k], &ctx.target, ctx.mode, tracked.as_ref(), ctx.threshold.base(), gains);
        }
        if let Some((pose, r_min)) = &ctx.initial {
            let (fc, f3) = field_initial_circle(&pts[k], pose, &pts[1], *r_min, gains);
            f += fc;
            flags.degenerate |= f3.degenerate;
        }
        out[k] = f;
    }
    (out, flags)
}

/// What happened during one relaxation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RelaxReport {
    pub iterations: usize,
    pub converged: bool,
    pub max_force: f64,
    pub added: usize,
    pub removed: usize,
    pub flags: FieldFlags,
}

/// Moves every point but `p₀` to an equilibrium of the fields.
///
/// Stops once every `‖F(p_k)‖ < F_th` or after `max_iters` sweeps.
pub fn relax_path(path: &PathPolyline, ctx: &RelaxContext, gains: &FieldGains) -> (PathPolyline, RelaxReport) {
    let mut p = path.clone();
    let mut vel = vec![Point2::zeros(); p.len()];
    let mut rep = RelaxReport::default();
    let l = p.spacing;
    for it in 0..=gains.max_iters {
        if p.len() < 2 {
            rep.converged = true;
            break;
        }
        let (f, flags) = resultant_fields(&p, ctx, gains);
        rep.flags.degenerate |= flags.degenerate;
        rep.flags.inside |= flags.inside;
        rep.max_force = f[1..].iter().map(|v| v.norm()).fold(0.0, f64::max);
        rep.iterations = it;
        if rep.max_force < gains.f_th {
            rep.converged = true;
            break;
        }
        if it == gains.max_iters {
            break;
        }
        for k in 1..p.len() {
            vel[k] = vel[k] * gains.g_n + f[k] * gains.step;
            p.points[k] += vel[k];
        }
        if ctx.adjust_end {
            let last = p.last();
            let d = (last - ctx.target).norm();
            if d < gains.l_under && p.len() > 2 {
                p.points.pop();
                vel.pop();
                rep.removed += 1;
            } else if d > gains.l_over {
                p.points.push(last + (ctx.target - last) / d * l);
                vel.push(Point2::zeros());
                rep.added += 1;
            }
        }
    }
    (p, rep)
}

/// A point where R1 switched to R2 and `γ` was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchEvent {
    pub index: usize,
    pub obstacle: usize,
    pub gamma: i8,
}

/// Outcome of a candidate's prolongation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateStatus {
    Pending,
    Reached,
    Failed,
}

/// One candidate path being prolonged.
#[derive(Clone, Debug)]
pub struct Prolongation {
    pub path: PathPolyline,
    pub mode: ProlongMode,
    pub events: Vec<BranchEvent>,
    pub status: CandidateStatus,
    pub unconverged: usize,
}

/// Planning problem on a predicted world.
#[derive(Clone, Debug)]
pub struct PlanProblem {
    pub start: Pose2,
    pub target: Point2,
    pub world: PredictedWorld,
    pub d_s: f64,
    pub spacing: f64,
    pub gains: FieldGains,
    pub max_points: usize,
}

impl PlanProblem {
    pub fn new(start: Pose2, target: Point2, world: PredictedWorld, d_s: f64, spacing: f64) -> Self {
        let straight = (target - start.position()).norm() / spacing;
        PlanProblem {
            start,
            target,
            world,
            d_s,
            spacing,
            gains: FieldGains::for_spacing(spacing),
            max_points: (straight * 6.0) as usize + 200,
        }
    }

    fn context(&self, mode: ProlongMode) -> RelaxContext<'_> {
        RelaxContext { mode, ..RelaxContext::new(&self.world, Threshold::Fixed(self.d_s), self.target) }
    }

    /// Whether the segment from the last point to the target still runs into `E[D_id, d_s]`.
    fn blocked(&self, last: &Point2, k: usize, id: usize) -> bool {
        let d = self.target - last;
        let dist = d.norm();
        if dist < 1e-12 {
            return false;
        }
        let from = last + d / dist * (0.5 * self.spacing).min(dist);
        let h = self.world.probe_obstacle(last, k, id).map_or(f64::INFINITY, |p| p.dist);
        self.world.segment_clearance(&from, &self.target, k, id) < self.d_s.min(h) - 1e-9
    }

    fn choose_gamma(&self, last: &Point2, k: usize, id: usize) -> i8 {
        let Some(pr) = self.world.probe_obstacle(last, k, id) else { return 1 };
        let e = if pr.inside { -pr.dir } else { pr.dir };
        let a = unit_or(self.target - last, Point2::x());
        let score = |g: i8| {
            let b = perp(&(-e)) * g as f64;
            let q = last + b * self.spacing;
            let others = self.world.world.obstacles.len();
            let mut c = self.world.probe(&q, k + 1).dist;
            if self.world.probe(&q, k + 1).obstacle == Some(id) {
                // clearance from everything except the obstacle being bypassed
                let w = &self.world.world;
                c = (q.x - w.min.x).min(w.max.x - q.x).min(q.y - w.min.y).min(w.max.y - q.y);
                for j in (0..others).filter(|&j| j != id) {
                    c = c.min(self.world.probe_obstacle(&q, k + 1, j).map_or(f64::INFINITY, |p| p.dist));
                }
            }
            ((c * 1e6).round(), b.dot(&a))
        };
        let (cp, ap) = score(1);
        let (cm, am) = score(-1);
        if cp > cm || (cp == cm && ap >= am) {
            1
        } else {
            -1
        }
    }

    pub fn begin(&self) -> Prolongation {
        Prolongation {
            path: PathPolyline::start(self.start.position(), self.spacing),
            mode: ProlongMode::R1,
            events: Vec::new(),
            status: CandidateStatus::Pending,
            unconverged: 0,
        }
    }

    /// One B2 iteration: append, relax, switch modes. Returns an R1→R2 event when one occurred.
    pub fn advance(&self, c: &mut Prolongation) -> Option<BranchEvent> {
        if c.status != CandidateStatus::Pending {
            return None;
        }
        let last = c.path.last();
        let a = unit_or(self.target - last, Point2::x());
        c.path.points.push(last + a * self.spacing);
        let (relaxed, rep) = relax_path(&c.path, &self.context(c.mode), &self.gains);
        c.path = relaxed;
        if !rep.converged {
            c.unconverged += 1;
        }
        let n = c.path.len() - 1;
        let pn = c.path.last();
        let mut event = None;
        match c.mode {
            ProlongMode::R1 => {
                let touching = (0..self.world.obstacle_count()).find(|&id| {
                    self.world.probe_obstacle(&pn, n, id).is_some_and(|p| p.inside || p.dist <= self.d_s)
                        && self.blocked(&pn, n, id)
                });
                if let Some(id) = touching {
                    let gamma = self.choose_gamma(&pn, n, id);
                    c.mode = ProlongMode::R2 { gamma, obstacle: id };
                    let e = BranchEvent { index: n, obstacle: id, gamma };
                    c.events.push(e);
                    event = Some(e);
                }
            }
            ProlongMode::R2 { obstacle, .. } => {
                if !self.blocked(&pn, n, obstacle) {
                    c.mode = ProlongMode::R1;
                }
            }
        }
        if (pn - self.target).norm() < self.spacing {
            c.status = CandidateStatus::Reached;
        } else if c.path.len() >= self.max_points {
            c.status = CandidateStatus::Failed;
        }
        event
    }

    /// Prolongs a single candidate (no branching) to the target.
    pub fn prolong_path(&self) -> Result<Prolongation> {
        let mut c = self.begin();
        while c.status == CandidateStatus::Pending {
            self.advance(&mut c);
        }
        match c.status {
            CandidateStatus::Reached => Ok(c),
            _ => Err(Error::PlannerFailed(format!("no target-reaching path within {} points", self.max_points))),
        }
    }
}

/// Homotopy search controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchParams {
    pub max_candidates: usize,
    /// Keep prolonging the remaining candidates after the first one reaches the target.
    pub complete_all: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams { max_candidates: 16, complete_all: false }
    }
}

/// All candidates and the index of the selected one.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub candidates: Vec<Prolongation>,
    pub best: usize,
}

impl SearchResult {
    pub fn best_path(&self) -> &PathPolyline {
        &self.candidates[self.best].path
    }
}

/// Prolongs candidates in lockstep, duplicating one with the opposite `γ` at each R1→R2 event.
pub fn homotopy_search(problem: &PlanProblem, params: &SearchParams) -> Result<SearchResult> {
    let mut cands = vec![problem.begin()];
    loop {
        let events: Vec<Option<BranchEvent>> = cands.par_iter_mut().map(|c| problem.advance(c)).collect();
        let mut spawned = Vec::new();
        for (i, e) in events.iter().enumerate() {
            let Some(e) = e else { continue };
            if cands.len() + spawned.len() >= params.max_candidates {
                break;
            }
            let mut twin = cands[i].clone();
            let gamma = -e.gamma;
            twin.mode = ProlongMode::R2 { gamma, obstacle: e.obstacle };
            *twin.events.last_mut().expect("event recorded") = BranchEvent { gamma, ..*e };
            spawned.push(twin);
        }
        cands.extend(spawned);
        let any_reached = cands.iter().any(|c| c.status == CandidateStatus::Reached);
        let any_pending = cands.iter().any(|c| c.status == CandidateStatus::Pending);
        if !any_pending || (any_reached && !params.complete_all) {
            break;
        }
    }
    let best = cands
        .iter()
        .enumerate()
        .filter(|(_, c)| c.status == CandidateStatus::Reached)
        .min_by_key(|(i, c)| (c.path.len(), c.events.len(), *i))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::NoPath("every candidate failed".into()))?;
    Ok(SearchResult { candidates: cands, best })
}

/// Smallest `clearance − threshold(k)` along a path.
pub fn clearance_slack(path: &PathPolyline, env: &dyn Environment, threshold: Threshold) -> f64 {
    path.points
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, p)| {
            let pr = env.probe(p, k);
            let d = if pr.inside { 0.0 } else { pr.dist };
            d - threshold.at(k)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Obstacle2;

    fn open_world() -> PredictedWorld {
        PredictedWorld::new(World2::new(Point2::new(-20.0, -20.0), Point2::new(20.0, 20.0)), 0.3)
    }

    #[test]
    fn interval_field_values() {
        let g = FieldGains::for_spacing(1.0);
        let straight: Vec<Point2> = (0..4).map(|i| Point2::new(i as f64, 0.0)).collect();
        for k in 1..4 {
            assert!(field_interval(&straight, k, 1.0, &g, FieldForm::Distance).0.norm() < 1e-15);
        }
        let two = [Point2::zeros(), Point2::new(2.0, 0.0)];
        let (f, _) = field_interval(&two, 1, 1.0, &g, FieldForm::Ratio);
        assert!((f - Point2::new(-1.0, 0.0)).norm() < 1e-15);
        let sym = [Point2::zeros(), Point2::new(2.0, 0.0), Point2::new(4.0, 0.0)];
        assert!(field_interval(&sym, 1, 1.0, &g, FieldForm::Distance).0.norm() < 1e-15);
        let (_, fl) = field_interval(&[Point2::zeros(), Point2::zeros()], 1, 1.0, &g, FieldForm::Distance);
        assert!(fl.degenerate);
    }

    #[test]
    fn repulsion_values() {
        let g = FieldGains { g_r: 1.0, ..FieldGains::for_spacing(1.0) };
        let d_s = 0.6;
        let far = Probe { dist: 2.0 * d_s, dir: Point2::x(), inside: false, obstacle: None };
        assert_eq!(field_repulsion(&far, d_s, &g, FieldForm::Distance).0, Point2::zeros());
        let near = Probe { dist: d_s / 2.0, ..far };
        let (f, _) = field_repulsion(&near, d_s, &g, FieldForm::Distance);
        assert!((f - Point2::new(-d_s / 2.0, 0.0)).norm() < 1e-15);
        let (f2, _) = field_repulsion(&near, d_s, &g, FieldForm::Ratio);
        assert!((f - f2).norm() < 1e-15);
    }

    #[test]
    fn pull_values() {
        let g = FieldGains { g_p: 2.0, g_r: 1.0, ..FieldGains::for_spacing(1.0) };
        let f = field_pull(&Point2::zeros(), &Point2::new(0.0, 5.0), ProlongMode::R1, None, 0.6, &g);
        assert!((f - Point2::new(0.0, 2.0)).norm() < 1e-15);
        let pr = Probe { dist: 0.6, dir: Point2::x(), inside: false, obstacle: Some(0) };
        let up = field_pull(&Point2::zeros(), &Point2::zeros(), ProlongMode::R2 { gamma: 1, obstacle: 0 }, Some(&pr), 0.6, &g);
        assert!(up.x.abs() < 1e-15 && (up.norm() - 2.0).abs() < 1e-15);
        let pr2 = Probe { dist: 1.0, ..pr };
        let a = field_pull(&Point2::zeros(), &Point2::zeros(), ProlongMode::R2 { gamma: 1, obstacle: 0 }, Some(&pr2), 0.6, &g);
        let b = field_pull(&Point2::zeros(), &Point2::zeros(), ProlongMode::R2 { gamma: -1, obstacle: 0 }, Some(&pr2), 0.6, &g);
        assert!((a.x - b.x).abs() < 1e-15 && (a.y + b.y).abs() < 1e-15);
    }

    #[test]
    fn initial_circle_push() {
        let g = FieldGains { g_c: 1.0, ..FieldGains::for_spacing(1.0) };
        let pose = Pose2::new(0.0, 0.0, 0.0);
        let p1 = Point2::new(0.1, 0.05);
        assert_eq!(field_initial_circle(&Point2::new(0.0, -0.5), &pose, &p1, 1.0, &g).0, Point2::zeros());
        let (f, _) = field_initial_circle(&Point2::new(0.0, 0.5), &pose, &p1, 1.0, &g);
        assert!((f - Point2::new(0.0, -0.5)).norm() < 1e-15);
        assert!(field_initial_circle(&Point2::new(1.0, 1.0), &pose, &p1, 1.0, &g).0.norm() < 1e-15);
    }

    #[test]
    fn velocity_estimates() {
        let spec = crate::geom::GridSpec::new(Point2::zeros(), 0.05, [200, 100]).unwrap();
        let rect = |x0: f64, y0: f64, w: f64, h: f64| {
            LabelGrid::from_fn(spec.clone(), |c| {
                if c.x > x0 && c.x < x0 + w && c.y > y0 && c.y < y0 + h {
                    Cell::Occupied
                } else {
                    Cell::Free
                }
            })
        };
        let a = rect(2.0, 2.0, 2.0, 1.0);
        let b = rect(2.3, 2.0, 2.0, 1.0);
        let e = estimate_obstacle_velocity(&a, &b, 0.3, 0.1).unwrap();
        assert!((e.velocity - Point2::new(1.0, 0.0)).norm() < 1e-9 && e.reliable);
        let same = estimate_obstacle_velocity(&a, &a, 0.3, 0.1).unwrap();
        assert_eq!(same.velocity, Point2::zeros());
        let rot = rect(2.5, 1.5, 1.0, 2.0);
        assert!(!estimate_obstacle_velocity(&a, &rot, 0.3, 0.1).unwrap().reliable);
    }

    #[test]
    fn prediction_translates() {
        let mut w = open_world();
        w.world.obstacles.push(Obstacle2 { shape: Shape2::Disk { center: Point2::zeros(), radius: 1.0 }, velocity: Point2::new(1.0, 0.0) });
        assert_eq!(w.predict_obstacle(0, 0), w.world.obstacles[0].shape);
        match w.predict_obstacle(0, 10) {
            Shape2::Disk { center, .. } => assert!((center - Point2::new(3.0, 0.0)).norm() < 1e-12),
            _ => unreachable!(),
        }
    }

    #[test]
    fn equilibrium_path_is_untouched() {
        let w = open_world();
        let pts: Vec<Point2> = (0..5).map(|i| Point2::new(i as f64 * 0.5, 0.0)).collect();
        let path = PathPolyline::new(pts, 0.5).unwrap();
        let ctx = RelaxContext::new(&w, Threshold::Fixed(0.5), Point2::new(2.0, 0.0));
        let g = FieldGains { g_p: 1e-6, ..FieldGains::for_spacing(0.5) };
        let (out, rep) = relax_path(&path, &ctx, &g);
        assert!(rep.converged && rep.iterations == 0);
        assert_eq!(out, path);
    }

    #[test]
    fn stretched_chain_relaxes_to_spacing() {
        let w = open_world();
        let l = 0.15;
        let target = Point2::new(3.0, 0.0);
        let pts: Vec<Point2> = (0..15).map(|i| Point2::new(i as f64 * 0.2, 0.1 * (i as f64).sin())).collect();
        let path = PathPolyline::new(pts, l).unwrap();
        let ctx = RelaxContext::new(&w, Threshold::Fixed(0.6), target);
        let g = FieldGains::for_spacing(l);
        let (out, rep) = relax_path(&path, &ctx, &g);
        assert!(rep.converged, "{rep:?}");
        assert_eq!(out.points[0], path.points[0]);
        let (lo, hi) = out.spacing_range();
        let s = 1.0 + g.g_p / (g.g_i * l);
        assert!((lo / l - s).abs() < 0.02 && (hi / l - s).abs() < 0.02, "{lo} {hi}");
    }

    #[test]
    fn empty_world_straight_chain() {
        let p = PlanProblem::new(Pose2::new(0.0, 0.0, 0.0), Point2::new(3.0, 1.0), open_world(), 0.6, 0.15);
        let c = p.prolong_path().unwrap();
        assert!(c.events.is_empty());
        let dir = Point2::new(3.0, 1.0).normalize();
        assert!(c.path.points.iter().all(|q| cross2(&dir, q).abs() < 1e-6));
        let r = homotopy_search(&p, &SearchParams::default()).unwrap();
        assert_eq!(r.candidates.len(), 1);
    }
}

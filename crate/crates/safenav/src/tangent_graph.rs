//! Homotopy-distinct candidate paths from the boundary curves of the reduced free area.
//!
//! The boundary of the reduced area splits into closed curves: the outer curve `C₀`
//! and inner curves around obstacles. Lines through the target that touch a curve give
//! A-points, the robot's initial circles give exit tangents (B-points) and crossings
//! (V-points), and the ray pointing away from the target gives S-points on `C₀`.
//! Candidates walk this graph under six rules.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::TAU;

use crate::apf::{relax_path, FieldGains, GridEnvironment, PathPolyline, RelaxContext, RelaxReport, Threshold};
use crate::error::{Error, Result};
use crate::geom::{cross2, perp, ray_segment, signed_area, Point2, Pose2, RegionGrid2};
use crate::sensing::ShrinkParams;
use crate::vehicle::initial_circles;

/// Closed boundary curves; `curves[0]` is the outer one (counter-clockwise), the rest clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCurves {
    pub curves: Vec<Vec<Point2>>,
}

impl BoundaryCurves {
    pub fn outer(&self) -> &[Point2] {
        &self.curves[0]
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum EdgeKey {
    H(usize, usize),
    V(usize, usize),
}

/// Traces the free/non-free interface with marching squares.
///
/// With `seed`, only the 4-connected free component containing it is traced.
/// Curves are simplified to within `tolerance`.
pub fn extract_boundary_curves(region: &RegionGrid2, seed: Option<Point2>, tolerance: f64) -> Result<BoundaryCurves> {
    let spec = region.spec();
    let [w, h] = spec.dims;
    let mut mask = vec![false; w * h];
    match seed.and_then(|s| spec.cell_of(&s)).filter(|c| region.is_free_cell(*c)) {
        Some(c) => {
            let mut q = VecDeque::from([c]);
            mask[spec.index(c)] = true;
            while let Some([x, y]) = q.pop_front() {
                let mut push = |nx: usize, ny: usize| {
                    let i = spec.index([nx, ny]);
                    if !mask[i] && region.is_free_cell([nx, ny]) {
                        mask[i] = true;
                        q.push_back([nx, ny]);
                    }
                };
                if x > 0 {
                    push(x - 1, y);
                }
                if x + 1 < w {
                    push(x + 1, y);
                }
                if y > 0 {
                    push(x, y - 1);
                }
                if y + 1 < h {
                    push(x, y + 1);
                }
            }
        }
        None if seed.is_some() => return Err(Error::EmptyRegion),
        None => {
            for (i, m) in mask.iter_mut().enumerate() {
                *m = region.is_free_cell(spec.unindex(i));
            }
        }
    }
    if !mask.contains(&true) {
        return Err(Error::EmptyRegion);
    }
    // padded sample (i, j) is cell (i-1, j-1)
    let at = |i: usize, j: usize| i >= 1 && j >= 1 && i <= w && j <= h && mask[spec.index([i - 1, j - 1])];
    let mut segs: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..=h {
        for i in 0..=w {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            let bottom = EdgeKey::H(i, j);
            let top = EdgeKey::H(i, j + 1);
            let left = EdgeKey::V(i, j);
            let right = EdgeKey::V(i + 1, j);
            if a == c && b == d && a != b {
                if a {
                    segs.push((bottom, left));
                    segs.push((right, top));
                } else {
                    segs.push((bottom, right));
                    segs.push((left, top));
                }
                continue;
            }
            let mut cut = Vec::with_capacity(2);
            if a != b {
                cut.push(bottom);
            }
            if b != c {
                cut.push(right);
            }
            if d != c {
                cut.push(top);
            }
            if a != d {
                cut.push(left);
            }
            if cut.len() == 2 {
                segs.push((cut[0], cut[1]));
            }
        }
    }
    let pos = |k: EdgeKey| -> Point2 {
        let o = spec.origin;
        let c = spec.cell;
        match k {
            EdgeKey::H(i, j) => Point2::new(o.x + i as f64 * c, o.y + (j as f64 - 0.5) * c),
            EdgeKey::V(i, j) => Point2::new(o.x + (i as f64 - 0.5) * c, o.y + j as f64 * c),
        }
    };
    let mut touch: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segs.iter().enumerate() {
        touch.entry(*a).or_default().push(s);
        touch.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segs.len()];
    let mut loops: Vec<Vec<Point2>> = Vec::new();
    for s0 in 0..segs.len() {
        if used[s0] {
            continue;
        }
        used[s0] = true;
        let start = segs[s0].0;
        let mut cur = segs[s0].1;
        let mut pts = vec![pos(start)];
        while cur != start {
            pts.push(pos(cur));
            let next = touch[&cur].iter().copied().find(|&s| !used[s]);
            let Some(s) = next else { break };
            used[s] = true;
            cur = if segs[s].0 == cur { segs[s].1 } else { segs[s].0 };
        }
        if pts.len() >= 3 {
            loops.push(simplify_closed(&pts, tolerance));
        }
    }
    let outer = (0..loops.len())
        .max_by(|&a, &b| signed_area(&loops[a]).abs().total_cmp(&signed_area(&loops[b]).abs()))
        .ok_or(Error::EmptyRegion)?;
    loops.swap(0, outer);
    for (i, l) in loops.iter_mut().enumerate() {
        let ccw = signed_area(l) > 0.0;
        if (i == 0) != ccw {
            l.reverse();
        }
    }
    Ok(BoundaryCurves { curves: loops })
}

fn douglas_peucker(pts: &[Point2], tol: f64, out: &mut Vec<Point2>) {
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let mut worst = (0.0, 0);
    for (i, p) in pts.iter().enumerate().take(pts.len() - 1).skip(1) {
        let d = (crate::geom::closest_on_segment(&a, &b, p).0 - p).norm();
        if d > worst.0 {
            worst = (d, i);
        }
    }
    if worst.0 > tol {
        douglas_peucker(&pts[..=worst.1], tol, out);
        douglas_peucker(&pts[worst.1..], tol, out);
    } else {
        out.push(a);
    }
}

fn simplify_closed(pts: &[Point2], tol: f64) -> Vec<Point2> {
    if tol <= 0.0 || pts.len() < 8 {
        return pts.to_vec();
    }
    // split at the point farthest from the first so both halves are open chains
    let far = (1..pts.len())
        .max_by(|&a, &b| (pts[a] - pts[0]).norm().total_cmp(&(pts[b] - pts[0]).norm()))
        .unwrap_or(1);
    let mut first: Vec<Point2> = pts[..=far].to_vec();
    let mut second: Vec<Point2> = pts[far..].to_vec();
    second.push(pts[0]);
    let mut out = Vec::new();
    douglas_peucker(&first, tol, &mut out);
    douglas_peucker(&second, tol, &mut out);
    first.clear();
    if out.len() < 3 {
        return pts.to_vec();
    }
    out
}

/// Kind of a graph vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VertexKind {
    Target,
    Start,
    A,
    APrime,
    B,
    BPrime,
    S,
    V,
}

/// Kind of a graph edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Curve,
    CircleArc,
    AT,
    AAPrime,
    BT,
    BBPrime,
}

/// Position on a closed curve: `edge + t` with `t ∈ [0,1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePos {
    pub curve: usize,
    pub s: f64,
    pub point: Point2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub kind: VertexKind,
    pub point: Point2,
    pub on_curve: Option<CurvePos>,
    /// Initial circle (0 left, 1 right) for B and V points.
    pub circle: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub kind: EdgeKind,
    pub from: usize,
    pub to: usize,
}

/// Where the straight segment leaving an A- or B-point ends.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Leg {
    Target,
    Prime(usize),
}

/// Typed vertices on the curves and the initial circles.
#[derive(Clone, Debug)]
pub struct GraphG {
    pub curves: BoundaryCurves,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub start: Pose2,
    pub target: Point2,
    pub r_min: f64,
    /// Curve tangency detected on two target lines at once.
    pub flagged: usize,
    legs: HashMap<usize, Leg>,
    /// Travelled angle from the start for B and V points.
    sweep: HashMap<usize, f64>,
    cell: f64,
}

fn wrap_tau(a: f64) -> f64 {
    a.rem_euclid(TAU)
}

/// First crossing of segment `a b` with any curve, ignoring crossings within `skip` of `a`.
fn first_crossing(curves: &BoundaryCurves, a: &Point2, b: &Point2, skip: f64) -> Option<(f64, CurvePos)> {
    let d = b - a;
    let len = d.norm();
    if len < 1e-12 {
        return None;
    }
    let dir = d / len;
    let mut best: Option<(f64, CurvePos)> = None;
    for (ci, c) in curves.curves.iter().enumerate() {
        let m = c.len();
        for e in 0..m {
            let (p, q) = (c[e], c[(e + 1) % m]);
            let Some(t) = ray_segment(a, &dir, &p, &q) else { continue };
            if t < skip || t > len {
                continue;
            }
            if best.is_none_or(|(bt, _)| t < bt) {
                let hit = a + dir * t;
                let el = (q - p).norm();
                let u = if el > 0.0 { ((hit - p).norm() / el).min(1.0 - 1e-12) } else { 0.0 };
                best = Some((t, CurvePos { curve: ci, s: e as f64 + u, point: hit }));
            }
        }
    }
    best
}

fn circle_dir(side: usize) -> f64 {
    if side == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Whether every curve point within arc length `w` of vertex `j` lies on one side of the line through `t`.
fn supporting(c: &[Point2], j: usize, t: &Point2, w: f64) -> bool {
    let m = c.len();
    let line = c[j] - t;
    let mut side = 0.0;
    for dir in [1usize, m - 1] {
        let (mut k, mut run) = (j, 0.0);
        loop {
            let n = (k + dir) % m;
            run += (c[n] - c[k]).norm();
            k = n;
            if k == j {
                break;
            }
            let s = cross2(&line, &(c[k] - t));
            if s != 0.0 {
                if side * s < 0.0 {
                    return false;
                }
                side = s;
            }
            if run >= w {
                break;
            }
        }
    }
    side != 0.0
}

/// Computes every typed vertex and connects them into the graph.
pub fn build_graph(curves: BoundaryCurves, region: &RegionGrid2, start: Pose2, target: Point2, r_min: f64) -> GraphG {
    let cell = region.cell_size();
    let skip = 1.5 * cell;
    let mut g = GraphG {
        curves,
        vertices: Vec::new(),
        edges: Vec::new(),
        start,
        target,
        r_min,
        flagged: 0,
        legs: HashMap::new(),
        sweep: HashMap::new(),
        cell,
    };
    let add = |g: &mut GraphG, v: Vertex| {
        g.vertices.push(v);
        g.vertices.len() - 1
    };
    let t_id = add(&mut g, Vertex { kind: VertexKind::Target, point: target, on_curve: None, circle: None });
    let s_id = add(&mut g, Vertex { kind: VertexKind::Start, point: start.position(), on_curve: None, circle: None });

    // A-points: vertices where the target line touches the curve
    let mut tangent_count: HashMap<(usize, usize), usize> = HashMap::new();
    let mut last_tangent: Option<(usize, Point2)> = None;
    for ci in 0..g.curves.curves.len() {
        let c = g.curves.curves[ci].clone();
        let m = c.len();
        for j in 0..m {
            let v = c[j];
            let line = v - target;
            if line.norm() < cell {
                continue;
            }
            if !supporting(&c, j, &target, 4.0 * cell) {
                continue;
            }
            if last_tangent.is_some_and(|(lc, lp): (usize, Point2)| lc == ci && (lp - v).norm() < 4.0 * cell) {
                continue;
            }
            last_tangent = Some((ci, v));
            let hit = first_crossing(&g.curves, &v, &target, skip);
            let leg = match hit {
                None => Leg::Target,
                Some((_, cp)) if cp.curve == ci => continue,
                Some((_, cp)) => {
                    let id = add(&mut g, Vertex { kind: VertexKind::APrime, point: cp.point, on_curve: Some(cp), circle: None });
                    Leg::Prime(id)
                }
            };
            *tangent_count.entry((ci, j)).or_default() += 1;
            let a = add(
                &mut g,
                Vertex { kind: VertexKind::A, point: v, on_curve: Some(CurvePos { curve: ci, s: j as f64, point: v }), circle: None },
            );
            g.legs.insert(a, leg);
            match leg {
                Leg::Target => g.edges.push(Edge { kind: EdgeKind::AT, from: a, to: t_id }),
                Leg::Prime(p) => g.edges.push(Edge { kind: EdgeKind::AAPrime, from: a, to: p }),
            }
        }
    }
    g.flagged = tangent_count.values().filter(|&&n| n > 1).count();

    // S-points: the backward ray from the start against the outer curve
    let p0 = start.position();
    let back = p0 - target;
    if back.norm() > 1e-12 {
        let dir = back.normalize();
        let c0 = g.curves.curves[0].clone();
        let m = c0.len();
        for e in 0..m {
            if let Some(t) = ray_segment(&p0, &dir, &c0[e], &c0[(e + 1) % m]) {
                let hit = p0 + dir * t;
                let el = (c0[(e + 1) % m] - c0[e]).norm();
                let u = if el > 0.0 { ((hit - c0[e]).norm() / el).min(1.0 - 1e-12) } else { 0.0 };
                add(
                    &mut g,
                    Vertex { kind: VertexKind::S, point: hit, on_curve: Some(CurvePos { curve: 0, s: e as f64 + u, point: hit }), circle: None },
                );
            }
        }
    }

    // initial circles: exit tangents and crossings
    let (left, right) = initial_circles(&start, r_min);
    for (side, circ) in [left, right].into_iter().enumerate() {
        let w = circle_dir(side);
        let c = circ.center;
        let phi0 = (p0 - c).y.atan2((p0 - c).x);
        let sweep_to = |q: &Point2| wrap_tau(w * ((q - c).y.atan2((q - c).x) - phi0));
        let mut first: Option<(f64, usize)> = None;
        for (ci, curve) in g.curves.curves.clone().iter().enumerate() {
            let m = curve.len();
            for e in 0..m {
                let (a, b) = (curve[e], curve[(e + 1) % m]);
                let d = b - a;
                let f = a - c;
                let qa = d.dot(&d);
                let qb = 2.0 * f.dot(&d);
                let qc = f.dot(&f) - r_min * r_min;
                let disc = qb * qb - 4.0 * qa * qc;
                if qa == 0.0 || disc < 0.0 {
                    continue;
                }
                for t in [(-qb - disc.sqrt()) / (2.0 * qa), (-qb + disc.sqrt()) / (2.0 * qa)] {
                    if !(0.0..1.0).contains(&t) {
                        continue;
                    }
                    let q = a + d * t;
                    let sw = sweep_to(&q);
                    if sw * r_min < cell {
                        continue;
                    }
                    let id = add(
                        &mut g,
                        Vertex { kind: VertexKind::V, point: q, on_curve: Some(CurvePos { curve: ci, s: e as f64 + t, point: q }), circle: Some(side) },
                    );
                    g.sweep.insert(id, sw);
                    if first.is_none_or(|(s, _)| sw < s) {
                        first = Some((sw, id));
                    }
                }
            }
        }
        let dt = target - c;
        let dist = dt.norm();
        if dist > r_min {
            let base = dt.y.atan2(dt.x);
            let off = (r_min / dist).acos();
            for phi in [base + off, base - off] {
                let q = c + Point2::new(phi.cos(), phi.sin()) * r_min;
                let motion = perp(&(q - c)) * w;
                if motion.dot(&(target - q)) <= 0.0 {
                    continue;
                }
                let sw = sweep_to(&q);
                if first.is_some_and(|(s, _)| s < sw) || !region.is_free(&q) {
                    break;
                }
                let b = add(&mut g, Vertex { kind: VertexKind::B, point: q, on_curve: None, circle: Some(side) });
                g.sweep.insert(b, sw);
                first = Some((sw, b));
                let leg = match first_crossing(&g.curves, &q, &target, skip) {
                    None => Leg::Target,
                    Some((_, cp)) => {
                        let id = add(&mut g, Vertex { kind: VertexKind::BPrime, point: cp.point, on_curve: Some(cp), circle: None });
                        Leg::Prime(id)
                    }
                };
                g.legs.insert(b, leg);
                match leg {
                    Leg::Target => g.edges.push(Edge { kind: EdgeKind::BT, from: b, to: t_id }),
                    Leg::Prime(p) => g.edges.push(Edge { kind: EdgeKind::BBPrime, from: b, to: p }),
                }
                break;
            }
        }
        if let Some((_, id)) = first {
            g.edges.push(Edge { kind: EdgeKind::CircleArc, from: s_id, to: id });
        }
    }

    // split every curve at its vertices
    for ci in 0..g.curves.curves.len() {
        let mut on: Vec<(f64, usize)> = g
            .vertices
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.on_curve.filter(|p| p.curve == ci).map(|p| (p.s, i)))
            .collect();
        on.sort_by(|a, b| a.0.total_cmp(&b.0));
        for k in 0..on.len() {
            let (from, to) = (on[k].1, on[(k + 1) % on.len()].1);
            g.edges.push(Edge { kind: EdgeKind::Curve, from, to });
        }
    }
    g
}

/// The typed vertices of the graph in a single call.
pub fn classify_points(curves: &BoundaryCurves, region: &RegionGrid2, start: Pose2, target: Point2, r_min: f64) -> Vec<Vertex> {
    build_graph(curves.clone(), region, start, target, r_min).vertices
}

impl GraphG {
    pub fn count(&self, kind: VertexKind) -> usize {
        self.vertices.iter().filter(|v| v.kind == kind).count()
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// One line per edge: `kind from to x0 y0 x1 y1`.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for e in &self.edges {
            let (a, b) = (self.vertices[e.from].point, self.vertices[e.to].point);
            s.push_str(&format!("{:?} {} {} {:.4} {:.4} {:.4} {:.4}\n", e.kind, e.from, e.to, a.x, a.y, b.x, b.y));
        }
        s
    }

    /// Curve direction best matching `dir` at position `pos`.
    fn orientation_along(&self, pos: &CurvePos, dir: &Point2) -> i8 {
        let c = &self.curves.curves[pos.curve];
        let m = c.len();
        let e = (pos.s.floor() as usize) % m;
        let t = c[(e + 1) % m] - c[e];
        if t.dot(dir) >= 0.0 {
            1
        } else {
            -1
        }
    }

    /// Walks curve `pos.curve` from `pos` in direction `dir` until an admissible A-point or an S-point.
    fn walk(&self, pos: &CurvePos, dir: i8) -> (Vec<Point2>, Option<usize>) {
        let ci = pos.curve;
        let c = &self.curves.curves[ci];
        let m = c.len() as f64;
        let ahead = |s: f64| if dir > 0 { (s - pos.s).rem_euclid(m) } else { (pos.s - s).rem_euclid(m) };
        let mut marks: Vec<(f64, usize)> = self
            .vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| matches!(v.kind, VertexKind::A | VertexKind::S))
            .filter_map(|(i, v)| v.on_curve.filter(|p| p.curve == ci).map(|p| (ahead(p.s), i)))
            .filter(|(d, _)| *d > 1e-9)
            .collect();
        marks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut stop = None;
        for (_, i) in &marks {
            let v = &self.vertices[*i];
            if v.kind == VertexKind::S {
                stop = Some(*i);
                break;
            }
            let j = v.on_curve.expect("A on curve").s as usize;
            let n = c.len();
            let chord = if dir > 0 { c[(j + 1) % n] - c[(j + n - 1) % n] } else { c[(j + n - 1) % n] - c[(j + 1) % n] };
            if chord.dot(&(self.target - v.point)) > 0.0 {
                stop = Some(*i);
                break;
            }
        }
        let end = stop.map_or(m, |i| ahead(self.vertices[i].on_curve.expect("on curve").s));
        let mut pts = vec![pos.point];
        let n = c.len();
        if dir > 0 {
            let mut k = pos.s.floor() as usize + 1;
            let mut travelled = (k as f64 - pos.s).max(0.0);
            while travelled < end - 1e-9 {
                pts.push(c[k % n]);
                k += 1;
                travelled += 1.0;
            }
        } else {
            let fl = pos.s.floor();
            let mut k = if pos.s - fl > 1e-12 { fl as i64 } else { fl as i64 - 1 };
            let mut travelled = pos.s - k as f64;
            while travelled < end - 1e-9 {
                pts.push(c[k.rem_euclid(n as i64) as usize]);
                k -= 1;
                travelled += 1.0;
            }
        }
        if let Some(i) = stop {
            pts.push(self.vertices[i].point);
        }
        (pts, stop)
    }

    fn arc_points(&self, side: usize, sweep: f64) -> Vec<Point2> {
        let (l, r) = initial_circles(&self.start, self.r_min);
        let c = if side == 0 { l } else { r };
        let w = circle_dir(side);
        let p0 = self.start.position();
        let phi0 = (p0 - c.center).y.atan2((p0 - c.center).x);
        let steps = ((sweep * self.r_min / self.cell).ceil() as usize).max(1);
        (0..=steps)
            .map(|k| {
                let phi = phi0 + w * sweep * k as f64 / steps as f64;
                c.center + Point2::new(phi.cos(), phi.sin()) * self.r_min
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateStatus {
    Growing,
    Completed,
    Abandoned,
}

/// A raw candidate: a polyline from the start through graph edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: usize,
    pub points: Vec<Point2>,
    pub status: CandidateStatus,
    /// Vertex ids visited, with the walking direction on curves.
    pub route: Vec<(usize, i8)>,
}

impl Candidate {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Candidate list plus whether the worklist cap cut it short.
#[derive(Clone, Debug)]
pub struct Candidates {
    pub list: Vec<Candidate>,
    pub truncated: bool,
}

impl Candidates {
    pub fn completed(&self) -> impl Iterator<Item = &Candidate> {
        self.list.iter().filter(|c| c.status == CandidateStatus::Completed)
    }
}

enum Step {
    Circle(usize),
    Leg(usize),
    Curve(CurvePos, i8, usize),
}

/// FIFO expansion of the six candidate rules, capped at `cap` candidates.
pub fn generate_candidates(g: &GraphG, cap: usize) -> Candidates {
    let mut list: Vec<Candidate> = Vec::new();
    let mut work: VecDeque<(usize, Step)> = VecDeque::new();
    let mut truncated = false;
    for side in 0..2 {
        list.push(Candidate { id: side, points: vec![g.start.position()], status: CandidateStatus::Growing, route: vec![(1, 0)] });
        work.push_back((side, Step::Circle(side)));
    }
    let branch = |list: &mut Vec<Candidate>, work: &mut VecDeque<(usize, Step)>, truncated: &mut bool, id: usize, at: usize| {
        let Some(pos) = g.vertices[at].on_curve else {
            list[id].status = CandidateStatus::Abandoned;
            return;
        };
        work.push_back((id, Step::Curve(pos, 1, at)));
        if list.len() >= cap {
            *truncated = true;
            return;
        }
        let mut twin = list[id].clone();
        twin.id = list.len();
        list.push(twin);
        work.push_back((list.len() - 1, Step::Curve(pos, -1, at)));
    };
    while let Some((id, step)) = work.pop_front() {
        if list[id].status != CandidateStatus::Growing {
            continue;
        }
        match step {
            Step::Circle(side) => {
                let event = g
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|(i, v)| v.circle == Some(side) && g.sweep.contains_key(i))
                    .min_by(|a, b| g.sweep[&a.0].total_cmp(&g.sweep[&b.0]))
                    .map(|(i, _)| i);
                let Some(e) = event else {
                    list[id].status = CandidateStatus::Abandoned;
                    continue;
                };
                let arc = g.arc_points(side, g.sweep[&e]);
                list[id].points.extend_from_slice(&arc[1..]);
                list[id].route.push((e, 0));
                match g.vertices[e].kind {
                    VertexKind::B => work.push_back((id, Step::Leg(e))),
                    _ => {
                        let pos = g.vertices[e].on_curve.expect("V on curve");
                        let (l, r) = initial_circles(&g.start, g.r_min);
                        let c = if side == 0 { l.center } else { r.center };
                        let motion = perp(&(pos.point - c)) * circle_dir(side);
                        let dir = g.orientation_along(&pos, &motion);
                        work.push_back((id, Step::Curve(pos, dir, e)));
                    }
                }
            }
            Step::Leg(from) => match g.legs.get(&from) {
                Some(Leg::Target) => {
                    list[id].points.push(g.target);
                    list[id].status = CandidateStatus::Completed;
                }
                Some(Leg::Prime(p)) => {
                    list[id].points.push(g.vertices[*p].point);
                    list[id].route.push((*p, 0));
                    branch(&mut list, &mut work, &mut truncated, id, *p);
                }
                None => list[id].status = CandidateStatus::Abandoned,
            },
            Step::Curve(pos, dir, from) => {
                let (pts, stop) = g.walk(&pos, dir);
                if let Some(last) = list[id].route.last_mut() {
                    if last.0 == from {
                        last.1 = dir;
                    }
                }
                list[id].points.extend_from_slice(&pts[1..]);
                match stop {
                    Some(v) if g.vertices[v].kind == VertexKind::A => {
                        if list[id].route.iter().any(|(r, _)| *r == v) {
                            list[id].status = CandidateStatus::Abandoned;
                            continue;
                        }
                        list[id].route.push((v, 0));
                        work.push_back((id, Step::Leg(v)));
                    }
                    Some(v) => {
                        list[id].route.push((v, 0));
                        list[id].status = CandidateStatus::Abandoned;
                    }
                    None => list[id].status = CandidateStatus::Abandoned,
                }
            }
        }
    }
    // identical routes collapse onto the first
    let mut seen: Vec<Vec<(usize, i8)>> = Vec::new();
    for c in list.iter_mut().filter(|c| c.status == CandidateStatus::Completed) {
        if seen.contains(&c.route) {
            c.status = CandidateStatus::Abandoned;
        } else {
            seen.push(c.route.clone());
        }
    }
    Candidates { list, truncated }
}

/// Resamples a polyline at arc-length spacing `l`, keeping the first point.
pub fn resample(points: &[Point2], l: f64) -> PathPolyline {
    let mut out = vec![points[0]];
    let mut carry = 0.0;
    for w in points.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        if len == 0.0 {
            continue;
        }
        let mut s = l - carry;
        while s <= len + 1e-12 {
            out.push(w[0] + seg * (s / len));
            s += l;
        }
        carry = len - (s - l);
    }
    PathPolyline { points: out, spacing: l }
}

/// Relaxation setting for candidates on an unoccupied area.
#[derive(Clone, Copy, Debug)]
pub struct SelectParams {
    pub shrink: ShrinkParams,
    pub gains: FieldGains,
    pub r_min: f64,
    pub spacing: f64,
    /// Relax candidates shortest first and keep the first that converges.
    pub fast: bool,
}

/// The selected path and its provenance.
#[derive(Clone, Debug)]
pub struct Selected {
    pub path: PathPolyline,
    pub candidate: usize,
    pub report: RelaxReport,
}

/// Relaxes completed candidates and returns the shortest converged one.
pub fn select_candidate(cands: &Candidates, env: &GridEnvironment, start: Pose2, target: Point2, p: &SelectParams) -> Result<Selected> {
    let mut done: Vec<&Candidate> = cands.completed().collect();
    if done.is_empty() {
        return Err(Error::NoPath("no completed candidate".into()));
    }
    done.sort_by(|a, b| a.length().total_cmp(&b.length()).then(a.id.cmp(&b.id)));
    let relax = |c: &Candidate| {
        let raw = resample(&c.points, p.spacing);
        let ctx = RelaxContext {
            initial: Some((start, p.r_min)),
            adjust_end: true,
            ..RelaxContext::new(env, Threshold::Shrinking(p.shrink), target)
        };
        let (path, rep) = relax_path(&raw, &ctx, &p.gains);
        (c.id, path, rep)
    };
    let usable = |r: &RelaxReport| r.converged && !r.flags.inside;
    if p.fast {
        return done
            .iter()
            .map(|c| relax(c))
            .find(|(_, _, r)| usable(r))
            .map(|(candidate, path, report)| Selected { path, candidate, report })
            .ok_or_else(|| Error::PlannerFailed("every candidate failed to relax".into()));
    }
    use rayon::prelude::*;
    let relaxed: Vec<(usize, PathPolyline, RelaxReport)> = done.par_iter().map(|c| relax(c)).collect();
    relaxed
        .into_iter()
        .filter(|(_, _, r)| usable(r))
        .min_by(|a, b| a.1.length().total_cmp(&b.1.length()).then(a.0.cmp(&b.0)))
        .map(|(candidate, path, report)| Selected { path, candidate, report })
        .ok_or_else(|| Error::PlannerFailed("every candidate failed to relax".into()))
}

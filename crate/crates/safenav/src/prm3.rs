//! Roadmap planning and field relaxation for flying robots.
//!
//! A probabilistic roadmap over the conservatively reduced free space gives a rough path,
//! which is resampled at equal spacing and relaxed against a per-index valid area that
//! also keeps other robots' planned positions at a distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::apf::{FieldGains, RelaxReport};
use crate::error::{invalid, Error, Result};
use crate::geom::{Cell, LabelGrid, Point3, RegionGrid3};
use crate::sensing::ShrinkParams;
use crate::vehicle::{InitialTorus, Vehicle3State};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prm3Params {
    pub n_s: usize,
    pub n_c: usize,
    pub spacing: f64,
    pub u_max: f64,
    pub v: f64,
}

impl Prm3Params {
    pub fn new(spacing: f64, u_max: f64, v: f64) -> Self {
        Prm3Params { n_s: 500, n_c: 10, spacing, u_max, v }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 || self.n_c >= self.n_s {
            return Err(invalid(format!("neighbour count must be in 1..{} (got {})", self.n_s, self.n_c)));
        }
        if !(self.spacing > 0.0 && self.u_max > 0.0 && self.v > 0.0) {
            return Err(invalid("spacing, turn bound and speed must be positive"));
        }
        Ok(())
    }

    /// Largest angle an initial edge may make with the heading.
    pub fn initial_cone(&self) -> f64 {
        (self.spacing * self.u_max / (2.0 * self.v)).min(1.0).asin()
    }
}

/// Uniform samples over the free cells, jittered inside each cell.
pub fn sample_free<R: Rng>(region: &RegionGrid3, n: usize, rng: &mut R) -> Result<Vec<Point3>> {
    let spec = region.spec();
    let free: Vec<usize> = (0..spec.len()).filter(|&i| region.is_free_cell(spec.unindex(i))).collect();
    if free.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok((0..n)
        .map(|_| {
            let (lo, hi) = spec.cell_box(spec.unindex(free[rng.random_range(0..free.len())]));
            Point3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z))
        })
        .collect())
}

/// Roadmap with the start and goal as its last two vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct Prm3Graph {
    pub vertices: Vec<Point3>,
    pub edges: Vec<(usize, usize, f64)>,
    pub init: usize,
    pub goal: usize,
}

impl Prm3Graph {
    pub fn from_edges(vertices: Vec<Point3>, edges: Vec<(usize, usize, f64)>, init: usize, goal: usize) -> Self {
        Prm3Graph { vertices, edges, init, goal }
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|(a, b, _)| *a == v || *b == v).count()
    }

    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b, w) in &self.edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        adj
    }
}

fn nearest_k(points: &[Point3], of: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<(f64, usize)> =
        (0..points.len()).filter(|&j| j != of).map(|j| ((points[j] - points[of]).norm_squared(), j)).collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    idx.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Connects samples to their nearest neighbours, then the start (inside the heading cone) and the goal.
pub fn connect_prm(samples: Vec<Point3>, params: &Prm3Params, region: &RegionGrid3, state: &Vehicle3State, goal: Point3) -> Prm3Graph {
    let n = samples.len();
    let mut vertices = samples;
    vertices.push(state.s);
    vertices.push(goal);
    let (init, goal_id) = (n, n + 1);
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    let mut add = |a: usize, b: usize, vertices: &[Point3]| {
        let key = (a.min(b), a.max(b));
        if a != b && !seen.contains(&key) && region.segment_clear(&vertices[a], &vertices[b]) {
            seen.insert(key);
            edges.push((key.0, key.1, (vertices[a] - vertices[b]).norm()));
        }
    };
    let sampled = &vertices[..n];
    for i in 0..n {
        for j in nearest_k(sampled, i, params.n_c) {
            add(i, j, &vertices);
        }
    }
    let cone = params.initial_cone();
    let mut ahead: Vec<(f64, usize)> = (0..n)
        .filter_map(|j| {
            let z = vertices[j] - state.s;
            let len = z.norm();
            let cos = (state.i.dot(&z) / len).clamp(-1.0, 1.0);
            (len > 0.0 && cos.acos() <= cone).then_some((len, j))
        })
        .collect();
    ahead.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(_, j) in ahead.iter().take(params.n_c) {
        add(init, j, &vertices);
    }
    for j in nearest_k(&vertices, goal_id, params.n_c) {
        add(goal_id, j, &vertices);
    }
    Prm3Graph { vertices, edges, init, goal: goal_id }
}

#[derive(PartialEq)]
struct Queued(f64, usize);

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Dijkstra from `init` to `goal`; the vertex sequence of a shortest path.
pub fn shortest_prm_path(g: &Prm3Graph) -> Result<Vec<usize>> {
    let adj = g.adjacency();
    let mut dist = vec![f64::INFINITY; g.vertices.len()];
    let mut prev = vec![usize::MAX; g.vertices.len()];
    let mut heap = BinaryHeap::new();
    dist[g.init] = 0.0;
    heap.push(Queued(0.0, g.init));
    while let Some(Queued(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == g.goal {
            break;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                heap.push(Queued(nd, v));
            }
        }
    }
    if !dist[g.goal].is_finite() {
        return Err(Error::NoPath("start and goal are not connected in the roadmap".into()));
    }
    let mut path = vec![g.goal];
    while *path.last().expect("non-empty") != g.init {
        path.push(prev[*path.last().expect("non-empty")]);
    }
    path.reverse();
    Ok(path)
}

/// Equally spaced 3D path.
#[derive(Clone, Debug, PartialEq)]
pub struct Path3 {
    pub points: Vec<Point3>,
    pub spacing: f64,
}

impl Path3 {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Point3 {
        self.points[self.points.len() - 1]
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn spacing_range(&self) -> (f64, f64) {
        self.points
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .fold((f64::INFINITY, 0.0), |(lo, hi), l| (lo.min(l), hi.max(l)))
    }

    pub fn min_circumradius(&self) -> f64 {
        self.points.windows(3).map(|w| circumradius3(&w[0], &w[1], &w[2])).fold(f64::INFINITY, f64::min)
    }

    /// Point at index `k`, held at the end for `k` past it.
    pub fn at(&self, k: usize) -> Point3 {
        self.points[k.min(self.points.len() - 1)]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,x,y,z\n");
        for (k, p) in self.points.iter().enumerate() {
            s.push_str(&format!("{k},{:.6},{:.6},{:.6}\n", p.x, p.y, p.z));
        }
        s
    }
}

pub fn circumradius3(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    let area2 = (b - a).cross(&(c - a)).norm();
    if area2 < 1e-15 {
        return f64::INFINITY;
    }
    (b - a).norm() * (c - b).norm() * (a - c).norm() / (2.0 * area2)
}

/// Arc-length resampling at spacing `l`; the first point is kept exactly.
pub fn resample_equal(pts: &[Point3], l: f64) -> Path3 {
    let total: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if total < l {
        return Path3 { points: vec![pts[0], pts[pts.len() - 1]], spacing: l };
    }
    let mut out = vec![pts[0]];
    let mut next = l;
    let mut run = 0.0;
    for w in pts.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        while next <= run + len + 1e-9 * l && next <= total + 1e-9 * l {
            let t = ((next - run) / len).clamp(0.0, 1.0);
            out.push(w[0] + seg * t);
            next += l;
        }
        run += len;
    }
    Path3 { points: out, spacing: l }
}

/// `R[A, min(k,T)·δ·V_max]` minus `R_r`-balls at the other robots' `k`-th path points.
pub fn valid_area(a: &RegionGrid3, k: usize, shrink: &ShrinkParams, others: &[Path3]) -> Result<RegionGrid3> {
    let reduced = a.reduce(shrink.shrink_distance(k))?;
    let centers: Vec<Point3> = others.iter().map(|p| p.at(k)).collect();
    Ok(reduced.without_balls(&centers, shrink.r_r))
}

/// Signed distance to the boundary of the per-index valid area, evaluated analytically.
#[derive(Clone, Debug)]
pub struct ValidArea3 {
    pub area: RegionGrid3,
    complement: RegionGrid3,
    pub shrink: ShrinkParams,
    pub others: Vec<Path3>,
}

impl ValidArea3 {
    pub fn new(area: RegionGrid3, shrink: ShrinkParams, others: Vec<Path3>) -> Self {
        let l = area.labels();
        let flipped = LabelGrid {
            spec: l.spec.clone(),
            cells: l.cells.iter().map(|c| if c.is_free() { Cell::Occupied } else { Cell::Free }).collect(),
        };
        ValidArea3 { complement: RegionGrid3::new(flipped), area, shrink, others }
    }

    /// `(signed distance, unit direction away from the boundary)`.
    pub fn probe(&self, p: &Point3, k: usize) -> (f64, Point3) {
        let n = self.area.nearest(p);
        let (mut d, mut away) = if n.dist > 0.0 {
            (n.dist - self.shrink.shrink_distance(k), (p - n.point) / n.dist)
        } else {
            let m = self.complement.nearest(p);
            let v = m.point - p;
            let dir = if v.norm() > 1e-12 { v.normalize() } else { Point3::z() };
            (-m.dist - self.shrink.shrink_distance(k), dir)
        };
        for o in &self.others {
            let v = p - o.at(k);
            let dj = v.norm() - self.shrink.r_r;
            if dj < d {
                d = dj;
                away = if v.norm() > 1e-12 { v.normalize() } else { Point3::z() };
            }
        }
        (d, away)
    }
}

/// Everything the 3D relaxation depends on besides the path.
#[derive(Clone, Copy, Debug)]
pub struct Relax3Context<'a> {
    pub valid: &'a ValidArea3,
    pub target: Point3,
    pub torus: Option<InitialTorus>,
    pub d_s: f64,
}

/// Resultant field at every index (index 0 is zero).
pub fn fields3(p: &Path3, ctx: &Relax3Context, g: &FieldGains) -> Vec<Point3> {
    let n = p.len() - 1;
    let l = p.spacing;
    let pts = &p.points;
    let spring = |k: usize| -> Point3 {
        let v = pts[k - 1] - pts[k];
        let len = v.norm();
        if len < 1e-12 {
            Point3::zeros()
        } else {
            v * (1.0 - l / len)
        }
    };
    let mut out = vec![Point3::zeros(); pts.len()];
    for k in 1..=n {
        let mut f = spring(k) * g.g_i;
        if k < n {
            f -= spring(k + 1) * g.g_i;
        } else {
            let to = ctx.target - pts[k];
            if to.norm() > 1e-12 {
                f += to.normalize() * g.g_p;
            }
        }
        let (d, away) = ctx.valid.probe(&pts[k], k);
        if d < ctx.d_s {
            f += away * (g.g_r * (ctx.d_s - d));
        }
        if let Some(t) = ctx.torus {
            let h = t.nearest_on_base(&pts[k]) - pts[k];
            let hn = h.norm();
            if hn <= t.radius && hn > 1e-12 {
                f -= h / hn * (g.g_c * (t.radius - hn));
            }
        }
        out[k] = f;
    }
    out
}

/// Moves every point but `p₀` to an equilibrium, adding or removing the last point near the target.
///
/// Growth stops at six times the straight-line point count plus 200.
pub fn relax3(path: &Path3, ctx: &Relax3Context, g: &FieldGains) -> (Path3, RelaxReport) {
    let mut p = path.clone();
    let mut vel = vec![Point3::zeros(); p.len()];
    let mut rep = RelaxReport::default();
    let l = p.spacing;
    let cap = path.len().max(((ctx.target - path.points[0]).norm() / l * 6.0) as usize + 200);
    for it in 0..=g.max_iters {
        rep.iterations = it;
        if p.len() < 2 {
            rep.converged = true;
            break;
        }
        let f = fields3(&p, ctx, g);
        rep.max_force = f[1..].iter().map(|v| v.norm()).fold(0.0, f64::max);
        if rep.max_force < g.f_th {
            rep.converged = true;
            break;
        }
        if it == g.max_iters {
            break;
        }
        for k in 1..p.len() {
            vel[k] = vel[k] * g.g_n + f[k] * g.step;
            p.points[k] += vel[k];
        }
        let last = p.last();
        let d = (last - ctx.target).norm();
        if d < g.l_under && p.len() > 2 {
            p.points.pop();
            vel.pop();
            rep.removed += 1;
        } else if d > g.l_over && p.len() < cap {
            p.points.push(last + (ctx.target - last) / d * l);
            vel.push(Point3::zeros());
            rep.added += 1;
        }
    }
    for (k, q) in p.points.iter().enumerate().skip(1) {
        if ctx.valid.probe(q, k).0 < 0.0 {
            rep.flags.inside = true;
        }
    }
    (p, rep)
}

/// Rough path from the roadmap, resampled at the path spacing.
pub fn rough_path<R: Rng>(
    prm_region: &RegionGrid3,
    params: &Prm3Params,
    state: &Vehicle3State,
    goal: Point3,
    rng: &mut R,
) -> Result<Path3> {
    params.validate()?;
    let samples = sample_free(prm_region, params.n_s, rng)?;
    let g = connect_prm(samples, params, prm_region, state, goal);
    let ids = shortest_prm_path(&g)?;
    let pts: Vec<Point3> = ids.iter().map(|&i| g.vertices[i]).collect();
    Ok(resample_equal(&pts, params.spacing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::GridSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn boxed(cell: f64, slab: bool) -> RegionGrid3 {
        let spec = GridSpec::new(Point3::zeros(), cell, [(10.0 / cell) as usize, (6.0 / cell) as usize, (4.0 / cell) as usize]).unwrap();
        RegionGrid3::from_fn(spec, |c| if slab && c.x > 4.5 && c.x < 5.5 && c.y < 4.0 { Cell::Occupied } else { Cell::Free })
    }

    #[test]
    fn samples_are_free_and_reproducible() {
        let r = boxed(0.5, true);
        let a = sample_free(&r, 100, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_free(&r, 100, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| r.is_free(p)));
    }

    #[test]
    fn initial_cone_rejects_side_edges() {
        let mut p = Prm3Params::new(0.2, 1.0, 0.5);
        assert!((p.initial_cone() - 0.2f64.asin()).abs() < 1e-15);
        p.n_c = 3;
        let r = boxed(0.5, false);
        let s = Vehicle3State::new(Point3::new(2.0, 3.0, 2.0), Point3::x());
        let samples = vec![Point3::new(2.0, 4.0, 2.0), Point3::new(3.0, 3.05, 2.0), Point3::new(8.0, 3.0, 2.0), Point3::new(9.0, 3.0, 2.0)];
        let g = connect_prm(samples, &p, &r, &s, Point3::new(9.5, 3.0, 2.0));
        let from_init: Vec<usize> = g.edges.iter().filter(|e| e.0 == g.init || e.1 == g.init).map(|e| if e.0 == g.init { e.1 } else { e.0 }).collect();
        assert!(from_init.contains(&1) && from_init.contains(&2) && !from_init.contains(&0));
    }

    #[test]
    fn slab_blocks_edges() {
        let r = boxed(0.25, true);
        let p = Prm3Params::new(0.5, 1.0, 0.5);
        let s = Vehicle3State::new(Point3::new(1.0, 1.0, 2.0), Point3::x());
        let samples = sample_free(&r, 200, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let g = connect_prm(samples, &p, &r, &s, Point3::new(9.0, 1.0, 2.0));
        for &(a, b, _) in &g.edges {
            let (pa, pb) = (g.vertices[a], g.vertices[b]);
            for i in 0..=200 {
                let q = pa + (pb - pa) * (i as f64 / 200.0);
                assert!(r.is_free(&q));
            }
        }
        let ids = shortest_prm_path(&g).unwrap();
        assert_eq!(ids[0], g.init);
        assert!(ids.iter().any(|&i| g.vertices[i].y > 4.0));
    }

    #[test]
    fn dijkstra_prefers_short_route() {
        let v = vec![Point3::zeros(); 4];
        let g = Prm3Graph::from_edges(v, vec![(0, 1, 2.0), (1, 3, 3.0), (0, 2, 3.0), (2, 3, 4.0)], 0, 3);
        assert_eq!(shortest_prm_path(&g).unwrap(), vec![0, 1, 3]);
        let single = Prm3Graph::from_edges(vec![Point3::zeros()], vec![], 0, 0);
        assert_eq!(shortest_prm_path(&single).unwrap(), vec![0]);
        let split = Prm3Graph::from_edges(vec![Point3::zeros(); 3], vec![(0, 1, 1.0)], 0, 2);
        assert!(shortest_prm_path(&split).is_err());
    }

    #[test]
    fn resampling_cases() {
        let l = 0.3;
        let p = resample_equal(&[Point3::zeros(), Point3::new(10.0 * l, 0.0, 0.0)], l);
        assert_eq!(p.len(), 11);
        for w in p.points.windows(2) {
            assert!(((w[1] - w[0]).norm() - l).abs() < 1e-9);
        }
        let short = resample_equal(&[Point3::zeros(), Point3::new(0.1, 0.0, 0.0)], l);
        assert_eq!(short.len(), 2);
    }

    #[test]
    fn valid_area_extends_paths() {
        let r = boxed(0.5, false);
        let sh = ShrinkParams { delta: 1.0, v_max: 0.0, window: 3, d_s: 0.5, r_r: 1.0 };
        assert_eq!(valid_area(&r, 2, &sh, &[]).unwrap().free_count(), r.free_count());
        let other = Path3 { points: vec![Point3::new(2.25, 2.25, 2.25), Point3::new(6.25, 2.25, 2.25)], spacing: 4.0 };
        let v = valid_area(&r, 9, &sh, &[other]).unwrap();
        assert!(!v.is_free(&Point3::new(6.25, 2.25, 2.25)));
        assert!(v.is_free(&Point3::new(2.25, 2.25, 2.25)));
        assert!(v.free_count() < r.free_count());
    }

    #[test]
    fn open_space_path_stays_put() {
        let r = boxed(0.25, false);
        let sh = ShrinkParams { delta: 0.3, v_max: 0.0, window: 3, d_s: 0.5, r_r: 0.3 };
        let va = ValidArea3::new(r, sh, vec![]);
        let l = 0.3;
        let mut g = FieldGains::for_spacing(l);
        g.g_p = 0.0;
        let pts: Vec<Point3> = (0..=10).map(|k| Point3::new(2.0 + k as f64 * l, 3.0, 2.0)).collect();
        let path = Path3 { points: pts, spacing: l };
        let target = path.last();
        let ctx = Relax3Context { valid: &va, target, torus: None, d_s: 0.5 };
        let (out, rep) = relax3(&path, &ctx, &g);
        assert!(rep.converged);
        assert_eq!(out.len(), path.len());
        for (a, b) in out.points.iter().zip(&path.points) {
            assert!((a - b).norm() < 0.01 * l);
        }
    }
}

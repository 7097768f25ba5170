//! Range sensing, sensor-network fusion and incremental occupancy mapping.

use std::f64::consts::{PI, TAU};

use nalgebra::Rotation3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::geom::{
    mark_balls, wrap_angle, Cell, GridSpec, LabelGrid, Point2, Point3, Pose2, RegionGrid2, RegionGrid3, World2,
    World3,
};

/// A planar range finder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorNode2D {
    pub pose: Pose2,
    pub range: f64,
    pub fov: f64,
    pub resolution: f64,
}

impl SensorNode2D {
    pub fn new(pose: Pose2, range: f64, fov: f64, resolution: f64) -> Result<Self> {
        if !(range > 0.0) || !(fov > 0.0 && fov <= TAU + 1e-12) || !(resolution > 0.0) {
            return Err(invalid("sensor needs positive range, fov in (0, 2π] and positive resolution"));
        }
        Ok(SensorNode2D { pose, range, fov, resolution })
    }

    fn full_circle(&self) -> bool {
        self.fov >= TAU - 1e-9
    }

    /// Ray angles in the sensor frame.
    pub fn ray_angles(&self) -> Vec<f64> {
        if self.full_circle() {
            let n = (TAU / self.resolution).round().max(1.0) as usize;
            (0..n).map(|j| wrap_angle(-PI + TAU * j as f64 / n as f64)).collect()
        } else {
            let n = (self.fov / self.resolution).round() as usize + 1;
            let step = self.fov / (n - 1).max(1) as f64;
            (0..n).map(|j| -self.fov / 2.0 + step * j as f64).collect()
        }
    }
}

/// One sweep of range readings; angles are relative to the sensor heading.
#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
    pub max_range: Vec<bool>,
    pub range_limit: f64,
}

impl Scan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Index and value of the shortest reading.
    pub fn min_reading(&self) -> Option<(usize, f64)> {
        self.ranges
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, r)| (i, *r))
    }

    /// Adds zero-mean Gaussian noise to the readings that hit something.
    pub fn add_noise<R: Rng>(&mut self, sigma: f64, rng: &mut R) {
        if sigma <= 0.0 {
            return;
        }
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        for (r, m) in self.ranges.iter_mut().zip(&self.max_range) {
            if !m {
                *r = (*r + n.sample(rng)).clamp(1e-6, self.range_limit);
            }
        }
    }
}

/// First-hit distances against the world at time `t`.
pub fn raycast_scan(world: &World2, t: f64, node: &SensorNode2D) -> Scan {
    let o = node.pose.position();
    let angles = node.ray_angles();
    let mut ranges = Vec::with_capacity(angles.len());
    let mut max_range = Vec::with_capacity(angles.len());
    for a in &angles {
        let th = node.pose.theta + a;
        let d = Point2::new(th.cos(), th.sin());
        let r = world.raycast(&o, &d, t);
        if r >= node.range {
            ranges.push(node.range);
            max_range.push(true);
        } else {
            ranges.push(r.max(1e-9));
            max_range.push(false);
        }
    }
    Scan { angles, ranges, max_range, range_limit: node.range }
}

/// Free set observed by one node: points closer than the readings on both neighbouring rays.
fn sector_free(node: &SensorNode2D, scan: &Scan, p: &Point2) -> bool {
    let rel = p - node.pose.position();
    let r = rel.norm();
    if r >= node.range {
        return false;
    }
    if r < 1e-12 {
        return true;
    }
    let phi = wrap_angle(rel.y.atan2(rel.x) - node.pose.theta);
    let n = scan.len();
    if n == 0 {
        return false;
    }
    let (j0, j1) = if node.full_circle() {
        let res = TAU / n as f64;
        let f = (phi + PI) / res;
        let j0 = (f.floor() as isize).rem_euclid(n as isize) as usize;
        (j0, (j0 + 1) % n)
    } else {
        if phi.abs() > node.fov / 2.0 + 1e-12 {
            return false;
        }
        if n == 1 {
            (0, 0)
        } else {
            let step = node.fov / (n - 1) as f64;
            let f = ((phi + node.fov / 2.0) / step).clamp(0.0, (n - 1) as f64);
            let j0 = (f.floor() as usize).min(n - 2);
            (j0, j0 + 1)
        }
    };
    r < scan.ranges[j0].min(scan.ranges[j1])
}

/// Unoccupied area: union of every node's observed-free sector minus the robot disks.
///
/// Unknown cells stay non-free.
pub fn fuse_unoccupied_area(
    observations: &[(SensorNode2D, Scan)],
    robots: &[Point2],
    r_r: f64,
    spec: &GridSpec<2>,
) -> RegionGrid2 {
    let mut labels = LabelGrid::filled(spec.clone(), Cell::Unknown);
    for (node, scan) in observations {
        let c = node.pose.position();
        let lo = spec.clamped_cell_of(&c.add_scalar(-node.range));
        let hi = spec.clamped_cell_of(&c.add_scalar(node.range));
        for iy in lo[1]..=hi[1] {
            for ix in lo[0]..=hi[0] {
                let idx = [ix, iy];
                if labels.get(idx) == Cell::Free {
                    continue;
                }
                if sector_free(node, scan, &spec.center(idx)) {
                    labels.set(idx, Cell::Free);
                }
            }
        }
    }
    mark_balls(&mut labels, robots, r_r, Cell::Occupied);
    RegionGrid2::new(labels)
}

/// Time-window shrinkage parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShrinkParams {
    pub delta: f64,
    pub v_max: f64,
    pub window: usize,
    pub d_s: f64,
    pub r_r: f64,
}

impl ShrinkParams {
    /// `min(k, T)·δ·V_max`.
    pub fn shrink_distance(&self, k: usize) -> f64 {
        k.min(self.window) as f64 * self.delta * self.v_max
    }

    /// Clearance threshold for the `k`-th path point: `d_s + min(k,T)·δ·V_max`.
    pub fn threshold(&self, k: usize) -> f64 {
        self.d_s + self.shrink_distance(k)
    }
}

/// `R[A, min(k,T)·δ·V_max]`.
pub fn shrink_for_time(a: &RegionGrid2, k: usize, p: &ShrinkParams) -> Result<RegionGrid2> {
    a.reduce(p.shrink_distance(k))
}

pub type OccGrid2D = LabelGrid<2>;
pub type VoxelMap3D = LabelGrid<3>;

/// Applies one observation to a cell under the monotone state machine.
///
/// Allowed: unknown→free, unknown→occupied, free→occupied. Returns whether the cell changed.
pub fn observe_cell<const D: usize>(grid: &mut LabelGrid<D>, idx: [usize; D], seen: Cell) -> bool {
    let cur = grid.get(idx);
    let next = match (cur, seen) {
        (Cell::Unknown, s) => s,
        (Cell::Free, Cell::Occupied) => Cell::Occupied,
        (c, _) => c,
    };
    if next != cur {
        grid.set(idx, next);
        true
    } else {
        false
    }
}

/// Illegal transitions between two snapshots of the same map.
pub fn illegal_transitions<const D: usize>(before: &LabelGrid<D>, after: &LabelGrid<D>) -> usize {
    before
        .cells
        .iter()
        .zip(&after.cells)
        .filter(|(a, b)| {
            !matches!(
                (a, b),
                (Cell::Unknown, _) | (Cell::Free, Cell::Free) | (Cell::Free, Cell::Occupied) | (Cell::Occupied, Cell::Occupied)
            )
        })
        .count()
}

/// Marks one ray: traversed cells free, the end cell occupied unless the ray hit nothing.
pub fn update_ray<const D: usize>(
    grid: &mut LabelGrid<D>,
    origin: &nalgebra::SVector<f64, D>,
    dir: &nalgebra::SVector<f64, D>,
    range: f64,
    hit: bool,
) {
    let spec = grid.spec.clone();
    let end = origin + dir * range;
    let cells = spec.traverse(origin, &end);
    let eps = dir * (spec.cell * 1e-6);
    // a return on the map border belongs to the last cell inside
    let end_cell = if hit { spec.cell_of(&(end + eps)).or_else(|| spec.cell_of(&(end - eps))) } else { None };
    for c in cells {
        if Some(c) == end_cell {
            continue;
        }
        observe_cell(grid, c, Cell::Free);
    }
    if let Some(c) = end_cell {
        observe_cell(grid, c, Cell::Occupied);
    }
}

/// Integrates a planar scan taken at `pose`.
pub fn grid_update_from_scan(grid: &mut OccGrid2D, pose: &Pose2, scan: &Scan) {
    let o = pose.position();
    for k in 0..scan.len() {
        let th = pose.theta + scan.angles[k];
        let d = Point2::new(th.cos(), th.sin());
        update_ray(grid, &o, &d, scan.ranges[k], !scan.max_range[k]);
    }
}

/// Known free cells sharing a face with an unknown cell.
pub fn frontier_cells<const D: usize>(grid: &LabelGrid<D>) -> Vec<usize> {
    let spec = &grid.spec;
    let touches_unknown = |idx: [usize; D]| {
        (0..D).any(|a| {
            let mut lo = idx;
            let mut hi = idx;
            let below = idx[a] > 0 && {
                lo[a] -= 1;
                grid.get(lo) == Cell::Unknown
            };
            let above = idx[a] + 1 < spec.dims[a] && {
                hi[a] += 1;
                grid.get(hi) == Cell::Unknown
            };
            below || above
        })
    };
    (0..spec.len()).filter(|&i| grid.cells[i] == Cell::Free && touches_unknown(spec.unindex(i))).collect()
}

/// The known region is bounded entirely by occupied cells.
pub fn map_complete<const D: usize>(grid: &LabelGrid<D>) -> bool {
    grid.cells.contains(&Cell::Free) && frontier_cells(grid).is_empty()
}

/// Time-of-flight camera. The optical axis is the body `x` axis, `y` points left, `z` up.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthCamera3D {
    pub position: Point3,
    pub orientation: Rotation3<f64>,
    pub fov_h: f64,
    pub fov_v: f64,
    pub width: usize,
    pub height: usize,
    pub max_range: f64,
}

impl DepthCamera3D {
    /// Camera at `position` looking along `forward` with the given roll-free orientation.
    pub fn looking(position: Point3, forward: Point3, fov_h: f64, fov_v: f64, width: usize, height: usize, max_range: f64) -> Self {
        let f = forward.normalize();
        let up_hint = if f.z.abs() > 0.99 { Point3::x() } else { Point3::z() };
        let left = up_hint.cross(&f).normalize();
        let up = f.cross(&left);
        let m = nalgebra::Matrix3::from_columns(&[f, left, up]);
        DepthCamera3D {
            position,
            orientation: Rotation3::from_matrix_unchecked(m),
            fov_h,
            fov_v,
            width,
            height,
            max_range,
        }
    }

    /// Camera-frame ray through the centre of pixel `(u, v)`, with unit forward component.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Point3 {
        let a = (self.fov_h / 2.0).tan() * (2.0 * (u as f64 + 0.5) / self.width as f64 - 1.0);
        let b = (self.fov_v / 2.0).tan() * (1.0 - 2.0 * (v as f64 + 0.5) / self.height as f64);
        Point3::new(1.0, -a, b)
    }

    /// Pixel whose footprint contains the camera-frame direction `q`.
    fn pixel_of(&self, q: &Point3) -> Option<(usize, usize)> {
        if q.x <= 0.0 {
            return None;
        }
        let a = -q.y / q.x / (self.fov_h / 2.0).tan();
        let b = q.z / q.x / (self.fov_v / 2.0).tan();
        if a.abs() > 1.0 || b.abs() > 1.0 {
            return None;
        }
        let u = (((a + 1.0) / 2.0) * self.width as f64).floor().min(self.width as f64 - 1.0) as usize;
        let v = (((1.0 - b) / 2.0) * self.height as f64).floor().min(self.height as f64 - 1.0) as usize;
        Some((u, v))
    }
}

/// Depth along the optical axis per pixel, row-major; `None` marks invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<Option<f64>>,
}

/// Renders a depth image; returns hitting `spheres` (other robots) are dropped.
pub fn render_depth(world: &World3, t: f64, cam: &DepthCamera3D, spheres: &[Point3], sphere_r: f64) -> (DepthImage, DepthImage) {
    let mut obstacle = Vec::with_capacity(cam.width * cam.height);
    let mut filtered = Vec::with_capacity(cam.width * cam.height);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let rc = cam.pixel_ray(u, v);
            let n = rc.norm();
            let dir = cam.orientation * (rc / n);
            let mut r = world.raycast(&cam.position, &dir, t);
            let mut robot = false;
            for s in spheres {
                let w = cam.position - s;
                let b = w.dot(&dir);
                let c = w.norm_squared() - sphere_r * sphere_r;
                let disc = b * b - c;
                if disc >= 0.0 {
                    let th = -b - disc.sqrt();
                    if th >= 0.0 && th < r {
                        r = th;
                        robot = true;
                    }
                }
            }
            let px = if r >= cam.max_range { None } else { Some(r / n) };
            if robot {
                obstacle.push(None);
                filtered.push(px);
            } else {
                obstacle.push(px);
                filtered.push(None);
            }
        }
    }
    (
        DepthImage { width: cam.width, height: cam.height, depth: obstacle },
        DepthImage { width: cam.width, height: cam.height, depth: filtered },
    )
}

/// Back-projects the valid pixels into world points.
pub fn depth_image_to_points(cam: &DepthCamera3D, img: &DepthImage) -> Result<Vec<Point3>> {
    if img.width != cam.width || img.height != cam.height || img.depth.len() != cam.width * cam.height {
        return Err(invalid(format!(
            "depth image is {}x{} but the camera has {}x{} pixels",
            img.width, img.height, cam.width, cam.height
        )));
    }
    let mut out = Vec::new();
    for v in 0..cam.height {
        for u in 0..cam.width {
            if let Some(d) = img.depth[v * cam.width + u] {
                if d * cam.pixel_ray(u, v).norm() < cam.max_range {
                    out.push(cam.position + cam.orientation * (cam.pixel_ray(u, v) * d));
                }
            }
        }
    }
    Ok(out)
}

/// One camera's observation: depth of obstacles and depth of filtered robot returns.
#[derive(Clone, Debug)]
pub struct CameraFrame {
    pub camera: DepthCamera3D,
    pub obstacles: DepthImage,
    pub robots: DepthImage,
}

fn frame_free_range(frame: &CameraFrame, u: usize, v: usize) -> f64 {
    let cam = &frame.camera;
    let i = v * cam.width + u;
    let n = cam.pixel_ray(u, v).norm();
    match (frame.obstacles.depth[i], frame.robots.depth[i]) {
        (Some(d), _) => d * n,
        (None, Some(d)) => d * n,
        (None, None) => cam.max_range,
    }
}

/// Detected free space: union of the cameras' carved frusta minus robot spheres.
pub fn fuse_free_space_3d(frames: &[CameraFrame], robots: &[Point3], r_r: f64, spec: &GridSpec<3>) -> RegionGrid3 {
    let mut labels = LabelGrid::filled(spec.clone(), Cell::Unknown);
    for frame in frames {
        let cam = &frame.camera;
        let inv = cam.orientation.inverse();
        let ranges: Vec<f64> = (0..cam.height)
            .flat_map(|v| (0..cam.width).map(move |u| (u, v)))
            .map(|(u, v)| frame_free_range(frame, u, v))
            .collect();
        let lo = spec.clamped_cell_of(&cam.position.add_scalar(-cam.max_range));
        let hi = spec.clamped_cell_of(&cam.position.add_scalar(cam.max_range));
        for iz in lo[2]..=hi[2] {
            for iy in lo[1]..=hi[1] {
                for ix in lo[0]..=hi[0] {
                    let idx = [ix, iy, iz];
                    let i = spec.index(idx);
                    if labels.cells[i] == Cell::Free {
                        continue;
                    }
                    let q = inv * (spec.center(idx) - cam.position);
                    let r = q.norm();
                    if r >= cam.max_range {
                        continue;
                    }
                    let Some((u, v)) = cam.pixel_of(&q) else { continue };
                    let mut bound = f64::INFINITY;
                    for dv in -1i64..=1 {
                        for du in -1i64..=1 {
                            let (uu, vv) = (u as i64 + du, v as i64 + dv);
                            if uu < 0 || vv < 0 || uu >= cam.width as i64 || vv >= cam.height as i64 {
                                continue;
                            }
                            bound = bound.min(ranges[vv as usize * cam.width + uu as usize]);
                        }
                    }
                    if r < bound {
                        labels.cells[i] = Cell::Free;
                    }
                }
            }
        }
    }
    mark_balls(&mut labels, robots, r_r, Cell::Occupied);
    RegionGrid3::new(labels)
}

/// Robot carrying a vertical scanner: planar pose plus sensor height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerticalScanner {
    pub height: f64,
    pub range: f64,
    pub resolution: f64,
}

impl VerticalScanner {
    /// Unit ray direction for scan angle `w ∈ [0, π]`, sweeping from the right through up to the left.
    pub fn direction(pose: &Pose2, w: f64) -> Point3 {
        let left = Point3::new(-pose.theta.sin(), pose.theta.cos(), 0.0);
        -left * w.cos() + Point3::z() * w.sin()
    }

    pub fn origin(&self, pose: &Pose2) -> Point3 {
        Point3::new(pose.x, pose.y, self.height)
    }

    pub fn scan(&self, world: &World3, t: f64, pose: &Pose2) -> Scan {
        let n = (PI / self.resolution).round() as usize + 1;
        let o = self.origin(pose);
        let mut angles = Vec::with_capacity(n);
        let mut ranges = Vec::with_capacity(n);
        let mut max_range = Vec::with_capacity(n);
        for j in 0..n {
            let w = PI * j as f64 / (n - 1) as f64;
            let d = Self::direction(pose, w);
            let r = world.raycast(&o, &d, t);
            angles.push(w);
            if r >= self.range {
                ranges.push(self.range);
                max_range.push(true);
            } else {
                ranges.push(r);
                max_range.push(false);
            }
        }
        Scan { angles, ranges, max_range, range_limit: self.range }
    }
}

/// Integrates a vertical scan into the voxel map.
pub fn voxel_update_vertical_scan(map: &mut VoxelMap3D, pose: &Pose2, scanner: &VerticalScanner, scan: &Scan) {
    let o = scanner.origin(pose);
    for k in 0..scan.len() {
        let d = VerticalScanner::direction(pose, scan.angles[k]);
        update_ray(map, &o, &d, scan.ranges[k], !scan.max_range[k]);
    }
}

//! Randomised safe exploration with complete map building.
//!
//! The robot circles, pursues tangent segments detected directly in its range scan and
//! follows obstacle boundaries at the safety margin; at each tangent met while following a
//! boundary it leaves with probability `q₀`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::geom::{cross2, perp, wrap_angle, Cell, GridSpec, LabelGrid, Point2, Pose2, World2, World3};
use crate::sensing::{
    grid_update_from_scan, map_complete, raycast_scan, voxel_update_vertical_scan, OccGrid2D, Scan, SensorNode2D,
    VerticalScanner, VoxelMap3D,
};
use crate::tracking::Switching;
use crate::vehicle::{step_unicycle, UnicycleParams};

/// How the robot estimates its own pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Odometry {
    Perfect,
    /// Straight-line dead reckoning per sampling interval.
    Plain,
    /// Accelerometer-aided estimate.
    Improved,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorerConfig {
    pub d0: f64,
    pub q0: f64,
    pub theta_trig: f64,
    pub d_trig: f64,
    pub pause: f64,
    pub v: f64,
    pub u_max: f64,
    /// Sampling interval of scans and control.
    pub sample: f64,
    /// Gain and saturation of the boundary-following term.
    pub sat_gain: f64,
    pub sat_limit: f64,
    pub scan_range: f64,
    pub scan_resolution: f64,
    pub cell: f64,
    pub step_cap: usize,
    pub seed: u64,
    pub switching: Switching,
    pub odometry: Odometry,
    pub range_noise: f64,
}

impl ExplorerConfig {
    /// Defaults built around a margin, speed and turn bound.
    pub fn new(d0: f64, v: f64, u_max: f64) -> Self {
        let sample = 0.25;
        ExplorerConfig {
            d0,
            q0: 0.5,
            theta_trig: 0.08,
            d_trig: 0.3,
            pause: 2.0 * sample,
            v,
            u_max,
            sample,
            sat_gain: 1.0,
            sat_limit: 0.5 * v,
            scan_range: 50.0,
            scan_resolution: 0.5f64.to_radians(),
            cell: 0.2,
            step_cap: 1_000_000,
            seed: 0,
            switching: Switching::Sign,
            odometry: Odometry::Perfect,
            range_noise: 0.0,
        }
    }

    pub fn r_min(&self) -> f64 {
        self.v / self.u_max
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) {
            return Err(invalid(format!("d0 must be positive, got {}", self.d0)));
        }
        if !(self.q0 > 0.0 && self.q0 < 1.0) {
            return Err(invalid(format!("q0 must lie in (0,1), got {}", self.q0)));
        }
        if !(self.v > 0.0 && self.u_max > 0.0) {
            return Err(invalid("v and u_max must be positive"));
        }
        if self.r_min() >= self.d0 {
            return Err(invalid(format!("v/u_max = {:.3} must be below d0 = {}", self.r_min(), self.d0)));
        }
        let pos = [self.theta_trig, self.d_trig, self.sample, self.sat_gain, self.sat_limit, self.scan_range, self.scan_resolution, self.cell];
        if pos.iter().any(|x| !(*x > 0.0)) || self.pause < 0.0 {
            return Err(invalid("thresholds, sampling interval, scanner and cell size must be positive"));
        }
        if self.scan_resolution > 1f64.to_radians() + 1e-12 {
            return Err(invalid("scan resolution must be 1 degree or finer"));
        }
        Ok(())
    }

    pub fn unicycle(&self) -> UnicycleParams {
        UnicycleParams { v: self.v, u_max: self.u_max }
    }

    pub fn scanner(&self, pose: Pose2) -> SensorNode2D {
        SensorNode2D { pose, range: self.scan_range, fov: std::f64::consts::TAU, resolution: self.scan_resolution }
    }
}

/// Approximate tangent segment in the robot frame, from the robot to `end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentSegment {
    pub start: Point2,
    pub end: Point2,
    /// `+1` when the obstacle lies left of the segment.
    pub side: i8,
}

impl TangentSegment {
    pub fn angle(&self) -> f64 {
        let d = self.end - self.start;
        d.y.atan2(d.x)
    }
}

fn segment_point_distance(a: &Point2, b: &Point2, p: &Point2) -> f64 {
    (crate::geom::closest_on_segment(a, b, p).0 - p).norm()
}

/// Tangent segments of the `d₀`-enlarged obstacles visible in the scan, in the robot frame.
pub fn detect_tangents_from_scan(scan: &Scan, d0: f64) -> Vec<TangentSegment> {
    let n = scan.len();
    if n < 2 {
        return Vec::new();
    }
    let step = if n > 1 { scan.angles[1] - scan.angles[0] } else { 0.0 };
    let full = scan.angles[n - 1] + step >= scan.angles[0] + std::f64::consts::TAU - 1e-6;
    let point = |i: usize| Point2::new(scan.angles[i].cos(), scan.angles[i].sin()) * scan.ranges[i];
    let hits: Vec<Point2> = (0..n).filter(|&i| !scan.max_range[i]).map(point).collect();
    let pairs = if full { n } else { n - 1 };
    let mut out = Vec::new();
    for i in 0..pairs {
        let j = (i + 1) % n;
        if (scan.ranges[i] - scan.ranges[j]).abs() <= 2.0 * d0 {
            continue;
        }
        // the gap lies towards larger angles when the nearer ray comes first
        let (near, towards) = if scan.ranges[i] < scan.ranges[j] { (i, 1.0) } else { (j, -1.0) };
        if scan.max_range[near] {
            continue;
        }
        let q = point(near);
        let psi = scan.ranges[near];
        if psi <= d0 {
            continue;
        }
        // tangent point of the d0-circle around q
        let beta = (d0 / psi).asin() * towards;
        let u = q / psi;
        let end = (u * beta.cos() + perp(&u) * beta.sin()) * (psi * psi - d0 * d0).sqrt();
        let origin = Point2::zeros();
        if hits.iter().any(|w| (w - q).norm() > 1e-12 && segment_point_distance(&origin, &end, w) < d0 - 1e-9) {
            continue;
        }
        let side = if cross2(&end, &q) > 0.0 { 1 } else { -1 };
        out.push(TangentSegment { start: origin, end, side });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    R1,
    R2,
    R3,
}

#[derive(Clone, Debug)]
pub struct ExplorerState {
    pub mode: Mode,
    /// Intermediate target (world frame) while pursuing a segment.
    pub target: Option<Point2>,
    /// Direction of the segment being pursued (world frame).
    pub heading_of_segment: Option<Point2>,
    pub gamma: i8,
    pub pause_until: f64,
    pub circle_sign: f64,
    pub last_dmin: Option<f64>,
    pub rng: ChaCha8Rng,
    pub draws: u64,
}

impl ExplorerState {
    /// Initial state; the seed parity picks the initial circle.
    pub fn new(seed: u64) -> Self {
        ExplorerState {
            mode: Mode::R1,
            target: None,
            heading_of_segment: None,
            gamma: 1,
            pause_until: f64::NEG_INFINITY,
            circle_sign: if seed % 2 == 0 { 1.0 } else { -1.0 },
            last_dmin: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }
}

/// Saturated linear function `X`.
pub fn saturate(r: f64, gain: f64, limit: f64) -> f64 {
    if r.abs() < limit {
        gain * r
    } else {
        gain * limit * r.signum()
    }
}

fn closest_hit(scan: &Scan) -> Option<Point2> {
    (0..scan.len())
        .filter(|&i| !scan.max_range[i])
        .min_by(|&a, &b| scan.ranges[a].total_cmp(&scan.ranges[b]))
        .map(|i| Point2::new(scan.angles[i].cos(), scan.angles[i].sin()) * scan.ranges[i])
}

/// One control decision at time `t`: mode transitions, then the turn rate of the active mode.
pub fn explorer_control(pose: &Pose2, scan: &Scan, state: &mut ExplorerState, cfg: &ExplorerConfig, t: f64) -> f64 {
    let aligned = || {
        detect_tangents_from_scan(scan, cfg.d0)
            .into_iter()
            .filter(|s| s.angle().abs() < cfg.theta_trig)
            .min_by(|a, b| a.angle().abs().total_cmp(&b.angle().abs()))
    };
    let engage = |state: &mut ExplorerState, seg: TangentSegment| {
        state.mode = Mode::R2;
        state.target = Some(pose.to_world(&seg.end));
        let d = seg.end - seg.start;
        let th = pose.theta + d.y.atan2(d.x);
        state.heading_of_segment = Some(Point2::new(th.cos(), th.sin()));
    };
    match state.mode {
        Mode::R1 => {
            if let Some(seg) = aligned() {
                engage(state, seg);
            }
        }
        Mode::R2 => {
            let pt = state.target.expect("target set in R2");
            let to = pt - pose.position();
            let passed = to.dot(&pose.heading()) < 0.0 && to.norm() < cfg.d0;
            if to.norm() < cfg.d_trig || passed {
                state.mode = Mode::R3;
                let dir = state.heading_of_segment.unwrap_or_else(|| pose.heading());
                state.gamma = match closest_hit(scan) {
                    Some(q) => {
                        let world = pose.to_world(&q) - pose.position();
                        if cross2(&dir, &world) >= 0.0 {
                            1
                        } else {
                            -1
                        }
                    }
                    None => 1,
                };
                state.target = None;
                state.heading_of_segment = None;
            }
        }
        Mode::R3 => {
            if t >= state.pause_until {
                if let Some(seg) = aligned() {
                    state.draws += 1;
                    if state.rng.random::<f64>() < cfg.q0 {
                        engage(state, seg);
                    } else {
                        state.pause_until = t + cfg.pause;
                    }
                }
            }
        }
    }
    if state.mode == Mode::R3 {
        // the nearest boundary can change hands; follow it on whichever side it lies
        if let Some(q) = closest_hit(scan) {
            let s = q.y / q.norm();
            if s.abs() > 0.5 {
                state.gamma = if s > 0.0 { 1 } else { -1 };
            }
        }
    }
    let dmin = scan.min_reading().map(|(_, r)| r).unwrap_or(cfg.scan_range);
    let ddot = state.last_dmin.map_or(0.0, |p| (dmin - p) / cfg.sample);
    state.last_dmin = Some(dmin);
    let sw = cfg.switching;
    match state.mode {
        Mode::R1 => state.circle_sign * cfg.u_max,
        Mode::R2 => pursuit(pose, &state.target.expect("target set in R2"), cfg),
        Mode::R3 => state.gamma as f64 * sw.apply(ddot + saturate(dmin - cfg.d0, cfg.sat_gain, cfg.sat_limit)) * cfg.u_max,
    }
}

/// Pure pursuit of a fixed point; needs only the pose estimate.
pub fn pursuit(pose: &Pose2, target: &Point2, cfg: &ExplorerConfig) -> f64 {
    let to = target - pose.position();
    let phi = wrap_angle(to.y.atan2(to.x) - pose.theta);
    cfg.switching.apply(phi) * cfg.u_max
}

/// Composite Simpson rule with `panels` (even) sub-intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(2) + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Estimated pose after one interval, and whether it fell back to plain dead reckoning.
///
/// `u` is the heading change over the interval divided by `dt`.
pub fn improved_odometry_step(prev: &Pose2, v: f64, u: f64, a: f64, dt: f64) -> Result<(Pose2, bool)> {
    if !(dt > 0.0) {
        return Err(invalid(format!("sampling interval must be positive, got {dt}")));
    }
    let th = prev.theta;
    if (a * dt).abs() >= v {
        let p = Pose2::new(prev.x + v * dt * th.cos(), prev.y + v * dt * th.sin(), wrap_angle(th + u * dt));
        return Ok((p, true));
    }
    let q = simpson(|t| (v * v - (a * t).powi(2)).sqrt(), 0.0, dt, 64);
    let lat = a * dt * dt / 2.0;
    let n = th + std::f64::consts::FRAC_PI_2;
    Ok((
        Pose2::new(prev.x + q * th.cos() + lat * n.cos(), prev.y + q * th.sin() + lat * n.sin(), wrap_angle(th + u * dt)),
        false,
    ))
}

/// One row of an exploration trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplorationSample {
    pub t: f64,
    pub pose: Pose2,
    pub estimate: Pose2,
    pub mode: Mode,
    pub clearance: f64,
}

#[derive(Clone, Debug)]
pub struct ExplorationResult {
    pub trace: Vec<ExplorationSample>,
    /// Worst ground-truth clearance within each step.
    pub step_clearance: Vec<f64>,
    pub grid: OccGrid2D,
    pub voxels: Option<VoxelMap3D>,
    pub t_f: Option<f64>,
    pub steps: usize,
    /// Ground-truth clearance, also sampled between control instants.
    pub min_clearance: f64,
    pub transitions: Vec<(f64, Mode, Mode)>,
    /// Cell updates rejected by the monotone state machine.
    pub illegal_updates: usize,
    pub branch_draws: u64,
}

impl ExplorationResult {
    pub fn completed(&self) -> bool {
        self.t_f.is_some()
    }

    /// Rows `t,x,y,theta,mode,min_clearance`.
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("t,x,y,theta,mode,min_clearance\n");
        for r in &self.trace {
            s.push_str(&format!(
                "{:.4},{:.6},{:.6},{:.6},{:?},{:.6}\n",
                r.t, r.pose.x, r.pose.y, r.pose.theta, r.mode, r.clearance
            ));
        }
        s
    }
}

const SUBSTEPS: usize = 5;

fn explore(
    world: &World2,
    start: Pose2,
    cfg: &ExplorerConfig,
    mut extra: impl FnMut(&Pose2, f64) -> (bool, usize),
) -> Result<ExplorationResult> {
    cfg.validate()?;
    let spec = GridSpec::covering(world.min, world.max, cfg.cell)?;
    let mut grid = LabelGrid::filled(spec, Cell::Unknown);
    let mut state = ExplorerState::new(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let params = cfg.unicycle();
    let mut pose = start;
    let mut est = start;
    let mut t = 0.0;
    let mut trace = Vec::new();
    let mut step_clearance = Vec::new();
    let mut transitions = Vec::new();
    let mut min_clearance = world.clearance(&pose.position(), 0.0);
    let mut illegal = 0usize;
    let mut t_f = None;
    let mut steps = 0;
    while steps < cfg.step_cap {
        let mut scan = raycast_scan(world, t, &cfg.scanner(pose));
        scan.add_noise(cfg.range_noise, &mut noise_rng);
        let before = grid.clone();
        grid_update_from_scan(&mut grid, &est, &scan);
        illegal += crate::sensing::illegal_transitions(&before, &grid);
        let (extra_done, extra_illegal) = extra(&est, t);
        illegal += extra_illegal;
        let clearance = world.clearance(&pose.position(), t);
        min_clearance = min_clearance.min(clearance);
        let prev_mode = state.mode;
        if map_complete(&grid) && extra_done {
            trace.push(ExplorationSample { t, pose, estimate: est, mode: state.mode, clearance });
            t_f = Some(t);
            break;
        }
        let u = explorer_control(&est, &scan, &mut state, cfg, t);
        if state.mode != prev_mode {
            transitions.push((t, prev_mode, state.mode));
        }
        trace.push(ExplorationSample { t, pose, estimate: est, mode: state.mode, clearance });
        // pursuit runs on odometry alone, so it is refreshed between scans
        let sub = cfg.sample / SUBSTEPS as f64;
        let mut p = pose;
        let mut worst = clearance;
        for j in 0..SUBSTEPS {
            let u_k = match state.target {
                Some(pt) if state.mode == Mode::R2 => pursuit(&est, &pt, cfg),
                _ => u,
            }
            .clamp(-cfg.u_max, cfg.u_max);
            p = step_unicycle(&p, &params, u_k, sub)?.state;
            worst = worst.min(world.clearance(&p.position(), t + (j + 1) as f64 * sub));
            est = match cfg.odometry {
                Odometry::Perfect => p,
                Odometry::Plain => Pose2::new(
                    est.x + cfg.v * sub * est.theta.cos(),
                    est.y + cfg.v * sub * est.theta.sin(),
                    wrap_angle(est.theta + u_k * sub),
                ),
                Odometry::Improved => improved_odometry_step(&est, cfg.v, u_k, cfg.v * u_k, sub)?.0,
            };
        }
        min_clearance = min_clearance.min(worst);
        step_clearance.push(worst);
        pose = p;
        t += cfg.sample;
        steps += 1;
    }
    Ok(ExplorationResult {
        trace,
        step_clearance,
        grid,
        voxels: None,
        t_f,
        steps,
        min_clearance,
        transitions,
        illegal_updates: illegal,
        branch_draws: state.draws,
    })
}

/// Planar exploration until the occupancy grid is complete or the step cap runs out.
pub fn run_exploration(world: &World2, start: Pose2, cfg: &ExplorerConfig) -> Result<ExplorationResult> {
    explore(world, start, cfg, |_, _| (true, 0))
}

/// Exploration with an extra vertical scanner building a voxel map above scanner height.
///
/// `ground` is the planar slice the horizontal scanner sees; navigation uses it alone.
pub fn run_exploration_3d(
    ground: &World2,
    world3: &World3,
    scanner: &VerticalScanner,
    voxel_cell: f64,
    start: Pose2,
    cfg: &ExplorerConfig,
) -> Result<ExplorationResult> {
    let lo = crate::geom::Point3::new(world3.min.x, world3.min.y, scanner.height);
    let spec = GridSpec::covering(lo, world3.max, voxel_cell)?;
    let map = std::cell::RefCell::new(LabelGrid::filled(spec, Cell::Unknown));
    let res = explore(
        ground,
        start,
        cfg,
        |pose, t| {
            let scan = scanner.scan(world3, t, pose);
            let mut m = map.borrow_mut();
            let before = m.clone();
            voxel_update_vertical_scan(&mut m, pose, scanner, &scan);
            let bad = crate::sensing::illegal_transitions(&before, &m);
            (map_complete(&m), bad)
        },
    )?;
    Ok(ExplorationResult { voxels: Some(map.into_inner()), ..res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Obstacle2, Shape2};

    fn scan_of(world: &World2, pose: Pose2, cfg: &ExplorerConfig) -> Scan {
        raycast_scan(world, 0.0, &cfg.scanner(pose))
    }

    #[test]
    fn one_box_corner_gives_one_tangent() {
        let cfg = ExplorerConfig::new(1.0, 0.5, 1.0);
        let world = World2::new(Point2::new(-20.0, -20.0), Point2::new(20.0, 20.0))
            .with(Obstacle2::fixed(Shape2::rect(Point2::new(5.0, 0.0), Point2::new(7.0, 30.0))));
        let scan = scan_of(&world, Pose2::new(0.0, 0.0, 0.0), &cfg);
        let segs = detect_tangents_from_scan(&scan, cfg.d0);
        assert_eq!(segs.len(), 1, "{segs:?}");
        let s = segs[0];
        // corner at (5,0) seen from the origin; the segment end sits d0 off the corner, below it
        let q = Point2::new(5.0, 0.0);
        assert!(((s.end - q).norm() - 1.0).abs() < 0.05, "{:?}", s.end);
        assert!(s.end.y < 0.0);
        assert_eq!(s.side, 1);
    }

    #[test]
    fn smooth_wall_has_no_tangent() {
        let cfg = ExplorerConfig::new(1.0, 0.5, 1.0);
        let world = World2::new(Point2::new(-5.0, -5.0), Point2::new(5.0, 5.0));
        let scan = scan_of(&world, Pose2::new(0.3, -0.2, 0.4), &cfg);
        assert!(detect_tangents_from_scan(&scan, cfg.d0).is_empty());
    }

    #[test]
    fn crowded_tangent_is_filtered() {
        let cfg = ExplorerConfig::new(1.0, 0.5, 1.0);
        let lone = World2::new(Point2::new(-20.0, -20.0), Point2::new(20.0, 20.0))
            .with(Obstacle2::fixed(Shape2::Disk { center: Point2::new(8.0, 2.0), radius: 1.0 }));
        let scan = scan_of(&lone, Pose2::new(0.0, 0.0, 0.0), &cfg);
        let free = detect_tangents_from_scan(&scan, cfg.d0);
        let lower = free.iter().find(|s| s.end.y < 1.0).copied().expect("lower tangent of the disk");
        // a small post close to that segment invalidates it
        let mid = lower.end * 0.5 + perp(&lower.end.normalize()) * -0.8;
        let crowded = lone.clone().with(Obstacle2::fixed(Shape2::Disk { center: mid, radius: 0.1 }));
        let scan2 = scan_of(&crowded, Pose2::new(0.0, 0.0, 0.0), &cfg);
        let after = detect_tangents_from_scan(&scan2, cfg.d0);
        assert!(after.iter().all(|s| (s.end - lower.end).norm() > 0.2), "{after:?}");
    }

    #[test]
    fn branch_declined_sets_pause() {
        let mut cfg = ExplorerConfig::new(1.0, 0.5, 1.0);
        cfg.q0 = 0.6;
        let world = World2::new(Point2::new(-20.0, -20.0), Point2::new(20.0, 20.0))
            .with(Obstacle2::fixed(Shape2::rect(Point2::new(5.0, 0.0), Point2::new(7.0, 30.0))));
        let pose = Pose2::new(0.0, 0.0, -0.2);
        let scan = scan_of(&world, pose, &cfg);
        let seg = detect_tangents_from_scan(&scan, cfg.d0)[0];
        let aligned = Pose2::new(0.0, 0.0, pose.theta + seg.angle());
        let scan = scan_of(&world, aligned, &cfg);
        // find a seed whose first draw exceeds q0
        let seed = (0u64..).find(|s| ChaCha8Rng::seed_from_u64(*s).random::<f64>() >= 0.9).unwrap();
        let mut st = ExplorerState::new(seed);
        st.mode = Mode::R3;
        explorer_control(&aligned, &scan, &mut st, &cfg, 3.0);
        assert_eq!(st.mode, Mode::R3);
        assert!((st.pause_until - (3.0 + cfg.pause)).abs() < 1e-12);
        let mut st1 = ExplorerState::new(seed);
        explorer_control(&aligned, &scan, &mut st1, &cfg, 0.0);
        assert_eq!(st1.mode, Mode::R2);
        assert!(st1.target.is_some());
    }

    #[test]
    fn reaching_target_switches_to_following() {
        let cfg = ExplorerConfig::new(1.0, 0.5, 1.0);
        let world = World2::new(Point2::new(-20.0, -20.0), Point2::new(20.0, 20.0))
            .with(Obstacle2::fixed(Shape2::rect(Point2::new(0.0, 1.0), Point2::new(4.0, 3.0))));
        let pose = Pose2::new(1.0, 0.0, 0.0);
        let scan = scan_of(&world, pose, &cfg);
        let mut st = ExplorerState::new(0);
        st.mode = Mode::R2;
        st.target = Some(Point2::new(1.1, 0.0));
        st.heading_of_segment = Some(Point2::x());
        explorer_control(&pose, &scan, &mut st, &cfg, 0.0);
        assert_eq!(st.mode, Mode::R3);
        assert_eq!(st.gamma, 1);
    }

    #[test]
    fn odometry_cases() {
        let p = Pose2::new(1.0, 2.0, 0.3);
        let (q, fb) = improved_odometry_step(&p, 1.0, 0.0, 0.0, 0.5).unwrap();
        assert!(!fb);
        assert!((q.x - (1.0 + 0.5 * 0.3f64.cos())).abs() < 1e-12 && (q.y - (2.0 + 0.5 * 0.3f64.sin())).abs() < 1e-12);
        let f = |t: f64| (1.0 - 0.25 * t * t).sqrt();
        assert!((simpson(f, 0.0, 0.2, 64) - simpson(f, 0.0, 0.2, 128)).abs() < 1e-10);
        let half = improved_odometry_step(&improved_odometry_step(&p, 1.0, 0.0, 0.0, 0.25).unwrap().0, 1.0, 0.0, 0.0, 0.25).unwrap().0;
        assert!((half.position() - q.position()).norm() < 1e-6);
        assert!(improved_odometry_step(&p, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(improved_odometry_step(&p, 0.1, 0.0, 5.0, 0.5).unwrap().1);
    }

    #[test]
    fn empty_room_completes_after_one_turn() {
        let mut cfg = ExplorerConfig::new(1.0, 0.5, 1.0);
        cfg.step_cap = 2000;
        let world = World2::new(Point2::new(0.0, 0.0), Point2::new(8.0, 8.0));
        let res = run_exploration(&world, Pose2::new(4.0, 4.0, 0.0), &cfg).unwrap();
        assert!(res.completed(), "steps {}", res.steps);
        let turn = std::f64::consts::TAU / cfg.u_max;
        assert!(res.t_f.unwrap() <= turn + cfg.sample);
        assert!(res.transitions.is_empty());
        assert_eq!(res.illegal_updates, 0);
    }

    fn pillar_room() -> (World2, World3) {
        let ground = World2::new(Point2::new(0.0, 0.0), Point2::new(14.0, 14.0))
            .with(Obstacle2::fixed(Shape2::rect(Point2::new(5.0, 5.0), Point2::new(8.0, 8.0))));
        let world3 = World3::new(crate::geom::Point3::zeros(), crate::geom::Point3::new(14.0, 14.0, 4.0)).with(
            crate::geom::Obstacle3::fixed(crate::geom::Shape3::Cuboid {
                min: crate::geom::Point3::new(5.0, 5.0, 0.0),
                max: crate::geom::Point3::new(8.0, 8.0, 4.0),
            }),
        );
        (ground, world3)
    }

    #[test]
    fn same_seed_same_run() {
        let (ground, _) = pillar_room();
        let mut cfg = ExplorerConfig::new(1.7, 1.0, 1.4);
        cfg.seed = 7;
        let a = run_exploration(&ground, Pose2::new(2.5, 11.0, 0.0), &cfg).unwrap();
        let b = run_exploration(&ground, Pose2::new(2.5, 11.0, 0.0), &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.grid, b.grid);
    }

    #[test]
    fn pillar_room_voxels_complete() {
        let (ground, world3) = pillar_room();
        let scanner = VerticalScanner { height: 0.3, range: 50.0, resolution: 1f64.to_radians() };
        let mut cfg = ExplorerConfig::new(1.7, 1.0, 1.4);
        cfg.step_cap = 4000;
        let start = Pose2::new(2.5, 11.0, 0.0);
        let r3 = run_exploration_3d(&ground, &world3, &scanner, 0.5, start, &cfg).unwrap();
        let r2 = run_exploration(&ground, start, &cfg).unwrap();
        assert!(r3.completed() && r2.completed());
        assert!(map_complete(r3.voxels.as_ref().unwrap()));
        assert!(r3.trace.iter().zip(&r2.trace).all(|(a, b)| a.pose == b.pose));
        assert!(r3.min_clearance >= cfg.d0 - cfg.cell);
        assert_eq!(r3.illegal_updates, 0);
    }
}

//! Closed-loop orchestration for every mode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::apf::{
    clearance_slack, estimate_obstacle_velocity, homotopy_search, FieldGains, GridEnvironment, PlanProblem,
    PredictedWorld, SearchParams, Threshold,
};
use crate::error::Result;
use crate::explorer::{run_exploration, run_exploration_3d, ExplorationResult, Mode as ExploreMode};
use crate::geom::{LabelGrid, Point2, Point3, Pose2, RegionGrid2, Shape2, World2};
use crate::prm3::{relax3, rough_path, Path3, Prm3Params, Relax3Context, ValidArea3};
use crate::sensing::{fuse_free_space_3d, fuse_unoccupied_area, raycast_scan, render_depth, CameraFrame};
use crate::tangent_graph::{build_graph, extract_boundary_curves, generate_candidates, select_candidate, SelectParams};
use crate::tracking::{Gains2D, Gains3D, PathTracker2, PathTracker3};
use crate::vehicle::{InitialTorus, UnicycleParams, Vehicle3State};

use super::scenario::{Mode, Scenario};

/// One recorded robot state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackSample {
    pub t: f64,
    pub position: Point3,
    /// Unit heading; planar runs keep `z = 0`.
    pub heading: Point3,
    pub clearance: f64,
    pub tag: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub mode: Mode,
    pub seed: u64,
    pub reached: bool,
    /// Distance travelled, summed over robots.
    pub path_length: f64,
    pub min_clearance: f64,
    pub completion_time: Option<f64>,
    /// Worst ground-truth clearance within each step.
    pub clearance_trace: Vec<f64>,
    pub step_time: f64,
    pub steps: usize,
    pub timeout: bool,
    pub failure: Option<String>,
    pub extra: Vec<(String, f64)>,
}

impl RunMetrics {
    fn new(s: &Scenario, step_time: f64) -> Self {
        RunMetrics {
            mode: s.mode,
            seed: s.seed,
            reached: false,
            path_length: 0.0,
            min_clearance: f64::INFINITY,
            completion_time: None,
            clearance_trace: Vec::new(),
            step_time,
            steps: 0,
            timeout: false,
            failure: None,
            extra: Vec::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    fn set(&mut self, key: &str, v: f64) {
        match self.extra.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.extra.push((key.to_string(), v)),
        }
    }

    fn push_step(&mut self, worst: f64) {
        self.clearance_trace.push(worst);
        self.min_clearance = self.min_clearance.min(worst);
        self.steps += 1;
    }
}

/// Everything a run leaves behind besides its metrics.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub tracks: Vec<Vec<TrackSample>>,
    pub map: Option<LabelGrid<2>>,
    pub voxels: Option<LabelGrid<3>>,
    /// Obstacle outlines at `t = 0`, projected to the plane.
    pub outlines: Vec<Vec<Point2>>,
    pub bounds: (Point2, Point2),
    pub targets: Vec<Point2>,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub artifacts: Artifacts,
}

fn outline(shape: &Shape2) -> Vec<Point2> {
    match shape {
        Shape2::Polygon(p) => p.clone(),
        Shape2::Disk { center, radius } => (0..48)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 48.0;
                center + Point2::new(a.cos(), a.sin()) * *radius
            })
            .collect(),
    }
}

fn artifacts_for(s: &Scenario) -> Artifacts {
    let w = s.world2();
    Artifacts {
        tracks: vec![Vec::new(); s.robots.len()],
        map: None,
        voxels: None,
        outlines: w.obstacles.iter().map(|o| outline(&o.shape)).collect(),
        bounds: (w.min, w.max),
        targets: s.robots.iter().filter(|r| r.target.is_some()).map(|r| r.target2()).collect(),
        margin: s.margin(),
    }
}

fn sample2(t: f64, p: &Pose2, clearance: f64) -> TrackSample {
    TrackSample {
        t,
        position: Point3::new(p.x, p.y, 0.0),
        heading: Point3::new(p.theta.cos(), p.theta.sin(), 0.0),
        clearance,
        tag: "",
    }
}

/// Runs a validated scenario to completion, timeout or planner failure.
///
/// Planner failures are reported through [`RunMetrics::failure`] together with
/// the artifacts gathered so far.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput> {
    match s.mode {
        Mode::Plan2d => run_plan2d(s),
        Mode::Navigate2d => run_navigate2d(s),
        Mode::Navigate3d => run_navigate3d(s),
        Mode::Explore2d | Mode::Explore3d => run_explore(s),
    }
}

/// Advances a planar robot along `path` for one interval and records it.
fn track_interval(
    tracker: &mut PathTracker2,
    pose: &mut Pose2,
    params: &UnicycleParams,
    path: &[Point2],
    s: &Scenario,
    world: &World2,
    t: f64,
    track: &mut Vec<TrackSample>,
    m: &mut RunMetrics,
) -> f64 {
    let dt = s.planner.substep;
    let states = tracker.track_step(pose, params, path, s.planner.delta, dt);
    let h = s.planner.delta / states.len().max(1) as f64;
    let mut worst = f64::INFINITY;
    let mut prev = pose.position();
    for (j, st) in states.iter().enumerate() {
        let tj = t + (j + 1) as f64 * h;
        let c = world.clearance(&st.position(), tj);
        worst = worst.min(c);
        m.path_length += (st.position() - prev).norm();
        prev = st.position();
        track.push(sample2(tj, st, c));
    }
    if let Some(last) = states.last() {
        *pose = *last;
    }
    worst
}

fn run_plan2d(s: &Scenario) -> Result<RunOutput> {
    let world = s.world2();
    let robot = &s.robots[0];
    let params = UnicycleParams::new(robot.v, robot.u_max)?;
    let delta = s.planner.delta;
    let d_s = s.planner.d_s;
    let cell = s.cell();
    let mut m = RunMetrics::new(s, delta);
    let mut art = artifacts_for(s);
    let spec = world.spec(cell);
    art.map = Some(world.rasterize(0.0, &spec).into_labels());

    // velocities come from two snapshots of each obstacle, as a sensor would give them
    let mut predicted = world.clone();
    let mut worst_residual: f64 = 0.0;
    for o in predicted.obstacles.iter_mut() {
        let lone = World2::new(world.min, world.max).with(o.clone());
        let a = lone.rasterize(0.0, &spec).into_labels();
        let b = lone.rasterize(delta, &spec).into_labels();
        let est = estimate_obstacle_velocity(&a, &b, delta, 0.1)?;
        worst_residual = worst_residual.max(est.residual);
        o.velocity = est.velocity;
    }
    m.set("velocity_residual", worst_residual);
    let pw = PredictedWorld::new(predicted, delta);
    let mut problem = PlanProblem::new(robot.pose2(), robot.target2(), pw.clone(), d_s, s.spacing());
    if let Some(n) = s.planner.relax_iters {
        problem.gains.max_iters = n;
    }
    let search = SearchParams { max_candidates: s.planner.max_candidates, complete_all: !s.planner.fast };
    let result = match homotopy_search(&problem, &search) {
        Ok(r) => r,
        Err(e) => {
            m.failure = Some(e.to_string());
            return Ok(RunOutput { metrics: m, artifacts: art });
        }
    };
    let path = result.best_path().clone();
    m.set("candidates", result.candidates.len() as f64);
    m.set("plan_points", path.len() as f64);
    m.set("plan_length", path.length());
    // per-index clearance against the obstacle positions the planner predicted
    let slack = clearance_slack(&path, &pw, Threshold::Fixed(d_s));
    m.set("plan_clearance", slack + d_s);
    let truth = PredictedWorld::new(world.clone(), delta);
    m.set("plan_true_clearance", clearance_slack(&path, &truth, Threshold::Fixed(d_s)) + d_s);

    let mut tracker = PathTracker2::new(Gains2D::default(), s.switching());
    let mut pose = robot.pose2();
    let mut t = 0.0;
    art.tracks[0].push(sample2(0.0, &pose, world.clearance(&pose.position(), 0.0)));
    let target = robot.target2();
    while m.steps < s.step_cap {
        let worst = track_interval(&mut tracker, &mut pose, &params, &path.points, s, &world, t, &mut art.tracks[0], &mut m);
        t += delta;
        m.push_step(worst);
        if (pose.position() - target).norm() < s.reach() {
            m.reached = true;
            m.completion_time = Some(t);
            break;
        }
    }
    m.timeout = !m.reached;
    Ok(RunOutput { metrics: m, artifacts: art })
}

fn run_navigate2d(s: &Scenario) -> Result<RunOutput> {
    let world = s.world2();
    let robot = &s.robots[0];
    let params = UnicycleParams::new(robot.v, robot.u_max)?;
    let delta = s.planner.delta;
    let cell = s.cell();
    let spacing = s.spacing();
    let shrink = s.shrink();
    let spec = world.spec(cell);
    let nodes = s.sensor_nodes();
    let mut gains = FieldGains::for_spacing(spacing);
    if let Some(n) = s.planner.relax_iters {
        gains.max_iters = n;
    }
    let select = SelectParams { shrink, gains, r_min: robot.r_min(), spacing, fast: s.planner.fast };
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut m = RunMetrics::new(s, delta);
    let mut art = artifacts_for(s);
    let mut tracker = PathTracker2::new(Gains2D::default(), s.switching());
    let mut pose = robot.pose2();
    let target = robot.target2();
    let mut t = 0.0;
    let mut previous: Option<Vec<Point2>> = None;
    let (mut unsafe_points, mut prefix_violations, mut fallbacks) = (0usize, 0usize, 0usize);
    let mut worst_plan_slack = f64::INFINITY;
    art.tracks[0].push(sample2(0.0, &pose, world.clearance(&pose.position(), 0.0)));
    while m.steps < s.step_cap {
        let obs: Vec<_> = nodes
            .iter()
            .map(|n| {
                let mut scan = raycast_scan(&world, t, n);
                scan.add_noise(s.planner.noise, &mut rng);
                (n.clone(), scan)
            })
            .collect();
        let area = fuse_unoccupied_area(&obs, &[], s.planner.r_r, &spec);
        let planned = plan_on_area(&area, pose, target, &select);
        let path = match planned {
            Some(p) => p,
            None => match previous.as_ref().and_then(|p| remaining(p, &pose, spacing)) {
                Some(p) => {
                    fallbacks += 1;
                    p
                }
                None => {
                    m.failure = Some(format!("no safe path at t = {t}"));
                    break;
                }
            },
        };
        for (k, q) in path.iter().enumerate().take(shrink.window + 1) {
            let slack = area.distance(q) - shrink.threshold(k);
            worst_plan_slack = worst_plan_slack.min(slack);
            if slack < -cell {
                unsafe_points += 1;
            }
        }
        tracker.new_path();
        let first = art.tracks[0].len();
        let worst = track_interval(&mut tracker, &mut pose, &params, &path, s, &world, t, &mut art.tracks[0], &mut m);
        let reduced = s.planner.d_s - cell;
        prefix_violations += art.tracks[0][first..].iter().filter(|x| area.distance(&x.position.xy()) < reduced).count();
        t += delta;
        m.push_step(worst);
        art.map = Some(area.into_labels());
        previous = Some(path);
        if (pose.position() - target).norm() < s.reach() {
            m.reached = true;
            m.completion_time = Some(t);
            break;
        }
    }
    m.timeout = !m.reached && m.failure.is_none();
    m.set("unsafe_plan_points", unsafe_points as f64);
    m.set("prefix_violations", prefix_violations as f64);
    m.set("fallback_steps", fallbacks as f64);
    m.set("plan_slack", worst_plan_slack);
    Ok(RunOutput { metrics: m, artifacts: art })
}

/// Graph search and relaxation on one fused area.
fn plan_on_area(area: &RegionGrid2, pose: Pose2, target: Point2, p: &SelectParams) -> Option<Vec<Point2>> {
    let reduced = area.reduce(p.shrink.d_s).ok()?;
    let curves = extract_boundary_curves(&reduced, Some(pose.position()), area.cell_size() / 2.0).ok()?;
    let graph = build_graph(curves, &reduced, pose, target, p.r_min);
    let cands = generate_candidates(&graph, 64);
    let env = GridEnvironment::new(area.clone());
    select_candidate(&cands, &env, pose, target, p).ok().map(|s| s.path.points)
}

/// The unconsumed part of an earlier path, starting from the robot.
fn remaining(path: &[Point2], pose: &Pose2, spacing: f64) -> Option<Vec<Point2>> {
    let (k, _) = path
        .iter()
        .enumerate()
        .map(|(k, q)| (k, (q - pose.position()).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let rest: Vec<Point2> = std::iter::once(pose.position()).chain(path[k + 1..].iter().copied()).collect();
    (rest.len() >= 2 && (rest[1] - rest[0]).norm() < 2.0 * spacing).then_some(rest)
}

fn run_navigate3d(s: &Scenario) -> Result<RunOutput> {
    let world = s.world3();
    let delta = s.planner.delta;
    let d_s = s.planner.d_s;
    let r_r = s.planner.r_r;
    let cell = s.cell();
    let spec = world.spec(cell);
    let cams = s.depth_cameras();
    let shrink = s.shrink();
    let n = s.robots.len();
    let spacing = s.spacing();
    let mut gains = FieldGains::for_spacing(spacing);
    gains.max_iters = s.planner.relax_iters.unwrap_or(1500);
    let mut m = RunMetrics::new(s, delta);
    let mut art = artifacts_for(s);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut states: Vec<Vehicle3State> = s.robots.iter().map(|r| r.state3()).collect();
    let targets: Vec<Point3> = s.robots.iter().map(|r| r.target3()).collect();
    let mut trackers: Vec<PathTracker3> = (0..n).map(|_| PathTracker3::new(Gains3D::default(), s.switching())).collect();
    let mut paths: Vec<Path3> = Vec::new();
    let mut done = vec![false; n];
    let mut unsafe_points = 0usize;
    let mut min_sep = f64::INFINITY;
    let mut t = 0.0;
    let record = |t: f64, st: &Vehicle3State, c: f64| TrackSample { t, position: st.s, heading: st.i, clearance: c, tag: "" };
    for (i, st) in states.iter().enumerate() {
        art.tracks[i].push(record(0.0, st, world.clearance(&st.s, 0.0)));
    }
    let mut last_area = None;
    'outer: while m.steps < s.step_cap {
        let frames: Vec<CameraFrame> = cams
            .iter()
            .map(|c| {
                let (obstacles, robots) = render_depth(&world, t, c, &[], r_r);
                CameraFrame { camera: c.clone(), obstacles, robots }
            })
            .collect();
        let base = fuse_free_space_3d(&frames, &[], r_r, &spec);
        if paths.is_empty() {
            // rough paths for everybody before any relaxation sees the others
            let region = base.reduce(d_s + shrink.shrink_distance(shrink.window))?;
            for (i, r) in s.robots.iter().enumerate() {
                let mut prm = Prm3Params::new(spacing, r.u_max, r.v);
                prm.n_s = s.planner.n_s;
                prm.n_c = s.planner.n_c;
                match rough_path(&region, &prm, &states[i], targets[i], &mut rng) {
                    Ok(p) => paths.push(p),
                    Err(e) => {
                        m.failure = Some(format!("robot {i}: {e}"));
                        break 'outer;
                    }
                }
            }
        } else {
            for i in 0..n {
                if done[i] {
                    continue;
                }
                let mut pts: Vec<Point3> = paths[i].points.iter().skip(1).copied().collect();
                if pts.is_empty() {
                    pts.push(targets[i]);
                }
                pts[0] = states[i].s;
                if pts.len() < 2 {
                    pts.push(targets[i]);
                }
                paths[i] = Path3 { points: pts, spacing };
            }
        }
        for i in 0..n {
            if done[i] {
                continue;
            }
            let others: Vec<Path3> = (0..n)
                .filter(|&j| j != i)
                .map(|j| if done[j] { Path3 { points: vec![states[j].s], spacing } } else { paths[j].clone() })
                .collect();
            let valid = ValidArea3::new(base.clone(), shrink, others);
            let r = &s.robots[i];
            let ctx = Relax3Context { valid: &valid, target: targets[i], torus: Some(InitialTorus::new(&states[i], r.r_min())), d_s };
            let (p, _) = relax3(&paths[i], &ctx, &gains);
            for k in 1..p.len().min(shrink.window + 1) {
                if valid.probe(&p.points[k], k).0 < d_s - cell {
                    unsafe_points += 1;
                }
            }
            paths[i] = p;
        }
        let mut worst = f64::INFINITY;
        let mut runs: Vec<Vec<Vehicle3State>> = vec![Vec::new(); n];
        for i in 0..n {
            if done[i] {
                continue;
            }
            let r = &s.robots[i];
            trackers[i].new_path();
            runs[i] = trackers[i].track_step(&states[i], r.v, r.u_max, &paths[i].points, delta, s.planner.substep);
        }
        let substeps = runs.iter().map(|r| r.len()).max().unwrap_or(0);
        let h = delta / substeps.max(1) as f64;
        for j in 0..substeps {
            let tj = t + (j + 1) as f64 * h;
            let now: Vec<Point3> = (0..n).map(|i| runs[i].get(j).map_or(states[i].s, |x| x.s)).collect();
            for a in 0..n {
                for b in a + 1..n {
                    min_sep = min_sep.min((now[a] - now[b]).norm());
                }
            }
            for i in 0..n {
                if let Some(st) = runs[i].get(j) {
                    let c = world.clearance(&st.s, tj);
                    worst = worst.min(c);
                    let prev = art.tracks[i].last().map_or(st.s, |x| x.position);
                    m.path_length += (st.s - prev).norm();
                    art.tracks[i].push(record(tj, st, c));
                }
            }
        }
        for i in 0..n {
            if let Some(last) = runs[i].last() {
                states[i] = *last;
            }
            if !done[i] && (states[i].s - targets[i]).norm() < s.reach() {
                done[i] = true;
            }
        }
        t += delta;
        m.push_step(if worst.is_finite() { worst } else { m.min_clearance });
        last_area = Some(base);
        if done.iter().all(|d| *d) {
            m.reached = true;
            m.completion_time = Some(t);
            break;
        }
    }
    if n == 1 {
        min_sep = f64::INFINITY;
    }
    m.timeout = !m.reached && m.failure.is_none();
    m.set("unsafe_plan_points", unsafe_points as f64);
    m.set("min_separation", min_sep);
    m.set("robots_reached", done.iter().filter(|d| **d).count() as f64);
    art.voxels = last_area.map(|a| a.into_labels());
    Ok(RunOutput { metrics: m, artifacts: art })
}

fn run_explore(s: &Scenario) -> Result<RunOutput> {
    let ground = s.world2();
    let cfg = s.explorer_config();
    let start = s.robots[0].pose2();
    let res: ExplorationResult = if s.mode == Mode::Explore3d {
        run_exploration_3d(&ground, &s.world3(), &s.vertical_scanner(), s.explorer.voxel_cell, start, &cfg)?
    } else {
        run_exploration(&ground, start, &cfg)?
    };
    let mut m = RunMetrics::new(s, cfg.sample);
    let mut art = artifacts_for(s);
    for c in &res.step_clearance {
        m.push_step(*c);
    }
    let mut prev: Option<Point2> = None;
    for x in &res.trace {
        let tag = match x.mode {
            ExploreMode::R1 => "R1",
            ExploreMode::R2 => "R2",
            ExploreMode::R3 => "R3",
        };
        if let Some(p) = prev {
            m.path_length += (x.pose.position() - p).norm();
        }
        prev = Some(x.pose.position());
        art.tracks[0].push(TrackSample { tag, ..sample2(x.t, &x.pose, x.clearance) });
    }
    if m.steps == 0 {
        m.min_clearance = res.min_clearance;
    }
    m.reached = res.completed();
    m.completion_time = res.t_f;
    m.timeout = !m.reached;
    m.set("illegal_updates", res.illegal_updates as f64);
    m.set("transitions", res.transitions.len() as f64);
    m.set("branch_draws", res.branch_draws as f64);
    m.set("frontier_cells", crate::sensing::frontier_cells(&res.grid).len() as f64);
    art.map = Some(res.grid);
    art.voxels = res.voxels;
    Ok(RunOutput { metrics: m, artifacts: art })
}

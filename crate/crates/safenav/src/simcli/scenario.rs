//! Line-oriented scenario files.
//!
//! A file is a list of `key: value` lines. Top-level keys come first, then
//! bracketed sections; `[obstacle]`, `[sensor]`, `[camera]` and `[robot]` may
//! repeat, the others appear at most once. `#` starts a comment. Angles are in
//! degrees, everything else in SI units. Unknown keys are an error.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::explorer::{ExplorerConfig, Odometry};
use crate::geom::{
    validate_scenario, Obstacle2, Obstacle3, Point2, Point3, Pose2, Shape2, Shape3, ValidationInput, World2, World3,
};
use crate::sensing::{DepthCamera3D, SensorNode2D, ShrinkParams, VerticalScanner};
use crate::tracking::Switching;
use crate::vehicle::Vehicle3State;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Plan2d,
    Navigate2d,
    Navigate3d,
    Explore2d,
    Explore3d,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Plan2d, Mode::Navigate2d, Mode::Navigate3d, Mode::Explore2d, Mode::Explore3d];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Plan2d => "plan2d",
            Mode::Navigate2d => "navigate2d",
            Mode::Navigate3d => "navigate3d",
            Mode::Explore2d => "explore2d",
            Mode::Explore3d => "explore3d",
        }
    }

    /// Whether the world itself is three dimensional.
    pub fn is_3d(self) -> bool {
        matches!(self, Mode::Navigate3d | Mode::Explore3d)
    }

    pub fn is_exploration(self) -> bool {
        matches!(self, Mode::Explore2d | Mode::Explore3d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ShapeDef {
    Rect { min: Point2, max: Point2 },
    Disk { center: Point2, radius: f64 },
    Polygon(Vec<Point2>),
    Cuboid { min: Point3, max: Point3 },
    Sphere { center: Point3, radius: f64 },
}

impl ShapeDef {
    pub fn is_3d(&self) -> bool {
        matches!(self, ShapeDef::Cuboid { .. } | ShapeDef::Sphere { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleDef {
    pub shape: ShapeDef,
    /// Only the first two components are used in planar worlds.
    pub velocity: Point3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorDef {
    pub pose: Pose2,
    pub range: f64,
    pub fov: f64,
    pub resolution: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraDef {
    pub position: Point3,
    pub forward: Point3,
    pub fov_h: f64,
    pub fov_v: f64,
    pub width: usize,
    pub height: usize,
    pub range: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotDef {
    /// `x y heading` in the plane, `x y z ix iy iz` in space.
    pub start: Vec<f64>,
    pub target: Option<Vec<f64>>,
    pub v: f64,
    pub u_max: f64,
}

impl RobotDef {
    pub fn pose2(&self) -> Pose2 {
        Pose2::new(self.start[0], self.start[1], self.start[2].to_radians())
    }

    pub fn state3(&self) -> Vehicle3State {
        let s = &self.start;
        Vehicle3State::new(Point3::new(s[0], s[1], s[2]), Point3::new(s[3], s[4], s[5]))
    }

    pub fn target2(&self) -> Point2 {
        let t = self.target.as_deref().unwrap_or(&[0.0, 0.0]);
        Point2::new(t[0], t[1])
    }

    pub fn target3(&self) -> Point3 {
        let t = self.target.as_deref().unwrap_or(&[0.0, 0.0, 0.0]);
        Point3::new(t[0], t[1], t.get(2).copied().unwrap_or(0.0))
    }

    pub fn r_min(&self) -> f64 {
        self.v / self.u_max
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerDef {
    pub d_s: f64,
    pub delta: f64,
    /// Path point spacing; `v·δ` when absent.
    pub spacing: Option<f64>,
    pub v_max: f64,
    pub window: usize,
    pub r_r: f64,
    pub substep: f64,
    pub fast: bool,
    pub smooth: bool,
    pub max_candidates: usize,
    pub noise: f64,
    pub n_s: usize,
    pub n_c: usize,
    /// Arrival radius; two spacings when absent.
    pub reach: Option<f64>,
    pub relax_iters: Option<usize>,
}

impl Default for PlannerDef {
    fn default() -> Self {
        PlannerDef {
            d_s: 0.6,
            delta: 0.3,
            spacing: None,
            v_max: 0.0,
            window: 4,
            r_r: 0.2,
            substep: 0.02,
            fast: false,
            smooth: false,
            max_candidates: 16,
            noise: 0.0,
            n_s: 500,
            n_c: 10,
            reach: None,
            relax_iters: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorerDef {
    pub d0: f64,
    pub q0: f64,
    pub theta_trig: f64,
    pub d_trig: f64,
    pub pause: f64,
    pub sample: f64,
    pub scan_range: f64,
    pub scan_resolution: f64,
    pub odometry: Odometry,
    pub noise: f64,
    pub scanner_height: f64,
    pub scanner_range: f64,
    pub scanner_resolution: f64,
    pub voxel_cell: f64,
}

impl Default for ExplorerDef {
    fn default() -> Self {
        ExplorerDef {
            d0: 1.0,
            q0: 0.5,
            theta_trig: 0.08,
            d_trig: 0.3,
            pause: 0.5,
            sample: 0.25,
            scan_range: 50.0,
            scan_resolution: 0.5,
            odometry: Odometry::Perfect,
            noise: 0.0,
            scanner_height: 0.3,
            scanner_range: 50.0,
            scanner_resolution: 1.0,
            voxel_cell: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub seed: u64,
    pub step_cap: usize,
    /// Grid cell size; a tenth of the margin when absent.
    pub cell: Option<f64>,
    pub out: Option<String>,
    pub bounds: Vec<f64>,
    pub obstacles: Vec<ObstacleDef>,
    pub sensors: Vec<SensorDef>,
    pub cameras: Vec<CameraDef>,
    pub robots: Vec<RobotDef>,
    pub planner: PlannerDef,
    pub explorer: ExplorerDef,
}

impl Scenario {
    pub fn margin(&self) -> f64 {
        if self.mode.is_exploration() {
            self.explorer.d0
        } else {
            self.planner.d_s
        }
    }

    pub fn cell(&self) -> f64 {
        self.cell.unwrap_or(self.margin() / 10.0)
    }

    pub fn spacing(&self) -> f64 {
        self.planner.spacing.unwrap_or(self.robots[0].v * self.planner.delta)
    }

    pub fn reach(&self) -> f64 {
        self.planner.reach.unwrap_or(2.0 * self.spacing())
    }

    pub fn switching(&self) -> Switching {
        if self.planner.smooth {
            Switching::smooth_for(1.0)
        } else {
            Switching::Sign
        }
    }

    pub fn shrink(&self) -> ShrinkParams {
        let p = &self.planner;
        ShrinkParams { delta: p.delta, v_max: p.v_max, window: p.window, d_s: p.d_s, r_r: p.r_r }
    }

    /// Planar world; 3D obstacles contribute their footprint.
    pub fn world2(&self) -> World2 {
        let b = &self.bounds;
        let (min, max) = if b.len() == 6 {
            (Point2::new(b[0], b[1]), Point2::new(b[3], b[4]))
        } else {
            (Point2::new(b[0], b[1]), Point2::new(b[2], b[3]))
        };
        let mut w = World2::new(min, max);
        for o in &self.obstacles {
            let shape = match &o.shape {
                ShapeDef::Rect { min, max } => Shape2::rect(*min, *max),
                ShapeDef::Disk { center, radius } => Shape2::Disk { center: *center, radius: *radius },
                ShapeDef::Polygon(p) => Shape2::polygon(p.clone()),
                ShapeDef::Cuboid { min, max } => Shape2::rect(min.xy(), max.xy()),
                ShapeDef::Sphere { center, radius } => Shape2::Disk { center: center.xy(), radius: *radius },
            };
            w.obstacles.push(Obstacle2 { shape, velocity: o.velocity.xy() });
        }
        w
    }

    pub fn world3(&self) -> World3 {
        let b = &self.bounds;
        let mut w = World3::new(Point3::new(b[0], b[1], b[2]), Point3::new(b[3], b[4], b[5]));
        for o in &self.obstacles {
            let shape = match &o.shape {
                ShapeDef::Cuboid { min, max } => Shape3::Cuboid { min: *min, max: *max },
                ShapeDef::Sphere { center, radius } => Shape3::Sphere { center: *center, radius: *radius },
                _ => continue,
            };
            w.obstacles.push(Obstacle3 { shape, velocity: o.velocity });
        }
        w
    }

    pub fn sensor_nodes(&self) -> Vec<SensorNode2D> {
        self.sensors
            .iter()
            .map(|s| SensorNode2D {
                pose: Pose2::new(s.pose.x, s.pose.y, s.pose.theta.to_radians()),
                range: s.range,
                fov: s.fov.to_radians(),
                resolution: s.resolution.to_radians(),
            })
            .collect()
    }

    pub fn depth_cameras(&self) -> Vec<DepthCamera3D> {
        self.cameras
            .iter()
            .map(|c| {
                DepthCamera3D::looking(
                    c.position,
                    c.forward,
                    c.fov_h.to_radians(),
                    c.fov_v.to_radians(),
                    c.width,
                    c.height,
                    c.range,
                )
            })
            .collect()
    }

    pub fn explorer_config(&self) -> ExplorerConfig {
        let e = &self.explorer;
        let r = &self.robots[0];
        let mut c = ExplorerConfig::new(e.d0, r.v, r.u_max);
        c.q0 = e.q0;
        c.theta_trig = e.theta_trig;
        c.d_trig = e.d_trig;
        c.pause = e.pause;
        c.sample = e.sample;
        c.scan_range = e.scan_range;
        c.scan_resolution = e.scan_resolution.to_radians();
        c.cell = self.cell();
        c.step_cap = self.step_cap;
        c.seed = self.seed;
        c.switching = self.switching();
        c.odometry = e.odometry;
        c.range_noise = e.noise;
        c
    }

    pub fn vertical_scanner(&self) -> VerticalScanner {
        let e = &self.explorer;
        VerticalScanner { height: e.scanner_height, range: e.scanner_range, resolution: e.scanner_resolution.to_radians() }
    }

    /// Standing assumptions of the selected algorithm family, as readable messages.
    pub fn assumption_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.mode {
            Mode::Plan2d | Mode::Navigate2d | Mode::Explore2d | Mode::Explore3d => {
                let w = self.world2();
                let r = &self.robots[0];
                let explore = self.mode.is_exploration();
                let input = ValidationInput {
                    d_s: self.margin(),
                    r_min: r.r_min(),
                    v_r: r.v,
                    v_max: if explore { 0.0 } else { self.planner.v_max },
                    speed_scaled_curvature: self.mode == Mode::Plan2d,
                    starts: vec![r.pose2()],
                    targets: if explore { vec![] } else { vec![r.target2()] },
                };
                out.extend(validate_scenario(&w, &input).iter().map(|v| v.to_string()));
                if self.mode == Mode::Plan2d {
                    let fastest = w.obstacles.iter().map(|o| o.velocity.norm()).fold(0.0, f64::max);
                    if fastest >= r.v {
                        out.push(format!("obstacle speed {fastest} not below robot speed {}", r.v));
                    }
                }
                if explore {
                    out.extend(self.explorer_config().validate().err().map(|e| e.to_string()));
                    if w.obstacles.iter().any(|o| o.velocity != Point2::zeros()) {
                        out.push("exploration needs static obstacles".into());
                    }
                }
                if self.mode == Mode::Explore3d {
                    let b = &self.bounds;
                    for (i, o) in self.obstacles.iter().enumerate() {
                        let spans = matches!(&o.shape, ShapeDef::Cuboid { min, max } if min.z <= b[2] && max.z >= b[5]);
                        if !spans {
                            out.push(format!("obstacle {i} must be a cuboid spanning floor to ceiling"));
                        }
                    }
                }
            }
            Mode::Navigate3d => {
                let w = self.world3();
                let d_s = self.planner.d_s;
                for (i, r) in self.robots.iter().enumerate() {
                    if r.r_min() > d_s {
                        out.push(format!("robot {i}: turn radius {} exceeds the margin {d_s}", r.r_min()));
                    }
                    let s = r.state3();
                    let c = w.clearance(&s.s, 0.0);
                    if c < d_s {
                        out.push(format!("robot {i}: start clearance {c:.3} m below the margin"));
                    }
                    let c = w.clearance(&r.target3(), 0.0);
                    if c < d_s {
                        out.push(format!("robot {i}: target clearance {c:.3} m below the margin"));
                    }
                    for (j, q) in self.robots.iter().enumerate().skip(i + 1) {
                        let gap = (s.s - q.state3().s).norm();
                        if gap < 2.0 * self.planner.r_r {
                            out.push(format!("robots {i} and {j} start {gap:.3} m apart"));
                        }
                        let gap = (r.target3() - q.target3()).norm();
                        if gap < 2.0 * self.planner.r_r {
                            out.push(format!("robots {i} and {j} share a target region"));
                        }
                    }
                }
                let fastest = w.obstacles.iter().map(|o| o.velocity.norm()).fold(0.0, f64::max);
                if fastest > self.planner.v_max {
                    out.push(format!("obstacle speed {fastest} exceeds v_max {}", self.planner.v_max));
                }
            }
        }
        out
    }

    /// Canonical text form, which reads back to an equal scenario.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode.name());
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "step_cap: {}", self.step_cap);
        if let Some(c) = self.cell {
            let _ = writeln!(s, "cell: {c}");
        }
        if let Some(o) = &self.out {
            let _ = writeln!(s, "out: {o}");
        }
        let _ = writeln!(s, "\n[world]\nbounds: {}", join(&self.bounds));
        for o in &self.obstacles {
            s.push_str("\n[obstacle]\n");
            let _ = match &o.shape {
                ShapeDef::Rect { min, max } => writeln!(s, "rect: {} {} {} {}", min.x, min.y, max.x, max.y),
                ShapeDef::Disk { center, radius } => writeln!(s, "disk: {} {} {radius}", center.x, center.y),
                ShapeDef::Polygon(p) => {
                    let flat: Vec<f64> = p.iter().flat_map(|q| [q.x, q.y]).collect();
                    writeln!(s, "polygon: {}", join(&flat))
                }
                ShapeDef::Cuboid { min, max } => {
                    writeln!(s, "cuboid: {} {} {} {} {} {}", min.x, min.y, min.z, max.x, max.y, max.z)
                }
                ShapeDef::Sphere { center, radius } => {
                    writeln!(s, "sphere: {} {} {} {radius}", center.x, center.y, center.z)
                }
            };
            let v = o.velocity;
            let _ = if o.shape.is_3d() {
                writeln!(s, "velocity: {} {} {}", v.x, v.y, v.z)
            } else {
                writeln!(s, "velocity: {} {}", v.x, v.y)
            };
        }
        for n in &self.sensors {
            let _ = writeln!(
                s,
                "\n[sensor]\npose: {} {} {}\nrange: {}\nfov: {}\nresolution: {}",
                n.pose.x, n.pose.y, n.pose.theta, n.range, n.fov, n.resolution
            );
        }
        for c in &self.cameras {
            let _ = writeln!(
                s,
                "\n[camera]\nposition: {} {} {}\nforward: {} {} {}\nfov_h: {}\nfov_v: {}\nwidth: {}\nheight: {}\nrange: {}",
                c.position.x, c.position.y, c.position.z, c.forward.x, c.forward.y, c.forward.z, c.fov_h, c.fov_v, c.width, c.height, c.range
            );
        }
        for r in &self.robots {
            let _ = writeln!(s, "\n[robot]\nstart: {}", join(&r.start));
            if let Some(t) = &r.target {
                let _ = writeln!(s, "target: {}", join(t));
            }
            let _ = writeln!(s, "v: {}\nu_max: {}", r.v, r.u_max);
        }
        let p = &self.planner;
        let _ = writeln!(
            s,
            "\n[planner]\nd_s: {}\ndelta: {}\nv_max: {}\nwindow: {}\nr_r: {}\nsubstep: {}\nfast: {}\nsmooth: {}\nmax_candidates: {}\nnoise: {}\nn_s: {}\nn_c: {}",
            p.d_s, p.delta, p.v_max, p.window, p.r_r, p.substep, p.fast, p.smooth, p.max_candidates, p.noise, p.n_s, p.n_c
        );
        if let Some(x) = p.spacing {
            let _ = writeln!(s, "spacing: {x}");
        }
        if let Some(x) = p.reach {
            let _ = writeln!(s, "reach: {x}");
        }
        if let Some(x) = p.relax_iters {
            let _ = writeln!(s, "relax_iters: {x}");
        }
        let e = &self.explorer;
        let odo = match e.odometry {
            Odometry::Perfect => "perfect",
            Odometry::Plain => "plain",
            Odometry::Improved => "improved",
        };
        let _ = writeln!(
            s,
            "\n[explorer]\nd0: {}\nq0: {}\ntheta_trig: {}\nd_trig: {}\npause: {}\nsample: {}\nscan_range: {}\nscan_resolution: {}\nodometry: {odo}\nnoise: {}\nscanner_height: {}\nscanner_range: {}\nscanner_resolution: {}\nvoxel_cell: {}",
            e.d0, e.q0, e.theta_trig, e.d_trig, e.pause, e.sample, e.scan_range, e.scan_resolution, e.noise, e.scanner_height, e.scanner_range, e.scanner_resolution, e.voxel_cell
        );
        s
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

struct Block {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

/// Typed access to one block's entries; whatever is left unread is an unknown key.
struct Fields<'a> {
    block: &'a Block,
    used: HashSet<usize>,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

impl<'a> Fields<'a> {
    fn new(block: &'a Block) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &block.entries {
            if !seen.insert(e.key.as_str()) {
                return Err(perr(e.line, format!("duplicate key `{}`", e.key)));
            }
        }
        Ok(Fields { block, used: HashSet::new() })
    }

    fn take(&mut self, key: &str) -> Option<&'a Entry> {
        let (i, e) = self.block.entries.iter().enumerate().find(|(_, e)| e.key == key)?;
        self.used.insert(i);
        Some(e)
    }

    fn finish(self) -> Result<()> {
        for (i, e) in self.block.entries.iter().enumerate() {
            if !self.used.contains(&i) {
                let place = if self.block.name.is_empty() { "top level".to_string() } else { format!("[{}]", self.block.name) };
                return Err(perr(e.line, format!("unknown key `{}` in {place}", e.key)));
            }
        }
        Ok(())
    }

    fn nums(&mut self, key: &str, counts: &[usize]) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.take(key) else { return Ok(None) };
        let v = e
            .value
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| perr(e.line, format!("`{key}` expects numbers, got `{}`", e.value)))?;
        if !counts.is_empty() && !counts.contains(&v.len()) {
            let want: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
            return Err(perr(e.line, format!("`{key}` expects {} numbers, got {}", want.join(" or "), v.len())));
        }
        Ok(Some(v))
    }

    fn num(&mut self, key: &str, check: Check) -> Result<Option<f64>> {
        let line = self.block.entries.iter().find(|e| e.key == key).map(|e| e.line);
        let Some(v) = self.nums(key, &[1])? else { return Ok(None) };
        let x = v[0];
        check.apply(key, x).map_err(|m| perr(line.unwrap_or(0), m))?;
        Ok(Some(x))
    }

    fn count(&mut self, key: &str, positive: bool) -> Result<Option<usize>> {
        let Some(e) = self.take(key) else { return Ok(None) };
        let n: usize = e.value.trim().parse().map_err(|_| perr(e.line, format!("`{key}` expects a whole number, got `{}`", e.value)))?;
        if positive && n == 0 {
            return Err(perr(e.line, format!("`{key}` must be positive")));
        }
        Ok(Some(n))
    }

    fn flag(&mut self, key: &str) -> Result<Option<bool>> {
        let Some(e) = self.take(key) else { return Ok(None) };
        match e.value.trim() {
            "true" => Ok(Some(true)),
            "false" => Ok(Some(false)),
            other => Err(perr(e.line, format!("`{key}` expects true or false, got `{other}`"))),
        }
    }

    fn text(&mut self, key: &str) -> Option<(usize, &'a str)> {
        self.take(key).map(|e| (e.line, e.value.trim()))
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| perr(self.block.line, format!("[{}] needs `{key}`", self.block.name)))
    }
}

#[derive(Clone, Copy)]
enum Check {
    Any,
    Positive,
    NonNegative,
    Unit,
}

impl Check {
    fn apply(self, key: &str, x: f64) -> std::result::Result<(), String> {
        let ok = match self {
            Check::Any => true,
            Check::Positive => x > 0.0,
            Check::NonNegative => x >= 0.0,
            Check::Unit => x > 0.0 && x < 1.0,
        };
        if ok {
            return Ok(());
        }
        let what = match self {
            Check::Positive => "positive",
            Check::NonNegative => "non-negative",
            Check::Unit => "strictly between 0 and 1",
            Check::Any => "",
        };
        Err(format!("`{key}` must be {what}, got {x}"))
    }
}

fn split_blocks(text: &str) -> Result<Vec<Block>> {
    let mut blocks = vec![Block { name: String::new(), line: 0, entries: Vec::new() }];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| perr(line, "unterminated section header"))?.trim();
            blocks.push(Block { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let (key, value) = body.split_once(':').ok_or_else(|| perr(line, format!("expected `key: value`, got `{body}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(perr(line, "empty key"));
        }
        blocks.last_mut().unwrap().entries.push(Entry { line, key: key.to_string(), value: value.trim().to_string() });
    }
    Ok(blocks)
}

fn pt2(v: &[f64]) -> Point2 {
    Point2::new(v[0], v[1])
}

fn pt3(v: &[f64]) -> Point3 {
    Point3::new(v[0], v[1], v[2])
}

fn parse_obstacle(b: &Block) -> Result<ObstacleDef> {
    let mut f = Fields::new(b)?;
    let mut shapes = Vec::new();
    if let Some(v) = f.nums("rect", &[4])? {
        shapes.push(ShapeDef::Rect { min: pt2(&v[0..2]), max: pt2(&v[2..4]) });
    }
    if let Some(v) = f.nums("disk", &[3])? {
        shapes.push(ShapeDef::Disk { center: pt2(&v), radius: v[2] });
    }
    if let Some(v) = f.nums("polygon", &[])? {
        if v.len() < 6 || v.len() % 2 != 0 {
            return Err(perr(b.line, "`polygon` expects at least three x y pairs"));
        }
        shapes.push(ShapeDef::Polygon(v.chunks(2).map(pt2).collect()));
    }
    if let Some(v) = f.nums("cuboid", &[6])? {
        shapes.push(ShapeDef::Cuboid { min: pt3(&v[0..3]), max: pt3(&v[3..6]) });
    }
    if let Some(v) = f.nums("sphere", &[4])? {
        shapes.push(ShapeDef::Sphere { center: pt3(&v), radius: v[3] });
    }
    if shapes.len() != 1 {
        return Err(perr(b.line, "[obstacle] needs exactly one of rect, disk, polygon, cuboid, sphere"));
    }
    let shape = shapes.pop().unwrap();
    let bad = match &shape {
        ShapeDef::Rect { min, max } => !(min.x < max.x && min.y < max.y),
        ShapeDef::Cuboid { min, max } => !(min.x < max.x && min.y < max.y && min.z < max.z),
        ShapeDef::Disk { radius, .. } | ShapeDef::Sphere { radius, .. } => !(*radius > 0.0),
        ShapeDef::Polygon(p) => crate::geom::signed_area(p).abs() < 1e-12,
    };
    if bad {
        return Err(perr(b.line, "[obstacle] shape is empty or inverted"));
    }
    let dims = if shape.is_3d() { 3 } else { 2 };
    let velocity = match f.nums("velocity", &[dims])? {
        Some(v) if dims == 3 => pt3(&v),
        Some(v) => Point3::new(v[0], v[1], 0.0),
        None => Point3::zeros(),
    };
    f.finish()?;
    Ok(ObstacleDef { shape, velocity })
}

fn parse_sensor(b: &Block) -> Result<SensorDef> {
    let mut f = Fields::new(b)?;
    let pose = f.nums("pose", &[3])?;
    let pose = f.required("pose", pose)?;
    let range = f.num("range", Check::Positive)?;
    let range = f.required("range", range)?;
    let fov = f.num("fov", Check::Positive)?.unwrap_or(360.0);
    let resolution = f.num("resolution", Check::Positive)?.unwrap_or(0.5);
    if fov > 360.0 {
        return Err(perr(b.line, "`fov` must not exceed 360"));
    }
    f.finish()?;
    Ok(SensorDef { pose: Pose2::new(pose[0], pose[1], pose[2]), range, fov, resolution })
}

fn parse_camera(b: &Block) -> Result<CameraDef> {
    let mut f = Fields::new(b)?;
    let position = f.nums("position", &[3])?;
    let position = pt3(&f.required("position", position)?);
    let forward = f.nums("forward", &[3])?;
    let forward = pt3(&f.required("forward", forward)?);
    if forward.norm() < 1e-12 {
        return Err(perr(b.line, "`forward` must be nonzero"));
    }
    let fov_h = f.num("fov_h", Check::Positive)?.unwrap_or(90.0);
    let fov_v = f.num("fov_v", Check::Positive)?.unwrap_or(90.0);
    if fov_h >= 180.0 || fov_v >= 180.0 {
        return Err(perr(b.line, "camera field of view must be below 180"));
    }
    let width = f.count("width", true)?.unwrap_or(64);
    let height = f.count("height", true)?.unwrap_or(64);
    let range = f.num("range", Check::Positive)?;
    let range = f.required("range", range)?;
    f.finish()?;
    Ok(CameraDef { position, forward, fov_h, fov_v, width, height, range })
}

fn parse_robot(b: &Block) -> Result<RobotDef> {
    let mut f = Fields::new(b)?;
    let start = f.nums("start", &[3, 6])?;
    let start = f.required("start", start)?;
    if start.len() == 6 && Point3::new(start[3], start[4], start[5]).norm() < 1e-12 {
        return Err(perr(b.line, "`start` heading vector must be nonzero"));
    }
    let target = f.nums("target", &[2, 3])?;
    let v = f.num("v", Check::Positive)?;
    let v = f.required("v", v)?;
    let u_max = f.num("u_max", Check::Positive)?;
    let u_max = f.required("u_max", u_max)?;
    f.finish()?;
    Ok(RobotDef { start, target, v, u_max })
}

fn parse_planner(b: &Block) -> Result<PlannerDef> {
    let mut f = Fields::new(b)?;
    let d = PlannerDef::default();
    let p = PlannerDef {
        d_s: f.num("d_s", Check::Positive)?.unwrap_or(d.d_s),
        delta: f.num("delta", Check::Positive)?.unwrap_or(d.delta),
        spacing: f.num("spacing", Check::Positive)?,
        v_max: f.num("v_max", Check::NonNegative)?.unwrap_or(d.v_max),
        window: f.count("window", true)?.unwrap_or(d.window),
        r_r: f.num("r_r", Check::Positive)?.unwrap_or(d.r_r),
        substep: f.num("substep", Check::Positive)?.unwrap_or(d.substep),
        fast: f.flag("fast")?.unwrap_or(d.fast),
        smooth: f.flag("smooth")?.unwrap_or(d.smooth),
        max_candidates: f.count("max_candidates", true)?.unwrap_or(d.max_candidates),
        noise: f.num("noise", Check::NonNegative)?.unwrap_or(d.noise),
        n_s: f.count("n_s", true)?.unwrap_or(d.n_s),
        n_c: f.count("n_c", true)?.unwrap_or(d.n_c),
        reach: f.num("reach", Check::Positive)?,
        relax_iters: f.count("relax_iters", true)?,
    };
    if p.n_c >= p.n_s {
        return Err(perr(b.line, "`n_c` must be below `n_s`"));
    }
    if p.substep > p.delta {
        return Err(perr(b.line, "`substep` must not exceed `delta`"));
    }
    f.finish()?;
    Ok(p)
}

fn parse_explorer(b: &Block) -> Result<ExplorerDef> {
    let mut f = Fields::new(b)?;
    let d = ExplorerDef::default();
    let odometry = match f.text("odometry") {
        None => d.odometry,
        Some((_, "perfect")) => Odometry::Perfect,
        Some((_, "plain")) => Odometry::Plain,
        Some((_, "improved")) => Odometry::Improved,
        Some((line, other)) => return Err(perr(line, format!("`odometry` expects perfect, plain or improved, got `{other}`"))),
    };
    let e = ExplorerDef {
        d0: f.num("d0", Check::Positive)?.unwrap_or(d.d0),
        q0: f.num("q0", Check::Unit)?.unwrap_or(d.q0),
        theta_trig: f.num("theta_trig", Check::Positive)?.unwrap_or(d.theta_trig),
        d_trig: f.num("d_trig", Check::Positive)?.unwrap_or(d.d_trig),
        pause: f.num("pause", Check::NonNegative)?.unwrap_or(d.pause),
        sample: f.num("sample", Check::Positive)?.unwrap_or(d.sample),
        scan_range: f.num("scan_range", Check::Positive)?.unwrap_or(d.scan_range),
        scan_resolution: f.num("scan_resolution", Check::Positive)?.unwrap_or(d.scan_resolution),
        odometry,
        noise: f.num("noise", Check::NonNegative)?.unwrap_or(d.noise),
        scanner_height: f.num("scanner_height", Check::Any)?.unwrap_or(d.scanner_height),
        scanner_range: f.num("scanner_range", Check::Positive)?.unwrap_or(d.scanner_range),
        scanner_resolution: f.num("scanner_resolution", Check::Positive)?.unwrap_or(d.scanner_resolution),
        voxel_cell: f.num("voxel_cell", Check::Positive)?.unwrap_or(d.voxel_cell),
    };
    f.finish()?;
    Ok(e)
}

/// Parses scenario text and checks every field invariant.
///
/// Standing assumptions of the algorithms are not checked here; see
/// [`Scenario::assumption_violations`].
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let blocks = split_blocks(text)?;
    let mut top = Fields::new(&blocks[0])?;
    let mode = match top.text("mode") {
        None => return Err(perr(1, "missing top-level `mode`")),
        Some((line, m)) => *Mode::ALL
            .iter()
            .find(|x| x.name() == m)
            .ok_or_else(|| perr(line, format!("unknown mode `{m}`")))?,
    };
    let seed = match top.text("seed") {
        None => 0,
        Some((line, s)) => s.parse().map_err(|_| perr(line, format!("`seed` expects a whole number, got `{s}`")))?,
    };
    let step_cap = top.count("step_cap", true)?.unwrap_or(2000);
    let cell = top.num("cell", Check::Positive)?;
    let out = top.text("out").map(|(_, s)| s.to_string());
    top.finish()?;

    let mut bounds = None;
    let mut obstacles = Vec::new();
    let mut sensors = Vec::new();
    let mut cameras = Vec::new();
    let mut robots = Vec::new();
    let mut planner = None;
    let mut explorer = None;
    for b in &blocks[1..] {
        let once = |seen: bool| if seen { Err(perr(b.line, format!("[{}] given twice", b.name))) } else { Ok(()) };
        match b.name.as_str() {
            "world" => {
                once(bounds.is_some())?;
                let mut f = Fields::new(b)?;
                let v = f.nums("bounds", &[4, 6])?;
                let v = f.required("bounds", v)?;
                f.finish()?;
                bounds = Some(v);
            }
            "obstacle" => obstacles.push(parse_obstacle(b)?),
            "sensor" => sensors.push(parse_sensor(b)?),
            "camera" => cameras.push(parse_camera(b)?),
            "robot" => robots.push((b.line, parse_robot(b)?)),
            "planner" => {
                once(planner.is_some())?;
                planner = Some(parse_planner(b)?);
            }
            "explorer" => {
                once(explorer.is_some())?;
                explorer = Some(parse_explorer(b)?);
            }
            other => return Err(perr(b.line, format!("unknown section [{other}]"))),
        }
    }
    let bounds = bounds.ok_or_else(|| perr(1, "missing [world] section"))?;
    let dims = if mode.is_3d() { 3 } else { 2 };
    if bounds.len() != 2 * dims {
        return Err(invariant(&blocks, "world", format!("`bounds` needs {} numbers in {}", 2 * dims, mode.name())));
    }
    if (0..dims).any(|i| !(bounds[i] < bounds[i + dims])) {
        return Err(invariant(&blocks, "world", "`bounds` minimum must lie below maximum".into()));
    }
    for (i, o) in obstacles.iter().enumerate() {
        if o.shape.is_3d() != mode.is_3d() {
            return Err(Error::InvalidArgument(format!("obstacle {i}: shape dimension does not match mode {}", mode.name())));
        }
    }
    if robots.is_empty() {
        return Err(perr(1, "at least one [robot] is required"));
    }
    let single = !matches!(mode, Mode::Navigate3d);
    if single && robots.len() != 1 {
        return Err(perr(robots[1].0, format!("{} drives exactly one robot", mode.name())));
    }
    for (line, r) in &robots {
        let want = if mode == Mode::Navigate3d { 6 } else { 3 };
        if r.start.len() != want {
            return Err(perr(*line, format!("`start` needs {want} numbers in {}", mode.name())));
        }
        match (&r.target, mode.is_exploration()) {
            (None, false) => return Err(perr(*line, "[robot] needs `target`")),
            (Some(t), false) if t.len() != if mode == Mode::Navigate3d { 3 } else { 2 } => {
                return Err(perr(*line, "`target` dimension does not match the mode"))
            }
            (Some(_), true) => return Err(perr(*line, "exploration robots take no `target`")),
            _ => {}
        }
    }
    if mode == Mode::Navigate2d && sensors.is_empty() {
        return Err(perr(1, "navigate2d needs at least one [sensor]"));
    }
    if mode == Mode::Navigate3d && cameras.is_empty() {
        return Err(perr(1, "navigate3d needs at least one [camera]"));
    }
    Ok(Scenario {
        mode,
        seed,
        step_cap,
        cell,
        out,
        bounds,
        obstacles,
        sensors,
        cameras,
        robots: robots.into_iter().map(|(_, r)| r).collect(),
        planner: planner.unwrap_or_default(),
        explorer: explorer.unwrap_or_default(),
    })
}

fn invariant(blocks: &[Block], section: &str, msg: String) -> Error {
    let line = blocks.iter().find(|b| b.name == section).map_or(1, |b| b.line);
    perr(line, msg)
}

/// Reads and parses a scenario file without checking algorithm assumptions.
pub fn read_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// Reads a scenario and rejects it when the algorithm's assumptions fail.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let s = read_scenario(path)?;
    let v = s.assumption_violations();
    if v.is_empty() {
        Ok(s)
    } else {
        Err(Error::Validation(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "mode: plan2d\n[world]\nbounds: 0 0 10 6\n[robot]\nstart: 1 3 0\ntarget: 9 3\nv: 0.5\nu_max: 2\n";

    #[test]
    fn minimal_plan_fills_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.mode, Mode::Plan2d);
        assert_eq!(s.planner, PlannerDef::default());
        assert_eq!(s.seed, 0);
        assert!((s.cell() - 0.06).abs() < 1e-12);
        assert!((s.spacing() - 0.15).abs() < 1e-12);
        assert!(s.assumption_violations().is_empty());
    }

    #[test]
    fn negative_turn_bound_names_field() {
        let text = MINIMAL.replace("u_max: 2", "u_max: -1");
        let e = parse_scenario(&text).unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, Error::Parse { line: 8, .. }), "{msg}");
        assert!(msg.contains("u_max"), "{msg}");
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = MINIMAL.replace("[robot]\n", "[robot]\nspeed: 3\n");
        match parse_scenario(&text) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("speed"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_scenario(&format!("colour: red\n{MINIMAL}")).is_err());
        assert!(parse_scenario(&format!("{MINIMAL}[lights]\n")).is_err());
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_scenario("mode plan2d"), Err(Error::Parse { line: 1, .. })));
        let dup = MINIMAL.replace("v: 0.5", "v: 0.5\nv: 0.6");
        assert!(parse_scenario(&dup).unwrap_err().to_string().contains("duplicate"));
        let bad = MINIMAL.replace("target: 9 3", "target: 9 x");
        assert!(matches!(parse_scenario(&bad), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn target_inside_obstacle_fails_validation() {
        let text = format!(
            "mode: navigate2d\n[world]\nbounds: 0 0 40 40\n[obstacle]\ndisk: 30 20 4\n[sensor]\npose: 20 20 0\nrange: 30\n[robot]\nstart: 5 20 0\ntarget: 30 20\nv: 1\nu_max: 0.5\n[planner]\nd_s: 1\ndelta: 1\n"
        );
        let s = parse_scenario(&text).unwrap();
        let v = s.assumption_violations();
        assert!(v.iter().any(|m| m.contains("target")), "{v:?}");
    }

    #[test]
    fn round_trip_is_exact() {
        let text = "mode: navigate3d\nseed: 7\ncell: 0.2\n[world]\nbounds: 0 0 0 10 10 4\n[obstacle]\ncuboid: 4 4 0 6 6 4\nvelocity: 0.1 0 0\n\
            [camera]\nposition: 0.2 0.2 3.5\nforward: 1 1 -0.6\nfov_h: 135\nfov_v: 135\nwidth: 32\nheight: 32\nrange: 9\n\
            [robot]\nstart: 1.5 1.5 2 1 1 0\ntarget: 8.5 8.5 2\nv: 0.7\nu_max: 2\n[planner]\nd_s: 0.6\ndelta: 0.2\nspacing: 0.1400000000000001\nv_max: 0.1\n";
        let a = parse_scenario(text).unwrap();
        let b = parse_scenario(&a.to_text()).unwrap();
        assert_eq!(a, b);
        let c = parse_scenario(&MINIMAL.replace("[robot]", "[obstacle]\npolygon: 3 1 5 1 4 2.5\nvelocity: 0 0.3\n[robot]")).unwrap();
        assert_eq!(c, parse_scenario(&c.to_text()).unwrap());
    }
}

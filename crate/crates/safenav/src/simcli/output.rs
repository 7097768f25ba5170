//! Files written after a run.
//!
//! | file | content |
//! |------|---------|
//! | `trajectory.csv` | `robot,t,x,y,z,hx,hy,hz,clearance,tag` per recorded state |
//! | `map.pgm` | plain PGM of the last planar grid: 0 unknown, 128 free, 255 occupied |
//! | `voxels.txt` | known voxel centres as `x y z state` |
//! | `metrics.txt` | `key: value` lines |
//! | `plot.svg` | trajectories over obstacle outlines and a clearance-vs-time panel |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::geom::{Cell, LabelGrid};

use super::run::{Artifacts, RunMetrics, RunOutput};

pub const TRAJECTORY: &str = "trajectory.csv";
pub const MAP: &str = "map.pgm";
pub const VOXELS: &str = "voxels.txt";
pub const METRICS: &str = "metrics.txt";
pub const PLOT: &str = "plot.svg";

pub fn trajectory_csv(a: &Artifacts) -> String {
    let mut s = String::from("robot,t,x,y,z,hx,hy,hz,clearance,tag\n");
    for (r, track) in a.tracks.iter().enumerate() {
        for x in track {
            let (p, h) = (x.position, x.heading);
            let _ = writeln!(s, "{r},{},{},{},{},{},{},{},{},{}", x.t, p.x, p.y, p.z, h.x, h.y, h.z, x.clearance, x.tag);
        }
    }
    s
}

pub fn map_pgm(g: &LabelGrid<2>) -> String {
    let [w, h] = g.spec.dims;
    let mut s = format!("P2\n{w} {h}\n255\n");
    for iy in (0..h).rev() {
        let row: Vec<&str> = (0..w)
            .map(|ix| match g.get([ix, iy]) {
                Cell::Unknown => "0",
                Cell::Free => "128",
                Cell::Occupied => "255",
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn voxel_list(g: &LabelGrid<3>) -> String {
    let sp = &g.spec;
    let mut s = format!(
        "# dims {} {} {} origin {} {} {} cell {}\n",
        sp.dims[0], sp.dims[1], sp.dims[2], sp.origin.x, sp.origin.y, sp.origin.z, sp.cell
    );
    for (i, c) in g.cells.iter().enumerate() {
        let label = match c {
            Cell::Unknown => continue,
            Cell::Free => "free",
            Cell::Occupied => "occupied",
        };
        let p = sp.center(sp.unindex(i));
        let _ = writeln!(s, "{} {} {} {label}", p.x, p.y, p.z);
    }
    s
}

pub fn metrics_text(m: &RunMetrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode: {}", m.mode.name());
    let _ = writeln!(s, "seed: {}", m.seed);
    let _ = writeln!(s, "reached: {}", m.reached);
    let _ = writeln!(s, "timeout: {}", m.timeout);
    let _ = writeln!(s, "failure: {}", m.failure.as_deref().unwrap_or("none"));
    let _ = writeln!(s, "steps: {}", m.steps);
    let _ = writeln!(s, "step_time: {}", m.step_time);
    match m.completion_time {
        Some(t) => writeln!(s, "completion_time: {t}"),
        None => writeln!(s, "completion_time: none"),
    }
    .ok();
    let _ = writeln!(s, "path_length: {}", m.path_length);
    let _ = writeln!(s, "min_clearance: {}", m.min_clearance);
    for (k, v) in &m.extra {
        let _ = writeln!(s, "{k}: {v}");
    }
    s
}

fn points_attr(pts: impl Iterator<Item = (f64, f64)>) -> String {
    pts.map(|(x, y)| format!("{x},{y}")).collect::<Vec<_>>().join(" ")
}

const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn plot_svg(m: &RunMetrics, a: &Artifacts) -> String {
    let (lo, hi) = a.bounds;
    let size = hi - lo;
    let map_w = 480.0;
    let scale = map_w / size.x.max(size.y);
    let map_h = size.y * scale;
    let panel_w = 360.0;
    let panel_h = 240.0;
    let width = map_w + panel_w + 100.0;
    let height = (map_h + 40.0).max(panel_h + 80.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#);
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    // world panel, flipped so y points up
    let _ = writeln!(
        s,
        r#"<g id="world" transform="translate(20,{}) scale({scale},{}) translate({},{})">"#,
        20.0 + map_h,
        -scale,
        -lo.x,
        -lo.y
    );
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#000" vector-effect="non-scaling-stroke"/>"##,
        lo.x, lo.y, size.x, size.y
    );
    for o in &a.outlines {
        let _ = writeln!(
            s,
            r##"<polygon class="obstacle" points="{}" fill="#bbb" stroke="#555" vector-effect="non-scaling-stroke"/>"##,
            points_attr(o.iter().map(|p| (p.x, p.y)))
        );
    }
    for (r, track) in a.tracks.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<polyline class="robot" data-robot="{r}" points="{}" fill="none" stroke="{}" stroke-width="2" vector-effect="non-scaling-stroke"/>"#,
            points_attr(track.iter().map(|x| (x.position.x, x.position.y))),
            COLOURS[r % COLOURS.len()]
        );
    }
    for t in &a.targets {
        let _ = writeln!(s, r#"<circle class="target" cx="{}" cy="{}" r="{}" fill="none" stroke="green" vector-effect="non-scaling-stroke"/>"#, t.x, t.y, 4.0 / scale);
    }
    s.push_str("</g>\n");
    clearance_panel(&mut s, m, a, map_w + 80.0, 30.0, panel_w, panel_h);
    s.push_str("</svg>\n");
    s
}

fn clearance_panel(s: &mut String, m: &RunMetrics, a: &Artifacts, x0: f64, y0: f64, w: f64, h: f64) {
    let n = m.clearance_trace.len();
    let t_max = (n as f64 * m.step_time).max(m.step_time);
    let finite = m.clearance_trace.iter().copied().filter(|c| c.is_finite());
    let c_max = finite.fold(a.margin, f64::max) * 1.1;
    let _ = writeln!(s, r##"<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#000"/>"##);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">time [s]</text>"#, x0 + w / 2.0, y0 + h + 32.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">minimum distance to obstacles [m]</text>"#, x0, y0 - 10.0);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{:.1}</text>"#, x0 + f * w, y0 + h + 14.0, f * t_max);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.2}</text>"#, x0 - 4.0, y0 + h - f * h + 3.0, f * c_max);
    }
    // raw (time, clearance) data inside the transform, so values can be read back exactly
    let _ = writeln!(
        s,
        r#"<g id="clearance" transform="translate({x0},{}) scale({},{})">"#,
        y0 + h,
        w / t_max,
        -h / c_max
    );
    let _ = writeln!(
        s,
        r##"<line class="margin" x1="0" y1="{d}" x2="{t_max}" y2="{d}" stroke="#d62728" stroke-dasharray="4 3" vector-effect="non-scaling-stroke"/>"##,
        d = a.margin
    );
    let pts = m
        .clearance_trace
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_finite())
        .map(|(k, c)| ((k + 1) as f64 * m.step_time, *c));
    let _ = writeln!(
        s,
        r#"<polyline class="clearance" points="{}" fill="none" stroke="{}" vector-effect="non-scaling-stroke"/>"#,
        points_attr(pts),
        COLOURS[0]
    );
    s.push_str("</g>\n");
}

/// Writes every artifact of a run into `dir`, creating it when needed.
pub fn emit_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = vec![(TRAJECTORY, trajectory_csv(&out.artifacts))];
    if let Some(g) = &out.artifacts.map {
        files.push((MAP, map_pgm(g)));
    }
    if let Some(v) = &out.artifacts.voxels {
        files.push((VOXELS, voxel_list(v)));
    }
    files.push((METRICS, metrics_text(&out.metrics)));
    files.push((PLOT, plot_svg(&out.metrics, &out.artifacts)));
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}

/// Reads `(time, clearance)` pairs back from the plot's clearance panel.
pub fn clearance_from_svg(svg: &str) -> Vec<(f64, f64)> {
    let Some(start) = svg.find(r#"class="clearance" points=""#) else { return Vec::new() };
    let rest = &svg[start + r#"class="clearance" points=""#.len()..];
    let body = &rest[..rest.find('"').unwrap_or(0)];
    body.split_whitespace()
        .filter_map(|pair| {
            let (a, b) = pair.split_once(',')?;
            Some((a.parse().ok()?, b.parse().ok()?))
        })
        .collect()
}

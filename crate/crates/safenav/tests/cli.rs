use std::path::{Path, PathBuf};
use std::process::Command;

use safenav::simcli::output::clearance_from_svg;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_safenav"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn write_scene(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("scene.scn");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = "\
mode: plan2d
cell: 0.06

[world]
bounds: 0 0 10 6

[obstacle]
disk: 5 3.2 1

[robot]
start: 1 3 0
target: 9 3
v: 0.5
u_max: 2

[planner]
d_s: 0.6
delta: 0.3
";

fn metric(dir: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(dir.join("metrics.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {key} in metrics"))
}

#[test]
fn completed_run_writes_documented_files() {
    let d = scratch("files");
    let out = d.join("out");
    let st = bin().arg("run").arg(scenario("plan2d.scn")).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let mut names: Vec<String> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["map.pgm", "metrics.txt", "plot.svg", "trajectory.csv"]);
    assert_eq!(metric(&out, "reached"), "true");
}

#[test]
fn plot_has_robot_polylines_and_margin_line() {
    let d = scratch("plot");
    let out = d.join("out");
    assert_eq!(bin().arg("run").arg(scenario("plan2d.scn")).arg("--out").arg(&out).status().unwrap().code(), Some(0));
    let svg = std::fs::read_to_string(out.join("plot.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="robot""#).count(), 1);
    assert_eq!(svg.matches(r#"class="margin""#).count(), 1);
    let panel = clearance_from_svg(&svg);
    let min = panel.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let reported: f64 = metric(&out, "min_clearance").parse().unwrap();
    assert_eq!(min, reported);
    assert_eq!(panel.len().to_string(), metric(&out, "steps"));
}

#[test]
fn four_robot_plot_has_four_polylines() {
    let d = scratch("plot3d");
    let out = d.join("out");
    assert_eq!(bin().arg("run").arg(scenario("navigate3d.scn")).arg("--out").arg(&out).status().unwrap().code(), Some(0));
    let svg = std::fs::read_to_string(out.join("plot.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="robot""#).count(), 4);
    assert!(out.join("voxels.txt").exists());
}

#[test]
fn invalid_target_exits_with_validation_code() {
    let d = scratch("invalid");
    let p = write_scene(&d, &SMALL.replace("target: 9 3", "target: 5 3.2"));
    let o = bin().arg("run").arg(&p).arg("--out").arg(d.join("out")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("target"));
    assert!(!d.join("out").exists());
}

#[test]
fn parse_error_names_line() {
    let d = scratch("parse");
    let p = write_scene(&d, &SMALL.replace("u_max: 2", "u_max: -1"));
    let o = bin().arg("run").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("u_max") && err.contains("line 14"), "{err}");
}

#[test]
fn step_cap_gives_timeout_code() {
    let d = scratch("timeout");
    let p = write_scene(&d, &SMALL.replace("cell: 0.06", "cell: 0.06\nstep_cap: 3"));
    let st = bin().arg("run").arg(&p).arg("--out").arg(d.join("out")).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert_eq!(metric(&d.join("out"), "timeout"), "true");
}

#[test]
fn force_skips_assumption_checks() {
    let d = scratch("force");
    // the disk sits 0.4 m from the wall, closer than the margin
    let p = write_scene(&d, &SMALL.replace("disk: 5 3.2 1", "disk: 5 4.6 1"));
    assert_eq!(bin().arg("run").arg(&p).arg("--out").arg(d.join("a")).status().unwrap().code(), Some(3));
    let st = bin().arg("run").arg(&p).arg("--force").arg("--out").arg(d.join("b")).status().unwrap();
    assert_ne!(st.code(), Some(3));
    assert!(d.join("b").join("metrics.txt").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let d = scratch("determinism");
    for name in ["a", "b"] {
        let st = bin().arg("run").arg(scenario("explore2d.scn")).arg("--seed").arg("4").arg("--out").arg(d.join(name)).status().unwrap();
        assert_eq!(st.code(), Some(0));
    }
    for f in ["trajectory.csv", "map.pgm", "metrics.txt", "plot.svg"] {
        let a = std::fs::read(d.join("a").join(f)).unwrap();
        let b = std::fs::read(d.join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between reruns");
    }
}

#[test]
fn output_directory_from_environment() {
    let d = scratch("env");
    let p = write_scene(&d, SMALL);
    let st = bin().arg("run").arg(&p).current_dir(&d).env("SAFENAV_OUT", d.join("from_env")).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(d.join("from_env").join("trajectory.csv").exists());
    let st = bin().arg("run").arg(&p).current_dir(&d).env_remove("SAFENAV_OUT").status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(d.join("out").join("plan2d").join("trajectory.csv").exists());
}

#[test]
fn sweep_isolates_runs() {
    let d = scratch("sweep");
    let out = d.join("out");
    let o = bin()
        .args(["sweep", scenario("explore2d.scn").to_str().unwrap(), "--seeds", "2", "--q0", "0.3,0.7", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    for q in ["0.3", "0.7"] {
        for s in 0..2 {
            let dir = out.join(format!("q0_{q}_seed_{s}"));
            assert_eq!(metric(&dir, "seed"), s.to_string());
            assert_eq!(metric(&dir, "reached"), "true");
        }
    }
}

#[test]
fn smooth_and_fast_flags_are_accepted() {
    let d = scratch("flags");
    let p = write_scene(&d, SMALL);
    let st = bin().arg("run").arg(&p).args(["--fast-candidates", "--smooth-control", "--out"]).arg(d.join("out")).status().unwrap();
    assert_eq!(st.code(), Some(0));
}

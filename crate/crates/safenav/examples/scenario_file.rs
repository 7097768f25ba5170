//! Parses a scenario from text, runs it and writes the usual artifacts.

use safenav::simcli::{emit_outputs, parse_scenario, run_scenario};

const SCENE: &str = "\
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

fn main() -> safenav::Result<()> {
    let scenario = parse_scenario(SCENE)?;
    let problems = scenario.assumption_violations();
    if !problems.is_empty() {
        eprintln!("scenario rejected: {problems:?}");
        std::process::exit(3);
    }
    let out = run_scenario(&scenario)?;
    let m = &out.metrics;
    println!("reached {} in {:?} s, {:.2} m travelled, clearance {:.3} m", m.reached, m.completion_time, m.path_length, m.min_clearance);
    let dir = std::env::temp_dir().join("safenav-scenario-example");
    for f in emit_outputs(&out, &dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

//! Sliding-mode tracking of a circle in the plane and a helix in space.

use std::f64::consts::TAU;

use safenav::geom::{Point2, Point3, Pose2};
use safenav::tracking::{Gains2D, Gains3D, PathTracker2, PathTracker3, Switching};
use safenav::vehicle::{UnicycleParams, Vehicle3State};

fn main() -> safenav::Result<()> {
    let r = 3.0;
    let circle: Vec<Point2> = (0..=600).map(|k| {
        let a = TAU * k as f64 / 600.0;
        Point2::new(r * a.cos(), r * a.sin())
    }).collect();
    let params = UnicycleParams::new(1.0, 1.0)?;
    for sw in [Switching::Sign, Switching::smooth_for(1.0)] {
        let mut tracker = PathTracker2::new(Gains2D::default(), sw);
        let start = Pose2::new(r + 0.2, 0.0, std::f64::consts::FRAC_PI_2);
        let states = tracker.track_step(&start, &params, &circle, 10.0, 0.01);
        let tail = &states[states.len() - 100..];
        let err = tail.iter().map(|s| (s.position().norm() - r).abs()).fold(0.0, f64::max);
        println!("{sw:?}: radial error over the last second {err:.4} m");
    }

    let helix: Vec<Point3> = (0..=800).map(|k| {
        let a = 2.0 * TAU * k as f64 / 800.0;
        Point3::new(r * a.cos(), r * a.sin(), 0.3 * a)
    }).collect();
    let mut tracker = PathTracker3::new(Gains3D::default(), Switching::smooth_for(1.0));
    let mut state = Vehicle3State::new(Point3::new(r + 0.3, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0));
    for second in 1..=15 {
        let states = tracker.track_step(&state, 1.0, 1.0, &helix, 1.0, 0.01);
        state = *states.last().expect("non-empty interval");
        if second % 5 == 0 {
            let (_, e) = tracker.control(&state, &helix, 1.0, 0.01);
            println!("helix t = {second} s: distance error {:.4} m, heading error {:.4}", e.e_d, e.e_a);
        }
    }
    Ok(())
}

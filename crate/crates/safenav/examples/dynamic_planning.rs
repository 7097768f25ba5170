//! Plans around a static disk and a crossing disk, then tracks the best path.

use safenav::apf::{clearance_slack, homotopy_search, PlanProblem, PredictedWorld, SearchParams, Threshold};
use safenav::geom::{Obstacle2, Point2, Pose2, Shape2, World2};
use safenav::tracking::{Gains2D, PathTracker2, Switching};
use safenav::vehicle::UnicycleParams;

fn main() -> safenav::Result<()> {
    let mut crossing = Obstacle2::fixed(Shape2::Disk { center: Point2::new(6.0, 1.0), radius: 0.6 });
    crossing.velocity = Point2::new(0.0, 0.3);
    let world = World2::new(Point2::new(0.0, 0.0), Point2::new(12.0, 6.0))
        .with(Obstacle2::fixed(Shape2::Disk { center: Point2::new(3.5, 3.2), radius: 0.8 }))
        .with(crossing);
    let start = Pose2::new(1.0, 3.0, 0.0);
    let target = Point2::new(11.0, 3.0);
    let (v, delta, d_s) = (0.5, 0.3, 0.6);

    let predicted = PredictedWorld::new(world.clone(), delta);
    let problem = PlanProblem::new(start, target, predicted.clone(), d_s, v * delta);
    let result = homotopy_search(&problem, &SearchParams { max_candidates: 16, complete_all: true })?;
    for (i, c) in result.candidates.iter().enumerate() {
        let mark = if i == result.best { "*" } else { " " };
        println!("{mark} candidate {i}: {:?}, {} points, {:.2} m, branches {:?}", c.status, c.path.len(), c.path.length(), c.events.iter().map(|e| (e.obstacle, e.gamma)).collect::<Vec<_>>());
    }
    let path = result.best_path();
    println!("time-indexed clearance {:.3} (margin {d_s})", clearance_slack(path, &predicted, Threshold::Fixed(d_s)) + d_s);

    let params = UnicycleParams::new(v, 2.0)?;
    let mut tracker = PathTracker2::new(Gains2D::default(), Switching::Sign);
    let mut pose = start;
    let mut t = 0.0;
    let mut worst = f64::INFINITY;
    while (pose.position() - target).norm() > 2.0 * v * delta && t < 60.0 {
        for s in tracker.track_step(&pose, &params, &path.points, delta, 0.02) {
            t += 0.02;
            worst = worst.min(world.clearance(&s.position(), t));
            pose = s;
        }
    }
    println!("tracked to ({:.2}, {:.2}) at t = {t:.1} s, closest approach {worst:.3} m", pose.x, pose.y);
    Ok(())
}

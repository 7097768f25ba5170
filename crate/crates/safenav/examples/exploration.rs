//! Randomized exploration of a room until the occupancy map has no frontier left.

use safenav::explorer::{run_exploration, ExplorerConfig};
use safenav::geom::{Cell, Obstacle2, Point2, Pose2, Shape2, World2};
use safenav::sensing::frontier_cells;

fn main() -> safenav::Result<()> {
    let world = World2::new(Point2::new(0.0, 0.0), Point2::new(16.0, 12.0))
        .with(Obstacle2::fixed(Shape2::rect(Point2::new(4.0, 3.0), Point2::new(6.0, 5.0))))
        .with(Obstacle2::fixed(Shape2::Disk { center: Point2::new(11.0, 7.5), radius: 1.2 }));
    for q0 in [0.3, 0.5, 0.7] {
        let mut cfg = ExplorerConfig::new(1.0, 0.5, 1.0);
        cfg.q0 = q0;
        cfg.seed = 3;
        cfg.step_cap = 20_000;
        cfg.validate()?;
        let res = run_exploration(&world, Pose2::new(2.0, 9.0, 0.3), &cfg)?;
        println!(
            "q0 {q0}: done at {:?} s, {} mode switches, {} free / {} occupied cells, {} frontier cells, clearance {:.3} m",
            res.t_f.map(|t| (t * 10.0).round() / 10.0),
            res.transitions.len(),
            res.grid.count(Cell::Free),
            res.grid.count(Cell::Occupied),
            frontier_cells(&res.grid).len(),
            res.min_clearance
        );
    }
    Ok(())
}

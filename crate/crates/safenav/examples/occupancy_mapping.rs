//! Builds an occupancy grid and a voxel map from a few scanner poses.

use safenav::geom::{Cell, GridSpec, LabelGrid, Obstacle2, Obstacle3, Point2, Point3, Pose2, Shape2, Shape3, World2, World3};
use safenav::sensing::{frontier_cells, grid_update_from_scan, illegal_transitions, raycast_scan, voxel_update_vertical_scan, SensorNode2D, VerticalScanner};

fn main() -> safenav::Result<()> {
    let ground = World2::new(Point2::new(0.0, 0.0), Point2::new(10.0, 8.0))
        .with(Obstacle2::fixed(Shape2::rect(Point2::new(4.0, 3.0), Point2::new(6.0, 5.0))));
    let space = World3::new(Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 8.0, 3.0))
        .with(Obstacle3::fixed(Shape3::Cuboid { min: Point3::new(4.0, 3.0, 0.0), max: Point3::new(6.0, 5.0, 3.0) }));
    let mut grid = LabelGrid::filled(ground.spec(0.2), Cell::Unknown);
    let scanner = VerticalScanner { height: 0.3, range: 20.0, resolution: 1f64.to_radians() };
    let vspec = GridSpec::covering(Point3::new(0.0, 0.0, scanner.height), space.max, 0.5)?;
    let mut voxels = LabelGrid::filled(vspec, Cell::Unknown);

    let poses = [Pose2::new(1.5, 1.5, 0.0), Pose2::new(8.5, 1.5, 1.6), Pose2::new(8.5, 6.5, 3.1), Pose2::new(1.5, 6.5, -1.6)];
    for (k, pose) in poses.iter().enumerate() {
        let before = grid.clone();
        let node = SensorNode2D::new(*pose, 20.0, 360f64.to_radians(), 0.5f64.to_radians())?;
        grid_update_from_scan(&mut grid, pose, &raycast_scan(&ground, 0.0, &node));
        voxel_update_vertical_scan(&mut voxels, pose, &scanner, &scanner.scan(&space, 0.0, pose));
        println!(
            "scan {k}: {} free, {} occupied, {} unknown, {} frontier, {} illegal transitions",
            grid.count(Cell::Free),
            grid.count(Cell::Occupied),
            grid.count(Cell::Unknown),
            frontier_cells(&grid).len(),
            illegal_transitions(&before, &grid)
        );
    }
    println!("voxels: {} free, {} occupied", voxels.count(Cell::Free), voxels.count(Cell::Occupied));
    Ok(())
}

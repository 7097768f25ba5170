//! One planning step of a robot guided by a network of static range scanners.

use safenav::apf::{FieldGains, GridEnvironment};
use safenav::geom::{Obstacle2, Point2, Pose2, Shape2, World2};
use safenav::sensing::{fuse_unoccupied_area, raycast_scan, SensorNode2D, ShrinkParams};
use safenav::tangent_graph::{build_graph, extract_boundary_curves, generate_candidates, select_candidate, SelectParams, VertexKind};

fn main() -> safenav::Result<()> {
    let world = World2::new(Point2::new(0.0, 0.0), Point2::new(40.0, 24.0))
        .with(Obstacle2::fixed(Shape2::Disk { center: Point2::new(14.0, 12.0), radius: 3.0 }))
        .with(Obstacle2::fixed(Shape2::Disk { center: Point2::new(27.0, 9.0), radius: 2.5 }));
    let full = 360f64.to_radians();
    let res = 0.5f64.to_radians();
    let nodes: Vec<SensorNode2D> = [(6.0, 6.0), (6.0, 18.0), (20.0, 3.0), (20.0, 21.0), (34.0, 6.0), (34.0, 18.0)]
        .iter()
        .map(|&(x, y)| SensorNode2D::new(Pose2::new(x, y, 0.0), 14.0, full, res))
        .collect::<safenav::Result<_>>()?;
    let scans: Vec<_> = nodes.iter().map(|n| (n.clone(), raycast_scan(&world, 0.0, n))).collect();
    let area = fuse_unoccupied_area(&scans, &[], 0.2, &world.spec(0.25));
    println!("detected free area {:.1} m^2", area.free_volume());

    let start = Pose2::new(4.0, 12.0, 0.0);
    let target = Point2::new(36.0, 12.0);
    let (d_s, r_min, spacing) = (1.0, 2.0, 1.0);
    let reduced = area.reduce(d_s)?;
    let curves = extract_boundary_curves(&reduced, Some(start.position()), 0.125)?;
    let graph = build_graph(curves, &reduced, start, target, r_min);
    println!(
        "graph: {} A, {} B, {} S, {} V vertices",
        graph.count(VertexKind::A),
        graph.count(VertexKind::B),
        graph.count(VertexKind::S),
        graph.count(VertexKind::V)
    );
    let cands = generate_candidates(&graph, 64);
    for c in cands.completed() {
        println!("  candidate {} of {:.1} m", c.id, c.length());
    }
    let params = SelectParams {
        shrink: ShrinkParams { delta: 1.0, v_max: 0.5, window: 4, d_s, r_r: 0.2 },
        gains: FieldGains::for_spacing(spacing),
        r_min,
        spacing,
        fast: false,
    };
    let chosen = select_candidate(&cands, &GridEnvironment::new(area.clone()), start, target, &params)?;
    println!(
        "selected candidate {}: {} points, {:.1} m, {} relaxation iterations",
        chosen.candidate,
        chosen.path.len(),
        chosen.path.length(),
        chosen.report.iterations
    );
    Ok(())
}

//! Roadmap path for a flying robot around a pillar, smoothed by the spatial field.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safenav::apf::FieldGains;
use safenav::geom::{Obstacle3, Point3, Shape3, World3};
use safenav::prm3::{relax3, rough_path, Prm3Params, Relax3Context, ValidArea3};
use safenav::sensing::ShrinkParams;
use safenav::vehicle::{InitialTorus, Vehicle3State};

fn main() -> safenav::Result<()> {
    let world = World3::new(Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 10.0, 4.0))
        .with(Obstacle3::fixed(Shape3::Cuboid { min: Point3::new(4.0, 4.0, 0.0), max: Point3::new(6.0, 6.0, 4.0) }));
    let free = world.rasterize(0.0, &world.spec(0.2));
    let (d_s, spacing, v, u_max) = (0.6, 0.15, 0.5, 1.0);
    let state = Vehicle3State::new(Point3::new(1.5, 1.5, 2.0), Point3::new(1.0, 1.0, 0.0).normalize());
    let goal = Point3::new(8.5, 8.5, 2.0);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rough = rough_path(&free.reduce(d_s)?, &Prm3Params::new(spacing, u_max, v), &state, goal, &mut rng)?;
    println!("rough path: {} points, {:.2} m, tightest turn {:.2} m", rough.len(), rough.length(), rough.min_circumradius());

    let shrink = ShrinkParams { delta: 0.2, v_max: 0.0, window: 4, d_s, r_r: 0.2 };
    let valid = ValidArea3::new(free, shrink, Vec::new());
    let ctx = Relax3Context { valid: &valid, target: goal, torus: Some(InitialTorus::new(&state, v / u_max)), d_s };
    let (smooth, report) = relax3(&rough, &ctx, &FieldGains::for_spacing(spacing));
    let clearance = smooth.points.iter().map(|p| world.clearance(p, 0.0)).fold(f64::INFINITY, f64::min);
    println!(
        "relaxed path: {} points, {:.2} m, tightest turn {:.2} m, clearance {clearance:.3} m after {} iterations",
        smooth.len(),
        smooth.length(),
        smooth.min_circumradius(),
        report.iterations
    );
    Ok(())
}

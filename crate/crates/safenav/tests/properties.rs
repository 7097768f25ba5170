use proptest::prelude::*;

use safenav::apf::{relax_path, resultant_fields, FieldGains, GridEnvironment, PathPolyline, RelaxContext, Threshold};
use safenav::explorer::{run_exploration, saturate, ExplorerConfig, Mode};
use safenav::geom::{Cell, GridSpec, LabelGrid, Obstacle2, Point2, Point3, Pose2, RegionGrid2, Shape2, World2};
use safenav::sensing::{fuse_unoccupied_area, illegal_transitions, observe_cell, raycast_scan, shrink_for_time, SensorNode2D, ShrinkParams};
use safenav::simcli::parse_scenario;
use safenav::tangent_graph::{build_graph, extract_boundary_curves, generate_candidates};
use safenav::tracking::{errors3d, saturation_x, smc2d, smc2d_with, smc3d, Gains2D, Gains3D, Switching};
use safenav::vehicle::{step_unicycle, step_vehicle3, UnicycleParams, Vehicle3State};

fn blob_region(centers: &[(f64, f64, f64)]) -> RegionGrid2 {
    let spec = GridSpec::covering(Point2::new(0.0, 0.0), Point2::new(8.0, 8.0), 0.1).unwrap();
    RegionGrid2::from_fn(spec, |p| {
        if centers.iter().any(|&(x, y, r)| (p - Point2::new(x, y)).norm() < r) {
            Cell::Occupied
        } else {
            Cell::Free
        }
    })
}

fn blobs() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((1.0..7.0f64, 1.0..7.0f64, 0.2..1.2f64), 1..4)
}

fn pt2() -> impl Strategy<Value = Point2> {
    (0.0..8.0f64, 0.0..8.0f64).prop_map(|(x, y)| Point2::new(x, y))
}

fn nonfree(r: &RegionGrid2) -> Vec<bool> {
    r.labels().cells.iter().map(|c| !c.is_free()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn enlarge_then_reduce_keeps_obstacles(c in blobs(), d in 0.1..1.0f64) {
        let r = blob_region(&c);
        let back = r.enlarge(d).unwrap().reduce(d).unwrap();
        for (a, b) in nonfree(&r).iter().zip(nonfree(&back)) {
            prop_assert!(!a || b);
        }
    }

    #[test]
    fn distance_is_lipschitz(c in blobs(), p in pt2(), q in pt2()) {
        let r = blob_region(&c);
        let lhs = (r.distance(&p) - r.distance(&q)).abs();
        prop_assert!(lhs <= (p - q).norm() + 2.0 * r.cell_size() + 1e-12);
    }

    #[test]
    fn distance_vanishes_on_blocked_cells(c in blobs(), p in pt2()) {
        let r = blob_region(&c);
        if !r.is_free(&p) {
            prop_assert_eq!(r.distance(&p), 0.0);
        }
    }

    #[test]
    fn segment_clear_is_symmetric(c in blobs(), a in pt2(), b in pt2()) {
        let r = blob_region(&c);
        prop_assert_eq!(r.segment_clear(&a, &b), r.segment_clear(&b, &a));
    }

    #[test]
    fn nested_reduction_covers_direct(c in blobs(), d1 in 0.1..0.8f64, d2 in 0.1..0.8f64) {
        let r = blob_region(&c);
        let direct = r.reduce(d1 + d2).unwrap();
        // one cell of slack on the second reduction
        let nested = r.reduce(d1).unwrap().reduce((d2 - r.cell_size()).max(0.0)).unwrap();
        for (x, y) in direct.labels().cells.iter().zip(&nested.labels().cells) {
            prop_assert!(!x.is_free() || y.is_free());
        }
    }

    #[test]
    fn unicycle_speed_bound(x in -5.0..5.0f64, y in -5.0..5.0f64, th in -3.1..3.1f64, u in -3.0..3.0f64, dt in 0.001..1.0f64) {
        let p = UnicycleParams::new(0.7, 1.5).unwrap();
        let s = Pose2::new(x, y, th);
        let n = step_unicycle(&s, &p, u, dt).unwrap().state;
        prop_assert!((n.position() - s.position()).norm() <= 0.7 * dt + 1e-12);
        prop_assert!(n.theta > -std::f64::consts::PI && n.theta <= std::f64::consts::PI);
    }

    #[test]
    fn unicycle_reflection_and_composition(th in -3.1..3.1f64, u in -1.5..1.5f64, a in 0.01..2.0f64, b in 0.01..2.0f64) {
        let p = UnicycleParams::new(0.7, 1.5).unwrap();
        let s = Pose2::new(0.0, 0.0, th);
        let plus = step_unicycle(&Pose2::new(0.0, 0.0, 0.0), &p, u, a).unwrap().state;
        let minus = step_unicycle(&Pose2::new(0.0, 0.0, 0.0), &p, -u, a).unwrap().state;
        prop_assert!((plus.x - minus.x).abs() < 1e-12 && (plus.y + minus.y).abs() < 1e-12);
        let two = step_unicycle(&step_unicycle(&s, &p, u, a).unwrap().state, &p, u, b).unwrap().state;
        let one = step_unicycle(&s, &p, u, a + b).unwrap().state;
        prop_assert!((two.position() - one.position()).norm() < 1e-9);
        prop_assert!(safenav::geom::wrap_angle(two.theta - one.theta).abs() < 1e-9);
    }

    #[test]
    fn vehicle3_keeps_unit_heading(ix in -1.0..1.0f64, iy in -1.0..1.0f64, iz in -1.0..1.0f64,
                                   ux in -2.0..2.0f64, uy in -2.0..2.0f64, uz in -2.0..2.0f64) {
        prop_assume!((ix * ix + iy * iy + iz * iz) > 0.01);
        let s = Vehicle3State::new(Point3::zeros(), Point3::new(ix, iy, iz));
        let n = step_vehicle3(&s, 1.0, &Point3::new(ux, uy, uz), 1.0, 0.01).unwrap().state;
        prop_assert!((n.i.norm() - 1.0).abs() < 1e-9);
        prop_assert!((n.s - s.s).norm() <= 0.01 + 1e-12);
    }

    #[test]
    fn smc2d_outputs_three_levels(e in -2.0..2.0f64, ed in -2.0..2.0f64, um in 0.1..3.0f64) {
        let u = smc2d(e, ed, &Gains2D::default(), um);
        prop_assert!(u == um || u == -um || u == 0.0);
        let s = smc2d_with(e, ed, &Gains2D::default(), um, Switching::smooth_for(1.0));
        prop_assert!(s.abs() <= um);
    }

    #[test]
    fn saturation_is_odd_and_monotone(a in -5.0..5.0f64, b in -5.0..5.0f64, lam in 0.1..5.0f64, sig in 0.1..3.0f64) {
        prop_assert!((saturation_x(a, lam, sig) + saturation_x(-a, lam, sig)).abs() < 1e-12);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(saturation_x(lo, lam, sig) <= saturation_x(hi, lam, sig) + 1e-12);
        prop_assert!((saturation_x(a + 1e-7, lam, sig) - saturation_x(a, lam, sig)).abs() < 1e-5);
    }

    #[test]
    fn explorer_saturation_is_bounded(r in -10.0..10.0f64, g in 0.1..3.0f64, l in 0.1..2.0f64) {
        prop_assert!(saturate(r, g, l).abs() <= g * l + 1e-12);
        prop_assert!((saturate(r, g, l) + saturate(-r, g, l)).abs() < 1e-12);
    }

    #[test]
    fn smc3d_is_perpendicular(sx in -3.0..3.0f64, sy in -3.0..3.0f64, sz in -1.0..1.0f64,
                              ix in -1.0..1.0f64, iy in -1.0..1.0f64, iz in -1.0..1.0f64, um in 0.1..2.0f64) {
        prop_assume!((ix * ix + iy * iy + iz * iz) > 0.01);
        let path: Vec<Point3> = (0..60).map(|k| Point3::new(k as f64 * 0.1 - 3.0, 0.0, 0.0)).collect();
        let st = Vehicle3State::new(Point3::new(sx, sy, sz), Point3::new(ix, iy, iz));
        let e = errors3d(&st, &path);
        for sw in [Switching::Sign, Switching::smooth_for(1.0)] {
            let u = smc3d(&st, &e, (0.0, 0.0), &Gains3D::default(), um, sw);
            prop_assert!(u.dot(&st.i).abs() < 1e-12);
            prop_assert!(u.norm() <= um + 1e-12);
        }
    }

    #[test]
    fn cell_state_machine_is_monotone(ops in prop::collection::vec((0usize..16, 0u8..3), 1..80)) {
        let spec = GridSpec::covering(Point2::new(0.0, 0.0), Point2::new(4.0, 4.0), 1.0).unwrap();
        let mut g = LabelGrid::filled(spec, Cell::Unknown);
        for (i, s) in ops {
            let before = g.clone();
            let seen = [Cell::Unknown, Cell::Free, Cell::Occupied][s as usize];
            observe_cell(&mut g, [i % 4, i / 4], seen);
            prop_assert_eq!(illegal_transitions(&before, &g), 0);
        }
    }

    #[test]
    fn shrinking_is_antitone(c in blobs(), k1 in 0usize..6, k2 in 0usize..6) {
        let r = blob_region(&c);
        let p = ShrinkParams { delta: 1.0, v_max: 0.2, window: 3, d_s: 0.3, r_r: 0.1 };
        let (a, b) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
        let ra = shrink_for_time(&r, a, &p).unwrap();
        let rb = shrink_for_time(&r, b, &p).unwrap();
        for (x, y) in ra.labels().cells.iter().zip(&rb.labels().cells) {
            prop_assert!(x.is_free() || !y.is_free());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fused_area_avoids_obstacles(c in blobs(), sx in 0.5..7.5f64, sy in 0.5..7.5f64) {
        let mut world = World2::new(Point2::new(0.0, 0.0), Point2::new(8.0, 8.0));
        for &(x, y, r) in &c {
            world = world.with(Obstacle2::fixed(Shape2::Disk { center: Point2::new(x, y), radius: r }));
        }
        prop_assume!(world.clearance(&Point2::new(sx, sy), 0.0) > 0.1);
        let node = SensorNode2D::new(Pose2::new(sx, sy, 0.0), 6.0, std::f64::consts::TAU, 1f64.to_radians()).unwrap();
        let scan = raycast_scan(&world, 0.0, &node);
        let spec = world.spec(0.1);
        let area = fuse_unoccupied_area(&[(node, scan)], &[], 0.0, &spec);
        for (i, cell) in area.labels().cells.iter().enumerate() {
            if cell.is_free() {
                let p = spec.center(spec.unindex(i));
                for o in &world.obstacles {
                    let depth = if o.shape.contains(&p) { (o.shape.nearest(&p).1 - p).norm() } else { 0.0 };
                    prop_assert!(depth <= spec.cell, "free cell {:?} lies {depth} inside an obstacle", p);
                }
            }
        }
    }

    #[test]
    fn relaxation_invariants(cx in 3.5..5.5f64, cy in 2.2..3.8f64, r in 0.4..0.9f64) {
        let spec = GridSpec::covering(Point2::new(0.0, 0.0), Point2::new(10.0, 6.0), 0.06).unwrap();
        let region = RegionGrid2::from_fn(spec, |p| if (p - Point2::new(cx, cy)).norm() < r { Cell::Occupied } else { Cell::Free });
        let env = GridEnvironment::new(region);
        let l = 0.15;
        let pts: Vec<Point2> = (0..=53).map(|k| Point2::new(1.0 + k as f64 * l, 3.0)).collect();
        let path = PathPolyline::new(pts, l).unwrap();
        let target = Point2::new(9.0, 3.0);
        let gains = FieldGains::for_spacing(l);
        let ctx = RelaxContext { adjust_end: true, ..RelaxContext::new(&env, Threshold::Fixed(0.6), target) };
        let (out, rep) = relax_path(&path, &ctx, &gains);
        prop_assert_eq!(out.points[0], path.points[0]);
        let (again, rep2) = relax_path(&path, &ctx, &gains);
        prop_assert_eq!(&again.points, &out.points);
        prop_assert_eq!(rep2.iterations, rep.iterations);
        prop_assert!(rep.converged, "{:?}", rep);
        {
            let (f, _) = resultant_fields(&out, &ctx, &gains);
            prop_assert!(f[1..].iter().all(|v| v.norm() < gains.f_th));
            let (lo, hi) = out.spacing_range();
            prop_assert!(lo >= 0.9 * l && hi <= 1.1 * l, "spacing {lo}..{hi}");
            for p in &out.points {
                prop_assert!(env.region.distance(p) >= 0.6 - 0.06, "point {:?} too close", p);
            }
        }
    }

    #[test]
    fn candidate_generation_is_deterministic_and_distinct(cx in 9.0..15.0f64, cy in 7.0..9.0f64) {
        let spec = GridSpec::covering(Point2::new(0.0, 0.0), Point2::new(24.0, 16.0), 0.25).unwrap();
        let region = RegionGrid2::from_fn(spec, |p| {
            let wall = p.x < 0.5 || p.y < 0.5 || p.x > 23.5 || p.y > 15.5;
            if wall || (p - Point2::new(cx, cy)).norm() < 2.5 { Cell::Occupied } else { Cell::Free }
        });
        let reduced = region.reduce(1.0).unwrap();
        let start = Pose2::new(3.0, 8.0, 0.0);
        let target = Point2::new(21.0, 8.0);
        let run = || {
            let curves = extract_boundary_curves(&reduced, Some(start.position()), 0.125).unwrap();
            generate_candidates(&build_graph(curves, &reduced, start, target, 1.0), 64)
        };
        let a = run();
        let b = run();
        prop_assert_eq!(&a.list, &b.list);
        for (i, x) in a.list.iter().enumerate() {
            for y in &a.list[i + 1..] {
                prop_assert!(x.route != y.route);
            }
        }
        for c in a.completed() {
            prop_assert!((c.points.last().unwrap() - target).norm() <= 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn exploration_mode_machine(seed in 0u64..1000, q0 in 0.2..0.8f64) {
        let world = World2::new(Point2::new(0.0, 0.0), Point2::new(12.0, 10.0))
            .with(Obstacle2::fixed(Shape2::Disk { center: Point2::new(7.0, 5.0), radius: 1.2 }));
        let mut cfg = ExplorerConfig::new(1.0, 0.5, 1.0);
        cfg.q0 = q0;
        cfg.seed = seed;
        cfg.step_cap = 8000;
        let a = run_exploration(&world, Pose2::new(2.5, 2.5, 0.4), &cfg).unwrap();
        for (_, from, to) in &a.transitions {
            prop_assert!(matches!((from, to), (Mode::R1, Mode::R2) | (Mode::R2, Mode::R3) | (Mode::R3, Mode::R2)));
        }
        prop_assert_eq!(a.illegal_updates, 0);
        prop_assert!(a.min_clearance >= cfg.d0 - cfg.cell);
        let b = run_exploration(&world, Pose2::new(2.5, 2.5, 0.4), &cfg).unwrap();
        prop_assert_eq!(a.trajectory_csv(), b.trajectory_csv());
    }

    #[test]
    fn scenario_text_round_trips(d_s in 0.3..1.0f64, v in 0.1..2.0f64, u in 0.5..3.0f64, seed in 0u64..10_000, fast: bool) {
        let text = format!(
            "mode: plan2d\nseed: {seed}\n\n[world]\nbounds: 0 0 10 6\n\n[obstacle]\ndisk: 5 3 1\n\n[robot]\nstart: 1 3 0\ntarget: 9 3\nv: {v}\nu_max: {u}\n\n[planner]\nd_s: {d_s}\nfast: {fast}\n"
        );
        let s = parse_scenario(&text).unwrap();
        let back = parse_scenario(&s.to_text()).unwrap();
        prop_assert_eq!(s, back);
    }
}

use std::f64::consts::PI;

use cagg::field::{GridSpec, PatchMask, ScalarField};
use cagg::heleshaw::{boundary_velocity, evolve, initial_pressure, patch_mask, solve_pressure, HeleShawConfig, LevelSet};
use cagg::shape::fraenkel_asymmetry;
use cagg::shapes::Shape;

mod common;
use common::square_pressure_integral;

fn grid(n: usize, h: f64) -> GridSpec {
    GridSpec::centered(n, h, (0.0, 0.0)).unwrap()
}

fn nearest(g: &GridSpec, x: f64, y: f64) -> usize {
    (0..g.len())
        .min_by(|&a, &b| {
            let (pa, pb) = (g.center(a), g.center(b));
            let da = (pa.0 - x).hypot(pa.1 - y);
            let db = (pb.0 - x).hypot(pb.1 - y);
            da.total_cmp(&db)
        })
        .unwrap()
}

#[test]
fn disk_pressure_is_the_paraboloid() {
    let h = 1.0 / 64.0;
    let g = grid(160, h);
    let r = 1.0;
    let ls = LevelSet::from_shape(g, &Shape::disk((0.0, 0.0), r)).unwrap();
    let s = solve_pressure(&ls).unwrap();
    assert!(s.residual < 1e-8);
    let exact = ScalarField::from_fn(g, |x, y| ((r * r - x * x - y * y) / 4.0).max(0.0));
    let worst = s
        .p
        .values()
        .iter()
        .zip(exact.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(worst < 1e-3, "{worst}");
    let area = ls.area();
    let target = area * area / (8.0 * PI);
    assert!((s.p.integral() - target).abs() < h * 0.01, "{} vs {target}", s.p.integral());
    assert!(s.p.min() >= 0.0);
}

#[test]
fn square_pressure_integral_matches_series() {
    let series = square_pressure_integral();
    let g = grid(96, 1.0 / 64.0);
    let mask = PatchMask::from_fn(g, |x, y| x.abs() < 0.5 && y.abs() < 0.5);
    let s = initial_pressure(&mask).unwrap();
    assert!((s.p.integral() - series).abs() < 5e-4, "{} vs {series}", s.p.integral());
    for (k, &v) in s.p.values().iter().enumerate() {
        if !mask.bits()[k] {
            assert_eq!(v, 0.0);
        }
    }
}

#[test]
fn staircase_and_mask_pressures_agree() {
    let g = grid(64, 1.0 / 16.0);
    let mask = PatchMask::from_fn(g, |x, y| x * x + 2.0 * y * y < 1.0);
    let a = initial_pressure(&mask).unwrap();
    let b = solve_pressure(&LevelSet::staircase(&mask)).unwrap();
    let d = a.p.values().iter().zip(b.p.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(d < 1e-9, "{d}");
}

#[test]
fn resting_disk_has_no_boundary_velocity() {
    let h = 1.0 / 32.0;
    let g = grid(96, h);
    for c in [(0.0, 0.0), (0.3, -0.2)] {
        let ls = LevelSet::from_shape(g, &Shape::disk(c, 1.0)).unwrap();
        let p = solve_pressure(&ls).unwrap().p;
        let v = boundary_velocity(&ls, &p).unwrap();
        assert!(v.max_interface < 0.05, "{c:?}: {}", v.max_interface);
    }
}

#[test]
fn separate_disks_reach_for_each_other() {
    let h = 1.0 / 32.0;
    let g = grid(128, h);
    let ls = LevelSet::from_shape(g, &Shape::two_disks((-1.0, 0.0), 0.7, (1.0, 0.0), 0.7)).unwrap();
    let p = solve_pressure(&ls).unwrap().p;
    let v = boundary_velocity(&ls, &p).unwrap();
    let facing = v.normal.values()[nearest(&g, -0.3 - h / 2.0, 0.0)];
    let away = v.normal.values()[nearest(&g, -1.7 + h / 2.0, 0.0)];
    assert!(facing > 0.0, "{facing}");
    assert!(away < 0.0, "{away}");
    let mirror = v.normal.values()[nearest(&g, 0.3 + h / 2.0, 0.0)];
    assert!((facing - mirror).abs() < 1e-6 * facing.abs().max(1.0), "{facing} {mirror}");
}

#[test]
fn mask_of_a_disk_level_set() {
    let h = 1.0 / 32.0;
    let g = grid(96, h);
    let ls = LevelSet::from_shape(g, &Shape::disk((0.0, 0.0), 1.0)).unwrap();
    let m = patch_mask(&ls);
    assert!((m.area() - PI).abs() < 2.0 * h, "{}", m.area());
    let c = m.complement();
    assert!((m.area() + c.area() - g.box_area()).abs() < 1e-9);
    assert!(m.bits().iter().zip(c.bits()).all(|(a, b)| a != b));
}

#[test]
fn reinitialization_restores_unit_gradient() {
    let g = grid(96, 1.0 / 32.0);
    // a level function with the right zero set but a bad gradient
    let phi = ScalarField::from_fn(g, |x, y| (x * x / 2.0 + 2.0 * y * y - 1.0) * 3.0);
    let mut ls = LevelSet::new(phi);
    let before = patch_mask(&ls);
    ls.reinitialize().unwrap();
    let (lo, hi) = ls.gradient_range(4.0);
    assert!(lo >= 0.8 && hi <= 1.2, "{lo} {hi}");
    let after = patch_mask(&ls);
    let moved = before.bits().iter().zip(after.bits()).filter(|(a, b)| a != b).count();
    assert!(moved <= 2, "{moved}");
}

#[test]
fn short_disk_run_stays_put() {
    let h = 1.0 / 32.0;
    let g = grid(96, h);
    let ls = LevelSet::from_shape(g, &Shape::disk((0.0, 0.0), 1.0)).unwrap();
    let area0 = ls.area();
    let mut vmax = 0.0f64;
    let run = evolve(ls, &HeleShawConfig::new(1.0), |f| {
        vmax = vmax.max(f.velocity.max_interface);
        Ok(())
    })
    .unwrap();
    assert_eq!(run.t, 1.0);
    assert!((run.level_set.area() - area0).abs() < 0.005 * area0);
    assert!(vmax < 5.0 * h, "{vmax}");
    assert!(fraenkel_asymmetry(&run.level_set).unwrap().value < 0.02);
}

#[test]
fn patch_must_keep_off_the_edge() {
    let g = grid(32, 1.0 / 8.0);
    let ls = LevelSet::from_shape(g, &Shape::disk((0.0, 0.0), 1.8)).unwrap();
    assert!(evolve(ls, &HeleShawConfig::new(0.1), |_| Ok(())).is_err());
}

//! Recomputes the `c₀` calibration: `-F/(A³|Ω|²)` over ellipses,
//! rectangles and two-disk dumbbells at h = 1/64.
//!
//!     cargo run --release --example calibrate

use cagg::field::{GridSpec, PatchMask};
use cagg::heleshaw::LevelSet;
use cagg::shape::{refined_ratio, C0_CALIBRATED};
use cagg::shapes::Shape;

fn main() -> cagg::Result<()> {
    let h = 1.0 / 64.0;
    let grid = GridSpec::centered(352, h, (0.0, 0.0))?;
    let mut worst = f64::INFINITY;
    let mut report = |name: String, ratio: f64| {
        println!("{name:<28} {ratio:.5}");
        worst = worst.min(ratio);
    };
    for aspect in [1.5f64, 2.0, 3.0, 4.0] {
        let shape = Shape::ellipse((0.0, 0.0), aspect.sqrt(), 1.0 / aspect.sqrt());
        let ls = LevelSet::from_shape(grid, &shape)?;
        report(format!("ellipse {aspect}:1"), refined_ratio(&ls)?);
    }
    for aspect in [1.0f64, 2.0, 3.0, 4.0] {
        let (a, b) = ((aspect * 2.0).sqrt(), (2.0 / aspect).sqrt());
        let mask = PatchMask::from_fn(grid, |x, y| x.abs() < a / 2.0 && y.abs() < b / 2.0);
        report(format!("rectangle {aspect}:1"), refined_ratio(&mask)?);
    }
    for sep in [0.8, 1.0, 1.2, 1.6, 2.0] {
        let shape = Shape::two_disks((-sep / 2.0 - 0.2, 0.0), 0.6, (sep / 2.0 + 0.2, 0.0), 0.6);
        let ls = LevelSet::from_shape(grid, &shape)?;
        report(format!("dumbbell gap {:.1}", sep - 0.8), refined_ratio(&ls)?);
    }
    println!("min ratio {worst:.5}, c0 = {:.5} (frozen: {C0_CALIBRATED})", 0.5 * worst);
    Ok(())
}

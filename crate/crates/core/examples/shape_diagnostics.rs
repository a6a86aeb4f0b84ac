//! Geometry and energy diagnostics of a few fixed patches.
//!
//!     cargo run --release --example shape_diagnostics

use std::f64::consts::PI;

use cagg::field::GridSpec;
use cagg::heleshaw::LevelSet;
use cagg::shape::{energy_gap, quantitative_isoperimetric_check, shape_report, talenti_profile};
use cagg::shapes::Shape;

fn main() -> cagg::Result<()> {
    let g = GridSpec::centered(160, 1.0 / 40.0, (0.0, 0.0))?;
    let shapes = [
        ("disk", Shape::disk((0.1, 0.0), 1.0)),
        ("ellipse 2:1", Shape::ellipse((0.0, 0.0), 2f64.sqrt(), 0.5f64.sqrt())),
        ("square", Shape::square((0.0, 0.0), PI.sqrt())),
        ("two disks", Shape::two_disks((-0.9, 0.0), 0.6, (0.9, 0.0), 0.6)),
    ];
    println!(
        "{:<12} {:>8} {:>8} {:>8} {:>9} {:>9} {:>10} {:>8}",
        "shape", "area", "perim", "A", "F", "g' bulk", "gap", "iso"
    );
    for (name, shape) in shapes {
        let ls = LevelSet::from_shape(g, &shape)?;
        let r = shape_report(&ls)?;
        let t = talenti_profile(&ls)?;
        let iso = quantitative_isoperimetric_check(&ls)?;
        let gap = energy_gap(&ls)?;
        println!(
            "{name:<12} {:8.4} {:8.4} {:8.4} {:9.5} {:9.3} {:10.3e} {:>8}",
            r.area,
            r.perimeter,
            r.asymmetry,
            r.f_value,
            t.bulk_max_slope(),
            gap.gap,
            if iso.passed { "ok" } else { "FAIL" }
        );
    }
    println!("disk references: F = 0, g' = -4π = {:.3}", -4.0 * PI);
    Ok(())
}

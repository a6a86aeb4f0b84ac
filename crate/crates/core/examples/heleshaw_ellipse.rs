//! A 2:1 ellipse relaxing under the Hele-Shaw flow: second moment, Talenti
//! functional, asymmetry and energy gap along the way.
//!
//!     cargo run --release --example heleshaw_ellipse

use std::f64::consts::PI;

use cagg::field::{lp_distance, second_moment, GridSpec};
use cagg::heleshaw::{evolve, HeleShawConfig, LevelSet};
use cagg::shape::{asymmetry_of, disk_fractions, energy_gap_of, f_value};
use cagg::shapes::Shape;

fn main() -> cagg::Result<()> {
    let g = GridSpec::centered(128, 1.0 / 32.0, (0.0, 0.0))?;
    let ls = LevelSet::from_shape(g, &Shape::ellipse((0.0, 0.0), 2f64.sqrt(), 0.5f64.sqrt()))?;
    let mut next = 0.0;
    println!("{:>6} {:>9} {:>9} {:>8} {:>10} {:>9}", "t", "M2", "F", "A", "gap", "max|V|");
    let out = evolve(ls, &HeleShawConfig::new(10.0), |f| {
        if f.t >= next || f.t >= 10.0 {
            next += 1.0;
            println!(
                "{:6.2} {:9.5} {:9.5} {:8.4} {:10.3e} {:9.4}",
                f.t,
                second_moment(f.fractions),
                f_value(f.fractions, &f.pressure.p),
                asymmetry_of(f.fractions)?.value,
                energy_gap_of(f.fractions)?.gap,
                f.velocity.max_interface
            );
        }
        Ok(())
    })?;
    let u = out.level_set.volume_fractions();
    let disk = disk_fractions(g, (0.0, 0.0), (out.area0 / PI).sqrt());
    println!("{} steps, |Ω| {:.6}, ‖χ - χ_B‖₁/|Ω| {:.4}", out.steps, u.integral(), lp_distance(&u, &disk, 1.0)? / out.area0);
    Ok(())
}

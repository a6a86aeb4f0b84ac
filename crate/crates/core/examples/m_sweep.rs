//! PME at growing m against a Hele-Shaw reference patch: the L¹ gap at t = 1
//! shrinks as the height constraint stiffens.
//!
//!     cargo run --release --example m_sweep

use cagg::cli::m_sweep;
use cagg::field::GridSpec;
use cagg::heleshaw::LevelSet;
use cagg::modulus::DEFAULT_C_D;
use cagg::shapes::Shape;

fn main() -> cagg::Result<()> {
    let g = GridSpec::centered(128, 1.0 / 32.0, (0.0, 0.0))?;
    let ls = LevelSet::from_shape(g, &Shape::ellipse((0.0, 0.0), 1.15, 0.87))?;
    println!("{:>4} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9}", "m", "L1 gap", "max ρ", "bound", "excess", "bound", "barrier");
    for r in m_sweep(ls, 1.0, &[8.0, 16.0, 32.0, 64.0], DEFAULT_C_D)? {
        println!(
            "{:4} {:8.4} {:8.4} {:8.4} {:9.2e} {:9.4} {:9.4}",
            r.m, r.l1_gap, r.max_height, r.height_bound, r.excess_mass, r.excess_bound, r.barrier_margin
        );
    }
    Ok(())
}

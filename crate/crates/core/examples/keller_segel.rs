//! Degenerate Keller-Segel: a unit square under its own Newtonian attraction
//! with diffusion ρ^m. Large m keeps the height near one while the square
//! rounds off.
//!
//!     cargo run --release --example keller_segel

use cagg::field::{center_of_mass, second_moment, GridSpec, ScalarField};
use cagg::jko::excess_mass;
use cagg::pme::{pressure, run, Drift, PmeConfig};

fn main() -> cagg::Result<()> {
    let g = GridSpec::centered(96, 1.0 / 24.0, (0.0, 0.0))?;
    let rho0 = ScalarField::from_fn(g, |x, y| if x.abs() < 0.75 && y.abs() < 0.75 { 1.0 } else { 0.0 });
    for m in [4.0, 16.0] {
        println!("m = {m}");
        let cfg = PmeConfig::new(m, Drift::SelfConsistent, 0.2).with_record_every(0.05);
        run(rho0.clone(), cfg, |t, rho| {
            let c = center_of_mass(rho)?;
            println!(
                "  t {t:.2}  max ρ {:.4}  excess {:.2e}  M2 {:.5}  max p {:.4}  support {:.3}",
                rho.max(),
                excess_mass(rho),
                second_moment(rho),
                pressure(rho, m)?.p.max(),
                rho.support_radius(c, 0.0)
            );
            Ok(())
        })?;
    }
    Ok(())
}

//! Porous-medium solver against the self-similar source solution, at two
//! resolutions, for a few exponents.
//!
//!     cargo run --release --example pme_barenblatt

use cagg::field::{lp_distance, mass, GridSpec};
use cagg::pme::{barenblatt, run, Drift, PmeConfig};

fn main() -> cagg::Result<()> {
    let (t0, t1) = (0.1, 0.3);
    for m in [2.0, 3.0, 4.0] {
        let mut prev: Option<f64> = None;
        for n in [48usize, 96] {
            let g = GridSpec::centered(n, 4.0 / n as f64, (0.0, 0.0))?;
            let rho0 = barenblatt(g, m, t0, 1.0, (0.0, 0.0));
            let out = run(rho0, PmeConfig::new(m, Drift::zero(g), t1 - t0), |_, _| Ok(()))?;
            let err = lp_distance(&out.rho, &barenblatt(g, m, t1, 1.0, (0.0, 0.0)), 1.0)?;
            let ratio = prev.map(|p| format!("  ratio {:.2}", p / err)).unwrap_or_default();
            println!("m = {m}  n = {n:3}  steps {:5}  mass {:.12}  L1 error {err:.3e}{ratio}", out.steps, mass(&out.rho));
            prev = Some(err);
        }
    }
    Ok(())
}

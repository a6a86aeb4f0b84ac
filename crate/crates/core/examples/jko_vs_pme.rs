//! Cross-validation: the time-varying E_m JKO scheme against the porous
//! medium solver with the same frozen potentials, for shrinking τ with
//! ε = τ²/2. The start is half-height on a disk, whose E_∞ flow stays a flat
//! disk with height ρ₀/(1 - ρ₀t).
//!
//!     cargo run --release --example jko_vs_pme

use cagg::field::{lp_distance, w2_estimate_normalized, GridSpec, ScalarField, SinkhornOptions};
use cagg::jko::{run_flow, Schedule};
use cagg::pme::{run, Drift, FrozenSequence, PmeConfig};
use cagg::shape::disk_fractions;

fn main() -> cagg::Result<()> {
    let (m, t_end, cells) = (16.0, 0.5, 32usize);
    let g = GridSpec::centered(6 * cells, 1.0 / cells as f64, (0.0, 0.0))?;
    let exact = |t: f64| {
        let f = 1.0 - 0.5 * t;
        disk_fractions(g, (0.0, 0.0), 2f64.sqrt() * f.sqrt()).scale(0.5 / f)
    };
    let times: Vec<f64> = (0..=64).map(|k| k as f64 * t_end / 64.0).collect();
    let dens: Vec<ScalarField> = times.iter().map(|&t| exact(t)).collect();
    let seq = FrozenSequence::from_densities(times, &dens, m)?;
    let pme = run(exact(0.0), PmeConfig::new(m, Drift::FrozenSequence(seq), t_end), |_, _| Ok(()))?;
    println!("PME: L1 to the flat disk {:.4}", lp_distance(&pme.rho, &exact(t_end), 1.0)?);
    for n in [4usize, 8, 16] {
        let tau = t_end / n as f64;
        let eps = 0.5 * tau * tau;
        let inf = run_flow(&exact(0.0), tau, n, &Schedule::Interaction, eps)?;
        let em = run_flow(&exact(0.0), tau, n, &Schedule::Power { m, mus: inf.states[..n].to_vec() }, eps)?;
        let w2 = w2_estimate_normalized(em.last(), &pme.rho, 8.0, &SinkhornOptions::default())?;
        println!(
            "n {n:2}  W2(JKO_m, PME) {w2:.4}  L1(JKO_inf, exact) {:.4}",
            lp_distance(inf.last(), &exact(t_end), 1.0)?
        );
    }
    Ok(())
}

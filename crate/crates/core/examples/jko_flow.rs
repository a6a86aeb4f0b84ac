//! Entropic JKO steps of the height-constrained interaction energy from a
//! saturated ellipse.
//!
//!     cargo run --release --example jko_flow

use cagg::field::{GridSpec, ScalarField};
use cagg::jko::{default_eps, run_flow, Schedule};

fn main() -> cagg::Result<()> {
    let g = GridSpec::centered(128, 1.0 / 16.0, (0.0, 0.0))?;
    let rho0 = ScalarField::from_fn(g, |x, y| if (x / 1.4).powi(2) + (y / 0.7).powi(2) < 1.0 { 1.0 } else { 0.0 });
    let tau = 0.1;
    let traj = run_flow(&rho0, tau, 8, &Schedule::Interaction, default_eps(&g))?;
    for (row, step) in traj.series()?.rows().iter().skip(1).zip(&traj.steps) {
        println!(
            "t {:.2}  E {:.5}  M2 {:.5}  max ρ {:.6}  W2 step {:.4}  outer {:2}  objective ≤ E + slack: {}",
            row.t,
            row.e_inf,
            row.m2,
            step.rho_out.max(),
            row.w2_to_prev,
            step.outer,
            step.objective_decreases(0.0)
        );
    }
    Ok(())
}

//! The log-Lipschitz moduli and the Euler iterates of F' = -C_d ω(F).
//!
//!     cargo run --release --example moduli

use cagg::modulus::{branch_omega, f_tau_n, flow_f, omega, sigma, ModulusParams};

fn main() -> cagg::Result<()> {
    println!("branch point of ω: {:.6}", branch_omega());
    for x in [1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0] {
        println!("x {x:<6} ω {:.6}  σ {:.6}", omega(x)?, sigma(x)?);
    }
    let p = ModulusParams::new(1.0)?;
    let (x, t) = (0.05, 1.0);
    let exact = flow_f(x, t, &p)?;
    println!("F_1(0.05) = {exact:.10}");
    for n in [10usize, 100, 1000] {
        let e = (exact - f_tau_n(x, t / n as f64, n, &p)).abs();
        println!("n {n:5}  Euler error {e:.3e}  bound C_d ω(x) t/n {:.3e}", omega(x)? * t / n as f64);
    }
    Ok(())
}

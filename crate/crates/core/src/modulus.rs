//! Log-Lipschitz moduli and the scalar ODE that controls stability of
//! ω-convex gradient flows.
//!
//! `omega` is the modulus of convexity of the constrained interaction energy,
//! `sigma` the log-Lipschitz modulus of the Newtonian velocity field. `f_tau`
//! is one explicit Euler step of `F' = -C_d ω(F)` and `flow_f` its exact flow.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Default dimension constant for unit mass patches in 2-D.
pub const DEFAULT_C_D: f64 = 1.0 + 1.0 / (2.0 * std::f64::consts::PI);

const RK4_MAX_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusParams {
    pub c_d: f64,
    pub branch_omega: f64,
    pub branch_sigma: f64,
}

impl ModulusParams {
    pub fn new(c_d: f64) -> Result<Self> {
        if !(c_d >= 1.0) || !c_d.is_finite() {
            return Err(Error::domain(format!("C_d must be >= 1, got {c_d}")));
        }
        Ok(Self {
            c_d,
            branch_omega: branch_omega(),
            branch_sigma: branch_sigma(),
        })
    }

    /// λ_ω of the ω-convexity inequality.
    pub fn lambda_omega(&self) -> f64 {
        -self.c_d
    }
}

impl Default for ModulusParams {
    fn default() -> Self {
        Self::new(DEFAULT_C_D).expect("default constant is valid")
    }
}

/// `e^(-1-√2)`
pub fn branch_omega() -> f64 {
    (-1.0 - SQRT_2).exp()
}

/// `e^((-1-√2)/2)`
pub fn branch_sigma() -> f64 {
    ((-1.0 - SQRT_2) / 2.0).exp()
}

fn check_nonneg(x: f64, name: &str) -> Result<()> {
    if x < 0.0 || x.is_nan() {
        return Err(Error::domain(format!("{name} requires x >= 0, got {x}")));
    }
    Ok(())
}

pub fn omega(x: f64) -> Result<f64> {
    check_nonneg(x, "omega")?;
    let a = branch_omega();
    Ok(if x == 0.0 {
        0.0
    } else if x <= a {
        x * x.ln().abs()
    } else {
        (x * x + 2.0 * (1.0 + SQRT_2) * a * x).sqrt()
    })
}

pub fn sigma(x: f64) -> Result<f64> {
    check_nonneg(x, "sigma")?;
    let b = branch_sigma();
    Ok(if x == 0.0 {
        0.0
    } else if x <= b {
        2.0 * x * x.ln().abs()
    } else {
        (x * x + 2.0 * (1.0 + SQRT_2) * branch_omega()).sqrt()
    })
}

fn omega_unchecked(x: f64) -> f64 {
    omega(x.max(0.0)).unwrap_or(0.0)
}

/// One explicit Euler step: `x - C_d τ ω(x)` for `x >= 0`, zero otherwise.
pub fn f_tau(x: f64, tau: f64, params: &ModulusParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    x - params.c_d * tau * omega_unchecked(x)
}

/// `n`-fold composition of [`f_tau`].
pub fn f_tau_n(x: f64, tau: f64, n: usize, params: &ModulusParams) -> f64 {
    (0..n).fold(x, |acc, _| f_tau(acc, tau, params))
}

/// Flow of `d/dt F = -C_d ω(F)`, `F_0 = x`.
///
/// Closed form `x^(e^(C_d t))` on `[0, e^(-1-√2)]`; above the branch point the
/// ODE is integrated with RK4 until the trajectory enters the closed-form
/// region.
pub fn flow_f(x: f64, t: f64, params: &ModulusParams) -> Result<f64> {
    check_nonneg(x, "flow_f")?;
    check_nonneg(t, "flow_f time")?;
    let a = params.branch_omega;
    if x == 0.0 || t == 0.0 {
        return Ok(x);
    }
    if x <= a {
        return Ok(closed_form(x, t, params.c_d));
    }
    let rhs = |y: f64| -params.c_d * omega_unchecked(y);
    let steps = (t / RK4_MAX_STEP).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut y = x;
    for k in 0..steps {
        if y <= a {
            let remaining = t - k as f64 * dt;
            return Ok(closed_form(y, remaining, params.c_d));
        }
        let k1 = rhs(y);
        let k2 = rhs(y + 0.5 * dt * k1);
        let k3 = rhs(y + 0.5 * dt * k2);
        let k4 = rhs(y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(y.max(0.0))
}

fn closed_form(x: f64, t: f64, c_d: f64) -> f64 {
    x.powf((c_d * t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_values() {
        assert_eq!(omega(0.0).unwrap(), 0.0);
        let a = branch_omega();
        let expected = (1.0 + SQRT_2) * a;
        assert!((omega(a).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.21588).abs() < 1e-4);
        let c = 2.0 * (1.0 + SQRT_2) * a;
        assert!((omega(1.0).unwrap() - (1.0 + c).sqrt()).abs() < 1e-15);
        assert!(omega(-1.0).is_err());
    }

    #[test]
    fn sigma_values() {
        assert_eq!(sigma(0.0).unwrap(), 0.0);
        let b = branch_sigma();
        // both branches give (1+√2)·b at the branch point
        assert!((sigma(b).unwrap() - (1.0 + SQRT_2) * b).abs() < 1e-15);
        assert!((sigma(0.1).unwrap() - 0.2 * 10f64.ln()).abs() < 1e-15);
        assert!(sigma(-0.5).is_err());
    }

    #[test]
    fn branch_points_related() {
        let p = ModulusParams::default();
        assert!((p.branch_omega - p.branch_sigma * p.branch_sigma).abs() < 1e-16);
        assert_eq!(p.lambda_omega(), -p.c_d);
        assert!(ModulusParams::new(0.5).is_err());
    }

    #[test]
    fn f_tau_cases() {
        let p = ModulusParams::new(1.0).unwrap();
        assert_eq!(f_tau(0.0, 0.1, &p), 0.0);
        assert_eq!(f_tau(-3.0, 0.1, &p), 0.0);
        // e^-3 sits on the x|log x| branch
        let x = (-3.0f64).exp();
        let expected = x - 0.1 * 3.0 * x;
        assert!((f_tau(x, 0.1, &p) - expected).abs() < 1e-15);
        // e^-2 is above the branch point
        let x = (-2.0f64).exp();
        let w = (x * x + 2.0 * (1.0 + SQRT_2) * branch_omega() * x).sqrt();
        assert!((f_tau(x, 0.1, &p) - (x - 0.1 * w)).abs() < 1e-15);
    }

    #[test]
    fn flow_closed_form() {
        let p = ModulusParams::new(1.0).unwrap();
        assert_eq!(flow_f(0.3, 0.0, &p).unwrap(), 0.3);
        let v = flow_f(0.01, 2f64.ln(), &p).unwrap();
        assert!((v - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn flow_above_branch_is_monotone() {
        let p = ModulusParams::default();
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let v = flow_f(0.8, 0.1 * k as f64, &p).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(flow_f(0.5, 1.0, &p).unwrap() <= flow_f(0.6, 1.0, &p).unwrap());
    }
}

//! Discrete gradient flows by entropic proximal steps.
//!
//! A step solves
//! `min_γ ⟨c, γ⟩ + ε H(γ) + τ E(γᵀ1)` over plans whose first marginal is
//! the current density, with `c = |x - y|²/2`. Alternating KL projections
//! reduce it to Sinkhorn scalings plus a pointwise proximal map of `E`.
//! The quadratic interaction energy is handled by freezing its potential
//! and iterating to a fixed point.

use crate::error::{Error, Result};
use crate::field::{mass, second_moment, GibbsKernel, GridSpec, ScalarField};
use crate::newtonian::{MollifierSpec, Newtonian};

/// Densities above `1 + HEIGHT_TOL` count as infeasible for the
/// constrained energies.
pub const HEIGHT_TOL: f64 = 1e-9;

/// Output densities below this are set to zero. Entropic plans have
/// Gaussian tails that would otherwise creep a few cells per step towards
/// the box edge; the mass dropped is below `1e-14 × box area`.
pub const TAIL_FLUSH: f64 = 1e-14;

/// Kernel weights below this are dropped inside the proximal loop.
const KERNEL_TRUNCATION: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyKind {
    /// `E_∞(ρ) = ½∫Nρ dρ` on `ρ ≤ 1`.
    ConstrainedInteraction,
    /// `Ẽ_∞(ρ; μ) = ∫Nμ dρ` on `ρ ≤ 1`.
    FrozenPotential,
    /// `E_m(ρ; μ) = 1/(m-1)∫ρ^m + ∫ψ_{1/m} * Nμ dρ`.
    PowerEntropyFrozen,
}

#[derive(Debug, Clone)]
pub struct EnergySpec {
    pub kind: EnergyKind,
    pub frozen_mu: Option<ScalarField>,
    pub m: Option<f64>,
    pub mollifier: Option<MollifierSpec>,
    /// Precomputed linear potential (`Nμ` or `ψ * Nμ`); derived from
    /// `frozen_mu` when absent.
    pub potential: Option<ScalarField>,
}

impl EnergySpec {
    pub fn constrained() -> Self {
        Self {
            kind: EnergyKind::ConstrainedInteraction,
            frozen_mu: None,
            m: None,
            mollifier: None,
            potential: None,
        }
    }

    pub fn frozen(mu: ScalarField) -> Self {
        Self {
            kind: EnergyKind::FrozenPotential,
            frozen_mu: Some(mu),
            m: None,
            mollifier: None,
            potential: None,
        }
    }

    /// `E_m` with the default mollifier of scale `1/m`.
    pub fn power(mu: ScalarField, m: f64) -> Result<Self> {
        Ok(Self {
            kind: EnergyKind::PowerEntropyFrozen,
            frozen_mu: Some(mu),
            m: Some(m),
            mollifier: Some(MollifierSpec::new(m)?),
            potential: None,
        })
    }

    /// Replaces the potential derived from `frozen_mu`, e.g. by an exactly
    /// linear one.
    pub fn with_potential(mut self, w: ScalarField) -> Self {
        self.potential = Some(w);
        self
    }

    pub fn is_constrained(&self) -> bool {
        self.kind != EnergyKind::PowerEntropyFrozen
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EnergyKind::ConstrainedInteraction => Ok(()),
            EnergyKind::FrozenPotential | EnergyKind::PowerEntropyFrozen => {
                let mu = self
                    .frozen_mu
                    .as_ref()
                    .ok_or_else(|| Error::domain("frozen energies need frozen_mu"))?;
                if mu.max() > 1.0 + 1e-6 {
                    return Err(Error::domain(format!("frozen_mu exceeds height 1: {}", mu.max())));
                }
                if self.kind == EnergyKind::PowerEntropyFrozen {
                    match self.m {
                        Some(m) if m > 1.0 => {}
                        _ => return Err(Error::domain("E_m needs m > 1")),
                    }
                    if self.mollifier.is_none() {
                        return Err(Error::domain("E_m needs a mollifier"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Linear part of the energy as a potential on cells.
    fn potential(&self, grid: GridSpec) -> Result<Option<ScalarField>> {
        if let Some(w) = &self.potential {
            grid.ensure_same(w.grid())?;
            return Ok(Some(w.clone()));
        }
        let op = Newtonian::new(grid);
        match self.kind {
            EnergyKind::ConstrainedInteraction => Ok(None),
            EnergyKind::FrozenPotential => Ok(Some(op.potential(self.frozen_mu.as_ref().expect("validated"))?)),
            EnergyKind::PowerEntropyFrozen => Ok(Some(op.mollified_drift(
                self.frozen_mu.as_ref().expect("validated"),
                self.mollifier.as_ref().expect("validated"),
            )?)),
        }
    }
}

fn dot(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() * a.grid().cell_area()
}

/// Energy of `rho`; `+∞` when a constrained energy sees `ρ > 1`.
pub fn energy(rho: &ScalarField, spec: &EnergySpec) -> Result<f64> {
    spec.validate()?;
    if spec.is_constrained() && rho.max() > 1.0 + HEIGHT_TOL {
        return Ok(f64::INFINITY);
    }
    match spec.kind {
        EnergyKind::ConstrainedInteraction => crate::newtonian::interaction_energy(rho),
        EnergyKind::FrozenPotential => Ok(dot(rho, &spec.potential(*rho.grid())?.expect("frozen"))),
        EnergyKind::PowerEntropyFrozen => {
            let m = spec.m.expect("validated");
            let w = spec.potential(*rho.grid())?.expect("frozen");
            let power = rho.values().iter().map(|v| v.powf(m)).sum::<f64>() * rho.grid().cell_area() / (m - 1.0);
            Ok(power + dot(rho, &w))
        }
    }
}

/// `h² Σ (ρ - 1)₊`.
pub fn excess_mass(rho: &ScalarField) -> f64 {
    rho.values().iter().map(|v| (v - 1.0).max(0.0)).sum::<f64>() * rho.grid().cell_area()
}

#[derive(Debug, Clone)]
pub struct JkoStep {
    pub rho_in: ScalarField,
    pub rho_out: ScalarField,
    pub tau: f64,
    /// `Σγ|x - y|²` of the entropic plan; at least `W₂²(in, out)`.
    pub transport: f64,
    /// `transport/2τ + E(out)` for the energy that defined the step.
    pub objective: f64,
    /// `E(in)` for the same energy.
    pub energy_in: f64,
    /// `(ε/τ)(H(diag a) - H(γ))`: how far the entropy term lets the
    /// objective rise above `E(in)`.
    pub entropic_slack: f64,
    pub sinkhorn_eps: f64,
    /// Sinkhorn sweeps (summed over outer iterations).
    pub iterations: usize,
    /// Outer fixed-point iterations (1 for frozen energies).
    pub outer: usize,
}

impl JkoStep {
    /// Transport-plan estimate of the probability-normalized `W₂(in, out)`.
    pub fn w2_plan(&self) -> f64 {
        (self.transport / mass(&self.rho_in)).sqrt()
    }

    /// `transport/2τ + E(out) ≤ E(in) + slack`.
    pub fn objective_decreases(&self, extra: f64) -> bool {
        self.objective <= self.energy_in + self.entropic_slack + extra
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JkoOptions {
    pub max_iter: usize,
    /// Relative L¹ marginal violation.
    pub tol: f64,
    /// `‖ν_{k+1} - ν_k‖₁` for the outer fixed point.
    pub fixed_point_tol: f64,
    pub max_outer: usize,
}

impl Default for JkoOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-9,
            fixed_point_tol: 1e-6,
            max_outer: 50,
        }
    }
}

/// Default entropic regularization `2h²`.
pub fn default_eps(grid: &GridSpec) -> f64 {
    2.0 * grid.cell_area()
}

struct Prox<'a> {
    cap: Option<f64>,
    cell: f64,
    /// `exp(-σ (w - min w))`.
    gibbs: Vec<f64>,
    /// `(σ, m, w - min w)` for the power energy.
    power: Option<(f64, f64, &'a [f64])>,
}

impl Prox<'_> {
    fn apply(&self, q: f64, k: usize) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        if let Some((sigma, m, shifted)) = self.power {
            return power_prox(q, sigma, m, shifted[k], self.cell);
        }
        let p = q * self.gibbs[k];
        match self.cap {
            Some(c) => p.min(c),
            None => p,
        }
    }
}

/// Minimizer over `p > 0` of
/// `σ(c (p/c)^m/(m-1) + w p) + p log(p/q) - p`, with `c = h²`: monotone
/// Newton in `log p` from the right.
fn power_prox(q: f64, sigma: f64, m: f64, w: f64, cell: f64) -> f64 {
    let log_c = cell.ln();
    let target = q.ln() - sigma * w;
    let k = sigma * m / (m - 1.0);
    let g = |s: f64| k * ((m - 1.0) * (s - log_c)).exp() + s - target;
    let mut s = target;
    for _ in 0..500 {
        let e = k * ((m - 1.0) * (s - log_c)).exp();
        let val = e + s - target;
        if val.abs() < 1e-12 {
            break;
        }
        let step = val / ((m - 1.0) * e + 1.0);
        s -= step;
        if step.abs() < 1e-14 * s.abs().max(1.0) {
            break;
        }
    }
    debug_assert!(g(s).abs() < 1e-8, "power prox residual {}", g(s));
    s.exp()
}

struct Solved {
    out: Vec<f64>,
    v: Vec<f64>,
    u: Vec<f64>,
    iterations: usize,
}

fn safe_div(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Sinkhorn-like scaling with a proximal second marginal.
fn scale(kernel: &GibbsKernel, a: &[f64], prox: &Prox, v0: Option<&[f64]>, opts: &JkoOptions) -> Result<Solved> {
    let n = a.len();
    let total: f64 = a.iter().sum();
    let mut v = v0.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    let mut u = vec![0.0; n];
    let mut kv = vec![0.0; n];
    let mut ku = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut violation = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iter {
        kernel.apply(&v, &mut kv, &mut tmp);
        for k in 0..n {
            u[k] = safe_div(a[k], kv[k]);
        }
        kernel.apply(&u, &mut ku, &mut tmp);
        for k in 0..n {
            out[k] = prox.apply(ku[k], k);
            v[k] = safe_div(out[k], ku[k]);
        }
        it += 1;
        if it % 5 == 0 {
            kernel.apply(&v, &mut kv, &mut tmp);
            violation = a
                .iter()
                .zip(u.iter().zip(&kv))
                .map(|(&ak, (&uk, &kvk))| (uk * kvk - ak).abs())
                .sum::<f64>()
                / total;
            if !violation.is_finite() {
                return Err(Error::domain("proximal transport exceeds the kernel reach"));
            }
            if violation < opts.tol {
                return Ok(Solved { out, v, u, iterations: it });
            }
        }
    }
    Err(Error::NoConvergence {
        what: "entropic JKO step",
        iterations: it,
        residual: violation,
    })
}

/// `Σγ log γ - γ` for `γ = diag(u) K diag(v)`, from the scalings.
fn plan_entropy(kernel: &GibbsKernel, a: &[f64], s: &Solved, transport_cost: f64) -> f64 {
    let mut acc = 0.0;
    for (k, &ak) in a.iter().enumerate() {
        if ak > 0.0 {
            acc += ak * s.u[k].ln();
        }
        if s.out[k] > 0.0 {
            acc += s.out[k] * s.v[k].ln();
        }
    }
    let total: f64 = a.iter().sum();
    acc - transport_cost / kernel.eps() - total
}

fn diag_entropy(a: &[f64]) -> f64 {
    a.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln() - x).sum()
}

struct Frozen<'a> {
    rho: &'a ScalarField,
    tau: f64,
    eps: f64,
    cap: bool,
    w: &'a ScalarField,
    m: Option<f64>,
}

struct FrozenOutcome {
    out: ScalarField,
    transport: f64,
    slack: f64,
    iterations: usize,
    v: Vec<f64>,
}

fn frozen_step(p: &Frozen, kernel: &GibbsKernel, v0: Option<&[f64]>, opts: &JkoOptions) -> Result<FrozenOutcome> {
    let g = *p.rho.grid();
    let h2 = g.cell_area();
    let a: Vec<f64> = p.rho.values().iter().map(|v| v * h2).collect();
    let sigma = p.tau / p.eps;
    let w_min = p.w.min();
    let shifted: Vec<f64> = p.w.values().iter().map(|w| w - w_min).collect();
    let prox = Prox {
        cap: p.cap.then_some(h2),
        cell: h2,
        gibbs: shifted.iter().map(|w| (-sigma * w).exp()).collect(),
        power: p.m.map(|m| (sigma, m, shifted.as_slice())),
    };
    let s = scale(kernel, &a, &prox, v0, opts)?;
    let (half_cost, _) = kernel.plan_cost(&s.u, &s.v);
    let entropy = plan_entropy(kernel, &a, &s, half_cost);
    let slack = (p.eps / p.tau) * (diag_entropy(&a) - entropy);
    let out = ScalarField::from_values(
        g,
        s.out.iter().map(|x| if *x < TAIL_FLUSH * h2 { 0.0 } else { x / h2 }).collect(),
    )?;
    Ok(FrozenOutcome {
        out,
        transport: 2.0 * half_cost,
        slack: slack.max(0.0),
        iterations: s.iterations,
        v: s.v,
    })
}

fn check_step_input(rho: &ScalarField, tau: f64, eps: f64, constrained: bool) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("tau must be nonnegative, got {tau}")));
    }
    if !(eps > 0.0) {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    if !rho.is_density() || !(mass(rho) > 0.0) {
        return Err(Error::domain("JKO step needs a nonnegative density with positive mass"));
    }
    if constrained && rho.max() > 1.0 + HEIGHT_TOL {
        return Err(Error::domain(format!("infeasible input: max density {}", rho.max())));
    }
    Ok(())
}

fn identity_step(rho: &ScalarField, spec: &EnergySpec, eps: f64) -> Result<JkoStep> {
    let e = energy(rho, spec)?;
    Ok(JkoStep {
        rho_in: rho.clone(),
        rho_out: rho.clone(),
        tau: 0.0,
        transport: 0.0,
        objective: e,
        energy_in: e,
        entropic_slack: 0.0,
        sinkhorn_eps: eps,
        iterations: 0,
        outer: 0,
    })
}

/// One entropic JKO step. `eps` is absolute (length²); see
/// [`default_eps`]. The constrained interaction energy goes through
/// [`fixed_point_step`].
pub fn jko_step(rho: &ScalarField, tau: f64, spec: &EnergySpec, eps: f64) -> Result<JkoStep> {
    jko_step_with(rho, tau, spec, eps, &JkoOptions::default())
}

pub fn jko_step_with(rho: &ScalarField, tau: f64, spec: &EnergySpec, eps: f64, opts: &JkoOptions) -> Result<JkoStep> {
    spec.validate()?;
    if spec.kind == EnergyKind::ConstrainedInteraction {
        return fixed_point_step_with(rho, tau, eps, opts);
    }
    check_step_input(rho, tau, eps, spec.is_constrained())?;
    if tau == 0.0 {
        return identity_step(rho, spec, eps);
    }
    let g = *rho.grid();
    let w = spec.potential(g)?.expect("frozen energies carry a potential");
    let kernel = GibbsKernel::new(&g, eps, 0.5, KERNEL_TRUNCATION)?;
    let problem = Frozen {
        rho,
        tau,
        eps,
        cap: spec.is_constrained(),
        w: &w,
        m: if spec.kind == EnergyKind::PowerEntropyFrozen { spec.m } else { None },
    };
    let r = frozen_step(&problem, &kernel, None, opts)?;
    let e_out = energy(&r.out, spec)?;
    Ok(JkoStep {
        rho_in: rho.clone(),
        objective: r.transport / (2.0 * tau) + e_out,
        energy_in: energy(rho, spec)?,
        rho_out: r.out,
        tau,
        transport: r.transport,
        entropic_slack: r.slack,
        sinkhorn_eps: eps,
        iterations: r.iterations,
        outer: 1,
    })
}

/// `E_∞` step by lagging the potential: `ν ← step(ρ, Ẽ_∞(·; ν))` until
/// `‖Δν‖₁ < 1e-6`.
///
/// The fixed point minimizes the frozen problem at its own potential; for
/// `E_∞` itself the objective can exceed `E(in)` by the slack plus
/// `-E_∞(ρ - ν) ≥ 0`, which is folded into `entropic_slack`.
pub fn fixed_point_step(rho: &ScalarField, tau: f64, eps: f64) -> Result<JkoStep> {
    fixed_point_step_with(rho, tau, eps, &JkoOptions::default())
}

pub fn fixed_point_step_with(rho: &ScalarField, tau: f64, eps: f64, opts: &JkoOptions) -> Result<JkoStep> {
    check_step_input(rho, tau, eps, true)?;
    let spec = EnergySpec::constrained();
    if tau == 0.0 {
        return identity_step(rho, &spec, eps);
    }
    let g = *rho.grid();
    let op = Newtonian::new(g);
    let kernel = GibbsKernel::new(&g, eps, 0.5, KERNEL_TRUNCATION)?;
    let mut nu = rho.clone();
    let mut v: Option<Vec<f64>> = None;
    let mut iterations = 0;
    for outer in 1..=opts.max_outer {
        let w = op.potential(&nu)?;
        let problem = Frozen {
            rho,
            tau,
            eps,
            cap: true,
            w: &w,
            m: None,
        };
        let r = frozen_step(&problem, &kernel, v.as_deref(), opts)?;
        iterations += r.iterations;
        let change = crate::field::lp_distance(&r.out, &nu, 1.0)?;
        nu = r.out;
        v = Some(r.v);
        if change < opts.fixed_point_tol {
            let e_in = energy(rho, &spec)?;
            let e_out = energy(&nu, &spec)?;
            let diff = rho.zip_map(&nu, |a, b| a - b)?;
            let lag = -signed_interaction(&op, &diff)?;
            return Ok(JkoStep {
                rho_in: rho.clone(),
                rho_out: nu,
                tau,
                transport: r.transport,
                objective: r.transport / (2.0 * tau) + e_out,
                energy_in: e_in,
                entropic_slack: r.slack + lag.max(0.0),
                sinkhorn_eps: eps,
                iterations,
                outer,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "E_inf fixed point",
        iterations: opts.max_outer,
        residual: f64::NAN,
    })
}

/// `½∫N f df` for a signed field (no density check).
fn signed_interaction(op: &Newtonian, f: &ScalarField) -> Result<f64> {
    let pos = f.map(|v| v.max(0.0));
    let neg = f.map(|v| (-v).max(0.0));
    let (pp, pn) = (op.potential(&pos)?, op.potential(&neg)?);
    let phi = pp.zip_map(&pn, |a, b| a - b)?;
    Ok(0.5 * dot(f, &phi))
}

/// Energy sequence for [`run_flow`].
#[derive(Debug, Clone)]
pub enum Schedule {
    /// `E_∞` by fixed-point steps.
    Interaction,
    /// `Ẽ_∞(·; μ)` with one `μ` for every step.
    Frozen(ScalarField),
    /// `E_m(·; μ_i)` with `μ_i` the i-th `E_∞` iterate.
    Power { m: f64, mus: Vec<ScalarField> },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tau: f64,
    /// `n + 1` densities starting with `rho0`.
    pub states: Vec<ScalarField>,
    pub steps: Vec<JkoStep>,
}

impl Trajectory {
    pub fn last(&self) -> &ScalarField {
        self.states.last().expect("trajectory holds rho0")
    }

    /// One diagnostic row per state.
    pub fn series(&self) -> Result<crate::series::TimeSeries> {
        use crate::series::{Row, TimeSeries};
        let mut out = TimeSeries::new();
        for (k, rho) in self.states.iter().enumerate() {
            let mut row = Row::at(k as f64 * self.tau);
            row.mass = mass(rho);
            row.m2 = second_moment(rho);
            let c = crate::field::center_of_mass(rho)?;
            row.com_x = c.0;
            row.com_y = c.1;
            row.e_inf = energy(rho, &EnergySpec::constrained())?;
            row.excess_mass = excess_mass(rho);
            row.support_radius = rho.support_radius(c, 1e-6);
            if k > 0 {
                row.w2_to_prev = self.steps[k - 1].w2_plan();
            }
            out.push(row)?;
        }
        Ok(out)
    }
}

/// `n` steps of size `tau` from `rho0`.
pub fn run_flow(rho0: &ScalarField, tau: f64, n: usize, schedule: &Schedule, eps: f64) -> Result<Trajectory> {
    let mut states = vec![rho0.clone()];
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let cur = states.last().expect("nonempty");
        let step = match schedule {
            Schedule::Interaction => fixed_point_step(cur, tau, eps)?,
            Schedule::Frozen(mu) => jko_step(cur, tau, &EnergySpec::frozen(mu.clone()), eps)?,
            Schedule::Power { m, mus } => {
                let mu = mus.get(i).ok_or_else(|| {
                    Error::domain(format!("E_m schedule has {} potentials, step {i} needs one", mus.len()))
                })?;
                jko_step(cur, tau, &EnergySpec::power(mu.clone(), *m)?, eps)?
            }
        };
        states.push(step.rho_out.clone());
        steps.push(step);
    }
    Ok(Trajectory { tau, states, steps })
}

//! Porous medium equation with drift, `ρ_t = ∇·(ρ∇Φ) + Δρ^m + ρf`.
//!
//! Explicit conservative finite volumes on the cell grid. Face fluxes are
//! `v⁺ρ_L + v⁻ρ_R - (ρ_R^m - ρ_L^m)/h` with the face velocity
//! `v = -(Φ_R - Φ_L)/h`; the box edge carries no flux. Only the bounding box of
//! the support (plus one cell) is touched, since every flux outside it is zero.
//!
//! Explicit stencils leak a little mass one cell per step ahead of the true
//! front. Values below [`FLUSH`] are set to zero; the mass so removed is far
//! below round-off of the total.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{GridSpec, PatchMask, ScalarField};
use crate::newtonian::{MollifierSpec, Newtonian};
use crate::SUPPORT_MARGIN;

/// Densities below this are flushed to zero after each step.
pub const FLUSH: f64 = 1e-30;

/// Source rate `f(x, y, t)` in `ρ_t = … + ρf`.
pub type Source = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Drift potential `Φ` entering `∇·(ρ∇Φ)`.
#[derive(Clone)]
pub enum Drift {
    /// Fixed potential for all times.
    External(ScalarField),
    /// Piecewise-constant potential over stored snapshots.
    FrozenSequence(FrozenSequence),
    /// Keller–Segel coupling `Φ = N * ρ`, recomputed every step.
    SelfConsistent,
}

impl Drift {
    pub fn zero(grid: GridSpec) -> Self {
        Drift::External(ScalarField::zeros(grid))
    }
}

impl std::fmt::Debug for Drift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Drift::External(_) => f.write_str("External"),
            Drift::FrozenSequence(s) => write!(f, "FrozenSequence({} snapshots)", s.len()),
            Drift::SelfConsistent => f.write_str("SelfConsistent"),
        }
    }
}

/// Potentials `Φ(·, t_k)`; the one in force at `t` is the last with `t_k ≤ t`.
#[derive(Debug, Clone)]
pub struct FrozenSequence {
    times: Vec<f64>,
    potentials: Vec<Arc<ScalarField>>,
}

impl FrozenSequence {
    pub fn new(times: Vec<f64>, potentials: Vec<ScalarField>) -> Result<Self> {
        if times.is_empty() || times.len() != potentials.len() {
            return Err(Error::domain("frozen sequence needs matching, nonempty times and fields"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("frozen sequence times must increase"));
        }
        let g = *potentials[0].grid();
        for p in &potentials {
            g.ensure_same(p.grid())?;
        }
        Ok(Self {
            times,
            potentials: potentials.into_iter().map(Arc::new).collect(),
        })
    }

    /// `Φ_{1/m} = ψ_{1/m} * N χ_Ω` for each patch snapshot.
    pub fn from_patches(times: Vec<f64>, patches: &[PatchMask], m: f64) -> Result<Self> {
        let densities: Vec<ScalarField> = patches.iter().map(PatchMask::indicator).collect();
        Self::from_densities(times, &densities, m)
    }

    /// Mollified potentials `ψ_{1/m} * N μ` of height-bounded snapshots, such
    /// as area fractions of a moving patch.
    pub fn from_densities(times: Vec<f64>, densities: &[ScalarField], m: f64) -> Result<Self> {
        let first = densities
            .first()
            .ok_or_else(|| Error::domain("no density snapshots"))?;
        let op = Newtonian::new(*first.grid());
        let spec = MollifierSpec::new(m)?;
        let potentials = densities
            .iter()
            .map(|d| op.mollified_drift(d, &spec))
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, potentials)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn index_at(&self, t: f64) -> usize {
        self.times
            .partition_point(|&s| s <= t + 1e-12)
            .saturating_sub(1)
    }

    pub fn potential_at(&self, t: f64) -> &ScalarField {
        &self.potentials[self.index_at(t)]
    }
}

#[derive(Clone)]
pub struct PmeConfig {
    pub m: f64,
    pub drift: Drift,
    /// Fraction of the monotonicity limit used as time step.
    pub dt_safety: f64,
    pub t_end: f64,
    pub source: Option<Source>,
    /// Observer cadence; steps are shortened to land on multiples of it.
    pub record_every: Option<f64>,
}

impl std::fmt::Debug for PmeConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PmeConfig")
            .field("m", &self.m)
            .field("drift", &self.drift)
            .field("dt_safety", &self.dt_safety)
            .field("t_end", &self.t_end)
            .field("source", &self.source.is_some())
            .field("record_every", &self.record_every)
            .finish()
    }
}

impl PmeConfig {
    pub fn new(m: f64, drift: Drift, t_end: f64) -> Self {
        Self {
            m,
            drift,
            dt_safety: 0.4,
            t_end,
            source: None,
            record_every: None,
        }
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = Some(source);
        self
    }

    pub fn with_record_every(mut self, every: f64) -> Self {
        self.record_every = Some(every);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.m > 1.0) || !self.m.is_finite() {
            return Err(Error::domain(format!("PME needs m > 1, got {}", self.m)));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(Error::domain(format!("dt_safety must lie in (0, 1], got {}", self.dt_safety)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::domain(format!("bad t_end {}", self.t_end)));
        }
        if let Some(e) = self.record_every {
            if !(e > 0.0) {
                return Err(Error::domain(format!("record_every must be positive, got {e}")));
            }
        }
        Ok(())
    }
}

/// `p = m/(m-1)·ρ^(m-1)` cellwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureView {
    pub p: ScalarField,
    pub m: f64,
}

impl PressureView {
    /// Inverse map `ρ = ((m-1)p/m)^(1/(m-1))`.
    pub fn density(&self) -> ScalarField {
        density_from_pressure(&self.p, self.m)
    }
}

pub fn pressure(rho: &ScalarField, m: f64) -> Result<PressureView> {
    if !(m > 1.0) {
        return Err(Error::domain(format!("pressure needs m > 1, got {m}")));
    }
    let c = m / (m - 1.0);
    Ok(PressureView {
        p: rho.map(|r| if r > 0.0 { c * r.powf(m - 1.0) } else { 0.0 }),
        m,
    })
}

pub fn density_from_pressure(p: &ScalarField, m: f64) -> ScalarField {
    let c = (m - 1.0) / m;
    let e = 1.0 / (m - 1.0);
    p.map(|v| if v > 0.0 { (c * v).powf(e) } else { 0.0 })
}

/// Support barrier `R(t) = (R₀ + C_d/2) e^(t/2) - C_d/2` in two dimensions.
pub fn barrier_radius(r0: f64, t: f64, c_d: f64) -> f64 {
    (r0 + c_d / 2.0) * (t / 2.0).exp() - c_d / 2.0
}

/// Self-similar zero-drift solution of mass `mass`, centered at `center`.
pub fn barenblatt(grid: GridSpec, m: f64, t: f64, mass: f64, center: (f64, f64)) -> ScalarField {
    let alpha = 2.0 / (2.0 * (m - 1.0) + 2.0);
    let beta = alpha / 2.0;
    let k = alpha * (m - 1.0) / (2.0 * m * 2.0);
    let e = 1.0 / (m - 1.0);
    // mass = π t^0 ∫(C - k s)₊^e ds = π C^(e+1) / (k (e+1))
    let c0 = (mass * k * (e + 1.0) / std::f64::consts::PI).powf(1.0 / (e + 1.0));
    ScalarField::from_fn(grid, |x, y| {
        let r2 = (x - center.0).powi(2) + (y - center.1).powi(2);
        let inner = c0 - k * r2 * t.powf(-2.0 * beta);
        if inner > 0.0 {
            t.powf(-alpha) * inner.powf(e)
        } else {
            0.0
        }
    })
}

fn pow_m(r: f64, m: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if m.fract() == 0.0 && m <= 1024.0 {
        r.powi(m as i32)
    } else {
        r.powf(m)
    }
}

/// Face velocities of a potential: `vx` on the `(nx-1)·ny` vertical faces,
/// `vy` on the `nx·(ny-1)` horizontal ones.
#[derive(Debug, Clone)]
struct Faces {
    vx: Vec<f64>,
    vy: Vec<f64>,
}

impl Faces {
    fn new(phi: &ScalarField) -> Self {
        let g = *phi.grid();
        let (nx, ny) = (g.nx, g.ny);
        let ih = 1.0 / g.h;
        let v = phi.values();
        let mut vx = vec![0.0; nx.saturating_sub(1) * ny];
        for j in 0..ny {
            for i in 0..nx - 1 {
                vx[j * (nx - 1) + i] = -(v[j * nx + i + 1] - v[j * nx + i]) * ih;
            }
        }
        let mut vy = vec![0.0; nx * ny.saturating_sub(1)];
        for j in 0..ny - 1 {
            for i in 0..nx {
                vy[j * nx + i] = -(v[(j + 1) * nx + i] - v[j * nx + i]) * ih;
            }
        }
        Self { vx, vy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
}

/// Support bounding box grown by one cell; `None` for the zero field.
fn active_window(rho: &ScalarField) -> Option<Window> {
    let g = rho.grid();
    let v = rho.values();
    let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0, usize::MAX, 0);
    for j in 0..g.ny {
        let row = &v[j * g.nx..(j + 1) * g.nx];
        let Some(a) = row.iter().position(|&x| x > 0.0) else {
            continue;
        };
        let b = row.iter().rposition(|&x| x > 0.0).expect("row has a positive cell");
        i0 = i0.min(a);
        i1 = i1.max(b);
        j0 = j0.min(j);
        j1 = j1.max(j);
    }
    (i0 != usize::MAX).then(|| Window {
        i0: i0.saturating_sub(1),
        i1: (i1 + 1).min(g.nx - 1),
        j0: j0.saturating_sub(1),
        j1: (j1 + 1).min(g.ny - 1),
    })
}

fn check_window_margin(w: &Window, g: &GridSpec) -> Result<()> {
    // the window already carries one extra cell
    let m = SUPPORT_MARGIN - 1;
    if w.i0 < m || w.j0 < m || w.i1 + m >= g.nx || w.j1 + m >= g.ny {
        return Err(Error::Margin(format!(
            "density support within {SUPPORT_MARGIN} cells of the box edge"
        )));
    }
    Ok(())
}

/// Largest step for which the update is monotone (safety 1).
fn monotone_limit(rho: &ScalarField, faces: &Faces, w: &Window, m: f64, src_max: f64) -> f64 {
    let g = rho.grid();
    let (nx, h) = (g.nx, g.h);
    let mut d_max = 0.0f64;
    let mut v_max = 0.0f64;
    for j in w.j0..=w.j1 {
        for i in w.i0..=w.i1 {
            let r = rho.values()[j * nx + i];
            if r > 0.0 {
                d_max = d_max.max(m * pow_m(r, m - 1.0));
            }
            if i < nx - 1 {
                v_max = v_max.max(faces.vx[j * (nx - 1) + i].abs());
            }
            if j < g.ny - 1 {
                v_max = v_max.max(faces.vy[j * nx + i].abs());
            }
        }
    }
    let mut lim = h * h / (4.0 * d_max + 4.0 * h * v_max).max(f64::MIN_POSITIVE);
    if src_max > 0.0 {
        lim = lim.min(1.0 / src_max);
    }
    lim
}

struct Workspace {
    u: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
}

impl Workspace {
    fn new(g: &GridSpec) -> Self {
        Self {
            u: vec![0.0; g.len()],
            fx: vec![0.0; g.len()],
            fy: vec![0.0; g.len()],
        }
    }
}

/// One update of `rho` in place over the active window.
fn update(
    rho: &mut ScalarField,
    faces: &Faces,
    w: &Window,
    m: f64,
    dt: f64,
    source: Option<(&Source, f64)>,
    ws: &mut Workspace,
) -> Result<()> {
    let g = *rho.grid();
    let (nx, ny, h) = (g.nx, g.ny, g.h);
    let ih = 1.0 / h;
    let v = rho.values();
    for j in w.j0..=w.j1 {
        for i in w.i0..=w.i1 {
            let k = j * nx + i;
            ws.u[k] = pow_m(v[k], m);
        }
    }
    // fx[k]: flux through the face between k and k+1; fy[k]: between k and k+nx
    for j in w.j0..=w.j1 {
        for i in w.i0..w.i1.min(nx - 1) {
            let k = j * nx + i;
            let vel = faces.vx[j * (nx - 1) + i];
            let adv = if vel > 0.0 { vel * v[k] } else { vel * v[k + 1] };
            ws.fx[k] = adv - (ws.u[k + 1] - ws.u[k]) * ih;
        }
    }
    for j in w.j0..w.j1.min(ny - 1) {
        for i in w.i0..=w.i1 {
            let k = j * nx + i;
            let vel = faces.vy[k];
            let adv = if vel > 0.0 { vel * v[k] } else { vel * v[k + nx] };
            ws.fy[k] = adv - (ws.u[k + nx] - ws.u[k]) * ih;
        }
    }
    let c = dt * ih;
    let scale = rho.max().max(1.0);
    let vals = rho.values_mut();
    for j in w.j0..=w.j1 {
        for i in w.i0..=w.i1 {
            let k = j * nx + i;
            let east = if i < w.i1 { ws.fx[k] } else { 0.0 };
            let west = if i > w.i0 { ws.fx[k - 1] } else { 0.0 };
            let north = if j < w.j1 { ws.fy[k] } else { 0.0 };
            let south = if j > w.j0 { ws.fy[k - nx] } else { 0.0 };
            let old = vals[k];
            let mut new = old - c * (east - west + north - south);
            if let Some((f, t)) = source {
                if old > 0.0 {
                    new += dt * old * f(g.x(i), g.y(j), t);
                }
            }
            if new < FLUSH {
                if new < -1e-13 * scale {
                    return Err(Error::Negative { i, j, value: new });
                }
                new = 0.0;
            }
            vals[k] = new;
        }
    }
    Ok(())
}

fn source_max(src: Option<&Source>, rho: &ScalarField, w: &Window, t: f64) -> f64 {
    let Some(f) = src else { return 0.0 };
    let g = rho.grid();
    let mut out = 0.0f64;
    for j in w.j0..=w.j1 {
        for i in w.i0..=w.i1 {
            if rho.at(i, j) > 0.0 {
                out = out.max(-f(g.x(i), g.y(j), t));
            }
        }
    }
    out
}

/// One explicit step with the given potential. Errors if `dt` exceeds the
/// monotonicity limit.
pub fn step(rho: &ScalarField, cfg: &PmeConfig, phi: &ScalarField, dt: f64) -> Result<ScalarField> {
    cfg.validate()?;
    rho.grid().ensure_same(phi.grid())?;
    crate::field::ensure_density(rho, "PME step")?;
    let mut out = rho.clone();
    let Some(w) = active_window(rho) else {
        return Ok(out);
    };
    check_window_margin(&w, rho.grid())?;
    let faces = Faces::new(phi);
    let lim = monotone_limit(rho, &faces, &w, cfg.m, source_max(cfg.source.as_ref(), rho, &w, 0.0));
    if dt > lim * (1.0 + 1e-12) {
        return Err(Error::Cfl(format!("dt = {dt:.3e} exceeds the limit {lim:.3e}")));
    }
    let mut ws = Workspace::new(rho.grid());
    update(&mut out, &faces, &w, cfg.m, dt, cfg.source.as_ref().map(|s| (s, 0.0)), &mut ws)?;
    Ok(out)
}

/// Stateful time stepper; owns the density and the drift cache.
pub struct PmeSolver {
    cfg: PmeConfig,
    rho: ScalarField,
    t: f64,
    steps: usize,
    op: Option<Newtonian>,
    faces: Faces,
    faces_key: Option<usize>,
    ws: Workspace,
}

impl PmeSolver {
    pub fn new(rho0: ScalarField, cfg: PmeConfig) -> Result<Self> {
        cfg.validate()?;
        crate::field::ensure_density(&rho0, "PME initial data")?;
        let g = *rho0.grid();
        match &cfg.drift {
            Drift::External(phi) => g.ensure_same(phi.grid())?,
            Drift::FrozenSequence(s) => g.ensure_same(s.potential_at(0.0).grid())?,
            Drift::SelfConsistent => {}
        }
        let op = matches!(cfg.drift, Drift::SelfConsistent).then(|| Newtonian::new(g));
        Ok(Self {
            faces: Faces { vx: Vec::new(), vy: Vec::new() },
            faces_key: None,
            ws: Workspace::new(&g),
            cfg,
            rho: rho0,
            t: 0.0,
            steps: 0,
            op,
        })
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    pub fn into_rho(self) -> ScalarField {
        self.rho
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn config(&self) -> &PmeConfig {
        &self.cfg
    }

    fn refresh_drift(&mut self) -> Result<()> {
        match &self.cfg.drift {
            Drift::External(phi) => {
                if self.faces_key.is_none() {
                    self.faces = Faces::new(phi);
                    self.faces_key = Some(0);
                }
            }
            Drift::FrozenSequence(seq) => {
                let k = seq.index_at(self.t);
                if self.faces_key != Some(k) {
                    self.faces = Faces::new(seq.potential_at(self.t));
                    self.faces_key = Some(k);
                }
            }
            Drift::SelfConsistent => {
                let op = self.op.as_ref().expect("operator built for self-consistent drift");
                let phi = op.potential(&self.rho)?;
                self.faces = Faces::new(&phi);
                self.faces_key = Some(self.steps);
            }
        }
        Ok(())
    }

    /// Safe step size at the current state: `dt_safety` times the
    /// monotonicity limit `h²/(4 max mρ^(m-1) + 4h max|v|)`.
    pub fn stable_dt(&mut self) -> Result<f64> {
        let Some(w) = active_window(&self.rho) else {
            return Ok(f64::INFINITY);
        };
        self.refresh_drift()?;
        let src = source_max(self.cfg.source.as_ref(), &self.rho, &w, self.t);
        Ok(self.cfg.dt_safety * monotone_limit(&self.rho, &self.faces, &w, self.cfg.m, src))
    }

    /// Advances by exactly `dt`, which must not exceed the monotone limit.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Cfl(format!("non-positive step {dt}")));
        }
        let Some(w) = active_window(&self.rho) else {
            self.t += dt;
            self.steps += 1;
            return Ok(());
        };
        check_window_margin(&w, self.rho.grid())?;
        self.refresh_drift()?;
        let src = source_max(self.cfg.source.as_ref(), &self.rho, &w, self.t);
        let lim = monotone_limit(&self.rho, &self.faces, &w, self.cfg.m, src);
        if dt > lim * (1.0 + 1e-12) {
            return Err(Error::Cfl(format!("dt = {dt:.3e} exceeds the limit {lim:.3e}")));
        }
        let source = self.cfg.source.clone();
        update(
            &mut self.rho,
            &self.faces,
            &w,
            self.cfg.m,
            dt,
            source.as_ref().map(|s| (s, self.t)),
            &mut self.ws,
        )?;
        self.t += dt;
        self.steps += 1;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PmeRun {
    pub rho: ScalarField,
    pub t: f64,
    pub steps: usize,
}

/// Integrates to `cfg.t_end`. `observer(t, ρ)` is called at `t = 0`, at each
/// multiple of `record_every` and at the end.
pub fn run(
    rho0: ScalarField,
    cfg: PmeConfig,
    mut observer: impl FnMut(f64, &ScalarField) -> Result<()>,
) -> Result<PmeRun> {
    let t_end = cfg.t_end;
    let every = cfg.record_every;
    let mut s = PmeSolver::new(rho0, cfg)?;
    observer(0.0, s.rho())?;
    let mut next_record = every.unwrap_or(f64::INFINITY);
    while s.t() < t_end {
        let target = next_record.min(t_end);
        let mut dt = s.stable_dt()?.min(target - s.t());
        // avoid a sliver step right before the target
        if target - s.t() - dt < 1e-3 * dt {
            dt = target - s.t();
        }
        s.advance(dt)?;
        if (s.t() - target).abs() <= 1e-12 * target.max(1.0) {
            s.t = target;
            if target < t_end {
                observer(s.t(), s.rho())?;
                next_record += every.expect("finite target implies a cadence");
            }
        }
    }
    observer(s.t(), s.rho())?;
    Ok(PmeRun {
        t: s.t(),
        steps: s.steps(),
        rho: s.into_rho(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Report {
    pub initial: f64,
    pub final_distance: f64,
    /// `∫∫|ρ₁f₁ - ρ₂f₂|` over the run.
    pub source_integral: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Runs both configurations in lockstep and compares `‖ρ₁(t) - ρ₂(t)‖₁`
/// against `‖ρ₁(0) - ρ₂(0)‖₁ + ∫∫|ρ₁f₁ - ρ₂f₂|`.
pub fn l1_stability(
    rho1: &ScalarField,
    cfg1: &PmeConfig,
    rho2: &ScalarField,
    cfg2: &PmeConfig,
    t: f64,
) -> Result<L1Report> {
    rho1.grid().ensure_same(rho2.grid())?;
    let g = *rho1.grid();
    let l1 = |a: &ScalarField, b: &ScalarField| {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            * g.cell_area()
    };
    let initial = l1(rho1, rho2);
    let mut a = PmeSolver::new(rho1.clone(), cfg1.clone())?;
    let mut b = PmeSolver::new(rho2.clone(), cfg2.clone())?;
    let mut source_integral = 0.0;
    while a.t() < t {
        let mut dt = a.stable_dt()?.min(b.stable_dt()?).min(t - a.t());
        if t - a.t() - dt < 1e-3 * dt {
            dt = t - a.t();
        }
        if cfg1.source.is_some() || cfg2.source.is_some() {
            let now = a.t();
            let mut acc = 0.0;
            for k in 0..g.len() {
                let (x, y) = g.center(k);
                let f1 = cfg1.source.as_ref().map_or(0.0, |f| f(x, y, now));
                let f2 = cfg2.source.as_ref().map_or(0.0, |f| f(x, y, now));
                acc += (a.rho().values()[k] * f1 - b.rho().values()[k] * f2).abs();
            }
            source_integral += dt * acc * g.cell_area();
        }
        a.advance(dt)?;
        b.advance(dt)?;
    }
    let final_distance = l1(a.rho(), b.rho());
    let slack = 0.02;
    Ok(L1Report {
        initial,
        final_distance,
        source_integral,
        slack,
        passed: final_distance <= (initial + source_integral) * (1.0 + slack) + 1e-14,
    })
}

/// Same configuration for both densities, no source.
pub fn l1_contraction_test(
    rho1: &ScalarField,
    rho2: &ScalarField,
    cfg: &PmeConfig,
    t: f64,
) -> Result<L1Report> {
    if cfg.source.is_some() {
        return Err(Error::domain("the contraction test runs without sources"));
    }
    l1_stability(rho1, cfg, rho2, cfg, t)
}

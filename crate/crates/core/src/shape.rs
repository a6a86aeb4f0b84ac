//! Geometry and energy diagnostics of patches: Fraenkel asymmetry, the
//! Talenti functional `F(Ω) = -|Ω|²/2π + 4∫p`, isoperimetric deficits and
//! energy gaps against the equal-area disk.

use std::borrow::Cow;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{center_of_mass, second_moment, GridSpec, PatchMask, ScalarField};
use crate::heleshaw::{cut_fraction, solve_pressure, LevelSet};
use crate::newtonian::{centered_gradient, disk_energy, interaction_energy};

/// `c₀` in `F(Ω) ≤ -c₀ A(Ω)³ |Ω|²`: half the smallest ratio
/// `-F/(A³|Ω|²)` over ellipses 1.5:1 to 4:1, rectangles 1:1 to 4:1 and
/// two-disk dumbbells, measured at h = 1/64. Regenerate with
/// `cargo run --release --example calibrate`.
pub const C0_CALIBRATED: f64 = 0.0398;

/// `C₂` in `C₁ = C₂ |Ω₀|^{2/3} (1 + |Ω₀| + M₂)^{7/6}`, obtained by chaining
/// the energy-gap bound `40|Ω|(1+|Ω|+M₂)√A` with the asymmetry excursion
/// bound `A ≤ (M₂/(c₀|Ω|²))^{1/3} t^{-1/3}`.
pub fn c2_constant() -> f64 {
    40.0 * C0_CALIBRATED.powf(-1.0 / 6.0)
}

/// Pointwise energy-gap envelope constant `C₁`.
pub fn c1_constant(area0: f64, m2_0: f64) -> f64 {
    c2_constant() * area0.powf(2.0 / 3.0) * (1.0 + area0 + m2_0).powf(7.0 / 6.0)
}

/// `C(Ω₀) = (M₂/(c₀|Ω₀|²))^{1/3}` in `min_{(0,T)} A ≤ C(Ω₀) T^{-1/3}`.
pub fn excursion_constant(area0: f64, m2_0: f64) -> f64 {
    (m2_0 / (C0_CALIBRATED * area0 * area0)).cbrt()
}

/// Anything with a level-set view. Masks become staircase level sets whose
/// cells are wholly in or out.
pub trait Patch {
    fn level_set(&self) -> Cow<'_, LevelSet>;

    fn fractions(&self) -> ScalarField {
        self.level_set().volume_fractions()
    }
}

impl Patch for LevelSet {
    fn level_set(&self) -> Cow<'_, LevelSet> {
        Cow::Borrowed(self)
    }
}

impl Patch for PatchMask {
    fn level_set(&self) -> Cow<'_, LevelSet> {
        Cow::Owned(LevelSet::staircase(self))
    }

    fn fractions(&self) -> ScalarField {
        self.indicator()
    }
}

fn nonempty(u: &ScalarField) -> Result<f64> {
    let area = u.integral();
    if !(area > 0.0) {
        return Err(Error::domain("shape diagnostics need a nonempty patch"));
    }
    Ok(area)
}

/// Area fractions of the disk `|x - c| < r`, exact for straight cuts.
pub fn disk_fractions(grid: GridSpec, center: (f64, f64), r: f64) -> ScalarField {
    let h = grid.h;
    ScalarField::from_fn(grid, |x, y| disk_cell(x, y, h, center, r))
}

fn disk_cell(x: f64, y: f64, h: f64, c: (f64, f64), r: f64) -> f64 {
    let (dx, dy) = (x - c.0, y - c.1);
    let dist = dx.hypot(dy);
    if dist - r > h {
        return 0.0;
    }
    if r - dist > h {
        return 1.0;
    }
    if dist < 1e-14 {
        return if r > 0.0 { 1.0 } else { 0.0 };
    }
    cut_fraction((dist - r) / h, dx / dist, dy / dist)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Asymmetry {
    /// `min_c ‖u - χ_{B(c,r)}‖₁ / |Ω|`, in `[0, 2]`.
    pub value: f64,
    pub center: (f64, f64),
}

struct DiskFit<'a> {
    u: &'a ScalarField,
    area: f64,
    r: f64,
}

impl DiskFit<'_> {
    /// `‖u - b_c‖₁` touching only cells near the disk.
    fn objective(&self, c: (f64, f64)) -> f64 {
        let g = self.u.grid();
        let h = g.h;
        let (x0, _, y0, _) = g.bounds();
        let reach = self.r + h;
        let lo = |v: f64, o: f64| (((v - reach - o) / h).floor().max(0.0)) as usize;
        let hi = |v: f64, o: f64, n: usize| ((((v + reach - o) / h).ceil()) as usize).min(n);
        let (i0, i1) = (lo(c.0, x0), hi(c.0, x0, g.nx));
        let (j0, j1) = (lo(c.1, y0), hi(c.1, y0, g.ny));
        let mut inside_u = 0.0;
        let mut diff = 0.0;
        for j in j0..j1 {
            let y = g.y(j);
            for i in i0..i1 {
                let v = self.u.at(i, j);
                let b = disk_cell(g.x(i), y, h, c, self.r);
                inside_u += v;
                diff += (v - b).abs();
            }
        }
        let h2 = g.cell_area();
        (self.area - inside_u * h2).max(0.0) + diff * h2
    }
}

/// Fraenkel asymmetry of an area-fraction field. The disk radius is fixed
/// by the area; the center comes from a coarse scan over the support plus
/// coordinate descent from the best of the scan and the centroid.
pub fn asymmetry_of(u: &ScalarField) -> Result<Asymmetry> {
    let area = nonempty(u)?;
    let g = *u.grid();
    let h = g.h;
    let fit = DiskFit { u, area, r: (area / PI).sqrt() };
    let mut best = center_of_mass(u)?;
    let mut best_val = fit.objective(best);

    let (mut xa, mut xb, mut ya, mut yb) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (k, &v) in u.values().iter().enumerate() {
        if v > 0.0 {
            let (x, y) = g.center(k);
            xa = xa.min(x);
            xb = xb.max(x);
            ya = ya.min(y);
            yb = yb.max(y);
        }
    }
    let spacing = (fit.r / 4.0).max(h);
    let (nx, ny) = (((xb - xa) / spacing) as usize + 1, ((yb - ya) / spacing) as usize + 1);
    for b in 0..=ny {
        for a in 0..=nx {
            let c = (xa + a as f64 * spacing, ya + b as f64 * spacing);
            let v = fit.objective(c);
            if v < best_val {
                best = c;
                best_val = v;
            }
        }
    }

    for step in [spacing / 2.0, 4.0 * h, h, h / 4.0] {
        loop {
            let mut improved = false;
            for d in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let c = (best.0 + d.0, best.1 + d.1);
                let v = fit.objective(c);
                if v < best_val - 1e-15 {
                    best = c;
                    best_val = v;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }
    Ok(Asymmetry { value: best_val / area, center: best })
}

pub fn fraenkel_asymmetry(patch: &impl Patch) -> Result<Asymmetry> {
    asymmetry_of(&patch.fractions())
}

/// `-|Ω|²/2π + 4∫p` from an area-fraction field and its pressure.
pub fn f_value(fractions: &ScalarField, p: &ScalarField) -> f64 {
    let area = fractions.integral();
    -area * area / (2.0 * PI) + 4.0 * p.integral()
}

pub fn f_functional(patch: &impl Patch) -> Result<f64> {
    let ls = patch.level_set();
    let u = ls.volume_fractions();
    nonempty(&u)?;
    let s = solve_pressure(&ls)?;
    Ok(f_value(&u, &s.p))
}

/// Distribution function `g(k) = |{p > k}|` of the pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct TalentiProfile {
    pub levels: Vec<f64>,
    pub g: Vec<f64>,
    /// Forward differences `(g[i+1] - g[i]) / Δk`.
    pub slopes: Vec<f64>,
}

impl TalentiProfile {
    /// Largest slope over levels in `[lo, hi]·max p`.
    pub fn max_slope_within(&self, lo: f64, hi: f64) -> f64 {
        let top = *self.levels.last().unwrap_or(&0.0) + self.step();
        self.slopes
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let k = self.levels[*i];
                k >= lo * top && self.levels[i + 1] <= hi * top
            })
            .fold(f64::NEG_INFINITY, |m, (_, &s)| m.max(s))
    }

    /// Largest slope in the bulk, `k ∈ [0.2, 0.8]·max p`.
    pub fn bulk_max_slope(&self) -> f64 {
        self.max_slope_within(0.2, 0.8)
    }

    fn step(&self) -> f64 {
        if self.levels.len() > 1 { self.levels[1] - self.levels[0] } else { 0.0 }
    }
}

pub const TALENTI_LEVELS: usize = 200;

/// Tabulates `g` on levels `k_i = i·max p/200`, with `{p > k}` measured by
/// linear cut cells inside the patch. `g(0)` is the patch area.
pub fn talenti_profile(patch: &impl Patch) -> Result<TalentiProfile> {
    let ls = patch.level_set();
    let u = ls.volume_fractions();
    let area = nonempty(&u)?;
    let p = solve_pressure(&ls)?.p;
    let g = *p.grid();
    let (gx, gy) = centered_gradient(&p);
    let top = p.max();
    let dk = top / TALENTI_LEVELS as f64;
    let levels: Vec<f64> = (0..TALENTI_LEVELS).map(|i| i as f64 * dk).collect();
    let mut out = Vec::with_capacity(levels.len());
    out.push(area);
    for &k in &levels[1..] {
        let mut acc = 0.0;
        for (idx, (&pv, &frac)) in p.values().iter().zip(u.values()).enumerate() {
            if frac <= 0.0 {
                continue;
            }
            let (ax, ay) = (gx.values()[idx], gy.values()[idx]);
            let norm = ax.hypot(ay);
            let q = pv - k;
            let cell = if norm < 1e-12 || (q.abs() > 1.5 * norm * g.h) {
                if q > 0.0 { 1.0 } else { 0.0 }
            } else {
                cut_fraction(-q / (norm * g.h), -ax / norm, -ay / norm)
            };
            acc += cell.min(frac);
        }
        out.push(acc * g.cell_area());
    }
    let slopes = out.windows(2).map(|w| (w[1] - w[0]) / dk).collect();
    Ok(TalentiProfile { levels, g: out, slopes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoperimetricReport {
    pub area: f64,
    pub perimeter: f64,
    pub asymmetry: f64,
    /// `P / (2√π √|E|)`.
    pub ratio: f64,
    /// `(ratio - 1)/A²`; NaN when `A = 0`.
    pub implied_c: f64,
    /// `implied_c > 0` whenever `A > 0.05`.
    pub passed: bool,
}

pub fn quantitative_isoperimetric_check(patch: &impl Patch) -> Result<IsoperimetricReport> {
    let ls = patch.level_set();
    let u = patch.fractions();
    let area = nonempty(&u)?;
    let perimeter = ls.perimeter();
    let asymmetry = asymmetry_of(&u)?.value;
    let ratio = perimeter / (2.0 * PI.sqrt() * area.sqrt());
    let implied_c = if asymmetry > 0.0 { (ratio - 1.0) / (asymmetry * asymmetry) } else { f64::NAN };
    Ok(IsoperimetricReport {
        area,
        perimeter,
        asymmetry,
        ratio,
        implied_c,
        passed: asymmetry <= 0.05 || implied_c > 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyGap {
    /// `E_∞(χ_Ω) - E_∞(χ_B)`.
    pub gap: f64,
    /// `40|Ω|(1 + |Ω| + M₂)√A`.
    pub bound: f64,
    pub energy: f64,
    /// Energy of the equal-area disk at the centroid, rasterized like `u`.
    pub disk_energy: f64,
    /// Closed form of the same disk.
    pub disk_energy_exact: f64,
    pub asymmetry: f64,
    pub m2: f64,
}

/// Energy gap of an area-fraction field. The reference disk goes through
/// the same quadrature so the discretization error largely cancels.
pub fn energy_gap_of(u: &ScalarField) -> Result<EnergyGap> {
    let area = nonempty(u)?;
    let c = center_of_mass(u)?;
    let r = (area / PI).sqrt();
    let disk = disk_fractions(*u.grid(), c, r);
    let energy = interaction_energy(u)?;
    let e_disk = interaction_energy(&disk)?;
    let asymmetry = asymmetry_of(u)?.value;
    let m2 = second_moment(u);
    Ok(EnergyGap {
        gap: energy - e_disk,
        bound: 40.0 * area * (1.0 + area + m2) * asymmetry.sqrt(),
        energy,
        disk_energy: e_disk,
        disk_energy_exact: disk_energy(r),
        asymmetry,
        m2,
    })
}

pub fn energy_gap(patch: &impl Patch) -> Result<EnergyGap> {
    energy_gap_of(&patch.fractions())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Least-squares slope of `log gap` against `log t` on the tail.
    pub exponent: f64,
    /// `exp` of the intercept.
    pub constant: f64,
    /// Smallest `C₁t^{-1/6} - gap` over all samples.
    pub envelope_margin: f64,
    pub points: usize,
}

/// Fits `gap ≈ C t^a` on the upper half of the samples in `log t`, and
/// compares every sample with `c1·t^{-1/6}`. Needs at least 20 positive
/// samples spanning 1.5 decades.
pub fn rate_fit(t: &[f64], gap: &[f64], c1: f64) -> Result<RateFit> {
    if t.len() != gap.len() {
        return Err(Error::domain("rate_fit: t and gap differ in length"));
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(gap)
        .filter(|(t, g)| **t > 0.0 && **g > 0.0)
        .map(|(t, g)| (*t, *g))
        .collect();
    if pts.len() < 20 {
        return Err(Error::domain(format!("rate_fit needs 20 positive samples, got {}", pts.len())));
    }
    let (t_lo, t_hi) = pts.iter().fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if (t_hi / t_lo).log10() < 1.5 {
        return Err(Error::domain(format!(
            "rate_fit needs 1.5 decades of t, got [{t_lo}, {t_hi}]"
        )));
    }
    let mid = (t_lo * t_hi).sqrt();
    let tail: Vec<(f64, f64)> = pts.iter().filter(|p| p.0 >= mid).map(|p| (p.0.ln(), p.1.ln())).collect();
    let n = tail.len() as f64;
    let (sx, sy) = tail.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = tail
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx).powi(2)));
    if !(sxx > 0.0) {
        return Err(Error::domain("rate_fit: degenerate tail"));
    }
    let exponent = sxy / sxx;
    let margin = t
        .iter()
        .zip(gap)
        .filter(|(t, _)| **t > 0.0)
        .fold(f64::INFINITY, |m, (t, g)| m.min(c1 * t.powf(-1.0 / 6.0) - g));
    Ok(RateFit {
        exponent,
        constant: (my - exponent * mx).exp(),
        envelope_margin: margin,
        points: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeReport {
    pub area: f64,
    pub perimeter: f64,
    pub asymmetry: f64,
    pub f_value: f64,
    pub best_disk_center: (f64, f64),
    pub m2: f64,
    pub energy_gap: f64,
}

pub fn shape_report(patch: &impl Patch) -> Result<ShapeReport> {
    let ls = patch.level_set();
    let u = patch.fractions();
    let a = asymmetry_of(&u)?;
    let gap = energy_gap_of(&u)?;
    let s = solve_pressure(&ls)?;
    Ok(ShapeReport {
        area: u.integral(),
        perimeter: ls.perimeter(),
        asymmetry: a.value,
        f_value: f_value(&u, &s.p),
        best_disk_center: a.center,
        m2: gap.m2,
        energy_gap: gap.gap,
    })
}

/// `-F/(A³|Ω|²)`, the quantity whose infimum calibrates `c₀`.
pub fn refined_ratio(patch: &impl Patch) -> Result<f64> {
    let u = patch.fractions();
    let area = nonempty(&u)?;
    let a = asymmetry_of(&u)?.value;
    let f = f_functional(patch)?;
    Ok(-f / (a.powi(3) * area * area))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_fractions_carry_the_area() {
        let g = GridSpec::centered(96, 1.0 / 32.0, (0.0, 0.0)).unwrap();
        let d = disk_fractions(g, (0.1, -0.05), 1.0);
        // tangent cuts overcount by O(h²) along the arc
        assert!((d.integral() - PI).abs() < g.h * g.h, "{}", d.integral());
    }

    #[test]
    fn rate_fit_recovers_a_power() {
        let t: Vec<f64> = (0..40).map(|i| 10f64.powf(-1.0 + i as f64 / 20.0)).collect();
        let g: Vec<f64> = t.iter().map(|t| 0.3 * t.powf(-0.5)).collect();
        let fit = rate_fit(&t, &g, 1.0).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-12);
        assert!((fit.constant - 0.3).abs() < 1e-12);
        assert!(rate_fit(&t[..32], &g[..32], 1.0).is_ok());
        assert!(rate_fit(&t[20..], &g[20..], 1.0).is_err());
    }
}

//! Free-space Newtonian potential `N * ρ` with `N(x) = log|x| / 2π`.
//!
//! Convolutions run on a grid zero-padded to twice the extent so that the
//! circular FFT convolution equals the free-space one on the original box.
//! The kernel is sampled at cell centers; the self cell carries the exact
//! mean of `log|x|` over a square of side `h`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{check_margin, ensure_density, mass, GridSpec, ScalarField};
use crate::modulus::{sigma, ModulusParams};
use crate::SUPPORT_MARGIN;

/// Mean of `log|x|` over the unit-side square centered at the origin.
pub fn mean_log_unit_cell() -> f64 {
    (0.5f64).ln() + (2f64.ln() - 3.0 + PI / 2.0) / 2.0
}

/// Kernel value for the cell offset `(di, dj)`.
fn kernel_value(di: i64, dj: i64, h: f64) -> f64 {
    if di == 0 && dj == 0 {
        (h.ln() + mean_log_unit_cell()) / (2.0 * PI)
    } else {
        let r2 = ((di * di + dj * dj) as f64) * h * h;
        0.25 * r2.ln() / PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Centered differences of the potential, one-sided at the box edge.
    #[default]
    Centered,
    /// Direct convolution with the sampled kernel gradient `x / (2π|x|²)`.
    Kernel,
}

/// Radial bump `(5/π)(1 - |x|²)⁴` on the unit disk, rescaled to support
/// radius `1/m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    pub scale: f64,
    pub r_psi: f64,
    /// `(∫|x|² ψ_{1/m})^(1/2)`.
    pub m_psi: f64,
}

const BUMP_NORMALIZATION: f64 = 5.0 / PI;

fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        BUMP_NORMALIZATION * (1.0 - r2).powi(4)
    }
}

impl MollifierSpec {
    pub fn new(m: f64) -> Result<Self> {
        if !(m > 1.0) {
            return Err(Error::domain(format!("mollifier needs m > 1, got {m}")));
        }
        let integral = Self::unit_integral();
        if (integral - 1.0).abs() > 1e-10 {
            return Err(Error::domain(format!("mollifier integrates to {integral}")));
        }
        let scale = 1.0 / m;
        Ok(Self {
            scale,
            r_psi: scale,
            m_psi: scale / 6f64.sqrt(),
        })
    }

    /// `∫ψ` of the unit profile by radial Gauss-Legendre quadrature.
    pub fn unit_integral() -> f64 {
        // 2π ∫₀¹ ψ(r) r dr, polynomial of degree 9 in r: 8 nodes are exact.
        let (nodes, weights) = gauss_legendre_8();
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            let r = 0.5 * (x + 1.0);
            acc += 0.5 * w * bump(r * r) * r;
        }
        2.0 * PI * acc
    }

    /// Discrete weights on the grid offsets within the support, summing to 1.
    fn stencil(&self, h: f64) -> Vec<(i64, i64, f64)> {
        let reach = (self.r_psi / h).floor() as i64;
        let mut out = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let r2 = ((di * di + dj * dj) as f64) * h * h / (self.scale * self.scale);
                let w = bump(r2);
                if w > 0.0 {
                    out.push((di, dj, w));
                }
            }
        }
        let total: f64 = out.iter().map(|t| t.2).sum();
        out.iter_mut().for_each(|t| t.2 /= total);
        out
    }

    /// `ψ_{1/m} * ρ` with the discrete stencil; mass outside the box is dropped.
    pub fn apply(&self, rho: &ScalarField) -> ScalarField {
        let g = *rho.grid();
        let stencil = self.stencil(g.h);
        let (nx, ny) = (g.nx as i64, g.ny as i64);
        let mut out = vec![0.0; g.len()];
        for j in 0..ny {
            for i in 0..nx {
                let v = rho.at(i as usize, j as usize);
                if v == 0.0 {
                    continue;
                }
                for &(di, dj, w) in &stencil {
                    let (a, b) = (i + di, j + dj);
                    if a >= 0 && a < nx && b >= 0 && b < ny {
                        out[g.idx(a as usize, b as usize)] += w * v;
                    }
                }
            }
        }
        ScalarField::from_values(g, out).expect("finite")
    }
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        -0.960_289_856_497_536_3,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329_0,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    let w = [
        0.101_228_536_290_376_3,
        0.222_381_034_453_374_5,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362_0,
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    (x, w)
}

/// Reusable free-space convolution engine for one grid.
pub struct Newtonian {
    grid: GridSpec,
    px: usize,
    py: usize,
    kernel_hat: Vec<Complex64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    margin: usize,
}

impl std::fmt::Debug for Newtonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Newtonian")
            .field("grid", &self.grid)
            .field("padded", &(self.px, self.py))
            .finish()
    }
}

impl Newtonian {
    pub fn new(grid: GridSpec) -> Self {
        let px = 2 * grid.nx;
        let py = 2 * grid.ny;
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(px);
        let row_inv = planner.plan_fft_inverse(px);
        let col_fwd = planner.plan_fft_forward(py);
        let col_inv = planner.plan_fft_inverse(py);
        let mut op = Self {
            grid,
            px,
            py,
            kernel_hat: Vec::new(),
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            margin: SUPPORT_MARGIN,
        };
        let kernel = op.padded_kernel(|di, dj| kernel_value(di, dj, grid.h));
        op.kernel_hat = op.forward(kernel, py);
        op
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Disable or change the support margin check.
    pub fn with_margin(mut self, margin: usize) -> Self {
        self.margin = margin;
        self
    }

    fn padded_kernel(&self, f: impl Fn(i64, i64) -> f64) -> Vec<Complex64> {
        let (nx, ny) = (self.grid.nx as i64, self.grid.ny as i64);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.px * self.py];
        for dj in -(ny - 1)..ny {
            let row = dj.rem_euclid(self.py as i64) as usize;
            for di in -(nx - 1)..nx {
                let col = di.rem_euclid(self.px as i64) as usize;
                buf[row * self.px + col] = Complex64::new(f(di, dj), 0.0);
            }
        }
        buf
    }

    /// 2-D forward FFT of a padded buffer whose rows `>= live_rows` are zero.
    fn forward(&self, mut buf: Vec<Complex64>, live_rows: usize) -> Vec<Complex64> {
        let (px, py) = (self.px, self.py);
        for row in buf.chunks_exact_mut(px).take(live_rows) {
            self.row_fwd.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); py];
        for i in 0..px {
            for j in 0..py {
                col[j] = buf[j * px + i];
            }
            self.col_fwd.process(&mut col);
            for j in 0..py {
                buf[j * px + i] = col[j];
            }
        }
        buf
    }

    /// Inverse FFT, returning only the original-box block (real part).
    fn inverse_block(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        let (px, py) = (self.px, self.py);
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut col = vec![Complex64::new(0.0, 0.0); py];
        for i in 0..px {
            for j in 0..py {
                col[j] = buf[j * px + i];
            }
            self.col_inv.process(&mut col);
            for j in 0..ny {
                buf[j * px + i] = col[j];
            }
        }
        let norm = 1.0 / (px * py) as f64;
        let mut out = Vec::with_capacity(nx * ny);
        for row in buf.chunks_exact_mut(px).take(ny) {
            self.row_inv.process(row);
            out.extend(row[..nx].iter().map(|c| c.re * norm));
        }
        out
    }

    fn embed(&self, f: &ScalarField) -> Vec<Complex64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.px * self.py];
        for j in 0..ny {
            for i in 0..nx {
                buf[j * self.px + i] = Complex64::new(f.at(i, j), 0.0);
            }
        }
        buf
    }

    fn convolve(&self, f: &ScalarField, spectrum: &[Complex64]) -> ScalarField {
        let mut hat = self.forward(self.embed(f), self.grid.ny);
        for (a, b) in hat.iter_mut().zip(spectrum) {
            *a *= *b;
        }
        let h2 = self.grid.cell_area();
        let mut values = self.inverse_block(hat);
        values.iter_mut().for_each(|v| *v *= h2);
        ScalarField::from_values(self.grid, values).expect("finite convolution")
    }

    fn check_input(&self, rho: &ScalarField) -> Result<()> {
        self.grid.ensure_same(rho.grid())?;
        ensure_density(rho, "potential")?;
        check_margin(rho, self.margin, 0.0)
    }

    /// `Φ = N * ρ`.
    pub fn potential(&self, rho: &ScalarField) -> Result<ScalarField> {
        self.check_input(rho)?;
        Ok(self.convolve(rho, &self.kernel_hat))
    }

    /// `∇(N * ρ)`; checks `‖∇Φ‖∞ ≤ C_d max(1, mass)` for height-bounded input.
    pub fn grad_potential(
        &self,
        rho: &ScalarField,
        mode: GradientMode,
        params: &ModulusParams,
    ) -> Result<(ScalarField, ScalarField)> {
        let (gx, gy) = match mode {
            GradientMode::Centered => {
                let phi = self.potential(rho)?;
                centered_gradient(&phi)
            }
            GradientMode::Kernel => {
                self.check_input(rho)?;
                let h = self.grid.h;
                let kx = self.padded_kernel(|di, dj| grad_kernel(di, dj, h).0);
                let ky = self.padded_kernel(|di, dj| grad_kernel(di, dj, h).1);
                let kx = self.forward(kx, self.py);
                let ky = self.forward(ky, self.py);
                (self.convolve(rho, &kx), self.convolve(rho, &ky))
            }
        };
        if rho.max() <= 1.0 + 1e-9 {
            let bound = params.c_d * mass(rho).max(1.0);
            let peak = gx
                .values()
                .iter()
                .zip(gy.values())
                .fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
            if peak > bound {
                return Err(Error::domain(format!(
                    "|∇Φ| = {peak:.4} exceeds C_d·max(1, mass) = {bound:.4}"
                )));
            }
        }
        Ok((gx, gy))
    }

    /// `ψ_{1/m} * (N * ρ)` as one convolution with the mollified kernel.
    pub fn mollified_drift(&self, rho: &ScalarField, spec: &MollifierSpec) -> Result<ScalarField> {
        self.check_input(rho)?;
        let stencil = spec.stencil(self.grid.h);
        if stencil.len() <= 1 {
            return Ok(self.convolve(rho, &self.kernel_hat));
        }
        let h2 = self.grid.cell_area();
        let psi = self.padded_kernel(|di, dj| {
            stencil
                .iter()
                .find(|t| t.0 == di && t.1 == dj)
                .map_or(0.0, |t| t.2 / h2)
        });
        let psi_hat = self.forward(psi, self.py);
        let combined: Vec<Complex64> = self
            .kernel_hat
            .iter()
            .zip(&psi_hat)
            .map(|(a, b)| a * b * h2)
            .collect();
        Ok(self.convolve(rho, &combined))
    }
}

fn grad_kernel(di: i64, dj: i64, h: f64) -> (f64, f64) {
    if di == 0 && dj == 0 {
        return (0.0, 0.0);
    }
    let (x, y) = (di as f64 * h, dj as f64 * h);
    let r2 = x * x + y * y;
    (x / (2.0 * PI * r2), y / (2.0 * PI * r2))
}

/// Centered differences; one-sided on the box edge.
pub fn centered_gradient(phi: &ScalarField) -> (ScalarField, ScalarField) {
    let g = *phi.grid();
    let h = g.h;
    let mut gx = vec![0.0; g.len()];
    let mut gy = vec![0.0; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            gx[k] = if g.nx == 1 {
                0.0
            } else if i == 0 {
                (phi.at(1, j) - phi.at(0, j)) / h
            } else if i == g.nx - 1 {
                (phi.at(i, j) - phi.at(i - 1, j)) / h
            } else {
                (phi.at(i + 1, j) - phi.at(i - 1, j)) / (2.0 * h)
            };
            gy[k] = if g.ny == 1 {
                0.0
            } else if j == 0 {
                (phi.at(i, 1) - phi.at(i, 0)) / h
            } else if j == g.ny - 1 {
                (phi.at(i, j) - phi.at(i, j - 1)) / h
            } else {
                (phi.at(i, j + 1) - phi.at(i, j - 1)) / (2.0 * h)
            };
        }
    }
    (
        ScalarField::from_values(g, gx).expect("finite"),
        ScalarField::from_values(g, gy).expect("finite"),
    )
}

/// Five-point Laplacian on interior cells, zero on the box edge.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let ih2 = 1.0 / g.cell_area();
    let mut out = vec![0.0; g.len()];
    for j in 1..g.ny.saturating_sub(1) {
        for i in 1..g.nx - 1 {
            out[g.idx(i, j)] = (f.at(i + 1, j) + f.at(i - 1, j) + f.at(i, j + 1) + f.at(i, j - 1)
                - 4.0 * f.at(i, j))
                * ih2;
        }
    }
    ScalarField::from_values(g, out).expect("finite")
}

pub fn potential(rho: &ScalarField) -> Result<ScalarField> {
    Newtonian::new(*rho.grid()).potential(rho)
}

/// `½ h² Σ ρ (N * ρ)`; no height check.
pub fn interaction_energy(rho: &ScalarField) -> Result<f64> {
    let phi = potential(rho)?;
    let s: f64 = rho.values().iter().zip(phi.values()).map(|(a, b)| a * b).sum();
    Ok(0.5 * s * rho.grid().cell_area())
}

/// Energy of the unit-height disk of radius `r`.
pub fn disk_energy(r: f64) -> f64 {
    let r4 = r.powi(4);
    -PI * r4 / 16.0 + PI * r4 / 4.0 * r.ln()
}

pub fn grad_potential(rho: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    Newtonian::new(*rho.grid()).grad_potential(rho, GradientMode::Centered, &ModulusParams::default())
}

pub fn mollified_drift(rho: &ScalarField, m: f64, spec: &MollifierSpec) -> Result<ScalarField> {
    if !(m > 1.0) {
        return Err(Error::domain(format!("mollified drift needs m > 1, got {m}")));
    }
    let op = Newtonian::new(*rho.grid());
    let out = op.mollified_drift(rho, spec)?;
    let phi = op.potential(rho)?;
    let (gx, gy) = centered_gradient(&phi);
    let lip = gx
        .values()
        .iter()
        .zip(gy.values())
        .fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
    let dev = lp_sup(&out, &phi);
    // discrete stencil reach plus one cell of difference-quotient slack
    let bound = lip * (spec.r_psi + rho.grid().h) * 1.05;
    if dev > bound + 1e-12 {
        return Err(Error::domain(format!(
            "mollified potential deviates by {dev:.3e} > {bound:.3e}"
        )));
    }
    Ok(out)
}

fn lp_sup(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone)]
pub struct LogLipschitzReport {
    pub samples: usize,
    pub max_ratio: f64,
    pub violations: usize,
    pub margin: f64,
}

/// Sample pairs of cells and compare `|∇Φ(x) - ∇Φ(y)|` to `C_d σ(|x-y|)`.
pub fn log_lipschitz_check(
    rho: &ScalarField,
    params: &ModulusParams,
    samples: usize,
    seed: u64,
) -> Result<LogLipschitzReport> {
    let margin = 1.5;
    let g = *rho.grid();
    let (gx, gy) = centered_gradient(&Newtonian::new(g).potential(rho)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..samples {
        let a = rng.gen_range(0..g.len());
        let b = rng.gen_range(0..g.len());
        if a == b {
            continue;
        }
        let (xa, ya) = g.center(a);
        let (xb, yb) = g.center(b);
        let dist = (xa - xb).hypot(ya - yb);
        let diff = (gx.values()[a] - gx.values()[b]).hypot(gy.values()[a] - gy.values()[b]);
        let ratio = diff / (params.c_d * sigma(dist)?);
        max_ratio = max_ratio.max(ratio);
        if ratio > margin {
            violations += 1;
        }
    }
    Ok(LogLipschitzReport {
        samples,
        max_ratio,
        violations,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(g: GridSpec, c: (f64, f64), r: f64) -> ScalarField {
        ScalarField::from_fn(g, |x, y| {
            if (x - c.0).powi(2) + (y - c.1).powi(2) < r * r {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn self_cell_constant() {
        // brute-force midpoint quadrature of log|x| over the unit square
        let n = 2000;
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                let x = (i as f64 + 0.5) / n as f64 - 0.5;
                let y = (j as f64 + 0.5) / n as f64 - 0.5;
                acc += 0.5 * (x * x + y * y).ln();
            }
        }
        acc /= (n * n) as f64;
        assert!((acc - mean_log_unit_cell()).abs() < 1e-5, "{acc}");
    }

    #[test]
    fn mollifier_normalized() {
        assert!((MollifierSpec::unit_integral() - 1.0).abs() < 1e-12);
        let s = MollifierSpec::new(10.0).unwrap();
        assert!((s.m_psi - 0.1 / 6f64.sqrt()).abs() < 1e-15);
        assert!(MollifierSpec::new(1.0).is_err());
        let st = s.stencil(0.01);
        assert!((st.iter().map(|t| t.2).sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(st.iter().all(|t| ((t.0 * t.0 + t.1 * t.1) as f64).sqrt() * 0.01 <= 0.1));
    }

    #[test]
    fn disk_potential_values() {
        let h = 1.0 / 64.0;
        let g = GridSpec::centered(321, h, (0.0, 0.0)).unwrap();
        let rho = disk(g, (0.0, 0.0), 1.0);
        let phi = potential(&rho).unwrap();
        assert!((phi.sample(0.0, 0.0) + 0.25).abs() < 2.0 * h);
        assert!((phi.sample(2.0, 0.0) - 0.5 * 2f64.ln()).abs() < 2.0 * h);
    }

    #[test]
    fn superposition() {
        let g = GridSpec::centered(64, 1.0 / 16.0, (0.0, 0.0)).unwrap();
        let a = disk(g, (0.3, 0.0), 0.7);
        let b = disk(g, (-0.5, 0.2), 0.4).scale(0.5);
        let sum = a.zip_map(&b, |x, y| x + y).unwrap();
        let op = Newtonian::new(g);
        let pa = op.potential(&a).unwrap();
        let pb = op.potential(&b).unwrap();
        let ps = op.potential(&sum).unwrap();
        for k in 0..g.len() {
            assert!((ps.values()[k] - pa.values()[k] - pb.values()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_error() {
        let g = GridSpec::centered(32, 0.1, (0.0, 0.0)).unwrap();
        assert!(potential(&disk(g, (0.0, 0.0), 1.55)).is_err());
        assert!(potential(&ScalarField::constant(g, -1.0)).is_err());
    }

    #[test]
    fn gradient_antisymmetry() {
        let h = 1.0 / 32.0;
        let g = GridSpec::centered(97, h, (0.0, 0.0)).unwrap();
        let rho = disk(g, (0.0, 0.0), 1.0);
        let (gx, gy) = grad_potential(&rho).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (mi, mj) = (g.nx - 1 - i, g.ny - 1 - j);
                assert!((gx.at(i, j) + gx.at(mi, mj)).abs() < 1e-12);
                assert!((gy.at(i, j) + gy.at(mi, mj)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_density_log_lipschitz() {
        let g = GridSpec::centered(32, 0.1, (0.0, 0.0)).unwrap();
        let r = log_lipschitz_check(&ScalarField::zeros(g), &ModulusParams::default(), 200, 1).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert_eq!(r.violations, 0);
    }
}

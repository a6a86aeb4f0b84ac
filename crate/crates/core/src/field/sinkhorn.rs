//! Entropic optimal transport between grid measures.
//!
//! The Gibbs kernel of the quadratic cost factors along the two axes, so every
//! kernel application is two 1-D convolutions with a truncated Gaussian. That
//! is what makes Sinkhorn affordable on full grids.

use super::{mass, GridSpec, ScalarField};
use crate::error::{Error, Result};

/// Kernel weights below this are dropped.
const DEFAULT_TRUNCATION: f64 = 1e-100;

#[derive(Debug, Clone, Copy)]
pub struct SinkhornOptions {
    pub max_iter: usize,
    /// Relative L¹ marginal violation at which iterations stop.
    pub tol: f64,
    pub truncation: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-9,
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornOutcome {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
    pub violation: f64,
}

/// Separable Gibbs kernel `exp(-scale |x - y|² / eps)` on a grid.
#[derive(Debug, Clone)]
pub(crate) struct GibbsKernel {
    nx: usize,
    ny: usize,
    h: f64,
    weights: Vec<f64>,
    eps: f64,
    scale: f64,
}

impl GibbsKernel {
    /// `eps` is absolute (length² units); `scale` multiplies the squared
    /// distance in the cost (1 for `|x-y|²`, 0.5 for `|x-y|²/2`).
    pub fn new(grid: &GridSpec, eps: f64, scale: f64, truncation: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::domain(format!("entropic eps must be positive, got {eps}")));
        }
        let reach = grid.nx.max(grid.ny);
        let mut weights = Vec::new();
        for d in 0..reach {
            let dist = d as f64 * grid.h;
            let w = (-scale * dist * dist / eps).exp();
            if w < truncation {
                break;
            }
            weights.push(w);
        }
        Ok(Self {
            nx: grid.nx,
            ny: grid.ny,
            h: grid.h,
            weights,
            eps,
            scale,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Cost between two cell indices.
    #[cfg(test)]
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        let (ia, ja) = ((a % self.nx) as f64, (a / self.nx) as f64);
        let (ib, jb) = ((b % self.nx) as f64, (b / self.nx) as f64);
        self.scale * self.h * self.h * ((ia - ib).powi(2) + (ja - jb).powi(2))
    }

    pub fn radius(&self) -> usize {
        self.weights.len().saturating_sub(1)
    }

    /// `out = K input`; `tmp` is scratch of the same length.
    pub fn apply(&self, input: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let r = self.radius();
        tmp.iter_mut().for_each(|v| *v = 0.0);
        let mut row_live = vec![false; ny];
        for j in 0..ny {
            let row = &input[j * nx..(j + 1) * nx];
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            row_live[j] = true;
            let dst = &mut tmp[j * nx..(j + 1) * nx];
            for (i, d) in dst.iter_mut().zip(row) {
                *i = self.weights[0] * d;
            }
            for s in 1..=r.min(nx - 1) {
                let w = self.weights[s];
                for i in s..nx {
                    dst[i] += w * row[i - s];
                }
                for i in 0..nx - s {
                    dst[i] += w * row[i + s];
                }
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for jj in 0..ny {
            if !row_live[jj] {
                continue;
            }
            let src = &tmp[jj * nx..(jj + 1) * nx];
            let lo = jj.saturating_sub(r);
            let hi = (jj + r).min(ny - 1);
            for j in lo..=hi {
                let w = self.weights[j.abs_diff(jj)];
                let dst = &mut out[j * nx..(j + 1) * nx];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }

    /// Transport cost `Σ_ij u_i K_ij v_j c_ij` of the scaled plan, together
    /// with its total mass. Only kernel-reachable pairs contribute.
    pub fn plan_cost(&self, u: &[f64], v: &[f64]) -> (f64, f64) {
        let (nx, ny) = (self.nx, self.ny);
        let r = self.radius() as isize;
        let mut cost = 0.0;
        let mut total = 0.0;
        for ja in 0..ny {
            for ia in 0..nx {
                let ua = u[ja * nx + ia];
                if ua == 0.0 {
                    continue;
                }
                for dj in -r..=r {
                    let jb = ja as isize + dj;
                    if jb < 0 || jb >= ny as isize {
                        continue;
                    }
                    let wy = self.weights[dj.unsigned_abs()];
                    for di in -r..=r {
                        let ib = ia as isize + di;
                        if ib < 0 || ib >= nx as isize {
                            continue;
                        }
                        let vb = v[jb as usize * nx + ib as usize];
                        if vb == 0.0 {
                            continue;
                        }
                        let p = ua * wy * self.weights[di.unsigned_abs()] * vb;
                        let d2 = ((di * di + dj * dj) as f64) * self.h * self.h;
                        cost += p * self.scale * d2;
                        total += p;
                    }
                }
            }
        }
        (cost, total)
    }
}

fn safe_div(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Balanced Sinkhorn scaling between cell-mass vectors `a` and `b`.
pub(crate) fn sinkhorn(
    kernel: &GibbsKernel,
    a: &[f64],
    b: &[f64],
    opts: &SinkhornOptions,
) -> Result<SinkhornOutcome> {
    let n = a.len();
    let total: f64 = a.iter().sum();
    let mut u = vec![0.0; n];
    let mut v: Vec<f64> = b.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut kv = vec![0.0; n];
    let mut ku = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut violation = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iter {
        kernel.apply(&v, &mut kv, &mut tmp);
        for k in 0..n {
            u[k] = safe_div(a[k], kv[k]);
        }
        kernel.apply(&u, &mut ku, &mut tmp);
        for k in 0..n {
            v[k] = safe_div(b[k], ku[k]);
        }
        it += 1;
        if it % 10 == 0 || it == opts.max_iter {
            kernel.apply(&v, &mut kv, &mut tmp);
            violation = a
                .iter()
                .zip(u.iter().zip(&kv))
                .map(|(&ak, (&uk, &kvk))| (uk * kvk - ak).abs())
                .sum::<f64>()
                / total;
            if !violation.is_finite() {
                return Err(Error::domain(
                    "transport exceeds the kernel reach; increase eps or the truncation range",
                ));
            }
            if violation < opts.tol {
                break;
            }
        }
    }
    if violation >= opts.tol {
        return Err(Error::NoConvergence {
            what: "sinkhorn",
            iterations: it,
            residual: violation,
        });
    }
    Ok(SinkhornOutcome {
        u,
        v,
        iterations: it,
        violation,
    })
}

/// Symmetric Sinkhorn for `OT_eps(a, a)`; returns the scaling `u`.
fn sinkhorn_symmetric(kernel: &GibbsKernel, a: &[f64], opts: &SinkhornOptions) -> Result<Vec<f64>> {
    let n = a.len();
    let total: f64 = a.iter().sum();
    let mut u: Vec<f64> = a.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut ku = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for it in 0..opts.max_iter {
        kernel.apply(&u, &mut ku, &mut tmp);
        let violation = a
            .iter()
            .zip(u.iter().zip(&ku))
            .map(|(&ak, (&uk, &kuk))| (uk * kuk - ak).abs())
            .sum::<f64>()
            / total;
        if !violation.is_finite() {
            return Err(Error::domain("symmetric transport exceeds the kernel reach"));
        }
        if violation < opts.tol {
            return Ok(u);
        }
        for k in 0..n {
            u[k] = (u[k] * safe_div(a[k], ku[k])).sqrt();
        }
        if it + 1 == opts.max_iter {
            return Err(Error::NoConvergence {
                what: "symmetric sinkhorn",
                iterations: opts.max_iter,
                residual: violation,
            });
        }
    }
    Ok(u)
}

fn dual_term(weights: &[f64], scaling: &[f64], eps: f64) -> f64 {
    weights
        .iter()
        .zip(scaling)
        .filter(|(&w, _)| w > 0.0)
        .map(|(&w, &s)| w * eps * (s / w).ln())
        .sum()
}

fn probability_weights(f: &ScalarField) -> Result<Vec<f64>> {
    let total: f64 = f.values().iter().sum();
    if !(total > 0.0) || !f.is_density() {
        return Err(Error::domain("W2 estimate needs nonnegative fields with positive mass"));
    }
    Ok(f.values().iter().map(|&v| v / total).collect())
}

/// Debiased entropic W₂ between the probability normalizations of `f` and
/// `g`. `eps` is in units of `h²`.
pub fn w2_estimate_normalized(
    f: &ScalarField,
    g: &ScalarField,
    eps: f64,
    opts: &SinkhornOptions,
) -> Result<f64> {
    f.grid().ensure_same(g.grid())?;
    let a = probability_weights(f)?;
    let b = probability_weights(g)?;
    let grid = f.grid();
    let eps_abs = eps * grid.cell_area();
    let kernel = GibbsKernel::new(grid, eps_abs, 1.0, opts.truncation)?;
    let fg = sinkhorn(&kernel, &a, &b, opts)?;
    let ot_fg = dual_term(&a, &fg.u, eps_abs) + dual_term(&b, &fg.v, eps_abs);
    let ua = sinkhorn_symmetric(&kernel, &a, opts)?;
    let ub = sinkhorn_symmetric(&kernel, &b, opts)?;
    let ot_ff = 2.0 * dual_term(&a, &ua, eps_abs);
    let ot_gg = 2.0 * dual_term(&b, &ub, eps_abs);
    let divergence = ot_fg - 0.5 * (ot_ff + ot_gg);
    Ok(divergence.max(0.0).sqrt())
}

/// W₂ between `f` and `g` as measures of their (common) mass: the normalized
/// estimate rescaled by `√mass`.
pub fn w2_estimate(f: &ScalarField, g: &ScalarField, eps: f64) -> Result<f64> {
    let w = w2_estimate_normalized(f, g, eps, &SinkhornOptions::default())?;
    let m = 0.5 * (mass(f) + mass(g));
    Ok(w * m.sqrt())
}

//! Level-set evolution of a patch under `-Δp = 1` in `Ω`, `p = 0` outside,
//! with normal boundary velocity `V = -ν·(∇p + ∇Φ)` and `Φ = N * χ_Ω`.
//!
//! The pressure uses the ghost-fluid cut-cell discretization: a neighbour
//! across the interface at fraction `θ` of a cell is replaced by the linear
//! extrapolation through the cell value and `p = 0` on the interface. The
//! resulting matrix is symmetric positive definite and solved by
//! Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::field::{GridSpec, PatchMask, ScalarField};
use crate::newtonian::{centered_gradient, Newtonian};
use crate::shapes::Shape;
use crate::SUPPORT_MARGIN;

/// Smallest interface fraction used in the cut-cell stencil.
const THETA_MIN: f64 = 1e-3;

/// Signed level function on cell centers; `Ω = {φ < 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    phi: ScalarField,
    /// Built from a mask: cells are wholly in or out.
    staircase: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.b.0 - self.a.0).hypot(self.b.1 - self.a.1)
    }

    fn distance(&self, p: (f64, f64)) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((p.0 - self.a.0) * dx + (p.1 - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p.0 - self.a.0 - t * dx).hypot(p.1 - self.a.1 - t * dy)
    }
}

impl LevelSet {
    /// Wraps a level function as is.
    pub fn new(phi: ScalarField) -> Self {
        Self { phi, staircase: false }
    }

    /// Samples `shape` and reinitializes to a signed distance.
    pub fn from_shape(grid: GridSpec, shape: &Shape) -> Result<Self> {
        let mut ls = Self::new(shape.sample(grid)?);
        ls.reinitialize()?;
        Ok(ls)
    }

    /// `∓h/2` on mask cells: the interface sits on cell faces, so every cut
    /// fraction is exactly one half.
    pub fn staircase(mask: &PatchMask) -> Self {
        let g = *mask.grid();
        let half = g.h / 2.0;
        let values = mask.bits().iter().map(|&b| if b { -half } else { half }).collect();
        Self {
            phi: ScalarField::from_values(g, values).expect("finite"),
            staircase: true,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.phi.grid()
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn is_inside(&self, k: usize) -> bool {
        self.phi.values()[k] < 0.0
    }

    pub fn is_empty(&self) -> bool {
        self.phi.values().iter().all(|&v| v >= 0.0)
    }

    /// Adds `delta` everywhere (moves the interface by `-delta` along ν).
    pub fn shift(&mut self, delta: f64) {
        self.staircase = false;
        self.phi.values_mut().iter_mut().for_each(|v| *v += delta);
    }

    /// Zero contour by marching squares over the cell-center lattice.
    pub fn interface_segments(&self) -> Vec<Segment> {
        let g = *self.grid();
        let v = self.phi.values();
        let mut out = Vec::new();
        if g.nx < 2 || g.ny < 2 {
            return out;
        }
        for j in 0..g.ny - 1 {
            for i in 0..g.nx - 1 {
                let c = [
                    (i, j),
                    (i + 1, j),
                    (i + 1, j + 1),
                    (i, j + 1),
                ];
                let val: [f64; 4] = c.map(|(a, b)| v[g.idx(a, b)]);
                let inside = val.map(|x| x < 0.0);
                if inside.iter().all(|&s| s) || inside.iter().all(|&s| !s) {
                    continue;
                }
                // crossing on edge e between corner e and corner e+1
                let mut cross: [Option<(f64, f64)>; 4] = [None; 4];
                for e in 0..4 {
                    let n = (e + 1) % 4;
                    if inside[e] != inside[n] {
                        let t = val[e] / (val[e] - val[n]);
                        let (p, q) = ((g.x(c[e].0), g.y(c[e].1)), (g.x(c[n].0), g.y(c[n].1)));
                        cross[e] = Some((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
                    }
                }
                let pts: Vec<(f64, f64)> = cross.iter().flatten().copied().collect();
                if pts.len() == 2 {
                    out.push(Segment { a: pts[0], b: pts[1] });
                    continue;
                }
                // saddle: cut off the corners whose sign differs from the center
                let center_inside = val.iter().sum::<f64>() / 4.0 < 0.0;
                for k in 0..4 {
                    if inside[k] != center_inside {
                        let prev = (k + 3) % 4;
                        if let (Some(a), Some(b)) = (cross[prev], cross[k]) {
                            out.push(Segment { a, b });
                        }
                    }
                }
            }
        }
        out
    }

    /// Replaces `φ` by the signed distance to its current zero contour.
    pub fn reinitialize(&mut self) -> Result<()> {
        self.staircase = false;
        let g = *self.grid();
        let segs = self.interface_segments();
        if segs.is_empty() {
            if self.phi.values().iter().any(|&v| v < 0.0) {
                return Err(Error::Degenerate("patch fills the whole box".into()));
            }
            let far = g.nx.max(g.ny) as f64 * g.h * 2.0;
            self.phi = ScalarField::constant(g, far);
            return Ok(());
        }
        const BIN: usize = 4;
        let (bx, by) = (g.nx.div_ceil(BIN), g.ny.div_ceil(BIN));
        let mut bins: Vec<Vec<usize>> = vec![Vec::new(); bx * by];
        let to_bin = |x: f64, y: f64| {
            let i = ((x - g.origin.0) / g.h + 0.5).floor().clamp(0.0, (g.nx - 1) as f64) as usize;
            let j = ((y - g.origin.1) / g.h + 0.5).floor().clamp(0.0, (g.ny - 1) as f64) as usize;
            (i / BIN, j / BIN)
        };
        for (s, seg) in segs.iter().enumerate() {
            let (a, b) = (to_bin(seg.a.0, seg.a.1), to_bin(seg.b.0, seg.b.1));
            for j in a.1.min(b.1)..=a.1.max(b.1) {
                for i in a.0.min(b.0)..=a.0.max(b.0) {
                    bins[j * bx + i].push(s);
                }
            }
        }
        let ring_width = (BIN as f64 - 1.0) * g.h;
        let old = self.phi.values().to_vec();
        let vals = self.phi.values_mut();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = (g.x(i), g.y(j));
                let (ci, cj) = (i / BIN, j / BIN);
                let mut best = f64::INFINITY;
                for ring in 0..bx.max(by) {
                    let (i0, i1) = (ci.saturating_sub(ring), (ci + ring).min(bx - 1));
                    let (j0, j1) = (cj.saturating_sub(ring), (cj + ring).min(by - 1));
                    for bj in j0..=j1 {
                        for bi in i0..=i1 {
                            let on_ring = bi + ring == ci || bi == ci + ring || bj + ring == cj || bj == cj + ring;
                            if !on_ring {
                                continue;
                            }
                            for &s in &bins[bj * bx + bi] {
                                best = best.min(segs[s].distance(p));
                            }
                        }
                    }
                    if best <= ring as f64 * ring_width {
                        break;
                    }
                }
                let k = g.idx(i, j);
                vals[k] = if old[k] < 0.0 { -best } else { best };
            }
        }
        Ok(())
    }

    /// Unit normals `∇φ/|∇φ|` (zero where the gradient vanishes) and `|∇φ|`.
    pub fn normals(&self) -> (ScalarField, ScalarField, ScalarField) {
        let (gx, gy) = centered_gradient(&self.phi);
        let norm = gx.zip_map(&gy, f64::hypot).expect("same grid");
        let nx = gx.zip_map(&norm, |a, n| if n > 1e-12 { a / n } else { 0.0 }).expect("same grid");
        let ny = gy.zip_map(&norm, |a, n| if n > 1e-12 { a / n } else { 0.0 }).expect("same grid");
        (nx, ny, norm)
    }

    /// Per-cell area fraction of `Ω`, treating the interface as straight
    /// within each cell.
    pub fn volume_fractions(&self) -> ScalarField {
        if self.staircase {
            return self.phi.map(|v| if v < 0.0 { 1.0 } else { 0.0 });
        }
        let (nx, ny, norm) = self.normals();
        let h = self.grid().h;
        let v = self.phi.values();
        let mut out = vec![0.0; v.len()];
        for k in 0..v.len() {
            out[k] = if norm.values()[k] > 1e-12 {
                let d = v[k] / norm.values()[k];
                cut_fraction(d / h, nx.values()[k], ny.values()[k])
            } else if v[k] < 0.0 {
                1.0
            } else {
                0.0
            };
        }
        ScalarField::from_values(*self.grid(), out).expect("finite")
    }

    pub fn area(&self) -> f64 {
        self.volume_fractions().integral()
    }

    /// Length of the zero contour.
    pub fn perimeter(&self) -> f64 {
        self.interface_segments().iter().map(Segment::length).sum()
    }

    /// Range of `|∇φ|` over cells with `|φ| ≤ band·h`.
    pub fn gradient_range(&self, band: f64) -> (f64, f64) {
        let (_, _, norm) = self.normals();
        let h = self.grid().h;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for (k, &v) in self.phi.values().iter().enumerate() {
            if v.abs() <= band * h {
                lo = lo.min(norm.values()[k]);
                hi = hi.max(norm.values()[k]);
            }
        }
        (lo, hi)
    }

    fn check_margin(&self) -> Result<()> {
        let g = self.grid();
        for j in 0..g.ny {
            for i in 0..g.nx {
                if self.phi.at(i, j) < 0.0 && g.edge_distance(i, j) < SUPPORT_MARGIN {
                    return Err(Error::Margin(format!(
                        "patch within {SUPPORT_MARGIN} cells of the box edge at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Uniform shift restoring `area`; returns the shift.
    pub fn correct_volume(&mut self, area: f64) -> Result<f64> {
        let h = self.grid().h;
        let mut total = 0.0;
        for _ in 0..20 {
            let now = self.area();
            let err = now - area;
            if err.abs() <= 1e-12 * area.max(1.0) {
                return Ok(total);
            }
            let per = self.perimeter();
            if per <= 0.0 {
                return Err(Error::Degenerate("volume correction on an empty patch".into()));
            }
            let delta = (err / per).clamp(-h, h);
            self.shift(delta);
            total += delta;
        }
        let err = (self.area() - area).abs();
        if err > 1e-9 * area.max(1.0) {
            return Err(Error::NoConvergence {
                what: "volume correction",
                iterations: 20,
                residual: err,
            });
        }
        Ok(total)
    }
}

/// Area of `{u ∈ [-½,½]² : n·u < -d}` for a unit normal `n`.
pub(crate) fn cut_fraction(d: f64, nx: f64, ny: f64) -> f64 {
    let (a, b) = (nx.abs(), ny.abs());
    let s = -d + (a + b) / 2.0;
    if s <= 0.0 {
        return 0.0;
    }
    if s >= a + b {
        return 1.0;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo < 1e-9 {
        return (s / hi).clamp(0.0, 1.0);
    }
    let sq = |x: f64| if x > 0.0 { x * x } else { 0.0 };
    ((sq(s) - sq(s - a) - sq(s - b) + sq(s - a - b)) / (2.0 * a * b)).clamp(0.0, 1.0)
}

/// Cells with `φ < 0`.
pub fn patch_mask(ls: &LevelSet) -> PatchMask {
    let bits = (0..ls.grid().len()).map(|k| ls.is_inside(k)).collect();
    PatchMask::from_bits(*ls.grid(), bits).expect("length matches the grid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureSolve {
    pub p: ScalarField,
    /// Max-norm residual of `-Δp - 1` over the unknowns.
    pub residual: f64,
    pub iterations: usize,
}

struct CutCellSystem {
    cells: Vec<usize>,
    /// Unknown index of each neighbour (E, W, N, S), `usize::MAX` across the
    /// interface.
    nbr: Vec<[usize; 4]>,
    diag: Vec<f64>,
    ih2: f64,
}

impl CutCellSystem {
    fn new(ls: &LevelSet) -> Result<Self> {
        let g = *ls.grid();
        let v = ls.phi.values();
        let mut id = vec![usize::MAX; g.len()];
        let mut cells = Vec::new();
        for (k, &x) in v.iter().enumerate() {
            if x < 0.0 {
                id[k] = cells.len();
                cells.push(k);
            }
        }
        let ih2 = 1.0 / g.cell_area();
        let mut nbr = Vec::with_capacity(cells.len());
        let mut diag = Vec::with_capacity(cells.len());
        for &k in &cells {
            let (i, j) = (k % g.nx, k / g.nx);
            if i == 0 || j == 0 || i + 1 == g.nx || j + 1 == g.ny {
                return Err(Error::Margin("patch touches the box edge".into()));
            }
            let ks = [k + 1, k - 1, k + g.nx, k - g.nx];
            let mut n = [usize::MAX; 4];
            let mut d = 0.0;
            for s in 0..4 {
                if v[ks[s]] < 0.0 {
                    n[s] = id[ks[s]];
                    d += ih2;
                } else {
                    d += ih2 / (v[k] / (v[k] - v[ks[s]])).max(THETA_MIN);
                }
            }
            nbr.push(n);
            diag.push(d);
        }
        Ok(Self { cells, nbr, diag, ih2 })
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[r] * x[r];
            for &n in &self.nbr[r] {
                if n != usize::MAX {
                    acc -= self.ih2 * x[n];
                }
            }
            *o = acc;
        }
    }
}

const CG_TOL: f64 = 1e-11;

fn solve_cut_cell(ls: &LevelSet, guess: Option<&ScalarField>) -> Result<(PressureSolve, CutCellSystem)> {
    let g = *ls.grid();
    let sys = CutCellSystem::new(ls)?;
    let n = sys.cells.len();
    let mut x: Vec<f64> = match guess {
        Some(p) => sys.cells.iter().map(|&k| p.values()[k].max(0.0)).collect(),
        None => vec![0.0; n],
    };
    let mut ax = vec![0.0; n];
    sys.apply(&x, &mut ax);
    let mut r: Vec<f64> = ax.iter().map(|a| 1.0 - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&sys.diag).map(|(a, d)| a / d).collect();
    let mut d = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = 20 * n + 100;
    let mut iterations = 0;
    let mut res = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut q = vec![0.0; n];
    while res > CG_TOL && iterations < max_iter {
        sys.apply(&d, &mut q);
        let dq: f64 = d.iter().zip(&q).map(|(a, b)| a * b).sum();
        let alpha = rz / dq;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] / sys.diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
        iterations += 1;
        res = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    // recompute the true residual rather than trusting the recurrence
    sys.apply(&x, &mut ax);
    res = ax.iter().fold(0.0f64, |m, a| m.max((a - 1.0).abs()));
    if res > 1e-8 {
        return Err(Error::NoConvergence {
            what: "pressure CG",
            iterations,
            residual: res,
        });
    }
    let mut p = vec![0.0; g.len()];
    for (r, &k) in sys.cells.iter().enumerate() {
        if x[r] < -1e-12 {
            return Err(Error::domain(format!("pressure {} < 0 inside the patch", x[r])));
        }
        p[k] = x[r].max(0.0);
    }
    Ok((
        PressureSolve {
            p: ScalarField::from_values(g, p)?,
            residual: res,
            iterations,
        },
        sys,
    ))
}

/// `-Δp = 1` on the cut-cell domain of `ls`.
pub fn solve_pressure(ls: &LevelSet) -> Result<PressureSolve> {
    if ls.is_empty() {
        return Err(Error::domain("pressure solve on an empty patch"));
    }
    Ok(solve_cut_cell(ls, None)?.0)
}

/// Pressure on the union of mask cells (interface on cell faces).
pub fn initial_pressure(mask: &PatchMask) -> Result<PressureSolve> {
    if mask.is_empty() {
        return Err(Error::domain("pressure solve on an empty mask"));
    }
    solve_pressure(&LevelSet::staircase(mask))
}

/// `∇p` on inside cells with ghost values across the interface.
fn pressure_gradient(ls: &LevelSet, p: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    let g = *ls.grid();
    let v = ls.phi.values();
    let pv = p.values();
    let mut gx = vec![0.0; g.len()];
    let mut gy = vec![0.0; g.len()];
    let ghost = |k: usize, nb: usize| {
        if v[nb] < 0.0 {
            pv[nb]
        } else {
            let th = (v[k] / (v[k] - v[nb])).max(THETA_MIN);
            pv[k] * (1.0 - 1.0 / th)
        }
    };
    let i2h = 0.5 / g.h;
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let k = g.idx(i, j);
            if v[k] < 0.0 {
                gx[k] = (ghost(k, k + 1) - ghost(k, k - 1)) * i2h;
                gy[k] = (ghost(k, k + g.nx) - ghost(k, k - g.nx)) * i2h;
            }
        }
    }
    (gx, gy)
}

/// Fills outside cells, in order of increasing `φ`, by upwind constant
/// extension along `∇φ`.
fn extend_outward(ls: &LevelSet, fields: &mut [&mut Vec<f64>]) {
    let g = *ls.grid();
    let v = ls.phi.values();
    let mut order: Vec<usize> = (0..g.len()).filter(|&k| v[k] >= 0.0).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut known: Vec<bool> = v.iter().map(|&x| x < 0.0).collect();
    for k in order {
        let (i, j) = (k % g.nx, k / g.nx);
        let pick = |a: Option<usize>, b: Option<usize>| {
            [a, b]
                .into_iter()
                .flatten()
                .filter(|&n| known[n] && v[n] < v[k])
                .min_by(|&x, &y| v[x].total_cmp(&v[y]))
        };
        let xn = pick((i > 0).then(|| k - 1), (i + 1 < g.nx).then(|| k + 1));
        let yn = pick((j > 0).then(|| k - g.nx), (j + 1 < g.ny).then(|| k + g.nx));
        let wx = xn.map_or(0.0, |n| v[k] - v[n]);
        let wy = yn.map_or(0.0, |n| v[k] - v[n]);
        if wx + wy > 0.0 {
            for f in fields.iter_mut() {
                let fx = xn.map_or(0.0, |n| f[n]);
                let fy = yn.map_or(0.0, |n| f[n]);
                f[k] = (wx * fx + wy * fy) / (wx + wy);
            }
        } else if let Some(n) = xn.or(yn) {
            for f in fields.iter_mut() {
                f[k] = f[n];
            }
        }
        known[k] = true;
    }
}

/// Normal velocity field and its largest value on the interface.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub normal: ScalarField,
    pub max_interface: f64,
}

/// Normal velocity `-(∇p + ∇Φ)·ν` given the potential `Φ`: evaluated on
/// patch cells, extended outward along normals, zero beyond `band` cells.
pub fn velocity_with_potential(ls: &LevelSet, p: &ScalarField, potential: &ScalarField, band: f64) -> Result<Velocity> {
    let g = *ls.grid();
    let (nx, ny, norm) = ls.normals();
    let h = g.h;
    for (k, &v) in ls.phi.values().iter().enumerate() {
        if v.abs() <= band * h && norm.values()[k] < 0.1 {
            let (i, j) = (k % g.nx, k / g.nx);
            return Err(Error::Degenerate(format!(
                "|∇φ| = {:.3} at ({i}, {j}); reinitialize first",
                norm.values()[k]
            )));
        }
    }
    let (gx, gy) = pressure_gradient(ls, p);
    let (fx, fy) = centered_gradient(potential);
    let phi = ls.phi.values();
    let mut f: Vec<f64> = (0..g.len())
        .map(|k| {
            if phi[k] < 0.0 {
                -((gx[k] + fx.values()[k]) * nx.values()[k] + (gy[k] + fy.values()[k]) * ny.values()[k])
            } else {
                0.0
            }
        })
        .collect();
    extend_outward(ls, &mut [&mut f]);
    for (v, &d) in f.iter_mut().zip(phi) {
        if d.abs() > band * h {
            *v = 0.0;
        }
    }
    let normal = ScalarField::from_values(g, f)?;
    let max_interface = interface_max(ls, &normal);
    Ok(Velocity { normal, max_interface })
}

/// Largest `|F|` interpolated to sign changes between neighbouring cells.
fn interface_max(ls: &LevelSet, f: &ScalarField) -> f64 {
    let g = *ls.grid();
    let v = ls.phi.values();
    let fv = f.values();
    let mut out = 0.0f64;
    let mut probe = |a: usize, b: usize| {
        if (v[a] < 0.0) != (v[b] < 0.0) {
            let t = v[a] / (v[a] - v[b]);
            out = out.max((fv[a] + t * (fv[b] - fv[a])).abs());
        }
    };
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            if i + 1 < g.nx {
                probe(k, k + 1);
            }
            if j + 1 < g.ny {
                probe(k, k + g.nx);
            }
        }
    }
    out
}

/// Normal velocity with `Φ = N * χ_Ω` computed from the volume fractions.
pub fn boundary_velocity(ls: &LevelSet, p: &ScalarField) -> Result<Velocity> {
    let op = Newtonian::new(*ls.grid());
    let phi = op.potential(&ls.volume_fractions())?;
    velocity_with_potential(ls, p, &phi, 5.0)
}

/// One first-order Godunov step of `φ_t + F|∇φ| = 0`.
fn advect(ls: &mut LevelSet, f: &ScalarField, dt: f64) {
    let g = *ls.grid();
    let ih = 1.0 / g.h;
    let old = ls.phi.values().to_vec();
    let vals = ls.phi.values_mut();
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let k = g.idx(i, j);
            let speed = f.values()[k];
            if speed == 0.0 {
                continue;
            }
            let dxm = (old[k] - old[k - 1]) * ih;
            let dxp = (old[k + 1] - old[k]) * ih;
            let dym = (old[k] - old[k - g.nx]) * ih;
            let dyp = (old[k + g.nx] - old[k]) * ih;
            let grad = if speed > 0.0 {
                (dxm.max(0.0).powi(2) + dxp.min(0.0).powi(2) + dym.max(0.0).powi(2) + dyp.min(0.0).powi(2)).sqrt()
            } else {
                (dxm.min(0.0).powi(2) + dxp.max(0.0).powi(2) + dym.min(0.0).powi(2) + dyp.max(0.0).powi(2)).sqrt()
            };
            vals[k] = old[k] - dt * speed * grad;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeleShawConfig {
    pub t_end: f64,
    /// `dt ≤ cfl·h / max|V|`.
    pub cfl: f64,
    /// `dt ≤ dt_max_cells·h` whatever the speed. A boundary mode of
    /// wavenumber ξ relaxes at rate about ξ/2, so explicit steps need
    /// `dt ≲ 4h/π` even for a resting patch.
    pub dt_max_cells: f64,
    /// Steps between reinitializations. Each one nudges the contour and the
    /// volume correction then adds a little energy back, so anything above 1
    /// lets `E_∞` tick upward by about 1e-6 once the gap is small.
    pub reinit_every: usize,
    pub volume_correction: bool,
    /// Half-width of the velocity band in cells.
    pub band: f64,
}

impl HeleShawConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            cfl: 0.5,
            dt_max_cells: 1.0,
            reinit_every: 1,
            volume_correction: true,
            band: 5.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::domain(format!("bad t_end {}", self.t_end)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::domain(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.dt_max_cells > 0.0) || self.reinit_every == 0 || !(self.band >= 2.0) {
            return Err(Error::domain("dt_max_cells > 0, reinit_every ≥ 1 and band ≥ 2 required"));
        }
        Ok(())
    }
}

/// State handed to the observer once per step, before the update.
#[derive(Debug)]
pub struct Frame<'a> {
    pub t: f64,
    pub step: usize,
    pub level_set: &'a LevelSet,
    pub fractions: &'a ScalarField,
    pub pressure: &'a PressureSolve,
    pub potential: &'a ScalarField,
    pub velocity: &'a Velocity,
}

#[derive(Debug, Clone)]
pub struct HeleShawRun {
    pub level_set: LevelSet,
    pub t: f64,
    pub steps: usize,
    pub area0: f64,
}

/// Evolves `ls` to `cfg.t_end`. The observer sees every step, including the
/// final state.
pub fn evolve(
    mut ls: LevelSet,
    cfg: &HeleShawConfig,
    mut observer: impl FnMut(&Frame) -> Result<()>,
) -> Result<HeleShawRun> {
    cfg.validate()?;
    if ls.is_empty() {
        return Err(Error::domain("evolve needs a nonempty patch"));
    }
    ls.check_margin()?;
    let g = *ls.grid();
    let op = Newtonian::new(g);
    let area0 = ls.area();
    let mut t = 0.0;
    let mut steps = 0;
    let mut guess: Option<ScalarField> = None;
    loop {
        let fractions = ls.volume_fractions();
        let potential = op.potential(&fractions)?;
        let (pressure, _) = solve_cut_cell(&ls, guess.as_ref())?;
        let velocity = velocity_with_potential(&ls, &pressure.p, &potential, cfg.band)?;
        observer(&Frame {
            t,
            step: steps,
            level_set: &ls,
            fractions: &fractions,
            pressure: &pressure,
            potential: &potential,
            velocity: &velocity,
        })?;
        if t >= cfg.t_end {
            break;
        }
        let vmax = band_max(&ls, &velocity.normal, cfg.band);
        let mut dt = (cfg.cfl * g.h / vmax.max(1e-12)).min(cfg.dt_max_cells * g.h);
        if t + dt > cfg.t_end - 1e-3 * dt {
            dt = cfg.t_end - t;
        }
        advect(&mut ls, &velocity.normal, dt);
        steps += 1;
        if steps % cfg.reinit_every == 0 {
            ls.reinitialize()?;
        }
        if cfg.volume_correction {
            ls.correct_volume(area0)?;
        }
        ls.check_margin()?;
        t = if t + dt >= cfg.t_end - 1e-12 { cfg.t_end } else { t + dt };
        guess = Some(pressure.p);
    }
    Ok(HeleShawRun { level_set: ls, t, steps, area0 })
}

fn band_max(ls: &LevelSet, f: &ScalarField, band: f64) -> f64 {
    let h = ls.grid().h;
    ls.phi
        .values()
        .iter()
        .zip(f.values())
        .filter(|(p, _)| p.abs() <= band * h)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cut_fraction_limits() {
        assert_eq!(cut_fraction(0.0, 1.0, 0.0), 0.5);
        assert_eq!(cut_fraction(-1.0, 0.6, 0.8), 1.0);
        assert_eq!(cut_fraction(1.0, 0.6, 0.8), 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((cut_fraction(0.0, s, s) - 0.5).abs() < 1e-15);
        // diagonal line through a corner region: triangle of legs 1/2
        let d = s / 2.0;
        assert!((cut_fraction(d, s, s) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn staircase_pressure_on_single_cell() {
        let g = GridSpec::centered(12, 0.5, (0.0, 0.0)).unwrap();
        let mask = PatchMask::from_fn(g, |x, y| x.abs() < 0.3 && y.abs() < 0.3);
        assert_eq!(mask.count(), 4);
        let s = initial_pressure(&mask).unwrap();
        // four cells, each with two inside and two cut neighbours at θ = 1/2:
        // (6 p - 2 p) / h² = 1
        let expected = 0.25 / 4.0;
        for v in s.p.values().iter().filter(|v| **v > 0.0) {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mask_is_rejected() {
        let g = GridSpec::centered(12, 0.5, (0.0, 0.0)).unwrap();
        let mask = PatchMask::from_fn(g, |_, _| false);
        assert!(initial_pressure(&mask).is_err());
        assert!(patch_mask(&LevelSet::staircase(&mask)).is_empty());
    }
}

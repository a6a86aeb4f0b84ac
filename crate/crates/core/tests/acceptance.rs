//! Acceptance suite: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::sync::OnceLock;

use cagg::cli::m_sweep;
use cagg::field::{
    center_of_mass, lp_distance, mass, second_moment, w2_estimate_normalized, GridSpec, ScalarField, SinkhornOptions,
};
use cagg::heleshaw::{evolve, solve_pressure, HeleShawConfig, LevelSet};
use cagg::jko::{default_eps, fixed_point_step, jko_step_with, run_flow, EnergySpec, JkoOptions, Schedule};
use cagg::modulus::{branch_omega, branch_sigma, f_tau_n, flow_f, omega, sigma, ModulusParams, DEFAULT_C_D};
use cagg::pme::{l1_contraction_test, run, Drift, FrozenSequence, PmeConfig, PmeSolver};
use cagg::shape::{
    asymmetry_of, c1_constant, disk_fractions, energy_gap_of, excursion_constant, f_functional, rate_fit,
    talenti_profile, C0_CALIBRATED,
};
use cagg::shapes::Shape;

mod common;
use common::{barenblatt_m2, lp_optimum, square_pressure_integral};

type Outcome = Result<String, String>;

fn need(ok: bool, msg: String) -> Result<String, String> {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn grid(n: usize, h: f64) -> GridSpec {
    GridSpec::centered(n, h, (0.0, 0.0)).unwrap()
}

fn disk_stationarity() -> Outcome {
    let h = 1.0 / 64.0;
    let ls = LevelSet::from_shape(grid(192, h), &Shape::disk((0.0, 0.0), 1.0)).map_err(err)?;
    let (mut area_dev, mut vmax, mut asym): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut next = 0.0;
    evolve(ls, &HeleShawConfig::new(5.0), |f| {
        area_dev = area_dev.max((f.fractions.integral() - PI).abs() / PI);
        vmax = vmax.max(f.velocity.max_interface);
        if f.t >= next || f.t >= 5.0 {
            asym = asym.max(asymmetry_of(f.fractions)?.value);
            next += 0.5;
        }
        Ok(())
    })
    .map_err(err)?;
    need(
        area_dev < 5e-3 && asym < 0.02 && vmax < 5.0 * h,
        format!("area drift {area_dev:.2e} (< 5e-3), A {asym:.4} (< 0.02), max|V| {vmax:.4} (< 5h = {:.4})", 5.0 * h),
    )
}

fn talenti_suite() -> Outcome {
    let h = 1.0 / 64.0;
    let g = grid(192, h);
    let disk = LevelSet::from_shape(g, &Shape::disk((0.0, 0.0), 1.0)).map_err(err)?;
    let area = disk.volume_fractions().integral();
    let ip = solve_pressure(&disk).map_err(err)?.p.integral();
    let ip_err = (ip - area * area / (8.0 * PI)).abs();
    let f_disk = f_functional(&disk).map_err(err)?;
    let square = LevelSet::from_shape(g, &Shape::square((0.0, 0.0), 1.0)).map_err(err)?;
    let f_square = f_functional(&square).map_err(err)?;
    let oracle = -1.0 / (2.0 * PI) + 4.0 * square_pressure_integral();
    let ellipse = LevelSet::from_shape(g, &Shape::ellipse((0.0, 0.0), 2f64.sqrt(), 0.5f64.sqrt())).map_err(err)?;
    let mut slopes = Vec::new();
    for ls in [&disk, &ellipse, &square] {
        slopes.push(talenti_profile(ls).map_err(err)?.bulk_max_slope());
    }
    let slope_ok = slopes.iter().all(|s| *s <= -4.0 * PI + 0.5);
    need(
        ip_err <= h
            && f_disk.abs() <= 1e-3 * area * area
            && (f_square - oracle).abs() <= 0.002
            && (oracle + 0.019).abs() <= 0.002
            && slope_ok,
        format!(
            "∫p error {ip_err:.2e} (≤ h), F(disk) {f_disk:.2e} (≤ {:.2e}), F(square) {f_square:.5} vs oracle {oracle:.5}, \
             bulk g' {:.3} {:.3} {:.3} (≤ {:.3})",
            1e-3 * area * area,
            slopes[0],
            slopes[1],
            slopes[2],
            -4.0 * PI + 0.5
        ),
    )
}

/// Per-step record of a Hele-Shaw run.
#[derive(Clone, Copy)]
struct Sample {
    t: f64,
    m2: f64,
    f: f64,
    asym: f64,
    gap: f64,
    com: (f64, f64),
}

struct PatchRun {
    h: f64,
    area0: f64,
    samples: Vec<Sample>,
    /// `‖χ_Ω(T) - χ_B₀‖₁` with `B₀` centered at the initial center of mass.
    l1_final: f64,
}

fn patch_run(shape: Shape, t_end: f64, full: bool) -> Result<PatchRun, String> {
    let h = 1.0 / 32.0;
    let ls = LevelSet::from_shape(grid(128, h), &shape).map_err(err)?;
    let mut samples = Vec::new();
    let run = evolve(ls, &HeleShawConfig::new(t_end), |f| {
        let u = f.fractions;
        let area = u.integral();
        let com = center_of_mass(u)?;
        let (asym, gap) = if full {
            (asymmetry_of(u)?.value, energy_gap_of(u)?.gap)
        } else {
            (f64::NAN, f64::NAN)
        };
        samples.push(Sample {
            t: f.t,
            m2: second_moment(u) - area * (com.0 * com.0 + com.1 * com.1),
            f: cagg::shape::f_value(u, &f.pressure.p),
            asym,
            gap,
            com,
        });
        Ok(())
    })
    .map_err(err)?;
    let u = run.level_set.volume_fractions();
    let c0 = samples[0].com;
    let disk = disk_fractions(*u.grid(), c0, (run.area0 / PI).sqrt());
    Ok(PatchRun {
        h,
        area0: run.area0,
        samples,
        l1_final: lp_distance(&u, &disk, 1.0).map_err(err)?,
    })
}

fn ellipse_run() -> &'static Result<PatchRun, String> {
    static RUN: OnceLock<Result<PatchRun, String>> = OnceLock::new();
    RUN.get_or_init(|| patch_run(Shape::ellipse((0.0, 0.0), 2f64.sqrt(), 0.5f64.sqrt()), 20.0, true))
}

fn trapezoid(s: &[Sample], f: impl Fn(&Sample) -> f64) -> f64 {
    s.windows(2).map(|w| 0.5 * (f(&w[0]) + f(&w[1])) * (w[1].t - w[0].t)).sum()
}

fn dissipation_suite() -> Outcome {
    let run = ellipse_run().as_ref().map_err(Clone::clone)?;
    let owned: Vec<Sample> = run.samples.iter().copied().filter(|s| s.t <= 10.0 + 1e-9).collect();
    let worst_step = owned.windows(2).map(|w| (w[1].m2 - w[0].m2) / w[0].m2).fold(f64::NEG_INFINITY, f64::max);
    let dm2 = owned.last().unwrap().m2 - owned[0].m2;
    let int_f = trapezoid(&owned, |x| x.f);
    let eq_ok = dm2 <= int_f + 0.05 * int_f.abs();
    let int_a3 = trapezoid(&owned, |x| x.asym.powi(3));
    let a0 = run.area0;
    let refined = -C0_CALIBRATED * a0 * a0 * int_a3;
    let cexc = excursion_constant(a0, owned[0].m2);
    let mut exc = Vec::new();
    for big_t in [2.0, 5.0, 10.0] {
        let min_a = owned.iter().filter(|x| x.t > 0.0 && x.t <= big_t).map(|x| x.asym).fold(f64::INFINITY, f64::min);
        exc.push((big_t, min_a, cexc * f64::powf(big_t, -1.0 / 3.0)));
    }
    let exc_ok = exc.iter().all(|(_, a, b)| a <= b);
    need(
        worst_step <= 1e-3 && eq_ok && dm2 <= refined && exc_ok,
        format!(
            "worst M₂ step {worst_step:.2e} (≤ 1e-3), ΔM₂ {dm2:.5} vs ∫F {int_f:.5} (rel {:.3}), ≤ -c₀|Ω|²∫A³ = {refined:.5}, \
             min A ≤ C T^(-1/3): {}",
            (dm2 - int_f).abs() / int_f.abs(),
            exc.iter().map(|(t, a, b)| format!("T={t}: {a:.4} ≤ {b:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn energy_decay() -> Outcome {
    let run = ellipse_run().as_ref().map_err(Clone::clone)?;
    let s: Vec<Sample> = run.samples.iter().copied().filter(|s| s.t <= 10.0 + 1e-9).collect();
    let worst_rise = s.windows(2).map(|w| w[1].gap - w[0].gap).fold(f64::NEG_INFINITY, f64::max);
    let c1 = c1_constant(run.area0, s[0].m2);
    let envelope = s
        .iter()
        .filter(|x| x.t >= 1.0)
        .map(|x| x.gap - c1 * x.t.powf(-1.0 / 6.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let fit_pts: Vec<&Sample> = s.iter().filter(|x| x.t >= 0.3).collect();
    let t: Vec<f64> = fit_pts.iter().map(|x| x.t).collect();
    let g: Vec<f64> = fit_pts.iter().map(|x| x.gap).collect();
    let fit = rate_fit(&t, &g, c1).map_err(err)?;
    need(
        worst_rise <= 0.0 && envelope <= 0.0 && fit.exponent <= -1.0 / 6.0,
        format!(
            "largest step rise {worst_rise:.2e} (≤ 0), max gap - C₁t^(-1/6) {envelope:.3e} (C₁ = {c1:.1}), tail slope {:.3} (≤ -1/6, {} points)",
            fit.exponent, fit.points
        ),
    )
}

fn long_time() -> Outcome {
    let ell = ellipse_run().as_ref().map_err(Clone::clone)?;
    let two = patch_run(Shape::two_disks((-1.0, 0.0), 0.7, (1.0, 0.0), 0.7), 20.0, false)?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, r) in [("ellipse", ell), ("two disks", &two)] {
        let c0 = r.samples[0].com;
        let drift = r.samples.iter().map(|s| (s.com.0 - c0.0).hypot(s.com.1 - c0.1)).fold(0.0, f64::max);
        let rel = r.l1_final / r.area0;
        ok &= rel < 0.05 && drift < 2.0 * r.h;
        parts.push(format!("{name}: ‖χ - χ_B₀‖₁/|Ω₀| {rel:.4} (< 0.05), center drift {drift:.2e} (< 2h)"));
    }
    need(ok, parts.join("; "))
}

fn barenblatt_error(n: usize) -> Result<f64, String> {
    let h = 4.0 / n as f64;
    let g = grid(n, h);
    let (t0, t1) = (0.1, 0.2);
    let rho0 = ScalarField::from_fn(g, |x, y| barenblatt_m2(x, y, t0));
    let out = run(rho0, PmeConfig::new(2.0, Drift::zero(g), t1 - t0), |_, _| Ok(())).map_err(err)?;
    let exact = ScalarField::from_fn(g, |x, y| barenblatt_m2(x, y, t1));
    lp_distance(&out.rho, &exact, 1.0).map_err(err)
}

fn pme_validation() -> Outcome {
    let (coarse, fine) = (barenblatt_error(64)?, barenblatt_error(128)?);
    let g = grid(96, 1.0 / 24.0);
    let rho0 = ScalarField::from_fn(g, |x, y| {
        let a = if (x - 0.4).powi(2) + y * y < 0.3 { 1.0 } else { 0.0 };
        let b = if (x + 0.5).powi(2) + (y - 0.2).powi(2) < 0.15 { 0.7 } else { 0.0 };
        a + b
    });
    let mut s = PmeSolver::new(rho0, PmeConfig::new(3.0, Drift::SelfConsistent, 0.05)).map_err(err)?;
    let mut prev = mass(s.rho());
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let dt = s.stable_dt().map_err(err)?;
        s.advance(dt).map_err(err)?;
        let now = mass(s.rho());
        worst = worst.max(((now - prev) / prev).abs());
        prev = now;
    }
    let a = ScalarField::from_fn(g, |x, y| if x * x + y * y < 1.0 { 1.0 } else { 0.0 });
    let b = ScalarField::from_fn(g, |x, y| if x * x + y * y < 1.21 { 1.0 } else { 0.0 });
    let phi = cagg::newtonian::potential(&a).map_err(err)?;
    let rep = l1_contraction_test(&a, &b, &PmeConfig::new(10.0, Drift::External(phi), 0.5), 0.5).map_err(err)?;
    need(
        coarse / fine >= 1.7 && worst <= 1e-12 && rep.passed && rep.slack <= 0.02,
        format!(
            "Barenblatt L¹ {coarse:.3e} -> {fine:.3e} (ratio {:.2} ≥ 1.7), worst mass step {worst:.1e}, \
             contraction {:.4} -> {:.4} (slack {})",
            coarse / fine,
            rep.initial,
            rep.final_distance,
            rep.slack
        ),
    )
}

fn m_sweep_suite() -> Outcome {
    let ls = LevelSet::from_shape(grid(128, 1.0 / 32.0), &Shape::ellipse((0.0, 0.0), 1.15, 0.87)).map_err(err)?;
    let rows = m_sweep(ls, 1.0, &[8.0, 16.0, 32.0, 64.0], DEFAULT_C_D).map_err(err)?;
    let decreasing = rows.windows(2).all(|w| w[1].l1_gap < w[0].l1_gap);
    let heights = rows.iter().all(|r| r.max_height <= r.height_bound);
    let barrier = rows.iter().all(|r| r.barrier_margin >= 0.0);
    let excess = rows.iter().all(|r| r.excess_mass <= r.excess_bound);
    let gaps: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.l1_gap)).collect();
    let hs: Vec<String> = rows.iter().map(|r| format!("{:.3}/{:.3}", r.max_height, r.height_bound)).collect();
    need(
        decreasing && heights && barrier && excess,
        format!(
            "L¹ gap {} (m = 8..64), height/bound {}, barrier margin ≥ {:.2e}, excess ≤ bound: {excess}",
            gaps.join(" > "),
            hs.join(" "),
            rows.iter().map(|r| r.barrier_margin).fold(f64::INFINITY, f64::min)
        ),
    )
}

fn jko_suite() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    let sink = SinkhornOptions::default();

    // one-step distance
    let h = 1.0 / 16.0;
    let g = grid(96, h);
    let ell = ScalarField::from_fn(g, |x, y| if (x / 1.4).powi(2) + (y / 0.7).powi(2) < 1.0 { 1.0 } else { 0.0 });
    let tau = 0.1;
    let step = fixed_point_step(&ell, tau, 2.0 * h * h).map_err(err)?;
    let w2 = w2_estimate_normalized(&ell, &step.rho_out, 2.0, &sink).map_err(err)?;
    let bound = 2.0 * DEFAULT_C_D * tau * 1.5;
    ok &= w2 <= bound && step.objective_decreases(0.0);
    parts.push(format!("W₂ one step {w2:.4} ≤ {bound:.4}"));

    // brute force on 8×8
    let h8 = 1.0 / 8.0;
    let g8 = grid(8, h8);
    let tau8 = 0.5;
    let rho8 = ScalarField::from_fn(g8, |x, y| {
        let r = (x + 0.1).hypot(y - 0.05);
        if r < 0.3 { 0.9 } else if r < 0.4 { 0.4 } else { 0.0 }
    });
    let w = ScalarField::from_fn(g8, |x, y| 0.6 * (x - 0.3).powi(2) + 0.4 * y * y + 0.8 * x);
    let spec = EnergySpec::frozen(ScalarField::zeros(g8)).with_potential(w.clone());
    let opts = JkoOptions { max_iter: 200_000, ..JkoOptions::default() };
    let ent = jko_step_with(&rho8, tau8, &spec, 0.05 * h8 * h8, &opts).map_err(err)?;
    let c = g8.cell_area();
    let a: Vec<f64> = rho8.values().iter().map(|v| v * c).collect();
    let cost = |i: usize, j: usize| {
        let (p, q) = (g8.center(i), g8.center(j));
        ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)) / (2.0 * tau8)
    };
    let lp = lp_optimum(&a, &cost, w.values(), c);
    let start: f64 = a.iter().zip(w.values()).map(|(m, w)| m * w).sum();
    let rel = (ent.objective - lp).abs() / (start - lp);
    ok &= rel <= 0.02;
    parts.push(format!("8×8 objective vs LP {rel:.4} (≤ 0.02)"));

    // resting disk
    let hd = 1.0 / 64.0;
    let gd = grid(192, hd);
    let disk = ScalarField::from_fn(gd, |x, y| if x * x + y * y < 1.0 { 1.0 } else { 0.0 });
    let st = fixed_point_step(&disk, 0.05, default_eps(&gd)).map_err(err)?;
    let moved = lp_distance(&st.rho_out, &disk, 1.0).map_err(err)?;
    ok &= moved < 0.02 * PI && st.objective_decreases(0.0);
    parts.push(format!("disk ‖Δ‖₁ {moved:.4} (< {:.4})", 0.02 * PI));

    // refinement against the PME with the E_∞ iterates frozen in, m = 16,
    // T = 0.5, from ρ₀ = ½χ_B(√2) whose exact E_∞ flow stays a flat disk
    let (m, t_end, cells) = (16.0, 0.5, 32usize);
    let hx = 1.0 / cells as f64;
    let gx = grid(6 * cells, hx);
    let (h0, r0) = (0.5, 2f64.sqrt());
    let exact = |t: f64| {
        let f = 1.0 - h0 * t;
        disk_fractions(gx, (0.0, 0.0), r0 * f.sqrt()).scale(h0 / f)
    };
    let times: Vec<f64> = (0..=64).map(|k| k as f64 * t_end / 64.0).collect();
    let dens: Vec<ScalarField> = times.iter().map(|&t| exact(t)).collect();
    let seq = FrozenSequence::from_densities(times, &dens, m).map_err(err)?;
    let pme = run(exact(0.0), PmeConfig::new(m, Drift::FrozenSequence(seq), t_end), |_, _| Ok(())).map_err(err)?;
    let mut gaps = Vec::new();
    let mut ends = Vec::new();
    let mut decreasing_objective = true;
    for n in [4usize, 8, 16] {
        let tau = t_end / n as f64;
        // ε ∝ τ² keeps entropic blur and time error of the same order
        let eps = 0.5 * tau * tau;
        let inf = run_flow(&exact(0.0), tau, n, &Schedule::Interaction, eps).map_err(err)?;
        let mus = inf.states[..n].to_vec();
        let em = run_flow(&exact(0.0), tau, n, &Schedule::Power { m, mus }, eps).map_err(err)?;
        decreasing_objective &= inf.steps.iter().chain(&em.steps).all(|s| s.objective_decreases(0.0));
        gaps.push(w2_estimate_normalized(em.last(), &pme.rho, 8.0, &sink).map_err(err)?);
        ends.push(inf.last().clone());
    }
    let cauchy = [
        lp_distance(&ends[0], &ends[1], 1.0).map_err(err)?,
        lp_distance(&ends[1], &ends[2], 1.0).map_err(err)?,
    ];
    let gaps_down = gaps.windows(2).all(|w| w[1] < w[0]);
    ok &= decreasing_objective && cauchy[1] < cauchy[0] && gaps_down;
    parts.push(format!("objective decreases on every step: {decreasing_objective}"));
    parts.push(format!("E_∞ Cauchy ℓ¹ {:.4} > {:.4}", cauchy[0], cauchy[1]));
    parts.push(format!(
        "W₂(JKO_m, PME) {} (n = 4, 8, 16)",
        gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(" > ")
    ));
    need(ok, parts.join(", "))
}

fn modulus_suite() -> Outcome {
    let mut jump: f64 = 0.0;
    for (f, b) in [(omega as fn(f64) -> cagg::Result<f64>, branch_omega()), (sigma, branch_sigma())] {
        let lo = f(b * (1.0 - 1e-13)).map_err(err)?;
        let hi = f(b * (1.0 + 1e-13)).map_err(err)?;
        jump = jump.max((lo - hi).abs());
    }
    let p = ModulusParams::default();
    let d = 1e-4;
    let mut residual: f64 = 0.0;
    for &x in &[0.01, 0.05, 0.2, 0.5, 1.5] {
        for &t in &[0.05, 0.3, 1.0, 2.0] {
            let fp = flow_f(x, t + d, &p).map_err(err)?;
            let fm = flow_f(x, t - d, &p).map_err(err)?;
            let rhs = -p.c_d * omega(flow_f(x, t, &p).map_err(err)?).map_err(err)?;
            residual = residual.max(((fp - fm) / (2.0 * d) - rhs).abs());
        }
    }
    let p1 = ModulusParams::new(1.0).map_err(err)?;
    let (x, t) = (0.05, 1.0);
    let exact = flow_f(x, t, &p1).map_err(err)?;
    let mut euler = Vec::new();
    for n in [10usize, 100, 1000] {
        let e = (exact - f_tau_n(x, t / n as f64, n, &p1)).abs();
        euler.push((n, e, p1.c_d * omega(x).map_err(err)? * t / n as f64));
    }
    need(
        jump < 1e-12 && residual < 1e-6 && euler.iter().all(|(_, e, b)| e <= b),
        format!(
            "branch jump {jump:.1e}, ODE residual {residual:.1e}, Euler {}",
            euler.iter().map(|(n, e, b)| format!("n={n}: {e:.2e} ≤ {b:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("disk stationarity", disk_stationarity),
        ("Talenti suite", talenti_suite),
        ("dissipation suite", dissipation_suite),
        ("energy decay", energy_decay),
        ("long-time convergence", long_time),
        ("PME validation", pme_validation),
        ("m-sweep", m_sweep_suite),
        ("JKO suite", jko_suite),
        ("modulus suite", modulus_suite),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|(_, f)| {
                let f = *f;
                s.spawn(move || f())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("panicked".into())))
            .collect()
    });
    let mut failed = 0;
    for (k, ((name, _), r)) in criteria.iter().zip(&results).enumerate() {
        match r {
            Ok(msg) => println!("PASS criterion {} ({name}): {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {msg}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

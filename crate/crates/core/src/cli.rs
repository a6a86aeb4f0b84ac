//! Config-driven runs. A run directory holds the config echo and its hash
//! (written before any compute), `series.csv`, optional auxiliary tables and
//! `CAGG-FIELD v1` dumps under `fields/`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{center_of_mass, lp_distance, mass, second_moment, write_field, GridSpec, ScalarField, FIELD_MAGIC};
use crate::heleshaw::{evolve, initial_pressure, patch_mask, Frame, HeleShawConfig, LevelSet};
use crate::jko::{default_eps, excess_mass, run_flow, Schedule};
use crate::modulus::{ModulusParams, DEFAULT_C_D};
use crate::newtonian::{disk_energy, interaction_energy};
use crate::pme::{barrier_radius, density_from_pressure, Drift, FrozenSequence, PmeConfig, PmeSolver};
use crate::series::{format_float, Row, TimeSeries, CSV_HEADER};
use crate::shape::{self, excursion_constant, c1_constant};
use crate::shapes::Shape;

pub const CONFIG_ECHO: &str = "config.toml";
pub const CONFIG_HASH: &str = "config.hash";
pub const SERIES_CSV: &str = "series.csv";
pub const INTERFACE_CSV: &str = "interface.csv";
pub const MSWEEP_CSV: &str = "msweep.csv";
pub const SUMMARY: &str = "summary.txt";
pub const INTERFACE_HEADER: &str = "t,area,perimeter,max_normal_velocity,pressure_residual";
pub const MSWEEP_HEADER: &str = "m,l1_gap,max_height,height_bound,excess_mass,excess_bound,barrier_margin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Pme,
    Jko,
    Heleshaw,
    Msweep,
    Longtime,
    Diag,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Pme => "pme",
            Command::Jko => "jko",
            Command::Heleshaw => "heleshaw",
            Command::Msweep => "msweep",
            Command::Longtime => "longtime",
            Command::Diag => "diag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub h: f64,
    #[serde(default)]
    pub center: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub m: f64,
    pub m_list: Vec<f64>,
    pub tau: f64,
    /// Sinkhorn blur; `2h²` when absent.
    pub eps: Option<f64>,
    pub t_end: f64,
    /// Record cadence for dumps and expensive diagnostics; `t_end/20` when
    /// absent.
    pub dump_every: Option<f64>,
    /// Initial height of the PME and JKO densities.
    pub height: f64,
    pub c_d: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            m: 16.0,
            m_list: vec![8.0, 16.0, 32.0, 64.0],
            tau: 0.05,
            eps: None,
            t_end: 1.0,
            dump_every: None,
            height: 1.0,
            c_d: DEFAULT_C_D,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Option<Command>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub shape: Shape,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// A parsed config together with the exact text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::centered(self.grid.n, self.grid.h, self.grid.center)
            .map_err(|e| Error::Config(format!("grid: {e}")))
    }

    pub fn dump_every(&self) -> f64 {
        self.solver.dump_every.unwrap_or(self.solver.t_end / 20.0)
    }

    pub fn eps(&self) -> Result<f64> {
        Ok(self.solver.eps.unwrap_or(default_eps(&self.grid_spec()?)))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_spec()?;
        self.shape.validate()?;
        let s = &self.solver;
        let bad = |what: String| Err(Error::Config(what));
        if !(s.m > 1.0 && s.m.is_finite()) {
            return bad(format!("solver.m must exceed 1, got {}", s.m));
        }
        if s.m_list.is_empty() || s.m_list.iter().any(|m| !(*m > 1.0 && m.is_finite())) {
            return bad("solver.m_list needs values above 1".into());
        }
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return bad(format!("solver.tau must be positive, got {}", s.tau));
        }
        if !(s.t_end > 0.0 && s.t_end.is_finite()) {
            return bad(format!("solver.t_end must be positive, got {}", s.t_end));
        }
        if matches!(s.eps, Some(e) if !(e > 0.0)) {
            return bad("solver.eps must be positive".into());
        }
        if matches!(s.dump_every, Some(e) if !(e > 0.0)) {
            return bad("solver.dump_every must be positive".into());
        }
        if !(s.height > 0.0 && s.height.is_finite()) || !(s.c_d > 0.0) {
            return bad("solver.height and solver.c_d must be positive".into());
        }
        Ok(())
    }
}

/// Reads and validates a config file. Relative shape files resolve against
/// the config's directory.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut config = RunConfig::parse(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    // relative paths are taken from the config file's directory
    let base = path.parent().unwrap_or(Path::new(""));
    if config.out_dir.is_relative() {
        config.out_dir = base.join(&config.out_dir);
    }
    if let Shape::LevelSetFile { path: p } = &mut config.shape {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(LoadedConfig { config, text })
}

/// Git-style content hash: SHA-256 of `blob <len>\0<text>`.
pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

/// Exit status classes.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// `CAGG_THREADS`, if set, must be a positive integer. Runs are
/// single-threaded, so any valid value gives the same output.
pub fn check_threads_env() -> Result<()> {
    match std::env::var("CAGG_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(()),
            _ => Err(Error::Config(format!("CAGG_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(()),
    }
}

pub fn schema() -> String {
    format!(
        "{SERIES_CSV}\n{CSV_HEADER}\n\n{INTERFACE_CSV}\n{INTERFACE_HEADER}\n\n{MSWEEP_CSV}\n{MSWEEP_HEADER}\n\n\
         floats: 17 significant digits, nan for unset columns\n\n\
         {FIELD_MAGIC}\n\
         header line: {FIELD_MAGIC} <nx> <ny> <h> <ox> <oy>\n\
         body: nx*ny little-endian IEEE-754 f64 values, row-major (x fastest), origin is the lower-left box corner\n"
    )
}

struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn create(root: &Path, text: &str) -> Result<Self> {
        fs::create_dir_all(root.join("fields"))?;
        fs::write(root.join(CONFIG_ECHO), text)?;
        fs::write(root.join(CONFIG_HASH), format!("sha256 {}\n", content_hash(text)))?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn dump(&self, name: &str, k: usize, f: &ScalarField) -> Result<()> {
        let file = fs::File::create(self.root.join("fields").join(format!("{name}_{k:04}.field")))?;
        let mut w = BufWriter::new(file);
        write_field(&mut w, f)?;
        w.flush()?;
        Ok(())
    }

    fn series(&self, s: &TimeSeries) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.root.join(SERIES_CSV))?);
        s.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn table(&self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.root.join(name))?);
        writeln!(w, "{header}")?;
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format_float(*v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    fn summary(&self, entries: &[(&str, f64)]) -> Result<()> {
        let mut out = String::new();
        for (k, v) in entries {
            out.push_str(&format!("{k} = {}\n", format_float(*v)));
        }
        fs::write(self.root.join(SUMMARY), out)?;
        Ok(())
    }
}

/// Runs `cmd` on a loaded config, writing artifacts under `out_dir`.
pub fn run(cmd: Command, loaded: &LoadedConfig, out_dir: Option<&Path>, m_list: Option<Vec<f64>>) -> Result<PathBuf> {
    let cfg = &loaded.config;
    if let Some(c) = cfg.subcommand {
        if c != cmd {
            return Err(Error::Config(format!("config is for '{}', not '{}'", c.name(), cmd.name())));
        }
    }
    if let Some(ms) = &m_list {
        if ms.is_empty() || ms.iter().any(|m| !(*m > 1.0 && m.is_finite())) {
            return Err(Error::Config("--m needs values above 1".into()));
        }
    }
    let grid = cfg.grid_spec()?;
    let ls = LevelSet::from_shape(grid, &cfg.shape).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(format!("shape: {other}")),
    })?;
    let root = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone());
    let dir = RunDir::create(&root, &loaded.text)?;
    match cmd {
        Command::Pme => run_pme(cfg, &ls, &dir)?,
        Command::Jko => run_jko(cfg, &ls, &dir)?,
        Command::Heleshaw => run_heleshaw(cfg, ls, &dir, false)?,
        Command::Longtime => run_heleshaw(cfg, ls, &dir, true)?,
        Command::Msweep => {
            let ms = m_list.unwrap_or_else(|| cfg.solver.m_list.clone());
            let rows = m_sweep(ls, cfg.solver.t_end, &ms, cfg.solver.c_d)?;
            let table: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| vec![r.m, r.l1_gap, r.max_height, r.height_bound, r.excess_mass, r.excess_bound, r.barrier_margin])
                .collect();
            dir.table(MSWEEP_CSV, MSWEEP_HEADER, &table)?;
        }
        Command::Diag => run_diag(&ls, &dir, cfg)?,
    }
    Ok(root)
}

fn density_row(t: f64, rho: &ScalarField) -> Result<Row> {
    let mut row = Row::at(t);
    row.mass = mass(rho);
    row.m2 = second_moment(rho);
    let c = center_of_mass(rho)?;
    row.com_x = c.0;
    row.com_y = c.1;
    row.support_radius = rho.support_radius(c, 0.0);
    row.excess_mass = excess_mass(rho);
    Ok(row)
}

fn run_pme(cfg: &RunConfig, ls: &LevelSet, dir: &RunDir) -> Result<()> {
    let m = cfg.solver.m;
    let rho0 = ls.volume_fractions().scale(cfg.solver.height);
    let pcfg = PmeConfig::new(m, Drift::SelfConsistent, cfg.solver.t_end).with_record_every(cfg.dump_every());
    let mut series = TimeSeries::new();
    let mut k = 0;
    crate::pme::run(rho0, pcfg, |t, rho| {
        let mut row = density_row(t, rho)?;
        let inter = interaction_energy(rho)?;
        row.e_inf = crate::jko::energy(rho, &crate::jko::EnergySpec::constrained())?;
        row.e_m = inter + rho.map(|r| r.powf(m)).integral() / (m - 1.0);
        series.push(row)?;
        dir.dump("rho", k, rho)?;
        k += 1;
        Ok(())
    })?;
    dir.series(&series)
}

fn run_jko(cfg: &RunConfig, ls: &LevelSet, dir: &RunDir) -> Result<()> {
    let rho0 = ls.volume_fractions().scale(cfg.solver.height);
    let tau = cfg.solver.tau;
    let n = (cfg.solver.t_end / tau).round().max(1.0) as usize;
    let traj = run_flow(&rho0, tau, n, &Schedule::Interaction, cfg.eps()?)?;
    let every = ((cfg.dump_every() / tau).round() as usize).max(1);
    for (k, rho) in traj.states.iter().enumerate() {
        if k % every == 0 || k == n {
            dir.dump("rho", k, rho)?;
        }
    }
    dir.series(&traj.series()?)
}

fn shape_columns(row: &mut Row, frame: &Frame) -> Result<()> {
    let a = shape::asymmetry_of(frame.fractions)?;
    row.asymmetry = a.value;
    Ok(())
}

fn run_heleshaw(cfg: &RunConfig, ls: LevelSet, dir: &RunDir, long: bool) -> Result<()> {
    let every = cfg.dump_every();
    let mut series = TimeSeries::new();
    let mut iface = Vec::new();
    let mut next = 0.0;
    let mut k = 0;
    let mut com0 = None;
    let mut max_drift: f64 = 0.0;
    let hs = HeleShawConfig::new(cfg.solver.t_end);
    let t_end = cfg.solver.t_end;
    let out = evolve(ls, &hs, |f| {
        let mut row = density_row(f.t, f.fractions)?;
        row.e_inf = interaction_energy(f.fractions)?;
        row.f_value = shape::f_value(f.fractions, &f.pressure.p);
        let c = (row.com_x, row.com_y);
        let c0 = *com0.get_or_insert(c);
        max_drift = max_drift.max((c.0 - c0.0).hypot(c.1 - c0.1));
        let record = f.t >= next - 1e-12 || f.t >= t_end;
        if record {
            if long || f.t == 0.0 || f.t >= t_end {
                shape_columns(&mut row, f)?;
            }
            dir.dump("levelset", k, f.level_set.phi())?;
            dir.dump("pressure", k, &f.pressure.p)?;
            k += 1;
            while next <= f.t + 1e-12 {
                next += every;
            }
        }
        iface.push(vec![
            f.t,
            f.level_set.area(),
            f.level_set.perimeter(),
            f.velocity.max_interface,
            f.pressure.residual,
        ]);
        series.push(row)
    })?;
    dir.series(&series)?;
    dir.table(INTERFACE_CSV, INTERFACE_HEADER, &iface)?;
    if long {
        let fr = out.level_set.volume_fractions();
        let area = fr.integral();
        let c = com0.expect("at least one frame");
        let disk = shape::disk_fractions(*fr.grid(), c, (area / std::f64::consts::PI).sqrt());
        let l1 = lp_distance(&fr, &disk, 1.0)?;
        dir.summary(&[
            ("t_end", out.t),
            ("steps", out.steps as f64),
            ("area0", out.area0),
            ("l1_to_disk", l1),
            ("l1_to_disk_relative", l1 / out.area0),
            ("max_com_drift", max_drift),
        ])?;
    }
    Ok(())
}

fn run_diag(ls: &LevelSet, dir: &RunDir, cfg: &RunConfig) -> Result<()> {
    let report = shape::shape_report(ls)?;
    let talenti = shape::talenti_profile(ls)?;
    let iso = shape::quantitative_isoperimetric_check(ls)?;
    let gap = shape::energy_gap(ls)?;
    let fr = ls.volume_fractions();
    let params = ModulusParams::new(cfg.solver.c_d)?;
    let lip = crate::newtonian::log_lipschitz_check(&fr, &params, 2000, cfg.seed)?;
    let mut row = density_row(0.0, &fr)?;
    row.e_inf = gap.energy;
    row.asymmetry = report.asymmetry;
    row.f_value = report.f_value;
    let mut s = TimeSeries::new();
    s.push(row)?;
    dir.series(&s)?;
    dir.dump("levelset", 0, ls.phi())?;
    dir.dump("pressure", 0, &crate::heleshaw::solve_pressure(ls)?.p)?;
    dir.summary(&[
        ("area", report.area),
        ("perimeter", report.perimeter),
        ("asymmetry", report.asymmetry),
        ("best_disk_x", report.best_disk_center.0),
        ("best_disk_y", report.best_disk_center.1),
        ("f_value", report.f_value),
        ("m2", report.m2),
        ("energy_gap", gap.gap),
        ("energy_gap_bound", gap.bound),
        ("talenti_bulk_slope", talenti.bulk_max_slope()),
        ("isoperimetric_ratio", iso.ratio),
        ("isoperimetric_passed", if iso.passed { 1.0 } else { 0.0 }),
        ("log_lipschitz_max_ratio", lip.max_ratio),
        ("log_lipschitz_violations", lip.violations as f64),
    ])
}

/// One m-sweep entry: PME against a Hele-Shaw reference at the final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub m: f64,
    /// `‖ρ_m(T) - χ_{Ω(T)}‖₁`.
    pub l1_gap: f64,
    /// Largest `‖ρ_m‖∞` over all steps.
    pub max_height: f64,
    pub height_bound: f64,
    pub excess_mass: f64,
    pub excess_bound: f64,
    /// Smallest `R(t) - support radius` over all steps.
    pub barrier_margin: f64,
}

/// Runs the patch `ls` as a Hele-Shaw reference to `t_end`, then PME with the
/// reference's frozen potentials for each `m`. Initial densities invert the
/// reference pressure, `ρ₀ = ((m-1)p₀/m)^(1/(m-1))`.
pub fn m_sweep(ls: LevelSet, t_end: f64, ms: &[f64], c_d: f64) -> Result<Vec<SweepRow>> {
    let p0 = initial_pressure(&patch_mask(&ls))?.p;
    let mut times = Vec::new();
    let mut fractions = Vec::new();
    evolve(ls, &HeleShawConfig::new(t_end), |f| {
        times.push(f.t);
        fractions.push(f.fractions.clone());
        Ok(())
    })?;
    let target = fractions.last().expect("evolve reports the final state").clone();
    let mut rows = Vec::with_capacity(ms.len());
    for &m in ms {
        let seq = FrozenSequence::from_densities(times.clone(), &fractions, m)?;
        let rho0 = density_from_pressure(&p0, m);
        let c = center_of_mass(&rho0)?;
        let r0 = rho0.support_radius(c, 0.0);
        let h = rho0.grid().h;
        let mut s = PmeSolver::new(rho0, PmeConfig::new(m, Drift::FrozenSequence(seq), t_end))?;
        let mut max_height = s.rho().max();
        let mut margin = f64::INFINITY;
        while s.t() < t_end {
            let dt = s.stable_dt()?.min(t_end - s.t());
            s.advance(dt)?;
            max_height = max_height.max(s.rho().max());
            // the explicit scheme wets every empty neighbour in its first
            // step, so the discrete front leads by a cell; one more for the
            // cell-corner radius
            let r = s.rho().support_radius(c, 0.0) - 2.0 * h;
            margin = margin.min(barrier_radius(r0, s.t(), c_d) - r);
        }
        rows.push(SweepRow {
            m,
            l1_gap: lp_distance(s.rho(), &target, 1.0)?,
            max_height,
            height_bound: 1.0 + 5.0 / (m - 1.0),
            excess_mass: excess_mass(s.rho()),
            excess_bound: 2.0 * ((2.0 + c_d * c_d) / m).sqrt(),
            barrier_margin: margin,
        });
    }
    Ok(rows)
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), passed, detail });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }
}

fn read_table(path: &Path, header: &str) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().ok_or_else(|| Error::Format(format!("{} is empty", path.display())))??;
    if first.trim_end() != header {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|_| Error::Format(format!("{} line {}: bad number", path.display(), n + 2)))?);
    }
    Ok(rows)
}

fn finite_rows<'a>(s: &'a TimeSeries, f: impl Fn(&Row) -> f64 + 'a) -> impl Iterator<Item = (f64, f64)> + 'a {
    s.rows().iter().map(move |r| (r.t, f(r))).filter(|(_, v)| v.is_finite())
}

/// Re-reads a run directory and checks the invariants that apply to its
/// subcommand.
pub fn verify(dir: &Path) -> Result<VerifyReport> {
    let text = fs::read_to_string(dir.join(CONFIG_ECHO))
        .map_err(|e| Error::Format(format!("{}: {e}", dir.join(CONFIG_ECHO).display())))?;
    let cfg = RunConfig::parse(&text)?;
    let mut rep = VerifyReport::default();
    let stored = fs::read_to_string(dir.join(CONFIG_HASH))
        .map_err(|e| Error::Format(format!("{}: {e}", dir.join(CONFIG_HASH).display())))?;
    let hash = content_hash(&text);
    rep.push("config_hash", stored.trim() == format!("sha256 {hash}"), hash);

    let cmd = cfg.subcommand.unwrap_or_else(|| guess_command(dir));
    if cmd == Command::Msweep {
        verify_sweep(&read_table(&dir.join(MSWEEP_CSV), MSWEEP_HEADER)?, &mut rep);
        return Ok(rep);
    }
    let file = fs::File::open(dir.join(SERIES_CSV))
        .map_err(|e| Error::Format(format!("{}: {e}", dir.join(SERIES_CSV).display())))?;
    let s = TimeSeries::read_csv(BufReader::new(file))?;
    let first = *s.rows().first().ok_or_else(|| Error::Format("series.csv has no rows".into()))?;
    let h = cfg.grid.h;

    let mass_tol = 1e-8;
    let worst = s.rows().iter().map(|r| ((r.mass - first.mass) / first.mass).abs()).fold(0.0, f64::max);
    rep.push("mass", worst <= mass_tol, format!("max relative drift {worst:.3e} (tol {mass_tol:.0e})"));

    let dynamic = matches!(cmd, Command::Heleshaw | Command::Longtime | Command::Jko);
    if dynamic {
        // entropic steps spread M₂ by about 2ε·mass each
        let blur = if cmd == Command::Jko { 2.0 * cfg.eps()? * first.mass } else { 0.0 };
        let mut worst = f64::NEG_INFINITY;
        for w in s.rows().windows(2) {
            worst = worst.max(w[1].m2 - w[0].m2 * (1.0 + 1e-3) - blur);
        }
        rep.push("m2_monotone", worst <= 0.0, format!("largest excess step {worst:.3e}"));
    }

    let fmax = finite_rows(&s, |r| r.f_value).map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    if fmax.is_finite() {
        let tol = 1e-3 * first.mass * first.mass;
        rep.push("f_nonpositive", fmax <= tol, format!("max F {fmax:.3e} (tol {tol:.1e})"));
    }

    // entropic JKO iterates have Gaussian tails, so no compact support
    if !matches!(cmd, Command::Diag | Command::Jko) {
        let c0 = (first.com_x, first.com_y);
        let mut margin = f64::INFINITY;
        for r in s.rows() {
            // a support radius about the current center sits within the
            // center drift of one about the initial center
            let drift = (r.com_x - c0.0).hypot(r.com_y - c0.1);
            margin = margin.min(barrier_radius(first.support_radius, r.t, cfg.solver.c_d) + 2.0 * h - r.support_radius - drift);
        }
        rep.push("barrier", margin >= 0.0, format!("smallest margin {margin:.4}"));
    }

    match cmd {
        Command::Jko => {
            let worst = s.rows().iter().map(|r| r.excess_mass).fold(0.0, f64::max);
            rep.push("height", worst <= 1e-8 * first.mass, format!("max excess {worst:.3e}"));
        }
        Command::Pme => {
            let bound = 2.0 * ((2.0 + cfg.solver.c_d.powi(2)) / cfg.solver.m).sqrt();
            let worst = s.rows().iter().skip(1).map(|r| r.excess_mass).fold(0.0, f64::max);
            rep.push("excess_mass", worst <= bound, format!("max excess {worst:.3e} (bound {bound:.3e})"));
        }
        Command::Heleshaw | Command::Longtime => {
            let area0 = first.mass;
            let m2c = first.m2 - area0 * (first.com_x.powi(2) + first.com_y.powi(2));
            let cexc = excursion_constant(area0, m2c);
            let mut running = f64::INFINITY;
            let mut ok = true;
            let mut seen = 0;
            for (t, a) in finite_rows(&s, |r| r.asymmetry) {
                running = running.min(a);
                if t > 0.0 {
                    seen += 1;
                    ok &= running <= cexc * t.powf(-1.0 / 3.0);
                }
            }
            if seen > 0 {
                rep.push("asymmetry_excursion", ok, format!("{seen} times, C(Ω₀) = {cexc:.4}"));
            }
            let c1 = c1_constant(area0, m2c);
            let e_disk = disk_energy((area0 / std::f64::consts::PI).sqrt());
            let mut worst = f64::NEG_INFINITY;
            for (t, e) in finite_rows(&s, |r| r.e_inf) {
                if t > 0.0 {
                    worst = worst.max((e - e_disk) - c1 * t.powf(-1.0 / 6.0));
                }
            }
            rep.push("energy_rate", worst <= 0.0, format!("largest gap - C₁t^(-1/6) = {worst:.3e}"));
        }
        _ => {}
    }
    Ok(rep)
}

fn guess_command(dir: &Path) -> Command {
    if dir.join(MSWEEP_CSV).exists() {
        Command::Msweep
    } else if dir.join(SUMMARY).exists() && !dir.join(INTERFACE_CSV).exists() {
        Command::Diag
    } else if dir.join(INTERFACE_CSV).exists() {
        Command::Heleshaw
    } else {
        Command::Pme
    }
}

fn verify_sweep(rows: &[Vec<f64>], rep: &mut VerifyReport) {
    let decreasing = rows.windows(2).all(|w| w[1][1] < w[0][1]);
    let gaps: Vec<String> = rows.iter().map(|r| format!("{:.4}", r[1])).collect();
    rep.push("l1_gap_decreasing", decreasing && !rows.is_empty(), gaps.join(" > "));
    rep.push("height", rows.iter().all(|r| r[2] <= r[3]), "max height within 1 + 5/(m-1)".into());
    rep.push("excess_mass", rows.iter().all(|r| r[4] <= r[5]), "excess within 2·sqrt((2+C_d²)/m)".into());
    let margin = rows.iter().map(|r| r[6]).fold(f64::INFINITY, f64::min);
    rep.push("barrier", margin >= 0.0, format!("smallest margin {margin:.4}"));
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "out_dir = \"x\"\n[grid]\nn = 64\nh = 0.0625\n[shape]\nkind = \"disk\"\ncenter = [0.0, 0.0]\nradius = 1.0\n";

    #[test]
    fn parse_reports_line_numbers() {
        let err = RunConfig::parse("out_dir = \"x\"\n[grid]\nn = = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn defaults_fill_the_solver_table() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.dump_every(), 0.05);
        assert!(RunConfig::parse(&format!("{MINIMAL}[solver]\nbogus = 1\n")).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}[solver]\nm = 1.0\n")).is_err());
    }

    #[test]
    fn hash_matches_git_blob_framing() {
        let mut h = Sha256::new();
        h.update(b"blob 3\0abc");
        assert_eq!(content_hash("abc"), hex::encode(h.finalize()));
        assert_ne!(content_hash("abc"), content_hash("abd"));
    }

    #[test]
    fn schema_is_stable() {
        assert_eq!(schema(), schema());
        assert!(schema().contains(CSV_HEADER));
        assert!(schema().contains("CAGG-FIELD v1"));
    }
}

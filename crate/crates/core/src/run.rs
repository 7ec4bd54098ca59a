//! Run orchestration for the command-line tool: dispatch, artifacts and
//! the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use toml::{Table, Value};

use crate::config::{InitialProfile, Mode, RunConfig};
use crate::continuation::{continue_branch, jacobian_action, Termination};
use crate::curvature::{capillary_gravity, curvature_remainder, invert_capillary_gravity, mean_curvature, CurvatureConfig};
use crate::dtn::{apply_dtn, build_workspace, reconstruct_bulk, solve_neumann, DtnConfig};
use crate::dynamics::{evolve_with, EvolutionConfig};
use crate::io;
use crate::sampling::random_profile;
use crate::smallwave::{solve_small_wave, solve_small_wave_from, surface_tension_limit};
use crate::spectral::{
    apply_multiplier, derivative, linear_symbol, multiplier_m, project_mean_zero, shift, Depth, FluidParams,
    Grid, GridFunction, MultiplierSymbol,
};

/// Collects everything that goes into `manifest.toml`.
#[derive(Debug, Default)]
pub struct Manifest {
    pub termination: Option<String>,
    pub diagnostics: Table,
    pub timings: Table,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn diag(&mut self, key: &str, v: impl Into<Value>) {
        self.diagnostics.insert(key.to_string(), v.into());
    }

    fn timed<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.timings.insert(stage.to_string(), Value::Float(t.elapsed().as_secs_f64()));
        r
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub success: bool,
    pub manifest: PathBuf,
    pub termination: Option<String>,
}

/// Executes one run and writes its artifacts into `out`. Module failures
/// are recorded in the manifest and reported through `success = false`;
/// I/O failures on the output directory are returned as errors.
pub fn run(mode: Mode, cfg: &RunConfig, out: &Path, seed: u64) -> anyhow::Result<RunOutcome> {
    if let Some(m) = cfg.mode {
        if m != mode {
            bail!("config declares mode {} but {} was requested", m.as_str(), mode.as_str());
        }
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    let probe = out.join(".write-test");
    fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", out.display()))?;
    let _ = fs::remove_file(&probe);

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let mut manifest = Manifest::default();
    let result = match mode {
        Mode::SmallWave => run_small_wave(cfg, out, &mut manifest),
        Mode::SweepSigma => run_sweep(cfg, out, &mut manifest),
        Mode::Continue => run_continue(cfg, out, &mut manifest),
        Mode::Evolve => run_evolve(cfg, out, seed, &mut manifest),
        Mode::Verify => run_verify(cfg, out, seed, &mut manifest),
    };
    let (success, error) = match result {
        Ok(ok) => (ok, None),
        Err(e) => (false, Some(format!("{e:#}"))),
    };

    let mut doc = Table::new();
    let mut run_t = Table::new();
    run_t.insert("mode".into(), mode.as_str().into());
    run_t.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    run_t.insert("seed".into(), Value::Integer(seed as i64));
    run_t.insert("started_unix".into(), Value::Integer(started as i64));
    run_t.insert("elapsed_seconds".into(), Value::Float(clock.elapsed().as_secs_f64()));
    run_t.insert("status".into(), if success { "ok" } else { "failed" }.into());
    run_t.insert("termination".into(), manifest.termination.clone().unwrap_or_else(|| "none".into()).into());
    doc.insert("run".into(), Value::Table(run_t));
    doc.insert("config".into(), Value::try_from(cfg).context("serializing config")?);
    let mut grid_t = Table::new();
    let dtn = cfg.dtn_config();
    grid_t.insert("n".into(), Value::Integer(cfg.grid.n as i64));
    grid_t.insert("nz".into(), Value::Integer(dtn.resolved_nz(&cfg.depth()) as i64));
    grid_t.insert("stretch".into(), Value::Float(dtn.resolved_stretch(&cfg.depth())));
    grid_t.insert("strip_depth".into(), Value::Float(cfg.depth().strip_depth()));
    doc.insert("grid".into(), Value::Table(grid_t));
    doc.insert("tolerances".into(), Value::try_from(&cfg.tolerances).context("serializing tolerances")?);
    doc.insert("timings".into(), Value::Table(std::mem::take(&mut manifest.timings)));
    doc.insert("diagnostics".into(), Value::Table(std::mem::take(&mut manifest.diagnostics)));
    doc.insert("files".into(), Value::Array(manifest.files.iter().map(|f| Value::from(f.as_str())).collect()));
    if let Some(msg) = &error {
        let mut e = Table::new();
        e.insert("message".into(), msg.clone().into());
        doc.insert("error".into(), Value::Table(e));
    }
    let path = out.join("manifest.toml");
    fs::write(&path, toml::to_string(&doc).context("serializing manifest")?)
        .with_context(|| format!("writing {}", path.display()))?;
    if let Some(msg) = error {
        log::error!("{msg}");
    }
    Ok(RunOutcome { success, manifest: path, termination: manifest.termination })
}

fn write_profile(out: &Path, name: &str, eta: &GridFunction<f64>, m: &mut Manifest) -> anyhow::Result<()> {
    io::write_profile_csv(&out.join(name), eta)?;
    m.files.push(name.to_string());
    Ok(())
}

fn write_plot(out: &Path, profiles: &[String], branch: Option<&str>, m: &mut Manifest) -> anyhow::Result<()> {
    fs::write(out.join("plot.gp"), io::gnuplot_script(profiles, branch))?;
    m.files.push("plot.gp".into());
    Ok(())
}

fn setup(cfg: &RunConfig, m: &mut Manifest) -> anyhow::Result<(FluidParams<f64>, GridFunction<f64>)> {
    let params = cfg.fluid_params()?;
    let grid = cfg.grid()?;
    let (phi, removed) = cfg.forcing_profile(&grid);
    if removed != 0.0 {
        m.diag("forcing_mean_removed", removed);
    }
    Ok((params, phi))
}

fn run_small_wave(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> anyhow::Result<bool> {
    let (params, phi) = setup(cfg, m)?;
    let dtn = cfg.dtn_config();
    let t = &cfg.tolerances;
    let psi = phi.scaled(cfg.forcing.kappa);
    let report = m.timed("picard", || solve_small_wave(&psi, &params, t.picard_tol, t.picard_max_iter, &dtn))?;
    m.termination = Some("converged".into());
    m.diag("iterations", report.iterations as i64);
    m.diag("terminal_ratio", report.terminal_ratio().unwrap_or(0.0));
    m.diag("final_residual", report.final_residual);
    m.diag("sup_norm", report.solution.sup_norm());
    write_profile(out, "profile.csv", &report.solution, m)?;

    let ws = build_workspace(&report.solution, params.depth, &dtn)?;
    let surface = &capillary_gravity(&report.solution, params.sigma, params.gravity) + &psi;
    let bulk = m.timed("bulk", || reconstruct_bulk(&ws, &surface, params.gravity))?;
    m.diag("bulk_max_divergence", bulk.max_divergence);
    m.diag("bulk_max_speed", bulk.max_speed);
    io::write_bulk_csv(&out.join("bulk.csv"), &bulk)?;
    m.files.push("bulk.csv".into());
    write_plot(out, &["profile.csv".into()], None, m)?;
    Ok(report.final_residual <= 10.0 * t.picard_tol.max(1e-11))
}

fn run_sweep(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> anyhow::Result<bool> {
    let (params, phi) = setup(cfg, m)?;
    let dtn = cfg.dtn_config();
    let t = &cfg.tolerances;
    let sweep = m.timed("sweep", || {
        surface_tension_limit(
            &phi,
            cfg.forcing.kappa,
            params.gravity,
            params.speed,
            params.depth,
            &cfg.sweep.sigmas,
            t.picard_tol,
            t.picard_max_iter,
            &dtn,
        )
    })?;
    let rows: Vec<Vec<f64>> = sweep.rows.iter().map(|r| vec![r.sigma, r.difference]).collect();
    io::write_table_csv(&out.join("sweep.csv"), &["sigma", "difference"], &rows)?;
    m.files.push("sweep.csv".into());
    let mut profiles = vec!["gravity_wave.csv".to_string()];
    write_profile(out, "gravity_wave.csv", &sweep.gravity_wave, m)?;
    for (i, r) in sweep.rows.iter().enumerate() {
        let name = format!("sigma_{i:02}.csv");
        write_profile(out, &name, &r.eta, m)?;
        profiles.push(name);
    }
    m.termination = Some(if sweep.monotone { "monotone" } else { "non-monotone" }.into());
    m.diag("monotone", sweep.monotone);
    m.diag("final_difference", sweep.rows.last().map_or(0.0, |r| r.difference));
    write_plot(out, &profiles, None, m)?;
    Ok(true)
}

fn run_continue(cfg: &RunConfig, out: &Path, m: &mut Manifest) -> anyhow::Result<bool> {
    let (params, phi) = setup(cfg, m)?;
    let dtn = cfg.dtn_config();
    let trace =
        m.timed("continuation", || continue_branch(&phi, &params, &cfg.step_config(), &cfg.stop_config(), &dtn))?;
    m.termination = Some(trace.termination.to_string());
    io::write_branch_csv(&out.join("branch.csv"), &trace)?;
    m.files.push("branch.csv".into());
    fs::create_dir_all(out.join("profiles"))?;
    let mut profiles = Vec::new();
    for (i, p) in trace.points.iter().enumerate() {
        let name = format!("profiles/point_{i:04}.csv");
        write_profile(out, &name, &p.eta, m)?;
        profiles.push(name);
    }
    let last = trace.points.last().expect("trace starts at the origin");
    m.diag("points", trace.points.len() as i64);
    m.diag("final_kappa", last.kappa);
    m.diag("final_c1_norm", last.diagnostics.c1_norm);
    if let Some(c) = last.diagnostics.bottom_clearance {
        m.diag("final_clearance", c);
    }
    m.diag(
        "max_residual",
        trace.points.iter().map(|p| p.diagnostics.residual_sup).fold(0.0, f64::max),
    );
    m.diag("final_grid", last.diagnostics.grid_size as i64);
    m.diag("refinements", trace.refinements.len() as i64);
    m.diag("kappa_zero_crossings", trace.zero_crossings.len() as i64);
    m.diag("anomalous", trace.anomalous());
    let shown: Vec<String> = profiles.iter().rev().step_by((profiles.len() / 6).max(1)).cloned().collect();
    write_plot(out, &shown, Some("branch.csv"), m)?;
    Ok(!trace.anomalous() && trace.termination != Termination::StepFailure)
}

fn run_evolve(cfg: &RunConfig, out: &Path, seed: u64, m: &mut Manifest) -> anyhow::Result<bool> {
    let (params, phi) = setup(cfg, m)?;
    let dtn = cfg.dtn_config();
    let e = &cfg.evolve;
    let t = &cfg.tolerances;
    let kappa = cfg.forcing.kappa;
    let grid = phi.grid().clone();

    let traveling = match e.initial {
        InitialProfile::Flat => None,
        _ => Some(
            m.timed("picard", || solve_small_wave(&phi.scaled(kappa), &params, t.picard_tol, t.picard_max_iter, &dtn))?
                .solution,
        ),
    };
    let eta0 = match (e.initial, &traveling) {
        (InitialProfile::PerturbedSmallWave, Some(star)) => {
            let noise = random_profile(&grid, seed, 8, 1.0);
            let scale = if noise.sup_norm() > 0.0 { e.noise / noise.sup_norm() } else { 0.0 };
            star.axpy(scale, &noise)
        }
        (_, Some(star)) => star.clone(),
        (_, None) => GridFunction::zeros(&grid),
    };
    let reference = traveling.clone().unwrap_or_else(|| eta0.clone());
    let horizon = e.horizon.unwrap_or(std::f64::consts::TAU / params.speed.abs());
    let run_cfg = EvolutionConfig {
        dt: e.dt,
        horizon,
        scheme: cfg.scheme(),
        kappa,
        phi: phi.clone(),
        sample_every: horizon / e.samples as f64,
        blowup_factor: 1e3,
        dtn,
    };
    let mut series = Vec::new();
    let mut max_drift = 0.0f64;
    let traj = m.timed("evolve", || {
        evolve_with(&eta0, &run_cfg, &params, |time, eta| {
            let drift = (&shift(eta, -params.speed * time) - &reference).sup_norm();
            max_drift = max_drift.max(drift);
            series.push(vec![time, eta.sup_norm(), eta.l2_norm(), eta.mean(), drift]);
        })
    })?;
    io::write_table_csv(&out.join("timeseries.csv"), &["t", "sup_norm", "l2_norm", "mean", "drift"], &series)?;
    m.files.push("timeseries.csv".into());
    fs::create_dir_all(out.join("trajectory"))?;
    let mut profiles = Vec::new();
    for (i, (_, eta)) in traj.samples.iter().enumerate() {
        let name = format!("trajectory/sample_{i:04}.csv");
        write_profile(out, &name, eta, m)?;
        profiles.push(name);
    }
    let times: Vec<Vec<f64>> = traj.samples.iter().enumerate().map(|(i, (t, _))| vec![i as f64, *t]).collect();
    io::write_table_csv(&out.join("trajectory/times.csv"), &["sample", "t"], &times)?;
    m.files.push("trajectory/times.csv".into());
    m.termination = Some(match traj.status {
        crate::dynamics::TrajectoryStatus::Completed => "completed".into(),
        crate::dynamics::TrajectoryStatus::BottomCollision { time } => format!("bottom collision at t = {time:.6e}"),
    });
    m.diag("steps", traj.steps as i64);
    m.diag("max_drift", max_drift);
    m.diag("max_mean", traj.max_mean);
    let shown: Vec<String> = profiles.iter().step_by((profiles.len() / 6).max(1)).cloned().collect();
    write_plot(out, &shown, None, m)?;
    Ok(matches!(traj.status, crate::dynamics::TrajectoryStatus::Completed))
}

/// One entry of the built-in verification suite.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

fn check_le(name: &'static str, value: f64, bound: f64) -> Check {
    Check { name, value, bound, passed: value <= bound }
}

fn check_ge(name: &'static str, value: f64, bound: f64) -> Check {
    Check { name, value, bound, passed: value >= bound }
}

/// Invariant checks at desk scale (`n = 64`) on the reference parameters
/// `σ = g = γ = 1`, with the elliptic checks run on `depth`.
pub fn verify_suite(seed: u64, depth: Depth<f64>) -> crate::Result<Vec<Check>> {
    let g = Grid::new(64)?;
    let dtn = DtnConfig::default();
    let mut checks = Vec::new();

    let zero = GridFunction::zeros(&g);
    for (name, d) in [
        ("flat_dtn_finite_b1", Depth::Finite { b: 1.0 }),
        ("flat_dtn_infinite_L10", Depth::Infinite { truncation: 10.0 }),
    ] {
        let ws = build_workspace(&zero, d, &dtn)?;
        let mut worst = 0.0f64;
        for k in 1..=8 {
            let f = GridFunction::from_fn(&g, |x| (k as f64 * x).cos());
            let gf = apply_dtn(&ws, &f)?;
            let err = (&gf - &f.scaled(multiplier_m(k, &d))).sup_norm() / multiplier_m(k, &d);
            worst = worst.max(err);
        }
        checks.push(check_le(name, worst, 1e-8));
    }

    let mut sym = 0.0f64;
    let mut pos = f64::INFINITY;
    let mut trip = 0.0f64;
    for i in 0..5u64 {
        let eta = random_profile(&g, seed.wrapping_add(2 * i), 6, 0.5);
        let f = random_profile(&g, seed.wrapping_add(2 * i + 1), 8, 1.0);
        let h = random_profile(&g, seed.wrapping_add(100 + i), 8, 1.0);
        let ws = build_workspace(&eta, depth, &dtn)?;
        let gf = apply_dtn(&ws, &f)?;
        let gh = apply_dtn(&ws, &h)?;
        sym = sym.max((f.dot(&gh) - h.dot(&gf)).abs() / (f.l2_norm() * h.l2_norm()));
        pos = pos.min(f.dot(&gf) / f.dot(&f));
        let back = solve_neumann(&ws, &gf)?;
        trip = trip.max((&back - &f).sup_norm() / f.sup_norm());
    }
    checks.push(check_le("dtn_symmetry", sym, 1e-8));
    checks.push(check_ge("dtn_positivity", pos, -1e-10));
    checks.push(check_le("neumann_round_trip", trip, 1e-8));

    let mut ident = 0.0f64;
    let mut perfect = 0.0f64;
    let mut inv = 0.0f64;
    let ccfg = CurvatureConfig::default();
    for i in 0..5u64 {
        let eta = random_profile(&g, seed.wrapping_add(200 + i), 8, 1.0);
        let lap = apply_multiplier(&eta, &MultiplierSymbol::neg_laplacian())?;
        ident = ident.max((&(&mean_curvature(&eta) - &lap) - &curvature_remainder(&eta)).sup_norm());
        let s = capillary_gravity(&eta, 1.0, 1.0);
        perfect = perfect.max(derivative(&eta).dot(&s).abs() / (1.0 + eta.sup_norm().powi(3)));
        let f0 = random_profile(&g, seed.wrapping_add(300 + i), 6, 0.6);
        let f = invert_capillary_gravity(&capillary_gravity(&f0, 1.0, 1.0), 1.0, 1.0, &ccfg)?;
        inv = inv.max((&f - &f0).sup_norm() / f0.sup_norm());
    }
    checks.push(check_le("curvature_remainder_identity", ident, 1e-11));
    checks.push(check_le("perfect_derivative", perfect, 1e-10));
    checks.push(check_le("capillary_inverse_round_trip", inv, 1e-8));

    let params = FluidParams::new(1.0, 1.0, 1.0, Depth::Infinite { truncation: 10.0 })?;
    let phi = GridFunction::from_fn(&g, f64::cos);
    let mut jac = 0.0f64;
    for i in 0..4u64 {
        let v = random_profile(&g, seed.wrapping_add(400 + i), 8, 1.0);
        let jv = jacobian_action(&zero, 0.0, &phi, &params, &v, &dtn)?;
        let p = params;
        let exact = apply_multiplier(&v, &MultiplierSymbol::new("lin", false, move |k| linear_symbol(k, &p)))?;
        jac = jac.max((&jv - &exact).sup_norm() / exact.sup_norm());
    }
    checks.push(check_le("jacobian_anchor", jac, 1e-6));

    let sw = solve_small_wave(&phi.scaled(0.01), &params, 1e-12, 200, &dtn)?;
    checks.push(check_le("small_wave_terminal_ratio", sw.terminal_ratio().unwrap_or(0.0), 0.5));
    checks.push(check_le("small_wave_residual", sw.final_residual, 1e-9));

    let start = random_profile(&g, seed.wrapping_add(500), 6, 0.01);
    let start = start.scaled(1e-2 / start.sup_norm());
    let rigid = solve_small_wave_from(&start, &zero, &params, 1e-13, 100, &dtn)?;
    checks.push(check_le("rigidity", rigid.solution.sup_norm(), 1e-10));

    let eta0 = project_mean_zero(&random_profile(&g, seed.wrapping_add(600), 6, 1e-3));
    let run_cfg = EvolutionConfig { sample_every: 0.05, ..EvolutionConfig::new(zero.clone(), 0.0, 1e-3, 0.05) };
    let mut worst_mean = 0.0f64;
    evolve_with(&eta0, &run_cfg, &params, |_, eta| {
        worst_mean = worst_mean.max(eta.mean().abs() / (1.0 + eta.sup_norm()));
    })?;
    checks.push(check_le("mass_conservation", worst_mean, 1e-12));
    Ok(checks)
}

fn run_verify(cfg: &RunConfig, out: &Path, seed: u64, m: &mut Manifest) -> anyhow::Result<bool> {
    let checks = m.timed("verify", || verify_suite(seed, cfg.depth()))?;
    let mut text = String::from("name,passed,value,bound\n");
    for c in &checks {
        text.push_str(&format!("{},{},{},{}\n", c.name, c.passed, io::fmt_f64(c.value), io::fmt_f64(c.bound)));
        m.diag(c.name, c.value);
        println!("{} {:<32} value {:.3e} bound {:.1e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    fs::write(out.join("verify.csv"), text)?;
    m.files.push("verify.csv".into());
    let failed = checks.iter().filter(|c| !c.passed).count();
    m.termination = Some(format!("{} of {} checks passed", checks.len() - failed, checks.len()));
    m.diag("failed_checks", failed as i64);
    Ok(failed == 0)
}

//! Experiment runner: executes one configured experiment, writes its CSV and
//! JSON artifacts and a run manifest.
//!
//! Every artifact starts with (CSV: a `#` comment line) or contains (JSON:
//! top-level fields) the manifest hash and the seed. The hash is the SHA-256
//! of the schema version, crate version and canonical config text, so it is
//! known before the run starts and identical configs share it.

use crate::adiabatic::{alpha_sweep, TrackOptions};
use crate::coercivity::{gap_lipschitz_audit, quad_bound_audit, AuditOptions, HessianContext};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::dynamics::{diagnostics, evolve, initial_data, spectral_snapshot, validate_dt, DiagnosticRow, EvolveOptions, LPState};
use crate::error::{Error, Result};
use crate::par::{with_workers, Exec};
use crate::pekar::{solve_pekar, PekarOptions, PekarSolution};
use crate::radial::{make_grid, GridSpec, RadialGrid};
use crate::spectral::{gap, GapRow};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Field-perturbation radii used to fit the gap Lipschitz constant.
pub const GAP_AUDIT_RADII: [f64; 5] = [0.1, 0.25, 0.5, 1.0, 2.0];
pub const GAP_AUDIT_PER_RADIUS: usize = 10;
/// Relative tolerance on e(φ_P) = 3 e_P in the Pekar certificate.
pub const GROUND_RATIO_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub crate_version: String,
    pub schema_version: u32,
    pub target: String,
    pub parallel_feature: bool,
}

impl Versions {
    fn current() -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: SCHEMA_VERSION,
            target: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            parallel_feature: cfg!(feature = "parallel"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub manifest_hash: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub grid: GridSpec,
    pub config: ExperimentConfig,
    pub config_text: String,
    pub versions: Versions,
    pub wall_time_s: f64,
    pub incomplete: bool,
    /// `ok`, `invariant-violation` or `error`.
    pub status: String,
    pub failed_checks: Vec<String>,
    pub error: Option<String>,
    pub outputs: Vec<String>,
    pub summary: Value,
}

pub fn manifest_hash(cfg: &ExperimentConfig) -> String {
    let mut h = Sha256::new();
    h.update(format!("schema {SCHEMA_VERSION}\ncrate {}\n", env!("CARGO_PKG_VERSION")));
    h.update(cfg.to_text());
    format!("{:x}", h.finalize())
}

/// Output directory: `out_dir` itself when absolute, otherwise under `root`.
pub fn output_dir(cfg: &ExperimentConfig, root: Option<&Path>) -> PathBuf {
    let p = PathBuf::from(&cfg.out_dir);
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p,
    }
}

/// Writes artifacts into one directory and remembers their names.
struct Sink {
    dir: PathBuf,
    hash: String,
    seed: u64,
    outputs: Vec<String>,
}

impl Sink {
    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut f = BufWriter::new(File::create(self.dir.join(name))?);
        writeln!(f, "# manifest_hash={} seed={}", self.hash, self.seed)?;
        let mut w = csv::Writer::from_writer(f);
        for r in rows {
            w.serialize(r).map_err(|e| Error::Numerical(format!("csv {name}: {e}")))?;
        }
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, body: Value) -> Result<()> {
        let mut obj = json!({ "manifest_hash": self.hash, "seed": self.seed });
        if let (Some(o), Value::Object(b)) = (obj.as_object_mut(), body) {
            o.extend(b);
        }
        let mut f = BufWriter::new(File::create(self.dir.join(name))?);
        serde_json::to_writer_pretty(&mut f, &obj)?;
        writeln!(f)?;
        f.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct ProfileRow {
    r: f64,
    value: f64,
}

/// Result of an experiment body that ran to completion.
struct Finished {
    summary: Value,
    failed_checks: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl RunOutcome {
    /// 0 when every hard invariant held, 1 on an invariant violation or
    /// runtime failure, 2 on invalid input.
    pub fn exit_code(&self) -> i32 {
        match self.manifest.status.as_str() {
            "ok" => 0,
            "invalid" => 2,
            _ => 1,
        }
    }
}

/// Validate, execute and record one experiment. Validation failures return
/// `Err` before anything is written.
pub fn run(cfg: &ExperimentConfig, out_root: Option<&Path>) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = output_dir(cfg, out_root);
    fs::create_dir_all(&dir)?;
    let hash = manifest_hash(cfg);
    let mut sink = Sink { dir: dir.clone(), hash: hash.clone(), seed: cfg.seed, outputs: Vec::new() };
    let start = Instant::now();
    let result = with_workers(cfg.workers, || execute(cfg, &mut sink));
    let (incomplete, status, failed_checks, error, summary) = match result {
        Ok(f) if f.failed_checks.is_empty() => (false, "ok", f.failed_checks, None, f.summary),
        Ok(f) => (false, "invariant-violation", f.failed_checks, None, f.summary),
        Err(e) => {
            let status = match e.exit_code() {
                2 => "invalid",
                _ if matches!(e, Error::Invariant { .. }) => "invariant-violation",
                _ => "error",
            };
            let checks = match &e {
                Error::Invariant { check, .. } => vec![check.clone()],
                _ => Vec::new(),
            };
            (true, status, checks, Some(e.to_string()), Value::Null)
        }
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        manifest_hash: hash,
        kind: cfg.kind,
        seed: cfg.seed,
        grid: GridSpec { n_points: cfg.n_points, box_radius: cfg.box_radius },
        config: cfg.clone(),
        config_text: cfg.to_text(),
        versions: Versions::current(),
        wall_time_s: start.elapsed().as_secs_f64(),
        incomplete,
        status: status.to_string(),
        failed_checks,
        error,
        outputs: sink.outputs.clone(),
        summary,
    };
    let mut f = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    f.flush()?;
    Ok(RunOutcome { dir, manifest })
}

/// Every file in `dir` other than the manifest must be listed in it and
/// carry its hash.
pub fn verify_outputs(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_reader(File::open(dir.join(MANIFEST_FILE))?)?;
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name == MANIFEST_FILE {
            continue;
        }
        if !manifest.outputs.contains(&name) {
            return Err(Error::invariant("orphan-output", None, format!("{name} is not listed in the manifest")));
        }
        let text = fs::read_to_string(dir.join(&name))?;
        if !text.contains(&manifest.manifest_hash) {
            return Err(Error::invariant("manifest-hash", None, format!("{name} does not carry the manifest hash")));
        }
    }
    Ok(manifest)
}

fn execute(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Finished> {
    let grid = make_grid(cfg.n_points, cfg.box_radius)?;
    let pekar = solve_pekar(&grid, &PekarOptions::default())?;
    match cfg.kind {
        ExperimentKind::Pekar => run_pekar(cfg, &grid, &pekar, sink),
        ExperimentKind::Evolve => run_evolve(cfg, &grid, &pekar, sink, false),
        ExperimentKind::GapTrack => run_evolve(cfg, &grid, &pekar, sink, true),
        ExperimentKind::AdiabaticSweep => run_sweep(cfg, &grid, &pekar, sink),
        ExperimentKind::CoercivityAudit => run_audit(cfg, &grid, &pekar, sink),
    }
}

fn exec_for(cfg: &ExperimentConfig) -> Exec {
    if cfg.workers == Some(1) {
        Exec::Seq
    } else {
        Exec::Par
    }
}

fn run_pekar(cfg: &ExperimentConfig, grid: &RadialGrid, pekar: &PekarSolution, sink: &mut Sink) -> Result<Finished> {
    let spec = gap(grid, &pekar.phi_p)?;
    let summary = json!({
        "pekar": pekar.summary(),
        "lambda_p": spec.gap,
        "attaining_channel": spec.channel_label(),
        "e_excited_by_channel": spec.e_excited_by_channel,
    });
    sink.json("pekar.json", summary.clone())?;
    let r = &grid.r()[..grid.interior()];
    let psi: Vec<ProfileRow> = r.iter().zip(pekar.psi_real()).map(|(&r, u)| ProfileRow { r, value: u / r }).collect();
    let pot: Vec<ProfileRow> = r.iter().zip(&pekar.potential).map(|(&r, &v)| ProfileRow { r, value: v }).collect();
    sink.csv("psi_p.csv", &psi)?;
    sink.csv("potential.csv", &pot)?;
    let mut failed = Vec::new();
    if !(pekar.virial_defect() <= cfg.virial_budget) {
        failed.push(format!("virial-defect: {:.3e} > {:.1e}", pekar.virial_defect(), cfg.virial_budget));
    }
    if !((pekar.ground_ratio() - 3.0).abs() / 3.0 <= GROUND_RATIO_TOL) {
        failed.push(format!("ground-ratio: e(φ_P)/e_P = {:.6}", pekar.ground_ratio()));
    }
    Ok(Finished { summary, failed_checks: failed })
}

fn run_evolve(cfg: &ExperimentConfig, grid: &RadialGrid, pekar: &PekarSolution, sink: &mut Sink, track_gap: bool) -> Result<Finished> {
    validate_dt(cfg.dt, cfg.alpha)?;
    let eps = cfg.eps_over_ep * pekar.e_p.abs();
    let init = initial_data(grid, pekar, eps)?;
    let mut state = LPState::new(grid, init.psi0, init.phi0, cfg.alpha)?;
    let t_end = cfg.horizon_mult * cfg.alpha * cfg.alpha;
    let mut opts = EvolveOptions::new(cfg.dt, t_end, cfg.sample_every_for(cfg.alpha));
    opts.norm_budget = cfg.norm_budget;
    opts.energy_budget = cfg.energy_budget;
    let mut rows: Vec<DiagnosticRow> = Vec::new();
    let mut gaps: Vec<GapRow> = Vec::new();
    let outcome = evolve(grid, &mut state, &opts, |s, _| {
        let spec = spectral_snapshot(grid, s)?;
        rows.push(diagnostics(grid, s, pekar, &spec)?);
        gaps.push(spec.report(s.t));
        Ok(())
    });
    sink.csv("trajectory.csv", &rows)?;
    if track_gap {
        sink.csv("gap.csv", &gaps)?;
    }
    let record = outcome?;
    let mut failed = Vec::new();
    let mut summary = json!({
        "eps": eps,
        "lambda": init.lambda,
        "excess": init.excess,
        "t_end": t_end,
        "steps": record.steps,
        "scheme": record.scheme,
        "max_norm_drift": record.max_norm_drift,
        "max_energy_drift": record.max_energy_drift,
    });
    if track_gap {
        let lambda_p = gap(grid, &pekar.phi_p)?.gap;
        let audit = gap_lipschitz_audit(grid, pekar, &GAP_AUDIT_RADII, GAP_AUDIT_PER_RADIUS, cfg.seed, exec_for(cfg))?;
        let bound = 0.9 * lambda_p - audit.c_gap * eps.sqrt();
        let min_gap = gaps.iter().map(|g| g.gap).fold(f64::INFINITY, f64::min);
        let violations = gaps.iter().filter(|g| !(g.gap >= bound)).count();
        let report = json!({
            "lambda_p": lambda_p,
            "c_gap": audit.c_gap,
            "bound": bound,
            "min_gap": min_gap,
            "samples": gaps.len(),
            "violations": violations,
        });
        sink.json("gap_report.json", json!({ "gap": report.clone(), "trajectory": summary.clone() }))?;
        if violations > 0 {
            failed.push(format!("uniform-gap: {violations} samples below {bound:.6}"));
        }
        summary["gap"] = report;
    }
    Ok(Finished { summary, failed_checks: failed })
}

fn run_sweep(cfg: &ExperimentConfig, grid: &RadialGrid, pekar: &PekarSolution, sink: &mut Sink) -> Result<Finished> {
    let eps = cfg.eps_over_ep * pekar.e_p.abs();
    let opts = TrackOptions {
        dt: cfg.dt,
        horizon_mult: cfg.horizon_mult,
        fixed_sample_every: cfg.sample_every,
        energy_budget: cfg.energy_budget,
        norm_budget: cfg.norm_budget,
        ..TrackOptions::default()
    };
    let (report, series) = alpha_sweep(grid, pekar, eps, &cfg.alphas, &opts, exec_for(cfg))?;
    sink.csv("sweep.csv", &report.rows)?;
    for (i, s) in series.iter().enumerate() {
        sink.csv(&format!("deviation_{i}.csv"), &s.samples)?;
    }
    let summary = serde_json::to_value(&report)?;
    sink.json("scaling.json", summary.clone())?;
    Ok(Finished { summary, failed_checks: report.failures.iter().map(|f| format!("sweep-member: {f}")).collect() })
}

fn run_audit(cfg: &ExperimentConfig, grid: &RadialGrid, pekar: &PekarSolution, sink: &mut Sink) -> Result<Finished> {
    let ctx = HessianContext::new(grid, pekar)?;
    let opts = AuditOptions { sample_count: cfg.audit_samples, seed: cfg.seed, ..AuditOptions::default() };
    let exec = exec_for(cfg);
    let (report, samples) = quad_bound_audit(&ctx, &opts, exec)?;
    let rows: Vec<_> = samples.iter().map(|s| s.row.clone()).collect();
    sink.csv("audit.csv", &rows)?;
    let gap_audit = gap_lipschitz_audit(grid, pekar, &GAP_AUDIT_RADII, GAP_AUDIT_PER_RADIUS, cfg.seed, exec)?;
    let summary = json!({ "audit": report, "gap_audit": gap_audit });
    sink.json("audit.json", summary.clone())?;
    let mut failed = Vec::new();
    if report.negative_ratios > 0 {
        failed.push(format!("negative-ratio: {} samples", report.negative_ratios));
    }
    if report.lemma28_violations > 0 {
        failed.push(format!("pair-excess-bound: {} samples", report.lemma28_violations));
    }
    if !(report.kappas.kappa2 > 0.0) {
        failed.push(format!("kappa2: {}", report.kappas.kappa2));
    }
    Ok(Finished { summary, failed_checks: failed })
}

//! Operations behind the command-line front end: run, resume, fit, check,
//! mms, barrier and sweep.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Band, Gates, RunConfig};
use crate::diagnostics::{h_table, run_diagnostics, DiagnosticReport};
use crate::error::{Error, Result};
use crate::grid::{gradient, Grid2D, ScalarField};
use crate::profile_fit::{
    fit_aniso_uy, fit_normal_at, fit_tangential_uy, fit_time_rate, level_set_shape_uy, normal_profile,
    tangential_profile, AnisoFit, PowerLawFit, TimeRateFit,
};
use crate::profile_math::{
    barrier_eval, barrier_residual_scan, calibrate_c0, manufactured_solution, profile_constants, BarrierParams,
    Lattice, ResidualScan,
};
use crate::rundir::{resume_point, series_csv, write_atomic, DirSink, Meta, Outcome, RunDir, RunStatus};
use crate::solver::{
    resume, run, run_1d, BoundaryMode, Forcing, NullSink, RunOutcome, SimulationState,
    SnapshotKind, SolverConfig, StopReason,
};

pub const FITS: &str = "fits.json";
pub const REPORT: &str = "report.json";
pub const H_TABLE: &str = "h_table.csv";
pub const PROFILES_1D: &str = "profiles_1d.csv";

/// Presets shipped with the crate, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("p3-blowup", include_str!("../../../presets/p3-blowup.toml")),
    ("p2.5-blowup", include_str!("../../../presets/p2.5-blowup.toml")),
    ("p3.5-sweep", include_str!("../../../presets/p3.5-sweep.toml")),
    ("small-data", include_str!("../../../presets/small-data.toml")),
    ("ramp-1d", include_str!("../../../presets/ramp-1d.toml")),
    ("mms", include_str!("../../../presets/mms.toml")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })
}

pub fn preset(name: &str) -> Result<RunConfig> {
    RunConfig::from_toml(preset_text(name)?)
}

/// Caps the global thread pool at `GBULAB_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("GBULAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("GBULAB_THREADS must be a positive integer, got {v:?}")))?;
    // A second initialization in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub reason: String,
    pub t_stop: f64,
    pub steps: u64,
    pub grad_max: f64,
}

fn outcome_of(reason: StopReason, t_stop: f64, steps: u64, grad_max: f64) -> Outcome {
    Outcome { reason: reason.as_str().to_string(), t_stop, steps, grad_max }
}

fn summary(dir: &Path, o: &Outcome) -> RunSummary {
    RunSummary { dir: dir.to_path_buf(), reason: o.reason.clone(), t_stop: o.t_stop, steps: o.steps, grad_max: o.grad_max }
}

/// Runs a configuration into `out`, then writes diagnostics and fits.
/// Nothing is created when the configuration or the initial data is invalid.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let scfg = cfg.solver_config()?;
    if cfg.initial_data.is_1d() {
        let u0 = cfg.initial_profile()?;
        let dir = RunDir::create(out)?;
        return run_1d_into(cfg, &scfg, &u0, &dir);
    }
    let u0 = cfg.initial_field()?;
    let dir = RunDir::create(out)?;
    let mut sink = DirSink::new(dir.clone(), cfg.clone())?;
    let result = run(u0, &scfg, &mut sink);
    finish_2d(sink, result)
}

fn finish_2d(sink: DirSink, result: Result<RunOutcome>) -> Result<RunSummary> {
    let dir = sink.dir().clone();
    match result {
        Ok(o) => {
            let st = &o.final_state;
            let outcome = outcome_of(o.reason, o.t_stop, st.step, st.grad_max);
            let meta = sink.finish(RunStatus::Finished, Some(outcome.clone()), None)?;
            write_analysis(&dir, &analyze(&dir, &meta)?)?;
            Ok(summary(&dir.path, &outcome))
        }
        Err(e) => {
            let dump = sink
                .meta()
                .snapshots
                .iter()
                .rev()
                .find(|s| s.snap.kind == SnapshotKind::Failure)
                .map(|s| dir.snapshot_path(s.snap.index));
            sink.finish(RunStatus::Failed, None, Some(e.to_string()))?;
            match dump {
                Some(dump) => Err(Error::Failed { dump, source: Box::new(e) }),
                None => Err(e),
            }
        }
    }
}

fn run_1d_into(
    cfg: &RunConfig,
    scfg: &SolverConfig,
    u0: &crate::initial_data::Profile1D,
    dir: &RunDir,
) -> Result<RunSummary> {
    let o = run_1d(u0, scfg)?;
    dir.write_series(&o.series)?;
    let mut csv = String::from("t,y,u\n");
    let h = u0.h();
    let mut profiles = vec![(0.0, u0.values.clone())];
    profiles.extend(o.cascade.iter().cloned());
    profiles.push((o.final_state.t, o.final_state.values.clone()));
    for (t, vals) in &profiles {
        for (j, v) in vals.iter().enumerate() {
            csv.push_str(&format!("{t},{},{v}\n", j as f64 * h));
        }
    }
    write_atomic(&dir.file(PROFILES_1D), csv.as_bytes())?;
    let outcome = outcome_of(o.reason, o.t_stop, o.final_state.step, o.final_state.grad_max);
    let meta = Meta {
        config: cfg.clone(),
        status: RunStatus::Finished,
        outcome: Some(outcome.clone()),
        failure: None,
        snapshots: Vec::new(),
    };
    dir.write_meta(&meta)?;
    write_analysis(dir, &analyze(dir, &meta)?)?;
    Ok(summary(&dir.path, &outcome))
}

/// Continues an interrupted run from its last snapshot. One-dimensional
/// runs keep no snapshots and restart from their initial profile.
pub fn cmd_resume(path: &Path) -> Result<RunSummary> {
    let dir = RunDir::open(path)?;
    let meta = dir.read_meta()?;
    if meta.status == RunStatus::Finished {
        if let Some(o) = meta.outcome.as_ref().filter(|o| o.reason != StopReason::StepBudget.as_str()) {
            return Ok(summary(path, o));
        }
    }
    let cfg = meta.config.clone();
    let scfg = cfg.solver_config()?;
    if cfg.initial_data.is_1d() {
        return run_1d_into(&cfg, &scfg, &cfg.initial_profile()?, &dir);
    }
    let entry = *resume_point(&meta)
        .ok_or_else(|| Error::RunDir { path: path.to_path_buf(), reason: "no snapshot to resume from".into() })?;
    let (field, t) = dir.read_snapshot(entry.snap.index)?;
    let mut state = SimulationState::new(field, t);
    state.step = entry.snap.step;
    let sink = DirSink::reopen(dir, meta, &entry)?;
    if entry.snap.kind == SnapshotKind::Final {
        // Interrupted after the last snapshot: only the outcome is missing.
        let reason = if state.grad_max >= scfg.stop_grad_norm {
            StopReason::BlowUpDetected
        } else if state.t >= scfg.t_max {
            StopReason::HorizonReached
        } else {
            StopReason::DtUnderflow
        };
        let outcome = outcome_of(reason, state.t, state.step, state.grad_max);
        let dir = sink.dir().clone();
        let meta = sink.finish(RunStatus::Finished, Some(outcome.clone()), None)?;
        write_analysis(&dir, &analyze(&dir, &meta)?)?;
        return Ok(summary(&dir.path, &outcome));
    }
    let mut sink = sink;
    let result = resume(state, entry.progress, &scfg, &mut sink);
    finish_2d(sink, result)
}

/// A fit or the reason it could not be made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fitted<T> {
    Ok(T),
    Error(String),
}

impl<T> Fitted<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Fitted::Ok(v) => Some(v),
            Fitted::Error(_) => None,
        }
    }
}

impl<T> From<Result<T>> for Fitted<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Fitted::Ok(v),
            Err(e) => Fitted::Error(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentialRecord {
    pub fit: PowerLawFit,
    pub crossover: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetRecord {
    pub level: f64,
    pub fit: PowerLawFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFits {
    pub index: usize,
    pub t: f64,
    pub grad_max: f64,
    pub normal: Fitted<PowerLawFit>,
    /// Normal fit on the column `x = off_center_x`, away from the singularity.
    pub off_center_x: f64,
    pub normal_off_center: Fitted<PowerLawFit>,
    pub tangential: Fitted<TangentialRecord>,
    pub aniso: Fitted<AnisoFit>,
    pub level_set: Fitted<LevelSetRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsFile {
    pub p: f64,
    pub d_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<SnapshotFits>,
    pub time_rate: Fitted<TimeRateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub run_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticReport>,
    pub notices: Vec<String>,
}

/// Everything derived from a run directory's persisted data.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub fits: FitsFile,
    pub report: ReportFile,
    pub h_table_csv: Option<String>,
    pub profiles: Vec<(String, String)>,
}

pub fn fits_json(f: &FitsFile) -> Result<String> {
    let mut s = serde_json::to_string_pretty(f)?;
    s.push('\n');
    Ok(s)
}

fn pairs_csv(header: &str, rows: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (a, b) in rows {
        s.push_str(&format!("{a},{b}\n"));
    }
    s
}

/// Fits of one snapshot.
pub fn fit_snapshot(
    u: &ScalarField,
    cfg: &RunConfig,
) -> Result<(Fitted<PowerLawFit>, f64, Fitted<PowerLawFit>, Fitted<TangentialRecord>, Fitted<AnisoFit>, Fitted<LevelSetRecord>, Vec<(String, String)>)> {
    let pc = profile_constants(cfg.p)?;
    let win = cfg.fits.windows();
    let g = u.grid;
    let (_, uy) = gradient(u)?;
    let normal = fit_normal_at(&uy, 0.0, &win).into();
    let off_x = 0.2f64.min(0.8 * g.lx);
    let normal_off = fit_normal_at(&uy, off_x, &win).into();
    let tang = fit_tangential_uy(&uy, &pc, &win);
    let crossover = tang.as_ref().map(|t| t.1).unwrap_or(win.inner_cells as f64 * g.hx);
    let tangential: Fitted<TangentialRecord> =
        tang.map(|(fit, crossover)| TangentialRecord { fit, crossover }).into();
    let exclusion = (crossover, win.inner_cells as f64 * g.hy);
    let aniso = fit_aniso_uy(&uy, &pc, &win, exclusion).into();
    let level = cfg.fits.level_fraction * uy.at(g.i0(), 1);
    let ls = level_set_shape_uy(&uy, &pc, level, &win);
    let curve = ls.as_ref().map(|(_, c)| c.clone()).unwrap_or_default();
    let level_set = ls.map(|(fit, _)| LevelSetRecord { level, fit }).into();
    let profiles = vec![
        ("normal_profile.csv".to_string(), pairs_csv("y,uy", &normal_profile(&uy, g.i0()))),
        ("tangential_profile.csv".to_string(), pairs_csv("x,uy", &tangential_profile(&uy))),
        ("level_set.csv".to_string(), pairs_csv("x,y", &curve)),
    ];
    Ok((normal, off_x, normal_off, tangential, aniso, level_set, profiles))
}

/// Recomputes diagnostics and fits from what the directory holds.
pub fn analyze(dir: &RunDir, meta: &Meta) -> Result<Analysis> {
    let cfg = &meta.config;
    let pc = profile_constants(cfg.p)?;
    let series = dir.read_series()?;
    let time_rate: Fitted<TimeRateFit> = fit_time_rate(&series, &pc).into();
    let t_hat = time_rate.ok().map(|f| f.t_hat);
    let mut notices = Vec::new();
    if cfg.initial_data.is_1d() {
        notices.push("one-dimensional run: snapshot monitors do not apply".to_string());
        return Ok(Analysis {
            fits: FitsFile { p: cfg.p, d_p: pc.d_p, snapshot: None, time_rate },
            report: ReportFile { run_dir: dir.path.clone(), t_hat, diagnostics: None, notices },
            h_table_csv: None,
            profiles: Vec::new(),
        });
    }
    let snaps = dir.load_snapshots(meta, |k| k != SnapshotKind::Failure)?;
    let last = snaps
        .iter()
        .rev()
        .find(|(s, _)| s.kind == SnapshotKind::Final)
        .or(snaps.last())
        .ok_or_else(|| Error::RunDir { path: dir.path.clone(), reason: "no snapshots".into() })?;
    let (normal, off_x, normal_off, tangential, aniso, level_set, profiles) = fit_snapshot(&last.1, cfg)?;
    let snapshot = SnapshotFits {
        index: last.0.index,
        t: last.0.t,
        grad_max: last.0.grad_max,
        normal,
        off_center_x: off_x,
        normal_off_center: normal_off,
        tangential,
        aniso,
        level_set,
    };
    let grid = last.1.grid;
    let settings = cfg.diagnostic_settings(&grid);
    let views: Vec<(f64, f64, &ScalarField)> = snaps.iter().map(|(s, f)| (s.t, s.grad_max, f)).collect();
    let diagnostics = run_diagnostics(&views, &pc, &settings, t_hat)?;
    let table = h_table(&views, &pc)?;
    let mut h_csv = String::from("t,x,uy,h\n");
    for r in &table.rows {
        h_csv.push_str(&format!("{},{},{},{}\n", r.t, r.x, r.uy, r.h));
    }
    if table.excluded > 0 {
        notices.push(format!("{} nonpositive boundary samples excluded from h", table.excluded));
    }
    Ok(Analysis {
        fits: FitsFile { p: cfg.p, d_p: pc.d_p, snapshot: Some(snapshot), time_rate },
        report: ReportFile { run_dir: dir.path.clone(), t_hat, diagnostics: Some(diagnostics), notices },
        h_table_csv: Some(h_csv),
        profiles,
    })
}

pub fn write_analysis(dir: &RunDir, a: &Analysis) -> Result<()> {
    write_atomic(&dir.file(FITS), fits_json(&a.fits)?.as_bytes())?;
    let mut report = serde_json::to_string_pretty(&a.report)?;
    report.push('\n');
    write_atomic(&dir.file(REPORT), report.as_bytes())?;
    if let Some(h) = &a.h_table_csv {
        write_atomic(&dir.file(H_TABLE), h.as_bytes())?;
    }
    for (name, body) in &a.profiles {
        write_atomic(&dir.file(name), body.as_bytes())?;
    }
    Ok(())
}

/// Re-fits an existing run directory.
pub fn cmd_fit(path: &Path) -> Result<Analysis> {
    let dir = RunDir::open(path)?;
    let meta = dir.read_meta()?;
    let a = analyze(&dir, &meta)?;
    write_analysis(&dir, &a)?;
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub name: String,
    pub value: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub gates: Vec<GateResult>,
    /// `fits.json` was absent and has been regenerated.
    pub regenerated: bool,
    pub passed: bool,
}

fn band_gate(name: &str, v: Option<f64>, band: &Band, err: &str) -> GateResult {
    match v {
        Some(v) => GateResult {
            name: name.into(),
            value: v,
            pass: band.contains(v),
            detail: format!("{v:.4} vs {} ± {}", band.target, band.tol),
        },
        None => GateResult { name: name.into(), value: f64::NAN, pass: false, detail: err.into() },
    }
}

fn max_gate(name: &str, v: Option<f64>, max: f64, err: &str) -> GateResult {
    match v {
        Some(v) => GateResult { name: name.into(), value: v, pass: v <= max, detail: format!("{v:.4e} <= {max:e}") },
        None => GateResult { name: name.into(), value: f64::NAN, pass: false, detail: err.into() },
    }
}

fn err_of<T>(f: &Fitted<T>) -> String {
    match f {
        Fitted::Ok(_) => String::new(),
        Fitted::Error(e) => e.clone(),
    }
}

/// Evaluates the configured gates against an analysis.
pub fn evaluate_gates(gates: &Gates, meta: &Meta, a: &Analysis) -> Vec<GateResult> {
    let mut out = Vec::new();
    let pc = profile_constants(meta.config.p).ok();
    let reason = meta.outcome.as_ref().map(|o| o.reason.clone()).unwrap_or_else(|| "none".into());
    if let Some(want) = &gates.reason {
        out.push(GateResult {
            name: "reason".into(),
            value: f64::NAN,
            pass: &reason == want,
            detail: format!("{reason} (want {want})"),
        });
    }
    let snap = a.fits.snapshot.as_ref();
    let missing = "no snapshot fits";
    if let Some(b) = &gates.normal_exponent {
        let f = snap.map(|s| &s.normal);
        let e = f.map(err_of).unwrap_or_else(|| missing.into());
        out.push(band_gate("normal_exponent", f.and_then(|f| f.ok()).map(|f| f.exponent), b, &e));
    }
    if let (Some(tol), Some(pc)) = (gates.normal_amplitude_rel, pc) {
        let f = snap.map(|s| &s.normal);
        let e = f.map(err_of).unwrap_or_else(|| missing.into());
        let v = f.and_then(|f| f.ok()).map(|f| (f.amplitude - pc.d_p) / pc.d_p);
        let mut g = band_gate("normal_amplitude_rel", v, &Band { target: 0.0, tol }, &e);
        if let Some(f) = f.and_then(|f| f.ok()) {
            g.detail = format!("amplitude {:.4} vs d_p {:.4} ± {:.0}%", f.amplitude, pc.d_p, 100.0 * tol);
        }
        out.push(g);
    }
    if let Some(b) = &gates.tangential_exponent {
        let f = snap.map(|s| &s.tangential);
        let e = f.map(err_of).unwrap_or_else(|| missing.into());
        out.push(band_gate("tangential_exponent", f.and_then(|f| f.ok()).map(|f| f.fit.exponent), b, &e));
    }
    if let Some(b) = &gates.level_set_exponent {
        let f = snap.map(|s| &s.level_set);
        let e = f.map(err_of).unwrap_or_else(|| missing.into());
        out.push(band_gate("level_set_exponent", f.and_then(|f| f.ok()).map(|f| f.fit.exponent), b, &e));
    }
    if let Some(m) = gates.aniso_residual_max {
        let f = snap.map(|s| &s.aniso);
        let e = f.map(err_of).unwrap_or_else(|| missing.into());
        out.push(max_gate("aniso_residual", f.and_then(|f| f.ok()).map(|f| f.residual_rel), m, &e));
    }
    let tr = a.fits.time_rate.ok();
    let tr_err = err_of(&a.fits.time_rate);
    if let Some(b) = &gates.time_rate_exponent {
        out.push(band_gate("time_rate_exponent", tr.map(|f| f.rate.exponent), b, &tr_err));
    }
    if let Some(m) = gates.time_rate_r2_min {
        let v = tr.map(|f| f.linear.r_squared);
        out.push(GateResult {
            name: "time_rate_r2".into(),
            value: v.unwrap_or(f64::NAN),
            pass: v.is_some_and(|v| v >= m),
            detail: v.map_or(tr_err.clone(), |v| format!("{v:.5} >= {m}")),
        });
    }
    let diag = a.report.diagnostics.as_ref();
    if let Some(m) = gates.envelope_growth_max {
        for g in diag.map(|d| d.final_decade.as_slice()).unwrap_or(&[]) {
            if g.name == "max_principle_sup" {
                continue;
            }
            out.push(GateResult {
                name: format!("envelope_growth.{}", g.name),
                value: g.growth,
                pass: g.growth < m,
                detail: format!("{:.4} -> {:.4}, growth {:.3} < {m}", g.start, g.end_max, g.growth),
            });
        }
    }
    if let Some(m) = gates.sup_excess_max {
        let v = diag.and_then(|d| d.envelopes.iter().find(|e| e.name == "max_principle_sup")).map(|e| e.envelope_constant);
        out.push(max_gate("sup_excess", v, m, "no diagnostics"));
    }
    if let Some(m) = gates.grad_growth_min {
        let v = diag.map(|d| d.grad_growth);
        out.push(GateResult {
            name: "grad_growth".into(),
            value: v.unwrap_or(f64::NAN),
            pass: v.is_some_and(|v| v >= m),
            detail: v.map_or("no diagnostics".into(), |v| format!("{v:.3e} >= {m:e}")),
        });
    }
    if gates.j_sign == Some(true) {
        let l = diag.and_then(|d| d.j_ladder.as_ref());
        out.push(GateResult {
            name: "j_sign".into(),
            value: l.and_then(|l| l.k).unwrap_or(f64::NAN),
            pass: l.is_some_and(|l| l.k.is_some()),
            detail: match l {
                Some(l) => match l.k {
                    Some(k) => format!("k = 2^-{} = {k:e}", l.n.unwrap_or(0)),
                    None => format!("no rung down to 2^-{}", crate::diagnostics::J_LADDER_RUNGS),
                },
                None => "J ladder unavailable".into(),
            },
        });
    }
    if let (Some(m), Some(pc)) = (gates.theta_margin, pc) {
        let v = diag.and_then(|d| d.theta_range).map(|r| r.1);
        out.push(max_gate("theta_max", v, pc.beta + m, "no Θ samples in the probe box"));
    }
    out
}

/// Replays the analysis of a run directory, compares it with the stored
/// `fits.json` byte for byte and evaluates the gates.
pub fn cmd_check(path: &Path) -> Result<CheckSummary> {
    let dir = RunDir::open(path)?;
    let meta = dir.read_meta()?;
    dir.verify_snapshots(&meta)?;
    let a = analyze(&dir, &meta)?;
    let fresh = fits_json(&a.fits)?;
    let stored = dir.file(FITS);
    let mut gates = Vec::new();
    let regenerated = match fs::read(&stored) {
        Ok(bytes) => {
            let same = bytes == fresh.as_bytes();
            gates.push(GateResult {
                name: "fits_replay".into(),
                value: f64::from(u8::from(same)),
                pass: same,
                detail: if same { "byte-identical".into() } else { "replayed fits differ from fits.json".into() },
            });
            false
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            write_analysis(&dir, &a)?;
            true
        }
        Err(e) => return Err(e.into()),
    };
    gates.extend(evaluate_gates(&meta.config.fits.gates, &meta, &a));
    let passed = gates.iter().all(|g| g.pass);
    Ok(CheckSummary { gates, regenerated, passed })
}

/// Re-runs the solver in memory and compares the series with `series.csv`.
pub fn replay_series(path: &Path) -> Result<bool> {
    let dir = RunDir::open(path)?;
    let meta = dir.read_meta()?;
    let cfg = &meta.config;
    let scfg = cfg.solver_config()?;
    let series = if cfg.initial_data.is_1d() {
        run_1d(&cfg.initial_profile()?, &scfg)?.series
    } else {
        run(cfg.initial_field()?, &scfg, &mut NullSink)?.series
    };
    Ok(fs::read(dir.file(crate::rundir::SERIES))? == series_csv(&series).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsRow {
    pub n: usize,
    pub h: f64,
    pub err_inf: f64,
    pub steps: u64,
    /// Observed order against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsTable {
    pub alpha: f64,
    pub rows: Vec<MmsRow>,
    pub finest_order: f64,
    /// Whether the order gate applies: `alpha > (p-1)/(p-2)`.
    pub gated: bool,
    pub passed: bool,
}

/// Error of the forced problem at `t_end` on one grid.
pub fn mms_error(cfg: &RunConfig, n: usize) -> Result<(f64, u64)> {
    let m = cfg.mms.as_ref().ok_or_else(|| Error::Config("mms: section missing".into()))?;
    let pc = profile_constants(cfg.p)?;
    let mp = cfg.manufactured()?;
    let g = Grid2D::new(cfg.domain.lx, cfg.domain.ly, n, n)?;
    let exact = |t: f64| -> Result<ScalarField> {
        let mut v = Vec::with_capacity(g.len());
        for j in 0..g.ny {
            for i in 0..g.nx {
                v.push(manufactured_solution(&mp, &pc, g.x(i), g.y(j), t)?.u);
            }
        }
        ScalarField::from_values(g, v)
    };
    let mut scfg = SolverConfig::new(cfg.p, m.t_end, f64::INFINITY);
    scfg.cfl_safety = cfg.solver.cfl_safety;
    scfg.dt_floor = cfg.solver.dt_floor;
    scfg.cascade = false;
    scfg.series_stride = u64::MAX;
    scfg.forcing = Forcing::Manufactured(mp);
    scfg.boundary = BoundaryMode::Exact;
    let out = run(exact(0.0)?, &scfg, &mut NullSink)?;
    if out.reason != StopReason::HorizonReached {
        return Err(Error::Domain(format!("manufactured run on {n}² stopped early: {}", out.reason.as_str())));
    }
    Ok((out.final_state.field.max_abs_diff(&exact(m.t_end)?), out.final_state.step))
}

pub fn cmd_mms(cfg: &RunConfig) -> Result<MmsTable> {
    let m = cfg.mms.as_ref().ok_or_else(|| Error::Config("mms: section missing".into()))?;
    let errs: Vec<(f64, u64)> = m.ladder.par_iter().map(|&n| mms_error(cfg, n)).collect::<Result<_>>()?;
    let mut rows: Vec<MmsRow> = Vec::new();
    for (k, (&n, &(e, steps))) in m.ladder.iter().zip(&errs).enumerate() {
        let h = Grid2D::new(cfg.domain.lx, cfg.domain.ly, n, n)?.hx;
        let order = (k > 0).then(|| (rows[k - 1].err_inf / e).ln() / (rows[k - 1].h / h).ln());
        rows.push(MmsRow { n, h, err_inf: e, steps, order });
    }
    let finest_order = rows.last().and_then(|r| r.order).unwrap_or(f64::NAN);
    let gated = m.alpha > (cfg.p - 1.0) / (cfg.p - 2.0);
    let passed = !gated || finest_order >= m.min_order;
    Ok(MmsTable { alpha: m.alpha, rows, finest_order, gated, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaProbe {
    pub eta: f64,
    pub min_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub p: f64,
    pub params: BarrierParams,
    pub calibration_lattice: Lattice,
    pub lattice: Lattice,
    pub scan: ResidualScan,
    pub eta_ladder: Vec<EtaProbe>,
    pub first_failing_eta: Option<f64>,
    /// Points checked on `y = 0`, where the barrier must vanish.
    pub boundary_points: usize,
    pub boundary_max_abs: f64,
}

pub fn cmd_barrier(cfg: &RunConfig) -> Result<BarrierReport> {
    let b = cfg.barrier.as_ref().ok_or_else(|| Error::Config("barrier: section missing".into()))?;
    let pc = profile_constants(cfg.p)?;
    let start = cfg.barrier_params(b, 1.0)?;
    let (params, _) = calibrate_c0(&start, &pc, &Lattice::CALIBRATION)?
        .ok_or_else(|| Error::Domain("no power-of-two multiplier makes the barrier a supersolution".into()))?;
    let scan = barrier_residual_scan(&params, &pc, &b.lattice)?;
    let eta_ladder: Vec<EtaProbe> = b
        .eta_ladder
        .par_iter()
        .map(|&eta| {
            let s = barrier_residual_scan(&params.with_eta(eta, &pc)?, &pc, &b.lattice)?;
            Ok(EtaProbe { eta, min_residual: s.min_residual, pass: s.min_residual >= 0.0 })
        })
        .collect::<Result<_>>()?;
    let first_failing_eta = eta_ladder.iter().find(|e| !e.pass).map(|e| e.eta);
    let (mut boundary_points, mut boundary_max_abs) = (0, 0.0f64);
    let (nx, nt) = (b.lattice.nx.max(2), b.lattice.nt.max(1));
    for k in 0..nt {
        let t = params.t0 + (params.horizon - params.t0) * k as f64 / nt as f64;
        for i in 0..nx {
            let x = params.x0 - params.r + 2.0 * params.r * i as f64 / (nx - 1) as f64;
            let ev = barrier_eval(&params, &pc, x, 0.0, t)?;
            if ev.residual.is_some() {
                return Err(Error::Domain(format!("residual evaluated on the boundary at x = {x}")));
            }
            boundary_points += 1;
            boundary_max_abs = boundary_max_abs.max(ev.z.abs());
        }
    }
    Ok(BarrierReport {
        p: cfg.p,
        params,
        calibration_lattice: Lattice::CALIBRATION,
        lattice: b.lattice,
        scan,
        eta_ladder,
        first_failing_eta,
        boundary_points,
        boundary_max_abs,
    })
}

/// One swept parameter: a dotted key of the configuration and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    /// Parses `key=v1,v2,...`; values are TOML literals.
    fn from_str(s: &str) -> Result<Self> {
        let (key, vals) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sweep axis {s:?}: expected key=v1,v2,...")))?;
        let values = vals
            .split(',')
            .map(|v| {
                toml::from_str::<toml::Table>(&format!("v = {}", v.trim()))
                    .map(|mut t| t.remove("v").expect("parsed key"))
                    .map_err(|e| Error::Config(format!("sweep value {v:?} for {key}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepAxis { key: key.trim().to_string(), values })
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty sweep key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("sweep key {key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Cartesian product of the axes applied to a base configuration, with a
/// directory label per point.
pub fn sweep_configs(base: &str, axes: &[SweepAxis]) -> Result<Vec<(String, RunConfig)>> {
    let base: toml::Table = toml::from_str(base).map_err(|e| Error::Config(e.to_string()))?;
    let mut points: Vec<(String, toml::Table)> = vec![(String::new(), base)];
    for ax in axes {
        let mut next = Vec::new();
        for (label, t) in &points {
            for v in &ax.values {
                let mut t = t.clone();
                set_dotted(&mut t, &ax.key, v.clone())?;
                let tag = format!("{}={}", ax.key, v).replace(['/', '"', ' '], "");
                let label = if label.is_empty() { tag } else { format!("{label},{tag}") };
                next.push((label, t));
            }
        }
        points = next;
    }
    points
        .into_iter()
        .map(|(label, t)| {
            let text = toml::to_string(&t).map_err(|e| Error::Config(e.to_string()))?;
            let cfg = RunConfig::from_toml(&text).map_err(|e| Error::Config(format!("[{label}] {e}")))?;
            Ok((if label.is_empty() { "base".into() } else { label }, cfg))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs every sweep point concurrently, each into `out/<label>`, and writes
/// `out/sweep.json`.
pub fn cmd_sweep(base: &str, axes: &[SweepAxis], out: &Path) -> Result<Vec<SweepEntry>> {
    let points = sweep_configs(base, axes)?;
    fs::create_dir_all(out)?;
    let entries: Vec<SweepEntry> = points
        .par_iter()
        .map(|(label, cfg)| {
            let dir = out.join(label);
            match cmd_run(cfg, &dir) {
                Ok(s) => SweepEntry { label: label.clone(), dir, summary: Some(s), error: None },
                Err(e) => SweepEntry { label: label.clone(), dir, summary: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let mut f = fs::File::create(out.join("sweep.json"))?;
    f.write_all(serde_json::to_string_pretty(&entries)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(entries)
}

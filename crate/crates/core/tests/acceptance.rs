//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when
//! any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use gbulab_core::commands::{
    analyze, cmd_barrier, cmd_check, cmd_mms, cmd_run, preset, Analysis, FITS,
};
use gbulab_core::config::RunConfig;
use gbulab_core::profile_math::{profile_constants, steady_state};
use gbulab_core::rundir::{RunDir, SERIES};
use gbulab_core::solver::{run, NullSink, SymmetryMode};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.4}"))
}

struct BlowUpRun {
    cfg: RunConfig,
    dir: RunDir,
    analysis: Analysis,
    wall: Duration,
}

fn blow_up_run(name: &str, root: &Path) -> Result<BlowUpRun, String> {
    let start = Instant::now();
    let cfg = preset(name).map_err(|e| e.to_string())?;
    let path = root.join(name);
    cmd_run(&cfg, &path).map_err(|e| e.to_string())?;
    let dir = RunDir::open(&path).map_err(|e| e.to_string())?;
    let meta = dir.read_meta().map_err(|e| e.to_string())?;
    let analysis = analyze(&dir, &meta).map_err(|e| e.to_string())?;
    Ok(BlowUpRun { cfg, dir, analysis, wall: start.elapsed() })
}

fn steady_state_identity() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = rng.random_range(2.05..6.0);
        let pc = profile_constants(p).expect("p > 2");
        let a = 10f64.powf(rng.random_range(-3.0..1.0));
        let y = 10f64.powf(rng.random_range(-3.0..1.0));
        let j = steady_state(a, y, &pc).expect("a, y > 0");
        let rhs = j.first.powf(p);
        worst = worst.max((-j.second - rhs).abs() / rhs);
    }
    verdict(worst <= 1e-12, format!("max relative defect {worst:.2e} over 1000 samples"))
}

fn mms_convergence() -> Verdict {
    let cfg = match preset("mms") {
        Ok(c) => c,
        Err(e) => return verdict(false, e.to_string()),
    };
    match cmd_mms(&cfg) {
        Ok(t) => {
            let orders: Vec<String> = t.rows.iter().filter_map(|r| r.order).map(|o| format!("{o:.3}")).collect();
            verdict(
                (1.7..=2.3).contains(&t.finest_order),
                format!("orders [{}], finest {:.3} in [1.7, 2.3]", orders.join(", "), t.finest_order),
            )
        }
        Err(e) => verdict(false, e.to_string()),
    }
}

fn barrier_supersolution() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["p3-blowup", "p2.5-blowup"] {
        let report = preset(name).and_then(|c| cmd_barrier(&c));
        match report {
            Ok(r) => {
                let l = r.lattice;
                let ok = r.scan.min_residual >= 0.0 && (l.nx, l.ny, l.nt) == (50, 50, 20);
                pass &= ok;
                parts.push(format!(
                    "p={}: c0={:e} min residual {:.3e} on {}x{}x{}",
                    r.p, r.params.c0, r.scan.min_residual, l.nx, l.ny, l.nt
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    verdict(pass, parts.join("; "))
}

fn normal_profile(run: &BlowUpRun) -> Verdict {
    let pc = profile_constants(run.cfg.p).expect("valid p");
    let snap = run.analysis.fits.snapshot.as_ref();
    match snap.and_then(|s| s.normal.ok()) {
        Some(f) => {
            let rel = (f.amplitude - pc.d_p) / pc.d_p;
            verdict(
                within(f.exponent, -pc.beta, 0.05) && rel.abs() <= 0.15,
                format!(
                    "exponent {:.4} vs {:.4} ± 0.05, amplitude {:.4} vs d_p {:.4} ({:+.1}%), window [{:.4}, {:.4}]",
                    f.exponent,
                    -pc.beta,
                    f.amplitude,
                    pc.d_p,
                    100.0 * rel,
                    f.window.0,
                    f.window.1
                ),
            )
        }
        None => verdict(false, format!("normal fit unavailable: {:?}", snap.map(|s| &s.normal))),
    }
}

fn tangential_exponent(run: &BlowUpRun, target: f64, tol: f64) -> (bool, String) {
    let snap = run.analysis.fits.snapshot.as_ref();
    match snap.and_then(|s| s.tangential.ok()) {
        Some(t) => (
            within(t.fit.exponent, target, tol),
            format!(
                "p={}: {:.3} vs {target} ± {tol} on [{:.4}, {:.4}]",
                run.cfg.p, t.fit.exponent, t.fit.window.0, t.fit.window.1
            ),
        ),
        None => (false, format!("p={}: {:?}", run.cfg.p, snap.map(|s| &s.tangential))),
    }
}

fn anisotropy(run: &BlowUpRun) -> Verdict {
    let snap = run.analysis.fits.snapshot.as_ref();
    let level = snap.and_then(|s| s.level_set.ok()).map(|l| l.fit.exponent);
    let resid = snap.and_then(|s| s.aniso.ok()).map(|a| a.residual_rel);
    let pass = level.is_some_and(|e| within(e, 4.0, 1.0)) && resid.is_some_and(|r| r <= 0.35);
    verdict(
        pass,
        format!("level-set exponent {} vs 4 ± 1, aniso residual {} <= 0.35", fmt_opt(level), fmt_opt(resid)),
    )
}

fn time_rate(root: &Path) -> Verdict {
    let start = Instant::now();
    let run = match blow_up_run("ramp-1d", root) {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    let wall = start.elapsed();
    match run.analysis.fits.time_rate.ok() {
        Some(f) => verdict(
            within(f.rate.exponent, -1.0, 0.15) && f.linear.r_squared >= 0.99 && wall.as_secs() < 300,
            format!(
                "exponent {:.4} vs -1 ± 0.15, r² {:.5} >= 0.99, {:.0} s",
                f.rate.exponent,
                f.linear.r_squared,
                wall.as_secs_f64()
            ),
        ),
        None => verdict(false, format!("{:?}", run.analysis.fits.time_rate)),
    }
}

fn monitors(run: &BlowUpRun) -> Verdict {
    let Some(d) = run.analysis.report.diagnostics.as_ref() else {
        return verdict(false, "no diagnostics");
    };
    let mut pass = d.grad_growth >= 1e3;
    let mut parts = vec![format!("grad_max growth {:.2}x (need >= 1e3)", d.grad_growth)];
    for g in &d.final_decade {
        if g.name == "max_principle_sup" {
            let ok = g.growth <= 1e-8;
            pass &= ok;
            parts.push(format!("sup excess {:.1e}", g.growth));
        } else {
            let ok = g.growth < 0.1;
            pass &= ok;
            parts.push(format!("{} {:+.3}", g.name, g.growth));
        }
    }
    verdict(pass, parts.join(", "))
}

fn j_sign(run: &BlowUpRun) -> Verdict {
    let Some(d) = run.analysis.report.diagnostics.as_ref() else {
        return verdict(false, "no diagnostics");
    };
    let pc = profile_constants(run.cfg.p).expect("valid p");
    let k = d.j_ladder.as_ref().and_then(|l| l.k);
    let theta = d.theta_range.map(|r| r.1);
    let pass = k.is_some() && theta.is_some_and(|t| t <= pc.beta + 0.2);
    verdict(
        pass,
        format!(
            "k = {}, max Θ {} vs β + 0.2 = {:.3}",
            k.map_or("none".into(), |k| format!("{k:e}")),
            fmt_opt(theta),
            pc.beta + 0.2
        ),
    )
}

fn determinism(blow: &BlowUpRun, root: &Path) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    match cmd_check(&blow.dir.path) {
        Ok(s) => {
            let replay = s.gates.iter().find(|g| g.name == "fits_replay").is_some_and(|g| g.pass);
            pass &= replay;
            parts.push(format!("fits.json replay {}", if replay { "byte-identical" } else { "differs" }));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("check: {e}"));
        }
    }
    let again = root.join("p3-blowup-again");
    let same = cmd_run(&blow.cfg, &again).is_ok()
        && [SERIES, FITS].iter().all(|f| fs::read(blow.dir.file(f)).ok() == fs::read(again.join(f)).ok());
    pass &= same;
    parts.push(format!("repeat run {}", if same { "byte-identical" } else { "differs" }));

    let mut cfg = blow.cfg.clone();
    cfg.grid.nx = 129;
    cfg.grid.ny = 129;
    cfg.solver.max_steps = Some(400);
    cfg.solver.symmetry_mode = SymmetryMode::Full;
    let sym = (|| {
        let u0 = cfg.initial_field()?;
        let full = run(u0.clone(), &cfg.solver_config()?, &mut NullSink)?;
        cfg.solver.symmetry_mode = SymmetryMode::Half;
        let half = run(u0, &cfg.solver_config()?, &mut NullSink)?;
        Ok::<_, gbulab_core::Error>((
            full.final_state.field.asymmetry(),
            full.final_state.field.max_abs_diff(&half.final_state.field),
        ))
    })();
    match sym {
        Ok((asym, diff)) => {
            let ok = asym <= 1e-12 && diff <= 1e-10;
            pass &= ok;
            parts.push(format!("129² asymmetry {asym:.1e} <= 1e-12, half vs full {diff:.1e} <= 1e-10"));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("symmetry case: {e}"));
        }
    }
    verdict(pass, parts.join(", "))
}

fn main() {
    let root = tempfile::tempdir().expect("temporary directory");
    let mut results: Vec<(u32, &str, Verdict, Duration)> = Vec::new();
    let mut timed = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let wall = start.elapsed();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} {n:>2} {name}: {} ({:.1} s)", v.detail, wall.as_secs_f64());
        results.push((n, name, v, wall));
    };

    timed(1, "steady-state identity", &mut steady_state_identity);
    timed(2, "MMS convergence", &mut || {
        let start = Instant::now();
        let mut v = mms_convergence();
        if start.elapsed().as_secs() >= 300 {
            v.pass = false;
            v.detail.push_str(", over the 5 min budget");
        }
        v
    });
    timed(3, "barrier supersolution", &mut || {
        let start = Instant::now();
        let mut v = barrier_supersolution();
        if start.elapsed().as_secs() >= 30 {
            v.pass = false;
            v.detail.push_str(", over the 30 s budget");
        }
        v
    });

    let p3 = blow_up_run("p3-blowup", root.path());
    let p25 = blow_up_run("p2.5-blowup", root.path());
    let blow_up = |r: &Result<BlowUpRun, String>, f: &dyn Fn(&BlowUpRun) -> Verdict| match r {
        Ok(run) => f(run),
        Err(e) => verdict(false, format!("run failed: {e}")),
    };

    timed(4, "normal profile", &mut || {
        blow_up(&p3, &|r| {
            let mut v = normal_profile(r);
            if r.wall.as_secs() >= 1200 {
                v.pass = false;
                v.detail.push_str(", over the 20 min budget");
            }
            v
        })
    });
    timed(5, "tangential profile", &mut || {
        let a = p3.as_ref().map(|r| tangential_exponent(r, -2.0, 0.4));
        let b = p25.as_ref().map(|r| tangential_exponent(r, -4.0, 0.8));
        let wall: Duration = [&p3, &p25].iter().filter_map(|r| r.as_ref().ok()).map(|r| r.wall).sum();
        match (a, b) {
            (Ok(a), Ok(b)) => verdict(
                a.0 && b.0 && wall.as_secs() < 2400,
                format!("{}; {}; {:.0} s", a.1, b.1, wall.as_secs_f64()),
            ),
            (a, b) => verdict(false, format!("run failed: {:?} {:?}", a.err(), b.err())),
        }
    });
    timed(6, "anisotropy", &mut || blow_up(&p3, &anisotropy));
    timed(7, "time rate (1D)", &mut || time_rate(root.path()));
    timed(8, "maximum-principle monitors", &mut || blow_up(&p3, &monitors));
    timed(9, "J-sign", &mut || blow_up(&p3, &j_sign));
    timed(10, "determinism and replay", &mut || blow_up(&p3, &|r| determinism(r, root.path())));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

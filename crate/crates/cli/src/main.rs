use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gbulab_core::commands::{
    cmd_barrier, cmd_check, cmd_fit, cmd_mms, cmd_resume, cmd_run, cmd_sweep, configure_threads, preset,
    preset_text, replay_series, SweepAxis, PRESETS,
};
use gbulab_core::config::RunConfig;
use gbulab_core::Error;

const EXIT_GATE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_MMS: u8 = 4;
const EXIT_CORRUPT: u8 = 5;

#[derive(Parser)]
#[command(name = "gbulab", version, about = "Numerical laboratory for boundary gradient blow-up")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// A configuration file or a shipped preset.
#[derive(Args)]
struct Source {
    /// Configuration file.
    #[arg(required_unless_present_any = ["preset"], conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset by name (see `gbulab presets`).
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<RunConfig, Error> {
        match (&self.config, &self.preset) {
            (_, Some(name)) => preset(name),
            (Some(path), None) => RunConfig::load(path),
            (None, None) => Err(Error::Config("no configuration given".into())),
        }
    }

    fn text(&self) -> Result<String, Error> {
        match (&self.config, &self.preset) {
            (_, Some(name)) => Ok(preset_text(name)?.to_string()),
            (Some(path), None) => std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            (None, None) => Err(Error::Config("no configuration given".into())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation into a new directory, then diagnose and fit it.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory; must not hold a run already.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Continue an interrupted run directory.
    Resume { dir: PathBuf },
    /// Convergence table of the manufactured problem.
    Mms {
        #[command(flatten)]
        source: Source,
    },
    /// Replay diagnostics and fits of a run directory and evaluate its gates.
    Check {
        dir: PathBuf,
        /// Also re-run the solver and compare the time series.
        #[arg(long)]
        resimulate: bool,
    },
    /// Residual report of the calibrated barrier.
    Barrier {
        #[command(flatten)]
        source: Source,
    },
    /// Re-fit an existing run directory.
    Fit { dir: PathBuf },
    /// Run the product of parameter axes, one directory per point.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Axis `key=v1,v2,...` with a dotted configuration key; repeatable.
        #[arg(long = "set", required = true)]
        axes: Vec<String>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// List the shipped presets.
    Presets,
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::CorruptSnapshot { .. } => EXIT_CORRUPT,
        Error::Numeric { .. } | Error::Failed { .. } => EXIT_NUMERIC,
        _ => EXIT_GATE,
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn check(dir: &Path, resimulate: bool) -> Result<u8, Error> {
    let s = cmd_check(dir)?;
    if s.regenerated {
        println!("fits.json was missing and has been regenerated");
    }
    let mut ok = s.passed;
    for g in &s.gates {
        println!("{} {:<28} {}", if g.pass { "PASS" } else { "FAIL" }, g.name, g.detail);
    }
    if resimulate {
        let same = replay_series(dir)?;
        println!("{} {:<28} {}", if same { "PASS" } else { "FAIL" }, "series_replay", if same {
            "byte-identical"
        } else {
            "re-simulated series differs"
        });
        ok &= same;
    }
    Ok(if ok { 0 } else { EXIT_GATE })
}

fn execute(cmd: Command) -> Result<u8, Error> {
    configure_threads()?;
    match cmd {
        Command::Run { source, out } => {
            let s = cmd_run(&source.load()?, &out)?;
            print_json(&s)?;
            Ok(0)
        }
        Command::Resume { dir } => {
            print_json(&cmd_resume(&dir)?)?;
            Ok(0)
        }
        Command::Mms { source } => {
            let t = cmd_mms(&source.load()?)?;
            println!("{:>6} {:>12} {:>12} {:>8} {:>7}", "n", "h", "err_inf", "steps", "order");
            for r in &t.rows {
                let order = r.order.map_or("-".to_string(), |o| format!("{o:.3}"));
                println!("{:>6} {:>12.4e} {:>12.4e} {:>8} {:>7}", r.n, r.h, r.err_inf, r.steps, order);
            }
            if !t.gated {
                println!("alpha = {} is at or below (p-1)/(p-2): order reported, not gated", t.alpha);
                return Ok(0);
            }
            println!("finest order {:.3} (minimum {})", t.finest_order, source.load()?.mms.map_or(1.5, |m| m.min_order));
            Ok(if t.passed { 0 } else { EXIT_MMS })
        }
        Command::Check { dir, resimulate } => check(&dir, resimulate),
        Command::Barrier { source } => {
            print_json(&cmd_barrier(&source.load()?)?)?;
            Ok(0)
        }
        Command::Fit { dir } => {
            print_json(&cmd_fit(&dir)?.fits)?;
            Ok(0)
        }
        Command::Sweep { source, axes, out } => {
            let axes = axes.iter().map(|a| a.parse()).collect::<Result<Vec<SweepAxis>, _>>()?;
            let entries = cmd_sweep(&source.text()?, &axes, &out)?;
            print_json(&entries)?;
            Ok(if entries.iter().all(|e| e.error.is_none()) { 0 } else { EXIT_GATE })
        }
        Command::Presets => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

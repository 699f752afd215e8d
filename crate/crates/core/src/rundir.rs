//! Run directories: `meta.json`, `series.csv` and `snapshots/NNNN.bin`.
//!
//! `meta.json` is rewritten at every snapshot, so an interrupted run can be
//! resumed from its last snapshot.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{read_snapshot, write_snapshot, ScalarField};
use crate::solver::{Progress, SeriesRecord, SimulationState, SnapshotKind, SnapshotRef, SnapshotSink};

pub const META: &str = "meta.json";
pub const SERIES: &str = "series.csv";
pub const SNAPSHOTS: &str = "snapshots";
pub const SERIES_HEADER: &str = "t,grad_max,uy_origin,dt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Finished,
    Failed,
}

/// Snapshot index entry with what a resume needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    #[serde(flatten)]
    pub snap: SnapshotRef,
    pub progress: Progress,
    /// Rows of `series.csv` written when the snapshot was taken.
    pub series_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub reason: String,
    pub t_stop: f64,
    pub steps: u64,
    pub grad_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config: RunConfig,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub snapshots: Vec<SnapshotEntry>,
}

pub fn snapshot_name(index: usize) -> String {
    format!("{index:04}.bin")
}

fn run_dir_err(path: &Path, reason: impl std::fmt::Display) -> Error {
    Error::RunDir { path: path.to_path_buf(), reason: reason.to_string() }
}

/// Writes `contents` through a temporary file so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn series_line(r: &SeriesRecord) -> String {
    format!("{},{},{},{}", r.t, r.grad_max, r.uy_origin, r.dt)
}

pub fn series_csv(series: &[SeriesRecord]) -> String {
    let mut s = String::from(SERIES_HEADER);
    s.push('\n');
    for r in series {
        s.push_str(&series_line(r));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Creates a fresh directory; refuses to reuse one holding a run.
    pub fn create(path: &Path) -> Result<Self> {
        if path.join(META).exists() {
            return Err(run_dir_err(path, "already holds a run; use --resume or pick another directory"));
        }
        fs::create_dir_all(path.join(SNAPSHOTS))?;
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn open(path: &Path) -> Result<Self> {
        if !path.join(META).is_file() {
            return Err(run_dir_err(path, "no meta.json"));
        }
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn snapshot_path(&self, index: usize) -> PathBuf {
        self.path.join(SNAPSHOTS).join(snapshot_name(index))
    }

    pub fn read_meta(&self) -> Result<Meta> {
        let p = self.file(META);
        let text = fs::read_to_string(&p)?;
        serde_json::from_str(&text).map_err(|e| run_dir_err(&p, e))
    }

    pub fn write_meta(&self, meta: &Meta) -> Result<()> {
        let mut text = serde_json::to_string_pretty(meta)?;
        text.push('\n');
        write_atomic(&self.file(META), text.as_bytes())
    }

    pub fn read_series(&self) -> Result<Vec<SeriesRecord>> {
        let p = self.file(SERIES);
        let f = File::open(&p)?;
        let mut out = Vec::new();
        for (k, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if k == 0 {
                if line != SERIES_HEADER {
                    return Err(run_dir_err(&p, format!("unexpected header {line:?}")));
                }
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| run_dir_err(&p, format!("line {}: {e}", k + 1)))?;
            if v.len() != 4 {
                return Err(run_dir_err(&p, format!("line {}: expected 4 columns", k + 1)));
            }
            out.push(SeriesRecord { t: v[0], grad_max: v[1], uy_origin: v[2], dt: v[3] });
        }
        Ok(out)
    }

    pub fn write_series(&self, series: &[SeriesRecord]) -> Result<()> {
        write_atomic(&self.file(SERIES), series_csv(series).as_bytes())
    }

    /// Reads one snapshot; failures name the file.
    pub fn read_snapshot(&self, index: usize) -> Result<(ScalarField, f64)> {
        read_snapshot(&self.snapshot_path(index))
    }

    /// Loads every snapshot of the given kinds, in index order.
    pub fn load_snapshots(
        &self,
        meta: &Meta,
        keep: impl Fn(SnapshotKind) -> bool,
    ) -> Result<Vec<(SnapshotRef, ScalarField)>> {
        let mut out = Vec::new();
        for e in &meta.snapshots {
            if !keep(e.snap.kind) {
                continue;
            }
            let path = self.snapshot_path(e.snap.index);
            let (f, t) = read_snapshot(&path)?;
            if t != e.snap.t {
                return Err(Error::CorruptSnapshot {
                    path,
                    reason: format!("time {t} disagrees with index entry {}", e.snap.t),
                });
            }
            out.push((e.snap, f));
        }
        Ok(out)
    }

    /// Checks that every indexed snapshot parses.
    pub fn verify_snapshots(&self, meta: &Meta) -> Result<()> {
        for e in &meta.snapshots {
            self.read_snapshot(e.snap.index)?;
        }
        Ok(())
    }
}

/// Sink that streams the series and persists snapshots into a run directory.
pub struct DirSink {
    dir: RunDir,
    meta: Meta,
    series: BufWriter<File>,
    series_len: usize,
}

impl DirSink {
    /// Starts a fresh series file.
    pub fn new(dir: RunDir, config: RunConfig) -> Result<Self> {
        let mut series = BufWriter::new(File::create(dir.file(SERIES))?);
        writeln!(series, "{SERIES_HEADER}")?;
        let meta = Meta { config, status: RunStatus::Running, outcome: None, failure: None, snapshots: Vec::new() };
        Ok(Self { dir, meta, series, series_len: 0 })
    }

    /// Reopens a directory for resumption from snapshot `entry`: later
    /// snapshots and series rows are dropped.
    pub fn reopen(dir: RunDir, mut meta: Meta, entry: &SnapshotEntry) -> Result<Self> {
        let rows = dir.read_series()?;
        if rows.len() < entry.series_len {
            return Err(run_dir_err(&dir.file(SERIES), "shorter than the snapshot index records"));
        }
        for e in meta.snapshots.iter().filter(|e| e.snap.index > entry.snap.index) {
            let _ = fs::remove_file(dir.snapshot_path(e.snap.index));
        }
        meta.snapshots.retain(|e| e.snap.index <= entry.snap.index);
        meta.status = RunStatus::Running;
        meta.outcome = None;
        meta.failure = None;
        dir.write_series(&rows[..entry.series_len])?;
        let f = fs::OpenOptions::new().append(true).open(dir.file(SERIES))?;
        Ok(Self { dir, meta, series: BufWriter::new(f), series_len: entry.series_len })
    }

    pub fn dir(&self) -> &RunDir {
        &self.dir
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    /// Records the terminal status and flushes everything.
    pub fn finish(mut self, status: RunStatus, outcome: Option<Outcome>, failure: Option<String>) -> Result<Meta> {
        self.series.flush()?;
        self.meta.status = status;
        self.meta.outcome = outcome;
        self.meta.failure = failure;
        self.dir.write_meta(&self.meta)?;
        Ok(self.meta)
    }
}

impl SnapshotSink for DirSink {
    fn save(&mut self, snap: &SnapshotRef, state: &SimulationState, progress: &Progress) -> Result<()> {
        write_snapshot(&state.field, state.t, &self.dir.snapshot_path(snap.index))?;
        self.series.flush()?;
        self.meta.snapshots.push(SnapshotEntry { snap: *snap, progress: *progress, series_len: self.series_len });
        self.dir.write_meta(&self.meta)
    }

    fn record(&mut self, rec: &SeriesRecord) -> Result<()> {
        writeln!(self.series, "{}", series_line(rec))?;
        self.series_len += 1;
        Ok(())
    }
}

/// Last snapshot a run can resume from.
pub fn resume_point(meta: &Meta) -> Option<&SnapshotEntry> {
    meta.snapshots.iter().rev().find(|e| e.snap.kind != SnapshotKind::Failure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{resume, run};

    fn config() -> RunConfig {
        RunConfig::from_toml(
            r#"
p = 3.0
[domain]
lx = 0.5
ly = 0.5
[grid]
nx = 17
ny = 17
[initial_data]
family = "cap"
amplitude = 0.8
width = 0.3
[solver]
t_max = 0.02
stop_grad_norm = 1000.0
snapshot_stride = 40
"#,
        )
        .unwrap()
    }

    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let cfg = config();
        let scfg = cfg.solver_config().unwrap();
        let u0 = cfg.initial_field().unwrap();

        let tmp = tempfile::tempdir().unwrap();
        let a = RunDir::create(&tmp.path().join("a")).unwrap();
        let mut sink = DirSink::new(a.clone(), cfg.clone()).unwrap();
        let full = run(u0.clone(), &scfg, &mut sink).unwrap();
        sink.finish(RunStatus::Finished, None, None).unwrap();

        let b = RunDir::create(&tmp.path().join("b")).unwrap();
        let mut sink = DirSink::new(b.clone(), cfg.clone()).unwrap();
        let mut partial = scfg.clone();
        partial.max_steps = Some(130);
        run(u0, &partial, &mut sink).unwrap();
        let meta = sink.finish(RunStatus::Running, None, None).unwrap();
        let entry = *resume_point(&meta).unwrap();
        assert_eq!(entry.snap.step, 120);

        let (field, t) = b.read_snapshot(entry.snap.index).unwrap();
        let mut state = SimulationState::new(field, t);
        state.step = entry.snap.step;
        let mut sink = DirSink::reopen(b.clone(), meta, &entry).unwrap();
        let rest = resume(state, entry.progress, &scfg, &mut sink).unwrap();
        sink.finish(RunStatus::Finished, None, None).unwrap();

        assert_eq!(rest.final_state.field, full.final_state.field);
        assert_eq!(rest.t_stop, full.t_stop);
        assert_eq!(fs::read(a.file(SERIES)).unwrap(), fs::read(b.file(SERIES)).unwrap());
        let (ma, mb) = (a.read_meta().unwrap(), b.read_meta().unwrap());
        assert_eq!(ma.snapshots, mb.snapshots);
        assert_eq!(a.read_series().unwrap(), full.series);
    }

    #[test]
    fn truncated_snapshot_is_reported_by_name() {
        let cfg = config();
        let tmp = tempfile::tempdir().unwrap();
        let d = RunDir::create(tmp.path()).unwrap();
        let mut sink = DirSink::new(d.clone(), cfg.clone()).unwrap();
        run(cfg.initial_field().unwrap(), &cfg.solver_config().unwrap(), &mut sink).unwrap();
        let meta = sink.finish(RunStatus::Finished, None, None).unwrap();
        let p = d.snapshot_path(1);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        match d.verify_snapshots(&meta) {
            Err(Error::CorruptSnapshot { path, .. }) => assert_eq!(path, p),
            other => panic!("{other:?}"),
        }
        assert!(RunDir::create(tmp.path()).is_err());
    }
}

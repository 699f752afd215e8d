//! Explicit adaptive integration of `u_t = Δu + |∇u|^p + f`.
//!
//! Diffusion uses the five-point stencil. The transport term is upwinded:
//! second-order ENO one-sided slopes feed the Godunov flux of the concave
//! Hamiltonian `-|q|^p`, which reduces per axis to `max(-D⁻u, D⁺u, 0)`.
//! Time stepping is Heun's method (SSP-RK2) with a step bounded by both the
//! diffusive and the gradient-dependent transport limits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient_norm_max, one_sided, Grid2D, ScalarField};
use crate::initial_data::Profile1D;
use crate::profile_math::{
    manufactured_solution, manufactured_solution_1d, profile_constants, ManufacturedParams,
    ProfileConstants,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryMode {
    #[default]
    Full,
    /// Integrate `x >= 0` only with the reflective condition `u_x(0, y) = 0`.
    Half,
}

/// Source term added to the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Forcing {
    #[default]
    None,
    Manufactured(ManufacturedParams),
}

/// How boundary nodes are set after every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Homogeneous Dirichlet.
    #[default]
    Zero,
    /// Boundary values of the initial field held fixed.
    Frozen,
    /// Boundary values of the manufactured solution at the stage time.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub p: f64,
    pub cfl_safety: f64,
    pub dt_floor: f64,
    pub stop_grad_norm: f64,
    pub t_max: f64,
    pub snapshot_stride: u64,
    pub series_stride: u64,
    /// Snapshot each time `grad_max` doubles relative to its initial value.
    pub cascade: bool,
    pub forcing: Forcing,
    pub boundary: BoundaryMode,
    pub symmetry_mode: SymmetryMode,
    /// Stop after this many steps in one call (resumable).
    pub max_steps: Option<u64>,
}

impl SolverConfig {
    pub fn new(p: f64, t_max: f64, stop_grad_norm: f64) -> Self {
        Self {
            p,
            cfl_safety: 0.4,
            dt_floor: 1e-14,
            stop_grad_norm,
            t_max,
            snapshot_stride: 0,
            series_stride: 1,
            cascade: true,
            forcing: Forcing::None,
            boundary: BoundaryMode::Zero,
            symmetry_mode: SymmetryMode::Full,
            max_steps: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        profile_constants(self.p)?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1), got {}", self.cfl_safety));
        }
        if !(self.dt_floor > 0.0) {
            return bad(format!("dt_floor must be positive, got {}", self.dt_floor));
        }
        if !(self.stop_grad_norm > 0.0) {
            return bad(format!("stop_grad_norm must be positive, got {}", self.stop_grad_norm));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be positive and finite, got {}", self.t_max));
        }
        if self.series_stride == 0 {
            return bad("series_stride must be at least 1".into());
        }
        if self.boundary == BoundaryMode::Exact && self.forcing == Forcing::None {
            return bad("exact boundary data needs a manufactured forcing".into());
        }
        Ok(())
    }

    /// Resolution-bound stopping threshold `50 / min(hx, hy)^beta`.
    pub fn default_stop(p: f64, g: &Grid2D) -> Result<f64> {
        let pc = profile_constants(p)?;
        Ok(50.0 / g.hx.min(g.hy).powf(pc.beta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub field: ScalarField,
    pub t: f64,
    pub step: u64,
    pub grad_max: f64,
    pub uy_origin: f64,
    pub dt_last: f64,
}

impl SimulationState {
    pub fn new(field: ScalarField, t: f64) -> Self {
        let (grad_max, uy_origin) = gradient_norm_max(&field);
        Self { field, t, step: 0, grad_max, uy_origin, dt_last: 0.0 }
    }

    pub fn refresh(&mut self) {
        let (g, uy) = gradient_norm_max(&self.field);
        self.grad_max = g;
        self.uy_origin = uy;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    BlowUpDetected,
    HorizonReached,
    DtUnderflow,
    StepBudget,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::BlowUpDetected => "blow_up_detected",
            StopReason::HorizonReached => "horizon_reached",
            StopReason::DtUnderflow => "dt_underflow",
            StopReason::StepBudget => "step_budget",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub t: f64,
    pub grad_max: f64,
    pub uy_origin: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    Initial,
    Periodic,
    Cascade,
    Final,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub index: usize,
    pub step: u64,
    pub t: f64,
    pub grad_max: f64,
    pub kind: SnapshotKind,
}

/// Receives persisted states and series records. `progress` is the
/// bookkeeping a run resumed from this snapshot needs.
pub trait SnapshotSink {
    fn save(&mut self, snap: &SnapshotRef, state: &SimulationState, progress: &Progress) -> Result<()>;

    fn record(&mut self, _rec: &SeriesRecord) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl SnapshotSink for NullSink {
    fn save(&mut self, _: &SnapshotRef, _: &SimulationState, _: &Progress) -> Result<()> {
        Ok(())
    }
}

/// Keeps every snapshot in memory.
#[derive(Default)]
pub struct MemorySink {
    pub snaps: Vec<(SnapshotRef, ScalarField)>,
}

impl SnapshotSink for MemorySink {
    fn save(&mut self, snap: &SnapshotRef, state: &SimulationState, _: &Progress) -> Result<()> {
        self.snaps.push((*snap, state.field.clone()));
        Ok(())
    }
}

/// Bookkeeping that a resumed run needs besides the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// `grad_max` of the initial datum; cascade thresholds are its doublings.
    pub grad0: f64,
    pub cascade_level: u32,
    pub next_snapshot: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reason: StopReason,
    pub t_stop: f64,
    pub series: Vec<SeriesRecord>,
    pub snapshots: Vec<SnapshotRef>,
    pub progress: Progress,
    pub final_state: SimulationState,
}

#[inline(always)]
fn fmin(a: f64, b: f64) -> f64 {
    if a < b {
        a
    } else {
        b
    }
}

#[inline(always)]
fn fmax(a: f64, b: f64) -> f64 {
    if a > b {
        a
    } else {
        b
    }
}

#[inline(always)]
fn minmod(a: f64, b: f64) -> f64 {
    let m = fmin(a.abs(), b.abs());
    if a * b > 0.0 {
        m.copysign(a)
    } else {
        0.0
    }
}

/// Godunov magnitude along one axis from the five values `u[-2..=2]`
/// (`None` where the stencil leaves the grid). Symmetric under reversal of
/// the stencil, so mirrored nodes get identical values.
#[inline]
fn upwind_slope(um2: Option<f64>, um1: f64, c: f64, up1: f64, up2: Option<f64>, ih: f64) -> f64 {
    let d2c = (up1 + um1) - 2.0 * c;
    let d2m = um2.map_or(d2c, |v| (c + v) - 2.0 * um1);
    let d2p = up2.map_or(d2c, |v| (v + c) - 2.0 * up1);
    let back = ((c - um1) + 0.5 * minmod(d2m, d2c)) * ih;
    let fwd = ((up1 - c) - 0.5 * minmod(d2c, d2p)) * ih;
    fmax(fmax(-back, fwd), 0.0)
}

/// [`upwind_slope`] with the full stencil and the central second difference
/// already at hand.
#[inline(always)]
fn upwind_core(um2: f64, um1: f64, c: f64, up1: f64, up2: f64, d2c: f64, ih: f64) -> f64 {
    let d2m = (c + um2) - 2.0 * um1;
    let d2p = (up2 + c) - 2.0 * up1;
    let back = ((c - um1) + 0.5 * minmod(d2m, d2c)) * ih;
    let fwd = ((up1 - c) - 0.5 * minmod(d2c, d2p)) * ih;
    fmax(fmax(-back, fwd), 0.0)
}

#[inline]
fn hamiltonian(q2: f64, p: f64) -> f64 {
    if p == 3.0 {
        q2 * q2.sqrt()
    } else {
        q2.powf(0.5 * p)
    }
}

#[inline]
fn inv_pow_beta(w: f64, beta: f64) -> f64 {
    if beta == 0.5 {
        1.0 / w.sqrt()
    } else {
        w.powf(-beta)
    }
}

/// Per-column terms of the manufactured forcing at a fixed time.
struct ForcingColumns {
    s: Vec<f64>,
    s_x: Vec<f64>,
    s_xx: Vec<f64>,
    s_t: f64,
    s_mb: Vec<f64>,
    s_mb1: Vec<f64>,
    singular: bool,
}

fn forcing_columns(mp: &ManufacturedParams, pc: &ProfileConstants, g: &Grid2D, t: f64) -> ForcingColumns {
    let a = mp.alpha;
    let tau = mp.horizon - t;
    let n = g.nx;
    let mut fc = ForcingColumns {
        s: vec![0.0; n],
        s_x: vec![0.0; n],
        s_xx: vec![0.0; n],
        s_t: -a * tau.powf(a - 1.0),
        s_mb: vec![0.0; n],
        s_mb1: vec![0.0; n],
        singular: false,
    };
    for i in 0..n {
        let x = g.x(i);
        let ax = x.abs();
        let s = ax.powf(2.0 * a) + tau.powf(a);
        fc.s[i] = s;
        fc.s_x[i] = if ax > 0.0 { 2.0 * a * ax.powf(2.0 * a - 1.0) * x.signum() } else { 0.0 };
        fc.s_xx[i] = if 2.0 * a - 2.0 > 0.0 {
            2.0 * a * (2.0 * a - 1.0) * ax.powf(2.0 * a - 2.0)
        } else {
            2.0 * a * (2.0 * a - 1.0)
        };
        if s > 0.0 {
            fc.s_mb[i] = inv_pow_beta(s, pc.beta);
            fc.s_mb1[i] = fc.s_mb[i] / s;
        } else {
            fc.singular = true;
        }
    }
    fc
}

#[inline]
fn forcing_at(fc: &ForcingColumns, pc: &ProfileConstants, i: usize, y: f64) -> f64 {
    let s = fc.s[i];
    let w = s + y;
    let wb = inv_pow_beta(w, pc.beta);
    let u_y = pc.d_p * wb;
    let u_yy = -pc.beta * u_y / w;
    let u_s = pc.d_p * (wb - fc.s_mb[i]);
    let u_ss = -pc.beta * pc.d_p * (wb / w - fc.s_mb1[i]);
    let u_x = u_s * fc.s_x[i];
    let u_xx = u_ss * fc.s_x[i] * fc.s_x[i] + u_s * fc.s_xx[i];
    let u_t = u_s * fc.s_t;
    u_t - u_xx - u_yy - hamiltonian(u_x * u_x + u_y * u_y, pc.p)
}

/// Reusable scratch space for one grid.
pub struct Integrator {
    pub grid: Grid2D,
    pub pc: ProfileConstants,
    pub cfg: SolverConfig,
    boundary0: Vec<f64>,
    rhs: Vec<f64>,
    stage: Vec<f64>,
    forcing: Vec<f64>,
}

/// Result of one attempted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepStatus {
    Advanced { dt: f64 },
    DtUnderflow { dt: f64 },
}

impl Integrator {
    pub fn new(grid: Grid2D, cfg: &SolverConfig, u0: &ScalarField) -> Result<Self> {
        cfg.validate()?;
        if u0.grid != grid {
            return Err(Error::Domain("initial field lives on a different grid".into()));
        }
        let pc = profile_constants(cfg.p)?;
        let n = grid.len();
        Ok(Self {
            grid,
            pc,
            cfg: cfg.clone(),
            boundary0: u0.values.clone(),
            rhs: vec![0.0; n],
            stage: vec![0.0; n],
            forcing: vec![0.0; n],
        })
    }

    fn first_column(&self) -> usize {
        match self.cfg.symmetry_mode {
            SymmetryMode::Full => 1,
            SymmetryMode::Half => self.grid.i0(),
        }
    }

    fn fill_forcing(&mut self, t: f64) -> Result<()> {
        let Forcing::Manufactured(mp) = self.cfg.forcing else {
            return Ok(());
        };
        let g = self.grid;
        let pc = self.pc;
        let fc = forcing_columns(&mp, &pc, &g, t);
        let nx = g.nx;
        if fc.singular {
            for j in 0..g.ny {
                for i in 0..nx {
                    self.forcing[j * nx + i] =
                        manufactured_solution(&mp, &pc, g.x(i), g.y(j), t)?.forcing;
                }
            }
            return Ok(());
        }
        self.forcing.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            let y = g.y(j);
            for (i, v) in row.iter_mut().enumerate() {
                *v = forcing_at(&fc, &pc, i, y);
            }
        });
        Ok(())
    }

    /// Writes `Δu + H(∇u) + f` into `out` on the computed interior nodes and
    /// returns the largest upwind gradient magnitude.
    fn eval_rhs(&self, u: &[f64], out: &mut [f64]) -> f64 {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (ihx, ihy) = (1.0 / g.hx, 1.0 / g.hy);
        let (ihx2, ihy2) = (ihx * ihx, ihy * ihy);
        let p = self.pc.p;
        let forced = self.cfg.forcing != Forcing::None;
        let f = &self.forcing;
        let i_lo = self.first_column();
        out.par_chunks_mut(nx)
            .enumerate()
            .filter(|(j, _)| *j > 0 && *j < ny - 1)
            .map(|(j, row)| {
                let k0 = j * nx;
                let mut qmax: f64 = 0.0;
                let node = |i: usize, qx: f64, qy: f64, row: &mut [f64]| -> f64 {
                    let k = k0 + i;
                    let c = u[k];
                    let q2 = qx * qx + qy * qy;
                    let lap = ((u[k + 1] + u[k - 1]) - 2.0 * c) * ihx2
                        + ((u[k + nx] + u[k - nx]) - 2.0 * c) * ihy2;
                    let mut v = lap + hamiltonian(q2, p);
                    if forced {
                        v += f[k];
                    }
                    row[i] = v;
                    q2
                };
                let edge_slopes = |i: usize| {
                    let k = k0 + i;
                    (
                        upwind_slope(
                            (i >= 2).then(|| u[k - 2]),
                            u[k - 1],
                            u[k],
                            u[k + 1],
                            (i + 2 < nx).then(|| u[k + 2]),
                            ihx,
                        ),
                        upwind_slope(
                            (j >= 2).then(|| u[k - 2 * nx]),
                            u[k - nx],
                            u[k],
                            u[k + nx],
                            (j + 2 < ny).then(|| u[k + 2 * nx]),
                            ihy,
                        ),
                    )
                };
                if j < 2 || j + 2 >= ny {
                    for i in i_lo..nx - 1 {
                        let (qx, qy) = edge_slopes(i);
                        qmax = qmax.max(node(i, qx, qy, row));
                    }
                    return qmax;
                }
                let lo = i_lo.max(2);
                let hi = nx - 2;
                for i in i_lo..lo {
                    let (qx, qy) = edge_slopes(i);
                    qmax = qmax.max(node(i, qx, qy, row));
                }
                let r = &u[k0..k0 + nx];
                let rs = &u[k0 - nx..k0];
                let rss = &u[k0 - 2 * nx..k0 - nx];
                let rn = &u[k0 + nx..k0 + 2 * nx];
                let rnn = &u[k0 + 2 * nx..k0 + 3 * nx];
                let m = hi - lo;
                let cc = &r[lo..hi];
                let ww = &r[lo - 1..hi - 1];
                let www = &r[lo - 2..hi - 2];
                let ee = &r[lo + 1..hi + 1];
                let eee = &r[lo + 2..hi + 2];
                let ss = &rs[lo..hi];
                let sss = &rss[lo..hi];
                let nn = &rn[lo..hi];
                let nnn = &rnn[lo..hi];
                let ff = if forced { &f[k0 + lo..k0 + hi] } else { cc };
                let oo = &mut row[lo..hi];
                let (cc, ww, www, ee, eee) = (&cc[..m], &ww[..m], &www[..m], &ee[..m], &eee[..m]);
                let (ss, sss, nn, nnn, ff) = (&ss[..m], &sss[..m], &nn[..m], &nnn[..m], &ff[..m]);
                let oo = &mut oo[..m];
                for t in 0..m {
                    let c = cc[t];
                    let (w, e) = (ww[t], ee[t]);
                    let (s, n) = (ss[t], nn[t]);
                    let d2x = (e + w) - 2.0 * c;
                    let d2y = (n + s) - 2.0 * c;
                    let qx = upwind_core(www[t], w, c, e, eee[t], d2x, ihx);
                    let qy = upwind_core(sss[t], s, c, n, nnn[t], d2y, ihy);
                    let q2 = qx * qx + qy * qy;
                    qmax = fmax(qmax, q2);
                    let mut v = d2x * ihx2 + d2y * ihy2 + hamiltonian(q2, p);
                    if forced {
                        v += ff[t];
                    }
                    oo[t] = v;
                }
                for i in hi..nx - 1 {
                    let (qx, qy) = edge_slopes(i);
                    qmax = qmax.max(node(i, qx, qy, row));
                }
                qmax
            })
            .reduce(|| 0.0, f64::max)
            .sqrt()
    }

    fn apply_boundary(&self, u: &mut [f64], t: f64) -> Result<()> {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let pc = self.pc;
        let exact = match (self.cfg.boundary, self.cfg.forcing) {
            (BoundaryMode::Exact, Forcing::Manufactured(mp)) => {
                Some((mp, forcing_columns(&mp, &pc, &g, t)))
            }
            _ => None,
        };
        let set = |u: &mut [f64], i: usize, j: usize| -> Result<()> {
            let k = j * nx + i;
            u[k] = match (&exact, self.cfg.boundary) {
                (Some((mp, fc)), _) => {
                    if fc.s[i] > 0.0 {
                        let w = fc.s[i] + g.y(j);
                        pc.c_p * (w * inv_pow_beta(w, pc.beta) - fc.s[i] * fc.s_mb[i])
                    } else {
                        manufactured_solution(mp, &pc, g.x(i), g.y(j), t)?.u
                    }
                }
                (None, BoundaryMode::Frozen) => self.boundary0[k],
                (None, _) => 0.0,
            };
            Ok(())
        };
        for i in 0..nx {
            set(u, i, 0)?;
            set(u, i, ny - 1)?;
        }
        for j in 1..ny - 1 {
            set(u, 0, j)?;
            set(u, nx - 1, j)?;
        }
        Ok(())
    }

    fn mirror_half(&self, u: &mut [f64]) {
        if self.cfg.symmetry_mode != SymmetryMode::Half {
            return;
        }
        let g = self.grid;
        let nx = g.nx;
        u.par_chunks_mut(nx).for_each(|row| {
            for i in 0..g.i0() {
                row[i] = row[nx - 1 - i];
            }
        });
    }

    fn time_step(&self, gmax: f64) -> f64 {
        let g = self.grid;
        let p = self.pc.p;
        let diff = 2.0 / (g.hx * g.hx) + 2.0 / (g.hy * g.hy);
        let adv = p * gmax.powf(p - 1.0) * (1.0 / g.hx + 1.0 / g.hy);
        self.cfg.cfl_safety / (diff + adv)
    }

    fn first_nonfinite(&self, u: &[f64]) -> Option<(usize, usize, f64)> {
        u.iter()
            .position(|v| !v.is_finite())
            .map(|k| (k % self.grid.nx, k / self.grid.nx, u[k]))
    }

    /// One Heun step. The state is left untouched on underflow or failure.
    pub fn step(&mut self, state: &mut SimulationState) -> Result<StepStatus> {
        let t = state.t;
        let nx = self.grid.nx;
        let i_lo = self.first_column();
        let ny = self.grid.ny;

        self.fill_forcing(t)?;
        let mut rhs = std::mem::take(&mut self.rhs);
        let q1 = self.eval_rhs(&state.field.values, &mut rhs);
        let mut dt = self.time_step(q1.max(state.grad_max));
        if dt < self.cfg.dt_floor {
            self.rhs = rhs;
            return Ok(StepStatus::DtUnderflow { dt });
        }
        if t + dt > self.cfg.t_max {
            dt = self.cfg.t_max - t;
        }

        let mut stage = std::mem::take(&mut self.stage);
        stage.copy_from_slice(&state.field.values);
        for j in 1..ny - 1 {
            for i in i_lo..nx - 1 {
                let k = j * nx + i;
                stage[k] += dt * rhs[k];
            }
        }
        self.mirror_half(&mut stage);
        self.apply_boundary(&mut stage, t + dt)?;

        self.fill_forcing(t + dt)?;
        self.eval_rhs(&stage, &mut rhs);
        let u = &state.field.values;
        for j in 1..ny - 1 {
            for i in i_lo..nx - 1 {
                let k = j * nx + i;
                stage[k] = 0.5 * (u[k] + (stage[k] + dt * rhs[k]));
            }
        }
        self.mirror_half(&mut stage);
        self.apply_boundary(&mut stage, t + dt)?;
        self.rhs = rhs;

        if let Some((i, j, v)) = self.first_nonfinite(&stage) {
            self.stage = stage;
            return Err(Error::Numeric {
                i,
                j,
                msg: format!("update produced {v} at t = {t}, dt = {dt}"),
            });
        }
        std::mem::swap(&mut state.field.values, &mut stage);
        self.stage = stage;
        state.t = if t + dt >= self.cfg.t_max { self.cfg.t_max } else { t + dt };
        state.step += 1;
        state.dt_last = dt;
        state.refresh();
        Ok(StepStatus::Advanced { dt })
    }
}

fn record(state: &SimulationState) -> SeriesRecord {
    SeriesRecord { t: state.t, grad_max: state.grad_max, uy_origin: state.uy_origin, dt: state.dt_last }
}

/// Runs from `u0` at time zero.
pub fn run(u0: ScalarField, cfg: &SolverConfig, sink: &mut dyn SnapshotSink) -> Result<RunOutcome> {
    run_from(u0, 0.0, cfg, sink)
}

/// Runs from `u0` at time `t0`.
pub fn run_from(
    u0: ScalarField,
    t0: f64,
    cfg: &SolverConfig,
    sink: &mut dyn SnapshotSink,
) -> Result<RunOutcome> {
    u0.check_finite()?;
    let state = SimulationState::new(u0, t0);
    let progress = Progress { grad0: state.grad_max, cascade_level: 0, next_snapshot: 0 };
    drive(state, progress, cfg, sink, true)
}

/// Continues a run from a persisted state. Produces exactly the trajectory
/// the uninterrupted run would have produced.
pub fn resume(
    mut state: SimulationState,
    progress: Progress,
    cfg: &SolverConfig,
    sink: &mut dyn SnapshotSink,
) -> Result<RunOutcome> {
    state.field.check_finite()?;
    state.refresh();
    drive(state, progress, cfg, sink, false)
}

fn drive(
    mut state: SimulationState,
    mut progress: Progress,
    cfg: &SolverConfig,
    sink: &mut dyn SnapshotSink,
    fresh: bool,
) -> Result<RunOutcome> {
    let mut integ = Integrator::new(state.field.grid, cfg, &state.field)?;
    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    fn save(
        sink: &mut dyn SnapshotSink,
        kind: SnapshotKind,
        state: &SimulationState,
        progress: &mut Progress,
        snapshots: &mut Vec<SnapshotRef>,
    ) -> Result<()> {
        let snap = SnapshotRef {
            index: progress.next_snapshot,
            step: state.step,
            t: state.t,
            grad_max: state.grad_max,
            kind,
        };
        progress.next_snapshot += 1;
        sink.save(&snap, state, progress)?;
        snapshots.push(snap);
        Ok(())
    }
    let push = |sink: &mut dyn SnapshotSink, series: &mut Vec<SeriesRecord>, state: &SimulationState| {
        let rec = record(state);
        series.push(rec);
        sink.record(&rec)
    };
    if fresh {
        push(sink, &mut series, &state)?;
        save(sink, SnapshotKind::Initial, &state, &mut progress, &mut snapshots)?;
    }
    let mut taken = 0u64;
    let reason = loop {
        if state.grad_max >= cfg.stop_grad_norm {
            break StopReason::BlowUpDetected;
        }
        if state.t >= cfg.t_max {
            break StopReason::HorizonReached;
        }
        if cfg.max_steps.is_some_and(|m| taken >= m) {
            break StopReason::StepBudget;
        }
        match integ.step(&mut state) {
            Ok(StepStatus::Advanced { .. }) => {}
            Ok(StepStatus::DtUnderflow { .. }) => break StopReason::DtUnderflow,
            Err(e) => {
                save(sink, SnapshotKind::Failure, &state, &mut progress, &mut snapshots)?;
                return Err(e);
            }
        }
        taken += 1;
        let terminal = state.grad_max >= cfg.stop_grad_norm || state.t >= cfg.t_max;
        if state.step % cfg.series_stride == 0 || terminal {
            push(sink, &mut series, &state)?;
        }
        if terminal {
            continue;
        }
        let mut cascade = false;
        if cfg.cascade && progress.grad0 > 0.0 {
            while state.grad_max >= progress.grad0 * 2f64.powi(progress.cascade_level as i32 + 1) {
                progress.cascade_level += 1;
                cascade = true;
            }
        }
        if cascade {
            save(sink, SnapshotKind::Cascade, &state, &mut progress, &mut snapshots)?;
        } else if cfg.snapshot_stride > 0 && state.step % cfg.snapshot_stride == 0 {
            save(sink, SnapshotKind::Periodic, &state, &mut progress, &mut snapshots)?;
        }
    };
    if reason != StopReason::StepBudget {
        save(sink, SnapshotKind::Final, &state, &mut progress, &mut snapshots)?;
    }
    Ok(RunOutcome {
        reason,
        t_stop: state.t,
        series,
        snapshots,
        progress,
        final_state: state,
    })
}

/// State of a one-dimensional run.
#[derive(Debug, Clone, PartialEq)]
pub struct State1D {
    pub values: Vec<f64>,
    pub h: f64,
    pub t: f64,
    pub step: u64,
    pub grad_max: f64,
    pub uy_origin: f64,
    pub dt_last: f64,
}

impl State1D {
    fn refresh(&mut self) {
        let (g, uy) = grad_1d(&self.values, self.h);
        self.grad_max = g;
        self.uy_origin = uy;
    }
}

fn grad_1d(u: &[f64], h: f64) -> (f64, f64) {
    let n = u.len();
    let lo = one_sided(u[0], u[1], u[2], h);
    let hi = one_sided(u[n - 1], u[n - 2], u[n - 3], h);
    let mut m = lo.abs().max(hi.abs());
    for j in 1..n - 1 {
        m = m.max(((u[j + 1] - u[j - 1]) / (2.0 * h)).abs());
    }
    (m, lo)
}

#[derive(Debug, Clone)]
pub struct RunOutcome1D {
    pub reason: StopReason,
    pub t_stop: f64,
    pub series: Vec<SeriesRecord>,
    pub final_state: State1D,
    /// Profiles at each doubling of `grad_max`.
    pub cascade: Vec<(f64, Vec<f64>)>,
}

/// Same scheme on `u_t = u_yy + |u_y|^p (+ f)` over `(0, Ly)`. End values of
/// `u0` are held fixed unless the forcing prescribes exact boundary data.
pub fn run_1d(u0: &Profile1D, cfg: &SolverConfig) -> Result<RunOutcome1D> {
    cfg.validate()?;
    let pc = profile_constants(cfg.p)?;
    let n = u0.values.len();
    if n < 5 {
        return Err(Error::Config(format!("1D run needs at least 5 nodes, got {n}")));
    }
    if let Some(j) = u0.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric { i: 0, j, msg: "non-finite initial value".into() });
    }
    let h = u0.h();
    let mut st = State1D {
        values: u0.values.clone(),
        h,
        t: 0.0,
        step: 0,
        grad_max: 0.0,
        uy_origin: 0.0,
        dt_last: 0.0,
    };
    st.refresh();
    let grad0 = st.grad_max;
    let mut level = 0u32;
    let mut cascade = Vec::new();
    let rec = |s: &State1D| SeriesRecord { t: s.t, grad_max: s.grad_max, uy_origin: s.uy_origin, dt: s.dt_last };
    let mut series = vec![rec(&st)];
    let (top0, bottom0) = (u0.values[n - 1], u0.values[0]);
    let forcing = match cfg.forcing {
        Forcing::Manufactured(mp) => Some(mp),
        Forcing::None => None,
    };
    let ends = |t: f64| -> Result<(f64, f64)> {
        match (cfg.boundary, forcing) {
            (BoundaryMode::Exact, Some(mp)) => Ok((
                manufactured_solution_1d(&mp, &pc, 0.0, t)?.u,
                manufactured_solution_1d(&mp, &pc, u0.ly, t)?.u,
            )),
            (BoundaryMode::Zero, _) => Ok((0.0, 0.0)),
            _ => Ok((bottom0, top0)),
        }
    };
    let fvec = |t: f64, out: &mut Vec<f64>| -> Result<()> {
        if let Some(mp) = forcing {
            for (j, v) in out.iter_mut().enumerate() {
                *v = manufactured_solution_1d(&mp, &pc, j as f64 * h, t)?.forcing;
            }
        }
        Ok(())
    };
    let rhs = |u: &[f64], f: &[f64], out: &mut [f64]| -> f64 {
        let mut qmax: f64 = 0.0;
        for j in 1..n - 1 {
            let q = upwind_slope(
                (j >= 2).then(|| u[j - 2]),
                u[j - 1],
                u[j],
                u[j + 1],
                (j + 2 < n).then(|| u[j + 2]),
                1.0 / h,
            );
            qmax = qmax.max(q);
            let mut v = ((u[j + 1] + u[j - 1]) - 2.0 * u[j]) / (h * h) + hamiltonian(q * q, pc.p);
            if forcing.is_some() {
                v += f[j];
            }
            out[j] = v;
        }
        qmax
    };
    let mut f = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut taken = 0u64;
    let reason = loop {
        if st.grad_max >= cfg.stop_grad_norm {
            break StopReason::BlowUpDetected;
        }
        if st.t >= cfg.t_max {
            break StopReason::HorizonReached;
        }
        if cfg.max_steps.is_some_and(|m| taken >= m) {
            break StopReason::StepBudget;
        }
        fvec(st.t, &mut f)?;
        let q = rhs(&st.values, &f, &mut r).max(st.grad_max);
        let mut dt = cfg.cfl_safety / (2.0 / (h * h) + pc.p * q.powf(pc.p - 1.0) / h);
        if dt < cfg.dt_floor {
            break StopReason::DtUnderflow;
        }
        if st.t + dt > cfg.t_max {
            dt = cfg.t_max - st.t;
        }
        let (b0, b1) = ends(st.t + dt)?;
        stage.copy_from_slice(&st.values);
        for j in 1..n - 1 {
            stage[j] += dt * r[j];
        }
        stage[0] = b0;
        stage[n - 1] = b1;
        fvec(st.t + dt, &mut f)?;
        rhs(&stage, &f, &mut r);
        for j in 1..n - 1 {
            stage[j] = 0.5 * (st.values[j] + (stage[j] + dt * r[j]));
        }
        if let Some(j) = stage.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric { i: 0, j, msg: format!("1D update produced {}", stage[j]) });
        }
        std::mem::swap(&mut st.values, &mut stage);
        st.t = if st.t + dt >= cfg.t_max { cfg.t_max } else { st.t + dt };
        st.step += 1;
        st.dt_last = dt;
        st.refresh();
        taken += 1;
        let terminal = st.grad_max >= cfg.stop_grad_norm || st.t >= cfg.t_max;
        if st.step % cfg.series_stride == 0 || terminal {
            series.push(rec(&st));
        }
        if cfg.cascade && grad0 > 0.0 {
            let mut hit = false;
            while st.grad_max >= grad0 * 2f64.powi(level as i32 + 1) {
                level += 1;
                hit = true;
            }
            if hit {
                cascade.push((st.t, st.values.clone()));
            }
        }
    };
    Ok(RunOutcome1D { reason, t_stop: st.t, series, final_state: st, cascade })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::{symmetric_cap, Profile1D};
    use crate::profile_math::steady_state;

    #[test]
    fn minmod_cases() {
        assert_eq!(minmod(1.0, 2.0), 1.0);
        assert_eq!(minmod(-1.0, -2.0), -1.0);
        assert_eq!(minmod(-1.0, 2.0), 0.0);
        assert_eq!(minmod(0.0, 2.0), 0.0);
    }

    #[test]
    fn upwind_slope_is_exact_on_lines_and_reversal_symmetric() {
        let h = 10.0;
        let q = upwind_slope(Some(0.0), 0.3, 0.6, 0.9, Some(1.2), h);
        assert!((q - 3.0).abs() < 1e-12);
        let q = upwind_slope(Some(1.2), 0.9, 0.6, 0.3, Some(0.0), h);
        assert!((q - 3.0).abs() < 1e-12);
        let v = [0.1, 0.7, 0.2, 0.05, 0.9];
        let a = upwind_slope(Some(v[0]), v[1], v[2], v[3], Some(v[4]), h);
        let b = upwind_slope(Some(v[4]), v[3], v[2], v[1], Some(v[0]), h);
        assert_eq!(a, b);
        // Local maximum: both one-sided slopes point away, flux vanishes.
        assert_eq!(upwind_slope(None, 0.0, 1.0, 0.0, None, h), 0.0);
    }

    #[test]
    fn forcing_fast_path_matches_closed_form() {
        let pc = profile_constants(3.0).unwrap();
        let mp = ManufacturedParams::new(3.0, 1.0, &pc).unwrap();
        let g = Grid2D::new(0.5, 0.5, 17, 17).unwrap();
        for t in [0.0, 0.3, 0.7] {
            let fc = forcing_columns(&mp, &pc, &g, t);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let exact = manufactured_solution(&mp, &pc, g.x(i), g.y(j), t).unwrap().forcing;
                    let fast = forcing_at(&fc, &pc, i, g.y(j));
                    assert!((exact - fast).abs() <= 1e-12 * exact.abs().max(1.0), "{exact} {fast}");
                }
            }
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = Grid2D::new(0.5, 0.5, 17, 17).unwrap();
        let cfg = SolverConfig::new(3.0, 0.01, 1e6);
        let out = run(ScalarField::zeros(g), &cfg, &mut NullSink).unwrap();
        assert_eq!(out.reason, StopReason::HorizonReached);
        assert_eq!(out.t_stop, 0.01);
        assert!(out.final_state.field.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn small_cap_decays() {
        let g = Grid2D::new(0.5, 0.5, 33, 33).unwrap();
        let u0 = symmetric_cap(0.05, 0.4, &g).unwrap();
        let sup0 = u0.max_abs();
        let cfg = SolverConfig::new(3.0, 0.05, 1e6);
        let out = run(u0, &cfg, &mut NullSink).unwrap();
        assert_eq!(out.reason, StopReason::HorizonReached);
        let first = out.series[0].grad_max;
        let last = out.series.last().unwrap().grad_max;
        assert!(last < 0.5 * first, "{first} -> {last}");
        assert!(out.final_state.field.max_abs() <= sup0 + 1e-8);
        assert!(out.final_state.field.min() >= -1e-12);
    }

    #[test]
    fn steady_state_is_nearly_stationary_in_1d() {
        let pc = profile_constants(3.0).unwrap();
        let errs: Vec<f64> = [101usize, 201]
            .iter()
            .map(|&n| {
                let ly = 1.0;
                let values: Vec<f64> = (0..n)
                    .map(|j| steady_state(0.3, ly * j as f64 / (n - 1) as f64, &pc).unwrap().value)
                    .collect();
                let u0 = Profile1D { ly, values };
                let mut cfg = SolverConfig::new(3.0, 1.0, 1e9);
                cfg.boundary = BoundaryMode::Frozen;
                cfg.max_steps = Some(1);
                let out = run_1d(&u0, &cfg).unwrap();
                let du = out
                    .final_state
                    .values
                    .iter()
                    .zip(&u0.values)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                du / out.final_state.dt_last
            })
            .collect();
        // Residual per unit time shrinks like h^2.
        let r = errs[0] / errs[1];
        assert!(r > 3.0, "{errs:?}");
    }

    #[test]
    fn reflection_symmetry_and_half_mode() {
        let g = Grid2D::new(0.5, 0.5, 33, 33).unwrap();
        let u0 = symmetric_cap(0.9, 0.3, &g).unwrap();
        let mut cfg = SolverConfig::new(3.0, 0.002, 1e9);
        let full = run(u0.clone(), &cfg, &mut NullSink).unwrap();
        assert!(full.final_state.field.asymmetry() <= 1e-12);
        cfg.symmetry_mode = SymmetryMode::Half;
        let half = run(u0, &cfg, &mut NullSink).unwrap();
        assert_eq!(full.series.len(), half.series.len());
        assert!(full.final_state.field.max_abs_diff(&half.final_state.field) <= 1e-10);
    }
}

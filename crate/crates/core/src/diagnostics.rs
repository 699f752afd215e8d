//! Monitors for the bounds implied by the maximum principle, the
//! tangential-decay functional `J`, the ratios `ξ`, `Θ`, and the
//! quasi-stationary modulation `h`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient, Grid2D, ScalarField};
use crate::profile_fit::{powerlaw_fit, PowerLawFit};
use crate::profile_math::{j_model, JParams, ProfileConstants};

pub const MONITOR_NAMES: [&str; 6] =
    ["ut_bound", "uy_lower", "uxx_lower", "ux_linear", "bernstein", "max_principle_sup"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEnvelope {
    pub name: String,
    pub worst_value: f64,
    pub worst_location: (f64, f64, f64),
    /// Smallest constant for which the bound holds on the sampled nodes.
    pub envelope_constant: f64,
}

impl MonitorEnvelope {
    fn new(name: &str, t: f64) -> Self {
        Self {
            name: name.into(),
            worst_value: 0.0,
            worst_location: (f64::NAN, f64::NAN, t),
            envelope_constant: 0.0,
        }
    }
}

/// A persisted state handed to the monitors.
#[derive(Debug, Clone, Copy)]
pub struct Snap<'a> {
    pub field: &'a ScalarField,
    pub t: f64,
}

/// Restricted box: `|x| <= Lx/2`, `0 <= y <= Ly/2`.
fn in_restricted(g: &Grid2D, i: usize, j: usize) -> bool {
    g.x(i).abs() <= 0.5 * g.lx + 1e-12 && g.y(j) <= 0.5 * g.ly + 1e-12
}

/// Envelopes of `|u_t| <= C`, `u_y >= -C`, `u_xx >= -C` and `|u_x| <= C|x|`
/// on the restricted box. `u_t` is a backward difference against `prev`
/// and is absent without it.
pub fn monitor_bounds(snap: Snap, prev: Option<Snap>) -> Result<Vec<MonitorEnvelope>> {
    let u = snap.field;
    let g = u.grid;
    let t = snap.t;
    let (ux, uy) = gradient(u)?;
    let mut out = Vec::with_capacity(4);

    if let Some(pv) = prev {
        if pv.field.grid != g {
            return Err(Error::Domain("consecutive snapshots on different grids".into()));
        }
        let dt = t - pv.t;
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("snapshots not ordered in time: {} then {t}", pv.t)));
        }
        let mut env = MonitorEnvelope::new("ut_bound", t);
        for j in 0..g.ny {
            for i in 0..g.nx {
                if !in_restricted(&g, i, j) {
                    continue;
                }
                let v = ((u.at(i, j) - pv.field.at(i, j)) / dt).abs();
                if v > env.envelope_constant {
                    env.envelope_constant = v;
                    env.worst_value = v;
                    env.worst_location = (g.x(i), g.y(j), t);
                }
            }
        }
        out.push(env);
    }

    let mut uy_env = MonitorEnvelope::new("uy_lower", t);
    let mut uxx_env = MonitorEnvelope::new("uxx_lower", t);
    let mut ux_env = MonitorEnvelope::new("ux_linear", t);
    uy_env.worst_value = f64::INFINITY;
    uxx_env.worst_value = f64::INFINITY;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if !in_restricted(&g, i, j) {
                continue;
            }
            let (x, y) = (g.x(i), g.y(j));
            let v = uy.at(i, j);
            if v < uy_env.worst_value {
                uy_env.worst_value = v;
                uy_env.worst_location = (x, y, t);
            }
            if i > 0 && i < g.nx - 1 {
                let uxx = ((u.at(i + 1, j) + u.at(i - 1, j)) - 2.0 * u.at(i, j)) / (g.hx * g.hx);
                if uxx < uxx_env.worst_value {
                    uxx_env.worst_value = uxx;
                    uxx_env.worst_location = (x, y, t);
                }
            }
            if x != 0.0 {
                let r = ux.at(i, j).abs() / x.abs();
                if r > ux_env.worst_value {
                    ux_env.worst_value = r;
                    ux_env.worst_location = (x, y, t);
                }
            }
        }
    }
    uy_env.envelope_constant = (-uy_env.worst_value).max(0.0);
    uxx_env.envelope_constant = (-uxx_env.worst_value).max(0.0);
    ux_env.envelope_constant = ux_env.worst_value;
    out.extend([uy_env, uxx_env, ux_env]);
    Ok(out)
}

/// `sup |∇u| dist(X, ∂Ω)^beta` over interior nodes.
pub fn bernstein_monitor(snap: Snap, pc: &ProfileConstants) -> Result<MonitorEnvelope> {
    let u = snap.field;
    let g = u.grid;
    let (ux, uy) = gradient(u)?;
    let mut env = MonitorEnvelope::new("bernstein", snap.t);
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let gn = ux.at(i, j).hypot(uy.at(i, j));
            let v = gn * g.dist_to_boundary(i, j).powf(pc.beta);
            if v > env.envelope_constant {
                env.envelope_constant = v;
                env.worst_value = v;
                env.worst_location = (g.x(i), g.y(j), snap.t);
            }
        }
    }
    Ok(env)
}

/// Excess of `‖u(t)‖∞` over `‖u0‖∞` (nonpositive when the bound holds).
pub fn sup_norm_monitor(snap: Snap, sup0: f64) -> MonitorEnvelope {
    let u = snap.field;
    let g = u.grid;
    let mut env = MonitorEnvelope::new("max_principle_sup", snap.t);
    let (mut best, mut at) = (0.0, 0);
    for (k, v) in u.values.iter().enumerate() {
        if v.abs() > best {
            best = v.abs();
            at = k;
        }
    }
    env.worst_value = best;
    env.worst_location = (g.x(at % g.nx), g.y(at / g.nx), snap.t);
    env.envelope_constant = best - sup0;
    env
}

/// Probe box `(0, x1] x (0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeBox {
    pub x1: f64,
    pub y1: f64,
}

impl ProbeBox {
    pub fn default_for(g: &Grid2D) -> Self {
        Self { x1: 0.1f64.min(g.lx / 4.0), y1: 0.1f64.min(g.ly / 4.0) }
    }

    fn nodes(&self, g: &Grid2D) -> impl Iterator<Item = (usize, usize)> + '_ {
        let g = *g;
        let b = *self;
        (1..g.ny)
            .take_while(move |&j| g.y(j) <= b.y1 + 1e-12)
            .flat_map(move |j| {
                (g.i0() + 1..g.nx).take_while(move |&i| g.x(i) <= b.x1 + 1e-12).map(move |i| (i, j))
            })
    }
}

/// Largest `J` over the probe box with its location. Nodes on `y = 0` are
/// never visited.
pub fn j_monitor(u: &ScalarField, jp: &JParams, probe: &ProbeBox) -> Result<(f64, (f64, f64))> {
    let g = u.grid;
    let mut best = (f64::NEG_INFINITY, (f64::NAN, f64::NAN));
    for (i, j) in probe.nodes(&g) {
        let ux = (u.at(i + 1, j) - u.at(i - 1, j)) / (2.0 * g.hx);
        let v = j_model(jp, u.at(i, j).max(0.0), ux, g.x(i), g.y(j))?;
        if v > best.0 {
            best = (v, (g.x(i), g.y(j)));
        }
    }
    if best.0 == f64::NEG_INFINITY {
        return Err(Error::Domain("probe box holds no interior nodes".into()));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JLadder {
    pub q: f64,
    /// Largest `2^-n` with `max J <= 0` on every monitored snapshot.
    pub k: Option<f64>,
    pub n: Option<u32>,
    pub probe: ProbeBox,
    /// `(t, max J)` per monitored snapshot at the selected `k` (or the
    /// smallest rung tried).
    pub max_j: Vec<(f64, f64)>,
}

pub const J_LADDER_RUNGS: u32 = 40;

pub fn j_ladder(snaps: &[Snap], pc: &ProfileConstants, q: f64, probe: &ProbeBox) -> Result<JLadder> {
    if snaps.is_empty() {
        return Err(Error::Domain("J ladder needs at least one snapshot".into()));
    }
    let eval = |k: f64| -> Result<Vec<(f64, f64)>> {
        let jp = JParams::new(k, q, pc)?;
        snaps
            .par_iter()
            .map(|s| Ok((s.t, j_monitor(s.field, &jp, probe)?.0)))
            .collect()
    };
    let mut last = Vec::new();
    for n in 1..=J_LADDER_RUNGS {
        let k = 2f64.powi(-(n as i32));
        let vals = eval(k)?;
        if vals.iter().all(|(_, v)| *v <= 0.0) {
            return Ok(JLadder { q, k: Some(k), n: Some(n), probe: *probe, max_j: vals });
        }
        last = vals;
    }
    Ok(JLadder { q, k: None, n: None, probe: *probe, max_j: last })
}

/// Field with absent entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedField {
    pub grid: Grid2D,
    pub values: Vec<Option<f64>>,
}

impl MaskedField {
    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.values[self.grid.idx(i, j)]
    }

    /// `(min, max)` over present entries inside the probe box.
    pub fn range_in(&self, probe: &ProbeBox) -> Option<(f64, f64)> {
        let mut r: Option<(f64, f64)> = None;
        for (i, j) in probe.nodes(&self.grid) {
            if let Some(v) = self.at(i, j) {
                r = Some(match r {
                    None => (v, v),
                    Some((a, b)) => (a.min(v), b.max(v)),
                });
            }
        }
        r
    }
}

/// `ξ = y u_y / u` and `Θ = y u_y^{p-1}` on nodes with `y > 0`, `u > threshold`
/// and `u_y > 0` (for `Θ`).
pub fn xi_theta_fields_from(
    u: &ScalarField,
    uy: &ScalarField,
    pc: &ProfileConstants,
    threshold: f64,
) -> (MaskedField, MaskedField) {
    let g = u.grid;
    let mut xi = vec![None; g.len()];
    let mut th = vec![None; g.len()];
    for j in 1..g.ny {
        let y = g.y(j);
        for i in 0..g.nx {
            let (v, d) = (u.at(i, j), uy.at(i, j));
            if v > threshold {
                let k = g.idx(i, j);
                xi[k] = Some(y * d / v);
                if d > 0.0 {
                    th[k] = Some(y * d.powf(pc.p - 1.0));
                }
            }
        }
    }
    (MaskedField { grid: g, values: xi }, MaskedField { grid: g, values: th })
}

pub fn xi_theta_fields(
    u: &ScalarField,
    pc: &ProfileConstants,
    threshold: f64,
) -> Result<(MaskedField, MaskedField)> {
    let (_, uy) = gradient(u)?;
    Ok(xi_theta_fields_from(u, &uy, pc, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HRow {
    pub t: f64,
    pub x: f64,
    pub uy: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HTable {
    pub rows: Vec<HRow>,
    pub excluded: usize,
    /// `log h(t_last, x)` against `log x`; expected slope `2/(1-beta)`.
    pub fit_x: Option<PowerLawFit>,
    /// `log h(t, 0)` against `log(T̂ - t)`; expected slope `1/(1-beta)`.
    pub fit_t: Option<PowerLawFit>,
}

/// Inverts `u_y(x, 0, t) = d_p h^{-beta}`.
pub fn h_from_uy(uy: f64, pc: &ProfileConstants) -> f64 {
    (uy / pc.d_p).powf(-1.0 / pc.beta)
}

/// Builds the `h` table from boundary samples `(t, x, u_y(x, 0, t))`.
/// `x_window` bounds the spatial fit at the last time; `t_hat` enables the
/// temporal fit on `x = 0`.
pub fn modulation_h(
    samples: &[(f64, f64, f64)],
    pc: &ProfileConstants,
    x_window: (f64, f64),
    t_hat: Option<f64>,
) -> HTable {
    let mut rows = Vec::with_capacity(samples.len());
    let mut excluded = 0;
    for &(t, x, uy) in samples {
        if uy > 0.0 {
            rows.push(HRow { t, x, uy, h: h_from_uy(uy, pc) });
        } else {
            excluded += 1;
        }
    }
    let t_last = rows.iter().map(|r| r.t).fold(f64::NEG_INFINITY, f64::max);
    let at_last: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.t == t_last && r.x > 0.0).map(|r| (r.x, r.h)).collect();
    let fit_x = powerlaw_fit(&at_last, x_window).ok();
    let fit_t = t_hat.and_then(|th| {
        let on_axis: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.x == 0.0 && th - r.t > 0.0)
            .map(|r| (th - r.t, r.h))
            .collect();
        powerlaw_fit(&on_axis, (0.0, f64::INFINITY)).ok()
    });
    HTable { rows, excluded, fit_x, fit_t }
}

/// Boundary samples `(t, x, u_y(x, 0, t))` for `x >= 0`.
pub fn boundary_samples(u: &ScalarField, t: f64) -> Result<Vec<(f64, f64, f64)>> {
    let (_, uy) = gradient(u)?;
    let g = u.grid;
    Ok((g.i0()..g.nx).map(|i| (t, g.x(i), uy.at(i, 0))).collect())
}

/// Per-snapshot monitor values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub grad_max: f64,
    pub envelopes: Vec<MonitorEnvelope>,
}

/// Relative growth of one monitor across the final decade of `grad_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeGrowth {
    pub name: String,
    pub start: f64,
    pub end_max: f64,
    pub growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    /// Run-wide worst case per monitor.
    pub envelopes: Vec<MonitorEnvelope>,
    pub history: Vec<MonitorRecord>,
    pub final_decade: Vec<EnvelopeGrowth>,
    /// `grad_max` at the last snapshot over `grad_max` at the first.
    pub grad_growth: f64,
    pub j_ladder: Option<JLadder>,
    pub xi_range: Option<(f64, f64)>,
    pub theta_range: Option<(f64, f64)>,
    pub h_fit_x: Option<PowerLawFit>,
    pub h_fit_t: Option<PowerLawFit>,
    pub h_excluded: usize,
    pub notices: Vec<String>,
}

/// Settings for [`run_diagnostics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSettings {
    pub probe: ProbeBox,
    pub q: f64,
    /// Fraction of the run window, counted back from the end, monitored by
    /// the J ladder.
    pub j_window: f64,
    pub xi_threshold: f64,
    /// Floor for relative envelope growth.
    pub growth_floor: f64,
}

/// Scale below which envelope constants count as zero when measuring growth.
pub const GROWTH_FLOOR: f64 = 1e-6;

/// Growth of each monitor across snapshots whose `grad_max` lies within a
/// decade of the last one: `(max over window - value at window start) /
/// max(|value at window start|, floor)`.
pub fn final_decade_growth(history: &[MonitorRecord], floor: f64) -> Vec<EnvelopeGrowth> {
    let Some(last) = history.last() else {
        return Vec::new();
    };
    let start = history
        .iter()
        .position(|r| r.grad_max >= 0.1 * last.grad_max)
        .unwrap_or(history.len() - 1);
    let window = &history[start..];
    let mut out = Vec::new();
    for name in MONITOR_NAMES {
        let vals: Vec<f64> = window
            .iter()
            .filter_map(|r| r.envelopes.iter().find(|e| e.name == name).map(|e| e.envelope_constant))
            .collect();
        let Some(&first) = vals.first() else { continue };
        let end_max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let growth = if name == "max_principle_sup" {
            // Already an excess over the initial sup norm.
            end_max
        } else {
            (end_max - first) / first.abs().max(floor)
        };
        out.push(EnvelopeGrowth { name: name.into(), start: first, end_max, growth });
    }
    out
}

/// Runs every monitor over time-ordered snapshots `(t, grad_max, field)`.
pub fn run_diagnostics(
    snaps: &[(f64, f64, &ScalarField)],
    pc: &ProfileConstants,
    settings: &DiagnosticSettings,
    t_hat: Option<f64>,
) -> Result<DiagnosticReport> {
    if snaps.is_empty() {
        return Err(Error::Domain("no snapshots to diagnose".into()));
    }
    let mut notices = Vec::new();
    if snaps.len() == 1 {
        notices.push("single snapshot: u_t monitor skipped".to_string());
    }
    let sup0 = snaps[0].2.max_abs();
    let history: Vec<MonitorRecord> = (0..snaps.len())
        .into_par_iter()
        .map(|k| {
            let (t, gm, f) = snaps[k];
            let snap = Snap { field: f, t };
            let prev = (k > 0).then(|| Snap { field: snaps[k - 1].2, t: snaps[k - 1].0 });
            let mut env = monitor_bounds(snap, prev.filter(|p| p.t < t))?;
            env.push(bernstein_monitor(snap, pc)?);
            env.push(sup_norm_monitor(snap, sup0));
            Ok(MonitorRecord { t, grad_max: gm, envelopes: env })
        })
        .collect::<Result<_>>()?;

    let mut envelopes: Vec<MonitorEnvelope> = Vec::new();
    for rec in &history {
        for e in &rec.envelopes {
            match envelopes.iter_mut().find(|w| w.name == e.name) {
                Some(w) if e.envelope_constant > w.envelope_constant => *w = e.clone(),
                Some(_) => {}
                None => envelopes.push(e.clone()),
            }
        }
    }
    envelopes.sort_by_key(|e| MONITOR_NAMES.iter().position(|n| *n == e.name));
    let final_decade = final_decade_growth(&history, settings.growth_floor);
    let grad_growth = history.last().map_or(1.0, |l| l.grad_max) / history[0].grad_max.max(f64::MIN_POSITIVE);

    let (t_first, t_last) = (snaps[0].0, snaps[snaps.len() - 1].0);
    let t_from = t_last - settings.j_window * (t_last - t_first);
    let late: Vec<Snap> = snaps
        .iter()
        .filter(|s| s.0 >= t_from)
        .map(|s| Snap { field: s.2, t: s.0 })
        .collect();
    let j_ladder = match j_ladder(&late, pc, settings.q, &settings.probe) {
        Ok(l) => Some(l),
        Err(e) => {
            notices.push(format!("J ladder skipped: {e}"));
            None
        }
    };

    let last = snaps[snaps.len() - 1].2;
    let (xi, th) = xi_theta_fields(last, pc, settings.xi_threshold)?;
    let xi_range = xi.range_in(&settings.probe);
    let theta_range = th.range_in(&settings.probe);

    let mut samples = Vec::new();
    for (t, _, f) in snaps {
        samples.extend(boundary_samples(f, *t)?);
    }
    let g = last.grid;
    let table = modulation_h(&samples, pc, (3.0 * g.hx, settings.probe.x1), t_hat);

    Ok(DiagnosticReport {
        envelopes,
        history,
        final_decade,
        grad_growth,
        j_ladder,
        xi_range,
        theta_range,
        h_fit_x: table.fit_x,
        h_fit_t: table.fit_t,
        h_excluded: table.excluded,
        notices,
    })
}

/// Full `h` table for the snapshots, for `h_table.csv`.
pub fn h_table(snaps: &[(f64, f64, &ScalarField)], pc: &ProfileConstants) -> Result<HTable> {
    let mut samples = Vec::new();
    for (t, _, f) in snaps {
        samples.extend(boundary_samples(f, *t)?);
    }
    let g = snaps.last().map(|s| s.2.grid).ok_or_else(|| Error::Domain("no snapshots".into()))?;
    Ok(modulation_h(&samples, pc, (3.0 * g.hx, 0.1f64.min(g.lx / 4.0)), None))
}

//! Run configuration: a TOML key tree validated with field paths.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticSettings, ProbeBox, GROWTH_FLOOR};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::initial_data::{concentrated_bump, ramp_1d, sine_1d, symmetric_cap, BumpParams, Profile1D};
use crate::profile_fit::FitWindows;
use crate::profile_math::{
    manufactured_solution, profile_constants, BarrierParams, Lattice, ManufacturedParams,
};
use crate::solver::{BoundaryMode, SolverConfig, SymmetryMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub p: f64,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub initial_data: InitialData,
    pub solver: SolverSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub fits: FitsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mms: Option<MmsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Half-width: `x` ranges over `[-lx, lx]`.
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
}

/// Initial data family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Bump { c_amp: f64, epsilon: f64 },
    Cap { amplitude: f64, width: f64 },
    /// One-dimensional ramp from 0 to `top`, with `u(Ly) = top` held fixed.
    Ramp1d { top: f64 },
    /// One-dimensional `lambda sin(pi y / Ly)`.
    Sine1d { lambda: f64 },
    /// Manufactured solution at `t = 0`; requires `[mms]`.
    Manufactured,
}

impl InitialData {
    pub fn is_1d(&self) -> bool {
        matches!(self, Self::Ramp1d { .. } | Self::Sine1d { .. })
    }
}

fn default_cfl() -> f64 {
    0.4
}
fn default_dt_floor() -> f64 {
    1e-14
}
fn default_one() -> u64 {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub t_max: f64,
    /// Blow-up threshold on `max |∇u|`; defaults to `50 / min(h)^beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_grad_norm: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "default_dt_floor")]
    pub dt_floor: f64,
    #[serde(default)]
    pub snapshot_stride: u64,
    #[serde(default = "default_one")]
    pub series_stride: u64,
    #[serde(default = "default_true")]
    pub cascade: bool,
    #[serde(default)]
    pub symmetry_mode: SymmetryMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

fn default_j_window() -> f64 {
    0.25
}
fn default_growth_floor() -> f64 {
    GROWTH_FLOOR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Probe box `(0, x1] x (0, y1]`; defaults to `min(0.1, L/4)` per side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_x1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_y1: Option<f64>,
    /// Exponent `q` of the J functional; defaults to `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Trailing fraction of the run window monitored by the J ladder.
    #[serde(default = "default_j_window")]
    pub j_window: f64,
    #[serde(default)]
    pub xi_threshold: f64,
    #[serde(default = "default_growth_floor")]
    pub growth_floor: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            probe_x1: None,
            probe_y1: None,
            q: None,
            j_window: default_j_window(),
            xi_threshold: 0.0,
            growth_floor: GROWTH_FLOOR,
        }
    }
}

/// Closed interval `target ± tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub target: f64,
    pub tol: f64,
}

impl Band {
    pub fn contains(&self, v: f64) -> bool {
        (v - self.target).abs() <= self.tol
    }
}

/// Pass criteria evaluated by `check`. Absent gates are not evaluated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gates {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_exponent: Option<Band>,
    /// Relative tolerance on the normal amplitude about `d_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_amplitude_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangential_exponent: Option<Band>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_set_exponent: Option<Band>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aniso_residual_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_rate_exponent: Option<Band>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_rate_r2_min: Option<f64>,
    /// Largest relative envelope growth over the final decade.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_growth_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_excess_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_growth_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_sign: Option<bool>,
    /// Margin over `beta` allowed for `Θ` in the probe box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_margin: Option<f64>,
}

fn default_hi() -> f64 {
    0.1
}
fn default_inner() -> usize {
    3
}
fn default_level() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitsSection {
    #[serde(default = "default_hi")]
    pub normal_hi: f64,
    #[serde(default = "default_hi")]
    pub tangential_hi: f64,
    #[serde(default = "default_inner")]
    pub inner_cells: usize,
    #[serde(default = "default_hi")]
    pub region_x: f64,
    #[serde(default = "default_hi")]
    pub region_y: f64,
    /// Level for the level-set fit as a fraction of `u_y` at the first
    /// interior node above the origin.
    #[serde(default = "default_level")]
    pub level_fraction: f64,
    #[serde(default)]
    pub gates: Gates,
}

impl Default for FitsSection {
    fn default() -> Self {
        Self {
            normal_hi: 0.1,
            tangential_hi: 0.1,
            inner_cells: 3,
            region_x: 0.1,
            region_y: 0.1,
            level_fraction: 0.5,
            gates: Gates::default(),
        }
    }
}

impl FitsSection {
    pub fn windows(&self) -> FitWindows {
        FitWindows {
            normal_hi: self.normal_hi,
            tangential_hi: self.tangential_hi,
            inner_cells: self.inner_cells,
            region: (self.region_x, self.region_y),
        }
    }
}

fn default_ladder() -> Vec<usize> {
    vec![33, 65, 129]
}
fn default_min_order() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsSection {
    pub alpha: f64,
    /// Singular time `T` of the manufactured family.
    pub horizon: f64,
    /// Time at which errors are measured.
    pub t_end: f64,
    #[serde(default = "default_ladder")]
    pub ladder: Vec<usize>,
    /// Smallest acceptable order on the finest pair.
    #[serde(default = "default_min_order")]
    pub min_order: f64,
}

fn default_lattice() -> Lattice {
    Lattice { nx: 50, ny: 50, nt: 20 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    pub x0: f64,
    pub r: f64,
    pub d: f64,
    #[serde(default)]
    pub t0: f64,
    pub horizon: f64,
    pub eta: f64,
    #[serde(default = "default_lattice")]
    pub lattice: Lattice,
    /// Values of `eta` scanned with the calibrated multiplier held fixed.
    #[serde(default)]
    pub eta_ladder: Vec<f64>,
}

fn at(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner().message().trim_end()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serialization failed: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        profile_constants(self.p).map_err(|e| at("p", e))?;
        let d = &self.domain;
        if !(d.lx > 0.0 && d.lx.is_finite()) {
            return Err(at("domain.lx", format!("must be positive, got {}", d.lx)));
        }
        if !(d.ly > 0.0 && d.ly.is_finite()) {
            return Err(at("domain.ly", format!("must be positive, got {}", d.ly)));
        }
        if self.initial_data.is_1d() {
            if self.grid.ny < 5 {
                return Err(at("grid.ny", format!("needs at least 5 nodes, got {}", self.grid.ny)));
            }
        } else {
            self.grid_2d().map_err(|e| at("grid", e))?;
        }
        match self.initial_data {
            InitialData::Bump { c_amp, epsilon } => {
                if !(c_amp > 0.0) {
                    return Err(at("initial_data.c_amp", format!("must be positive, got {c_amp}")));
                }
                if !(epsilon > 0.0) {
                    return Err(at("initial_data.epsilon", format!("must be positive, got {epsilon}")));
                }
            }
            InitialData::Cap { amplitude, width } => {
                if !(amplitude >= 0.0) {
                    return Err(at("initial_data.amplitude", format!("must be nonnegative, got {amplitude}")));
                }
                if !(width > 0.0 && width <= d.lx) {
                    return Err(at("initial_data.width", format!("must lie in (0, lx], got {width}")));
                }
            }
            InitialData::Ramp1d { top } => {
                if !(top >= 0.0) {
                    return Err(at("initial_data.top", format!("must be nonnegative, got {top}")));
                }
            }
            InitialData::Sine1d { lambda } => {
                if !lambda.is_finite() {
                    return Err(at("initial_data.lambda", "must be finite"));
                }
            }
            InitialData::Manufactured => {
                if self.mms.is_none() {
                    return Err(at("initial_data.family", "manufactured data needs an [mms] section"));
                }
            }
        }
        let s = &self.solver;
        if let Some(v) = s.stop_grad_norm {
            if !(v > 0.0) {
                return Err(at("solver.stop_grad_norm", format!("must be positive, got {v}")));
            }
        }
        if s.symmetry_mode == SymmetryMode::Half && self.initial_data.is_1d() {
            return Err(at("solver.symmetry_mode", "half mode applies to 2D runs only"));
        }
        self.solver_config_unchecked(1.0).validate().map_err(|e| match e {
            Error::Config(m) => {
                let field = m.split_whitespace().next().unwrap_or("").to_string();
                at(&format!("solver.{field}"), m)
            }
            other => at("solver", other),
        })?;
        let dg = &self.diagnostics;
        for (name, v) in [("diagnostics.probe_x1", dg.probe_x1), ("diagnostics.probe_y1", dg.probe_y1)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(at(name, format!("must be positive, got {v}")));
                }
            }
        }
        if let Some(q) = dg.q {
            if !(q > self.p - 1.0) {
                return Err(at("diagnostics.q", format!("must exceed p - 1 = {}, got {q}", self.p - 1.0)));
            }
        }
        if !(dg.j_window > 0.0 && dg.j_window <= 1.0) {
            return Err(at("diagnostics.j_window", format!("must lie in (0, 1], got {}", dg.j_window)));
        }
        if !(dg.growth_floor > 0.0) {
            return Err(at("diagnostics.growth_floor", "must be positive"));
        }
        let f = &self.fits;
        for (name, v) in [
            ("fits.normal_hi", f.normal_hi),
            ("fits.tangential_hi", f.tangential_hi),
            ("fits.region_x", f.region_x),
            ("fits.region_y", f.region_y),
        ] {
            if !(v > 0.0) {
                return Err(at(name, format!("must be positive, got {v}")));
            }
        }
        if !(f.level_fraction > 0.0 && f.level_fraction < 1.0) {
            return Err(at("fits.level_fraction", format!("must lie in (0, 1), got {}", f.level_fraction)));
        }
        if let Some(m) = &self.mms {
            let pc = profile_constants(self.p)?;
            ManufacturedParams::new(m.alpha, m.horizon, &pc).map_err(|e| at("mms", e))?;
            if !(m.t_end > 0.0 && m.t_end < m.horizon) {
                return Err(at("mms.t_end", format!("must lie in (0, horizon), got {}", m.t_end)));
            }
            if m.ladder.len() < 2 {
                return Err(at("mms.ladder", "needs at least two grids"));
            }
            if m.ladder.windows(2).any(|w| w[1] <= w[0]) {
                return Err(at("mms.ladder", "must be strictly increasing"));
            }
            for &n in &m.ladder {
                Grid2D::new(d.lx, d.ly, n, n).map_err(|e| at("mms.ladder", e))?;
            }
        }
        if let Some(b) = &self.barrier {
            self.barrier_params(b, 1.0).map_err(|e| at("barrier", e))?;
            if b.lattice.nx < 2 || b.lattice.ny < 1 || b.lattice.nt < 1 {
                return Err(at("barrier.lattice", "needs nx >= 2, ny >= 1, nt >= 1"));
            }
            if let Some(e) = b.eta_ladder.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                return Err(at("barrier.eta_ladder", format!("entries must lie in (0, 1), got {e}")));
            }
        }
        Ok(())
    }

    pub fn grid_2d(&self) -> Result<Grid2D> {
        Grid2D::new(self.domain.lx, self.domain.ly, self.grid.nx, self.grid.ny)
    }

    fn solver_config_unchecked(&self, stop: f64) -> SolverConfig {
        let s = &self.solver;
        let mut c = SolverConfig::new(self.p, s.t_max, s.stop_grad_norm.unwrap_or(stop));
        c.cfl_safety = s.cfl_safety;
        c.dt_floor = s.dt_floor;
        c.snapshot_stride = s.snapshot_stride;
        c.series_stride = s.series_stride;
        c.cascade = s.cascade;
        c.symmetry_mode = s.symmetry_mode;
        c.max_steps = s.max_steps;
        if matches!(self.initial_data, InitialData::Ramp1d { .. }) {
            c.boundary = BoundaryMode::Frozen;
        }
        c
    }

    /// Solver settings, with the resolution-bound default stop if unset.
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let stop = if self.initial_data.is_1d() {
            let h = self.domain.ly / (self.grid.ny - 1) as f64;
            50.0 / h.powf(profile_constants(self.p)?.beta)
        } else {
            SolverConfig::default_stop(self.p, &self.grid_2d()?)?
        };
        let c = self.solver_config_unchecked(stop);
        c.validate()?;
        Ok(c)
    }

    pub fn initial_field(&self) -> Result<ScalarField> {
        let g = self.grid_2d()?;
        match self.initial_data {
            InitialData::Bump { c_amp, epsilon } => {
                concentrated_bump(&BumpParams { c_amp, epsilon, p: self.p }, &g)
            }
            InitialData::Cap { amplitude, width } => symmetric_cap(amplitude, width, &g),
            InitialData::Manufactured => {
                let pc = profile_constants(self.p)?;
                let mp = self.manufactured()?;
                let mut values = Vec::with_capacity(g.len());
                for j in 0..g.ny {
                    for i in 0..g.nx {
                        values.push(manufactured_solution(&mp, &pc, g.x(i), g.y(j), 0.0)?.u);
                    }
                }
                ScalarField::from_values(g, values)
            }
            _ => Err(Error::Config("initial_data.family: one-dimensional family in a 2D run".into())),
        }
    }

    pub fn initial_profile(&self) -> Result<Profile1D> {
        match self.initial_data {
            InitialData::Ramp1d { top } => ramp_1d(top, self.domain.ly, self.grid.ny),
            InitialData::Sine1d { lambda } => sine_1d(lambda, self.domain.ly, self.grid.ny),
            _ => Err(Error::Config("initial_data.family: two-dimensional family in a 1D run".into())),
        }
    }

    pub fn manufactured(&self) -> Result<ManufacturedParams> {
        let m = self.mms.as_ref().ok_or_else(|| at("mms", "section missing"))?;
        ManufacturedParams::new(m.alpha, m.horizon, &profile_constants(self.p)?)
    }

    pub fn diagnostic_settings(&self, g: &Grid2D) -> DiagnosticSettings {
        let dg = &self.diagnostics;
        let def = ProbeBox::default_for(g);
        DiagnosticSettings {
            probe: ProbeBox { x1: dg.probe_x1.unwrap_or(def.x1), y1: dg.probe_y1.unwrap_or(def.y1) },
            q: dg.q.unwrap_or(self.p),
            j_window: dg.j_window,
            xi_threshold: dg.xi_threshold,
            growth_floor: dg.growth_floor,
        }
    }

    pub fn barrier_params(&self, b: &BarrierSection, c0: f64) -> Result<BarrierParams> {
        let pc = profile_constants(self.p)?;
        BarrierParams::new(b.x0, b.r, b.d, b.t0, b.horizon, b.eta, c0, &pc)
    }
}

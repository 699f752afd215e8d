//! Closed-form layer.
//!
//! Every quantity here comes with hand-derived derivatives so that PDE
//! residuals are evaluated without any discretization error. Notation:
//! `beta = 1/(p-1)`, `d_p = beta^beta`, `c_p = d_p / (1 - beta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants and exponents derived from the nonlinearity exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConstants {
    pub p: f64,
    pub beta: f64,
    pub d_p: f64,
    pub c_p: f64,
    /// Concentration exponent `(p-2)/(p-1)` of the bump family.
    pub k_id: f64,
    /// Tangential singularity exponent `2/(p-2)`.
    pub tangential_exp: f64,
    /// Anisotropy exponent `2(p-1)/(p-2)`.
    pub anisotropy_exp: f64,
    /// Time-rate exponent `1/(p-2)`.
    pub time_rate_exp: f64,
}

pub fn profile_constants(p: f64) -> Result<ProfileConstants> {
    if !p.is_finite() || p <= 2.0 {
        return Err(Error::Domain(format!(
            "supercritical exponent required (p > 2), got p = {p}"
        )));
    }
    let beta = 1.0 / (p - 1.0);
    let d_p = beta.powf(beta);
    Ok(ProfileConstants {
        p,
        beta,
        d_p,
        c_p: d_p / (1.0 - beta),
        k_id: (p - 2.0) / (p - 1.0),
        tangential_exp: 2.0 / (p - 2.0),
        anisotropy_exp: 2.0 * (p - 1.0) / (p - 2.0),
        time_rate_exp: 1.0 / (p - 2.0),
    })
}

impl ProfileConstants {
    pub fn new(p: f64) -> Result<Self> {
        profile_constants(p)
    }
}

/// Value and first two derivatives of a one-dimensional function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// Shifted steady state `V_a(y) = V(y + a) - V(a)` with `V(y) = c_p y^{1-beta}`.
///
/// Satisfies `-V_a'' = (V_a')^p`, `V_a(0) = 0` and `V_a'(0) = d_p a^{-beta}`.
pub fn steady_state(a: f64, y: f64, pc: &ProfileConstants) -> Result<Jet> {
    if !(a >= 0.0 && y >= 0.0) {
        return Err(Error::Domain(format!(
            "steady state needs a >= 0 and y >= 0, got a = {a}, y = {y}"
        )));
    }
    let s = y + a;
    if s == 0.0 {
        return Err(Error::Singularity(
            "steady-state derivatives diverge at a = y = 0".into(),
        ));
    }
    let m = 1.0 - pc.beta;
    let first = pc.d_p * s.powf(-pc.beta);
    Ok(Jet {
        value: pc.c_p * (s.powf(m) - a.powf(m)),
        first,
        second: -pc.beta * first / s,
    })
}

/// Anisotropic final-profile model `d_p [y + C1 |x|^{2(p-1)/(p-2)}]^{-beta}`
/// for the normal derivative `u_y` near the blow-up point.
pub fn final_profile_model(pc: &ProfileConstants, c1: f64, x: f64, y: f64) -> Result<f64> {
    if !(c1 > 0.0) {
        return Err(Error::Domain(format!("inner amplitude must be positive, got {c1}")));
    }
    if y < 0.0 {
        return Err(Error::Domain(format!("height must be nonnegative, got {y}")));
    }
    if x == 0.0 && y == 0.0 {
        return Err(Error::Singularity("profile model diverges at the origin".into()));
    }
    let arg = y + c1 * x.abs().powf(pc.anisotropy_exp);
    Ok(pc.d_p * arg.powf(-pc.beta))
}

/// Parameters of the comparison function used to convert Hölder-type control
/// of `u` into a bound on the normal derivative at `(x0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub x0: f64,
    pub r: f64,
    pub d: f64,
    pub t0: f64,
    /// Horizon time `T`.
    pub horizon: f64,
    pub eta: f64,
    /// Calibrated multiplier in `kappa`.
    pub c0: f64,
    /// `kappa = c0 eta^{1-beta} (r^2 + T - t0)`.
    pub kappa: f64,
}

impl BarrierParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x0: f64,
        r: f64,
        d: f64,
        t0: f64,
        horizon: f64,
        eta: f64,
        c0: f64,
        pc: &ProfileConstants,
    ) -> Result<Self> {
        let kappa = c0 * eta.powf(1.0 - pc.beta) * (r * r + horizon - t0);
        let bp = Self { x0, r, d, t0, horizon, eta, c0, kappa };
        bp.validate()?;
        Ok(bp)
    }

    /// Same box, different multiplier.
    pub fn with_c0(&self, c0: f64, pc: &ProfileConstants) -> Result<Self> {
        Self::new(self.x0, self.r, self.d, self.t0, self.horizon, self.eta, c0, pc)
    }

    /// Same box and multiplier, different modulation amplitude.
    pub fn with_eta(&self, eta: f64, pc: &ProfileConstants) -> Result<Self> {
        Self::new(self.x0, self.r, self.d, self.t0, self.horizon, eta, self.c0, pc)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.r > 0.0
            && self.r < 1.0
            && self.d > 0.0
            && self.d < 1.0
            && self.eta > 0.0
            && self.eta < 1.0
            && self.kappa > 0.0
            && self.t0 < self.horizon
            && [self.x0, self.t0, self.horizon, self.c0, self.kappa]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid barrier parameters {self:?}")))
        }
    }
}

/// Barrier value, derivatives and supersolution residual at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEval {
    pub z: f64,
    pub z_x: f64,
    pub z_y: f64,
    pub z_t: f64,
    pub z_xx: f64,
    pub z_yy: f64,
    /// `z_t - Δz - |∇z|^p`; absent on `y = 0` where `z_y` may diverge.
    pub residual: Option<f64>,
}

/// Evaluates the comparison function
///
/// ```text
/// z = c_p [(y + φ)^{1-beta} - φ^{1-beta}] - kappa y^2 / 2,
/// φ = eta (t - t0)^{1/(1-beta)} ((r^2 - (x - x0)^2) / r)^{2/(1-beta)}.
/// ```
///
/// The `x` and `t` derivatives are carried through the scale-free products
/// `φ^{-beta} φ_t`, `φ^{-beta} φ_x`, `φ^{-beta} φ_xx` and `φ^{-beta-1} φ_x^2`,
/// which stay bounded where `φ` vanishes (`t = t0` and the lateral edges).
pub fn barrier_eval(
    bp: &BarrierParams,
    pc: &ProfileConstants,
    x: f64,
    y: f64,
    t: f64,
) -> Result<BarrierEval> {
    let dx = x - bp.x0;
    if dx.abs() > bp.r * (1.0 + 1e-12) || !(0.0..=bp.d).contains(&y) || t < bp.t0 || t >= bp.horizon {
        return Err(Error::Domain(format!(
            "point (x={x}, y={y}, t={t}) outside the barrier box"
        )));
    }
    let beta = pc.beta;
    let m = 1.0 - beta;
    let a = 1.0 / m;
    let s = t - bp.t0;
    let dx = dx.clamp(-bp.r, bp.r);
    let g = (bp.r * bp.r - dx * dx) / bp.r;
    let g_x = -2.0 * dx / bp.r;
    let g_xx = -2.0 / bp.r;
    let e = bp.eta.powf(m);

    let phi = bp.eta * s.powf(a) * g.powf(2.0 * a);
    let a_t = a * e * g * g;
    let a_x = 2.0 * a * e * s * g * g_x;
    let a_xx = 2.0 * a * e * s * ((2.0 * a - 1.0) * g_x * g_x + g * g_xx);
    let b_xx = 4.0 * a * a * e * s * g_x * g_x;

    let w = y + phi;
    let z = pc.c_p * (w.powf(m) - phi.powf(m)) - 0.5 * bp.kappa * y * y;
    if w == 0.0 {
        // y = 0 with φ = 0: z vanishes, the normal slope is unbounded.
        return Ok(BarrierEval {
            z,
            z_x: 0.0,
            z_y: f64::INFINITY,
            z_t: 0.0,
            z_xx: 0.0,
            z_yy: f64::NEG_INFINITY,
            residual: None,
        });
    }
    let ratio = phi / w;
    let q1 = ratio.powf(beta) - 1.0;
    let q2 = ratio.powf(beta + 1.0) - 1.0;
    let z_t = pc.d_p * a_t * q1;
    let z_x = pc.d_p * a_x * q1;
    let z_xx = pc.d_p * a_xx * q1 - beta * pc.d_p * b_xx * q2;
    let wb = pc.d_p * w.powf(-beta);
    let z_y = wb - bp.kappa * y;
    let z_yy = -beta * wb / w - bp.kappa;
    let residual = if y > 0.0 {
        Some(z_t - z_xx - z_yy - (z_x * z_x + z_y * z_y).powf(0.5 * pc.p))
    } else {
        None
    };
    Ok(BarrierEval { z, z_x, z_y, z_t, z_xx, z_yy, residual })
}

/// Sample lattice over the barrier box: `nx` abscissae spanning
/// `[x0 - r, x0 + r]`, `ny` heights in `(0, d]` and `nt` times in `[t0, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
}

impl Lattice {
    /// Lattice used to calibrate `c0`.
    pub const CALIBRATION: Lattice = Lattice { nx: 65, ny: 65, nt: 33 };

    fn points(&self, bp: &BarrierParams) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let (nx, ny, nt) = (self.nx.max(2), self.ny.max(1), self.nt.max(1));
        let bp = *bp;
        (0..nt).flat_map(move |k| {
            let t = bp.t0 + (bp.horizon - bp.t0) * k as f64 / nt as f64;
            (1..=ny).flat_map(move |j| {
                let y = bp.d * j as f64 / ny as f64;
                (0..nx).map(move |i| {
                    let x = bp.x0 - bp.r + 2.0 * bp.r * i as f64 / (nx - 1) as f64;
                    (x, y, t)
                })
            })
        })
    }
}

/// Minimum sampled residual with its location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualScan {
    pub min_residual: f64,
    pub at: (f64, f64, f64),
    pub samples: usize,
}

pub fn barrier_residual_scan(
    bp: &BarrierParams,
    pc: &ProfileConstants,
    lattice: &Lattice,
) -> Result<ResidualScan> {
    let mut scan = ResidualScan {
        min_residual: f64::INFINITY,
        at: (f64::NAN, f64::NAN, f64::NAN),
        samples: 0,
    };
    for (x, y, t) in lattice.points(bp) {
        let ev = barrier_eval(bp, pc, x, y, t)?;
        if let Some(r) = ev.residual {
            scan.samples += 1;
            if !(r >= scan.min_residual) {
                scan.min_residual = r;
                scan.at = (x, y, t);
            }
        }
    }
    Ok(scan)
}

/// Smallest power-of-two `c0` (from `2^-20` up to `2^30`) for which the
/// residual is nonnegative over `lattice`. Returns the calibrated parameters
/// and their scan, or `None` when no rung of the ladder works.
pub fn calibrate_c0(
    bp: &BarrierParams,
    pc: &ProfileConstants,
    lattice: &Lattice,
) -> Result<Option<(BarrierParams, ResidualScan)>> {
    for e in -20..=30 {
        let trial = bp.with_c0(2f64.powi(e), pc)?;
        let scan = barrier_residual_scan(&trial, pc, lattice)?;
        if scan.min_residual >= 0.0 {
            return Ok(Some((trial, scan)));
        }
    }
    Ok(None)
}

/// Parameters of the manufactured family modeled on the quasi-stationary
/// ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedParams {
    pub alpha: f64,
    /// Blow-up time `T`.
    pub horizon: f64,
    pub c_p: f64,
}

impl ManufacturedParams {
    pub fn new(alpha: f64, horizon: f64, pc: &ProfileConstants) -> Result<Self> {
        let alpha_min = (pc.p - 1.0) / (pc.p - 2.0);
        if !(alpha >= alpha_min) || !alpha.is_finite() {
            return Err(Error::Domain(format!(
                "manufactured modulation power must satisfy alpha >= (p-1)/(p-2) = {alpha_min}, got {alpha}"
            )));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("blow-up time must be positive, got {horizon}")));
        }
        Ok(Self { alpha, horizon, c_p: pc.c_p })
    }
}

/// Manufactured solution, its derivatives and the forcing that makes it exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedEval {
    pub u: f64,
    pub u_x: f64,
    pub u_y: f64,
    pub u_t: f64,
    pub u_xx: f64,
    pub u_yy: f64,
    pub laplacian: f64,
    /// `f = u_t - Δu - |∇u|^p`.
    pub forcing: f64,
}

/// Evaluates `u = c_p [(s + y)^{1-beta} - s^{1-beta}]` with
/// `s = |x|^{2 alpha} + (T - t)^alpha`.
///
/// At `s = 0` (the line `x = 0, t = T`, away from `y = 0`) the `x` and `t`
/// derivatives are replaced by their limits along `t = T`.
pub fn manufactured_solution(
    mp: &ManufacturedParams,
    pc: &ProfileConstants,
    x: f64,
    y: f64,
    t: f64,
) -> Result<ManufacturedEval> {
    if y < 0.0 || t > mp.horizon {
        return Err(Error::Domain(format!(
            "manufactured solution needs y >= 0 and t <= T, got y = {y}, t = {t}"
        )));
    }
    let beta = pc.beta;
    let m = 1.0 - beta;
    let alpha = mp.alpha;
    let ax = x.abs();
    let tau = mp.horizon - t;
    let s = ax.powf(2.0 * alpha) + tau.powf(alpha);
    let w = s + y;
    if w == 0.0 {
        return Err(Error::Singularity(
            "manufactured solution is singular at (0, 0, T)".into(),
        ));
    }
    let u = mp.c_p * (w.powf(m) - s.powf(m));
    let u_y = pc.d_p * w.powf(-beta);
    let u_yy = -beta * u_y / w;

    let (u_x, u_t, u_xx) = if s > 0.0 {
        let u_s = pc.d_p * (w.powf(-beta) - s.powf(-beta));
        let u_ss = -beta * pc.d_p * (w.powf(-beta - 1.0) - s.powf(-beta - 1.0));
        let s_x = if ax > 0.0 {
            2.0 * alpha * ax.powf(2.0 * alpha - 1.0) * x.signum()
        } else {
            0.0
        };
        let s_xx = if 2.0 * alpha - 2.0 > 0.0 {
            2.0 * alpha * (2.0 * alpha - 1.0) * ax.powf(2.0 * alpha - 2.0)
        } else {
            2.0 * alpha * (2.0 * alpha - 1.0)
        };
        let s_t = -alpha * tau.powf(alpha - 1.0);
        (u_s * s_x, u_s * s_t, u_ss * s_x * s_x + u_s * s_xx)
    } else {
        // Limits along t = T at x = 0: the exponent 2 alpha (1 - beta) - 2 of
        // u_xx and alpha (1 - beta) - 1 of u_t vanish only at the threshold alpha.
        let edge = (alpha * m - 1.0).abs() < 1e-12;
        let u_t = if edge { pc.d_p * alpha } else { 0.0 };
        let u_xx = if edge {
            -pc.d_p * (2.0 * alpha * (2.0 * alpha - 1.0) - 4.0 * alpha * alpha * beta)
        } else {
            0.0
        };
        (0.0, u_t, u_xx)
    };
    let laplacian = u_xx + u_yy;
    let forcing = u_t - laplacian - (u_x * u_x + u_y * u_y).powf(0.5 * pc.p);
    Ok(ManufacturedEval { u, u_x, u_y, u_t, u_xx, u_yy, laplacian, forcing })
}

/// One-dimensional restriction of the manufactured family at `x = 0`,
/// forced for `u_t = u_yy + |u_y|^p + f`.
pub fn manufactured_solution_1d(
    mp: &ManufacturedParams,
    pc: &ProfileConstants,
    y: f64,
    t: f64,
) -> Result<ManufacturedEval> {
    let mut ev = manufactured_solution(mp, pc, 0.0, y, t)?;
    ev.u_xx = 0.0;
    ev.laplacian = ev.u_yy;
    ev.forcing = ev.u_t - ev.u_yy - ev.u_y.abs().powf(pc.p);
    Ok(ev)
}

/// Parameters of the tangential-decay functional
/// `J = u_x + k x y^{-gamma} (1 + y) u^q`, `gamma = q (1 - beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JParams {
    pub k: f64,
    pub q: f64,
    pub gamma: f64,
}

impl JParams {
    pub fn new(k: f64, q: f64, pc: &ProfileConstants) -> Result<Self> {
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::Domain(format!("J coefficient must lie in (0, 1), got {k}")));
        }
        if !(q > pc.p - 1.0) || !q.is_finite() {
            return Err(Error::Domain(format!(
                "J power must exceed p - 1 = {}, got {q}",
                pc.p - 1.0
            )));
        }
        Ok(Self { k, q, gamma: q * (1.0 - pc.beta) })
    }
}

pub fn j_model(jp: &JParams, u: f64, u_x: f64, x: f64, y: f64) -> Result<f64> {
    if y <= 0.0 {
        return Err(Error::Singularity(format!(
            "J weight y^-gamma diverges at y = {y}"
        )));
    }
    if x < 0.0 || u < 0.0 {
        return Err(Error::Domain(format!(
            "J is defined for x >= 0 and u >= 0, got x = {x}, u = {u}"
        )));
    }
    Ok(u_x + jp.k * x * y.powf(-jp.gamma) * (1.0 + y) * u.powf(jp.q))
}

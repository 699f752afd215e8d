//! Log-log exponent extraction from snapshots and time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient, ScalarField};
use crate::profile_math::ProfileConstants;
use crate::solver::SeriesRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Ordinary least squares `v = a + b s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

pub fn linear_fit(s: &[f64], v: &[f64]) -> Result<LinearFit> {
    let n = s.len();
    if n < 2 || v.len() != n {
        return Err(Error::Fit(format!("linear fit needs at least 2 paired samples, got {n}")));
    }
    let nf = n as f64;
    let ms = s.iter().sum::<f64>() / nf;
    let mv = v.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in s.iter().zip(v) {
        let (da, db) = (a - ms, b - mv);
        sxx += da * da;
        sxy += da * db;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = mv - slope * ms;
    let ss_res: f64 = s
        .iter()
        .zip(v)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LinearFit { slope, intercept, r_squared, n_points: n })
}

/// Fits `v = A s^b` on samples with `s` in `window`; nonpositive samples are
/// dropped.
pub fn powerlaw_fit(samples: &[(f64, f64)], window: (f64, f64)) -> Result<PowerLawFit> {
    let (lo, hi) = window;
    let (ls, lv): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|(s, v)| *s >= lo && *s <= hi && *s > 0.0 && *v > 0.0)
        .map(|(s, v)| (s.ln(), v.ln()))
        .unzip();
    if ls.len() < 5 {
        return Err(Error::Fit(format!(
            "power-law fit needs 5 positive samples in [{lo}, {hi}], found {}",
            ls.len()
        )));
    }
    let lf = linear_fit(&ls, &lv)?;
    Ok(PowerLawFit {
        exponent: lf.slope,
        amplitude: lf.intercept.exp(),
        r_squared: lf.r_squared,
        window,
        n_points: lf.n_points,
    })
}

/// Window controls shared by the snapshot fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindows {
    /// Upper edge of the normal fit in `y`.
    pub normal_hi: f64,
    /// Upper edge of the tangential fit in `x`.
    pub tangential_hi: f64,
    /// Innermost cells excluded from every window.
    pub inner_cells: usize,
    /// Extent of the anisotropic fit region `[0, x] x [0, y]`.
    pub region: (f64, f64),
}

impl Default for FitWindows {
    fn default() -> Self {
        Self { normal_hi: 0.1, tangential_hi: 0.1, inner_cells: 3, region: (0.1, 0.1) }
    }
}

/// `u_y` samples `(y, u_y(x_i, y))` along column `i`.
pub fn normal_profile(uy: &ScalarField, i: usize) -> Vec<(f64, f64)> {
    let g = uy.grid;
    (0..g.ny).map(|j| (g.y(j), uy.at(i, j))).collect()
}

/// `u_y` samples `(x, u_y(x, 0))` for `x >= 0`.
pub fn tangential_profile(uy: &ScalarField) -> Vec<(f64, f64)> {
    let g = uy.grid;
    (g.i0()..g.nx).map(|i| (g.x(i), uy.at(i, 0))).collect()
}

pub fn normal_derivative(u: &ScalarField) -> Result<ScalarField> {
    Ok(gradient(u)?.1)
}

/// Fit of `u_y(x, y)` against `y` on `[inner_cells hy, normal_hi]` along the
/// column nearest to `x`. Expected exponent `-beta`, amplitude `d_p`.
pub fn fit_normal_at(uy: &ScalarField, x: f64, win: &FitWindows) -> Result<PowerLawFit> {
    let g = uy.grid;
    if x.abs() > g.lx {
        return Err(Error::Domain(format!("column x = {x} outside the grid")));
    }
    let i = ((x + g.lx) / g.hx).round() as usize;
    let lo = win.inner_cells as f64 * g.hy;
    let hi = win.normal_hi.min(g.ly);
    powerlaw_fit(&normal_profile(uy, i), (lo * (1.0 - 1e-12), hi))
}

pub fn fit_normal(u: &ScalarField, _pc: &ProfileConstants, win: &FitWindows) -> Result<PowerLawFit> {
    fit_normal_at(&normal_derivative(u)?, 0.0, win)
}

/// Local log-log slopes at interior samples from their two neighbours.
pub fn local_slopes(samples: &[(f64, f64)]) -> Vec<(f64, f64)> {
    samples
        .windows(3)
        .filter(|w| w.iter().all(|(s, v)| *s > 0.0 && *v > 0.0))
        .map(|w| {
            let slope = (w[2].1.ln() - w[0].1.ln()) / (w[2].0.ln() - w[0].0.ln());
            (w[1].0, slope)
        })
        .collect()
}

/// Tangential fit with automatic lower edge: the largest sampled `x` below
/// `tangential_hi` whose local slope is shallower than half the target, or
/// `inner_cells` cells, whichever is larger.
pub fn fit_tangential_uy(
    uy: &ScalarField,
    pc: &ProfileConstants,
    win: &FitWindows,
) -> Result<(PowerLawFit, f64)> {
    let g = uy.grid;
    let prof = tangential_profile(uy);
    let target = pc.tangential_exp;
    let hi = win.tangential_hi.min(g.lx);
    let mut crossover = win.inner_cells as f64 * g.hx;
    for (x, slope) in local_slopes(&prof) {
        if x <= hi && -slope < 0.5 * target {
            crossover = crossover.max(x);
        }
    }
    let lo = crossover * (1.0 + 1e-12);
    if hi < 10.0 * crossover {
        return Err(Error::InsufficientResolution(format!(
            "tangential window [{crossover}, {hi}] spans less than a decade past the resolution crossover"
        )));
    }
    let n = prof.iter().filter(|(x, _)| *x >= lo && *x <= hi).count();
    if n < 5 {
        return Err(Error::InsufficientResolution(format!(
            "tangential window [{crossover}, {hi}] holds {n} nodes past the resolution crossover"
        )));
    }
    Ok((powerlaw_fit(&prof, (lo, hi))?, crossover))
}

pub fn fit_tangential(
    u: &ScalarField,
    pc: &ProfileConstants,
    win: &FitWindows,
) -> Result<(PowerLawFit, f64)> {
    fit_tangential_uy(&normal_derivative(u)?, pc, win)
}

/// Blow-up time estimate and rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeRateFit {
    pub linear: LinearFit,
    pub t_hat: f64,
    pub rate: PowerLawFit,
    /// Series index where the fitted tail starts.
    pub tail_start: usize,
    /// Whether the tail had to be cut to a monotone sub-window.
    pub trimmed: bool,
}

/// Regresses `G^{-(p-2)}` on `t` over the last decade of growth of `G`,
/// takes its zero as `T̂`, then fits `G` against `T̂ - t`.
pub fn fit_time_rate(series: &[SeriesRecord], pc: &ProfileConstants) -> Result<TimeRateFit> {
    let n = series.len();
    if n < 5 {
        return Err(Error::Fit(format!("time-rate fit needs at least 5 records, got {n}")));
    }
    // Longest monotone tail.
    let mut mono = n - 1;
    while mono > 0 && series[mono - 1].grad_max <= series[mono].grad_max {
        mono -= 1;
    }
    let g_end = series[n - 1].grad_max;
    let mut start = mono;
    while start < n && series[start].grad_max < 0.1 * g_end {
        start += 1;
    }
    let trimmed = mono > 0 && series[mono - 1].grad_max >= 0.1 * g_end;
    let tail = &series[start..];
    if tail.len() < 5 {
        return Err(Error::Fit(format!(
            "monotone tail holds {} records within a decade of the final gradient",
            tail.len()
        )));
    }
    let ts: Vec<f64> = tail.iter().map(|r| r.t).collect();
    let ys: Vec<f64> = tail.iter().map(|r| r.grad_max.powf(-(pc.p - 2.0))).collect();
    let linear = linear_fit(&ts, &ys)?;
    if !(linear.slope < 0.0) {
        return Err(Error::Fit("inverse gradient power is not decreasing".into()));
    }
    let t_hat = -linear.intercept / linear.slope;
    let samples: Vec<(f64, f64)> = tail.iter().map(|r| (t_hat - r.t, r.grad_max)).collect();
    let lo = samples.iter().map(|s| s.0).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let rate = powerlaw_fit(&samples, (lo, hi))?;
    Ok(TimeRateFit { linear, t_hat, rate, tail_start: start, trimmed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisoFit {
    pub c1_hat: f64,
    pub residual_rel: f64,
    pub n_points: usize,
    /// Excluded neighbourhood `[0, x) x [0, y)` of the origin.
    pub exclusion: (f64, f64),
}

/// Samples `(x, y, u_y)` of the fit region with `x >= 0`, outside the
/// exclusion box.
fn region_samples(uy: &ScalarField, win: &FitWindows, exclusion: (f64, f64)) -> Vec<(f64, f64, f64)> {
    let g = uy.grid;
    let mut out = Vec::new();
    for j in 0..g.ny {
        let y = g.y(j);
        if y > win.region.1 {
            break;
        }
        for i in g.i0()..g.nx {
            let x = g.x(i);
            if x > win.region.0 {
                break;
            }
            if x < exclusion.0 && y < exclusion.1 {
                continue;
            }
            out.push((x, y, uy.at(i, j)));
        }
    }
    out
}

fn max_rel_dev(samples: &[(f64, f64, f64)], pc: &ProfileConstants, c1: f64) -> f64 {
    samples.iter().fold(0.0, |m, &(x, y, v)| {
        let model = pc.d_p * (y + c1 * x.powf(pc.anisotropy_exp)).powf(-pc.beta);
        m.max(((v - model) / model).abs())
    })
}

/// Minimizes the largest relative deviation from the anisotropic model over
/// `log C1` by a coarse scan followed by golden-section refinement.
pub fn fit_aniso_uy(
    uy: &ScalarField,
    pc: &ProfileConstants,
    win: &FitWindows,
    exclusion: (f64, f64),
) -> Result<AnisoFit> {
    let samples = region_samples(uy, win, exclusion);
    if samples.len() < 5 {
        return Err(Error::Fit(format!("anisotropic fit region holds {} nodes", samples.len())));
    }
    if let Some(s) = samples.iter().find(|s| !(s.2 > 0.0) || (s.0 == 0.0 && s.1 == 0.0)) {
        return Err(Error::Fit(format!("unusable sample u_y({}, {}) = {}", s.0, s.1, s.2)));
    }
    let obj = |lc: f64| max_rel_dev(&samples, pc, lc.exp());
    let (lo, hi, steps) = ((1e-4f64).ln(), (1e6f64).ln(), 200);
    let mut best = (f64::INFINITY, lo);
    for k in 0..=steps {
        let lc = lo + (hi - lo) * k as f64 / steps as f64;
        let v = obj(lc);
        if v < best.0 {
            best = (v, lc);
        }
    }
    if best.1 == lo || best.1 == hi {
        return Err(Error::Fit(format!(
            "C1 pinned at the scan edge {:.3e} with residual {:.3}; data do not follow the anisotropic model",
            best.1.exp(),
            best.0
        )));
    }
    let dl = (hi - lo) / steps as f64;
    let (mut a, mut b) = (best.1 - dl, best.1 + dl);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = obj(d);
        }
    }
    let lc = 0.5 * (a + b);
    let c1_hat = lc.exp();
    Ok(AnisoFit {
        c1_hat,
        residual_rel: obj(lc),
        n_points: samples.len(),
        exclusion,
    })
}

/// Crossing height of `u_y = level` in column `i`, scanning up from the
/// boundary and interpolating linearly in `(u_y / d_p)^{-1/beta}`, which is
/// affine in `y` for the model profile.
pub fn level_crossing(uy: &ScalarField, pc: &ProfileConstants, i: usize, level: f64) -> Option<f64> {
    let g = uy.grid;
    let z = |v: f64| (v / pc.d_p).powf(-1.0 / pc.beta);
    for j in 0..g.ny - 1 {
        let (a, b) = (uy.at(i, j), uy.at(i, j + 1));
        if a >= level && b < level && b > 0.0 {
            let (za, zb, zl) = (z(a), z(b), z(level));
            return Some(g.y(j) + g.hy * (zl - za) / (zb - za));
        }
    }
    None
}

/// Level curve `y_L(x)` of `u_y` and a power fit of its descent
/// `y_L(0) - y_L(x)` against `x`; the model's level curves are
/// `y = Y_L - C1 x^{2(p-1)/(p-2)}`.
pub fn level_set_shape_uy(
    uy: &ScalarField,
    pc: &ProfileConstants,
    level: f64,
    win: &FitWindows,
) -> Result<(PowerLawFit, Vec<(f64, f64)>)> {
    let g = uy.grid;
    let y0 = level_crossing(uy, pc, g.i0(), level)
        .ok_or_else(|| Error::Fit(format!("level {level} not crossed on the symmetry axis")))?;
    let mut curve = vec![(0.0, y0)];
    for i in g.i0() + 1..g.nx {
        let x = g.x(i);
        if x > win.region.0 {
            break;
        }
        match level_crossing(uy, pc, i, level) {
            Some(y) => curve.push((x, y)),
            None => break,
        }
    }
    let drops: Vec<(f64, f64)> = curve.iter().skip(1).map(|&(x, y)| (x, y0 - y)).collect();
    let lo = win.inner_cells as f64 * g.hx * (1.0 - 1e-12);
    let fit = powerlaw_fit(&drops, (lo, win.region.0)).map_err(|e| {
        Error::Fit(format!("level {level} crossed in {} columns: {e}", curve.len()))
    })?;
    Ok((fit, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use crate::profile_math::{final_profile_model, profile_constants};

    fn model_field(pc: &ProfileConstants, c1: f64, g: Grid2D) -> ScalarField {
        ScalarField::from_fn(g, |x, y| {
            if x == 0.0 && y == 0.0 {
                1e6
            } else {
                final_profile_model(pc, c1, x, y).unwrap()
            }
        })
    }

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = (1..50).map(|k| (k as f64 * 0.1, 3.0 * (k as f64 * 0.1).powi(-2))).collect();
        let f = powerlaw_fit(&s, (0.0, 10.0)).unwrap();
        assert!((f.exponent + 2.0).abs() < 1e-10);
        assert!((f.amplitude - 3.0).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-10);
        let c: Vec<(f64, f64)> = s.iter().map(|(x, _)| (*x, 4.0)).collect();
        assert!(powerlaw_fit(&c, (0.0, 10.0)).unwrap().exponent.abs() < 1e-12);
    }

    #[test]
    fn perturbed_power_law() {
        let s: Vec<(f64, f64)> = (0..200)
            .map(|k| {
                let x = 10f64.powf(-3.0 + 3.0 * k as f64 / 199.0);
                (x, x.powi(-2) * (1.0 + 0.01 * x.ln().sin()))
            })
            .collect();
        let f = powerlaw_fit(&s, (1e-3, 1.0)).unwrap();
        assert!((-2.02..=-1.98).contains(&f.exponent), "{}", f.exponent);
    }

    #[test]
    fn too_few_samples() {
        let s = vec![(1.0, 1.0), (2.0, 0.5), (3.0, -1.0), (4.0, 0.1), (5.0, 0.2)];
        assert!(powerlaw_fit(&s, (0.0, 10.0)).is_err());
    }

    #[test]
    fn normal_fit_on_exact_profile() {
        let pc = profile_constants(3.0).unwrap();
        let g = Grid2D::new(0.5, 0.5, 65, 257).unwrap();
        let uy = ScalarField::from_fn(g, |_, y| if y == 0.0 { 1e6 } else { pc.d_p * y.powf(-pc.beta) });
        let f = fit_normal_at(&uy, 0.0, &FitWindows::default()).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-10);
        assert!((f.amplitude - pc.d_p).abs() < 1e-10);
    }

    #[test]
    fn tangential_fit_on_model() {
        for p in [2.5, 3.0] {
            let pc = profile_constants(p).unwrap();
            let g = Grid2D::new(0.25, 0.5, 257, 65).unwrap();
            let uy = model_field(&pc, 1.0, g);
            let (f, _) = fit_tangential_uy(&uy, &pc, &FitWindows::default()).unwrap();
            assert!((f.exponent + pc.tangential_exp).abs() < 1e-10, "{}", f.exponent);
        }
    }

    #[test]
    fn tangential_fit_needs_a_decade() {
        let pc = profile_constants(3.0).unwrap();
        let g = Grid2D::new(0.5, 0.5, 257, 65).unwrap();
        let uy = model_field(&pc, 1.0, g);
        let err = fit_tangential_uy(&uy, &pc, &FitWindows::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientResolution(_)), "{err}");
    }

    #[test]
    fn time_rate_on_exact_rate() {
        let pc = profile_constants(3.0).unwrap();
        let series: Vec<SeriesRecord> = (0..1000)
            .map(|k| {
                let t = 0.999 * k as f64 / 999.0;
                SeriesRecord { t, grad_max: 1.0 / (1.0 - t), uy_origin: 0.0, dt: 0.0 }
            })
            .collect();
        let f = fit_time_rate(&series, &pc).unwrap();
        assert!((f.t_hat - 1.0).abs() < 1e-8);
        assert!((f.rate.exponent + 1.0).abs() < 1e-8);
    }

    #[test]
    fn time_rate_on_manufactured_series() {
        use crate::profile_math::{manufactured_solution, ManufacturedParams};
        let pc = profile_constants(3.0).unwrap();
        let mp = ManufacturedParams::new(2.0, 1.0, &pc).unwrap();
        let series: Vec<SeriesRecord> = (0..500)
            .map(|k| {
                let t = 0.995 * k as f64 / 499.0;
                let uy = manufactured_solution(&mp, &pc, 0.0, 0.0, t).unwrap().u_y;
                SeriesRecord { t, grad_max: uy, uy_origin: uy, dt: 0.0 }
            })
            .collect();
        let f = fit_time_rate(&series, &pc).unwrap();
        assert!((f.t_hat - 1.0).abs() < 1e-8);
        assert!((f.rate.exponent + 1.0).abs() < 1e-8);
    }

    #[test]
    fn aniso_self_fit() {
        let pc = profile_constants(3.0).unwrap();
        let g = Grid2D::new(0.5, 0.5, 129, 129).unwrap();
        for c1 in [0.1, 0.7, 3.0, 10.0] {
            let uy = model_field(&pc, c1, g);
            let f = fit_aniso_uy(&uy, &pc, &FitWindows::default(), (0.02, 0.02)).unwrap();
            assert!(((f.c1_hat - c1) / c1).abs() < 1e-4, "{c1}: {}", f.c1_hat);
            assert!(f.residual_rel < 1e-6);
        }
    }

    #[test]
    fn aniso_with_additive_floor() {
        let pc = profile_constants(3.0).unwrap();
        let g = Grid2D::new(0.5, 0.5, 129, 129).unwrap();
        let exact = model_field(&pc, 0.7, g);
        let win = FitWindows::default();
        let excl = (0.02, 0.02);
        let min_model = region_samples(&exact, &win, excl).iter().fold(f64::INFINITY, |m, s| m.min(s.2));
        let c3 = 0.05 * min_model;
        let pert = ScalarField::from_fn(g, |x, y| {
            let k = ((x + 0.5) / g.hx).round() as usize + ((y / g.hy).round() as usize) * 3;
            let sign = if (k / 7) % 2 == 0 { 1.0 } else { -1.0 };
            if x == 0.0 && y == 0.0 {
                1e6
            } else {
                final_profile_model(&pc, 0.7, x, y).unwrap() + sign * c3
            }
        });
        let f = fit_aniso_uy(&pert, &pc, &win, excl).unwrap();
        assert!(f.residual_rel <= 0.06, "{}", f.residual_rel);
    }

    #[test]
    fn level_set_on_model() {
        for (p, want) in [(3.0, 4.0), (2.5, 6.0)] {
            let pc = profile_constants(p).unwrap();
            let g = Grid2D::new(0.5, 0.5, 257, 257).unwrap();
            let uy = model_field(&pc, 50.0, g);
            let level = final_profile_model(&pc, 50.0, 0.0, 0.05).unwrap();
            let (f, curve) = level_set_shape_uy(&uy, &pc, level, &FitWindows::default()).unwrap();
            assert!((curve[0].1 - 0.05).abs() < 1e-12);
            assert!((f.exponent - want).abs() < 1e-6, "{}", f.exponent);
        }
    }
}

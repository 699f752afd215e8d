//! Admissible initial data: nonnegative, even in `x`, vanishing on the
//! boundary and nonincreasing in `|x|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::profile_math::profile_constants;

/// Concentrated bump `C ε^k φ(|X - (0, ε)| / ε)` with `k = (p-2)/(p-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpParams {
    pub c_amp: f64,
    pub epsilon: f64,
    pub p: f64,
}

/// Cutoff equal to 1 on `[0, 1/4]`, 0 on `[1/2, ∞)`, quintic in between.
pub fn cutoff(s: f64) -> f64 {
    if s <= 0.25 {
        1.0
    } else if s >= 0.5 {
        0.0
    } else {
        let t = (s - 0.25) / 0.25;
        1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

pub fn concentrated_bump(bp: &BumpParams, g: &Grid2D) -> Result<ScalarField> {
    let pc = profile_constants(bp.p)?;
    let eps = bp.epsilon;
    if !(eps > 0.0 && bp.c_amp > 0.0) {
        return Err(Error::Config(format!(
            "bump needs epsilon > 0 and amplitude > 0, got epsilon = {eps}, C = {}",
            bp.c_amp
        )));
    }
    if 0.5 * eps >= g.lx || 1.5 * eps >= g.ly {
        return Err(Error::Config(format!(
            "bump support (radius {} about (0, {eps})) does not fit in [-{}, {}] x [0, {}]",
            0.5 * eps,
            g.lx,
            g.lx,
            g.ly
        )));
    }
    let need = eps / 8.0;
    if g.hx > need || g.hy > need {
        return Err(Error::Config(format!(
            "epsilon = {eps} unresolved: need hx, hy <= {need}, have hx = {}, hy = {}",
            g.hx, g.hy
        )));
    }
    let top = bp.c_amp * eps.powf(pc.k_id);
    let mut f = ScalarField::from_fn(*g, |x, y| {
        let s = (x * x + (y - eps) * (y - eps)).sqrt() / eps;
        top * cutoff(s)
    });
    symmetrize(&mut f);
    f.pin_boundary();
    Ok(f)
}

/// `A cos²(πx / 2w) sin(πy / Ly)` on `|x| < w`, zero outside.
pub fn symmetric_cap(amplitude: f64, width: f64, g: &Grid2D) -> Result<ScalarField> {
    if !(width > 0.0 && width <= g.lx) {
        return Err(Error::Config(format!(
            "cap width must lie in (0, Lx = {}], got {width}",
            g.lx
        )));
    }
    if !(amplitude >= 0.0) {
        return Err(Error::Config(format!("cap amplitude must be nonnegative, got {amplitude}")));
    }
    let ky = std::f64::consts::PI / g.ly;
    let kx = std::f64::consts::PI / (2.0 * width);
    let mut f = ScalarField::from_fn(*g, |x, y| {
        if x.abs() >= width {
            0.0
        } else {
            let c = (kx * x).cos();
            amplitude * c * c * (ky * y).sin().max(0.0)
        }
    });
    symmetrize(&mut f);
    f.pin_boundary();
    Ok(f)
}

/// Copies the `x >= 0` half onto the left so evenness is exact.
fn symmetrize(f: &mut ScalarField) {
    let g = f.grid;
    for j in 0..g.ny {
        for i in 0..g.i0() {
            let v = f.at(g.mirror(i), j);
            f.set(i, j, v);
        }
    }
}

/// Largest value of `x u_x` (central differences) over interior nodes.
pub fn monotonicity_defect(f: &ScalarField) -> f64 {
    let g = f.grid;
    let mut worst = f64::NEG_INFINITY;
    for j in 0..g.ny {
        for i in 1..g.nx - 1 {
            let ux = (f.at(i + 1, j) - f.at(i - 1, j)) / (2.0 * g.hx);
            worst = worst.max(g.x(i) * ux);
        }
    }
    worst
}

/// One-dimensional profile on `[0, Ly]` with `n` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile1D {
    pub ly: f64,
    pub values: Vec<f64>,
}

impl Profile1D {
    pub fn h(&self) -> f64 {
        self.ly / (self.values.len() - 1) as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }
}

fn check_1d(ly: f64, n: usize) -> Result<()> {
    if !(ly > 0.0) || n < 5 {
        return Err(Error::Config(format!(
            "1D profile needs Ly > 0 and at least 5 nodes, got Ly = {ly}, n = {n}"
        )));
    }
    Ok(())
}

/// `λ sin(πy / Ly)`.
pub fn sine_1d(lambda: f64, ly: f64, n: usize) -> Result<Profile1D> {
    check_1d(ly, n)?;
    let k = std::f64::consts::PI / ly;
    let h = ly / (n - 1) as f64;
    let mut values: Vec<f64> = (0..n).map(|j| lambda * (k * j as f64 * h).sin()).collect();
    values[0] = 0.0;
    values[n - 1] = 0.0;
    Ok(Profile1D { ly, values })
}

/// Linear ramp from 0 at `y = 0` to `top` at `y = Ly`. With `u(Ly) = top`
/// held fixed the ramp is a subsolution, so the evolution is nondecreasing
/// in time.
pub fn ramp_1d(top: f64, ly: f64, n: usize) -> Result<Profile1D> {
    check_1d(ly, n)?;
    if !(top >= 0.0) {
        return Err(Error::Config(format!("ramp height must be nonnegative, got {top}")));
    }
    let values = (0..n).map(|j| top * j as f64 / (n - 1) as f64).collect();
    Ok(Profile1D { ly, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_admissible(f: &ScalarField) {
        let g = f.grid;
        assert_eq!(f.asymmetry(), 0.0);
        assert!(f.min() >= 0.0);
        for j in 0..g.ny {
            for i in 0..g.nx {
                if g.is_boundary(i, j) {
                    assert_eq!(f.at(i, j), 0.0);
                }
            }
        }
        assert!(monotonicity_defect(f) <= 1e-12);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.0), 1.0);
        assert_eq!(cutoff(0.25), 1.0);
        assert_eq!(cutoff(0.5), 0.0);
        assert!((cutoff(0.375) - 0.5).abs() < 1e-15);
        let mut last = 1.0;
        for k in 0..=100 {
            let v = cutoff(0.25 + 0.0025 * k as f64);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn bump_center_and_support() {
        let g = Grid2D::new(0.1, 0.1, 81, 81).unwrap();
        let bp = BumpParams { c_amp: 1.0, epsilon: 0.04, p: 3.0 };
        let f = concentrated_bump(&bp, &g).unwrap();
        let j = (0.04 / g.hy).round() as usize;
        assert!((f.at(g.i0(), j) - 0.2).abs() < 1e-15);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = (g.x(i), g.y(j));
                if (x * x + (y - 0.04) * (y - 0.04)).sqrt() >= 0.02 {
                    assert_eq!(f.at(i, j), 0.0);
                }
            }
        }
        check_admissible(&f);
    }

    #[test]
    fn bump_requires_resolution() {
        let g = Grid2D::new(0.5, 0.5, 65, 65).unwrap();
        let bp = BumpParams { c_amp: 1.0, epsilon: 0.04, p: 3.0 };
        let err = concentrated_bump(&bp, &g).unwrap_err().to_string();
        assert!(err.contains("need hx, hy <= 0.005"), "{err}");
    }

    #[test]
    fn cap_properties() {
        let g = Grid2D::new(0.5, 0.5, 65, 65).unwrap();
        let f = symmetric_cap(0.7, 0.3, &g).unwrap();
        assert!((f.at(g.i0(), 32) - 0.7).abs() < 1e-15);
        check_admissible(&f);
        let z = symmetric_cap(0.0, 0.3, &g).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
        assert!(symmetric_cap(1.0, 0.6, &g).is_err());
    }

    #[test]
    fn one_dimensional_profiles() {
        let s = sine_1d(2.0, 0.5, 101).unwrap();
        assert_eq!(s.values[0], 0.0);
        assert_eq!(s.values[100], 0.0);
        assert!((s.values[50] - 2.0).abs() < 1e-15);
        let r = ramp_1d(3.0, 0.5, 11).unwrap();
        assert_eq!(r.values[10], 3.0);
        assert!((r.values[5] - 1.5).abs() < 1e-15);
        assert!(sine_1d(1.0, 0.5, 3).is_err());
    }
}

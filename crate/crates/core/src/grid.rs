//! Tensor grid on `[-Lx, Lx] x [0, Ly]`, nodal fields and stencils.
//!
//! Nodes are indexed `(i, j)` with `x_i = (i - i0) hx`, `i0 = (nx - 1)/2`,
//! and `y_j = j hy`. Storage is row-major with `y` outer. All stencils are
//! written so that reflecting the input across `x = 0` reflects the output
//! bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl Grid2D {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::Config(format!(
                "domain extents must be positive, got Lx = {lx}, Ly = {ly}"
            )));
        }
        if nx < 5 || ny < 5 {
            return Err(Error::Config(format!(
                "grid needs at least 5 nodes per axis, got {nx} x {ny}"
            )));
        }
        if nx % 2 == 0 {
            return Err(Error::Config(format!(
                "nx must be odd so that x = 0 is a node, got {nx}"
            )));
        }
        if nx > u16::MAX as usize || ny > u16::MAX as usize {
            return Err(Error::Config(format!("grid {nx} x {ny} too large")));
        }
        Ok(Self {
            lx,
            ly,
            nx,
            ny,
            hx: 2.0 * lx / (nx - 1) as f64,
            hy: ly / (ny - 1) as f64,
        })
    }

    /// Index of the `x = 0` column.
    #[inline]
    pub fn i0(&self) -> usize {
        (self.nx - 1) / 2
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.i0() as f64) * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Column mirrored across `x = 0`.
    #[inline]
    pub fn mirror(&self, i: usize) -> usize {
        self.nx - 1 - i
    }

    /// Distance from node `(i, j)` to the rectangle boundary.
    pub fn dist_to_boundary(&self, i: usize, j: usize) -> f64 {
        let x = self.x(i);
        let y = self.y(j);
        (self.lx - x.abs()).min(y).min(self.ly - y)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.lx && (0.0..=self.ly).contains(&y)
    }
}

/// Nodal values on a grid, `y`-outer row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        let f = Self { grid, values };
        f.check_finite()?;
        Ok(f)
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.grid.nx;
        &self.values[j * nx..(j + 1) * nx]
    }

    /// First non-finite node, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => Err(Error::Numeric {
                i: k % self.grid.nx,
                j: k / self.grid.nx,
                msg: format!("non-finite value {}", self.values[k]),
            }),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Field reflected across `x = 0`.
    pub fn reflect_x(&self) -> Self {
        let g = self.grid;
        let mut out = Self::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                out.set(g.mirror(i), j, self.at(i, j));
            }
        }
        out
    }

    /// Largest node-wise difference between `u(x, y)` and `u(-x, y)`.
    pub fn asymmetry(&self) -> f64 {
        let g = self.grid;
        let mut worst: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.i0() {
                worst = worst.max((self.at(i, j) - self.at(g.mirror(i), j)).abs());
            }
        }
        worst
    }

    /// Zeroes every boundary node.
    pub fn pin_boundary(&mut self) {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        self.values[..nx].fill(0.0);
        self.values[(ny - 1) * nx..].fill(0.0);
        for j in 1..ny - 1 {
            self.values[j * nx] = 0.0;
            self.values[j * nx + nx - 1] = 0.0;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Five-point Laplacian; boundary nodes are set to zero.
pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    f.check_finite()?;
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let u = &f.values;
    let mut out = ScalarField::zeros(g);
    out.values
        .par_chunks_mut(nx)
        .enumerate()
        .filter(|(j, _)| *j > 0 && *j < ny - 1)
        .for_each(|(j, row)| {
            let k0 = j * nx;
            for i in 1..nx - 1 {
                let k = k0 + i;
                let c = u[k];
                let dxx = ((u[k + 1] + u[k - 1]) - 2.0 * c) * ihx2;
                let dyy = ((u[k + nx] + u[k - nx]) - 2.0 * c) * ihy2;
                row[i] = dxx + dyy;
            }
        });
    Ok(out)
}

/// Three-point one-sided first derivative from the edge value `a` and its
/// two inward neighbours `b`, `c`, pointing inward.
#[inline]
pub fn one_sided(a: f64, b: f64, c: f64, h: f64) -> f64 {
    ((4.0 * b - 3.0 * a) - c) / (2.0 * h)
}

/// Central differences inside, second-order one-sided differences on edges.
pub fn gradient(f: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    f.check_finite()?;
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let u = &f.values;
    let mut fx = ScalarField::zeros(g);
    let mut fy = ScalarField::zeros(g);
    fx.values
        .par_chunks_mut(nx)
        .zip(fy.values.par_chunks_mut(nx))
        .enumerate()
        .for_each(|(j, (rx, ry))| {
            let k0 = j * nx;
            rx[0] = one_sided(u[k0], u[k0 + 1], u[k0 + 2], g.hx);
            rx[nx - 1] = -one_sided(u[k0 + nx - 1], u[k0 + nx - 2], u[k0 + nx - 3], g.hx);
            for i in 1..nx - 1 {
                rx[i] = (u[k0 + i + 1] - u[k0 + i - 1]) / (2.0 * g.hx);
            }
            for i in 0..nx {
                let k = k0 + i;
                ry[i] = if j == 0 {
                    one_sided(u[k], u[k + nx], u[k + 2 * nx], g.hy)
                } else if j == ny - 1 {
                    -one_sided(u[k], u[k - nx], u[k - 2 * nx], g.hy)
                } else {
                    (u[k + nx] - u[k - nx]) / (2.0 * g.hy)
                };
            }
        });
    Ok((fx, fy))
}

/// `max |∇u|` over all nodes with the stencils of [`gradient`], and the
/// one-sided `u_y` at the origin node.
pub fn gradient_norm_max(f: &ScalarField) -> (f64, f64) {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let u = &f.values;
    let row_max = |j: usize| -> f64 {
        let k0 = j * nx;
        let mut m: f64 = 0.0;
        for i in 0..nx {
            let k = k0 + i;
            let gx = if i == 0 {
                one_sided(u[k], u[k + 1], u[k + 2], g.hx)
            } else if i == nx - 1 {
                one_sided(u[k], u[k - 1], u[k - 2], g.hx)
            } else {
                (u[k + 1] - u[k - 1]) / (2.0 * g.hx)
            };
            let gy = if j == 0 {
                one_sided(u[k], u[k + nx], u[k + 2 * nx], g.hy)
            } else if j == ny - 1 {
                one_sided(u[k], u[k - nx], u[k - 2 * nx], g.hy)
            } else {
                (u[k + nx] - u[k - nx]) / (2.0 * g.hy)
            };
            m = m.max(gx * gx + gy * gy);
        }
        m
    };
    let gmax = (0..ny).into_par_iter().map(row_max).reduce(|| 0.0, f64::max).sqrt();
    let i0 = g.i0();
    let uy0 = one_sided(u[i0], u[i0 + nx], u[i0 + 2 * nx], g.hy);
    (gmax, uy0)
}

/// Bilinear interpolation; exact at nodes.
pub fn sample(f: &ScalarField, x: f64, y: f64) -> Result<f64> {
    let g = f.grid;
    if !g.contains(x, y) {
        return Err(Error::Domain(format!(
            "sample point ({x}, {y}) outside [-{}, {}] x [0, {}]",
            g.lx, g.lx, g.ly
        )));
    }
    let locate = |s: f64, n: usize| -> (usize, f64) {
        let r = s.round();
        if (s - r).abs() < 1e-9 {
            let k = r as usize;
            return if k == n - 1 { (n - 2, 1.0) } else { (k, 0.0) };
        }
        let k = (s.floor() as usize).min(n - 2);
        (k, s - k as f64)
    };
    let (i, tx) = locate((x + g.lx) / g.hx, g.nx);
    let (j, ty) = locate(y / g.hy, g.ny);
    let lerp = |a: f64, b: f64, t: f64| {
        if t == 0.0 {
            a
        } else if t == 1.0 {
            b
        } else {
            a + t * (b - a)
        }
    };
    let lo = lerp(f.at(i, j), f.at(i + 1, j), tx);
    let hi = lerp(f.at(i, j + 1), f.at(i + 1, j + 1), tx);
    Ok(lerp(lo, hi, ty))
}

/// Writes `x,y,value` rows, `y` outer.
pub fn write_csv(f: &ScalarField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,value")?;
    let g = f.grid;
    for j in 0..g.ny {
        for i in 0..g.nx {
            writeln!(w, "{},{},{}", g.x(i), g.y(j), f.at(i, j))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_csv`] onto a known grid.
pub fn read_csv(grid: Grid2D, path: &Path) -> Result<ScalarField> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "x,y,value" => {}
        _ => return Err(Error::Domain(format!("{}: missing x,y,value header", path.display()))),
    }
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        let v = line
            .rsplit(',')
            .next()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Domain(format!("{}: bad row {line:?}", path.display())))?;
        values.push(v);
    }
    ScalarField::from_values(grid, values)
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"GBU1";
pub const SNAPSHOT_HEADER: usize = 32;

/// Serializes a field and its time into the binary snapshot layout:
/// magic, `nx` and `ny` as `u16`, `Lx`, `Ly`, `t` as `f64`, then the values,
/// all little-endian.
pub fn snapshot_bytes(f: &ScalarField, t: f64) -> Vec<u8> {
    let g = f.grid;
    let mut buf = Vec::with_capacity(SNAPSHOT_HEADER + 8 * g.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(g.nx as u16).to_le_bytes());
    buf.extend_from_slice(&(g.ny as u16).to_le_bytes());
    buf.extend_from_slice(&g.lx.to_le_bytes());
    buf.extend_from_slice(&g.ly.to_le_bytes());
    buf.extend_from_slice(&t.to_le_bytes());
    for v in &f.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn write_snapshot(f: &ScalarField, t: f64, path: &Path) -> Result<()> {
    let mut file = File::create(path)?;
    file.write_all(&snapshot_bytes(f, t))?;
    Ok(())
}

pub fn parse_snapshot(bytes: &[u8], path: &Path) -> Result<(ScalarField, f64)> {
    let corrupt = |reason: String| Error::CorruptSnapshot { path: path.to_path_buf(), reason };
    if bytes.len() < SNAPSHOT_HEADER {
        return Err(corrupt(format!("{} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let (nx, ny) = (u16_at(4), u16_at(6));
    let (lx, ly, t) = (f64_at(8), f64_at(16), f64_at(24));
    let grid = Grid2D::new(lx, ly, nx, ny).map_err(|e| corrupt(e.to_string()))?;
    let expect = SNAPSHOT_HEADER + 8 * grid.len();
    if bytes.len() != expect {
        return Err(corrupt(format!("{} bytes, expected {expect}", bytes.len())));
    }
    if !t.is_finite() {
        return Err(corrupt("non-finite time".into()));
    }
    let values: Vec<f64> = bytes[SNAPSHOT_HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let field = ScalarField::from_values(grid, values).map_err(|e| corrupt(e.to_string()))?;
    Ok((field, t))
}

pub fn read_snapshot(path: &Path) -> Result<(ScalarField, f64)> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| Error::CorruptSnapshot { path: path.to_path_buf(), reason: e.to_string() })?
        .read_to_end(&mut bytes)?;
    parse_snapshot(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(1.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn geometry() {
        let g = Grid2D::new(0.5, 0.25, 65, 33).unwrap();
        assert_eq!(g.i0(), 32);
        assert_eq!(g.x(32), 0.0);
        assert_eq!(g.x(0), -0.5);
        assert_eq!(g.x(64), 0.5);
        assert_eq!(g.y(32), 0.25);
        assert!(Grid2D::new(1.0, 1.0, 64, 33).is_err());
        assert!(Grid2D::new(1.0, 1.0, 3, 33).is_err());
        assert!(Grid2D::new(0.0, 1.0, 5, 5).is_err());
    }

    #[test]
    fn laplacian_of_quadratic_is_four() {
        let f = ScalarField::from_fn(grid(17), |x, y| x * x + y * y);
        let l = laplacian(&f).unwrap();
        for j in 1..16 {
            for i in 1..16 {
                assert!((l.at(i, j) - 4.0).abs() < 1e-10);
            }
        }
        assert_eq!(l.at(0, 3), 0.0);
        let c = ScalarField::from_fn(grid(9), |_, _| 2.5);
        assert!(laplacian(&c).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn laplacian_second_order() {
        let ly = 1.0;
        let k = std::f64::consts::PI / ly;
        let errs: Vec<f64> = [33, 65, 129]
            .iter()
            .map(|&n| {
                let f = ScalarField::from_fn(grid(n), |x, y| (k * y).sin() * (1.0 + x * x * x));
                let l = laplacian(&f).unwrap();
                let mut e: f64 = 0.0;
                for j in 1..n - 1 {
                    for i in 1..n - 1 {
                        let (x, y) = (f.grid.x(i), f.grid.y(j));
                        let exact = (k * y).sin() * (6.0 * x - k * k * (1.0 + x * x * x));
                        e = e.max((l.at(i, j) - exact).abs());
                    }
                }
                e
            })
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((3.5..=4.5).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn gradient_exact_on_affine() {
        let f = ScalarField::from_fn(grid(9), |x, y| 3.0 * x - 2.0 * y);
        let (fx, fy) = gradient(&f).unwrap();
        for k in 0..f.values.len() {
            assert!((fx.values[k] - 3.0).abs() < 1e-12);
            assert!((fy.values[k] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_second_order_including_edges() {
        let errs: Vec<f64> = [33, 65, 129]
            .iter()
            .map(|&n| {
                let f = ScalarField::from_fn(grid(n), |x, y| (x + 2.0 * y).sin());
                let (fx, fy) = gradient(&f).unwrap();
                let mut e: f64 = 0.0;
                for j in 0..n {
                    for i in 0..n {
                        let c = (f.grid.x(i) + 2.0 * f.grid.y(j)).cos();
                        e = e.max((fx.at(i, j) - c).abs()).max((fy.at(i, j) - 2.0 * c).abs());
                    }
                }
                e
            })
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((3.5..=4.5).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn even_field_has_zero_x_derivative_on_axis() {
        let f = ScalarField::from_fn(grid(33), |x, y| (x * x * 7.0).cos() * y.sin() + x.abs());
        let (fx, _) = gradient(&f).unwrap();
        let i0 = f.grid.i0();
        for j in 0..33 {
            assert_eq!(fx.at(i0, j), 0.0);
        }
    }

    #[test]
    fn stencils_commute_with_reflection() {
        let f = ScalarField::from_fn(grid(33), |x, y| (3.0 * x + 1.0).exp() * (y * 5.0).sin());
        let r = f.reflect_x();
        let (fx, fy) = gradient(&f).unwrap();
        let (rx, ry) = gradient(&r).unwrap();
        let l = laplacian(&f).unwrap();
        let rl = laplacian(&r).unwrap();
        let g = f.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let m = g.mirror(i);
                assert!((fx.at(i, j) + rx.at(m, j)).abs() <= 1e-14 * fx.at(i, j).abs().max(1.0));
                assert!((fy.at(i, j) - ry.at(m, j)).abs() <= 1e-14 * fy.at(i, j).abs().max(1.0));
                assert!((l.at(i, j) - rl.at(m, j)).abs() <= 1e-14 * l.at(i, j).abs().max(1.0));
            }
        }
    }

    #[test]
    fn non_finite_input_reported_with_node() {
        let mut f = ScalarField::zeros(grid(9));
        f.set(3, 4, f64::NAN);
        match laplacian(&f) {
            Err(Error::Numeric { i: 3, j: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gradient_norm_max_matches_gradient_fields() {
        let f = ScalarField::from_fn(grid(17), |x, y| (2.0 * x + y).sin() * (3.0 * y).exp());
        let (fx, fy) = gradient(&f).unwrap();
        let expect = fx
            .values
            .iter()
            .zip(&fy.values)
            .fold(0.0f64, |m, (a, b)| m.max((a * a + b * b).sqrt()));
        let (gmax, uy0) = gradient_norm_max(&f);
        assert!((gmax - expect).abs() <= 1e-14 * expect);
        assert_eq!(uy0, fy.at(f.grid.i0(), 0));
    }

    #[test]
    fn sampling() {
        let g = Grid2D::new(1.0, 0.5, 9, 5).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x * y + (7.0 * x).sin());
        for j in 0..g.ny {
            for i in 0..g.nx {
                assert_eq!(sample(&f, g.x(i), g.y(j)).unwrap(), f.at(i, j));
            }
        }
        let a = ScalarField::from_fn(g, |x, y| 2.0 * x - 3.0 * y + 1.0);
        let v = sample(&a, 0.123, 0.321).unwrap();
        assert!((v - (2.0 * 0.123 - 3.0 * 0.321 + 1.0)).abs() < 1e-13);
        let xy = ScalarField::from_fn(g, |x, y| x * y);
        let (xc, yc) = (0.5 * (g.x(5) + g.x(6)), 0.5 * (g.y(1) + g.y(2)));
        assert!((sample(&xy, xc, yc).unwrap() - xc * yc).abs() < 1e-15);
        assert!(sample(&f, 1.1, 0.1).is_err());
    }

    #[test]
    fn snapshot_roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(0.5, 0.25, 9, 7).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x * x + y);
        let p = dir.path().join("a.bin");
        write_snapshot(&f, 0.125, &p).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len() as usize, 32 + 8 * 63);
        let (h, t) = read_snapshot(&p).unwrap();
        assert_eq!(t, 0.125);
        assert_eq!(h, f);

        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::CorruptSnapshot { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::CorruptSnapshot { .. })));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(0.5, 0.25, 9, 7).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x.sin() + y / 3.0);
        let p = dir.path().join("a.csv");
        write_csv(&f, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x,y,value\n-0.5,0,"));
        assert_eq!(read_csv(g, &p).unwrap(), f);
    }
}

//! Discrete Helmholtz–Weyl decomposition on a uniform staggered grid.
//!
//! Velocities live on cell faces (normal components only): `u1` on the
//! `(n+1) × n` vertical faces, `u2` on the `n × (n+1)` horizontal faces. The
//! potential lives at cell centers. With this layout the discrete divergence and
//! gradient are negative adjoints, so the projection is orthogonal, idempotent
//! and maps discrete curls of clamped stream functions to themselves.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Smallest admissible number of cells per axis.
pub const MIN_RESOLUTION: usize = 8;
/// Default relative residual tolerance of the Poisson solve.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Vector field on the staggered grid of `n × n` cells covering the unit square.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    n: usize,
    /// `u1[j * (n + 1) + i]` at `(i h, (j + 1/2) h)`.
    u1: Vec<f64>,
    /// `u2[j * n + i]` at `((i + 1/2) h, j h)`.
    u2: Vec<f64>,
}

fn check_resolution(n: usize) -> Result<()> {
    if n < MIN_RESOLUTION {
        return Err(Error::invalid(format!(
            "grid resolution {n} is below the minimum {MIN_RESOLUTION}"
        )));
    }
    Ok(())
}

impl GridField {
    pub fn zeros(n: usize) -> Result<Self> {
        check_resolution(n)?;
        Ok(Self {
            n,
            u1: vec![0.0; (n + 1) * n],
            u2: vec![0.0; n * (n + 1)],
        })
    }

    /// Builds a field from face arrays laid out as documented on the struct.
    pub fn from_faces(n: usize, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        check_resolution(n)?;
        if u1.len() != (n + 1) * n || u2.len() != n * (n + 1) {
            return Err(Error::invalid("face arrays do not match the resolution"));
        }
        let field = Self { n, u1, u2 };
        field.check_finite()?;
        Ok(field)
    }

    /// Normal components of `f` sampled at face midpoints.
    pub fn from_fn<F: Fn(f64, f64) -> [f64; 2]>(n: usize, f: F) -> Result<Self> {
        let mut g = Self::zeros(n)?;
        let h = g.h();
        for j in 0..n {
            for i in 0..=n {
                g.u1[j * (n + 1) + i] = f(i as f64 * h, (j as f64 + 0.5) * h)[0];
            }
        }
        for j in 0..=n {
            for i in 0..n {
                g.u2[j * n + i] = f((i as f64 + 0.5) * h, j as f64 * h)[1];
            }
        }
        g.check_finite()?;
        Ok(g)
    }

    /// Face averages of `∇⊥ψ = (ψ_y, −ψ_x)`, computed exactly from vertex values
    /// of `ψ`; the result is discretely divergence-free.
    pub fn from_stream_function<F: Fn(f64, f64) -> f64>(n: usize, psi: F) -> Result<Self> {
        let mut g = Self::zeros(n)?;
        let h = g.h();
        let pv: Vec<f64> = (0..=n)
            .flat_map(|j| (0..=n).map(move |i| (i, j)))
            .map(|(i, j)| psi(i as f64 * h, j as f64 * h))
            .collect();
        let at = |i: usize, j: usize| pv[j * (n + 1) + i];
        for j in 0..n {
            for i in 0..=n {
                g.u1[j * (n + 1) + i] = (at(i, j + 1) - at(i, j)) / h;
            }
        }
        for j in 0..=n {
            for i in 0..n {
                g.u2[j * n + i] = -(at(i + 1, j) - at(i, j)) / h;
            }
        }
        g.check_finite()?;
        Ok(g)
    }

    fn check_finite(&self) -> Result<()> {
        let h = self.h();
        let n = self.n;
        if let Some(k) = self.u1.iter().position(|v| !v.is_finite()) {
            let (i, j) = (k % (n + 1), k / (n + 1));
            return Err(Error::NonFiniteSample {
                x: i as f64 * h,
                y: (j as f64 + 0.5) * h,
                value: self.u1[k],
            });
        }
        if let Some(k) = self.u2.iter().position(|v| !v.is_finite()) {
            let (i, j) = (k % n, k / n);
            return Err(Error::NonFiniteSample {
                x: (i as f64 + 0.5) * h,
                y: j as f64 * h,
                value: self.u2[k],
            });
        }
        Ok(())
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn u1(&self) -> &[f64] {
        &self.u1
    }

    pub fn u2(&self) -> &[f64] {
        &self.u2
    }

    /// `(face value, quadrature weight)` pairs; boundary faces carry half weight.
    fn weighted(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.n;
        let h2 = self.h() * self.h();
        let w1 = self.u1.iter().enumerate().map(move |(k, &v)| {
            let i = k % (n + 1);
            (v, if i == 0 || i == n { 0.5 * h2 } else { h2 })
        });
        let w2 = self.u2.iter().enumerate().map(move |(k, &v)| {
            let j = k / n;
            (v, if j == 0 || j == n { 0.5 * h2 } else { h2 })
        });
        w1.chain(w2)
    }

    /// Discrete L² norm (trapezoidal in the normal direction of each face family).
    pub fn l2_norm(&self) -> f64 {
        self.weighted().map(|(v, w)| w * v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.u1
            .iter()
            .chain(&self.u2)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Cell-wise divergence, `n²` values, row-major in `y`.
    pub fn divergence(&self) -> Vec<f64> {
        let n = self.n;
        let h = self.h();
        let mut div = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                div[j * n + i] = (self.u1[j * (n + 1) + i + 1] - self.u1[j * (n + 1) + i]
                    + self.u2[(j + 1) * n + i]
                    - self.u2[j * n + i])
                    / h;
            }
        }
        div
    }

    /// Largest normal component on the boundary faces.
    pub fn max_boundary_normal(&self) -> f64 {
        let n = self.n;
        let mut m = 0.0f64;
        for j in 0..n {
            m = m.max(self.u1[j * (n + 1)].abs()).max(self.u1[j * (n + 1) + n].abs());
        }
        for i in 0..n {
            m = m.max(self.u2[i].abs()).max(self.u2[n * n + i].abs());
        }
        m
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::invalid(format!(
                "resolution mismatch: {} vs {}",
                self.n, other.n
            )));
        }
        Ok(Self {
            n: self.n,
            u1: self.u1.iter().zip(&other.u1).map(|(&a, &b)| f(a, b)).collect(),
            u2: self.u2.iter().zip(&other.u2).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Discrete L² inner product.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::invalid("resolution mismatch"));
        }
        Ok(self
            .weighted()
            .zip(other.weighted())
            .map(|((a, w), (b, _))| w * a * b)
            .sum())
    }

    /// Interpolates cell-center values to faces; boundary faces use linear
    /// extrapolation from the two nearest cells.
    pub fn from_cell_centers(c: &CellCenteredField) -> Result<Self> {
        let n = c.n;
        let mut g = Self::zeros(n)?;
        let val = |i: usize, j: usize, comp: usize| c.values[j * n + i][comp];
        for j in 0..n {
            for i in 0..=n {
                g.u1[j * (n + 1) + i] = if i == 0 {
                    1.5 * val(0, j, 0) - 0.5 * val(1, j, 0)
                } else if i == n {
                    1.5 * val(n - 1, j, 0) - 0.5 * val(n - 2, j, 0)
                } else {
                    0.5 * (val(i - 1, j, 0) + val(i, j, 0))
                };
            }
        }
        for j in 0..=n {
            for i in 0..n {
                g.u2[j * n + i] = if j == 0 {
                    1.5 * val(i, 0, 1) - 0.5 * val(i, 1, 1)
                } else if j == n {
                    1.5 * val(i, n - 1, 1) - 0.5 * val(i, n - 2, 1)
                } else {
                    0.5 * (val(i, j - 1, 1) + val(i, j, 1))
                };
            }
        }
        Ok(g)
    }

    /// Averages opposite faces to cell centers.
    pub fn to_cell_centers(&self) -> CellCenteredField {
        let n = self.n;
        let values = (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| {
                [
                    0.5 * (self.u1[j * (n + 1) + i] + self.u1[j * (n + 1) + i + 1]),
                    0.5 * (self.u2[j * n + i] + self.u2[(j + 1) * n + i]),
                ]
            })
            .collect();
        CellCenteredField { n, values }
    }
}

/// Vector field sampled at the centers of an `n × n` grid, the exchange format
/// for CSV import and export.
#[derive(Clone, Debug, PartialEq)]
pub struct CellCenteredField {
    n: usize,
    /// Row-major: index `j * n + i` at `((i + 1/2) h, (j + 1/2) h)`.
    values: Vec<[f64; 2]>,
}

impl CellCenteredField {
    pub fn from_fn<F: Fn(f64, f64) -> [f64; 2]>(n: usize, f: F) -> Result<Self> {
        check_resolution(n)?;
        let h = 1.0 / n as f64;
        let values = (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| f((i as f64 + 0.5) * h, (j as f64 + 0.5) * h))
            .collect();
        let c = Self { n, values };
        c.check_finite()?;
        Ok(c)
    }

    fn check_finite(&self) -> Result<()> {
        let h = 1.0 / self.n as f64;
        for (k, v) in self.values.iter().enumerate() {
            if let Some(&bad) = v.iter().find(|c| !c.is_finite()) {
                return Err(Error::NonFiniteSample {
                    x: ((k % self.n) as f64 + 0.5) * h,
                    y: ((k / self.n) as f64 + 0.5) * h,
                    value: bad,
                });
            }
        }
        Ok(())
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    /// Writes `x,y,u1,u2` rows, row-major in `y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "u1", "u2"])?;
        let h = 1.0 / self.n as f64;
        for (k, v) in self.values.iter().enumerate() {
            let x = ((k % self.n) as f64 + 0.5) * h;
            let y = ((k / self.n) as f64 + 0.5) * h;
            w.write_record([x, y, v[0], v[1]].map(|z| format!("{z:e}")))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the format produced by [`CellCenteredField::write_csv`]; the
    /// resolution is inferred from the row count.
    pub fn read_csv<R: Read>(input: R, source_name: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.iter().map(str::trim).collect::<Vec<_>>() != ["x", "y", "u1", "u2"] {
            return Err(Error::Parse {
                source_name: source_name.into(),
                line: 1,
                message: "expected header x,y,u1,u2".into(),
            });
        }
        let mut values = Vec::new();
        let mut coords = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        source_name: source_name.into(),
                        line,
                        message: format!("column {} is not a number", k + 1),
                    })
            };
            if rec.len() != 4 {
                return Err(Error::Parse {
                    source_name: source_name.into(),
                    line,
                    message: format!("expected 4 columns, found {}", rec.len()),
                });
            }
            coords.push(([parse(0)?, parse(1)?], line));
            values.push([parse(2)?, parse(3)?]);
        }
        let n = (values.len() as f64).sqrt().round() as usize;
        if n * n != values.len() {
            return Err(Error::Parse {
                source_name: source_name.into(),
                line: values.len() as u64 + 1,
                message: format!("{} rows do not form a square grid", values.len()),
            });
        }
        check_resolution(n)?;
        let h = 1.0 / n as f64;
        for (k, ([x, y], line)) in coords.into_iter().enumerate() {
            let (xe, ye) = (((k % n) as f64 + 0.5) * h, ((k / n) as f64 + 0.5) * h);
            if (x - xe).abs() > 1e-9 || (y - ye).abs() > 1e-9 {
                return Err(Error::Parse {
                    source_name: source_name.into(),
                    line,
                    message: format!("point ({x}, {y}) is not the cell center ({xe}, {ye})"),
                });
            }
        }
        let c = Self { n, values };
        c.check_finite()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

/// Result of [`leray_project`].
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Divergence-free part with zero normal trace.
    pub u: GridField,
    /// `w − u`.
    pub grad_phi: GridField,
    /// Cell-centered potential, zero mean.
    pub phi: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual of the Poisson solve.
    pub residual: f64,
}

/// Negative Neumann five-point Laplacian `−div ∘ grad`, positive semidefinite.
fn apply_neg_laplacian(n: usize, x: &[f64], out: &mut [f64]) {
    let h2 = 1.0 / (n as f64 * n as f64);
    for j in 0..n {
        for i in 0..n {
            let c = x[j * n + i];
            let mut acc = 0.0;
            if i > 0 {
                acc += c - x[j * n + i - 1];
            }
            if i + 1 < n {
                acc += c - x[j * n + i + 1];
            }
            if j > 0 {
                acc += c - x[(j - 1) * n + i];
            }
            if j + 1 < n {
                acc += c - x[(j + 1) * n + i];
            }
            out[j * n + i] = acc / h2;
        }
    }
}

fn remove_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for `−L φ = b` on the zero-mean subspace.
fn solve_neumann(n: usize, b: &[f64], tol: f64) -> Result<(Vec<f64>, usize, f64)> {
    let mut rhs = b.to_vec();
    remove_mean(&mut rhs);
    let bnorm = dot(&rhs, &rhs).sqrt();
    let mut x = vec![0.0; n * n];
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let budget = 50 * n + 1000;
    let mut r = rhs.clone();
    let mut d = r.clone();
    let mut ad = vec![0.0; n * n];
    let mut rr = dot(&r, &r);
    for it in 1..=budget {
        apply_neg_laplacian(n, &d, &mut ad);
        let alpha = rr / dot(&d, &ad);
        x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += alpha * di);
        r.iter_mut().zip(&ad).for_each(|(ri, ai)| *ri -= alpha * ai);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            // confirm against the true residual
            apply_neg_laplacian(n, &x, &mut ad);
            let true_res = rhs
                .iter()
                .zip(&ad)
                .map(|(b, a)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt()
                / bnorm;
            if true_res <= tol {
                remove_mean(&mut x);
                return Ok((x, it, true_res));
            }
            r = rhs.iter().zip(&ad).map(|(b, a)| b - a).collect();
            d = r.clone();
            rr = dot(&r, &r);
            continue;
        }
        let beta = rr_new / rr;
        d.iter_mut().zip(&r).for_each(|(di, ri)| *di = ri + beta * *di);
        rr = rr_new;
    }
    Err(Error::PoissonConvergence {
        residual: rr.sqrt() / bnorm,
        iterations: budget,
        tolerance: tol,
    })
}

/// Leray projection with the default tolerance.
pub fn leray_project(w: &GridField) -> Result<Decomposition> {
    leray_project_with(w, DEFAULT_TOLERANCE)
}

/// Splits `w = u + ∇φ`: boundary normal components are removed, then the
/// discrete gradient of the Neumann potential with `Δφ = div w` is subtracted.
pub fn leray_project_with(w: &GridField, tol: f64) -> Result<Decomposition> {
    w.check_finite()?;
    let n = w.n;
    let h = w.h();
    let mut u = w.clone();
    for j in 0..n {
        u.u1[j * (n + 1)] = 0.0;
        u.u1[j * (n + 1) + n] = 0.0;
    }
    for i in 0..n {
        u.u2[i] = 0.0;
        u.u2[n * n + i] = 0.0;
    }
    let b: Vec<f64> = u.divergence().into_iter().map(|d| -d).collect();
    let (phi, iterations, residual) = solve_neumann(n, &b, tol)?;
    for j in 0..n {
        for i in 1..n {
            u.u1[j * (n + 1) + i] -= (phi[j * n + i] - phi[j * n + i - 1]) / h;
        }
    }
    for j in 1..n {
        for i in 0..n {
            u.u2[j * n + i] -= (phi[j * n + i] - phi[(j - 1) * n + i]) / h;
        }
    }
    let grad_phi = w.sub(&u)?;
    Ok(Decomposition {
        u,
        grad_phi,
        phi,
        iterations,
        residual,
    })
}

/// Test function of the weak divergence check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFunction {
    /// `x` or `y` (axis 0 or 1).
    Linear(usize),
    /// `cos(a π x) cos(b π y)`.
    Cosine(usize, usize),
}

impl TestFunction {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        match *self {
            TestFunction::Linear(0) => x,
            TestFunction::Linear(_) => y,
            TestFunction::Cosine(a, b) => (a as f64 * PI * x).cos() * (b as f64 * PI * y).cos(),
        }
    }
}

/// The family `x, y` followed by tensor cosines with `a, b ≤ 4`, ordered by
/// `a + b`, excluding the constant.
pub fn test_family(n_test: usize) -> Vec<TestFunction> {
    let mut cos: Vec<(usize, usize)> = (0..=4)
        .flat_map(|a| (0..=4).map(move |b| (a, b)))
        .filter(|&(a, b)| a + b > 0)
        .collect();
    cos.sort_by_key(|&(a, b)| (a + b, a));
    [TestFunction::Linear(0), TestFunction::Linear(1)]
        .into_iter()
        .chain(cos.into_iter().map(|(a, b)| TestFunction::Cosine(a, b)))
        .take(n_test)
        .collect()
}

/// `∫ u · ∇φ` on the grid for one test function. Interior faces use the
/// difference quotient of cell-center samples of `φ`, boundary faces the
/// difference between the boundary value and the adjacent cell.
pub fn weak_divergence(u: &GridField, phi: TestFunction) -> f64 {
    let n = u.n;
    let h = u.h();
    let cell = |i: usize, j: usize| phi.value((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
    let mut acc = 0.0;
    for j in 0..n {
        let y = (j as f64 + 0.5) * h;
        for i in 0..=n {
            let (g, w) = if i == 0 {
                ((cell(0, j) - phi.value(0.0, y)) / (0.5 * h), 0.5)
            } else if i == n {
                ((phi.value(1.0, y) - cell(n - 1, j)) / (0.5 * h), 0.5)
            } else {
                ((cell(i, j) - cell(i - 1, j)) / h, 1.0)
            };
            acc += w * h * h * g * u.u1[j * (n + 1) + i];
        }
    }
    for j in 0..=n {
        for i in 0..n {
            let x = (i as f64 + 0.5) * h;
            let (g, w) = if j == 0 {
                ((cell(i, 0) - phi.value(x, 0.0)) / (0.5 * h), 0.5)
            } else if j == n {
                ((phi.value(x, 1.0) - cell(i, n - 1)) / (0.5 * h), 0.5)
            } else {
                ((cell(i, j) - cell(i, j - 1)) / h, 1.0)
            };
            acc += w * h * h * g * u.u2[j * n + i];
        }
    }
    acc
}

/// Largest `|∫ u · ∇φ|` over the first `n_test` members of [`test_family`].
pub fn weak_divergence_test(u: &GridField, n_test: usize) -> f64 {
    test_family(n_test)
        .into_iter()
        .map(|phi| weak_divergence(u, phi).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn clamped_psi(x: f64, y: f64) -> f64 {
        (PI * x).sin().powi(2) * (PI * y).sin().powi(2)
    }

    #[test]
    fn rejects_small_or_nonfinite() {
        assert!(GridField::zeros(7).is_err());
        let bad = GridField::from_fn(8, |x, _| [if x > 0.5 { f64::NAN } else { 0.0 }, 0.0]);
        assert!(matches!(bad, Err(Error::NonFiniteSample { .. })));
    }

    #[test]
    fn gradient_projects_to_zero() {
        let w = GridField::from_fn(32, |x, y| [2.0 * x, 2.0 * y]).unwrap();
        let d = leray_project(&w).unwrap();
        assert!(d.u.max_abs() <= 1e-8, "{}", d.u.max_abs());
        assert_eq!(d.u.add(&d.grad_phi).unwrap(), w);
    }

    #[test]
    fn stream_function_curl_is_fixed() {
        let w = GridField::from_stream_function(32, clamped_psi).unwrap();
        assert!(w.divergence().iter().all(|d| d.abs() < 1e-11));
        assert!(w.max_boundary_normal() < 1e-15);
        let d = leray_project(&w).unwrap();
        assert!(d.u.sub(&w).unwrap().max_abs() <= 1e-8);
    }

    #[test]
    fn constant_field_is_a_gradient() {
        let w = GridField::from_fn(16, |_, _| [1.0, 0.0]).unwrap();
        let d = leray_project(&w).unwrap();
        assert!(d.u.max_abs() < 1e-8);
        assert!((d.grad_phi.l2_norm() - 1.0).abs() < 1e-12);
        let r = weak_divergence(&w, TestFunction::Linear(0));
        assert!((r - 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn projection_is_orthogonal() {
        let w = GridField::from_fn(24, |x, y| [(3.0 * x).sin() + y * y, x * y - (2.0 * y).cos()]).unwrap();
        let d = leray_project_with(&w, 1e-12).unwrap();
        let cross = d.u.dot(&d.grad_phi).unwrap();
        assert!(cross.abs() < 1e-9 * w.l2_norm().powi(2), "{cross}");
        assert!(d.u.divergence().iter().all(|v| v.abs() < 1e-7));
        assert!(d.u.max_boundary_normal() == 0.0);
        assert!(weak_divergence_test(&d.u, 100) < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let c = CellCenteredField::from_fn(8, |x, y| [x.sin() / 3.0, y.exp()]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,u1,u2\n"));
        let back = CellCenteredField::read_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(back, c);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = "6.25e-2,oops,1,2".into();
        let broken = lines.join("\n");
        match CellCenteredField::read_csv(broken.as_bytes(), "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn family_size_and_order() {
        let f = test_family(100);
        assert_eq!(f.len(), 26);
        assert_eq!(f[2], TestFunction::Cosine(0, 1));
    }
}

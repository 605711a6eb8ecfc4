//! Implicit midpoint time stepping for `A(X) Ẋ = F(X)` with energy-controlled
//! step size, and the trajectory and energy records of a run.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{energy, lp_norms, Discretization};
use crate::galerkin::{assemble_a, assemble_action, assemble_f, Model};
use crate::par::Execution;

/// Relative shift added to a matrix whose Cholesky factorization fails.
pub const CHOLESKY_SHIFT: f64 = 1e-12;
/// Snapshots kept before the record is thinned.
pub const MAX_SNAPSHOTS: usize = 10_000;
/// Consecutive easy steps before the step size is doubled.
const EASY_STEPS: usize = 5;
/// Steps a Jacobian of `F` is reused for.
const JACOBIAN_MAX_AGE: usize = 20;
/// Newton iteration count above which the Jacobian is refreshed.
const JACOBIAN_SLOW_ITERS: usize = 6;

/// Controls of the nonlinear solve within one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Residual tolerance relative to `max(‖A(M)(Y − X)‖, dt ‖F(M)‖)`.
    pub tol: f64,
    pub max_iter: usize,
    pub exec: Execution,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 25,
            exec: Execution::default(),
        }
    }
}

/// Outcome of one implicit midpoint step.
#[derive(Clone, Debug)]
pub struct MidpointStep {
    pub x_new: DVector<f64>,
    pub newton_iters: usize,
    /// Final relative residual.
    pub residual: f64,
    /// True when `A(X)` needed the diagonal shift.
    pub chol_shift: bool,
    /// `ν ∫|𝒟(v)|^p` at the midpoint.
    pub dissipation: f64,
    /// Smallest node speed at the midpoint.
    pub min_speed: f64,
    pub guard_activations: usize,
}

/// Cholesky test of `A`; on failure returns the diagonal shift `δ tr(A)/N`.
fn shift_for(a: &DMatrix<f64>) -> Option<f64> {
    if a.clone().cholesky().is_some() {
        return None;
    }
    let n = a.nrows();
    Some(CHOLESKY_SHIFT * a.trace().abs().max(f64::MIN_POSITIVE) / n as f64)
}

/// Forward-difference Jacobian of `F` at `x`. The step `√ε ‖X‖` follows the
/// size of the state, which decays exponentially under strong viscosity.
pub fn f_jacobian(disc: &Discretization, model: &Model, x: &DVector<f64>, exec: Execution) -> Result<DMatrix<f64>> {
    let n = x.len();
    let f0 = assemble_f(disc, x, model, exec)?;
    let eps = f64::EPSILON.sqrt() * x.norm().max(1e-280);
    let mut jf = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut xp = x.clone();
        xp[k] += eps;
        let fp = assemble_f(disc, &xp, model, exec)?;
        jf.set_column(k, &((fp - &f0) / eps));
    }
    Ok(jf)
}

/// Solves `A(M)(Y − X) = dt F(M)`, `M = (X + Y)/2`, by Newton iteration with a
/// Jacobian frozen at `Y = X`, where it equals `A(X) − (dt/2) ∂F/∂X`; `∂F/∂X`
/// is taken by forward differences.
pub fn step_implicit_midpoint(
    disc: &Discretization,
    model: &Model,
    x: &DVector<f64>,
    dt: f64,
    opts: &NewtonOptions,
) -> Result<MidpointStep> {
    let jf = f_jacobian(disc, model, x, opts.exec)?;
    midpoint_with_jacobian(disc, model, x, dt, opts, &jf)
}

/// As [`step_implicit_midpoint`], with a caller-supplied (possibly stale) `∂F/∂X`.
pub fn midpoint_with_jacobian(
    disc: &Discretization,
    model: &Model,
    x: &DVector<f64>,
    dt: f64,
    opts: &NewtonOptions,
    jf: &DMatrix<f64>,
) -> Result<MidpointStep> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("step size {dt} must be positive")));
    }
    let exec = opts.exec;
    let a0 = assemble_a(disc, x, model.p, exec)?;
    let shift = shift_for(&a0);
    let mut jac = a0 - (0.5 * dt) * jf;
    if let Some(delta) = shift {
        for i in 0..jac.nrows() {
            jac[(i, i)] += delta;
        }
    }
    // inverse of the frozen Jacobian, refined by Broyden updates below
    let mut binv = jac
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Newton matrix".into()))?;

    // the unknown is the increment itself, so it keeps full relative precision
    // when it is many orders below the state
    let mut d = DVector::zeros(x.len());
    let mut first = None;
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    for iter in 0..=opts.max_iter {
        let m = x + 0.5 * &d;
        let (acts, f, diag) = assemble_action(disc, &m, &[&d], model, exec)?;
        let mut ad = acts[0].clone();
        if let Some(delta) = shift {
            ad += delta * &d;
        }
        let f = dt * f;
        // relative to the size of the increment, so that the energy error left
        // by the solve scales with dt
        let scale = ad.norm().max(f.norm()).max(f64::MIN_POSITIVE);
        let r = ad - f;
        let rel = r.norm() / scale;
        if !rel.is_finite() {
            return Err(Error::NewtonFailure {
                iterations: iter,
                residual: rel,
            });
        }
        if rel <= opts.tol {
            return Ok(MidpointStep {
                dissipation: model.nu * lp_norms(disc, &m, model.p).d_sym,
                x_new: x + d,
                newton_iters: iter,
                residual: rel,
                chol_shift: shift.is_some(),
                min_speed: diag.min_speed,
                guard_activations: diag.guard_activations,
            });
        }
        let first = *first.get_or_insert(rel);
        if iter == opts.max_iter || rel > 1e3 * first {
            return Err(Error::NewtonFailure {
                iterations: iter,
                residual: rel,
            });
        }
        if let Some((step, r_old)) = prev.take() {
            // good Broyden update of the inverse: B += (s - B y) sᵀB / (sᵀ B y)
            let dr = &r - r_old;
            let bdr = &binv * &dr;
            let st_b = step.transpose() * &binv;
            let denom = (&st_b * &dr)[(0, 0)];
            if denom.abs() > 1e-300 {
                binv += ((&step - bdr) * st_b) / denom;
            }
        }
        let step = -(&binv * &r);
        d += &step;
        prev = Some((step, r));
    }
    unreachable!("the loop returns on its last iteration")
}

/// Run controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorOptions {
    pub t_final: f64,
    /// Allowed run-integrated energy defect relative to `H(0)`.
    pub tol_energy: f64,
    pub newton: NewtonOptions,
    /// Defaults to `min(dt_max, T/100)`.
    pub dt_init: Option<f64>,
    pub dt_min: f64,
    /// Defaults to `T/10`.
    pub dt_max: Option<f64>,
}

impl IntegratorOptions {
    pub fn new(t_final: f64) -> Self {
        Self {
            t_final,
            tol_energy: 1e-5,
            newton: NewtonOptions::default(),
            dt_init: None,
            dt_min: 1e-9,
            dt_max: None,
        }
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max.unwrap_or(self.t_final / 10.0)
    }

    pub fn dt_init(&self) -> f64 {
        self.dt_init
            .unwrap_or(self.t_final / 100.0)
            .min(self.dt_max())
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::InvalidConfig {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t_final", "must be positive and finite");
        }
        if !(self.tol_energy > 0.0) {
            return bad("tol_energy", "must be positive");
        }
        if !(self.newton.tol > 0.0) {
            return bad("newton_tol", "must be positive");
        }
        if !(self.dt_min > 0.0) || self.dt_min > self.dt_max() {
            return bad("dt_min", "must be positive and at most dt_max");
        }
        if !(self.dt_init() >= self.dt_min) {
            return bad("dt_init", "must be at least dt_min");
        }
        Ok(())
    }
}

/// Diagnostics of an accepted step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub newton_iters: usize,
    /// `H(t) − H(t − dt) + dt ν ∫|𝒟(v_mid)|^p`.
    pub energy_residual: f64,
    pub chol_shift: bool,
}

/// Ordered snapshots `(t_k, X_k)`, thinned uniformly past [`MAX_SNAPSHOTS`].
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub coeffs: Vec<DVector<f64>>,
    pub steps: Vec<StepRecord>,
    stride: usize,
    counter: usize,
}

impl Trajectory {
    fn start(t0: f64, x0: DVector<f64>) -> Self {
        Self {
            times: vec![t0],
            coeffs: vec![x0],
            steps: Vec::new(),
            stride: 1,
            counter: 0,
        }
    }

    /// Builds a trajectory from stored snapshots.
    pub fn from_snapshots(times: Vec<f64>, coeffs: Vec<DVector<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != coeffs.len() {
            return Err(Error::invalid("snapshot times and coefficients must be nonempty and equal in number"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("snapshot times must be strictly increasing"));
        }
        Ok(Self {
            times,
            coeffs,
            steps: Vec::new(),
            stride: 1,
            counter: 0,
        })
    }

    fn push(&mut self, t: f64, x: &DVector<f64>, last: bool) {
        self.counter += 1;
        if self.counter.is_multiple_of(self.stride) || last {
            if last && self.times.last().is_some_and(|&tl| tl == t) {
                return;
            }
            self.times.push(t);
            self.coeffs.push(x.clone());
        }
        if self.times.len() > MAX_SNAPSHOTS {
            let keep: Vec<usize> = (0..self.times.len()).filter(|k| k % 2 == 0).collect();
            self.times = keep.iter().map(|&k| self.times[k]).collect();
            self.coeffs = keep.iter().map(|&k| self.coeffs[k].clone()).collect();
            self.stride *= 2;
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    /// Coefficients at `t` by linear interpolation between snapshots (clamped).
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        let times = &self.times;
        if t <= times[0] {
            return self.coeffs[0].clone();
        }
        if t >= self.t_final() {
            return self.coeffs.last().expect("nonempty").clone();
        }
        let k = times.partition_point(|&s| s <= t) - 1;
        let theta = (t - times[k]) / (times[k + 1] - times[k]);
        &self.coeffs[k] + theta * (&self.coeffs[k + 1] - &self.coeffs[k])
    }

    /// Snapshot file: a comment header, then `t,c1,..,cN` with 17 significant digits.
    pub fn write_snapshots<W: Write>(&self, mut out: W, model: &Model, basis_id: &str) -> Result<()> {
        let n = self.coeffs.first().map_or(0, |c| c.len());
        let io = |e| Error::io("<snapshots>", e);
        writeln!(out, "# N={n} p={} nu={} basis={basis_id}", model.p, model.nu).map_err(io)?;
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|k| format!("c{k}")))
            .collect();
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for (t, c) in self.times.iter().zip(&self.coeffs) {
            let mut line = format!("{t:.16e}");
            for v in c.iter() {
                line.push_str(&format!(",{v:.16e}"));
            }
            writeln!(out, "{line}").map_err(io)?;
        }
        Ok(())
    }

    /// Reads a snapshot file; errors name the offending line.
    pub fn read_snapshots<R: BufRead>(input: R, source_name: &str) -> Result<(SnapshotHeader, Self)> {
        let parse_err = |line: usize, message: String| Error::Parse {
            source_name: source_name.into(),
            line: line as u64,
            message,
        };
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((k, Ok(s))) => Ok((k + 1, s)),
                Some((k, Err(e))) => Err(parse_err(k + 1, e.to_string())),
                None => Err(parse_err(0, format!("missing {what}"))),
            }
        };
        let (ln, head) = next("header")?;
        let header = SnapshotHeader::parse(&head).map_err(|m| parse_err(ln, m))?;
        let (ln, cols) = next("column header")?;
        let expected = header.n + 1;
        if cols.split(',').count() != expected || !cols.starts_with("t,") {
            return Err(parse_err(ln, format!("expected column header t,c1..c{}", header.n)));
        }
        let mut times = Vec::new();
        let mut coeffs = Vec::new();
        for (k, line) in lines {
            let ln = k + 1;
            let line = line.map_err(|e| parse_err(ln, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(ln, format!("bad number: {e}")))?;
            if vals.len() != expected {
                return Err(parse_err(ln, format!("expected {expected} fields, found {}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(ln, "non-finite value".into()));
            }
            if times.last().is_some_and(|&t| vals[0] <= t) {
                return Err(parse_err(ln, "time is not increasing".into()));
            }
            times.push(vals[0]);
            coeffs.push(DVector::from_column_slice(&vals[1..]));
        }
        if times.is_empty() {
            return Err(parse_err(0, "no snapshot rows".into()));
        }
        Ok((header, Self::from_snapshots(times, coeffs)?))
    }

    pub fn save(&self, path: &Path, model: &Model, basis_id: &str) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_snapshots(&mut w, model, basis_id)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(SnapshotHeader, Self)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_snapshots(std::io::BufReader::new(file), &path.display().to_string())
    }
}

/// Metadata line of a snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub n: usize,
    pub p: f64,
    pub nu: f64,
    pub basis_id: String,
}

impl SnapshotHeader {
    fn parse(line: &str) -> std::result::Result<Self, String> {
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| "header must start with '#'".to_string())?;
        let (mut n, mut p, mut nu, mut basis) = (None, None, None, None);
        for tok in body.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| format!("malformed header token {tok:?}"))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| format!("{k}: {e}"));
            match k {
                "N" => n = Some(v.parse::<usize>().map_err(|e| format!("N: {e}"))?),
                "p" => p = Some(num(v)?),
                "nu" => nu = Some(num(v)?),
                "basis" => basis = Some(v.to_string()),
                _ => return Err(format!("unknown header key {k:?}")),
            }
        }
        Ok(Self {
            n: n.ok_or("header lacks N")?,
            p: p.ok_or("header lacks p")?,
            nu: nu.ok_or("header lacks nu")?,
            basis_id: basis.ok_or("header lacks basis")?,
        })
    }
}

/// One row of the energy record.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceRow {
    pub t: f64,
    #[serde(rename = "H")]
    pub h: f64,
    /// `ν ∫|𝒟(v)|^p` at the step midpoint (at `t = 0`: of the initial state).
    pub dissipation_rate: f64,
    pub energy_residual: f64,
    pub dt: f64,
    pub newton_iters: usize,
    pub min_speed: f64,
    pub chol_shift_flag: u8,
}

/// Energy record at every accepted step.
#[derive(Clone, Debug, Default)]
pub struct EnergyTrace {
    pub rows: Vec<TraceRow>,
}

impl EnergyTrace {
    pub fn h0(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.h)
    }

    /// `H(T) − H(0) + Σ dt ν ∫|𝒟(v_mid)|^p`, the sum of the per-step residuals.
    pub fn integrated_defect(&self) -> f64 {
        let (first, last) = match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return 0.0,
        };
        let dissipated: f64 = self.rows[1..].iter().map(|r| r.dt * r.dissipation_rate).sum();
        last.h - first.h + dissipated
    }

    /// Largest increase of `H` between consecutive rows (negative if strictly decreasing).
    pub fn max_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].h - w[0].h)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    /// Reads a trace CSV, reporting malformed rows by line number.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
        let mut rows = Vec::new();
        for row in r.deserialize() {
            rows.push(row.map_err(|e: csv::Error| Error::Parse {
                source_name: path.display().to_string(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?);
        }
        Ok(Self { rows })
    }
}

/// Trajectory, energy record and counters of a finished or failed run.
#[derive(Clone, Debug)]
pub struct Run {
    pub model: Model,
    pub trajectory: Trajectory,
    pub trace: EnergyTrace,
    pub rejected_steps: usize,
    pub newton_failures: usize,
}

/// Adaptive implicit midpoint integrator.
pub struct Integrator<'a> {
    disc: &'a Discretization,
    model: Model,
    opts: IntegratorOptions,
    x: DVector<f64>,
    t: f64,
    dt: f64,
    h: f64,
    easy: usize,
    /// `∂F/∂X` and the number of steps it has served.
    jacobian: Option<(DMatrix<f64>, usize)>,
    run: Run,
}

impl<'a> Integrator<'a> {
    pub fn new(disc: &'a Discretization, model: Model, x0: DVector<f64>, opts: IntegratorOptions) -> Result<Self> {
        opts.validate()?;
        if x0.len() != disc.dim() {
            return Err(Error::invalid(format!(
                "initial state has {} coefficients, basis has {} fields",
                x0.len(),
                disc.dim()
            )));
        }
        if x0.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("initial state contains non-finite coefficients"));
        }
        let h = energy(disc, &x0, model.p);
        if x0.iter().all(|&c| c == 0.0) || h == 0.0 {
            return Err(Error::TrivialInitialData);
        }
        let norms = lp_norms(disc, &x0, model.p);
        let (_, _, diag0) = assemble_action(disc, &x0, &[], &model, opts.newton.exec)?;
        let trace = EnergyTrace {
            rows: vec![TraceRow {
                t: 0.0,
                h,
                dissipation_rate: model.nu * norms.d_sym,
                energy_residual: 0.0,
                dt: 0.0,
                newton_iters: 0,
                min_speed: diag0.min_speed,
                chol_shift_flag: 0,
            }],
        };
        Ok(Self {
            disc,
            model,
            dt: opts.dt_init(),
            opts,
            t: 0.0,
            h,
            easy: 0,
            jacobian: None,
            run: Run {
                model,
                trajectory: Trajectory::start(0.0, x0.clone()),
                trace,
                rejected_steps: 0,
                newton_failures: 0,
            },
            x: x0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn record(&self) -> &Run {
        &self.run
    }

    pub fn into_run(self) -> Run {
        self.run
    }

    /// Performs one accepted step, shrinking `dt` as needed.
    pub fn advance(&mut self) -> Result<()> {
        let t_final = self.opts.t_final;
        let h0 = self.run.trace.h0();
        loop {
            let dt = self.dt.min(t_final - self.t);
            if dt < self.opts.dt_min && t_final - self.t > self.opts.dt_min {
                return Err(Error::StepUnderflow { t: self.t, dt });
            }
            let fresh = self.jacobian.is_none();
            if fresh {
                let jf = f_jacobian(self.disc, &self.model, &self.x, self.opts.newton.exec)?;
                self.jacobian = Some((jf, 0));
            }
            let (jf, _) = self.jacobian.as_ref().expect("set above");
            let step = match midpoint_with_jacobian(self.disc, &self.model, &self.x, dt, &self.opts.newton, jf) {
                Ok(s) => s,
                Err(Error::NewtonFailure { .. }) | Err(Error::Numerical(_)) => {
                    self.jacobian = None;
                    if fresh {
                        self.run.newton_failures += 1;
                        self.dt = dt / 2.0;
                        self.easy = 0;
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };
            if let Some((_, age)) = self.jacobian.as_mut() {
                *age += 1;
                if *age >= JACOBIAN_MAX_AGE || step.newton_iters > JACOBIAN_SLOW_ITERS {
                    self.jacobian = None;
                }
            }
            let h_new = energy(self.disc, &step.x_new, self.model.p);
            let e = h_new - self.h + dt * step.dissipation;
            let target = self.opts.tol_energy * h0 * dt / t_final;
            if e.abs() > target || !h_new.is_finite() {
                self.run.rejected_steps += 1;
                self.dt = dt / 2.0;
                self.easy = 0;
                continue;
            }
            let last = t_final - (self.t + dt) <= 1e-12 * t_final;
            self.t = if last { t_final } else { self.t + dt };
            self.x = step.x_new;
            self.h = h_new;
            self.run.trajectory.push(self.t, &self.x, last);
            self.run.trajectory.steps.push(StepRecord {
                t: self.t,
                dt,
                newton_iters: step.newton_iters,
                energy_residual: e,
                chol_shift: step.chol_shift,
            });
            self.run.trace.rows.push(TraceRow {
                t: self.t,
                h: h_new,
                dissipation_rate: step.dissipation,
                energy_residual: e,
                dt,
                newton_iters: step.newton_iters,
                min_speed: step.min_speed,
                chol_shift_flag: step.chol_shift as u8,
            });
            if e.abs() <= 0.25 * target {
                self.easy += 1;
                if self.easy >= EASY_STEPS {
                    self.dt = (self.dt * 2.0).min(self.opts.dt_max());
                    self.easy = 0;
                }
            } else {
                self.easy = 0;
            }
            return Ok(());
        }
    }

    /// Steps until `t_final`.
    pub fn run_to_end(&mut self) -> Result<()> {
        while self.t < self.opts.t_final {
            self.advance()?;
        }
        Ok(())
    }
}

/// Integrates from `x0` to `opts.t_final`.
pub fn integrate(disc: &Discretization, model: Model, x0: DVector<f64>, opts: IntegratorOptions) -> Result<Run> {
    let mut it = Integrator::new(disc, model, x0, opts)?;
    it.run_to_end()?;
    Ok(it.into_run())
}

//! Measurements of the inequalities, identities and compactness quantities the
//! existence argument rests on: the vector inequality behind monotonicity,
//! monotonicity of `G(θ) = |θ|^{p-2}θ`, time-shift moduli, the finite
//! difference chain rule, Gagliardo–Nirenberg ratios, the weak-form residual
//! and Cauchy sweeps in `N`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::FieldValue;
use crate::config::SolverConfig;
use crate::field::{
    check_p, contract, dual_exponent, frobenius, grad_v_p, integrate_sample, pow_nonneg, sample_node, stress_of,
    v_p_of, Discretization,
};
use crate::galerkin::Model;
use crate::integrator::{integrate, Trajectory};
use crate::quadrature::QuadratureRule;
use crate::par::{map_items, Execution};
use crate::{Error, Result};

/// Spatial dimension.
const DIM: f64 = 2.0;

/// Radii of the circles sampled by [`check_gady`] besides the unit square.
pub const GADY_RADII: [f64; 3] = [1e-6, 1.0, 1e3];

/// Lower bound accepted for the monotonicity pairing (roundoff allowance).
pub const MONOTONE_FLOOR: f64 = -1e-14;

/// Largest divergence a weak-form test field may have.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-10;

/// Outcome of one measured inequality or identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub samples: usize,
    /// Worst ratio or defect over the samples.
    pub worst: f64,
    /// Threshold the worst value is compared against.
    pub threshold: f64,
    pub p: f64,
    pub seed: u64,
    pub pass: bool,
}

impl InequalityReport {
    fn lower_bound(name: &str, samples: usize, worst: f64, threshold: f64, p: f64, seed: u64) -> Self {
        Self {
            name: name.into(),
            samples,
            worst,
            threshold,
            p,
            seed,
            pass: worst.is_finite() && worst > threshold,
        }
    }

    /// Report whose worst value must not exceed `threshold`.
    pub fn upper_bound(name: &str, samples: usize, worst: f64, threshold: f64, p: f64, seed: u64) -> Self {
        Self {
            name: name.into(),
            samples,
            worst,
            threshold,
            p,
            seed,
            pass: worst.is_finite() && worst <= threshold,
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn on_circle(rng: &mut ChaCha8Rng, r: f64) -> [f64; 2] {
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    [r * a.cos(), r * a.sin()]
}

/// `(G(a) − G(b))·(a − b) / ((|a| + |b|)^{p-2} |a − b|²)` for vectors, `None` when `a = b`.
pub fn gady_ratio(p: f64, a: [f64; 2], b: [f64; 2]) -> Option<f64> {
    let d = [a[0] - b[0], a[1] - b[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    if dd == 0.0 {
        return None;
    }
    let ga = v_p_of(a, p);
    let gb = v_p_of(b, p);
    let lhs = (ga[0] - gb[0]) * d[0] + (ga[1] - gb[1]) * d[1];
    let weight = pow_nonneg(a[0].hypot(a[1]) + b[0].hypot(b[1]), p - 2.0);
    Some(lhs / (weight * dd))
}

/// Empirical `C(p)`: the infimum of [`gady_ratio`] over pairs drawn uniformly
/// from `[-1,1]²` and from circles of the radii in [`GADY_RADII`], plus the
/// antipodal pair `(1,0), (-1,0)`.
pub fn check_gady(p: f64, n_samples: usize, seed: u64) -> Result<InequalityReport> {
    check_p(p)?;
    let mut rng = rng(seed);
    let mut inf = gady_ratio(p, [1.0, 0.0], [-1.0, 0.0]).expect("distinct");
    let mut used = 1;
    for k in 0..n_samples {
        let (a, b) = match k % 4 {
            0 => (
                [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)],
                [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)],
            ),
            c => {
                let r = GADY_RADII[c - 1];
                (on_circle(&mut rng, r), on_circle(&mut rng, r))
            }
        };
        if let Some(r) = gady_ratio(p, a, b) {
            inf = inf.min(r);
            used += 1;
        }
    }
    Ok(InequalityReport::lower_bound("gady", used, inf, 0.0, p, seed))
}

/// `⟨θ₁ − θ₂, G(θ₁) − G(θ₂)⟩` in the Frobenius product.
pub fn monotone_pairing(p: f64, a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    let ga = stress_of(a, p);
    let gb = stress_of(b, p);
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += (a[i][j] - b[i][j]) * (ga[i][j] - gb[i][j]);
        }
    }
    s
}

fn random_symmetric(rng: &mut ChaCha8Rng) -> [[f64; 2]; 2] {
    let off = rng.gen_range(-1.0..=1.0);
    [[rng.gen_range(-1.0..=1.0), off], [off, rng.gen_range(-1.0..=1.0)]]
}

/// Smallest monotonicity pairing over random symmetric pairs with entries in `[-1,1]`.
pub fn check_monotone_g(p: f64, n_samples: usize, seed: u64) -> Result<InequalityReport> {
    check_p(p)?;
    let mut rng = rng(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..n_samples {
        let a = random_symmetric(&mut rng);
        let b = random_symmetric(&mut rng);
        worst = worst.min(monotone_pairing(p, &a, &b));
    }
    let mut r = InequalityReport::lower_bound("monotone_g", n_samples, worst, MONOTONE_FLOOR, p, seed);
    r.pass = worst >= MONOTONE_FLOOR;
    Ok(r)
}

/// Largest jump of `λ ↦ ⟨b, G(a + λb)⟩` between neighbours of a grid of spacing
/// `width` on `[-lambda_max, lambda_max]`, together with the scale
/// `|b| (|a| + lambda_max |b|)^{p-1}` of the map.
pub fn hemicontinuity_jump(p: f64, a: &[[f64; 2]; 2], b: &[[f64; 2]; 2], lambda_max: f64, width: f64) -> (f64, f64) {
    let f = |lambda: f64| {
        let m = [
            [a[0][0] + lambda * b[0][0], a[0][1] + lambda * b[0][1]],
            [a[1][0] + lambda * b[1][0], a[1][1] + lambda * b[1][1]],
        ];
        contract(b, &stress_of(&m, p))
    };
    let steps = (2.0 * lambda_max / width).ceil() as usize;
    let mut jump: f64 = 0.0;
    let mut prev = f(-lambda_max);
    for k in 1..=steps {
        let cur = f(-lambda_max + k as f64 * width);
        jump = jump.max((cur - prev).abs());
        prev = cur;
    }
    let nb = frobenius(b);
    (jump, nb * pow_nonneg(frobenius(a) + lambda_max * nb, p - 1.0))
}

/// `∫|v|^r` for the field with coefficients `x`.
fn v_power(disc: &Discretization, x: &DVector<f64>, r: f64) -> f64 {
    integrate_sample(disc, x, |s| pow_nonneg(s.speed, r))
}

/// Trapezoid rule on a nonuniform grid.
fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2)
        .zip(f.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum()
}

/// Snapshot times strictly inside `(a, b)`, bracketed by `a` and `b`.
fn grid_between(traj: &Trajectory, a: f64, b: f64) -> Vec<f64> {
    let mut g = vec![a];
    g.extend(traj.times.iter().copied().filter(|&t| t > a && t < b));
    if b > a {
        g.push(b);
    }
    g
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, m)| *h > 0.0 && *m > 0.0)
        .map(|(h, m)| (h.ln(), m.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Table of `‖τ_h v − v‖^p_{L^p(0,T−h;L^p)}` and its log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftModulus {
    /// `(h, modulus)` rows in the order of the input.
    pub rows: Vec<(f64, f64)>,
    /// Least-squares slope of `log modulus` against `log h` (rows with `h > 0`).
    pub slope: f64,
}

/// Time-shift modulus of a trajectory, by the trapezoid rule on the snapshot
/// grid with linearly interpolated coefficients at `t + h`.
pub fn time_shift_modulus(traj: &Trajectory, disc: &Discretization, p: f64, h_list: &[f64]) -> Result<ShiftModulus> {
    check_p(p)?;
    if traj.len() < 10 {
        return Err(Error::invalid(format!(
            "time-shift modulus needs at least 10 snapshots, trajectory has {}",
            traj.len()
        )));
    }
    let t0 = traj.times[0];
    let span = traj.t_final() - t0;
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        if !(h >= 0.0 && h < span) {
            return Err(Error::invalid(format!("shift h = {h} must lie in [0, T) with T = {span}")));
        }
        let grid = grid_between(traj, t0, t0 + span - h);
        let vals = map_items(&grid, Execution::default(), |&t| {
            let diff = traj.state_at(t + h) - traj.state_at(t);
            v_power(disc, &diff, p)
        });
        rows.push((h, trapezoid(&grid, &vals)));
    }
    let slope = fit_slope(&rows);
    Ok(ShiftModulus { rows, slope })
}

/// One-sided difference quotient used by [`chain_rule_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difference {
    /// `D_h^- g(t) = (g(t) − g(t−h))/h`.
    Backward,
    /// `D_h^+ g(t) = (g(t+h) − g(t))/h`.
    Forward,
}

/// `|∫_s^t ⟨v(τ), D_h v_p(τ)⟩ dτ − (H(t) − H(s))|` with `s = T/4`, `t = 3T/4`.
pub fn chain_rule_check(traj: &Trajectory, disc: &Discretization, p: f64, h: f64, side: Difference) -> Result<f64> {
    check_p(p)?;
    let t0 = traj.times[0];
    let span = traj.t_final() - t0;
    if !(h > 0.0 && h < span / 4.0) {
        return Err(Error::invalid(format!("difference step h = {h} must lie in (0, T/4) with T = {span}")));
    }
    let (s, t) = (t0 + 0.25 * span, t0 + 0.75 * span);
    let nodal = disc.nodal();
    let grid = grid_between(traj, s, t);
    let vals = map_items(&grid, Execution::default(), |&tau| {
        let x = traj.state_at(tau);
        let other = match side {
            Difference::Backward => traj.state_at(tau - h),
            Difference::Forward => traj.state_at(tau + h),
        };
        let mut acc = 0.0;
        for q in 0..nodal.n_nodes() {
            let v = sample_node(nodal, x.as_slice(), q).v;
            let vo = sample_node(nodal, other.as_slice(), q).v;
            let a = v_p_of(v, p);
            let b = v_p_of(vo, p);
            let dq = match side {
                Difference::Backward => [a[0] - b[0], a[1] - b[1]],
                Difference::Forward => [b[0] - a[0], b[1] - a[1]],
            };
            acc += nodal.weight(q) * (v[0] * dq[0] + v[1] * dq[1]);
        }
        acc / h
    });
    let q = dual_exponent(p);
    let h_t = v_power(disc, &traj.state_at(t), p) / q;
    let h_s = v_power(disc, &traj.state_at(s), p) / q;
    Ok((trapezoid(&grid, &vals) - (h_t - h_s)).abs())
}

/// Gagliardo–Nirenberg ratios
/// `‖v‖_{2p}^{2p} / (‖∇v‖_p^d ‖v‖_p^{2p−d})` and
/// `‖v_p‖_r^r / (‖∇v_p‖_q^{d/(2p−3)} ‖v_p‖_q^{(2p−d)/(2p−3)})` with `r = 2p/(2p−3)`.
pub fn gn_ratio(disc: &Discretization, x: &DVector<f64>, p: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    if x.iter().all(|&c| c == 0.0) {
        return Err(Error::invalid("Gagliardo-Nirenberg ratio of the zero state"));
    }
    let q = dual_exponent(p);
    let r = 2.0 * p / (2.0 * p - 3.0);
    let nodal = disc.nodal();
    let (mut v2p, mut gp, mut vp, mut vpr, mut gvpq) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..nodal.n_nodes() {
        let s = sample_node(nodal, x.as_slice(), k);
        let w = nodal.weight(k);
        v2p += w * pow_nonneg(s.speed, 2.0 * p);
        gp += w * pow_nonneg(s.grad_norm(), p);
        vp += w * pow_nonneg(s.speed, p);
        vpr += w * pow_nonneg(s.speed, (p - 1.0) * r);
        gvpq += w * pow_nonneg(frobenius(&grad_v_p(&s, p)), q);
    }
    let ratio_v = v2p / (gp.powf(DIM / p) * vp.powf((2.0 * p - DIM) / p));
    let e = 2.0 * p - 3.0;
    let ratio_vp = vpr / (gvpq.powf(DIM / (e * q)) * vp.powf((2.0 * p - DIM) / (e * q)));
    if !(ratio_v.is_finite() && ratio_vp.is_finite()) {
        return Err(Error::Numerical("non-finite Gagliardo-Nirenberg ratio".into()));
    }
    Ok((ratio_v, ratio_vp))
}

/// `(‖𝒟v‖_p / ‖∇v‖_p, ‖∇v‖_p / (‖v‖_p + ‖𝒟v‖_p))`.
pub fn korn_ratios(disc: &Discretization, x: &DVector<f64>, p: f64) -> (f64, f64) {
    let n = crate::field::lp_norms(disc, x, p);
    let (v, d, g) = (n.v.powf(1.0 / p), n.d_sym.powf(1.0 / p), n.grad.powf(1.0 / p));
    (d / g, g / (v + d))
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0))
}

/// Largest `‖∇v‖_p / (‖v‖_p + ‖𝒟v‖_p)` over random states; fails if any state
/// has `‖𝒟v‖_p > ‖∇v‖_p`.
pub fn check_korn(disc: &Discretization, p: f64, n_samples: usize, seed: u64) -> Result<InequalityReport> {
    check_p(p)?;
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    let mut ordered = true;
    for _ in 0..n_samples {
        let x = random_state(&mut rng, disc.dim());
        let (dg, ratio) = korn_ratios(disc, &x, p);
        ordered &= dg <= 1.0 + 1e-12;
        worst = worst.max(ratio);
    }
    let mut r = InequalityReport::upper_bound("korn", n_samples, worst, f64::INFINITY, p, seed);
    r.pass &= ordered;
    Ok(r)
}

/// Largest Gagliardo–Nirenberg ratios over random states.
pub fn check_gn(disc: &Discretization, p: f64, n_samples: usize, seed: u64) -> Result<[InequalityReport; 2]> {
    let mut rng = rng(seed);
    let (mut wv, mut wvp): (f64, f64) = (0.0, 0.0);
    for _ in 0..n_samples {
        let x = random_state(&mut rng, disc.dim());
        let (a, b) = gn_ratio(disc, &x, p)?;
        wv = wv.max(a);
        wvp = wvp.max(b);
    }
    Ok([
        InequalityReport::upper_bound("gn_v", n_samples, wv, f64::INFINITY, p, seed),
        InequalityReport::upper_bound("gn_vp", n_samples, wvp, f64::INFINITY, p, seed),
    ])
}

/// Largest relative gap between `∫|v_p|^q` and `∫|v|^p` over the snapshots.
pub fn vp_norm_defect(traj: &Trajectory, disc: &Discretization, p: f64) -> f64 {
    let q = dual_exponent(p);
    traj.coeffs
        .iter()
        .map(|x| {
            let a = integrate_sample(disc, x, |s| {
                let w = v_p_of(s.v, p);
                pow_nonneg(w[0].hypot(w[1]), q)
            });
            let b = v_power(disc, x, p);
            if b == 0.0 {
                a.abs()
            } else {
                ((a - b) / b).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Scalar time profile of a space-time test function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeFactor {
    /// `(1 − t/t_end)^m` on `[0, t_end]`, zero afterwards.
    Decay { m: u32, t_end: f64 },
    /// `((t − a)(b − t))² / ((b − a)/2)⁴` on `[a, b]`, zero elsewhere.
    Window { start: f64, end: f64 },
}

impl TimeFactor {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::Decay { m, t_end } => {
                if t >= t_end {
                    0.0
                } else {
                    (1.0 - t / t_end).powi(m as i32)
                }
            }
            TimeFactor::Window { start, end } => {
                if t <= start || t >= end {
                    0.0
                } else {
                    let r = 0.5 * (end - start);
                    ((t - start) * (end - t)).powi(2) / r.powi(4)
                }
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::Decay { m, t_end } => {
                if t >= t_end || m == 0 {
                    0.0
                } else {
                    -(m as f64) / t_end * (1.0 - t / t_end).powi(m as i32 - 1)
                }
            }
            TimeFactor::Window { start, end } => {
                if t <= start || t >= end {
                    0.0
                } else {
                    let r = 0.5 * (end - start);
                    let u = (t - start) * (end - t);
                    2.0 * u * (end + start - 2.0 * t) / r.powi(4)
                }
            }
        }
    }
}

/// Spatial part of a test function, tabulated at the quadrature nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    pub label: String,
    pub values: Vec<FieldValue>,
}

impl SpatialField {
    /// Basis field `k` of the discretization.
    pub fn from_basis(disc: &Discretization, k: usize) -> Result<Self> {
        let nodal = disc.nodal();
        if k >= nodal.n_fields() {
            return Err(Error::IndexOutOfRange {
                index: k,
                size: nodal.n_fields(),
            });
        }
        let values = (0..nodal.n_nodes())
            .map(|q| {
                let g = nodal.grads_at(q)[k];
                FieldValue {
                    value: nodal.values_at(q)[k],
                    grad: [[g[0], g[1]], [g[2], g[3]]],
                }
            })
            .collect();
        Ok(Self {
            label: format!("phi{}", k + 1),
            values,
        })
    }

    /// Arbitrary field evaluated at the quadrature nodes.
    pub fn from_fn<F: Fn(f64, f64) -> FieldValue>(disc: &Discretization, label: &str, f: F) -> Self {
        let nodal = disc.nodal();
        let values = (0..nodal.n_nodes())
            .map(|q| {
                let (x, y) = nodal.point(q);
                f(x, y)
            })
            .collect();
        Self {
            label: label.into(),
            values,
        }
    }

    pub fn max_divergence(&self) -> f64 {
        self.values.iter().map(|f| f.divergence().abs()).fold(0.0, f64::max)
    }
}

/// Space-time test function `θ(t) φ(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestField {
    pub spatial: Arc<SpatialField>,
    pub time: TimeFactor,
}

impl TestField {
    pub fn label(&self) -> String {
        match self.time {
            TimeFactor::Decay { m, .. } => format!("{}*decay{m}", self.spatial.label),
            TimeFactor::Window { start, end } => format!("{}*window[{start},{end}]", self.spatial.label),
        }
    }
}

/// Products `(1 − t/T)^m φ_k` for `m = 1..=4` and the first `n_fields` basis fields.
pub fn weak_test_family(disc: &Discretization, t_final: f64, n_fields: usize) -> Result<Vec<TestField>> {
    let mut out = Vec::new();
    for k in 0..n_fields.min(disc.dim()) {
        let spatial = Arc::new(SpatialField::from_basis(disc, k)?);
        for m in 1..=4 {
            out.push(TestField {
                spatial: Arc::clone(&spatial),
                time: TimeFactor::Decay { m, t_end: t_final },
            });
        }
    }
    Ok(out)
}

/// The four terms of the weak formulation for one test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakTerms {
    pub label: String,
    /// `∫∫ v_p·∂_t φ`.
    pub time_derivative: f64,
    /// `∫∫ ∇φ : (v ⊗ v_p)`.
    pub transport: f64,
    /// `−ν ∫∫ ∇φ : |𝒟v|^{p-2}𝒟v`.
    pub viscous: f64,
    /// `∫ v_p(0)·φ(0)`.
    pub initial: f64,
    pub residual: f64,
    /// Largest absolute term.
    pub scale: f64,
}

impl WeakTerms {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.residual.abs() / self.scale
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    pub terms: Vec<WeakTerms>,
    pub max_abs: f64,
    /// `max_abs` over the largest term of any test function.
    pub max_relative: f64,
}

/// Residual of the weak formulation on a stored trajectory, by quadrature in
/// space and the trapezoid rule over the snapshots.
pub fn weak_residual(traj: &Trajectory, tests: &[TestField], disc: &Discretization, model: &Model) -> Result<WeakResidual> {
    let t_end = traj.t_final();
    let nodal = disc.nodal();
    let mut spatial: Vec<Arc<SpatialField>> = Vec::new();
    let mut index = Vec::with_capacity(tests.len());
    for t in tests {
        if t.spatial.values.len() != nodal.n_nodes() {
            return Err(Error::invalid(format!(
                "test field {} is tabulated on {} nodes, the rule has {}",
                t.label(),
                t.spatial.values.len(),
                nodal.n_nodes()
            )));
        }
        let div = t.spatial.max_divergence();
        if div > DIVERGENCE_TOLERANCE {
            return Err(Error::invalid(format!(
                "test field {} is not divergence-free (max |div| = {div:e})",
                t.label()
            )));
        }
        if t.time.value(t_end) != 0.0 {
            return Err(Error::invalid(format!("test field {} does not vanish at T = {t_end}", t.label())));
        }
        let k = match spatial.iter().position(|s| Arc::ptr_eq(s, &t.spatial)) {
            Some(k) => k,
            None => {
                spatial.push(Arc::clone(&t.spatial));
                spatial.len() - 1
            }
        };
        index.push(k);
    }

    let (p, nu) = (model.p, model.nu);
    // per snapshot and spatial field: (∫ v_p·φ, ∫ ∇φ:(v⊗v_p), ∫ ∇φ:S)
    let per_snapshot = map_items(&traj.coeffs, Execution::default(), |x| {
        let mut acc = vec![[0.0; 3]; spatial.len()];
        for q in 0..nodal.n_nodes() {
            let s = sample_node(nodal, x.as_slice(), q);
            let w = nodal.weight(q);
            let vp = v_p_of(s.v, p);
            let outer = [[s.v[0] * vp[0], s.v[0] * vp[1]], [s.v[1] * vp[0], s.v[1] * vp[1]]];
            let stress = stress_of(&s.d_sym, p);
            for (a, f) in acc.iter_mut().zip(&spatial) {
                let phi = &f.values[q];
                a[0] += w * (vp[0] * phi.value[0] + vp[1] * phi.value[1]);
                a[1] += w * contract(&phi.grad, &outer);
                a[2] += w * contract(&phi.grad, &stress);
            }
        }
        acc
    });

    let times = &traj.times;
    let mut terms = Vec::with_capacity(tests.len());
    for (test, &k) in tests.iter().zip(&index) {
        let col = |c: usize, weight: &dyn Fn(f64) -> f64| -> Vec<f64> {
            times.iter().zip(&per_snapshot).map(|(&t, a)| weight(t) * a[k][c]).collect()
        };
        let time_derivative = trapezoid(times, &col(0, &|t| test.time.derivative(t)));
        let transport = trapezoid(times, &col(1, &|t| test.time.value(t)));
        let viscous = -nu * trapezoid(times, &col(2, &|t| test.time.value(t)));
        let initial = per_snapshot[0][k][0] * test.time.value(times[0]);
        let residual = time_derivative + transport + viscous + initial;
        let scale = [time_derivative, transport, viscous, initial]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        terms.push(WeakTerms {
            label: test.label(),
            time_derivative,
            transport,
            viscous,
            initial,
            residual,
            scale,
        });
    }
    let max_abs = terms.iter().map(|t| t.residual.abs()).fold(0.0, f64::max);
    // relative to the largest term over the whole family, so that test fields
    // the solution barely excites do not report ratios of roundoff
    let scale = terms.iter().map(|t| t.scale).fold(0.0, f64::max);
    let max_relative = if scale == 0.0 { 0.0 } else { max_abs / scale };
    Ok(WeakResidual {
        terms,
        max_abs,
        max_relative,
    })
}

/// Space-time `L^p` distance between two trajectories on possibly different
/// bases, sampled on a shared rule and a uniform grid of `n_times` instants.
pub fn trajectory_distance(
    a: (&Trajectory, &Discretization),
    b: (&Trajectory, &Discretization),
    p: f64,
    n_times: usize,
) -> Result<f64> {
    let (ta, da) = a;
    let (tb, db) = b;
    let na = da.nodal();
    let nb = db.nodal();
    if na.n_nodes() != nb.n_nodes() || da.rule().order() != db.rule().order() {
        return Err(Error::invalid("trajectories must be sampled on the same quadrature rule"));
    }
    let t_end = ta.t_final().min(tb.t_final());
    let t0 = ta.times[0].max(tb.times[0]);
    let n = n_times.max(2);
    let grid: Vec<f64> = (0..n).map(|k| t0 + (t_end - t0) * k as f64 / (n - 1) as f64).collect();
    let vals = map_items(&grid, Execution::default(), |&t| {
        let xa = ta.state_at(t);
        let xb = tb.state_at(t);
        (0..na.n_nodes())
            .map(|q| {
                let va = sample_node(na, xa.as_slice(), q).v;
                let vb = sample_node(nb, xb.as_slice(), q).v;
                na.weight(q) * pow_nonneg((va[0] - vb[0]).hypot(va[1] - vb[1]), p)
            })
            .sum::<f64>()
    });
    Ok(trapezoid(&grid, &vals).powf(1.0 / p))
}

/// Largest `∫|v(t)|^p` over the snapshots, and its initial value.
pub fn sup_lp(traj: &Trajectory, disc: &Discretization, p: f64) -> (f64, f64) {
    let vals: Vec<f64> = traj.coeffs.iter().map(|x| v_power(disc, x, p)).collect();
    (vals.iter().copied().fold(0.0, f64::max), vals[0])
}

/// One run of a convergence sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub n: usize,
    pub basis_id: String,
    pub steps: usize,
    /// `∫|v₀|^p`.
    pub initial_lp: f64,
    /// Largest `∫|v(t)|^p` over the stored snapshots.
    pub sup_lp: f64,
    /// `sup_lp ≤ initial_lp`.
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDistance {
    pub n_i: usize,
    pub n_j: usize,
    pub distance: f64,
}

/// Pairwise space-time distances between runs of increasing basis size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub p: f64,
    pub runs: Vec<SweepRun>,
    pub distances: Vec<SweepDistance>,
    /// Whether the distance to the largest run is nonincreasing along the list.
    pub decreasing: bool,
}

/// Instants of the shared time grid used by [`convergence_sweep`].
pub const SWEEP_TIMES: usize = 65;

/// Runs `config` for every basis size in `n_list` and measures pairwise
/// `L^p(0,T;L^p)` distances on a common quadrature rule.
pub fn convergence_sweep(config: &SolverConfig, n_list: &[usize]) -> Result<SweepReport> {
    if n_list.is_empty() {
        return Err(Error::invalid("the basis-size list is empty"));
    }
    if n_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid(format!("basis sizes must be ascending, got {n_list:?}")));
    }
    let p = config.p;
    let mut solved = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cfg = SolverConfig {
            n_basis: n,
            ..config.clone()
        };
        let prep = cfg.prepare()?;
        let run = integrate(&prep.disc, prep.model, prep.x0.clone(), prep.opts)?;
        solved.push((n, prep.disc, run.trajectory));
    }
    let order = solved.iter().map(|s| s.1.rule().order()).max().expect("nonempty");
    let rule = QuadratureRule::new(order)?;
    let common: Vec<Discretization> = solved.iter().map(|s| s.1.with_rule(rule.clone())).collect();

    let runs = solved
        .iter()
        .zip(&common)
        .map(|((n, disc, traj), fine)| {
            let (sup, init) = sup_lp(traj, fine, p);
            SweepRun {
                n: *n,
                basis_id: disc.basis().id().to_string(),
                steps: traj.len() - 1,
                initial_lp: init,
                sup_lp: sup,
                bounded: sup <= init,
            }
        })
        .collect();
    let mut distances = Vec::new();
    for i in 0..solved.len() {
        for j in i + 1..solved.len() {
            distances.push(SweepDistance {
                n_i: solved[i].0,
                n_j: solved[j].0,
                distance: trajectory_distance((&solved[i].2, &common[i]), (&solved[j].2, &common[j]), p, SWEEP_TIMES)?,
            });
        }
    }
    let last = n_list.len() - 1;
    let to_last: Vec<f64> = distances
        .iter()
        .filter(|d| d.n_j == n_list[last])
        .map(|d| d.distance)
        .collect();
    let decreasing = to_last.windows(2).all(|w| w[1] <= w[0]);
    Ok(SweepReport {
        p,
        runs,
        distances,
        decreasing,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!("checked by is_io_error");
    }
    Error::Csv(e)
}

/// Writes reports as pretty JSON.
pub fn write_reports_json(path: &Path, reports: &[InequalityReport]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), reports)?;
    Ok(())
}

/// Writes reports as CSV, one row per report.
pub fn write_reports_csv(path: &Path, reports: &[InequalityReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a report CSV written by [`write_reports_csv`].
pub fn read_reports_csv(path: &Path) -> Result<Vec<InequalityReport>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (k, row) in r.deserialize().enumerate() {
        out.push(row.map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: k as u64 + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

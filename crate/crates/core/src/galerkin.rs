//! Assembly of the Galerkin system `A(X) Ẋ = F(X)`.
//!
//! With `v = Σ X_k φ_k` and `s = |v|`,
//!
//! ```text
//! A_ij = ∫ s^{p-2} φ_i·φ_j + (p-2) s^{p-4} (v·φ_i)(v·φ_j)
//! F_i  = -ν ∫ ∇φ_i : |𝒟v|^{p-2} 𝒟v
//!        - ∫ s^{p-2} φ_i·(v·∇v) - (p-2) ∫ s^{p-4} (φ_i·v)(v·∇v·v)
//! ```
//!
//! The transport integral can also be assembled in the equivalent form
//!
//! ```text
//! -(1/p) ∫ φ_i·(v·∇v_p) + ((p-1)/p) ∫ (v·∇φ_i)·v_p
//! ```
//!
//! (integrate by parts using `div v = 0`, `v = 0` on the boundary), whose
//! pairing with `X` vanishes node by node, so `Xᵀ F = −ν ∫|𝒟v|^p` holds for any
//! quadrature rule. With the expanded form the cancellation is only as good as
//! the quadrature of the non-smooth factor `|v|^{p-2}`.
//!
//! Everything is evaluated in one sweep over quadrature nodes. Nodes are
//! processed in fixed-size chunks whose partial sums are added in order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::field::{check_p, dual_exponent, lp_norms, pow_nonneg, sample_node, Discretization, PointSample};
use crate::helmholtz::{leray_project, GridField};
use crate::par::{map_chunks, Execution};

/// Quadrature nodes per work unit.
const NODE_CHUNK: usize = 32;
/// Relative speed below which the `(p-2)|v|^{p-4}` terms are dropped for `2 < p < 4`.
pub const SPEED_GUARD: f64 = 1e-13;

/// How the transport integral is discretized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportForm {
    /// `-∫ s^{p-2} φ_i·(v·∇v) - (p-2) ∫ s^{p-4} (φ_i·v)(v·∇v·v)`.
    Expanded,
    /// Energy-conserving split, exact `Xᵀ F_transport = 0` at every node.
    #[default]
    Skew,
}

impl std::fmt::Display for TransportForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransportForm::Expanded => "expanded",
            TransportForm::Skew => "skew",
        })
    }
}

/// Material parameters and transport discretization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub p: f64,
    pub nu: f64,
    pub transport: TransportForm,
}

impl Model {
    pub fn new(p: f64, nu: f64) -> Result<Self> {
        check_p(p)?;
        check_nu(nu)?;
        Ok(Self {
            p,
            nu,
            transport: TransportForm::default(),
        })
    }

    pub fn with_transport(mut self, transport: TransportForm) -> Self {
        self.transport = transport;
        self
    }
}

/// Quadrature order used by the solver when none is configured.
///
/// For even integer `p` every integrand is a polynomial and the returned order
/// integrates it exactly (and is at least 20). Otherwise `|v|^{p-2}` has a cusp
/// at stagnation points, Gauss rules converge only algebraically, and a fixed
/// order of 96 keeps the quadrature error of `F` near `1e-5` relative for the
/// bases used in practice.
pub fn solver_quadrature_order(basis: &BasisSet, p: f64) -> usize {
    let d = basis
        .stream_functions()
        .iter()
        .map(|s| s.i.max(s.j) + 4)
        .max()
        .unwrap_or(4);
    let exact = |pp: f64| (((pp + 1.0) * d as f64 + 1.0) / 2.0).ceil() as usize;
    let even = p.fract() == 0.0 && (p as i64) % 2 == 0;
    if even {
        exact(p).max(20)
    } else {
        exact(p.ceil()).max(96)
    }
}

/// Per-assembly statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AssemblyDiagnostics {
    pub nodes: usize,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Nodes at which the `|v|^{p-4}` terms were dropped.
    pub guard_activations: usize,
}

/// `A(X)` and `F(X)` with the transport part of `F` kept separately.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub a_matrix: DMatrix<f64>,
    pub f_vector: DVector<f64>,
    pub f_viscous: DVector<f64>,
    pub f_transport: DVector<f64>,
    pub diagnostics: AssemblyDiagnostics,
}

/// What to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Parts {
    A,
    F,
    Both,
    /// `F` and the products `A(X) d` for the given directions, without forming `A`.
    Action,
}

struct Partial {
    a: Option<DMatrix<f64>>,
    visc: DVector<f64>,
    trans: DVector<f64>,
    actions: Vec<DVector<f64>>,
    activations: usize,
}

fn check_inputs(disc: &Discretization, x: &DVector<f64>, p: f64) -> Result<()> {
    check_p(p)?;
    if x.len() != disc.dim() {
        return Err(Error::invalid(format!(
            "state has {} coefficients, basis has {} fields",
            x.len(),
            disc.dim()
        )));
    }
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("state contains non-finite coefficients"));
    }
    Ok(())
}

fn guarded(p: f64, speed: f64, eps: f64) -> bool {
    p > 2.0 && p < 4.0 && speed < eps
}

/// Node-level weights shared by all assembled quantities.
struct NodeTerms {
    /// `w s^{p-2}`
    base: f64,
    /// `w (p-2) s^{p-4}`, zero when guarded
    cross: f64,
    skipped: bool,
}

fn node_terms(p: f64, w: f64, speed: f64, eps: f64) -> NodeTerms {
    let skipped = guarded(p, speed, eps);
    let cross = if p > 2.0 && !skipped && speed > 0.0 {
        w * (p - 2.0) * speed.powf(p - 4.0)
    } else {
        0.0
    };
    NodeTerms {
        base: w * pow_nonneg(speed, p - 2.0),
        cross,
        skipped,
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble_parts(
    disc: &Discretization,
    x: &DVector<f64>,
    p: f64,
    nu: f64,
    transport: TransportForm,
    parts: Parts,
    dirs: &[&DVector<f64>],
    exec: Execution,
) -> (Partial, AssemblyDiagnostics) {
    let nodal = disc.nodal();
    let n = nodal.n_fields();
    let nq = nodal.n_nodes();
    let c = x.as_slice();
    let samples: Vec<PointSample> = map_chunks(nq, 256, exec, |r| {
        r.map(|q| sample_node(nodal, c, q)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let (min_speed, max_speed) = samples
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.speed), hi.max(s.speed)));
    let eps = SPEED_GUARD * (max_speed + 1e-300);
    let want_a = matches!(parts, Parts::A | Parts::Both);
    let want_f = parts != Parts::A;
    let want_action = parts == Parts::Action;

    let partials = map_chunks(nq, NODE_CHUNK, exec, |range| {
        let mut out = Partial {
            a: None,
            visc: DVector::zeros(n),
            trans: DVector::zeros(n),
            actions: if want_action {
                vec![DVector::zeros(n); dirs.len()]
            } else {
                Vec::new()
            },
            activations: 0,
        };
        let rows_per_node = if p > 2.0 { 3 } else { 2 };
        let mut r = if want_a {
            DMatrix::zeros(rows_per_node * range.len(), n)
        } else {
            DMatrix::zeros(0, 0)
        };
        for (local, q) in range.clone().enumerate() {
            let s = &samples[q];
            let w = nodal.weight(q);
            let vals = nodal.values_at(q);
            let nt = node_terms(p, w, s.speed, eps);
            if nt.skipped {
                out.activations += 1;
            }
            if want_a {
                let sa = nt.base.sqrt();
                let sb = nt.cross.sqrt();
                let row = rows_per_node * local;
                for (i, phi) in vals.iter().enumerate() {
                    r[(row, i)] = sa * phi[0];
                    r[(row + 1, i)] = sa * phi[1];
                    if rows_per_node == 3 {
                        r[(row + 2, i)] = sb * (s.v[0] * phi[0] + s.v[1] * phi[1]);
                    }
                }
            }
            if want_action {
                for (d, acc) in dirs.iter().zip(out.actions.iter_mut()) {
                    let mut dv = [0.0; 2];
                    for (phi, &dk) in vals.iter().zip(d.iter()) {
                        dv[0] += dk * phi[0];
                        dv[1] += dk * phi[1];
                    }
                    let vd = nt.cross * (s.v[0] * dv[0] + s.v[1] * dv[1]);
                    let g = [nt.base * dv[0] + vd * s.v[0], nt.base * dv[1] + vd * s.v[1]];
                    for (i, phi) in vals.iter().enumerate() {
                        acc[i] += phi[0] * g[0] + phi[1] * g[1];
                    }
                }
            }
            if want_f {
                let g = &s.grad_v;
                // (v·∇v)_k = Σ_j v_j ∂_j v_k
                let adv = [
                    s.v[0] * g[0][0] + s.v[1] * g[1][0],
                    s.v[0] * g[0][1] + s.v[1] * g[1][1],
                ];
                let vgv = s.v[0] * adv[0] + s.v[1] * adv[1];
                // v·∇v_p, and for the skew form also the weight of (v·∇φ_i)·v_p
                let (scale, back) = match transport {
                    TransportForm::Expanded => (1.0, 0.0),
                    TransportForm::Skew => (1.0 / p, (p - 1.0) / p * nt.base),
                };
                let tvec = [
                    scale * (nt.base * adv[0] + nt.cross * vgv * s.v[0]),
                    scale * (nt.base * adv[1] + nt.cross * vgv * s.v[1]),
                ];
                let bv = [back * s.v[0], back * s.v[1]];
                let dn = s.d_norm();
                let sf = if dn > 0.0 { w * nu * pow_nonneg(dn, p - 2.0) } else { 0.0 };
                let d = &s.d_sym;
                let stress = [sf * d[0][0], sf * d[0][1], sf * d[1][0], sf * d[1][1]];
                for (i, (phi, gr)) in vals.iter().zip(nodal.grads_at(q)).enumerate() {
                    let mut t = -(phi[0] * tvec[0] + phi[1] * tvec[1]);
                    if back != 0.0 {
                        // (v·∇φ_i)·v_p = Σ_jc v_j ∂_j φ_ic v_c s^{p-2}
                        t += bv[0] * (gr[0] * s.v[0] + gr[1] * s.v[1])
                            + bv[1] * (gr[2] * s.v[0] + gr[3] * s.v[1]);
                    }
                    out.trans[i] += t;
                    out.visc[i] -= gr[0] * stress[0]
                        + gr[1] * stress[1]
                        + gr[2] * stress[2]
                        + gr[3] * stress[3];
                }
            }
        }
        if want_a {
            out.a = Some(r.tr_mul(&r));
        }
        out
    });

    let mut total = Partial {
        a: want_a.then(|| DMatrix::zeros(n, n)),
        visc: DVector::zeros(n),
        trans: DVector::zeros(n),
        actions: vec![DVector::zeros(n); if want_action { dirs.len() } else { 0 }],
        activations: 0,
    };
    for part in partials {
        if let (Some(acc), Some(a)) = (total.a.as_mut(), part.a) {
            *acc += a;
        }
        total.visc += part.visc;
        total.trans += part.trans;
        for (acc, a) in total.actions.iter_mut().zip(part.actions) {
            *acc += a;
        }
        total.activations += part.activations;
    }
    if let Some(a) = total.a.as_mut() {
        let sym = 0.5 * (&*a + a.transpose());
        *a = sym;
    }
    let diag = AssemblyDiagnostics {
        nodes: nq,
        min_speed,
        max_speed,
        guard_activations: total.activations,
    };
    (total, diag)
}

/// `F(X)` together with `A(X) d` for each direction `d`, in one sweep and without
/// forming `A(X)`.
pub fn assemble_action(
    disc: &Discretization,
    x: &DVector<f64>,
    dirs: &[&DVector<f64>],
    model: &Model,
    exec: Execution,
) -> Result<(Vec<DVector<f64>>, DVector<f64>, AssemblyDiagnostics)> {
    check_inputs(disc, x, model.p)?;
    check_nu(model.nu)?;
    if dirs.iter().any(|d| d.len() != x.len()) {
        return Err(Error::invalid("direction length differs from the state length"));
    }
    let (part, diag) =
        assemble_parts(disc, x, model.p, model.nu, model.transport, Parts::Action, dirs, exec);
    Ok((part.actions, part.visc + part.trans, diag))
}

/// Assembles `A(X)` and `F(X)` in one sweep.
pub fn assemble(disc: &Discretization, x: &DVector<f64>, model: &Model, exec: Execution) -> Result<AssembledSystem> {
    check_inputs(disc, x, model.p)?;
    check_nu(model.nu)?;
    let (part, diagnostics) =
        assemble_parts(disc, x, model.p, model.nu, model.transport, Parts::Both, &[], exec);
    Ok(AssembledSystem {
        a_matrix: part.a.expect("requested"),
        f_vector: &part.visc + &part.trans,
        f_viscous: part.visc,
        f_transport: part.trans,
        diagnostics,
    })
}

fn check_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("viscosity nu = {nu} must be positive")))
    }
}

/// `A(X)` alone.
pub fn assemble_a(disc: &Discretization, x: &DVector<f64>, p: f64, exec: Execution) -> Result<DMatrix<f64>> {
    check_inputs(disc, x, p)?;
    Ok(assemble_parts(disc, x, p, 0.0, TransportForm::Skew, Parts::A, &[], exec)
        .0
        .a
        .expect("requested"))
}

/// `(A(X), diagnostics)`.
pub fn assemble_a_with_diagnostics(
    disc: &Discretization,
    x: &DVector<f64>,
    p: f64,
    exec: Execution,
) -> Result<(DMatrix<f64>, AssemblyDiagnostics)> {
    check_inputs(disc, x, p)?;
    let (part, diag) = assemble_parts(disc, x, p, 0.0, TransportForm::Skew, Parts::A, &[], exec);
    Ok((part.a.expect("requested"), diag))
}

/// Viscous and transport parts of `F(X)`.
pub fn assemble_f_parts(
    disc: &Discretization,
    x: &DVector<f64>,
    model: &Model,
    exec: Execution,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_inputs(disc, x, model.p)?;
    check_nu(model.nu)?;
    let (part, _) = assemble_parts(disc, x, model.p, model.nu, model.transport, Parts::F, &[], exec);
    Ok((part.visc, part.trans))
}

/// `F(X)`.
pub fn assemble_f(disc: &Discretization, x: &DVector<f64>, model: &Model, exec: Execution) -> Result<DVector<f64>> {
    let (v, t) = assemble_f_parts(disc, x, model, exec)?;
    Ok(v + t)
}

/// The pointwise matrix `I + (p-2) v̂⊗v̂`.
pub fn pointwise_weight(v: [f64; 2], p: f64) -> [[f64; 2]; 2] {
    let s = v[0].hypot(v[1]);
    if s == 0.0 {
        return [[1.0, 0.0], [0.0, 1.0]];
    }
    let u = [v[0] / s, v[1] / s];
    [
        [1.0 + (p - 2.0) * u[0] * u[0], (p - 2.0) * u[0] * u[1]],
        [(p - 2.0) * u[1] * u[0], 1.0 + (p - 2.0) * u[1] * u[1]],
    ]
}

/// Rates of `∫|v|^p`: the model rate `q Xᵀ F(X)` and the dissipation
/// `q ν ∫|𝒟v|^p`. Along exact Galerkin trajectories `model = −dissipation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRate {
    pub model: f64,
    pub dissipation: f64,
}

pub fn energy_rate(disc: &Discretization, x: &DVector<f64>, model: &Model, exec: Execution) -> Result<EnergyRate> {
    let f = assemble_f(disc, x, model, exec)?;
    let q = dual_exponent(model.p);
    Ok(EnergyRate {
        model: q * x.dot(&f),
        dissipation: q * model.nu * lp_norms(disc, x, model.p).d_sym,
    })
}

/// Coefficients of an `L²` projection onto the basis and its relative error.
#[derive(Clone, Debug)]
pub struct Projection {
    pub coeffs: DVector<f64>,
    /// `‖f − Σ c_k φ_k‖₂ / ‖f‖₂` on the quadrature rule (0 for `f = 0`).
    pub truncation_error: f64,
}

/// `L²` projection of a velocity field given pointwise.
pub fn project_field<F: Fn(f64, f64) -> [f64; 2]>(disc: &Discretization, f: F) -> Result<Projection> {
    let nodal = disc.nodal();
    let n = nodal.n_fields();
    let mut rhs = DVector::zeros(n);
    let mut vals = Vec::with_capacity(nodal.n_nodes());
    for q in 0..nodal.n_nodes() {
        let (x, y) = nodal.point(q);
        let v = f(x, y);
        if !v[0].is_finite() || !v[1].is_finite() {
            return Err(Error::NonFiniteSample {
                x,
                y,
                value: if v[0].is_finite() { v[1] } else { v[0] },
            });
        }
        let w = nodal.weight(q);
        for (i, phi) in nodal.values_at(q).iter().enumerate() {
            rhs[i] += w * (phi[0] * v[0] + phi[1] * v[1]);
        }
        vals.push(v);
    }
    let gram = disc.basis().gram();
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::IllConditionedBasis("Gram matrix is not positive definite".into()))?;
    let coeffs = chol.solve(&rhs);
    let (mut err2, mut norm2) = (0.0, 0.0);
    for (q, v) in vals.iter().enumerate() {
        let s = sample_node(nodal, coeffs.as_slice(), q);
        let w = nodal.weight(q);
        err2 += w * ((v[0] - s.v[0]).powi(2) + (v[1] - s.v[1]).powi(2));
        norm2 += w * (v[0] * v[0] + v[1] * v[1]);
    }
    let truncation_error = if norm2 > 0.0 { (err2 / norm2).sqrt() } else { 0.0 };
    Ok(Projection {
        coeffs,
        truncation_error,
    })
}

/// Leray-projects a grid field and then projects it onto the basis.
pub fn project_grid_field(disc: &Discretization, w: &GridField) -> Result<Projection> {
    let d = leray_project(w)?;
    let u = d.u;
    project_field(disc, |x, y| interpolate_faces(&u, x, y))
}

/// Bilinear interpolation of the face values of a staggered field.
pub fn interpolate_faces(u: &GridField, x: f64, y: f64) -> [f64; 2] {
    let n = u.resolution();
    let h = u.h();
    // u1 lives on (i h, (j+1/2) h), i in 0..=n, j in 0..n
    let a = bilinear(u.u1(), n + 1, n, x / h, y / h - 0.5);
    let b = bilinear(u.u2(), n, n + 1, x / h - 0.5, y / h);
    [a, b]
}

fn bilinear(data: &[f64], nx: usize, ny: usize, fx: f64, fy: f64) -> f64 {
    let fx = fx.clamp(0.0, (nx - 1) as f64);
    let fy = fy.clamp(0.0, (ny - 1) as f64);
    let i = (fx.floor() as usize).min(nx - 2);
    let j = (fy.floor() as usize).min(ny - 2);
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let at = |i: usize, j: usize| data[j * nx + i];
    (1.0 - tx) * (1.0 - ty) * at(i, j)
        + tx * (1.0 - ty) * at(i + 1, j)
        + (1.0 - tx) * ty * at(i, j + 1)
        + tx * ty * at(i + 1, j + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_stream_basis;
    use crate::quadrature::QuadratureRule;
    use rand::{Rng, SeedableRng};

    fn disc(n: usize, orth: bool) -> Discretization {
        Discretization::new(build_stream_basis(n, orth).unwrap(), QuadratureRule::new(20).unwrap())
    }

    fn random_x(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn p2_orthonormal_gives_identity() {
        let d = disc(3, true);
        let a = assemble_a(&d, &random_x(9, 1), 2.0, Execution::Sequential).unwrap();
        assert!((a - DMatrix::identity(9, 9)).abs().max() < 1e-10);
    }

    #[test]
    fn pointwise_weight_example() {
        assert_eq!(pointwise_weight([1.0, 0.0], 4.0), [[3.0, 0.0], [0.0, 1.0]]);
        let m = pointwise_weight([0.3, -0.4], 3.5);
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        assert!((tr - 3.5).abs() < 1e-14 && (det - 2.5).abs() < 1e-14);
    }

    #[test]
    fn zero_state_gives_zero_f() {
        let d = disc(2, true);
        let m = Model::new(3.0, 1.0).unwrap();
        let f = assemble_f(&d, &DVector::zeros(4), &m, Execution::Sequential).unwrap();
        assert_eq!(f, DVector::zeros(4));
        let r = energy_rate(&d, &DVector::zeros(4), &m, Execution::Sequential).unwrap();
        assert_eq!((r.model, r.dissipation), (0.0, 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = disc(2, true);
        let x = random_x(4, 2);
        assert!(assemble_a(&d, &x, 1.5, Execution::Sequential).is_err());
        assert!(Model::new(3.0, 0.0).is_err());
        let bad = Model { p: 3.0, nu: -1.0, transport: TransportForm::Skew };
        assert!(assemble_f(&d, &x, &bad, Execution::Sequential).is_err());
        assert!(assemble_a(&d, &random_x(3, 2), 3.0, Execution::Sequential).is_err());
    }

    #[test]
    fn symmetric_and_bitwise_reproducible() {
        let d = disc(3, true);
        let x = random_x(9, 3);
        let m = Model::new(3.0, 0.5).unwrap();
        let s = assemble(&d, &x, &m, Execution::Sequential).unwrap();
        let par = assemble(&d, &x, &m, Execution::Parallel).unwrap();
        assert_eq!(s.a_matrix, par.a_matrix);
        assert_eq!(s.f_vector, par.f_vector);
        assert!((&s.a_matrix - s.a_matrix.transpose()).abs().max() <= 1e-12);
        assert_eq!(s.diagnostics.guard_activations, 0);
    }

    #[test]
    fn p2_viscous_pairing() {
        let d = disc(3, true);
        let x = random_x(9, 4);
        for form in [TransportForm::Expanded, TransportForm::Skew] {
            let m = Model::new(2.0, 0.7).unwrap().with_transport(form);
            let (visc, _) = assemble_f_parts(&d, &x, &m, Execution::Sequential).unwrap();
            let dd = lp_norms(&d, &x, 2.0).d_sym;
            let lhs = x.dot(&visc);
            assert!((lhs + 0.7 * dd).abs() <= 1e-10 * dd, "{lhs} {dd}");
            let r = energy_rate(&d, &x, &m, Execution::Sequential).unwrap();
            assert!((r.model + 2.0 * 0.7 * dd).abs() <= 1e-9 * dd);
        }
    }

    #[test]
    fn action_matches_matrix() {
        let d = disc(3, true);
        let x = random_x(9, 8);
        let dir = random_x(9, 9);
        for p in [2.0, 2.5, 3.0, 4.0] {
            let m = Model::new(p, 0.3).unwrap();
            let sys = assemble(&d, &x, &m, Execution::Sequential).unwrap();
            let (acts, f, _) = assemble_action(&d, &x, &[&dir, &x], &m, Execution::Sequential).unwrap();
            let ad = &sys.a_matrix * &dir;
            assert!((&acts[0] - &ad).norm() <= 1e-12 * ad.norm());
            assert!((&acts[1] - &sys.a_matrix * &x).norm() <= 1e-12 * acts[1].norm());
            assert!((f - &sys.f_vector).norm() <= 1e-13 * sys.f_vector.norm());
        }
    }

    #[test]
    fn skew_form_cancels_at_any_order() {
        let b = build_stream_basis(4, true).unwrap();
        let x = random_x(16, 5);
        for order in [6, 11, 20] {
            let d = Discretization::new(b.clone(), QuadratureRule::new(order).unwrap());
            let m = Model::new(3.0, 1.0).unwrap();
            let (visc, trans) = assemble_f_parts(&d, &x, &m, Execution::Sequential).unwrap();
            assert!(x.dot(&trans).abs() <= 1e-13 * x.norm() * (&visc + &trans).norm());
        }
    }

    #[test]
    fn forms_agree_under_fine_quadrature() {
        let b = build_stream_basis(3, true).unwrap();
        let x = random_x(9, 6);
        let m = Model::new(3.0, 1.0).unwrap();
        let gaps: Vec<f64> = [24, 48, 96, 192]
            .iter()
            .map(|&order| {
                let d = Discretization::new(b.clone(), QuadratureRule::new(order).unwrap());
                let (_, skew) = assemble_f_parts(&d, &x, &m, Execution::Sequential).unwrap();
                let (_, exp) =
                    assemble_f_parts(&d, &x, &m.with_transport(TransportForm::Expanded), Execution::Sequential)
                        .unwrap();
                (&skew - &exp).norm() / exp.norm()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps[3] < 1e-5, "{gaps:?}");
    }

    #[test]
    fn member_of_span_projects_to_unit_vector() {
        let d = disc(3, true);
        let b = d.basis().clone();
        let pr = project_field(&d, |x, y| b.evaluate(2, x, y).unwrap().value).unwrap();
        let mut e = DVector::zeros(9);
        e[2] = 1.0;
        assert!((pr.coeffs - e).abs().max() < 1e-10);
        assert!(pr.truncation_error < 1e-10);
        let zero = project_field(&d, |_, _| [0.0, 0.0]).unwrap();
        assert_eq!(zero.coeffs, DVector::zeros(9));
    }
}

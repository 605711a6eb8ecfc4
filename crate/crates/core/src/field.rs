//! Pointwise nonlinear quantities of a Galerkin state: `v`, `∇v`, `𝒟(v)`,
//! `v_p = |v|^{p-2} v`, `|𝒟|^{p-2}𝒟` and the `L^p`-type integrals.
//!
//! All matrix norms are Frobenius norms.

use nalgebra::DVector;

use crate::basis::{BasisSet, NodalBasis};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

/// Conjugate exponent `q` with `1/p + 1/q = 1`. The only place `q` is derived.
#[inline]
pub fn dual_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 2.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("exponent p = {p} must satisfy p >= 2")))
    }
}

/// A basis together with the quadrature rule it is integrated with.
#[derive(Clone, Debug)]
pub struct Discretization {
    basis: BasisSet,
    rule: QuadratureRule,
    nodal: NodalBasis,
}

impl Discretization {
    pub fn new(basis: BasisSet, rule: QuadratureRule) -> Self {
        let nodal = basis.tabulate(&rule);
        Self { basis, rule, nodal }
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn nodal(&self) -> &NodalBasis {
        &self.nodal
    }

    /// Number of basis fields.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Same basis, different rule.
    pub fn with_rule(&self, rule: QuadratureRule) -> Self {
        Self::new(self.basis.clone(), rule)
    }
}

/// Time and coefficient vector of a Galerkin approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinState {
    pub t: f64,
    pub coeffs: DVector<f64>,
}

impl GalerkinState {
    pub fn new(t: f64, coeffs: DVector<f64>, basis: &BasisSet) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::invalid(format!(
                "state has {} coefficients, basis has {} fields",
                coeffs.len(),
                basis.len()
            )));
        }
        if !t.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("state contains non-finite entries"));
        }
        Ok(Self { t, coeffs })
    }
}

/// Velocity, gradient (`grad_v[j][c] = ∂_j v_c`), symmetric gradient and speed at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointSample {
    pub v: [f64; 2],
    pub grad_v: [[f64; 2]; 2],
    pub d_sym: [[f64; 2]; 2],
    pub speed: f64,
}

impl PointSample {
    fn from_parts(v: [f64; 2], g: [[f64; 2]; 2]) -> Self {
        let off = 0.5 * (g[0][1] + g[1][0]);
        Self {
            v,
            grad_v: g,
            d_sym: [[g[0][0], off], [off, g[1][1]]],
            speed: v[0].hypot(v[1]),
        }
    }

    pub fn grad_norm(&self) -> f64 {
        frobenius(&self.grad_v)
    }

    pub fn d_norm(&self) -> f64 {
        frobenius(&self.d_sym)
    }
}

#[inline]
pub fn frobenius(m: &[[f64; 2]; 2]) -> f64 {
    (m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]).sqrt()
}

/// `A : B = Σ_ij A_ij B_ij`.
#[inline]
pub fn contract(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Evaluates `v = Σ X_k φ_k` and its derivatives at an arbitrary point.
pub fn sample(basis: &BasisSet, coeffs: &DVector<f64>, x: f64, y: f64) -> PointSample {
    let mut v = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for (f, &c) in basis.evaluate_all(x, y).iter().zip(coeffs.iter()) {
        v[0] += c * f.value[0];
        v[1] += c * f.value[1];
        for j in 0..2 {
            for k in 0..2 {
                g[j][k] += c * f.grad[j][k];
            }
        }
    }
    PointSample::from_parts(v, g)
}

/// Same as [`sample`] at tensor node `q` of a tabulated basis.
#[inline]
pub fn sample_node(nodal: &NodalBasis, coeffs: &[f64], q: usize) -> PointSample {
    let mut v = [0.0; 2];
    let mut g = [0.0; 4];
    for ((val, grad), &c) in nodal.values_at(q).iter().zip(nodal.grads_at(q)).zip(coeffs) {
        v[0] += c * val[0];
        v[1] += c * val[1];
        g[0] += c * grad[0];
        g[1] += c * grad[1];
        g[2] += c * grad[2];
        g[3] += c * grad[3];
    }
    PointSample::from_parts(v, [[g[0], g[1]], [g[2], g[3]]])
}

/// `|s|^e` with the continuous convention `0^0 = 1`; callers only pass `e ≥ 0`.
#[inline]
pub(crate) fn pow_nonneg(s: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 2.0 {
        s * s
    } else {
        s.powf(e)
    }
}

/// `v_p = |v|^{p-2} v`, with `0 ↦ 0`.
pub fn v_p_of(v: [f64; 2], p: f64) -> [f64; 2] {
    let s = v[0].hypot(v[1]);
    if s == 0.0 {
        return [0.0, 0.0];
    }
    let f = pow_nonneg(s, p - 2.0);
    [f * v[0], f * v[1]]
}

/// `|d|^{p-2} d` with the Frobenius norm, `0 ↦ 0`.
pub fn stress_of(d: &[[f64; 2]; 2], p: f64) -> [[f64; 2]; 2] {
    let s = frobenius(d);
    if s == 0.0 {
        return [[0.0; 2]; 2];
    }
    let f = pow_nonneg(s, p - 2.0);
    [[f * d[0][0], f * d[0][1]], [f * d[1][0], f * d[1][1]]]
}

/// `∫|v|^p`, `∫|𝒟(v)|^p` and `∫|∇v|^p` (not raised to `1/p`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LpNorms {
    pub v: f64,
    pub d_sym: f64,
    pub grad: f64,
}

/// Quadrature sums of `|v|^p`, `|𝒟(v)|^p` and `|∇v|^p`.
pub fn lp_norms(disc: &Discretization, coeffs: &DVector<f64>, p: f64) -> LpNorms {
    let nodal = disc.nodal();
    let c = coeffs.as_slice();
    let mut out = LpNorms::default();
    for q in 0..nodal.n_nodes() {
        let s = sample_node(nodal, c, q);
        let w = nodal.weight(q);
        out.v += w * pow_nonneg(s.speed, p);
        out.d_sym += w * pow_nonneg(s.d_norm(), p);
        out.grad += w * pow_nonneg(s.grad_norm(), p);
    }
    out
}

/// `H = (1/q) ∫ |v|^p`.
pub fn energy(disc: &Discretization, coeffs: &DVector<f64>, p: f64) -> f64 {
    let nodal = disc.nodal();
    let c = coeffs.as_slice();
    let total: f64 = (0..nodal.n_nodes())
        .map(|q| nodal.weight(q) * pow_nonneg(sample_node(nodal, c, q).speed, p))
        .sum();
    total / dual_exponent(p)
}

/// Quadrature of an arbitrary pointwise functional of the sample.
pub fn integrate_sample<F: Fn(&PointSample) -> f64>(
    disc: &Discretization,
    coeffs: &DVector<f64>,
    f: F,
) -> f64 {
    let nodal = disc.nodal();
    let c = coeffs.as_slice();
    (0..nodal.n_nodes())
        .map(|q| nodal.weight(q) * f(&sample_node(nodal, c, q)))
        .sum()
}

/// Gradient of `v_p` at a sample: `∂_j (v_p)_c = |v|^{p-2} ∂_j v_c + (p-2)|v|^{p-4}(v·∂_j v) v_c`.
pub fn grad_v_p(s: &PointSample, p: f64) -> [[f64; 2]; 2] {
    if s.speed == 0.0 {
        if p == 2.0 {
            return s.grad_v;
        }
        return [[0.0; 2]; 2];
    }
    let a = pow_nonneg(s.speed, p - 2.0);
    let b = (p - 2.0) * s.speed.powf(p - 4.0);
    let mut out = [[0.0; 2]; 2];
    for j in 0..2 {
        let vdj = s.v[0] * s.grad_v[j][0] + s.v[1] * s.grad_v[j][1];
        for c in 0..2 {
            out[j][c] = a * s.grad_v[j][c] + b * vdj * s.v[c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_stream_basis;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn disc(n: usize) -> Discretization {
        Discretization::new(build_stream_basis(n, true).unwrap(), QuadratureRule::new(20).unwrap())
    }

    #[test]
    fn v_p_examples() {
        assert_eq!(v_p_of([3.0, 4.0], 3.0), [15.0, 20.0]);
        assert_eq!(v_p_of([0.3, -1.7], 2.0), [0.3, -1.7]);
        assert_eq!(v_p_of([0.0, 0.0], 2.5), [0.0, 0.0]);
    }

    #[test]
    fn stress_examples() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let s = stress_of(&id, 4.0);
        assert_relative_eq!(s[0][0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(s[1][1], 2.0, epsilon = 1e-14);
        assert_eq!(s[0][1], 0.0);
        let d = [[0.3, -0.2], [-0.2, 1.1]];
        assert_eq!(stress_of(&d, 2.0), d);
        let s = stress_of(&d, 3.7);
        assert_eq!(s[0][1], s[1][0]);
    }

    #[test]
    fn sample_linearity() {
        let d = disc(3);
        let b = d.basis();
        let n = b.len();
        let zero = sample(b, &DVector::zeros(n), 0.3, 0.4);
        assert_eq!(zero.v, [0.0, 0.0]);
        assert_eq!(zero.grad_v, [[0.0; 2]; 2]);
        let e0 = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let s = sample(b, &e0, 0.3, 0.4);
        let f = b.evaluate(0, 0.3, 0.4).unwrap();
        assert_eq!(s.v, f.value);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let x2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let s12 = sample(b, &(&x1 + &x2), 0.61, 0.27);
        let (s1, s2) = (sample(b, &x1, 0.61, 0.27), sample(b, &x2, 0.61, 0.27));
        for c in 0..2 {
            assert!((s12.v[c] - s1.v[c] - s2.v[c]).abs() < 1e-13);
            for j in 0..2 {
                assert!((s12.grad_v[j][c] - s1.grad_v[j][c] - s2.grad_v[j][c]).abs() < 1e-13);
            }
        }
        assert_eq!(s12.d_sym[0][1], s12.d_sym[1][0]);
        assert!((s12.grad_v[0][0] + s12.grad_v[1][1]).abs() < 1e-10);
    }

    #[test]
    fn lp_norm_examples() {
        let d = disc(3);
        let n = d.dim();
        assert_eq!(lp_norms(&d, &DVector::zeros(n), 3.0), LpNorms::default());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        for &p in &[2.0, 2.5, 3.0, 4.0] {
            let a = lp_norms(&d, &x, p);
            let b = lp_norms(&d, &(2.0 * &x), p);
            let f = 2f64.powf(p);
            assert_relative_eq!(b.v, f * a.v, max_relative = 1e-12);
            assert_relative_eq!(b.d_sym, f * a.d_sym, max_relative = 1e-12);
            assert_relative_eq!(b.grad, f * a.grad, max_relative = 1e-12);
        }
        for k in 0..n {
            let e = DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 });
            let l = lp_norms(&d, &e, 2.0);
            assert_relative_eq!(l.v, d.basis().gram()[(k, k)], max_relative = 1e-12);
        }
    }

    #[test]
    fn symmetric_gradient_bounded_by_gradient() {
        let d = disc(3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = DVector::from_fn(d.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let p = rng.gen_range(2.0..6.0);
            let l = lp_norms(&d, &x, p);
            assert!(l.d_sym <= l.grad * (1.0 + 1e-14));
        }
    }

    #[test]
    fn grad_v_p_matches_finite_difference() {
        let d = disc(2);
        let x = DVector::from_vec(vec![0.7, -0.4, 0.3, 0.2]);
        let b = d.basis();
        let (px, py, h) = (0.37, 0.58, 1e-6);
        for &p in &[2.0, 3.0, 4.5] {
            let s = sample(b, &x, px, py);
            let g = grad_v_p(&s, p);
            let fx = |xx: f64, yy: f64| v_p_of(sample(b, &x, xx, yy).v, p);
            let dx: Vec<f64> = (0..2).map(|c| (fx(px + h, py)[c] - fx(px - h, py)[c]) / (2.0 * h)).collect();
            let dy: Vec<f64> = (0..2).map(|c| (fx(px, py + h)[c] - fx(px, py - h)[c]) / (2.0 * h)).collect();
            for c in 0..2 {
                assert!((dx[c] - g[0][c]).abs() < 1e-6);
                assert!((dy[c] - g[1][c]).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn v_p_inverse_consistency(a in -10.0f64..10.0, b in -10.0f64..10.0, p in 2.0f64..6.0) {
            let q = dual_exponent(p);
            let vp = v_p_of([a, b], p);
            let back = v_p_of(vp, q);
            let scale = a.hypot(b).max(1e-300);
            prop_assert!((back[0] - a).abs() <= 1e-10 * scale.max(1.0));
            prop_assert!((back[1] - b).abs() <= 1e-10 * scale.max(1.0));
        }
    }
}

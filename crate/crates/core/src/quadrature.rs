//! Gauss–Legendre rules on the unit interval and their tensor products on the
//! unit square. All spatial integrals in the crate go through [`QuadratureRule`].

use crate::error::{Error, Result};

/// Default points per axis for solver integrals.
pub const DEFAULT_ORDER: usize = 20;

/// Gauss–Legendre rule on (0, 1), used per axis of the unit square.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes_1d: Vec<f64>,
    weights_1d: Vec<f64>,
}

impl QuadratureRule {
    /// Builds the `order`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("quadrature order must be at least 1"));
        }
        let (xi, wi) = gauss_legendre_reference(order);
        // reference nodes come out descending; map to (0,1) ascending
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        for k in (0..order).rev() {
            nodes.push(0.5 * (1.0 + xi[k]));
            weights.push(0.5 * wi[k]);
        }
        Ok(Self {
            nodes_1d: nodes,
            weights_1d: weights,
        })
    }

    /// Points per axis.
    pub fn order(&self) -> usize {
        self.nodes_1d.len()
    }

    pub fn nodes_1d(&self) -> &[f64] {
        &self.nodes_1d
    }

    pub fn weights_1d(&self) -> &[f64] {
        &self.weights_1d
    }

    /// Number of tensor nodes on the square.
    pub fn len(&self) -> usize {
        self.order() * self.order()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes_1d.is_empty()
    }

    /// Tensor node `q`, enumerated with the x index outermost: `q = i * order + j`.
    #[inline]
    pub fn node(&self, q: usize) -> (f64, f64) {
        let n = self.order();
        (self.nodes_1d[q / n], self.nodes_1d[q % n])
    }

    #[inline]
    pub fn weight(&self, q: usize) -> f64 {
        let n = self.order();
        self.weights_1d[q / n] * self.weights_1d[q % n]
    }

    /// All tensor nodes in the enumeration used by [`QuadratureRule::node`].
    pub fn tensor_nodes(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|q| self.node(q)).collect()
    }

    /// Samples `f` at every tensor node.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len())
            .map(|q| {
                let (x, y) = self.node(q);
                f(x, y)
            })
            .collect()
    }

    /// One-dimensional integral over (0, 1).
    pub fn integrate_1d<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes_1d
            .iter()
            .zip(&self.weights_1d)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Σ_ij w_i w_j f(x_i, y_j) for samples laid out as in [`QuadratureRule::sample`].
    pub fn integrate_2d(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.len() {
            return Err(Error::invalid(format!(
                "expected {} samples, got {}",
                self.len(),
                samples.len()
            )));
        }
        let n = self.order();
        let mut total = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let value = samples[i * n + j];
                if !value.is_finite() {
                    return Err(Error::NonFiniteSample {
                        x: self.nodes_1d[i],
                        y: self.nodes_1d[j],
                        value,
                    });
                }
                row += self.weights_1d[j] * value;
            }
            total += self.weights_1d[i] * row;
        }
        Ok(total)
    }

    /// Integrates a closure over the unit square.
    pub fn integrate_fn<F: Fn(f64, f64) -> f64>(&self, f: F) -> Result<f64> {
        self.integrate_2d(&self.sample(f))
    }
}

/// Nodes (descending) and weights of the Gauss–Legendre rule on [-1, 1].
fn gauss_legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for k in 0..half {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = x;
        weights[k] = w;
        nodes[n - 1 - k] = -x;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_order_rejected() {
        assert!(QuadratureRule::new(0).is_err());
    }

    #[test]
    fn midpoint_rule() {
        let r = QuadratureRule::new(1).unwrap();
        assert_eq!(r.nodes_1d(), &[0.5]);
        assert_relative_eq!(r.weights_1d()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_point_rule() {
        let r = QuadratureRule::new(2).unwrap();
        let off = 1.0 / (2.0 * 3f64.sqrt());
        assert_relative_eq!(r.nodes_1d()[0], 0.5 - off, epsilon = 1e-15);
        assert_relative_eq!(r.nodes_1d()[1], 0.5 + off, epsilon = 1e-15);
        assert_relative_eq!(r.weights_1d()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.weights_1d()[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.integrate_1d(|x| x * x * x), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn invariants_hold_across_orders() {
        for order in 1..=64 {
            let r = QuadratureRule::new(order).unwrap();
            let sum: f64 = r.weights_1d().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-14, "order {order}: sum {sum}");
            assert!(r.weights_1d().iter().all(|&w| w > 0.0));
            assert!(r.nodes_1d().windows(2).all(|w| w[0] < w[1]));
            assert!(r.nodes_1d().iter().all(|&x| x > 0.0 && x < 1.0));
            // monomial exactness up to degree 2n - 1
            for deg in 0..(2 * order) {
                let exact = 1.0 / (deg as f64 + 1.0);
                let got = r.integrate_1d(|x| x.powi(deg as i32));
                assert!(
                    ((got - exact) / exact).abs() <= 1e-13,
                    "order {order} degree {deg}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn integrate_2d_examples() {
        let r = QuadratureRule::new(2).unwrap();
        assert_relative_eq!(r.integrate_fn(|_, _| 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            r.integrate_fn(|x, y| x * x * y * y).unwrap(),
            1.0 / 9.0,
            epsilon = 1e-15
        );
        let r20 = QuadratureRule::new(20).unwrap();
        let pi = std::f64::consts::PI;
        // ∫∫ sin(πx) sin(πy) = (2/π)²
        let exact = 4.0 / (pi * pi);
        let got = r20.integrate_fn(|x, y| (pi * x).sin() * (pi * y).sin()).unwrap();
        assert!((got - exact).abs() <= 1e-10);
    }

    #[test]
    fn non_finite_sample_names_node() {
        let r = QuadratureRule::new(3).unwrap();
        let mut s = vec![1.0; 9];
        s[4] = f64::NAN;
        match r.integrate_2d(&s) {
            Err(Error::NonFiniteSample { x, y, .. }) => {
                assert_relative_eq!(x, 0.5, epsilon = 1e-15);
                assert_relative_eq!(y, 0.5, epsilon = 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn refinement_is_monotone_for_smooth_integrand() {
        let f = |x: f64, y: f64| (3.0 * x + y * y).exp().cos() / (1.0 + x * y);
        let val = |n: usize| QuadratureRule::new(n).unwrap().integrate_fn(f).unwrap();
        let mut prev = f64::INFINITY;
        for k in [1, 2, 4] {
            let d = (val(2 * k) - val(4 * k)).abs();
            assert!(d < prev, "k={k}: {d} !< {prev}");
            prev = d;
        }
    }

    proptest! {
        #[test]
        fn polynomial_exactness(order in 1usize..8, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let deg = 2 * order - 1;
            let cx: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cy: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let poly = |c: &[f64], t: f64| c.iter().rev().fold(0.0, |acc, &a| acc * t + a);
            let antider = |c: &[f64]| c.iter().enumerate().map(|(k, a)| a / (k as f64 + 1.0)).sum::<f64>();
            let exact = antider(&cx) * antider(&cy);
            let r = QuadratureRule::new(order).unwrap();
            let got = r.integrate_fn(|x, y| poly(&cx, x) * poly(&cy, y)).unwrap();
            let scale = cx.iter().map(|a| a.abs()).sum::<f64>() * cy.iter().map(|a| a.abs()).sum::<f64>();
            prop_assert!((got - exact).abs() <= 1e-12 * scale.max(exact.abs()));
        }
    }
}

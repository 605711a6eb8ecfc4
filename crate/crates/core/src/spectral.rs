//! Finite-dimensional eigenbasis of the biharmonic-type form
//! `B[u, v] = ∫ Δu · Δv` on the clamped divergence-free stream space.
//!
//! Restricting trial and test functions to divergence-free clamped fields plays
//! the role of the Leray projection, so the generalized problem `B v = μ M v`
//! with `M` the L² Gram matrix needs no boundary terms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use crate::basis::{
    build_stream_basis, exact_order, symmetrize_upper, tabulate_stream_laplacian, BasisKind,
    BasisSet,
};
use crate::error::{Error, Result};
use crate::field::{lp_norms, Discretization};
use crate::quadrature::QuadratureRule;

/// Operator order; only `m = 2` is implemented.
pub const OPERATOR_ORDER: usize = 2;

/// `(i, j)` entry `∫ Δφ_i · Δφ_j` over the fields of `basis`, symmetrized.
pub fn assemble_b_matrix(basis: &BasisSet, m: usize, rule: &QuadratureRule) -> Result<DMatrix<f64>> {
    if m != OPERATOR_ORDER {
        return Err(Error::UnsupportedOrder(m));
    }
    let stream = basis.stream_functions();
    let ms = stream.len();
    let lap = tabulate_stream_laplacian(stream, rule);
    let mut raw = DMatrix::zeros(ms, ms);
    for q in 0..rule.len() {
        let w = rule.weight(q);
        let row = &lap[q * ms..(q + 1) * ms];
        for a in 0..ms {
            for b in a..ms {
                raw[(a, b)] += w * (row[a][0] * row[b][0] + row[a][1] * row[b][1]);
            }
        }
    }
    symmetrize_upper(&mut raw);
    let c = basis.combination();
    let b = c * raw * c.transpose();
    Ok(0.5 * (&b + b.transpose()))
}

/// Generalized eigenpairs `B v = μ M v`, ascending, with `V^T M V = I`.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: DMatrix<f64>,
}

/// First `n_keep` generalized eigenpairs via Cholesky of the (diagonally scaled)
/// mass matrix and a symmetric standard eigensolve.
pub fn solve_eigenbasis(b: &DMatrix<f64>, mass: &DMatrix<f64>, n_keep: usize) -> Result<EigenPairs> {
    let m = mass.nrows();
    if b.nrows() != m || b.ncols() != m || mass.ncols() != m {
        return Err(Error::invalid("B and mass matrices must be square of equal size"));
    }
    if n_keep > m {
        return Err(Error::invalid(format!("n_keep = {n_keep} exceeds dimension {m}")));
    }
    let mass_min = mass.clone().symmetric_eigen().eigenvalues.min();
    if mass_min.is_nan() || mass_min <= 0.0 {
        return Err(Error::IllConditionedBasis(format!(
            "mass matrix is not positive definite (smallest eigenvalue {mass_min:e})"
        )));
    }
    let scale = DVector::from_fn(m, |i, _| 1.0 / mass[(i, i)].sqrt());
    let s = DMatrix::from_diagonal(&scale);
    let ms = &s * mass * &s;
    let bs = &s * b * &s;
    let chol = ms
        .cholesky()
        .ok_or_else(|| Error::IllConditionedBasis("mass matrix Cholesky failed".into()))?;
    let l = chol.l();
    // C = L^{-1} B L^{-T}
    let y = l
        .solve_lower_triangular(&bs)
        .ok_or_else(|| Error::IllConditionedBasis("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::IllConditionedBasis("singular Cholesky factor".into()))?;
    let c = 0.5 * (&c + c.transpose());
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt = l.transpose();
    let mut vectors = DMatrix::zeros(m, n_keep);
    let mut values = Vec::with_capacity(n_keep);
    for (col, &k) in order.iter().take(n_keep).enumerate() {
        let z = lt
            .solve_upper_triangular(&eig.eigenvectors.column(k).into_owned())
            .ok_or_else(|| Error::IllConditionedBasis("singular Cholesky factor".into()))?;
        let mut v = s.clone() * z;
        // renormalize in the original mass inner product
        let norm = (v.transpose() * mass * &v)[(0, 0)].sqrt();
        v /= norm;
        // fix the sign so the largest component is positive
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        values.push((v.transpose() * b * &v)[(0, 0)]);
        vectors.set_column(col, &v);
    }
    // Rayleigh quotients can swap near-degenerate neighbours by an ulp
    let mut idx: Vec<usize> = (0..n_keep).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    Ok(EigenPairs {
        eigenvalues: idx.iter().map(|&i| values[i]).collect(),
        eigenvectors: vectors.select_columns(&idx),
    })
}

/// Eigenbasis together with the matrices it was computed from.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub m: usize,
    pub eigenvalues: Vec<f64>,
    /// `M × N`, columns over the raw stream functions.
    pub eigenvectors: DMatrix<f64>,
    pub b_matrix: DMatrix<f64>,
    pub mass_matrix: DMatrix<f64>,
    /// The eigenfields as a [`BasisSet`] (L²-orthonormal).
    pub basis: BasisSet,
}

/// Eigenbasis of `n_keep` fields over the `pool_per_axis²` raw stream functions.
pub fn build_spectral_basis(pool_per_axis: usize, n_keep: usize) -> Result<SpectralBasis> {
    let pool = build_stream_basis(pool_per_axis, false)?;
    if n_keep == 0 || n_keep > pool.len() {
        return Err(Error::invalid(format!(
            "n_keep = {n_keep} must lie in 1..={}",
            pool.len()
        )));
    }
    let rule = QuadratureRule::new(exact_order(pool.stream_functions()))?;
    let b = assemble_b_matrix(&pool, OPERATOR_ORDER, &rule)?;
    let mass = pool.gram().clone();
    let pairs = solve_eigenbasis(&b, &mass, n_keep)?;
    let basis = BasisSet::from_parts(
        BasisKind::Spectral,
        format!("spectral-m{OPERATOR_ORDER}-pool{pool_per_axis}-n{n_keep}"),
        pool.stream_functions().to_vec(),
        pairs.eigenvectors.transpose(),
        true,
        Some(pairs.eigenvalues.clone()),
    )?;
    Ok(SpectralBasis {
        m: OPERATOR_ORDER,
        eigenvalues: pairs.eigenvalues,
        eigenvectors: pairs.eigenvectors,
        b_matrix: b,
        mass_matrix: mass,
        basis,
    })
}

impl SpectralBasis {
    /// `‖B v − μ M v‖ / ‖B v‖` for eigenpair `k`.
    pub fn residual(&self, k: usize) -> f64 {
        let v = self.eigenvectors.column(k);
        let bv = &self.b_matrix * v;
        let mv = &self.mass_matrix * v;
        (&bv - self.eigenvalues[k] * mv).norm() / bv.norm()
    }

    /// Eigenvalue table, one value per line with 15 significant digits.
    pub fn eigenvalue_table(&self) -> String {
        self.eigenvalues
            .iter()
            .map(|mu| format!("{mu:.14e}\n"))
            .collect()
    }
}

/// Keeps the first `n` coefficients and zeroes the rest (`Q_n`).
pub fn project_qn(coeffs: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    if n > coeffs.len() {
        return Err(Error::invalid(format!(
            "truncation n = {n} exceeds expansion length {}",
            coeffs.len()
        )));
    }
    Ok(DVector::from_fn(coeffs.len(), |i, _| if i < n { coeffs[i] } else { 0.0 }))
}

/// Largest observed `‖Q_n u‖_{W^{1,p}} / ‖u‖_{W^{1,p}}` for `n = 1..=N` over random
/// `u`, with `‖u‖_{W^{1,p}} = ‖u‖_p + ‖∇u‖_p`. Reported, not bounded.
pub fn qn_operator_norms(disc: &Discretization, p: f64, samples: usize, seed: u64) -> Vec<(usize, f64)> {
    let n = disc.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let us: Vec<DVector<f64>> = (0..samples)
        .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let w1p = |c: &DVector<f64>| {
        let l = lp_norms(disc, c, p);
        l.v.powf(1.0 / p) + l.grad.powf(1.0 / p)
    };
    (1..=n)
        .map(|k| {
            let worst = us
                .iter()
                .map(|u| {
                    let qu = project_qn(u, k).expect("k <= n");
                    w1p(&qu) / w1p(u)
                })
                .fold(0.0f64, f64::max);
            (k, worst)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_matrix_properties() {
        let pool = build_stream_basis(3, false).unwrap();
        let rule = QuadratureRule::new(20).unwrap();
        let b = assemble_b_matrix(&pool, 2, &rule).unwrap();
        assert!(b.diagonal().iter().all(|&d| d > 0.0));
        assert_eq!((&b - b.transpose()).abs().max(), 0.0);
        assert!(matches!(assemble_b_matrix(&pool, 3, &rule), Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn indefinite_mass_rejected() {
        let b = DMatrix::<f64>::identity(2, 2);
        let mass = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(solve_eigenbasis(&b, &mass, 2), Err(Error::IllConditionedBasis(_))));
        assert!(solve_eigenbasis(&b, &DMatrix::identity(2, 2), 3).is_err());
    }

    #[test]
    fn full_spectrum_trace_identity() {
        let sb = build_spectral_basis(4, 16).unwrap();
        let sum: f64 = sb.eigenvalues.iter().sum();
        let minv_b = sb.mass_matrix.clone().cholesky().unwrap().solve(&sb.b_matrix);
        let tr = minv_b.trace();
        assert!(((sum - tr) / tr).abs() <= 1e-6, "{sum} vs {tr}");
        assert!(sb.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(sb.eigenvalues[0] > 0.0);
    }

    #[test]
    fn truncation_examples() {
        let u = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(project_qn(&u, 3).unwrap(), u);
        assert_eq!(project_qn(&u, 0).unwrap(), DVector::zeros(3));
        assert!(project_qn(&u, 4).is_err());
        let norms: Vec<f64> = (0..=3).map(|n| project_qn(&u, n).unwrap().norm()).collect();
        assert!(norms.windows(2).all(|w| w[0] <= w[1]));
    }
}

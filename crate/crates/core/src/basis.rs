//! Divergence-free vector bases built from clamped polynomial stream functions.
//!
//! A stream function is the separable product
//! `ψ_ij(x, y) = x²(1-x)² P_i(2x-1) · y²(1-y)² P_j(2y-1)` with `P_k` the Legendre
//! polynomial, and the vector field is its perpendicular gradient
//! `φ = ∇⊥ψ = (∂_y ψ, -∂_x ψ)`. Such fields are divergence-free pointwise and
//! vanish together with ψ and ∇ψ on the boundary of the unit square.
//!
//! A [`BasisSet`] is a family of `N` fields, each a fixed linear combination of
//! `M` stream-function fields (identity for the raw stream basis, a Cholesky
//! factor for the orthonormalized one, eigenvectors for the spectral basis).
//!
//! Gradient convention: `grad[j][c] = ∂_j φ_c`, so `∇φ : (a ⊗ b) = Σ_jc ∂_jφ_c a_j b_c`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::{QuadratureRule, DEFAULT_ORDER};

/// Value and gradient of a vector field at a point; `grad[j][c] = ∂_j v_c`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldValue {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

impl FieldValue {
    pub fn divergence(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }

    fn axpy(&mut self, a: f64, other: &FieldValue) {
        self.value[0] += a * other.value[0];
        self.value[1] += a * other.value[1];
        for j in 0..2 {
            for c in 0..2 {
                self.grad[j][c] += a * other.grad[j][c];
            }
        }
    }
}

/// f, f', f'', f''' of the 1D factor `s²(1-s)² P_n(2s-1)` for n = 0..=max_n.
pub(crate) fn factor_table(max_n: usize, s: f64) -> Vec<[f64; 4]> {
    let t = 2.0 * s - 1.0;
    let mut p = vec![[0.0f64; 4]; max_n + 1];
    p[0] = [1.0, 0.0, 0.0, 0.0];
    if max_n >= 1 {
        p[1] = [t, 1.0, 0.0, 0.0];
    }
    for k in 1..max_n {
        let c = (2 * k + 1) as f64;
        let kf = k as f64;
        let value = (c * t * p[k][0] - kf * p[k - 1][0]) / (kf + 1.0);
        p[k + 1] = [
            value,
            p[k - 1][1] + c * p[k][0],
            p[k - 1][2] + c * p[k][1],
            p[k - 1][3] + c * p[k][2],
        ];
    }
    let om = 1.0 - s;
    let g = s * s * om * om;
    let g1 = 2.0 * s * om * (1.0 - 2.0 * s);
    let g2 = 2.0 * (1.0 - 6.0 * s + 6.0 * s * s);
    let g3 = 24.0 * s - 12.0;
    p.iter()
        .map(|&[l0, l1, l2, l3]| {
            // chain rule: d/ds P(2s-1) = 2 P'
            let (d1, d2, d3) = (2.0 * l1, 4.0 * l2, 8.0 * l3);
            [
                g * l0,
                g1 * l0 + g * d1,
                g2 * l0 + 2.0 * g1 * d1 + g * d2,
                g3 * l0 + 3.0 * g2 * d1 + 3.0 * g1 * d2 + g * d3,
            ]
        })
        .collect()
}

/// Monomial coefficients (ascending powers) of `s²(1-s)² P_n(2s-1)`.
pub fn factor_monomials(n: usize) -> Vec<f64> {
    // shifted Legendre: P_n(2s-1) = Σ_k (-1)^(n+k) C(n,k) C(n+k,k) s^k
    let legendre: Vec<f64> = (0..=n)
        .map(|k| {
            let sign = if (n + k).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * binomial(n, k) * binomial(n + k, k)
        })
        .collect();
    let bump = [0.0, 0.0, 1.0, -2.0, 1.0];
    let mut out = vec![0.0; n + 5];
    for (a, &la) in legendre.iter().enumerate() {
        for (b, &gb) in bump.iter().enumerate() {
            out[a + b] += la * gb;
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as f64
}

/// One clamped stream function `ψ_ij` with its monomial tables.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFunction {
    pub i: usize,
    pub j: usize,
    /// Monomial coefficients of the x factor, ascending powers.
    pub x_coeffs: Vec<f64>,
    /// Monomial coefficients of the y factor, ascending powers.
    pub y_coeffs: Vec<f64>,
}

impl StreamFunction {
    pub fn new(i: usize, j: usize) -> Self {
        Self {
            i,
            j,
            x_coeffs: factor_monomials(i),
            y_coeffs: factor_monomials(j),
        }
    }

    /// ψ evaluated from the monomial tables.
    pub fn psi(&self, x: f64, y: f64) -> f64 {
        horner(&self.x_coeffs, x) * horner(&self.y_coeffs, y)
    }

    fn from_factors(fx: &[f64; 4], fy: &[f64; 4]) -> FieldValue {
        // φ = (X Y', -X' Y)
        FieldValue {
            value: [fx[0] * fy[1], -fx[1] * fy[0]],
            grad: [
                [fx[1] * fy[1], -fx[2] * fy[0]],
                [fx[0] * fy[2], -fx[1] * fy[1]],
            ],
        }
    }

    /// Vector field ∇⊥ψ and its gradient at (x, y).
    pub fn field(&self, x: f64, y: f64) -> FieldValue {
        let fx = factor_table(self.i, x)[self.i];
        let fy = factor_table(self.j, y)[self.j];
        Self::from_factors(&fx, &fy)
    }

    /// Vector Laplacian Δφ at (x, y).
    pub fn laplacian(&self, x: f64, y: f64) -> [f64; 2] {
        let fx = factor_table(self.i, x)[self.i];
        let fy = factor_table(self.j, y)[self.j];
        laplacian_from_factors(&fx, &fy)
    }
}

fn laplacian_from_factors(fx: &[f64; 4], fy: &[f64; 4]) -> [f64; 2] {
    [
        fx[2] * fy[1] + fx[0] * fy[3],
        -(fx[3] * fy[0] + fx[1] * fy[2]),
    ]
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

/// Index pairs of the `n × n` stream family ordered by total degree, then by `i`.
pub fn stream_pairs(n_per_axis: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..n_per_axis)
        .flat_map(|i| (0..n_per_axis).map(move |j| (i, j)))
        .collect();
    pairs.sort_by_key(|&(i, j)| (i + j, i));
    pairs
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Stream,
    Spectral,
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisKind::Stream => f.write_str("stream"),
            BasisKind::Spectral => f.write_str("spectral"),
        }
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stream" => Ok(BasisKind::Stream),
            "spectral" => Ok(BasisKind::Spectral),
            other => Err(Error::invalid(format!(
                "unknown basis kind `{other}` (expected stream or spectral)"
            ))),
        }
    }
}

/// Ordered family of divergence-free fields `φ_k = Σ_m combo[k, m] ∇⊥ψ_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSet {
    kind: BasisKind,
    id: String,
    stream: Vec<StreamFunction>,
    combo: DMatrix<f64>,
    gram: DMatrix<f64>,
    orthonormal: bool,
    eigenvalues: Option<Vec<f64>>,
}

/// Quadrature order that integrates products of fields from an `n`-per-axis family exactly.
pub(crate) fn exact_order(stream: &[StreamFunction]) -> usize {
    let max_deg = stream.iter().map(|s| s.i.max(s.j)).max().unwrap_or(0);
    // fields have per-axis degree ≤ max_deg + 4, Laplacians ≤ max_deg + 3
    DEFAULT_ORDER.max(max_deg + 6)
}

/// L² Gram matrix of the raw stream fields.
pub(crate) fn stream_gram(stream: &[StreamFunction], rule: &QuadratureRule) -> DMatrix<f64> {
    let m = stream.len();
    let table = tabulate_stream(stream, rule);
    let mut g = DMatrix::zeros(m, m);
    for q in 0..rule.len() {
        let w = rule.weight(q);
        let row = &table[q * m..(q + 1) * m];
        for a in 0..m {
            let va = row[a].value;
            for b in a..m {
                let vb = row[b].value;
                g[(a, b)] += w * (va[0] * vb[0] + va[1] * vb[1]);
            }
        }
    }
    symmetrize_upper(&mut g);
    g
}

pub(crate) fn symmetrize_upper(g: &mut DMatrix<f64>) {
    let m = g.nrows();
    for a in 0..m {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
}

/// Stream-field values at every tensor node, node-major: `table[q * M + m]`.
pub(crate) fn tabulate_stream(stream: &[StreamFunction], rule: &QuadratureRule) -> Vec<FieldValue> {
    let max_i = stream.iter().map(|s| s.i).max().unwrap_or(0);
    let max_j = stream.iter().map(|s| s.j).max().unwrap_or(0);
    let xs: Vec<Vec<[f64; 4]>> = rule.nodes_1d().iter().map(|&x| factor_table(max_i, x)).collect();
    let ys: Vec<Vec<[f64; 4]>> = rule.nodes_1d().iter().map(|&y| factor_table(max_j, y)).collect();
    let n = rule.order();
    let mut out = Vec::with_capacity(rule.len() * stream.len());
    for q in 0..rule.len() {
        let (fx, fy) = (&xs[q / n], &ys[q % n]);
        out.extend(stream.iter().map(|s| StreamFunction::from_factors(&fx[s.i], &fy[s.j])));
    }
    out
}

/// Stream-field Laplacians at every tensor node, node-major.
pub(crate) fn tabulate_stream_laplacian(
    stream: &[StreamFunction],
    rule: &QuadratureRule,
) -> Vec<[f64; 2]> {
    let max_i = stream.iter().map(|s| s.i).max().unwrap_or(0);
    let max_j = stream.iter().map(|s| s.j).max().unwrap_or(0);
    let xs: Vec<Vec<[f64; 4]>> = rule.nodes_1d().iter().map(|&x| factor_table(max_i, x)).collect();
    let ys: Vec<Vec<[f64; 4]>> = rule.nodes_1d().iter().map(|&y| factor_table(max_j, y)).collect();
    let n = rule.order();
    let mut out = Vec::with_capacity(rule.len() * stream.len());
    for q in 0..rule.len() {
        let (fx, fy) = (&xs[q / n], &ys[q % n]);
        out.extend(stream.iter().map(|s| laplacian_from_factors(&fx[s.i], &fy[s.j])));
    }
    out
}

/// Lower Cholesky factor; fails with an ill-conditioned-basis error.
pub(crate) fn cholesky_lower(g: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    g.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::IllConditionedBasis(format!("{what} is not positive definite")))
}

fn inverse_lower(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::IllConditionedBasis("singular Cholesky factor".into()))
}

/// Builds the stream basis of `n_per_axis²` fields, optionally L²-orthonormalized
/// (Gram–Schmidt in the total-degree order, realized as a Cholesky factorization).
pub fn build_stream_basis(n_per_axis: usize, orthonormalize: bool) -> Result<BasisSet> {
    if n_per_axis == 0 {
        return Err(Error::invalid("n_per_axis must be at least 1"));
    }
    let stream: Vec<StreamFunction> = stream_pairs(n_per_axis)
        .into_iter()
        .map(|(i, j)| StreamFunction::new(i, j))
        .collect();
    let m = stream.len();
    let rule = QuadratureRule::new(exact_order(&stream))?;
    let raw = stream_gram(&stream, &rule);
    let combo = if orthonormalize {
        // unit diagonal first, then two Cholesky passes for a clean identity
        let scale = DMatrix::from_diagonal(&raw.diagonal().map(|d| 1.0 / d.sqrt()));
        let g1 = &scale * &raw * &scale;
        let c1 = inverse_lower(&cholesky_lower(&g1, "stream Gram matrix")?)? * &scale;
        let g2 = &c1 * &raw * c1.transpose();
        let mut g2 = 0.5 * (&g2 + g2.transpose());
        symmetrize_upper(&mut g2);
        inverse_lower(&cholesky_lower(&g2, "stream Gram matrix")?)? * c1
    } else {
        DMatrix::identity(m, m)
    };
    let id = format!(
        "stream-n{n_per_axis}-{}",
        if orthonormalize { "orth" } else { "raw" }
    );
    BasisSet::from_parts(BasisKind::Stream, id, stream, combo, orthonormalize, None)
}

impl BasisSet {
    /// Assembles a basis from its defining data and computes its Gram matrix.
    pub fn from_parts(
        kind: BasisKind,
        id: String,
        stream: Vec<StreamFunction>,
        combo: DMatrix<f64>,
        orthonormal: bool,
        eigenvalues: Option<Vec<f64>>,
    ) -> Result<Self> {
        if combo.ncols() != stream.len() {
            return Err(Error::invalid(format!(
                "combination matrix has {} columns for {} stream functions",
                combo.ncols(),
                stream.len()
            )));
        }
        if combo.nrows() == 0 {
            return Err(Error::invalid("basis must contain at least one field"));
        }
        let mut basis = Self {
            kind,
            id,
            stream,
            combo,
            gram: DMatrix::zeros(0, 0),
            orthonormal,
            eigenvalues,
        };
        let rule = QuadratureRule::new(exact_order(&basis.stream))?;
        let raw = stream_gram(&basis.stream, &rule);
        let mut gram = &basis.combo * raw * basis.combo.transpose();
        gram = 0.5 * (&gram + gram.transpose());
        basis.gram = gram;
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.combo.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.combo.nrows() == 0
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn stream_functions(&self) -> &[StreamFunction] {
        &self.stream
    }

    /// `N × M` combination coefficients over the stream functions.
    pub fn combination(&self) -> &DMatrix<f64> {
        &self.combo
    }

    /// L² Gram matrix of the fields.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Generalized eigenvalues, present for spectral bases.
    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    /// Value and gradient of field `k` (0-based) at `(x, y)`.
    pub fn evaluate(&self, k: usize, x: f64, y: f64) -> Result<FieldValue> {
        if k >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                size: self.len(),
            });
        }
        let stream = self.stream_values(x, y);
        let mut out = FieldValue::default();
        for (m, s) in stream.iter().enumerate() {
            out.axpy(self.combo[(k, m)], s);
        }
        Ok(out)
    }

    /// Values and gradients of all fields at `(x, y)`.
    pub fn evaluate_all(&self, x: f64, y: f64) -> Vec<FieldValue> {
        let stream = self.stream_values(x, y);
        (0..self.len())
            .map(|k| {
                let mut out = FieldValue::default();
                for (m, s) in stream.iter().enumerate() {
                    out.axpy(self.combo[(k, m)], s);
                }
                out
            })
            .collect()
    }

    /// Vector Laplacians of all fields at `(x, y)`.
    pub fn laplacian_all(&self, x: f64, y: f64) -> Vec<[f64; 2]> {
        let (fx, fy) = self.factors(x, y);
        let lap: Vec<[f64; 2]> = self
            .stream
            .iter()
            .map(|s| laplacian_from_factors(&fx[s.i], &fy[s.j]))
            .collect();
        (0..self.len())
            .map(|k| {
                let mut out = [0.0; 2];
                for (m, l) in lap.iter().enumerate() {
                    out[0] += self.combo[(k, m)] * l[0];
                    out[1] += self.combo[(k, m)] * l[1];
                }
                out
            })
            .collect()
    }

    /// Stream function of field `k`: `Σ_m combo[k, m] ψ_m(x, y)`.
    pub fn stream_value(&self, k: usize, x: f64, y: f64) -> f64 {
        let (fx, fy) = self.factors(x, y);
        self.stream
            .iter()
            .enumerate()
            .map(|(m, s)| self.combo[(k, m)] * fx[s.i][0] * fy[s.j][0])
            .sum()
    }

    fn factors(&self, x: f64, y: f64) -> (Vec<[f64; 4]>, Vec<[f64; 4]>) {
        let max_i = self.stream.iter().map(|s| s.i).max().unwrap_or(0);
        let max_j = self.stream.iter().map(|s| s.j).max().unwrap_or(0);
        (factor_table(max_i, x), factor_table(max_j, y))
    }

    fn stream_values(&self, x: f64, y: f64) -> Vec<FieldValue> {
        let (fx, fy) = self.factors(x, y);
        self.stream
            .iter()
            .map(|s| StreamFunction::from_factors(&fx[s.i], &fy[s.j]))
            .collect()
    }

    /// Fields reordered so that new field `k` is old field `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("permutation does not match basis size"));
        }
        let combo = DMatrix::from_fn(n, self.combo.ncols(), |k, m| self.combo[(perm[k], m)]);
        let gram = DMatrix::from_fn(n, n, |a, b| self.gram[(perm[a], perm[b])]);
        let eigenvalues = self
            .eigenvalues
            .as_ref()
            .map(|ev| perm.iter().map(|&p| ev[p]).collect());
        Ok(Self {
            kind: self.kind,
            id: format!("{}-perm", self.id),
            stream: self.stream.clone(),
            combo,
            gram,
            orthonormal: self.orthonormal,
            eigenvalues,
        })
    }

    /// Tabulates all fields at the tensor nodes of `rule`.
    pub fn tabulate(&self, rule: &QuadratureRule) -> NodalBasis {
        let m = self.stream.len();
        let n = self.len();
        let stream = tabulate_stream(&self.stream, rule);
        let mut values = Vec::with_capacity(rule.len() * n);
        let mut grads = Vec::with_capacity(rule.len() * n);
        for q in 0..rule.len() {
            let row = &stream[q * m..(q + 1) * m];
            for k in 0..n {
                let mut f = FieldValue::default();
                for (mm, s) in row.iter().enumerate() {
                    let c = self.combo[(k, mm)];
                    if c != 0.0 {
                        f.axpy(c, s);
                    }
                }
                values.push(f.value);
                grads.push([f.grad[0][0], f.grad[0][1], f.grad[1][0], f.grad[1][1]]);
            }
        }
        NodalBasis {
            n_fields: n,
            points: rule.tensor_nodes(),
            weights: (0..rule.len()).map(|q| rule.weight(q)).collect(),
            values,
            grads,
        }
    }

    /// Text serialization: stream records (index pair and monomial tables), then
    /// the combination rows. Numbers use the shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pnavier-basis 1");
        let _ = writeln!(s, "kind {}", self.kind);
        let _ = writeln!(s, "id {}", self.id);
        let _ = writeln!(s, "orthonormal {}", self.orthonormal);
        let _ = writeln!(s, "stream {}", self.stream.len());
        for sf in &self.stream {
            let _ = write!(s, "psi {} {} x", sf.i, sf.j);
            for c in &sf.x_coeffs {
                let _ = write!(s, " {c:e}");
            }
            let _ = write!(s, " y");
            for c in &sf.y_coeffs {
                let _ = write!(s, " {c:e}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "fields {}", self.len());
        for k in 0..self.len() {
            let _ = write!(s, "field {k}");
            for m in 0..self.combo.ncols() {
                let _ = write!(s, " {:e}", self.combo[(k, m)]);
            }
            s.push('\n');
        }
        if let Some(ev) = &self.eigenvalues {
            let _ = write!(s, "eigenvalues");
            for e in ev {
                let _ = write!(s, " {e:e}");
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`BasisSet::to_text`] output; monomial tables must match the index pairs.
    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: line as u64 + 1,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(usize::MAX - 1, format!("unexpected end of input, expected {what}")))
        };
        let (ln, header) = next("header")?;
        if header.trim() != "pnavier-basis 1" {
            return Err(err(ln, format!("bad header `{header}`")));
        }
        let field = |ln: usize, line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .map(|r| r.trim().to_string())
                .ok_or_else(|| err(ln, format!("expected `{key}`")))
        };
        let num = |ln: usize, tok: &str| -> Result<f64> {
            tok.parse::<f64>()
                .map_err(|e| err(ln, format!("bad number `{tok}`: {e}")))
        };
        let int = |ln: usize, tok: &str| -> Result<usize> {
            tok.parse::<usize>()
                .map_err(|e| err(ln, format!("bad integer `{tok}`: {e}")))
        };
        let (ln, l) = next("kind")?;
        let kind: BasisKind = field(ln, l, "kind")?.parse().map_err(|e: Error| err(ln, e.to_string()))?;
        let (ln, l) = next("id")?;
        let id = field(ln, l, "id")?;
        let (ln, l) = next("orthonormal")?;
        let orthonormal = match field(ln, l, "orthonormal")?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(err(ln, format!("bad flag `{other}`"))),
        };
        let (ln, l) = next("stream")?;
        let m = int(ln, &field(ln, l, "stream")?)?;
        let mut stream = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = next("psi record")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() < 4 || toks[0] != "psi" || toks[3] != "x" {
                return Err(err(ln, "malformed psi record".into()));
            }
            let i = int(ln, toks[1])?;
            let j = int(ln, toks[2])?;
            let ypos = toks
                .iter()
                .position(|&t| t == "y")
                .ok_or_else(|| err(ln, "psi record lacks y table".into()))?;
            let x_coeffs = toks[4..ypos].iter().map(|t| num(ln, t)).collect::<Result<Vec<_>>>()?;
            let y_coeffs = toks[ypos + 1..].iter().map(|t| num(ln, t)).collect::<Result<Vec<_>>>()?;
            let sf = StreamFunction { i, j, x_coeffs, y_coeffs };
            if sf != StreamFunction::new(i, j) {
                return Err(err(ln, format!("monomial table does not match index pair ({i}, {j})")));
            }
            stream.push(sf);
        }
        let (ln, l) = next("fields")?;
        let n = int(ln, &field(ln, l, "fields")?)?;
        let mut combo = DMatrix::zeros(n, m);
        for k in 0..n {
            let (ln, l) = next("field record")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != m + 2 || toks[0] != "field" || int(ln, toks[1])? != k {
                return Err(err(ln, format!("malformed field record {k}")));
            }
            for (mm, t) in toks[2..].iter().enumerate() {
                combo[(k, mm)] = num(ln, t)?;
            }
        }
        let eigenvalues = match lines.next() {
            Some((ln, l)) => {
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.first() != Some(&"eigenvalues") || toks.len() != n + 1 {
                    return Err(err(ln, "malformed eigenvalue record".into()));
                }
                Some(toks[1..].iter().map(|t| num(ln, t)).collect::<Result<Vec<_>>>()?)
            }
            None => None,
        };
        BasisSet::from_parts(kind, id, stream, combo, orthonormal, eigenvalues)
    }
}

/// A basis tabulated at the tensor nodes of a quadrature rule, node-major.
#[derive(Clone, Debug)]
pub struct NodalBasis {
    n_fields: usize,
    points: Vec<(f64, f64)>,
    weights: Vec<f64>,
    values: Vec<[f64; 2]>,
    /// `[∂_x φ_1, ∂_x φ_2, ∂_y φ_1, ∂_y φ_2]`
    grads: Vec<[f64; 4]>,
}

impl NodalBasis {
    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, q: usize) -> f64 {
        self.weights[q]
    }

    pub fn point(&self, q: usize) -> (f64, f64) {
        self.points[q]
    }

    #[inline]
    pub fn values_at(&self, q: usize) -> &[[f64; 2]] {
        &self.values[q * self.n_fields..(q + 1) * self.n_fields]
    }

    #[inline]
    pub fn grads_at(&self, q: usize) -> &[[f64; 4]] {
        &self.grads[q * self.n_fields..(q + 1) * self.n_fields]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn monomial_tables_match_recurrence() {
        for n in 0..12 {
            let c = factor_monomials(n);
            for &s in &[0.0, 0.13, 0.5, 0.77, 1.0] {
                let a = horner(&c, s);
                let b = factor_table(n, s)[n][0];
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "n={n} s={s}: {a} vs {b}");
            }
        }
        assert_eq!(factor_monomials(0), vec![0.0, 0.0, 1.0, -2.0, 1.0]);
    }

    #[test]
    fn factor_derivatives_match_finite_differences() {
        let h = 1e-5;
        for n in 0..8 {
            for &s in &[0.21, 0.5, 0.83] {
                let f = factor_table(n, s)[n];
                let fp = factor_table(n, s + h)[n];
                let fm = factor_table(n, s - h)[n];
                for d in 0..3 {
                    let fd = (fp[d] - fm[d]) / (2.0 * h);
                    assert!((fd - f[d + 1]).abs() <= 1e-5 * (1.0 + f[d + 1].abs()), "n={n} d={d}");
                }
            }
        }
    }

    #[test]
    fn lowest_mode_examples() {
        let basis = build_stream_basis(1, false).unwrap();
        let psi = &basis.stream_functions()[0];
        for &y in &[0.0, 0.3, 0.9, 1.0] {
            let f = basis.evaluate(0, 0.0, y).unwrap();
            assert_eq!(f.value, [0.0, 0.0]);
        }
        let c = basis.evaluate(0, 0.5, 0.5).unwrap();
        assert!(c.value[0].abs() < 1e-17 && c.value[1].abs() < 1e-17);
        assert!((psi.psi(0.5, 0.5) - 1.0 / 256.0).abs() < 1e-17);
        let rule = QuadratureRule::new(20).unwrap();
        for (x, y) in rule.tensor_nodes() {
            assert!(basis.evaluate(0, x, y).unwrap().divergence().abs() < 1e-16);
        }
    }

    #[test]
    fn ordering_by_total_degree() {
        let pairs = stream_pairs(3);
        assert_eq!(pairs[0], (0, 0));
        assert_eq!(pairs[1], (0, 1));
        assert_eq!(pairs[2], (1, 0));
        assert_eq!(pairs.last(), Some(&(2, 2)));
        assert!(pairs.windows(2).all(|w| w[0].0 + w[0].1 <= w[1].0 + w[1].1));
    }

    #[test]
    fn index_out_of_range() {
        let basis = build_stream_basis(2, true).unwrap();
        assert!(matches!(
            basis.evaluate(4, 0.5, 0.5),
            Err(Error::IndexOutOfRange { index: 4, size: 4 })
        ));
    }

    #[test]
    fn pointwise_divergence_and_boundary_vanishing() {
        let basis = build_stream_basis(4, true).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            for f in basis.evaluate_all(x, y) {
                assert!(f.divergence().abs() <= 1e-12);
            }
        }
        for _ in 0..1000 {
            let t = rng.gen::<f64>();
            let side = rng.gen_range(0..4);
            let (x, y) = match side {
                0 => (0.0, t),
                1 => (1.0, t),
                2 => (t, 0.0),
                _ => (t, 1.0),
            };
            for f in basis.evaluate_all(x, y) {
                assert!(f.value[0].abs().max(f.value[1].abs()) <= 1e-13);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let basis = build_stream_basis(3, true).unwrap();
        let h = 1e-6;
        for k in 0..basis.len() {
            for &(x, y) in &[(0.3, 0.6), (0.71, 0.18), (0.5, 0.45)] {
                let f = basis.evaluate(k, x, y).unwrap();
                let dx = (basis.evaluate(k, x + h, y).unwrap().value[0]
                    - basis.evaluate(k, x - h, y).unwrap().value[0])
                    / (2.0 * h);
                let dy2 = (basis.evaluate(k, x, y + h).unwrap().value[1]
                    - basis.evaluate(k, x, y - h).unwrap().value[1])
                    / (2.0 * h);
                let scale = f.grad.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
                assert!((dx - f.grad[0][0]).abs() <= 1e-6 * scale);
                assert!((dy2 - f.grad[1][1]).abs() <= 1e-6 * scale);
                let trace = f.grad[0][0] + f.grad[1][1];
                assert!(trace.abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn gram_properties() {
        let raw = build_stream_basis(5, false).unwrap();
        let eig = raw.gram().clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
        let orth = build_stream_basis(10, true).unwrap();
        let n = orth.len();
        let dev = (orth.gram() - DMatrix::<f64>::identity(n, n)).abs().max();
        assert!(dev <= 1e-10, "orthonormality defect {dev}");
        let raw10 = build_stream_basis(10, false).unwrap();
        assert!(raw10.gram().clone().symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let basis = build_stream_basis(3, true).unwrap();
        let text = basis.to_text();
        let back = BasisSet::from_text(&text, "mem").unwrap();
        assert_eq!(back, basis);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn corrupted_table_rejected() {
        let basis = build_stream_basis(2, false).unwrap();
        let text = basis.to_text().replacen("psi 0 0 x 0e0 0e0 1e0", "psi 0 0 x 0e0 0e0 2e0", 1);
        match BasisSet::from_text(&text, "bad") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }
}

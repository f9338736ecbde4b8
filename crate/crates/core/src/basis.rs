//! Nearly orthonormal function bases built from raw pool features.
//!
//! Raw features are first lifted by a [`FeatureMap`] (affine or quadratic
//! monomials) and then whitened against the empirical second moment of the
//! unlabeled pool, so that under the pool-uniform distribution the basis
//! functions satisfy `E[v_i v_j] = 1{i = j}` up to floating point.
//!
//! The whitener is a lower-triangular inverse Cholesky factor. Mapped columns
//! that are (numerically) linear combinations of earlier columns are dropped
//! during the factorization and counted.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain_err, shape_err, Error, Result};
use crate::linalg::{self, lower_triangular_inverse, SymMatrix, RELATIVE_SINGULAR_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Affine,
    Quadratic,
}

impl std::str::FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(MapKind::Affine),
            "quadratic" => Ok(MapKind::Quadratic),
            other => Err(domain_err(format!("unknown feature map '{other}'"))),
        }
    }
}

impl std::fmt::Display for MapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MapKind::Affine => "affine",
            MapKind::Quadratic => "quadratic",
        })
    }
}

/// Raw-feature lift applied before whitening.
///
/// * affine: `(x_1, ..., x_p, 1)`, intercept last.
/// * quadratic: `(1, x_1, ..., x_p, x_1 x_1, x_1 x_2, ..., x_p x_p)`, all
///   monomials of degree at most two with `i <= j` in the products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMap {
    pub kind: MapKind,
    pub input_dim: usize,
}

impl FeatureMap {
    pub fn new(kind: MapKind, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(domain_err("feature map needs at least one input column"));
        }
        Ok(Self { kind, input_dim })
    }

    pub fn affine(input_dim: usize) -> Result<Self> {
        Self::new(MapKind::Affine, input_dim)
    }

    pub fn quadratic(input_dim: usize) -> Result<Self> {
        Self::new(MapKind::Quadratic, input_dim)
    }

    pub fn output_dim(&self) -> usize {
        let p = self.input_dim;
        match self.kind {
            MapKind::Affine => p + 1,
            MapKind::Quadratic => 1 + p + p * (p + 1) / 2,
        }
    }

    /// Writes the lifted features of `x` into `out` (length `output_dim`).
    pub fn apply_into(&self, x: ArrayView1<f64>, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_dim);
        debug_assert_eq!(out.len(), self.output_dim());
        let p = self.input_dim;
        match self.kind {
            MapKind::Affine => {
                for i in 0..p {
                    out[i] = x[i];
                }
                out[p] = 1.0;
            }
            MapKind::Quadratic => {
                out[0] = 1.0;
                for i in 0..p {
                    out[1 + i] = x[i];
                }
                let mut k = 1 + p;
                for i in 0..p {
                    for j in i..p {
                        out[k] = x[i] * x[j];
                        k += 1;
                    }
                }
            }
        }
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim {
            return Err(shape_err(format!(
                "feature vector of length {} for a map over {} inputs",
                x.len(),
                self.input_dim
            )));
        }
        let mut out = vec![0.0; self.output_dim()];
        self.apply_into(x, &mut out);
        Ok(Array1::from(out))
    }

    /// Lifts every row of an `n x p` matrix.
    pub fn apply_rows(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.input_dim {
            return Err(shape_err(format!(
                "{} feature columns for a map over {} inputs",
                xs.ncols(),
                self.input_dim
            )));
        }
        let m = self.output_dim();
        let mut out = Array2::<f64>::zeros((xs.nrows(), m));
        for (row, mut dst) in xs.outer_iter().zip(out.outer_iter_mut()) {
            let slice = dst.as_slice_mut().expect("fresh array rows are contiguous");
            self.apply_into(row, slice);
        }
        Ok(out)
    }
}

/// A whitened basis `v(x) = W * phi(x)`.
///
/// `W` has shape `d x output_dim`. When nothing was dropped it is the
/// lower-triangular inverse Cholesky factor of the pool second moment;
/// otherwise the columns of dropped mapped features are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBasis {
    map: FeatureMap,
    whitener: Array2<f64>,
    ridge: f64,
    dropped_directions: usize,
}

/// How far an empirical Gram matrix is from the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    /// `max_i |G_ii - 1|`
    pub max_diag_deviation: f64,
    /// `max_{i != j} |G_ij|`
    pub max_offdiag: f64,
    pub sample_count: usize,
}

/// On-disk form of a basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFile {
    pub kind: MapKind,
    pub input_dim: usize,
    pub ridge: f64,
    pub dropped_directions: usize,
    /// Row-major `d x output_dim`.
    pub whitener: Vec<f64>,
}

impl FeatureBasis {
    /// Assembles a basis from an explicit transform. `whitener` must be
    /// `d x map.output_dim()` with `d >= 1`.
    pub fn from_parts(map: FeatureMap, whitener: Array2<f64>, ridge: f64, dropped_directions: usize) -> Result<Self> {
        if whitener.ncols() != map.output_dim() || whitener.nrows() == 0 {
            return Err(shape_err(format!(
                "whitener is {}x{} but the map produces {} features",
                whitener.nrows(),
                whitener.ncols(),
                map.output_dim()
            )));
        }
        if whitener.nrows() + dropped_directions != map.output_dim() {
            return Err(shape_err(format!(
                "{} kept plus {} dropped directions does not match {} mapped features",
                whitener.nrows(),
                dropped_directions,
                map.output_dim()
            )));
        }
        if !whitener.iter().all(|x| x.is_finite()) || !(ridge >= 0.0) {
            return Err(Error::Numerical("basis transform must be finite".into()));
        }
        Ok(Self {
            map,
            whitener,
            ridge,
            dropped_directions,
        })
    }

    pub fn map(&self) -> FeatureMap {
        self.map
    }

    pub fn whitener(&self) -> ArrayView2<'_, f64> {
        self.whitener.view()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dropped_directions(&self) -> usize {
        self.dropped_directions
    }

    /// Basis dimension `d`.
    pub fn dim(&self) -> usize {
        self.whitener.nrows()
    }

    pub fn to_file(&self) -> BasisFile {
        BasisFile {
            kind: self.map.kind,
            input_dim: self.map.input_dim,
            ridge: self.ridge,
            dropped_directions: self.dropped_directions,
            whitener: self.whitener.iter().copied().collect(),
        }
    }

    pub fn from_file(file: &BasisFile) -> Result<Self> {
        let map = FeatureMap::new(file.kind, file.input_dim)?;
        let m = map.output_dim();
        if file.whitener.is_empty() || !file.whitener.len().is_multiple_of(m) {
            return Err(Error::Schema(format!(
                "whitener has {} entries, not a multiple of {m}",
                file.whitener.len()
            )));
        }
        let d = file.whitener.len() / m;
        let whitener =
            Array2::from_shape_vec((d, m), file.whitener.clone()).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_parts(map, whitener, file.ridge, file.dropped_directions)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }

    /// Content hash of the serialized basis; models record it so that
    /// predictions against a different basis are refused.
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(&self.to_file()).expect("basis serialization is infallible");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }

    /// `v(x)`.
    pub fn eval(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let phi = self.map.apply(x)?;
        Ok(self.whitener.dot(&phi))
    }

    /// `v(x)` for every row, as an `n x d` matrix.
    pub fn eval_rows(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let phi = self.map.apply_rows(xs)?;
        Ok(phi.dot(&self.whitener.t()))
    }
}

/// Whitens the mapped pool features.
///
/// The mapped second moment `M = (1/n) sum phi(x) phi(x)' + ridge * I` is
/// factored by a Cholesky sweep that skips any column whose pivot falls below
/// `1e-10 * lambda_max(M)`; the result is `v(x) = L^-1 phi_kept(x)`, whose
/// empirical Gram on the pool is the identity.
pub fn build_basis(pool: ArrayView2<f64>, map: FeatureMap, ridge: f64) -> Result<FeatureBasis> {
    let (n, p) = pool.dim();
    if p != map.input_dim {
        return Err(shape_err(format!(
            "pool has {p} columns but the map expects {}",
            map.input_dim
        )));
    }
    if n == 0 {
        return Err(shape_err("empty pool"));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(domain_err(format!(
            "ridge must be a finite non-negative number, got {ridge}"
        )));
    }
    if !pool.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("pool features contain non-finite values".into()));
    }
    let m = map.output_dim();
    if ridge == 0.0 && n < m {
        return Err(Error::Rank(format!(
            "{n} pool rows cannot span {m} mapped features; set ridge > 0"
        )));
    }

    let phi = map.apply_rows(pool)?;
    let second_moment = SymMatrix::gram(phi.view()).scaled(1.0 / n as f64).shifted(ridge);
    let lambda_max = linalg::eig_extremes(&second_moment, linalg::DEFAULT_EIG_TOL)?.lambda_max;
    if !(lambda_max > 0.0) {
        return Err(Error::Rank("mapped pool features are identically zero".into()));
    }
    let pivot_floor = RELATIVE_SINGULAR_FLOOR * lambda_max;

    // Cholesky over the kept columns only.
    let a = second_moment.as_array();
    let mut kept: Vec<usize> = Vec::with_capacity(m);
    let mut l = Array2::<f64>::zeros((m, m));
    for j in 0..m {
        let r = kept.len();
        // Row r of L is staged before it is known whether column j is kept.
        let mut row = vec![0.0; r];
        for (c, &kc) in kept.iter().enumerate() {
            let mut s = a[[j, kc]];
            for k in 0..c {
                s -= row[k] * l[[c, k]];
            }
            row[c] = s / l[[c, c]];
        }
        let pivot = a[[j, j]] - row.iter().map(|x| x * x).sum::<f64>();
        if pivot <= pivot_floor {
            continue;
        }
        for (k, x) in row.into_iter().enumerate() {
            l[[r, k]] = x;
        }
        l[[r, r]] = pivot.sqrt();
        kept.push(j);
    }
    let d = kept.len();
    if ridge == 0.0 && d == 1 && m > 1 {
        return Err(Error::Rank(
            "every mapped pool row is collinear; the pool carries a single direction, set ridge > 0".into(),
        ));
    }
    let l_kept = l.slice(ndarray::s![..d, ..d]).to_owned();
    let l_inv = lower_triangular_inverse(&l_kept);
    let mut whitener = Array2::<f64>::zeros((d, m));
    for (c, &col) in kept.iter().enumerate() {
        whitener.column_mut(col).assign(&l_inv.column(c));
    }
    FeatureBasis::from_parts(map, whitener, ridge, m - d)
}

/// Gram deviation from the identity for already-evaluated basis rows.
pub fn rho_from_evaluations(values: ArrayView2<f64>) -> Result<RhoEstimate> {
    let count = values.nrows();
    if count < 2 {
        return Err(domain_err(format!("need at least 2 samples, got {count}")));
    }
    let g = SymMatrix::gram(values).scaled(1.0 / count as f64);
    let d = g.dim();
    let mut max_diag_deviation = 0.0_f64;
    let mut max_offdiag = 0.0_f64;
    for i in 0..d {
        max_diag_deviation = max_diag_deviation.max((g.get(i, i) - 1.0).abs());
        for j in 0..i {
            max_offdiag = max_offdiag.max(g.get(i, j).abs());
        }
    }
    Ok(RhoEstimate {
        max_diag_deviation,
        max_offdiag,
        sample_count: count,
    })
}

pub fn estimate_rho(basis: &FeatureBasis, samples: ArrayView2<f64>) -> Result<RhoEstimate> {
    rho_from_evaluations(basis.eval_rows(samples)?.view())
}

/// `max_x ||v(x)||^2` over evaluated rows.
pub fn alpha_condition_from_evaluations(values: ArrayView2<f64>) -> Result<f64> {
    if values.nrows() == 0 {
        return Err(shape_err("empty pool"));
    }
    Ok(values
        .map_axis(Axis(1), |row| row.dot(&row))
        .iter()
        .fold(0.0_f64, |m, &x| m.max(x)))
}

/// `K_alpha` of the pool-uniform distribution: `max_x sum_i v_i(x)^2`.
pub fn alpha_condition_number(basis: &FeatureBasis, pool: ArrayView2<f64>) -> Result<f64> {
    alpha_condition_from_evaluations(basis.eval_rows(pool)?.view())
}

/// Window `[(1 - rho) |a|^2, (1 + rho (d - 1)) |a|^2]` guaranteed for
/// `||h||_D^2` when `h = sum a_i v_i` and the basis is rho-nearly orthonormal.
pub fn norm_bounds(alpha: ArrayView1<f64>, rho: f64, d: usize) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&rho) {
        return Err(domain_err(format!("rho must lie in [0, 1), got {rho}")));
    }
    if d == 0 {
        return Err(domain_err("dimension must be positive"));
    }
    let sq = alpha.dot(&alpha);
    Ok(((1.0 - rho) * sq, (1.0 + rho * (d as f64 - 1.0)) * sq))
}

/// Upper bound on the Taylor-basis dimension of a smooth activation network:
/// `binom(ceil(10 d + ln(1/eps0) / ln d), d)`.
pub fn taylor_basis_dim_bound(d: usize, eps0: f64) -> Result<u64> {
    if d < 3 {
        return Err(domain_err(format!("input dimension must be at least 3, got {d}")));
    }
    if !(eps0 > 0.0 && eps0 <= 0.1) {
        return Err(domain_err(format!("eps0 must lie in (0, 1/10], got {eps0}")));
    }
    let df = d as f64;
    let top = (10.0 * df + (1.0 / eps0).ln() / df.ln()).ceil() as u64;
    let d64 = d as u64;
    // binom(top - d + i, i) stays integral at every step.
    let mut acc: u128 = 1;
    let mut overflow = false;
    for i in 1..=d64 {
        match acc.checked_mul((top - d64 + i) as u128) {
            Some(x) => acc = x / i as u128,
            None => {
                overflow = true;
                break;
            }
        }
    }
    if overflow || acc > u64::MAX as u128 {
        let log_value: f64 = (1..=d64).map(|i| ((top - d64 + i) as f64).ln() - (i as f64).ln()).sum();
        return Err(Error::Overflow { log_value });
    }
    Ok(acc as u64)
}

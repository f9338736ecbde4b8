//! Dense symmetric linear algebra kernel.
//!
//! Everything here works on small `d x d` symmetric matrices (`d` is the basis
//! dimension, at most a few hundred). Eigenvalues come from a cyclic Jacobi
//! solver; inverses, traces of inverses and solves go through a Cholesky
//! factor. Every routine that inverts checks the smallest eigenvalue against a
//! floor first so that a barrier violation upstream surfaces as a typed error
//! instead of a silently exploding inverse.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Error, Result};

/// Default eigensolver tolerance used on hot paths.
pub const DEFAULT_EIG_TOL: f64 = 1e-12;

/// A matrix whose smallest eigenvalue falls below this fraction of its largest
/// eigenvalue is treated as singular.
pub const RELATIVE_SINGULAR_FLOOR: f64 = 1e-10;

/// Tolerance on `1 + s * u'M^-1u` below which a rank-one update is rejected.
pub const DEGENERATE_UPDATE_TOL: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 100;

/// Dense symmetric matrix. Every constructor and mutator keeps
/// `m[i][j] == m[j][i]` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: Array2<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        Self {
            data: Array2::zeros((dim, dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        Self { data: Array2::eye(dim) }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "SymMatrix dimension must be at least 1");
        Self {
            data: Array2::from_diag(&Array1::from(diag.to_vec())),
        }
    }

    /// Accepts a square array only if it is exactly symmetric.
    pub fn try_from_array(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c || r == 0 {
            return Err(shape_err(format!("expected a non-empty square matrix, got {r}x{c}")));
        }
        for i in 0..r {
            for j in 0..i {
                if data[[i, j]].to_bits() != data[[j, i]].to_bits() {
                    return Err(shape_err(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { data })
    }

    /// Builds a symmetric matrix from the lower triangle of `data`, ignoring the
    /// strict upper triangle.
    pub fn from_lower(mut data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c || r == 0 {
            return Err(shape_err(format!("expected a non-empty square matrix, got {r}x{c}")));
        }
        mirror_lower(&mut data);
        Ok(Self { data })
    }

    /// `A'A` for an `n x d` matrix `A`.
    pub fn gram(a: ArrayView2<f64>) -> Self {
        assert!(a.ncols() >= 1, "gram of a matrix with no columns");
        let mut data = a.t().dot(&a);
        mirror_lower(&mut data);
        Self { data }
    }

    /// `sum_i w_i a_i a_i'` over the rows `a_i` of `A`.
    pub fn weighted_gram(a: ArrayView2<f64>, weights: ArrayView1<f64>) -> Result<Self> {
        if a.nrows() != weights.len() {
            return Err(shape_err(format!("{} rows but {} weights", a.nrows(), weights.len())));
        }
        let scaled = &a * &weights.insert_axis(Axis(1));
        let mut data = a.t().dot(&scaled);
        mirror_lower(&mut data);
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn trace(&self) -> f64 {
        self.data.diag().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// In-place `self += scale * v v'`.
    pub fn add_outer(&mut self, scale: f64, v: ArrayView1<f64>) {
        let d = self.dim();
        assert_eq!(v.len(), d, "outer product dimension mismatch");
        for i in 0..d {
            let si = scale * v[i];
            for j in 0..=i {
                let x = self.data[[i, j]] + si * v[j];
                self.data[[i, j]] = x;
                self.data[[j, i]] = x;
            }
        }
    }

    /// Returns `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..out.dim() {
            out.data[[i, i]] += shift;
        }
        out
    }

    /// Returns `scale * self`.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            data: &self.data * scale,
        }
    }

    pub fn mul_vec(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.dim() {
            return Err(shape_err(format!(
                "vector of length {} against a {}x{} matrix",
                v.len(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(self.data.dot(&v))
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn mirror_lower(data: &mut Array2<f64>) {
    let n = data.nrows();
    for i in 0..n {
        for j in 0..i {
            data[[j, i]] = data[[i, j]];
        }
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenExtremes {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl EigenExtremes {
    pub fn new(lambda_min: f64, lambda_max: f64) -> Self {
        debug_assert!(lambda_min <= lambda_max);
        Self { lambda_min, lambda_max }
    }

    /// Whether the whole spectrum lies in the closed interval `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.lambda_min >= lo && self.lambda_max <= hi
    }

    /// Whether the whole spectrum lies in the open interval `(lo, hi)`.
    pub fn strictly_within(&self, lo: f64, hi: f64) -> bool {
        self.lambda_min > lo && self.lambda_max < hi
    }

    /// Spectral norm of `M - center * I`.
    pub fn deviation_from(&self, center: f64) -> f64 {
        (self.lambda_min - center).abs().max((self.lambda_max - center).abs())
    }
}

/// Full eigendecomposition, eigenvalues ascending, eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl SymmetricEigen {
    pub fn extremes(&self) -> EigenExtremes {
        EigenExtremes::new(self.values[0], self.values[self.values.len() - 1])
    }

    /// Rebuilds `Q diag(f(lambda)) Q'`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let scaled_values = self.values.mapv(f);
        let scaled = &self.vectors * &scaled_values.insert_axis(Axis(0));
        let mut data = scaled.dot(&self.vectors.t());
        mirror_lower(&mut data);
        SymMatrix { data }
    }
}

fn check_finite(m: &SymMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical("matrix has non-finite entries".into()))
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Stops once the off-diagonal Frobenius norm is at most
/// `tol * (1 + max |a_ii|)`, which bounds every eigenvalue error by the same
/// quantity, or once a full sweep finds nothing left to rotate.
pub fn symmetric_eigen(m: &SymMatrix, tol: f64) -> Result<SymmetricEigen> {
    check_finite(m)?;
    if !(tol > 0.0) {
        return Err(domain_err(format!("eigen tolerance must be positive, got {tol}")));
    }
    let n = m.dim();
    let mut a = m.data.clone();
    let mut v = Array2::<f64>::eye(n);

    let threshold = |a: &Array2<f64>| {
        let diag_max = a.diag().iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        tol * (1.0 + diag_max)
    };
    let mut converged = n == 1;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        if converged || off_diagonal_norm(&a) <= threshold(&a) {
            converged = true;
            break;
        }
        if !jacobi_sweep(&mut a, &mut v) {
            converged = true;
            break;
        }
    }
    if !converged {
        let off_norm = off_diagonal_norm(&a);
        if off_norm > threshold(&a) {
            return Err(Error::Convergence {
                sweeps: MAX_JACOBI_SWEEPS,
                off_norm,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(SymmetricEigen { values, vectors })
}

/// One cyclic sweep of Jacobi rotations. Returns false when nothing was rotated.
fn jacobi_sweep(a: &mut Array2<f64>, v: &mut Array2<f64>) -> bool {
    let n = a.nrows();
    let mut rotated = false;
    for p in 0..n - 1 {
        for q in p + 1..n {
            let apq = a[[p, q]];
            let app = a[[p, p]];
            let aqq = a[[q, q]];
            if apq == 0.0 || apq.abs() <= 0.5 * f64::EPSILON * (app.abs() * aqq.abs()).sqrt() {
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                continue;
            }
            rotated = true;
            let theta = (aqq - app) / (2.0 * apq);
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                sign / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            a[[p, p]] = app - t * apq;
            a[[q, q]] = aqq + t * apq;
            a[[p, q]] = 0.0;
            a[[q, p]] = 0.0;
            for k in 0..n {
                if k != p && k != q {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[[k, p]] = new_kp;
                    a[[p, k]] = new_kp;
                    a[[k, q]] = new_kq;
                    a[[q, k]] = new_kq;
                }
                let vkp = v[[k, p]];
                let vkq = v[[k, q]];
                v[[k, p]] = c * vkp - s * vkq;
                v[[k, q]] = s * vkp + c * vkq;
            }
        }
    }
    rotated
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..i {
            s += 2.0 * a[[i, j]] * a[[i, j]];
        }
    }
    s.sqrt()
}

/// Smallest and largest eigenvalue, each accurate to `tol * (1 + |lambda|max)`.
pub fn eig_extremes(m: &SymMatrix, tol: f64) -> Result<EigenExtremes> {
    Ok(symmetric_eigen(m, tol)?.extremes())
}

/// Fails with `SingularMatrix` when `lambda_min(m)` is below `min_eig_floor` or
/// below `RELATIVE_SINGULAR_FLOOR * lambda_max(m)`.
fn check_floor(m: &SymMatrix, min_eig_floor: f64) -> Result<EigenExtremes> {
    if !(min_eig_floor >= 0.0) {
        return Err(domain_err(format!(
            "eigenvalue floor must be non-negative, got {min_eig_floor}"
        )));
    }
    let ext = eig_extremes(m, DEFAULT_EIG_TOL)?;
    let floor = min_eig_floor.max(RELATIVE_SINGULAR_FLOOR * ext.lambda_max.abs());
    if ext.lambda_min < floor || ext.lambda_min <= 0.0 {
        return Err(Error::SingularMatrix {
            lambda_min: ext.lambda_min,
            floor,
        });
    }
    Ok(ext)
}

/// Lower Cholesky factor of a positive definite matrix.
pub fn cholesky(m: &SymMatrix) -> Result<Array2<f64>> {
    check_finite(m)?;
    let n = m.dim();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut pivot = m.data[[j, j]];
        for k in 0..j {
            pivot -= l[[j, k]] * l[[j, k]];
        }
        if !(pivot > 0.0) {
            return Err(Error::SingularMatrix {
                lambda_min: pivot,
                floor: 0.0,
            });
        }
        let ljj = pivot.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let mut s = m.data[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix with non-zero diagonal.
pub(crate) fn lower_triangular_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for col in 0..n {
        inv[[col, col]] = 1.0 / l[[col, col]];
        for i in col + 1..n {
            let mut s = 0.0;
            for k in col..i {
                s -= l[[i, k]] * inv[[k, col]];
            }
            inv[[i, col]] = s / l[[i, i]];
        }
    }
    inv
}

fn forward_substitute(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

fn back_substitute_transposed(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// `m^-1` for a positive definite `m` whose smallest eigenvalue clears the floor.
pub fn inverse_psd(m: &SymMatrix, min_eig_floor: f64) -> Result<SymMatrix> {
    check_floor(m, min_eig_floor)?;
    let l = cholesky(m)?;
    let l_inv = lower_triangular_inverse(&l);
    let mut data = l_inv.t().dot(&l_inv);
    mirror_lower(&mut data);
    Ok(SymMatrix { data })
}

/// `(M + scale * u u')^-1` from `m_inv = M^-1`.
pub fn sherman_morrison_update(m_inv: &SymMatrix, u: ArrayView1<f64>, scale: f64) -> Result<SymMatrix> {
    let w = m_inv.mul_vec(u)?;
    let denominator = 1.0 + scale * u.dot(&w);
    if !denominator.is_finite() || denominator.abs() <= DEGENERATE_UPDATE_TOL {
        return Err(Error::DegenerateUpdate { denominator });
    }
    let mut out = m_inv.clone();
    out.add_outer(-scale / denominator, w.view());
    Ok(out)
}

/// `tr(m^-1)`, computed as the squared Frobenius norm of the inverse Cholesky factor.
pub fn trace_of_inverse(m: &SymMatrix, min_eig_floor: f64) -> Result<f64> {
    check_floor(m, min_eig_floor)?;
    let l = cholesky(m)?;
    let l_inv = lower_triangular_inverse(&l);
    Ok(l_inv.iter().map(|x| x * x).sum())
}

/// `v' m_inv v`.
pub fn quad_form(m_inv: &SymMatrix, v: ArrayView1<f64>) -> Result<f64> {
    Ok(v.dot(&m_inv.mul_vec(v)?))
}

/// Solves `m x = b` for positive definite `m`.
pub fn solve_psd(m: &SymMatrix, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    if b.len() != m.dim() {
        return Err(shape_err(format!(
            "right-hand side of length {} against a {}x{} matrix",
            b.len(),
            m.dim(),
            m.dim()
        )));
    }
    check_floor(m, 0.0)?;
    let l = cholesky(m)?;
    let y = forward_substitute(&l, b);
    Ok(back_substitute_transposed(&l, y.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn identity_extremes() {
        let e = eig_extremes(&SymMatrix::identity(3), 1e-12).unwrap();
        assert_eq!((e.lambda_min, e.lambda_max), (1.0, 1.0));
    }

    #[test]
    fn diagonal_extremes() {
        let e = eig_extremes(&SymMatrix::from_diag(&[0.9, 1.1]), 1e-12).unwrap();
        assert_eq!((e.lambda_min, e.lambda_max), (0.9, 1.1));
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = SymMatrix::try_from_array(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = eig_extremes(&m, 1e-14).unwrap();
        assert_abs_diff_eq!(e.lambda_min, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.lambda_max, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn non_finite_is_rejected() {
        let m = SymMatrix::from_diag(&[1.0, f64::NAN]);
        assert!(matches!(eig_extremes(&m, 1e-12), Err(Error::Numerical(_))));
        let m = SymMatrix::from_diag(&[1.0, f64::INFINITY]);
        assert!(matches!(inverse_psd(&m, 1e-12), Err(Error::Numerical(_))));
    }

    #[test]
    fn asymmetric_array_is_rejected() {
        assert!(SymMatrix::try_from_array(array![[1.0, 2.0], [2.5, 1.0]]).is_err());
        assert!(SymMatrix::try_from_array(Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn inverse_of_identity_and_diagonal() {
        let inv = inverse_psd(&SymMatrix::identity(4), 1e-12).unwrap();
        assert_eq!(inv, SymMatrix::identity(4));
        let inv = inverse_psd(&SymMatrix::from_diag(&[2.0, 4.0]), 1e-12).unwrap();
        assert!(inv.max_abs_diff(&SymMatrix::from_diag(&[0.5, 0.25])) <= 1e-15);
    }

    #[test]
    fn inverse_below_floor_is_singular() {
        let m = SymMatrix::from_diag(&[1.0, 1e-3]);
        assert!(matches!(inverse_psd(&m, 1e-2), Err(Error::SingularMatrix { .. })));
        // Relative floor: 1e-12 / 1 is below 1e-10.
        let m = SymMatrix::from_diag(&[1.0, 1e-12]);
        assert!(matches!(inverse_psd(&m, 1e-300), Err(Error::SingularMatrix { .. })));
        let m = SymMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(trace_of_inverse(&m, 1e-12), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn sherman_morrison_closed_form() {
        let e1 = array![1.0, 0.0];
        let out = sherman_morrison_update(&SymMatrix::identity(2), e1.view(), 1.0).unwrap();
        assert_eq!(out, SymMatrix::from_diag(&[0.5, 1.0]));
    }

    #[test]
    fn sherman_morrison_zero_scale_is_identity_map() {
        let m = SymMatrix::try_from_array(array![[2.0, 0.3], [0.3, 1.0]]).unwrap();
        let out = sherman_morrison_update(&m, array![0.7, -1.2].view(), 0.0).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn sherman_morrison_degenerate() {
        // (I - e1 e1') is singular: denominator 1 - 1 = 0.
        let err = sherman_morrison_update(&SymMatrix::identity(2), array![1.0, 0.0].view(), -1.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateUpdate { .. }));
    }

    #[test]
    fn trace_of_inverse_simple() {
        assert_abs_diff_eq!(
            trace_of_inverse(&SymMatrix::identity(5), 1e-12).unwrap(),
            5.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            trace_of_inverse(&SymMatrix::from_diag(&[2.0, 4.0]), 1e-12).unwrap(),
            0.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn quad_form_simple() {
        let i2 = SymMatrix::identity(2);
        assert_eq!(quad_form(&i2, array![3.0, 4.0].view()).unwrap(), 25.0);
        assert_eq!(quad_form(&i2, array![0.0, 0.0].view()).unwrap(), 0.0);
        assert!(matches!(
            quad_form(&i2, array![1.0, 2.0, 3.0].view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn solve_simple() {
        let b = array![1.5, -2.0, 7.0];
        assert_eq!(solve_psd(&SymMatrix::identity(3), b.view()).unwrap(), b);
        let x = solve_psd(&SymMatrix::from_diag(&[2.0]), array![6.0].view()).unwrap();
        assert!((x[0] - 3.0).abs() <= 1e-15);
        assert!(solve_psd(&SymMatrix::identity(2), b.view()).is_err());
    }

    #[test]
    fn map_spectrum_rebuilds_matrix() {
        let m = SymMatrix::try_from_array(array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]).unwrap();
        let eig = symmetric_eigen(&m, 1e-14).unwrap();
        let back = eig.map_spectrum(|x| x);
        assert!(back.max_abs_diff(&m) < 1e-13);
        let inv = eig.map_spectrum(|x| 1.0 / x);
        let direct = inverse_psd(&m, 1e-12).unwrap();
        assert!(inv.max_abs_diff(&direct) < 1e-13);
    }

    #[test]
    fn add_outer_keeps_exact_symmetry() {
        let mut m = SymMatrix::zeros(3);
        m.add_outer(0.37, array![0.1, -2.3, 1.7].view());
        m.add_outer(1.9, array![1.3, 0.2, -0.4].view());
        assert!(SymMatrix::try_from_array(m.into_array()).is_ok());
    }
}

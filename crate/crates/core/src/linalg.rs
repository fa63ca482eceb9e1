//! Dense complex linear algebra helpers.
//!
//! Matrices are `nalgebra` dense matrices throughout the crate; the
//! decompositions are delegated to `faer`, which is considerably faster for the
//! matrix sizes used here (up to 1024 columns).

use faer::{Mat, MatRef, Side};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative threshold below which singular values are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub(crate) fn to_faer(a: &CMat) -> Mat<Complex64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub(crate) fn from_faer(m: MatRef<'_, Complex64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin singular value decomposition `A = U diag(s) V^H`.
///
/// Singular values are sorted in non-increasing order. Each singular pair is
/// rotated so that the first largest-modulus entry of the right singular
/// vector is real and positive, which makes the output reproducible.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

impl Svd {
    pub fn rank(&self) -> usize {
        numerical_rank(&self.s)
    }
}

pub fn svd(a: &CMat) -> Result<Svd> {
    if a.is_empty() {
        let k = 0;
        return Ok(Svd {
            u: CMat::zeros(a.nrows(), k),
            s: Vec::new(),
            v: CMat::zeros(a.ncols(), k),
        });
    }
    let dec = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::Linalg(format!("svd did not converge: {e:?}")))?;
    let mut u = from_faer(dec.U());
    let mut v = from_faer(dec.V());
    let s = dec.S().column_vector().iter().map(|x| x.re).collect();
    normalize_pairs(&mut u, &mut v);
    Ok(Svd { u, s, v })
}

/// Full SVD returning the singular values and the complete `n × n` right
/// singular basis (needed for null-space bases).
pub fn svd_full_right(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok((Vec::new(), CMat::identity(n, n)));
    }
    let dec = to_faer(a)
        .svd()
        .map_err(|e| Error::Linalg(format!("svd did not converge: {e:?}")))?;
    let s: Vec<f64> = dec.S().column_vector().iter().map(|x| x.re).collect();
    let mut v = from_faer(dec.V());
    for j in 0..v.ncols() {
        let phase = leading_phase(v.column(j).iter()).conj();
        v.column_mut(j).scale_mut_complex(phase);
    }
    Ok((s, v))
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, c: Complex64);
}

impl<S> ScaleComplex for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_complex(&mut self, c: Complex64) {
        for x in self.iter_mut() {
            *x *= c;
        }
    }
}

/// Unit phase of the first entry with the largest modulus.
fn leading_phase<'a>(col: impl Iterator<Item = &'a Complex64>) -> Complex64 {
    let mut best = Complex64::new(0.0, 0.0);
    let mut best_abs = -1.0;
    for &x in col {
        let m = x.norm();
        if m > best_abs {
            best_abs = m;
            best = x;
        }
    }
    if best_abs > 0.0 {
        best / best_abs
    } else {
        Complex64::new(1.0, 0.0)
    }
}

fn normalize_pairs(u: &mut CMat, v: &mut CMat) {
    for j in 0..v.ncols() {
        let phase = leading_phase(v.column(j).iter()).conj();
        v.column_mut(j).scale_mut_complex(phase);
        u.column_mut(j).scale_mut_complex(phase);
    }
}

/// Number of singular values above `RANK_TOLERANCE` times the largest one.
pub fn numerical_rank(s: &[f64]) -> usize {
    let max = s.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_TOLERANCE * max).count()
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    to_faer(a)
        .singular_values()
        .map_err(|e| Error::Linalg(format!("svd did not converge: {e:?}")))
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues in non-increasing
/// order. Eigenvectors get the same phase normalization as [`svd`].
pub fn hermitian_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    let dec = to_faer(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("eigendecomposition failed: {e:?}")))?;
    let vals: Vec<f64> = dec.S().column_vector().iter().map(|x| x.re).collect();
    let vecs = dec.U();
    let mut out = CMat::zeros(n, n);
    let mut sorted = Vec::with_capacity(n);
    for (dst, src) in (0..n).rev().enumerate() {
        sorted.push(vals[src]);
        for i in 0..n {
            out[(i, dst)] = vecs[(i, src)];
        }
    }
    for j in 0..n {
        let phase = leading_phase(out.column(j).iter()).conj();
        out.column_mut(j).scale_mut_complex(phase);
    }
    Ok((sorted, out))
}

/// `log2 det(A)` for a Hermitian positive-definite matrix.
pub fn log2_det_hpd(a: &CMat) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    if let Some(ch) = a.clone().cholesky() {
        let l = ch.l_dirty();
        return Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.log2()).sum());
    }
    let (vals, _) = hermitian_eigen(a)?;
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::Linalg("matrix is not positive definite".into()));
    }
    Ok(vals.iter().map(|v| v.log2()).sum())
}

/// Moore-Penrose pseudo-inverse of a Hermitian matrix.
pub fn pinv_hermitian(a: &CMat) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(a)?;
    let max = vals.iter().cloned().map(f64::abs).fold(0.0, f64::max);
    let n = a.nrows();
    let mut out = CMat::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() > RANK_TOLERANCE * max && max > 0.0 {
            let col = vecs.column(k);
            out += (col * col.adjoint()).scale(1.0 / lam);
        }
    }
    Ok(out)
}

/// Orthonormal basis (as columns) of the row space of `a`.
pub fn row_space_basis(a: &CMat) -> Result<CMat> {
    let dec = svd(a)?;
    let r = dec.rank();
    Ok(dec.v.columns(0, r).into_owned())
}

/// Orthonormal basis (as columns) of the right null space of `a`.
pub fn null_space_basis(a: &CMat) -> Result<CMat> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok(CMat::identity(n, n));
    }
    let (s, v) = svd_full_right(a)?;
    let r = numerical_rank(&s);
    Ok(v.columns(r, n - r).into_owned())
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Squared Frobenius norm.
pub fn fro2(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}
